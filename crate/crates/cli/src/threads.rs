//! Worker-pool sizing.

use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::error::{CliError, Result};

pub const THREADS_ENV: &str = "CALAMP_THREADS";

/// `CALAMP_THREADS` when set to a positive integer, else the available
/// parallelism.
pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn pool(threads: usize) -> Result<ThreadPool> {
    ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .thread_name(|i| format!("calamp-worker-{i}"))
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))
}
