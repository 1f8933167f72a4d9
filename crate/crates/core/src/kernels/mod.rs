//! Numerical building blocks: Gaussian densities, quadrature, special
//! functions and Gaussian-moment convolutions.

pub mod gamma;
pub mod gauss;
pub mod moments;
pub mod quadrature;
pub mod weighted;

pub use gamma::{lower_incomplete_gamma, regularized_lower_gamma, regularized_upper_gamma};
pub use gauss::{floor_variance, gauss_pdf, ln_gauss_pdf, std_normal_cdf, VARIANCE_FLOOR};
pub use moments::{check_f_derivative, f_moments, GaussMoments, Weight};
pub use quadrature::{integrate, integrate_adaptive, QuadResult};
pub use weighted::{i_weighted_gaussian, power_weight_moments, weighted_gaussian_integral, LogSigned, PowerMoments};
