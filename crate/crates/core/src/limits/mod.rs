//! Limit parameters, Gaussian limits and the verification experiments.

pub mod checks;
pub mod form;
pub mod gaussian;
pub mod operators;

pub use checks::{
    charfn_stream, clt_check, clt_check_with, fourier_range_check, fourier_range_check_with, haar_options, llt_check,
    llt_check_with, multiscale_check, multiscale_check_with, multiscale_compare, FrequencySpec, MultiscaleSpec,
    MultiscaleSummary,
};
pub use form::{compute_delta, drift, limit_parameters, limit_parameters_with, symmetrize_delta, Drift, LimitParameters, QuadraticForm, Symmetrized};
pub use gaussian::{gaussian_from_delta, sphere_area, unit_bump_integral, Bump, GaussianLaw};
pub use operators::{consistency_check, gap_check, log_spaced, taylor_check};
