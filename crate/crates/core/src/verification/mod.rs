//! Independent oracles: finite differences, quadrature, Monte Carlo
//! moments and importance sampling.

pub mod checks;
mod fd;
mod importance;
pub mod instances;
mod moments;
mod quadrature;

pub use checks::{run_checks, CheckReport, VerificationReport};
pub use fd::{fd_gradient, rel_error, FdConfig, REL_FLOOR};
pub use importance::{importance_reference, ImportanceReference};
pub use moments::{expected_psi_moments, moment_check, MomentReport};
pub use quadrature::{
    family_normalization, find_mode, integrate_family, integrate_real_line,
    log_integrate_real_line, log_sum_exp, marginal_normalization, quad_posterior, LineRule,
    QuadPosterior,
};
