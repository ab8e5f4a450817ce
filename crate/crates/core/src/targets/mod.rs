//! Posterior targets `g(θ) = p(θ) p(y | θ)`.

mod data;
mod gaussian_toy;
mod logistic;
mod mixed;
pub mod synthetic;

pub use data::{DesignMatrix, LoadOptions, Standardization};
pub use gaussian_toy::GaussianToy;
pub use logistic::LogisticRegression;
pub use mixed::{MixedLogistic, MixedPriors};

/// Unnormalized log posterior and its gradient.
pub trait TargetModel: Sync {
    fn dim(&self) -> usize;

    fn name(&self) -> &str;

    fn log_g(&self, theta: &[f64]) -> f64;

    fn grad_log_g(&self, theta: &[f64]) -> Vec<f64>;

    /// Both at once; targets override this when sharing work is cheaper.
    fn log_g_and_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        (self.log_g(theta), self.grad_log_g(theta))
    }

    /// `log ∫ g`, when known in closed form.
    fn log_evidence(&self) -> Option<f64> {
        None
    }
}

/// `−½ ln(2π v)`
pub(crate) fn normal_log_norm(var: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * var).ln()
}
