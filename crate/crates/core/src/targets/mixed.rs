use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{normal_log_norm, TargetModel};
use crate::error::{Error, Result};
use crate::special::{sigmoid, softplus};

/// Independent normal priors on the fixed effects and on `ζ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedPriors {
    pub beta_var: f64,
    pub zeta_mean: f64,
    pub zeta_var: f64,
}

impl Default for MixedPriors {
    fn default() -> Self {
        MixedPriors {
            beta_var: 10.0,
            zeta_mean: 0.0,
            zeta_var: 10.0,
        }
    }
}

/// Logistic regression with a subject-level random intercept
/// `b_j ~ N(0, exp(2ζ))`.
///
/// `θ = (β₁..β_p, ζ, b₁..b_J)`.
#[derive(Clone, Debug)]
pub struct MixedLogistic {
    x: DMatrix<f64>,
    y: Vec<f64>,
    subject: Vec<usize>,
    n_subjects: usize,
    priors: MixedPriors,
    name: String,
}

impl MixedLogistic {
    pub fn new(
        x: DMatrix<f64>,
        y: Vec<f64>,
        subject: Vec<usize>,
        n_subjects: usize,
        priors: MixedPriors,
    ) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n || subject.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: if y.len() != n { y.len() } else { subject.len() },
                context: "observations",
            });
        }
        if let Some(&index) = subject.iter().find(|&&s| s >= n_subjects) {
            return Err(Error::UnknownSubject { index, n_subjects });
        }
        if let Some(row) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Data {
                row,
                message: format!("response {} is not 0 or 1", y[row]),
            });
        }
        if !(priors.beta_var > 0.0 && priors.zeta_var > 0.0) {
            return Err(Error::InvalidParameter(
                "prior variances must be positive".into(),
            ));
        }
        Ok(MixedLogistic {
            x,
            y,
            subject,
            n_subjects,
            priors,
            name: "mixed-logistic".into(),
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn n_fixed(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn priors(&self) -> MixedPriors {
        self.priors
    }

    fn eval(&self, theta: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let p = self.n_fixed();
        assert_eq!(theta.len(), self.dim(), "parameter vector has wrong length");
        let beta = &theta[..p];
        let zeta = theta[p];
        let b = &theta[p + 1..];
        let mut grad = vec![0.0; if want_grad { theta.len() } else { 0 }];

        let mut ll = 0.0;
        for i in 0..self.x.nrows() {
            let row = self.x.row(i);
            let s = self.subject[i];
            let eta: f64 = row.iter().zip(beta).map(|(a, c)| a * c).sum::<f64>() + b[s];
            let y = self.y[i];
            ll += y * eta - softplus(eta);
            if want_grad {
                let resid = y - sigmoid(eta);
                for (g, xij) in grad[..p].iter_mut().zip(row.iter()) {
                    *g += resid * xij;
                }
                grad[p + 1 + s] += resid;
            }
        }

        let inv_var = (-2.0 * zeta).exp();
        let mut re = 0.0;
        let mut sum_sq = 0.0;
        for (j, bj) in b.iter().enumerate() {
            sum_sq += bj * bj;
            if want_grad {
                grad[p + 1 + j] -= bj * inv_var;
            }
        }
        let j = self.n_subjects as f64;
        re += -j * zeta + j * normal_log_norm(1.0) - 0.5 * sum_sq * inv_var;

        let pr = &self.priors;
        let beta_sq: f64 = beta.iter().map(|v| v * v).sum();
        let lp = p as f64 * normal_log_norm(pr.beta_var) - 0.5 * beta_sq / pr.beta_var
            + normal_log_norm(pr.zeta_var)
            - 0.5 * (zeta - pr.zeta_mean).powi(2) / pr.zeta_var;
        if want_grad {
            for (g, bv) in grad[..p].iter_mut().zip(beta) {
                *g -= bv / pr.beta_var;
            }
            grad[p] += sum_sq * inv_var - j - (zeta - pr.zeta_mean) / pr.zeta_var;
        }
        (ll + re + lp, grad)
    }
}

impl TargetModel for MixedLogistic {
    fn dim(&self) -> usize {
        self.n_fixed() + 1 + self.n_subjects
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn log_g(&self, theta: &[f64]) -> f64 {
        self.eval(theta, false).0
    }

    fn grad_log_g(&self, theta: &[f64]) -> Vec<f64> {
        self.eval(theta, true).1
    }

    fn log_g_and_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        self.eval(theta, true)
    }
}
