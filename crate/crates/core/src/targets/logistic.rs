use super::{normal_log_norm, DesignMatrix, TargetModel};
use crate::error::{Error, Result};
use crate::special::{sigmoid, softplus};

/// Bayesian logistic regression with an isotropic `N(0, prior_var I)` prior.
#[derive(Clone, Debug)]
pub struct LogisticRegression {
    data: DesignMatrix,
    prior_var: f64,
    name: String,
}

impl LogisticRegression {
    pub fn new(data: DesignMatrix, prior_var: f64) -> Result<Self> {
        if !(prior_var > 0.0 && prior_var.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "prior variance must be positive, got {prior_var}"
            )));
        }
        Ok(LogisticRegression {
            data,
            prior_var,
            name: "logistic".into(),
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn data(&self) -> &DesignMatrix {
        &self.data
    }

    pub fn prior_var(&self) -> f64 {
        self.prior_var
    }

    fn eval(&self, beta: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let p = self.data.p();
        assert_eq!(beta.len(), p, "coefficient vector has wrong length");
        let x = &self.data.x;
        let mut ll = 0.0;
        let mut grad = vec![0.0; if want_grad { p } else { 0 }];
        for i in 0..self.data.n() {
            let row = x.row(i);
            let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            let y = self.data.y[i];
            ll += y * eta - softplus(eta);
            if want_grad {
                let resid = y - sigmoid(eta);
                for (g, xij) in grad.iter_mut().zip(row.iter()) {
                    *g += resid * xij;
                }
            }
        }
        let sq: f64 = beta.iter().map(|b| b * b).sum();
        let lp = -0.5 * sq / self.prior_var + p as f64 * normal_log_norm(self.prior_var);
        for (g, b) in grad.iter_mut().zip(beta) {
            *g -= b / self.prior_var;
        }
        (ll + lp, grad)
    }
}

impl TargetModel for LogisticRegression {
    fn dim(&self) -> usize {
        self.data.p()
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
