use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::TargetModel;
use crate::error::{Error, Result};
use crate::special::LN_SQRT_2PI;

/// `g(θ) = e^C · N(θ; μ₀, Σ₀)`, so `log ∫ g = C` exactly.
#[derive(Clone, Debug)]
pub struct GaussianToy {
    mu0: DVector<f64>,
    sigma0: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    precision: DMatrix<f64>,
    log_c: f64,
    norm: f64,
}

impl GaussianToy {
    pub fn new(mu0: Vec<f64>, sigma0: DMatrix<f64>, log_c: f64) -> Result<Self> {
        let m = mu0.len();
        if sigma0.shape() != (m, m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: sigma0.nrows(),
                context: "covariance",
            });
        }
        if (&sigma0 - sigma0.transpose()).amax() > 1e-12 * sigma0.amax() {
            return Err(Error::NotPositiveDefinite);
        }
        let chol = Cholesky::new(sigma0.clone()).ok_or(Error::NotPositiveDefinite)?;
        let logdet = 2.0
            * chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|v| v.ln())
                .sum::<f64>();
        let precision = chol.inverse();
        let norm = -(m as f64) * LN_SQRT_2PI - 0.5 * logdet;
        Ok(GaussianToy {
            mu0: DVector::from_vec(mu0),
            sigma0,
            chol,
            precision,
            log_c,
            norm,
        })
    }

    /// Bivariate target with unit variances and correlation `rho`.
    pub fn correlated_pair(rho: f64, log_c: f64) -> Result<Self> {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        Self::new(vec![0.0, 0.0], s, log_c)
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mu0
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.sigma0
    }

    /// Smallest KL from a fully factorized Gaussian to this target:
    /// `½ (Σᵢ ln (Σ₀⁻¹)ᵢᵢ + ln |Σ₀|)`.
    pub fn mean_field_gap(&self) -> f64 {
        let logdet = 2.0
            * self
                .chol
                .l_dirty()
                .diagonal()
                .iter()
                .map(|v| v.ln())
                .sum::<f64>();
        0.5 * (self
            .precision
            .diagonal()
            .iter()
            .map(|v| v.ln())
            .sum::<f64>()
            + logdet)
    }
}

impl TargetModel for GaussianToy {
    fn dim(&self) -> usize {
        self.mu0.len()
    }

    fn name(&self) -> &str {
        "gaussian-toy"
    }

    fn log_g(&self, theta: &[f64]) -> f64 {
        let r = DVector::from_column_slice(theta) - &self.mu0;
        let z = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&r)
            .expect("triangular solve");
        self.log_c + self.norm - 0.5 * z.norm_squared()
    }

    fn grad_log_g(&self, theta: &[f64]) -> Vec<f64> {
        let r = DVector::from_column_slice(theta) - &self.mu0;
        (-(&self.precision * r)).as_slice().to_vec()
    }

    fn log_evidence(&self) -> Option<f64> {
        Some(self.log_c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evidence_is_the_constant() {
        let t = GaussianToy::new(vec![0.0, 0.0], DMatrix::identity(2, 2) * 2.0, 3.7).unwrap();
        assert_eq!(t.log_evidence(), Some(3.7));
        assert!((t.log_g(&[0.0, 0.0]) - (3.7 - 2.0 * LN_SQRT_2PI - 2f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn mean_field_gap_for_correlated_pair() {
        let t = GaussianToy::correlated_pair(0.8, 0.0).unwrap();
        // −½ ln(1 − ρ²)
        assert!((t.mean_field_gap() + 0.5 * (1.0 - 0.64f64).ln()).abs() < 1e-14);
        assert!(
            GaussianToy::correlated_pair(0.0, 0.0)
                .unwrap()
                .mean_field_gap()
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn non_spd_rejected() {
        assert!(GaussianToy::correlated_pair(1.2, 0.0).is_err());
    }
}
