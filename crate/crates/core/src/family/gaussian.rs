use nalgebra::DVector;

use super::{Core, Draw, FamilySpec, VariationalFamily};
use crate::error::{Error, Result};
use crate::special::log_phi;

/// Gaussian copula: `ψ ~ N(μ, BBᵀ + D²)`, `θᵢ = t⁻¹(ψᵢ)`.
///
/// With identity margins this is the plain factor Gaussian, and with `k = 0`
/// it is the mean-field Gaussian.
#[derive(Clone, Debug)]
pub struct GaussianCopula {
    pub(crate) core: Core,
}

impl GaussianCopula {
    pub fn from_lambda(spec: FamilySpec, lambda: &[f64]) -> Result<Self> {
        if spec.skew {
            return Err(Error::Spec(
                "skew family passed to the Gaussian copula".into(),
            ));
        }
        Ok(GaussianCopula {
            core: Core::from_lambda(spec, lambda)?,
        })
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.core.mu
    }

    pub fn scale(&self) -> &crate::factor_scale::FactorScale {
        &self.core.scale
    }

    pub fn transforms(&self) -> &[crate::transforms::TransformParams] {
        &self.core.tparams
    }

    /// `ψ = μ + Bz + d ∘ ε` for `eps = (z, ε)`.
    pub fn draw_psi(&self, eps: &[f64]) -> DVector<f64> {
        let k = self.core.spec.k;
        &self.core.mu + self.core.scale.sample_xi(&eps[..k], &eps[k..])
    }

    fn score_from(&self, draw: &Draw) -> Vec<f64> {
        let core = &self.core;
        let layout = &core.layout;
        let (m, k) = (core.spec.m, core.spec.k);
        let r = core.centered(draw);
        let rt = core.scale.solve(&r);
        let mut out = vec![0.0; layout.len()];

        out[layout.mu.clone()].copy_from_slice(rt.as_slice());

        // −Σ⁻¹B + r̃ (r̃ᵀB), lower trapezoid only
        let sib = core.scale.inv_times_b();
        let rtb = core.scale.b().tr_mul(&rt);
        let b_block = &mut out[layout.b.clone()];
        let mut idx = 0;
        for j in 0..k {
            for i in j..m {
                b_block[idx] = -sib[(i, j)] + rt[i] * rtb[j];
                idx += 1;
            }
        }

        let inv_diag = core.scale.inv_diag();
        let d = core.scale.d();
        for i in 0..m {
            out[layout.d.start + i] = (-inv_diag[i] + rt[i] * rt[i]) * d[i];
        }

        core.gamma_score(draw, &(-rt), &mut out);
        out
    }
}

impl VariationalFamily for GaussianCopula {
    fn spec(&self) -> &FamilySpec {
        &self.core.spec
    }

    fn draw(&self, eps: &[f64]) -> Result<Draw> {
        self.core.check_eps(eps)?;
        Ok(self.core.finish_draw(self.draw_psi(eps)))
    }

    fn log_density(&self, theta: &[f64]) -> Result<f64> {
        let draw = self.core.draw_at_theta(theta)?;
        Ok(self.log_density_at(&draw))
    }

    fn log_density_at(&self, draw: &Draw) -> f64 {
        let r = self.core.centered(draw);
        let rt = self.core.scale.solve(&r);
        self.core.gaussian_logpdf(&r, &rt) + self.core.log_jacobian(draw)
    }

    fn grad_theta(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let draw = self.core.draw_at_theta(theta)?;
        Ok(self.grad_theta_at(&draw))
    }

    fn grad_theta_at(&self, draw: &Draw) -> Vec<f64> {
        let r = self.core.centered(draw);
        let g_psi = -self.core.scale.solve(&r);
        self.core.chain_theta(draw, &g_psi)
    }

    fn vjp(&self, eps: &[f64], draw: &Draw, w: &[f64]) -> Vec<f64> {
        let core = &self.core;
        let layout = &core.layout;
        let (m, k) = (core.spec.m, core.spec.k);
        let (z, e) = eps.split_at(k);
        let a: Vec<f64> = draw
            .bundles
            .iter()
            .zip(w)
            .map(|(b, w)| b.dtheta_dpsi * w)
            .collect();
        let mut out = vec![0.0; layout.len()];
        out[layout.mu.clone()].copy_from_slice(&a);
        let b_block = &mut out[layout.b.clone()];
        let mut idx = 0;
        for (j, zj) in z.iter().enumerate() {
            for ai in &a[j..m] {
                b_block[idx] = ai * zj;
                idx += 1;
            }
        }
        for i in 0..m {
            out[layout.d.start + i] = a[i] * e[i];
        }
        core.gamma_vjp(draw, w, &mut out);
        out
    }

    fn score(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let draw = self.core.draw_at_theta(theta)?;
        Ok(self.score_from(&draw))
    }

    fn score_at(&self, draw: &Draw) -> Result<Vec<f64>> {
        Ok(self.score_from(draw))
    }

    fn marginal_log_density(&self, i: usize, theta_i: f64) -> Result<f64> {
        let m = self.core.spec.m;
        if i >= m {
            return Err(Error::DimensionMismatch {
                expected: m,
                actual: i,
                context: "margin index",
            });
        }
        let t = &self.core.tparams[i];
        let psi = t.forward(theta_i)?;
        let b = t.derivatives(psi);
        let sd = self.core.scale.diag()[i].sqrt();
        let z = (psi - self.core.mu[i]) / sd;
        Ok(log_phi(z) - sd.ln() + b.tprime.ln())
    }

    fn to_lambda(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.core.layout.len()];
        self.core.write_lambda(&mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::LN_SQRT_2PI;
    use crate::transforms::TransformKind;

    fn standard(m: usize) -> GaussianCopula {
        let spec = FamilySpec::new(m, 0, TransformKind::Identity, false).unwrap();
        let mut lambda = vec![0.0; spec.param_count()];
        lambda[spec.layout().d].fill(1.0);
        GaussianCopula::from_lambda(spec, &lambda).unwrap()
    }

    #[test]
    fn standard_normal_at_origin() {
        let g = standard(1);
        assert!((g.log_density(&[0.0]).unwrap() + LN_SQRT_2PI).abs() < 1e-15);
        assert_eq!(g.grad_theta(&[2.0]).unwrap(), vec![-2.0]);
    }

    #[test]
    fn zero_noise_draws_the_mean() {
        let spec = FamilySpec::new(3, 1, TransformKind::Identity, false).unwrap();
        let mut lambda = vec![0.3; spec.param_count()];
        lambda[0] = -1.0;
        let g = GaussianCopula::from_lambda(spec, &lambda).unwrap();
        let d = g.draw(&[0.0; 4]).unwrap();
        assert_eq!(d.theta, vec![-1.0, 0.3, 0.3]);
    }

    #[test]
    fn mean_block_of_identity_mean_field_vjp_is_w() {
        let g = standard(3);
        let eps = [0.4, -1.0, 2.0];
        let draw = g.draw(&eps).unwrap();
        let w = [1.5, -0.25, 3.0];
        let out = g.vjp(&eps, &draw, &w);
        assert_eq!(&out[..3], &w);
    }

    #[test]
    fn wrong_noise_length_is_rejected() {
        assert!(standard(2).draw(&[0.0]).is_err());
    }
}
