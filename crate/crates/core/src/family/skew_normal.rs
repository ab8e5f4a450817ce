use nalgebra::DVector;

use super::{Core, Draw, FamilySpec, VariationalFamily};
use crate::error::{Error, Result};
use crate::special::{inv_mills, log_ndtr, log_phi};

/// Skew-normal copula: `ψ ~ SN(μ, Σ, α)` with `Σ = BBᵀ + D²` and density
/// `2 φ_m(ψ; μ, Σ) Φ(αᵀ S^{-1/2} (ψ − μ))`, `S = diag Σ`.
///
/// Internally everything is expressed through `β = S^{-1/2} α`. With
/// `v = Σβ` and `q = βᵀΣβ`, the skew direction is `δ̃ = v / √(1 + q)` and
/// `δ̃ᵀ Σ⁻¹ δ̃ = q / (1 + q)`, so no solve with `Σ` is needed to draw.
#[derive(Clone, Debug)]
pub struct SkewNormalCopula {
    pub(crate) core: Core,
    alpha: DVector<f64>,
    sigma: DVector<f64>,
    beta: DVector<f64>,
    /// `Bᵀβ`
    u: DVector<f64>,
    /// `Σβ`
    v: DVector<f64>,
    q: f64,
    /// `(1 + q)^{-1/2}`
    c: f64,
}

/// Quantities derived from `(B, d, α)` that define the skew direction.
#[derive(Clone, Debug, PartialEq)]
pub struct SkewDerived {
    pub s_diag: Vec<f64>,
    pub delta: Vec<f64>,
    pub delta_tilde: Vec<f64>,
    /// `δ̃ᵀ Σ⁻¹ δ̃`, in `[0, 1)`.
    pub kappa: f64,
    /// `√(1 − κ)`
    pub sqrt_term: f64,
}

impl SkewNormalCopula {
    pub fn from_lambda(spec: FamilySpec, lambda: &[f64]) -> Result<Self> {
        if !spec.skew {
            return Err(Error::Spec(
                "non-skew family passed to the skew-normal copula".into(),
            ));
        }
        let core = Core::from_lambda(spec, lambda)?;
        let alpha = DVector::from_column_slice(&lambda[core.layout.alpha.clone()]);
        let d = core.scale.d();
        let b = core.scale.b();
        let sigma = core.scale.diag().map(f64::sqrt);
        let beta = alpha.component_div(&sigma);
        let u = b.tr_mul(&beta);
        let mut v = b * &u;
        for i in 0..spec.m {
            v[i] += d[i] * d[i] * beta[i];
        }
        let q = beta.dot(&v);
        let c = 1.0 / (1.0 + q).sqrt();
        if !(c > 0.0 && c.is_finite() && q.is_finite()) {
            return Err(Error::DegenerateSkew(q / (1.0 + q)));
        }
        Ok(SkewNormalCopula {
            core,
            alpha,
            sigma,
            beta,
            u,
            v,
            q,
            c,
        })
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.core.mu
    }

    pub fn scale(&self) -> &crate::factor_scale::FactorScale {
        &self.core.scale
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn transforms(&self) -> &[crate::transforms::TransformParams] {
        &self.core.tparams
    }

    pub fn derived(&self) -> SkewDerived {
        let delta_tilde = &self.v * self.c;
        let delta = delta_tilde.component_div(&self.sigma);
        let kappa = self.q / (1.0 + self.q);
        SkewDerived {
            s_diag: self.sigma.map(|s| s * s).as_slice().to_vec(),
            delta: delta.as_slice().to_vec(),
            delta_tilde: delta_tilde.as_slice().to_vec(),
            kappa,
            sqrt_term: self.c,
        }
    }

    /// `ψ` for `eps = (r, ε₀, z, ε)`:
    /// `ψ = μ + δ̃|r| + (I − δ̃δ̃ᵀΣ⁻¹)ξ + √(1−κ) δ̃ ε₀` with `ξ = Bz + d ∘ ε`.
    pub fn draw_psi(&self, eps: &[f64]) -> DVector<f64> {
        let (xi, s) = self.draw_parts(eps);
        let mut psi = &self.core.mu + xi;
        psi.axpy(s, &self.v, 1.0);
        psi
    }

    /// Returns `ξ` and the scalar coefficient of `v` in the draw.
    fn draw_parts(&self, eps: &[f64]) -> (DVector<f64>, f64) {
        let k = self.core.spec.k;
        let (r, e0) = (eps[0], eps[1]);
        let xi = self.core.scale.sample_xi(&eps[2..2 + k], &eps[2 + k..]);
        let p = self.beta.dot(&xi);
        let c = self.c;
        (xi, c * r.abs() + c * c * (e0 - p))
    }

    fn linear_term(&self, r: &DVector<f64>) -> f64 {
        self.beta.dot(r)
    }
}

impl VariationalFamily for SkewNormalCopula {
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
        std::f64::consts::LN_2
            + self.core.gaussian_logpdf(&r, &rt)
            + log_ndtr(self.linear_term(&r))
            + self.core.log_jacobian(draw)
    }

    fn grad_theta(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let draw = self.core.draw_at_theta(theta)?;
        Ok(self.grad_theta_at(&draw))
    }

    fn grad_theta_at(&self, draw: &Draw) -> Vec<f64> {
        let r = self.core.centered(draw);
        let mut g_psi = -self.core.scale.solve(&r);
        g_psi.axpy(inv_mills(self.linear_term(&r)), &self.beta, 1.0);
        self.core.chain_theta(draw, &g_psi)
    }

    fn vjp(&self, eps: &[f64], draw: &Draw, w: &[f64]) -> Vec<f64> {
        // Reverse pass through
        //   s2 = rowsum(B∘B) + d², σ = √s2, β = α/σ, u = Bᵀβ, v = Bu + d²∘β,
        //   q = βᵀv, c = (1+q)^{-1/2}, ξ = Bz + d∘ε, p = βᵀξ,
        //   s = c|r| + c²(ε₀ − p), ψ = μ + ξ + s v.
        let core = &self.core;
        let layout = &core.layout;
        let (m, k) = (core.spec.m, core.spec.k);
        let b = core.scale.b();
        let d = core.scale.d();
        let (r, e0) = (eps[0], eps[1]);
        let z = &eps[2..2 + k];
        let e = &eps[2 + k..];
        let (xi, s) = self.draw_parts(eps);
        let c = self.c;
        let p = self.beta.dot(&xi);

        let a = DVector::from_iterator(
            m,
            draw.bundles.iter().zip(w).map(|(b, w)| b.dtheta_dpsi * w),
        );
        let mut xi_bar = a.clone();
        let big_a = a.dot(&self.v);
        let mut v_bar = &a * s;
        let c_bar = big_a * (r.abs() + 2.0 * c * (e0 - p));
        let p_bar = -big_a * c * c;
        let mut beta_bar = &xi * p_bar;
        xi_bar.axpy(p_bar, &self.beta, 1.0);
        let q_bar = -0.5 * c * c * c * c_bar;
        beta_bar.axpy(q_bar, &self.v, 1.0);
        v_bar.axpy(q_bar, &self.beta, 1.0);

        let mut b_bar = &v_bar * self.u.transpose();
        let u_bar = b.tr_mul(&v_bar);
        let mut d_bar = DVector::zeros(m);
        for i in 0..m {
            d_bar[i] += 2.0 * d[i] * self.beta[i] * v_bar[i];
            beta_bar[i] += d[i] * d[i] * v_bar[i];
        }
        b_bar += &self.beta * u_bar.transpose();
        beta_bar += b * &u_bar;
        if k > 0 {
            b_bar += &xi_bar * DVector::from_column_slice(z).transpose();
        }
        for i in 0..m {
            d_bar[i] += xi_bar[i] * e[i];
        }

        let alpha_bar = beta_bar.component_div(&self.sigma);
        for i in 0..m {
            let sig = self.sigma[i];
            let sigma_bar = -beta_bar[i] * self.alpha[i] / (sig * sig);
            let s2_bar = sigma_bar / (2.0 * sig);
            for j in 0..k {
                b_bar[(i, j)] += 2.0 * b[(i, j)] * s2_bar;
            }
            d_bar[i] += 2.0 * d[i] * s2_bar;
        }

        let mut out = vec![0.0; layout.len()];
        out[layout.mu.clone()].copy_from_slice(a.as_slice());
        let b_block = &mut out[layout.b.clone()];
        let mut idx = 0;
        for j in 0..k {
            for i in j..m {
                b_block[idx] = b_bar[(i, j)];
                idx += 1;
            }
        }
        out[layout.d.clone()].copy_from_slice(d_bar.as_slice());
        out[layout.alpha.clone()].copy_from_slice(alpha_bar.as_slice());
        core.gamma_vjp(draw, w, &mut out);
        out
    }

    fn score(&self, _theta: &[f64]) -> Result<Vec<f64>> {
        Err(Error::UnsupportedEstimator(
            "score gradient of the skew-normal copula",
        ))
    }

    fn score_at(&self, _draw: &Draw) -> Result<Vec<f64>> {
        Err(Error::UnsupportedEstimator(
            "score gradient of the skew-normal copula",
        ))
    }

    /// Each margin of `ψ` is univariate skew-normal with scale `σᵢ` and shape
    /// `δᵢ / √(1 − δᵢ²)`.
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
        let sd = self.sigma[i];
        let delta = self.c * self.v[i] / sd;
        let shape = delta / (1.0 - delta * delta).sqrt();
        let z = (psi - self.core.mu[i]) / sd;
        Ok(std::f64::consts::LN_2 + log_phi(z) - sd.ln() + log_ndtr(shape * z) + b.tprime.ln())
    }

    fn to_lambda(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.core.layout.len()];
        self.core.write_lambda(&mut out);
        out[self.core.layout.alpha.clone()].copy_from_slice(self.alpha.as_slice());
        out
    }
}
