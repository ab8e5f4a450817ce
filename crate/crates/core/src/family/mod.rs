//! Copula variational families over `θ ∈ ℝᵐ`.
//!
//! A family draws `ψ` from a Gaussian or skew-normal with factor scale
//! `Σ = BBᵀ + D²` and maps each coordinate through `θᵢ = t⁻¹(ψᵢ)`. The flat
//! parameter vector `λ` is laid out as `(μ, vech B, d, [α], u)`, where `u` holds
//! the unconstrained transform parameters margin by margin.

mod checkpoint;
mod gaussian;
mod skew_normal;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor_scale::{pack_lower, vech_len, FactorScale};
use crate::special::LN_SQRT_2PI;
use crate::transforms::{DerivativeBundle, TransformKind, TransformParams};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use gaussian::GaussianCopula;
pub use skew_normal::{SkewDerived, SkewNormalCopula};

/// Structural description of a family: everything except the values of `λ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FamilySpec {
    pub m: usize,
    pub k: usize,
    pub transform: TransformKind,
    pub skew: bool,
}

/// Number of variational parameters.
pub fn param_count(m: usize, k: usize, transform: TransformKind, skew: bool) -> usize {
    let alpha = if skew { m } else { 0 };
    m + vech_len(m, k) + m + alpha + m * transform.n_params()
}

/// The eight named family configurations, from mean-field Gaussian to the
/// skew-normal g-and-h copula.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FamilyLabel {
    A1,
    A2,
    A3,
    A4,
    A5,
    A6,
    A7,
    A8,
}

impl FamilyLabel {
    pub const ALL: [FamilyLabel; 8] = [
        FamilyLabel::A1,
        FamilyLabel::A2,
        FamilyLabel::A3,
        FamilyLabel::A4,
        FamilyLabel::A5,
        FamilyLabel::A6,
        FamilyLabel::A7,
        FamilyLabel::A8,
    ];

    pub fn description(self) -> &'static str {
        match self {
            FamilyLabel::A1 => "mean-field Gaussian",
            FamilyLabel::A2 => "mean-field Yeo-Johnson",
            FamilyLabel::A3 => "Gaussian",
            FamilyLabel::A4 => "skew-normal",
            FamilyLabel::A5 => "Gaussian copula (Yeo-Johnson)",
            FamilyLabel::A6 => "skew-normal copula (Yeo-Johnson)",
            FamilyLabel::A7 => "Gaussian copula (inverse g-and-h)",
            FamilyLabel::A8 => "skew-normal copula (inverse g-and-h)",
        }
    }

    /// Family for dimension `m`; `k` is ignored by the mean-field labels.
    pub fn spec(self, m: usize, k: usize) -> FamilySpec {
        use TransformKind::*;
        let (k, transform, skew) = match self {
            FamilyLabel::A1 => (0, Identity, false),
            FamilyLabel::A2 => (0, YeoJohnson, false),
            FamilyLabel::A3 => (k, Identity, false),
            FamilyLabel::A4 => (k, Identity, true),
            FamilyLabel::A5 => (k, YeoJohnson, false),
            FamilyLabel::A6 => (k, YeoJohnson, true),
            FamilyLabel::A7 => (k, InverseGh, false),
            FamilyLabel::A8 => (k, InverseGh, true),
        };
        FamilySpec {
            m,
            k,
            transform,
            skew,
        }
    }
}

impl fmt::Display for FamilyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for FamilyLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        FamilyLabel::ALL
            .into_iter()
            .find(|l| l.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Spec(format!("unknown family label '{s}'")))
    }
}

impl FamilySpec {
    pub fn new(m: usize, k: usize, transform: TransformKind, skew: bool) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if k > m {
            return Err(Error::InvalidParameter(format!(
                "factor count {k} exceeds dimension {m}"
            )));
        }
        Ok(FamilySpec {
            m,
            k,
            transform,
            skew,
        })
    }

    pub fn param_count(&self) -> usize {
        param_count(self.m, self.k, self.transform, self.skew)
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self)
    }

    /// Length of the standard-normal noise vector consumed by one draw.
    pub fn noise_len(&self) -> usize {
        let skew = if self.skew { 2 } else { 0 };
        skew + self.k + self.m
    }

    pub fn is_mean_field(&self) -> bool {
        self.k == 0
    }

    /// Matching configuration label, if this family is one of the eight.
    pub fn label(&self) -> Option<FamilyLabel> {
        use TransformKind::*;
        let label = match (self.k == 0, self.transform, self.skew) {
            (true, Identity, false) => FamilyLabel::A1,
            (true, YeoJohnson, false) => FamilyLabel::A2,
            (false, Identity, false) => FamilyLabel::A3,
            (false, Identity, true) => FamilyLabel::A4,
            (false, YeoJohnson, false) => FamilyLabel::A5,
            (false, YeoJohnson, true) => FamilyLabel::A6,
            (false, InverseGh, false) => FamilyLabel::A7,
            (false, InverseGh, true) => FamilyLabel::A8,
            _ => return None,
        };
        Some(label)
    }

    /// Starting point: `μ` as given (zero by default), small random `B`,
    /// `d = 0.1`, `α = 0`, and identity-like transforms.
    pub fn initial_lambda<R: Rng + ?Sized>(
        &self,
        mu: Option<&[f64]>,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let layout = self.layout();
        let mut lambda = vec![0.0; layout.len()];
        if let Some(mu) = mu {
            if mu.len() != self.m {
                return Err(Error::DimensionMismatch {
                    expected: self.m,
                    actual: mu.len(),
                    context: "initial mean",
                });
            }
            lambda[layout.mu.clone()].copy_from_slice(mu);
        }
        for v in &mut lambda[layout.b.clone()] {
            let z: f64 = StandardNormal.sample(rng);
            *v = 0.01 * z;
        }
        lambda[layout.d.clone()].fill(0.1);
        let init = self.transform.initial_unconstrained();
        for chunk in lambda[layout.gamma.clone()].chunks_mut(init.len().max(1)) {
            chunk.copy_from_slice(init);
        }
        Ok(lambda)
    }
}

/// Offsets of each block inside `λ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub mu: std::ops::Range<usize>,
    pub b: std::ops::Range<usize>,
    pub d: std::ops::Range<usize>,
    pub alpha: std::ops::Range<usize>,
    pub gamma: std::ops::Range<usize>,
}

impl Layout {
    pub fn new(spec: &FamilySpec) -> Self {
        let m = spec.m;
        let mu = 0..m;
        let b = mu.end..mu.end + vech_len(m, spec.k);
        let d = b.end..b.end + m;
        let alpha = d.end..d.end + if spec.skew { m } else { 0 };
        let gamma = alpha.end..alpha.end + m * spec.transform.n_params();
        Layout {
            mu,
            b,
            d,
            alpha,
            gamma,
        }
    }

    pub fn len(&self) -> usize {
        self.gamma.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Name of the block containing index `i` and the offset within it.
    pub fn locate(&self, i: usize) -> Option<(&'static str, usize)> {
        [
            ("mu", &self.mu),
            ("b", &self.b),
            ("d", &self.d),
            ("alpha", &self.alpha),
            ("gamma", &self.gamma),
        ]
        .into_iter()
        .find(|(_, r)| r.contains(&i))
        .map(|(name, r)| (name, i - r.start))
    }
}

/// One draw from a family, with the transform derivatives at every margin.
#[derive(Clone, Debug)]
pub struct Draw {
    pub psi: Vec<f64>,
    pub theta: Vec<f64>,
    pub bundles: Vec<DerivativeBundle>,
}

/// Operations shared by every family.
pub trait VariationalFamily: Sync {
    fn spec(&self) -> &FamilySpec;

    fn dim(&self) -> usize {
        self.spec().m
    }

    fn noise_len(&self) -> usize {
        self.spec().noise_len()
    }

    /// `θ = h(ε, λ)`.
    fn draw(&self, eps: &[f64]) -> Result<Draw>;

    /// `log q_λ(θ)`.
    fn log_density(&self, theta: &[f64]) -> Result<f64>;

    /// `log q_λ` at a draw, reusing its `ψ` instead of inverting the transforms.
    fn log_density_at(&self, draw: &Draw) -> f64;

    /// `∇_θ log q_λ(θ)`.
    fn grad_theta(&self, theta: &[f64]) -> Result<Vec<f64>>;

    fn grad_theta_at(&self, draw: &Draw) -> Vec<f64>;

    /// `(∂θ/∂λ)ᵀ w` at the draw produced by `eps`.
    fn vjp(&self, eps: &[f64], draw: &Draw, w: &[f64]) -> Vec<f64>;

    /// `∇_λ log q_λ(θ)` at fixed `θ`.
    fn score(&self, theta: &[f64]) -> Result<Vec<f64>>;

    fn score_at(&self, draw: &Draw) -> Result<Vec<f64>>;

    /// Log density of the `i`-th margin of `θ`.
    fn marginal_log_density(&self, i: usize, theta_i: f64) -> Result<f64>;

    fn to_lambda(&self) -> Vec<f64>;
}

/// Either family, selected by [`FamilySpec::skew`].
#[derive(Clone, Debug)]
pub enum Family {
    Gaussian(GaussianCopula),
    SkewNormal(SkewNormalCopula),
}

impl Family {
    pub fn from_lambda(spec: FamilySpec, lambda: &[f64]) -> Result<Self> {
        if spec.skew {
            SkewNormalCopula::from_lambda(spec, lambda).map(Family::SkewNormal)
        } else {
            GaussianCopula::from_lambda(spec, lambda).map(Family::Gaussian)
        }
    }

    fn inner(&self) -> &dyn VariationalFamily {
        match self {
            Family::Gaussian(g) => g,
            Family::SkewNormal(s) => s,
        }
    }
}

impl VariationalFamily for Family {
    fn spec(&self) -> &FamilySpec {
        self.inner().spec()
    }
    fn draw(&self, eps: &[f64]) -> Result<Draw> {
        self.inner().draw(eps)
    }
    fn log_density(&self, theta: &[f64]) -> Result<f64> {
        self.inner().log_density(theta)
    }
    fn log_density_at(&self, draw: &Draw) -> f64 {
        self.inner().log_density_at(draw)
    }
    fn grad_theta(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.inner().grad_theta(theta)
    }
    fn grad_theta_at(&self, draw: &Draw) -> Vec<f64> {
        self.inner().grad_theta_at(draw)
    }
    fn vjp(&self, eps: &[f64], draw: &Draw, w: &[f64]) -> Vec<f64> {
        self.inner().vjp(eps, draw, w)
    }
    fn score(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.inner().score(theta)
    }
    fn score_at(&self, draw: &Draw) -> Result<Vec<f64>> {
        self.inner().score_at(draw)
    }
    fn marginal_log_density(&self, i: usize, theta_i: f64) -> Result<f64> {
        self.inner().marginal_log_density(i, theta_i)
    }
    fn to_lambda(&self) -> Vec<f64> {
        self.inner().to_lambda()
    }
}

/// State shared by both families: location, factor scale and margins.
#[derive(Clone, Debug)]
pub(crate) struct Core {
    pub spec: FamilySpec,
    pub layout: Layout,
    pub mu: DVector<f64>,
    pub scale: FactorScale,
    pub tparams: Vec<TransformParams>,
    pub logdet: f64,
}

impl Core {
    pub fn from_lambda(spec: FamilySpec, lambda: &[f64]) -> Result<Self> {
        let layout = spec.layout();
        if lambda.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.len(),
                actual: lambda.len(),
                context: "variational parameter vector",
            });
        }
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("variational parameters"));
        }
        let m = spec.m;
        let mu = DVector::from_column_slice(&lambda[layout.mu.clone()]);
        let scale = FactorScale::from_vech(
            m,
            spec.k,
            &lambda[layout.b.clone()],
            &lambda[layout.d.clone()],
        )?;
        let np = spec.transform.n_params();
        let tparams = if np == 0 {
            vec![TransformParams::IDENTITY; m]
        } else {
            lambda[layout.gamma.clone()]
                .chunks(np)
                .map(|u| TransformParams::from_unconstrained(spec.transform, u))
                .collect::<Result<Vec<_>>>()?
        };
        let logdet = scale.logdet();
        Ok(Core {
            spec,
            layout,
            mu,
            scale,
            tparams,
            logdet,
        })
    }

    pub fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.spec.m {
            return Err(Error::DimensionMismatch {
                expected: self.spec.m,
                actual: theta.len(),
                context: "theta",
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("theta"));
        }
        Ok(())
    }

    pub fn check_eps(&self, eps: &[f64]) -> Result<()> {
        if eps.len() != self.spec.noise_len() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.noise_len(),
                actual: eps.len(),
                context: "noise vector",
            });
        }
        Ok(())
    }

    /// Maps `ψ` to a draw.
    pub fn finish_draw(&self, psi: DVector<f64>) -> Draw {
        let bundles: Vec<DerivativeBundle> = psi
            .iter()
            .zip(&self.tparams)
            .map(|(&p, t)| t.derivatives(p))
            .collect();
        let theta = bundles.iter().map(|b| b.theta).collect();
        Draw {
            psi: psi.as_slice().to_vec(),
            theta,
            bundles,
        }
    }

    /// Inverts the transforms at `θ`, producing the same structure as a draw.
    pub fn draw_at_theta(&self, theta: &[f64]) -> Result<Draw> {
        self.check_theta(theta)?;
        let mut psi = Vec::with_capacity(theta.len());
        let mut bundles = Vec::with_capacity(theta.len());
        for (&th, t) in theta.iter().zip(&self.tparams) {
            let p = t.forward(th)?;
            let mut b = t.derivatives(p);
            b.theta = th;
            psi.push(p);
            bundles.push(b);
        }
        Ok(Draw {
            psi,
            theta: theta.to_vec(),
            bundles,
        })
    }

    pub fn centered(&self, draw: &Draw) -> DVector<f64> {
        DVector::from_iterator(
            self.spec.m,
            draw.psi.iter().zip(self.mu.iter()).map(|(p, m)| p - m),
        )
    }

    /// `log φ_m(ψ; μ, Σ)` given `r = ψ − μ` and `Σ⁻¹ r`.
    pub fn gaussian_logpdf(&self, r: &DVector<f64>, rt: &DVector<f64>) -> f64 {
        -(self.spec.m as f64) * LN_SQRT_2PI - 0.5 * self.logdet - 0.5 * r.dot(rt)
    }

    pub fn log_jacobian(&self, draw: &Draw) -> f64 {
        draw.bundles.iter().map(|b| b.tprime.ln()).sum()
    }

    /// `t″/t′ + t′ ∘ g_ψ` where `g_ψ = ∇_ψ log p(ψ)`.
    pub fn chain_theta(&self, draw: &Draw, g_psi: &DVector<f64>) -> Vec<f64> {
        draw.bundles
            .iter()
            .zip(g_psi.iter())
            .map(|(b, g)| b.dlog_tprime_dtheta + b.tprime * g)
            .collect()
    }

    /// Writes the transform-parameter block of `(∂θ/∂λ)ᵀ w`.
    pub fn gamma_vjp(&self, draw: &Draw, w: &[f64], out: &mut [f64]) {
        let np = self.spec.transform.n_params();
        if np == 0 {
            return;
        }
        let block = &mut out[self.layout.gamma.clone()];
        for (i, (b, t)) in draw.bundles.iter().zip(&self.tparams).enumerate() {
            let chain = t.unconstrained_jacobian();
            for j in 0..np {
                block[i * np + j] = b.dtheta_dparam[j] * w[i] * chain[j];
            }
        }
    }

    /// Writes the transform-parameter block of the score given `∇_ψ log p(ψ)`.
    pub fn gamma_score(&self, draw: &Draw, g_psi: &DVector<f64>, out: &mut [f64]) {
        let np = self.spec.transform.n_params();
        if np == 0 {
            return;
        }
        let block = &mut out[self.layout.gamma.clone()];
        for (i, (b, t)) in draw.bundles.iter().zip(&self.tparams).enumerate() {
            let chain = t.unconstrained_jacobian();
            for j in 0..np {
                let d = g_psi[i] * b.dpsi_dparam[j] + b.dtprime_dparam[j] / b.tprime;
                block[i * np + j] = d * chain[j];
            }
        }
    }

    pub fn write_lambda(&self, out: &mut [f64]) {
        out[self.layout.mu.clone()].copy_from_slice(self.mu.as_slice());
        out[self.layout.b.clone()].copy_from_slice(&pack_lower(self.scale.b()));
        out[self.layout.d.clone()].copy_from_slice(self.scale.d().as_slice());
        let np = self.spec.transform.n_params();
        if np > 0 {
            let block = &mut out[self.layout.gamma.clone()];
            for (i, t) in self.tparams.iter().enumerate() {
                block[i * np..(i + 1) * np].copy_from_slice(&t.to_unconstrained());
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polypharmacy_parameter_counts() {
        let want = [1018, 1527, 3553, 4062, 4062, 4571, 4571, 5080];
        for (label, n) in FamilyLabel::ALL.iter().zip(want) {
            let spec = label.spec(509, 5);
            assert_eq!(spec.param_count(), n, "{label}");
            assert_eq!(spec.layout().len(), n);
            assert_eq!(spec.label(), Some(*label));
        }
    }

    #[test]
    fn layout_partitions_lambda() {
        let spec = FamilySpec::new(6, 2, TransformKind::InverseGh, true).unwrap();
        let l = spec.layout();
        assert_eq!(l.mu, 0..6);
        assert_eq!(l.b, 6..17);
        assert_eq!(l.d, 17..23);
        assert_eq!(l.alpha, 23..29);
        assert_eq!(l.gamma, 29..41);
        assert_eq!(l.locate(17), Some(("d", 0)));
        assert_eq!(l.locate(41), None);
    }

    #[test]
    fn labels_parse_case_insensitively() {
        assert_eq!("a6".parse::<FamilyLabel>().unwrap(), FamilyLabel::A6);
        assert!("A9".parse::<FamilyLabel>().is_err());
    }

    #[test]
    fn unnamed_configurations_have_no_label() {
        let spec = FamilySpec::new(4, 0, TransformKind::Identity, true).unwrap();
        assert_eq!(spec.label(), None);
    }
}
