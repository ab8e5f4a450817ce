//! Element-wise monotone transformations `t_γ: ℝ → ℝ` applied to each margin.
//!
//! Two families are supported besides the identity:
//!
//! * Yeo-Johnson, one parameter `γ ∈ (0, 2)`, closed form in both directions.
//! * Inverse Tukey g-and-h, two parameters `g ∈ ℝ`, `h ∈ (0, 1)`. The map from
//!   `ψ` to `θ` is the g-and-h transform itself, so `t_γ⁻¹` is closed form and
//!   `t_γ` is found by safeguarded Newton iteration.
//!
//! Variational parameters live in an unconstrained space. `γ = 2·sigmoid(u)` for
//! Yeo-Johnson and `(g, h) = (u₁, sigmoid(u₂))` for g-and-h.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{logit, sigmoid};

/// Below this |g| the g-and-h transform uses its `g = 0` limit.
const GH_G_ZERO: f64 = 1e-8;
const FORWARD_MAX_ITER: usize = 200;
/// sigmoid values are kept this far inside (0, 1) so that rounding never lands on
/// the boundary of the parameter domain.
const OPEN_MARGIN: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    Identity,
    #[serde(alias = "yj")]
    YeoJohnson,
    #[serde(alias = "igh")]
    InverseGh,
}

impl TransformKind {
    /// Number of variational parameters per margin.
    pub fn n_params(self) -> usize {
        match self {
            TransformKind::Identity => 0,
            TransformKind::YeoJohnson => 1,
            TransformKind::InverseGh => 2,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            TransformKind::Identity => 0,
            TransformKind::YeoJohnson => 1,
            TransformKind::InverseGh => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(TransformKind::Identity),
            1 => Some(TransformKind::YeoJohnson),
            2 => Some(TransformKind::InverseGh),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::Identity => "identity",
            TransformKind::YeoJohnson => "yj",
            TransformKind::InverseGh => "igh",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "none" => Ok(TransformKind::Identity),
            "yj" | "yeo-johnson" | "yeojohnson" => Ok(TransformKind::YeoJohnson),
            "igh" | "inverse-gh" | "inversegh" | "gh" => Ok(TransformKind::InverseGh),
            other => Err(Error::Spec(format!("unknown transform '{other}'"))),
        }
    }

    /// Unconstrained coordinates of the default starting transform: YJ at γ = 1,
    /// g-and-h at `(g, h) = (0, 0.05)`.
    pub fn initial_unconstrained(self) -> &'static [f64] {
        const YJ: [f64; 1] = [0.0];
        // logit(0.05)
        const GH: [f64; 2] = [0.0, -2.944_438_979_166_440_5];
        match self {
            TransformKind::Identity => &[],
            TransformKind::YeoJohnson => &YJ,
            TransformKind::InverseGh => &GH,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Repr {
    Identity,
    YeoJohnson { gamma: f64 },
    InverseGh { g: f64, h: f64 },
}

/// Validated parameters of one margin's transformation.
///
/// Values can only be built through checked constructors, so every method can
/// assume the parameters lie inside their domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransformParams(Repr);

/// Every derivative of `t_γ` and `t_γ⁻¹` needed by the families, evaluated at a
/// single `(ψ, θ = t_γ⁻¹(ψ))` pair.
///
/// Parameter derivatives are with respect to the constrained parameters
/// (`γ`, or `(g, h)`); entries beyond `n_params` are zero.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DerivativeBundle {
    pub theta: f64,
    pub psi: f64,
    /// `∂t⁻¹/∂ψ`
    pub dtheta_dpsi: f64,
    /// `t′(θ) = dψ/dθ`
    pub tprime: f64,
    /// `∂²t⁻¹/∂ψ²`
    pub d2theta_dpsi2: f64,
    /// `t″(θ)`
    pub d2psi_dtheta2: f64,
    /// `∂t⁻¹(ψ)/∂param` at fixed ψ.
    pub dtheta_dparam: [f64; 2],
    /// `∂t(θ)/∂param` at fixed θ.
    pub dpsi_dparam: [f64; 2],
    /// `∂t′(θ)/∂param` at fixed θ.
    pub dtprime_dparam: [f64; 2],
    /// `t″/t′`
    pub dlog_tprime_dtheta: f64,
    pub n_params: usize,
}

impl TransformParams {
    pub const IDENTITY: TransformParams = TransformParams(Repr::Identity);

    pub fn identity() -> Self {
        Self::IDENTITY
    }

    pub fn yeo_johnson(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "Yeo-Johnson gamma must lie in (0, 2), got {gamma}"
            )));
        }
        Ok(TransformParams(Repr::YeoJohnson { gamma }))
    }

    pub fn inverse_gh(g: f64, h: f64) -> Result<Self> {
        if !g.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "g-and-h g must be finite, got {g}"
            )));
        }
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "g-and-h h must lie in (0, 1), got {h}"
            )));
        }
        Ok(TransformParams(Repr::InverseGh { g, h }))
    }

    pub fn kind(&self) -> TransformKind {
        match self.0 {
            Repr::Identity => TransformKind::Identity,
            Repr::YeoJohnson { .. } => TransformKind::YeoJohnson,
            Repr::InverseGh { .. } => TransformKind::InverseGh,
        }
    }

    /// Constrained parameter values (`[γ]` or `[g, h]`).
    pub fn values(&self) -> Vec<f64> {
        match self.0 {
            Repr::Identity => vec![],
            Repr::YeoJohnson { gamma } => vec![gamma],
            Repr::InverseGh { g, h } => vec![g, h],
        }
    }

    /// Maps unconstrained optimizer coordinates to a valid transform.
    pub fn from_unconstrained(kind: TransformKind, u: &[f64]) -> Result<Self> {
        if u.len() != kind.n_params() {
            return Err(Error::DimensionMismatch {
                expected: kind.n_params(),
                actual: u.len(),
                context: "unconstrained transform parameters",
            });
        }
        match kind {
            TransformKind::Identity => Ok(Self::IDENTITY),
            TransformKind::YeoJohnson => Self::yeo_johnson(2.0 * open_sigmoid(u[0])),
            TransformKind::InverseGh => Self::inverse_gh(u[0], open_sigmoid(u[1])),
        }
    }

    /// Inverse of [`TransformParams::from_unconstrained`].
    pub fn to_unconstrained(&self) -> Vec<f64> {
        match self.0 {
            Repr::Identity => vec![],
            Repr::YeoJohnson { gamma } => vec![logit(gamma / 2.0)],
            Repr::InverseGh { g, h } => vec![g, logit(h)],
        }
    }

    /// Diagonal chain-rule factors `d param_j / d u_j`.
    pub fn unconstrained_jacobian(&self) -> [f64; 2] {
        match self.0 {
            Repr::Identity => [0.0, 0.0],
            Repr::YeoJohnson { gamma } => {
                let s = gamma / 2.0;
                [2.0 * s * (1.0 - s), 0.0]
            }
            Repr::InverseGh { h, .. } => [1.0, h * (1.0 - h)],
        }
    }

    /// `θ = t_γ⁻¹(ψ)`.
    pub fn inverse(&self, psi: f64) -> f64 {
        match self.0 {
            Repr::Identity => psi,
            Repr::YeoJohnson { gamma } => yj_inverse(psi, gamma),
            Repr::InverseGh { g, h } => gh_inverse(psi, g, h),
        }
    }

    /// `ψ = t_γ(θ)`.
    pub fn forward(&self, theta: f64) -> Result<f64> {
        if !theta.is_finite() {
            return Err(Error::NonFinite("transform argument"));
        }
        match self.0 {
            Repr::Identity => Ok(theta),
            Repr::YeoJohnson { gamma } => Ok(yj_forward(theta, gamma)),
            Repr::InverseGh { g, h } => gh_forward(theta, g, h),
        }
    }

    /// All derivatives at `ψ`.
    pub fn derivatives(&self, psi: f64) -> DerivativeBundle {
        match self.0 {
            Repr::Identity => DerivativeBundle {
                theta: psi,
                psi,
                dtheta_dpsi: 1.0,
                tprime: 1.0,
                ..Default::default()
            },
            Repr::YeoJohnson { gamma } => yj_derivatives(psi, gamma),
            Repr::InverseGh { g, h } => gh_derivatives(psi, g, h),
        }
    }
}

fn open_sigmoid(u: f64) -> f64 {
    sigmoid(u).clamp(OPEN_MARGIN, 1.0 - OPEN_MARGIN)
}

/// `(x·eˣ − (eˣ − 1)) / x²`, which appears in both parameter derivatives.
fn xexp_minus_expm1_over_x2(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        // sum_{j>=2} (j-1)/j! x^(j-2)
        let mut term_coef = 1.0 / 2.0;
        let mut sum = 0.0;
        let mut xp = 1.0;
        let mut fact = 2.0;
        for j in 2..10 {
            if j > 2 {
                fact *= j as f64;
                term_coef = (j as f64 - 1.0) / fact;
            }
            sum += term_coef * xp;
            xp *= x;
        }
        sum
    } else {
        (x * x.exp() - x.exp_m1()) / (x * x)
    }
}

// ---------------------------------------------------------------- Yeo-Johnson

fn yj_inverse(psi: f64, gamma: f64) -> f64 {
    if psi >= 0.0 {
        ((psi * gamma).ln_1p() / gamma).exp_m1()
    } else {
        let a = 2.0 - gamma;
        -((-psi * a).ln_1p() / a).exp_m1()
    }
}

fn yj_forward(theta: f64, gamma: f64) -> f64 {
    if theta >= 0.0 {
        (gamma * theta.ln_1p()).exp_m1() / gamma
    } else {
        let a = 2.0 - gamma;
        -(a * (-theta).ln_1p()).exp_m1() / a
    }
}

fn yj_derivatives(psi: f64, gamma: f64) -> DerivativeBundle {
    let theta = yj_inverse(psi, gamma);
    if psi >= 0.0 {
        // l = ln(1 + θ)
        let l = theta.ln_1p();
        let tprime = ((gamma - 1.0) * l).exp();
        let dtheta_dpsi = ((1.0 - gamma) * l).exp();
        let dpsi_dgamma = l * l * xexp_minus_expm1_over_x2(gamma * l);
        DerivativeBundle {
            theta,
            psi,
            dtheta_dpsi,
            tprime,
            d2theta_dpsi2: (1.0 - gamma) * ((1.0 - 2.0 * gamma) * l).exp(),
            d2psi_dtheta2: (gamma - 1.0) * ((gamma - 2.0) * l).exp(),
            dtheta_dparam: [-dtheta_dpsi * dpsi_dgamma, 0.0],
            dpsi_dparam: [dpsi_dgamma, 0.0],
            dtprime_dparam: [tprime * l, 0.0],
            dlog_tprime_dtheta: (gamma - 1.0) / (1.0 + theta),
            n_params: 1,
        }
    } else {
        // lb = ln(1 - θ), a = 2 - γ
        let a = 2.0 - gamma;
        let lb = (-theta).ln_1p();
        let tprime = ((1.0 - gamma) * lb).exp();
        let dtheta_dpsi = ((gamma - 1.0) * lb).exp();
        let dpsi_dgamma = lb * lb * xexp_minus_expm1_over_x2(a * lb);
        DerivativeBundle {
            theta,
            psi,
            dtheta_dpsi,
            tprime,
            d2theta_dpsi2: (1.0 - gamma) * ((2.0 * gamma - 3.0) * lb).exp(),
            d2psi_dtheta2: (gamma - 1.0) * (-gamma * lb).exp(),
            dtheta_dparam: [-dtheta_dpsi * dpsi_dgamma, 0.0],
            dpsi_dparam: [dpsi_dgamma, 0.0],
            dtprime_dparam: [-tprime * lb, 0.0],
            dlog_tprime_dtheta: (gamma - 1.0) / (1.0 - theta),
            n_params: 1,
        }
    }
}

// ---------------------------------------------------------------- g-and-h

/// `(e^{gψ} − 1)/g`, continuous through `g = 0`.
fn gh_k(psi: f64, g: f64) -> f64 {
    if g.abs() < GH_G_ZERO {
        return psi;
    }
    let x = g * psi;
    if x == 0.0 {
        psi
    } else {
        psi * (x.exp_m1() / x)
    }
}

fn gh_inverse(psi: f64, g: f64, h: f64) -> f64 {
    gh_k(psi, g) * (0.5 * h * psi * psi).exp()
}

fn gh_dtheta_dpsi(psi: f64, theta: f64, g: f64, h: f64) -> f64 {
    let g = if g.abs() < GH_G_ZERO { 0.0 } else { g };
    (g * psi + 0.5 * h * psi * psi).exp() + h * psi * theta
}

fn gh_forward(theta: f64, g: f64, h: f64) -> Result<f64> {
    if theta == 0.0 {
        return Ok(0.0);
    }
    // t⁻¹ is strictly increasing with t⁻¹(0) = 0, so ψ has the sign of θ.
    let sign = theta.signum();
    let (mut lo, mut hi) = if sign > 0.0 { (0.0, 1.0) } else { (-1.0, 0.0) };
    let mut grow = 0;
    while (sign > 0.0 && gh_inverse(hi, g, h) < theta)
        || (sign < 0.0 && gh_inverse(lo, g, h) > theta)
    {
        if sign > 0.0 {
            lo = hi;
            hi *= 2.0;
        } else {
            hi = lo;
            lo *= 2.0;
        }
        grow += 1;
        if grow > 1100 {
            return Err(Error::Numerical(format!(
                "could not bracket g-and-h root for theta = {theta}"
            )));
        }
    }

    let tol = 1e-13 * theta.abs().max(1.0);
    let mut psi = 0.5 * (lo + hi);
    for _ in 0..FORWARD_MAX_ITER {
        let value = gh_inverse(psi, g, h);
        let resid = value - theta;
        if resid.abs() <= tol {
            return Ok(psi);
        }
        if resid > 0.0 {
            hi = psi;
        } else {
            lo = psi;
        }
        let slope = gh_dtheta_dpsi(psi, value, g, h);
        let newton = psi - resid / slope;
        psi = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 4.0 * f64::EPSILON * psi.abs().max(f64::MIN_POSITIVE) {
            return Ok(psi);
        }
    }
    Err(Error::Numerical(format!(
        "g-and-h inversion did not converge for theta = {theta} (g = {g}, h = {h})"
    )))
}

fn gh_derivatives(psi: f64, g: f64, h: f64) -> DerivativeBundle {
    let g_eff = if g.abs() < GH_G_ZERO { 0.0 } else { g };
    let half_psi2 = 0.5 * psi * psi;
    let hexp = (h * half_psi2).exp();
    let egh = (g_eff * psi).exp() * hexp;
    let theta = gh_k(psi, g) * hexp;

    let d1 = egh + h * psi * theta;
    let d2 = egh * (g_eff + h * psi) + h * psi * d1 + h * theta;

    // parameter derivatives at fixed ψ
    let dtheta_dg = hexp * psi * psi * xexp_minus_expm1_over_x2(g_eff * psi);
    let dtheta_dh = half_psi2 * theta;
    let dd1_dg = psi * egh + h * psi * dtheta_dg;
    let dd1_dh = half_psi2 * egh + psi * theta + h * psi * dtheta_dh;

    // at fixed θ, ψ moves by -(∂θ/∂p)/(∂θ/∂ψ) and t′ = 1/d1 picks up that shift
    let dpsi_dg = -dtheta_dg / d1;
    let dpsi_dh = -dtheta_dh / d1;
    let inv_d1_sq = 1.0 / (d1 * d1);
    let dtprime_dg = -inv_d1_sq * (dd1_dg + d2 * dpsi_dg);
    let dtprime_dh = -inv_d1_sq * (dd1_dh + d2 * dpsi_dh);

    DerivativeBundle {
        theta,
        psi,
        dtheta_dpsi: d1,
        tprime: 1.0 / d1,
        d2theta_dpsi2: d2,
        d2psi_dtheta2: -d2 / (d1 * d1 * d1),
        dtheta_dparam: [dtheta_dg, dtheta_dh],
        dpsi_dparam: [dpsi_dg, dpsi_dh],
        dtprime_dparam: [dtprime_dg, dtprime_dh],
        dlog_tprime_dtheta: -d2 * inv_d1_sq,
        n_params: 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn yj(g: f64) -> TransformParams {
        TransformParams::yeo_johnson(g).unwrap()
    }
    fn gh(g: f64, h: f64) -> TransformParams {
        TransformParams::inverse_gh(g, h).unwrap()
    }

    fn random_params(rng: &mut ChaCha8Rng) -> TransformParams {
        if rng.random_bool(0.5) {
            yj(rng.random_range(0.2..1.8))
        } else {
            let g = if rng.random_bool(0.2) {
                0.0
            } else {
                rng.random_range(-0.8..0.8)
            };
            gh(g, rng.random_range(0.01..0.6))
        }
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(yj(1.3).inverse(0.0), 0.0);
        assert!((yj(1.0).inverse(0.7) - 0.7).abs() < 1e-15);
        assert!((gh(0.0, 0.5).inverse(1.0) - 1.284_025_416_687_741_5).abs() < 1e-14);
    }

    #[test]
    fn forward_examples() {
        assert!((yj(1.5).forward(1.0).unwrap() - 1.218_951_416_497_460_2).abs() < 1e-14);
        assert!((yj(0.5).forward(-1.0).unwrap() + 1.218_951_416_497_460_2).abs() < 1e-14);
        assert_eq!(gh(0.4, 0.3).forward(0.0).unwrap(), 0.0);
    }

    #[test]
    fn domain_violations_are_rejected() {
        assert!(TransformParams::yeo_johnson(0.0).is_err());
        assert!(TransformParams::yeo_johnson(2.0).is_err());
        assert!(TransformParams::yeo_johnson(f64::NAN).is_err());
        assert!(TransformParams::inverse_gh(0.1, 1.0).is_err());
        assert!(TransformParams::inverse_gh(0.1, 0.0).is_err());
        assert!(TransformParams::inverse_gh(f64::INFINITY, 0.3).is_err());
    }

    #[test]
    fn gh_derivative_example() {
        let b = gh(0.0, 0.5).derivatives(1.0);
        assert!((b.dtheta_dpsi - 1.926_038_125_031_612_3).abs() < 1e-13);
    }

    #[test]
    fn yj_identity_at_gamma_one() {
        for psi in [-3.0, -0.2, 0.0, 0.4, 5.0] {
            let b = yj(1.0).derivatives(psi);
            assert!((b.dtheta_dpsi - 1.0).abs() < 1e-15);
            assert!((b.tprime - 1.0).abs() < 1e-15);
            assert!(b.d2psi_dtheta2.abs() < 1e-15);
        }
    }

    #[test]
    fn identity_has_no_parameter_sensitivity() {
        let b = TransformParams::identity().derivatives(2.5);
        assert_eq!(b.theta, 2.5);
        assert_eq!(b.dtheta_dparam, [0.0, 0.0]);
        assert_eq!(b.dtprime_dparam, [0.0, 0.0]);
        assert_eq!(b.n_params, 0);
    }

    #[test]
    fn forward_inverse_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let p = random_params(&mut rng);
            let x: f64 = rng.random_range(-4.0..4.0);
            let back = p.forward(p.inverse(x)).unwrap();
            assert!((back - x).abs() < 1e-8, "{p:?} x={x} back={back}");
        }
    }

    #[test]
    fn gh_forward_meets_absolute_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..500 {
            let p = gh(rng.random_range(-1.0..1.0), rng.random_range(0.01..0.95));
            let theta: f64 = rng.random_range(-50.0..50.0);
            let psi = p.forward(theta).unwrap();
            assert!((p.inverse(psi) - theta).abs() < 1e-10);
        }
    }

    #[test]
    fn unconstrained_map_examples() {
        let p = TransformParams::from_unconstrained(TransformKind::YeoJohnson, &[0.0]).unwrap();
        assert_eq!(p.values(), vec![1.0]);
        assert!((p.unconstrained_jacobian()[0] - 0.5).abs() < 1e-15);
        let q = TransformParams::from_unconstrained(
            TransformKind::InverseGh,
            TransformKind::InverseGh.initial_unconstrained(),
        )
        .unwrap();
        assert!((q.values()[1] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn unconstrained_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..1000 {
            let kind = if rng.random_bool(0.5) {
                TransformKind::YeoJohnson
            } else {
                TransformKind::InverseGh
            };
            let u: Vec<f64> = (0..kind.n_params())
                .map(|_| rng.random_range(-5.0..5.0))
                .collect();
            let p = TransformParams::from_unconstrained(kind, &u).unwrap();
            let back = p.to_unconstrained();
            let q = TransformParams::from_unconstrained(kind, &back).unwrap();
            for (a, b) in p.values().iter().zip(q.values()) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in u.iter().zip(&back) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn extreme_unconstrained_values_stay_in_domain() {
        for u in [-800.0, -40.0, 40.0, 800.0] {
            let p = TransformParams::from_unconstrained(TransformKind::YeoJohnson, &[u]).unwrap();
            let g = p.values()[0];
            assert!(g > 0.0 && g < 2.0);
            let q =
                TransformParams::from_unconstrained(TransformKind::InverseGh, &[0.0, u]).unwrap();
            let h = q.values()[1];
            assert!(h > 0.0 && h < 1.0);
        }
    }

    #[test]
    fn yj_branch_continuity() {
        for gamma in [0.3, 0.9, 1.0, 1.4, 1.9] {
            let p = yj(gamma);
            let left = p.derivatives(-1e-12);
            let right = p.derivatives(0.0);
            let pairs = [
                (left.theta, right.theta),
                (left.dtheta_dpsi, right.dtheta_dpsi),
                (left.tprime, right.tprime),
                (left.d2theta_dpsi2, right.d2theta_dpsi2),
                (left.d2psi_dtheta2, right.d2psi_dtheta2),
                (left.dtheta_dparam[0], right.dtheta_dparam[0]),
                (left.dpsi_dparam[0], right.dpsi_dparam[0]),
                (left.dtprime_dparam[0], right.dtprime_dparam[0]),
                (left.dlog_tprime_dtheta, right.dlog_tprime_dtheta),
            ];
            for (l, r) in pairs {
                assert!((l - r).abs() < 1e-9, "gamma={gamma}: {l} vs {r}");
            }
        }
    }

    #[test]
    fn gh_small_g_is_continuous_with_zero_branch() {
        for psi in [-2.0, -0.3, 0.7, 2.5] {
            let a = gh(0.0, 0.3).derivatives(psi);
            let b = gh(1e-7, 0.3).derivatives(psi);
            assert!((a.theta - b.theta).abs() < 1e-6);
            assert!((a.dtheta_dparam[0] - b.dtheta_dparam[0]).abs() < 1e-5);
            assert!((a.dtprime_dparam[1] - b.dtprime_dparam[1]).abs() < 1e-5);
        }
    }

    #[test]
    fn bundle_entries_finite_on_wide_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..500 {
            let p = random_params(&mut rng);
            let theta: f64 = rng.random_range(-50.0..50.0);
            let psi = p.forward(theta).unwrap();
            let b = p.derivatives(psi);
            let all = [
                b.theta,
                b.dtheta_dpsi,
                b.tprime,
                b.d2theta_dpsi2,
                b.d2psi_dtheta2,
                b.dtheta_dparam[0],
                b.dtheta_dparam[1],
                b.dpsi_dparam[0],
                b.dpsi_dparam[1],
                b.dtprime_dparam[0],
                b.dtprime_dparam[1],
                b.dlog_tprime_dtheta,
            ];
            assert!(
                all.iter().all(|v| v.is_finite()),
                "{p:?} theta={theta}: {b:?}"
            );
            assert!((b.tprime * b.dtheta_dpsi - 1.0).abs() < 1e-12);
        }
    }
}
