//! Low-dimensional quadrature oracles.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::fd::fd_gradient;
use crate::error::{Error, Result};
use crate::family::VariationalFamily;
use crate::targets::TargetModel;
use crate::transforms::TransformKind;

/// Nodes and log-weights of a trapezoid rule on `ℝ`.
///
/// Each half-line `x ≷ b` is mapped to `v ∈ ℝ` by `x = b ± s·eᵛ`, which makes
/// integrands that are smooth on either side of `b` (but possibly kinked at
/// `b`) analytic in `v`, so the trapezoid rule converges geometrically.
#[derive(Clone, Debug)]
pub struct LineRule {
    pub nodes: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl LineRule {
    pub fn new(split: f64, scale: f64, step: f64, v_min: f64, v_max: f64) -> Self {
        assert!(scale > 0.0 && step > 0.0 && v_max > v_min);
        let n = ((v_max - v_min) / step).round() as usize;
        let mut nodes = Vec::with_capacity(2 * n + 2);
        let mut log_weights = Vec::with_capacity(2 * n + 2);
        for j in 0..=n {
            let v = v_min + j as f64 * step;
            let lw = scale.ln() + v + step.ln();
            for sign in [-1.0, 1.0] {
                nodes.push(split + sign * scale * v.exp());
                log_weights.push(lw);
            }
        }
        LineRule { nodes, log_weights }
    }

    /// Default resolution used by the normalization checks.
    pub fn standard(split: f64, scale: f64) -> Self {
        Self::new(split, scale, 0.05, -32.0, 40.0)
    }

    /// Coarser rule for two-dimensional products.
    pub fn coarse(split: f64, scale: f64) -> Self {
        Self::new(split, scale, 0.1, -26.0, 26.0)
    }
}

/// `log Σ exp(xᵢ)`.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `log ∫ exp(logf(x)) dx` over the real line.
pub fn log_integrate_real_line<F: Fn(f64) -> f64>(logf: F, split: f64, scale: f64) -> Result<f64> {
    let rule = LineRule::standard(split, scale);
    let mut terms = Vec::with_capacity(rule.nodes.len());
    for (&x, &lw) in rule.nodes.iter().zip(&rule.log_weights) {
        let lf = logf(x);
        if lf.is_nan() {
            return Err(Error::Numerical(format!("integrand is NaN at {x}")));
        }
        terms.push(lf + lw);
    }
    Ok(log_sum_exp(terms))
}

/// `∫ exp(logf(x)) dx` over the real line.
pub fn integrate_real_line<F: Fn(f64) -> f64>(logf: F, split: f64, scale: f64) -> Result<f64> {
    log_integrate_real_line(logf, split, scale).map(f64::exp)
}

/// Split point and scale for margin `i` of a family, in `θ` units.
fn margin_rule(family: &dyn VariationalFamily, i: usize, coarse: bool) -> Result<LineRule> {
    let lambda = family.to_lambda();
    let spec = family.spec();
    let layout = spec.layout();
    let mu = lambda[layout.mu.start + i];
    let np = spec.transform.n_params();
    let tp = crate::transforms::TransformParams::from_unconstrained(
        spec.transform,
        &lambda[layout.gamma.start + i * np..layout.gamma.start + (i + 1) * np],
    )?;
    let scale = crate::factor_scale::FactorScale::from_vech(
        spec.m,
        spec.k,
        &lambda[layout.b.clone()],
        &lambda[layout.d.clone()],
    )?;
    let sd = scale.diag()[i].sqrt();
    let b = tp.derivatives(mu);
    // YJ margins have a third-derivative jump at θ = 0
    let split = if spec.transform == TransformKind::YeoJohnson {
        0.0
    } else {
        b.theta
    };
    let s = (sd * b.dtheta_dpsi).max(1e-3);
    Ok(if coarse {
        LineRule::coarse(split, s)
    } else {
        LineRule::standard(split, s)
    })
}

/// `∫ q(θ) f(θ) dθ` for a family of dimension one or two.
pub fn integrate_family<F: Fn(&[f64]) -> f64>(family: &dyn VariationalFamily, f: F) -> Result<f64> {
    match family.dim() {
        1 => {
            let rule = margin_rule(family, 0, false)?;
            let mut acc = 0.0;
            for (&x, &lw) in rule.nodes.iter().zip(&rule.log_weights) {
                let lq = family.log_density(&[x])?;
                acc += (lq + lw).exp() * f(&[x]);
            }
            Ok(acc)
        }
        2 => {
            let r0 = margin_rule(family, 0, true)?;
            let r1 = margin_rule(family, 1, true)?;
            let mut acc = 0.0;
            for (&x, &lx) in r0.nodes.iter().zip(&r0.log_weights) {
                for (&y, &ly) in r1.nodes.iter().zip(&r1.log_weights) {
                    let lq = family.log_density(&[x, y])?;
                    let w = (lq + lx + ly).exp();
                    if w > 0.0 {
                        acc += w * f(&[x, y]);
                    }
                }
            }
            Ok(acc)
        }
        m => Err(Error::Spec(format!(
            "quadrature supports one or two dimensions, got {m}"
        ))),
    }
}

/// `∫ q_λ(θ) dθ`.
pub fn family_normalization(family: &dyn VariationalFamily) -> Result<f64> {
    integrate_family(family, |_| 1.0)
}

/// `∫ q_{λ,i}(θᵢ) dθᵢ` for the closed-form margin `i`.
pub fn marginal_normalization(family: &dyn VariationalFamily, i: usize) -> Result<f64> {
    let rule = margin_rule(family, i, false)?;
    let mut acc = 0.0;
    for (&x, &lw) in rule.nodes.iter().zip(&rule.log_weights) {
        acc += (family.marginal_log_density(i, x)? + lw).exp();
    }
    Ok(acc)
}

/// Grid approximation of a one- or two-dimensional posterior.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadPosterior {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub points: usize,
    /// Normalized log density on the grid, row-major with the last axis fastest.
    pub log_density: Vec<f64>,
    /// `log ∫ g`.
    pub log_evidence: f64,
    pub mean: Vec<f64>,
    /// Row-major `dim × dim`.
    pub cov: Vec<f64>,
    /// Third standardized moment per axis.
    pub skew: Vec<f64>,
}

impl QuadPosterior {
    pub fn sd(&self) -> Vec<f64> {
        let d = self.mean.len();
        (0..d).map(|i| self.cov[i * d + i].sqrt()).collect()
    }
}

/// Newton ascent on `log g` with a finite-difference Hessian.
pub fn find_mode(target: &dyn TargetModel, start: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let m = target.dim();
    let mut x = start.to_vec();
    let mut fx = target.log_g(&x);
    let hessian = |x: &[f64]| -> DMatrix<f64> {
        let cols: Vec<Vec<f64>> = (0..m)
            .map(|i| fd_gradient(|v| target.grad_log_g(v)[i], x, 1e-5))
            .collect();
        let h = DMatrix::from_fn(m, m, |i, j| cols[i][j]);
        (&h + h.transpose()) * 0.5
    };
    for _ in 0..200 {
        let g = DVector::from_vec(target.grad_log_g(&x));
        if g.amax() < 1e-10 {
            break;
        }
        let neg_h = -hessian(&x);
        let dir = match neg_h.clone().cholesky() {
            Some(c) => c.solve(&g),
            None => g.clone(),
        };
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, d)| a + t * d).collect();
            let fc = target.log_g(&cand);
            if fc.is_finite() && fc >= fx - 1e-12 * fx.abs() {
                x = cand;
                fx = fc;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return Err(Error::Numerical(
                    "line search failed while locating the mode".into(),
                ));
            }
        }
    }
    let h = hessian(&x);
    Ok((x, h))
}

fn grid_pass(
    target: &dyn TargetModel,
    lower: &[f64],
    upper: &[f64],
    points: usize,
) -> (Vec<f64>, f64, Vec<Vec<f64>>) {
    let d = lower.len();
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            (0..points)
                .map(|j| lower[i] + (upper[i] - lower[i]) * j as f64 / (points - 1) as f64)
                .collect()
        })
        .collect();
    let trap = |j: usize| {
        if j == 0 || j == points - 1 {
            0.5f64.ln()
        } else {
            0.0
        }
    };
    let cell: f64 = (0..d)
        .map(|i| ((upper[i] - lower[i]) / (points - 1) as f64).ln())
        .sum();
    let mut table = Vec::with_capacity(points.pow(d as u32));
    let mut weighted = Vec::with_capacity(table.capacity());
    if d == 1 {
        for j in 0..points {
            let lg = target.log_g(&[axes[0][j]]);
            table.push(lg);
            weighted.push(lg + trap(j) + cell);
        }
    } else {
        for a in 0..points {
            for b in 0..points {
                let lg = target.log_g(&[axes[0][a], axes[1][b]]);
                table.push(lg);
                weighted.push(lg + trap(a) + trap(b) + cell);
            }
        }
    }
    let log_mass = log_sum_exp(weighted);
    for t in &mut table {
        *t -= log_mass;
    }
    (table, log_mass, axes)
}

/// Posterior moments of a one- or two-dimensional target by trapezoid rule.
///
/// The grid starts at the mode ± 10 Laplace standard deviations and widens
/// until the total mass changes by less than `1e-6`.
pub fn quad_posterior(target: &dyn TargetModel, points: usize) -> Result<QuadPosterior> {
    let d = target.dim();
    if !(1..=2).contains(&d) {
        return Err(Error::Spec(format!(
            "quadrature posterior needs dimension 1 or 2, got {d}"
        )));
    }
    if points < 11 {
        return Err(Error::InvalidParameter(
            "quadrature needs at least 11 points per axis".into(),
        ));
    }
    let (mode, h) = find_mode(target, &vec![0.0; d])?;
    let cov = (-h).try_inverse().ok_or(Error::NotPositiveDefinite)?;
    let sd: Vec<f64> = (0..d).map(|i| cov[(i, i)].max(1e-12).sqrt()).collect();

    let mut width = 10.0;
    let bounds = |w: f64| -> (Vec<f64>, Vec<f64>) {
        (
            (0..d).map(|i| mode[i] - w * sd[i]).collect(),
            (0..d).map(|i| mode[i] + w * sd[i]).collect(),
        )
    };
    let (mut lo, mut hi) = bounds(width);
    let (mut table, mut log_mass, mut axes) = grid_pass(target, &lo, &hi, points);
    let mut converged = false;
    for _ in 0..6 {
        width *= 1.5;
        let (lo2, hi2) = bounds(width);
        let (t2, m2, a2) = grid_pass(target, &lo2, &hi2, points);
        let change = (m2 - log_mass).exp_m1().abs();
        if change < 1e-6 {
            converged = true;
            break;
        }
        lo = lo2;
        hi = hi2;
        table = t2;
        log_mass = m2;
        axes = a2;
    }
    if !converged {
        return Err(Error::BoundsTooSmall(width));
    }

    // moments from the normalized trapezoid weights
    let trap = |j: usize| if j == 0 || j == points - 1 { 0.5 } else { 1.0 };
    let cell: f64 = (0..d)
        .map(|i| (hi[i] - lo[i]) / (points - 1) as f64)
        .product();
    let mut coords: Vec<Vec<f64>> = Vec::with_capacity(table.len());
    let mut weights: Vec<f64> = Vec::with_capacity(table.len());
    if d == 1 {
        for j in 0..points {
            coords.push(vec![axes[0][j]]);
            weights.push(table[j].exp() * trap(j) * cell);
        }
    } else {
        for a in 0..points {
            for b in 0..points {
                coords.push(vec![axes[0][a], axes[1][b]]);
                weights.push(table[a * points + b].exp() * trap(a) * trap(b) * cell);
            }
        }
    }
    let total: f64 = weights.iter().sum();
    let mut mean = vec![0.0; d];
    for (c, w) in coords.iter().zip(&weights) {
        for i in 0..d {
            mean[i] += w * c[i] / total;
        }
    }
    let mut cov = vec![0.0; d * d];
    let mut third = vec![0.0; d];
    for (c, w) in coords.iter().zip(&weights) {
        for i in 0..d {
            let di = c[i] - mean[i];
            third[i] += w * di.powi(3) / total;
            for j in 0..d {
                cov[i * d + j] += w * di * (c[j] - mean[j]) / total;
            }
        }
    }
    let skew = (0..d)
        .map(|i| third[i] / cov[i * d + i].powf(1.5))
        .collect();
    Ok(QuadPosterior {
        lower: lo,
        upper: hi,
        points,
        log_density: table,
        log_evidence: log_mass,
        mean,
        cov,
        skew,
    })
}
