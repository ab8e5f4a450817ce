//! Registered verification checks, run by the test suite and the `verify`
//! command.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fd::{fd_gradient, rel_error, FdConfig};
use super::instances::{normal_vec, random_instance, InstanceOptions, SmoothTestTarget};
use super::quadrature::{family_normalization, marginal_normalization, LineRule};
use crate::error::Result;
use crate::family::{Family, FamilySpec, VariationalFamily};
use crate::special::logit;
use crate::targets::{
    synthetic, GaussianToy, LogisticRegression, MixedLogistic, MixedPriors, TargetModel,
};
use crate::transforms::{TransformKind, TransformParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub instances: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckReport {
    fn new(name: &str, instances: usize, max_error: f64, tolerance: f64) -> Self {
        CheckReport {
            name: name.to_string(),
            instances,
            max_error,
            tolerance,
            passed: instances > 0 && max_error < tolerance,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerificationReport {
    pub seed: u64,
    pub instances: usize,
    pub checks: Vec<CheckReport>,
    pub all_passed: bool,
}

type CheckFn = fn(usize, u64, &FdConfig) -> Result<Vec<CheckReport>>;

/// Name and entry point of every registered check group.
pub fn registry() -> Vec<(&'static str, CheckFn)> {
    vec![
        ("transform_bundle", transform_bundle as CheckFn),
        ("transform_param_map", transform_param_map),
        ("gc_grad_theta", gc_grad_theta),
        ("gc_reparam_grad", gc_reparam_grad),
        ("gc_score_grad", gc_score_grad),
        ("gc_pathwise", gc_pathwise),
        ("sn_grad_theta", sn_grad_theta),
        ("sn_vjp", sn_vjp_blocks),
        ("target_gradients", target_gradients),
        ("normalization", normalization),
        ("marginal_consistency", marginal_consistency),
    ]
}

/// Runs every check group whose name contains `filter` (all when `None`).
pub fn run_checks(filter: Option<&str>, instances: usize, seed: u64) -> Result<VerificationReport> {
    let cfg = FdConfig::default();
    let mut checks = Vec::new();
    for (i, (name, f)) in registry().into_iter().enumerate() {
        if filter.is_some_and(|p| !name.contains(p)) {
            continue;
        }
        checks.extend(f(instances, seed.wrapping_add(i as u64 * 7919), &cfg)?);
    }
    let all_passed = !checks.is_empty() && checks.iter().all(|c| c.passed);
    Ok(VerificationReport {
        seed,
        instances,
        checks,
        all_passed,
    })
}

fn family(spec: FamilySpec, lambda: &[f64]) -> Option<Family> {
    Family::from_lambda(spec, lambda).ok()
}

fn random_transform(rng: &mut ChaCha8Rng) -> TransformParams {
    if rng.random_bool(0.5) {
        TransformParams::yeo_johnson(rng.random_range(0.3..1.7)).unwrap()
    } else {
        let g = if rng.random_bool(0.15) {
            0.0
        } else {
            rng.random_range(-0.5..0.5)
        };
        TransformParams::inverse_gh(g, rng.random_range(0.01..0.5)).unwrap()
    }
}

fn with_param(p: &TransformParams, j: usize, delta: f64) -> TransformParams {
    let mut v = p.values();
    v[j] += delta;
    match p.kind() {
        TransformKind::YeoJohnson => TransformParams::yeo_johnson(v[0]).unwrap(),
        TransformKind::InverseGh => TransformParams::inverse_gh(v[0], v[1]).unwrap(),
        TransformKind::Identity => *p,
    }
}

fn transform_bundle(n: usize, seed: u64, cfg: &FdConfig) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = cfg.h;
    let mut worst = 0.0f64;
    for _ in 0..n {
        let p = random_transform(&mut rng);
        let mut psi: f64 = rng.random_range(-3.0..3.0);
        if psi.abs() < 0.05 {
            psi += 0.1f64.copysign(psi);
        }
        let b = p.derivatives(psi);
        let theta = b.theta;
        let fwd = |q: &TransformParams, x: f64| q.forward(x).unwrap_or(f64::NAN);
        let tprime_at = |q: &TransformParams, x: f64| q.derivatives(fwd(q, x)).tprime;
        let mut pairs = vec![
            (
                b.dtheta_dpsi,
                (p.inverse(psi + h) - p.inverse(psi - h)) / (2.0 * h),
            ),
            (
                b.d2theta_dpsi2,
                (p.derivatives(psi + h).dtheta_dpsi - p.derivatives(psi - h).dtheta_dpsi)
                    / (2.0 * h),
            ),
            (
                b.tprime,
                (fwd(&p, theta + h) - fwd(&p, theta - h)) / (2.0 * h),
            ),
            (
                b.d2psi_dtheta2,
                (tprime_at(&p, theta + h) - tprime_at(&p, theta - h)) / (2.0 * h),
            ),
            (b.dlog_tprime_dtheta, b.d2psi_dtheta2 / b.tprime),
        ];
        for j in 0..p.kind().n_params() {
            let (pp, pm) = (with_param(&p, j, h), with_param(&p, j, -h));
            pairs.push((
                b.dtheta_dparam[j],
                (pp.inverse(psi) - pm.inverse(psi)) / (2.0 * h),
            ));
            pairs.push((
                b.dpsi_dparam[j],
                (fwd(&pp, theta) - fwd(&pm, theta)) / (2.0 * h),
            ));
            pairs.push((
                b.dtprime_dparam[j],
                (tprime_at(&pp, theta) - tprime_at(&pm, theta)) / (2.0 * h),
            ));
        }
        for (a, f) in pairs {
            worst = worst.max(rel_error(&[a], &[f]));
        }
    }
    Ok(vec![CheckReport::new(
        "transform_bundle",
        n,
        worst,
        cfg.tol,
    )])
}

fn transform_param_map(n: usize, seed: u64, cfg: &FdConfig) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let kind = if rng.random_bool(0.5) {
            TransformKind::YeoJohnson
        } else {
            TransformKind::InverseGh
        };
        let u: Vec<f64> = (0..kind.n_params())
            .map(|_| rng.random_range(-4.0..4.0))
            .collect();
        let jac = TransformParams::from_unconstrained(kind, &u)?.unconstrained_jacobian();
        for j in 0..kind.n_params() {
            let fd = fd_gradient(
                |v| {
                    TransformParams::from_unconstrained(kind, v)
                        .map(|t| t.values()[j])
                        .unwrap_or(f64::NAN)
                },
                &u,
                cfg.h,
            );
            worst = worst.max(rel_error(&[jac[j]], &[fd[j]]));
        }
    }
    Ok(vec![CheckReport::new(
        "transform_param_map",
        n,
        worst,
        cfg.tol,
    )])
}

/// Shared loop for `θ`-gradient checks.
fn grad_theta_check(
    name: &str,
    skew: bool,
    n: usize,
    seed: u64,
    cfg: &FdConfig,
) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = InstanceOptions::new(skew);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let (spec, lambda) = random_instance(&mut rng, &opts);
        let fam = Family::from_lambda(spec, &lambda)?;
        let eps = normal_vec(&mut rng, spec.noise_len());
        let theta = fam.draw(&eps)?.theta;
        let analytic = fam.grad_theta(&theta)?;
        let fd = fd_gradient(|t| fam.log_density(t).unwrap_or(f64::NAN), &theta, cfg.h);
        worst = worst.max(rel_error(&analytic, &fd));
    }
    Ok(vec![CheckReport::new(name, n, worst, cfg.tol)])
}

fn gc_grad_theta(n: usize, seed: u64, cfg: &FdConfig) -> Result<Vec<CheckReport>> {
    grad_theta_check("gc_grad_theta", false, n, seed, cfg)
}

fn sn_grad_theta(n: usize, seed: u64, cfg: &FdConfig) -> Result<Vec<CheckReport>> {
    grad_theta_check("sn_grad_theta", true, n, seed, cfg)
}

/// `λ ↦ θ(ε, λ)ᵀ w`.
fn draw_dot(spec: FamilySpec, lambda: &[f64], eps: &[f64], w: &[f64]) -> f64 {
    match family(spec, lambda).and_then(|f| f.draw(eps).ok()) {
        Some(d) => d.theta.iter().zip(w).map(|(a, b)| a * b).sum(),
        None => f64::NAN,
    }
}

fn gc_reparam_grad(n: usize, seed: u64, cfg: &FdConfig) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = InstanceOptions::new(false);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let (spec, lambda) = random_instance(&mut rng, &opts);
        let fam = Family::from_lambda(spec, &lambda)?;
        let eps = normal_vec(&mut rng, spec.noise_len());
        let w = normal_vec(&mut rng, spec.m);
        let draw = fam.draw(&eps)?;
        let analytic = fam.vjp(&eps, &draw, &w);
        let fd = fd_gradient(|l| draw_dot(spec, l, &eps, &w), &lambda, cfg.h);
        worst = worst.max(rel_error(&analytic, &fd));
    }
    Ok(vec![CheckReport::new("gc_reparam_grad", n, worst, cfg.tol)])
}

fn gc_score_grad(n: usize, seed: u64, cfg: &FdConfig) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = InstanceOptions::new(false);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let (spec, lambda) = random_instance(&mut rng, &opts);
        let fam = Family::from_lambda(spec, &lambda)?;
        let eps = normal_vec(&mut rng, spec.noise_len());
        let theta = fam.draw(&eps)?.theta;
        let analytic = fam.score(&theta)?;
        let fd = fd_gradient(
            |l| {
                family(spec, l)
                    .and_then(|f| f.log_density(&theta).ok())
                    .unwrap_or(f64::NAN)
            },
            &lambda,
            cfg.h,
        );
        worst = worst.max(rel_error(&analytic, &fd));
    }
    Ok(vec![CheckReport::new("gc_score_grad", n, worst, cfg.tol)])
}

/// Total derivative of `λ ↦ log g(h(ε,λ)) − log q_λ(h(ε,λ))`, which equals
/// `(∂θ/∂λ)ᵀ w − ∇_λ log q_λ(θ)`.
fn gc_pathwise(n: usize, seed: u64, cfg: &FdConfig) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = InstanceOptions::new(false);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let (spec, lambda) = random_instance(&mut rng, &opts);
        let target = SmoothTestTarget::random(&mut rng, spec.m);
        let fam = Family::from_lambda(spec, &lambda)?;
        let eps = normal_vec(&mut rng, spec.noise_len());
        let draw = fam.draw(&eps)?;
        let gq = fam.grad_theta_at(&draw);
        let w: Vec<f64> = target
            .grad_log_g(&draw.theta)
            .iter()
            .zip(&gq)
            .map(|(a, b)| a - b)
            .collect();
        let score = fam.score_at(&draw)?;
        let analytic: Vec<f64> = fam
            .vjp(&eps, &draw, &w)
            .iter()
            .zip(&score)
            .map(|(a, s)| a - s)
            .collect();
        let fd = fd_gradient(
            |l| match family(spec, l).and_then(|f| f.draw(&eps).ok().map(|d| (f, d))) {
                Some((f, d)) => target.log_g(&d.theta) - f.log_density_at(&d),
                None => f64::NAN,
            },
            &lambda,
            cfg.h,
        );
        worst = worst.max(rel_error(&analytic, &fd));
    }
    Ok(vec![CheckReport::new("gc_pathwise", n, worst, cfg.tol)])
}

fn sn_vjp_blocks(n: usize, seed: u64, cfg: &FdConfig) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opts = InstanceOptions::new(true);
    opts.min_k = 1;
    opts.kinds = vec![TransformKind::YeoJohnson, TransformKind::InverseGh];
    let names = [
        "sn_vjp_mu",
        "sn_vjp_b",
        "sn_vjp_d",
        "sn_vjp_alpha",
        "sn_vjp_gamma",
    ];
    let mut worst = [0.0f64; 5];
    for _ in 0..n {
        let (spec, lambda) = random_instance(&mut rng, &opts);
        let fam = Family::from_lambda(spec, &lambda)?;
        let eps = normal_vec(&mut rng, spec.noise_len());
        let w = normal_vec(&mut rng, spec.m);
        let draw = fam.draw(&eps)?;
        let analytic = fam.vjp(&eps, &draw, &w);
        let fd = fd_gradient(|l| draw_dot(spec, l, &eps, &w), &lambda, cfg.h);
        let layout = spec.layout();
        let blocks = [layout.mu, layout.b, layout.d, layout.alpha, layout.gamma];
        for (slot, r) in worst.iter_mut().zip(blocks) {
            *slot = slot.max(rel_error(&analytic[r.clone()], &fd[r]));
        }
    }
    Ok(names
        .iter()
        .zip(worst)
        .map(|(name, e)| CheckReport::new(name, n, e, cfg.tol))
        .collect())
}

fn target_gradients(n: usize, seed: u64, cfg: &FdConfig) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut logistic = 0.0f64;
    let mut mixed = 0.0f64;
    let mut toy = 0.0f64;
    for _ in 0..n {
        let beta = normal_vec(&mut rng, 5);
        let data = synthetic::logistic_dataset(20, &beta, rng.random())?;
        let t = LogisticRegression::new(data, 10.0)?;
        let x = normal_vec(&mut rng, 5);
        logistic = logistic.max(rel_error(
            &t.grad_log_g(&x),
            &fd_gradient(|v| t.log_g(v), &x, cfg.h),
        ));

        let xm = DMatrix::from_fn(
            8,
            2,
            |i, j| if j == 0 { 1.0 } else { (i as f64 - 3.5) / 2.0 },
        );
        let y: Vec<f64> = (0..8)
            .map(|_| f64::from(rng.random_bool(0.5) as u8))
            .collect();
        let subjects = vec![0, 0, 0, 1, 1, 2, 2, 2];
        let t = MixedLogistic::new(xm, y, subjects, 3, MixedPriors::default())?;
        let x: Vec<f64> = normal_vec(&mut rng, t.dim())
            .iter()
            .map(|v| 0.5 * v)
            .collect();
        mixed = mixed.max(rel_error(
            &t.grad_log_g(&x),
            &fd_gradient(|v| t.log_g(v), &x, cfg.h),
        ));

        let rho = rng.random_range(-0.9..0.9);
        let t = GaussianToy::correlated_pair(rho, 0.0)?;
        let x = normal_vec(&mut rng, 2);
        toy = toy.max(rel_error(
            &t.grad_log_g(&x),
            &fd_gradient(|v| t.log_g(v), &x, cfg.h),
        ));
    }
    Ok(vec![
        CheckReport::new("logistic_grad", n, logistic, 1e-7),
        CheckReport::new("mixed_logistic_grad", n, mixed, 1e-6),
        CheckReport::new("gaussian_toy_grad", n, toy, 1e-7),
    ])
}

/// One-dimensional instance with random location, scale, skew and transform.
fn random_1d(rng: &mut ChaCha8Rng, skew: bool) -> (FamilySpec, Vec<f64>) {
    let kinds = [
        TransformKind::Identity,
        TransformKind::YeoJohnson,
        TransformKind::InverseGh,
    ];
    let kind = kinds[rng.random_range(0..3)];
    let spec = FamilySpec::new(1, 0, kind, skew).expect("valid");
    let mut lambda = vec![rng.random_range(-2.0..2.0), rng.random_range(0.2..2.0)];
    if skew {
        lambda.push(rng.random_range(-5.0..5.0));
    }
    match kind {
        TransformKind::Identity => {}
        TransformKind::YeoJohnson => lambda.push(logit(rng.random_range(0.2..1.8) / 2.0)),
        TransformKind::InverseGh => {
            lambda.push(rng.random_range(-0.6..0.6));
            lambda.push(logit(rng.random_range(0.01..0.5)));
        }
    }
    (spec, lambda)
}

fn normalization(n: usize, seed: u64, _cfg: &FdConfig) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_1d = 0.0f64;
    for i in 0..n {
        let (spec, lambda) = random_1d(&mut rng, i % 2 == 1);
        let fam = Family::from_lambda(spec, &lambda)?;
        worst_1d = worst_1d.max((family_normalization(&fam)? - 1.0).abs());
    }
    let n2 = (n / 25).max(2);
    let mut worst_2d = 0.0f64;
    let mut opts = InstanceOptions::new(false);
    opts.max_m = 2;
    opts.min_k = 2;
    for i in 0..n2 {
        opts.skew = i % 2 == 1;
        let (spec, lambda) = random_instance(&mut rng, &opts);
        let fam = Family::from_lambda(spec, &lambda)?;
        worst_2d = worst_2d.max((family_normalization(&fam)? - 1.0).abs());
    }
    Ok(vec![
        CheckReport::new("normalization_1d", n, worst_1d, 1e-5),
        CheckReport::new("normalization_2d", n2, worst_2d, 1e-5),
    ])
}

/// Closed-form margins against the joint density: exact agreement when
/// `m = 1`, and against numerical marginalization when `m = 2`.
fn marginal_consistency(n: usize, seed: u64, _cfg: &FdConfig) -> Result<Vec<CheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_1d = 0.0f64;
    for i in 0..n {
        let (spec, lambda) = random_1d(&mut rng, i % 2 == 0);
        let fam = Family::from_lambda(spec, &lambda)?;
        let theta = fam.draw(&normal_vec(&mut rng, spec.noise_len()))?.theta;
        let a = fam.marginal_log_density(0, theta[0])?;
        let b = fam.log_density(&theta)?;
        worst_1d = worst_1d.max((a - b).abs());
    }
    let n2 = (n / 10).max(2);
    let mut worst_2d = 0.0f64;
    let mut opts = InstanceOptions::new(false);
    opts.max_m = 2;
    opts.min_k = 2;
    for i in 0..n2 {
        opts.skew = i % 2 == 0;
        let (spec, lambda) = random_instance(&mut rng, &opts);
        let fam = Family::from_lambda(spec, &lambda)?;
        worst_2d = worst_2d.max((marginal_normalization(&fam, 1)? - 1.0).abs());
        let theta = fam.draw(&normal_vec(&mut rng, spec.noise_len()))?.theta;
        let x0 = theta[0];
        let split = if spec.transform == TransformKind::YeoJohnson {
            0.0
        } else {
            theta[1]
        };
        let rule = LineRule::standard(split, 1.0);
        let mut integral = 0.0;
        for (&y, &lw) in rule.nodes.iter().zip(&rule.log_weights) {
            integral += (fam.log_density(&[x0, y])? + lw).exp();
        }
        let closed = fam.marginal_log_density(0, x0)?.exp();
        worst_2d = worst_2d.max((integral - closed).abs() / closed.max(1e-12));
    }
    Ok(vec![
        CheckReport::new("marginal_equals_joint_1d", n, worst_1d, 1e-12),
        CheckReport::new("marginal_vs_integrated_2d", n2, worst_2d, 1e-6),
    ])
}
