//! Random family instances for derivative checks.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::family::FamilySpec;
use crate::special::logit;
use crate::targets::TargetModel;
use crate::transforms::TransformKind;

/// Ranges for random instances.
#[derive(Clone, Debug)]
pub struct InstanceOptions {
    pub max_m: usize,
    pub min_k: usize,
    pub max_k: usize,
    pub kinds: Vec<TransformKind>,
    pub skew: bool,
}

impl InstanceOptions {
    pub fn new(skew: bool) -> Self {
        InstanceOptions {
            max_m: 10,
            min_k: 0,
            max_k: 3,
            kinds: vec![
                TransformKind::Identity,
                TransformKind::YeoJohnson,
                TransformKind::InverseGh,
            ],
            skew,
        }
    }
}

/// A family structure with a random `λ` well inside the parameter domain.
pub fn random_instance<R: Rng + ?Sized>(
    rng: &mut R,
    opts: &InstanceOptions,
) -> (FamilySpec, Vec<f64>) {
    let m = rng.random_range(opts.min_k.max(1)..=opts.max_m);
    let k = rng.random_range(opts.min_k..=opts.max_k.min(m));
    let kind = opts.kinds[rng.random_range(0..opts.kinds.len())];
    let spec = FamilySpec::new(m, k, kind, opts.skew).expect("valid instance");
    let layout = spec.layout();
    let mut lambda = vec![0.0; layout.len()];
    for v in &mut lambda[layout.mu.clone()] {
        *v = rng.random_range(-1.0..1.0);
    }
    for v in &mut lambda[layout.b.clone()] {
        *v = rng.random_range(-0.8..0.8);
    }
    for v in &mut lambda[layout.d.clone()] {
        let s = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        *v = s * rng.random_range(0.3..1.2);
    }
    for v in &mut lambda[layout.alpha.clone()] {
        *v = rng.random_range(-3.0..3.0);
    }
    let np = kind.n_params();
    for chunk in lambda[layout.gamma.clone()].chunks_mut(np.max(1)) {
        match kind {
            TransformKind::Identity => {}
            TransformKind::YeoJohnson => chunk[0] = logit(rng.random_range(0.3..1.7) / 2.0),
            TransformKind::InverseGh => {
                chunk[0] = rng.random_range(-0.5..0.5);
                chunk[1] = logit(rng.random_range(0.01..0.5));
            }
        }
    }
    (spec, lambda)
}

/// Standard-normal noise of length `n`.
pub fn normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Smooth non-Gaussian stand-in for `log g`, used where a check needs a
/// target but the model itself is not under test:
/// `Σᵢ −½ (θᵢ − cᵢ)² / sᵢ + a sin θᵢ`.
#[derive(Clone, Debug)]
pub struct SmoothTestTarget {
    center: Vec<f64>,
    var: Vec<f64>,
    wiggle: f64,
}

impl SmoothTestTarget {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Self {
        SmoothTestTarget {
            center: (0..m).map(|_| rng.random_range(-1.0..1.0)).collect(),
            var: (0..m).map(|_| rng.random_range(0.5..3.0)).collect(),
            wiggle: 0.3,
        }
    }
}

impl TargetModel for SmoothTestTarget {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn name(&self) -> &str {
        "smooth-test"
    }

    fn log_g(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(&self.center)
            .zip(&self.var)
            .map(|((t, c), s)| -0.5 * (t - c).powi(2) / s + self.wiggle * t.sin())
            .sum()
    }

    fn grad_log_g(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(&self.center)
            .zip(&self.var)
            .map(|((t, c), s)| -(t - c) / s + self.wiggle * t.cos())
            .collect()
    }
}
