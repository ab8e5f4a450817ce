//! Stochastic gradient ascent on the ELBO with ADADELTA step sizes.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{Family, FamilySpec, VariationalFamily};
use crate::targets::TargetModel;
use crate::verification::instances::normal_vec;

/// Gradient estimator of `∇_λ L`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// `(∂θ/∂λ)ᵀ (∇_θ log g − ∇_θ log q)`. The score term, which has zero
    /// mean, is left out, so the estimate vanishes exactly when `q` equals the
    /// posterior.
    Reparam,
    /// The full pathwise derivative of `log g(h(ε,λ)) − log q_λ(h(ε,λ))`,
    /// i.e. [`Estimator::Reparam`] minus `∇_λ log q_λ(θ)`. Needs the score.
    ReparamTotal,
    /// `(log g − log q − b) ∇_λ log q_λ(θ)` with a running scalar baseline `b`.
    ScoreWithBaseline,
}

impl Estimator {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "reparam" => Ok(Estimator::Reparam),
            "reparam-total" => Ok(Estimator::ReparamTotal),
            "score" | "score-with-baseline" => Ok(Estimator::ScoreWithBaseline),
            other => Err(Error::Spec(format!("unknown estimator '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Reparam => "reparam",
            Estimator::ReparamTotal => "reparam-total",
            Estimator::ScoreWithBaseline => "score-with-baseline",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub n_steps: usize,
    pub samples_per_step: usize,
    pub seed: u64,
    pub adadelta_rho: f64,
    pub adadelta_eps: f64,
    pub estimator: Estimator,
    pub elbo_window: usize,
    /// Keep a copy of `λ` every this many steps (0 disables).
    pub checkpoint_every: usize,
    /// Decay of the exponential moving average used as the score baseline.
    pub baseline_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            n_steps: 10_000,
            samples_per_step: 1,
            seed: 0,
            adadelta_rho: 0.95,
            adadelta_eps: 1e-6,
            estimator: Estimator::Reparam,
            elbo_window: 1000,
            checkpoint_every: 0,
            baseline_decay: 0.9,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_step == 0 {
            return Err(Error::InvalidParameter(
                "samples per step must be at least 1".into(),
            ));
        }
        if !(self.adadelta_rho > 0.0 && self.adadelta_rho < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "ADADELTA decay must lie in (0, 1), got {}",
                self.adadelta_rho
            )));
        }
        if self.adadelta_eps.is_nan() || self.adadelta_eps <= 0.0 {
            return Err(Error::InvalidParameter(
                "ADADELTA epsilon must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return Err(Error::InvalidParameter(
                "baseline decay must lie in [0, 1)".into(),
            ));
        }
        if self.elbo_window == 0 {
            return Err(Error::InvalidParameter(
                "ELBO window must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Parameters and ADADELTA accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct OptState {
    pub lambda: Vec<f64>,
    pub eg2: Vec<f64>,
    pub edx2: Vec<f64>,
    pub step: usize,
}

impl OptState {
    pub fn new(lambda: Vec<f64>) -> Self {
        let n = lambda.len();
        OptState {
            lambda,
            eg2: vec![0.0; n],
            edx2: vec![0.0; n],
            step: 0,
        }
    }
}

/// One ADADELTA ascent step.
pub fn adadelta_step(state: &mut OptState, grad: &[f64], rho: f64, eps: f64) {
    assert_eq!(grad.len(), state.lambda.len(), "gradient length");
    for j in 0..grad.len() {
        let g = grad[j];
        state.eg2[j] = rho * state.eg2[j] + (1.0 - rho) * g * g;
        let delta = ((state.edx2[j] + eps).sqrt() / (state.eg2[j] + eps).sqrt()) * g;
        state.edx2[j] = rho * state.edx2[j] + (1.0 - rho) * delta * delta;
        state.lambda[j] += delta;
    }
    state.step += 1;
}

/// Per-sample contributions, in sample order.
#[derive(Clone, Debug)]
pub struct GradEstimate {
    pub grad: Vec<f64>,
    /// `log g(θ_s) − log q(θ_s)` per sample.
    pub values: Vec<f64>,
}

impl GradEstimate {
    pub fn elbo(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

fn sample_value(
    family: &dyn VariationalFamily,
    target: &dyn TargetModel,
    eps: &[f64],
) -> Result<f64> {
    let draw = family.draw(eps)?;
    let v = target.log_g(&draw.theta) - family.log_density_at(&draw);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("ELBO sample"))
    }
}

/// `(1/S) Σ_s [log g(θ_s) − log q(θ_s)]`.
pub fn estimate_elbo(
    family: &dyn VariationalFamily,
    target: &dyn TargetModel,
    eps_draws: &[Vec<f64>],
) -> Result<f64> {
    let values: Vec<f64> = eps_draws
        .par_iter()
        .map(|e| sample_value(family, target, e))
        .collect::<Result<_>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Single-sample gradient and ELBO integrand.
pub fn sample_gradient(
    family: &dyn VariationalFamily,
    target: &dyn TargetModel,
    eps: &[f64],
    estimator: Estimator,
    baseline: f64,
) -> Result<(Vec<f64>, f64)> {
    let draw = family.draw(eps)?;
    let (lg, glg) = target.log_g_and_grad(&draw.theta);
    let lq = family.log_density_at(&draw);
    let value = lg - lq;
    if !value.is_finite() {
        return Err(Error::NonFinite("ELBO sample"));
    }
    let grad = match estimator {
        Estimator::Reparam | Estimator::ReparamTotal => {
            let gq = family.grad_theta_at(&draw);
            let w: Vec<f64> = glg.iter().zip(&gq).map(|(a, b)| a - b).collect();
            let mut g = family.vjp(eps, &draw, &w);
            if estimator == Estimator::ReparamTotal {
                for (gi, si) in g.iter_mut().zip(family.score_at(&draw)?) {
                    *gi -= si;
                }
            }
            g
        }
        Estimator::ScoreWithBaseline => {
            let c = value - baseline;
            family.score_at(&draw)?.into_iter().map(|s| c * s).collect()
        }
    };
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    Ok((grad, value))
}

/// Average of [`sample_gradient`] over `eps_draws`.
///
/// Samples are evaluated concurrently and reduced in sample order, so the
/// result does not depend on scheduling.
pub fn estimate_grad(
    family: &dyn VariationalFamily,
    target: &dyn TargetModel,
    eps_draws: &[Vec<f64>],
    estimator: Estimator,
    baseline: f64,
) -> Result<GradEstimate> {
    let per_sample: Vec<(Vec<f64>, f64)> = eps_draws
        .par_iter()
        .map(|e| sample_gradient(family, target, e, estimator, baseline))
        .collect::<Result<_>>()?;
    let s = per_sample.len() as f64;
    let mut grad = vec![0.0; per_sample[0].0.len()];
    let mut values = Vec::with_capacity(per_sample.len());
    for (g, v) in per_sample {
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
        values.push(v);
    }
    grad.iter_mut().for_each(|a| *a /= s);
    Ok(GradEstimate { grad, values })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunTrace {
    pub spec: FamilySpec,
    pub config: OptimizerConfig,
    /// ELBO estimate at every step; NaN for flagged steps.
    pub elbo: Vec<f64>,
    /// Cumulative wallclock in milliseconds after each step.
    pub wallclock_ms: Vec<f64>,
    pub checkpoints: Vec<(usize, Vec<f64>)>,
    pub final_lambda: Vec<f64>,
    pub flagged_steps: usize,
    pub healthy: bool,
    pub window_average: f64,
}

impl RunTrace {
    /// Milliseconds per 1000 steps.
    pub fn ms_per_1000_steps(&self) -> f64 {
        match self.wallclock_ms.last() {
            Some(&t) if !self.elbo.is_empty() => t * 1000.0 / self.elbo.len() as f64,
            _ => 0.0,
        }
    }
}

/// Mean of the finite entries among the last `window` values.
pub fn window_average(elbo: &[f64], window: usize) -> f64 {
    let tail = &elbo[elbo.len().saturating_sub(window)..];
    let finite: Vec<f64> = tail.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        f64::NAN
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    }
}

/// Documented starting point for a run with this seed.
pub fn initial_lambda(spec: &FamilySpec, mu: Option<&[f64]>, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    spec.initial_lambda(mu, &mut rng)
}

/// Runs `config.n_steps` steps of SGA from `lambda0`.
///
/// Steps whose estimate is not finite are skipped (accumulators untouched) and
/// counted; more than 1% of such steps marks the run unhealthy.
pub fn run(
    spec: FamilySpec,
    target: &dyn TargetModel,
    config: &OptimizerConfig,
    lambda0: Vec<f64>,
) -> Result<RunTrace> {
    config.validate()?;
    if target.dim() != spec.m {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            actual: spec.m,
            context: "family dimension",
        });
    }
    if lambda0.len() != spec.param_count() {
        return Err(Error::DimensionMismatch {
            expected: spec.param_count(),
            actual: lambda0.len(),
            context: "initial parameters",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = OptState::new(lambda0);
    let mut elbo = Vec::with_capacity(config.n_steps);
    let mut wallclock = Vec::with_capacity(config.n_steps);
    let mut checkpoints = Vec::new();
    let mut flagged = 0;
    let mut baseline: Option<f64> = None;
    let started = Instant::now();

    for step in 0..config.n_steps {
        let eps: Vec<Vec<f64>> = (0..config.samples_per_step)
            .map(|_| normal_vec(&mut rng, spec.noise_len()))
            .collect();
        let family = Family::from_lambda(spec, &state.lambda)?;
        let estimate = estimate_grad(
            &family,
            target,
            &eps,
            config.estimator,
            baseline.unwrap_or(0.0),
        );
        match estimate {
            Ok(est) => {
                let value = est.elbo();
                adadelta_step(
                    &mut state,
                    &est.grad,
                    config.adadelta_rho,
                    config.adadelta_eps,
                );
                baseline = Some(match baseline {
                    None => value,
                    Some(b) => config.baseline_decay * b + (1.0 - config.baseline_decay) * value,
                });
                elbo.push(value);
            }
            Err(Error::NonFinite(_)) | Err(Error::Numerical(_)) => {
                flagged += 1;
                elbo.push(f64::NAN);
            }
            Err(e) => return Err(e),
        }
        wallclock.push(started.elapsed().as_secs_f64() * 1000.0);
        if config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 {
            checkpoints.push((step + 1, state.lambda.clone()));
        }
    }

    let window_average = window_average(&elbo, config.elbo_window);
    Ok(RunTrace {
        spec,
        config: config.clone(),
        elbo,
        wallclock_ms: wallclock,
        checkpoints,
        final_lambda: state.lambda,
        flagged_steps: flagged,
        healthy: flagged * 100 <= config.n_steps,
        window_average,
    })
}
