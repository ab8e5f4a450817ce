//! Running experiments and summarizing fitted families.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{BuiltTarget, ExperimentSpec};
use super::float;
use crate::error::{Error, Result};
use crate::family::{Family, FamilyLabel, FamilySpec, VariationalFamily};
use crate::optimizer::{initial_lambda, run, RunTrace};
use crate::verification::instances::normal_vec;
use crate::verification::{importance_reference, quad_posterior, ImportanceReference};

const MOMENT_CHUNK: usize = 4096;
/// Moment draws use streams from here on; stream 0 drives the optimizer and
/// stream 1 the initial `λ`.
const MOMENT_STREAM: u64 = 2;
const DEFAULT_MARGINALS: usize = 8;
const ORACLE_POINTS: usize = 201;

/// Mean, standard deviation and Pearson skewness of one coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub coord: usize,
    #[serde(with = "float")]
    pub mean: f64,
    #[serde(with = "float")]
    pub sd: f64,
    #[serde(with = "float")]
    pub skew: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalCurve {
    pub coord: usize,
    pub theta: Vec<f64>,
    pub density: Vec<f64>,
}

/// Quadrature posterior moments next to the fitted family's.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    #[serde(with = "float")]
    pub log_evidence: f64,
    pub oracle: Vec<MomentRow>,
    pub family: Vec<MomentRow>,
}

/// Everything computed from a fitted `λ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub moment_seed: u64,
    pub moment_draws: usize,
    /// Draws dropped from the moment table because they were not finite.
    pub non_finite_draws: usize,
    pub moments: Vec<MomentRow>,
    pub marginals: Vec<MarginalCurve>,
    pub oracle: Option<OracleComparison>,
    /// Importance-sampling reference, computed only when `oracle` is not.
    pub importance: Option<ImportanceReference>,
}

#[derive(Clone, Debug)]
pub struct ResultBundle {
    pub spec: ExperimentSpec,
    pub spec_hash: String,
    pub family: FamilySpec,
    pub target: String,
    pub trace: RunTrace,
    pub log_evidence: Option<f64>,
    pub analysis: Analysis,
}

/// What goes into `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub spec_hash: String,
    pub spec: ExperimentSpec,
    pub family: FamilySpec,
    pub label: Option<FamilyLabel>,
    pub target: String,
    pub n_params: usize,
    pub n_steps: usize,
    #[serde(with = "float")]
    pub window_average: f64,
    #[serde(with = "float")]
    pub ms_per_1000_steps: f64,
    pub flagged_steps: usize,
    pub healthy: bool,
    #[serde(with = "float::option")]
    pub log_evidence: Option<f64>,
    /// `log Z − window average`; an upper bound on the KL gap up to noise.
    #[serde(with = "float::option")]
    pub ceiling_gap: Option<f64>,
    pub lambda_checksum: String,
    pub analysis: Analysis,
}

impl ResultBundle {
    pub fn n_params(&self) -> usize {
        self.family.param_count()
    }

    pub fn window_average(&self) -> f64 {
        self.trace.window_average
    }

    pub fn ceiling_gap(&self) -> Option<f64> {
        self.log_evidence.map(|c| c - self.trace.window_average)
    }

    pub fn summary(&self) -> Summary {
        Summary {
            spec_hash: self.spec_hash.clone(),
            spec: self.spec.clone(),
            family: self.family,
            label: self.family.label(),
            target: self.target.clone(),
            n_params: self.n_params(),
            n_steps: self.trace.elbo.len(),
            window_average: self.trace.window_average,
            ms_per_1000_steps: self.trace.ms_per_1000_steps(),
            flagged_steps: self.trace.flagged_steps,
            healthy: self.trace.healthy,
            log_evidence: self.log_evidence,
            ceiling_gap: self.ceiling_gap(),
            lambda_checksum: lambda_checksum(&self.trace.final_lambda),
            analysis: self.analysis.clone(),
        }
    }
}

/// First 16 hex digits of the SHA-256 of the little-endian bytes of `λ`.
pub fn lambda_checksum(lambda: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in lambda {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())[..16].to_string()
}

/// Fits the family described by `spec` and summarizes the result.
///
/// An unhealthy run is reported through `trace.healthy`, not as an error.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultBundle> {
    let spec = spec.normalized();
    let built = spec.build_target()?;
    let target = built.model();
    let family = spec.family_spec(target.dim())?;
    let config = spec.optimizer_config();
    let lambda0 = initial_lambda(&family, None, spec.seed)?;
    let trace = run(family, target, &config, lambda0)?;
    let analysis = analyze(&spec, &built, family, &trace.final_lambda)?;
    let log_evidence = target
        .log_evidence()
        .or_else(|| analysis.oracle.as_ref().map(|o| o.log_evidence));
    Ok(ResultBundle {
        spec_hash: spec.hash(),
        target: target.name().to_string(),
        spec,
        family,
        trace,
        log_evidence,
        analysis,
    })
}

/// Moment table, marginal curves and a reference posterior for a fitted `λ`:
/// quadrature for one- or two-dimensional non-hierarchical targets, otherwise
/// importance sampling when `importance_draws > 0`.
pub fn analyze(
    spec: &ExperimentSpec,
    target: &BuiltTarget,
    family_spec: FamilySpec,
    lambda: &[f64],
) -> Result<Analysis> {
    let family = Family::from_lambda(family_spec, lambda)?;
    let m = family.dim();
    let (moments, non_finite) = moment_table(&family, spec.moment_draws, spec.seed)?;

    let coords: Vec<usize> = match &spec.marginal_coords {
        Some(c) => c.clone(),
        None => (0..m.min(DEFAULT_MARGINALS)).collect(),
    };
    let marginals = coords
        .iter()
        .map(|&i| {
            let row = moments.get(i).ok_or(Error::DimensionMismatch {
                expected: m,
                actual: i,
                context: "marginal coordinate",
            })?;
            marginal_curve(
                &family,
                i,
                row.mean - 6.0 * row.sd,
                row.mean + 6.0 * row.sd,
                spec.marginal_points,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let oracle = match target {
        BuiltTarget::Mixed(_) => None,
        _ if m > 2 => None,
        _ => {
            let q = quad_posterior(target.model(), ORACLE_POINTS)?;
            let sd = q.sd();
            let oracle = (0..m)
                .map(|i| MomentRow {
                    coord: i,
                    mean: q.mean[i],
                    sd: sd[i],
                    skew: q.skew[i],
                })
                .collect();
            Some(OracleComparison {
                log_evidence: q.log_evidence,
                oracle,
                family: moments.clone(),
            })
        }
    };

    let importance = match (&oracle, spec.importance_draws) {
        (None, n) if n > 0 => Some(importance_reference(&family, target.model(), n, spec.seed)?),
        _ => None,
    };

    Ok(Analysis {
        moment_seed: spec.seed,
        moment_draws: spec.moment_draws,
        non_finite_draws: non_finite,
        moments,
        marginals,
        oracle,
        importance,
    })
}

/// Sample mean, sd and skewness of `θ` from `n_draws` family draws.
///
/// Draws come in fixed chunks with one random stream each, so the table does
/// not depend on the thread count. Power sums are taken about the draw at
/// `ε = 0` to limit cancellation. Returns the table and the number of
/// non-finite draws left out.
pub fn moment_table(family: &Family, n_draws: usize, seed: u64) -> Result<(Vec<MomentRow>, usize)> {
    let m = family.dim();
    let shift = family.draw(&vec![0.0; family.noise_len()])?.theta;
    let n_chunks = n_draws.div_ceil(MOMENT_CHUNK);
    let partial: Vec<(Vec<f64>, usize, usize)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| -> Result<_> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(MOMENT_STREAM + c as u64);
            let len = MOMENT_CHUNK.min(n_draws - c * MOMENT_CHUNK);
            let mut sums = vec![0.0; 3 * m];
            let (mut used, mut bad) = (0, 0);
            for _ in 0..len {
                let theta = family
                    .draw(&normal_vec(&mut rng, family.noise_len()))?
                    .theta;
                if theta.iter().any(|v| !v.is_finite()) {
                    bad += 1;
                    continue;
                }
                used += 1;
                for i in 0..m {
                    let x = theta[i] - shift[i];
                    sums[3 * i] += x;
                    sums[3 * i + 1] += x * x;
                    sums[3 * i + 2] += x * x * x;
                }
            }
            Ok((sums, used, bad))
        })
        .collect::<Result<_>>()?;

    let mut sums = vec![0.0; 3 * m];
    let (mut n, mut bad) = (0usize, 0usize);
    for (s, used, b) in &partial {
        sums.iter_mut().zip(s).for_each(|(a, b)| *a += b);
        n += used;
        bad += b;
    }
    let nf = n as f64;
    let rows = (0..m)
        .map(|i| {
            let e1 = sums[3 * i] / nf;
            let e2 = sums[3 * i + 1] / nf;
            let e3 = sums[3 * i + 2] / nf;
            let m2 = (e2 - e1 * e1).max(0.0);
            let m3 = e3 - 3.0 * e1 * e2 + 2.0 * e1 * e1 * e1;
            MomentRow {
                coord: i,
                mean: shift[i] + e1,
                sd: (m2 * nf / (nf - 1.0)).sqrt(),
                skew: m3 / m2.powf(1.5),
            }
        })
        .collect();
    Ok((rows, bad))
}

/// Marginal density of coordinate `i` on `points` evenly spaced values.
/// Points where the density cannot be evaluated are NaN.
pub fn marginal_curve(
    family: &Family,
    i: usize,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<MarginalCurve> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) || points < 2 {
        return Err(Error::InvalidParameter(format!(
            "bad marginal grid [{lo}, {hi}] with {points} points"
        )));
    }
    let step = (hi - lo) / (points - 1) as f64;
    let theta: Vec<f64> = (0..points).map(|j| lo + step * j as f64).collect();
    let density = theta
        .iter()
        .map(|&t| {
            family
                .marginal_log_density(i, t)
                .map(f64::exp)
                .unwrap_or(f64::NAN)
        })
        .collect();
    Ok(MarginalCurve {
        coord: i,
        theta,
        density,
    })
}

/// One row of a grid comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub label: Option<FamilyLabel>,
    pub family: String,
    pub spec_hash: String,
    pub n_params: usize,
    #[serde(with = "float")]
    pub window_average: f64,
    #[serde(with = "float")]
    pub minutes_per_1000_steps: f64,
    pub healthy: bool,
}

pub struct GridResult {
    /// Sorted by window-average ELBO, best first; ties keep input order.
    pub rows: Vec<GridRow>,
    /// In input order.
    pub bundles: Vec<ResultBundle>,
}

pub fn family_name(spec: &FamilySpec) -> String {
    let base = if spec.skew { "skew-normal" } else { "gaussian" };
    format!("{base}/{}/k={}", spec.transform.name(), spec.k)
}

/// Runs experiments that share a target, at most `workers` at a time
/// (0 uses the global pool).
pub fn run_grid(specs: &[ExperimentSpec], workers: usize) -> Result<GridResult> {
    let first = specs
        .first()
        .ok_or_else(|| Error::Spec("empty grid".into()))?;
    let key = first.target_key();
    if let Some(other) = specs.iter().find(|s| s.target_key() != key) {
        return Err(Error::Spec(format!(
            "grid entries must share a target: '{key}' vs '{}'",
            other.target_key()
        )));
    }
    let go = || {
        specs
            .par_iter()
            .map(run_experiment)
            .collect::<Result<Vec<_>>>()
    };
    let bundles = if workers == 0 {
        go()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Spec(format!("cannot start worker pool: {e}")))?
            .install(go)?
    };
    let mut rows: Vec<GridRow> = bundles
        .iter()
        .map(|b| GridRow {
            label: b.family.label(),
            family: family_name(&b.family),
            spec_hash: b.spec_hash.clone(),
            n_params: b.n_params(),
            window_average: b.window_average(),
            minutes_per_1000_steps: b.trace.ms_per_1000_steps() / 60_000.0,
            healthy: b.trace.healthy,
        })
        .collect();
    rows.sort_by(|a, b| b.window_average.total_cmp(&a.window_average));
    Ok(GridResult { rows, bundles })
}
