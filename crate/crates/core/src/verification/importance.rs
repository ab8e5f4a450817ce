//! Self-normalized importance sampling with a fitted family as proposal.
//!
//! Used as a rough reference where grid quadrature is out of reach. In
//! high dimension the weights degenerate quickly, so the effective sample
//! size is reported alongside every estimate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::instances::normal_vec;
use super::quadrature::log_sum_exp;
use crate::error::{Error, Result};
use crate::family::{Family, VariationalFamily};
use crate::targets::TargetModel;

const CHUNK: usize = 4096;
/// Far from the streams used by the optimizer and the moment tables.
const STREAM_BASE: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReference {
    pub n_draws: usize,
    /// Draws whose weight or `θ` was not finite; they get weight zero.
    pub dropped: usize,
    /// `(Σw)² / Σw²`.
    pub ess: f64,
    /// `log` of the mean unnormalized weight, an estimate of `log Z`.
    pub log_evidence: f64,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub skew: Vec<f64>,
}

fn chunk_rng(seed: u64, c: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_BASE + c as u64);
    rng
}

/// Draws `θ ~ q` for chunk `c` and hands each finite `(θ, log w)` to `f`.
fn for_each_draw(
    family: &Family,
    target: &dyn TargetModel,
    n_draws: usize,
    seed: u64,
    c: usize,
    mut f: impl FnMut(&[f64], f64),
) -> Result<usize> {
    let mut rng = chunk_rng(seed, c);
    let mut dropped = 0;
    for _ in 0..CHUNK.min(n_draws - c * CHUNK) {
        let draw = family.draw(&normal_vec(&mut rng, family.noise_len()))?;
        let lw = target.log_g(&draw.theta) - family.log_density_at(&draw);
        if lw.is_finite() && draw.theta.iter().all(|v| v.is_finite()) {
            f(&draw.theta, lw);
        } else {
            dropped += 1;
        }
    }
    Ok(dropped)
}

/// Weighted mean, sd and skewness of `θ` under the target, with `family` as
/// the proposal. Two passes over the same draws avoid storing `θ`: the first
/// collects log-weights, the second accumulates rescaled weighted power sums.
/// Results do not depend on the thread count.
pub fn importance_reference(
    family: &Family,
    target: &dyn TargetModel,
    n_draws: usize,
    seed: u64,
) -> Result<ImportanceReference> {
    let m = family.dim();
    if target.dim() != m {
        return Err(Error::DimensionMismatch {
            expected: target.dim(),
            actual: m,
            context: "proposal dimension",
        });
    }
    let n_chunks = n_draws.div_ceil(CHUNK);

    let firsts: Vec<(f64, Vec<f64>, usize)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut lws = Vec::with_capacity(CHUNK);
            let dropped = for_each_draw(family, target, n_draws, seed, c, |_, lw| lws.push(lw))?;
            let max = lws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok((max, lws, dropped))
        })
        .collect::<Result<_>>()?;
    let max = firsts.iter().map(|f| f.0).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NonFinite("importance weights"));
    }
    let dropped = firsts.iter().map(|f| f.2).sum();
    let log_evidence =
        log_sum_exp(firsts.iter().flat_map(|f| f.1.iter().copied())) - (n_draws as f64).ln();

    // per chunk: Σw, Σw², then Σw·θᵢ, Σw·θᵢ², Σw·θᵢ³ about a fixed shift
    let shift = family.draw(&vec![0.0; family.noise_len()])?.theta;
    let seconds: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut s = vec![0.0; 2 + 3 * m];
            for_each_draw(family, target, n_draws, seed, c, |theta, lw| {
                let w = (lw - max).exp();
                s[0] += w;
                s[1] += w * w;
                for i in 0..m {
                    let x = theta[i] - shift[i];
                    s[2 + 3 * i] += w * x;
                    s[3 + 3 * i] += w * x * x;
                    s[4 + 3 * i] += w * x * x * x;
                }
            })?;
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let mut s = vec![0.0; 2 + 3 * m];
    for chunk in &seconds {
        s.iter_mut().zip(chunk).for_each(|(a, b)| *a += b);
    }

    let (mut mean, mut sd, mut skew) = (
        Vec::with_capacity(m),
        Vec::with_capacity(m),
        Vec::with_capacity(m),
    );
    for i in 0..m {
        let e1 = s[2 + 3 * i] / s[0];
        let e2 = s[3 + 3 * i] / s[0];
        let e3 = s[4 + 3 * i] / s[0];
        let m2 = (e2 - e1 * e1).max(0.0);
        mean.push(shift[i] + e1);
        sd.push(m2.sqrt());
        skew.push((e3 - 3.0 * e1 * e2 + 2.0 * e1 * e1 * e1) / m2.powf(1.5));
    }
    Ok(ImportanceReference {
        n_draws,
        dropped,
        ess: s[0] * s[0] / s[1],
        log_evidence,
        mean,
        sd,
        skew,
    })
}
