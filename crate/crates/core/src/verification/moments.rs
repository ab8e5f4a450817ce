//! Monte Carlo moment checks of the latent `ψ` draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::instances::normal_vec;
use crate::error::Result;
use crate::family::{Family, VariationalFamily};

const CHUNK: usize = 8192;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MomentReport {
    pub n_draws: usize,
    pub expected_mean: Vec<f64>,
    pub sample_mean: Vec<f64>,
    pub mean_z: Vec<f64>,
    /// Row-major `m × m`.
    pub expected_cov: Vec<f64>,
    pub sample_cov: Vec<f64>,
    pub cov_z: Vec<f64>,
    pub max_abs_z: f64,
}

impl MomentReport {
    pub fn passed(&self, z_limit: f64) -> bool {
        self.max_abs_z < z_limit
    }
}

/// Expected mean and covariance of `ψ`: `μ + √(2/π) δ̃` and
/// `Σ − (2/π) δ̃δ̃ᵀ` (with `δ̃ = 0` for the Gaussian family).
pub fn expected_psi_moments(family: &Family) -> (Vec<f64>, Vec<f64>) {
    let (mu, scale, dt) = match family {
        Family::Gaussian(g) => (g.mu().clone(), g.scale().dense(), vec![0.0; g.dim()]),
        Family::SkewNormal(s) => (s.mu().clone(), s.scale().dense(), s.derived().delta_tilde),
    };
    let m = mu.len();
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let mean = (0..m).map(|i| mu[i] + c * dt[i]).collect();
    let mut cov = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            cov[i * m + j] = scale[(i, j)] - c * c * dt[i] * dt[j];
        }
    }
    (mean, cov)
}

/// Draws `n_draws` latent vectors and reports z-scores of the sample mean and
/// covariance against [`expected_psi_moments`].
///
/// Draws are generated in fixed-size chunks, each from its own seeded stream,
/// so results do not depend on the thread count.
pub fn moment_check(family: &Family, n_draws: usize, seed: u64) -> Result<MomentReport> {
    let m = family.dim();
    let n_chunks = n_draws.div_ceil(CHUNK);
    let chunks: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| -> Result<Vec<f64>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(n_draws - c * CHUNK);
            let mut out = Vec::with_capacity(len * m);
            for _ in 0..len {
                let eps = normal_vec(&mut rng, family.noise_len());
                out.extend(family.draw(&eps)?.psi);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let draws: Vec<f64> = chunks.concat();
    let n = n_draws as f64;

    let mut mean = vec![0.0; m];
    for row in draws.chunks(m) {
        for i in 0..m {
            mean[i] += row[i];
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);

    // second and fourth central products for covariance standard errors
    let mut cov = vec![0.0; m * m];
    let mut prod_sq = vec![0.0; m * m];
    for row in draws.chunks(m) {
        for i in 0..m {
            let di = row[i] - mean[i];
            for j in 0..m {
                let p = di * (row[j] - mean[j]);
                cov[i * m + j] += p;
                prod_sq[i * m + j] += p * p;
            }
        }
    }
    for v in &mut cov {
        *v /= n - 1.0;
    }

    let (expected_mean, expected_cov) = expected_psi_moments(family);
    let mean_z: Vec<f64> = (0..m)
        .map(|i| (mean[i] - expected_mean[i]) / (cov[i * m + i] / n).sqrt())
        .collect();
    let cov_z: Vec<f64> = (0..m * m)
        .map(|ij| {
            let var_p = prod_sq[ij] / n - (cov[ij] * (n - 1.0) / n).powi(2);
            (cov[ij] - expected_cov[ij]) / (var_p / n).sqrt()
        })
        .collect();
    let max_abs_z = mean_z
        .iter()
        .chain(&cov_z)
        .fold(0.0f64, |a, z| a.max(z.abs()));
    Ok(MomentReport {
        n_draws,
        expected_mean,
        sample_mean: mean,
        mean_z,
        expected_cov,
        sample_cov: cov,
        cov_z,
        max_abs_z,
    })
}
