//! Seeded synthetic datasets.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DesignMatrix, MixedLogistic, MixedPriors};
use crate::error::Result;
use crate::special::sigmoid;

/// Logistic-regression data with an intercept column followed by
/// `beta.len() - 1` standard-normal covariates.
pub fn logistic_dataset(n: usize, beta: &[f64], seed: u64) -> Result<DesignMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = beta.len();
    let mut x = DMatrix::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for j in 1..p {
            x[(i, j)] = StandardNormal.sample(&mut rng);
        }
        let eta: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum();
        y.push(if rng.random::<f64>() < sigmoid(eta) {
            1.0
        } else {
            0.0
        });
    }
    let names = std::iter::once("intercept".to_string())
        .chain((1..p).map(|j| format!("x{j}")))
        .collect();
    DesignMatrix::new(x, y, names)
}

/// Random-intercept logistic data: `obs_per_subject` rows for each subject,
/// an intercept plus `p - 1` covariates (alternating binary and continuous),
/// and subject effects drawn from `N(0, exp(2 zeta))`.
pub fn mixed_logistic(
    n_subjects: usize,
    obs_per_subject: usize,
    beta: &[f64],
    zeta: f64,
    priors: MixedPriors,
    seed: u64,
) -> Result<MixedLogistic> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = beta.len();
    let n = n_subjects * obs_per_subject;
    let sd = zeta.exp();
    let effects: Vec<f64> = (0..n_subjects)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect();
    let mut x = DMatrix::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    let mut subject = Vec::with_capacity(n);
    for s in 0..n_subjects {
        for _ in 0..obs_per_subject {
            let i = subject.len();
            x[(i, 0)] = 1.0;
            for j in 1..p {
                x[(i, j)] = if j % 2 == 1 {
                    f64::from(rng.random_bool(0.4) as u8)
                } else {
                    StandardNormal.sample(&mut rng)
                };
            }
            let eta: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum::<f64>() + effects[s];
            y.push(if rng.random::<f64>() < sigmoid(eta) {
                1.0
            } else {
                0.0
            });
            subject.push(s);
        }
    }
    MixedLogistic::new(x, y, subject, n_subjects, priors)
}

/// A target with the shape of the polypharmacy study: 8 fixed effects, `ζ`,
/// and 500 subject effects (`m = 509`), with 7 observations per subject.
pub fn polypharmacy_like(seed: u64) -> Result<MixedLogistic> {
    let beta = [-1.5, 0.6, -0.3, 0.8, 0.2, -0.5, 0.4, 0.1];
    Ok(
        mixed_logistic(500, 7, &beta, 0.4, MixedPriors::default(), seed)?
            .with_name("polypharmacy-like"),
    )
}
