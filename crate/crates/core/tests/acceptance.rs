//! Acceptance criteria, one line each. Runs without the libtest harness so the
//! lines are always printed; exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use copula_vi::family::{Family, FamilyLabel, FamilySpec, VariationalFamily};
use copula_vi::harness::{run_experiment, run_grid, trace_csv, ExperimentSpec, TargetSource};
use copula_vi::optimizer::{
    estimate_elbo, initial_lambda, run, sample_gradient, Estimator, OptimizerConfig,
};
use copula_vi::targets::GaussianToy;
use copula_vi::transforms::{TransformKind, TransformParams};
use copula_vi::verification::instances::normal_vec;
use copula_vi::verification::{family_normalization, moment_check, run_checks};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn params_for_counts() -> Outcome {
    let want = [1018, 1527, 3553, 4062, 4062, 4571, 4571, 5080];
    let got: Vec<usize> = FamilyLabel::ALL
        .iter()
        .map(|l| l.spec(509, 5).param_count())
        .collect();
    (got == want, format!("A1..A8 at m=509, k=5: {got:?}"))
}

fn derivative_checks() -> Outcome {
    let start = Instant::now();
    let report = run_checks(None, 100, 2024).expect("checks run");
    let secs = start.elapsed().as_secs_f64();
    let worst = report
        .checks
        .iter()
        .map(|c| c.max_error / c.tolerance)
        .fold(0.0f64, f64::max);
    let failed: Vec<&str> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.as_str())
        .collect();
    (
        report.all_passed && secs < 120.0,
        format!(
            "{} checks x 100 instances in {secs:.1}s, worst error/tolerance {worst:.3}, failed {failed:?}",
            report.checks.len()
        ),
    )
}

fn random_lambda(rng: &mut ChaCha8Rng, spec: &FamilySpec, alpha_zero: bool) -> Vec<f64> {
    let lay = spec.layout();
    let mut l = vec![0.0; spec.param_count()];
    l[lay.mu.clone()]
        .iter_mut()
        .for_each(|v| *v = rng.random_range(-1.0..1.0));
    l[lay.b.clone()]
        .iter_mut()
        .for_each(|v| *v = rng.random_range(-0.8..0.8));
    l[lay.d.clone()]
        .iter_mut()
        .for_each(|v| *v = rng.random_range(0.3..1.2));
    if !alpha_zero {
        l[lay.alpha.clone()]
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-3.0..3.0));
    }
    l[lay.gamma.clone()]
        .iter_mut()
        .for_each(|v| *v = rng.random_range(-1.0..1.0));
    l
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / y.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Largest relative discrepancy in draw, log density and θ-gradient.
fn compare(f: &Family, eps_f: &[f64], g: &Family, eps_g: &[f64]) -> f64 {
    let (df, dg) = (f.draw(eps_f).unwrap(), g.draw(eps_g).unwrap());
    let ld = (f.log_density_at(&df) - g.log_density_at(&dg)).abs()
        / g.log_density_at(&dg).abs().max(1.0);
    max_diff(&df.theta, &dg.theta)
        .max(ld)
        .max(max_diff(&f.grad_theta_at(&df), &g.grad_theta_at(&dg)))
}

fn reduction_chain() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut skew, mut yj, mut mf) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..50 {
        let m = rng.random_range(1..=8);
        let k = rng.random_range(0..=m.min(3));

        // skew-normal at α = 0 against the Gaussian copula, any transform
        let kind = [
            TransformKind::Identity,
            TransformKind::YeoJohnson,
            TransformKind::InverseGh,
        ][rng.random_range(0..3)];
        let sn_spec = FamilySpec::new(m, k, kind, true).unwrap();
        let gc_spec = FamilySpec::new(m, k, kind, false).unwrap();
        let l = random_lambda(&mut rng, &sn_spec, true);
        let mut lg = l.clone();
        lg.drain(sn_spec.layout().alpha);
        let sn = Family::from_lambda(sn_spec, &l).unwrap();
        let gc = Family::from_lambda(gc_spec, &lg).unwrap();
        let eps = normal_vec(&mut rng, sn.noise_len());
        skew = skew.max(compare(&sn, &eps, &gc, &eps[2..]));

        // Yeo-Johnson at γ = 1 against A3
        let yj_spec = FamilyLabel::A5.spec(m, k);
        let a3_spec = FamilyLabel::A3.spec(m, k);
        let mut l = random_lambda(&mut rng, &yj_spec, true);
        let u = TransformParams::yeo_johnson(1.0)
            .unwrap()
            .to_unconstrained();
        l[yj_spec.layout().gamma].fill(u[0]);
        let a5 = Family::from_lambda(yj_spec, &l).unwrap();
        let a3 = Family::from_lambda(a3_spec, &l[..a3_spec.param_count()]).unwrap();
        let eps = normal_vec(&mut rng, a5.noise_len());
        yj = yj.max(compare(&a5, &eps, &a3, &eps));

        // A3 with zero factor loadings against A1
        let a1_spec = FamilyLabel::A1.spec(m, 0);
        let mut l = random_lambda(&mut rng, &a3_spec, true);
        let lay = a3_spec.layout();
        l[lay.b.clone()].fill(0.0);
        let mut l1 = l[lay.mu.clone()].to_vec();
        l1.extend_from_slice(&l[lay.d.clone()]);
        let a3 = Family::from_lambda(a3_spec, &l).unwrap();
        let a1 = Family::from_lambda(a1_spec, &l1).unwrap();
        let eps = normal_vec(&mut rng, a3.noise_len());
        mf = mf.max(compare(&a3, &eps, &a1, &eps[k..]));
    }
    (
        skew <= 1e-12 && yj <= 1e-12 && mf <= 1e-12,
        format!("50 instances per link, max rel. diff: SN(α=0)~GC {skew:.1e}, YJ(γ=1)~A3 {yj:.1e}, A3(B=0)~A1 {mf:.1e}"),
    )
}

fn normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let n = 60;
    for i in 0..n {
        let skew = i % 2 == 1;
        let kind = [
            TransformKind::Identity,
            TransformKind::YeoJohnson,
            TransformKind::InverseGh,
        ][(i / 2) % 3];
        let spec = FamilySpec::new(1, 0, kind, skew).unwrap();
        let lay = spec.layout();
        let mut l = vec![0.0; spec.param_count()];
        l[lay.mu.start] = rng.random_range(-1.5..1.5);
        l[lay.d.start] = rng.random_range(0.3..1.5);
        if skew {
            l[lay.alpha.start] = rng.random_range(-4.0..4.0);
        }
        let t = match kind {
            TransformKind::Identity => TransformParams::identity(),
            TransformKind::YeoJohnson => {
                TransformParams::yeo_johnson(rng.random_range(0.3..1.7)).unwrap()
            }
            TransformKind::InverseGh => TransformParams::inverse_gh(
                rng.random_range(-0.5..0.5),
                rng.random_range(0.01..0.5),
            )
            .unwrap(),
        };
        l[lay.gamma.clone()].copy_from_slice(&t.to_unconstrained());
        let z = family_normalization(&Family::from_lambda(spec, &l).unwrap()).unwrap();
        worst = worst.max((z - 1.0).abs());
    }
    (
        worst < 1e-5,
        format!("{n} one-dimensional configurations, max |∫q − 1| = {worst:.2e}"),
    )
}

fn elbo_ceiling() -> Outcome {
    let c = 3.7;
    let toy = GaussianToy::correlated_pair(0.8, c).unwrap();
    let spec = FamilyLabel::A3.spec(2, 1);
    let config = OptimizerConfig {
        n_steps: 20_000,
        seed: 5,
        ..Default::default()
    };
    let start = Instant::now();
    let a = run(spec, &toy, &config, initial_lambda(&spec, None, 5).unwrap()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let b = run(spec, &toy, &config, initial_lambda(&spec, None, 5).unwrap()).unwrap();
    let same = a
        .elbo
        .iter()
        .zip(&b.elbo)
        .all(|(x, y)| x.to_bits() == y.to_bits());
    let gap = (a.window_average - c).abs();
    (
        gap < 0.05 && same && secs < 60.0,
        format!(
            "window average {:.4} vs C = {c}, |gap| {gap:.4}, rerun identical {same}, {secs:.1}s",
            a.window_average
        ),
    )
}

fn skew_moments() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let spec = FamilySpec::new(4, 2, TransformKind::Identity, true).unwrap();
    let l = random_lambda(&mut rng, &spec, false);
    let start = Instant::now();
    let report = moment_check(&Family::from_lambda(spec, &l).unwrap(), 1_000_000, 66).unwrap();
    let mean_z = report.mean_z.iter().fold(0.0f64, |a, z| a.max(z.abs()));
    let cov_z = report.cov_z.iter().fold(0.0f64, |a, z| a.max(z.abs()));
    (
        report.passed(4.0),
        format!(
            "m=4, k=2, 10^6 draws: max |z| mean {mean_z:.2}, covariance {cov_z:.2} ({:.1}s)",
            start.elapsed().as_secs_f64()
        ),
    )
}

fn oracle_accuracy() -> Outcome {
    let base = ExperimentSpec {
        target: TargetSource::LogisticSynthetic,
        synthetic_n: 200,
        k: 1,
        steps: 20_000,
        seed: 7,
        marginal_coords: Some(vec![]),
        ..Default::default()
    };
    let grid = run_grid(
        &[
            base.with_family(FamilyLabel::A3),
            base.with_family(FamilyLabel::A5),
        ],
        2,
    )
    .unwrap();
    let (a3, a5) = (&grid.bundles[0], &grid.bundles[1]);
    let oracle = a5.analysis.oracle.as_ref().expect("2-D oracle");
    let errs: Vec<f64> = oracle
        .oracle
        .iter()
        .zip(&oracle.family)
        .map(|(o, f)| (o.mean - f.mean).abs())
        .collect();
    let worst = errs.iter().fold(0.0f64, |a, e| a.max(*e));
    let nested = a5.window_average() >= a3.window_average() - 0.5;
    (
        worst < 0.05 && nested,
        format!(
            "A5 mean error {errs:.4?} (limit 0.05); ELBO A5 {:.3} vs A3 {:.3} (limit A3 − 0.5); log Z {:.3}",
            a5.window_average(),
            a3.window_average(),
            oracle.log_evidence
        ),
    )
}

fn ionosphere_skew() -> Outcome {
    let base = ExperimentSpec {
        target: TargetSource::Csv,
        data: Some(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/ionosphere.csv")),
        intercept: true,
        prior_var: 10.0,
        k: 3,
        steps: 20_000,
        seed: 8,
        moment_draws: 10_000,
        marginal_coords: Some(vec![]),
        ..Default::default()
    };
    let labels = [FamilyLabel::A3, FamilyLabel::A4, FamilyLabel::A6];
    let specs: Vec<_> = labels.iter().map(|&l| base.with_family(l)).collect();
    let grid = run_grid(&specs, 3).unwrap();
    let elbo: Vec<f64> = grid.bundles.iter().map(|b| b.window_average()).collect();
    let healthy = grid.bundles.iter().all(|b| b.trace.healthy);
    let pass = healthy && elbo[1] >= elbo[0] + 1.0 && elbo[2] >= elbo[0] + 1.0;
    (
        pass,
        format!(
            "k=3, 20k steps: A3 {:.2}, A4 {:.2} ({:+.2}), A6 {:.2} ({:+.2}); need +1 nat. \
             Informational, 34-column encoding, not comparable to the 111-column reference values",
            elbo[0],
            elbo[1],
            elbo[1] - elbo[0],
            elbo[2],
            elbo[2] - elbo[0]
        ),
    )
}

/// The per-coordinate variance ordering depends on `λ`: near `B = 0` the
/// score of `B` vanishes and the score estimator wins on those entries. The
/// instance is the correlated toy at a generic point with non-degenerate
/// loadings.
fn estimator_agreement() -> Outcome {
    let target = GaussianToy::correlated_pair(0.8, 0.0).unwrap();
    let spec = FamilyLabel::A3.spec(2, 1);
    let lay = spec.layout();
    let mut l = vec![0.0; spec.param_count()];
    l[lay.mu.clone()].copy_from_slice(&[0.3, -0.2]);
    l[lay.b.clone()].copy_from_slice(&[0.3, 0.5]);
    l[lay.d.clone()].copy_from_slice(&[0.7, 0.6]);
    let f = Family::from_lambda(spec, &l).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pilot: Vec<Vec<f64>> = (0..10_000)
        .map(|_| normal_vec(&mut rng, f.noise_len()))
        .collect();
    let baseline = estimate_elbo(&f, &target, &pilot).unwrap();

    let n = 100_000;
    let stats = |est: Estimator, rng: &mut ChaCha8Rng| {
        let p = l.len();
        let (mut s1, mut s2) = (vec![0.0; p], vec![0.0; p]);
        for _ in 0..n {
            let (g, _) =
                sample_gradient(&f, &target, &normal_vec(rng, f.noise_len()), est, baseline)
                    .unwrap();
            for j in 0..p {
                s1[j] += g[j];
                s2[j] += g[j] * g[j];
            }
        }
        let nf = n as f64;
        let mean: Vec<f64> = s1.iter().map(|s| s / nf).collect();
        let var: Vec<f64> = (0..p)
            .map(|j| (s2[j] - nf * mean[j] * mean[j]) / (nf - 1.0))
            .collect();
        (mean, var)
    };
    let (rm, rv) = stats(Estimator::Reparam, &mut rng);
    let (sm, sv) = stats(Estimator::ScoreWithBaseline, &mut rng);
    let nf = n as f64;
    let z: Vec<f64> = (0..l.len())
        .map(|j| (rm[j] - sm[j]) / ((rv[j] + sv[j]) / nf).sqrt())
        .collect();
    let max_z = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let lower_var = rv.iter().zip(&sv).all(|(r, s)| r <= s);
    let ratio = rv
        .iter()
        .zip(&sv)
        .map(|(r, s)| s / r)
        .fold(f64::INFINITY, f64::min);
    (
        max_z < 4.0 && lower_var,
        format!(
            "{} coordinates, 10^5 samples each: max joint |z| {max_z:.2}; variance reparam ≤ score everywhere {lower_var} (min ratio {ratio:.1})",
            l.len()
        ),
    )
}

fn determinism() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for samples in [1, 4] {
        let spec = ExperimentSpec {
            target: TargetSource::LogisticSynthetic,
            samples,
            steps: 2_000,
            seed: 10,
            moment_draws: 1_000,
            marginal_coords: Some(vec![]),
            ..Default::default()
        }
        .with_family(FamilyLabel::A8);
        let csv = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            let b = pool.install(|| run_experiment(&spec)).unwrap();
            trace_csv(&b.spec_hash, &b.trace.elbo)
        };
        let (a, b, c) = (csv(1), csv(4), csv(4));
        let same = a == b && b == c;
        ok &= same;
        notes.push(format!(
            "S={samples}: {} bytes, identical over 1/4/4 threads {same}",
            a.len()
        ));
    }
    (ok, notes.join("; "))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("parameter counts", params_for_counts),
        ("derivative checks", derivative_checks),
        ("reduction chain", reduction_chain),
        ("normalization", normalization),
        ("ELBO ceiling", elbo_ceiling),
        ("skew-normal moments", skew_moments),
        ("accuracy vs quadrature", oracle_accuracy),
        ("Ionosphere skew gain", ionosphere_skew),
        ("estimator agreement", estimator_agreement),
        ("determinism", determinism),
    ];
    let mut passed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (ok, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        passed += ok as usize;
        println!(
            "[{}] {:>2}. {name}: {detail}",
            if ok { "PASS" } else { "FAIL" },
            i + 1
        );
    }
    println!("acceptance: {passed}/{} criteria passed", criteria.len());
    if passed != criteria.len() {
        std::process::exit(1);
    }
}
