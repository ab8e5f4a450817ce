use copula_vi::factor_scale::pack_lower;
use copula_vi::family::{Family, FamilySpec, VariationalFamily};
use copula_vi::transforms::{TransformKind, TransformParams};
use copula_vi::verification::instances::normal_vec;
use copula_vi::verification::{family_normalization, moment_check};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Params {
    mu: Vec<f64>,
    b: DMatrix<f64>,
    d: Vec<f64>,
    alpha: Vec<f64>,
    t: Vec<TransformParams>,
}

impl Params {
    fn random(rng: &mut ChaCha8Rng, m: usize, k: usize, kind: TransformKind) -> Self {
        let mut b = DMatrix::zeros(m, k);
        for j in 0..k {
            for i in j..m {
                b[(i, j)] = rng.random_range(-0.8..0.8);
            }
        }
        let t = (0..m)
            .map(|_| match kind {
                TransformKind::Identity => TransformParams::identity(),
                TransformKind::YeoJohnson => {
                    TransformParams::yeo_johnson(rng.random_range(0.4..1.6)).unwrap()
                }
                TransformKind::InverseGh => TransformParams::inverse_gh(
                    rng.random_range(-0.4..0.4),
                    rng.random_range(0.02..0.3),
                )
                .unwrap(),
            })
            .collect();
        Params {
            mu: (0..m).map(|_| rng.random_range(-1.0..1.0)).collect(),
            b,
            d: (0..m).map(|_| rng.random_range(0.4..1.2)).collect(),
            alpha: (0..m).map(|_| rng.random_range(-2.0..2.0)).collect(),
            t,
        }
    }

    fn spec(&self, skew: bool) -> FamilySpec {
        FamilySpec::new(self.mu.len(), self.b.ncols(), self.t[0].kind(), skew).unwrap()
    }

    fn lambda(&self, skew: bool) -> Vec<f64> {
        let spec = self.spec(skew);
        let lay = spec.layout();
        let mut l = vec![0.0; spec.param_count()];
        l[lay.mu.clone()].copy_from_slice(&self.mu);
        l[lay.b.clone()].copy_from_slice(&pack_lower(&self.b));
        l[lay.d.clone()].copy_from_slice(&self.d);
        if skew {
            l[lay.alpha.clone()].copy_from_slice(&self.alpha);
        }
        let np = spec.transform.n_params();
        for (i, t) in self.t.iter().enumerate() {
            l[lay.gamma.start + i * np..lay.gamma.start + (i + 1) * np]
                .copy_from_slice(&t.to_unconstrained());
        }
        l
    }

    fn family(&self, skew: bool) -> Family {
        Family::from_lambda(self.spec(skew), &self.lambda(skew)).unwrap()
    }

    fn sigma(&self) -> DMatrix<f64> {
        &self.b * self.b.transpose()
            + DMatrix::from_diagonal(&DVector::from_vec(self.d.iter().map(|d| d * d).collect()))
    }
}

fn dense_mvn_logpdf(x: &[f64], mu: &[f64], sigma: &DMatrix<f64>) -> f64 {
    let m = x.len();
    let chol = sigma.clone().cholesky().unwrap();
    let r = DVector::from_iterator(m, x.iter().zip(mu).map(|(a, b)| a - b));
    let sol = chol.solve(&r);
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (m as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + r.dot(&sol))
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= tol * y.abs().max(1.0))
}

#[test]
fn zero_noise_draw_is_the_transformed_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = Params::random(&mut rng, 4, 2, TransformKind::Identity);
    let f = p.family(false);
    assert_eq!(f.draw(&[0.0; 6]).unwrap().theta, p.mu);

    let p = Params::random(&mut rng, 4, 2, TransformKind::YeoJohnson);
    let theta = p.family(false).draw(&[0.0; 6]).unwrap().theta;
    for i in 0..4 {
        assert_eq!(theta[i], p.t[i].inverse(p.mu[i]));
    }
}

#[test]
fn gaussian_draws_match_mean_and_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let p = Params::random(&mut rng, 3, 2, TransformKind::Identity);
    let report = moment_check(&p.family(false), 1_000_000, 77).unwrap();
    assert!(report.passed(4.0), "max |z| = {}", report.max_abs_z);
}

#[test]
fn identity_log_density_is_the_dense_normal() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..40 {
        let m = rng.random_range(1..=20);
        let k = rng.random_range(0..=m.min(3));
        let p = Params::random(&mut rng, m, k, TransformKind::Identity);
        let f = p.family(false);
        let theta: Vec<f64> = normal_vec(&mut rng, m).iter().map(|z| 1.5 * z).collect();
        let want = dense_mvn_logpdf(&theta, &p.mu, &p.sigma());
        let got = f.log_density(&theta).unwrap();
        assert!(
            (got - want).abs() < 1e-9 * want.abs().max(1.0),
            "m={m} k={k}: {got} vs {want}"
        );
    }
}

#[test]
fn yeo_johnson_margin_integrates_to_one() {
    let p = Params {
        mu: vec![0.3],
        b: DMatrix::zeros(1, 0),
        d: vec![0.9],
        alpha: vec![0.0],
        t: vec![TransformParams::yeo_johnson(1.6).unwrap()],
    };
    let z = family_normalization(&p.family(false)).unwrap();
    assert!((z - 1.0).abs() < 1e-6, "{z}");
}

#[test]
fn gradient_vanishes_at_the_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = Params::random(&mut rng, 5, 2, TransformKind::Identity);
    let g = p.family(false).grad_theta(&p.mu).unwrap();
    assert!(g.iter().all(|v| v.abs() < 1e-12), "{g:?}");
}

#[test]
fn score_mean_block_vanishes_at_the_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = Params::random(&mut rng, 4, 2, TransformKind::YeoJohnson);
    let f = p.family(false);
    let theta: Vec<f64> = (0..4).map(|i| p.t[i].inverse(p.mu[i])).collect();
    let s = f.score(&theta).unwrap();
    let lay = f.spec().layout();
    assert!(s[lay.mu].iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn score_has_zero_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = Params::random(&mut rng, 3, 1, TransformKind::YeoJohnson);
    let f = p.family(false);
    let n = 100_000;
    let dim = f.spec().param_count();
    let (mut sum, mut sum_sq) = (vec![0.0; dim], vec![0.0; dim]);
    for _ in 0..n {
        let d = f.draw(&normal_vec(&mut rng, f.noise_len())).unwrap();
        for (j, s) in f.score_at(&d).unwrap().into_iter().enumerate() {
            sum[j] += s;
            sum_sq[j] += s * s;
        }
    }
    let nf = n as f64;
    for j in 0..dim {
        let mean = sum[j] / nf;
        let se = ((sum_sq[j] / nf - mean * mean) / nf).sqrt();
        assert!(
            (mean / se).abs() < 4.0,
            "coordinate {j}: mean {mean}, se {se}"
        );
    }
}

#[test]
fn zero_weights_give_zero_vjp() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for skew in [false, true] {
        let p = Params::random(&mut rng, 4, 2, TransformKind::InverseGh);
        let f = p.family(skew);
        let eps = normal_vec(&mut rng, f.noise_len());
        let d = f.draw(&eps).unwrap();
        assert!(f.vjp(&eps, &d, &[0.0; 4]).iter().all(|v| *v == 0.0));
    }
}

/// Skew-normal noise is `(r, ε₀, z, ε)`; the Gaussian family uses `(z, ε)`.
fn gaussian_noise(eps: &[f64]) -> &[f64] {
    &eps[2..]
}

#[test]
fn zero_alpha_skew_normal_is_the_gaussian_copula() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for kind in [
        TransformKind::Identity,
        TransformKind::YeoJohnson,
        TransformKind::InverseGh,
    ] {
        let mut p = Params::random(&mut rng, 5, 2, kind);
        p.alpha = vec![0.0; 5];
        let (sn, gc) = (p.family(true), p.family(false));
        let eps = normal_vec(&mut rng, sn.noise_len());
        let (ds, dg) = (
            sn.draw(&eps).unwrap(),
            gc.draw(gaussian_noise(&eps)).unwrap(),
        );
        assert_eq!(ds.psi, dg.psi);
        assert_eq!(ds.theta, dg.theta);
        let (ls, lg) = (sn.log_density_at(&ds), gc.log_density_at(&dg));
        assert!((ls - lg).abs() < 1e-12, "{ls} vs {lg}");
        assert!(close(&sn.grad_theta_at(&ds), &gc.grad_theta_at(&dg), 1e-12));

        let w = normal_vec(&mut rng, 5);
        let vs = sn.vjp(&eps, &ds, &w);
        let vg = gc.vjp(gaussian_noise(&eps), &dg, &w);
        let (ls, lg) = (sn.spec().layout(), gc.spec().layout());
        for (a, b) in [
            (ls.mu, lg.mu),
            (ls.b, lg.b),
            (ls.d, lg.d),
            (ls.gamma, lg.gamma),
        ] {
            assert!(close(&vs[a], &vg[b], 1e-12));
        }
    }
}

fn skew_parts(f: &Family) -> &copula_vi::family::SkewNormalCopula {
    match f {
        Family::SkewNormal(s) => s,
        Family::Gaussian(_) => panic!("expected a skew-normal family"),
    }
}

#[test]
fn zero_alpha_has_no_skew_direction() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut p = Params::random(&mut rng, 3, 1, TransformKind::Identity);
    p.alpha = vec![0.0; 3];
    let f = p.family(true);
    let d = skew_parts(&f).derived();
    assert!(d.delta.iter().chain(&d.delta_tilde).all(|v| *v == 0.0));
    assert_eq!((d.kappa, d.sqrt_term), (0.0, 1.0));
}

#[test]
fn delta_matches_the_dense_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let p = Params::random(&mut rng, 4, 2, TransformKind::Identity);
    let f = p.family(true);
    let derived = skew_parts(&f).derived();
    let sigma = p.sigma();
    let s_inv_half = DMatrix::from_diagonal(&sigma.diagonal().map(|v| 1.0 / v.sqrt()));
    let omega = &s_inv_half * &sigma * &s_inv_half;
    let alpha = DVector::from_vec(p.alpha.clone());
    let oa = &omega * &alpha;
    let delta = &oa / (1.0 + alpha.dot(&oa)).sqrt();
    assert!(close(&derived.delta, delta.as_slice(), 1e-10));

    // κ through an explicit solve agrees with the closed form
    let dt = DVector::from_vec(derived.delta_tilde.clone());
    let kappa = dt.dot(&sigma.clone().cholesky().unwrap().solve(&dt));
    assert!((kappa - derived.kappa).abs() < 1e-12);
    assert!((derived.sqrt_term - (1.0 - kappa).sqrt()).abs() < 1e-12);
}

#[test]
fn one_dimensional_delta_approaches_one_monotonically() {
    let mut last = 0.0;
    for c in [0.1, 1.0, 3.0, 10.0, 100.0, 1e4, 1e7] {
        let p = Params {
            mu: vec![0.0],
            b: DMatrix::zeros(1, 0),
            d: vec![0.7],
            alpha: vec![-c],
            t: vec![TransformParams::identity()],
        };
        let delta = skew_parts(&p.family(true)).derived().delta[0];
        assert!((delta + c / (1.0 + c * c).sqrt()).abs() < 1e-14);
        assert!(delta < last && delta > -1.0);
        last = delta;
    }
}

#[test]
fn skew_normal_margins_integrate_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let p = Params {
            mu: vec![rng.random_range(-1.0..1.0)],
            b: DMatrix::zeros(1, 0),
            d: vec![rng.random_range(0.3..1.5)],
            alpha: vec![rng.random_range(-4.0..4.0)],
            t: vec![TransformParams::yeo_johnson(rng.random_range(0.4..1.6)).unwrap()],
        };
        let z = family_normalization(&p.family(true)).unwrap();
        assert!((z - 1.0).abs() < 1e-6, "{z}");
    }
}

#[test]
fn skew_normal_draws_match_mean_and_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let p = Params::random(&mut rng, 3, 1, TransformKind::Identity);
    let report = moment_check(&p.family(true), 1_000_000, 78).unwrap();
    assert!(report.passed(4.0), "max |z| = {}", report.max_abs_z);

    let one = Params {
        mu: vec![0.2],
        b: DMatrix::zeros(1, 0),
        d: vec![1.3],
        alpha: vec![3.0],
        t: vec![TransformParams::identity()],
    };
    let report = moment_check(&one.family(true), 1_000_000, 79).unwrap();
    assert!(report.mean_z[0].abs() < 4.0, "{:?}", report.mean_z);
}

#[test]
fn mean_error_shrinks_like_root_n() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let f = Params::random(&mut rng, 3, 1, TransformKind::Identity).family(true);
    let rms = |n: usize, seed0: u64| {
        let mut acc = 0.0;
        let mut count = 0.0;
        for s in 0..16 {
            let r = moment_check(&f, n, seed0 + s).unwrap();
            for (a, b) in r.sample_mean.iter().zip(&r.expected_mean) {
                acc += (a - b).powi(2);
                count += 1.0;
            }
        }
        (acc / count).sqrt()
    };
    let ratio = rms(20_000, 100) / rms(40_000, 200);
    assert!((1.0..2.0).contains(&ratio), "ratio {ratio}");
}
