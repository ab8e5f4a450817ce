use copula_vi::transforms::{TransformKind, TransformParams};
use proptest::prelude::*;

const H: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
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

fn params() -> impl Strategy<Value = TransformParams> {
    prop_oneof![
        (0.3f64..1.7).prop_map(|g| TransformParams::yeo_johnson(g).unwrap()),
        (-0.5f64..0.5, 0.01f64..0.5).prop_map(|(g, h)| TransformParams::inverse_gh(g, h).unwrap()),
        (0.01f64..0.5).prop_map(|h| TransformParams::inverse_gh(0.0, h).unwrap()),
    ]
}

fn check_bundle(p: &TransformParams, psi: f64) -> Result<(), TestCaseError> {
    let b = p.derivatives(psi);
    let theta = b.theta;
    prop_assert!((theta - p.inverse(psi)).abs() < 1e-12 * theta.abs().max(1.0));

    let d1 = (p.inverse(psi + H) - p.inverse(psi - H)) / (2.0 * H);
    prop_assert!(
        rel_err(b.dtheta_dpsi, d1) < 1e-6,
        "dtheta_dpsi {} vs {}",
        b.dtheta_dpsi,
        d1
    );

    let d2 = (p.derivatives(psi + H).dtheta_dpsi - p.derivatives(psi - H).dtheta_dpsi) / (2.0 * H);
    prop_assert!(
        rel_err(b.d2theta_dpsi2, d2) < 1e-6,
        "d2theta {} vs {}",
        b.d2theta_dpsi2,
        d2
    );

    let fwd = |x: f64| p.forward(x).unwrap();
    let tp = (fwd(theta + H) - fwd(theta - H)) / (2.0 * H);
    prop_assert!(
        rel_err(b.tprime, tp) < 1e-6,
        "tprime {} vs {}",
        b.tprime,
        tp
    );

    let tprime_at = |x: f64| p.derivatives(fwd(x)).tprime;
    let tpp = (tprime_at(theta + H) - tprime_at(theta - H)) / (2.0 * H);
    prop_assert!(
        rel_err(b.d2psi_dtheta2, tpp) < 1e-6,
        "t'' {} vs {}",
        b.d2psi_dtheta2,
        tpp
    );
    prop_assert!(rel_err(b.dlog_tprime_dtheta, b.d2psi_dtheta2 / b.tprime) < 1e-10);

    for j in 0..p.kind().n_params() {
        let (pp, pm) = (with_param(p, j, H), with_param(p, j, -H));
        let dth = (pp.inverse(psi) - pm.inverse(psi)) / (2.0 * H);
        prop_assert!(
            rel_err(b.dtheta_dparam[j], dth) < 1e-6,
            "dtheta_dparam[{j}] {} vs {}",
            b.dtheta_dparam[j],
            dth
        );

        let dps = (pp.forward(theta).unwrap() - pm.forward(theta).unwrap()) / (2.0 * H);
        prop_assert!(
            rel_err(b.dpsi_dparam[j], dps) < 1e-6,
            "dpsi_dparam[{j}] {} vs {}",
            b.dpsi_dparam[j],
            dps
        );

        let tprime_of = |q: &TransformParams| q.derivatives(q.forward(theta).unwrap()).tprime;
        let dtp = (tprime_of(&pp) - tprime_of(&pm)) / (2.0 * H);
        prop_assert!(
            rel_err(b.dtprime_dparam[j], dtp) < 1e-6,
            "dtprime_dparam[{j}] {} vs {}",
            b.dtprime_dparam[j],
            dtp
        );
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn derivative_bundle_matches_finite_differences(p in params(), psi in -3.0f64..3.0) {
        check_bundle(&p, psi)?;
    }

    #[test]
    fn inverse_is_strictly_increasing(p in params(), a in -4.0f64..4.0, gap in 1e-3f64..2.0) {
        prop_assert!(p.inverse(a + gap) > p.inverse(a));
    }

    #[test]
    fn unconstrained_jacobian_matches_finite_differences(u0 in -4.0f64..4.0, u1 in -4.0f64..4.0) {
        for kind in [TransformKind::YeoJohnson, TransformKind::InverseGh] {
            let u: Vec<f64> = [u0, u1][..kind.n_params()].to_vec();
            let jac = TransformParams::from_unconstrained(kind, &u).unwrap().unconstrained_jacobian();
            for j in 0..kind.n_params() {
                let mut up = u.clone();
                let mut um = u.clone();
                up[j] += H;
                um[j] -= H;
                let fp = TransformParams::from_unconstrained(kind, &up).unwrap().values()[j];
                let fm = TransformParams::from_unconstrained(kind, &um).unwrap().values()[j];
                let fd = (fp - fm) / (2.0 * H);
                prop_assert!(rel_err(jac[j], fd) < 1e-7);
            }
        }
    }
}
