use proptest::prelude::*;
use semistable_core::bounds::envelope_scan;
use semistable_core::levy::{LevyExponent, SemistableModel, ValidatedModel};
use semistable_core::regress::log_grid;
use semistable_core::spectral::{decompose, ExponentMatrix, DEFAULT_TOL_CLUSTER};

fn scalar_plane(a: f64, c: f64) -> ValidatedModel {
    let e = ExponentMatrix::scalar(a, 2).unwrap();
    SemistableModel::symmetric_atomic(
        c,
        e,
        &[(vec![1.0, 0.0], 1.0), (vec![0.3, 1.0], 0.5), (vec![-0.7, 0.6], 2.0)],
    )
    .unwrap()
    .into_validated()
    .unwrap()
}

fn diag_model() -> ValidatedModel {
    let e = ExponentMatrix::diagonal(&[0.6, 1.5]).unwrap();
    SemistableModel::symmetric_atomic(
        2.0,
        e,
        &[(vec![1.0, 0.0], 1.0), (vec![0.0, 1.0], 1.0), (vec![0.6, 0.8], 0.5)],
    )
    .unwrap()
    .into_validated()
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ratio_f_is_log_periodic_along_rays(
        a in 0.55f64..1.9,
        c in 1.5f64..4.0,
        theta in 0.0f64..std::f64::consts::TAU,
        lr in 1.0f64..5.0,
    ) {
        let m = scalar_plane(a, c);
        let dec = decompose(&m.model().e.adjoint(), DEFAULT_TOL_CLUSTER).unwrap();
        let ratio = |r: f64| {
            let xi = [r * theta.cos(), r * theta.sin()];
            m.psi(&xi).re / dec.anisotropy_norm(&xi).unwrap()
        };
        let r = 10f64.powf(lr);
        let (x, y) = (ratio(r), ratio(c.powf(a) * r));
        let tol = 10.0 * m.diagnostics().truncation_tail_bound * (1.0 + x.abs());
        prop_assert!((x - y).abs() <= tol.max(1e-12 * x.abs()), "{x} vs {y}");
    }
}

#[test]
fn k2_is_stable_under_doubling_samples() {
    let m = diag_model();
    let dec = decompose(&m.model().e.adjoint(), DEFAULT_TOL_CLUSTER).unwrap();
    let grid = log_grid(10.0, 1e4, 16);
    for seed in [1u64, 2, 3] {
        let small = envelope_scan(&m, &dec, 0.2, &grid, 512, seed).unwrap();
        let large = envelope_scan(&m, &dec, 0.2, &grid, 1024, seed + 100).unwrap();
        let change = (large.k2 / small.k2 - 1.0).abs();
        assert!(change < 0.05, "seed {seed}: K2 {} -> {} ({change})", small.k2, large.k2);
    }
}

#[test]
fn anisotropic_envelope_passes() {
    let m = diag_model();
    let dec = decompose(&m.model().e.adjoint(), DEFAULT_TOL_CLUSTER).unwrap();
    let grid = log_grid(10.0, 1e6, 40);
    let rep = envelope_scan(&m, &dec, 0.2, &grid, 256, 7).unwrap();
    assert!(rep.pass, "{rep:?}");
    assert!(rep.k2 > 0.0 && rep.k1.is_finite());
    assert_eq!(rep.k3, 0.0);
}
