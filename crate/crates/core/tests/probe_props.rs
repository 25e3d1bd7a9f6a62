use semistable_core::levy::{ClosedFormModel, SemistableModel};
use semistable_core::probes::{graph_dim_index, packing_via_w, range_dim_index, ShellOptions};
use semistable_core::regress::log_grid;
use semistable_core::sim::{box_dim_range, dyadic_scales, sample_path, semi_selfsimilarity_test, SmallJumpPolicy};
use semistable_core::spectral::ExponentMatrix;

#[test]
fn w_profile_is_monotone_for_stable_laws() {
    for dim in [1, 2] {
        for alpha in [0.5, 1.0, 1.5, 2.0] {
            let m = ClosedFormModel::symmetric_stable(alpha, 1.0, dim).unwrap();
            let est = packing_via_w(&m, &log_grid(1e-4, 0.5, 16), 20_000, 3).unwrap();
            for w in est.profile.windows(2) {
                assert!(w[1].0 > w[0].0);
                assert!(w[1].1 >= w[0].1, "dim {dim} alpha {alpha}: {:?}", est.profile);
            }
        }
    }
}

#[test]
fn index_estimates_are_consistent() {
    let cases: Vec<(ClosedFormModel, bool)> = vec![
        (ClosedFormModel::symmetric_stable(0.5, 1.0, 1).unwrap(), true),
        (ClosedFormModel::symmetric_stable(0.7, 1.0, 1).unwrap(), false),
        (ClosedFormModel::symmetric_stable(1.5, 1.0, 2).unwrap(), true),
    ];
    for (m, range) in cases {
        let base = ShellOptions::default();
        let doubled = ShellOptions {
            sphere_samples: 2 * base.sphere_samples,
            ..base
        };
        let probe = |g: &[f64], o: &ShellOptions| {
            if range {
                range_dim_index(&m, g, o).unwrap()
            } else {
                graph_dim_index(&m, g, o).unwrap()
            }
        };
        let a = probe(&log_grid(1.0, 1e6, 25), &base);
        let b = probe(&log_grid(1.0, 1e7, 29), &doubled);
        let slope_tol = 3.0 * a.stderr.max(b.stderr);
        assert!(
            (a.slope - b.slope).abs() <= slope_tol,
            "{m:?}: {} vs {} (tol {slope_tol})",
            a.slope,
            b.slope
        );
    }
}

#[test]
fn energy_test_does_not_reject_semi_selfsimilarity() {
    let one =
        SemistableModel::symmetric_atomic(2.0, ExponentMatrix::scalar(1.0 / 1.5, 1).unwrap(), &[(vec![1.0], 1.0)])
            .unwrap();
    let plane = SemistableModel::symmetric_atomic(
        2.0,
        ExponentMatrix::diagonal(&[0.6, 1.5]).unwrap(),
        &[(vec![1.0, 0.0], 1.0), (vec![0.0, 1.0], 1.0), (vec![0.6, 0.8], 0.5)],
    )
    .unwrap();
    for (i, m) in [one, plane].iter().enumerate() {
        let t = semi_selfsimilarity_test(m, 1.0, 1000, 199, 1e-3, 11 + i as u64).unwrap();
        assert!(!t.reject_at_1pct, "model {i}: p = {}", t.p_value);
    }
}

#[test]
fn box_counting_stays_in_range() {
    let m = SemistableModel::symmetric_atomic(2.0, ExponentMatrix::scalar(1.0 / 1.5, 1).unwrap(), &[(vec![1.0], 1.0)])
        .unwrap();
    let path = sample_path(&m, 1.0, 1 << 17, None, SmallJumpPolicy::GaussianSubstitute, 5).unwrap();
    let est = box_dim_range(&path, &dyadic_scales(2, 14)).unwrap();
    assert!((0.0..=1.0).contains(&est.value));
    let mut prof = est.profile.clone();
    prof.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in prof.windows(2) {
        assert!(w[0].1 >= w[1].1, "{prof:?}");
    }
}
