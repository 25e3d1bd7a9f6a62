use proptest::prelude::*;
use semistable_core::dims::{
    classify_recurrence, dimension_report, double_point_dim, graph_dim, range_dim, DoublePoints, Recurrence,
    SpectrumSummary,
};

/// Spectra with `d ≤ 4`, distinct indices on a 0.05 lattice in `(0, 2]`.
fn spectra() -> impl Strategy<Value = SpectrumSummary> {
    (1usize..=4)
        .prop_flat_map(|d| {
            let lattice: Vec<f64> = (1..=40).map(|i| i as f64 * 0.05).collect();
            (
                Just(d),
                prop::sample::subsequence(lattice, 1..=d),
                prop::collection::vec(0usize..4, 4),
            )
        })
        .prop_map(|(d, alphas, cuts)| {
            let p = alphas.len();
            // spread the d coordinates over the p blocks, one each plus extras
            let mut dims = vec![1usize; p];
            for k in 0..d - p {
                dims[cuts[k] % p] += 1;
            }
            SpectrumSummary::new(alphas.into_iter().zip(dims).collect()).unwrap()
        })
}

const S_GRID: usize = 200_000;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn formulas_are_lipschitz_in_s(spec in spectra()) {
        let lip = spec.alpha1().max(1.0) + 1e-9;
        let h = 1.0 / S_GRID as f64;
        let mut prev_r = range_dim(&spec, 0.0).unwrap().value;
        let mut prev_g = graph_dim(&spec, 0.0).unwrap().value;
        for i in 1..=S_GRID {
            let s = i as f64 * h;
            let r = range_dim(&spec, s).unwrap().value;
            let g = graph_dim(&spec, s).unwrap().value;
            prop_assert!((r - prev_r).abs() <= lip * h + 1e-12, "range jump at s = {s}");
            prop_assert!((g - prev_g).abs() <= lip * h + 1e-12, "graph jump at s = {s}");
            prop_assert!(r >= prev_r - 1e-12 && g >= prev_g - 1e-12, "not monotone at s = {s}");
            prev_r = r;
            prev_g = g;
        }
    }

    #[test]
    fn ranges_and_ordering(spec in spectra(), s in 0.0f64..=1.0) {
        let d = spec.d as f64;
        let r = range_dim(&spec, s).unwrap().value;
        let g = graph_dim(&spec, s).unwrap().value;
        prop_assert!((0.0..=d + 1e-12).contains(&r));
        prop_assert!(g >= s - 1e-12 && g <= d + 1.0 + 1e-12);
        prop_assert!(g >= r - 1e-12, "graph {g} < range {r}");
        let rep = dimension_report(&spec).unwrap();
        prop_assert!((1.0 - 1e-12..=d + 1.0 + 1e-12).contains(&rep.graph_hausdorff_unit));
        prop_assert_eq!(rep.range_hausdorff_unit, rep.range_packing_unit);
        prop_assert_eq!(rep.graph_hausdorff_unit, rep.graph_packing_unit);
    }

    #[test]
    fn range_is_monotone_in_each_index(spec in spectra(), which in 0usize..4, s in 0.0f64..=1.0) {
        let i = which % spec.pairs.len();
        let mut pairs = spec.pairs.clone();
        let upper = if i == 0 { 2.0 } else { pairs[i - 1].0 - 0.01 };
        let bumped = (pairs[i].0 + 0.02).min(upper);
        prop_assume!(bumped > pairs[i].0);
        pairs[i].0 = bumped;
        let up = SpectrumSummary::new(pairs).unwrap();
        prop_assert!(range_dim(&up, s).unwrap().value >= range_dim(&spec, s).unwrap().value - 1e-12);
    }

    #[test]
    fn recurrence_iff_full_range(spec in spectra()) {
        let (rec, _) = classify_recurrence(&spec, spec.is_gaussian_full());
        let full = (range_dim(&spec, 1.0).unwrap().value - spec.d as f64).abs() <= 1e-12;
        prop_assert_eq!(rec == Recurrence::Recurrent, full);
        prop_assert!(dimension_report(&spec).unwrap().recurrence_matches_range);
    }
}

#[test]
fn gaussian_plane_is_recurrent() {
    let spec = SpectrumSummary::new(vec![(2.0, 2)]).unwrap();
    assert_eq!(
        classify_recurrence(&spec, spec.is_gaussian_full()).0,
        Recurrence::Recurrent
    );
    assert_eq!(range_dim(&spec, 1.0).unwrap().value, 2.0);
}

#[test]
fn double_points_by_hand() {
    let dp = |a: &[f64]| {
        double_point_dim(&SpectrumSummary::from_sorted_alphas(a).unwrap())
            .unwrap()
            .0
    };
    let near = |v: DoublePoints, want: f64| match v {
        DoublePoints::Dim(x) => (x - want).abs() < 1e-12,
        DoublePoints::Empty => false,
    };
    // min{1.5 (2 - 2/3 - 5/6), 2.4 (1 - 2/3)} = min{0.75, 0.8}
    assert!(near(dp(&[1.5, 1.2]), 0.75));
    // min{1.2 (2 - 5/6 - 1/1.1), 2.2 (1 - 5/6)} = min{0.30909.., 0.36666..}
    assert!(near(dp(&[1.2, 1.1]), 1.2 * (2.0 - 5.0 / 6.0 - 1.0 / 1.1)));
    // 1.8 (2 - 5/9 - 5/9 - 2/3) = 1.8 * 2/9
    assert!(near(dp(&[1.8, 1.8, 1.5]), 0.4));
    assert!(near(dp(&[2.0, 2.0, 2.0]), 1.0));
    assert!(near(dp(&[2.0, 2.0]), 2.0));
    assert!(near(dp(&[1.0, 1.0]), 0.0));
    assert_eq!(dp(&[0.8, 0.8]), DoublePoints::Empty);
    assert_eq!(dp(&[1.2, 1.2, 1.2]), DoublePoints::Empty);
    assert_eq!(dp(&[2.0, 2.0, 2.0, 2.0]), DoublePoints::Empty);
}
