use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use semistable_core::levy::{Atom, ClosedFormModel, LevyExponent, SemistableModel, Truncation, ValidatedModel};
use semistable_core::spectral::{matrix_power, ExponentMatrix};

fn symmetric(c: f64, e: ExponentMatrix, atoms: &[(Vec<f64>, f64)]) -> ValidatedModel {
    SemistableModel::symmetric_atomic(c, e, atoms)
        .unwrap()
        .into_validated()
        .unwrap()
}

fn strict_models() -> Vec<ValidatedModel> {
    vec![
        symmetric(2.0, ExponentMatrix::scalar(1.0, 1).unwrap(), &[(vec![1.0], 1.0)]),
        symmetric(
            3.0,
            ExponentMatrix::scalar(1.0 / 1.7, 1).unwrap(),
            &[(vec![1.0], 0.5), (vec![1.4], 2.0)],
        ),
        symmetric(
            2.0,
            ExponentMatrix::diagonal(&[0.6, 1.5]).unwrap(),
            &[(vec![1.0, 0.0], 1.0), (vec![0.3, 1.0], 0.7)],
        ),
        symmetric(
            2.5,
            ExponentMatrix::from_rows(&[vec![0.8, -0.5], vec![0.5, 0.8]]).unwrap(),
            &[(vec![1.0, 0.2], 1.0)],
        ),
        symmetric(
            2.0,
            ExponentMatrix::from_rows(&[vec![0.75, 1.0], vec![0.0, 0.75]]).unwrap(),
            &[(vec![1.0, 0.0], 1.0), (vec![0.0, 1.0], 1.0)],
        ),
        symmetric(
            2.0,
            ExponentMatrix::diagonal(&[0.7, 0.9, 1.3]).unwrap(),
            &[
                (vec![1.0, 0.0, 0.0], 1.0),
                (vec![0.0, 1.0, 0.0], 1.0),
                (vec![0.2, 0.3, 1.0], 1.0),
            ],
        ),
    ]
}

fn asymmetric() -> ValidatedModel {
    SemistableModel::new(
        2.0,
        ExponentMatrix::from_rows(&[vec![0.9, 0.2], vec![-0.1, 1.2]]).unwrap(),
        vec![
            Atom {
                x: vec![1.0, 0.5],
                w: 1.0,
            },
            Atom {
                x: vec![-0.4, 1.0],
                w: 0.6,
            },
        ],
        DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, 0.2]),
        vec![0.2, -0.4],
        Truncation::default(),
        false,
    )
    .unwrap()
    .into_validated()
    .unwrap()
}

/// Frequency with a log-uniform norm in `[1e-3, 1e3]`.
fn frequency(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    (prop::collection::vec(-1.0f64..1.0, dim), -3.0f64..3.0).prop_filter_map("nonzero direction", |(v, lg)| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        (n > 1e-3).then(|| v.iter().map(|x| x / n * 10f64.powf(lg)).collect())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn discrete_scaling_law((which, xi) in (0usize..6).prop_flat_map(|w| (Just(w), frequency([1, 1, 2, 2, 2, 3][w])))) {
        let models = strict_models();
        let m = &models[which];
        let c = m.scale().unwrap();
        let ce = matrix_power(&m.model().e.adjoint(), c).unwrap();
        let scaled: Vec<f64> = (&ce * nalgebra::DVector::from_column_slice(&xi)).iter().copied().collect();
        let p = m.psi(&xi);
        let lhs = (m.psi(&scaled) - p * c).norm();
        let bound = 10.0 * m.diagnostics().truncation_tail_bound * (1.0 + p.norm());
        prop_assert!(lhs <= bound, "model {which}: {lhs} > {bound} at {xi:?}");
    }

    #[test]
    fn hermitian_and_nonnegative(xi in frequency(2)) {
        let m = asymmetric();
        let p = m.psi(&xi);
        let neg: Vec<f64> = xi.iter().map(|v| -v).collect();
        let q = m.psi(&neg);
        prop_assert!((p - q.conj()).norm() <= 1e-10 * (1.0 + p.norm()));
        prop_assert!(p.re >= 0.0);
        for s in strict_models().iter().filter(|s| s.dim() == 2) {
            let v = s.psi(&xi);
            prop_assert!(v.re >= 0.0);
            prop_assert_eq!(v.im, 0.0);
        }
    }

    #[test]
    fn component_additivity(xi in frequency(2), g in prop::collection::vec(-0.4f64..0.4, 4)) {
        // blocks spanned by the columns of q; atoms on each column decouple
        let q = DMatrix::from_row_slice(2, 2, &[1.0 + g[0], g[1], g[2], 1.0 + g[3]]);
        let qi = q.clone().try_inverse().unwrap();
        let e = ExponentMatrix::new(&q * DMatrix::from_diagonal(&nalgebra::dvector![0.6, 1.5]) * &qi).unwrap();
        let q1: Vec<f64> = q.column(0).iter().copied().collect();
        let q2: Vec<f64> = q.column(1).iter().map(|v| 0.5 * v).collect();
        let joint = symmetric(2.0, e, &[(q1.clone(), 1.0), (q2.clone(), 0.8)]);
        let one = symmetric(2.0, ExponentMatrix::scalar(0.6, 1).unwrap(), &[(vec![1.0], 1.0)]);
        let two = symmetric(2.0, ExponentMatrix::scalar(1.5, 1).unwrap(), &[(vec![1.0], 0.8)]);
        let dot = |a: &[f64]| a.iter().zip(&xi).map(|(x, y)| x * y).sum::<f64>();
        let sum = one.psi(&[dot(&q1)]) + two.psi(&[dot(&q2)]);
        let p = joint.psi(&xi);
        prop_assert!((p - sum).norm() <= 1e-7 * (1.0 + sum.norm()), "{p} vs {sum}");
    }
}

#[test]
fn psi_vanishes_at_origin() {
    for m in strict_models() {
        assert_eq!(m.psi(&vec![0.0; m.dim()]), Complex64::new(0.0, 0.0));
    }
    assert_eq!(asymmetric().psi(&[0.0, 0.0]), Complex64::new(0.0, 0.0));
}

#[test]
fn symmetric_model_has_no_imaginary_part() {
    let m = &strict_models()[2];
    for i in 0..100 {
        let t = i as f64 * 0.0628;
        let r = 10f64.powf(-2.0 + 4.0 * i as f64 / 99.0);
        assert_eq!(m.psi(&[r * t.cos(), r * t.sin()]).im, 0.0);
    }
}

/// `2 ∫_0^∞ (1 - cos ξx) g(x) dx` by plain quadrature: trapezoid on `[0, 1]` after
/// `x = v⁴`, trapezoid on `[1, X]` with `ξX = 1000`, and the integration-by-parts
/// series for the tail beyond `X`.
fn density_oracle(alpha: f64, beta: f64, xi: f64) -> f64 {
    const N: usize = 1_000_000;
    let trap = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| {
        let h = (b - a) / N as f64;
        let mut s = 0.5 * (f(a) + f(b));
        for i in 1..N {
            s += f(a + i as f64 * h);
        }
        s * h
    };
    let near = trap(
        &|v: f64| {
            if v == 0.0 {
                return 0.0;
            }
            let x = v.powi(4);
            2.0 * (0.5 * xi * x).sin().powi(2) * x.powf(-beta - 1.0) * 4.0 * v.powi(3)
        },
        0.0,
        1.0,
    );
    let big_x = 1000.0 / xi;
    let mid = trap(
        &|x: f64| 2.0 * (0.5 * xi * x).sin().powi(2) * x.powf(-alpha - 1.0),
        1.0,
        big_x,
    );
    // ∫_X^∞ e^{iξx} x^{-s} dx = -e^{iξX} X^{-s}/(iξ) Σ_n (s)_n / (iξX)^n
    let s = alpha + 1.0;
    let ix = Complex64::new(0.0, xi * big_x);
    let mut term = Complex64::new(1.0, 0.0);
    let mut series = Complex64::new(0.0, 0.0);
    for n in 0..12 {
        series += term;
        term *= (s + n as f64) / ix;
    }
    let osc = -(Complex64::new(0.0, xi * big_x).exp() * big_x.powf(-s) / Complex64::new(0.0, xi)) * series;
    let tail = big_x.powf(-alpha) / alpha - osc.re;
    2.0 * (near + mid + tail)
}

#[test]
fn density_example_matches_trapezoid_oracle() {
    for (alpha, beta) in [(1.5, 0.5), (0.5, 1.5), (1.2, -0.5)] {
        let m = ClosedFormModel::density_example(alpha, beta).unwrap();
        for xi in [0.1, 1.0, 10.0] {
            let got = m.psi(&[xi]).re;
            let want = density_oracle(alpha, beta, xi);
            assert!(
                ((got - want) / want).abs() < 1e-6,
                "alpha {alpha} beta {beta} xi {xi}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn stable_resolvent_envelope() {
    for alpha in [0.5, 1.0, 1.7] {
        let m = ClosedFormModel::symmetric_stable(alpha, 1.0, 1).unwrap();
        for k in 0..40 {
            let xi = 10f64.powf(k as f64 / 8.0);
            let v = m.resolvent_re(&[xi], 1.0) * xi.powf(alpha);
            assert!((0.5..=1.0).contains(&v), "alpha {alpha} xi {xi}: {v}");
        }
    }
}
