//! Closed-form Hausdorff and packing dimensions, double points and the
//! recurrence class, all read off the tail indices `α_i = 1/a_i` and block
//! dimensions `d_i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::SpectralDecomposition;

const ALPHA_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub d: usize,
    /// `(α_i, d_i)` with `α_1 > ... > α_p`.
    pub pairs: Vec<(f64, usize)>,
    /// `α̃_1 ≥ ... ≥ α̃_d`, each `α_i` repeated `d_i` times.
    pub sorted_alphas: Vec<f64>,
}

impl SpectrumSummary {
    pub fn new(mut pairs: Vec<(f64, usize)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::InvalidSpectrum("no spectral blocks".into()));
        }
        for &(a, di) in &pairs {
            if !(a > 0.0 && a <= 2.0 + ALPHA_EPS) {
                return Err(Error::InvalidSpectrum(format!("tail index {a} outside (0, 2]")));
            }
            if di == 0 {
                return Err(Error::InvalidSpectrum("block of dimension 0".into()));
            }
        }
        pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
        for w in pairs.windows(2) {
            if w[0].0 - w[1].0 <= ALPHA_EPS {
                return Err(Error::InvalidSpectrum(format!("repeated tail index {}", w[0].0)));
            }
        }
        let d = pairs.iter().map(|p| p.1).sum();
        let sorted_alphas = pairs
            .iter()
            .flat_map(|&(a, di)| std::iter::repeat_n(a, di))
            .collect();
        Ok(Self {
            d,
            pairs,
            sorted_alphas,
        })
    }

    /// Summary of a decomposition of `E` (or of `E*`; the indices agree).
    pub fn from_decomposition(dec: &SpectralDecomposition) -> Result<Self> {
        Self::new(dec.blocks.iter().map(|b| (b.alpha, b.dim_block)).collect())
    }

    /// `d_i = 1` for every entry of a nonincreasing list of indices.
    pub fn from_sorted_alphas(alphas: &[f64]) -> Result<Self> {
        let mut pairs: Vec<(f64, usize)> = Vec::new();
        for &a in alphas {
            match pairs.last_mut() {
                Some(last) if (last.0 - a).abs() <= ALPHA_EPS => last.1 += 1,
                _ => pairs.push((a, 1)),
            }
        }
        Self::new(pairs)
    }

    pub fn alpha1(&self) -> f64 {
        self.pairs[0].0
    }

    pub fn d1(&self) -> usize {
        self.pairs[0].1
    }

    pub fn alpha2(&self) -> Option<f64> {
        self.pairs.get(1).map(|p| p.0)
    }

    /// `α_1 = 2` with `d_1 = 2`: the only recurrent full case in the plane.
    pub fn is_gaussian_full(&self) -> bool {
        (self.alpha1() - 2.0).abs() <= 1e-9 && self.d1() == 2
    }
}

/// A formula value together with the branch that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub value: f64,
    pub case: String,
}

fn check_s(s: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidInput(format!("dim_H B must lie in [0, 1], got {s}")));
    }
    Ok(())
}

/// Hausdorff dimension of `X(B)` for `dim_H B = s`.
pub fn range_dim(spec: &SpectrumSummary, s: f64) -> Result<Branch> {
    check_s(s)?;
    if spec.d == 1 {
        let a = spec.alpha1();
        return Ok(Branch {
            value: (a * s).min(1.0),
            case: "range d=1: min{alpha*s, 1}".into(),
        });
    }
    let (a1, d1) = (spec.alpha1(), spec.d1() as f64);
    if a1 * s <= d1 {
        Ok(Branch {
            value: a1 * s,
            case: "range case alpha1*s<=d1: alpha1*s".into(),
        })
    } else {
        let a2 = spec.alpha2().ok_or_else(|| {
            Error::InvalidSpectrum(format!("{}; alpha1*s > d1 needs p >= 2", Error::MissingSecondIndex))
        })?;
        Ok(Branch {
            value: 1.0 + a2 * (s - 1.0 / a1),
            case: "range case alpha1*s>d1: 1+alpha2*(s-1/alpha1)".into(),
        })
    }
}

/// Hausdorff dimension of the graph over `B` for `dim_H B = s`.
pub fn graph_dim(spec: &SpectrumSummary, s: f64) -> Result<Branch> {
    check_s(s)?;
    let a1 = spec.alpha1();
    if spec.d == 1 {
        return Ok(if a1 * s <= 1.0 {
            Branch {
                value: s * a1.max(1.0),
                case: "graph d=1 case alpha*s<=1: s*max{alpha,1}".into(),
            }
        } else {
            Branch {
                value: 1.0 + s - 1.0 / a1,
                case: "graph d=1 case alpha*s>1: 1+s-1/alpha".into(),
            }
        });
    }
    let d1 = spec.d1() as f64;
    if a1 * s <= d1 {
        Ok(Branch {
            value: s * a1.max(1.0),
            case: "graph case alpha1*s<=d1: s*max{alpha1,1}".into(),
        })
    } else {
        let a2 = spec.alpha2().ok_or_else(|| {
            Error::InvalidSpectrum(format!("{}; alpha1*s > d1 needs p >= 2", Error::MissingSecondIndex))
        })?;
        Ok(Branch {
            value: 1.0 + a2.max(1.0) * (s - 1.0 / a1),
            case: "graph case alpha1*s>d1: 1+max{alpha2,1}*(s-1/alpha1)".into(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DoublePoints {
    Dim(f64),
    Empty,
}

impl Serialize for DoublePoints {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            DoublePoints::Dim(v) => s.serialize_f64(*v),
            DoublePoints::Empty => s.serialize_str("EMPTY"),
        }
    }
}

impl<'de> Deserialize<'de> for DoublePoints {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(DoublePoints::Dim(v)),
            Raw::Text(t) if t == "EMPTY" => Ok(DoublePoints::Empty),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("unexpected double-point value {t}"))),
        }
    }
}

/// Hausdorff dimension of the double-point set of a symmetric process.
pub fn double_point_dim(spec: &SpectrumSummary) -> Result<(DoublePoints, String)> {
    let a = &spec.sorted_alphas;
    let (v, case) = match spec.d {
        1 => return Err(Error::Dimension1Unsupported),
        2 => (
            (a[0] * (2.0 - 1.0 / a[0] - 1.0 / a[1])).min(2.0 * a[1] * (1.0 - 1.0 / a[0])),
            "double points d=2: min{a1(2-1/a1-1/a2), 2a2(1-1/a1)}",
        ),
        3 => (
            a[0] * (2.0 - 1.0 / a[0] - 1.0 / a[1] - 1.0 / a[2]),
            "double points d=3: a1(2-1/a1-1/a2-1/a3)",
        ),
        _ => return Ok((DoublePoints::Empty, "double points d>=4: empty".into())),
    };
    if v < 0.0 {
        Ok((DoublePoints::Empty, format!("{case} < 0: empty")))
    } else {
        Ok((DoublePoints::Dim(v), case.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recurrence {
    Recurrent,
    Transient,
}

/// Recurrence class of a full strictly operator semistable process.
pub fn classify_recurrence(spec: &SpectrumSummary, is_gaussian_full: bool) -> (Recurrence, String) {
    match spec.d {
        1 if spec.alpha1() >= 1.0 => (Recurrence::Recurrent, "d=1, alpha>=1: recurrent".into()),
        1 => (Recurrence::Transient, "d=1, alpha<1: transient".into()),
        2 if is_gaussian_full => (Recurrence::Recurrent, "d=2 Gaussian (alpha1=2, d1=2): recurrent".into()),
        2 => (Recurrence::Transient, "d=2 non-Gaussian: transient".into()),
        _ => (Recurrence::Transient, "d>=3: transient".into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub range_hausdorff_unit: f64,
    pub range_packing_unit: f64,
    pub graph_hausdorff_unit: f64,
    pub graph_packing_unit: f64,
    pub double_point_dim: Option<DoublePoints>,
    pub recurrence: Recurrence,
    /// Whether `recurrent ⇔ range dimension = d` holds for this spectrum.
    pub recurrence_matches_range: bool,
    pub formula_case: Vec<String>,
}

/// All closed-form values for `B = [0, 1]`.
pub fn dimension_report(spec: &SpectrumSummary) -> Result<DimensionReport> {
    let r = range_dim(spec, 1.0)?;
    let g = graph_dim(spec, 1.0)?;
    let mut cases = vec![r.case.clone(), g.case.clone()];
    let dp = match double_point_dim(spec) {
        Ok((v, c)) => {
            cases.push(c);
            Some(v)
        }
        Err(Error::Dimension1Unsupported) => {
            cases.push("double points: no formula for d=1".into());
            None
        }
        Err(e) => return Err(e),
    };
    let (rec, rc) = classify_recurrence(spec, spec.is_gaussian_full());
    cases.push(rc);
    let full_range = (r.value - spec.d as f64).abs() <= 1e-12;
    Ok(DimensionReport {
        range_hausdorff_unit: r.value,
        range_packing_unit: r.value,
        graph_hausdorff_unit: g.value,
        graph_packing_unit: g.value,
        double_point_dim: dp,
        recurrence: rec,
        recurrence_matches_range: (rec == Recurrence::Recurrent) == full_range,
        formula_case: cases,
    })
}
