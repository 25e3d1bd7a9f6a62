//! Strictly operator semistable models and their Lévy exponents.
//!
//! With `E[exp(i<ξ, X(t)>)] = exp(-t ψ(ξ))`,
//! `ψ(ξ) = i<ξ,b> + ½<ξ,Σξ> + ∫ (1 - e^{i<ξ,x>} + i<ξ,x>/(1+‖x‖²)) φ(dx)`.
//! Atomic models put mass `w·c^{-k}` on every orbit point `c^{kE} x` of each
//! atom `(x, w)`, which gives `c^E φ = c φ`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::density::DensityExponent;
use crate::error::{Error, Result};
use crate::spectral::{decompose, matrix_power, matrix_power_log, ExponentMatrix, DEFAULT_TOL_CLUSTER};

/// Anything with a Lévy exponent.
pub trait LevyExponent: Sync {
    fn dim(&self) -> usize;
    fn psi(&self, xi: &[f64]) -> Complex64;
    /// The scaling exponent `E`, when the law is operator semistable.
    fn exponent(&self) -> Option<ExponentMatrix>;
    fn is_symmetric(&self) -> bool;
    /// Strictly semistable: `μ^c = c^E μ` with no shift.
    fn is_strict(&self) -> bool {
        self.is_symmetric()
    }
    /// Discrete scale `c`; `None` for laws that scale at every `c`.
    fn scale(&self) -> Option<f64> {
        None
    }

    fn eval_f(&self, xi: &[f64]) -> f64 {
        self.psi(xi).re
    }

    fn eval_g(&self, xi: &[f64]) -> f64 {
        self.psi(xi).im
    }

    /// `Re(1/(q + ψ(ξ)))`.
    fn resolvent_re(&self, xi: &[f64], q: f64) -> f64 {
        resolvent_from(self.psi(xi), q)
    }
}

pub fn resolvent_from(psi: Complex64, q: f64) -> f64 {
    let a = q + psi.re;
    a / (a * a + psi.im * psi.im)
}

/// Exponent of the graph process `(t, X(t))`: `ψ̃(ξ₀, ξ) = ψ(ξ) - iξ₀`.
pub struct GraphExponent<'a, L: LevyExponent + ?Sized> {
    pub inner: &'a L,
}

impl<'a, L: LevyExponent + ?Sized> GraphExponent<'a, L> {
    pub fn new(inner: &'a L) -> Self {
        Self { inner }
    }
}

impl<L: LevyExponent + ?Sized> LevyExponent for GraphExponent<'_, L> {
    fn dim(&self) -> usize {
        self.inner.dim() + 1
    }

    fn psi(&self, xi: &[f64]) -> Complex64 {
        self.inner.psi(&xi[1..]) - Complex64::new(0.0, xi[0])
    }

    fn exponent(&self) -> Option<ExponentMatrix> {
        self.inner.exponent().and_then(|e| e.with_leading(1.0).ok())
    }

    fn is_symmetric(&self) -> bool {
        false
    }

    fn scale(&self) -> Option<f64> {
        self.inner.scale()
    }
}

/// Graph exponent evaluated directly: ψ(ξ) - iξ₀.
pub fn graph_exponent<L: LevyExponent + ?Sized>(m: &L, xi0: f64, xi: &[f64]) -> Complex64 {
    m.psi(xi) - Complex64::new(0.0, xi0)
}

/// `H(ξ₀, ξ) = (1 + F)/((1 + F)² + (G - ξ₀)²) = Re(1/(1 + ψ̃))`.
pub fn graph_h<L: LevyExponent + ?Sized>(m: &L, xi0: f64, xi: &[f64]) -> f64 {
    resolvent_from(graph_exponent(m, xi0, xi), 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub x: Vec<f64>,
    pub w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum Truncation {
    Range { k_min: i32, k_max: i32 },
    TailTol { tail_tol: f64 },
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation::TailTol { tail_tol: 1e-8 }
    }
}

/// JSON form of an atomic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomicSpec {
    pub c: f64,
    #[serde(rename = "E")]
    pub e: Vec<Vec<f64>>,
    #[serde(default)]
    pub atoms: Vec<Atom>,
    #[serde(default)]
    pub gaussian: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub drift: Option<Vec<f64>>,
    #[serde(default)]
    pub truncation: Truncation,
    #[serde(default)]
    pub symmetric: bool,
}

/// JSON form of a closed-form model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClosedFormSpec {
    SymmetricStable { alpha: f64, sigma: f64, dim: usize },
    Brownian { sigma: Vec<Vec<f64>> },
    DensityExample { alpha: f64, beta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemistableModel {
    pub c: f64,
    pub e: ExponentMatrix,
    pub atoms: Vec<Atom>,
    pub gaussian: DMatrix<f64>,
    pub drift: Vec<f64>,
    pub truncation: Truncation,
    pub symmetric: bool,
}

fn matrix_from_rows(rows: &[Vec<f64>], d: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidInput(format!("{what} must be {d}x{d}")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

impl SemistableModel {
    pub fn from_spec(spec: &AtomicSpec) -> Result<Self> {
        let e = ExponentMatrix::from_rows(&spec.e)?;
        let d = e.dim();
        let gaussian = match &spec.gaussian {
            Some(g) => matrix_from_rows(g, d, "gaussian")?,
            None => DMatrix::zeros(d, d),
        };
        let drift = spec.drift.clone().unwrap_or_else(|| vec![0.0; d]);
        Self::new(
            spec.c,
            e,
            spec.atoms.clone(),
            gaussian,
            drift,
            spec.truncation,
            spec.symmetric,
        )
    }

    pub fn new(
        c: f64,
        e: ExponentMatrix,
        atoms: Vec<Atom>,
        gaussian: DMatrix<f64>,
        drift: Vec<f64>,
        truncation: Truncation,
        symmetric: bool,
    ) -> Result<Self> {
        let d = e.dim();
        if !(c > 1.0) || !c.is_finite() {
            return Err(Error::InvalidInput(format!("scale c must exceed 1, got {c}")));
        }
        for a in &atoms {
            if a.x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: a.x.len(),
                });
            }
        }
        if gaussian.nrows() != d || gaussian.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: gaussian.nrows(),
            });
        }
        if drift.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: drift.len(),
            });
        }
        match truncation {
            Truncation::Range { k_min, k_max } if k_min > k_max => {
                return Err(Error::InvalidInput("truncation k_min exceeds k_max".into()))
            }
            Truncation::TailTol { tail_tol } if !(tail_tol > 0.0) => {
                return Err(Error::InvalidInput("tail_tol must be positive".into()))
            }
            _ => {}
        }
        Ok(Self {
            c,
            e,
            atoms,
            gaussian,
            drift,
            truncation,
            symmetric,
        })
    }

    /// Symmetric model with atoms `±x` for every given `x`.
    pub fn symmetric_atomic(c: f64, e: ExponentMatrix, half_atoms: &[(Vec<f64>, f64)]) -> Result<Self> {
        let d = e.dim();
        let mut atoms = Vec::with_capacity(2 * half_atoms.len());
        for (x, w) in half_atoms {
            atoms.push(Atom { x: x.clone(), w: *w });
            atoms.push(Atom {
                x: x.iter().map(|v| -v).collect(),
                w: *w,
            });
        }
        Self::new(
            c,
            e,
            atoms,
            DMatrix::zeros(d, d),
            vec![0.0; d],
            Truncation::default(),
            true,
        )
    }

    pub fn dim(&self) -> usize {
        self.e.dim()
    }

    pub fn validate(&self) -> Diagnostics {
        validate_model(self)
    }

    pub fn into_validated(self) -> Result<ValidatedModel> {
        ValidatedModel::new(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub full: bool,
    pub integrable: bool,
    pub strict: bool,
    pub gaussian_consistent: bool,
    /// ψ error bound at `‖ξ‖ = 1` from the truncated orbit.
    pub truncation_tail_bound: f64,
    pub problems: Vec<String>,
}

fn pair_atoms(atoms: &[Atom]) -> Option<Vec<usize>> {
    let mut used = vec![false; atoms.len()];
    let mut reps = Vec::new();
    for i in 0..atoms.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let xi = &atoms[i].x;
        let scale = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        let partner = (0..atoms.len()).find(|&j| {
            !used[j]
                && (atoms[j].w - atoms[i].w).abs() <= 1e-12 * atoms[i].w
                && atoms[j].x.iter().zip(xi).all(|(a, b)| (a + b).abs() <= 1e-12 * scale)
        })?;
        used[partner] = true;
        reps.push(i);
    }
    Some(reps)
}

fn validate_model(m: &SemistableModel) -> Diagnostics {
    let d = m.dim();
    let mut problems = Vec::new();
    for (i, a) in m.atoms.iter().enumerate() {
        if !(a.w > 0.0) || !a.w.is_finite() {
            problems.push(format!("atom {i} has non-positive weight"));
        }
        if a.x.iter().all(|v| *v == 0.0) || a.x.iter().any(|v| !v.is_finite()) {
            problems.push(format!("atom {i} is zero or non-finite"));
        }
    }
    let sym_err = (&m.gaussian - m.gaussian.transpose()).norm();
    let gnorm = m.gaussian.norm();
    let mut psd = sym_err <= 1e-12 * gnorm.max(1.0);
    if psd && gnorm > 0.0 {
        let ev = m.gaussian.clone().symmetric_eigen().eigenvalues;
        psd = ev.iter().all(|&v| v >= -1e-12 * gnorm);
    }
    if !psd {
        problems.push("gaussian part is not symmetric positive semidefinite".into());
    }

    let space = decompose(&m.e, DEFAULT_TOL_CLUSTER);
    let mut integrable = true;
    match &space {
        Ok(dec) => {
            for (i, a) in m.atoms.iter().enumerate() {
                let xn = a.x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if let Ok(parts) = dec.component_project(&a.x) {
                    for (b, p) in dec.blocks.iter().zip(parts) {
                        if b.a <= 0.5 + 1e-9 && p.norm() > 1e-10 * xn {
                            integrable = false;
                            problems.push(format!("atom {i} has mass on a block with a = {}", b.a));
                        }
                    }
                }
            }
        }
        Err(e) => {
            integrable = false;
            problems.push(format!("exponent decomposition failed: {e}"));
        }
    }

    let ce = matrix_power(&m.e, m.c).ok();
    let gaussian_consistent = match &ce {
        Some(p) => {
            let lhs = p * &m.gaussian * p.transpose();
            (lhs - &m.gaussian * m.c).norm() <= 1e-9 * m.c * gnorm.max(1.0)
        }
        None => false,
    };
    if !gaussian_consistent {
        problems.push("gaussian part does not satisfy c^E Σ c^E* = cΣ".into());
    }

    let full = match &ce {
        Some(p) => {
            let mut cols: Vec<DVector<f64>> = Vec::new();
            for a in &m.atoms {
                let mut v = DVector::from_column_slice(&a.x);
                for _ in 0..d {
                    let n = v.norm();
                    if n > 0.0 && n.is_finite() {
                        cols.push(&v / n);
                    }
                    v = p * v;
                }
            }
            for j in 0..d {
                let col = m.gaussian.column(j).into_owned();
                if col.norm() > 0.0 {
                    cols.push(&col / col.norm());
                }
            }
            if cols.is_empty() {
                false
            } else {
                let mat = DMatrix::from_columns(&cols);
                let s = mat.svd(false, false).singular_values;
                let smax = s.max();
                s.iter().filter(|&&v| v > 1e-9 * smax).count() == d
            }
        }
        None => false,
    };
    if !full {
        problems.push("model is not full: orbit and gaussian part do not span R^d".into());
    }

    let paired = pair_atoms(&m.atoms).is_some();
    let drift_zero = m.drift.iter().all(|v| *v == 0.0);
    let strict = m.symmetric && paired && drift_zero && gaussian_consistent;
    if m.symmetric && !paired {
        problems.push("symmetric flag set but atoms are not closed under negation with equal weights".into());
    }
    if m.symmetric && !drift_zero {
        problems.push("symmetric flag set but drift is nonzero".into());
    }

    let truncation_tail_bound = if full && integrable && problems.is_empty() {
        match AtomicOrbit::build(m) {
            Ok(orbit) => {
                let mut xi = vec![0.0; d];
                xi[0] = 1.0;
                orbit.psi_with_bound(&xi).1
            }
            Err(e) => {
                problems.push(format!("orbit construction failed: {e}"));
                f64::INFINITY
            }
        }
    } else {
        f64::INFINITY
    };

    Diagnostics {
        full,
        integrable,
        strict,
        gaussian_consistent,
        truncation_tail_bound,
        problems,
    }
}

/// Precomputed atom orbit with prefix sums for the small-jump expansion.
#[derive(Debug, Clone)]
struct AtomicOrbit {
    d: usize,
    c: f64,
    /// Evaluate only the real part, with paired atoms merged.
    real_only: bool,
    mode: Truncation,
    k0: i32,
    n_atoms: usize,
    /// Flattened `[k][atom][coord]`.
    ys: Vec<f64>,
    /// `w c^{-k}` per `[k][atom]`.
    mass: Vec<f64>,
    /// `‖y‖²/(1+‖y‖²)` per `[k][atom]`.
    shrink: Vec<f64>,
    /// Prefix sums over levels strictly below index `i` (length `levels + 1`).
    m2: Vec<f64>,
    mv: Vec<f64>,
    s2: Vec<f64>,
    s3: Vec<f64>,
    s4: Vec<f64>,
    /// Bound on the same sums below the first stored level.
    below: [f64; 3],
    w_total: f64,
    gaussian: DMatrix<f64>,
    drift: Vec<f64>,
}

const RHO_FLOOR: f64 = 1e-30;
const MAX_LEVELS: usize = 200_000;

impl AtomicOrbit {
    fn build(m: &SemistableModel) -> Result<Self> {
        let d = m.dim();
        let (atoms, real_only): (Vec<Atom>, bool) = match (m.symmetric, pair_atoms(&m.atoms)) {
            (true, Some(reps)) if m.drift.iter().all(|v| *v == 0.0) => (
                reps.iter()
                    .map(|&i| Atom {
                        x: m.atoms[i].x.clone(),
                        w: 2.0 * m.atoms[i].w,
                    })
                    .collect(),
                true,
            ),
            _ => (m.atoms.clone(), false),
        };
        let n_atoms = atoms.len();
        let w_total: f64 = atoms.iter().map(|a| a.w).sum();
        let lc = m.c.ln();
        let tail_tol = match m.truncation {
            Truncation::TailTol { tail_tol } => tail_tol,
            Truncation::Range { .. } => 1e-8,
        };

        let orbit_at = |k: i32| -> Result<Vec<DVector<f64>>> {
            let p = matrix_power_log(&m.e, k as f64 * lc)?;
            Ok(atoms.iter().map(|a| &p * DVector::from_column_slice(&a.x)).collect())
        };

        // upper end: big-jump tail below tail_tol·RHO_FLOOR² even at ρ = RHO_FLOOR
        let mut k_hi = if n_atoms == 0 {
            0
        } else {
            let need = (4.0 * w_total / (tail_tol * RHO_FLOOR * RHO_FLOOR * (m.c - 1.0))).ln() / lc;
            need.ceil().max(1.0) as i32
        };
        let mut k_lo = 0i32;
        if let Truncation::Range { k_min, k_max } = m.truncation {
            k_hi = k_hi.max(k_max);
            k_lo = k_lo.min(k_min);
        }

        let mut levels: Vec<(i32, Vec<DVector<f64>>)> = Vec::new();
        if n_atoms > 0 {
            // descend until the second-moment contribution is negligible
            let mut k = 0i32;
            let mut steps = 0usize;
            loop {
                let ys = orbit_at(k)?;
                let mass = m.c.powf(-(k as f64));
                let m2: f64 = atoms.iter().zip(&ys).map(|(a, y)| a.w * mass * y.norm_squared()).sum();
                levels.push((k, ys));
                steps += 1;
                if steps > MAX_LEVELS {
                    return Err(Error::InvalidInput(
                        "atom orbit second moments decay too slowly; spectrum too close to 1/2".into(),
                    ));
                }
                if k <= k_lo && m2 < 1e-60 {
                    break;
                }
                k -= 1;
            }
            levels.reverse();
            for k in 1..=k_hi {
                match orbit_at(k) {
                    Ok(ys) if ys.iter().all(|y| y.norm() < 1e200) => levels.push((k, ys)),
                    _ => break,
                }
            }
        }

        let k0 = levels.first().map_or(0, |l| l.0);
        let nl = levels.len();
        let mut ys = Vec::with_capacity(nl * n_atoms * d);
        let mut mass = Vec::with_capacity(nl * n_atoms);
        let mut shrink = Vec::with_capacity(nl * n_atoms);
        let mut m2 = vec![0.0; (nl + 1) * d * d];
        let mut mv = vec![0.0; (nl + 1) * d];
        let mut s2 = vec![0.0; nl + 1];
        let mut s3 = vec![0.0; nl + 1];
        let mut s4 = vec![0.0; nl + 1];
        let mut below = [0.0; 3];
        for (li, (k, lys)) in levels.iter().enumerate() {
            let ck = m.c.powf(-(*k as f64));
            let (prev, rest) = m2.split_at_mut((li + 1) * d * d);
            let cur = &mut rest[..d * d];
            cur.copy_from_slice(&prev[li * d * d..]);
            let (pv, rv) = mv.split_at_mut((li + 1) * d);
            let curv = &mut rv[..d];
            curv.copy_from_slice(&pv[li * d..]);
            let (mut a2, mut a3, mut a4) = (0.0, 0.0, 0.0);
            for (a, y) in atoms.iter().zip(lys) {
                let w = a.w * ck;
                let n2 = y.norm_squared();
                ys.extend(y.iter());
                mass.push(w);
                shrink.push(n2 / (1.0 + n2));
                for i in 0..d {
                    for j in 0..d {
                        cur[i * d + j] += w * y[i] * y[j];
                    }
                    curv[i] += w * y[i] * n2 / (1.0 + n2);
                }
                a2 += w * n2;
                a3 += w * n2.powf(1.5);
                a4 += w * n2 * n2;
            }
            s2[li + 1] = s2[li] + a2;
            s3[li + 1] = s3[li] + a3;
            s4[li + 1] = s4[li] + a4;
            if li == 0 {
                // the unstored levels below decay at least as fast as this one
                below = [a2, a3, a4];
            }
        }
        let _ = tail_tol;
        Ok(Self {
            d,
            c: m.c,
            real_only,
            mode: m.truncation,
            k0,
            n_atoms,
            ys,
            mass,
            shrink,
            m2,
            mv,
            s2,
            s3,
            s4,
            below,
            w_total,
            gaussian: m.gaussian.clone(),
            drift: m.drift.clone(),
        })
    }

    fn levels(&self) -> usize {
        self.s2.len() - 1
    }

    fn tail_tol(&self) -> f64 {
        match self.mode {
            Truncation::TailTol { tail_tol } => tail_tol,
            Truncation::Range { .. } => 1e-8,
        }
    }

    /// Bound on the error of the quadratic expansion for levels below `lo`.
    fn small_bound(&self, lo: usize, rho: f64) -> f64 {
        let s4 = self.s4[lo] + self.below[2];
        let s3 = self.s3[lo] + self.below[1];
        let r2 = rho * rho;
        if self.real_only {
            r2 * r2 * s4 / 24.0
        } else {
            r2 * r2 * s4 / 24.0 + r2 * rho * s3 / 6.0
        }
    }

    /// Bound on all levels at or above `hi` (exclusive index).
    fn big_bound(&self, hi: usize, rho: f64) -> f64 {
        if self.n_atoms == 0 {
            return 0.0;
        }
        let k = self.k0 + hi as i32;
        let per = if self.real_only { 2.0 } else { 2.0 + 0.5 * rho };
        per * self.w_total * self.c.powf(-(k as f64)) * self.c / (self.c - 1.0)
    }

    /// Bound for dropping everything below level index `lo` outright.
    fn dropped_small_bound(&self, lo: usize, rho: f64) -> f64 {
        let s2 = self.s2[lo] + self.below[0];
        let s3 = self.s3[lo] + self.below[1];
        if self.real_only {
            rho * rho * s2 / 2.0
        } else {
            rho * rho * s2 / 2.0 + rho * s3
        }
    }

    fn psi_with_bound(&self, xi: &[f64]) -> (Complex64, f64) {
        let d = self.d;
        let rho = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut re = 0.0;
        let mut im = 0.0;
        for i in 0..d {
            im += xi[i] * self.drift[i];
            for j in 0..d {
                re += 0.5 * xi[i] * self.gaussian[(i, j)] * xi[j];
            }
        }
        if rho == 0.0 || self.n_atoms == 0 {
            return (Complex64::new(re, im), 0.0);
        }
        let nl = self.levels();
        let (lo, hi, expand, bound) = match self.mode {
            Truncation::Range { k_min, k_max } => {
                let lo = (k_min - self.k0).clamp(0, nl as i32) as usize;
                let hi = ((k_max - self.k0 + 1).clamp(0, nl as i32) as usize).max(lo);
                (
                    lo,
                    hi,
                    false,
                    self.dropped_small_bound(lo, rho) + self.big_bound(hi, rho),
                )
            }
            Truncation::TailTol { .. } => {
                let target = self.tail_tol() * rho.min(1.0).powi(2);
                // largest lo with small_bound(lo) ≤ target/2
                let (mut a, mut b) = (0usize, nl);
                while a < b {
                    let mid = (a + b).div_ceil(2);
                    if self.small_bound(mid, rho) <= 0.5 * target {
                        a = mid;
                    } else {
                        b = mid - 1;
                    }
                }
                let lo = a;
                // smallest hi ≥ lo with big_bound(hi) ≤ target/2
                let mut hi = lo;
                if self.big_bound(hi, rho) > 0.5 * target {
                    let k_need = (self.big_bound(0, rho) / (0.5 * target)).ln() / self.c.ln();
                    hi = ((k_need.ceil().max(0.0)) as usize).clamp(lo, nl);
                    while hi < nl && self.big_bound(hi, rho) > 0.5 * target {
                        hi += 1;
                    }
                }
                (lo, hi, true, self.small_bound(lo, rho) + self.big_bound(hi, rho))
            }
        };
        if expand {
            let m2 = &self.m2[lo * d * d..(lo + 1) * d * d];
            let mv = &self.mv[lo * d..(lo + 1) * d];
            for i in 0..d {
                for j in 0..d {
                    re += 0.5 * xi[i] * m2[i * d + j] * xi[j];
                }
                if !self.real_only {
                    im -= xi[i] * mv[i];
                }
            }
        }
        let na = self.n_atoms;
        for idx in lo * na..hi * na {
            let y = &self.ys[idx * d..(idx + 1) * d];
            let theta: f64 = y.iter().zip(xi).map(|(a, b)| a * b).sum();
            let w = self.mass[idx];
            let half = 0.5 * theta;
            let s = half.sin();
            re += w * 2.0 * s * s;
            if !self.real_only {
                let t_minus_sin = if theta.abs() < 1e-3 {
                    let t3 = theta * theta * theta;
                    t3 / 6.0 - t3 * theta * theta / 120.0
                } else {
                    theta - theta.sin()
                };
                im += w * (t_minus_sin - theta * self.shrink[idx]);
            }
        }
        (Complex64::new(re, im), bound)
    }
}

/// A model that passed validation; only validated models evaluate ψ.
#[derive(Debug, Clone)]
pub struct ValidatedModel {
    model: SemistableModel,
    diagnostics: Diagnostics,
    orbit: AtomicOrbit,
}

impl ValidatedModel {
    pub fn new(model: SemistableModel) -> Result<Self> {
        let diagnostics = model.validate();
        if !diagnostics.full
            || !diagnostics.integrable
            || !diagnostics
                .problems
                .iter()
                .all(|p| p.starts_with("symmetric flag") || p.starts_with("gaussian part does not satisfy"))
        {
            return Err(Error::NotValidated(diagnostics.problems.join("; ")));
        }
        let orbit = AtomicOrbit::build(&model)?;
        Ok(Self {
            model,
            diagnostics,
            orbit,
        })
    }

    pub fn model(&self) -> &SemistableModel {
        &self.model
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn is_strict(&self) -> bool {
        self.diagnostics.strict
    }

    pub fn require_strict(&self) -> Result<()> {
        if self.is_strict() {
            Ok(())
        } else {
            Err(Error::ModelNotStrict(self.diagnostics.problems.join("; ")))
        }
    }

    /// ψ together with a bound on its truncation error.
    pub fn psi_with_bound(&self, xi: &[f64]) -> (Complex64, f64) {
        self.orbit.psi_with_bound(xi)
    }

    /// Evaluate over a fixed explicit range `k ∈ [k_min, k_max]` with no small-jump expansion.
    pub fn psi_explicit(&self, xi: &[f64], k_min: i32, k_max: i32) -> Complex64 {
        let mut o = self.orbit.clone();
        o.mode = Truncation::Range { k_min, k_max };
        o.psi_with_bound(xi).0
    }
}

impl LevyExponent for ValidatedModel {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn psi(&self, xi: &[f64]) -> Complex64 {
        assert_eq!(xi.len(), self.dim(), "frequency has wrong dimension");
        self.orbit.psi_with_bound(xi).0
    }

    fn exponent(&self) -> Option<ExponentMatrix> {
        Some(self.model.e.clone())
    }

    fn is_symmetric(&self) -> bool {
        self.orbit.real_only
    }

    fn is_strict(&self) -> bool {
        self.diagnostics.strict
    }

    fn scale(&self) -> Option<f64> {
        Some(self.model.c)
    }
}

/// Laws with an explicit exponent.
#[derive(Debug, Clone, PartialEq)]
pub enum ClosedFormModel {
    /// `ψ(ξ) = (σ‖ξ‖)^α`.
    SymmetricStable { alpha: f64, sigma: f64, dim: usize },
    /// `ψ(ξ) = ½<ξ, Σξ>`.
    Brownian { sigma: DMatrix<f64> },
    /// One-dimensional law with a two-regime power density.
    DensityExample(DensityExponent),
}

impl ClosedFormModel {
    pub fn symmetric_stable(alpha: f64, sigma: f64, dim: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) || !(sigma > 0.0) || dim == 0 {
            return Err(Error::InvalidInput(format!(
                "symmetric stable needs 0 < alpha <= 2, sigma > 0, dim >= 1; got {alpha}, {sigma}, {dim}"
            )));
        }
        Ok(Self::SymmetricStable { alpha, sigma, dim })
    }

    pub fn brownian(sigma: DMatrix<f64>) -> Result<Self> {
        if sigma.nrows() != sigma.ncols() || sigma.nrows() == 0 {
            return Err(Error::InvalidInput("brownian covariance must be square".into()));
        }
        if (&sigma - sigma.transpose()).norm() > 1e-12 * sigma.norm().max(1.0) {
            return Err(Error::InvalidInput("brownian covariance must be symmetric".into()));
        }
        if sigma.clone().symmetric_eigen().eigenvalues.min() <= 0.0 {
            return Err(Error::NotValidated(
                "brownian covariance must be positive definite (full)".into(),
            ));
        }
        Ok(Self::Brownian { sigma })
    }

    pub fn standard_brownian(dim: usize) -> Self {
        Self::Brownian {
            sigma: DMatrix::identity(dim, dim),
        }
    }

    pub fn density_example(alpha: f64, beta: f64) -> Result<Self> {
        Ok(Self::DensityExample(DensityExponent::new(alpha, beta)?))
    }

    pub fn from_spec(spec: &ClosedFormSpec) -> Result<Self> {
        match spec {
            ClosedFormSpec::SymmetricStable { alpha, sigma, dim } => Self::symmetric_stable(*alpha, *sigma, *dim),
            ClosedFormSpec::Brownian { sigma } => {
                let d = sigma.len();
                Self::brownian(matrix_from_rows(sigma, d, "sigma")?)
            }
            ClosedFormSpec::DensityExample { alpha, beta } => Self::density_example(*alpha, *beta),
        }
    }
}

impl LevyExponent for ClosedFormModel {
    fn dim(&self) -> usize {
        match self {
            Self::SymmetricStable { dim, .. } => *dim,
            Self::Brownian { sigma } => sigma.nrows(),
            Self::DensityExample(_) => 1,
        }
    }

    fn psi(&self, xi: &[f64]) -> Complex64 {
        assert_eq!(xi.len(), self.dim(), "frequency has wrong dimension");
        let v = match self {
            Self::SymmetricStable { alpha, sigma, .. } => {
                let n = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n == 0.0 {
                    0.0
                } else {
                    (sigma * n).powf(*alpha)
                }
            }
            Self::Brownian { sigma } => {
                let x = DVector::from_column_slice(xi);
                0.5 * x.dot(&(sigma * &x))
            }
            Self::DensityExample(m) => m.psi(xi[0]),
        };
        Complex64::new(v, 0.0)
    }

    fn exponent(&self) -> Option<ExponentMatrix> {
        match self {
            Self::SymmetricStable { alpha, dim, .. } => ExponentMatrix::scalar(1.0 / alpha, *dim).ok(),
            Self::Brownian { sigma } => ExponentMatrix::scalar(0.5, sigma.nrows()).ok(),
            Self::DensityExample(_) => None,
        }
    }

    fn is_symmetric(&self) -> bool {
        true
    }

    fn is_strict(&self) -> bool {
        !matches!(self, Self::DensityExample(_))
    }
}

/// Either kind of model, as loaded from JSON.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Atomic(ValidatedModel),
    ClosedForm(ClosedFormModel),
}

impl LevyExponent for AnyModel {
    fn dim(&self) -> usize {
        match self {
            Self::Atomic(m) => m.dim(),
            Self::ClosedForm(m) => m.dim(),
        }
    }
    fn psi(&self, xi: &[f64]) -> Complex64 {
        match self {
            Self::Atomic(m) => m.psi(xi),
            Self::ClosedForm(m) => m.psi(xi),
        }
    }
    fn exponent(&self) -> Option<ExponentMatrix> {
        match self {
            Self::Atomic(m) => m.exponent(),
            Self::ClosedForm(m) => m.exponent(),
        }
    }
    fn is_symmetric(&self) -> bool {
        match self {
            Self::Atomic(m) => m.is_symmetric(),
            Self::ClosedForm(m) => m.is_symmetric(),
        }
    }
    fn is_strict(&self) -> bool {
        match self {
            Self::Atomic(m) => m.is_strict(),
            Self::ClosedForm(m) => m.is_strict(),
        }
    }
    fn scale(&self) -> Option<f64> {
        match self {
            Self::Atomic(m) => m.scale(),
            Self::ClosedForm(m) => m.scale(),
        }
    }
}
