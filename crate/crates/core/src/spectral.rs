//! Spectral decomposition of a scaling exponent.
//!
//! The exponent `E` of an operator semistable law is split by the distinct real
//! parts `a_1 < ... < a_p` of its eigenvalues into `E`-invariant subspaces
//! `V_1 ⊕ ... ⊕ V_p`. Each block also carries the Jordan refinement
//! `V_i = U_i1 ⊕ ... ⊕ U_iq(i)`, where nonzero vectors of `U_ij` have nilpotent
//! order exactly `j`.
//!
//! The inner product used downstream is the one in which the computed block
//! bases are orthonormal and the blocks mutually orthogonal, i.e.
//! `<x, y>_E = <B^{-1} x, B^{-1} y>` for the change of basis `B`.

use std::ops::Range;

use nalgebra::{Complex, DMatrix, DVector, Schur, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

type C64 = Complex<f64>;

/// Default single-linkage threshold for grouping eigenvalue real parts.
pub const DEFAULT_TOL_CLUSTER: f64 = 1e-8;
/// Relative rank tolerance for Jordan chain detection.
pub const RANK_TOL: f64 = 1e-9;
const MEAN_RANK_TOL: f64 = 1e-12;
const POWER_RANK_TOL: f64 = 1e-10;
/// Slack below 1/2 tolerated for the smallest eigenvalue real part.
pub const EIG_TOL: f64 = 1e-9;

/// Square real matrix `E` used as a scaling exponent.
///
/// Construction checks invertibility and `Re(λ) ≥ 1/2` for every eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentMatrix {
    entries: DMatrix<f64>,
}

impl ExponentMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                got: entries.ncols(),
            });
        }
        if entries.nrows() == 0 {
            return Err(Error::InvalidInput("exponent matrix is empty".into()));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("exponent matrix has non-finite entries".into()));
        }
        let svals = entries.clone().svd(false, false).singular_values;
        let smax = svals.max();
        let smin = svals.min();
        if smin <= 1e-13 * smax.max(1.0) {
            return Err(Error::NonInvertible(smin));
        }
        let groups = eigen_groups(&entries);
        let low: Vec<(f64, f64)> = groups
            .iter()
            .filter(|g| g.value.re < 0.5 - EIG_TOL)
            .map(|g| (g.value.re, g.value.im))
            .collect();
        if !low.is_empty() {
            return Err(Error::EigenRealPartBelowHalf(low));
        }
        Ok(Self { entries })
    }

    /// Build from row-major rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: r.len(),
                });
            }
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// `a·I` in dimension `d`.
    pub fn scalar(a: f64, d: usize) -> Result<Self> {
        Self::new(DMatrix::identity(d, d) * a)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.entries.row(i).iter().copied().collect())
            .collect()
    }

    /// Transpose. The spectrum is unchanged, so no re-validation is needed.
    pub fn adjoint(&self) -> Self {
        Self {
            entries: self.entries.transpose(),
        }
    }

    /// Block-diagonal `lead ⊕ E`, the exponent of the graph process when `lead = 1`.
    pub fn with_leading(&self, lead: f64) -> Result<Self> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d + 1, d + 1);
        m[(0, 0)] = lead;
        m.view_mut((1, 1), (d, d)).copy_from(&self.entries);
        Self::new(m)
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        Schur::new(self.entries.clone())
            .complex_eigenvalues()
            .iter()
            .copied()
            .collect()
    }
}

/// A numerically multiple eigenvalue: computed eigenvalues that were merged
/// because their spread is consistent with a defective eigenvalue.
#[derive(Debug, Clone, Copy)]
struct EigenGroup {
    value: C64,
    mult: usize,
}

/// Radius within which `m` computed eigenvalues are treated as one eigenvalue
/// of algebraic multiplicity `m`. A Jordan block of order `m` perturbs its
/// eigenvalue by `O(eps^{1/m})`.
fn merge_radius(m: usize, scale: f64) -> f64 {
    10.0 * scale * f64::EPSILON.powf(1.0 / m as f64)
}

fn eigen_groups(m: &DMatrix<f64>) -> Vec<EigenGroup> {
    let scale = m.norm().max(1.0);
    let eig = Schur::new(m.clone()).complex_eigenvalues();
    let mc = m.map(|v| C64::new(v, 0.0));
    let n = m.nrows();
    // A cluster of computed eigenvalues is one defective eigenvalue only if
    // `E - μI` is numerically singular at the mean but has nullity below the count.
    // The mean of a true cluster is accurate to rounding, so the singularity test is tight.
    let defective = |mu: C64, mult: usize| {
        let mut shifted = mc.clone();
        for k in 0..n {
            shifted[(k, k)] -= mu;
        }
        let nullity = n - numeric_rank(&shifted, MEAN_RANK_TOL * scale);
        nullity >= 1 && nullity < mult
    };
    // `(E - μI)^m` must have `m` negligible singular values, which rejects a
    // mean that happens to sit on one eigenvalue of a wider spread.
    let algebraic = |mu: C64, mult: usize| {
        let mut shifted = mc.clone();
        for k in 0..n {
            shifted[(k, k)] -= mu;
        }
        let smax = shifted.clone().svd(false, false).singular_values.max();
        let mut power = shifted.clone();
        for _ in 1..mult {
            power = &power * &shifted;
        }
        let sv = power.svd(false, false).singular_values;
        sv.iter()
            .filter(|&&v| v <= POWER_RANK_TOL * smax.powi(mult as i32))
            .count()
            >= mult
    };
    // largest multiplicities first: each seed with its m-1 nearest neighbours
    let mut left: Vec<C64> = eig.iter().copied().collect();
    let mut groups: Vec<EigenGroup> = Vec::new();
    let mut m = left.len();
    while m >= 2 && left.len() >= 2 {
        let mut merged = None;
        for seed in 0..left.len() {
            let mut idx: Vec<usize> = (0..left.len()).collect();
            idx.sort_by(|&x, &y| (left[x] - left[seed]).norm().total_cmp(&(left[y] - left[seed]).norm()));
            idx.truncate(m);
            let mean = idx.iter().map(|&i| left[i]).sum::<C64>() / m as f64;
            let spread = idx.iter().map(|&i| (left[i] - mean).norm()).fold(0.0, f64::max);
            if spread <= merge_radius(m, scale)
                && (spread <= 100.0 * f64::EPSILON * scale || defective(mean, m))
                && algebraic(mean, m)
            {
                merged = Some((idx, mean));
                break;
            }
        }
        match merged {
            Some((mut idx, mean)) => {
                idx.sort_unstable_by(|x, y| y.cmp(x));
                for i in idx {
                    left.remove(i);
                }
                groups.push(EigenGroup { value: mean, mult: m });
                m = m.min(left.len());
            }
            None => m -= 1,
        }
    }
    groups.extend(left.into_iter().map(|l| EigenGroup { value: l, mult: 1 }));
    groups
}

/// One invariant subspace `V_i` with common eigenvalue real part `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBlock {
    pub a: f64,
    pub alpha: f64,
    pub dim_block: usize,
    /// Sizes of the (complex) Jordan blocks of `E` restricted to `V_i`.
    pub jordan_orders: Vec<usize>,
    pub basis_columns: Range<usize>,
    /// Orthonormal bases (in block coordinates) of `U_i1, ..., U_iq`.
    heights: Vec<DMatrix<f64>>,
}

impl SpectralBlock {
    /// `q(i)`, the largest Jordan order.
    pub fn max_order(&self) -> usize {
        self.jordan_orders.iter().copied().max().unwrap_or(1)
    }

    /// Dimension of `U_ij` for `j = 1..=q`.
    pub fn height_dims(&self) -> Vec<usize> {
        self.heights.iter().map(|h| h.ncols()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub blocks: Vec<SpectralBlock>,
    /// Columns grouped by block; orthonormal within each block.
    pub change_of_basis: DMatrix<f64>,
    basis_inv: DMatrix<f64>,
    pub tol_cluster: f64,
}

/// Serializable summary of a decomposition.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DecompositionReport {
    pub blocks: Vec<BlockReport>,
    /// Row-major change of basis.
    pub basis: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BlockReport {
    pub a: f64,
    pub alpha: f64,
    pub dim: usize,
    pub jordan_orders: Vec<usize>,
}

/// Decompose `E` by the distinct real parts of its eigenvalues.
pub fn decompose(e: &ExponentMatrix, tol_cluster: f64) -> Result<SpectralDecomposition> {
    if !(tol_cluster > 0.0) {
        return Err(Error::InvalidInput(format!(
            "tol_cluster must be positive, got {tol_cluster}"
        )));
    }
    let m = e.matrix();
    let d = e.dim();
    let mut groups = eigen_groups(m);
    groups.sort_by(|x, y| x.value.re.total_cmp(&y.value.re));

    // single-linkage on real parts
    let mut clusters: Vec<Vec<EigenGroup>> = Vec::new();
    for g in groups {
        match clusters.last_mut() {
            Some(last) if g.value.re - last.last().unwrap().value.re <= tol_cluster => last.push(g),
            _ => clusters.push(vec![g]),
        }
    }
    for c in &clusters {
        let lo = c.first().unwrap().value.re;
        let hi = c.last().unwrap().value.re;
        if hi - lo >= tol_cluster {
            return Err(Error::ClusterAmbiguous {
                lower: lo,
                upper: hi,
                tol: tol_cluster,
            });
        }
    }
    for w in clusters.windows(2) {
        let lo = w[0].last().unwrap().value.re;
        let hi = w[1].first().unwrap().value.re;
        if hi - lo < 2.0 * tol_cluster {
            return Err(Error::ClusterAmbiguous {
                lower: lo,
                upper: hi,
                tol: tol_cluster,
            });
        }
    }

    let mut bases = Vec::with_capacity(clusters.len());
    for c in &clusters {
        let di: usize = c.iter().map(|g| g.mult).sum();
        let q = refine_invariant(m, cluster_basis(m, c, di));
        bases.push(q);
    }

    let mut b = DMatrix::zeros(d, d);
    let mut col = 0;
    let mut ranges = Vec::new();
    for q in &bases {
        b.view_mut((0, col), (d, q.ncols())).copy_from(q);
        ranges.push(col..col + q.ncols());
        col += q.ncols();
    }
    let basis_inv = b
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidSpectrum("invariant subspaces are not complementary".into()))?;

    let mut blocks = Vec::with_capacity(clusters.len());
    for ((c, q), range) in clusters.iter().zip(&bases).zip(ranges) {
        let mi = q.transpose() * m * q;
        let di = mi.nrows();
        let a = mi.trace() / di as f64;
        let mut jordan_orders = Vec::new();
        for g in c {
            jordan_orders.extend(jordan_sizes(&mi, g.value, g.mult));
        }
        jordan_orders.sort_unstable_by(|x, y| y.cmp(x));
        let q_max = jordan_orders.iter().copied().max().unwrap_or(1);
        let heights = if q_max == 1 {
            vec![DMatrix::identity(di, di)]
        } else {
            height_bases(&mi, c, q_max)
        };
        blocks.push(SpectralBlock {
            a,
            alpha: 1.0 / a,
            dim_block: di,
            jordan_orders,
            basis_columns: range,
            heights,
        });
    }

    Ok(SpectralDecomposition {
        blocks,
        change_of_basis: b,
        basis_inv,
        tol_cluster,
    })
}

/// Orthonormal basis of the `k`-dimensional numerical kernel of `a`.
/// Orthonormal basis of `ker Π_g (E - μ_g)^{m_g}` over the groups of one cluster.
fn cluster_basis(m: &DMatrix<f64>, c: &[EigenGroup], di: usize) -> DMatrix<f64> {
    let d = m.nrows();
    let mc = m.map(|v| C64::new(v, 0.0));
    let mut f = DMatrix::<C64>::identity(d, d);
    for g in c {
        let mut factor = mc.clone();
        for k in 0..d {
            factor[(k, k)] -= g.value;
        }
        let nrm = factor.norm();
        if nrm > 0.0 {
            factor.unscale_mut(nrm);
        }
        for _ in 0..g.mult {
            f = &f * &factor;
        }
    }
    null_space_real(&f.map(|z| z.re), di)
}

/// Newton refinement of an orthonormal basis `q` of an invariant subspace:
/// in coordinates `[q q⊥]` the coupling block `A21` is removed by solving
/// `A22 X - X A11 = -A21` and rotating `q` towards `q + q⊥ X`.
fn refine_invariant(m: &DMatrix<f64>, mut q: DMatrix<f64>) -> DMatrix<f64> {
    let (d, k) = q.shape();
    if k == 0 || k == d {
        return q;
    }
    let coupling = |q: &DMatrix<f64>| {
        let comp = complement(q);
        let a21 = comp.transpose() * m * q;
        (comp, a21)
    };
    let (mut comp, mut a21) = coupling(&q);
    for _ in 0..4 {
        let a11 = q.transpose() * m * &q;
        let a22 = comp.transpose() * m * &comp;
        let r = d - k;
        // vec(A22 X - X A11) = (I_k ⊗ A22 - A11ᵀ ⊗ I_r) vec X
        let mut sys = DMatrix::zeros(r * k, r * k);
        for j in 0..k {
            for i in 0..k {
                for a in 0..r {
                    sys[(j * r + a, i * r + a)] -= a11[(i, j)];
                }
            }
            let mut diag = sys.view_mut((j * r, j * r), (r, r));
            diag += &a22;
        }
        let rhs = DVector::from_iterator(r * k, a21.iter().map(|v| -v));
        let Some(x) = sys.lu().solve(&rhs) else {
            break;
        };
        let x = DMatrix::from_column_slice(r, k, x.as_slice());
        let next = (&q + &comp * x).qr().q();
        let (next_comp, next_a21) = coupling(&next);
        if next_a21.norm() >= a21.norm() {
            break;
        }
        q = next;
        comp = next_comp;
        a21 = next_a21;
    }
    q
}

fn complement(q: &DMatrix<f64>) -> DMatrix<f64> {
    let (d, k) = q.shape();
    let proj = DMatrix::identity(d, d) - q * q.transpose();
    let eig = nalgebra::SymmetricEigen::new(proj);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    DMatrix::from_fn(d, d - k, |i, j| eig.eigenvectors[(i, order[j])])
}

fn null_space_real(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = a.ncols();
    if k == 0 {
        return DMatrix::zeros(n, 0);
    }
    if a.iter().all(|v| *v == 0.0) {
        return DMatrix::identity(n, k);
    }
    let svd = SVD::new(a.clone(), false, true);
    let vt = svd.v_t.expect("v_t requested");
    vt.rows(n - k, k).transpose()
}

fn null_space_complex(a: &DMatrix<C64>, k: usize) -> DMatrix<C64> {
    let n = a.ncols();
    if a.iter().all(|v| v.norm() == 0.0) {
        return DMatrix::identity(n, k);
    }
    let svd = SVD::new(a.clone(), false, true);
    let vt = svd.v_t.expect("v_t requested");
    vt.rows(n - k, k).adjoint()
}

fn numeric_rank<T: nalgebra::ComplexField<RealField = f64>>(a: &DMatrix<T>, tol: f64) -> usize {
    if a.iter().all(|v| v.clone().modulus() == 0.0) {
        return 0;
    }
    let s = a.clone().svd(false, false).singular_values;
    s.iter().filter(|&&v| v > tol).count()
}

/// Complex Jordan block sizes of eigenvalue `mu` (algebraic multiplicity `mult`) of `m`.
fn jordan_sizes(m: &DMatrix<f64>, mu: C64, mult: usize) -> Vec<usize> {
    let n = m.nrows();
    let mut shifted = m.map(|v| C64::new(v, 0.0));
    for k in 0..n {
        shifted[(k, k)] -= mu;
    }
    let base = if shifted.iter().all(|v| v.norm() == 0.0) {
        1.0
    } else {
        shifted.clone().svd(false, false).singular_values.max().max(1.0)
    };
    let mut ranks = vec![n];
    let mut power = DMatrix::<C64>::identity(n, n);
    for k in 1..=mult {
        power = &power * &shifted;
        ranks.push(numeric_rank(&power, RANK_TOL * base.powi(k as i32)));
    }
    // blocks of size >= k: ranks[k-1] - ranks[k]
    let at_least: Vec<usize> = (1..=mult).map(|k| ranks[k - 1].saturating_sub(ranks[k])).collect();
    let mut sizes = Vec::new();
    for k in 1..=mult {
        let next = if k < mult { at_least[k] } else { 0 };
        for _ in 0..at_least[k - 1].saturating_sub(next) {
            sizes.push(k);
        }
    }
    if sizes.iter().sum::<usize>() != mult {
        // rank detection was inconsistent; fall back to the defect count
        let blocks = at_least[0].max(1);
        let mut rem = mult;
        sizes.clear();
        for b in 0..blocks {
            let s = rem / (blocks - b);
            sizes.push(s);
            rem -= s;
        }
    }
    sizes
}

/// Bases of `U_j = K_j ⊖ K_{j-1}` with `K_j = ker N^j`, `N` the nilpotent part of `m`.
fn height_bases(m: &DMatrix<f64>, groups: &[EigenGroup], q: usize) -> Vec<DMatrix<f64>> {
    let n = m.nrows();
    let mc = m.map(|v| C64::new(v, 0.0));
    let mut w = DMatrix::<C64>::zeros(n, n);
    let mut diag = Vec::with_capacity(n);
    let mut col = 0;
    for g in groups {
        let mut shifted = mc.clone();
        for k in 0..n {
            shifted[(k, k)] -= g.value;
        }
        let mut p = DMatrix::<C64>::identity(n, n);
        for _ in 0..g.mult {
            p = &p * &shifted;
        }
        let ker = null_space_complex(&p, g.mult);
        w.view_mut((0, col), (n, g.mult)).copy_from(&ker);
        col += g.mult;
        diag.extend(std::iter::repeat_n(g.value, g.mult));
    }
    let semisimple = match w.clone().try_inverse() {
        Some(winv) => (&w * DMatrix::from_diagonal(&DVector::from_vec(diag)) * winv).map(|z| z.re),
        None => DMatrix::identity(n, n) * (m.trace() / n as f64),
    };
    let nil = m - semisimple;
    let base = nil.norm().max(1.0);

    let mut kernels: Vec<DMatrix<f64>> = vec![DMatrix::zeros(n, 0)];
    let mut power = DMatrix::<f64>::identity(n, n);
    for j in 1..=q {
        power = &power * &nil;
        let kdim = if j == q {
            n
        } else {
            n - numeric_rank(&power, RANK_TOL * base.powi(j as i32))
        };
        let prev = kernels.last().unwrap().ncols();
        let kdim = kdim.max(prev);
        kernels.push(if kdim == n {
            DMatrix::identity(n, n)
        } else {
            null_space_real(&power, kdim)
        });
    }
    let mut heights = Vec::with_capacity(q);
    for j in 1..=q {
        let prev = &kernels[j - 1];
        let cur = &kernels[j];
        let extra = cur.ncols() - prev.ncols();
        if extra == 0 {
            heights.push(DMatrix::zeros(n, 0));
            continue;
        }
        let proj = DMatrix::identity(n, n) - prev * prev.transpose();
        let z = proj * cur;
        let svd = SVD::new(z, true, false);
        let u = svd.u.expect("u requested");
        heights.push(u.columns(0, extra).into_owned());
    }
    heights
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.change_of_basis.nrows()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn basis_inverse(&self) -> &DMatrix<f64> {
        &self.basis_inv
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }

    /// Coordinates of `x` in the adapted basis.
    pub fn coords(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check_dim(x.len())?;
        Ok(&self.basis_inv * DVector::from_column_slice(x))
    }

    /// Norm in the inner product that makes the blocks orthogonal.
    pub fn norm(&self, x: &[f64]) -> Result<f64> {
        Ok(self.coords(x)?.norm())
    }

    /// `‖x_i‖` for every block.
    pub fn block_norms(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.coords(x)?;
        Ok(self
            .blocks
            .iter()
            .map(|b| y.rows(b.basis_columns.start, b.dim_block).norm())
            .collect())
    }

    /// Spectral projector onto `V_i` along the other blocks.
    pub fn projector(&self, i: usize) -> DMatrix<f64> {
        let r = &self.blocks[i].basis_columns;
        let cols = self.change_of_basis.columns(r.start, r.len());
        let rows = self.basis_inv.rows(r.start, r.len());
        cols * rows
    }

    /// Split `x = x_1 + ... + x_p` with `x_i ∈ V_i`.
    pub fn component_project(&self, x: &[f64]) -> Result<Vec<DVector<f64>>> {
        let y = self.coords(x)?;
        Ok(self
            .blocks
            .iter()
            .map(|b| {
                let r = &b.basis_columns;
                self.change_of_basis.columns(r.start, r.len()) * y.rows(r.start, r.len())
            })
            .collect())
    }

    /// `Σ_i ‖ξ_i‖^{α_i}`.
    pub fn anisotropy_norm(&self, xi: &[f64]) -> Result<f64> {
        Ok(self
            .block_norms(xi)?
            .iter()
            .zip(&self.blocks)
            .map(|(n, b)| if *n == 0.0 { 0.0 } else { n.powf(b.alpha) })
            .sum())
    }

    /// `‖x_ij‖` for every block `i` and Jordan height `j`.
    pub fn height_norms(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let y = self.coords(x)?;
        Ok(self
            .blocks
            .iter()
            .map(|b| {
                let yi = y.rows(b.basis_columns.start, b.dim_block);
                b.heights.iter().map(|h| (h.transpose() * &yi).norm()).collect()
            })
            .collect())
    }

    /// Explicit asymptotic inverse `t(r)` of `R(t) = ‖t^{E*} x‖^{-1}`:
    /// `Σ_i Σ_j (α_i^{j-1}/(j-1)!)^{α_i} r^{α_i} (log r)^{α_i (j-1)} ‖x_ij‖^{α_i}`.
    pub fn asymptotic_inverse(&self, r: f64, x: &[f64]) -> Result<f64> {
        if !(r > 1.0) {
            return Err(Error::RadiusTooSmall(r));
        }
        let hn = self.height_norms(x)?;
        let lr = r.ln();
        let mut t = 0.0;
        for (b, norms) in self.blocks.iter().zip(&hn) {
            let al = b.alpha;
            let mut fact = 1.0;
            for (j0, &n) in norms.iter().enumerate() {
                if j0 > 0 {
                    fact *= j0 as f64;
                }
                if n == 0.0 {
                    continue;
                }
                let coef = (al.powi(j0 as i32) / fact).powf(al);
                t += coef * r.powf(al) * lr.powf(al * j0 as f64) * n.powf(al);
            }
        }
        if !(t > 0.0) {
            return Err(Error::InvalidInput("direction x must be nonzero".into()));
        }
        Ok(t)
    }

    /// `θ_{r,x} = t(r)^{-E*} r x`. `self` must be the decomposition of `E*`.
    pub fn theta(&self, e: &ExponentMatrix, r: f64, x: &[f64]) -> Result<DVector<f64>> {
        self.check_dim(e.dim())?;
        let t = self.asymptotic_inverse(r, x)?;
        let p = matrix_power(&e.adjoint(), 1.0 / t)?;
        Ok(p * DVector::from_column_slice(x) * r)
    }

    pub fn report(&self) -> DecompositionReport {
        DecompositionReport {
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockReport {
                    a: b.a,
                    alpha: b.alpha,
                    dim: b.dim_block,
                    jordan_orders: b.jordan_orders.clone(),
                })
                .collect(),
            basis: (0..self.dim())
                .map(|i| self.change_of_basis.row(i).iter().copied().collect())
                .collect(),
        }
    }
}

/// `t^E = exp(log(t) E)`.
pub fn matrix_power(e: &ExponentMatrix, t: f64) -> Result<DMatrix<f64>> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidInput(format!("matrix power needs t > 0, got {t}")));
    }
    if t == 1.0 {
        return Ok(DMatrix::identity(e.dim(), e.dim()));
    }
    matrix_power_log(e, t.ln()).map_err(|_| Error::RangeOverflow(t))
}

/// `exp(log_t·E)`, usable when `t` itself is outside the `f64` range.
pub fn matrix_power_log(e: &ExponentMatrix, log_t: f64) -> Result<DMatrix<f64>> {
    let p = (e.matrix() * log_t).exp();
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::RangeOverflow(log_t.exp()));
    }
    Ok(p)
}

/// Write `t = c^k m` with `k ∈ ℤ` and `m ∈ [1, c)`.
pub fn split_scale(t: f64, c: f64) -> (i32, f64) {
    assert!(t > 0.0 && c > 1.0, "split_scale needs t > 0 and c > 1");
    let mut k = (t.ln() / c.ln()).floor() as i32;
    let mut m = t / c.powi(k);
    if m >= c {
        k += 1;
        m = t / c.powi(k);
    }
    if m < 1.0 {
        k -= 1;
        m = t / c.powi(k);
    }
    (k, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::E as EULER;

    fn jordan() -> ExponentMatrix {
        ExponentMatrix::from_rows(&[vec![0.75, 1.0], vec![0.0, 0.75]]).unwrap()
    }

    #[test]
    fn diagonal_two_blocks() {
        let d = decompose(&ExponentMatrix::diagonal(&[0.5, 0.75]).unwrap(), DEFAULT_TOL_CLUSTER).unwrap();
        assert_eq!(d.num_blocks(), 2);
        assert_relative_eq!(d.blocks[0].a, 0.5, epsilon = 1e-14);
        assert_relative_eq!(d.blocks[1].a, 0.75, epsilon = 1e-14);
        assert_relative_eq!(d.blocks[0].alpha, 2.0, epsilon = 1e-13);
        assert_relative_eq!(d.blocks[1].alpha, 4.0 / 3.0, epsilon = 1e-13);
        assert_eq!(d.blocks[0].dim_block, 1);
        assert_eq!(d.blocks[1].jordan_orders, vec![1]);
    }

    #[test]
    fn single_jordan_block() {
        let d = decompose(&jordan(), DEFAULT_TOL_CLUSTER).unwrap();
        assert_eq!(d.num_blocks(), 1);
        assert_relative_eq!(d.blocks[0].a, 0.75, epsilon = 1e-14);
        assert_eq!(d.blocks[0].dim_block, 2);
        assert_eq!(d.blocks[0].jordan_orders, vec![2]);
        assert_eq!(d.blocks[0].height_dims(), vec![1, 1]);
    }

    #[test]
    fn complex_pair_is_semisimple() {
        let e = ExponentMatrix::from_rows(&[vec![1.0, -2.0], vec![2.0, 1.0]]).unwrap();
        let d = decompose(&e, DEFAULT_TOL_CLUSTER).unwrap();
        assert_eq!(d.num_blocks(), 1);
        assert_relative_eq!(d.blocks[0].a, 1.0, epsilon = 1e-14);
        assert_eq!(d.blocks[0].dim_block, 2);
        assert_eq!(d.blocks[0].max_order(), 1);
    }

    #[test]
    fn rejects_low_real_part_and_singular() {
        assert!(matches!(
            ExponentMatrix::diagonal(&[0.4, 1.0]),
            Err(Error::EigenRealPartBelowHalf(_))
        ));
        assert!(matches!(
            ExponentMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]),
            Err(Error::NonInvertible(_))
        ));
    }

    #[test]
    fn ambiguous_clusters_are_refused() {
        let e = ExponentMatrix::diagonal(&[0.7, 0.7 + 1.5e-8]).unwrap();
        assert!(matches!(decompose(&e, 1e-8), Err(Error::ClusterAmbiguous { .. })));
        assert_eq!(decompose(&e, 1e-6).unwrap().num_blocks(), 1);
    }

    #[test]
    fn matrix_power_examples() {
        let p = matrix_power(&ExponentMatrix::scalar(1.0, 2).unwrap(), 7.0).unwrap();
        assert_relative_eq!(p, DMatrix::identity(2, 2) * 7.0, epsilon = 1e-12);
        let p = matrix_power(&ExponentMatrix::diagonal(&[0.5, 2.0]).unwrap(), 4.0).unwrap();
        assert_relative_eq!(
            p,
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 16.0])),
            epsilon = 1e-12
        );
    }

    #[test]
    fn matrix_power_jordan_matches_series() {
        let e = jordan();
        let p = matrix_power(&e, EULER).unwrap();
        // 30-term Taylor series of exp(E)
        let mut term = DMatrix::<f64>::identity(2, 2);
        let mut sum = term.clone();
        for n in 1..30 {
            term = &term * e.matrix() / n as f64;
            sum += &term;
        }
        assert_relative_eq!(p, sum, epsilon = 1e-13);
        let ea = 0.75f64.exp();
        assert_relative_eq!(p, DMatrix::from_row_slice(2, 2, &[ea, ea, 0.0, ea]), epsilon = 1e-13);
    }

    #[test]
    fn split_scale_examples() {
        assert_eq!(split_scale(5.0, 2.0), (2, 1.25));
        assert_eq!(split_scale(1.0, 3.0), (0, 1.0));
        let (k, m) = split_scale(0.3, 2.0);
        assert_eq!(k, -2);
        assert_relative_eq!(m, 1.2, max_relative = 1e-15);
        let (k, m) = split_scale(8.0, 2.0);
        assert_eq!((k, m), (3, 1.0));
    }

    #[test]
    fn projections_diagonal_and_zero() {
        let d = decompose(&ExponentMatrix::diagonal(&[0.5, 0.75]).unwrap(), 1e-8).unwrap();
        let comps = d.component_project(&[3.0, 4.0]).unwrap();
        assert_relative_eq!(comps[0].norm(), 3.0, epsilon = 1e-14);
        assert_relative_eq!(comps[0][0].abs(), 3.0, epsilon = 1e-14);
        assert_relative_eq!(comps[1][1].abs(), 4.0, epsilon = 1e-14);
        assert!(d
            .component_project(&[0.0, 0.0])
            .unwrap()
            .iter()
            .all(|c| c.norm() == 0.0));
        assert!(matches!(
            d.component_project(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn projections_rotated() {
        let th: f64 = 0.6;
        let q = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let base = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.75]));
        let e = ExponentMatrix::new(&q * base * q.transpose()).unwrap();
        let d = decompose(&e, 1e-8).unwrap();
        let x: Vec<f64> = q.column(0).iter().copied().collect();
        let comps = d.component_project(&x).unwrap();
        // projector arithmetic: P_1 = q e1 e1ᵀ qᵀ
        let p1 = q.column(0) * q.column(0).transpose();
        assert_relative_eq!(d.projector(0), p1, epsilon = 1e-12);
        assert_relative_eq!(comps[0], DVector::from_vec(x.clone()), epsilon = 1e-12);
        assert!(comps[1].norm() < 1e-12);
    }

    #[test]
    fn anisotropy_examples() {
        let d = decompose(&ExponentMatrix::diagonal(&[0.5, 0.75]).unwrap(), 1e-8).unwrap();
        assert_relative_eq!(d.anisotropy_norm(&[2.0, 0.0]).unwrap(), 4.0, epsilon = 1e-12);
        assert_relative_eq!(d.anisotropy_norm(&[0.0, 8.0]).unwrap(), 16.0, epsilon = 1e-12);
        assert_relative_eq!(d.anisotropy_norm(&[2.0, 8.0]).unwrap(), 20.0, epsilon = 1e-12);
        assert_eq!(d.anisotropy_norm(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn asymptotic_inverse_examples() {
        let alpha = 1.7;
        let e = ExponentMatrix::scalar(1.0 / alpha, 1).unwrap();
        let d = decompose(&e, 1e-8).unwrap();
        for &(r, x) in &[(2.0, 1.0), (50.0, -0.3), (1e5, 2.5)] {
            let t: f64 = d.asymptotic_inverse(r, &[x]).unwrap();
            assert_relative_eq!(t, (r * f64::abs(x)).powf(alpha), max_relative = 1e-12);
        }
        let d = decompose(&ExponentMatrix::diagonal(&[0.5]).unwrap(), 1e-8).unwrap();
        assert_relative_eq!(d.asymptotic_inverse(10.0, &[1.0]).unwrap(), 100.0, max_relative = 1e-12);
        assert!(matches!(
            d.asymptotic_inverse(1.0, &[1.0]),
            Err(Error::RadiusTooSmall(_))
        ));
    }

    #[test]
    fn asymptotic_inverse_jordan_height_two() {
        // frequency side: E* of the Jordan block; e1 has order 2 under its nilpotent part
        let es = jordan().adjoint();
        let d = decompose(&es, 1e-8).unwrap();
        let hn = d.height_norms(&[1.0, 0.0]).unwrap();
        assert!(hn[0][0] < 1e-12);
        assert_relative_eq!(hn[0][1], 1.0, epsilon = 1e-12);
        let t = d.asymptotic_inverse(EULER, &[1.0, 0.0]).unwrap();
        let al: f64 = 4.0 / 3.0;
        assert_relative_eq!(t, al.powf(al) * EULER.powf(al), max_relative = 1e-12);
    }

    #[test]
    fn theta_scalar_is_unit() {
        let e = ExponentMatrix::scalar(1.0 / 1.3, 1).unwrap();
        let d = decompose(&e.adjoint(), 1e-8).unwrap();
        for &r in &[1.5, 10.0, 1e6] {
            for &x in &[1.0, -1.0] {
                let th = d.theta(&e, r, &[x]).unwrap();
                assert_relative_eq!(th[0], x, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn theta_diagonal_no_log() {
        let e = ExponentMatrix::diagonal(&[0.5, 0.75]).unwrap();
        let d = decompose(&e.adjoint(), 1e-8).unwrap();
        let th = d.theta(&e, 1e4, &[1.0, 0.0]).unwrap();
        assert!((d.norm(th.as_slice()).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn theta_jordan_approaches_one() {
        let e = jordan();
        let d = decompose(&e.adjoint(), 1e-8).unwrap();
        let devs: Vec<f64> = [1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8]
            .iter()
            .map(|&r| (d.norm(d.theta(&e, r, &[1.0, 0.0]).unwrap().as_slice()).unwrap() - 1.0).abs())
            .collect();
        for w in devs.windows(2) {
            assert!(w[1] < w[0], "deviations not decreasing: {devs:?}");
        }
        assert!(devs[6] < devs[0]);
    }
}
