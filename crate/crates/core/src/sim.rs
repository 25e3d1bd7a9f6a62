//! Sample paths of atomic semistable models and box-counting dimensions.
//!
//! Orbit points `y = c^{kE} x_a` with `‖y‖ ≥ δ` become compound Poisson jumps
//! with rate `w c^{-k}`. Smaller jumps are either dropped or replaced by a
//! Gaussian with the same mean and covariance. Compensators follow the
//! Lévy–Khintchine centering `iθ/(1+‖y‖²)` used by the exponent, so the
//! simulated law targets the same ψ.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::{LevyExponent, SemistableModel};
use crate::probes::ProbeEstimate;
use crate::regress::fit_line;
use crate::rng::substream;
use crate::spectral::{matrix_power, matrix_power_log};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmallJumpPolicy {
    GaussianSubstitute,
    Drop,
}

const MAX_ORBIT_LEVELS: usize = 100_000;
/// Expected jump count above which the retained orbit counts as infinite.
const MAX_EXPECTED_JUMPS: f64 = 1e9;
/// Probability budget for the unlisted largest jumps over the horizon.
const BIG_TAIL_PROB: f64 = 1e-9;

struct OrbitPoint {
    y: Vec<f64>,
    rate: f64,
    norm: f64,
}

/// Orbit points from the largest relevant level downwards. Descends until the
/// level norms are below `min_norm` and the small-jump second moment has
/// converged, or until the expected count over `horizon` of jumps of norm at
/// least `min_norm` exceeds `rate_cap`.
fn enumerate_orbit(model: &SemistableModel, horizon: f64, min_norm: f64, rate_cap: f64) -> Result<Vec<OrbitPoint>> {
    let mut out = Vec::new();
    if model.atoms.is_empty() {
        return Ok(out);
    }
    let c = model.c;
    let lc = c.ln();
    let w_total: f64 = model.atoms.iter().map(|a| a.w).sum();
    let k_hi = ((w_total * horizon * c / ((c - 1.0) * BIG_TAIL_PROB)).ln() / lc)
        .ceil()
        .max(1.0) as i32;
    let mut small_m2 = 0.0;
    let mut rate = 0.0;
    let mut k = k_hi;
    for _ in 0..MAX_ORBIT_LEVELS {
        let p = matrix_power_log(&model.e, k as f64 * lc)?;
        let mass = c.powf(-(k as f64));
        let mut level_m2 = 0.0;
        let mut level_norm: f64 = 0.0;
        for a in &model.atoms {
            let y = &p * DVector::from_column_slice(&a.x);
            let norm = y.norm();
            level_m2 += a.w * mass * norm * norm;
            level_norm = level_norm.max(norm);
            if norm >= min_norm {
                rate += a.w * mass;
            }
            out.push(OrbitPoint {
                y: y.iter().copied().collect(),
                rate: a.w * mass,
                norm,
            });
        }
        if k <= 0 {
            small_m2 += level_m2;
            if level_norm < min_norm && level_m2 <= 1e-17 * small_m2 {
                return Ok(out);
            }
        }
        if rate * horizon > rate_cap {
            return Ok(out);
        }
        k -= 1;
    }
    Err(Error::InvalidInput("atom orbit second moments decay too slowly".into()))
}

/// Default jump threshold for a path with `n_steps` steps over `[0, horizon]`.
///
/// The smallest `δ` whose expected jump count stays within `n_steps/2`.
/// Smaller thresholds only improve accuracy, so the budget decides;
/// [`discarded_moment_fraction`] reports how the result compares with the
/// `1e-4` second-moment target.
pub fn default_threshold(model: &SemistableModel, horizon: f64, n_steps: usize) -> Result<f64> {
    let budget = 0.5 * n_steps as f64;
    let mut pts = enumerate_orbit(model, horizon, 0.0, budget)?;
    if pts.is_empty() {
        return Ok(1.0);
    }
    pts.sort_by(|a, b| b.norm.total_cmp(&a.norm));
    let mut n = 0;
    let mut rate = 0.0;
    for (i, p) in pts.iter().enumerate() {
        rate += p.rate * horizon;
        if rate > budget {
            break;
        }
        n = i + 1;
    }
    let n = n.max(1);
    let last = pts[n - 1].norm;
    Ok(match pts.get(n) {
        Some(next) if next.norm < last => (last * next.norm).sqrt(),
        _ => last,
    })
}

/// Second moment of the jumps below `δ` relative to `tr Σ` plus the second
/// moment of all jumps of norm at most 1.
pub fn discarded_moment_fraction(model: &SemistableModel, delta: f64) -> Result<f64> {
    let pts = enumerate_orbit(model, 1.0, delta, f64::INFINITY)?;
    let m2 = |p: &OrbitPoint| p.rate * p.norm * p.norm;
    let small: f64 = pts.iter().filter(|p| p.norm < delta).map(m2).sum();
    let total: f64 = pts.iter().filter(|p| p.norm <= 1.0).map(m2).sum::<f64>() + model.gaussian.trace();
    Ok(if total > 0.0 { small / total } else { 0.0 })
}

/// Increment generator for a fixed threshold and policy.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    dim: usize,
    ys: Vec<f64>,
    cum_rate: Vec<f64>,
    total_rate: f64,
    velocity: Vec<f64>,
    gauss_factor: DMatrix<f64>,
    pub delta: f64,
    pub policy: SmallJumpPolicy,
    /// Second moment `Σ w‖y‖²` of the jumps below `δ`, per unit time.
    pub small_s2: f64,
    /// `Σ w‖y‖³` of the jumps below `δ`, per unit time.
    pub small_s3: f64,
}

impl JumpSampler {
    pub fn new(model: &SemistableModel, delta: f64, policy: SmallJumpPolicy, horizon: f64) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::ThresholdTooSmall(delta));
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidInput("horizon must be positive".into()));
        }
        let d = model.dim();
        let pts = enumerate_orbit(model, horizon, delta, MAX_EXPECTED_JUMPS)?;
        let mut ys = Vec::new();
        let mut cum_rate = Vec::new();
        let mut total_rate = 0.0;
        let mut velocity: Vec<f64> = model.drift.iter().map(|b| -b).collect();
        let mut small_cov = DMatrix::<f64>::zeros(d, d);
        let mut small_mean = vec![0.0; d];
        let (mut small_s2, mut small_s3) = (0.0, 0.0);
        for p in &pts {
            let n2 = p.norm * p.norm;
            if p.norm >= delta {
                ys.extend_from_slice(&p.y);
                total_rate += p.rate;
                cum_rate.push(total_rate);
                for (v, y) in velocity.iter_mut().zip(&p.y) {
                    *v -= p.rate * y / (1.0 + n2);
                }
            } else {
                small_s2 += p.rate * n2;
                small_s3 += p.rate * n2 * p.norm;
                for i in 0..d {
                    small_mean[i] += p.rate * p.y[i] * n2 / (1.0 + n2);
                    for j in 0..d {
                        small_cov[(i, j)] += p.rate * p.y[i] * p.y[j];
                    }
                }
            }
        }
        if total_rate * horizon > MAX_EXPECTED_JUMPS {
            return Err(Error::ThresholdTooSmall(delta));
        }
        let mut cov = model.gaussian.clone();
        if policy == SmallJumpPolicy::GaussianSubstitute {
            cov += &small_cov;
            for (v, m) in velocity.iter_mut().zip(&small_mean) {
                *v += m;
            }
        }
        let sym = 0.5 * (&cov + cov.transpose());
        let eig = SymmetricEigen::new(sym);
        let root = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
        let gauss_factor = &eig.eigenvectors * root;
        Ok(Self {
            dim: d,
            ys,
            cum_rate,
            total_rate,
            velocity,
            gauss_factor,
            delta,
            policy,
            small_s2,
            small_s3,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Rate of retained jumps per unit time.
    pub fn jump_rate(&self) -> f64 {
        self.total_rate
    }

    /// Bound on `|ψ_sim(ξ) - ψ(ξ)|` per unit time for `‖ξ‖ = rho`.
    pub fn discrepancy_bound(&self, rho: f64) -> f64 {
        match self.policy {
            SmallJumpPolicy::GaussianSubstitute => rho.powi(3) * self.small_s3 / 6.0,
            SmallJumpPolicy::Drop => 0.5 * rho * rho * self.small_s2 + rho * self.small_s3,
        }
    }

    /// Adds an increment over time `dt` to `out`.
    pub fn add_increment<R: Rng + ?Sized>(&self, rng: &mut R, dt: f64, out: &mut [f64]) {
        let d = self.dim;
        for (o, v) in out.iter_mut().zip(&self.velocity) {
            *o += v * dt;
        }
        let sd = dt.sqrt();
        let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..d {
                s += self.gauss_factor[(i, j)] * z[j];
            }
            out[i] += sd * s;
        }
        let n_pts = self.cum_rate.len();
        if self.total_rate * dt > n_pts as f64 {
            // many jumps: one Poisson count per orbit point
            let mut prev = 0.0;
            for (idx, c) in self.cum_rate.iter().enumerate() {
                let lam = (c - prev) * dt;
                prev = *c;
                if lam <= 0.0 {
                    continue;
                }
                let k = Poisson::new(lam).map_or(0.0, |p| p.sample(rng));
                if k > 0.0 {
                    for i in 0..d {
                        out[i] += k * self.ys[idx * d + i];
                    }
                }
            }
        } else if self.total_rate > 0.0 {
            let n = Poisson::new(self.total_rate * dt).map_or(0.0, |p| p.sample(rng)) as u64;
            for _ in 0..n {
                let u: f64 = rng.random::<f64>() * self.total_rate;
                let idx = self.cum_rate.partition_point(|c| *c <= u).min(self.cum_rate.len() - 1);
                for i in 0..d {
                    out[i] += self.ys[idx * d + i];
                }
            }
        }
    }

    /// `n` independent draws of `X(t)`, flattened.
    pub fn sample_marginal(&self, t: f64, n: usize, seed: u64) -> Vec<f64> {
        const SHARD: usize = 1024;
        let d = self.dim;
        (0..n.div_ceil(SHARD))
            .into_par_iter()
            .flat_map_iter(|s| {
                let mut rng = substream(seed, s as u64);
                let len = SHARD.min(n - s * SHARD);
                let mut out = vec![0.0; len * d];
                for chunk in out.chunks_mut(d) {
                    self.add_increment(&mut rng, t, chunk);
                }
                out
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub dim: usize,
    pub times: Vec<f64>,
    /// Row-major `len(times) × dim`.
    pub values: Vec<f64>,
    pub jump_threshold: f64,
    pub small_jump_policy: SmallJumpPolicy,
    pub seed: u64,
    pub expected_jumps: f64,
    pub discarded_moment_fraction: f64,
    /// Bound on `|ψ_sim - ψ|` per unit time at `‖ξ‖ = 1`.
    pub discrepancy_bound_unit: f64,
}

impl PathSample {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for j in 1..=self.dim {
            out.push_str(&format!(",x{j}"));
        }
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            out.push_str(&format!("{t:e}"));
            for v in self.point(i) {
                out.push_str(&format!(",{v:e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Path on the grid `t_j = jT/n`, `j = 0..=n`, started at the origin.
pub fn sample_path(
    model: &SemistableModel,
    t_max: f64,
    n_steps: usize,
    delta: Option<f64>,
    policy: SmallJumpPolicy,
    seed: u64,
) -> Result<PathSample> {
    if n_steps == 0 || !(t_max > 0.0) {
        return Err(Error::InvalidInput("need n_steps > 0 and T > 0".into()));
    }
    let delta = match delta {
        Some(v) => v,
        None => default_threshold(model, t_max, n_steps)?,
    };
    let sampler = JumpSampler::new(model, delta, policy, t_max)?;
    let d = sampler.dim();
    let dt = t_max / n_steps as f64;
    let mut rng = substream(seed, 0);
    let mut values = vec![0.0; (n_steps + 1) * d];
    let mut cur = vec![0.0; d];
    for j in 1..=n_steps {
        sampler.add_increment(&mut rng, dt, &mut cur);
        values[j * d..(j + 1) * d].copy_from_slice(&cur);
    }
    Ok(PathSample {
        dim: d,
        times: (0..=n_steps).map(|j| j as f64 * dt).collect(),
        values,
        jump_threshold: delta,
        small_jump_policy: policy,
        seed,
        expected_jumps: sampler.jump_rate() * t_max,
        discarded_moment_fraction: discarded_moment_fraction(model, delta)?,
        discrepancy_bound_unit: sampler.discrepancy_bound(1.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharFnPoint {
    pub xi: Vec<f64>,
    pub empirical: (f64, f64),
    pub target: (f64, f64),
    pub stderr: (f64, f64),
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharFnReport {
    pub lag: f64,
    pub n_increments: usize,
    pub points: Vec<CharFnPoint>,
    pub pass: bool,
}

/// Compares the empirical characteristic function of `samples` (draws of
/// `X(lag)`) with `exp(-lag·ψ)`, each part within 3 standard errors.
pub fn char_function_check<L: LevyExponent + ?Sized>(
    samples: &[f64],
    dim: usize,
    lag: f64,
    model: &L,
    xis: &[Vec<f64>],
) -> Result<CharFnReport> {
    if dim != model.dim() || !samples.len().is_multiple_of(dim) || samples.len() < 2 * dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: dim,
        });
    }
    let n = samples.len() / dim;
    let mut points = Vec::with_capacity(xis.len());
    for xi in xis {
        if xi.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: xi.len(),
            });
        }
        let (mut sc, mut ss, mut sc2, mut ss2) = (0.0, 0.0, 0.0, 0.0);
        for x in samples.chunks(dim) {
            let th: f64 = x.iter().zip(xi).map(|(a, b)| a * b).sum();
            let (s, c) = th.sin_cos();
            sc += c;
            ss += s;
            sc2 += c * c;
            ss2 += s * s;
        }
        let nf = n as f64;
        let (mc, ms) = (sc / nf, ss / nf);
        let se_c = ((sc2 / nf - mc * mc).max(0.0) / (nf - 1.0)).sqrt().max(1e-12);
        let se_s = ((ss2 / nf - ms * ms).max(0.0) / (nf - 1.0)).sqrt().max(1e-12);
        let target = (-model.psi(xi) * lag).exp();
        let pass = (mc - target.re).abs() <= 3.0 * se_c && (ms - target.im).abs() <= 3.0 * se_s;
        points.push(CharFnPoint {
            xi: xi.clone(),
            empirical: (mc, ms),
            target: (target.re, target.im),
            stderr: (se_c, se_s),
            pass,
        });
    }
    let pass = points.iter().all(|p| p.pass);
    Ok(CharFnReport {
        lag,
        n_increments: n,
        points,
        pass,
    })
}

/// Non-overlapping increments of `path` over `lag_steps` grid steps, flattened.
pub fn path_increments(path: &PathSample, lag_steps: usize) -> Vec<f64> {
    let d = path.dim;
    let lag_steps = lag_steps.max(1);
    let m = (path.len() - 1) / lag_steps;
    let mut out = Vec::with_capacity(m * d);
    for i in 0..m {
        let a = path.point(i * lag_steps);
        let b = path.point((i + 1) * lag_steps);
        out.extend(a.iter().zip(b).map(|(x, y)| y - x));
    }
    out
}

pub const MIN_BOX_POINTS: usize = 100_000;

fn check_scales(scales: &[f64]) -> Result<Vec<f64>> {
    if scales.len() < 3 {
        return Err(Error::InvalidInput("need at least 3 scales".into()));
    }
    for s in scales {
        let l = s.log2();
        if !(*s > 0.0) || (l - l.round()).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("scale {s} is not dyadic")));
        }
    }
    let mut v = scales.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

/// `2^{-j}` for `j = j_lo..=j_hi`.
pub fn dyadic_scales(j_lo: i32, j_hi: i32) -> Vec<f64> {
    (j_lo..=j_hi).map(|j| 2f64.powi(-j)).collect()
}

fn box_fit(
    scales: &[f64],
    counts: &[f64],
    lo: f64,
    hi: f64,
    n_points: usize,
    seed: u64,
    label: &str,
) -> Result<ProbeEstimate> {
    let n = scales.len();
    let cut = n / 4;
    let win = cut..n - cut;
    if win.len() < 3 {
        return Err(Error::SlopeUnstable("central window has fewer than 3 scales".into()));
    }
    let x: Vec<f64> = scales[win.clone()].iter().map(|s| s.ln()).collect();
    let y: Vec<f64> = counts[win.clone()].iter().map(|c| c.ln()).collect();
    let fit = fit_line(&x, &y).ok_or_else(|| Error::SlopeUnstable("degenerate fit".into()))?;
    let raw = -fit.slope;
    if !raw.is_finite() || fit.stderr > 0.1 {
        return Err(Error::SlopeUnstable(format!("slope {raw} with stderr {}", fit.stderr)));
    }
    let value = raw.clamp(lo, hi);
    Ok(ProbeEstimate {
        value,
        slope: fit.slope,
        stderr: fit.stderr,
        r_window: (scales[win.start], scales[win.end - 1]),
        samples_per_point: n_points,
        method: format!("{label}: dyadic box counting, log N vs log eps over the central half of the scales"),
        clamped_from: (value != raw).then_some(raw),
        envelope_slope: None,
        rms_residual: fit.rms_residual,
        seed,
        profile: scales.iter().copied().zip(counts.iter().copied()).collect(),
    })
}

/// Box-counting dimension of the set of path values.
pub fn box_dim_range(path: &PathSample, scales: &[f64]) -> Result<ProbeEstimate> {
    if path.len() < MIN_BOX_POINTS {
        return Err(Error::InvalidInput(format!(
            "box counting needs at least {MIN_BOX_POINTS} points"
        )));
    }
    let scales = check_scales(scales)?;
    let d = path.dim;
    let counts: Vec<f64> = scales
        .par_iter()
        .map(|&eps| {
            let mut set: HashSet<Vec<i64>> = HashSet::with_capacity(path.len() / 4);
            for i in 0..path.len() {
                set.insert(path.point(i).iter().map(|v| (v / eps).floor() as i64).collect());
            }
            set.len() as f64
        })
        .collect();
    box_fit(&scales, &counts, 0.0, d as f64, path.len(), path.seed, "range")
}

/// Box-counting dimension of the graph `{(t, X(t))}` with time rescaled to `[0, 1]`.
pub fn box_dim_graph(path: &PathSample, scales: &[f64]) -> Result<ProbeEstimate> {
    if path.len() < MIN_BOX_POINTS {
        return Err(Error::InvalidInput(format!(
            "box counting needs at least {MIN_BOX_POINTS} points"
        )));
    }
    let scales = check_scales(scales)?;
    if scales.last().copied().unwrap_or(0.0) > 1.0 {
        return Err(Error::InvalidInput("graph scales must not exceed 1".into()));
    }
    let d = path.dim;
    let t0 = path.times[0];
    let span = path.times[path.len() - 1] - t0;
    let counts: Vec<f64> = scales
        .par_iter()
        .map(|&eps| {
            let bins = (1.0 / eps).round() as usize;
            let mut lo = vec![f64::INFINITY; bins * d];
            let mut hi = vec![f64::NEG_INFINITY; bins * d];
            let mut push = |b: usize, x: &[f64]| {
                for k in 0..d {
                    lo[b * d + k] = lo[b * d + k].min(x[k]);
                    hi[b * d + k] = hi[b * d + k].max(x[k]);
                }
            };
            for i in 0..path.len() {
                let u = (path.times[i] - t0) / span;
                let x = path.point(i);
                let b = ((u / eps).floor() as usize).min(bins - 1);
                push(b, x);
                // a point on a bin edge also closes the previous bin
                if b > 0 && (u / eps - b as f64).abs() < 1e-12 {
                    push(b - 1, x);
                }
            }
            let mut total = 0.0;
            for b in 0..bins {
                if lo[b * d] > hi[b * d] {
                    continue;
                }
                let mut cells = 1.0;
                for k in 0..d {
                    cells *= ((hi[b * d + k] / eps).floor() - (lo[b * d + k] / eps).floor() + 1.0).max(1.0);
                }
                total += cells;
            }
            total
        })
        .collect();
    box_fit(&scales, &counts, 1.0, (d + 1) as f64, path.len(), path.seed, "graph")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyTest {
    pub t: f64,
    pub n_samples: usize,
    pub n_permutations: usize,
    pub statistic: f64,
    pub p_value: f64,
    pub reject_at_1pct: bool,
}

/// Energy distance between two equal-size samples, on `x/(1+‖x‖)` so that
/// heavy-tailed laws have the moments the statistic needs.
fn energy_statistic(pts: &[Vec<f64>], split: usize) -> f64 {
    let n = pts.len();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = dist(&pts[i], &pts[j]);
            match (i < split, j < split) {
                (true, true) => aa += v,
                (false, false) => bb += v,
                _ => ab += v,
            }
        }
    }
    let na = split as f64;
    let nb = (n - split) as f64;
    2.0 * ab / (na * nb) - 2.0 * aa / (na * na) - 2.0 * bb / (nb * nb)
}

/// Permutation energy test of `X(ct) =d c^E X(t)`.
pub fn semi_selfsimilarity_test(
    model: &SemistableModel,
    t: f64,
    n_samples: usize,
    n_permutations: usize,
    delta: f64,
    seed: u64,
) -> Result<EnergyTest> {
    use rand::seq::SliceRandom;
    if n_samples < 10 || n_permutations < 99 {
        return Err(Error::InvalidInput(
            "need at least 10 samples and 99 permutations".into(),
        ));
    }
    let c = model.c;
    let d = model.dim();
    let sampler = JumpSampler::new(model, delta, SmallJumpPolicy::GaussianSubstitute, c * t)?;
    let a = sampler.sample_marginal(c * t, n_samples, seed);
    let b = sampler.sample_marginal(t, n_samples, seed ^ 0x9e37_79b9_7f4a_7c15);
    let ce = matrix_power(&model.e, c)?;
    let squash = |v: Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / (1.0 + n)).collect::<Vec<f64>>()
    };
    let mut pts: Vec<Vec<f64>> = a.chunks(d).map(|x| squash(x.to_vec())).collect();
    pts.extend(
        b.chunks(d)
            .map(|x| squash((&ce * DVector::from_column_slice(x)).iter().copied().collect())),
    );
    let stat = energy_statistic(&pts, n_samples);
    let exceed: usize = (0..n_permutations)
        .into_par_iter()
        .map(|p| {
            let mut rng = substream(seed, 1_000_000 + p as u64);
            let mut perm = pts.clone();
            perm.shuffle(&mut rng);
            usize::from(energy_statistic(&perm, n_samples) >= stat)
        })
        .sum();
    let p_value = (1 + exceed) as f64 / (n_permutations + 1) as f64;
    Ok(EnergyTest {
        t,
        n_samples,
        n_permutations,
        statistic: stat,
        p_value,
        reject_at_1pct: p_value < 0.01,
    })
}

/// `E exp(i<ξ, X(t)>)` estimated from draws; used by callers comparing policies.
pub fn empirical_cf(samples: &[f64], dim: usize, xi: &[f64]) -> Complex64 {
    let n = samples.len() / dim;
    let mut acc = Complex64::new(0.0, 0.0);
    for x in samples.chunks(dim) {
        let th: f64 = x.iter().zip(xi).map(|(a, b)| a * b).sum();
        acc += Complex64::from_polar(1.0, th);
    }
    acc / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{Atom, Truncation, ValidatedModel};
    use crate::spectral::ExponentMatrix;

    fn stable_1d(alpha: f64) -> SemistableModel {
        let e = ExponentMatrix::scalar(1.0 / alpha, 1).unwrap();
        SemistableModel::symmetric_atomic(2.0, e, &[(vec![1.0], 1.0)]).unwrap()
    }

    #[test]
    fn brownian_marginal_variance() {
        let e = ExponentMatrix::scalar(0.5, 2).unwrap();
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let m = SemistableModel::new(2.0, e, vec![], g.clone(), vec![0.0; 2], Truncation::default(), true).unwrap();
        let s = JumpSampler::new(&m, 1.0, SmallJumpPolicy::GaussianSubstitute, 1.0).unwrap();
        let n = 10_000;
        let x = s.sample_marginal(1.0, n, 7);
        for (i, j) in [(0, 0), (1, 1), (0, 1)] {
            let v: Vec<f64> = x.chunks(2).map(|p| p[i] * p[j]).collect();
            let mean = v.iter().sum::<f64>() / n as f64;
            let sd = (v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            assert!(
                (mean - g[(i, j)]).abs() < 3.0 * sd / (n as f64).sqrt(),
                "{i}{j}: {mean}"
            );
        }
    }

    #[test]
    fn small_jump_moment_includes_every_level() {
        // levels k with 2^{k/1.8} < δ contribute 2·2^{k/9} each
        let m = stable_1d(1.8);
        let horizon = 1e4;
        let k_top = -10;
        let delta = 2f64.powf((k_top as f64 + 0.5) / 1.8);
        let s = JumpSampler::new(&m, delta, SmallJumpPolicy::GaussianSubstitute, horizon).unwrap();
        let r = 2f64.powf(1.0 / 9.0);
        let exact = 2.0 * r.powi(k_top) / (1.0 - 1.0 / r);
        assert!((s.small_s2 / exact - 1.0).abs() < 1e-12, "{} vs {exact}", s.small_s2);
    }

    #[test]
    fn char_function_alpha_18() {
        let m = stable_1d(1.8);
        let v = ValidatedModel::new(m.clone()).unwrap();
        let s = JumpSampler::new(&m, 1e-3, SmallJumpPolicy::GaussianSubstitute, 1.0).unwrap();
        let x = s.sample_marginal(1.0, 10_000, 3);
        let xis: Vec<Vec<f64>> = [0.5, 1.0, 2.0].iter().map(|v| vec![*v]).collect();
        let rep = char_function_check(&x, 1, 1.0, &v, &xis).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn drop_policy_has_larger_discrepancy() {
        let m = stable_1d(1.8);
        let a = JumpSampler::new(&m, 1e-3, SmallJumpPolicy::GaussianSubstitute, 1.0).unwrap();
        let b = JumpSampler::new(&m, 1e-3, SmallJumpPolicy::Drop, 1.0).unwrap();
        for rho in [0.5, 1.0, 2.0] {
            assert!(b.discrepancy_bound(rho) > a.discrepancy_bound(rho));
        }
    }

    #[test]
    fn line_graph_is_one() {
        let e = ExponentMatrix::scalar(1.0, 1).unwrap();
        let m = SemistableModel::new(
            2.0,
            e,
            vec![],
            DMatrix::zeros(1, 1),
            vec![-1.0],
            Truncation::default(),
            false,
        )
        .unwrap();
        let p = sample_path(&m, 1.0, 1 << 17, Some(1.0), SmallJumpPolicy::Drop, 0).unwrap();
        assert_eq!(p.point(0), &[0.0]);
        assert_eq!(p.point(1 << 17), &[1.0]);
        let est = box_dim_graph(&p, &dyadic_scales(2, 14)).unwrap();
        assert!((est.value - 1.0).abs() < 1e-12, "{est:?}");
    }

    #[test]
    fn zero_threshold_is_refused() {
        let m = stable_1d(1.5);
        assert!(matches!(
            JumpSampler::new(&m, 0.0, SmallJumpPolicy::Drop, 1.0),
            Err(Error::ThresholdTooSmall(_))
        ));
        assert!(matches!(
            JumpSampler::new(&m, 1e-30, SmallJumpPolicy::Drop, 1.0),
            Err(Error::ThresholdTooSmall(_))
        ));
    }

    #[test]
    fn box_counts_are_monotone() {
        let m = stable_1d(1.2);
        let p = sample_path(&m, 1.0, 100_000, None, SmallJumpPolicy::GaussianSubstitute, 5).unwrap();
        let est = box_dim_range(&p, &dyadic_scales(0, 12)).unwrap();
        for w in est.profile.windows(2) {
            assert!(w[0].1 >= w[1].1, "{:?}", est.profile);
        }
        assert!((0.0..=1.0).contains(&est.value));
    }

    #[test]
    fn asymmetric_atoms_are_simulated_with_compensator() {
        let e = ExponentMatrix::scalar(1.0 / 1.5, 1).unwrap();
        let atoms = vec![Atom { x: vec![1.0], w: 1.0 }, Atom { x: vec![-0.5], w: 0.5 }];
        let m = SemistableModel::new(
            2.0,
            e,
            atoms,
            DMatrix::zeros(1, 1),
            vec![0.0],
            Truncation::default(),
            false,
        )
        .unwrap();
        let v = ValidatedModel::new(m.clone()).unwrap();
        let s = JumpSampler::new(&m, 1e-3, SmallJumpPolicy::GaussianSubstitute, 1.0).unwrap();
        let x = s.sample_marginal(1.0, 20_000, 11);
        let xis: Vec<Vec<f64>> = [0.3, 1.0, 2.5].iter().map(|v| vec![*v]).collect();
        let rep = char_function_check(&x, 1, 1.0, &v, &xis).unwrap();
        // six comparisons: 4 standard errors keeps the family-wise level near 3σ
        for p in &rep.points {
            assert!((p.empirical.0 - p.target.0).abs() < 4.0 * p.stderr.0, "{p:?}");
            assert!((p.empirical.1 - p.target.1).abs() < 4.0 * p.stderr.1, "{p:?}");
        }
    }
}
