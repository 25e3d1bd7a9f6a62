//! Empirical envelope constants for `Re ψ`, `|Im ψ|` and `Re(1/(1+ψ))`
//! against the anisotropy norm `Σ‖ξ_i‖^{α_i}` on log-spaced shells.
//!
//! The constants are realized on the scanned grid only; they are envelopes,
//! not proofs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::{resolvent_from, LevyExponent};
use crate::regress::loglog_fit;
use crate::rng::{substream, unit_direction};
use crate::spectral::{ExponentMatrix, SpectralDecomposition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellStats {
    pub r: f64,
    pub inf_ratio_f: f64,
    pub sup_ratio_f: f64,
    pub sup_ratio_g: f64,
    pub inf_resolvent_ratio: f64,
    pub sup_resolvent_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub epsilon: f64,
    pub tau: f64,
    pub r_grid: Vec<f64>,
    pub shells: Vec<ShellStats>,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k: f64,
    /// Log-log slopes across the scan of `sup ratio_F`, `inf ratio_F`, `sup ratio_G`.
    pub slope_sup_f: f64,
    pub slope_inf_f: f64,
    pub slope_sup_g: Option<f64>,
    pub pass: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolventReport {
    pub epsilon: f64,
    pub r_grid: Vec<f64>,
    /// Per radius: `(inf, sup)` of `Re(1/(1+ψ(ξ)))·Σ‖ξ_i‖^{α_i}`.
    pub ratios: Vec<(f64, f64)>,
    /// Smallest `K` with `K⁻¹‖ξ‖^{-ε}/A ≤ Re(1/(1+ψ)) ≤ K/A` on the scan.
    pub k: f64,
}

fn check_grid(r_grid: &[f64]) -> Result<()> {
    if r_grid.is_empty() {
        return Err(Error::InvalidInput("empty radius grid".into()));
    }
    if let Some(&r) = r_grid.iter().find(|&&r| !(r > 1.0)) {
        return Err(Error::RadiusTooSmall(r));
    }
    if r_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("radius grid must be increasing".into()));
    }
    Ok(())
}

fn scan_shells<L: LevyExponent + ?Sized>(
    model: &L,
    dec: &SpectralDecomposition,
    r_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<ShellStats>> {
    let d = model.dim();
    if dec.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: dec.dim(),
        });
    }
    if samples == 0 {
        return Err(Error::InvalidInput("sphere_samples must be positive".into()));
    }
    r_grid
        .par_iter()
        .enumerate()
        .map(|(i, &r)| {
            let mut rng = substream(seed, i as u64);
            let mut s = ShellStats {
                r,
                inf_ratio_f: f64::INFINITY,
                sup_ratio_f: 0.0,
                sup_ratio_g: 0.0,
                inf_resolvent_ratio: f64::INFINITY,
                sup_resolvent_ratio: 0.0,
            };
            for _ in 0..samples {
                let xi: Vec<f64> = unit_direction(&mut rng, d).into_iter().map(|v| v * r).collect();
                let a = dec.anisotropy_norm(&xi)?;
                let p = model.psi(&xi);
                let rf = p.re / a;
                let rg = p.im.abs() / a;
                let rr = resolvent_from(p, 1.0) * a;
                s.inf_ratio_f = s.inf_ratio_f.min(rf);
                s.sup_ratio_f = s.sup_ratio_f.max(rf);
                s.sup_ratio_g = s.sup_ratio_g.max(rg);
                s.inf_resolvent_ratio = s.inf_resolvent_ratio.min(rr);
                s.sup_resolvent_ratio = s.sup_resolvent_ratio.max(rr);
            }
            Ok(s)
        })
        .collect()
}

/// Scan `Re ψ` and `|Im ψ|` against the anisotropy norm.
///
/// `dec` must be the decomposition of `E*`, the exponent acting on frequencies.
pub fn envelope_scan<L: LevyExponent + ?Sized>(
    model: &L,
    dec: &SpectralDecomposition,
    epsilon: f64,
    r_grid: &[f64],
    sphere_samples: usize,
    seed: u64,
) -> Result<EnvelopeReport> {
    if !model.is_strict() {
        return Err(Error::ModelNotStrict(
            "envelope scans need a strictly semistable model".into(),
        ));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput("epsilon must be positive".into()));
    }
    check_grid(r_grid)?;
    let shells = scan_shells(model, dec, r_grid, sphere_samples, seed)?;
    let half = 0.5 * epsilon;
    let k2 = shells.iter().map(|s| s.inf_ratio_f).fold(f64::INFINITY, f64::min);
    let k1 = shells
        .iter()
        .map(|s| s.sup_ratio_f / s.r.powf(half))
        .fold(0.0, f64::max);
    let k3 = shells
        .iter()
        .map(|s| s.sup_ratio_g / s.r.powf(half))
        .fold(0.0, f64::max);
    let k = resolvent_constant(&shells, epsilon);
    let rs: Vec<f64> = shells.iter().map(|s| s.r).collect();
    let fit = |v: Vec<f64>| loglog_fit(&rs, &v).map(|f| f.slope);
    let slope_sup_f = fit(shells.iter().map(|s| s.sup_ratio_f).collect()).unwrap_or(0.0);
    let slope_inf_f = fit(shells.iter().map(|s| s.inf_ratio_f).collect()).unwrap_or(0.0);
    let g_vals: Vec<f64> = shells.iter().map(|s| s.sup_ratio_g).collect();
    let slope_sup_g = if g_vals.iter().all(|v| *v > 0.0) {
        fit(g_vals)
    } else {
        None
    };
    let finite = [k1, k2, k3, k].iter().all(|v| v.is_finite());
    let pass =
        finite && k2 > 0.0 && slope_sup_f <= half && slope_inf_f >= -half && slope_sup_g.is_none_or(|s| s <= half);
    Ok(EnvelopeReport {
        epsilon,
        tau: r_grid[0],
        r_grid: r_grid.to_vec(),
        shells,
        k1,
        k2,
        k3,
        k,
        slope_sup_f,
        slope_inf_f,
        slope_sup_g,
        pass,
        note: "constants are empirical envelopes over the scanned grid; boundedness is judged by \
               log-log slopes of the shell extremes against r^(eps/2)"
            .into(),
    })
}

fn resolvent_constant(shells: &[ShellStats], epsilon: f64) -> f64 {
    shells
        .iter()
        .map(|s| {
            s.sup_resolvent_ratio
                .max(1.0 / (s.inf_resolvent_ratio * s.r.powf(epsilon)))
        })
        .fold(0.0, f64::max)
}

/// Scan `Re(1/(1+ψ))` against `1/Σ‖ξ_i‖^{α_i}`.
pub fn resolvent_scan<L: LevyExponent + ?Sized>(
    model: &L,
    dec: &SpectralDecomposition,
    epsilon: f64,
    r_grid: &[f64],
    sphere_samples: usize,
    seed: u64,
) -> Result<ResolventReport> {
    if !model.is_strict() {
        return Err(Error::ModelNotStrict(
            "resolvent scans need a strictly semistable model".into(),
        ));
    }
    check_grid(r_grid)?;
    let shells = scan_shells(model, dec, r_grid, sphere_samples, seed)?;
    Ok(ResolventReport {
        epsilon,
        r_grid: r_grid.to_vec(),
        ratios: shells
            .iter()
            .map(|s| (s.inf_resolvent_ratio, s.sup_resolvent_ratio))
            .collect(),
        k: resolvent_constant(&shells, epsilon),
    })
}

impl EnvelopeReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,inf_ratio_F,sup_ratio_F,sup_ratio_G\n");
        for s in &self.shells {
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e}\n",
                s.r, s.inf_ratio_f, s.sup_ratio_f, s.sup_ratio_g
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaScan {
    pub r_grid: Vec<f64>,
    /// `max_x |‖θ_{r,x}‖ - 1|` per radius.
    pub max_deviation: Vec<f64>,
    pub eta: f64,
    /// Smallest scanned radius from which every deviation stays below `eta`.
    pub r0: Option<f64>,
}

/// `‖θ_{r,x}‖` over sampled directions; `dec` is the decomposition of `E*`.
pub fn theta_scan(
    dec: &SpectralDecomposition,
    e: &ExponentMatrix,
    r_grid: &[f64],
    directions: usize,
    eta: f64,
    seed: u64,
) -> Result<ThetaScan> {
    check_grid(r_grid)?;
    let d = e.dim();
    let mut rng = substream(seed, u64::MAX);
    let dirs: Vec<Vec<f64>> = (0..directions).map(|_| unit_direction(&mut rng, d)).collect();
    let max_deviation: Vec<f64> = r_grid
        .par_iter()
        .map(|&r| {
            let mut worst: f64 = 0.0;
            for x in &dirs {
                let n = dec.norm(x)?;
                let u: Vec<f64> = x.iter().map(|v| v / n).collect();
                let th = dec.theta(e, r, &u)?;
                worst = worst.max((dec.norm(th.as_slice())? - 1.0).abs());
            }
            Ok(worst)
        })
        .collect::<Result<_>>()?;
    let mut r0 = None;
    for (i, &r) in r_grid.iter().enumerate().rev() {
        if max_deviation[i] < eta {
            r0 = Some(r);
        } else {
            break;
        }
    }
    Ok(ThetaScan {
        r_grid: r_grid.to_vec(),
        max_deviation,
        eta,
        r0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::{ClosedFormModel, SemistableModel};
    use crate::regress::log_grid;
    use crate::spectral::{decompose, DEFAULT_TOL_CLUSTER};
    use approx::assert_relative_eq;

    #[test]
    fn stable_ratio_is_one() {
        let m = ClosedFormModel::symmetric_stable(1.3, 1.0, 1).unwrap();
        let dec = decompose(&m.exponent().unwrap().adjoint(), DEFAULT_TOL_CLUSTER).unwrap();
        let rep = envelope_scan(&m, &dec, 0.2, &log_grid(10.0, 1e4, 8), 16, 0).unwrap();
        assert_relative_eq!(rep.k1 * 10f64.powf(0.1), 1.0, max_relative = 1e-12);
        assert_relative_eq!(rep.k2, 1.0, max_relative = 1e-12);
        assert_eq!(rep.k3, 0.0);
        assert!(rep.pass);
    }

    #[test]
    fn resolvent_stable_alpha_one() {
        let m = ClosedFormModel::symmetric_stable(1.0, 1.0, 1).unwrap();
        let dec = decompose(&m.exponent().unwrap().adjoint(), DEFAULT_TOL_CLUSTER).unwrap();
        let rep = resolvent_scan(&m, &dec, 0.2, &[100.0], 4, 0).unwrap();
        assert_relative_eq!(rep.ratios[0].0, 100.0 / 101.0, max_relative = 1e-12);
    }

    #[test]
    fn semistable_one_dim_is_log_periodic() {
        let e = ExponentMatrix::scalar(1.0, 1).unwrap();
        let m = SemistableModel::symmetric_atomic(2.0, e, &[(vec![1.0], 1.0)])
            .unwrap()
            .into_validated()
            .unwrap();
        let dec = decompose(&m.exponent().unwrap().adjoint(), DEFAULT_TOL_CLUSTER).unwrap();
        let rs = [10.0, 20.0, 40.0];
        let rep = envelope_scan(&m, &dec, 0.2, &rs, 2, 0).unwrap();
        let f = |s: &ShellStats| s.sup_ratio_f;
        assert_relative_eq!(f(&rep.shells[0]), f(&rep.shells[1]), max_relative = 1e-6);
        assert_relative_eq!(f(&rep.shells[1]), f(&rep.shells[2]), max_relative = 1e-6);
        assert!(rep.k2 > 0.0);
        assert_eq!(rep.k3, 0.0);
    }

    #[test]
    fn refuses_non_strict() {
        let m = ClosedFormModel::density_example(1.5, 0.5).unwrap();
        let dec = decompose(&ExponentMatrix::scalar(1.0, 1).unwrap(), DEFAULT_TOL_CLUSTER).unwrap();
        assert!(matches!(
            envelope_scan(&m, &dec, 0.2, &[10.0], 4, 0),
            Err(Error::ModelNotStrict(_))
        ));
    }
}
