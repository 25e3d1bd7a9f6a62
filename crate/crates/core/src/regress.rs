//! Ordinary least-squares line fits, mostly on log-log data.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub stderr: f64,
    /// Root-mean-square residual.
    pub rms_residual: f64,
    pub n: usize,
}

/// Fit `y = intercept + slope·x`. Needs at least two distinct `x`.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let stderr = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    Some(LinearFit {
        slope,
        intercept,
        stderr,
        rms_residual: (sse / nf).sqrt(),
        n,
    })
}

/// Fit `log y` against `log x`, skipping non-positive values.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .unzip();
    fit_line(&lx, &ly)
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > 0.0 && n >= 1);
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_power_law() {
        let x = log_grid(1.0, 1e4, 9);
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(-1.25)).collect();
        let f = loglog_fit(&x, &y).unwrap();
        assert_relative_eq!(f.slope, -1.25, epsilon = 1e-12);
        assert_relative_eq!(f.intercept, 3.0f64.ln(), epsilon = 1e-10);
        assert!(f.stderr < 1e-10);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(fit_line(&[1.0], &[2.0]).is_none());
        assert!(fit_line(&[1.0, 1.0], &[2.0, 3.0]).is_none());
    }

    #[test]
    fn grid_endpoints() {
        let g = log_grid(1e-4, 1e-1, 20);
        assert_eq!(g.len(), 20);
        assert_relative_eq!(g[0], 1e-4, max_relative = 1e-14);
        assert_relative_eq!(g[19], 1e-1, max_relative = 1e-14);
    }
}
