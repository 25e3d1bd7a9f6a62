//! Lévy exponent of the one-dimensional symmetric law with Lévy density
//! `g(x) = |x|^{-β-1}` on `0 < |x| ≤ 1` and `|x|^{-α-1}` on `|x| > 1`.
//!
//! `ψ(ξ) = 2 ∫_0^∞ (1 - cos ξx) g(x) dx = 2 [ξ^β L_β(ξ) + ξ^α H_α(ξ)]` with
//! `L_β(X) = ∫_0^X (1 - cos u) u^{-β-1} du` and `H_α(X) = ∫_X^∞ (1 - cos u) u^{-α-1} du`.
//! Near the origin both pieces use the cosine power series; beyond `u = 4` the
//! oscillatory part is moved onto a vertical contour where it decays like `e^{-y}`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quad::integrate;

const SPLIT: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityExponent {
    pub alpha: f64,
    pub beta: f64,
    low_at_split: f64,
    high_at_split: f64,
    g_low_split: Complex64,
}

impl DensityExponent {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0) || !(beta < 2.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "density model needs alpha > 0 and beta < 2, got alpha = {alpha}, beta = {beta}"
            )));
        }
        let g_low_split = contour_tail(beta + 1.0, SPLIT);
        let g_high_split = contour_tail(alpha + 1.0, SPLIT);
        Ok(Self {
            alpha,
            beta,
            low_at_split: cos_series(beta, 0.0, SPLIT),
            high_at_split: SPLIT.powf(-alpha) / alpha - g_high_split.re,
            g_low_split,
        })
    }

    /// `∫_0^X (1 - cos u) u^{-β-1} du`.
    fn low(&self, x: f64) -> f64 {
        if x <= SPLIT {
            return cos_series(self.beta, 0.0, x);
        }
        let b = self.beta;
        let power = if b.abs() < 1e-12 {
            (x / SPLIT).ln()
        } else {
            (SPLIT.powf(-b) - x.powf(-b)) / b
        };
        let osc = (self.g_low_split - contour_tail(b + 1.0, x)).re;
        self.low_at_split + power - osc
    }

    /// `∫_X^∞ (1 - cos u) u^{-α-1} du`.
    fn high(&self, x: f64) -> f64 {
        if x >= SPLIT {
            x.powf(-self.alpha) / self.alpha - contour_tail(self.alpha + 1.0, x).re
        } else {
            cos_series(self.alpha, x, SPLIT) + self.high_at_split
        }
    }

    pub fn psi(&self, xi: f64) -> f64 {
        let x = xi.abs();
        if x == 0.0 {
            return 0.0;
        }
        let low = self.low(x);
        let high = self.high(x);
        2.0 * (x.powf(self.beta) * low + x.powf(self.alpha) * high)
    }
}

/// `∫_lo^hi (1 - cos u) u^{-p-1} du` for `0 ≤ lo < hi ≤ 4` via the power series of `1 - cos`.
fn cos_series(p: f64, lo: f64, hi: f64) -> f64 {
    let mut sum = 0.0;
    let mut fact = 1.0;
    for n in 1..60 {
        let k = 2 * n;
        fact *= ((k - 1) * k) as f64;
        let e = k as f64 - p;
        let piece = if e.abs() < 1e-12 {
            (hi / lo).ln()
        } else if lo == 0.0 {
            hi.powf(e) / e
        } else {
            (hi.powf(e) - lo.powf(e)) / e
        };
        let term = piece / fact;
        if n % 2 == 1 {
            sum += term;
        } else {
            sum -= term;
        }
        if term.abs() <= 1e-18 * sum.abs() && n > 2 {
            break;
        }
    }
    sum
}

/// `∫_A^{A+i∞} e^{iu} u^{-s} du = i e^{iA} ∫_0^∞ e^{-y} (A + iy)^{-s} dy`.
/// For `s > 1` this is `∫_A^∞ e^{iu} u^{-s} du`; for any `s`, differences give
/// `∫_A^B e^{iu} u^{-s} du = T(A) - T(B)`.
pub(crate) fn contour_tail(s: f64, a: f64) -> Complex64 {
    let f = |y: f64| (-y).exp() * Complex64::new(a, y).powf(-s);
    let upper = 60.0 + 2.0 * s.abs().max(1.0) * (a + 60.0).ln();
    let re = integrate(|y| f(y).re, 0.0, upper, 1e-300, 1e-14, 400).value;
    let im = integrate(|y| f(y).im, 0.0, upper, 1e-300, 1e-14, 400).value;
    Complex64::new(0.0, 1.0) * Complex64::from_polar(1.0, a) * Complex64::new(re, im)
}
