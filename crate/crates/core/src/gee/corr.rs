use std::fmt;
use std::str::FromStr;

use log::debug;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Search interval for the AR1 parameter.
const AR1_BOUND: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrStructure {
    #[default]
    Independent,
    Exchangeable,
    Ar1,
}

impl fmt::Display for CorrStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorrStructure::Independent => "ind",
            CorrStructure::Exchangeable => "exch",
            CorrStructure::Ar1 => "ar1",
        })
    }
}

impl FromStr for CorrStructure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ind" | "independent" | "independence" => Ok(CorrStructure::Independent),
            "exch" | "exchangeable" => Ok(CorrStructure::Exchangeable),
            "ar1" => Ok(CorrStructure::Ar1),
            _ => Err(Error::InvalidConfig(format!(
                "unknown correlation structure `{s}` (expected ind, exch or ar1)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkingCorrelation {
    pub kind: CorrStructure,
    pub alpha: f64,
}

impl WorkingCorrelation {
    pub fn new(kind: CorrStructure, alpha: f64) -> Self {
        Self { kind, alpha }
    }

    pub fn independent() -> Self {
        Self::new(CorrStructure::Independent, 0.0)
    }

    /// The `r x r` correlation matrix `R(alpha)`.
    pub fn matrix(&self, r: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, r, |i, j| {
            if i == j {
                return 1.0;
            }
            match self.kind {
                CorrStructure::Independent => 0.0,
                CorrStructure::Exchangeable => self.alpha,
                CorrStructure::Ar1 => self.alpha.powi(i.abs_diff(j) as i32),
            }
        })
    }
}

/// Sums over residual blocks that determine the AR1 quasi-least-squares objective
/// `sum e' R(alpha)^-1 e = (a - 2 b alpha + c alpha^2) / (1 - alpha^2)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Ar1Sums {
    /// All squared residuals.
    pub a: f64,
    /// Lag-one cross products.
    pub b: f64,
    /// Squared residuals at interior time points.
    pub c: f64,
}

impl Ar1Sums {
    pub fn from_blocks(residuals: &[f64], weights: &[f64], r: usize) -> Self {
        let mut s = Self::default();
        for (block, &w) in residuals.chunks(r).zip(weights) {
            for k in 0..r {
                s.a += w * block[k] * block[k];
                if k + 1 < r {
                    s.b += w * block[k] * block[k + 1];
                }
                if k > 0 && k + 1 < r {
                    s.c += w * block[k] * block[k];
                }
            }
        }
        s
    }

    pub fn objective(&self, alpha: f64) -> f64 {
        (self.a - 2.0 * self.b * alpha + self.c * alpha * alpha) / (1.0 - alpha * alpha)
    }

    /// Numerator of the derivative of [`Ar1Sums::objective`]; has the sign of the slope.
    fn slope_sign(&self, alpha: f64) -> f64 {
        -self.b + (self.a + self.c) * alpha - self.b * alpha * alpha
    }

    /// Minimizer of the objective over `[-bound, bound]`. The objective is
    /// unimodal there, so the sign change of its slope is located by bisection.
    pub fn minimize(&self, bound: f64) -> f64 {
        let (mut lo, mut hi) = (-bound, bound);
        if self.slope_sign(lo) >= 0.0 {
            return lo;
        }
        if self.slope_sign(hi) <= 0.0 {
            return hi;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.slope_sign(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Second-stage correction of the quasi-least-squares AR1 estimate.
pub fn qls_stage_two(alpha: f64) -> f64 {
    2.0 * alpha / (1.0 + alpha * alpha)
}

/// Estimates the correlation parameter from Pearson residuals laid out as
/// consecutive blocks of length `r`, one block per unit.
pub fn estimate_corr(kind: CorrStructure, residuals: &[f64], weights: &[f64], r: usize) -> f64 {
    if r < 2 {
        if kind != CorrStructure::Independent {
            debug!("a single time point carries no within-unit correlation; using alpha = 0");
        }
        return 0.0;
    }
    match kind {
        CorrStructure::Independent => 0.0,
        CorrStructure::Exchangeable => {
            let (mut num, mut den) = (0.0, 0.0);
            for (block, &w) in residuals.chunks(r).zip(weights) {
                let s: f64 = block.iter().sum();
                let ss: f64 = block.iter().map(|e| e * e).sum();
                // sum over ordered pairs k != l
                num += w * (s * s - ss);
                den += w * (r * (r - 1)) as f64;
            }
            let lower = -1.0 / (r - 1) as f64 + 1e-6;
            (num / den).clamp(lower, AR1_BOUND)
        }
        CorrStructure::Ar1 => {
            let sums = Ar1Sums::from_blocks(residuals, weights, r);
            qls_stage_two(sums.minimize(AR1_BOUND))
        }
    }
}
