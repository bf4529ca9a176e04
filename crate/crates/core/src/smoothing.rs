//! Gaussian kernel weights, Nadaraya-Watson smoothing and rule-of-thumb bandwidths.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    /// Standard normal density: log-concave and strictly positive.
    #[default]
    Gaussian,
}

/// How the bandwidth was (or should be) chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule {
    FixedValue(f64),
    RuleOfThumb,
}

impl BandwidthRule {
    pub fn resolve(&self, times: &[f64]) -> Result<KernelConfig> {
        let bandwidth = match *self {
            BandwidthRule::FixedValue(h) => h,
            BandwidthRule::RuleOfThumb => bandwidth_rot(times)?,
        };
        KernelConfig::new(bandwidth, *self)
    }
}

impl std::str::FromStr for BandwidthRule {
    type Err = Error;

    /// Accepts `rot` or a positive number.
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("rot") {
            return Ok(BandwidthRule::RuleOfThumb);
        }
        let h: f64 = s
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bandwidth must be `rot` or a number, got `{s}`")))?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::NonPositiveBandwidth(h));
        }
        Ok(BandwidthRule::FixedValue(h))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub kernel: Kernel,
    pub bandwidth: f64,
    pub rule: BandwidthRule,
}

impl KernelConfig {
    pub fn new(bandwidth: f64, rule: BandwidthRule) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::NonPositiveBandwidth(bandwidth));
        }
        Ok(Self {
            kernel: Kernel::Gaussian,
            bandwidth,
            rule,
        })
    }

    pub fn fixed(bandwidth: f64) -> Result<Self> {
        Self::new(bandwidth, BandwidthRule::FixedValue(bandwidth))
    }
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// `K_h(u) = h^-1 phi(u / h)`.
pub fn kernel_weight(u: f64, h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::NonPositiveBandwidth(h));
    }
    let s = u / h;
    Ok(INV_SQRT_2PI * (-0.5 * s * s).exp() / h)
}

/// Unnormalized Gaussian kernel with the exponent shifted by `shift`; the factor
/// cancels in every self-normalized ratio.
#[inline]
pub(crate) fn shifted_kernel(u: f64, h: f64, shift: f64) -> f64 {
    let s = u / h;
    (shift - 0.5 * s * s).exp()
}

/// Nadaraya-Watson estimate `sum w v K_h(x - t) / sum w K_h(x - t)` at every `t`
/// in `eval_points`.
pub fn nw_smooth(x: &[f64], v: &[f64], w: &[f64], eval_points: &[f64], cfg: &KernelConfig) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::EmptyInput("smoothing input"));
    }
    for (what, len) in [("smoothing responses", v.len()), ("smoothing weights", w.len())] {
        if len != x.len() {
            return Err(Error::LengthMismatch {
                what,
                expected: x.len(),
                found: len,
            });
        }
    }
    if let Some((index, &weight)) = w.iter().enumerate().find(|(_, w)| !(**w > 0.0)) {
        return Err(Error::NonPositiveWeight { index, weight });
    }
    let h = cfg.bandwidth;
    Ok(eval_points
        .iter()
        .map(|&t| {
            // shift so the nearest point has kernel value 1 and nothing underflows to an empty sum
            let nearest = x.iter().map(|&xi| ((xi - t) / h).powi(2)).fold(f64::INFINITY, f64::min);
            let shift = 0.5 * nearest;
            let (mut num, mut den) = (0.0, 0.0);
            for k in 0..x.len() {
                let kw = w[k] * shifted_kernel(x[k] - t, h, shift);
                num += kw * v[k];
                den += kw;
            }
            num / den
        })
        .collect())
}

/// Sample quantile with linear interpolation between order statistics.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Rule-of-thumb bandwidth `1.06 min(sd, IQR / 1.349) n^(-1/5)`.
///
/// Falls back to the standard deviation when the interquartile range is zero.
pub fn bandwidth_rot(times: &[f64]) -> Result<f64> {
    let n = times.len();
    if n < 2 {
        return Err(Error::DegenerateBandwidth("fewer than two inspection times"));
    }
    let mean = times.iter().sum::<f64>() / n as f64;
    let sd = (times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    if !(sd > 0.0) {
        return Err(Error::DegenerateBandwidth("identical inspection times"));
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.349) } else { sd };
    Ok(1.06 * spread * (n as f64).powf(-0.2))
}

/// Standard normal density.
pub(crate) fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}
