//! Weighted pool-adjacent-violators (PAV) isotonic regression and the
//! current-status NPMLE built on it.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// Monotone least-squares fit, aligned with the input order.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotonicFit {
    pub fitted: Vec<f64>,
    /// Index of the first element of every pooled block, ascending, starting at 0.
    pub block_starts: Vec<usize>,
}

impl IsotonicFit {
    /// Half-open index ranges of the pooled blocks.
    pub fn blocks(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        let n = self.fitted.len();
        self.block_starts
            .iter()
            .enumerate()
            .map(move |(b, &s)| s..self.block_starts.get(b + 1).copied().unwrap_or(n))
    }
}

/// A run of pooled points `[start, end)` holding its total weight and weighted sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Block {
    pub start: usize,
    pub end: usize,
    pub weight: f64,
    pub total: f64,
}

impl Block {
    pub fn point(index: usize, weight: f64, total: f64) -> Self {
        Self {
            start: index,
            end: index + 1,
            weight,
            total,
        }
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.total / self.weight
    }

    /// Absorbs the next block to the right (a gap left by a deleted point is allowed).
    #[inline]
    pub fn absorb(&mut self, right: &Block) {
        debug_assert!(self.end <= right.start);
        self.end = right.end;
        self.weight += right.weight;
        self.total += right.total;
    }
}

/// Pushes `block` onto an increasing-PAV stack, pooling violators.
#[inline]
pub(crate) fn push_pooled(stack: &mut Vec<Block>, block: Block) {
    stack.push(block);
    while stack.len() >= 2 {
        let len = stack.len();
        let top = stack[len - 1];
        let prev = &mut stack[len - 2];
        if prev.value() > top.value() {
            prev.absorb(&top);
            stack.pop();
        } else {
            break;
        }
    }
}

/// Increasing PAV over pre-aggregated points given as `(weight, weighted sum)`.
pub(crate) fn pav_blocks(points: impl IntoIterator<Item = (f64, f64)>) -> Vec<Block> {
    let mut stack = Vec::new();
    for (i, (w, total)) in points.into_iter().enumerate() {
        push_pooled(&mut stack, Block::point(i, w, total));
    }
    stack
}

fn check_weights(y: &[f64], w: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::EmptyInput("isotonic regression input"));
    }
    if y.len() != w.len() {
        return Err(Error::LengthMismatch {
            what: "isotonic weights",
            expected: y.len(),
            found: w.len(),
        });
    }
    if let Some((index, &weight)) = w.iter().enumerate().find(|(_, w)| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::NonPositiveWeight { index, weight });
    }
    Ok(())
}

/// Weighted isotonic regression of `y` in index order.
///
/// Minimizes `sum w_k (y_k - f_k)^2` over monotone `f` in linear time.
pub fn pav(y: &[f64], w: &[f64], direction: Direction) -> Result<IsotonicFit> {
    check_weights(y, w)?;
    let sign = match direction {
        Direction::Increasing => 1.0,
        Direction::Decreasing => -1.0,
    };
    let blocks = pav_blocks(y.iter().zip(w).map(|(&yk, &wk)| (wk, sign * wk * yk)));
    let mut fitted = vec![0.0; y.len()];
    let mut block_starts = Vec::with_capacity(blocks.len());
    for b in &blocks {
        block_starts.push(b.start);
        let v = sign * b.value();
        fitted[b.start..b.end].iter_mut().for_each(|f| *f = v);
    }
    Ok(IsotonicFit {
        fitted,
        block_starts,
    })
}

/// Stable ordering of `x` with tied values grouped into runs.
pub(crate) struct TieGroups {
    /// Observation indices sorted by `x` (ties keep input order).
    pub order: Vec<usize>,
    /// Start offset into `order` of every tie run, plus a final `order.len()`.
    pub bounds: Vec<usize>,
}

impl TieGroups {
    pub fn new(x: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        let mut bounds = vec![0];
        for k in 1..order.len() {
            if x[order[k]] != x[order[k - 1]] {
                bounds.push(k);
            }
        }
        bounds.push(order.len());
        Self { order, bounds }
    }

    pub fn num_groups(&self) -> usize {
        self.bounds.len() - 1
    }
}

/// Isotonic regression of `y` on the predictor `x`, returning fitted values in the
/// input order. Tied predictor values are merged into one pseudo-observation with
/// summed weight before pooling, so the fit does not depend on the input order.
pub fn isotonic_on_predictor(x: &[f64], y: &[f64], w: &[f64], direction: Direction) -> Result<Vec<f64>> {
    check_weights(y, w)?;
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            what: "isotonic predictor",
            expected: y.len(),
            found: x.len(),
        });
    }
    let ties = TieGroups::new(x);
    let mut gy = Vec::with_capacity(ties.num_groups());
    let mut gw = Vec::with_capacity(ties.num_groups());
    for g in 0..ties.num_groups() {
        let members = &ties.order[ties.bounds[g]..ties.bounds[g + 1]];
        let wsum: f64 = members.iter().map(|&i| w[i]).sum();
        let ysum: f64 = members.iter().map(|&i| w[i] * y[i]).sum();
        gw.push(wsum);
        gy.push(ysum / wsum);
    }
    let fit = pav(&gy, &gw, direction)?;
    let mut out = vec![0.0; x.len()];
    for g in 0..ties.num_groups() {
        for &i in &ties.order[ties.bounds[g]..ties.bounds[g + 1]] {
            out[i] = fit.fitted[g];
        }
    }
    Ok(out)
}

/// Right-continuous step function of survival against inspection time.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalStep {
    /// Distinct inspection times, ascending.
    pub times: Vec<f64>,
    /// Survival at each entry of `times`.
    pub survival: Vec<f64>,
}

impl SurvivalStep {
    /// Survival at `t`; 1 before the first inspection time.
    pub fn eval(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => 1.0,
            k => self.survival[k - 1],
        }
    }
}

/// Current-status NPMLE of survival: the weighted isotonic fit of the event
/// indicators on sorted inspection times estimates the event-time CDF.
pub fn npmle_cs_survival(times: &[f64], events: &[bool], w: &[f64]) -> Result<SurvivalStep> {
    if times.len() != events.len() {
        return Err(Error::LengthMismatch {
            what: "event indicators",
            expected: times.len(),
            found: events.len(),
        });
    }
    let y: Vec<f64> = events.iter().map(|&e| if e { 1.0 } else { 0.0 }).collect();
    let cdf = isotonic_on_predictor(times, &y, w, Direction::Increasing)?;
    let ties = TieGroups::new(times);
    let mut out_t = Vec::with_capacity(ties.num_groups());
    let mut out_s = Vec::with_capacity(ties.num_groups());
    for g in 0..ties.num_groups() {
        let i = ties.order[ties.bounds[g]];
        out_t.push(times[i]);
        out_s.push(1.0 - cdf[i]);
    }
    Ok(SurvivalStep {
        times: out_t,
        survival: out_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Minimum weighted SSE over every partition into consecutive blocks whose
    /// block means are monotone.
    fn brute_force(y: &[f64], w: &[f64]) -> Vec<f64> {
        let n = y.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0u32..(1 << (n - 1)) {
            let mut cuts = vec![0];
            for i in 1..n {
                if mask & (1 << (i - 1)) != 0 {
                    cuts.push(i);
                }
            }
            cuts.push(n);
            let means: Vec<f64> = cuts
                .windows(2)
                .map(|c| {
                    let ws: f64 = w[c[0]..c[1]].iter().sum();
                    (c[0]..c[1]).map(|k| w[k] * y[k]).sum::<f64>() / ws
                })
                .collect();
            if means.windows(2).any(|m| m[0] > m[1] + 1e-12) {
                continue;
            }
            let mut f = vec![0.0; n];
            for (b, c) in cuts.windows(2).enumerate() {
                f[c[0]..c[1]].iter_mut().for_each(|v| *v = means[b]);
            }
            let sse: f64 = (0..n).map(|k| w[k] * (y[k] - f[k]).powi(2)).sum();
            if best.as_ref().is_none_or(|(s, _)| sse < *s - 1e-12) {
                best = Some((sse, f));
            }
        }
        best.unwrap().1
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn already_monotone_is_unchanged() {
        let fit = pav(&[1.0, 2.0, 3.0], &[1.0; 3], Direction::Increasing).unwrap();
        assert_eq!(fit.fitted, vec![1.0, 2.0, 3.0]);
        assert_eq!(fit.block_starts, vec![0, 1, 2]);
    }

    #[test]
    fn frozen_examples_match_brute_force() {
        let y = [3.0, 1.0, 2.0];
        assert_close(&brute_force(&y, &[1.0; 3]), &[2.0, 2.0, 2.0], 1e-12);
        let fit = pav(&y, &[1.0; 3], Direction::Increasing).unwrap();
        assert_close(&fit.fitted, &[2.0, 2.0, 2.0], 1e-12);

        let y = [1.0, 0.0];
        let w = [1.0, 3.0];
        assert_close(&brute_force(&y, &w), &[0.25, 0.25], 1e-12);
        assert_close(&pav(&y, &w, Direction::Increasing).unwrap().fitted, &[0.25, 0.25], 1e-12);
    }

    #[test]
    fn decreasing_direction() {
        let fit = pav(&[1.0, 3.0, 2.0], &[1.0; 3], Direction::Decreasing).unwrap();
        assert_close(&fit.fitted, &[2.0, 2.0, 2.0], 1e-12);
        assert_eq!(fit.blocks().collect::<Vec<_>>(), vec![0..2, 2..3]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(pav(&[], &[], Direction::Increasing), Err(Error::EmptyInput(_))));
        assert!(matches!(
            pav(&[1.0, 2.0], &[1.0, 0.0], Direction::Increasing),
            Err(Error::NonPositiveWeight { index: 1, .. })
        ));
        assert!(pav(&[1.0, 2.0], &[1.0], Direction::Increasing).is_err());
    }

    #[test]
    fn exhaustive_small_alphabet_matches_brute_force() {
        let alphabet = [0.0, 0.5, 1.0];
        let weights = [1.0, 2.0, 0.5];
        for n in 1..=6usize {
            let total = 3usize.pow(n as u32);
            for code in 0..total {
                let mut c = code;
                let mut y = Vec::with_capacity(n);
                let mut w = Vec::with_capacity(n);
                for k in 0..n {
                    y.push(alphabet[c % 3]);
                    w.push(weights[(c + k) % 3]);
                    c /= 3;
                }
                let fit = pav(&y, &w, Direction::Increasing).unwrap();
                assert_close(&fit.fitted, &brute_force(&y, &w), 1e-12);
            }
        }
    }

    #[test]
    fn ties_in_predictor_are_order_independent() {
        let x = [2.0, 1.0, 2.0, 3.0];
        let y = [1.0, 0.0, 0.0, 1.0];
        let w = [1.0; 4];
        let a = isotonic_on_predictor(&x, &y, &w, Direction::Increasing).unwrap();
        let xp = [2.0, 2.0, 1.0, 3.0];
        let yp = [0.0, 1.0, 0.0, 1.0];
        let b = isotonic_on_predictor(&xp, &yp, &w, Direction::Increasing).unwrap();
        assert_eq!(a[0], a[2]);
        assert_eq!(a[0], 0.5);
        assert_eq!(b[0], 0.5);
        assert_eq!(b[1], 0.5);
    }

    #[test]
    fn npmle_examples() {
        let t = [1.0, 2.0, 3.0];
        let w = [1.0; 3];
        let s = npmle_cs_survival(&t, &[false; 3], &w).unwrap();
        assert_eq!(s.survival, vec![1.0; 3]);
        let s = npmle_cs_survival(&t, &[true; 3], &w).unwrap();
        assert_eq!(s.survival, vec![0.0; 3]);
        let s = npmle_cs_survival(&t, &[false, true, false], &w).unwrap();
        assert_close(&s.survival, &[1.0, 0.5, 0.5], 1e-12);
        assert_eq!(s.eval(0.5), 1.0);
        assert_eq!(s.eval(2.5), 0.5);
    }

    proptest! {
        #[test]
        fn pav_properties(
            data in proptest::collection::vec((-5.0f64..5.0, 0.1f64..3.0), 1..40)
        ) {
            let (y, w): (Vec<f64>, Vec<f64>) = data.into_iter().unzip();
            let fit = pav(&y, &w, Direction::Increasing).unwrap();
            for pair in fit.fitted.windows(2) {
                prop_assert!(pair[0] <= pair[1] + 1e-12);
            }
            let again = pav(&fit.fitted, &w, Direction::Increasing).unwrap();
            for (a, b) in again.fitted.iter().zip(&fit.fitted) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            let lhs: f64 = w.iter().zip(&fit.fitted).map(|(w, f)| w * f).sum();
            let rhs: f64 = w.iter().zip(&y).map(|(w, y)| w * y).sum();
            prop_assert!((lhs - rhs).abs() < 1e-9);
            let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for f in &fit.fitted {
                prop_assert!(*f >= lo - 1e-12 && *f <= hi + 1e-12);
            }
            for block in fit.blocks() {
                let ws: f64 = w[block.clone()].iter().sum();
                let mean = block.clone().map(|k| w[k] * y[k]).sum::<f64>() / ws;
                for k in block {
                    prop_assert!((fit.fitted[k] - mean).abs() < 1e-9);
                }
            }
        }
    }
}
