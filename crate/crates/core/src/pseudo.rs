//! Jackknife pseudo-values of the marginal occupation probabilities.
//!
//! Deleting one unit changes the isotonic fit only in a neighbourhood of the
//! block holding that unit, and changes every kernel sum by the unit's own
//! contribution. [`leave_one_out`] exploits both: the PAV stack is rebuilt
//! locally on top of the untouched full-data blocks, and the smoothed curves are
//! patched with prefix sums of the kernel table. Results agree with
//! [`leave_one_out_naive`] up to rounding.

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::isotonic::{pav_blocks, Block, TieGroups};
use crate::model::{ClusteredDataset, TimeGrid, WeightScheme};
use crate::smoothing::{quantile_sorted, KernelConfig};
use crate::sop::{
    hazard_increment, initial_occupation, normalize, propagate_chain, rebalance_risk_sets, sop_unchecked, KernelTable,
    SopConfig,
};

/// Relative drop of the kernel denominator below which a deletion is refitted from scratch.
const DENOMINATOR_FLOOR: f64 = 1e-3;

/// Pseudo-values of one state at `r` time points; row `j` belongs to observation `j`
/// of the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoPanel {
    pub state: usize,
    pub timepoints: Vec<f64>,
    pub values: DMatrix<f64>,
}

impl PseudoPanel {
    pub fn num_units(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_timepoints(&self) -> usize {
        self.timepoints.len()
    }
}

/// Full-data and leave-one-out occupation probabilities at fixed time points.
#[derive(Debug, Clone)]
pub struct LeaveOneOut {
    pub timepoints: Vec<f64>,
    /// `Q x r`.
    pub full: DMatrix<f64>,
    /// One `Q x r` matrix per deleted unit.
    pub deleted: Vec<DMatrix<f64>>,
}

impl LeaveOneOut {
    pub fn num_units(&self) -> usize {
        self.deleted.len()
    }

    /// `Y_j(t) = n pi(t) - (n - 1) pi_{-j}(t)` for `state` (1-based).
    pub fn panel(&self, state: usize) -> PseudoPanel {
        let n = self.num_units();
        let r = self.timepoints.len();
        let nf = n as f64;
        let values = DMatrix::from_fn(n, r, |j, k| {
            nf * self.full[(state - 1, k)] - (nf - 1.0) * self.deleted[j][(state - 1, k)]
        });
        PseudoPanel {
            state,
            timepoints: self.timepoints.clone(),
            values,
        }
    }

    pub fn panels(&self) -> Vec<PseudoPanel> {
        (1..=self.full.nrows()).map(|s| self.panel(s)).collect()
    }
}

/// `r` equally spaced time points over the inspection times, trimmed to the
/// 5%-95% quantile range unless `trim` is false. A single point sits at the midpoint.
pub fn choose_timepoints(ds: &ClusteredDataset, r: usize, trim: bool) -> Result<Vec<f64>> {
    if r == 0 {
        return Err(Error::InvalidConfig("number of time points must be at least 1".into()));
    }
    let mut times = ds.inspection_times();
    if times.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    times.sort_by(f64::total_cmp);
    let distinct = 1 + times.windows(2).filter(|w| w[1] != w[0]).count();
    if r > distinct {
        warn!("{r} time points requested but only {distinct} distinct inspection times");
    }
    let (lo, hi) = if trim {
        (quantile_sorted(&times, 0.05), quantile_sorted(&times, 0.95))
    } else {
        (times[0], times[times.len() - 1])
    };
    if r == 1 {
        return Ok(vec![0.5 * (lo + hi)]);
    }
    Ok((0..r)
        .map(|k| (lo + (hi - lo) * k as f64 / (r - 1) as f64).min(hi))
        .collect())
}

fn check_timepoints(timepoints: &[f64], grid: &TimeGrid) -> Result<()> {
    if timepoints.is_empty() {
        return Err(Error::InvalidConfig("at least one time point is required".into()));
    }
    if timepoints.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidConfig("time points must be strictly increasing".into()));
    }
    match timepoints
        .iter()
        .find(|&&t| !(t >= grid.start() && t <= grid.end()))
    {
        Some(&t) => Err(Error::TimepointOutsideGrid(t)),
        None => Ok(()),
    }
}

fn check_config(ds: &ClusteredDataset, cfg: &SopConfig) -> Result<()> {
    if cfg.scheme != WeightScheme::Unweighted {
        return Err(Error::InvalidConfig(
            "pseudo-values are defined through the unweighted estimator".into(),
        ));
    }
    if ds.len() < 2 {
        return Err(Error::JackknifeTooSmall);
    }
    Ok(())
}

fn at_timepoints(grid: &TimeGrid, pi: &[Vec<f64>], timepoints: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(pi.len(), timepoints.len(), |l, k| grid.interpolate(&pi[l], timepoints[k]))
}

/// Pseudo-values of `state` using the unweighted estimator with the given
/// kernel and grid held fixed across deletions.
pub fn jackknife_panel(
    ds: &ClusteredDataset,
    state: usize,
    timepoints: &[f64],
    kernel: KernelConfig,
    grid: &TimeGrid,
) -> Result<PseudoPanel> {
    if !ds.state_space().contains(state) {
        return Err(Error::StateOutOfRange {
            state,
            num_states: ds.num_states(),
        });
    }
    let cfg = SopConfig::new(WeightScheme::Unweighted, kernel, grid.clone());
    Ok(leave_one_out(ds, timepoints, &cfg)?.panel(state))
}

/// Leave-one-unit-out fits at `timepoints`, computed by downdating the full fit.
pub fn leave_one_out(ds: &ClusteredDataset, timepoints: &[f64], cfg: &SopConfig) -> Result<LeaveOneOut> {
    check_config(ds, cfg)?;
    check_timepoints(timepoints, &cfg.grid)?;
    let full = sop_unchecked(ds, cfg)?;
    let engine = Downdater::new(ds, cfg)?;
    let deleted = (0..ds.len())
        .into_par_iter()
        .map(|u| engine.deleted_curves(u).map(|pi| at_timepoints(&cfg.grid, &pi, timepoints)))
        .collect::<Result<Vec<_>>>()?;
    Ok(LeaveOneOut {
        timepoints: timepoints.to_vec(),
        full: at_timepoints(&cfg.grid, &full.pi, timepoints),
        deleted,
    })
}

/// Reference implementation that refits the estimator from scratch for every deletion.
pub fn leave_one_out_naive(ds: &ClusteredDataset, timepoints: &[f64], cfg: &SopConfig) -> Result<LeaveOneOut> {
    check_config(ds, cfg)?;
    check_timepoints(timepoints, &cfg.grid)?;
    let full = sop_unchecked(ds, cfg)?;
    let deleted = (0..ds.len())
        .into_par_iter()
        .map(|u| sop_unchecked(&ds.without_unit(u), cfg).map(|s| at_timepoints(&cfg.grid, &s.pi, timepoints)))
        .collect::<Result<Vec<_>>>()?;
    Ok(LeaveOneOut {
        timepoints: timepoints.to_vec(),
        full: at_timepoints(&cfg.grid, &full.pi, timepoints),
        deleted,
    })
}

/// Pseudo-value trajectories of `state` over the whole grid for the listed units.
pub fn trajectories(ds: &ClusteredDataset, state: usize, units: &[usize], cfg: &SopConfig) -> Result<Vec<Vec<f64>>> {
    check_config(ds, cfg)?;
    if !ds.state_space().contains(state) {
        return Err(Error::StateOutOfRange {
            state,
            num_states: ds.num_states(),
        });
    }
    if let Some(&u) = units.iter().find(|&&u| u >= ds.len()) {
        return Err(Error::InvalidConfig(format!("unit index {u} is out of range")));
    }
    let full = sop_unchecked(ds, cfg)?;
    let engine = Downdater::new(ds, cfg)?;
    let nf = ds.len() as f64;
    units
        .par_iter()
        .map(|&u| {
            let pi = engine.deleted_curves(u)?;
            Ok(full.pi[state - 1]
                .iter()
                .zip(&pi[state - 1])
                .map(|(a, b)| nf * a - (nf - 1.0) * b)
                .collect())
        })
        .collect()
}

/// Full-data PAV structure of one transition indicator.
struct TransitionFit {
    group_sums: Vec<f64>,
    blocks: Vec<Block>,
    block_of_group: Vec<usize>,
    /// `(m + 1) x G`: smoothed numerator accumulated over the first `b` blocks.
    block_prefix: Vec<f64>,
}

/// Stack whose lower part is a prefix of the full-data blocks, shared read-only.
struct LocalStack<'a> {
    base: &'a [Block],
    left: usize,
    local: Vec<Block>,
}

impl LocalStack<'_> {
    fn top(&self) -> Option<&Block> {
        self.local.last().or(self.left.checked_sub(1).map(|i| &self.base[i]))
    }

    fn push(&mut self, block: Block) {
        self.local.push(block);
        loop {
            let len = self.local.len();
            if len >= 2 {
                let top = self.local[len - 1];
                if self.local[len - 2].value() > top.value() {
                    self.local[len - 2].absorb(&top);
                    self.local.pop();
                    continue;
                }
            } else if self.left > 0 {
                let prev = self.base[self.left - 1];
                if prev.value() > self.local[0].value() {
                    let mut merged = prev;
                    merged.absorb(&self.local[0]);
                    self.local[0] = merged;
                    self.left -= 1;
                    continue;
                }
            }
            break;
        }
    }
}

struct Downdater<'a> {
    ds: &'a ClusteredDataset,
    cfg: &'a SopConfig,
    g: usize,
    states: Vec<usize>,
    /// Sorted position of every unit.
    position: Vec<usize>,
    /// Tie group of every sorted position.
    group_of: Vec<usize>,
    bounds: Vec<usize>,
    counts: Vec<f64>,
    kernel: KernelTable,
    /// `(n + 1) x G` prefix sums of the kernel table over sorted positions.
    prefix: Vec<f64>,
    transitions: Vec<TransitionFit>,
    /// Raw smoothing numerators of the state indicators.
    state_numerators: Vec<Vec<f64>>,
}

impl<'a> Downdater<'a> {
    fn new(ds: &'a ClusteredDataset, cfg: &'a SopConfig) -> Result<Self> {
        let n = ds.len();
        let q = ds.num_states();
        let grid = cfg.grid.points();
        let g = grid.len();
        let times = ds.inspection_times();
        let states = ds.states();
        let ties = TieGroups::new(&times);
        let mut position = vec![0; n];
        for (p, &u) in ties.order.iter().enumerate() {
            position[u] = p;
        }
        let mut group_of = vec![0; n];
        let counts: Vec<f64> = (0..ties.num_groups())
            .map(|c| {
                group_of[ties.bounds[c]..ties.bounds[c + 1]].fill(c);
                (ties.bounds[c + 1] - ties.bounds[c]) as f64
            })
            .collect();
        let sorted_times: Vec<f64> = ties.order.iter().map(|&u| times[u]).collect();
        let kernel = KernelTable::new(&sorted_times, grid, cfg.kernel.bandwidth);
        let mut prefix = vec![0.0; (n + 1) * g];
        for p in 0..n {
            let row = kernel.row(p);
            for k in 0..g {
                prefix[(p + 1) * g + k] = prefix[p * g + k] + row[k];
            }
        }
        let mut engine = Self {
            ds,
            cfg,
            g,
            states,
            position,
            group_of,
            bounds: ties.bounds,
            counts,
            kernel,
            prefix,
            transitions: Vec::with_capacity(q - 1),
            state_numerators: Vec::with_capacity(q),
        };
        for from in 1..q {
            let fit = engine.transition_fit(&ties.order, from);
            engine.transitions.push(fit);
        }
        for state in 1..=q {
            let mut num = vec![0.0; g];
            for (p, &u) in ties.order.iter().enumerate() {
                if engine.states[u] == state {
                    engine.kernel.row(p).iter().zip(num.iter_mut()).for_each(|(kv, acc)| *acc += kv);
                }
            }
            engine.state_numerators.push(num);
        }
        Ok(engine)
    }

    fn transition_fit(&self, order: &[usize], from: usize) -> TransitionFit {
        let groups = self.counts.len();
        let group_sums: Vec<f64> = (0..groups)
            .map(|c| {
                order[self.bounds[c]..self.bounds[c + 1]]
                    .iter()
                    .filter(|&&u| self.states[u] > from)
                    .count() as f64
            })
            .collect();
        let blocks = pav_blocks(self.counts.iter().zip(&group_sums).map(|(&w, &s)| (w, s)));
        let mut block_of_group = vec![0; groups];
        let mut block_prefix = vec![0.0; (blocks.len() + 1) * self.g];
        for (b, block) in blocks.iter().enumerate() {
            block_of_group[block.start..block.end].fill(b);
            let v = block.value();
            let (lo, hi) = (self.bounds[block.start], self.bounds[block.end]);
            for k in 0..self.g {
                let span = self.prefix[hi * self.g + k] - self.prefix[lo * self.g + k];
                block_prefix[(b + 1) * self.g + k] = block_prefix[b * self.g + k] + v * span;
            }
        }
        TransitionFit {
            group_sums,
            blocks,
            block_of_group,
            block_prefix,
        }
    }

    #[inline]
    fn span(&self, block: &Block, k: usize) -> f64 {
        let (lo, hi) = (self.bounds[block.start], self.bounds[block.end]);
        self.prefix[hi * self.g + k] - self.prefix[lo * self.g + k]
    }

    /// Smoothed counting-process numerator of transition `from` without unit `u`.
    fn downdated_numerator(&self, fit: &TransitionFit, from: usize, u: usize, out: &mut [f64]) {
        let pos = self.position[u];
        let c = self.group_of[pos];
        let y = if self.states[u] > from { 1.0 } else { 0.0 };
        let b = fit.block_of_group[c];
        let mut stack = LocalStack {
            base: &fit.blocks,
            left: b,
            local: Vec::new(),
        };
        let own = fit.blocks[b];
        for grp in own.start..own.end {
            let (mut w, mut s) = (self.counts[grp], fit.group_sums[grp]);
            if grp == c {
                w -= 1.0;
                s -= y;
            }
            if w > 0.0 {
                stack.push(Block::point(grp, w, s));
            }
        }
        let mut right = b + 1;
        while right < fit.blocks.len() {
            match stack.top() {
                Some(top) if top.value() > fit.blocks[right].value() => {
                    stack.push(fit.blocks[right]);
                    right += 1;
                }
                _ => break,
            }
        }
        let g = self.g;
        let left = stack.left;
        let krow = self.kernel.row(pos);
        let total = fit.blocks.len();
        for k in 0..g {
            out[k] = fit.block_prefix[total * g + k] - fit.block_prefix[right * g + k] + fit.block_prefix[left * g + k];
        }
        for block in &stack.local {
            let v = block.value();
            for k in 0..g {
                out[k] += v * self.span(block, k);
            }
            if block.start <= c && c < block.end {
                for k in 0..g {
                    out[k] -= v * krow[k];
                }
            }
        }
    }

    /// Occupation probabilities of every state on the grid with unit `u` removed.
    fn deleted_curves(&self, u: usize) -> Result<Vec<Vec<f64>>> {
        let g = self.g;
        let n = self.ds.len();
        let q = self.ds.num_states();
        let krow = self.kernel.row(self.position[u]);
        let full_den = &self.prefix[n * g..(n + 1) * g];
        let den: Vec<f64> = full_den.iter().zip(krow).map(|(d, kv)| d - kv).collect();
        if den
            .iter()
            .zip(full_den)
            .any(|(d, f)| !(*d > DENOMINATOR_FLOOR * f))
        {
            return Ok(sop_unchecked(&self.ds.without_unit(u), self.cfg)?.pi);
        }

        let mut nu = vec![vec![0.0; g]; q - 1];
        for (l, fit) in self.transitions.iter().enumerate() {
            self.downdated_numerator(fit, l + 1, u, &mut nu[l]);
            nu[l].iter_mut().zip(&den).for_each(|(v, d)| *v /= d);
        }
        let su = self.states[u];
        let mut mu: Vec<Vec<f64>> = (1..=q)
            .map(|state| {
                let num = &self.state_numerators[state - 1];
                let own = if su == state { 1.0 } else { 0.0 };
                (0..g).map(|k| (num[k] - own * krow[k]) / den[k]).collect()
            })
            .collect();
        if self.cfg.initial_state_pav {
            mu[0] = nu[0].iter().map(|v| 1.0 - v).collect();
            rebalance_risk_sets(&mut mu);
        }

        let mut pi = vec![vec![0.0; g]; q];
        let mut current = initial_occupation(&mu);
        let mut increments = vec![0.0; q - 1];
        for k in 0..g {
            if k > 0 {
                for l in 0..q - 1 {
                    increments[l] = hazard_increment(nu[l][k - 1], nu[l][k], mu[l][k - 1]);
                }
                propagate_chain(&mut current, &increments);
                normalize(&mut current);
            }
            for l in 0..q {
                pi[l][k] = current[l];
            }
        }
        Ok(pi)
    }
}
