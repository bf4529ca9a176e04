//! Marginal state-occupation-probability estimation for current-status data.
//!
//! The pipeline runs in four stages:
//!
//! 1. For every transition `l -> l+1`, the indicators `I(X(C) > l)` are
//!    isotonized on the inspection times and then kernel-smoothed onto the
//!    grid. This gives the normalized counting process `nu_l(t)`. The state
//!    indicators `I(X(C) = l)` are smoothed the same way, giving the at-risk
//!    process `mu_l(t)`.
//! 2. Integrated hazard increments are `dA_l = d nu_l / mu_l`.
//! 3. The product integral `P(0, t) = prod (I + dA)` gives the transition
//!    matrices.
//! 4. Occupation probabilities are `pi(t) = pi(0) P(0, t)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::isotonic::{isotonic_on_predictor, Direction};
use crate::model::{unit_weights, ClusteredDataset, TimeGrid, WeightScheme};
use crate::smoothing::{shifted_kernel, KernelConfig};

/// Guard for `I(mu_l > 0)` in the hazard integral.
pub const RISK_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SopConfig {
    pub scheme: WeightScheme,
    pub kernel: KernelConfig,
    pub grid: TimeGrid,
    /// Replace the at-risk process of the initial state with its decreasing
    /// isotonic version.
    pub initial_state_pav: bool,
}

impl SopConfig {
    pub fn new(scheme: WeightScheme, kernel: KernelConfig, grid: TimeGrid) -> Self {
        Self {
            scheme,
            kernel,
            grid,
            initial_state_pav: true,
        }
    }
}

/// Normalized counting (`nu`, one row per transition) and at-risk (`mu`, one row
/// per state) processes on the grid.
#[derive(Debug, Clone)]
pub struct ProcessCurves {
    pub grid: TimeGrid,
    pub nu: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
}

/// Integrated-hazard increments `dA[k]` over `(t_k, t_{k+1}]`.
#[derive(Debug, Clone)]
pub struct HazardPath {
    pub grid: TimeGrid,
    pub increments: Vec<DMatrix<f64>>,
}

/// `P(0, t_k)` for every grid point.
#[derive(Debug, Clone)]
pub struct TransitionPath {
    pub matrices: Vec<DMatrix<f64>>,
    /// Number of product-integral factors whose diagonal had to be clamped at zero.
    pub clamp_events: usize,
}

#[derive(Debug, Clone)]
pub struct SopCurves {
    pub grid: TimeGrid,
    /// `pi[l][k]`: occupation probability of state `l + 1` at grid point `k`.
    pub pi: Vec<Vec<f64>>,
    pub pi0: Vec<f64>,
    pub transitions: Vec<DMatrix<f64>>,
    pub clamp_events: usize,
}

impl SopCurves {
    pub fn num_states(&self) -> usize {
        self.pi.len()
    }

    /// Occupation probability of `state` (1-based) at `t`, interpolated linearly on the grid.
    pub fn at(&self, state: usize, t: f64) -> f64 {
        self.grid.interpolate(&self.pi[state - 1], t)
    }
}

/// Kernel evaluations of sorted inspection times against the grid, with a
/// per-grid-point exponent shift so the nearest unit always has weight 1.
pub(crate) struct KernelTable {
    pub g: usize,
    /// Row-major `n x G`.
    pub values: Vec<f64>,
}

impl KernelTable {
    pub fn new(times: &[f64], grid: &[f64], h: f64) -> Self {
        let g = grid.len();
        let mut values = vec![0.0; times.len() * g];
        for (k, &t) in grid.iter().enumerate() {
            let nearest = times
                .iter()
                .map(|&c| ((c - t) / h).powi(2))
                .fold(f64::INFINITY, f64::min);
            let shift = 0.5 * nearest;
            for (j, &c) in times.iter().enumerate() {
                values[j * g + k] = shifted_kernel(c - t, h, shift);
            }
        }
        Self { g, values }
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.g..(j + 1) * self.g]
    }
}

/// The grid may extend at most one bandwidth beyond the observed inspection times.
fn check_grid(ds: &ClusteredDataset, cfg: &SopConfig) -> Result<(f64, f64)> {
    let (lo, hi) = ds.time_range().ok_or(Error::EmptyInput("dataset"))?;
    let slack = cfg.kernel.bandwidth;
    if cfg.grid.start() < lo - slack || cfg.grid.end() > hi + slack {
        return Err(Error::GridOutsideData {
            grid_min: cfg.grid.start(),
            grid_max: cfg.grid.end(),
            data_min: lo,
            data_max: hi,
        });
    }
    Ok((lo, hi))
}

/// Scales the at-risk curves of states `2..=Q` so all states sum to one after the
/// initial-state curve has been replaced.
pub(crate) fn rebalance_risk_sets(mu: &mut [Vec<f64>]) {
    let g = mu[0].len();
    for k in 0..g {
        let tail: f64 = mu[1..].iter().map(|row| row[k]).sum();
        let target = 1.0 - mu[0][k];
        if tail > 0.0 {
            let scale = target / tail;
            mu[1..].iter_mut().for_each(|row| row[k] *= scale);
        }
    }
}

/// Smoothed counting and at-risk processes on the grid.
pub fn estimate_processes(ds: &ClusteredDataset, cfg: &SopConfig) -> Result<ProcessCurves> {
    check_grid(ds, cfg)?;
    processes_unchecked(ds, cfg)
}

pub(crate) fn processes_unchecked(ds: &ClusteredDataset, cfg: &SopConfig) -> Result<ProcessCurves> {
    let q = ds.num_states();
    let n = ds.len();
    let times = ds.inspection_times();
    let states = ds.states();
    let w = unit_weights(ds, cfg.scheme)?;
    let grid = cfg.grid.points();
    let kt = KernelTable::new(&times, grid, cfg.kernel.bandwidth);

    let smooth = |values: &[f64]| -> Vec<f64> {
        let mut num = vec![0.0; grid.len()];
        let mut den = vec![0.0; grid.len()];
        for j in 0..n {
            let row = kt.row(j);
            for k in 0..grid.len() {
                let kw = w[j] * row[k];
                num[k] += kw * values[j];
                den[k] += kw;
            }
        }
        num.iter().zip(&den).map(|(a, b)| a / b).collect()
    };

    let mut nu = Vec::with_capacity(q - 1);
    for from in 1..q {
        let y: Vec<f64> = states.iter().map(|&s| if s > from { 1.0 } else { 0.0 }).collect();
        let fitted = isotonic_on_predictor(&times, &y, &w, Direction::Increasing)?;
        nu.push(smooth(&fitted));
    }
    let mut mu = Vec::with_capacity(q);
    for state in 1..=q {
        let y: Vec<f64> = states.iter().map(|&s| if s == state { 1.0 } else { 0.0 }).collect();
        if state == 1 && cfg.initial_state_pav {
            let fitted = isotonic_on_predictor(&times, &y, &w, Direction::Decreasing)?;
            mu.push(smooth(&fitted));
        } else {
            mu.push(smooth(&y));
        }
    }
    if cfg.initial_state_pav {
        rebalance_risk_sets(&mut mu);
    }
    Ok(ProcessCurves {
        grid: cfg.grid.clone(),
        nu,
        mu,
    })
}

/// Hazard increment of one transition over one grid step; negative smoothing
/// artifacts are floored at zero.
#[inline]
pub(crate) fn hazard_increment(nu_left: f64, nu_right: f64, mu_left: f64) -> f64 {
    if mu_left > RISK_EPSILON {
        (nu_right - nu_left).max(0.0) / mu_left
    } else {
        0.0
    }
}

pub fn integrated_hazard(pc: &ProcessCurves) -> HazardPath {
    let q = pc.mu.len();
    let g = pc.grid.len();
    let increments = (0..g - 1)
        .map(|k| {
            let mut da = DMatrix::zeros(q, q);
            for l in 0..q - 1 {
                let a = hazard_increment(pc.nu[l][k], pc.nu[l][k + 1], pc.mu[l][k]);
                da[(l, l + 1)] = a;
                da[(l, l)] = -a;
            }
            da
        })
        .collect();
    HazardPath {
        grid: pc.grid.clone(),
        increments,
    }
}

/// `I + dA` with negative diagonals clamped at zero and the row renormalized.
/// Returns the factor and whether any clamping happened.
fn product_factor(da: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let q = da.nrows();
    let mut f = DMatrix::identity(q, q) + da;
    let mut clamped = false;
    for l in 0..q {
        if f[(l, l)] < 0.0 {
            clamped = true;
            f[(l, l)] = 0.0;
            let total: f64 = f.row(l).sum();
            if total > 0.0 {
                for c in 0..q {
                    f[(l, c)] /= total;
                }
            }
        }
    }
    (f, clamped)
}

pub fn transition_matrix_path(hp: &HazardPath) -> TransitionPath {
    let q = hp.increments.first().map_or(0, |m| m.nrows());
    let mut current = DMatrix::identity(q, q);
    let mut matrices = Vec::with_capacity(hp.increments.len() + 1);
    matrices.push(current.clone());
    let mut clamp_events = 0;
    for da in &hp.increments {
        let (factor, clamped) = product_factor(da);
        clamp_events += clamped as usize;
        current = &current * factor;
        matrices.push(current.clone());
    }
    TransitionPath {
        matrices,
        clamp_events,
    }
}

/// One step of `pi <- pi (I + dA)` for a progressive chain given the
/// transition increments `a[l]` (`l -> l+1`). Returns whether a clamp occurred.
#[inline]
pub(crate) fn propagate_chain(pi: &mut [f64], a: &[f64]) -> bool {
    let mut clamped = false;
    let mut inflow = 0.0;
    for l in 0..a.len() {
        let (stay, leave) = if a[l] > 1.0 {
            clamped = true;
            (0.0, 1.0)
        } else {
            (1.0 - a[l], a[l])
        };
        let mass = pi[l];
        pi[l] = mass * stay + inflow;
        inflow = mass * leave;
    }
    let last = a.len();
    pi[last] += inflow;
    clamped
}

/// Initial occupation probabilities from the at-risk processes at the first grid point.
pub(crate) fn initial_occupation(mu: &[Vec<f64>]) -> Vec<f64> {
    let total: f64 = mu.iter().map(|row| row[0]).sum();
    mu.iter().map(|row| row[0] / total).collect()
}

pub(crate) fn normalize(pi: &mut [f64]) {
    let total: f64 = pi.iter().sum();
    if total > 0.0 {
        pi.iter_mut().for_each(|p| *p /= total);
    }
}

/// Marginal occupation probabilities of every state on the grid.
pub fn sop(ds: &ClusteredDataset, cfg: &SopConfig) -> Result<SopCurves> {
    check_grid(ds, cfg)?;
    sop_unchecked(ds, cfg)
}

/// [`sop`] without the grid-range check, for leave-one-out refits on the full-data grid.
pub(crate) fn sop_unchecked(ds: &ClusteredDataset, cfg: &SopConfig) -> Result<SopCurves> {
    let pc = processes_unchecked(ds, cfg)?;
    let hp = integrated_hazard(&pc);
    let path = transition_matrix_path(&hp);
    let q = ds.num_states();
    let pi0 = initial_occupation(&pc.mu);
    let mut pi = vec![vec![0.0; cfg.grid.len()]; q];
    for (k, p) in path.matrices.iter().enumerate() {
        let mut row: Vec<f64> = (0..q)
            .map(|l| (0..q).map(|s| pi0[s] * p[(s, l)]).sum())
            .collect();
        normalize(&mut row);
        for l in 0..q {
            pi[l][k] = row[l];
        }
    }
    Ok(SopCurves {
        grid: cfg.grid.clone(),
        pi,
        pi0,
        transitions: path.matrices,
        clamp_events: path.clamp_events,
    })
}
