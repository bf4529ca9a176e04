//! Synthetic clustered three-state current-status data with informative,
//! non-informative or group-informative cluster sizes, together with truth
//! oracles and a Monte Carlo harness.
//!
//! Exit times from the first state follow a lognormal model with a shared
//! cluster effect,
//! `log T1 = d1 Z1 + d2 Z2 + nu + sigma eps`. The second exit time is drawn
//! uniformly above `T1` on the probability scale of the same conditional law.

pub mod mc;
pub mod truth;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Poisson, StandardNormal, Weibull};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};

use crate::error::{Error, Result};
use crate::gee::{CorrStructure, Link, Model};
use crate::model::{ClusteredDataset, Observation, StateSpace};
use crate::smoothing::BandwidthRule;

pub use mc::{run_conditional_study, run_mc_study, ConditionalSummary, EstimationRow, McSummary, SizePowerRow};
pub use truth::{conditional_target, reference_beta, true_sop_conditional, true_sop_lognormal, true_sop_marginal};

/// How cluster sizes relate to the outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterSizeMode {
    /// `n_i ~ Poisson(exp(1.5 + 3 nu - 3 Z1)) + 2`.
    Ics,
    /// `n_i ~ Poisson(20)`, redrawn until positive.
    NonIcs,
    /// Two within-cluster groups with sizes driven by `nu`; the binary covariate is the group label.
    Icg,
}

impl fmt::Display for ClusterSizeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClusterSizeMode::Ics => "ics",
            ClusterSizeMode::NonIcs => "nonics",
            ClusterSizeMode::Icg => "icg",
        })
    }
}

impl FromStr for ClusterSizeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ics" => Ok(ClusterSizeMode::Ics),
            "nonics" | "non-ics" => Ok(ClusterSizeMode::NonIcs),
            "icg" => Ok(ClusterSizeMode::Icg),
            _ => Err(Error::InvalidConfig(format!("unknown scenario `{s}` (expected ics, nonics or icg)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub m: usize,
    pub delta: (f64, f64),
    pub sigma: f64,
    pub nu_var: f64,
    pub z2_var: f64,
    pub weibull_shape: f64,
    pub weibull_scale: f64,
    pub mode: ClusterSizeMode,
    /// Number of time points for the pseudo-values.
    pub r: usize,
    /// Inspection-time quantile levels bounding the time points.
    pub timepoint_probs: (f64, f64),
    pub reps: usize,
    pub seed: u64,
    pub models: Vec<Model>,
    pub corstrs: Vec<CorrStructure>,
    pub link: Link,
    /// Target state (1-based) for the pseudo-values.
    pub state: usize,
    /// Values of `d1` for the size/power study; `0` gives the size.
    pub delta1_grid: Vec<f64>,
    pub grid_size: usize,
    /// Bandwidth of the time kernel in the marginal estimator.
    pub bandwidth: BandwidthRule,
    /// Clusters in the reference sample that defines the true regression slope.
    pub reference_m: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            m: 30,
            delta: (0.25, 0.8),
            sigma: 0.3,
            nu_var: 0.25,
            z2_var: 0.15,
            weibull_shape: 3.0,
            weibull_scale: 5.0,
            mode: ClusterSizeMode::Ics,
            r: 10,
            timepoint_probs: (0.01, 0.5),
            reps: 1000,
            seed: 2024,
            models: vec![Model::Gee, Model::Cwgee],
            corstrs: vec![CorrStructure::Independent],
            link: Link::Identity,
            state: 1,
            delta1_grid: vec![0.0, 0.25, 0.5, 0.75],
            grid_size: crate::model::TimeGrid::DEFAULT_SIZE,
            bandwidth: BandwidthRule::RuleOfThumb,
            reference_m: 20_000,
        }
    }
}

impl SimConfig {
    pub const NUM_STATES: usize = 3;

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.sigma > 0.0) {
            return bad("sigma must be positive");
        }
        if self.m < 2 {
            return bad("at least two clusters are required");
        }
        if self.reps < 1 {
            return bad("at least one replicate is required");
        }
        if self.r < 1 {
            return bad("at least one time point is required");
        }
        if !(self.nu_var >= 0.0 && self.z2_var >= 0.0) {
            return bad("variances must be nonnegative");
        }
        if !(self.weibull_shape > 0.0 && self.weibull_scale > 0.0) {
            return bad("Weibull parameters must be positive");
        }
        if !(1..=Self::NUM_STATES).contains(&self.state) {
            return Err(Error::StateOutOfRange {
                state: self.state,
                num_states: Self::NUM_STATES,
            });
        }
        if self.models.contains(&Model::Dwgee) && self.mode != ClusterSizeMode::Icg {
            return bad("dwgee needs within-cluster groups, which only the icg scenario generates");
        }
        if self.models.is_empty() || self.corstrs.is_empty() {
            return bad("at least one model and one correlation structure are required");
        }
        let (lo, hi) = self.timepoint_probs;
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return bad("time-point quantile levels must satisfy 0 < lo <= hi < 1");
        }
        if self.grid_size < 2 {
            return bad("grid size must be at least 2");
        }
        Ok(())
    }

    /// Weibull quantile of the inspection-time distribution.
    pub fn inspection_quantile(&self, p: f64) -> f64 {
        self.weibull_scale * (-(1.0 - p).ln()).powf(1.0 / self.weibull_shape)
    }

    /// `r` equally spaced points between the inspection-time quantiles at
    /// `timepoint_probs` (the midpoint when `r = 1`).
    pub fn timepoints(&self) -> Vec<f64> {
        let lo = self.inspection_quantile(self.timepoint_probs.0);
        let hi = self.inspection_quantile(self.timepoint_probs.1);
        if self.r == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..self.r)
            .map(|k| lo + (hi - lo) * k as f64 / (self.r - 1) as f64)
            .collect()
    }

    pub fn with_delta1(&self, d1: f64) -> Self {
        Self {
            delta: (d1, self.delta.1),
            ..self.clone()
        }
    }
}

/// Latent event times of one generated unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentUnit {
    pub t1: f64,
    pub t2: f64,
    pub nu: f64,
}

impl LatentUnit {
    /// State occupied at time `t`.
    pub fn state_at(&self, t: f64) -> usize {
        if t < self.t1 {
            1
        } else if t < self.t2 {
            2
        } else {
            3
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub dataset: ClusteredDataset,
    pub latent: Vec<LatentUnit>,
}

/// Independent random stream for replicate `rep` of a study seeded with `seed`.
pub fn replicate_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// One generated cluster: covariates, group labels and latent times per unit.
pub(crate) struct ClusterDraw {
    pub units: Vec<UnitDraw>,
}

pub(crate) struct UnitDraw {
    pub z1: f64,
    pub z2: f64,
    pub group: Option<i64>,
    pub latent: LatentUnit,
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> usize {
    if !(lambda > 0.0) {
        return 0;
    }
    Poisson::new(lambda).map_or(0, |d| d.sample(rng) as usize)
}

pub(crate) fn draw_cluster(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> ClusterDraw {
    let e: f64 = StandardNormal.sample(rng);
    let nu = cfg.nu_var.sqrt() * e;
    let (labels, z1_cluster): (Vec<Option<i64>>, f64) = match cfg.mode {
        ClusterSizeMode::Ics => {
            let z1 = if Bernoulli::new(0.5).unwrap().sample(rng) { 1.0 } else { 0.0 };
            let n = poisson(rng, (1.5 + 3.0 * nu - 3.0 * z1).exp()) + 2;
            (vec![None; n], z1)
        }
        ClusterSizeMode::NonIcs => {
            let z1 = if Bernoulli::new(0.5).unwrap().sample(rng) { 1.0 } else { 0.0 };
            let mut n = poisson(rng, 20.0);
            while n == 0 {
                n = poisson(rng, 20.0);
            }
            (vec![None; n], z1)
        }
        ClusterSizeMode::Icg => {
            let n0 = poisson(rng, (3.2 + 2.5 * nu).exp()) + 2;
            let n1 = poisson(rng, (0.8 + 1.5 * nu).exp()) + 2;
            let mut labels = vec![Some(0); n0];
            labels.extend(std::iter::repeat_n(Some(1), n1));
            (labels, 0.0)
        }
    };
    let z2_dist = Normal::new(0.0, cfg.z2_var.sqrt()).unwrap();
    let std_normal = NormalDist::standard();
    let units = labels
        .into_iter()
        .map(|group| {
            let z1 = group.map_or(z1_cluster, |g| g as f64);
            let z2 = z2_dist.sample(rng);
            let eps: f64 = StandardNormal.sample(rng);
            let r2: f64 = rng.random();
            let loc = cfg.delta.0 * z1 + cfg.delta.1 * z2 + nu;
            let t1 = (loc + cfg.sigma * eps).exp();
            // D(T2) = D(T1) + R (1 - D(T1)), written through upper tails for accuracy
            let upper = (1.0 - r2) * std_normal.cdf(-eps);
            let t2 = if upper > 0.0 {
                (loc - cfg.sigma * std_normal.inverse_cdf(upper)).exp().max(t1)
            } else {
                f64::INFINITY
            };
            UnitDraw {
                z1,
                z2,
                group,
                latent: LatentUnit { t1, t2, nu },
            }
        })
        .collect();
    ClusterDraw { units }
}

/// Generates one dataset from `rng`.
pub fn gen_dataset(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<SimulatedData> {
    cfg.validate()?;
    let inspection = Weibull::new(cfg.weibull_scale, cfg.weibull_shape)
        .map_err(|e| Error::InvalidConfig(format!("inspection distribution: {e}")))?;
    let mut obs = Vec::new();
    let mut latent = Vec::new();
    for i in 0..cfg.m {
        let cluster = draw_cluster(cfg, rng);
        for (j, u) in cluster.units.into_iter().enumerate() {
            let c: f64 = inspection.sample(rng);
            obs.push(Observation {
                cluster_id: format!("c{}", i + 1),
                unit_id: format!("c{}u{}", i + 1, j + 1),
                inspection_time: c,
                state: u.latent.state_at(c),
                covariates: vec![u.z1, u.z2],
                group: u.group,
            });
            latent.push(u.latent);
        }
    }
    let dataset = ClusteredDataset::new(
        StateSpace::new(SimConfig::NUM_STATES)?,
        obs,
        vec!["z1".into(), "z2".into()],
    );
    Ok(SimulatedData { dataset, latent })
}
