//! Data model for clustered current-status observations on a progressive
//! (tracking) multistate chain `1 -> 2 -> ... -> Q`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Progressive state space with `Q >= 2` states; state `Q` is absorbing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    num_states: usize,
}

impl StateSpace {
    pub fn new(num_states: usize) -> Result<Self> {
        if num_states < 2 {
            return Err(Error::InvalidStateSpace(num_states));
        }
        Ok(Self { num_states })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_transitions(&self) -> usize {
        self.num_states - 1
    }

    pub fn contains(&self, state: usize) -> bool {
        (1..=self.num_states).contains(&state)
    }
}

/// One inspected unit: the state occupied at its single inspection time.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub cluster_id: String,
    pub unit_id: String,
    pub inspection_time: f64,
    /// 1-based state label.
    pub state: usize,
    pub covariates: Vec<f64>,
    pub group: Option<i64>,
}

/// How units are weighted in the marginal estimators and the estimating equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightScheme {
    /// `w = 1` (GEE).
    Unweighted,
    /// `w = 1 / n_i` (CWGEE).
    InverseClusterSize,
    /// `w = 1 / (g_i * n_iG)` where `g_i` counts the nonempty groups of cluster `i` (DWGEE).
    InverseGroupSize,
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightScheme::Unweighted => "none",
            WeightScheme::InverseClusterSize => "cluster",
            WeightScheme::InverseGroupSize => "group",
        })
    }
}

impl FromStr for WeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "unweighted" => Ok(WeightScheme::Unweighted),
            "cluster" => Ok(WeightScheme::InverseClusterSize),
            "group" => Ok(WeightScheme::InverseGroupSize),
            _ => Err(Error::InvalidConfig(format!("unknown weighting `{s}` (expected none, cluster or group)"))),
        }
    }
}

/// One well-formedness problem found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty,
    InvalidTime { index: usize, time: f64 },
    StateOutOfRange { index: usize, state: usize },
    RaggedCovariates { index: usize, expected: usize, found: usize },
    NonFiniteCovariate { index: usize },
    MixedGroupLabeling { labeled: usize, unlabeled: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "dataset has no observations"),
            Violation::InvalidTime { index, time } => {
                write!(f, "row {index}: inspection time {time} is negative or not finite")
            }
            Violation::StateOutOfRange { index, state } => {
                write!(f, "row {index}: state {state} out of range")
            }
            Violation::RaggedCovariates {
                index,
                expected,
                found,
            } => write!(f, "row {index}: {found} covariates, expected {expected}"),
            Violation::NonFiniteCovariate { index } => {
                write!(f, "row {index}: covariate is not finite")
            }
            Violation::MixedGroupLabeling { labeled, unlabeled } => write!(
                f,
                "mixed group labeling: {labeled} labeled and {unlabeled} unlabeled observations"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

/// Immutable collection of clustered observations with derived cluster bookkeeping.
///
/// Cluster indices are assigned in order of first appearance.
#[derive(Debug, Clone)]
pub struct ClusteredDataset {
    state_space: StateSpace,
    observations: Vec<Observation>,
    covariate_names: Vec<String>,
    cluster_ids: Vec<String>,
    cluster_of: Vec<usize>,
    cluster_sizes: Vec<usize>,
}

impl ClusteredDataset {
    /// Builds the dataset without validating it; see [`validate_dataset`] and
    /// [`ClusteredDataset::checked`].
    pub fn new(
        state_space: StateSpace,
        observations: Vec<Observation>,
        covariate_names: Vec<String>,
    ) -> Self {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut cluster_ids = Vec::new();
        let mut cluster_sizes: Vec<usize> = Vec::new();
        let mut cluster_of = Vec::with_capacity(observations.len());
        for obs in &observations {
            let next = cluster_ids.len();
            let c = *index.entry(obs.cluster_id.as_str()).or_insert(next);
            if c == next {
                cluster_ids.push(obs.cluster_id.clone());
                cluster_sizes.push(0);
            }
            cluster_sizes[c] += 1;
            cluster_of.push(c);
        }
        Self {
            state_space,
            observations,
            covariate_names,
            cluster_ids,
            cluster_of,
            cluster_sizes,
        }
    }

    /// Builds and validates, returning the report as an error when malformed.
    pub fn checked(
        state_space: StateSpace,
        observations: Vec<Observation>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let ds = Self::new(state_space, observations, covariate_names);
        let report = validate_dataset(&ds);
        if report.is_ok() {
            Ok(ds)
        } else {
            Err(Error::Validation(report))
        }
    }

    pub fn state_space(&self) -> StateSpace {
        self.state_space
    }

    pub fn num_states(&self) -> usize {
        self.state_space.num_states()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Covariate dimension `p`.
    pub fn num_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    /// Total number of units `n`.
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Number of clusters `m`.
    pub fn num_clusters(&self) -> usize {
        self.cluster_ids.len()
    }

    pub fn cluster_ids(&self) -> &[String] {
        &self.cluster_ids
    }

    /// Cluster sizes `n_i` in cluster-index order.
    pub fn cluster_sizes(&self) -> &[usize] {
        &self.cluster_sizes
    }

    /// Internal cluster index of every observation.
    pub fn cluster_index(&self) -> &[usize] {
        &self.cluster_of
    }

    pub fn has_groups(&self) -> bool {
        self.observations.iter().any(|o| o.group.is_some())
    }

    pub fn inspection_times(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.inspection_time).collect()
    }

    pub fn states(&self) -> Vec<usize> {
        self.observations.iter().map(|o| o.state).collect()
    }

    /// For each observation, the number of units in its cluster sharing its group
    /// label (`n_iG`) and the number of nonempty groups in its cluster (`g_i`).
    pub fn group_sizes(&self) -> Result<Vec<(usize, usize)>> {
        if self.observations.iter().any(|o| o.group.is_none()) {
            return Err(Error::MissingGroups);
        }
        let mut counts: HashMap<(usize, i64), usize> = HashMap::new();
        let mut groups_per_cluster: HashMap<usize, usize> = HashMap::new();
        for (obs, &c) in self.observations.iter().zip(&self.cluster_of) {
            let slot = counts.entry((c, obs.group.unwrap())).or_insert(0);
            if *slot == 0 {
                *groups_per_cluster.entry(c).or_insert(0) += 1;
            }
            *slot += 1;
        }
        Ok(self
            .observations
            .iter()
            .zip(&self.cluster_of)
            .map(|(obs, &c)| (counts[&(c, obs.group.unwrap())], groups_per_cluster[&c]))
            .collect())
    }

    /// Copy of the dataset with observation `index` removed.
    pub fn without_unit(&self, index: usize) -> Self {
        let obs = self
            .observations
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != index)
            .map(|(_, o)| o.clone())
            .collect();
        Self::new(self.state_space, obs, self.covariate_names.clone())
    }

    /// Range `[min C, max C]` of the inspection times.
    pub fn time_range(&self) -> Option<(f64, f64)> {
        let mut it = self.observations.iter().map(|o| o.inspection_time);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), t| (lo.min(t), hi.max(t))))
    }
}

/// Lists every well-formedness violation; an empty report means the dataset is usable.
pub fn validate_dataset(ds: &ClusteredDataset) -> ValidationReport {
    let mut violations = Vec::new();
    if ds.is_empty() {
        violations.push(Violation::Empty);
    }
    let p = ds.num_covariates();
    let mut labeled = 0;
    for (index, obs) in ds.observations().iter().enumerate() {
        if !(obs.inspection_time.is_finite() && obs.inspection_time >= 0.0) {
            violations.push(Violation::InvalidTime {
                index,
                time: obs.inspection_time,
            });
        }
        if !ds.state_space().contains(obs.state) {
            violations.push(Violation::StateOutOfRange {
                index,
                state: obs.state,
            });
        }
        if obs.covariates.len() != p {
            violations.push(Violation::RaggedCovariates {
                index,
                expected: p,
                found: obs.covariates.len(),
            });
        } else if obs.covariates.iter().any(|z| !z.is_finite()) {
            violations.push(Violation::NonFiniteCovariate { index });
        }
        if obs.group.is_some() {
            labeled += 1;
        }
    }
    if labeled > 0 && labeled < ds.len() {
        violations.push(Violation::MixedGroupLabeling {
            labeled,
            unlabeled: ds.len() - labeled,
        });
    }
    ValidationReport { violations }
}

/// `I(U_{l,l+1} <= C)`: under a progressive chain the `l -> l+1` transition has
/// happened by the inspection time exactly when the observed state exceeds `l`.
pub fn transition_indicator(obs: &Observation, from_state: usize, space: StateSpace) -> Result<bool> {
    if from_state == 0 || from_state >= space.num_states() {
        return Err(Error::InvalidTransition {
            from: from_state,
            num_states: space.num_states(),
        });
    }
    Ok(obs.state > from_state)
}

/// Per-unit weights in observation order.
pub fn unit_weights(ds: &ClusteredDataset, scheme: WeightScheme) -> Result<Vec<f64>> {
    match scheme {
        WeightScheme::Unweighted => Ok(vec![1.0; ds.len()]),
        WeightScheme::InverseClusterSize => {
            let sizes = ds.cluster_sizes();
            Ok(ds
                .cluster_index()
                .iter()
                .map(|&c| 1.0 / sizes[c] as f64)
                .collect())
        }
        WeightScheme::InverseGroupSize => Ok(ds
            .group_sizes()?
            .into_iter()
            .map(|(size, groups)| 1.0 / (groups as f64 * size as f64))
            .collect()),
    }
}

/// Strictly increasing evaluation grid with at least two points.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub const DEFAULT_SIZE: usize = 101;

    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid("non-finite grid point".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("points must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    /// `size` equally spaced points on `[start, end]`.
    pub fn uniform(start: f64, end: f64, size: usize) -> Result<Self> {
        if size < 2 || !(end > start) {
            return Err(Error::InvalidGrid(format!(
                "cannot place {size} points on [{start}, {end}]"
            )));
        }
        let step = (end - start) / (size - 1) as f64;
        let mut points: Vec<f64> = (0..size).map(|k| start + step * k as f64).collect();
        points[size - 1] = end;
        Self::new(points)
    }

    /// `size` equally spaced points spanning the observed inspection times.
    pub fn for_dataset(ds: &ClusteredDataset, size: usize) -> Result<Self> {
        let (lo, hi) = ds.time_range().ok_or(Error::EmptyInput("dataset"))?;
        Self::uniform(lo, hi, size)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.points[0]
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Linear interpolation of `values` (aligned with the grid) at `t`, constant
    /// beyond the ends.
    pub fn interpolate(&self, values: &[f64], t: f64) -> f64 {
        let pts = &self.points;
        if t <= pts[0] {
            return values[0];
        }
        let last = pts.len() - 1;
        if t >= pts[last] {
            return values[last];
        }
        let k = pts.partition_point(|&p| p <= t) - 1;
        let frac = (t - pts[k]) / (pts[k + 1] - pts[k]);
        values[k] + frac * (values[k + 1] - values[k])
    }
}
