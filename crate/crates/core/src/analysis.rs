//! End-to-end analysis of a clustered current-status dataset: time points,
//! pseudo-values and one regression per requested model, plus a stratified
//! diagnostic for informative cluster size.

use crate::error::{Error, Result};
use crate::gee::{binary_transform, fit_gee, CorrStructure, GeeFit, GeeOptions, Link, Model, WaldTest};
use crate::isotonic::{npmle_cs_survival, SurvivalStep};
use crate::model::{validate_dataset, ClusteredDataset, TimeGrid};
use crate::pseudo::{choose_timepoints, jackknife_panel};
use crate::smoothing::{quantile_sorted, BandwidthRule};

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub state: usize,
    pub r: usize,
    /// Restrict time points to the 5%-95% inspection-time quantiles.
    pub trim: bool,
    pub models: Vec<Model>,
    pub link: Link,
    pub corstr: CorrStructure,
    pub bandwidth: BandwidthRule,
    pub grid_size: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            state: 1,
            r: 10,
            trim: true,
            models: vec![Model::Gee, Model::Cwgee],
            link: Link::Identity,
            corstr: CorrStructure::Ar1,
            bandwidth: BandwidthRule::RuleOfThumb,
            grid_size: TimeGrid::DEFAULT_SIZE,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelReport {
    pub model: Model,
    pub fit: GeeFit,
    /// One Wald test per coefficient, in the order of `fit.names`.
    pub tests: Vec<WaldTest>,
}

#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub state: usize,
    pub timepoints: Vec<f64>,
    pub bandwidth: f64,
    pub fits: Vec<ModelReport>,
}

impl AnalysisReport {
    pub fn model(&self, model: Model) -> Option<&ModelReport> {
        self.fits.iter().find(|f| f.model == model)
    }
}

/// Checks flag combinations that can be rejected before any computation.
pub fn check_request(ds: &ClusteredDataset, cfg: &AnalysisConfig) -> Result<()> {
    if !ds.state_space().contains(cfg.state) {
        return Err(Error::StateOutOfRange {
            state: cfg.state,
            num_states: ds.num_states(),
        });
    }
    if cfg.models.contains(&Model::Dwgee) && !ds.has_groups() {
        return Err(Error::MissingGroups);
    }
    if cfg.r == 0 {
        return Err(Error::InvalidConfig("at least one time point is required".into()));
    }
    if cfg.models.is_empty() {
        return Err(Error::InvalidConfig("no model requested".into()));
    }
    Ok(())
}

pub fn analyze(ds: &ClusteredDataset, cfg: &AnalysisConfig) -> Result<AnalysisReport> {
    let report = validate_dataset(ds);
    if !report.is_ok() {
        return Err(Error::Validation(report));
    }
    check_request(ds, cfg)?;
    let timepoints = choose_timepoints(ds, cfg.r, cfg.trim)?;
    let kernel = cfg.bandwidth.resolve(&ds.inspection_times())?;
    let grid = TimeGrid::for_dataset(ds, cfg.grid_size)?;
    let mut panel = jackknife_panel(ds, cfg.state, &timepoints, kernel, &grid)?;
    if cfg.link == Link::Logit {
        panel = binary_transform(&panel);
    }
    let opts = GeeOptions {
        link: cfg.link,
        corr: cfg.corstr,
        ..GeeOptions::default()
    };
    let fits = cfg
        .models
        .iter()
        .map(|&model| {
            let fit = fit_gee(&panel, ds, model.scheme(), &opts)?;
            let tests = (0..fit.names.len()).map(|k| fit.wald(k)).collect::<Result<Vec<_>>>()?;
            Ok(ModelReport { model, fit, tests })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AnalysisReport {
        state: cfg.state,
        timepoints,
        bandwidth: kernel.bandwidth,
        fits,
    })
}

/// Units of one cluster-size tercile and their survival curve in the chosen state.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeStratum {
    /// 1 (smallest clusters) to 3.
    pub tercile: usize,
    pub min_size: usize,
    pub max_size: usize,
    pub clusters: usize,
    pub units: usize,
    pub curve: SurvivalStep,
}

/// Current-status NPMLE of the probability of not having left `state` by time
/// `t` (the event is an observed state above `state`), separately for the
/// lower, middle and upper thirds of the cluster-size distribution. Curves that
/// differ systematically across strata suggest informative cluster size.
/// Strata without units are omitted.
pub fn diagnose_ics(ds: &ClusteredDataset, state: usize) -> Result<Vec<SizeStratum>> {
    if ds.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    if state == 0 || state >= ds.num_states() {
        return Err(Error::InvalidTransition {
            from: state,
            num_states: ds.num_states(),
        });
    }
    let sizes = ds.cluster_sizes();
    let mut sorted: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    sorted.sort_by(f64::total_cmp);
    let cuts = [quantile_sorted(&sorted, 1.0 / 3.0), quantile_sorted(&sorted, 2.0 / 3.0)];
    let tercile_of = |n: usize| {
        let n = n as f64;
        if n <= cuts[0] {
            1
        } else if n <= cuts[1] {
            2
        } else {
            3
        }
    };
    let mut out = Vec::new();
    for tercile in 1..=3 {
        let members: Vec<usize> = (0..ds.len())
            .filter(|&j| tercile_of(sizes[ds.cluster_index()[j]]) == tercile)
            .collect();
        if members.is_empty() {
            continue;
        }
        let obs = ds.observations();
        let times: Vec<f64> = members.iter().map(|&j| obs[j].inspection_time).collect();
        let events: Vec<bool> = members.iter().map(|&j| obs[j].state > state).collect();
        let curve = npmle_cs_survival(&times, &events, &vec![1.0; members.len()])?;
        let strata_sizes: Vec<usize> = (0..sizes.len()).filter(|&c| tercile_of(sizes[c]) == tercile).map(|c| sizes[c]).collect();
        out.push(SizeStratum {
            tercile,
            min_size: *strata_sizes.iter().min().unwrap(),
            max_size: *strata_sizes.iter().max().unwrap(),
            clusters: strata_sizes.len(),
            units: members.len(),
            curve,
        });
    }
    Ok(out)
}
