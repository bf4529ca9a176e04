//! Monte Carlo runner: per-replicate fits aggregated into estimation and
//! size/power tables.
//!
//! Replicate `k` always draws from stream `k` of the study seed, so the same
//! replicate sees the same random numbers for every `d1` in the grid and the
//! results do not depend on the number of worker threads.

use std::collections::BTreeMap;

use log::info;
use nalgebra::DMatrix;
use rayon::prelude::*;

use super::truth::{conditional_target, reference_beta, target_sample};
use super::{gen_dataset, replicate_rng, ClusterSizeMode, SimConfig};
use crate::error::{Error, Result};
use crate::gee::{binary_transform, fit_design, fit_gee, CorrStructure, DesignExpansion, GeeOptions, Link, Model};
use crate::model::{unit_weights, TimeGrid};
use crate::pseudo::{jackknife_panel, PseudoPanel};

/// Nominal level of the Wald tests.
pub const ALPHA: f64 = 0.05;
const Z_975: f64 = 1.959963984540054;

/// Bias, spread and coverage of one estimator of `beta1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationRow {
    pub model: Model,
    pub corstr: CorrStructure,
    pub truth: f64,
    pub bias: f64,
    /// Monte Carlo standard deviation (divisor `n - 1`).
    pub mcsd: f64,
    /// Mean sandwich standard error.
    pub ase: f64,
    pub mse: f64,
    pub coverage: f64,
    pub replicates: usize,
    pub failures: usize,
}

/// Rejection rate of `beta1 = 0` at one effect size; the size when `delta1 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SizePowerRow {
    pub delta1: f64,
    pub model: Model,
    pub corstr: CorrStructure,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub replicates: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub scenario: ClusterSizeMode,
    pub m: usize,
    pub reps: usize,
    pub seed: u64,
    pub state: usize,
    pub timepoints: Vec<f64>,
    pub estimation: Vec<EstimationRow>,
    pub size_power: Vec<SizePowerRow>,
    /// Distinct failure messages with their counts.
    pub failure_messages: BTreeMap<String, usize>,
}

impl McSummary {
    pub fn estimation_row(&self, model: Model, corstr: CorrStructure) -> Option<&EstimationRow> {
        self.estimation.iter().find(|r| r.model == model && r.corstr == corstr)
    }

    pub fn size_power_row(&self, delta1: f64, model: Model, corstr: CorrStructure) -> Option<&SizePowerRow> {
        self.size_power
            .iter()
            .find(|r| r.delta1 == delta1 && r.model == model && r.corstr == corstr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Estimate {
    value: f64,
    se: f64,
    p_value: f64,
}

type Record = Vec<std::result::Result<Estimate, String>>;

fn combos(cfg: &SimConfig) -> Vec<(CorrStructure, Model)> {
    cfg.corstrs
        .iter()
        .flat_map(|&c| cfg.models.iter().map(move |&m| (c, m)))
        .collect()
}

/// Unweighted pseudo-values of `cfg.state` at `timepoints`.
fn replicate_panel(cfg: &SimConfig, ds: &crate::model::ClusteredDataset, timepoints: &[f64]) -> Result<PseudoPanel> {
    let kernel = cfg.bandwidth.resolve(&ds.inspection_times())?;
    let grid = TimeGrid::for_dataset(ds, cfg.grid_size)?;
    jackknife_panel(ds, cfg.state, timepoints, kernel, &grid)
}

fn run_replicate(cfg: &SimConfig, rep: usize, timepoints: &[f64]) -> Record {
    let combos = combos(cfg);
    let fail_all = |e: Error| combos.iter().map(|_| Err(e.to_string())).collect();
    let mut rng = replicate_rng(cfg.seed, rep as u64);
    let sim = match gen_dataset(cfg, &mut rng) {
        Ok(s) => s,
        Err(e) => return fail_all(e),
    };
    let ds = &sim.dataset;
    let panel = match replicate_panel(cfg, ds, timepoints) {
        Ok(p) if cfg.link == Link::Logit => binary_transform(&p),
        Ok(p) => p,
        Err(e) => return fail_all(e),
    };
    combos
        .iter()
        .map(|&(corr, model)| {
            let opts = GeeOptions {
                link: cfg.link,
                corr,
                ..GeeOptions::default()
            };
            let fit = fit_gee(&panel, ds, model.scheme(), &opts).map_err(|e| e.to_string())?;
            let idx = fit.index_of("z1").expect("z1 is a simulated covariate");
            let w = fit.wald(idx).map_err(|e| e.to_string())?;
            Ok(Estimate {
                value: w.estimate,
                se: w.se,
                p_value: w.p_value,
            })
        })
        .collect()
}

fn run_replicates(cfg: &SimConfig, timepoints: &[f64]) -> Vec<Record> {
    (0..cfg.reps)
        .into_par_iter()
        .map(|rep| run_replicate(cfg, rep, timepoints))
        .collect()
}

/// Summary statistics of replicate estimates against `truth`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub bias: f64,
    pub mcsd: f64,
    pub ase: f64,
    pub mse: f64,
    pub coverage: f64,
}

pub fn estimation_metrics(estimates: &[f64], ses: &[f64], truth: f64) -> Metrics {
    let n = estimates.len() as f64;
    if estimates.is_empty() {
        return Metrics {
            bias: f64::NAN,
            mcsd: f64::NAN,
            ase: f64::NAN,
            mse: f64::NAN,
            coverage: f64::NAN,
        };
    }
    let mean = estimates.iter().sum::<f64>() / n;
    let mcsd = if estimates.len() > 1 {
        (estimates.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let covered = estimates
        .iter()
        .zip(ses)
        .filter(|(b, s)| (*b - truth).abs() <= Z_975 * **s)
        .count();
    Metrics {
        bias: mean - truth,
        mcsd,
        ase: ses.iter().sum::<f64>() / n,
        mse: estimates.iter().map(|b| (b - truth).powi(2)).sum::<f64>() / n,
        coverage: covered as f64 / n,
    }
}

/// Normal-approximation 95% interval for a proportion, clipped to `[0, 1]`.
pub fn binomial_ci(p: f64, n: usize) -> (f64, f64) {
    let half = Z_975 * (p * (1.0 - p) / n as f64).sqrt();
    ((p - half).max(0.0), (p + half).min(1.0))
}

fn tally_failures(records: &[Record], into: &mut BTreeMap<String, usize>) {
    for rec in records {
        // a replicate-level failure repeats the same message for every model
        let mut seen: Vec<&String> = Vec::new();
        for msg in rec.iter().filter_map(|r| r.as_ref().err()) {
            if !seen.contains(&msg) {
                seen.push(msg);
                *into.entry(msg.clone()).or_insert(0) += 1;
            }
        }
    }
}

/// Runs the full study: estimation metrics at `cfg.delta.0` and rejection
/// rates for every `d1` in `cfg.delta1_grid`.
pub fn run_mc_study(cfg: &SimConfig) -> Result<McSummary> {
    cfg.validate()?;
    let timepoints = cfg.timepoints();
    let combos = combos(cfg);
    let mut deltas: Vec<f64> = cfg.delta1_grid.clone();
    if !deltas.contains(&cfg.delta.0) {
        deltas.push(cfg.delta.0);
    }
    let mut failure_messages = BTreeMap::new();
    let mut estimation = Vec::new();
    let mut size_power = Vec::new();
    for &d1 in &deltas {
        let c = cfg.with_delta1(d1);
        info!("{} scenario, m = {}, d1 = {d1}: {} replicates", c.mode, c.m, c.reps);
        let records = run_replicates(&c, &timepoints);
        tally_failures(&records, &mut failure_messages);
        if d1 == cfg.delta.0 {
            let truth = reference_beta(&c, c.state, &timepoints)?[timepoints.len()];
            for (i, &(corstr, model)) in combos.iter().enumerate() {
                let ok: Vec<Estimate> = records.iter().filter_map(|r| r[i].as_ref().ok().copied()).collect();
                let values: Vec<f64> = ok.iter().map(|e| e.value).collect();
                let ses: Vec<f64> = ok.iter().map(|e| e.se).collect();
                let m = estimation_metrics(&values, &ses, truth);
                estimation.push(EstimationRow {
                    model,
                    corstr,
                    truth,
                    bias: m.bias,
                    mcsd: m.mcsd,
                    ase: m.ase,
                    mse: m.mse,
                    coverage: m.coverage,
                    replicates: ok.len(),
                    failures: records.len() - ok.len(),
                });
            }
        }
        if cfg.delta1_grid.contains(&d1) {
            for (i, &(corstr, model)) in combos.iter().enumerate() {
                let ok: Vec<Estimate> = records.iter().filter_map(|r| r[i].as_ref().ok().copied()).collect();
                let rejected = ok.iter().filter(|e| e.p_value < ALPHA).count();
                let rate = if ok.is_empty() { f64::NAN } else { rejected as f64 / ok.len() as f64 };
                let (ci_low, ci_high) = binomial_ci(rate, ok.len());
                size_power.push(SizePowerRow {
                    delta1: d1,
                    model,
                    corstr,
                    rate,
                    ci_low,
                    ci_high,
                    replicates: ok.len(),
                    failures: records.len() - ok.len(),
                });
            }
        }
    }
    Ok(McSummary {
        scenario: cfg.mode,
        m: cfg.m,
        reps: cfg.reps,
        seed: cfg.seed,
        state: cfg.state,
        timepoints,
        estimation,
        size_power,
        failure_messages,
    })
}

/// One row of the conditional study: the fitted occupation probability at `Z2 = z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalRow {
    pub model: Model,
    pub z: f64,
    pub target: f64,
    pub bias: f64,
    pub mcsd: f64,
    pub ase: f64,
    pub replicates: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalSummary {
    pub scenario: ClusterSizeMode,
    pub m: usize,
    pub reps: usize,
    pub seed: u64,
    pub state: usize,
    pub t: f64,
    /// Bandwidth of the covariate kernel that defines the target.
    pub bandwidth: f64,
    pub target_m: usize,
    pub rows: Vec<ConditionalRow>,
    pub failure_messages: BTreeMap<String, usize>,
}

impl ConditionalSummary {
    pub fn row(&self, model: Model, z: f64) -> Option<&ConditionalRow> {
        self.rows.iter().find(|r| r.model == model && r.z == z)
    }
}

/// Conditional estimation at a single time `t`: pseudo-values of `cfg.state` are
/// regressed on `Z2` alone with the identity link and each fitted line is read
/// off at every `z`. Targets come from [`conditional_target`] on a latent
/// sample of `target_m` clusters.
pub fn run_conditional_study(cfg: &SimConfig, t: f64, zs: &[f64], target_m: usize) -> Result<ConditionalSummary> {
    cfg.validate()?;
    let sample = target_sample(cfg, target_m)?;
    let z2: Vec<f64> = sample.dataset.observations().iter().map(|o| o.covariates[1]).collect();
    let bandwidth = crate::smoothing::bandwidth_rot(&z2)?;
    let targets = zs
        .iter()
        .map(|&z| conditional_target(&sample, cfg.state, t, z, Some(bandwidth)))
        .collect::<Result<Vec<_>>>()?;
    let models = cfg.models.clone();
    let names = vec!["z2".to_string()];
    let opts = GeeOptions::default();
    let records: Vec<Vec<std::result::Result<Vec<(f64, f64)>, String>>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| {
            let fail_all = |e: Error| models.iter().map(|_| Err(e.to_string())).collect();
            let sim = match gen_dataset(cfg, &mut replicate_rng(cfg.seed, rep as u64)) {
                Ok(s) => s,
                Err(e) => return fail_all(e),
            };
            let ds = &sim.dataset;
            let panel = match replicate_panel(cfg, ds, &[t]) {
                Ok(p) => p,
                Err(e) => return fail_all(e),
            };
            let covariates: Vec<Vec<f64>> = ds.observations().iter().map(|o| vec![o.covariates[1]]).collect();
            let design = DesignExpansion::from_parts(&covariates, &names, &panel.values);
            models
                .iter()
                .map(|&model| {
                    let w = unit_weights(ds, model.scheme()).map_err(|e| e.to_string())?;
                    let fit = fit_design(&design, ds.cluster_index(), &w, &opts).map_err(|e| e.to_string())?;
                    Ok(zs
                        .iter()
                        .map(|&z| {
                            let x = DMatrix::from_row_slice(1, 2, &[1.0, z]);
                            let var = (&x * &fit.cov * x.transpose())[(0, 0)];
                            (fit.predict(0, &[z]), var.max(0.0).sqrt())
                        })
                        .collect())
                })
                .collect()
        })
        .collect();
    let mut failure_messages = BTreeMap::new();
    for rec in &records {
        if let Some(Err(msg)) = rec.iter().find(|r| r.is_err()) {
            *failure_messages.entry(msg.clone()).or_insert(0) += 1;
        }
    }
    let mut rows = Vec::new();
    for (i, &model) in models.iter().enumerate() {
        let ok: Vec<&Vec<(f64, f64)>> = records.iter().filter_map(|r| r[i].as_ref().ok()).collect();
        for (zi, &z) in zs.iter().enumerate() {
            let values: Vec<f64> = ok.iter().map(|v| v[zi].0).collect();
            let ses: Vec<f64> = ok.iter().map(|v| v[zi].1).collect();
            let m = estimation_metrics(&values, &ses, targets[zi]);
            rows.push(ConditionalRow {
                model,
                z,
                target: targets[zi],
                bias: m.bias,
                mcsd: m.mcsd,
                ase: m.ase,
                replicates: ok.len(),
                failures: records.len() - ok.len(),
            });
        }
    }
    Ok(ConditionalSummary {
        scenario: cfg.mode,
        m: cfg.m,
        reps: cfg.reps,
        seed: cfg.seed,
        state: cfg.state,
        t,
        bandwidth,
        target_m,
        rows,
        failure_messages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small(mode: ClusterSizeMode) -> SimConfig {
        SimConfig {
            m: 12,
            reps: 6,
            mode,
            r: 4,
            reference_m: 300,
            delta1_grid: vec![0.0, 0.75],
            grid_size: 41,
            models: if mode == ClusterSizeMode::Icg { Model::ALL.to_vec() } else { vec![Model::Gee, Model::Cwgee] },
            ..SimConfig::default()
        }
    }

    proptest! {
        #[test]
        fn mse_decomposes(values in prop::collection::vec(-2.0f64..2.0, 2..40), truth in -1.0f64..1.0) {
            let ses = vec![0.1; values.len()];
            let m = estimation_metrics(&values, &ses, truth);
            let n = values.len() as f64;
            let rhs = m.bias * m.bias + m.mcsd * m.mcsd * (n - 1.0) / n;
            prop_assert!((m.mse - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn coverage_counts_intervals() {
        let m = estimation_metrics(&[0.0, 0.5, 1.0, 3.0], &[1.0; 4], 0.0);
        assert_eq!(m.coverage, 0.75);
        assert_eq!(m.ase, 1.0);
        let (lo, hi) = binomial_ci(0.05, 500);
        assert!((hi - lo - 2.0 * 1.959963984540054 * (0.05f64 * 0.95 / 500.0).sqrt()).abs() < 1e-15);
        assert_eq!(binomial_ci(0.0, 10), (0.0, 0.0));
    }

    #[test]
    fn summary_shape_and_ranges() {
        let cfg = small(ClusterSizeMode::Ics);
        let s = run_mc_study(&cfg).unwrap();
        assert_eq!(s.estimation.len(), 2);
        assert_eq!(s.size_power.len(), 4);
        for row in &s.size_power {
            assert!(row.replicates + row.failures == cfg.reps);
            if row.replicates > 0 {
                assert!((0.0..=1.0).contains(&row.rate));
                assert!(row.ci_low <= row.rate && row.rate <= row.ci_high);
            }
        }
        for row in &s.estimation {
            assert!((0.0..=1.0).contains(&row.coverage));
            assert!(row.mse >= 0.0);
        }
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let cfg = small(ClusterSizeMode::Icg);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_mc_study(&cfg).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn conditional_study_is_reproducible() {
        let cfg = SimConfig {
            models: vec![Model::Cwgee],
            ..small(ClusterSizeMode::Ics)
        };
        let a = run_conditional_study(&cfg, 3.0, &[0.0], 100).unwrap();
        let b = run_conditional_study(&cfg, 3.0, &[0.0], 100).unwrap();
        assert_eq!(a, b);
        let row = a.row(Model::Cwgee, 0.0).unwrap();
        assert!((0.0..=1.0).contains(&row.target));
        assert!(row.bias.abs() < 0.5);
    }
}
