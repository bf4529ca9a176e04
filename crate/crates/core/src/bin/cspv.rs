use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use log::info;

use cspv::analysis::{analyze, check_request, diagnose_ics, AnalysisConfig};
use cspv::gee::{CorrStructure, Link, Model};
use cspv::io::{
    conditional_table, dataset_table, diagnostic_table, estimation_table, failure_table, fit_table, pseudo_table,
    read_config, read_dataset, size_power_table, sop_table, trajectory_table,
};
use cspv::model::{TimeGrid, WeightScheme};
use cspv::pseudo::{choose_timepoints, jackknife_panel, trajectories};
use cspv::simulation::{gen_dataset, replicate_rng, run_conditional_study, run_mc_study, ClusterSizeMode, SimConfig};
use cspv::smoothing::BandwidthRule;
use cspv::sop::{sop, SopConfig};
use cspv::{Error, Result};

/// State occupation probabilities and pseudo-value regression for clustered
/// multistate current-status data.
#[derive(Parser, Debug)]
#[command(name = "cspv", version)]
struct Cli {
    /// key=value file supplying defaults for any long flag; flags on the command line win
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset
    Simulate(SimulateArgs),
    /// Estimate occupation probabilities on a time grid
    Sop(SopArgs),
    /// Jackknife pseudo-values at r time points
    Pseudo(PseudoArgs),
    /// Pseudo-value regression with sandwich standard errors
    Fit(FitArgs),
    /// Monte Carlo study of size, power and estimation accuracy
    Mc(McArgs),
    /// Survival curves stratified by cluster-size tercile
    DiagnoseIcs(DiagnoseArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, default_value = "ics")]
    scenario: ClusterSizeMode,
    #[arg(long, default_value_t = 30)]
    m: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, default_value_t = 0.25, allow_negative_numbers = true)]
    delta1: f64,
    #[arg(long, default_value_t = 0.8, allow_negative_numbers = true)]
    delta2: f64,
    #[arg(long, default_value_t = 0.3)]
    sigma: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EstimatorArgs {
    /// Dataset CSV
    #[arg(long)]
    input: PathBuf,
    /// Number of states (default: largest observed state)
    #[arg(long)]
    states: Option<usize>,
    #[arg(long, default_value_t = TimeGrid::DEFAULT_SIZE)]
    grid_size: usize,
    /// Kernel bandwidth or `rot` for the rule of thumb
    #[arg(long, default_value = "rot")]
    bandwidth: BandwidthRule,
}

#[derive(Args, Debug)]
struct SopArgs {
    #[command(flatten)]
    est: EstimatorArgs,
    #[arg(long, default_value = "none")]
    weights: WeightScheme,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PseudoArgs {
    #[command(flatten)]
    est: EstimatorArgs,
    #[arg(long, default_value_t = 1)]
    state: usize,
    #[arg(long, default_value_t = 10)]
    r: usize,
    /// Spread time points over the full inspection range instead of the 5%-95% quantiles
    #[arg(long)]
    no_trim: bool,
    /// Comma-separated unit ids whose trajectories over the whole grid are written instead
    #[arg(long, value_delimiter = ',')]
    trajectories: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    est: EstimatorArgs,
    #[arg(long, value_delimiter = ',', default_value = "gee,cwgee")]
    models: Vec<Model>,
    #[arg(long, default_value = "identity")]
    link: Link,
    #[arg(long, default_value = "ar1")]
    corstr: CorrStructure,
    #[arg(long, default_value_t = 1)]
    state: usize,
    #[arg(long, default_value_t = 10)]
    r: usize,
    #[arg(long)]
    no_trim: bool,
    /// Output directory for fit.csv and ics_diagnostic.csv
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct McArgs {
    #[arg(long, default_value = "ics")]
    scenario: ClusterSizeMode,
    #[arg(long, default_value_t = 30)]
    m: usize,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Effect used for the estimation table
    #[arg(long, default_value_t = 0.25, allow_negative_numbers = true)]
    delta1: f64,
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75", allow_negative_numbers = true)]
    delta1_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "gee,cwgee")]
    models: Vec<Model>,
    #[arg(long, value_delimiter = ',', default_value = "ind")]
    corstr: Vec<CorrStructure>,
    #[arg(long, default_value = "identity")]
    link: Link,
    #[arg(long, default_value_t = 1)]
    state: usize,
    #[arg(long, default_value_t = 10)]
    r: usize,
    #[arg(long, default_value_t = 20_000)]
    reference_m: usize,
    /// Also run the conditional study at this time, evaluated at the quartiles of Z2
    #[arg(long)]
    conditional_t: Option<f64>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    states: Option<usize>,
    #[arg(long, default_value_t = 1)]
    state: usize,
    #[arg(long)]
    out: PathBuf,
}

const SUBCOMMANDS: [&str; 6] = ["simulate", "sop", "pseudo", "fit", "mc", "diagnose-ics"];
const SWITCHES: [&str; 1] = ["no-trim"];

/// Inserts `--key value` for every config entry not already given on the command line.
fn inject_config(mut argv: Vec<String>) -> Result<Vec<String>> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        if a == "--config" {
            path = argv.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let Some(pos) = argv.iter().position(|a| SUBCOMMANDS.contains(&a.as_str())) else {
        return Ok(argv);
    };
    let given = |key: &str| {
        argv.iter()
            .any(|a| a == &format!("--{key}") || a.starts_with(&format!("--{key}=")))
    };
    let mut extra = Vec::new();
    for (key, value) in read_config(&path)? {
        if key == "config" || given(&key) {
            continue;
        }
        if SWITCHES.contains(&key.as_str()) {
            if value.eq_ignore_ascii_case("true") {
                extra.push(format!("--{key}"));
            }
        } else {
            extra.push(format!("--{key}={value}"));
        }
    }
    argv.splice(pos + 1..pos + 1, extra);
    Ok(argv)
}

/// Every argument of the subcommand with its resolved value, defaults included.
fn resolved(name: &str, m: &ArgMatches) -> Vec<(String, String)> {
    let mut out = vec![("command".to_string(), name.to_string())];
    let cmd = Cli::command();
    let args: Vec<String> = cmd
        .find_subcommand(name)
        .map(|c| c.get_arguments().map(|a| a.get_id().as_str().to_string()).collect())
        .unwrap_or_default();
    let mut ids: Vec<String> = m.ids().map(|id| id.as_str().to_string()).filter(|id| args.contains(id)).collect();
    ids.sort();
    for id in ids {
        if let Ok(Some(raw)) = m.try_get_raw(&id) {
            let vals: Vec<String> = raw.map(|v| v.to_string_lossy().into_owned()).collect();
            out.push((id.replace('_', "-"), vals.join(",")));
        }
    }
    out.push(("version".into(), env!("CARGO_PKG_VERSION").into()));
    out
}

fn estimator_cfg(est: &EstimatorArgs, ds: &cspv::model::ClusteredDataset, scheme: WeightScheme) -> Result<SopConfig> {
    let kernel = est.bandwidth.resolve(&ds.inspection_times())?;
    let grid = TimeGrid::for_dataset(ds, est.grid_size)?;
    Ok(SopConfig::new(scheme, kernel, grid))
}

fn with_bandwidth(mut meta: Vec<(String, String)>, h: f64) -> Vec<(String, String)> {
    meta.push(("resolved-bandwidth".into(), h.to_string()));
    meta
}

fn cmd_simulate(a: &SimulateArgs, meta: Vec<(String, String)>) -> Result<()> {
    let cfg = SimConfig {
        m: a.m,
        seed: a.seed,
        delta: (a.delta1, a.delta2),
        sigma: a.sigma,
        mode: a.scenario,
        models: vec![Model::Gee],
        ..SimConfig::default()
    };
    let sim = gen_dataset(&cfg, &mut replicate_rng(a.seed, 0))?;
    dataset_table(&sim.dataset).with_meta(&meta).write(&a.out)?;
    info!("wrote {} units in {} clusters to {}", sim.dataset.len(), a.m, a.out.display());
    Ok(())
}

fn cmd_sop(a: &SopArgs, meta: Vec<(String, String)>) -> Result<()> {
    let ds = read_dataset(&a.est.input, a.est.states)?;
    let cfg = estimator_cfg(&a.est, &ds, a.weights)?;
    let curves = sop(&ds, &cfg)?;
    let mut meta = with_bandwidth(meta, cfg.kernel.bandwidth);
    meta.push(("clamp-events".into(), curves.clamp_events.to_string()));
    sop_table(&curves).with_meta(&meta).write(&a.out)
}

fn cmd_pseudo(a: &PseudoArgs, meta: Vec<(String, String)>) -> Result<()> {
    let ds = read_dataset(&a.est.input, a.est.states)?;
    let cfg = estimator_cfg(&a.est, &ds, WeightScheme::Unweighted)?;
    let meta = with_bandwidth(meta, cfg.kernel.bandwidth);
    if !a.trajectories.is_empty() {
        let units: Vec<usize> = ds
            .observations()
            .iter()
            .enumerate()
            .filter(|(_, o)| a.trajectories.contains(&o.unit_id))
            .map(|(j, _)| j)
            .collect();
        if units.is_empty() {
            return Err(Error::InvalidConfig("none of the requested unit ids occur in the dataset".into()));
        }
        let values = trajectories(&ds, a.state, &units, &cfg)?;
        return trajectory_table(&ds, a.state, cfg.grid.points(), &units, &values)
            .with_meta(&meta)
            .write(&a.out);
    }
    let tps = choose_timepoints(&ds, a.r, !a.no_trim)?;
    let panel = jackknife_panel(&ds, a.state, &tps, cfg.kernel, &cfg.grid)?;
    pseudo_table(&ds, &panel).with_meta(&meta).write(&a.out)
}

fn cmd_fit(a: &FitArgs, meta: Vec<(String, String)>) -> Result<()> {
    let ds = read_dataset(&a.est.input, a.est.states)?;
    let cfg = AnalysisConfig {
        state: a.state,
        r: a.r,
        trim: !a.no_trim,
        models: a.models.clone(),
        link: a.link,
        corstr: a.corstr,
        bandwidth: a.est.bandwidth,
        grid_size: a.est.grid_size,
    };
    check_request(&ds, &cfg)?;
    let report = analyze(&ds, &cfg)?;
    let mut meta = with_bandwidth(meta, report.bandwidth);
    let tps: Vec<String> = report.timepoints.iter().map(|t| cspv::io::fmt_num(*t)).collect();
    meta.push(("timepoints".into(), tps.join(",")));
    for m in &report.fits {
        meta.push((format!("{}-alpha", m.model), cspv::io::fmt_num(m.fit.alpha)));
        meta.push((format!("{}-converged", m.model), m.fit.converged.to_string()));
    }
    fit_table(&report).with_meta(&meta).write(a.out.join("fit.csv"))?;
    if a.state < ds.num_states() {
        diagnostic_table(&diagnose_ics(&ds, a.state)?)
            .with_meta(&meta)
            .write(a.out.join("ics_diagnostic.csv"))?;
    }
    Ok(())
}

fn cmd_mc(a: &McArgs, meta: Vec<(String, String)>) -> Result<()> {
    let cfg = SimConfig {
        m: a.m,
        reps: a.reps,
        seed: a.seed,
        mode: a.scenario,
        delta: (a.delta1, SimConfig::default().delta.1),
        delta1_grid: a.delta1_grid.clone(),
        models: a.models.clone(),
        corstrs: a.corstr.clone(),
        link: a.link,
        state: a.state,
        r: a.r,
        reference_m: a.reference_m,
        ..SimConfig::default()
    };
    cfg.validate()?;
    let summary = run_mc_study(&cfg)?;
    let mut meta = meta;
    let tps: Vec<String> = summary.timepoints.iter().map(|t| cspv::io::fmt_num(*t)).collect();
    meta.push(("timepoints".into(), tps.join(",")));
    let out = Path::new(&a.out);
    estimation_table(&summary).with_meta(&meta).write(out.join("estimation.csv"))?;
    size_power_table(&summary).with_meta(&meta).write(out.join("size_power.csv"))?;
    failure_table(&summary.failure_messages).with_meta(&meta).write(out.join("failures.csv"))?;
    if let Some(t) = a.conditional_t {
        let q = 0.6744897501960817 * cfg.z2_var.sqrt();
        let cond = run_conditional_study(&cfg, t, &[-q, 0.0, q], 1000)?;
        let mut meta = meta.clone();
        meta.push(("target-bandwidth".into(), cond.bandwidth.to_string()));
        conditional_table(&cond).with_meta(&meta).write(out.join("conditional.csv"))?;
    }
    Ok(())
}

fn cmd_diagnose(a: &DiagnoseArgs, meta: Vec<(String, String)>) -> Result<()> {
    let ds = read_dataset(&a.input, a.states)?;
    diagnostic_table(&diagnose_ics(&ds, a.state)?).with_meta(&meta).write(&a.out)
}

fn run(matches: &ArgMatches, cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    }
    let (name, sub) = matches.subcommand().expect("a subcommand is required");
    let meta = resolved(name, sub);
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, meta),
        Command::Sop(a) => cmd_sop(a, meta),
        Command::Pseudo(a) => cmd_pseudo(a, meta),
        Command::Fit(a) => cmd_fit(a, meta),
        Command::Mc(a) => cmd_mc(a, meta),
        Command::DiagnoseIcs(a) => cmd_diagnose(a, meta),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv = match inject_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    match run(&matches, cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().lines().next().unwrap_or_default());
            for line in e.to_string().lines().skip(1) {
                eprintln!("  {line}");
            }
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
