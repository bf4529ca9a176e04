//! CSV tables with a `# key=value` metadata header, the dataset schema, and
//! `key=value` configuration files.
//!
//! Dataset files keep full floating-point precision so that a simulated
//! dataset re-read from disk is identical to the one in memory; result tables
//! use six significant digits.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::analysis::{AnalysisReport, SizeStratum};
use crate::error::{Error, Result};
use crate::model::{ClusteredDataset, Observation, StateSpace};
use crate::pseudo::PseudoPanel;
use crate::simulation::{ConditionalSummary, McSummary};
use crate::sop::SopCurves;

/// Formats `x` with six significant digits.
pub fn fmt_num(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NA".into() } else if x > 0.0 { "Inf".into() } else { "-Inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..=9).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

/// In-memory CSV table. Cells are kept as text so that writing and re-reading
/// reproduces the table exactly.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            meta: Vec::new(),
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_meta(mut self, meta: &[(String, String)]) -> Self {
        self.meta.extend(meta.iter().cloned());
        self
    }

    pub fn push_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.meta.push((key.into(), value.to_string()));
    }

    pub fn push_row(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        for (k, v) in &self.meta {
            writeln!(out, "# {k}={v}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        self.write_to(fs::File::create(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut meta = Vec::new();
        let mut body_start = 0;
        for line in text.lines() {
            let Some(rest) = line.strip_prefix("# ") else { break };
            if let Some((k, v)) = rest.split_once('=') {
                meta.push((k.to_string(), v.to_string()));
            }
            body_start += line.len() + 1;
        }
        let body = text.get(body_start..).unwrap_or("");
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
        let header = rdr.headers()?.iter().map(str::to_string).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
        Ok(Self { meta, header, rows })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

/// Header of the dataset schema for the given covariates.
pub fn dataset_header(covariates: &[String], groups: bool) -> Vec<String> {
    let mut h: Vec<String> = ["cluster_id", "unit_id", "inspection_time", "state"].map(String::from).to_vec();
    h.extend(covariates.iter().cloned());
    if groups {
        h.push("group".into());
    }
    h
}

pub fn dataset_table(ds: &ClusteredDataset) -> Table {
    let groups = ds.has_groups();
    let mut t = Table::new(dataset_header(ds.covariate_names(), groups));
    for o in ds.observations() {
        let mut row = vec![o.cluster_id.clone(), o.unit_id.clone(), o.inspection_time.to_string(), o.state.to_string()];
        row.extend(o.covariates.iter().map(f64::to_string));
        if groups {
            row.push(o.group.map_or(String::new(), |g| g.to_string()));
        }
        t.push_row(row);
    }
    t
}

pub fn write_dataset(ds: &ClusteredDataset, path: impl AsRef<Path>, meta: &[(String, String)]) -> Result<()> {
    dataset_table(ds).with_meta(meta).write(path)
}

/// Parses a dataset table; `num_states` defaults to the largest observed state.
pub fn dataset_from_table(table: &Table, num_states: Option<usize>, source: &str) -> Result<ClusteredDataset> {
    let fixed = ["cluster_id", "unit_id", "inspection_time", "state"];
    if table.header.len() < 4 || table.header[..4] != fixed {
        return Err(parse_err(
            source,
            1,
            format!("header must start with {}", fixed.join(",")),
        ));
    }
    let has_group = table.header.last().is_some_and(|h| h == "group");
    let cov_end = table.header.len() - usize::from(has_group);
    let covariates: Vec<String> = table.header[4..cov_end].to_vec();
    let first_line = table.meta.len() + 2;
    let mut obs = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        let line = first_line + i;
        let num = |k: usize| -> Result<f64> {
            row[k]
                .trim()
                .parse::<f64>()
                .map_err(|_| parse_err(source, line, format!("column `{}`: `{}` is not a number", table.header[k], row[k])))
        };
        let state = row[3]
            .trim()
            .parse::<usize>()
            .map_err(|_| parse_err(source, line, format!("state `{}` is not a positive integer", row[3])))?;
        let group = if has_group {
            let g = row[cov_end].trim();
            if g.is_empty() {
                None
            } else {
                Some(g.parse::<i64>().map_err(|_| parse_err(source, line, format!("group `{g}` is not an integer")))?)
            }
        } else {
            None
        };
        obs.push(Observation {
            cluster_id: row[0].clone(),
            unit_id: row[1].clone(),
            inspection_time: num(2)?,
            state,
            covariates: (4..cov_end).map(num).collect::<Result<_>>()?,
            group,
        });
    }
    let q = match num_states {
        Some(q) => q,
        None => obs.iter().map(|o| o.state).max().unwrap_or(2).max(2),
    };
    ClusteredDataset::checked(StateSpace::new(q)?, obs, covariates)
}

pub fn read_dataset(path: impl AsRef<Path>, num_states: Option<usize>) -> Result<ClusteredDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let table = Table::parse(&text).map_err(|e| match e {
        Error::Csv(c) => parse_err(
            &path.display().to_string(),
            c.position().map_or(0, |p| p.line() as usize),
            c.to_string(),
        ),
        other => other,
    })?;
    dataset_from_table(&table, num_states, &path.display().to_string())
}

/// Reads a `key=value` configuration file. Blank lines and lines starting with
/// `#` are ignored; keys are the long command-line flag names without dashes.
pub fn read_config(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    parse_config(&fs::read_to_string(path)?, &path.display().to_string())
}

pub fn parse_config(text: &str, source: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(parse_err(source, i + 1, "expected key=value"));
        };
        let key = k.trim().trim_start_matches("--").to_string();
        if key.is_empty() {
            return Err(parse_err(source, i + 1, "empty key"));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

/// `t,state,pi` in long format.
pub fn sop_table(curves: &SopCurves) -> Table {
    let mut t = Table::new(["t", "state", "pi"]);
    for (k, &time) in curves.grid.points().iter().enumerate() {
        for (s, pi) in curves.pi.iter().enumerate() {
            t.push_row(vec![fmt_num(time), (s + 1).to_string(), fmt_num(pi[k])]);
        }
    }
    t
}

pub fn pseudo_table(ds: &ClusteredDataset, panel: &PseudoPanel) -> Table {
    let mut t = Table::new(["cluster_id", "unit_id", "timepoint", "state", "pseudo_value"]);
    for (j, o) in ds.observations().iter().enumerate() {
        for (k, &tp) in panel.timepoints.iter().enumerate() {
            t.push_row(vec![
                o.cluster_id.clone(),
                o.unit_id.clone(),
                fmt_num(tp),
                panel.state.to_string(),
                fmt_num(panel.values[(j, k)]),
            ]);
        }
    }
    t
}

/// Per-unit pseudo-value trajectories over the estimation grid.
pub fn trajectory_table(ds: &ClusteredDataset, state: usize, grid: &[f64], units: &[usize], values: &[Vec<f64>]) -> Table {
    let mut t = Table::new(["cluster_id", "unit_id", "t", "state", "pseudo_value"]);
    for (&u, traj) in units.iter().zip(values) {
        let o = &ds.observations()[u];
        for (&time, v) in grid.iter().zip(traj) {
            t.push_row(vec![o.cluster_id.clone(), o.unit_id.clone(), fmt_num(time), state.to_string(), fmt_num(*v)]);
        }
    }
    t
}

/// Coefficient table: one block of rows per model.
pub fn fit_table(report: &AnalysisReport) -> Table {
    let mut t = Table::new(["model", "coefficient", "estimate", "se", "z", "p"]);
    for m in &report.fits {
        for (name, w) in m.fit.names.iter().zip(&m.tests) {
            t.push_row(vec![
                m.model.to_string(),
                name.clone(),
                fmt_num(w.estimate),
                fmt_num(w.se),
                fmt_num(w.z),
                fmt_num(w.p_value),
            ]);
        }
    }
    t
}

/// Step-function knots of the stratified survival curves.
pub fn diagnostic_table(strata: &[SizeStratum]) -> Table {
    let mut t = Table::new(["tercile", "min_size", "max_size", "t", "survival"]);
    for s in strata {
        for (&time, &surv) in s.curve.times.iter().zip(&s.curve.survival) {
            t.push_row(vec![
                s.tercile.to_string(),
                s.min_size.to_string(),
                s.max_size.to_string(),
                fmt_num(time),
                fmt_num(surv),
            ]);
        }
    }
    t
}

/// Estimation table; bias, MCSD, ASE and MSE are multiplied by 100.
pub fn estimation_table(s: &McSummary) -> Table {
    let mut t = Table::new([
        "m", "state", "corstr", "model", "truth", "bias_x100", "mcsd_x100", "ase_x100", "mse_x100", "coverage", "replicates",
        "failures",
    ]);
    for r in &s.estimation {
        t.push_row(vec![
            s.m.to_string(),
            s.state.to_string(),
            r.corstr.to_string(),
            r.model.to_string(),
            fmt_num(r.truth),
            fmt_num(100.0 * r.bias),
            fmt_num(100.0 * r.mcsd),
            fmt_num(100.0 * r.ase),
            fmt_num(100.0 * r.mse),
            fmt_num(r.coverage),
            r.replicates.to_string(),
            r.failures.to_string(),
        ]);
    }
    t
}

/// Rejection rates with 95% intervals; rows with `delta1 = 0` are sizes.
pub fn size_power_table(s: &McSummary) -> Table {
    let mut t = Table::new([
        "m", "state", "corstr", "model", "delta1", "kind", "rate", "ci_low", "ci_high", "replicates", "failures",
    ]);
    for r in &s.size_power {
        t.push_row(vec![
            s.m.to_string(),
            s.state.to_string(),
            r.corstr.to_string(),
            r.model.to_string(),
            fmt_num(r.delta1),
            if r.delta1 == 0.0 { "size" } else { "power" }.to_string(),
            fmt_num(r.rate),
            fmt_num(r.ci_low),
            fmt_num(r.ci_high),
            r.replicates.to_string(),
            r.failures.to_string(),
        ]);
    }
    t
}

/// Conditional-estimation table; bias and MCSD are multiplied by 100.
pub fn conditional_table(s: &ConditionalSummary) -> Table {
    let mut t = Table::new(["m", "state", "t", "model", "z", "target", "bias_x100", "mcsd_x100", "ase_x100", "replicates", "failures"]);
    for r in &s.rows {
        t.push_row(vec![
            s.m.to_string(),
            s.state.to_string(),
            fmt_num(s.t),
            r.model.to_string(),
            fmt_num(r.z),
            fmt_num(r.target),
            fmt_num(100.0 * r.bias),
            fmt_num(100.0 * r.mcsd),
            fmt_num(100.0 * r.ase),
            r.replicates.to_string(),
            r.failures.to_string(),
        ]);
    }
    t
}

/// Failure counts of a study, one row per distinct message.
pub fn failure_table(messages: &BTreeMap<String, usize>) -> Table {
    let mut t = Table::new(["replicates", "message"]);
    for (msg, n) in messages {
        t.push_row(vec![n.to_string(), msg.clone()]);
    }
    t
}
