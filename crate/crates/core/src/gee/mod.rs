//! Weighted estimating equations for pseudo-value panels with a cluster-level
//! sandwich covariance.
//!
//! Every unit contributes `r` responses whose working covariance is
//! `sigma^2 R(alpha)`. Units are weighted by the chosen [`WeightScheme`], and the
//! robust covariance sums weighted scores within each cluster, so intra-cluster
//! dependence is accounted for only there.

pub mod corr;
pub mod linalg;
pub mod link;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

pub use corr::{estimate_corr, CorrStructure, WorkingCorrelation};
pub use link::Link;

use crate::error::{Error, Result};
use crate::model::{unit_weights, ClusteredDataset, WeightScheme};
use crate::pseudo::PseudoPanel;

/// The three weighting variants of the estimating equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    /// Every unit weighted equally.
    Gee,
    /// Units weighted by inverse cluster size.
    Cwgee,
    /// Units weighted by inverse within-cluster group size.
    Dwgee,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::Gee, Model::Cwgee, Model::Dwgee];

    pub fn scheme(self) -> WeightScheme {
        match self {
            Model::Gee => WeightScheme::Unweighted,
            Model::Cwgee => WeightScheme::InverseClusterSize,
            Model::Dwgee => WeightScheme::InverseGroupSize,
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Gee => "GEE",
            Model::Cwgee => "CWGEE",
            Model::Dwgee => "DWGEE",
        })
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gee" => Ok(Model::Gee),
            "cwgee" => Ok(Model::Cwgee),
            "dwgee" => Ok(Model::Dwgee),
            _ => Err(Error::InvalidConfig(format!("unknown model `{s}` (expected gee, cwgee or dwgee)"))),
        }
    }
}

/// Stacked design: `r` rows per unit (time-minor), time indicators first.
#[derive(Debug, Clone)]
pub struct DesignExpansion {
    pub r: usize,
    pub names: Vec<String>,
    pub rows: DMatrix<f64>,
    pub response: DVector<f64>,
}

impl DesignExpansion {
    pub fn num_units(&self) -> usize {
        self.rows.nrows() / self.r
    }

    pub fn num_params(&self) -> usize {
        self.rows.ncols()
    }

    /// Builds the design from per-unit covariates and an `n x r` response matrix.
    pub fn from_parts(covariates: &[Vec<f64>], covariate_names: &[String], responses: &DMatrix<f64>) -> Self {
        let n = responses.nrows();
        let r = responses.ncols();
        let p = covariate_names.len();
        let mut names: Vec<String> = (1..=r).map(|k| format!("t{k}")).collect();
        names.extend(covariate_names.iter().cloned());
        let mut rows = DMatrix::zeros(n * r, r + p);
        let mut response = DVector::zeros(n * r);
        for j in 0..n {
            for k in 0..r {
                let row = j * r + k;
                rows[(row, k)] = 1.0;
                for (c, z) in covariates[j].iter().enumerate() {
                    rows[(row, r + c)] = *z;
                }
                response[row] = responses[(j, k)];
            }
        }
        Self {
            r,
            names,
            rows,
            response,
        }
    }
}

pub fn expand_design(panel: &PseudoPanel, ds: &ClusteredDataset) -> Result<DesignExpansion> {
    if panel.num_units() != ds.len() {
        return Err(Error::MisalignedPanel(format!(
            "panel has {} rows but the dataset has {} units",
            panel.num_units(),
            ds.len()
        )));
    }
    if panel.values.ncols() != panel.timepoints.len() {
        return Err(Error::MisalignedPanel(format!(
            "panel has {} columns for {} time points",
            panel.values.ncols(),
            panel.timepoints.len()
        )));
    }
    let covariates: Vec<Vec<f64>> = ds.observations().iter().map(|o| o.covariates.clone()).collect();
    Ok(DesignExpansion::from_parts(&covariates, ds.covariate_names(), &panel.values))
}

/// Thresholds pseudo-values at 0.5 (strictly greater maps to 1).
pub fn binary_transform(panel: &PseudoPanel) -> PseudoPanel {
    PseudoPanel {
        state: panel.state,
        timepoints: panel.timepoints.clone(),
        values: panel.values.map(|y| if y > 0.5 { 1.0 } else { 0.0 }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeeOptions {
    pub link: Link,
    pub corr: CorrStructure,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GeeOptions {
    fn default() -> Self {
        Self {
            link: Link::Identity,
            corr: CorrStructure::Independent,
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeeFit {
    pub names: Vec<String>,
    pub beta: DVector<f64>,
    /// Sandwich covariance of `beta`.
    pub cov: DMatrix<f64>,
    pub sigma2: f64,
    pub alpha: f64,
    pub link: Link,
    pub corr: CorrStructure,
    pub r: usize,
    pub iterations: usize,
    pub converged: bool,
    pub num_units: usize,
    pub num_clusters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldTest {
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
}

impl GeeFit {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn se(&self, index: usize) -> f64 {
        self.cov[(index, index)].max(0.0).sqrt()
    }

    pub fn wald(&self, index: usize) -> Result<WaldTest> {
        wald_test(self, index)
    }

    /// Fitted mean at time index `k` (0-based) for the covariate profile `z`.
    pub fn predict(&self, k: usize, z: &[f64]) -> f64 {
        let eta = self.beta[k] + z.iter().enumerate().map(|(c, v)| self.beta[self.r + c] * v).sum::<f64>();
        self.link.inverse(eta)
    }
}

/// Two-sided Wald test of `beta[index] = 0` against the standard normal.
pub fn wald_test(fit: &GeeFit, index: usize) -> Result<WaldTest> {
    let var = fit.cov[(index, index)];
    if !(var > 0.0 && var.is_finite()) {
        return Err(Error::ZeroVariance(index));
    }
    let estimate = fit.beta[index];
    let se = var.sqrt();
    let z = estimate / se;
    let p_value = 2.0 * Normal::standard().cdf(-z.abs());
    Ok(WaldTest {
        estimate,
        se,
        z,
        p_value,
    })
}

/// Fits the estimating equations to a pseudo-value panel with the weights of `scheme`.
pub fn fit_gee(panel: &PseudoPanel, ds: &ClusteredDataset, scheme: WeightScheme, opts: &GeeOptions) -> Result<GeeFit> {
    let design = expand_design(panel, ds)?;
    let weights = unit_weights(ds, scheme)?;
    fit_design(&design, ds.cluster_index(), &weights, opts)
}

/// Per-cluster score vector and information matrix.
struct ClusterTerms {
    score: DVector<f64>,
    info: DMatrix<f64>,
}

struct Evaluation {
    mean: DVector<f64>,
    slope: DVector<f64>,
}

fn evaluate(design: &DesignExpansion, beta: &DVector<f64>, link: Link) -> Evaluation {
    let eta = &design.rows * beta;
    Evaluation {
        mean: eta.map(|e| link.inverse(e)),
        slope: eta.map(|e| link.inverse_derivative(e)),
    }
}

fn cluster_members(clusters: &[usize]) -> Vec<Vec<usize>> {
    let m = clusters.iter().max().map_or(0, |c| c + 1);
    let mut members = vec![Vec::new(); m];
    for (j, &c) in clusters.iter().enumerate() {
        members[c].push(j);
    }
    members
}

fn cluster_terms(
    design: &DesignExpansion,
    members: &[Vec<usize>],
    weights: &[f64],
    eval: &Evaluation,
    rinv: &DMatrix<f64>,
) -> Vec<ClusterTerms> {
    let r = design.r;
    let q = design.num_params();
    members
        .par_iter()
        .map(|units| {
            let mut score = DVector::zeros(q);
            let mut info = DMatrix::zeros(q, q);
            for &j in units {
                let x = design.rows.rows(j * r, r);
                let d = DMatrix::from_fn(r, q, |k, c| eval.slope[j * r + k] * x[(k, c)]);
                let res = DVector::from_fn(r, |k, _| design.response[j * r + k] - eval.mean[j * r + k]);
                let dt_rinv = d.transpose() * rinv;
                info += weights[j] * &dt_rinv * &d;
                score += weights[j] * &dt_rinv * res;
            }
            ClusterTerms { score, info }
        })
        .collect()
}

/// Weighted moment estimates of `sigma^2` and the correlation parameter at the current mean.
fn nuisance(design: &DesignExpansion, weights: &[f64], eval: &Evaluation, kind: CorrStructure) -> (f64, f64) {
    let r = design.r;
    let residuals: Vec<f64> = design.response.iter().zip(eval.mean.iter()).map(|(y, m)| y - m).collect();
    let (mut ss, mut wsum) = (0.0, 0.0);
    for (block, &w) in residuals.chunks(r).zip(weights) {
        ss += w * block.iter().map(|e| e * e).sum::<f64>();
        wsum += w * r as f64;
    }
    let sigma2 = ss / wsum;
    if kind == CorrStructure::Independent || !(sigma2 > 0.0) {
        return (sigma2, 0.0);
    }
    let sigma = sigma2.sqrt();
    let pearson: Vec<f64> = residuals.iter().map(|e| e / sigma).collect();
    (sigma2, estimate_corr(kind, &pearson, weights, r))
}

fn initial_beta(design: &DesignExpansion, weights: &[f64], link: Link) -> DVector<f64> {
    let r = design.r;
    let mut beta = DVector::zeros(design.num_params());
    let wsum: f64 = weights.iter().sum();
    for k in 0..r {
        let mean = weights
            .iter()
            .enumerate()
            .map(|(j, w)| w * design.response[j * r + k])
            .sum::<f64>()
            / wsum;
        beta[k] = match link {
            Link::Identity => mean,
            Link::Logit => link.link(mean.clamp(0.01, 0.99)),
        };
    }
    beta
}

/// Fisher scoring on a prepared design. `clusters[j]` is the 0-based cluster of unit `j`.
pub fn fit_design(design: &DesignExpansion, clusters: &[usize], weights: &[f64], opts: &GeeOptions) -> Result<GeeFit> {
    let n = design.num_units();
    if n == 0 {
        return Err(Error::EmptyInput("design"));
    }
    for (what, len) in [("cluster labels", clusters.len()), ("unit weights", weights.len())] {
        if len != n {
            return Err(Error::LengthMismatch {
                what,
                expected: n,
                found: len,
            });
        }
    }
    if opts.link == Link::Logit {
        if let Some(&y) = design.response.iter().find(|y| !(0.0..=1.0).contains(*y)) {
            return Err(Error::LogitOutOfRange(y));
        }
    }
    let r = design.r;
    let q = design.num_params();
    let names = &design.names;
    let members = cluster_members(clusters);

    let mut beta = initial_beta(design, weights, opts.link);
    let mut eval = evaluate(design, &beta, opts.link);
    let (mut sigma2, mut alpha) = nuisance(design, weights, &eval, opts.corr);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let rinv = linalg::spd_inverse(&WorkingCorrelation::new(opts.corr, alpha).matrix(r), names)?;
        let terms = cluster_terms(design, &members, weights, &eval, &rinv);
        let mut info = DMatrix::zeros(q, q);
        let mut score = DVector::zeros(q);
        for t in &terms {
            info += &t.info;
            score += &t.score;
        }
        let step = linalg::spd_solve(&info, &score, names)?;
        beta += &step;
        eval = evaluate(design, &beta, opts.link);
        (sigma2, alpha) = nuisance(design, weights, &eval, opts.corr);
        if step.amax() < opts.tol {
            converged = true;
            break;
        }
        if !step.iter().all(|s| s.is_finite()) {
            break;
        }
    }
    let cov = sandwich(design, &members, weights, &eval, opts.corr, alpha)?;
    Ok(GeeFit {
        names: names.clone(),
        beta,
        cov,
        sigma2,
        alpha,
        link: opts.link,
        corr: opts.corr,
        r,
        iterations,
        converged,
        num_units: n,
        num_clusters: members.len(),
    })
}

/// `B^-1 M B^-1` with `M` summing outer products of per-cluster weighted scores.
fn sandwich(
    design: &DesignExpansion,
    members: &[Vec<usize>],
    weights: &[f64],
    eval: &Evaluation,
    corr: CorrStructure,
    alpha: f64,
) -> Result<DMatrix<f64>> {
    let q = design.num_params();
    let rinv = linalg::spd_inverse(&WorkingCorrelation::new(corr, alpha).matrix(design.r), &design.names)?;
    let terms = cluster_terms(design, members, weights, eval, &rinv);
    let mut bread = DMatrix::zeros(q, q);
    let mut meat = DMatrix::zeros(q, q);
    for t in &terms {
        bread += &t.info;
        meat += &t.score * t.score.transpose();
    }
    let binv = linalg::spd_inverse(&bread, &design.names)?;
    let cov = &binv * meat * &binv;
    Ok((&cov + cov.transpose()) * 0.5)
}

/// Weighted score `sum w U` at `beta` for the given correlation parameter.
pub fn score_at(
    design: &DesignExpansion,
    clusters: &[usize],
    weights: &[f64],
    beta: &DVector<f64>,
    link: Link,
    corr: WorkingCorrelation,
) -> Result<DVector<f64>> {
    let members = cluster_members(clusters);
    let eval = evaluate(design, beta, link);
    let rinv = linalg::spd_inverse(&corr.matrix(design.r), &design.names)?;
    let mut score = DVector::zeros(design.num_params());
    for t in cluster_terms(design, &members, weights, &eval, &rinv) {
        score += t.score;
    }
    Ok(score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Observation, StateSpace};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Synthetic {
        covariates: Vec<Vec<f64>>,
        clusters: Vec<usize>,
        y: DMatrix<f64>,
    }

    fn synthetic(seed: u64, m: usize, r: usize, p: usize, binary: bool) -> Synthetic {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut covariates = Vec::new();
        let mut clusters = Vec::new();
        let mut rows = Vec::new();
        for i in 0..m {
            let size = rng.random_range(1..5);
            let b: f64 = rng.random_range(-0.3..0.3);
            for _ in 0..size {
                let z: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
                for k in 0..r {
                    let mean = 0.2 + 0.1 * k as f64 + 0.3 * z.first().copied().unwrap_or(0.0) + b;
                    let y = if binary {
                        if rng.random::<f64>() < mean.clamp(0.05, 0.95) { 1.0 } else { 0.0 }
                    } else {
                        mean + rng.random_range(-0.5..0.5)
                    };
                    rows.push(y);
                }
                covariates.push(z);
                clusters.push(i);
            }
        }
        let n = covariates.len();
        Synthetic {
            covariates,
            clusters,
            y: DMatrix::from_row_slice(n, r, &rows),
        }
    }

    fn cov_names(p: usize) -> Vec<String> {
        (1..=p).map(|c| format!("z{c}")).collect()
    }

    fn design_of(s: &Synthetic) -> DesignExpansion {
        let p = s.covariates[0].len();
        DesignExpansion::from_parts(&s.covariates, &cov_names(p), &s.y)
    }

    fn opts(link: Link, corr: CorrStructure) -> GeeOptions {
        GeeOptions {
            link,
            corr,
            ..GeeOptions::default()
        }
    }

    #[test]
    fn design_layout() {
        let cov = vec![vec![1.0, 0.5], vec![-1.0, 2.0]];
        let y = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        let d = DesignExpansion::from_parts(&cov, &cov_names(2), &y);
        assert_eq!(d.names, vec!["t1", "t2", "z1", "z2"]);
        assert_eq!(d.rows.nrows(), 4);
        assert_eq!(d.rows.row(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 1.0, 0.5]);
        assert_eq!(d.rows.row(2).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, -1.0, 2.0]);
        assert_eq!(d.response.as_slice(), &[0.1, 0.2, 0.3, 0.4]);
        let d = DesignExpansion::from_parts(&vec![vec![0.0, 0.0]; 3], &cov_names(2), &DMatrix::zeros(3, 3));
        for row in d.rows.row_iter() {
            assert_eq!(row.columns(0, 3).iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(row.len(), 5);
        }
    }

    #[test]
    fn misaligned_panel_is_rejected() {
        let obs = (0..3)
            .map(|j| Observation {
                cluster_id: "a".into(),
                unit_id: j.to_string(),
                inspection_time: 1.0,
                state: 1,
                covariates: vec![],
                group: None,
            })
            .collect();
        let ds = ClusteredDataset::new(StateSpace::new(2).unwrap(), obs, vec![]);
        let panel = PseudoPanel {
            state: 1,
            timepoints: vec![1.0],
            values: DMatrix::zeros(2, 1),
        };
        assert!(matches!(expand_design(&panel, &ds), Err(Error::MisalignedPanel(_))));
    }

    #[test]
    fn independence_identity_is_weighted_least_squares() {
        let s = synthetic(1, 40, 3, 2, false);
        let d = design_of(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for w in [vec![1.0; s.clusters.len()], (0..s.clusters.len()).map(|_| rng.random_range(0.2..2.0)).collect()] {
            let fit = fit_design(&d, &s.clusters, &w, &GeeOptions::default()).unwrap();
            assert!(fit.converged && fit.iterations <= 2);
            // normal equations with every row carrying its unit's weight
            let wrow = DVector::from_fn(d.rows.nrows(), |i, _| w[i / d.r]);
            let xtw = DMatrix::from_fn(d.num_params(), d.rows.nrows(), |c, i| d.rows[(i, c)] * wrow[i]);
            let oracle = (&xtw * &d.rows).try_inverse().unwrap() * (&xtw * &d.response);
            assert!((&fit.beta - oracle).amax() < 1e-10);
        }
    }

    #[test]
    fn exact_fit_is_a_fixed_point() {
        let s = synthetic(2, 30, 4, 2, false);
        let beta0 = DVector::from_vec(vec![0.1, 0.3, 0.4, 0.6, -0.2, 0.15]);
        for link in [Link::Identity, Link::Logit] {
            let mut d = design_of(&s);
            d.response = (&d.rows * &beta0).map(|e| link.inverse(e));
            for corr in [CorrStructure::Independent, CorrStructure::Exchangeable, CorrStructure::Ar1] {
                let fit = fit_design(&d, &s.clusters, &vec![1.0; s.clusters.len()], &opts(link, corr)).unwrap();
                assert!((&fit.beta - &beta0).amax() < 1e-8, "{link} {corr}");
            }
        }
    }

    #[test]
    fn duplicating_clusters_keeps_estimates_and_halves_covariance() {
        let s = synthetic(3, 25, 3, 1, false);
        let d = design_of(&s);
        let m = s.clusters.iter().max().unwrap() + 1;
        let mut cov2 = s.covariates.clone();
        cov2.extend(s.covariates.iter().cloned());
        let mut cl2 = s.clusters.clone();
        cl2.extend(s.clusters.iter().map(|c| c + m));
        let y2 = DMatrix::from_fn(2 * s.y.nrows(), s.y.ncols(), |i, k| s.y[(i % s.y.nrows(), k)]);
        let d2 = DesignExpansion::from_parts(&cov2, &cov_names(1), &y2);
        let sizes = |cl: &[usize]| {
            let mut c = std::collections::HashMap::new();
            cl.iter().for_each(|x| *c.entry(*x).or_insert(0.0) += 1.0);
            cl.iter().map(|x| 1.0 / c[x]).collect::<Vec<f64>>()
        };
        for corr in [CorrStructure::Independent, CorrStructure::Ar1] {
            for (w1, w2) in [
                (vec![1.0; s.clusters.len()], vec![1.0; cl2.len()]),
                (sizes(&s.clusters), sizes(&cl2)),
            ] {
                let o = GeeOptions {
                    tol: 1e-13,
                    ..opts(Link::Identity, corr)
                };
                let a = fit_design(&d, &s.clusters, &w1, &o).unwrap();
                let b = fit_design(&d2, &cl2, &w2, &o).unwrap();
                assert!((&a.beta - &b.beta).amax() < 1e-9);
                assert!((&a.cov - &b.cov * 2.0).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn singleton_clusters_give_hc0() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 60;
        let cov: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
        let y = DMatrix::from_fn(n, 1, |j, _| 1.0 + 0.5 * cov[j][0] + rng.random_range(-1.0..1.0) * (1.0 + cov[j][0].abs()));
        let d = DesignExpansion::from_parts(&cov, &cov_names(1), &y);
        let fit = fit_design(&d, &(0..n).collect::<Vec<_>>(), &vec![1.0; n], &GeeOptions::default()).unwrap();
        let x = &d.rows;
        let xtx_inv = (x.transpose() * x).try_inverse().unwrap();
        let e = &d.response - x * &xtx_inv * x.transpose() * &d.response;
        let mut meat = DMatrix::zeros(2, 2);
        for i in 0..n {
            let xi = x.row(i).transpose();
            meat += &xi * xi.transpose() * (e[i] * e[i]);
        }
        let hc0 = &xtx_inv * meat * &xtx_inv;
        assert!((&fit.cov - hc0).amax() < 1e-12);
    }

    #[test]
    fn intercept_only_matches_hand_formula() {
        let y = [0.2, 0.9, 0.4, 0.7, 0.1];
        let clusters = [0, 0, 1, 2, 2];
        let w = [0.5, 0.5, 1.0, 0.5, 0.5];
        let d = DesignExpansion::from_parts(&vec![vec![]; 5], &[], &DMatrix::from_column_slice(5, 1, &y));
        let fit = fit_design(&d, &clusters, &w, &GeeOptions::default()).unwrap();
        let wsum: f64 = w.iter().sum();
        let mean = y.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / wsum;
        let mut sums = [0.0; 3];
        for j in 0..5 {
            sums[clusters[j]] += w[j] * (y[j] - mean);
        }
        let var = sums.iter().map(|s| s * s).sum::<f64>() / (wsum * wsum);
        assert!((fit.beta[0] - mean).abs() < 1e-14);
        assert!((fit.cov[(0, 0)] - var).abs() < 1e-14);
    }

    #[test]
    fn covariance_is_invariant_to_global_weight_scale() {
        let s = synthetic(5, 30, 3, 2, false);
        let d = design_of(&s);
        let w: Vec<f64> = (0..s.clusters.len()).map(|j| 1.0 + (j % 3) as f64).collect();
        let w7: Vec<f64> = w.iter().map(|x| x * 7.5).collect();
        for corr in [CorrStructure::Independent, CorrStructure::Exchangeable, CorrStructure::Ar1] {
            let a = fit_design(&d, &s.clusters, &w, &opts(Link::Identity, corr)).unwrap();
            let b = fit_design(&d, &s.clusters, &w7, &opts(Link::Identity, corr)).unwrap();
            assert!((&a.cov - &b.cov).amax() < 1e-10);
        }
    }

    #[test]
    fn converged_score_vanishes() {
        let s = synthetic(6, 50, 4, 2, true);
        let d = design_of(&s);
        let w: Vec<f64> = (0..s.clusters.len()).map(|j| 1.0 / (1 + j % 4) as f64).collect();
        for link in [Link::Identity, Link::Logit] {
            for corr in [CorrStructure::Independent, CorrStructure::Exchangeable, CorrStructure::Ar1] {
                let fit = fit_design(&d, &s.clusters, &w, &opts(link, corr)).unwrap();
                assert!(fit.converged);
                let u = score_at(&d, &s.clusters, &w, &fit.beta, link, WorkingCorrelation::new(corr, fit.alpha)).unwrap();
                assert!(u.amax() < 1e-6, "{link} {corr}: {}", u.amax());
                if link == Link::Logit {
                    let p = (&d.rows * &fit.beta).map(|e| link.inverse(e));
                    assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
                }
                assert_eq!(fit.cov.clone(), fit.cov.transpose());
                assert!(fit.cov.diagonal().iter().all(|v| *v >= 0.0));
            }
        }
    }

    #[test]
    fn logit_rejects_raw_pseudo_values() {
        let s = synthetic(7, 10, 2, 1, false);
        let d = design_of(&s);
        let r = fit_design(&d, &s.clusters, &vec![1.0; s.clusters.len()], &opts(Link::Logit, CorrStructure::Independent));
        assert!(matches!(r, Err(Error::LogitOutOfRange(_))));
    }

    #[test]
    fn collinear_covariates_are_named() {
        let s = synthetic(8, 10, 2, 1, false);
        let cov: Vec<Vec<f64>> = s.covariates.iter().map(|z| vec![z[0], 2.0 * z[0] + 1.0]).collect();
        let d = DesignExpansion::from_parts(&cov, &cov_names(2), &s.y);
        match fit_design(&d, &s.clusters, &vec![1.0; cov.len()], &GeeOptions::default()) {
            Err(Error::SingularMatrix { columns }) => assert_eq!(columns, vec!["z2"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wald_z_ignores_affine_changes_of_other_covariates() {
        let s = synthetic(9, 40, 3, 2, false);
        let d = design_of(&s);
        let cov: Vec<Vec<f64>> = s.covariates.iter().map(|z| vec![z[0], 3.0 * z[1] - 4.0]).collect();
        let d2 = DesignExpansion::from_parts(&cov, &cov_names(2), &s.y);
        let w = vec![1.0; cov.len()];
        for corr in [CorrStructure::Independent, CorrStructure::Ar1] {
            let a = fit_design(&d, &s.clusters, &w, &opts(Link::Identity, corr)).unwrap();
            let b = fit_design(&d2, &s.clusters, &w, &opts(Link::Identity, corr)).unwrap();
            assert!((a.wald(3).unwrap().z - b.wald(3).unwrap().z).abs() < 1e-8);
        }
    }

    /// `P(|Z| > |z|)` by composite Simpson integration of the density on `[0, |z|]`.
    fn two_sided_p_by_quadrature(z: f64) -> f64 {
        let a = z.abs();
        let steps = 20_000;
        let h = a / steps as f64;
        let f = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = f(0.0) + f(a);
        for i in 1..steps {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        1.0 - 2.0 * s * h / 3.0
    }

    #[test]
    fn wald_examples() {
        let mut fit = fit_design(
            &DesignExpansion::from_parts(&vec![vec![]; 4], &[], &DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 6.0])),
            &[0, 1, 2, 3],
            &[1.0; 4],
            &GeeOptions::default(),
        )
        .unwrap();
        fit.beta[0] = 0.0;
        let t = fit.wald(0).unwrap();
        assert_eq!((t.z, t.p_value), (0.0, 1.0));
        fit.beta[0] = 1.959_963_984_540_054 * fit.se(0);
        assert!((fit.wald(0).unwrap().p_value - 0.05).abs() < 1e-9);
        fit.cov[(0, 0)] = 0.0;
        assert!(matches!(fit.wald(0), Err(Error::ZeroVariance(0))));
    }

    #[test]
    fn wald_p_matches_independent_normal_cdf() {
        let s = synthetic(10, 60, 4, 2, false);
        let d = design_of(&s);
        let fit = fit_design(&d, &s.clusters, &vec![1.0; s.clusters.len()], &opts(Link::Identity, CorrStructure::Ar1)).unwrap();
        for i in 0..fit.names.len() {
            let t = fit.wald(i).unwrap();
            if t.z.abs() < 6.0 {
                assert!((t.p_value - two_sided_p_by_quadrature(t.z)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn binary_threshold_is_strict() {
        let panel = PseudoPanel {
            state: 2,
            timepoints: vec![1.0, 2.0],
            values: DMatrix::from_row_slice(2, 2, &[0.7, 0.5, -0.3, 1.4]),
        };
        assert_eq!(binary_transform(&panel).values.as_slice(), &[1.0, 0.0, 0.0, 1.0]);
        let zero = PseudoPanel {
            values: DMatrix::zeros(2, 2),
            ..panel
        };
        assert!(binary_transform(&zero).values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_predictions_are_linear_in_the_profile() {
        let s = synthetic(11, 30, 3, 1, false);
        let fit = fit_design(&design_of(&s), &s.clusters, &vec![1.0; s.clusters.len()], &GeeOptions::default()).unwrap();
        for k in 0..3 {
            assert!((fit.predict(k, &[0.5]) - (fit.beta[k] + 0.5 * fit.beta[3])).abs() < 1e-15);
        }
    }

    #[test]
    fn model_names() {
        assert_eq!("CWGEE".parse::<Model>().unwrap(), Model::Cwgee);
        assert_eq!(Model::Dwgee.to_string(), "DWGEE");
        assert_eq!(Model::Gee.scheme(), WeightScheme::Unweighted);
        assert!("ols".parse::<Model>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn weight_scale_invariance(seed in 0u64..1000, c in 0.01f64..100.0) {
            let s = synthetic(seed, 12, 2, 1, false);
            let d = design_of(&s);
            let w = vec![1.0; s.clusters.len()];
            let wc = vec![c; s.clusters.len()];
            let a = fit_design(&d, &s.clusters, &w, &GeeOptions::default()).unwrap();
            let b = fit_design(&d, &s.clusters, &wc, &GeeOptions::default()).unwrap();
            prop_assert!((&a.beta - &b.beta).amax() < 1e-9);
            prop_assert!((&a.cov - &b.cov).amax() < 1e-10);
        }
    }
}
