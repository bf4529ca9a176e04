#![allow(dead_code)]

use cspv::gee::{fit_design, DesignExpansion, GeeOptions};
use cspv::isotonic::{pav, Direction};
use cspv::model::{ClusteredDataset, Observation, StateSpace, TimeGrid, WeightScheme};
use cspv::pseudo::{choose_timepoints, leave_one_out, leave_one_out_naive};
use cspv::simulation::{
    gen_dataset, replicate_rng, run_conditional_study, run_mc_study, true_sop_conditional, true_sop_lognormal, ClusterSizeMode,
    SimConfig,
};
use cspv::smoothing::KernelConfig;
use cspv::sop::{sop, SopConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(format!($($arg)+));
        }
    };
}

/// Minimum weighted SSE over all partitions into consecutive blocks with
/// non-decreasing block means.
pub fn brute_force_isotonic(y: &[f64], w: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << (n - 1)) {
        let mut cuts = vec![0];
        cuts.extend((1..n).filter(|i| mask & (1 << (i - 1)) != 0));
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

/// Clustered current-status data with states drifting upward in time.
/// Every `tie_every`-th inspection time is rounded to create ties.
pub fn random_dataset(seed: u64, clusters: usize, q: usize, p: usize, tie_every: usize) -> ClusteredDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut obs = Vec::new();
    for i in 0..clusters {
        let size = rng.random_range(1..6);
        for u in 0..size {
            let j = obs.len();
            let t: f64 = if tie_every > 0 && j % tie_every == 0 {
                rng.random_range(1.0..9.0f64).round()
            } else {
                rng.random_range(0.5..9.5)
            };
            let mut state = 1;
            while state < q && rng.random_bool(t / 10.0) {
                state += 1;
            }
            obs.push(Observation {
                cluster_id: format!("c{i}"),
                unit_id: format!("c{i}u{u}"),
                inspection_time: t,
                state,
                covariates: (0..p).map(|_| rng.random_range(-1.0..1.0)).collect(),
                group: None,
            });
        }
    }
    let names = (1..=p).map(|c| format!("x{c}")).collect();
    ClusteredDataset::new(StateSpace::new(q).unwrap(), obs, names)
}

pub fn sop_config(ds: &ClusteredDataset, scheme: WeightScheme, h: f64, grid: usize) -> SopConfig {
    SopConfig::new(scheme, KernelConfig::fixed(h).unwrap(), TimeGrid::for_dataset(ds, grid).unwrap())
}

pub fn check_pav_brute_force() -> Check {
    let alphabet = [0.0, 0.5, 1.0];
    let weights = [1.0, 2.0, 0.5];
    let mut cases = 0;
    for n in 1..=6usize {
        for code in 0..3usize.pow(n as u32) {
            let mut c = code;
            let mut y = Vec::with_capacity(n);
            let mut w = Vec::with_capacity(n);
            for k in 0..n {
                y.push(alphabet[c % 3]);
                w.push(weights[(c + k) % 3]);
                c /= 3;
            }
            let fit = pav(&y, &w, Direction::Increasing).map_err(|e| e.to_string())?;
            let oracle = brute_force_isotonic(&y, &w);
            let err = fit.fitted.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            ensure!(err <= 1e-12, "y={y:?} w={w:?}: {:?} vs {oracle:?}", fit.fitted);
            cases += 1;
        }
    }
    Ok(format!("{cases} sequences"))
}

pub fn check_stochasticity(datasets: u64) -> Check {
    let mut worst_row = 0.0f64;
    let mut worst_sum = 0.0f64;
    for seed in 0..datasets {
        let q = 2 + (seed % 3) as usize;
        let ds = random_dataset(seed, 15 + (seed % 20) as usize, q, 0, (seed % 4) as usize);
        let scheme = if seed % 2 == 0 { WeightScheme::Unweighted } else { WeightScheme::InverseClusterSize };
        let curves = sop(&ds, &sop_config(&ds, scheme, 0.6 + 0.05 * (seed % 10) as f64, 41)).map_err(|e| e.to_string())?;
        for p in &curves.transitions {
            for i in 0..q {
                let row: f64 = (0..q).map(|j| p[(i, j)]).sum();
                worst_row = worst_row.max((row - 1.0).abs());
                ensure!((0..q).all(|j| p[(i, j)] >= -1e-12), "seed {seed}: negative transition probability");
            }
        }
        for k in 0..curves.grid.len() {
            let s: f64 = curves.pi.iter().map(|row| row[k]).sum();
            worst_sum = worst_sum.max((s - 1.0).abs());
        }
    }
    ensure!(worst_row <= 1e-10 && worst_sum <= 1e-10, "row error {worst_row:e}, sum error {worst_sum:e}");
    Ok(format!("{datasets} datasets, max row error {worst_row:.1e}, max sum error {worst_sum:.1e}"))
}

pub fn check_jackknife_identity() -> Check {
    let mut worst_id = 0.0f64;
    let mut worst_sum = 0.0f64;
    for seed in 0..5 {
        let ds = random_dataset(100 + seed, 14, 3, 0, 4);
        let cfg = sop_config(&ds, WeightScheme::Unweighted, 0.9, 41);
        let tps = choose_timepoints(&ds, 6, true).map_err(|e| e.to_string())?;
        let loo = leave_one_out(&ds, &tps, &cfg).map_err(|e| e.to_string())?;
        let n = ds.len() as f64;
        let panels = loo.panels();
        for p in &panels {
            for k in 0..tps.len() {
                let mean_y = p.values.column(k).mean();
                let mean_loo = loo.deleted.iter().map(|d| d[(p.state - 1, k)]).sum::<f64>() / n;
                let rhs = n * loo.full[(p.state - 1, k)] - (n - 1.0) * mean_loo;
                worst_id = worst_id.max((mean_y - rhs).abs());
            }
        }
        for j in 0..ds.len() {
            for k in 0..tps.len() {
                let total: f64 = panels.iter().map(|p| p.values[(j, k)]).sum();
                worst_sum = worst_sum.max((total - 1.0).abs());
            }
        }
    }
    ensure!(worst_id <= 1e-10, "jackknife identity off by {worst_id:e}");
    ensure!(worst_sum <= 1e-9, "pseudo-values sum to 1 only within {worst_sum:e}");
    Ok(format!("identity {worst_id:.1e}, state sums {worst_sum:.1e}"))
}

pub fn check_downdate_vs_naive() -> Check {
    let mut worst = 0.0f64;
    for (seed, clusters, q, ties, h, pav_init) in [
        (1u64, 10, 3, 0, 0.8, true),
        (2, 10, 3, 3, 0.5, true),
        (3, 9, 4, 2, 1.2, false),
        (4, 10, 2, 5, 0.4, true),
        (5, 8, 3, 1, 2.0, true),
    ] {
        let ds = random_dataset(seed, clusters, q, 0, ties);
        ensure!(ds.len() <= 50, "dataset {seed} has {} units", ds.len());
        let mut cfg = sop_config(&ds, WeightScheme::Unweighted, h, 41);
        cfg.initial_state_pav = pav_init;
        let tps = choose_timepoints(&ds, 5, true).map_err(|e| e.to_string())?;
        let fast = leave_one_out(&ds, &tps, &cfg).map_err(|e| e.to_string())?;
        let slow = leave_one_out_naive(&ds, &tps, &cfg).map_err(|e| e.to_string())?;
        for (a, b) in fast.deleted.iter().zip(&slow.deleted) {
            worst = worst.max((a - b).amax());
        }
    }
    ensure!(worst <= 1e-9, "downdate differs from refit by {worst:e}");
    Ok(format!("max difference {worst:.1e}"))
}

struct Synthetic {
    design: DesignExpansion,
    clusters: Vec<usize>,
}

fn synthetic(seed: u64, m: usize, r: usize) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut covariates = Vec::new();
    let mut clusters = Vec::new();
    let mut y = Vec::new();
    for i in 0..m {
        let b: f64 = rng.random_range(-0.3..0.3);
        for _ in 0..rng.random_range(1..5) {
            let z = vec![rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0)];
            for k in 0..r {
                y.push(0.2 + 0.1 * k as f64 + 0.3 * z[0] + b + rng.random_range(-0.5..0.5));
            }
            covariates.push(z);
            clusters.push(i);
        }
    }
    let n = covariates.len();
    let names = vec!["x1".to_string(), "x2".to_string()];
    Synthetic {
        design: DesignExpansion::from_parts(&covariates, &names, &DMatrix::from_row_slice(n, r, &y)),
        clusters,
    }
}

pub fn check_gee_wls_hc0() -> Check {
    let s = synthetic(3, 40, 3);
    let d = &s.design;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let w: Vec<f64> = (0..s.clusters.len()).map(|_| rng.random_range(0.2..2.0)).collect();
    let fit = fit_design(d, &s.clusters, &w, &GeeOptions::default()).map_err(|e| e.to_string())?;
    let wrow = DVector::from_fn(d.rows.nrows(), |i, _| w[i / d.r]);
    let xtw = DMatrix::from_fn(d.num_params(), d.rows.nrows(), |c, i| d.rows[(i, c)] * wrow[i]);
    let oracle = (&xtw * &d.rows).try_inverse().unwrap() * (&xtw * &d.response);
    let wls_err = (&fit.beta - oracle).amax();
    ensure!(wls_err <= 1e-8, "independence GEE differs from WLS by {wls_err:e}");

    // every unit its own cluster with r = 1: sandwich reduces to HC0
    let n = 80;
    let cov: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
    let y = DMatrix::from_fn(n, 1, |j, _| 1.0 + 0.5 * cov[j][0] + rng.random_range(-1.0..1.0) * (1.0 + cov[j][0].abs()));
    let d = DesignExpansion::from_parts(&cov, &["x1".to_string()], &y);
    let fit = fit_design(&d, &(0..n).collect::<Vec<_>>(), &vec![1.0; n], &GeeOptions::default()).map_err(|e| e.to_string())?;
    let x = &d.rows;
    let bread = (x.transpose() * x).try_inverse().unwrap();
    let e = &d.response - x * &bread * x.transpose() * &d.response;
    let mut meat = DMatrix::zeros(2, 2);
    for i in 0..n {
        let xi = x.row(i).transpose();
        meat += &xi * xi.transpose() * (e[i] * e[i]);
    }
    let hc0_err = (&fit.cov - &bread * meat * &bread).amax();
    ensure!(hc0_err <= 1e-10, "sandwich differs from HC0 by {hc0_err:e}");
    Ok(format!("WLS {wls_err:.1e}, HC0 {hc0_err:.1e}"))
}

/// Closed-form absorbing-state probability `v + (1 - v) ln(1 - v)` against the
/// distribution of `U1 + U2 (1 - U1)`.
pub fn check_uniform_construction() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 200_000;
    let draws: Vec<f64> = (0..n)
        .map(|_| {
            let (u1, u2): (f64, f64) = (rng.random(), rng.random());
            u1 + u2 * (1.0 - u1)
        })
        .collect();
    let mut worst = 0.0f64;
    for i in 1..=9 {
        let v = i as f64 / 10.0;
        let p_hat = draws.iter().filter(|&&d| d <= v).count() as f64 / n as f64;
        let se = (p_hat * (1.0 - p_hat) / n as f64).sqrt();
        let exact = true_sop_conditional(v_to_time(v), 0.0, 1.0)[2];
        let z = (p_hat - exact).abs() / se;
        worst = worst.max(z);
        ensure!(z < 3.0, "v={v}: Monte Carlo {p_hat:.5} vs formula {exact:.5}");
    }
    Ok(format!("max |z| {worst:.2} over v = 0.1..0.9"))
}

/// Time at which a standard lognormal has CDF `v`.
fn v_to_time(v: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(v).exp()
}

/// Simulated occupation of the absorbing state against the closed form, with
/// cluster-level standard errors.
pub fn check_state_three_formula() -> Check {
    let cfg = SimConfig {
        m: 3000,
        delta: (0.0, 0.0),
        mode: ClusterSizeMode::NonIcs,
        ..SimConfig::default()
    };
    let sim = gen_dataset(&cfg, &mut replicate_rng(77, 0)).map_err(|e| e.to_string())?;
    let ds = &sim.dataset;
    let mut worst = 0.0f64;
    for t in [0.6, 1.0, 1.5, 2.5] {
        let exact = true_sop_lognormal(t, [0.0, 0.0], &cfg)[2];
        let mut per_cluster = vec![(0.0, 0.0); ds.num_clusters()];
        for (j, l) in sim.latent.iter().enumerate() {
            let c = &mut per_cluster[ds.cluster_index()[j]];
            c.0 += (l.state_at(t) == 3) as u8 as f64;
            c.1 += 1.0;
        }
        let total: f64 = per_cluster.iter().map(|c| c.1).sum();
        let p_hat = per_cluster.iter().map(|c| c.0).sum::<f64>() / total;
        let mbar = total / per_cluster.len() as f64;
        let var = per_cluster.iter().map(|c| (c.0 - p_hat * c.1).powi(2)).sum::<f64>()
            / (per_cluster.len() as f64 * (per_cluster.len() - 1) as f64 * mbar * mbar);
        let z = (p_hat - exact).abs() / var.sqrt();
        worst = worst.max(z);
        ensure!(z < 4.0, "t={t}: simulated {p_hat:.4} vs closed form {exact:.4}");
    }
    Ok(format!("max |z| {worst:.2}"))
}

pub fn check_thread_invariance() -> Check {
    let cfg = SimConfig {
        m: 12,
        reps: 8,
        r: 4,
        reference_m: 300,
        delta1_grid: vec![0.0, 0.5],
        grid_size: 41,
        ..SimConfig::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| (run_mc_study(&cfg), run_conditional_study(&cfg, 3.0, &[-0.2, 0.0, 0.2], 100)))
    };
    let (a, ca) = run(1);
    let (b, cb) = run(3);
    let (a, b) = (a.map_err(|e| e.to_string())?, b.map_err(|e| e.to_string())?);
    let (ca, cb) = (ca.map_err(|e| e.to_string())?, cb.map_err(|e| e.to_string())?);
    ensure!(a == b, "study summaries differ between 1 and 3 threads");
    ensure!(ca == cb, "conditional summaries differ between 1 and 3 threads");
    Ok("1 vs 3 threads identical".to_string())
}
