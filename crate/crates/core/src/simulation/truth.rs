//! Truth oracles for the simulation model.
//!
//! Given the location `loc` of `log T1`, let `v = D(t)` be the lognormal CDF.
//! Then `P(T1 > t) = 1 - v` and, because `D(T2) = U1 + U2 (1 - U1)` with
//! independent uniforms, `P(T2 <= t) = v + (1 - v) ln(1 - v)`.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::GaussHermite;
use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{draw_cluster, replicate_rng, ClusterSizeMode, SimConfig, SimulatedData};
use crate::error::{Error, Result};
use crate::gee::linalg::spd_solve;
use crate::smoothing::{bandwidth_rot, normal_pdf};

/// Quadrature nodes used to integrate out the cluster effect.
pub const HERMITE_NODES: usize = 40;

fn hermite() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(NonZeroUsize::new(HERMITE_NODES).unwrap()))
}

/// `E f(X)` for `X ~ N(0, var)`.
fn normal_expectation(var: f64, f: impl Fn(f64) -> f64) -> f64 {
    if var <= 0.0 {
        return f(0.0);
    }
    let s = (2.0 * var).sqrt();
    hermite().integrate(|x| f(s * x)) / std::f64::consts::PI.sqrt()
}

/// Occupation probabilities `(pi1, pi2, pi3)` at `t` for a unit whose `log T1`
/// has location `loc` and scale `sigma`.
pub fn true_sop_conditional(t: f64, loc: f64, sigma: f64) -> [f64; 3] {
    if !(t > 0.0) {
        return [1.0, 0.0, 0.0];
    }
    let v = Normal::standard().cdf((t.ln() - loc) / sigma);
    let stay = 1.0 - v;
    let pi3 = if stay > 0.0 { v + stay * stay.ln() } else { 1.0 };
    [stay, 1.0 - stay - pi3, pi3]
}

/// Occupation probabilities at `t` for covariate profile `z = (z1, z2)`,
/// averaged over the cluster effect.
pub fn true_sop_lognormal(t: f64, z: [f64; 2], cfg: &SimConfig) -> [f64; 3] {
    let loc = cfg.delta.0 * z[0] + cfg.delta.1 * z[1];
    let pi1 = normal_expectation(cfg.nu_var, |nu| true_sop_conditional(t, loc + nu, cfg.sigma)[0]);
    let pi3 = normal_expectation(cfg.nu_var, |nu| true_sop_conditional(t, loc + nu, cfg.sigma)[2]);
    [pi1, 1.0 - pi1 - pi3, pi3]
}

/// Occupation probabilities at `t` averaged over the cluster effect, `Z2` and a
/// cluster-level `Z1 ~ Bernoulli(0.5)`; every cluster counts once.
pub fn true_sop_marginal(t: f64, cfg: &SimConfig) -> [f64; 3] {
    let var = cfg.nu_var + cfg.delta.1 * cfg.delta.1 * cfg.z2_var;
    let mut out = [0.0; 3];
    for z1 in [0.0, 1.0] {
        let loc = cfg.delta.0 * z1;
        let pi1 = normal_expectation(var, |x| true_sop_conditional(t, loc + x, cfg.sigma)[0]);
        let pi3 = normal_expectation(var, |x| true_sop_conditional(t, loc + x, cfg.sigma)[2]);
        out[0] += 0.5 * pi1;
        out[2] += 0.5 * pi3;
    }
    out[1] = 1.0 - out[0] - out[2];
    out
}

/// Cluster-weighted kernel average of the true indicators `I(X(t) = state)`
/// around `Z2 = z`, with weights `1 / n_i` and a Gaussian kernel.
/// Without a bandwidth the rule of thumb on the sample's `Z2` is used.
pub fn conditional_target(sample: &SimulatedData, state: usize, t: f64, z: f64, bandwidth: Option<f64>) -> Result<f64> {
    let ds = &sample.dataset;
    let z2: Vec<f64> = ds.observations().iter().map(|o| o.covariates[1]).collect();
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::NonPositiveBandwidth(h)),
        None => bandwidth_rot(&z2)?,
    };
    let sizes = ds.cluster_sizes();
    let (mut num, mut den) = (0.0, 0.0);
    for ((latent, &zj), &c) in sample.latent.iter().zip(&z2).zip(ds.cluster_index()) {
        let k = normal_pdf((zj - z) / h) / sizes[c] as f64;
        den += k;
        if latent.state_at(t) == state {
            num += k;
        }
    }
    if !(den > 0.0) {
        return Err(Error::EmptyKernelMass(z));
    }
    Ok(num / den)
}

/// Stream index reserved for the reference sample of [`reference_beta`].
pub const REFERENCE_STREAM: u64 = u64::MAX;

/// Population regression coefficients `(t1..tr, z1, z2)` of the true indicators
/// `I(X(t_k) = state)` on `(Z1, Z2)` with time-specific intercepts, fitted by
/// weighted least squares on `cfg.reference_m` fresh clusters.
///
/// Units are weighted `1 / n_i`, or `1 / (2 n_iG)` in the group scenario, so
/// every cluster (and every group within it) counts equally.
pub fn reference_beta(cfg: &SimConfig, state: usize, timepoints: &[f64]) -> Result<DVector<f64>> {
    cfg.validate()?;
    let r = timepoints.len();
    let q = r + 2;
    let mut xtx = DMatrix::<f64>::zeros(q, q);
    let mut xty = DVector::<f64>::zeros(q);
    let mut rng = replicate_rng(cfg.seed, REFERENCE_STREAM);
    for _ in 0..cfg.reference_m {
        let cluster = draw_cluster(cfg, &mut rng);
        let n = cluster.units.len() as f64;
        let group_counts = [0, 1].map(|g| cluster.units.iter().filter(|u| u.group == Some(g)).count() as f64);
        for u in &cluster.units {
            let w = match (cfg.mode, u.group) {
                (ClusterSizeMode::Icg, Some(g)) => 1.0 / (2.0 * group_counts[g as usize]),
                _ => 1.0 / n,
            };
            let z = [u.z1, u.z2];
            let mut hits = 0.0;
            for (k, &t) in timepoints.iter().enumerate() {
                let y = if u.latent.state_at(t) == state { 1.0 } else { 0.0 };
                hits += y;
                xtx[(k, k)] += w;
                xty[k] += w * y;
                for c in 0..2 {
                    xtx[(k, r + c)] += w * z[c];
                }
            }
            for a in 0..2 {
                xty[r + a] += w * z[a] * hits;
                for b in 0..2 {
                    xtx[(r + a, r + b)] += r as f64 * w * z[a] * z[b];
                }
            }
        }
    }
    for k in 0..r {
        for c in 0..2 {
            xtx[(r + c, k)] = xtx[(k, r + c)];
        }
    }
    let mut names: Vec<String> = (1..=r).map(|k| format!("t{k}")).collect();
    names.extend(["z1".to_string(), "z2".to_string()]);
    spd_solve(&xtx, &xty, &names)
}

/// Latent sample used by [`conditional_target`]; drawn from its own stream so
/// it never overlaps the replicates.
pub fn target_sample(cfg: &SimConfig, m: usize) -> Result<SimulatedData> {
    let c = SimConfig { m, ..cfg.clone() };
    super::gen_dataset(&c, &mut replicate_rng(cfg.seed, REFERENCE_STREAM - 1))
}
