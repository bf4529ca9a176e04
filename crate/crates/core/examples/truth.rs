//! True occupation probabilities of the simulation model and the reference
//! regression slope that the Monte Carlo bias is measured against.
//!
//! Usage: `cargo run --release --example truth -- [reference clusters]`

use cspv::simulation::{reference_beta, true_sop_lognormal, true_sop_marginal, ClusterSizeMode, SimConfig};

fn main() -> cspv::Result<()> {
    let reference_m = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(20_000);
    let cfg = SimConfig::default();
    println!("{:>5} {:>20} {:>20} {:>20}", "t", "marginal", "z=(0,0)", "z=(1,0)");
    for i in 1..=8 {
        let t = i as f64;
        let f = |p: [f64; 3]| format!("{:.3} {:.3} {:.3}", p[0], p[1], p[2]);
        println!(
            "{t:>5.1} {:>20} {:>20} {:>20}",
            f(true_sop_marginal(t, &cfg)),
            f(true_sop_lognormal(t, [0.0, 0.0], &cfg)),
            f(true_sop_lognormal(t, [1.0, 0.0], &cfg))
        );
    }
    let tps = cfg.timepoints();
    println!("\nreference slopes for the healthy state ({reference_m} clusters):");
    for mode in [ClusterSizeMode::NonIcs, ClusterSizeMode::Ics] {
        let c = SimConfig {
            mode,
            reference_m,
            ..cfg.clone()
        };
        let beta = reference_beta(&c, 1, &tps)?;
        let r = tps.len();
        println!("  {mode:>6}: z1 {:.5}, z2 {:.5}", beta[r], beta[r + 1]);
    }
    Ok(())
}
