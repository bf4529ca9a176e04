//! Size of the three estimators when the sizes of intra-cluster groups are
//! informative. Only the doubly weighted equations should hold the level.
//!
//! Usage: `cargo run --release --example icg_dwgee -- [m] [reps]`

use cspv::gee::{CorrStructure, Model};
use cspv::simulation::{run_mc_study, ClusterSizeMode, SimConfig};

fn main() -> cspv::Result<()> {
    let mut args = std::env::args().skip(1);
    let m = args.next().and_then(|a| a.parse().ok()).unwrap_or(100);
    let reps = args.next().and_then(|a| a.parse().ok()).unwrap_or(50);
    let cfg = SimConfig {
        m,
        reps,
        mode: ClusterSizeMode::Icg,
        delta: (0.0, 0.8),
        delta1_grid: vec![0.0],
        models: Model::ALL.to_vec(),
        ..SimConfig::default()
    };
    let s = run_mc_study(&cfg)?;
    println!("ICG, m = {m}, {reps} replicates, group label as z1");
    for model in Model::ALL {
        let e = s.estimation_row(model, CorrStructure::Independent).unwrap();
        let r = s.size_power_row(0.0, model, CorrStructure::Independent).unwrap();
        println!(
            "{:>6}: size {:.3} [{:.3}, {:.3}], bias {:+.4}, mcsd {:.4}, ase {:.4}",
            model, r.rate, r.ci_low, r.ci_high, e.bias, e.mcsd, e.ase
        );
    }
    Ok(())
}
