//! Sensitivity of CWGEE estimation to the number of pseudo-value time points.
//!
//! Usage: `cargo run --release --example r_sensitivity -- [m] [reps]`

use cspv::gee::{CorrStructure, Model};
use cspv::simulation::{run_mc_study, SimConfig};

fn main() -> cspv::Result<()> {
    let mut args = std::env::args().skip(1);
    let m = args.next().and_then(|a| a.parse().ok()).unwrap_or(100);
    let reps = args.next().and_then(|a| a.parse().ok()).unwrap_or(100);
    println!("ICS, m = {m}, {reps} replicates, d1 = 0.25");
    println!("{:>3} {:>8} {:>8} {:>8} {:>8} {:>8}", "r", "truth", "bias", "mcsd", "ase", "cover");
    for r in [5, 7, 10, 15, 20] {
        let cfg = SimConfig {
            m,
            reps,
            r,
            delta1_grid: vec![],
            models: vec![Model::Cwgee],
            ..SimConfig::default()
        };
        let s = run_mc_study(&cfg)?;
        let e = s.estimation_row(Model::Cwgee, CorrStructure::Independent).unwrap();
        println!(
            "{r:>3} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.3}",
            e.truth, e.bias, e.mcsd, e.ase, e.coverage
        );
    }
    Ok(())
}
