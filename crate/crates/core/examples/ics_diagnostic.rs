//! Informative cluster size check: survival in the healthy state estimated
//! separately for small, medium and large clusters.
//!
//! Usage: `cargo run --release --example ics_diagnostic -- [ics|nonics]`

use cspv::analysis::diagnose_ics;
use cspv::simulation::{gen_dataset, replicate_rng, ClusterSizeMode, SimConfig};

fn main() -> cspv::Result<()> {
    let mode: ClusterSizeMode = std::env::args().nth(1).unwrap_or_else(|| "ics".into()).parse()?;
    let cfg = SimConfig {
        m: 300,
        mode,
        ..SimConfig::default()
    };
    let ds = gen_dataset(&cfg, &mut replicate_rng(5, 0))?.dataset;
    let strata = diagnose_ics(&ds, 1)?;
    let labels: Vec<String> = strata
        .iter()
        .map(|s| format!("sizes {}-{} ({} units)", s.min_size, s.max_size, s.units))
        .collect();
    let w = labels.iter().map(String::len).max().unwrap_or(0);
    println!("{:>5}  {}", "t", labels.iter().map(|l| format!("{l:>w$}")).collect::<Vec<_>>().join("  "));
    for t in [1.0, 2.0, 3.0, 4.0, 5.0] {
        let cells: Vec<String> = strata.iter().map(|s| format!("{:>w$.3}", s.curve.eval(t))).collect();
        println!("{t:>5.1}  {}", cells.join("  "));
    }
    Ok(())
}
