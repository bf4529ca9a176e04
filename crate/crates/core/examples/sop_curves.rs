//! Marginal state occupation probabilities from one simulated ICS dataset,
//! unweighted and cluster-weighted, next to the true population curves.
//!
//! Usage: `cargo run --release --example sop_curves -- [m] [seed]`

use cspv::model::{TimeGrid, WeightScheme};
use cspv::simulation::{gen_dataset, replicate_rng, true_sop_marginal, ClusterSizeMode, SimConfig};
use cspv::smoothing::BandwidthRule;
use cspv::sop::{sop, SopConfig};

fn main() -> cspv::Result<()> {
    let mut args = std::env::args().skip(1);
    let m = args.next().and_then(|a| a.parse().ok()).unwrap_or(100);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);
    let cfg = SimConfig {
        m,
        mode: ClusterSizeMode::Ics,
        ..SimConfig::default()
    };
    let sim = gen_dataset(&cfg, &mut replicate_rng(seed, 0))?;
    let ds = &sim.dataset;
    let kernel = BandwidthRule::RuleOfThumb.resolve(&ds.inspection_times())?;
    let grid = TimeGrid::for_dataset(ds, TimeGrid::DEFAULT_SIZE)?;
    let plain = sop(ds, &SopConfig::new(WeightScheme::Unweighted, kernel, grid.clone()))?;
    let weighted = sop(ds, &SopConfig::new(WeightScheme::InverseClusterSize, kernel, grid))?;

    println!("{} clusters, {} units, bandwidth {:.3}", ds.num_clusters(), ds.len(), kernel.bandwidth);
    println!("{:>5} {:>22} {:>22} {:>22}", "t", "unweighted", "cluster-weighted", "truth");
    for t in [1.0, 2.0, 3.0, 4.0, 5.0, 6.0] {
        let row = |c: &cspv::sop::SopCurves| {
            format!("{:.3} {:.3} {:.3}", c.at(1, t), c.at(2, t), c.at(3, t))
        };
        let truth = true_sop_marginal(t, &cfg);
        println!(
            "{t:>5.1} {:>22} {:>22} {:>22}",
            row(&plain),
            row(&weighted),
            format!("{:.3} {:.3} {:.3}", truth[0], truth[1], truth[2])
        );
    }
    if weighted.clamp_events > 0 {
        println!("{} product-integral factors were clamped", weighted.clamp_events);
    }
    Ok(())
}
