//! Jackknife pseudo-values of the healthy-state probability: the panel at ten
//! time points and the full trajectories of the first two units.
//!
//! Usage: `cargo run --release --example pseudo_values -- [m]`

use cspv::model::{TimeGrid, WeightScheme};
use cspv::pseudo::{choose_timepoints, jackknife_panel, trajectories};
use cspv::simulation::{gen_dataset, replicate_rng, SimConfig};
use cspv::smoothing::BandwidthRule;
use cspv::sop::{sop, SopConfig};

fn main() -> cspv::Result<()> {
    let m = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(40);
    let cfg = SimConfig { m, ..SimConfig::default() };
    let sim = gen_dataset(&cfg, &mut replicate_rng(3, 0))?;
    let ds = &sim.dataset;
    let kernel = BandwidthRule::RuleOfThumb.resolve(&ds.inspection_times())?;
    let grid = TimeGrid::for_dataset(ds, 61)?;

    let tps = choose_timepoints(ds, 10, true)?;
    let panel = jackknife_panel(ds, 1, &tps, kernel, &grid)?;
    let full = sop(ds, &SopConfig::new(WeightScheme::Unweighted, kernel, grid.clone()))?;
    println!("{:>7} {:>8} {:>10} {:>8} {:>8}", "t", "pi1", "mean(Y)", "min", "max");
    for (k, &t) in tps.iter().enumerate() {
        let col = panel.values.column(k);
        println!(
            "{t:>7.3} {:>8.4} {:>10.4} {:>8.3} {:>8.3}",
            full.at(1, t),
            col.mean(),
            col.min(),
            col.max()
        );
    }

    let cfg = SopConfig::new(WeightScheme::Unweighted, kernel, grid.clone());
    let traj = trajectories(ds, 1, &[0, 1], &cfg)?;
    println!();
    for (u, values) in traj.iter().enumerate() {
        let o = &ds.observations()[u];
        println!("unit {} inspected at {:.3} in state {}", o.unit_id, o.inspection_time, o.state);
        let line: Vec<String> = grid.points().iter().zip(values).step_by(10).map(|(t, y)| format!("{t:.2}:{y:.2}")).collect();
        println!("  {}", line.join(" "));
    }
    Ok(())
}
