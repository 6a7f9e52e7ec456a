//! Flipping a box against a ledge with and without the contact strategy's
//! attractor. Prints per-seed steps and finger path length.
//!
//! cargo run --release --example flip_wall_ablation [seeds]

use coral::control_loop::{run_task, LoopConfig};
use coral::harness::median;
use coral::mppi::MppiParams;
use coral::strategist::HeuristicStrategist;
use coral::tasks::{Scene, TaskId};

fn main() -> anyhow::Result<()> {
    let seeds: u64 = std::env::args().nth(1).map_or(Ok(5), |s| s.parse())?;
    let scene = Scene::builtin(TaskId::FlipWall);
    let guided = LoopConfig {
        n_retry: 1,
        max_refinements: 0,
        ..LoopConfig::default()
    };
    let unguided = LoopConfig {
        use_contact_strategy: false,
        ..guided.clone()
    };
    for (name, cfg) in [("guided", &guided), ("unguided", &unguided)] {
        let (mut steps, mut path) = (Vec::new(), Vec::new());
        for seed in 1..=seeds {
            let (r, _) = run_task(&scene, &mut HeuristicStrategist::new(), None, cfg, &MppiParams::default(), seed)?;
            println!("{name:>8} seed {seed}: success {:5} steps {:5} path {:.3} m", r.success, r.steps, r.path_length);
            steps.push(r.steps as f64);
            path.push(r.path_length);
        }
        println!(
            "{name:>8} median: {:.0} steps, {:.3} m",
            median(&mut steps),
            median(&mut path)
        );
    }
    Ok(())
}
