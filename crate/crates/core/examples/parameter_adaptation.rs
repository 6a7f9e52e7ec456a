//! Board push-and-grasp starting from a badly biased mass and friction
//! belief. Identification from logged pushes corrects the belief after a
//! failed attempt. Prints believed against true parameters per cycle.
//!
//! cargo run --release --example parameter_adaptation [seed]

use coral::control_loop::{run_task, LoopConfig};
use coral::harness::params_csv;
use coral::mppi::MppiParams;
use coral::strategist::HeuristicStrategist;
use coral::tasks::{Scene, TaskId};

fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).map_or(Ok(1), |s| s.parse())?;
    let scene = Scene::builtin(TaskId::PushPickBoard);
    let cfg = LoopConfig {
        n_retry: 1,
        ..LoopConfig::default()
    };
    let (report, log) = run_task(&scene, &mut HeuristicStrategist::new(), None, &cfg, &MppiParams::default(), seed)?;
    for a in log.attempts() {
        println!(
            "attempt {}: {} in {} steps",
            a.attempt,
            a.failure.as_ref().map_or("success".to_string(), |f| f.to_string()),
            a.steps
        );
    }
    for r in log.refinements() {
        println!("refinement {} ({:?}): {}", r.cycle, r.kind, r.explanation);
    }
    print!("{}", params_csv(&report));
    Ok(())
}
