//! Constant-force pushing: runs the task and prints the contact force over
//! time against the target band.
//!
//! cargo run --release --example force_regulation [seed]

use coral::control_loop::{force_series, run_task, LoopConfig};
use coral::mppi::MppiParams;
use coral::strategist::HeuristicStrategist;
use coral::tasks::{Scene, TaskId, FORCE_BAND};

fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).map_or(Ok(1), |s| s.parse())?;
    let scene = Scene::builtin(TaskId::PushConstForce);
    let (report, log) = run_task(
        &scene,
        &mut HeuristicStrategist::new(),
        None,
        &LoopConfig::default(),
        &MppiParams::default(),
        seed,
    )?;
    let last = report.attempts.saturating_sub(1);
    for (_, t, f) in force_series(&log, scene.primary_label()).into_iter().filter(|s| s.0 == last) {
        let bar = "#".repeat((f * 4.0).round().min(60.0) as usize);
        let tag = if (FORCE_BAND.0..=FORCE_BAND.1).contains(&f) { " " } else { "!" };
        println!("{t:5.1}s {f:5.2} N {tag} {bar}");
    }
    println!(
        "success {} after {} attempts; band [{}, {}] N",
        report.success, report.attempts, FORCE_BAND.0, FORCE_BAND.1
    );
    Ok(())
}
