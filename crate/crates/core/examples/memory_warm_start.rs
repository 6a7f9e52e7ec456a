//! Runs the board task twice against one plan memory. The second run
//! retrieves the stored plan and identified parameters.
//!
//! cargo run --release --example memory_warm_start [seed]

use coral::control_loop::{run_task, LoopConfig};
use coral::memory::MemoryStore;
use coral::mppi::MppiParams;
use coral::strategist::HeuristicStrategist;
use coral::tasks::{Scene, TaskId};

fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).map_or(Ok(2), |s| s.parse())?;
    let scene = Scene::builtin(TaskId::PushPickBoard);
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("memory.jsonl");
    for run in 1..=2 {
        let mut store = MemoryStore::open(&path)?;
        let (r, _) = run_task(
            &scene,
            &mut HeuristicStrategist::new(),
            Some(&mut store),
            &LoopConfig::default(),
            &MppiParams::default(),
            seed,
        )?;
        println!(
            "run {run}: success {} attempts {} steps {} memory hit {:?} stored {:?}",
            r.success, r.attempts, r.steps, r.memory_hit, r.memory_stored
        );
    }
    println!("entries on disk: {}", std::fs::read_to_string(&path)?.lines().count());
    Ok(())
}
