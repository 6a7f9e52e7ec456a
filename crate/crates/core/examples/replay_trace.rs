//! Runs a short task through the harness, then replays the trace: the
//! execution world is rebuilt from the logged scene and every logged cost
//! and state is recomputed.
//!
//! cargo run --release --example replay_trace

use coral::control_loop::{EpisodeLog, TraceRecord};
use coral::harness::{cmd_run, replay, RunConfig};
use coral::tasks::TaskId;

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let report = cmd_run(&RunConfig::new(TaskId::FlipWall, 42, dir.path()))?;
    println!("run: success {} in {} steps", report.success, report.steps);

    let mut log = EpisodeLog::from_jsonl(&std::fs::read_to_string(dir.path().join("trace.jsonl"))?)
        .map_err(anyhow::Error::msg)?;
    let clean = replay(&log, 1e-9)?;
    println!(
        "replay: {} steps, max cost error {:.1e}, divergence {:?}",
        clean.steps_checked, clean.max_cost_error, clean.divergence
    );

    if let Some(TraceRecord::Step(s)) = log.records.iter_mut().find(|r| matches!(r, TraceRecord::Step(s) if s.k == 3)) {
        s.cost *= 1.01;
    }
    let tampered = replay(&log, 1e-9)?;
    println!("after editing one cost: divergence {:?}", tampered.divergence);
    Ok(())
}
