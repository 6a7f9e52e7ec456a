//! Two-stage cost spec: approach the box, then push it to a goal once the
//! finger touches it. Prints the active stage and the per-term costs.
//!
//! cargo run --release --example staged_push

use coral::cost::{load_spec, spec_digest, CompiledSpec, StageTracker};
use coral::mppi::{MppiParams, Planner, RolloutContext};
use coral::sim::{step_in_place, PhysicsModel, SimConfig, SimState};
use coral::world_model::{Fixtures, ObjectBelief, Pose2, WorldBelief};

fn main() -> anyhow::Result<()> {
    let world = WorldBelief::new(
        [ObjectBelief::new("box", Pose2::new(0.0, 0.05, 0.0), 0.5, 0.4, [0.05, 0.05])],
        Fixtures::default(),
    );
    let loaded = load_spec(include_str!("../assets/specs/push_then_settle.json"), Some(&world))?;
    for w in &loaded.warnings {
        println!("warning: {w}");
    }
    println!("spec {}", &spec_digest(&loaded.spec)[..12]);
    let model = PhysicsModel::from_belief(&world);
    let spec = CompiledSpec::compile(&loaded.spec, &model).map_err(anyhow::Error::msg)?;
    let sim = SimConfig::default();
    let mut state = SimState::new(&world, [-0.2, 0.1], &sim);
    let mut planner = Planner::new(MppiParams::default())?;
    let mut tracker = StageTracker::new();

    for k in 0..150 {
        let status = tracker.update(&spec, &state);
        if status.transition_fired {
            println!("plan {k}: entered stage {}", status.active_stage);
        }
        let ctx = RolloutContext {
            world: &state,
            model: &model,
            spec: &spec,
            stage: tracker,
            sim: &sim,
        };
        let out = planner.plan_step(&ctx)?;
        for _ in 0..10 {
            step_in_place(&mut state, out.control, &model, &sim);
        }
        if k % 25 == 0 {
            let terms: Vec<String> = spec
                .breakdown(tracker.stage, &state, out.control)
                .iter()
                .map(|t| format!("{}={:.2e}", t.kind, t.value))
                .collect();
            println!("plan {k:>3}: stage {} {}", tracker.stage, terms.join(" "));
        }
    }
    let b = state.body("box").expect("box exists");
    println!("box at ({:.3}, {:.3}), goal (0.250, 0.050)", b.pose.x, b.pose.z);
    Ok(())
}
