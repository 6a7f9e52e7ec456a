//! Free-space reaching with the ESS-adaptive MPPI planner, driven by a
//! cost spec loaded from JSON.
//!
//! cargo run --release --example reach_mppi

use coral::cost::{load_spec, CompiledSpec, StageTracker};
use coral::mppi::{MppiParams, Planner, RolloutContext};
use coral::sim::{step_in_place, PhysicsModel, SimConfig, SimState};
use coral::world_model::{Fixtures, ObjectBelief, Pose2, WorldBelief};

fn main() -> anyhow::Result<()> {
    // one object far away so the finger moves in free space
    let world = WorldBelief::new(
        [ObjectBelief::new("box", Pose2::new(1.5, 0.05, 0.0), 1.0, 0.5, [0.05, 0.05])],
        Fixtures::default(),
    );
    let loaded = load_spec(include_str!("../assets/specs/reach.json"), Some(&world))?;
    let model = PhysicsModel::from_belief(&world);
    let spec = CompiledSpec::compile(&loaded.spec, &model).map_err(anyhow::Error::msg)?;
    let sim = SimConfig::default();
    let mut state = SimState::new(&world, [0.0, 0.3], &sim);
    let mut planner = Planner::new(MppiParams::default())?;
    let target = [0.3, 0.2];

    for k in 0..200 {
        let ctx = RolloutContext {
            world: &state,
            model: &model,
            spec: &spec,
            stage: StageTracker::new(),
            sim: &sim,
        };
        let out = planner.plan_step(&ctx)?;
        for _ in 0..10 {
            step_in_place(&mut state, out.control, &model, &sim);
        }
        if k % 20 == 0 {
            let d = (state.finger.pos[0] - target[0]).hypot(state.finger.pos[1] - target[1]);
            println!(
                "plan {k:>3}: distance {d:.4} m, lambda {:.3e}, ess {:.1}",
                out.lambda, out.ess
            );
        }
    }
    let d = (state.finger.pos[0] - target[0]).hypot(state.finger.pos[1] - target[1]);
    println!("final distance {d:.4} m");
    Ok(())
}
