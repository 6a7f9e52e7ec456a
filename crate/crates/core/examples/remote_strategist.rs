//! Plans a task with a chat-completion endpoint as the strategist. Reads
//! CORAL_LLM_BASE_URL, CORAL_LLM_API_KEY, and CORAL_LLM_MODEL. Without a
//! base URL the prompts are printed instead.
//!
//! cargo run --release --example remote_strategist [task]

use coral::control_loop::{run_task, LoopConfig};
use coral::mppi::MppiParams;
use coral::strategist::{prompts, EndpointConfig, RemoteStrategist, StrategistRequest};
use coral::tasks::{Scene, TaskId};

fn main() -> anyhow::Result<()> {
    let task: TaskId = std::env::args()
        .nth(1)
        .map_or(Ok(TaskId::FlipBox), |s| s.parse())?;
    let scene = Scene::builtin(task);
    let Some(cfg) = EndpointConfig::from_env() else {
        let req = StrategistRequest::formulate(task, &scene.initial_belief()?);
        println!("no endpoint configured; parameter prompt:\n{}", prompts::estimate_params_prompt(&req));
        println!("\ncost prompt:\n{}", prompts::cost_spec_prompt(&req));
        return Ok(());
    };
    let mut remote = RemoteStrategist::new(cfg);
    let (report, _) = run_task(&scene, &mut remote, None, &LoopConfig::default(), &MppiParams::default(), 1)?;
    println!("success {} after {} attempts", report.success, report.attempts);
    for d in &remote.degradations {
        println!("fallback: {d}");
    }
    Ok(())
}
