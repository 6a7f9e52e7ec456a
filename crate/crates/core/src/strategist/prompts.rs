//! Prompt templates for the remote strategist and the helpers that fill them.

use serde_json::json;

use crate::cost::CostSpec;
use crate::world_model::WorldBelief;

use super::{StepSummary, StrategistRequest};

pub const SYSTEM: &str = include_str!("../../assets/prompts/system.txt");
pub const ESTIMATE_PARAMS: &str = include_str!("../../assets/prompts/estimate_params.txt");
pub const COST_SPEC: &str = include_str!("../../assets/prompts/cost_spec.txt");
pub const REGIONS: &str = include_str!("../../assets/prompts/regions.txt");
pub const REFINE_PLAN: &str = include_str!("../../assets/prompts/refine_plan.txt");
pub const REFINE_PARAMS: &str = include_str!("../../assets/prompts/refine_params.txt");

const TERM_VOCABULARY: &str = r#"  - distance_to_target: {"subject": "finger" or label, "target": [x, z], "frame": optional label (target then in that object's frame)}; squared distance
  - contact_indicator: {"label"}; 1 while the finger is not pushing the object
  - control_effort: {}; squared finger displacement
  - orientation_error: {"label", "reference": radians}; absolute angle error
  - attractor: {"label": optional, "point": [x, z]}; squared finger distance to the point
  - overhang_progress: {"label", "desired": metres}; minus the achieved fraction of overhang past the table edge
  - lift_reward: {"label", "reference_height"}; minus the height gained
  - force_band: {"lo", "hi"}; quadratic penalty on finger force (N) outside [lo, hi]
  - lateral_drift: {"label", "reference", "axis": unit [ax, az]}; squared offset along the axis
  - rotation_drift: {"label", "reference"}; squared rotation change
  - step_penalty: {}; constant per step
  - stability: {"label", "rate"}; minus exp(-rate * (speed + 0.5 * angular speed))"#;

const METRIC_VOCABULARY: &str = r#"  - overhang_of {"label"}: metres past the table edge
  - speed_of {"label"}: m/s
  - distance {"a", "b"}: centre distance, either may be "finger"
  - orientation_of {"label"}: radians
  - contact {"label"}: 1 while the finger pushes the object
  - grasped {"label"}: 1 while the finger holds the object"#;

/// Replace each `{KEY}` placeholder.
pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in values {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).unwrap_or_default()
}

/// Objects as `label -> {pose_estimated, mass_kg, friction_coeff, half_extents}`.
pub fn objects_json(belief: &WorldBelief) -> String {
    pretty(&belief.objects_json())
}

/// Objects with unknown parameters marked `"?"`.
pub fn unknown_params_json(belief: &WorldBelief) -> String {
    let map: serde_json::Map<String, serde_json::Value> = belief
        .objects
        .iter()
        .map(|(label, o)| {
            (
                label.clone(),
                json!({
                    "pose_estimated": [o.pose.x, o.pose.z, o.pose.rotation],
                    "mass_kg": "?",
                    "friction_coeff": "?",
                }),
            )
        })
        .collect();
    pretty(&serde_json::Value::Object(map))
}

/// Current parameters as a `[{label, mass, friction}]` array.
pub fn params_json(belief: &WorldBelief) -> String {
    let arr: Vec<_> = belief
        .objects
        .iter()
        .map(|(label, o)| json!({"label": label, "mass": o.mass, "friction": o.friction}))
        .collect();
    pretty(&serde_json::Value::Array(arr))
}

pub fn history(tail: &[StepSummary]) -> String {
    tail.iter()
        .map(|s| {
            json!({
                "t": s.time,
                "objects": s.poses,
                "finger": s.finger,
                "action": s.action,
                "cost": s.cost,
                "stage": s.stage,
                "contact_force": s.contact_forces,
            })
            .to_string()
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn spec_json(spec: &CostSpec) -> String {
    serde_json::to_string_pretty(spec).unwrap_or_default()
}

pub fn estimate_params_prompt(req: &StrategistRequest) -> String {
    fill(
        ESTIMATE_PARAMS,
        &[("TASK", &req.task_text), ("OBJECTS_JSON", &unknown_params_json(&req.belief))],
    )
}

pub fn cost_spec_prompt(req: &StrategistRequest) -> String {
    fill(
        COST_SPEC,
        &[
            ("TASK", &req.task_text),
            ("OBJECTS_JSON", &objects_json(&req.belief)),
            ("TERM_VOCABULARY", TERM_VOCABULARY),
            ("METRIC_VOCABULARY", METRIC_VOCABULARY),
        ],
    )
}

pub fn regions_prompt(req: &StrategistRequest) -> String {
    fill(
        REGIONS,
        &[("TASK", &req.task_text), ("OBJECTS_JSON", &objects_json(&req.belief))],
    )
}

pub fn refine_plan_prompt(req: &StrategistRequest) -> String {
    let spec = req.failing_spec.as_ref().map(spec_json).unwrap_or_default();
    fill(
        REFINE_PLAN,
        &[
            ("TASK", &req.task_text),
            ("FAILURE", req.failure.as_deref().unwrap_or("unknown")),
            ("HISTORY", &history(&req.tail)),
            ("CURRENT_SPEC", &spec),
        ],
    )
}

pub fn refine_params_prompt(req: &StrategistRequest) -> String {
    fill(
        REFINE_PARAMS,
        &[("PARAMS_JSON", &params_json(&req.belief)), ("HISTORY", &history(&req.tail))],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{Scene, TaskId};

    #[test]
    fn placeholders_are_filled() {
        let scene = Scene::builtin(TaskId::PushPickBoard);
        let mut req = StrategistRequest::formulate(TaskId::PushPickBoard, &scene.world);
        req.failing_spec = Some(CostSpec::single(vec![]));
        for p in [
            estimate_params_prompt(&req),
            cost_spec_prompt(&req),
            regions_prompt(&req),
            refine_plan_prompt(&req),
            refine_params_prompt(&req),
        ] {
            assert!(!p.contains("{TASK}") && !p.contains("_JSON}") && !p.contains("{HISTORY}"), "{p}");
        }
        assert!(estimate_params_prompt(&req).contains("\"?\""));
    }
}
