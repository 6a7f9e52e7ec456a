//! The reasoning layer that turns a task and a belief into a cost
//! specification and contact regions, and revises them after failures.
//!
//! Two implementations share one interface: a deterministic heuristic
//! (task templates, least-squares identification, a fixed refinement
//! schedule) and a client for an OpenAI-compatible chat endpoint that falls
//! back to the heuristic whenever the remote answer is unusable.

mod heuristic;
mod identify;
pub mod prompts;
mod remote;
pub mod templates;

pub use heuristic::{refine_plan, HeuristicStrategist};
pub use identify::{identify_params, IdSample, Identification, MIN_PUSH_SAMPLES};
pub use remote::{extract_json, parse_params, EndpointConfig, RemoteStrategist, ENV_API_KEY, ENV_BASE_URL, ENV_MODEL};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact_strategy::{regions_from_document, RegionDocument};
use crate::cost::{validate, CostSpec};
use crate::tasks::TaskId;
use crate::world_model::{ParamUpdate, WorldBelief, FRICTION_CLAMP, MASS_CLAMP};

/// Number of trailing steps included in refinement requests.
pub const HISTORY_STEPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Formulate,
    RefinePlan,
    RefineParams,
}

/// One logged control step as shown to the strategist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub time: f64,
    /// Object poses `[x, z, rotation]`.
    pub poses: BTreeMap<String, [f64; 3]>,
    pub finger: [f64; 2],
    pub action: [f64; 2],
    pub cost: f64,
    pub stage: usize,
    /// Finger force magnitude on each object (N).
    pub contact_forces: BTreeMap<String, f64>,
    /// Weighted contribution of each term of the active stage.
    #[serde(default)]
    pub terms: Vec<f64>,
}

/// How a plan was revised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RefinementKind {
    Params,
    Threshold { stage: usize },
    Weight { stage: usize, term: usize },
    Remote,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategistRequest {
    pub phase: Phase,
    pub task: TaskId,
    pub task_text: String,
    pub belief: WorldBelief,
    /// The object the task is about.
    pub label: String,
    #[serde(default)]
    pub goal: Option<[f64; 2]>,
    /// Grasp handle in the grasped object's frame, when the task has one.
    #[serde(default)]
    pub handle: Option<[f64; 2]>,
    pub finger_radius: f64,
    /// Last few steps of the failed attempt.
    #[serde(default)]
    pub tail: Vec<StepSummary>,
    /// Pushing samples from the failed attempts, for identification.
    #[serde(default)]
    pub samples: Vec<IdSample>,
    #[serde(default)]
    pub failing_spec: Option<CostSpec>,
    #[serde(default)]
    pub failure: Option<String>,
    /// Furthest stage any failed attempt reached.
    #[serde(default)]
    pub stage_reached: usize,
    /// Plan refinements already applied in this run, oldest first.
    #[serde(default)]
    pub previous: Vec<RefinementKind>,
}

impl StrategistRequest {
    pub fn formulate(task: TaskId, belief: &WorldBelief) -> Self {
        Self {
            phase: Phase::Formulate,
            task,
            task_text: task.instruction().to_string(),
            belief: belief.clone(),
            label: belief.labels().next().unwrap_or_default().to_string(),
            goal: None,
            handle: None,
            finger_radius: crate::sim::SimConfig::default().finger_radius,
            tail: Vec::new(),
            samples: Vec::new(),
            failing_spec: None,
            failure: None,
            stage_reached: 0,
            previous: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StrategistResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<CostSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regions: Option<RegionDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<ParamUpdate>>,
    pub explanation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<RefinementKind>,
    /// Set when a remote strategist fell back to the heuristic.
    #[serde(default)]
    pub degraded: bool,
}

impl StrategistResponse {
    pub fn is_empty(&self) -> bool {
        self.spec.is_none() && self.regions.is_none() && self.params.is_none()
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StrategistError {
    #[error("unsupported task: {0}")]
    UnsupportedTask(String),
    #[error("invalid strategist response: {0}")]
    Invalid(String),
}

/// Check a response against the cost, region, and parameter validators.
pub fn validate_response(resp: &StrategistResponse, belief: &WorldBelief) -> Result<(), StrategistError> {
    let mut problems = Vec::new();
    if let Some(spec) = &resp.spec {
        let (errors, _) = validate(spec, Some(belief));
        problems.extend(errors);
    }
    if let Some(doc) = &resp.regions {
        if let Err(e) = regions_from_document(doc, &belief.objects) {
            problems.push(e.to_string());
        }
    }
    if let Some(params) = &resp.params {
        for p in params {
            if !belief.contains(&p.label) {
                problems.push(format!("params: unknown object `{}`", p.label));
            }
            let checks = [("mass", p.mass, MASS_CLAMP), ("friction", p.friction, FRICTION_CLAMP)];
            for (name, v, (lo, hi)) in checks {
                if let Some(v) = v {
                    if !v.is_finite() || v <= 0.0 {
                        problems.push(format!("params: {name} of `{}` must be positive, got {v}", p.label));
                    } else if v < lo || v > hi {
                        problems.push(format!(
                            "params: {name} of `{}` is {v}, outside [{lo}, {hi}]",
                            p.label
                        ));
                    }
                }
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(StrategistError::Invalid(problems.join("; ")))
    }
}

/// The reasoning interface used by the control loop.
pub trait Strategist: Send {
    fn name(&self) -> &str;

    /// Initial cost spec and contact regions for a task.
    fn formulate(&mut self, req: &StrategistRequest) -> Result<StrategistResponse, StrategistError>;

    /// Proposed physical parameters from logged data; `params` is `None`
    /// when no update is warranted.
    fn refine_params(&mut self, req: &StrategistRequest) -> StrategistResponse;

    /// Revised cost spec (and possibly regions) after repeated failure.
    fn refine_plan(&mut self, req: &StrategistRequest) -> StrategistResponse;
}
