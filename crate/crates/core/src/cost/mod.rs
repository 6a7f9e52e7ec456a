//! Staged cost specifications and their evaluation as running and terminal
//! costs for the sampling planner.
//!
//! A [`CostSpec`] is a closed vocabulary of weighted terms grouped into
//! ordered stages. Stages advance on conjunctive predicates over the state
//! and may be blended with a sigmoid over a progress score.

mod eval;
mod load;

pub use eval::{stage_status, CompiledSpec, StageStatus, StageTracker, TermContribution};
pub use load::{load_spec, spec_digest, validate, LoadedSpec, SpecError};

use serde::{Deserialize, Serialize};

/// Default soft-switch sigmoid gain.
pub const DEFAULT_GAIN: f64 = 12.0;
/// Default soft-switch sigmoid offset.
pub const DEFAULT_OFFSET: f64 = 0.55;
/// Weight range a strategist should stay within.
pub const WEIGHT_GUIDANCE: (f64, f64) = (0.1, 10.0);
/// Hard limit on any weight.
pub const WEIGHT_LIMIT: f64 = 1000.0;

/// Name of the end effector when used as a subject or distance endpoint.
pub const FINGER: &str = "finger";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTerm {
    pub weight: f64,
    #[serde(flatten)]
    pub kind: TermKind,
}

impl CostTerm {
    pub fn new(weight: f64, kind: TermKind) -> Self {
        Self { weight, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TermKind {
    /// Squared distance from `subject` (the finger or an object label) to
    /// `target`, which is in world coordinates unless `frame` names an
    /// object, in which case it is in that object's local frame.
    DistanceToTarget {
        subject: String,
        target: [f64; 2],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frame: Option<String>,
    },
    /// 1 while the finger is not pushing on `label`, else 0.
    ContactIndicator { label: String },
    /// Squared norm of the applied control.
    ControlEffort,
    /// Absolute wrapped angle between the object's rotation and `reference`.
    OrientationError { label: String, reference: f64 },
    /// Squared distance from the finger to `point` (local to `label` when
    /// given, otherwise world).
    Attractor {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        point: [f64; 2],
    },
    /// Negative fraction of `desired` overhang achieved, clipped to [0, 1].
    OverhangProgress { label: String, desired: f64 },
    /// Negative height gained above `reference_height`.
    LiftReward { label: String, reference_height: f64 },
    /// Quadratic penalty on total finger force outside [lo, hi] newtons.
    ForceBand { lo: f64, hi: f64 },
    /// Squared offset of the object centre along `axis` from `reference`.
    LateralDrift { label: String, reference: f64, axis: [f64; 2] },
    /// Squared wrapped rotation away from `reference`.
    RotationDrift { label: String, reference: f64 },
    /// Constant 1 per evaluated step.
    StepPenalty,
    /// Negative stillness score in (0, 1]: `-exp(-rate * (|v| + 0.5 |omega|))`.
    Stability { label: String, rate: f64 },
}

impl TermKind {
    pub fn name(&self) -> &'static str {
        match self {
            TermKind::DistanceToTarget { .. } => "distance_to_target",
            TermKind::ContactIndicator { .. } => "contact_indicator",
            TermKind::ControlEffort => "control_effort",
            TermKind::OrientationError { .. } => "orientation_error",
            TermKind::Attractor { .. } => "attractor",
            TermKind::OverhangProgress { .. } => "overhang_progress",
            TermKind::LiftReward { .. } => "lift_reward",
            TermKind::ForceBand { .. } => "force_band",
            TermKind::LateralDrift { .. } => "lateral_drift",
            TermKind::RotationDrift { .. } => "rotation_drift",
            TermKind::StepPenalty => "step_penalty",
            TermKind::Stability { .. } => "stability",
        }
    }

    /// Object labels this term refers to.
    pub fn labels(&self) -> Vec<&str> {
        match self {
            TermKind::DistanceToTarget { subject, frame, .. } => {
                let mut v = Vec::new();
                if subject != FINGER {
                    v.push(subject.as_str());
                }
                if let Some(f) = frame {
                    v.push(f.as_str());
                }
                v
            }
            TermKind::Attractor { label, .. } => label.iter().map(String::as_str).collect(),
            TermKind::ContactIndicator { label }
            | TermKind::OrientationError { label, .. }
            | TermKind::OverhangProgress { label, .. }
            | TermKind::LiftReward { label, .. }
            | TermKind::LateralDrift { label, .. }
            | TermKind::RotationDrift { label, .. }
            | TermKind::Stability { label, .. } => vec![label.as_str()],
            TermKind::ControlEffort | TermKind::ForceBand { .. } | TermKind::StepPenalty => vec![],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Lt => value < threshold,
            Comparator::Gt => value > threshold,
            Comparator::Le => value <= threshold,
            Comparator::Ge => value >= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
pub enum Metric {
    /// Rightmost corner past the table edge (m).
    OverhangOf { label: String },
    /// Linear speed (m/s).
    SpeedOf { label: String },
    /// Distance between two centres; either endpoint may be the finger (m).
    Distance { a: String, b: String },
    /// Wrapped rotation (rad).
    OrientationOf { label: String },
    /// 1 when the finger pushes on the object, else 0.
    Contact { label: String },
    /// 1 while the object is held by the finger, else 0.
    Grasped { label: String },
}

impl Metric {
    pub fn labels(&self) -> Vec<&str> {
        match self {
            Metric::OverhangOf { label }
            | Metric::SpeedOf { label }
            | Metric::OrientationOf { label }
            | Metric::Contact { label }
            | Metric::Grasped { label } => vec![label.as_str()],
            Metric::Distance { a, b } => [a, b]
                .into_iter()
                .filter(|s| s.as_str() != FINGER)
                .map(String::as_str)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePredicate {
    #[serde(flatten)]
    pub metric: Metric,
    pub op: Comparator,
    pub threshold: f64,
}

/// Conjunction of predicates; the transition fires when all hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub all: Vec<StagePredicate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub terms: Vec<CostTerm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Transition>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Blending {
    #[default]
    HardSwitch,
    SoftSwitch {
        score_terms: Vec<CostTerm>,
        #[serde(default = "default_gain")]
        gain: f64,
        #[serde(default = "default_offset")]
        offset: f64,
    },
}

fn default_gain() -> f64 {
    DEFAULT_GAIN
}

fn default_offset() -> f64 {
    DEFAULT_OFFSET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub blending: Blending,
    #[serde(default)]
    pub terminal_terms: Vec<CostTerm>,
}

impl CostSpec {
    /// Single-stage spec with no terminal terms.
    pub fn single(terms: Vec<CostTerm>) -> Self {
        Self {
            stages: vec![Stage {
                name: None,
                terms,
                transition: None,
            }],
            blending: Blending::HardSwitch,
            terminal_terms: Vec::new(),
        }
    }

    /// Every term in the spec, including score and terminal terms.
    pub fn all_terms(&self) -> impl Iterator<Item = &CostTerm> {
        let score: &[CostTerm] = match &self.blending {
            Blending::SoftSwitch { score_terms, .. } => score_terms,
            Blending::HardSwitch => &[],
        };
        self.stages
            .iter()
            .flat_map(|s| s.terms.iter())
            .chain(score.iter())
            .chain(self.terminal_terms.iter())
    }

    /// Multiply every weight by `factor`.
    pub fn scaled(&self, factor: f64) -> CostSpec {
        let mut out = self.clone();
        let scale = |ts: &mut Vec<CostTerm>| ts.iter_mut().for_each(|t| t.weight *= factor);
        for s in &mut out.stages {
            scale(&mut s.terms);
        }
        scale(&mut out.terminal_terms);
        out
    }

    /// Return a copy with an attractor pulling the finger toward `point`
    /// (local to `label` when given) added to `stage`.
    pub fn with_attractor(&self, stage: usize, label: Option<&str>, point: [f64; 2], weight: f64) -> CostSpec {
        let mut out = self.clone();
        if let Some(s) = out.stages.get_mut(stage) {
            s.terms.push(CostTerm::new(
                weight,
                TermKind::Attractor {
                    label: label.map(str::to_string),
                    point,
                },
            ));
        }
        out
    }
}

/// Logistic function used by the soft switch.
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
