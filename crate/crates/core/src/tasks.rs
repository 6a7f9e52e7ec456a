//! The benchmark tasks: scene files, task identifiers, and the success and
//! failure predicates evaluated on the execution world.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{PhysicsModel, SimConfig, SimState};
use crate::world_model::{init_belief, wrap_angle, BiasFactors, WorldBelief, WorldModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    PushConstForce,
    PushPickBoard,
    FlipBox,
    FlipWall,
    PickBox,
    #[serde(rename = "pick_clutter_2d")]
    PickClutter2d,
}

impl TaskId {
    pub const ALL: [TaskId; 6] = [
        TaskId::PushConstForce,
        TaskId::PushPickBoard,
        TaskId::FlipBox,
        TaskId::FlipWall,
        TaskId::PickBox,
        TaskId::PickClutter2d,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskId::PushConstForce => "push_const_force",
            TaskId::PushPickBoard => "push_pick_board",
            TaskId::FlipBox => "flip_box",
            TaskId::FlipWall => "flip_wall",
            TaskId::PickBox => "pick_box",
            TaskId::PickClutter2d => "pick_clutter_2d",
        }
    }

    /// Natural-language instruction given to the strategist.
    pub fn instruction(self) -> &'static str {
        match self {
            TaskId::PushConstForce => "push the box along the table with a constant force of about 5 N",
            TaskId::PushPickBoard => {
                "push the thin board over the table edge until it overhangs, then grasp it from below"
            }
            TaskId::FlipBox => "flip the box onto its side by pushing near its top",
            TaskId::FlipWall => "push the tall box against the wall and flip it onto its side",
            TaskId::PickBox => "pick up the box and carry it to the goal",
            TaskId::PickClutter2d => "pick the box out of the clutter and carry it to the goal",
        }
    }

    pub fn supported() -> String {
        TaskId::ALL.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("unknown task `{0}`; supported tasks: {supported}", supported = TaskId::supported())]
pub struct UnknownTask(pub String);

impl FromStr for TaskId {
    type Err = UnknownTask;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| UnknownTask(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("cannot read scene file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scene file {path} is not valid: {message}")]
    Parse { path: String, message: String },
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error(transparent)]
    World(#[from] WorldModelError),
}

/// A scene: ground-truth world, finger start, belief error, and task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub task: TaskId,
    /// Ground-truth objects and fixtures.
    pub world: WorldBelief,
    pub finger_start: [f64; 2],
    /// Multiplicative error of the initial belief relative to truth.
    #[serde(default)]
    pub belief_bias: BTreeMap<String, BiasFactors>,
    /// Carry goal for pick tasks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<[f64; 2]>,
    #[serde(default)]
    pub sim: SimConfig,
}

impl Scene {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, SceneError> {
        let scene: Scene = serde_json::from_str(text).map_err(|e| SceneError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Self, SceneError> {
        let text = std::fs::read_to_string(path).map_err(|source| SceneError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// The scene shipped for `task`.
    pub fn builtin(task: TaskId) -> Scene {
        let text = match task {
            TaskId::PushConstForce => include_str!("../assets/scenes/push_const_force.json"),
            TaskId::PushPickBoard => include_str!("../assets/scenes/push_pick_board.json"),
            TaskId::FlipBox => include_str!("../assets/scenes/flip_box.json"),
            TaskId::FlipWall => include_str!("../assets/scenes/flip_wall.json"),
            TaskId::PickBox => include_str!("../assets/scenes/pick_box.json"),
            TaskId::PickClutter2d => include_str!("../assets/scenes/pick_clutter_2d.json"),
        };
        Self::from_json(text, task.as_str()).expect("shipped scenes are valid")
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        self.world.validate()?;
        self.sim.validate().map_err(SceneError::Invalid)?;
        if self.world.objects.is_empty() {
            return Err(SceneError::Invalid("scene has no objects".into()));
        }
        for label in self.belief_bias.keys() {
            if !self.world.contains(label) {
                return Err(SceneError::Invalid(format!("belief_bias names unknown object `{label}`")));
            }
        }
        if let Some(g) = &self.sim.grasp {
            if !self.world.contains(&g.label) {
                return Err(SceneError::Invalid(format!("grasp rule names unknown object `{}`", g.label)));
            }
        }
        if matches!(self.task, TaskId::PickBox | TaskId::PickClutter2d) && self.goal.is_none() {
            return Err(SceneError::Invalid(format!("task {} needs a goal", self.task)));
        }
        Ok(())
    }

    /// The robot's initial belief.
    pub fn initial_belief(&self) -> Result<WorldBelief, SceneError> {
        Ok(init_belief(&self.world, &self.belief_bias)?)
    }

    /// Object the task is about: the grasp target when there is one,
    /// otherwise the first object.
    pub fn primary_label(&self) -> &str {
        match &self.sim.grasp {
            Some(g) => &g.label,
            None => self.world.labels().next().expect("validated non-empty"),
        }
    }

    /// Fresh execution-world state.
    pub fn initial_state(&self) -> SimState {
        SimState::new(&self.world, self.finger_start, &self.sim)
    }
}

/// Why an attempt ended without success.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum Failure {
    /// Step budget exhausted; `stage` is the furthest stage reached.
    Budget { stage: usize },
    /// An object left the table.
    Dropped { label: String },
    /// The force stayed in band on too few contacted steps.
    ForceOutOfBand { fraction: f64 },
    /// The simulator produced non-finite values.
    SimFault,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Budget { stage } => write!(f, "step budget exhausted in stage {stage}"),
            Failure::Dropped { label } => write!(f, "`{label}` fell off the table"),
            Failure::ForceOutOfBand { fraction } => {
                write!(f, "force in band on only {:.0}% of contacted steps", fraction * 100.0)
            }
            Failure::SimFault => f.write_str("simulation fault"),
        }
    }
}

/// Speed below which an object counts as at rest (m/s).
pub const REST_SPEED: f64 = 0.01;
/// Orientation tolerance for the flip tasks (rad).
pub const FLIP_TOLERANCE: f64 = 0.15;
/// Distance tolerance for the pick tasks (m).
pub const GOAL_TOLERANCE: f64 = 0.02;
/// Force band for constant-force pushing (N).
pub const FORCE_BAND: (f64, f64) = (4.0, 6.0);
/// Evaluation window for constant-force pushing (s).
pub const FORCE_WINDOW: f64 = 5.0;
/// Initial transient excluded from the force evaluation (s).
pub const FORCE_TRANSIENT: f64 = 1.0;
/// Required in-band fraction of contacted steps.
pub const FORCE_FRACTION: f64 = 0.8;
const DROP_DEPTH: f64 = -0.05;

/// Tracks task progress on the execution world, one control step at a time.
#[derive(Debug, Clone)]
pub struct TaskMonitor {
    task: TaskId,
    label: String,
    goal: Option<[f64; 2]>,
    first_contact: Option<f64>,
    contacted: usize,
    in_band: usize,
}

impl TaskMonitor {
    pub fn new(scene: &Scene) -> Self {
        Self {
            task: scene.task,
            label: scene.primary_label().to_string(),
            goal: scene.goal,
            first_contact: None,
            contacted: 0,
            in_band: 0,
        }
    }

    /// Fraction of contacted post-transient steps with force in band.
    pub fn band_fraction(&self) -> f64 {
        if self.contacted == 0 {
            0.0
        } else {
            self.in_band as f64 / self.contacted as f64
        }
    }

    /// `Some(Ok)` on success, `Some(Err)` on a terminal failure, `None`
    /// while the attempt should continue.
    pub fn check(&mut self, state: &SimState, model: &PhysicsModel) -> Option<Result<(), Failure>> {
        if state.fault {
            return Some(Err(Failure::SimFault));
        }
        for b in &state.bodies {
            if b.pose.z < DROP_DEPTH {
                return Some(Err(Failure::Dropped { label: b.label.clone() }));
            }
        }
        let i = model.index_of(&self.label)?;
        let body = &state.bodies[i];
        match self.task {
            TaskId::PushConstForce => {
                let force = body.finger_force_magnitude();
                if body.in_contact_with_finger() && self.first_contact.is_none() {
                    self.first_contact = Some(state.time);
                }
                let start = self.first_contact? + FORCE_TRANSIENT;
                if state.time > start && body.in_contact_with_finger() {
                    self.contacted += 1;
                    if (FORCE_BAND.0..=FORCE_BAND.1).contains(&force) {
                        self.in_band += 1;
                    }
                }
                if state.time >= start + FORCE_WINDOW - 1e-9 {
                    let fraction = self.band_fraction();
                    return Some(if fraction >= FORCE_FRACTION {
                        Ok(())
                    } else {
                        Err(Failure::ForceOutOfBand { fraction })
                    });
                }
                None
            }
            TaskId::FlipBox | TaskId::FlipWall => {
                let r = wrap_angle(body.pose.rotation).abs();
                ((r - FRAC_PI_2).abs() < FLIP_TOLERANCE && body.speed() < REST_SPEED && body.omega.abs() < 0.1)
                    .then_some(Ok(()))
            }
            TaskId::PushPickBoard => body.attached.is_some().then_some(Ok(())),
            TaskId::PickBox | TaskId::PickClutter2d => {
                let g = self.goal?;
                let d = (body.pose.x - g[0]).hypot(body.pose.z - g[1]);
                (body.attached.is_some() && d < GOAL_TOLERANCE).then_some(Ok(()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_scenes_load() {
        for t in TaskId::ALL {
            let s = Scene::builtin(t);
            assert_eq!(s.task, t);
            assert_eq!(t.as_str().parse::<TaskId>().unwrap(), t);
        }
    }

    #[test]
    fn unknown_task_lists_supported() {
        let e = "stack_cups".parse::<TaskId>().unwrap_err().to_string();
        assert!(e.contains("flip_wall") && e.contains("stack_cups"));
    }

    #[test]
    fn biased_board_belief() {
        let s = Scene::builtin(TaskId::PushPickBoard);
        let b = s.initial_belief().unwrap();
        assert!((b.objects["board"].mass - 2.0).abs() < 1e-12);
        assert!((b.objects["board"].friction - 0.9).abs() < 1e-12);
    }

    #[test]
    fn flipped_box_succeeds() {
        let mut s = Scene::builtin(TaskId::FlipBox);
        s.world.objects.get_mut("box").unwrap().pose.rotation = -FRAC_PI_2;
        let model = PhysicsModel::from_belief(&s.world);
        let mut m = TaskMonitor::new(&s);
        assert_eq!(m.check(&s.initial_state(), &model), Some(Ok(())));
    }
}
