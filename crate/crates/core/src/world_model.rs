//! Belief state over object parameters and the fixtures of the planar scene.
//!
//! A [`WorldBelief`] is an immutable value. Every update produces a new
//! value, so a belief can be shared read-only across rollout workers while
//! the control loop owns the single mutable head.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fixed gravitational acceleration used by every scene.
pub const GRAVITY: f64 = 9.81;

/// Bounds applied to strategist-proposed masses (kg).
pub const MASS_CLAMP: (f64, f64) = (0.01, 50.0);
/// Bounds applied to strategist-proposed friction coefficients.
pub const FRICTION_CLAMP: (f64, f64) = (0.01, 2.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldModelError {
    #[error("bias factor for `{label}` must be > 0 (got {value})")]
    NonPositiveFactor { label: String, value: f64 },
    #[error("label sets differ: only in belief {only_belief:?}, only in truth {only_truth:?}")]
    LabelMismatch {
        only_belief: Vec<String>,
        only_truth: Vec<String>,
    },
    #[error("object `{label}` is invalid: {reason}")]
    InvalidObject { label: String, reason: String },
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    if !a.is_finite() {
        return 0.0;
    }
    let r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Planar pose in the vertical x-z plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub z: f64,
    pub rotation: f64,
}

impl Pose2 {
    pub fn new(x: f64, z: f64, rotation: f64) -> Self {
        Self {
            x,
            z,
            rotation: wrap_angle(rotation),
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.z]
    }

    /// Map a point from the body frame into the world frame.
    pub fn to_world(&self, local: [f64; 2]) -> [f64; 2] {
        self.frame().to_world(local)
    }

    /// Map a world point into the body frame.
    pub fn to_local(&self, world: [f64; 2]) -> [f64; 2] {
        self.frame().to_local(world)
    }

    /// Rotate a direction from the body frame into the world frame.
    pub fn rotate(&self, v: [f64; 2]) -> [f64; 2] {
        self.frame().rotate(v)
    }

    /// Pose with its rotation's sine and cosine evaluated once.
    pub fn frame(&self) -> Frame {
        let (sin, cos) = self.rotation.sin_cos();
        Frame {
            origin: [self.x, self.z],
            cos,
            sin,
        }
    }
}

/// A rigid transform with precomputed trigonometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub origin: [f64; 2],
    pub cos: f64,
    pub sin: f64,
}

impl Frame {
    pub fn to_world(&self, local: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.cos * local[0] - self.sin * local[1],
            self.origin[1] + self.sin * local[0] + self.cos * local[1],
        ]
    }

    pub fn to_local(&self, world: [f64; 2]) -> [f64; 2] {
        let dx = world[0] - self.origin[0];
        let dz = world[1] - self.origin[1];
        [self.cos * dx + self.sin * dz, -self.sin * dx + self.cos * dz]
    }

    pub fn rotate(&self, v: [f64; 2]) -> [f64; 2] {
        [self.cos * v[0] - self.sin * v[1], self.sin * v[0] + self.cos * v[1]]
    }
}

/// Where a parameter value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    #[default]
    Prior,
    Refined { cycle: u32 },
}

/// One object's entry in the belief, serialized in the same shape the
/// strategist prompts embed: `pose_estimated`, `mass_kg`, `friction_coeff`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectBelief {
    #[serde(skip)]
    pub label: String,
    #[serde(rename = "pose_estimated", with = "pose_array")]
    pub pose: Pose2,
    #[serde(rename = "mass_kg")]
    pub mass: f64,
    #[serde(rename = "friction_coeff")]
    pub friction: f64,
    pub half_extents: [f64; 2],
    #[serde(default)]
    pub provenance: Provenance,
}

impl ObjectBelief {
    pub fn new(label: &str, pose: Pose2, mass: f64, friction: f64, half_extents: [f64; 2]) -> Self {
        Self {
            label: label.to_string(),
            pose,
            mass,
            friction,
            half_extents,
            provenance: Provenance::Prior,
        }
    }

    pub fn validate(&self) -> Result<(), WorldModelError> {
        let bad = |reason: &str| {
            Err(WorldModelError::InvalidObject {
                label: self.label.clone(),
                reason: reason.to_string(),
            })
        };
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return bad("mass must be > 0");
        }
        if !(self.friction >= 0.0 && self.friction.is_finite()) {
            return bad("friction must be >= 0");
        }
        if !(self.half_extents[0] > 0.0 && self.half_extents[1] > 0.0) {
            return bad("half extents must be > 0");
        }
        if !(self.pose.x.is_finite() && self.pose.z.is_finite() && self.pose.rotation.is_finite()) {
            return bad("pose must be finite");
        }
        Ok(())
    }

    /// Moment of inertia of a uniform rectangle about its centre.
    pub fn inertia(&self) -> f64 {
        let [hx, hz] = self.half_extents;
        self.mass * (hx * hx + hz * hz) / 3.0
    }
}

mod pose_array {
    use super::Pose2;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &Pose2, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq([p.x, p.z, p.rotation])
    }

    /// Accepts the planar triple `[x, z, rotation]` or the 7-element
    /// `[x, y, z, qx, qy, qz, qw]` form; the latter is projected onto the
    /// x-z plane with rotation taken about the y axis.
    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Pose2, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        match v.len() {
            3 => Ok(Pose2::new(v[0], v[1], v[2])),
            7 => {
                let (qx, qy, qz, qw) = (v[3], v[4], v[5], v[6]);
                // rotation about +y, sign flipped so that +x toward +z is positive
                let siny = 2.0 * (qw * qy - qz * qx);
                let cosy = 1.0 - 2.0 * (qy * qy + qx * qx);
                let about_y = siny.atan2(cosy);
                Ok(Pose2::new(v[0], v[2], -about_y))
            }
            n => Err(D::Error::custom(format!(
                "pose_estimated must have 3 or 7 elements, got {n}"
            ))),
        }
    }
}

/// Static scene geometry shared by the planning and evaluation worlds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixtures {
    /// The table surface (z = 0) supports objects for x <= table_edge_x.
    pub table_edge_x: f64,
    /// Vertical wall face; `None` when the scene has no wall.
    #[serde(default)]
    pub wall_x: Option<f64>,
    /// Height of the wall above the table; `None` means unbounded.
    #[serde(default)]
    pub wall_height: Option<f64>,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
}

fn default_gravity() -> f64 {
    GRAVITY
}

impl Default for Fixtures {
    fn default() -> Self {
        Self {
            table_edge_x: 1.0,
            wall_x: None,
            wall_height: None,
            gravity: GRAVITY,
        }
    }
}

/// The belief state: per-object parameters plus fixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawBelief")]
pub struct WorldBelief {
    pub objects: BTreeMap<String, ObjectBelief>,
    pub fixtures: Fixtures,
}

#[derive(Deserialize)]
struct RawBelief {
    objects: BTreeMap<String, ObjectBelief>,
    #[serde(default)]
    fixtures: Fixtures,
}

impl From<RawBelief> for WorldBelief {
    fn from(raw: RawBelief) -> Self {
        let mut objects = raw.objects;
        for (label, obj) in objects.iter_mut() {
            obj.label = label.clone();
        }
        Self {
            objects,
            fixtures: raw.fixtures,
        }
    }
}

impl WorldBelief {
    pub fn new(objects: impl IntoIterator<Item = ObjectBelief>, fixtures: Fixtures) -> Self {
        Self {
            objects: objects.into_iter().map(|o| (o.label.clone(), o)).collect(),
            fixtures,
        }
    }

    pub fn get(&self, label: &str) -> Option<&ObjectBelief> {
        self.objects.get(label)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.objects.contains_key(label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.objects.keys().map(String::as_str)
    }

    pub fn validate(&self) -> Result<(), WorldModelError> {
        for obj in self.objects.values() {
            obj.validate()?;
        }
        Ok(())
    }

    /// The per-object JSON map embedded verbatim in strategist prompts.
    pub fn objects_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.objects).unwrap_or(serde_json::Value::Null)
    }

    /// Replace object poses with the given ones, leaving parameters intact.
    pub fn with_poses(&self, poses: &BTreeMap<String, Pose2>) -> WorldBelief {
        let mut out = self.clone();
        for (label, pose) in poses {
            if let Some(obj) = out.objects.get_mut(label) {
                obj.pose = *pose;
            }
        }
        out
    }
}

/// Multiplicative error applied to a prior, modelling a mis-estimating
/// perception front end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasFactors {
    pub mass: f64,
    pub friction: f64,
}

impl Default for BiasFactors {
    fn default() -> Self {
        Self {
            mass: 1.0,
            friction: 1.0,
        }
    }
}

/// Build the initial belief by scaling mass and friction of `prior`.
/// Labels absent from `bias` keep factor 1.
pub fn init_belief(
    prior: &WorldBelief,
    bias: &BTreeMap<String, BiasFactors>,
) -> Result<WorldBelief, WorldModelError> {
    for (label, f) in bias {
        for value in [f.mass, f.friction] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(WorldModelError::NonPositiveFactor {
                    label: label.clone(),
                    value,
                });
            }
        }
    }
    let mut out = prior.clone();
    for (label, obj) in out.objects.iter_mut() {
        let f = bias.get(label).copied().unwrap_or_default();
        obj.mass *= f.mass;
        obj.friction *= f.friction;
        obj.provenance = Provenance::Prior;
    }
    Ok(out)
}

/// A proposed change to one object's physical parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamUpdate {
    pub label: String,
    #[serde(default)]
    pub mass: Option<f64>,
    #[serde(default)]
    pub friction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RefinementWarning {
    UnknownLabel(String),
    Clamped {
        label: String,
        field: String,
        proposed: f64,
        applied: f64,
    },
}

fn clamp_param(v: f64, (lo, hi): (f64, f64)) -> f64 {
    if v.is_nan() {
        lo
    } else {
        v.clamp(lo, hi)
    }
}

/// Apply strategist-proposed parameter updates. Out-of-range values are
/// clamped and reported; unknown labels are skipped and reported.
pub fn apply_refinement(
    belief: &WorldBelief,
    updates: &[ParamUpdate],
    cycle: u32,
) -> (WorldBelief, Vec<RefinementWarning>) {
    let mut out = belief.clone();
    let mut warnings = Vec::new();
    for update in updates {
        let Some(obj) = out.objects.get_mut(&update.label) else {
            log::warn!("refinement names unknown object `{}`", update.label);
            warnings.push(RefinementWarning::UnknownLabel(update.label.clone()));
            continue;
        };
        let mut touched = false;
        for (field, proposed, bounds) in [
            ("mass", update.mass, MASS_CLAMP),
            ("friction", update.friction, FRICTION_CLAMP),
        ] {
            let Some(proposed) = proposed else { continue };
            let applied = clamp_param(proposed, bounds);
            if applied != proposed {
                log::warn!(
                    "clamped {field} of `{}` from {proposed} to {applied}",
                    update.label
                );
                warnings.push(RefinementWarning::Clamped {
                    label: update.label.clone(),
                    field: field.to_string(),
                    proposed,
                    applied,
                });
            }
            if field == "mass" {
                obj.mass = applied;
            } else {
                obj.friction = applied;
            }
            touched = true;
        }
        if touched {
            obj.provenance = Provenance::Refined { cycle };
        }
    }
    (out, warnings)
}

/// Signed per-field differences `belief - truth`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub mass: f64,
    pub friction: f64,
    pub pose: Pose2,
}

pub fn belief_divergence(
    belief: &WorldBelief,
    truth: &WorldBelief,
) -> Result<BTreeMap<String, Divergence>, WorldModelError> {
    let only_belief: Vec<String> = belief
        .objects
        .keys()
        .filter(|k| !truth.objects.contains_key(*k))
        .cloned()
        .collect();
    let only_truth: Vec<String> = truth
        .objects
        .keys()
        .filter(|k| !belief.objects.contains_key(*k))
        .cloned()
        .collect();
    if !only_belief.is_empty() || !only_truth.is_empty() {
        return Err(WorldModelError::LabelMismatch {
            only_belief,
            only_truth,
        });
    }
    Ok(belief
        .objects
        .iter()
        .map(|(label, b)| {
            let t = &truth.objects[label];
            (
                label.clone(),
                Divergence {
                    mass: b.mass - t.mass,
                    friction: b.friction - t.friction,
                    pose: Pose2 {
                        x: b.pose.x - t.pose.x,
                        z: b.pose.z - t.pose.z,
                        rotation: wrap_angle(b.pose.rotation - t.pose.rotation),
                    },
                },
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn board_world(mass: f64, friction: f64) -> WorldBelief {
        WorldBelief::new(
            [ObjectBelief::new(
                "cutting_board",
                Pose2::new(-0.25, 0.01, 0.0),
                mass,
                friction,
                [0.15, 0.01],
            )],
            Fixtures::default(),
        )
    }

    fn bias(mass: f64, friction: f64) -> BTreeMap<String, BiasFactors> {
        [("cutting_board".to_string(), BiasFactors { mass, friction })]
            .into_iter()
            .collect()
    }

    #[test]
    fn unit_bias_is_identity() {
        let truth = board_world(0.25, 0.5);
        assert_eq!(init_belief(&truth, &bias(1.0, 1.0)).unwrap(), truth);
    }

    #[test]
    fn overestimated_prior() {
        let truth = board_world(0.25, 0.5);
        let b = init_belief(&truth, &bias(8.0, 1.8)).unwrap();
        let obj = b.get("cutting_board").unwrap();
        assert!((obj.mass - 2.0).abs() < 1e-12);
        assert!((obj.friction - 0.9).abs() < 1e-12);
        assert_eq!(obj.provenance, Provenance::Prior);
    }

    #[test]
    fn non_positive_factor_rejected() {
        let truth = board_world(0.25, 0.5);
        let err = init_belief(&truth, &bias(0.0, 1.0)).unwrap_err();
        assert!(matches!(err, WorldModelError::NonPositiveFactor { .. }));
        assert!(init_belief(&truth, &bias(1.0, -2.0)).is_err());
    }

    #[test]
    fn refinement_isolates_fields() {
        let b = board_world(2.0, 0.9);
        let (r, w) = apply_refinement(
            &b,
            &[ParamUpdate {
                label: "cutting_board".into(),
                mass: Some(0.9),
                friction: None,
            }],
            1,
        );
        assert!(w.is_empty());
        let obj = r.get("cutting_board").unwrap();
        assert_eq!(obj.mass, 0.9);
        assert_eq!(obj.friction, 0.9);
        assert_eq!(obj.provenance, Provenance::Refined { cycle: 1 });
    }

    #[test]
    fn unknown_label_is_noop_with_warning() {
        let b = board_world(2.0, 0.9);
        let (r, w) = apply_refinement(
            &b,
            &[ParamUpdate {
                label: "spatula".into(),
                mass: Some(1.0),
                friction: Some(0.2),
            }],
            1,
        );
        assert_eq!(r, b);
        assert_eq!(w, vec![RefinementWarning::UnknownLabel("spatula".into())]);
    }

    #[test]
    fn out_of_range_values_are_clamped() {
        let b = board_world(2.0, 0.9);
        let (r, w) = apply_refinement(
            &b,
            &[ParamUpdate {
                label: "cutting_board".into(),
                mass: Some(500.0),
                friction: Some(f64::NAN),
            }],
            2,
        );
        let obj = r.get("cutting_board").unwrap();
        assert_eq!(obj.mass, 50.0);
        assert_eq!(obj.friction, 0.01);
        assert_eq!(w.len(), 2);
        obj.validate().unwrap();
    }

    #[test]
    fn divergence_values() {
        let b = board_world(2.0, 0.9);
        let t = board_world(0.25, 0.5);
        let d = belief_divergence(&b, &t).unwrap();
        let d = d["cutting_board"];
        assert!((d.mass - 1.75).abs() < 1e-12);
        assert!((d.friction - 0.4).abs() < 1e-12);
        let zero = belief_divergence(&t, &t).unwrap()["cutting_board"];
        assert_eq!(zero.mass, 0.0);
        assert_eq!(zero.friction, 0.0);
        assert_eq!(zero.pose, Pose2::default());
    }

    #[test]
    fn divergence_label_mismatch() {
        let b = board_world(2.0, 0.9);
        let mut t = board_world(0.25, 0.5);
        t.objects.insert(
            "cup".into(),
            ObjectBelief::new("cup", Pose2::default(), 0.1, 0.5, [0.02, 0.04]),
        );
        assert!(matches!(
            belief_divergence(&b, &t),
            Err(WorldModelError::LabelMismatch { .. })
        ));
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert_eq!(wrap_angle(0.3), 0.3);
    }

    #[test]
    fn listing_shape_round_trip() {
        let b = board_world(0.4, 0.4);
        let json = serde_json::to_string(&b).unwrap();
        assert!(json.contains("\"pose_estimated\""));
        assert!(json.contains("\"mass_kg\""));
        assert!(json.contains("\"friction_coeff\""));
        let back: WorldBelief = serde_json::from_str(&json).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.get("cutting_board").unwrap().label, "cutting_board");
    }

    #[test]
    fn seven_element_pose_is_projected() {
        let doc = r#"{"objects": {"cutting_board": {
            "pose_estimated": [0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
            "mass_kg": 0.4, "friction_coeff": 0.4, "half_extents": [0.15, 0.01]}}}"#;
        let b: WorldBelief = serde_json::from_str(doc).unwrap();
        let obj = b.get("cutting_board").unwrap();
        assert_eq!(obj.pose, Pose2::new(0.5, 0.0, 0.0));
        assert_eq!(obj.mass, 0.4);
    }
}
