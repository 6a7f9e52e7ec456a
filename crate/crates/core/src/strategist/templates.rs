//! Per-task cost specifications and contact regions used by the heuristic
//! strategist. Geometry is read from the belief so the templates follow the
//! scene.

use std::f64::consts::FRAC_PI_2;

use crate::contact_strategy::{ObjectRegions, RegionDocument, RegionSpec};
use crate::cost::{
    Blending, Comparator, CostSpec, CostTerm, Metric, Stage, StagePredicate, TermKind, Transition, FINGER,
};
use crate::tasks::{TaskId, FORCE_BAND, REST_SPEED};
use crate::world_model::{ObjectBelief, WorldBelief};

use super::{StrategistError, StrategistRequest};

/// Overhang (m) required before the board may be grasped.
pub const GRASP_OVERHANG: f64 = 0.06;
/// Overhang (m) the pushing stage aims for.
pub const TARGET_OVERHANG: f64 = 0.08;

/// Constant per-step cost for each stage still to come, so completing a
/// stage always lowers the running cost.
const STAGE_OFFSET: f64 = 2.0;

fn term(weight: f64, kind: TermKind) -> CostTerm {
    CostTerm::new(weight, kind)
}

fn pred(metric: Metric, op: Comparator, threshold: f64) -> StagePredicate {
    StagePredicate { metric, op, threshold }
}

fn stage(name: &str, terms: Vec<CostTerm>, transition: Option<Vec<StagePredicate>>) -> Stage {
    Stage {
        name: Some(name.to_string()),
        terms,
        transition: transition.map(|all| Transition { all }),
    }
}

fn region(center: [f64; 2], normal: [f64; 2], extent: f64, num_samples: usize) -> RegionSpec {
    RegionSpec {
        center: center.to_vec(),
        normal: normal.to_vec(),
        extent,
        num_samples,
    }
}

fn regions(label: &str, rs: Vec<RegionSpec>) -> RegionDocument {
    [(label.to_string(), ObjectRegions { regions: rs })].into_iter().collect()
}

fn object<'a>(belief: &'a WorldBelief, label: &str) -> Result<&'a ObjectBelief, StrategistError> {
    belief
        .get(label)
        .ok_or_else(|| StrategistError::UnsupportedTask(format!("scene has no object `{label}`")))
}

/// Template spec and regions for the request's task.
pub fn template(req: &StrategistRequest) -> Result<(CostSpec, RegionDocument), StrategistError> {
    let belief = &req.belief;
    match req.task {
        TaskId::PushConstForce => {
            let obj = object(belief, &req.label)?;
            let l = obj.label.clone();
            let [hx, _] = obj.half_extents;
            let spec = CostSpec::single(vec![
                term(5.0, TermKind::ForceBand {
                    lo: FORCE_BAND.0,
                    hi: FORCE_BAND.1,
                }),
                term(2.0, TermKind::ContactIndicator { label: l.clone() }),
                term(0.1, TermKind::DistanceToTarget {
                    subject: l.clone(),
                    target: [obj.pose.x + 3.0, obj.pose.z],
                    frame: None,
                }),
                term(1.0, TermKind::RotationDrift {
                    label: l.clone(),
                    reference: obj.pose.rotation,
                }),
            ]);
            Ok((spec, regions(&l, vec![region([-hx, 0.0], [-1.0, 0.0], 0.02, 20)])))
        }
        TaskId::PushPickBoard => {
            let obj = object(belief, &req.label)?;
            let l = obj.label.clone();
            let [hx, hz] = obj.half_extents;
            let edge = belief.fixtures.table_edge_x;
            let handle = req.handle.unwrap_or([hx - 0.03, -hz - req.finger_radius]);
            let stop_x = edge + TARGET_OVERHANG - hx;
            let push = stage(
                "push",
                vec![
                    term(10.0, TermKind::DistanceToTarget {
                        subject: l.clone(),
                        target: [stop_x, obj.pose.z],
                        frame: None,
                    }),
                    term(1.0, TermKind::OverhangProgress {
                        label: l.clone(),
                        desired: TARGET_OVERHANG,
                    }),
                    term(1.0, TermKind::RotationDrift {
                        label: l.clone(),
                        reference: obj.pose.rotation,
                    }),
                    // keep the finger behind the board instead of riding on top
                    term(5.0, TermKind::DistanceToTarget {
                        subject: FINGER.into(),
                        target: [-hx - req.finger_radius, 0.0],
                        frame: Some(l.clone()),
                    }),
                    term(2.0 * STAGE_OFFSET, TermKind::StepPenalty),
                ],
                Some(vec![
                    pred(Metric::OverhangOf { label: l.clone() }, Comparator::Gt, GRASP_OVERHANG),
                    pred(Metric::SpeedOf { label: l.clone() }, Comparator::Lt, REST_SPEED),
                ]),
            );
            let grasp = stage(
                "grasp",
                vec![
                    term(10.0, TermKind::DistanceToTarget {
                        subject: FINGER.into(),
                        target: handle,
                        frame: Some(l.clone()),
                    }),
                    term(0.2, TermKind::Stability {
                        label: l.clone(),
                        rate: 5.0,
                    }),
                    term(1.0, TermKind::RotationDrift {
                        label: l.clone(),
                        reference: obj.pose.rotation,
                    }),
                    term(STAGE_OFFSET, TermKind::StepPenalty),
                ],
                Some(vec![pred(Metric::Grasped { label: l.clone() }, Comparator::Gt, 0.5)]),
            );
            let hold = stage("hold", vec![term(1.0, TermKind::ControlEffort)], None);
            let spec = CostSpec {
                stages: vec![push, grasp, hold],
                blending: Blending::HardSwitch,
                terminal_terms: Vec::new(),
            };
            Ok((spec, regions(&l, vec![region([-hx, 0.0], [-1.0, 0.0], 0.02, 20)])))
        }
        TaskId::FlipBox | TaskId::FlipWall => {
            let obj = object(belief, &req.label)?;
            let l = obj.label.clone();
            let [hx, hz] = obj.half_extents;
            let mut terms = vec![
                term(5.0, TermKind::OrientationError {
                    label: l.clone(),
                    reference: -FRAC_PI_2,
                }),
                term(1.0, TermKind::Stability {
                    label: l.clone(),
                    rate: 5.0,
                }),
            ];
            if let Some(wall) = belief.fixtures.wall_x {
                let rest = [wall + hz, belief.fixtures.wall_height.unwrap_or(0.0) + hx];
                terms.push(term(10.0, TermKind::DistanceToTarget {
                    subject: l.clone(),
                    target: rest,
                    frame: None,
                }));
            }
            let spec = CostSpec::single(terms);
            Ok((spec, regions(&l, vec![region([-hx, 0.8 * hz], [-1.0, 0.0], 0.3 * hz, 30)])))
        }
        TaskId::PickBox | TaskId::PickClutter2d => {
            let goal = req
                .goal
                .ok_or_else(|| StrategistError::UnsupportedTask(format!("task {} needs a goal", req.task)))?;
            let obj = object(belief, &req.label)?;
            let l = obj.label.clone();
            let [_, hz] = obj.half_extents;
            let handle = req.handle.unwrap_or([0.0, hz + req.finger_radius]);
            let reach = stage(
                "reach",
                vec![
                    term(10.0, TermKind::DistanceToTarget {
                        subject: FINGER.into(),
                        target: handle,
                        frame: Some(l.clone()),
                    }),
                    term(0.2, TermKind::Stability {
                        label: l.clone(),
                        rate: 5.0,
                    }),
                    term(STAGE_OFFSET, TermKind::StepPenalty),
                ],
                Some(vec![pred(Metric::Grasped { label: l.clone() }, Comparator::Gt, 0.5)]),
            );
            let carry = stage(
                "carry",
                vec![
                    term(10.0, TermKind::DistanceToTarget {
                        subject: l.clone(),
                        target: goal,
                        frame: None,
                    }),
                    term(1.0, TermKind::ControlEffort),
                ],
                None,
            );
            let spec = CostSpec {
                stages: vec![reach, carry],
                blending: Blending::HardSwitch,
                terminal_terms: Vec::new(),
            };
            Ok((spec, regions(&l, vec![region([0.0, hz], [0.0, 1.0], 0.01, 10)])))
        }
    }
}
