//! Evaluation of a validated spec against simulator states.
//!
//! Labels are resolved to body indices once, when the spec is compiled
//! against a physics model, so rollouts never look up strings.

use serde::{Deserialize, Serialize};

use super::{sigmoid, Blending, Comparator, CostSpec, CostTerm, Metric, TermKind, FINGER};
use crate::sim::{corners, PhysicsModel, SimState};
use crate::world_model::wrap_angle;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Point {
    Finger,
    Body(usize),
}

#[derive(Debug, Clone, PartialEq)]
enum Term {
    Distance { subject: Point, target: [f64; 2], frame: Option<usize> },
    NoContact(usize),
    Effort,
    Orientation { body: usize, reference: f64 },
    Attractor { frame: Option<usize>, point: [f64; 2] },
    Overhang { body: usize, desired: f64 },
    Lift { body: usize, reference: f64 },
    ForceBand { lo: f64, hi: f64 },
    Lateral { body: usize, reference: f64, axis: [f64; 2] },
    RotationDrift { body: usize, reference: f64 },
    Step,
    Stability { body: usize, rate: f64 },
}

#[derive(Debug, Clone, PartialEq)]
struct Weighted {
    weight: f64,
    term: Term,
}

#[derive(Debug, Clone, PartialEq)]
enum MetricC {
    Overhang(usize),
    Speed(usize),
    Distance(Point, Point),
    Orientation(usize),
    Contact(usize),
    Grasped(usize),
}

#[derive(Debug, Clone, PartialEq)]
struct PredicateC {
    metric: MetricC,
    op: Comparator,
    threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct StageC {
    terms: Vec<Weighted>,
    transition: Option<Vec<PredicateC>>,
}

/// A spec bound to a physics model, ready for fast repeated evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledSpec {
    stages: Vec<StageC>,
    soft: Option<(Vec<Weighted>, f64, f64)>,
    terminal: Vec<Weighted>,
    half_extents: Vec<[f64; 2]>,
    table_edge_x: f64,
}

/// Result of checking which stage is active for a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageStatus {
    pub active_stage: usize,
    pub transition_fired: bool,
    /// Soft-switch score (0 under hard switching).
    pub blend_score: f64,
}

/// One term's weighted contribution, for diagnosis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermContribution {
    pub stage: usize,
    pub index: usize,
    pub kind: String,
    pub value: f64,
}

/// Latched stage index for one trajectory: it only ever advances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageTracker {
    pub stage: usize,
}

impl StageTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Advance while transitions hold and report the resulting status.
    pub fn update(&mut self, spec: &CompiledSpec, state: &SimState) -> StageStatus {
        let mut fired = false;
        while spec.transition_holds(self.stage, state) {
            self.stage += 1;
            fired = true;
        }
        StageStatus {
            active_stage: self.stage,
            transition_fired: fired,
            blend_score: spec.blend_score(state),
        }
    }
}

fn resolve(model: &PhysicsModel, label: &str) -> Result<usize, String> {
    model
        .index_of(label)
        .ok_or_else(|| format!("unknown object label `{label}`"))
}

fn resolve_point(model: &PhysicsModel, label: &str) -> Result<Point, String> {
    if label == FINGER {
        Ok(Point::Finger)
    } else {
        resolve(model, label).map(Point::Body)
    }
}

fn compile_term(t: &CostTerm, model: &PhysicsModel) -> Result<Weighted, String> {
    let r = |l: &str| resolve(model, l);
    let term = match &t.kind {
        TermKind::DistanceToTarget { subject, target, frame } => Term::Distance {
            subject: resolve_point(model, subject)?,
            target: *target,
            frame: frame.as_deref().map(r).transpose()?,
        },
        TermKind::ContactIndicator { label } => Term::NoContact(r(label)?),
        TermKind::ControlEffort => Term::Effort,
        TermKind::OrientationError { label, reference } => Term::Orientation {
            body: r(label)?,
            reference: *reference,
        },
        TermKind::Attractor { label, point } => Term::Attractor {
            frame: label.as_deref().map(r).transpose()?,
            point: *point,
        },
        TermKind::OverhangProgress { label, desired } => Term::Overhang {
            body: r(label)?,
            desired: *desired,
        },
        TermKind::LiftReward { label, reference_height } => Term::Lift {
            body: r(label)?,
            reference: *reference_height,
        },
        TermKind::ForceBand { lo, hi } => Term::ForceBand { lo: *lo, hi: *hi },
        TermKind::LateralDrift { label, reference, axis } => Term::Lateral {
            body: r(label)?,
            reference: *reference,
            axis: *axis,
        },
        TermKind::RotationDrift { label, reference } => Term::RotationDrift {
            body: r(label)?,
            reference: *reference,
        },
        TermKind::StepPenalty => Term::Step,
        TermKind::Stability { label, rate } => Term::Stability {
            body: r(label)?,
            rate: *rate,
        },
    };
    Ok(Weighted { weight: t.weight, term })
}

fn compile_metric(m: &Metric, model: &PhysicsModel) -> Result<MetricC, String> {
    Ok(match m {
        Metric::OverhangOf { label } => MetricC::Overhang(resolve(model, label)?),
        Metric::SpeedOf { label } => MetricC::Speed(resolve(model, label)?),
        Metric::Distance { a, b } => MetricC::Distance(resolve_point(model, a)?, resolve_point(model, b)?),
        Metric::OrientationOf { label } => MetricC::Orientation(resolve(model, label)?),
        Metric::Contact { label } => MetricC::Contact(resolve(model, label)?),
        Metric::Grasped { label } => MetricC::Grasped(resolve(model, label)?),
    })
}

impl CompiledSpec {
    pub fn compile(spec: &CostSpec, model: &PhysicsModel) -> Result<Self, String> {
        let terms = |ts: &[CostTerm]| ts.iter().map(|t| compile_term(t, model)).collect::<Result<Vec<_>, _>>();
        let stages = spec
            .stages
            .iter()
            .map(|s| {
                Ok(StageC {
                    terms: terms(&s.terms)?,
                    transition: s
                        .transition
                        .as_ref()
                        .map(|tr| {
                            tr.all
                                .iter()
                                .map(|p| {
                                    Ok(PredicateC {
                                        metric: compile_metric(&p.metric, model)?,
                                        op: p.op,
                                        threshold: p.threshold,
                                    })
                                })
                                .collect::<Result<Vec<_>, String>>()
                        })
                        .transpose()?,
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        if stages.is_empty() {
            return Err("spec has no stages".into());
        }
        let soft = match &spec.blending {
            Blending::HardSwitch => None,
            Blending::SoftSwitch { score_terms, gain, offset } => Some((terms(score_terms)?, *gain, *offset)),
        };
        Ok(Self {
            stages,
            soft,
            terminal: terms(&spec.terminal_terms)?,
            half_extents: model.bodies.iter().map(|b| b.half_extents).collect(),
            table_edge_x: model.fixtures.table_edge_x,
        })
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    fn point(&self, p: Point, state: &SimState) -> [f64; 2] {
        match p {
            Point::Finger => state.finger.pos,
            Point::Body(i) => state.bodies[i].pose.position(),
        }
    }

    fn overhang(&self, body: usize, state: &SimState) -> f64 {
        corners(&state.bodies[body].pose.frame(), self.half_extents[body])
            .iter()
            .map(|c| c[0])
            .fold(f64::NEG_INFINITY, f64::max)
            - self.table_edge_x
    }

    fn term_value(&self, term: &Term, state: &SimState, u: [f64; 2]) -> f64 {
        let sq = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
        match *term {
            Term::Distance { subject, target, frame } => {
                let goal = match frame {
                    Some(f) => state.bodies[f].pose.to_world(target),
                    None => target,
                };
                sq(self.point(subject, state), goal)
            }
            Term::NoContact(b) => {
                if state.bodies[b].in_contact_with_finger() {
                    0.0
                } else {
                    1.0
                }
            }
            Term::Effort => u[0] * u[0] + u[1] * u[1],
            Term::Orientation { body, reference } => wrap_angle(state.bodies[body].pose.rotation - reference).abs(),
            Term::Attractor { frame, point } => {
                let goal = match frame {
                    Some(f) => state.bodies[f].pose.to_world(point),
                    None => point,
                };
                sq(state.finger.pos, goal)
            }
            Term::Overhang { body, desired } => {
                let frac = if desired > 0.0 {
                    self.overhang(body, state) / desired
                } else {
                    1.0
                };
                -frac.clamp(0.0, 1.0)
            }
            Term::Lift { body, reference } => -(state.bodies[body].pose.z - reference).max(0.0),
            Term::ForceBand { lo, hi } => {
                let f = state.total_finger_force();
                (lo - f).max(0.0).powi(2) + (f - hi).max(0.0).powi(2)
            }
            Term::Lateral { body, reference, axis } => {
                let p = state.bodies[body].pose.position();
                (p[0] * axis[0] + p[1] * axis[1] - reference).powi(2)
            }
            Term::RotationDrift { body, reference } => wrap_angle(state.bodies[body].pose.rotation - reference).powi(2),
            Term::Step => 1.0,
            Term::Stability { body, rate } => {
                let b = &state.bodies[body];
                -(-rate * (b.speed() + 0.5 * b.omega.abs())).exp()
            }
        }
    }

    fn sum(&self, terms: &[Weighted], state: &SimState, u: [f64; 2]) -> f64 {
        terms
            .iter()
            .map(|w| w.weight * self.term_value(&w.term, state, u))
            .sum()
    }

    fn metric(&self, m: &MetricC, state: &SimState) -> f64 {
        match *m {
            MetricC::Overhang(b) => self.overhang(b, state),
            MetricC::Speed(b) => state.bodies[b].speed(),
            MetricC::Distance(a, b) => {
                let (pa, pb) = (self.point(a, state), self.point(b, state));
                (pa[0] - pb[0]).hypot(pa[1] - pb[1])
            }
            MetricC::Orientation(b) => state.bodies[b].pose.rotation,
            MetricC::Grasped(b) => {
                if state.bodies[b].attached.is_some() {
                    1.0
                } else {
                    0.0
                }
            }
            MetricC::Contact(b) => {
                if state.bodies[b].in_contact_with_finger() {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Whether the transition out of `stage` holds in `state`.
    pub fn transition_holds(&self, stage: usize, state: &SimState) -> bool {
        match self.stages.get(stage).and_then(|s| s.transition.as_ref()) {
            Some(preds) => preds
                .iter()
                .all(|p| p.op.holds(self.metric(&p.metric, state), p.threshold)),
            None => false,
        }
    }

    /// Progress score driving the soft switch: `sum(w * -value)` over the
    /// score terms, so rewards (negative values) raise the score.
    pub fn blend_score(&self, state: &SimState) -> f64 {
        match &self.soft {
            Some((terms, _, _)) => -self.sum(terms, state, [0.0, 0.0]),
            None => 0.0,
        }
    }

    /// Blend ratio toward the next stage for a given score.
    pub fn blend_ratio(&self, score: f64) -> f64 {
        match &self.soft {
            Some((_, gain, offset)) => sigmoid(gain * (score - offset)),
            None => 0.0,
        }
    }

    /// Unblended cost of one stage's terms.
    pub fn stage_cost(&self, stage: usize, state: &SimState, u: [f64; 2]) -> f64 {
        let s = stage.min(self.stages.len() - 1);
        self.sum(&self.stages[s].terms, state, u)
    }

    /// Running cost with stage `stage` active, blended with the next stage
    /// under the soft switch.
    pub fn running(&self, stage: usize, state: &SimState, u: [f64; 2]) -> f64 {
        let stage = stage.min(self.stages.len() - 1);
        let own = self.stage_cost(stage, state, u);
        if self.soft.is_none() || stage + 1 >= self.stages.len() {
            return own;
        }
        let r = self.blend_ratio(self.blend_score(state));
        (1.0 - r) * own + r * self.stage_cost(stage + 1, state, u)
    }

    /// Running cost with an explicitly supplied blend score.
    pub fn running_with_score(&self, stage: usize, state: &SimState, u: [f64; 2], score: f64) -> f64 {
        let stage = stage.min(self.stages.len() - 1);
        let own = self.stage_cost(stage, state, u);
        if self.soft.is_none() || stage + 1 >= self.stages.len() {
            return own;
        }
        let r = self.blend_ratio(score);
        (1.0 - r) * own + r * self.stage_cost(stage + 1, state, u)
    }

    pub fn terminal(&self, state: &SimState) -> f64 {
        self.sum(&self.terminal, state, [0.0, 0.0])
    }

    /// Per-term weighted values of the active stage and the terminal terms.
    pub fn breakdown(&self, stage: usize, state: &SimState, u: [f64; 2]) -> Vec<TermContribution> {
        let stage = stage.min(self.stages.len() - 1);
        let kind = |t: &Term| {
            match t {
                Term::Distance { .. } => "distance_to_target",
                Term::NoContact(_) => "contact_indicator",
                Term::Effort => "control_effort",
                Term::Orientation { .. } => "orientation_error",
                Term::Attractor { .. } => "attractor",
                Term::Overhang { .. } => "overhang_progress",
                Term::Lift { .. } => "lift_reward",
                Term::ForceBand { .. } => "force_band",
                Term::Lateral { .. } => "lateral_drift",
                Term::RotationDrift { .. } => "rotation_drift",
                Term::Step => "step_penalty",
                Term::Stability { .. } => "stability",
            }
            .to_string()
        };
        self.stages[stage]
            .terms
            .iter()
            .enumerate()
            .map(|(index, w)| TermContribution {
                stage,
                index,
                kind: kind(&w.term),
                value: w.weight * self.term_value(&w.term, state, u),
            })
            .collect()
    }
}

/// Stage status of `state` for a spec, starting from stage 0.
pub fn stage_status(spec: &CompiledSpec, state: &SimState) -> StageStatus {
    StageTracker::new().update(spec, state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{Stage, StagePredicate, Transition};
    use crate::sim::{SimConfig, SimState};
    use crate::world_model::{Fixtures, ObjectBelief, Pose2, WorldBelief};

    fn board(x: f64) -> WorldBelief {
        WorldBelief::new(
            [ObjectBelief::new("cutting_board", Pose2::new(x, 0.01, 0.0), 0.25, 0.5, [0.15, 0.01])],
            Fixtures {
                table_edge_x: 0.0,
                ..Fixtures::default()
            },
        )
    }

    fn setup(x: f64) -> (SimState, PhysicsModel) {
        let w = board(x);
        (SimState::new(&w, [-0.5, 0.1], &SimConfig::default()), PhysicsModel::from_belief(&w))
    }

    fn handoff_transition() -> Transition {
        Transition {
            all: vec![
                StagePredicate {
                    metric: Metric::OverhangOf {
                        label: "cutting_board".into(),
                    },
                    op: Comparator::Gt,
                    threshold: 0.06,
                },
                StagePredicate {
                    metric: Metric::SpeedOf {
                        label: "cutting_board".into(),
                    },
                    op: Comparator::Lt,
                    threshold: 0.01,
                },
            ],
        }
    }

    #[test]
    fn distance_at_target_is_zero() {
        let (s, m) = setup(0.0);
        let spec = CostSpec::single(vec![CostTerm::new(
            1.0,
            TermKind::DistanceToTarget {
                subject: "finger".into(),
                target: s.finger.pos,
                frame: None,
            },
        )]);
        let c = CompiledSpec::compile(&spec, &m).unwrap();
        assert_eq!(c.running(0, &s, [0.0, 0.0]), 0.0);
    }

    #[test]
    fn transition_needs_both_conditions() {
        let (mut s, m) = setup(-0.15 + 0.07);
        let spec = CostSpec {
            stages: vec![
                Stage {
                    name: None,
                    terms: vec![],
                    transition: Some(handoff_transition()),
                },
                Stage {
                    name: None,
                    terms: vec![],
                    transition: None,
                },
            ],
            blending: Blending::HardSwitch,
            terminal_terms: vec![],
        };
        let c = CompiledSpec::compile(&spec, &m).unwrap();
        s.bodies[0].vel = [0.005, 0.0];
        assert!(stage_status(&c, &s).transition_fired);
        s.bodies[0].vel = [0.5, 0.0];
        let st = stage_status(&c, &s);
        assert!(!st.transition_fired);
        assert_eq!(st.active_stage, 0);

        // once fired, the tracker stays advanced
        let mut tr = StageTracker::new();
        s.bodies[0].vel = [0.0, 0.0];
        tr.update(&c, &s);
        s.bodies[0].vel = [0.5, 0.0];
        assert_eq!(tr.update(&c, &s).active_stage, 1);
    }

    #[test]
    fn terminal_lift_and_orientation() {
        let (mut s, m) = setup(0.0);
        s.bodies[0].pose.z = 0.11;
        s.bodies[0].pose.rotation = std::f64::consts::FRAC_PI_2;
        let mut spec = CostSpec::single(vec![]);
        spec.terminal_terms = vec![CostTerm::new(
            32.0,
            TermKind::LiftReward {
                label: "cutting_board".into(),
                reference_height: 0.01,
            },
        )];
        let c = CompiledSpec::compile(&spec, &m).unwrap();
        assert!((c.terminal(&s) + 3.2).abs() < 1e-12);
        spec.terminal_terms = vec![CostTerm::new(
            28.0,
            TermKind::OrientationError {
                label: "cutting_board".into(),
                reference: 0.0,
            },
        )];
        let c = CompiledSpec::compile(&spec, &m).unwrap();
        assert!((c.terminal(&s) - 28.0 * std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert_eq!(CompiledSpec::compile(&CostSpec::single(vec![]), &m).unwrap().terminal(&s), 0.0);
    }

    #[test]
    fn unknown_label_fails_at_compile_time() {
        let (_, m) = setup(0.0);
        let spec = CostSpec::single(vec![CostTerm::new(
            1.0,
            TermKind::ContactIndicator { label: "spatula".into() },
        )]);
        assert!(CompiledSpec::compile(&spec, &m).unwrap_err().contains("spatula"));
    }
}
