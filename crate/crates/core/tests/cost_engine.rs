use proptest::prelude::*;

use coral::cost::{
    load_spec, spec_digest, Blending, Comparator, CompiledSpec, CostSpec, CostTerm, Metric, Stage, StagePredicate,
    StageTracker, TermKind, Transition, FINGER,
};
use coral::sim::{PhysicsModel, SimConfig, SimState};
use coral::world_model::{Fixtures, ObjectBelief, Pose2, WorldBelief};

fn world() -> WorldBelief {
    WorldBelief::new(
        [ObjectBelief::new("box", Pose2::new(0.0, 0.05, 0.0), 0.5, 0.5, [0.05, 0.05])],
        Fixtures::default(),
    )
}

fn two_stage() -> CostSpec {
    CostSpec {
        stages: vec![
            Stage {
                name: Some("approach".into()),
                terms: vec![
                    CostTerm::new(1.0, TermKind::DistanceToTarget {
                        subject: FINGER.into(),
                        target: [-0.06, 0.05],
                        frame: None,
                    }),
                    CostTerm::new(2.0, TermKind::StepPenalty),
                ],
                transition: Some(Transition {
                    all: vec![StagePredicate {
                        metric: Metric::Distance { a: FINGER.into(), b: "box".into() },
                        op: Comparator::Lt,
                        threshold: 0.2,
                    }],
                }),
            },
            Stage {
                name: Some("push".into()),
                terms: vec![CostTerm::new(1.0, TermKind::ControlEffort)],
                transition: None,
            },
        ],
        blending: Blending::HardSwitch,
        terminal_terms: Vec::new(),
    }
}

#[test]
fn valid_document_loads() {
    let doc = serde_json::to_string(&two_stage()).unwrap();
    let loaded = load_spec(&doc, Some(&world())).unwrap();
    assert_eq!(loaded.spec, two_stage());
}

#[test]
fn invalid_documents_report_every_problem() {
    let bad = r#"{"stages": [
        {"terms": [{"kind": "orientation_error", "label": "ghost", "reference": 0.0, "weight": -1.0}],
         "transition": {"all": []}}
    ]}"#;
    let err = load_spec(bad, Some(&world())).unwrap_err();
    let d = err.diagnostics();
    assert!(d.iter().any(|m| m.contains("ghost")), "{d:?}");
    assert!(d.iter().any(|m| m.contains("weight")), "{d:?}");
    assert!(d.iter().any(|m| m.contains("last stage")), "{d:?}");
    assert!(load_spec("{not json", None).is_err());
}

#[test]
fn digest_is_stable_and_content_sensitive() {
    let a = two_stage();
    assert_eq!(spec_digest(&a), spec_digest(&a.clone()));
    let mut b = a.clone();
    b.stages[1].terms[0].weight = 1.5;
    assert_ne!(spec_digest(&a), spec_digest(&b));
}

#[test]
fn stage_tracker_latches_forward() {
    let w = world();
    let model = PhysicsModel::from_belief(&w);
    let spec = CompiledSpec::compile(&two_stage(), &model).unwrap();
    let cfg = SimConfig::default();
    let far = SimState::new(&w, [-0.5, 0.3], &cfg);
    let near = SimState::new(&w, [-0.07, 0.05], &cfg);
    let mut t = StageTracker::new();
    t.update(&spec, &far);
    assert_eq!(t.stage, 0);
    t.update(&spec, &near);
    assert_eq!(t.stage, 1);
    t.update(&spec, &far);
    assert_eq!(t.stage, 1);
    // finishing a stage drops its step penalty
    assert!(spec.running(1, &near, [0.0, 0.0]) < spec.running(0, &near, [0.0, 0.0]));
}

#[test]
fn unknown_labels_fail_compilation() {
    let spec = CostSpec::single(vec![CostTerm::new(1.0, TermKind::RotationDrift { label: "ghost".into(), reference: 0.0 })]);
    assert!(CompiledSpec::compile(&spec, &PhysicsModel::from_belief(&world())).is_err());
}

proptest! {
    #[test]
    fn costs_scale_linearly_with_weights(scale in 0.01f64..100.0, fx in -1.0f64..1.0, fz in 0.0f64..1.0,
                                         ux in -0.05f64..0.05, uz in -0.05f64..0.05) {
        let w = world();
        let model = PhysicsModel::from_belief(&w);
        let state = SimState::new(&w, [fx, fz], &SimConfig::default());
        let base = two_stage();
        let mut scaled = base.clone();
        for s in &mut scaled.stages {
            s.terms.iter_mut().for_each(|t| t.weight *= scale);
        }
        let a = CompiledSpec::compile(&base, &model).unwrap();
        let b = CompiledSpec::compile(&scaled, &model).unwrap();
        for stage in 0..2 {
            let ca = a.running(stage, &state, [ux, uz]);
            let cb = b.running(stage, &state, [ux, uz]);
            prop_assert!((cb - scale * ca).abs() <= 1e-9 * (1.0 + cb.abs()));
        }
    }
}
