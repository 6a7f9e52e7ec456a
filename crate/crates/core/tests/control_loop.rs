use proptest::prelude::*;

use coral::control_loop::{reactive_augment, run_task, EpisodeLog, LoopConfig, MemoryRecord, TraceRecord};
use coral::memory::MemoryStore;
use coral::mppi::MppiParams;
use coral::strategist::HeuristicStrategist;
use coral::tasks::{Failure, Scene, TaskId};

fn run(task: TaskId, cfg: &LoopConfig, seed: u64, memory: Option<&mut MemoryStore>) -> (coral::control_loop::TaskReport, EpisodeLog) {
    run_task(&Scene::builtin(task), &mut HeuristicStrategist::new(), memory, cfg, &MppiParams::default(), seed).unwrap()
}

#[test]
fn pick_box_succeeds() {
    let (report, log) = run(TaskId::PickBox, &LoopConfig::default(), 42, None);
    assert!(report.success, "{report:?}");
    assert_eq!(report.failure, None);
    assert!(log.attempts().last().unwrap().success);
    assert_eq!(report.steps, log.attempts().map(|a| a.steps).sum::<u64>());
}

#[test]
fn zero_budget_fails_immediately() {
    let cfg = LoopConfig { attempt_step_budget: 0, n_retry: 1, max_refinements: 0, ..LoopConfig::default() };
    let (report, log) = run(TaskId::FlipBox, &cfg, 1, None);
    assert!(!report.success);
    assert_eq!(report.failure, Some(Failure::Budget { stage: 0 }));
    assert_eq!(report.steps, 0);
    assert_eq!(log.steps().count(), 0);
}

#[test]
fn invalid_config_is_an_error() {
    let cfg = LoopConfig { replan_interval: 0, ..LoopConfig::default() };
    let r = run_task(&Scene::builtin(TaskId::FlipBox), &mut HeuristicStrategist::new(), None, &cfg, &MppiParams::default(), 1);
    assert!(r.is_err());
}

#[test]
fn trace_round_trips_through_jsonl() {
    let cfg = LoopConfig { attempt_step_budget: 100, n_retry: 1, max_refinements: 0, ..LoopConfig::default() };
    let (_, log) = run(TaskId::PushConstForce, &cfg, 3, None);
    let text = log.to_jsonl();
    assert_eq!(text.lines().count(), log.records.len());
    assert_eq!(EpisodeLog::from_jsonl(&text).unwrap(), log);
    assert!(matches!(log.records[0], TraceRecord::Header(_)));
    assert!(EpisodeLog::from_jsonl("{\"type\": \"nope\"}").is_err());
}

#[test]
fn successful_runs_are_remembered() {
    let mut store = MemoryStore::in_memory();
    let (first, log1) = run(TaskId::FlipWall, &LoopConfig::default(), 5, Some(&mut store));
    assert!(first.success);
    assert!(first.memory_stored.is_some());
    assert!(log1.records.iter().any(|r| matches!(r, TraceRecord::Memory(MemoryRecord::Miss))));
    let (second, log2) = run(TaskId::FlipWall, &LoopConfig::default(), 5, Some(&mut store));
    assert_eq!(second.memory_hit, first.memory_stored);
    assert!(log2.records.iter().any(|r| matches!(r, TraceRecord::Memory(MemoryRecord::Hit { .. }))));
}

proptest! {
    #[test]
    fn augmentation_is_identity_when_tracking_is_exact(ux in -0.03f64..0.03, uz in -0.03f64..0.03,
                                                     x in -1.0f64..1.0, z in -1.0f64..1.0, k in 0.0f64..2.0) {
        let nu = reactive_augment([ux, uz], [x, z], [x, z], [k, k], 0.05);
        prop_assert_eq!(nu, [ux, uz]);
    }

    #[test]
    fn augmentation_stays_bounded(ux in -0.1f64..0.1, uz in -0.1f64..0.1, dx in -1.0f64..1.0, dz in -1.0f64..1.0) {
        let nu = reactive_augment([ux, uz], [dx, dz], [0.0, 0.0], [0.3, 0.3], 0.05);
        prop_assert!(nu[0].abs() <= 0.05 && nu[1].abs() <= 0.05);
    }
}
