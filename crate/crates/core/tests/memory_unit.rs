use std::collections::BTreeMap;

use coral::cost::{CostSpec, CostTerm, TermKind};
use coral::memory::{similarity, theta_distance, token_overlap, MemoryEntry, MemoryStore, Outcome, Params, Theta};

fn theta(mass: f64, friction: f64) -> Theta {
    [("board".to_string(), Params { mass, friction })].into_iter().collect()
}

fn entry(text: &str, th: Theta, steps: u64) -> MemoryEntry {
    MemoryEntry {
        id: 0,
        task_text: text.into(),
        theta: th,
        spec: CostSpec::single(vec![CostTerm::new(1.0, TermKind::ControlEffort)]),
        regions: BTreeMap::new(),
        outcome: Outcome { steps, path_length: 0.5 },
        created_at: 0,
    }
}

#[test]
fn similarity_components() {
    assert_eq!(token_overlap("Push the board", "push THE board"), 1.0);
    assert_eq!(token_overlap("a b", "c d"), 0.0);
    assert_eq!(theta_distance(&theta(0.3, 0.5), &theta(0.3, 0.5)), 0.0);
    assert!(theta_distance(&theta(0.3, 0.5), &theta(3.0, 0.5)) > 0.0);
    let e = entry("push the board", theta(0.3, 0.5), 10);
    assert!((similarity("push the board", &theta(0.3, 0.5), &e) - 1.0).abs() < 1e-12);
}

#[test]
fn store_persists_and_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mem.jsonl");
    let mut store = MemoryStore::open(&path).unwrap();
    assert!(store.is_empty());
    let a = store.store(entry("push the board", theta(0.3, 0.5), 100)).unwrap();
    let b = store.store(entry("flip the box", theta(0.3, 0.5), 50)).unwrap();
    assert_ne!(a, b);
    let reopened = MemoryStore::open(&path).unwrap();
    assert_eq!(reopened.len(), 2);
    assert_eq!(reopened.get(b).unwrap().task_text, "flip the box");
}

#[test]
fn corrupt_lines_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mem.jsonl");
    let good = serde_json::to_string(&entry("push the board", theta(0.3, 0.5), 1)).unwrap();
    std::fs::write(&path, format!("{{ not json\n{good}\n\n")).unwrap();
    let store = MemoryStore::open(&path).unwrap();
    assert_eq!(store.len(), 1);
}

#[test]
fn retrieval_respects_threshold_and_prefers_closest() {
    let mut store = MemoryStore::in_memory();
    store.store(entry("push the board off the edge", theta(2.0, 0.9), 10)).unwrap();
    let near = store.store(entry("push the board off the edge", theta(0.3, 0.5), 10)).unwrap();
    let (hit, s) = store.retrieve("push the board off the edge", &theta(0.3, 0.5), 0.8).unwrap();
    assert_eq!(hit.id, near);
    assert!(s > 0.99);
    assert!(store.retrieve("stack three cups", &theta(0.3, 0.5), 0.8).is_none());
}

#[test]
fn invalid_entries_are_refused() {
    let mut store = MemoryStore::in_memory();
    assert!(store.store(entry("x", theta(-1.0, 0.5), 1)).is_err());
    let mut e = entry("x", theta(1.0, 0.5), 1);
    e.spec.stages.clear();
    assert!(store.store(e).is_err());
}
