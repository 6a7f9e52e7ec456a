use std::path::Path;
use std::process::Command;

use coral::control_loop::{EpisodeLog, TraceRecord};
use coral::harness::{cmd_run, replay, RunConfig, RunSummary};
use coral::tasks::TaskId;

fn coral() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coral"))
}

fn run_cli(dir: &Path, seed: &str) -> std::process::Output {
    coral()
        .args(["run", "--task", "flip_wall", "--seed", seed, "--strategist", "heuristic", "--log-dir"])
        .arg(dir)
        .output()
        .unwrap()
}

#[test]
fn run_writes_report_trace_and_series() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = run_cli(&a, "42");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trace.jsonl", "report.json", "forces.csv", "params.csv"] {
        assert!(a.join(f).exists(), "missing {f}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    assert!(report["outcome"] == "success" || report["outcome"] == "failure");
    assert!(std::fs::read_to_string(a.join("params.csv")).unwrap().starts_with("cycle,label,believed_mass_kg"));

    assert!(run_cli(&b, "42").status.success());
    assert_eq!(std::fs::read(a.join("trace.jsonl")).unwrap(), std::fs::read(b.join("trace.jsonl")).unwrap());

    let ok = coral().arg("replay").arg(a.join("trace.jsonl")).output().unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
}

#[test]
fn missing_scene_exits_with_two() {
    let out = coral()
        .args(["run", "--task", "flip_box", "--scene", "/no/such/scene.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/scene.json"));
}

#[test]
fn bad_config_is_a_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"loop": {"n_retry": 0}}"#).unwrap();
    let out = coral().args(["run", "--task", "flip_box", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = coral().args(["run", "--task", "no_such_task"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn empty_suite_is_an_empty_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = coral().arg("bench").arg("--log-dir").arg(tmp.path()).output().unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().count(), 1);
    assert_eq!(std::fs::read_to_string(tmp.path().join("bench.csv")).unwrap().lines().count(), 1);
}

#[test]
fn corrupted_cost_is_reported_at_its_step() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::new(TaskId::FlipBox, 7, tmp.path());
    cfg.loop_config.attempt_step_budget = 200;
    cfg.loop_config.max_refinements = 0;
    cfg.loop_config.n_retry = 1;
    cmd_run(&cfg).unwrap();
    let text = std::fs::read_to_string(tmp.path().join("trace.jsonl")).unwrap();
    let mut log = EpisodeLog::from_jsonl(&text).unwrap();
    assert!(replay(&log, 1e-9).unwrap().matches());

    let target = 5;
    let mut seen = 0;
    for r in &mut log.records {
        if let TraceRecord::Step(s) = r {
            if seen == target {
                s.cost += 1e-3;
            }
            seen += 1;
        }
    }
    let report = replay(&log, 1e-9).unwrap();
    let d = report.divergence.expect("divergence");
    assert_eq!((d.attempt, d.k, d.what.as_str()), (0, target, "cost"));

    let bad = tmp.path().join("bad.jsonl");
    std::fs::write(&bad, log.to_jsonl()).unwrap();
    let out = coral().arg("replay").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains(&format!("step {target}")));
}

#[test]
fn memory_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let mem = tmp.path().join("mem.jsonl");
    let out = coral().args(["memory", "--memory"]).arg(&mem).arg("list").output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let mut cfg = RunConfig::new(TaskId::FlipWall, 3, tmp.path().join("run"));
    cfg.memory = Some(mem.clone());
    let report = cmd_run(&cfg).unwrap();
    assert!(report.success);
    let out = coral().args(["memory", "--memory"]).arg(&mem).arg("list").output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 1);
    let out = coral().args(["memory", "--memory"]).arg(&mem).args(["show", "1"]).output().unwrap();
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"task_text\""));
    let summary: RunSummary =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("run/report.json")).unwrap()).unwrap();
    assert_eq!(summary.outcome, "success");
}
