//! Run configuration and the `run`, `bench`, `replay`, and `memory`
//! commands behind the `coral` binary. Every function here returns data;
//! printing and exit codes are left to the caller.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control_loop::{force_series, run_task, EpisodeLog, LoopConfig, TaskReport, TraceRecord};
use crate::cost::{spec_digest, CompiledSpec};
use crate::memory::{MemoryEntry, MemoryStore};
use crate::mppi::MppiParams;
use crate::sim::{mix_seed, step_in_place, PhysicsModel, SimState};
use crate::strategist::{EndpointConfig, HeuristicStrategist, RemoteStrategist, Strategist};
use crate::tasks::{Scene, TaskId, FORCE_BAND};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("{0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::MissingFile(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(io_err(path))
}

fn read_file(path: &Path) -> Result<String, HarnessError> {
    if !path.exists() {
        return Err(HarnessError::MissingFile(path.to_path_buf()));
    }
    std::fs::read_to_string(path).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategistKind {
    #[default]
    Heuristic,
    Remote,
}

impl std::str::FromStr for StrategistKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "heuristic" => Ok(Self::Heuristic),
            "remote" => Ok(Self::Remote),
            other => Err(format!("unknown strategist `{other}` (expected heuristic or remote)")),
        }
    }
}

/// Planner and loop overrides read from a JSON config file. Missing
/// fields keep their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Overrides {
    pub mppi: MppiParams,
    #[serde(rename = "loop")]
    pub loop_config: LoopConfig,
}

impl Overrides {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = read_file(path)?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: TaskId,
    /// Scene file; the shipped scene for `task` when absent.
    pub scene: Option<PathBuf>,
    pub seed: u64,
    pub strategist: StrategistKind,
    pub mppi: MppiParams,
    pub loop_config: LoopConfig,
    pub memory: Option<PathBuf>,
    pub log_dir: PathBuf,
}

impl RunConfig {
    pub fn new(task: TaskId, seed: u64, log_dir: impl Into<PathBuf>) -> Self {
        Self {
            task,
            scene: None,
            seed,
            strategist: StrategistKind::Heuristic,
            mppi: MppiParams::default(),
            loop_config: LoopConfig::default(),
            memory: None,
            log_dir: log_dir.into(),
        }
    }
}

/// Load the scene for a task, checking that a scene file matches it.
pub fn load_scene(task: TaskId, path: Option<&Path>) -> Result<Scene, HarnessError> {
    let Some(path) = path else {
        return Ok(Scene::builtin(task));
    };
    let text = read_file(path)?;
    let scene = Scene::from_json(&text, &path.display().to_string()).map_err(|e| HarnessError::Config(e.to_string()))?;
    if scene.task != task {
        return Err(HarnessError::Config(format!(
            "scene {} is for task {}, not {task}",
            path.display(),
            scene.task
        )));
    }
    Ok(scene)
}

pub fn make_strategist(kind: StrategistKind) -> Result<Box<dyn Strategist>, HarnessError> {
    match kind {
        StrategistKind::Heuristic => Ok(Box::new(HeuristicStrategist::new())),
        StrategistKind::Remote => {
            let cfg = EndpointConfig::from_env().ok_or_else(|| {
                HarnessError::Config(format!(
                    "remote strategist needs {} to be set",
                    crate::strategist::ENV_BASE_URL
                ))
            })?;
            Ok(Box::new(RemoteStrategist::new(cfg)))
        }
    }
}

/// `report.json`: the task report plus a one-word outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub outcome: String,
    #[serde(flatten)]
    pub report: TaskReport,
}

impl RunSummary {
    pub fn new(report: TaskReport) -> Self {
        let outcome = if report.success { "success" } else { "failure" };
        Self {
            outcome: outcome.to_string(),
            report,
        }
    }
}

/// Force on the task's object per control step, with band bounds.
pub fn forces_csv(log: &EpisodeLog, label: &str) -> String {
    let mut out = String::from("attempt,time,force_n,band_lo_n,band_hi_n\n");
    for (attempt, time, force) in force_series(log, label) {
        let _ = writeln!(out, "{attempt},{time:.4},{force:.6},{},{}", FORCE_BAND.0, FORCE_BAND.1);
    }
    out
}

/// Believed against true parameters per refinement cycle.
pub fn params_csv(report: &TaskReport) -> String {
    let mut out = String::from("cycle,label,believed_mass_kg,true_mass_kg,believed_friction,true_friction\n");
    for (cycle, theta) in report.theta_history.iter().enumerate() {
        for (label, p) in theta {
            let Some(t) = report.true_theta.get(label) else { continue };
            let _ = writeln!(
                out,
                "{cycle},{label},{:.6},{:.6},{:.6},{:.6}",
                p.mass, t.mass, p.friction, t.friction
            );
        }
    }
    out
}

/// Execute one task run and write `trace.jsonl`, `report.json`,
/// `forces.csv`, and `params.csv` into the log directory. A failed task
/// is a normal result.
pub fn cmd_run(cfg: &RunConfig) -> Result<TaskReport, HarnessError> {
    let scene = load_scene(cfg.task, cfg.scene.as_deref())?;
    let mut strategist = make_strategist(cfg.strategist)?;
    let mut store = match &cfg.memory {
        Some(p) => Some(MemoryStore::open(p).map_err(|e| HarnessError::Config(e.to_string()))?),
        None => None,
    };
    let (report, log) = run_task(
        &scene,
        strategist.as_mut(),
        store.as_mut(),
        &cfg.loop_config,
        &cfg.mppi,
        cfg.seed,
    )
    .map_err(|e| HarnessError::Config(e.to_string()))?;

    let dir = &cfg.log_dir;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_file(&dir.join("trace.jsonl"), &log.to_jsonl())?;
    let summary = serde_json::to_string_pretty(&RunSummary::new(report.clone())).expect("reports serialize");
    write_file(&dir.join("report.json"), &summary)?;
    write_file(&dir.join("forces.csv"), &forces_csv(&log, scene.primary_label()))?;
    write_file(&dir.join("params.csv"), &params_csv(&report))?;
    Ok(report)
}

/// Component removed by a benchmark configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoMemory,
    NoRefinement,
    NoContactStrategy,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::NoMemory,
        Variant::NoRefinement,
        Variant::NoContactStrategy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoMemory => "no_memory",
            Variant::NoRefinement => "no_refinement",
            Variant::NoContactStrategy => "no_contact_strategy",
        }
    }

    pub fn uses_memory(self) -> bool {
        self != Variant::NoMemory
    }

    /// Loop settings for this variant derived from the full ones.
    pub fn apply(self, base: &LoopConfig) -> LoopConfig {
        let mut cfg = base.clone();
        match self {
            Variant::NoRefinement => cfg.max_refinements = 0,
            Variant::NoContactStrategy => cfg.use_contact_strategy = false,
            Variant::Full | Variant::NoMemory => {}
        }
        cfg
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant `{s}`"))
    }
}

/// Ranges for per-trial scene randomization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Randomization {
    pub mass: [f64; 2],
    pub friction: [f64; 2],
    /// Half-width (m) of the uniform shift of the task object along x.
    pub pose_jitter: f64,
}

impl Default for Randomization {
    fn default() -> Self {
        Self {
            mass: [0.4, 0.8],
            friction: [0.3, 0.6],
            pose_jitter: 0.01,
        }
    }
}

/// Scene with the task object's true mass, friction, and x position drawn
/// from `r`. The draw depends only on `seed`.
pub fn randomize_scene(scene: &Scene, r: &Randomization, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xbe7c));
    let mut out = scene.clone();
    let label = scene.primary_label().to_string();
    if let Some(obj) = out.world.objects.get_mut(&label) {
        obj.mass = rng.random_range(r.mass[0]..=r.mass[1]);
        obj.friction = rng.random_range(r.friction[0]..=r.friction[1]);
        if r.pose_jitter > 0.0 {
            obj.pose.x += rng.random_range(-r.pose_jitter..=r.pose_jitter);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub task: TaskId,
    pub seeds: usize,
    #[serde(default)]
    pub scene: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub entries: Vec<SuiteEntry>,
    pub variants: Vec<Variant>,
    pub first_seed: u64,
    /// `None` runs the scenes as shipped.
    pub randomization: Option<Randomization>,
    pub mppi: MppiParams,
    pub loop_config: LoopConfig,
    /// Per-trial traces go under this directory when set.
    pub trace_dir: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
            variants: Variant::ALL.to_vec(),
            first_seed: 1,
            randomization: Some(Randomization::default()),
            mppi: MppiParams::default(),
            loop_config: LoopConfig::default(),
            trace_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub task: TaskId,
    pub variant: Variant,
    pub seed: u64,
    pub success: bool,
    pub attempts: usize,
    pub refinements: usize,
    pub steps: u64,
    pub path_length: f64,
    pub memory_hit: bool,
    /// Set when the run could not be executed at all.
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchAggregate {
    pub task: TaskId,
    pub variant: Variant,
    pub trials: usize,
    pub successes: usize,
    pub median_steps: f64,
    pub median_path_length: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub aggregates: Vec<BenchAggregate>,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn aggregate(rows: &[BenchRow]) -> Vec<BenchAggregate> {
    let mut groups: BTreeMap<(TaskId, Variant), Vec<&BenchRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.task, r.variant)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((task, variant), rs)| {
            let mut steps: Vec<f64> = rs.iter().map(|r| r.steps as f64).collect();
            let mut path: Vec<f64> = rs.iter().map(|r| r.path_length).collect();
            BenchAggregate {
                task,
                variant,
                trials: rs.len(),
                successes: rs.iter().filter(|r| r.success).count(),
                median_steps: median(&mut steps),
                median_path_length: median(&mut path),
            }
        })
        .collect()
}

/// Run every suite entry under every variant. Trials are paired: all
/// variants see the same randomized scene for a given seed. Memory
/// persists across the seeds of one entry for variants that use it.
pub fn cmd_bench(cfg: &BenchConfig) -> Result<BenchReport, HarnessError> {
    let mut rows = Vec::new();
    for entry in &cfg.entries {
        let base = load_scene(entry.task, entry.scene.as_deref())?;
        for &variant in &cfg.variants {
            let loop_cfg = variant.apply(&cfg.loop_config);
            let mut store = MemoryStore::in_memory();
            for i in 0..entry.seeds {
                let seed = cfg.first_seed + i as u64;
                let scene = match &cfg.randomization {
                    Some(r) => randomize_scene(&base, r, seed),
                    None => base.clone(),
                };
                let mut strategist = HeuristicStrategist::new();
                let memory = variant.uses_memory().then_some(&mut store);
                let row = match run_task(&scene, &mut strategist, memory, &loop_cfg, &cfg.mppi, seed) {
                    Ok((report, log)) => {
                        if let Some(dir) = &cfg.trace_dir {
                            let d = dir.join(entry.task.as_str()).join(variant.as_str()).join(format!("seed_{seed}"));
                            std::fs::create_dir_all(&d).map_err(io_err(&d))?;
                            write_file(&d.join("trace.jsonl"), &log.to_jsonl())?;
                        }
                        BenchRow {
                            task: entry.task,
                            variant,
                            seed,
                            success: report.success,
                            attempts: report.attempts,
                            refinements: report.refinements,
                            steps: report.steps,
                            path_length: report.path_length,
                            memory_hit: report.memory_hit.is_some(),
                            error: None,
                        }
                    }
                    Err(e) => BenchRow {
                        task: entry.task,
                        variant,
                        seed,
                        success: false,
                        attempts: 0,
                        refinements: 0,
                        steps: 0,
                        path_length: 0.0,
                        memory_hit: false,
                        error: Some(e.to_string()),
                    },
                };
                log::info!(
                    "{} {} seed {}: success={} steps={} path={:.3}",
                    entry.task,
                    variant.as_str(),
                    seed,
                    row.success,
                    row.steps,
                    row.path_length
                );
                rows.push(row);
            }
        }
    }
    let aggregates = aggregate(&rows);
    Ok(BenchReport { rows, aggregates })
}

impl BenchReport {
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("task,variant,seed,success,attempts,refinements,steps,path_length_m,memory_hit\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{:.6},{}",
                r.task,
                r.variant.as_str(),
                r.seed,
                r.success,
                r.attempts,
                r.refinements,
                r.steps,
                r.path_length,
                r.memory_hit
            );
        }
        out
    }

    /// Aligned text table of the aggregates.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<18} {:<20} {:>9} {:>12} {:>12}\n",
            "task", "variant", "success", "med_steps", "med_path_m"
        );
        for a in &self.aggregates {
            let _ = writeln!(
                out,
                "{:<18} {:<20} {:>9} {:>12.1} {:>12.3}",
                a.task.as_str(),
                a.variant.as_str(),
                format!("{}/{}", a.successes, a.trials),
                a.median_steps,
                a.median_path_length
            );
        }
        out
    }
}

/// First step where the replay disagrees with the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayDivergence {
    pub attempt: usize,
    pub k: usize,
    pub what: String,
    pub logged: f64,
    pub replayed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub steps_checked: usize,
    pub max_cost_error: f64,
    pub max_state_error: f64,
    pub divergence: Option<ReplayDivergence>,
}

impl ReplayReport {
    pub fn matches(&self) -> bool {
        self.divergence.is_none()
    }
}

fn state_error(a: &SimState, b: &SimState) -> f64 {
    let mut err = (a.finger.pos[0] - b.finger.pos[0])
        .abs()
        .max((a.finger.pos[1] - b.finger.pos[1]).abs());
    if a.bodies.len() != b.bodies.len() {
        return f64::INFINITY;
    }
    for (x, y) in a.bodies.iter().zip(&b.bodies) {
        let d = [
            x.pose.x - y.pose.x,
            x.pose.z - y.pose.z,
            x.pose.rotation - y.pose.rotation,
            x.vel[0] - y.vel[0],
            x.vel[1] - y.vel[1],
            x.omega - y.omega,
        ];
        err = d.iter().fold(err, |m, v| m.max(v.abs()));
    }
    err
}

/// Recompute every logged step. The execution world is rebuilt from the
/// header's scene, driven with the logged commands, and each step's cost is
/// evaluated under the spec whose digest the step names. Both the state
/// and the cost must agree within `tolerance`.
pub fn replay(log: &EpisodeLog, tolerance: f64) -> Result<ReplayReport, HarnessError> {
    let header = log
        .records
        .iter()
        .find_map(|r| match r {
            TraceRecord::Header(h) => Some(h),
            _ => None,
        })
        .ok_or_else(|| HarnessError::Config("trace has no header".into()))?;
    let scene = &header.scene;
    let truth = PhysicsModel::from_belief(&scene.world);
    let replan = header.loop_config.replan_interval;

    let mut specs: BTreeMap<String, CompiledSpec> = BTreeMap::new();
    let mut report = ReplayReport {
        steps_checked: 0,
        max_cost_error: 0.0,
        max_state_error: 0.0,
        divergence: None,
    };
    let mut world: Option<(usize, SimState)> = None;

    for rec in &log.records {
        match rec {
            TraceRecord::Plan(p) => {
                let digest = spec_digest(&p.spec);
                if digest != p.digest {
                    return Err(HarnessError::Config(format!(
                        "plan for attempt {} does not match its digest",
                        p.attempt
                    )));
                }
                if let std::collections::btree_map::Entry::Vacant(slot) = specs.entry(digest) {
                    slot.insert(CompiledSpec::compile(&p.spec, &truth).map_err(HarnessError::Config)?);
                }
            }
            TraceRecord::Step(s) => {
                let state = match &mut world {
                    Some((a, st)) if *a == s.attempt => st,
                    _ => {
                        world = Some((s.attempt, scene.initial_state()));
                        &mut world.as_mut().expect("just set").1
                    }
                };
                for _ in 0..replan {
                    step_in_place(state, s.nu, &truth, &scene.sim);
                    if state.fault {
                        break;
                    }
                }
                let spec = specs
                    .get(&s.digest)
                    .ok_or_else(|| HarnessError::Config(format!("no plan with digest {}", s.digest)))?;
                let cost = spec.running(s.stage, state, s.nu);
                let cost_err = (cost - s.cost).abs();
                let state_err = state_error(state, &s.state);
                report.steps_checked += 1;
                report.max_cost_error = report.max_cost_error.max(cost_err);
                report.max_state_error = report.max_state_error.max(state_err);
                if report.divergence.is_none() {
                    let scale = 1.0f64.max(s.cost.abs());
                    if !(cost_err <= tolerance * scale) {
                        report.divergence = Some(ReplayDivergence {
                            attempt: s.attempt,
                            k: s.k,
                            what: "cost".into(),
                            logged: s.cost,
                            replayed: cost,
                        });
                    } else if !(state_err <= tolerance) {
                        report.divergence = Some(ReplayDivergence {
                            attempt: s.attempt,
                            k: s.k,
                            what: "state".into(),
                            logged: 0.0,
                            replayed: state_err,
                        });
                    }
                }
            }
            _ => {}
        }
    }
    Ok(report)
}

pub fn cmd_replay(path: &Path, tolerance: f64) -> Result<ReplayReport, HarnessError> {
    let text = read_file(path)?;
    let log = EpisodeLog::from_jsonl(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    replay(&log, tolerance)
}

/// One line per stored entry.
pub fn memory_listing(store: &MemoryStore) -> String {
    let mut out = String::new();
    for e in store.entries() {
        let _ = writeln!(
            out,
            "{:>4}  {:<44}  steps={:<6} digest={}",
            e.id,
            e.task_text,
            e.outcome.steps,
            &spec_digest(&e.spec)[..12]
        );
    }
    out
}

pub fn memory_entry_json(store: &MemoryStore, id: u64) -> Result<String, HarnessError> {
    let e: &MemoryEntry = store
        .get(id)
        .ok_or_else(|| HarnessError::Config(format!("no memory entry with id {id}")))?;
    Ok(serde_json::to_string_pretty(e).expect("entries serialize"))
}

pub fn open_memory(path: &Path) -> Result<MemoryStore, HarnessError> {
    if !path.exists() {
        return Err(HarnessError::MissingFile(path.to_path_buf()));
    }
    MemoryStore::open(path).map_err(|e| HarnessError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }

    #[test]
    fn randomization_stays_in_range_and_is_seeded() {
        let scene = Scene::builtin(TaskId::PushPickBoard);
        let r = Randomization::default();
        let a = randomize_scene(&scene, &r, 7);
        assert_eq!(a, randomize_scene(&scene, &r, 7));
        let o = &a.world.objects["board"];
        assert!((0.4..=0.8).contains(&o.mass));
        assert!((0.3..=0.6).contains(&o.friction));
        assert!((o.pose.x - scene.world.objects["board"].pose.x).abs() <= 0.01);
    }

    #[test]
    fn empty_suite_gives_empty_table() {
        let report = cmd_bench(&BenchConfig::default()).unwrap();
        assert!(report.rows.is_empty() && report.aggregates.is_empty());
        assert_eq!(report.table().lines().count(), 1);
    }

    #[test]
    fn missing_scene_exits_with_two() {
        let err = load_scene(TaskId::FlipBox, Some(Path::new("/nonexistent/scene.json"))).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("/nonexistent/scene.json"));
    }

    #[test]
    fn variant_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!(!Variant::NoMemory.uses_memory());
        assert_eq!(Variant::NoRefinement.apply(&LoopConfig::default()).max_refinements, 0);
    }
}
