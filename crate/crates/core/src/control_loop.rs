//! The nested control loops: an inner plan-act-observe cycle on the
//! execution world and an outer cycle that refines parameters or the plan
//! after repeated failure.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact_strategy::{attach_attractor, regions_from_document, ContactStrategy, RegionDocument};
use crate::cost::{spec_digest, CompiledSpec, CostSpec, StageTracker};
use crate::memory::{now, theta_of, MemoryEntry, MemoryStore, Outcome, Theta};
use crate::mppi::{MppiParams, Planner, RolloutContext};
use crate::sim::{clip_control, mix_seed, observe, step_in_place, ContactPair, PhysicsModel, SimState};
use crate::strategist::{
    validate_response, IdSample, Phase, RefinementKind, StepSummary, Strategist, StrategistRequest,
};
use crate::tasks::{Failure, Scene, TaskId, TaskMonitor};
use crate::world_model::{apply_refinement, WorldBelief};

/// Minimum speed (m/s) for a sample to count as sliding.
const SLIDING_SPEED: f64 = 2e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    /// Consecutive failed attempts before the outer loop refines.
    pub n_retry: usize,
    /// Outer refinement cycles before giving up.
    pub max_refinements: usize,
    /// Simulation steps per attempt.
    pub attempt_step_budget: u64,
    /// Simulation steps between plans.
    pub replan_interval: usize,
    /// Diagonal feedback gain of the reactive correction.
    pub k_f: [f64; 2],
    /// Standard deviation of pose observations `[x, z, rotation]`.
    pub observation_noise: [f64; 3],
    pub use_contact_strategy: bool,
    pub attractor_weight: f64,
    pub memory_threshold: f64,
    /// Steps of history passed to the strategist.
    pub history_steps: usize,
    /// Relative parameter change that makes identification win over plan
    /// refinement.
    pub param_change_threshold: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            n_retry: 3,
            max_refinements: 5,
            attempt_step_budget: 2000,
            replan_interval: 10,
            k_f: [0.3, 0.3],
            observation_noise: [0.0; 3],
            use_contact_strategy: true,
            attractor_weight: crate::contact_strategy::DEFAULT_ATTRACTOR_WEIGHT,
            memory_threshold: crate::memory::DEFAULT_THRESHOLD,
            history_steps: crate::strategist::HISTORY_STEPS,
            param_change_threshold: 0.1,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), LoopError> {
        let mut problems = Vec::new();
        if self.n_retry < 1 {
            problems.push("n_retry must be >= 1".to_string());
        }
        if self.replan_interval < 1 {
            problems.push("replan_interval must be >= 1".to_string());
        }
        if self.k_f.iter().any(|k| !(*k >= 0.0)) {
            problems.push("k_f entries must be >= 0".to_string());
        }
        if self.observation_noise.iter().any(|s| !(*s >= 0.0)) {
            problems.push("observation_noise must be >= 0".to_string());
        }
        if !(self.attractor_weight >= 0.0) {
            problems.push("attractor_weight must be >= 0".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(LoopError::Config(problems.join("; ")))
        }
    }
}

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("strategist failed to formulate a plan: {0}")]
    Formulate(String),
}

/// `u + K_f (x_des - x_measured)`, clipped to the control box.
pub fn reactive_augment(u: [f64; 2], x_des: [f64; 2], x_measured: [f64; 2], k_f: [f64; 2], u_max: f64) -> [f64; 2] {
    clip_control(
        [
            u[0] + k_f[0] * (x_des[0] - x_measured[0]),
            u[1] + k_f[1] * (x_des[1] - x_measured[1]),
        ],
        u_max,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub task: TaskId,
    pub seed: u64,
    pub strategist: String,
    pub scene: Scene,
    pub mppi: MppiParams,
    pub loop_config: LoopConfig,
}

/// The plan in force for one attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub attempt: usize,
    /// Digest of `spec`, which includes any contact attractors.
    pub digest: String,
    pub spec: CostSpec,
    pub base_digest: String,
    pub strategies: Vec<ContactStrategy>,
    pub theta: Theta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub attempt: usize,
    /// Control step index within the attempt.
    pub k: usize,
    pub time: f64,
    pub stage: usize,
    pub u: [f64; 2],
    pub nu: [f64; 2],
    /// Running cost of the execution state after the step under `nu`.
    pub cost: f64,
    pub digest: String,
    pub lambda: f64,
    pub ess: f64,
    pub state: SimState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt: usize,
    pub success: bool,
    #[serde(default)]
    pub failure: Option<Failure>,
    pub steps: u64,
    pub path_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementRecord {
    pub cycle: usize,
    pub after_attempt: usize,
    pub kind: RefinementKind,
    pub old_digest: String,
    pub new_digest: String,
    pub old_theta: Theta,
    pub new_theta: Theta,
    pub explanation: String,
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum MemoryRecord {
    Hit { id: u64, similarity: f64 },
    Miss,
    Stored { id: u64 },
    StoreFailed { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceRecord {
    Header(Header),
    Plan(PlanRecord),
    Step(StepRecord),
    Attempt(AttemptRecord),
    Refinement(RefinementRecord),
    Memory(MemoryRecord),
}

/// Everything that happened in one run, in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub records: Vec<TraceRecord>,
}

impl EpisodeLog {
    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Step(s) => Some(s),
            _ => None,
        })
    }

    pub fn refinements(&self) -> impl Iterator<Item = &RefinementRecord> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Refinement(s) => Some(s),
            _ => None,
        })
    }

    pub fn attempts(&self) -> impl Iterator<Item = &AttemptRecord> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Attempt(s) => Some(s),
            _ => None,
        })
    }

    /// One JSON document per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, String> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", n + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { records })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: TaskId,
    pub seed: u64,
    pub strategist: String,
    pub success: bool,
    #[serde(default)]
    pub failure: Option<Failure>,
    pub attempts: usize,
    pub refinements: usize,
    /// Simulation steps over all attempts.
    pub steps: u64,
    /// Finger path length over all attempts (m).
    pub path_length: f64,
    pub initial_theta: Theta,
    pub final_theta: Theta,
    pub true_theta: Theta,
    /// Believed parameters after each refinement cycle, starting at cycle 0.
    pub theta_history: Vec<Theta>,
    #[serde(default)]
    pub memory_hit: Option<u64>,
    #[serde(default)]
    pub memory_stored: Option<u64>,
    pub spec_digest: String,
    #[serde(default)]
    pub degradations: Vec<String>,
}

struct AttemptResult {
    outcome: Result<(), Failure>,
    steps: u64,
    path_length: f64,
    stage_reached: usize,
    tail: Vec<StepSummary>,
    samples: Vec<IdSample>,
}

/// Attractor-augmented spec and the strategies behind it.
fn plan_for_attempt(base: &CostSpec, strategies: &[ContactStrategy], finger_radius: f64) -> CostSpec {
    strategies
        .iter()
        .fold(base.clone(), |spec, s| attach_attractor(&spec, s, finger_radius))
}

fn build_strategies(
    regions: &RegionDocument,
    belief: &WorldBelief,
    finger: [f64; 2],
    cfg: &LoopConfig,
    seed: u64,
) -> Vec<ContactStrategy> {
    if !cfg.use_contact_strategy {
        return Vec::new();
    }
    let parsed = match regions_from_document(regions, &belief.objects) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("ignoring contact regions: {e}");
            return Vec::new();
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5747));
    parsed
        .into_iter()
        .filter_map(|(label, regs)| {
            let obj = belief.get(&label)?;
            match ContactStrategy::build(obj, regs, finger, cfg.attractor_weight, &mut rng) {
                Ok(s) => Some(s),
                Err(e) => {
                    log::warn!("no contact strategy for `{label}`: {e}");
                    None
                }
            }
        })
        .collect()
}

/// Collect identification samples from one simulation step.
fn record_samples(before: &SimState, after: &SimState, dt: f64, out: &mut Vec<IdSample>) {
    for (i, (b0, b1)) in before.bodies.iter().zip(after.bodies.iter()).enumerate() {
        if b1.attached.is_some() || b1.pose.rotation.abs() > 0.05 || b1.omega.abs() > 0.5 {
            continue;
        }
        let (v0, v1) = (b0.vel[0], b1.vel[0]);
        if v0.abs() < SLIDING_SPEED || v1.abs() < SLIDING_SPEED || v0.signum() != v1.signum() {
            continue;
        }
        let mut grounded = false;
        let mut clean = true;
        for c in &after.contacts {
            match c.pair {
                ContactPair::Ground { body } if body == i => grounded = true,
                ContactPair::Finger { .. } | ContactPair::Ground { .. } => {}
                ContactPair::Bodies { a, b } if a != i && b != i => {}
                other if other.primary() != i => {}
                _ => clean = false,
            }
        }
        if grounded && clean {
            out.push(IdSample {
                object: i,
                force: b1.finger_force[0],
                accel: (v1 - v0) / dt,
                vel: v1,
            });
        }
    }
}

fn summary(state: &SimState, nu: [f64; 2], cost: f64, stage: usize, terms: Vec<f64>) -> StepSummary {
    StepSummary {
        time: state.time,
        poses: state
            .bodies
            .iter()
            .map(|b| (b.label.clone(), [b.pose.x, b.pose.z, b.pose.rotation]))
            .collect(),
        finger: state.finger.pos,
        action: nu,
        cost,
        stage,
        contact_forces: state
            .bodies
            .iter()
            .map(|b| (b.label.clone(), b.finger_force_magnitude()))
            .collect(),
        terms,
    }
}

struct Runner<'a> {
    scene: &'a Scene,
    truth: PhysicsModel,
    cfg: &'a LoopConfig,
    planner: Planner,
    seed: u64,
    log: EpisodeLog,
}

impl Runner<'_> {
    fn run_attempt(&mut self, attempt: usize, spec: &CostSpec, belief: &WorldBelief) -> Result<AttemptResult, LoopError> {
        let digest = spec_digest(spec);
        let plan_model = PhysicsModel::from_belief(belief);
        let eval_spec = CompiledSpec::compile(spec, &self.truth).map_err(LoopError::Config)?;
        let plan_spec = CompiledSpec::compile(spec, &plan_model).map_err(LoopError::Config)?;
        let sim = &self.scene.sim;
        let dt = sim.dt;
        let replan = self.cfg.replan_interval;

        self.planner.reset();
        self.planner.reseed(mix_seed(self.seed, attempt as u64 + 1));
        let obs_seed = mix_seed(self.seed ^ 0x0b5e, attempt as u64);

        let mut world = self.scene.initial_state();
        let mut tracker = StageTracker::new();
        let mut monitor = TaskMonitor::new(self.scene);
        let mut predicted: Option<[f64; 2]> = None;
        let mut samples = Vec::new();
        let mut tail: Vec<StepSummary> = Vec::new();
        let mut path = 0.0;
        let mut steps = 0u64;
        let mut stage_reached = 0;
        let mut outcome = None;

        let mut k = 0;
        while steps + replan as u64 <= self.cfg.attempt_step_budget {
            let obs = observe(&world, self.cfg.observation_noise, obs_seed);
            tracker.update(&eval_spec, &obs);
            let ctx = RolloutContext {
                world: &obs,
                model: &plan_model,
                spec: &plan_spec,
                stage: tracker,
                sim,
            };
            let out = match self.planner.plan_step(&ctx) {
                Ok(o) => o,
                Err(e) => {
                    log::warn!("planner failed: {e}");
                    outcome = Some(Err(Failure::SimFault));
                    break;
                }
            };
            let nu = match predicted {
                Some(x_des) => reactive_augment(out.control, x_des, obs.finger.pos, self.cfg.k_f, sim.u_max),
                None => clip_control(out.control, sim.u_max),
            };
            predicted = Some(out.predicted_finger);

            let start = world.finger.pos;
            for _ in 0..replan {
                let before = world.clone();
                step_in_place(&mut world, nu, &self.truth, sim);
                record_samples(&before, &world, dt, &mut samples);
                steps += 1;
                if world.fault {
                    break;
                }
            }
            path += (world.finger.pos[0] - start[0]).hypot(world.finger.pos[1] - start[1]);

            tracker.update(&eval_spec, &observe(&world, self.cfg.observation_noise, obs_seed));
            stage_reached = stage_reached.max(tracker.stage);
            let cost = eval_spec.running(tracker.stage, &world, nu);
            let terms = eval_spec
                .breakdown(tracker.stage, &world, nu)
                .into_iter()
                .filter(|t| t.stage == tracker.stage)
                .map(|t| t.value)
                .collect();
            tail.push(summary(&world, nu, cost, tracker.stage, terms));
            if tail.len() > self.cfg.history_steps {
                tail.remove(0);
            }
            self.log.records.push(TraceRecord::Step(StepRecord {
                attempt,
                k,
                time: world.time,
                stage: tracker.stage,
                u: out.control,
                nu,
                cost,
                digest: digest.clone(),
                lambda: out.lambda,
                ess: out.ess,
                state: world.clone(),
            }));
            k += 1;
            if let Some(result) = monitor.check(&world, &self.truth) {
                outcome = Some(result);
                break;
            }
        }
        let outcome = outcome.unwrap_or(Err(Failure::Budget { stage: stage_reached }));
        self.log.records.push(TraceRecord::Attempt(AttemptRecord {
            attempt,
            success: outcome.is_ok(),
            failure: outcome.clone().err(),
            steps,
            path_length: path,
        }));
        Ok(AttemptResult {
            outcome,
            steps,
            path_length: path,
            stage_reached,
            tail,
            samples,
        })
    }
}

/// Run a task to success or until the refinement budget is spent.
pub fn run_task(
    scene: &Scene,
    strategist: &mut dyn Strategist,
    mut memory: Option<&mut MemoryStore>,
    cfg: &LoopConfig,
    mppi: &MppiParams,
    seed: u64,
) -> Result<(TaskReport, EpisodeLog), LoopError> {
    cfg.validate()?;
    scene.validate().map_err(|e| LoopError::Config(e.to_string()))?;
    let mut params = mppi.clone();
    params.seed = seed;
    params.u_max = scene.sim.u_max;
    let planner = Planner::new(params.clone()).map_err(|e| LoopError::Config(e.to_string()))?;

    let mut belief = scene.initial_belief().map_err(|e| LoopError::Config(e.to_string()))?;
    let initial_theta = theta_of(&belief);
    let task_text = scene.task.instruction().to_string();
    let handle = scene.sim.grasp.as_ref().map(|g| g.handle);

    let mut runner = Runner {
        scene,
        truth: PhysicsModel::from_belief(&scene.world),
        cfg,
        planner,
        seed,
        log: EpisodeLog::default(),
    };
    runner.log.records.push(TraceRecord::Header(Header {
        task: scene.task,
        seed,
        strategist: strategist.name().to_string(),
        scene: scene.clone(),
        mppi: params,
        loop_config: cfg.clone(),
    }));

    let mut request = StrategistRequest::formulate(scene.task, &belief);
    request.label = scene.primary_label().to_string();
    request.goal = scene.goal;
    request.handle = handle;
    request.finger_radius = scene.sim.finger_radius;

    // retrieve or formulate
    let mut degradations = Vec::new();
    let mut memory_hit = None;
    let hit = memory
        .as_deref()
        .and_then(|m| m.retrieve(&task_text, &initial_theta, cfg.memory_threshold))
        .map(|(e, s)| (e.clone(), s));
    let (mut spec, mut regions) = match hit {
        Some((entry, similarity)) => {
            runner.log.records.push(TraceRecord::Memory(MemoryRecord::Hit { id: entry.id, similarity }));
            memory_hit = Some(entry.id);
            let updates: Vec<_> = entry
                .theta
                .iter()
                .map(|(l, p)| crate::world_model::ParamUpdate {
                    label: l.clone(),
                    mass: Some(p.mass),
                    friction: Some(p.friction),
                })
                .collect();
            belief = apply_refinement(&belief, &updates, 0).0;
            (entry.spec, entry.regions)
        }
        None => {
            if memory.is_some() {
                runner.log.records.push(TraceRecord::Memory(MemoryRecord::Miss));
            }
            let resp = strategist
                .formulate(&request)
                .map_err(|e| LoopError::Formulate(e.to_string()))?;
            validate_response(&resp, &belief).map_err(|e| LoopError::Formulate(e.to_string()))?;
            if resp.degraded {
                degradations.push("formulation: strategist fell back to heuristic".to_string());
            }
            if let Some(p) = &resp.params {
                belief = apply_refinement(&belief, p, 0).0;
            }
            let spec = resp
                .spec
                .ok_or_else(|| LoopError::Formulate("strategist returned no cost specification".into()))?;
            (spec, resp.regions.unwrap_or_default())
        }
    };

    let mut strategies = build_strategies(&regions, &belief, scene.finger_start, cfg, seed);
    let mut theta_history = vec![theta_of(&belief)];
    let mut previous: Vec<RefinementKind> = Vec::new();
    let mut window_samples: Vec<IdSample> = Vec::new();
    let mut window_stage = 0;
    let mut consecutive = 0;
    let mut refinements = 0;
    let mut attempts = 0;
    let mut total_steps = 0;
    let mut total_path = 0.0;
    let mut last_failure: Option<Failure>;
    let mut success = false;

    loop {
        let used = plan_for_attempt(&spec, &strategies, scene.sim.finger_radius);
        runner.log.records.push(TraceRecord::Plan(PlanRecord {
            attempt: attempts,
            digest: spec_digest(&used),
            spec: used.clone(),
            base_digest: spec_digest(&spec),
            strategies: strategies.clone(),
            theta: theta_of(&belief),
        }));
        let result = runner.run_attempt(attempts, &used, &belief)?;
        attempts += 1;
        total_steps += result.steps;
        total_path += result.path_length;
        match result.outcome {
            Ok(()) => {
                success = true;
                last_failure = None;
                break;
            }
            Err(f) => {
                log::info!("attempt {} failed: {f}", attempts - 1);
                last_failure = Some(f);
            }
        }
        consecutive += 1;
        window_samples.extend(result.samples);
        window_stage = window_stage.max(result.stage_reached);
        if consecutive < cfg.n_retry {
            continue;
        }
        if refinements >= cfg.max_refinements {
            break;
        }

        // outer loop: parameters first when identification disagrees with the belief
        refinements += 1;
        let old_digest = spec_digest(&spec);
        let old_theta = theta_of(&belief);
        let mut req = request.clone();
        req.phase = Phase::RefineParams;
        req.belief = belief.clone();
        req.tail = result.tail;
        req.samples = std::mem::take(&mut window_samples);
        req.failing_spec = Some(spec.clone());
        req.failure = last_failure.as_ref().map(|f| f.to_string());
        req.stage_reached = window_stage;
        req.previous = previous.clone();

        let resp = strategist.refine_params(&req);
        let mut degraded = resp.degraded;
        let params_ok = resp
            .params
            .as_ref()
            .filter(|_| validate_response(&resp, &belief).is_ok())
            .filter(|p| {
                p.iter().any(|u| {
                    belief.get(&u.label).is_some_and(|o| {
                        let rel = |new: Option<f64>, old: f64| new.map_or(0.0, |n| ((n - old) / old).abs());
                        rel(u.mass, o.mass).max(rel(u.friction, o.friction)) > cfg.param_change_threshold
                    })
                })
            })
            .cloned();
        let (kind, explanation) = match params_ok {
            Some(updates) => {
                belief = apply_refinement(&belief, &updates, refinements as u32).0;
                (RefinementKind::Params, resp.explanation)
            }
            None => {
                req.phase = Phase::RefinePlan;
                let plan = strategist.refine_plan(&req);
                degraded |= plan.degraded;
                match validate_response(&plan, &belief) {
                    Ok(()) => {
                        if let Some(s) = plan.spec {
                            spec = s;
                        }
                        if let Some(r) = plan.regions {
                            regions = r;
                        }
                        let kind = plan.kind.unwrap_or(RefinementKind::Remote);
                        (kind, format!("{}; {}", resp.explanation, plan.explanation))
                    }
                    Err(e) => (RefinementKind::Unchanged, format!("plan refinement rejected: {e}")),
                }
            }
        };
        if degraded {
            degradations.push(format!("refinement {refinements}: strategist fell back to heuristic"));
        }
        strategies = build_strategies(&regions, &belief, scene.finger_start, cfg, seed);
        previous.push(kind.clone());
        theta_history.push(theta_of(&belief));
        runner.log.records.push(TraceRecord::Refinement(RefinementRecord {
            cycle: refinements,
            after_attempt: attempts - 1,
            kind,
            old_digest,
            new_digest: spec_digest(&spec),
            old_theta,
            new_theta: theta_of(&belief),
            explanation,
            degraded,
        }));
        consecutive = 0;
        window_stage = 0;
    }

    let mut memory_stored = None;
    if success {
        if let Some(m) = memory.as_deref_mut() {
            let entry = MemoryEntry {
                id: 0,
                task_text: task_text.clone(),
                theta: theta_of(&belief),
                spec: spec.clone(),
                regions: regions.clone(),
                outcome: Outcome {
                    steps: total_steps,
                    path_length: total_path,
                },
                created_at: now(),
            };
            match m.store(entry) {
                Ok(id) => {
                    memory_stored = Some(id);
                    runner.log.records.push(TraceRecord::Memory(MemoryRecord::Stored { id }));
                }
                Err(e) => {
                    log::warn!("{e}");
                    runner
                        .log
                        .records
                        .push(TraceRecord::Memory(MemoryRecord::StoreFailed { message: e.to_string() }));
                }
            }
        }
    }

    let report = TaskReport {
        task: scene.task,
        seed,
        strategist: strategist.name().to_string(),
        success,
        failure: last_failure,
        attempts,
        refinements,
        steps: total_steps,
        path_length: total_path,
        initial_theta,
        final_theta: theta_of(&belief),
        true_theta: theta_of(&scene.world),
        theta_history,
        memory_hit,
        memory_stored,
        spec_digest: spec_digest(&spec),
        degradations,
    };
    Ok((report, runner.log))
}

/// Per-step force magnitudes on `label` as `(attempt, time, force)`.
pub fn force_series(log: &EpisodeLog, label: &str) -> Vec<(usize, f64, f64)> {
    log.steps()
        .filter_map(|s| {
            s.state
                .body(label)
                .map(|b| (s.attempt, s.time, b.finger_force_magnitude()))
        })
        .collect()
}

/// Labels and parameters in a stable order, for tabular output.
pub fn theta_rows(theta: &Theta) -> BTreeMap<&str, (f64, f64)> {
    theta.iter().map(|(l, p)| (l.as_str(), (p.mass, p.friction))).collect()
}
