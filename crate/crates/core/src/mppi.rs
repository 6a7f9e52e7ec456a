//! Sampling-based model predictive control with an adaptive temperature.
//!
//! Each planning step perturbs the nominal control sequence with Gaussian
//! noise, rolls every candidate out in a forked planning world, picks the
//! softmax temperature whose effective sample size hits a fixed fraction of
//! the batch, and moves the nominal sequence by the weighted perturbation
//! average. Only the first control is executed; the sequence is then shifted.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{CompiledSpec, StageTracker};
use crate::sim::{clip_control, step_in_place, PhysicsModel, SimConfig, SimState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("every rollout produced a non-finite cost; planning world and cost spec disagree")]
    AllCostsInfinite,
    #[error("invalid planner parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MppiParams {
    /// Number of sampled control sequences per plan step (K).
    pub samples: usize,
    /// Horizon length in control periods (H).
    pub horizon: usize,
    /// Per-channel perturbation standard deviation (m).
    pub noise_std: [f64; 2],
    pub u_max: f64,
    /// Update step size on the weighted perturbation average.
    pub step_size: f64,
    /// Target effective sample size as a fraction of `samples`.
    pub ess_fraction: f64,
    pub bisection_steps: usize,
    pub lambda_lo: f64,
    pub seed: u64,
    /// Simulator steps per control period inside rollouts.
    pub rollout_substeps: usize,
    /// Evaluate rollouts on the rayon pool.
    pub parallel: bool,
}

impl Default for MppiParams {
    fn default() -> Self {
        Self {
            samples: 256,
            horizon: 32,
            noise_std: [0.01, 0.01],
            u_max: 0.05,
            step_size: 1.0,
            ess_fraction: 0.2,
            bisection_steps: 25,
            lambda_lo: 1e-8,
            seed: 0,
            rollout_substeps: 10,
            parallel: true,
        }
    }
}

impl MppiParams {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let bad = |m: &str| Err(PlannerError::InvalidParams(m.to_string()));
        if self.samples < 2 {
            return bad("samples must be >= 2");
        }
        if self.horizon < 1 {
            return bad("horizon must be >= 1");
        }
        if !(self.ess_fraction > 0.0 && self.ess_fraction <= 1.0) {
            return bad("ess_fraction must be in (0, 1]");
        }
        if !(self.noise_std.iter().all(|s| *s > 0.0 && s.is_finite())) {
            return bad("noise_std must be > 0");
        }
        if !(self.u_max > 0.0) || self.rollout_substeps == 0 {
            return bad("u_max and rollout_substeps must be positive");
        }
        Ok(())
    }
}

/// Nominal control sequence plus diagnostics from the last update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NominalPlan {
    pub controls: Vec<[f64; 2]>,
    pub last_lambda: f64,
    pub last_ess: f64,
    pub last_best_cost: f64,
    /// The ESS target could not be bracketed (all costs tied).
    pub target_unreachable: bool,
}

impl NominalPlan {
    pub fn zeros(horizon: usize) -> Self {
        Self {
            controls: vec![[0.0, 0.0]; horizon],
            last_lambda: f64::NAN,
            last_ess: f64::NAN,
            last_best_cost: f64::NAN,
            target_unreachable: false,
        }
    }

    /// Drop the first control and repeat the last one.
    pub fn shifted(&self) -> Self {
        let mut out = self.clone();
        if !out.controls.is_empty() {
            out.controls.remove(0);
            let last = *self.controls.last().unwrap_or(&[0.0, 0.0]);
            out.controls.push(last);
        }
        out
    }
}

/// K x H perturbations, row-major by sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbations {
    pub samples: usize,
    pub horizon: usize,
    pub data: Vec<[f64; 2]>,
}

impl Perturbations {
    pub fn get(&self, sample: usize, t: usize) -> [f64; 2] {
        self.data[sample * self.horizon + t]
    }

    pub fn row(&self, sample: usize) -> &[[f64; 2]] {
        &self.data[sample * self.horizon..(sample + 1) * self.horizon]
    }
}

pub fn sample_perturbations(params: &MppiParams, rng: &mut ChaCha8Rng) -> Perturbations {
    let n = params.samples * params.horizon;
    let dists: Vec<Option<Normal<f64>>> = params
        .noise_std
        .iter()
        .map(|s| if *s > 0.0 { Normal::new(0.0, *s).ok() } else { None })
        .collect();
    let mut draw = |c: usize| dists[c].map_or(0.0, |d| d.sample(rng));
    let data = (0..n).map(|_| [draw(0), draw(1)]).collect();
    Perturbations {
        samples: params.samples,
        horizon: params.horizon,
        data,
    }
}

/// What a rollout needs besides the control sequence.
pub struct RolloutContext<'a> {
    pub world: &'a SimState,
    pub model: &'a PhysicsModel,
    pub spec: &'a CompiledSpec,
    pub stage: StageTracker,
    pub sim: &'a SimConfig,
}

impl RolloutContext<'_> {
    fn rollout_config(&self, params: &MppiParams) -> SimConfig {
        let mut cfg = self.sim.clone();
        cfg.dt = cfg.control_period / params.rollout_substeps as f64;
        cfg.noise_std = [0.0; 3];
        cfg
    }
}

/// Average horizon cost of one control sequence, with the terminal cost
/// folded in at weight 1/H. Non-finite results map to +inf.
pub fn rollout_cost(controls: &[[f64; 2]], ctx: &RolloutContext, cfg: &SimConfig, substeps: usize) -> f64 {
    let mut state = ctx.world.clone();
    let mut tracker = ctx.stage;
    let mut total = 0.0;
    for u in controls {
        for _ in 0..substeps {
            step_in_place(&mut state, *u, ctx.model, cfg);
        }
        tracker.update(ctx.spec, &state);
        total += ctx.spec.running(tracker.stage, &state, *u);
    }
    total += ctx.spec.terminal(&state);
    let j = total / controls.len().max(1) as f64;
    if j.is_finite() && !state.fault {
        j
    } else {
        f64::INFINITY
    }
}

/// Cost of every perturbed candidate `clip(U + eps_i)`.
pub fn rollout_costs(plan: &NominalPlan, eps: &Perturbations, ctx: &RolloutContext, params: &MppiParams) -> Vec<f64> {
    let cfg = ctx.rollout_config(params);
    let one = |i: usize| {
        let controls: Vec<[f64; 2]> = plan
            .controls
            .iter()
            .zip(eps.row(i))
            .map(|(u, e)| clip_control([u[0] + e[0], u[1] + e[1]], params.u_max))
            .collect();
        let j = rollout_cost(&controls, ctx, &cfg, params.rollout_substeps);
        if !j.is_finite() {
            log::debug!("rollout {i} produced a non-finite cost");
        }
        j
    };
    if params.parallel {
        (0..eps.samples).into_par_iter().map(one).collect()
    } else {
        (0..eps.samples).map(one).collect()
    }
}

/// Costs shifted so the best finite sample is 0; non-finite stay +inf.
pub fn shifted_costs(costs: &[f64]) -> Option<Vec<f64>> {
    let min = costs
        .iter()
        .cloned()
        .filter(|c| c.is_finite())
        .reduce(f64::min)?;
    Some(
        costs
            .iter()
            .map(|c| if c.is_finite() { c - min } else { f64::INFINITY })
            .collect(),
    )
}

/// Normalised softmax weights `exp(-S_i / lambda)` over shifted costs.
pub fn softmax_weights(shifted: &[f64], lambda: f64) -> Vec<f64> {
    let mut w: Vec<f64> = shifted.iter().map(|s| (-s / lambda).exp()).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 && total.is_finite() {
        w.iter_mut().for_each(|x| *x /= total);
    } else {
        // every finite cost underflowed except the minimum, which is 1
        let n = w.len() as f64;
        w.iter_mut().for_each(|x| *x = 1.0 / n);
    }
    w
}

/// Effective sample size `1 / sum W_i^2` at temperature `lambda`.
pub fn effective_sample_size(shifted: &[f64], lambda: f64) -> f64 {
    let (mut s1, mut s2) = (0.0, 0.0);
    for s in shifted {
        let w = (-s / lambda).exp();
        s1 += w;
        s2 += w * w;
    }
    if s2 > 0.0 {
        s1 * s1 / s2
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaChoice {
    pub lambda: f64,
    pub ess: f64,
    /// True when all finite costs tie, so every temperature gives ESS = K.
    pub unreachable: bool,
}

/// Bisect the temperature so the effective sample size approaches
/// `ess_fraction * K`.
pub fn select_lambda(costs: &[f64], params: &MppiParams) -> Result<LambdaChoice, PlannerError> {
    let shifted = shifted_costs(costs).ok_or(PlannerError::AllCostsInfinite)?;
    let max_s = shifted
        .iter()
        .cloned()
        .filter(|s| s.is_finite())
        .fold(0.0, f64::max);
    let target = params.ess_fraction * costs.len() as f64;
    let lo = params.lambda_lo;
    let hi = 5.0 * max_s.max(1e-3);
    if max_s == 0.0 {
        return Ok(LambdaChoice {
            lambda: hi,
            ess: effective_sample_size(&shifted, hi),
            unreachable: true,
        });
    }
    // ESS grows monotonically with lambda; search in log space so the
    // relative resolution does not depend on the cost spread
    let (mut lo, mut hi) = (lo.ln(), hi.ln());
    for _ in 0..params.bisection_steps {
        let mid = 0.5 * (lo + hi);
        if effective_sample_size(&shifted, mid.exp()) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = (0.5 * (lo + hi)).exp();
    Ok(LambdaChoice {
        lambda,
        ess: effective_sample_size(&shifted, lambda),
        unreachable: false,
    })
}

/// Move the nominal sequence by the weighted perturbation average.
pub fn update_nominal(
    plan: &NominalPlan,
    eps: &Perturbations,
    costs: &[f64],
    choice: &LambdaChoice,
    params: &MppiParams,
) -> NominalPlan {
    let shifted = shifted_costs(costs).unwrap_or_else(|| vec![0.0; costs.len()]);
    let w = softmax_weights(&shifted, choice.lambda);
    let mut out = plan.clone();
    for t in 0..plan.controls.len() {
        let mut du = [0.0, 0.0];
        for (i, wi) in w.iter().enumerate() {
            if *wi == 0.0 {
                continue;
            }
            let e = eps.get(i, t);
            du[0] += wi * e[0];
            du[1] += wi * e[1];
        }
        let u = plan.controls[t];
        out.controls[t] = clip_control(
            [u[0] + params.step_size * du[0], u[1] + params.step_size * du[1]],
            params.u_max,
        );
    }
    out.last_lambda = choice.lambda;
    out.last_ess = choice.ess;
    out.last_best_cost = costs.iter().cloned().filter(|c| c.is_finite()).fold(f64::INFINITY, f64::min);
    out.target_unreachable = choice.unreachable;
    out
}

/// Result of one receding-horizon step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanOutput {
    pub control: [f64; 2],
    /// Finger position the planning world predicts after `control`.
    pub predicted_finger: [f64; 2],
    pub lambda: f64,
    pub ess: f64,
    pub best_cost: f64,
    pub target_unreachable: bool,
}

/// Stateful planner owning the nominal sequence and its random stream.
#[derive(Debug, Clone)]
pub struct Planner {
    pub params: MppiParams,
    pub plan: NominalPlan,
    rng: ChaCha8Rng,
}

impl Planner {
    pub fn new(params: MppiParams) -> Result<Self, PlannerError> {
        params.validate()?;
        Ok(Self {
            plan: NominalPlan::zeros(params.horizon),
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            params,
        })
    }

    /// Forget the nominal sequence (used at the start of every attempt).
    pub fn reset(&mut self) {
        self.plan = NominalPlan::zeros(self.params.horizon);
    }

    /// Reseed the perturbation stream.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Sample, roll out, select the temperature, update, and return the
    /// first control; the stored sequence is shifted for the next call.
    pub fn plan_step(&mut self, ctx: &RolloutContext) -> Result<PlanOutput, PlannerError> {
        let eps = sample_perturbations(&self.params, &mut self.rng);
        let costs = rollout_costs(&self.plan, &eps, ctx, &self.params);
        let choice = select_lambda(&costs, &self.params)?;
        let updated = update_nominal(&self.plan, &eps, &costs, &choice, &self.params);
        let control = updated.controls[0];

        let cfg = ctx.rollout_config(&self.params);
        let mut probe = ctx.world.clone();
        for _ in 0..self.params.rollout_substeps {
            step_in_place(&mut probe, control, ctx.model, &cfg);
        }

        self.plan = updated.shifted();
        Ok(PlanOutput {
            control,
            predicted_finger: probe.finger.pos,
            lambda: choice.lambda,
            ess: choice.ess,
            best_cost: updated.last_best_cost,
            target_unreachable: choice.unreachable,
        })
    }
}
