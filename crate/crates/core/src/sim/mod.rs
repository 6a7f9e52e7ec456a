//! Deterministic rigid-body simulator in the vertical x-z plane.
//!
//! The same simulator serves as the planning world (parameterised by the
//! belief) and the evaluation world (parameterised by ground truth).
//! Objects are rectangles; the end effector is a disk that follows commanded
//! displacements through a first-order lag and pushes with bounded force.

mod contact;
mod solver;

pub use contact::{ContactPair, ContactRecord};
pub(crate) use contact::corners;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::world_model::{wrap_angle, Fixtures, Frame, Pose2, WorldBelief};
use contact::{Touch, Touches};
use solver::{Row, SolverParams};

/// Finger contact force below which a body counts as untouched (N).
pub const CONTACT_FORCE_FLOOR: f64 = 0.05;

/// Attaches an object to the finger once it is held close to a handle point
/// while the object is (nearly) at rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspRule {
    pub label: String,
    /// Handle point in the object's local frame.
    pub handle: [f64; 2],
    #[serde(default = "default_capture")]
    pub capture_radius: f64,
    /// Required overhang past the table edge (m), if any.
    #[serde(default)]
    pub min_overhang: Option<f64>,
    #[serde(default = "default_grasp_speed")]
    pub max_speed: f64,
}

fn default_capture() -> f64 {
    0.015
}

fn default_grasp_speed() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub stiffness: f64,
    pub damping: f64,
    /// Per-step Gaussian pose noise (x m, z m, rotation rad).
    pub noise_std: [f64; 3],
    pub seed: u64,
    /// Duration over which one control displacement is applied (s).
    pub control_period: f64,
    pub u_max: f64,
    pub finger_radius: f64,
    /// Time constant of the finger's first-order lag (s).
    pub finger_lag: f64,
    /// Largest normal force the finger can exert on one object (N).
    pub finger_max_force: f64,
    pub finger_friction: f64,
    /// Furthest the commanded target may lead the actual finger (m).
    pub finger_max_lead: f64,
    /// Slip speed at which sticking friction reaches the cone (m/s).
    pub slip_velocity: f64,
    pub grasp: Option<GraspRule>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            stiffness: 5e3,
            damping: 50.0,
            noise_std: [0.0; 3],
            seed: 0,
            control_period: 0.1,
            u_max: 0.05,
            finger_radius: 0.01,
            finger_lag: 0.02,
            finger_max_force: 15.0,
            finger_friction: 0.0,
            finger_max_lead: 0.02,
            slip_velocity: 1e-3,
            grasp: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0) {
            return Err("dt must be > 0".into());
        }
        if !(self.stiffness > 0.0) {
            return Err("stiffness must be > 0".into());
        }
        if self.damping < 0.0 || self.noise_std.iter().any(|s| *s < 0.0) {
            return Err("damping and noise must be >= 0".into());
        }
        if !(self.control_period > 0.0 && self.u_max > 0.0 && self.finger_radius > 0.0) {
            return Err("control period, u_max and finger radius must be > 0".into());
        }
        Ok(())
    }

    fn solver(&self) -> SolverParams {
        SolverParams {
            dt: self.dt,
            stiffness: self.stiffness,
            damping: self.damping,
            slip_velocity: self.slip_velocity,
        }
    }
}

/// Physical parameters of one body, taken from a belief or from ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyParams {
    pub label: String,
    pub mass: f64,
    pub inertia: f64,
    pub friction: f64,
    pub half_extents: [f64; 2],
}

/// Everything the step function needs besides state and control.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsModel {
    pub bodies: Vec<BodyParams>,
    pub fixtures: Fixtures,
}

impl PhysicsModel {
    pub fn from_belief(belief: &WorldBelief) -> Self {
        Self {
            bodies: belief
                .objects
                .values()
                .map(|o| BodyParams {
                    label: o.label.clone(),
                    mass: o.mass,
                    inertia: o.inertia(),
                    friction: o.friction,
                    half_extents: o.half_extents,
                })
                .collect(),
            fixtures: belief.fixtures.clone(),
        }
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.bodies.iter().position(|b| b.label == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FingerState {
    pub pos: [f64; 2],
    /// Commanded position the finger is converging to.
    pub target: [f64; 2],
    pub vel: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub label: String,
    pub pose: Pose2,
    pub vel: [f64; 2],
    pub omega: f64,
    /// Offset of the body centre from the finger while grasped.
    #[serde(default)]
    pub attached: Option<[f64; 2]>,
    /// Total force the finger exerted on this body during the last step.
    #[serde(default)]
    pub finger_force: [f64; 2],
}

impl Body {
    pub fn speed(&self) -> f64 {
        self.vel[0].hypot(self.vel[1])
    }

    pub fn finger_force_magnitude(&self) -> f64 {
        self.finger_force[0].hypot(self.finger_force[1])
    }

    pub fn in_contact_with_finger(&self) -> bool {
        self.finger_force_magnitude() >= CONTACT_FORCE_FLOOR
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub time: f64,
    pub step: u64,
    pub finger: FingerState,
    pub bodies: Vec<Body>,
    pub contacts: SmallVec<[ContactRecord; 8]>,
    /// Set when a step produced non-finite values and was rolled back.
    #[serde(default)]
    pub fault: bool,
}

impl SimState {
    /// Build an initial state from the belief's poses with the finger at
    /// `finger`. Bodies resting flat on a support are placed at their
    /// equilibrium penetration so they start at rest.
    pub fn new(belief: &WorldBelief, finger: [f64; 2], cfg: &SimConfig) -> Self {
        let bodies = belief
            .objects
            .values()
            .map(|o| {
                let mut pose = o.pose;
                let [hx, hz] = o.half_extents;
                let quarter = pose.rotation.abs() % std::f64::consts::FRAC_PI_2;
                let axis_aligned = quarter < 1e-9 || std::f64::consts::FRAC_PI_2 - quarter < 1e-9;
                let low = if (pose.rotation.abs() - std::f64::consts::FRAC_PI_2).abs() < 1e-6 {
                    hx
                } else {
                    hz
                };
                if axis_aligned && (pose.z - low).abs() < 1e-3 {
                    let g = belief.fixtures.gravity;
                    pose.z = low - o.mass * g / (2.0 * cfg.stiffness);
                }
                Body {
                    label: o.label.clone(),
                    pose,
                    vel: [0.0; 2],
                    omega: 0.0,
                    attached: None,
                    finger_force: [0.0; 2],
                }
            })
            .collect();
        SimState {
            time: 0.0,
            step: 0,
            finger: FingerState {
                pos: finger,
                target: finger,
                vel: [0.0; 2],
            },
            bodies,
            contacts: SmallVec::new(),
            fault: false,
        }
    }

    pub fn body(&self, label: &str) -> Option<&Body> {
        self.bodies.iter().find(|b| b.label == label)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.bodies.iter().position(|b| b.label == label)
    }

    /// Overhang of a body past the table edge: rightmost corner x minus edge x.
    pub fn overhang(&self, index: usize, model: &PhysicsModel) -> f64 {
        let b = &self.bodies[index];
        corners(&b.pose.frame(), model.bodies[index].half_extents)
            .iter()
            .map(|c| c[0])
            .fold(f64::NEG_INFINITY, f64::max)
            - model.fixtures.table_edge_x
    }

    /// Total force the finger applies across all bodies.
    pub fn total_finger_force(&self) -> f64 {
        let mut f = [0.0, 0.0];
        for b in &self.bodies {
            f[0] += b.finger_force[0];
            f[1] += b.finger_force[1];
        }
        f[0].hypot(f[1])
    }

    pub fn is_finite(&self) -> bool {
        let fin = |v: &[f64]| v.iter().all(|x| x.is_finite());
        fin(&self.finger.pos)
            && fin(&self.finger.target)
            && fin(&self.finger.vel)
            && self.bodies.iter().all(|b| {
                fin(&[b.pose.x, b.pose.z, b.pose.rotation, b.vel[0], b.vel[1], b.omega])
                    && fin(&b.finger_force)
            })
    }
}

/// Clip a control to the per-channel box, mapping NaN to zero.
pub fn clip_control(u: [f64; 2], u_max: f64) -> [f64; 2] {
    let c = |x: f64| if x.is_nan() { 0.0 } else { x.clamp(-u_max, u_max) };
    [c(u[0]), c(u[1])]
}

/// Deterministically combine a seed with a counter.
pub fn mix_seed(seed: u64, step: u64) -> u64 {
    let mut z = seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn gaussian_pose_noise(pose: &mut Pose2, std: [f64; 3], rng: &mut ChaCha8Rng) {
    let mut draw = |s: f64| match Normal::new(0.0, s) {
        Ok(n) if s > 0.0 => n.sample(rng),
        _ => 0.0,
    };
    pose.x += draw(std[0]);
    pose.z += draw(std[1]);
    pose.rotation = wrap_angle(pose.rotation + draw(std[2]));
}

/// Pure step: returns the successor of `state` under control `u`, with
/// physical parameters taken from `params`.
pub fn step(state: &SimState, u: [f64; 2], params: &WorldBelief, cfg: &SimConfig) -> SimState {
    let model = PhysicsModel::from_belief(params);
    let mut next = state.clone();
    step_in_place(&mut next, u, &model, cfg);
    next
}

/// Independent deep copy for rollouts.
pub fn fork(state: &SimState) -> SimState {
    state.clone()
}

/// Read the state through a noisy pose sensor. Velocities and forces pass
/// through unchanged.
pub fn observe(state: &SimState, noise_std: [f64; 3], seed: u64) -> SimState {
    let mut out = state.clone();
    if noise_std.iter().all(|s| *s == 0.0) {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, state.step ^ 0x0b5e_57a7e));
    for b in &mut out.bodies {
        gaussian_pose_noise(&mut b.pose, noise_std, &mut rng);
    }
    out
}

fn point_velocity(b: &Body, rel: [f64; 2]) -> [f64; 2] {
    [b.vel[0] - b.omega * rel[1], b.vel[1] + b.omega * rel[0]]
}

/// Push a disk of radius `r` centred at `p` out of the solid region
/// `x <= x0, z <= z0` (`sign = 1`) or `x >= x0, z <= z0` (`sign = -1`).
fn out_of_quadrant(p: [f64; 2], x0: f64, z0: f64, sign: f64, r: f64) -> [f64; 2] {
    // mirror so the solid always lies to the left
    let (x, z) = (sign * p[0], p[1]);
    let x0 = sign * x0;
    let out = if x <= x0 && z <= z0 {
        if x0 - x < z0 - z {
            [x0 + r, z]
        } else {
            [x, z0 + r]
        }
    } else {
        let q = [x.min(x0), z.min(z0)];
        let d = (x - q[0]).hypot(z - q[1]);
        if d < r {
            [q[0] + (x - q[0]) * r / d, q[1] + (z - q[1]) * r / d]
        } else {
            [x, z]
        }
    };
    [sign * out[0], out[1]]
}

/// The finger cannot enter the table or the wall.
pub fn keep_out(p: [f64; 2], fx: &Fixtures, r: f64) -> [f64; 2] {
    let mut p = out_of_quadrant(p, fx.table_edge_x, 0.0, 1.0, r);
    if let Some(wx) = fx.wall_x {
        p = out_of_quadrant(p, wx, fx.wall_height.unwrap_or(f64::INFINITY), -1.0, r);
    }
    p
}

/// Advance `state` by one step of `cfg.dt`.
pub fn step_in_place(state: &mut SimState, u: [f64; 2], model: &PhysicsModel, cfg: &SimConfig) {
    let dt = cfg.dt;
    let u = clip_control(u, cfg.u_max);
    let saved_finger = state.finger;
    let saved: SmallVec<[(Pose2, [f64; 2], f64); 4]> =
        state.bodies.iter().map(|b| (b.pose, b.vel, b.omega)).collect();

    // finger kinematics
    let f = &mut state.finger;
    let scale = dt / cfg.control_period;
    f.target[0] += u[0] * scale;
    f.target[1] += u[1] * scale;
    let lead = contact::sub(f.target, f.pos);
    let lead_n = contact::norm(lead);
    if lead_n > cfg.finger_max_lead {
        let s = cfg.finger_max_lead / lead_n;
        f.target = [f.pos[0] + lead[0] * s, f.pos[1] + lead[1] * s];
    }
    let alpha = if cfg.finger_lag > 0.0 {
        (dt / cfg.finger_lag).min(1.0)
    } else {
        1.0
    };
    f.target = keep_out(f.target, &model.fixtures, cfg.finger_radius);
    let new_pos = keep_out(
        [
            f.pos[0] + (f.target[0] - f.pos[0]) * alpha,
            f.pos[1] + (f.target[1] - f.pos[1]) * alpha,
        ],
        &model.fixtures,
        cfg.finger_radius,
    );
    f.vel = [(new_pos[0] - f.pos[0]) / dt, (new_pos[1] - f.pos[1]) / dt];
    f.pos = new_pos;

    // contact detection
    let n = state.bodies.len();
    let frames: SmallVec<[Frame; 4]> = state.bodies.iter().map(|b| b.pose.frame()).collect();
    let mut touches = Touches::new();
    for i in 0..n {
        let b = &state.bodies[i];
        if b.attached.is_some() {
            continue;
        }
        let half = model.bodies[i].half_extents;
        contact::fixture_touches(i, &frames[i], half, &model.fixtures, &mut touches);
        if let Some(t) = contact::finger_touch(i, &frames[i], half, state.finger.pos, cfg.finger_radius) {
            touches.push(t);
        }
        for j in (i + 1)..n {
            if state.bodies[j].attached.is_some() {
                continue;
            }
            contact::body_touches(i, &frames[i], half, j, &frames[j], model.bodies[j].half_extents, &mut touches);
        }
    }

    let sp = cfg.solver();
    let g = model.fixtures.gravity;
    let coupled = touches.iter().any(|t| matches!(t.pair, ContactPair::Bodies { .. }));
    let sweeps = if coupled { 4 } else { 1 };
    let mut new_vel: SmallVec<[[f64; 3]; 4]> = state
        .bodies
        .iter()
        .map(|b| [b.vel[0], b.vel[1], b.omega])
        .collect();
    // per-touch forces on the primary body (normal, tangential)
    let mut forces: SmallVec<[(f64, f64); 8]> = SmallVec::from_elem((0.0, 0.0), touches.len());

    for _ in 0..sweeps {
        for i in 0..n {
            if state.bodies[i].attached.is_some() {
                continue;
            }
            let p = &model.bodies[i];
            let b = &state.bodies[i];
            let com = b.pose.position();
            let mut rows: SmallVec<[Row; 8]> = SmallVec::new();
            let mut owners: SmallVec<[(usize, f64); 8]> = SmallVec::new();
            for (ti, t) in touches.iter().enumerate() {
                let (sign, other_vel, mu, limit) = match t.pair {
                    ContactPair::Finger { body } if body == i => {
                        (1.0, state.finger.vel, cfg.finger_friction, Some(cfg.finger_max_force))
                    }
                    ContactPair::Bodies { a, b: other } if a == i || other == i => {
                        let (s, o) = if a == i { (1.0, other) } else { (-1.0, a) };
                        let ob = &state.bodies[o];
                        let tmp = Body {
                            vel: [new_vel[o][0], new_vel[o][1]],
                            omega: new_vel[o][2],
                            ..ob.clone()
                        };
                        let rel = contact::sub(t.point, ob.pose.position());
                        let mu = p.friction.min(model.bodies[o].friction);
                        (s, point_velocity(&tmp, rel), mu, None)
                    }
                    ContactPair::Finger { .. } | ContactPair::Bodies { .. } => continue,
                    other if other.primary() == i => (1.0, [0.0, 0.0], p.friction, None),
                    _ => continue,
                };
                let normal = [t.normal[0] * sign, t.normal[1] * sign];
                let tangent = contact::perp(normal);
                let rel = contact::sub(t.point, com);
                rows.push(Row::new(
                    rel,
                    normal,
                    t.depth,
                    contact::dot(other_vel, normal),
                    contact::dot(other_vel, tangent),
                    mu,
                    limit,
                ));
                owners.push((ti, sign));
            }
            let mass = [p.mass, p.mass, p.inertia];
            let v0 = [b.vel[0], b.vel[1], b.omega];
            let fext = [0.0, -p.mass * g, 0.0];
            new_vel[i] = solver::solve_body(mass, v0, fext, &mut rows, &sp);
            for (r, (ti, sign)) in rows.iter().zip(owners.iter()) {
                if *sign > 0.0 {
                    forces[*ti] = (r.f_n, r.f_t);
                }
            }
        }
    }

    // integrate
    for (i, b) in state.bodies.iter_mut().enumerate() {
        b.finger_force = [0.0, 0.0];
        if b.attached.is_some() {
            continue;
        }
        let v = new_vel[i];
        b.vel = [v[0], v[1]];
        b.omega = v[2];
        b.pose.x += dt * v[0];
        b.pose.z += dt * v[1];
        b.pose.rotation = wrap_angle(b.pose.rotation + dt * v[2]);
    }

    state.contacts.clear();
    for (t, (fnrm, ftan)) in touches.iter().zip(forces.iter()) {
        let mu = match t.pair {
            ContactPair::Finger { .. } => cfg.finger_friction,
            ContactPair::Bodies { a, b } => model.bodies[a].friction.min(model.bodies[b].friction),
            other => model.bodies[other.primary()].friction,
        };
        if let ContactPair::Finger { body } = t.pair {
            let tang = contact::perp(t.normal);
            let fb = &mut state.bodies[body].finger_force;
            fb[0] += fnrm * t.normal[0] + ftan * tang[0];
            fb[1] += fnrm * t.normal[1] + ftan * tang[1];
        }
        state.contacts.push(ContactRecord {
            pair: t.pair,
            point: t.point,
            normal: t.normal,
            normal_force: *fnrm,
            tangential_force: *ftan,
            mu,
        });
    }

    // the finger yields when an object resists beyond its force limit
    let max_depth = cfg.finger_max_force / cfg.stiffness;
    for (i, b) in state.bodies.iter().enumerate() {
        if b.attached.is_some() {
            continue;
        }
        if let Some(Touch { normal, depth, .. }) = contact::finger_touch(
            i,
            &b.pose.frame(),
            model.bodies[i].half_extents,
            state.finger.pos,
            cfg.finger_radius,
        )
        {
            if depth > max_depth {
                let back = depth - max_depth;
                let f = &mut state.finger;
                f.pos[0] -= normal[0] * back;
                f.pos[1] -= normal[1] * back;
            }
        }
    }

    // grasped bodies ride with the finger
    let fpos = state.finger.pos;
    let fvel = state.finger.vel;
    for b in state.bodies.iter_mut() {
        if let Some(off) = b.attached {
            b.pose.x = fpos[0] + off[0];
            b.pose.z = fpos[1] + off[1];
            b.vel = fvel;
            b.omega = 0.0;
        }
    }

    if let Some(rule) = &cfg.grasp {
        if let Some(i) = model.index_of(&rule.label) {
            if state.bodies[i].attached.is_none() {
                let b = &state.bodies[i];
                let handle = b.pose.to_world(rule.handle);
                let close = contact::norm(contact::sub(handle, fpos)) <= rule.capture_radius;
                let overhang_ok = rule.min_overhang.is_none_or(|m| state.overhang(i, model) > m);
                if close && overhang_ok && b.speed() < rule.max_speed {
                    let off = [b.pose.x - fpos[0], b.pose.z - fpos[1]];
                    state.bodies[i].attached = Some(off);
                }
            }
        }
    }

    if cfg.noise_std.iter().any(|s| *s > 0.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, state.step));
        for b in state.bodies.iter_mut().filter(|b| b.attached.is_none()) {
            gaussian_pose_noise(&mut b.pose, cfg.noise_std, &mut rng);
        }
    }

    if !state.is_finite() {
        state.finger = saved_finger;
        for (b, (pose, vel, omega)) in state.bodies.iter_mut().zip(saved) {
            b.pose = pose;
            b.vel = vel;
            b.omega = omega;
            b.finger_force = [0.0; 2];
        }
        state.contacts.clear();
        state.fault = true;
    }
    state.time += dt;
    state.step += 1;
}

/// Kinetic + gravitational + contact-spring energy (J).
pub fn mechanical_energy(state: &SimState, model: &PhysicsModel, cfg: &SimConfig) -> f64 {
    let g = model.fixtures.gravity;
    let mut e = 0.0;
    let mut touches = Touches::new();
    for (i, b) in state.bodies.iter().enumerate() {
        let p = &model.bodies[i];
        e += 0.5 * p.mass * (b.vel[0] * b.vel[0] + b.vel[1] * b.vel[1]);
        e += 0.5 * p.inertia * b.omega * b.omega;
        e += p.mass * g * b.pose.z;
        if b.attached.is_none() {
            contact::fixture_touches(i, &b.pose.frame(), p.half_extents, &model.fixtures, &mut touches);
        }
    }
    for t in &touches {
        e += 0.5 * cfg.stiffness * t.depth * t.depth;
    }
    e
}
