//! Per-body implicit contact solve.
//!
//! Normal contacts are linearised spring-dampers evaluated at the end-of-step
//! velocity, so the step is stable for stiff contacts at a 10 ms step.
//! Friction uses a stick/slide active set: sticking contacts become a stiff
//! implicit viscous constraint, sliding contacts apply exactly `mu * f_n`.

use nalgebra::{Matrix3, Vector3};

const MAX_PASSES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum NormalMode {
    Inactive,
    Active,
    /// Force pinned at the finger's force limit.
    Saturated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum TangentMode {
    Frictionless,
    Stick,
    /// Sliding in the given direction (+1 or -1 along the tangent).
    Slide(f64),
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Row {
    pub jn: [f64; 3],
    pub jt: [f64; 3],
    pub depth: f64,
    /// Velocity of the other side along the normal and tangent.
    pub wn: f64,
    pub wt: f64,
    pub mu: f64,
    pub limit: Option<f64>,
    pub n_mode: NormalMode,
    pub t_mode: TangentMode,
    pub fn_est: f64,
    pub f_n: f64,
    pub f_t: f64,
}

impl Row {
    pub fn new(point_rel: [f64; 2], normal: [f64; 2], depth: f64, wn: f64, wt: f64, mu: f64, limit: Option<f64>) -> Self {
        let t = [-normal[1], normal[0]];
        let cross = |d: [f64; 2]| point_rel[0] * d[1] - point_rel[1] * d[0];
        Row {
            jn: [normal[0], normal[1], cross(normal)],
            jt: [t[0], t[1], cross(t)],
            depth,
            wn,
            wt,
            mu,
            limit,
            n_mode: NormalMode::Active,
            t_mode: if mu > 0.0 {
                TangentMode::Stick
            } else {
                TangentMode::Frictionless
            },
            fn_est: 0.0,
            f_n: 0.0,
            f_t: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct SolverParams {
    pub dt: f64,
    pub stiffness: f64,
    pub damping: f64,
    pub slip_velocity: f64,
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Solve one body's end-of-step velocity given its contact rows. Rows are
/// updated in place with their final forces.
pub(crate) fn solve_body(mass: [f64; 3], v0: [f64; 3], fext: [f64; 3], rows: &mut [Row], p: &SolverParams) -> [f64; 3] {
    let dt = p.dt;
    let k = p.stiffness;
    let c_eff = p.damping + k * dt;
    if rows.is_empty() {
        return [
            v0[0] + dt * fext[0] / mass[0],
            v0[1] + dt * fext[1] / mass[1],
            v0[2] + dt * fext[2] / mass[2],
        ];
    }
    for r in rows.iter_mut() {
        r.fn_est = k * r.depth;
        if let Some(lim) = r.limit {
            if r.fn_est > lim {
                r.n_mode = NormalMode::Saturated;
            }
        }
    }

    let mut v = v0;
    let mut converged = false;
    for pass in 0..MAX_PASSES {
        let mut a = Matrix3::from_diagonal(&Vector3::new(mass[0], mass[1], mass[2]));
        let mut symmetric = true;
        let mut b = Vector3::new(
            mass[0] * v0[0] + dt * fext[0],
            mass[1] * v0[1] + dt * fext[1],
            mass[2] * v0[2] + dt * fext[2],
        );
        for r in rows.iter() {
            let jn = Vector3::from(r.jn);
            let jt = Vector3::from(r.jt);
            let fn_now = match r.n_mode {
                NormalMode::Inactive => continue,
                NormalMode::Active => {
                    a += (dt * c_eff) * jn * jn.transpose();
                    b += jn * (dt * (k * r.depth + c_eff * r.wn));
                    r.fn_est
                }
                NormalMode::Saturated => {
                    let lim = r.limit.unwrap_or(f64::INFINITY);
                    b += jn * (dt * lim);
                    lim
                }
            };
            match r.t_mode {
                TangentMode::Frictionless => {}
                TangentMode::Stick => {
                    let eta = r.mu * fn_now.max(0.0) / p.slip_velocity;
                    a += (dt * eta) * jt * jt.transpose();
                    b += jt * (dt * eta * r.wt);
                }
                // sliding on an active contact: the Coulomb force follows the
                // implicit normal force, which makes the system non-symmetric
                TangentMode::Slide(s) if r.n_mode == NormalMode::Active => {
                    let g = s * r.mu;
                    a -= (dt * g * c_eff) * jt * jn.transpose();
                    b += jt * (-dt * g * (k * r.depth + c_eff * r.wn));
                    symmetric = false;
                }
                TangentMode::Slide(s) => {
                    b += jt * (-dt * s * r.mu * fn_now.max(0.0));
                }
            }
        }
        let sol = match (symmetric, a.cholesky()) {
            (true, Some(ch)) => ch.solve(&b),
            _ => a.lu().solve(&b).unwrap_or(Vector3::from(v0)),
        };
        v = [sol[0], sol[1], sol[2]];

        let mut changed = false;
        for r in rows.iter_mut() {
            let sn = dot3(&r.jn, &v) - r.wn;
            let trial = k * r.depth - c_eff * sn;
            let prev_fn = r.fn_est;
            // modes only move to a neighbour (inactive, active, saturated) per
            // pass; jumping straight across can cycle forever
            let over = r.limit.is_some_and(|lim| trial > lim);
            let new_mode = match r.n_mode {
                NormalMode::Inactive if trial > 0.0 => NormalMode::Active,
                NormalMode::Inactive => NormalMode::Inactive,
                NormalMode::Active if trial <= 0.0 => NormalMode::Inactive,
                NormalMode::Active if over => NormalMode::Saturated,
                NormalMode::Active => NormalMode::Active,
                NormalMode::Saturated if over => NormalMode::Saturated,
                NormalMode::Saturated => NormalMode::Active,
            };
            if new_mode != r.n_mode {
                changed = true;
                r.n_mode = new_mode;
            }
            let fn_now = match r.n_mode {
                NormalMode::Inactive => 0.0,
                NormalMode::Active => trial,
                NormalMode::Saturated => r.limit.unwrap_or(trial),
            };
            if (fn_now - prev_fn).abs() > 0.05 * (1.0 + prev_fn.abs()) {
                changed = true;
            }
            let st = dot3(&r.jt, &v) - r.wt;
            match r.t_mode {
                TangentMode::Frictionless => {}
                TangentMode::Stick => {
                    let eta = r.mu * prev_fn.max(0.0) / p.slip_velocity;
                    let ft = -eta * st;
                    if ft.abs() > r.mu * fn_now.max(0.0) * (1.0 + 1e-9) {
                        r.t_mode = TangentMode::Slide(if st >= 0.0 { 1.0 } else { -1.0 });
                        changed = true;
                    }
                }
                TangentMode::Slide(s) => {
                    if st * s < 0.0 {
                        r.t_mode = TangentMode::Stick;
                        changed = true;
                    }
                }
            }
            r.fn_est = fn_now;
        }
        if !changed && pass > 0 {
            converged = true;
            break;
        }
    }

    // Final forces from the converged velocity, with the friction cone
    // enforced exactly, then an explicit velocity update from those forces.
    let mut total = fext;
    for r in rows.iter_mut() {
        let sn = dot3(&r.jn, &v) - r.wn;
        r.f_n = match r.n_mode {
            NormalMode::Inactive => 0.0,
            NormalMode::Active => (k * r.depth - c_eff * sn).max(0.0),
            NormalMode::Saturated => r.limit.unwrap_or(0.0),
        };
        let st = dot3(&r.jt, &v) - r.wt;
        let bound = r.mu * r.f_n;
        r.f_t = match r.t_mode {
            TangentMode::Frictionless => 0.0,
            TangentMode::Stick => -(r.mu * r.fn_est.max(0.0) / p.slip_velocity) * st,
            TangentMode::Slide(s) => -s * bound,
        }
        .clamp(-bound, bound);
        for i in 0..3 {
            total[i] += r.jn[i] * r.f_n + r.jt[i] * r.f_t;
        }
    }
    // an explicit update from forces of an unsettled active set is unstable
    // for light bodies; keep the implicit velocity instead
    if !converged {
        return v;
    }
    [
        v0[0] + dt * total[0] / mass[0],
        v0[1] + dt * total[1] / mass[1],
        v0[2] + dt * total[2] / mass[2],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SolverParams {
        SolverParams {
            dt: 0.01,
            stiffness: 5e3,
            damping: 50.0,
            slip_velocity: 1e-3,
        }
    }

    #[test]
    fn free_body_falls() {
        let v = solve_body([1.0, 1.0, 0.1], [0.0; 3], [0.0, -9.81, 0.0], &mut [], &params());
        assert!((v[1] + 0.0981).abs() < 1e-12);
    }

    #[test]
    fn resting_contacts_hold_weight() {
        let m = 0.25;
        let d = m * 9.81 / (2.0 * 5e3);
        let mut rows = [
            Row::new([-0.05, -0.05], [0.0, 1.0], d, 0.0, 0.0, 0.5, None),
            Row::new([0.05, -0.05], [0.0, 1.0], d, 0.0, 0.0, 0.5, None),
        ];
        let v = solve_body([m, m, 1e-3], [0.0; 3], [0.0, -m * 9.81, 0.0], &mut rows, &params());
        assert!(v.iter().all(|x| x.abs() < 1e-12), "{v:?}");
        assert!((rows[0].f_n + rows[1].f_n - m * 9.81).abs() < 1e-9);
    }

    #[test]
    fn sliding_friction_sits_on_the_cone() {
        let m = 1.0;
        let d = m * 9.81 / 5e3;
        let mut rows = [Row::new([0.0, -0.05], [0.0, 1.0], d, 0.0, 0.0, 0.5, None)];
        // strong push along +x, tangent of normal (0,1) is (-1,0)
        let v = solve_body([m, m, 1.0], [0.2, 0.0, 0.0], [20.0, -m * 9.81, 0.0], &mut rows, &params());
        assert!(v[0] > 0.2);
        assert!((rows[0].f_t.abs() - 0.5 * rows[0].f_n).abs() < 1e-9);
    }

    #[test]
    fn limited_contact_saturates() {
        let mut rows = [Row::new([-0.05, 0.0], [1.0, 0.0], 0.01, 1.0, 0.0, 0.0, Some(15.0))];
        solve_body([1.0, 1.0, 1.0], [0.0; 3], [0.0; 3], &mut rows, &params());
        assert_eq!(rows[0].f_n, 15.0);
    }
}
