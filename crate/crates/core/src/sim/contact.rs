//! Contact detection between rectangles, the finger disk, and the fixed
//! scene geometry (table surface, table edge, wall).

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::world_model::{Fixtures, Frame};

/// Corners deeper than this below the table surface are treated as touching
/// the table's vertical side instead of its top.
const DEEP_BELOW_SURFACE: f64 = 0.02;

pub(crate) fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub(crate) fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

/// Rotate +90 degrees.
pub(crate) fn perp(a: [f64; 2]) -> [f64; 2] {
    [-a[1], a[0]]
}

/// Which two things touch. Body indices refer to `SimState::bodies`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "with", rename_all = "snake_case")]
pub enum ContactPair {
    Ground { body: usize },
    TableEdge { body: usize },
    Wall { body: usize },
    WallTop { body: usize },
    Finger { body: usize },
    Bodies { a: usize, b: usize },
}

impl ContactPair {
    /// The body that receives `+normal` force.
    pub fn primary(&self) -> usize {
        match *self {
            ContactPair::Ground { body }
            | ContactPair::TableEdge { body }
            | ContactPair::Wall { body }
            | ContactPair::WallTop { body }
            | ContactPair::Finger { body } => body,
            ContactPair::Bodies { a, .. } => a,
        }
    }
}

/// A resolved contact after a step: forces are those applied to the
/// primary body along `normal` and along `perp(normal)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactRecord {
    pub pair: ContactPair,
    pub point: [f64; 2],
    pub normal: [f64; 2],
    pub normal_force: f64,
    pub tangential_force: f64,
    pub mu: f64,
}

/// Geometric contact before force resolution. `normal` points into the
/// primary body (the direction it is pushed).
#[derive(Debug, Clone, Copy)]
pub(crate) struct Touch {
    pub pair: ContactPair,
    pub point: [f64; 2],
    pub normal: [f64; 2],
    pub depth: f64,
}

pub(crate) type Touches = SmallVec<[Touch; 8]>;

pub(crate) fn corners(pose: &Frame, half: [f64; 2]) -> [[f64; 2]; 4] {
    let [hx, hz] = half;
    [
        pose.to_world([-hx, -hz]),
        pose.to_world([hx, -hz]),
        pose.to_world([hx, hz]),
        pose.to_world([-hx, hz]),
    ]
}

/// If `world` lies strictly inside the rectangle, return the outward
/// normal (world frame) of the nearest face and the depth to it.
pub(crate) fn point_in_rect(pose: &Frame, half: [f64; 2], world: [f64; 2]) -> Option<([f64; 2], f64)> {
    point_in_rect_facing(pose, half, world, None)
}

/// Like [`point_in_rect`], but when `facing` is given only faces whose
/// outward normal points along it are candidates. A fixed corner can then
/// never push a thin body through the solid it belongs to.
pub(crate) fn point_in_rect_facing(
    pose: &Frame,
    half: [f64; 2],
    world: [f64; 2],
    facing: Option<[f64; 2]>,
) -> Option<([f64; 2], f64)> {
    let [lx, lz] = pose.to_local(world);
    let [hx, hz] = half;
    if lx.abs() >= hx || lz.abs() >= hz {
        return None;
    }
    let faces = [
        (hx - lx, [1.0, 0.0]),
        (hx + lx, [-1.0, 0.0]),
        (hz - lz, [0.0, 1.0]),
        (hz + lz, [0.0, -1.0]),
    ];
    let allowed = |n: [f64; 2]| facing.is_none_or(|d| dot(pose.rotate(n), d) > 0.0);
    let best = faces
        .iter()
        .filter(|f| allowed(f.1))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .or_else(|| faces.iter().min_by(|a, b| a.0.total_cmp(&b.0)))?;
    Some((pose.rotate(best.1), best.0))
}

/// Signed distance from a world point to the rectangle boundary (negative
/// inside) together with the closest boundary point.
pub(crate) fn rect_distance(pose: &Frame, half: [f64; 2], world: [f64; 2]) -> (f64, [f64; 2]) {
    let [lx, lz] = pose.to_local(world);
    let [hx, hz] = half;
    let qx = lx.clamp(-hx, hx);
    let qz = lz.clamp(-hz, hz);
    if qx != lx || qz != lz {
        let d = (lx - qx).hypot(lz - qz);
        (d, pose.to_world([qx, qz]))
    } else {
        let dx = hx - lx.abs();
        let dz = hz - lz.abs();
        if dx < dz {
            (-dx, pose.to_world([hx.copysign(lx), lz]))
        } else {
            (-dz, pose.to_world([lx, hz.copysign(lz)]))
        }
    }
}

/// Contacts between one body and the static scene.
pub(crate) fn fixture_touches(body: usize, pose: &Frame, half: [f64; 2], fx: &Fixtures, out: &mut Touches) {
    for c in corners(pose, half) {
        if c[1] < 0.0 {
            if c[0] <= fx.table_edge_x {
                if -c[1] <= DEEP_BELOW_SURFACE {
                    out.push(Touch {
                        pair: ContactPair::Ground { body },
                        point: c,
                        normal: [0.0, 1.0],
                        depth: -c[1],
                    });
                } else {
                    out.push(Touch {
                        pair: ContactPair::Ground { body },
                        point: c,
                        normal: [1.0, 0.0],
                        depth: fx.table_edge_x - c[0],
                    });
                }
            }
        }
        if let Some(wx) = fx.wall_x {
            if c[0] > wx {
                let side = c[0] - wx;
                match fx.wall_height {
                    Some(h) if c[1] < h => {
                        let top = h - c[1];
                        if top < side {
                            out.push(Touch {
                                pair: ContactPair::WallTop { body },
                                point: c,
                                normal: [0.0, 1.0],
                                depth: top,
                            });
                        } else {
                            out.push(Touch {
                                pair: ContactPair::Wall { body },
                                point: c,
                                normal: [-1.0, 0.0],
                                depth: side,
                            });
                        }
                    }
                    Some(_) => {}
                    None => out.push(Touch {
                        pair: ContactPair::Wall { body },
                        point: c,
                        normal: [-1.0, 0.0],
                        depth: side,
                    }),
                }
            }
        }
    }
    let edge = [fx.table_edge_x, 0.0];
    // the table fills the quadrant below and left of its edge
    if let Some((m, depth)) = point_in_rect_facing(pose, half, edge, Some([-1.0, -1.0])) {
        out.push(Touch {
            pair: ContactPair::TableEdge { body },
            point: edge,
            normal: [-m[0], -m[1]],
            depth,
        });
    }
    if let (Some(wx), Some(h)) = (fx.wall_x, fx.wall_height) {
        let top = [wx, h];
        if let Some((m, depth)) = point_in_rect_facing(pose, half, top, Some([1.0, -1.0])) {
            out.push(Touch {
                pair: ContactPair::WallTop { body },
                point: top,
                normal: [-m[0], -m[1]],
                depth,
            });
        }
    }
}

/// Finger disk against one body.
pub(crate) fn finger_touch(body: usize, pose: &Frame, half: [f64; 2], finger: [f64; 2], radius: f64) -> Option<Touch> {
    let (dist, q) = rect_distance(pose, half, finger);
    if dist >= radius {
        return None;
    }
    let normal = if dist > 1e-12 {
        let d = sub(q, finger);
        let n = norm(d);
        [d[0] / n, d[1] / n]
    } else {
        // finger centre on or inside the boundary: push along the inward
        // normal of the nearest face
        let out = sub(q, finger);
        let n = norm(out);
        if n > 1e-12 {
            [-out[0] / n, -out[1] / n]
        } else {
            let l = pose.to_local(finger);
            let [hx, hz] = half;
            let m = if hx - l[0].abs() < hz - l[1].abs() {
                [1.0f64.copysign(l[0]), 0.0]
            } else {
                [0.0, 1.0f64.copysign(l[1])]
            };
            let w = pose.rotate(m);
            [-w[0], -w[1]]
        }
    };
    Some(Touch {
        pair: ContactPair::Finger { body },
        point: q,
        normal,
        depth: radius - dist,
    })
}

/// Corner-in-rectangle contacts between two bodies. Each touch has `a` as
/// the primary body.
pub(crate) fn body_touches(
    a: usize,
    pa: &Frame,
    ha: [f64; 2],
    b: usize,
    pb: &Frame,
    hb: [f64; 2],
    out: &mut Touches,
) {
    for c in corners(pa, ha) {
        if let Some((m, depth)) = point_in_rect(pb, hb, c) {
            out.push(Touch {
                pair: ContactPair::Bodies { a, b },
                point: c,
                normal: m,
                depth,
            });
        }
    }
    for c in corners(pb, hb) {
        if let Some((m, depth)) = point_in_rect(pa, ha, c) {
            out.push(Touch {
                pair: ContactPair::Bodies { a, b },
                point: c,
                normal: [-m[0], -m[1]],
                depth,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::world_model::Pose2;

    #[test]
    fn resting_box_touches_ground_at_two_corners() {
        let pose = Pose2::new(0.0, 0.0499, 0.0).frame();
        let mut out = Touches::new();
        fixture_touches(0, &pose, [0.05, 0.05], &Fixtures::default(), &mut out);
        assert_eq!(out.len(), 2);
        for t in &out {
            assert_eq!(t.normal, [0.0, 1.0]);
            assert!((t.depth - 1e-4).abs() < 1e-12);
        }
    }

    #[test]
    fn overhanging_board_rests_on_table_edge() {
        let fx = Fixtures {
            table_edge_x: 0.0,
            ..Fixtures::default()
        };
        let pose = Pose2::new(-0.05, 0.0099, 0.0).frame();
        let mut out = Touches::new();
        fixture_touches(0, &pose, [0.15, 0.01], &fx, &mut out);
        let edge: Vec<_> = out
            .iter()
            .filter(|t| matches!(t.pair, ContactPair::TableEdge { .. }))
            .collect();
        assert_eq!(out.len(), 2);
        assert_eq!(edge.len(), 1);
        assert!((edge[0].normal[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn finger_normal_points_into_body() {
        let pose = Pose2::new(0.0, 0.05, 0.0).frame();
        let t = finger_touch(0, &pose, [0.05, 0.05], [-0.058, 0.05], 0.01).unwrap();
        assert!((t.normal[0] - 1.0).abs() < 1e-12);
        assert!((t.depth - 0.002).abs() < 1e-12);
        assert!(finger_touch(0, &pose, [0.05, 0.05], [-0.07, 0.05], 0.01).is_none());
    }

    #[test]
    fn rect_distance_sign() {
        let pose = Pose2::new(0.0, 0.0, 0.3).frame();
        let (d, _) = rect_distance(&pose, [0.1, 0.05], [0.0, 0.0]);
        assert!((d + 0.05).abs() < 1e-12);
        let (d, q) = rect_distance(&pose, [0.1, 0.05], pose.to_world([0.3, 0.0]));
        assert!((d - 0.2).abs() < 1e-12);
        let lq = pose.to_local(q);
        assert!((lq[0] - 0.1).abs() < 1e-12);
    }
}
