use proptest::prelude::*;

use coral::sim::{keep_out, step_in_place, PhysicsModel, SimConfig, SimState};
use coral::world_model::{Fixtures, ObjectBelief, Pose2, WorldBelief};

fn one_box(mass: f64, friction: f64) -> WorldBelief {
    WorldBelief::new(
        [ObjectBelief::new("box", Pose2::new(0.0, 0.05, 0.0), mass, friction, [0.05, 0.05])],
        Fixtures::default(),
    )
}

fn settle(world: &WorldBelief, finger: [f64; 2], u: [f64; 2], steps: usize) -> SimState {
    let cfg = SimConfig::default();
    let model = PhysicsModel::from_belief(world);
    let mut s = SimState::new(world, finger, &cfg);
    for _ in 0..steps {
        step_in_place(&mut s, u, &model, &cfg);
    }
    s
}

#[test]
fn resting_box_stays_put() {
    let s = settle(&one_box(0.5, 0.5), [-0.3, 0.3], [0.0, 0.0], 500);
    let b = &s.bodies[0];
    assert!((b.pose.x).abs() < 1e-6);
    assert!((b.pose.z - 0.05).abs() < 1e-3);
    assert!(b.pose.rotation.abs() < 1e-6);
    assert!(!s.fault);
}

#[test]
fn pushed_box_slides_forward() {
    let s = settle(&one_box(0.5, 0.3), [-0.07, 0.04], [0.02, 0.0], 300);
    assert!(s.bodies[0].pose.x > 0.1, "box at {}", s.bodies[0].pose.x);
    assert!(s.bodies[0].pose.z > 0.0);
}

#[test]
fn stepping_is_deterministic() {
    let a = settle(&one_box(0.3, 0.4), [-0.07, 0.03], [0.03, 0.005], 200);
    let b = settle(&one_box(0.3, 0.4), [-0.07, 0.03], [0.03, 0.005], 200);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn contacts_respect_the_friction_cone() {
    let world = one_box(0.4, 0.5);
    let cfg = SimConfig::default();
    let model = PhysicsModel::from_belief(&world);
    let mut s = SimState::new(&world, [-0.07, 0.08], &cfg);
    let mut seen = 0;
    for k in 0..400 {
        let u = if k < 200 { [0.02, -0.002] } else { [0.01, 0.01] };
        step_in_place(&mut s, u, &model, &cfg);
        for c in &s.contacts {
            seen += 1;
            assert!(c.normal_force >= -1e-12);
            assert!(c.tangential_force.abs() <= c.mu * c.normal_force + 1e-9);
        }
    }
    assert!(seen > 100);
}

#[test]
fn finger_cannot_enter_the_table() {
    let world = WorldBelief::new(
        [ObjectBelief::new("box", Pose2::new(-0.5, 0.05, 0.0), 0.5, 0.5, [0.05, 0.05])],
        Fixtures { table_edge_x: 0.0, ..Fixtures::default() },
    );
    let s = settle(&world, [0.05, 0.05], [-0.01, -0.05], 400);
    let r = SimConfig::default().finger_radius;
    let p = s.finger.pos;
    assert!(p[0] >= r - 1e-9 || p[1] >= r - 1e-9, "finger at {p:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projected_finger_is_outside_solids(x in -0.5f64..0.5, z in -0.5f64..0.5) {
        let fx = Fixtures { table_edge_x: 0.0, wall_x: Some(0.3), wall_height: Some(0.1), ..Fixtures::default() };
        let r = 0.01;
        let p = keep_out([x, z], &fx, r);
        let in_table = p[0] < -r + 1e-9 && p[1] < -r + 1e-9;
        let in_wall = p[0] > 0.3 + r - 1e-9 && p[1] < 0.1 - r - 1e-9;
        prop_assert!(!in_table && !in_wall, "{:?} -> {:?}", [x, z], p);
    }

    #[test]
    fn random_pushes_never_fault(ux in -0.05f64..0.05, uz in -0.05f64..0.05, m in 0.05f64..2.0, mu in 0.1f64..1.0) {
        let s = settle(&one_box(m, mu), [-0.07, 0.05], [ux, uz], 150);
        prop_assert!(!s.fault);
        prop_assert!(s.bodies[0].pose.z > -0.01);
        prop_assert!(s.bodies[0].speed() < 2.0, "box speed {}", s.bodies[0].speed());
    }
}
