use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use coral::contact_strategy::{
    attach_attractor, boundary_distance, manifold, manifold_with_fallback, parse_regions, regions_to_document,
    ContactRegion, ContactStrategy,
};
use coral::cost::{CostSpec, CostTerm, TermKind};
use coral::world_model::{ObjectBelief, Pose2};

fn box_at(x: f64) -> ObjectBelief {
    ObjectBelief::new("box", Pose2::new(x, 0.05, 0.0), 0.5, 0.5, [0.05, 0.05])
}

#[test]
fn region_on_a_face_gives_that_face() {
    let obj = box_at(0.0);
    let r = ContactRegion::new([-0.05, 0.0], [-1.0, 0.0], 0.02, 10, obj.half_extents).unwrap();
    let m = manifold(&r, &obj);
    assert_eq!(m.segments.len(), 1);
    assert_eq!(m.segments[0].normal, [-1.0, 0.0]);
    assert!((m.total_length - 0.04).abs() < 1e-12);
}

#[test]
fn distant_region_falls_back_to_nearest_point() {
    let obj = box_at(0.0);
    let r = ContactRegion::new([-0.5, 0.0], [-1.0, 0.0], 0.01, 4, obj.half_extents).unwrap();
    let (m, _) = manifold_with_fallback(&r, &obj);
    assert_eq!(m.segments.len(), 1);
    assert_eq!(m.total_length, 0.0);
    assert!(boundary_distance(obj.half_extents, m.segments[0].a) < 1e-12);
    assert!((m.segments[0].a[0] + 0.05).abs() < 1e-12);
}

#[test]
fn bad_regions_are_rejected() {
    assert!(ContactRegion::new([0.0, 0.0], [0.0, 0.0], 0.1, 3, [0.05, 0.05]).is_err());
    assert!(ContactRegion::new([0.0, 0.0], [1.0, 0.0], -0.1, 3, [0.05, 0.05]).is_err());
    assert!(ContactRegion::new([0.0, 0.0], [1.0, 0.0], 0.1, 0, [0.05, 0.05]).is_err());
    let objects: BTreeMap<_, _> = [("box".to_string(), box_at(0.0))].into();
    assert!(parse_regions(r#"{"ghost": {"regions": []}}"#, &objects).is_err());
    assert!(parse_regions(r#"{"box": {"regions": [{"center": [1], "normal": [1, 0], "extent": 0.1, "num_samples": 2}]}}"#, &objects).is_err());
}

#[test]
fn spatial_vectors_project_to_the_plane() {
    let objects: BTreeMap<_, _> = [("box".to_string(), box_at(0.0))].into();
    let doc = r#"{"box": {"regions": [{"center": [-0.05, 0.3, 0.01], "normal": [-1, 0, 0], "extent": 0.02, "num_samples": 5}]}}"#;
    let parsed = parse_regions(doc, &objects).unwrap();
    assert_eq!(parsed["box"][0].center, [-0.05, 0.01]);
    let back = regions_to_document(&parsed);
    assert_eq!(back["box"].regions[0].center, vec![-0.05, 0.01]);
}

#[test]
fn strategy_picks_the_candidate_nearest_the_finger() {
    let obj = box_at(0.0);
    let regions = vec![
        ContactRegion::new([-0.05, 0.0], [-1.0, 0.0], 0.02, 10, obj.half_extents).unwrap(),
        ContactRegion::new([0.05, 0.0], [1.0, 0.0], 0.02, 10, obj.half_extents).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = ContactStrategy::build(&obj, regions, [0.4, 0.05], 2.0, &mut rng).unwrap();
    assert_eq!(s.candidates.len(), 20);
    assert!(s.x_des()[0] > 0.0);
    let a = s.attractor_point(0.01);
    assert!((a[0] - 0.06).abs() < 1e-12);

    let spec = CostSpec::single(vec![CostTerm::new(1.0, TermKind::ControlEffort)]);
    let with = attach_attractor(&spec, &s, 0.01);
    assert_eq!(spec.stages[0].terms.len(), 1);
    assert_eq!(with.stages[0].terms.len(), 2);
    assert!(matches!(with.stages[0].terms[1].kind, TermKind::Attractor { .. }));
}

proptest! {
    #[test]
    fn candidates_stay_on_the_boundary(cx in -0.08f64..0.08, cz in -0.08f64..0.08, extent in 0.001f64..0.2, seed in any::<u64>()) {
        let obj = box_at(0.0);
        let r = ContactRegion::new([cx, cz], [1.0, 0.0], extent, 16, obj.half_extents).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = ContactStrategy::build(&obj, vec![r], [0.0, 0.5], 1.0, &mut rng).unwrap();
        for c in &s.candidates {
            prop_assert!(boundary_distance(obj.half_extents, c.point) < 1e-9);
            prop_assert!((c.normal[0].hypot(c.normal[1]) - 1.0).abs() < 1e-12);
        }
    }
}
