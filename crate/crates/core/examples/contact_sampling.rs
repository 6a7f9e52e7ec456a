//! Contact candidates sampled from a strategist-style region document and
//! the attractor term they add to a cost spec.
//!
//! cargo run --release --example contact_sampling

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use coral::contact_strategy::{attach_attractor, parse_regions, sample_disk, ContactStrategy};
use coral::cost::{CostSpec, CostTerm, TermKind};
use coral::world_model::{ObjectBelief, Pose2};

fn main() -> anyhow::Result<()> {
    let board = ObjectBelief::new("board", Pose2::new(-0.25, 0.02, 0.0), 0.25, 0.5, [0.15, 0.02]);
    let objects = [(board.label.clone(), board.clone())].into();
    let doc = r#"{
        "board": {"regions": [
            {"center": [-0.15, 0.0, 0.0], "normal": [-1.0, 0.0, 0.0], "extent": 0.02, "num_samples": 8},
            {"center": [0.0, 0.02], "normal": [0.0, 1.0], "extent": 0.05, "num_samples": 8}
        ]}
    }"#;
    let regions = parse_regions(doc, &objects)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let strategy = ContactStrategy::build(&board, regions["board"].clone(), [-0.45, 0.02], 2.0, &mut rng)?;

    println!("{} candidates on `{}`:", strategy.candidates.len(), strategy.label);
    for (i, c) in strategy.candidates.iter().enumerate() {
        let mark = if i == strategy.chosen { "*" } else { " " };
        println!(
            "{mark} local ({:+.4}, {:+.4}) normal ({:+.1}, {:+.1})",
            c.point[0], c.point[1], c.normal[0], c.normal[1]
        );
    }
    let spec = CostSpec::single(vec![CostTerm::new(1.0, TermKind::ControlEffort)]);
    let guided = attach_attractor(&spec, &strategy, 0.01);
    println!("attractor term: {}", serde_json::to_string(guided.stages[0].terms.last().unwrap())?);

    // the three-dimensional disk sampler used for spatial regions
    let pts = sample_disk([0.0, 0.0, 0.0], [0.0, 0.0, 1.0], 0.1, 10_000, &mut rng)?;
    let mean = pts.iter().map(|p| p[0].hypot(p[1])).sum::<f64>() / pts.len() as f64;
    println!("disk sampler mean radius {mean:.4} (uniform disk: {:.4})", 2.0 / 3.0 * 0.1);
    Ok(())
}
