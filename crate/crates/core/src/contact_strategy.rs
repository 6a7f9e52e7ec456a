//! Contact-region strategies: where on an object the finger should push.
//!
//! A region is an ellipse around a reference point in the object's frame.
//! Its intersection with the object's rectangular boundary is the set of
//! admissible contacts; candidates are drawn uniformly by arc length and the
//! one nearest the finger becomes a soft attractor in the cost.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::CostSpec;
use crate::world_model::{ObjectBelief, Pose2};

/// Default attractor weight.
pub const DEFAULT_ATTRACTOR_WEIGHT: f64 = 2.0;
/// Region growth factor and number of retries when the manifold is empty.
const FALLBACK_GROWTH: f64 = 1.5;
const FALLBACK_TRIES: usize = 3;
const ON_BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("region normal must be non-zero")]
    ZeroNormal,
    #[error("region extent must be >= 0 and finite (got {0})")]
    BadExtent(f64),
    #[error("region needs at least one sample")]
    NoSamples,
    #[error("region vector must have 2 or 3 components (got {0})")]
    BadDimension(usize),
    #[error("region document is not valid: {0}")]
    Parse(String),
    #[error("region refers to unknown object `{0}`")]
    UnknownLabel(String),
    #[error("cannot sample from an empty contact manifold")]
    EmptyManifold,
}

/// An elliptical region in an object's local frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactRegion {
    pub center: [f64; 2],
    pub normal: [f64; 2],
    pub extent: f64,
    pub num_samples: usize,
    /// Semi-axes along the object's local x and z.
    pub axes: [f64; 2],
}

impl ContactRegion {
    /// Region whose ellipse has the object's aspect ratio with its longer
    /// semi-axis equal to `extent`.
    pub fn new(
        center: [f64; 2],
        normal: [f64; 2],
        extent: f64,
        num_samples: usize,
        half_extents: [f64; 2],
    ) -> Result<Self, StrategyError> {
        let n = normal[0].hypot(normal[1]);
        if !(n > 0.0) || !n.is_finite() {
            return Err(StrategyError::ZeroNormal);
        }
        if !(extent >= 0.0 && extent.is_finite()) {
            return Err(StrategyError::BadExtent(extent));
        }
        if num_samples == 0 {
            return Err(StrategyError::NoSamples);
        }
        let big = half_extents[0].max(half_extents[1]);
        Ok(Self {
            center,
            normal: [normal[0] / n, normal[1] / n],
            extent,
            num_samples,
            axes: [extent * half_extents[0] / big, extent * half_extents[1] / big],
        })
    }

    fn with_extent(&self, extent: f64) -> Self {
        let s = if self.extent > 0.0 { extent / self.extent } else { 0.0 };
        Self {
            extent,
            axes: [self.axes[0] * s, self.axes[1] * s],
            ..self.clone()
        }
    }

    /// Whether a local point lies inside (or on) the ellipse.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let dx = p[0] - self.center[0];
        let dz = p[1] - self.center[1];
        if self.axes[0] == 0.0 || self.axes[1] == 0.0 {
            return dx.abs() <= ON_BOUNDARY_TOL && dz.abs() <= ON_BOUNDARY_TOL;
        }
        (dx / self.axes[0]).powi(2) + (dz / self.axes[1]).powi(2) <= 1.0 + 1e-9
    }
}

/// A straight piece of the object boundary in local coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: [f64; 2],
    pub b: [f64; 2],
    /// Outward boundary normal.
    pub normal: [f64; 2],
}

impl Segment {
    pub fn length(&self) -> f64 {
        (self.b[0] - self.a[0]).hypot(self.b[1] - self.a[1])
    }

    fn at(&self, s: f64) -> [f64; 2] {
        [
            self.a[0] + s * (self.b[0] - self.a[0]),
            self.a[1] + s * (self.b[1] - self.a[1]),
        ]
    }
}

/// Boundary pieces inside a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifold {
    pub segments: Vec<Segment>,
    pub total_length: f64,
}

impl Manifold {
    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

fn rectangle_edges(half: [f64; 2]) -> [Segment; 4] {
    let [hx, hz] = half;
    [
        Segment { a: [-hx, -hz], b: [hx, -hz], normal: [0.0, -1.0] },
        Segment { a: [hx, -hz], b: [hx, hz], normal: [1.0, 0.0] },
        Segment { a: [hx, hz], b: [-hx, hz], normal: [0.0, 1.0] },
        Segment { a: [-hx, hz], b: [-hx, -hz], normal: [-1.0, 0.0] },
    ]
}

/// Distance from a local point to the rectangle boundary.
pub fn boundary_distance(half: [f64; 2], p: [f64; 2]) -> f64 {
    let [hx, hz] = half;
    let dx = p[0].abs() - hx;
    let dz = p[1].abs() - hz;
    if dx <= 0.0 && dz <= 0.0 {
        -dx.max(dz)
    } else {
        dx.max(0.0).hypot(dz.max(0.0))
    }
}

fn nearest_boundary_point(half: [f64; 2], p: [f64; 2]) -> Segment {
    let mut best = (f64::INFINITY, rectangle_edges(half)[0], [0.0, 0.0]);
    for e in rectangle_edges(half) {
        let d = [e.b[0] - e.a[0], e.b[1] - e.a[1]];
        let l2 = d[0] * d[0] + d[1] * d[1];
        let s = (((p[0] - e.a[0]) * d[0] + (p[1] - e.a[1]) * d[1]) / l2).clamp(0.0, 1.0);
        let q = e.at(s);
        let dist = (q[0] - p[0]).hypot(q[1] - p[1]);
        if dist < best.0 {
            best = (dist, e, q);
        }
    }
    Segment {
        a: best.2,
        b: best.2,
        normal: best.1.normal,
    }
}

/// Intersection of the object boundary with the region's ellipse.
pub fn manifold(region: &ContactRegion, object: &ObjectBelief) -> Manifold {
    let half = object.half_extents;
    let mut segments = Vec::new();
    if region.axes[0] == 0.0 || region.axes[1] == 0.0 {
        if boundary_distance(half, region.center) <= ON_BOUNDARY_TOL {
            segments.push(nearest_boundary_point(half, region.center));
        }
        return Manifold {
            segments,
            total_length: 0.0,
        };
    }
    let [ax, az] = region.axes;
    for e in rectangle_edges(half) {
        // ((a + s d - c) / axes)^2 summed <= 1 is a quadratic in s
        let d = [(e.b[0] - e.a[0]) / ax, (e.b[1] - e.a[1]) / az];
        let o = [(e.a[0] - region.center[0]) / ax, (e.a[1] - region.center[1]) / az];
        let qa = d[0] * d[0] + d[1] * d[1];
        let qb = 2.0 * (o[0] * d[0] + o[1] * d[1]);
        let qc = o[0] * o[0] + o[1] * o[1] - 1.0;
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            continue;
        }
        let root = disc.sqrt();
        let s0 = ((-qb - root) / (2.0 * qa)).max(0.0);
        let s1 = ((-qb + root) / (2.0 * qa)).min(1.0);
        if s1 > s0 {
            segments.push(Segment {
                a: e.at(s0),
                b: e.at(s1),
                normal: e.normal,
            });
        }
    }
    let total_length = segments.iter().map(Segment::length).sum();
    Manifold {
        segments,
        total_length,
    }
}

/// Manifold with the fallback policy: grow the region by 1.5x up to three
/// times, then fall back to the boundary point nearest the region centre.
pub fn manifold_with_fallback(region: &ContactRegion, object: &ObjectBelief) -> (Manifold, ContactRegion) {
    let mut r = region.clone();
    for attempt in 0..=FALLBACK_TRIES {
        let m = manifold(&r, object);
        if !m.is_empty() {
            return (m, r);
        }
        if attempt < FALLBACK_TRIES {
            r = r.with_extent(r.extent * FALLBACK_GROWTH);
        }
    }
    log::warn!(
        "contact region on `{}` misses the boundary; using the nearest boundary point",
        object.label
    );
    let seg = nearest_boundary_point(object.half_extents, region.center);
    (
        Manifold {
            segments: vec![seg],
            total_length: 0.0,
        },
        r,
    )
}

/// A contact candidate: boundary point and outward normal, local frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub point: [f64; 2],
    pub normal: [f64; 2],
}

/// Draw `k` points uniformly by arc length over the manifold.
pub fn sample_candidates<R: Rng>(m: &Manifold, k: usize, rng: &mut R) -> Result<Vec<Candidate>, StrategyError> {
    if m.is_empty() {
        return Err(StrategyError::EmptyManifold);
    }
    if m.total_length <= 0.0 {
        let s = m.segments[0];
        return Ok(vec![
            Candidate {
                point: s.a,
                normal: s.normal,
            };
            k
        ]);
    }
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let mut u = rng.random::<f64>() * m.total_length;
        let mut chosen = *m.segments.last().expect("non-empty");
        let mut frac = 1.0;
        for s in &m.segments {
            let l = s.length();
            if u <= l {
                chosen = *s;
                frac = if l > 0.0 { u / l } else { 0.0 };
                break;
            }
            u -= l;
        }
        out.push(Candidate {
            point: chosen.at(frac),
            normal: chosen.normal,
        });
    }
    Ok(out)
}

/// Uniform samples on a disk of radius `r` around `center`, orthogonal to
/// `normal`, in three dimensions.
pub fn sample_disk<R: Rng>(
    center: [f64; 3],
    normal: [f64; 3],
    r: f64,
    k: usize,
    rng: &mut R,
) -> Result<Vec<[f64; 3]>, StrategyError> {
    let n_len = (normal[0] * normal[0] + normal[1] * normal[1] + normal[2] * normal[2]).sqrt();
    if !(n_len > 0.0) || !n_len.is_finite() {
        return Err(StrategyError::ZeroNormal);
    }
    let n = [normal[0] / n_len, normal[1] / n_len, normal[2] / n_len];
    let cross = |a: [f64; 3], b: [f64; 3]| {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    };
    let axis = if n[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [0.0, 1.0, 0.0] };
    let t1 = cross(n, axis);
    let l1 = (t1[0] * t1[0] + t1[1] * t1[1] + t1[2] * t1[2]).sqrt();
    let t1 = [t1[0] / l1, t1[1] / l1, t1[2] / l1];
    let t2 = cross(n, t1);
    Ok((0..k)
        .map(|_| {
            let rho = rng.random::<f64>().sqrt() * r;
            let theta = 2.0 * PI * rng.random::<f64>();
            let (s, c) = theta.sin_cos();
            [
                center[0] + rho * (c * t1[0] + s * t2[0]),
                center[1] + rho * (c * t1[1] + s * t2[1]),
                center[2] + rho * (c * t1[2] + s * t2[2]),
            ]
        })
        .collect())
}

/// Candidate contacts on one object plus the chosen attractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactStrategy {
    pub label: String,
    pub regions: Vec<ContactRegion>,
    pub candidates: Vec<Candidate>,
    /// Index into `candidates` of the chosen contact.
    pub chosen: usize,
    pub attractor_weight: f64,
    /// Stage of the cost spec that receives the attractor.
    #[serde(default)]
    pub stage: usize,
}

impl ContactStrategy {
    /// Sample candidates from every region and choose the one closest to
    /// the finger.
    pub fn build<R: Rng>(
        object: &ObjectBelief,
        regions: Vec<ContactRegion>,
        finger: [f64; 2],
        attractor_weight: f64,
        rng: &mut R,
    ) -> Result<Self, StrategyError> {
        let mut candidates = Vec::new();
        for r in &regions {
            let (m, _) = manifold_with_fallback(r, object);
            candidates.extend(sample_candidates(&m, r.num_samples, rng)?);
        }
        if candidates.is_empty() {
            return Err(StrategyError::EmptyManifold);
        }
        let chosen = nearest_candidate(&candidates, &object.pose, finger);
        Ok(Self {
            label: object.label.clone(),
            regions,
            candidates,
            chosen,
            attractor_weight,
            stage: 0,
        })
    }

    /// Chosen contact point in the object frame.
    pub fn x_des(&self) -> [f64; 2] {
        self.candidates[self.chosen].point
    }

    /// Where the finger centre should sit to touch `x_des`: offset outward
    /// along the boundary normal by the finger radius.
    pub fn attractor_point(&self, finger_radius: f64) -> [f64; 2] {
        let c = self.candidates[self.chosen];
        [
            c.point[0] + c.normal[0] * finger_radius,
            c.point[1] + c.normal[1] * finger_radius,
        ]
    }

    /// Re-pick the candidate nearest the finger for the object's pose.
    pub fn rechoose(&mut self, pose: &Pose2, finger: [f64; 2]) {
        self.chosen = nearest_candidate(&self.candidates, pose, finger);
    }
}

fn nearest_candidate(candidates: &[Candidate], pose: &Pose2, finger: [f64; 2]) -> usize {
    let frame = pose.frame();
    let mut best = (f64::INFINITY, 0);
    for (i, c) in candidates.iter().enumerate() {
        let w = frame.to_world(c.point);
        let d = (w[0] - finger[0]).hypot(w[1] - finger[1]);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Return a copy of `spec` with the strategy's attractor added to its
/// stage. The input spec is not modified.
pub fn attach_attractor(spec: &CostSpec, strategy: &ContactStrategy, finger_radius: f64) -> CostSpec {
    spec.with_attractor(
        strategy.stage,
        Some(&strategy.label),
        strategy.attractor_point(finger_radius),
        strategy.attractor_weight,
    )
}

/// One region as written by a strategist. Vectors may be planar `[x, z]`
/// or spatial `[x, y, z]`; spatial vectors are projected onto x-z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub center: Vec<f64>,
    pub normal: Vec<f64>,
    pub extent: f64,
    pub num_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRegions {
    pub regions: Vec<RegionSpec>,
}

/// Region document: object label to its regions.
pub type RegionDocument = BTreeMap<String, ObjectRegions>;

fn planar(v: &[f64]) -> Result<[f64; 2], StrategyError> {
    match v.len() {
        2 => Ok([v[0], v[1]]),
        3 => Ok([v[0], v[2]]),
        n => Err(StrategyError::BadDimension(n)),
    }
}

/// Parse and validate a region document against the objects it names.
pub fn parse_regions(
    document: &str,
    objects: &BTreeMap<String, ObjectBelief>,
) -> Result<BTreeMap<String, Vec<ContactRegion>>, StrategyError> {
    let doc: RegionDocument = serde_json::from_str(document).map_err(|e| StrategyError::Parse(e.to_string()))?;
    regions_from_document(&doc, objects)
}

pub fn regions_from_document(
    doc: &RegionDocument,
    objects: &BTreeMap<String, ObjectBelief>,
) -> Result<BTreeMap<String, Vec<ContactRegion>>, StrategyError> {
    let mut out = BTreeMap::new();
    for (label, regs) in doc {
        let obj = objects
            .get(label)
            .ok_or_else(|| StrategyError::UnknownLabel(label.clone()))?;
        let parsed = regs
            .regions
            .iter()
            .map(|r| {
                ContactRegion::new(
                    planar(&r.center)?,
                    planar(&r.normal)?,
                    r.extent,
                    r.num_samples,
                    obj.half_extents,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.insert(label.clone(), parsed);
    }
    Ok(out)
}

/// Serialise regions back into the document shape.
pub fn regions_to_document(regions: &BTreeMap<String, Vec<ContactRegion>>) -> RegionDocument {
    regions
        .iter()
        .map(|(label, rs)| {
            (
                label.clone(),
                ObjectRegions {
                    regions: rs
                        .iter()
                        .map(|r| RegionSpec {
                            center: r.center.to_vec(),
                            normal: r.normal.to_vec(),
                            extent: r.extent,
                            num_samples: r.num_samples,
                        })
                        .collect(),
                },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world_model::Pose2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn block() -> ObjectBelief {
        ObjectBelief::new("block", Pose2::default(), 1.0, 0.5, [0.1, 0.05])
    }

    #[test]
    fn huge_region_covers_perimeter() {
        let r = ContactRegion::new([0.0, 0.0], [1.0, 0.0], 10.0, 5, [0.1, 0.05]).unwrap();
        let m = manifold(&r, &block());
        assert!((m.total_length - 0.6).abs() < 1e-12);
    }

    #[test]
    fn distant_region_is_empty() {
        let r = ContactRegion::new([1.0, 1.0], [1.0, 0.0], 0.1, 5, [0.1, 0.05]).unwrap();
        assert!(manifold(&r, &block()).is_empty());
    }

    #[test]
    fn fallback_lands_on_boundary() {
        let r = ContactRegion::new([1.0, 0.0], [1.0, 0.0], 0.1, 5, [0.1, 0.05]).unwrap();
        let (m, _) = manifold_with_fallback(&r, &block());
        assert_eq!(m.segments.len(), 1);
        assert_eq!(m.segments[0].a, [0.1, 0.0]);
    }

    #[test]
    fn single_point_manifold() {
        let r = ContactRegion::new([0.1, 0.0], [1.0, 0.0], 0.0, 1, [0.1, 0.05]).unwrap();
        let m = manifold(&r, &block());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = sample_candidates(&m, 1, &mut rng).unwrap();
        assert_eq!(c[0].point, [0.1, 0.0]);
    }

    #[test]
    fn disk_in_the_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = sample_disk([0.0; 3], [0.0, 0.0, 1.0], 0.1, 500, &mut rng).unwrap();
        assert!(pts.iter().all(|p| p[2].abs() < 1e-15 && (p[0] * p[0] + p[1] * p[1]).sqrt() <= 0.1 + 1e-12));
        let zero = sample_disk([1.0, 2.0, 3.0], [1.0, 0.0, 0.0], 0.0, 4, &mut rng).unwrap();
        assert!(zero.iter().all(|p| *p == [1.0, 2.0, 3.0]));
        assert_eq!(
            sample_disk([0.0; 3], [0.0; 3], 0.1, 1, &mut rng),
            Err(StrategyError::ZeroNormal)
        );
    }

    #[test]
    fn attractor_is_value_semantic() {
        let obj = block();
        let r = ContactRegion::new([-0.1, 0.0], [-1.0, 0.0], 0.05, 8, obj.half_extents).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = ContactStrategy::build(&obj, vec![r], [-0.3, 0.0], 2.0, &mut rng).unwrap();
        let spec = CostSpec::single(vec![]);
        let with = attach_attractor(&spec, &s, 0.01);
        assert!(spec.stages[0].terms.is_empty());
        assert_eq!(with.stages[0].terms.len(), 1);
        let p = s.attractor_point(0.01);
        assert!((p[0] + 0.11).abs() < 1e-12);
    }

    #[test]
    fn listing_region_document() {
        let doc = r#"{"block": {"regions": [{"center": [-0.1, 0.0, 0.0], "normal": [-1.0, 0.0, 0.0],
                      "extent": 0.1, "num_samples": 30}]}}"#;
        let objects: BTreeMap<_, _> = [("block".to_string(), block())].into_iter().collect();
        let regions = parse_regions(doc, &objects).unwrap();
        assert_eq!(regions["block"][0].num_samples, 30);
        assert_eq!(regions["block"][0].center, [-0.1, 0.0]);
        assert!(parse_regions(r#"{"spoon": {"regions": []}}"#, &objects).is_err());
    }
}
