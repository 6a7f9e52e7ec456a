use crate::cost::{Comparator, CostSpec, WEIGHT_GUIDANCE};

use super::identify::identify_params;
use super::templates::template;
use super::{RefinementKind, Strategist, StrategistError, StrategistRequest, StrategistResponse};

/// Fraction by which an unreached transition's thresholds are relaxed.
const RELAX: f64 = 0.2;
/// Factor applied to the weight of the dominant residual term.
const BOOST: f64 = 2.0;

/// Deterministic strategist: task templates, least-squares identification,
/// and a fixed refinement schedule.
#[derive(Debug, Clone, Default)]
pub struct HeuristicStrategist;

impl HeuristicStrategist {
    pub fn new() -> Self {
        Self
    }
}

impl Strategist for HeuristicStrategist {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn formulate(&mut self, req: &StrategistRequest) -> Result<StrategistResponse, StrategistError> {
        let (spec, regions) = template(req)?;
        Ok(StrategistResponse {
            spec: Some(spec),
            regions: Some(regions),
            params: None,
            explanation: format!("template plan for {}", req.task),
            kind: None,
            degraded: false,
        })
    }

    fn refine_params(&mut self, req: &StrategistRequest) -> StrategistResponse {
        let (fits, notes) = identify_params(&req.samples, &req.belief);
        let mut explanation: Vec<String> = fits
            .iter()
            .map(|f| {
                format!(
                    "`{}`: mass {:.3} kg, friction {:.3} from {} samples (rms residual {:.3} N)",
                    f.label, f.mass, f.friction, f.samples, f.residual
                )
            })
            .collect();
        explanation.extend(notes);
        StrategistResponse {
            params: (!fits.is_empty()).then(|| fits.iter().map(|f| f.update()).collect()),
            explanation: explanation.join("; "),
            kind: Some(RefinementKind::Params),
            ..StrategistResponse::default()
        }
    }

    fn refine_plan(&mut self, req: &StrategistRequest) -> StrategistResponse {
        match &req.failing_spec {
            Some(spec) => {
                let (spec, kind, explanation) = refine_plan(spec, req);
                StrategistResponse {
                    spec: Some(spec),
                    explanation,
                    kind: Some(kind),
                    ..StrategistResponse::default()
                }
            }
            None => StrategistResponse {
                explanation: "no failing spec supplied; plan unchanged".into(),
                kind: Some(RefinementKind::Unchanged),
                ..StrategistResponse::default()
            },
        }
    }
}

fn relax(op: Comparator, t: f64) -> f64 {
    match op {
        Comparator::Gt | Comparator::Ge => t - RELAX * t.abs(),
        Comparator::Lt | Comparator::Le => t + RELAX * t.abs(),
    }
}

/// The refinement schedule. When a transition never fired and the previous
/// refinement was not a threshold change, relax that transition by 20%.
/// Otherwise double the weight of the term with the largest mean weighted
/// contribution over the episode tail.
pub fn refine_plan(spec: &CostSpec, req: &StrategistRequest) -> (CostSpec, RefinementKind, String) {
    let mut out = spec.clone();
    let last_stage = spec.stages.len().saturating_sub(1);
    let stuck = req.stage_reached.min(last_stage);
    let last_was_threshold = matches!(req.previous.last(), Some(RefinementKind::Threshold { .. }));

    if stuck < last_stage && !last_was_threshold {
        if let Some(tr) = out.stages[stuck].transition.as_mut() {
            let mut changes = Vec::new();
            for p in &mut tr.all {
                let old = p.threshold;
                p.threshold = relax(p.op, old);
                changes.push(format!("{old} -> {}", p.threshold));
            }
            return (
                out,
                RefinementKind::Threshold { stage: stuck },
                format!("stage {stuck} never completed; relaxed its transition ({})", changes.join(", ")),
            );
        }
    }

    let stage = req.tail.last().map_or(stuck, |s| s.stage).min(last_stage);
    let n_terms = out.stages[stage].terms.len();
    let mut residual = vec![0.0; n_terms];
    for step in req.tail.iter().filter(|s| s.stage == stage) {
        for (r, v) in residual.iter_mut().zip(step.terms.iter()) {
            *r += v;
        }
    }
    let mut order: Vec<usize> = (0..n_terms).collect();
    order.sort_by(|&a, &b| residual[b].total_cmp(&residual[a]).then(a.cmp(&b)));
    for j in order {
        let t = &mut out.stages[stage].terms[j];
        let new = (t.weight * BOOST).clamp(WEIGHT_GUIDANCE.0, WEIGHT_GUIDANCE.1);
        if new != t.weight {
            let old = t.weight;
            t.weight = new;
            let explanation = format!(
                "term {j} ({}) dominated the residual cost in stage {stage}; weight {old} -> {new}",
                t.kind.name()
            );
            return (out, RefinementKind::Weight { stage, term: j }, explanation);
        }
    }
    (
        out,
        RefinementKind::Unchanged,
        "every weight is at its limit; plan unchanged".into(),
    )
}
