//! Parsing and validation of cost-spec documents.

use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{Blending, CostSpec, CostTerm, Stage, StagePredicate, Transition, WEIGHT_GUIDANCE, WEIGHT_LIMIT};
use crate::world_model::WorldBelief;

/// Ratio between the largest and smallest nonzero weight above which a
/// spec is flagged as imbalanced.
const IMBALANCE_RATIO: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("cost spec is not valid JSON at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("cost spec is invalid:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

impl SpecError {
    /// All problems as a flat list, suitable for feeding back to a strategist.
    pub fn diagnostics(&self) -> Vec<String> {
        match self {
            SpecError::Syntax { .. } => vec![self.to_string()],
            SpecError::Invalid(v) => v.clone(),
        }
    }
}

/// A validated spec with any non-fatal warnings raised while loading.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSpec {
    pub spec: CostSpec,
    pub warnings: Vec<String>,
}

fn parse_terms(v: Option<&Value>, path: &str, errors: &mut Vec<String>) -> Vec<CostTerm> {
    let Some(v) = v else {
        return Vec::new();
    };
    let Some(items) = v.as_array() else {
        errors.push(format!("{path}: expected an array of terms"));
        return Vec::new();
    };
    items
        .iter()
        .enumerate()
        .filter_map(|(i, item)| match serde_json::from_value::<CostTerm>(item.clone()) {
            Ok(t) => Some(t),
            Err(e) => {
                errors.push(format!("{path}[{i}]: {e}"));
                None
            }
        })
        .collect()
}

fn parse_structure(doc: &Value, errors: &mut Vec<String>) -> Option<CostSpec> {
    let Some(obj) = doc.as_object() else {
        errors.push("document must be a JSON object".into());
        return None;
    };
    for key in obj.keys() {
        if !matches!(key.as_str(), "stages" | "blending" | "terminal_terms") {
            errors.push(format!("unexpected top-level field `{key}`"));
        }
    }
    let mut stages = Vec::new();
    match obj.get("stages").and_then(Value::as_array) {
        Some(arr) => {
            for (i, st) in arr.iter().enumerate() {
                let path = format!("stages[{i}]");
                let Some(so) = st.as_object() else {
                    errors.push(format!("{path}: expected an object"));
                    continue;
                };
                let terms = parse_terms(so.get("terms"), &format!("{path}.terms"), errors);
                if so.get("terms").is_none() {
                    errors.push(format!("{path}: missing `terms`"));
                }
                let transition = match so.get("transition") {
                    None | Some(Value::Null) => None,
                    Some(t) => match serde_json::from_value::<Transition>(t.clone()) {
                        Ok(t) => Some(t),
                        Err(e) => {
                            errors.push(format!("{path}.transition: {e}"));
                            None
                        }
                    },
                };
                let name = so.get("name").and_then(Value::as_str).map(str::to_string);
                stages.push(Stage { name, terms, transition });
            }
        }
        None => errors.push("missing `stages` array".into()),
    }
    let blending = match obj.get("blending") {
        None | Some(Value::Null) => Blending::HardSwitch,
        Some(b) => {
            let mut b = b.clone();
            // score terms are validated one by one for better messages
            let score = b.as_object_mut().and_then(|o| o.remove("score_terms"));
            let mut score_terms = parse_terms(score.as_ref(), "blending.score_terms", errors);
            if score.is_some() {
                if let Some(o) = b.as_object_mut() {
                    o.insert("score_terms".into(), Value::Array(vec![]));
                }
            }
            match serde_json::from_value::<Blending>(b) {
                Ok(Blending::SoftSwitch { gain, offset, .. }) => Blending::SoftSwitch {
                    score_terms: std::mem::take(&mut score_terms),
                    gain,
                    offset,
                },
                Ok(Blending::HardSwitch) => Blending::HardSwitch,
                Err(e) => {
                    errors.push(format!("blending: {e}"));
                    Blending::HardSwitch
                }
            }
        }
    };
    let terminal_terms = parse_terms(obj.get("terminal_terms"), "terminal_terms", errors);
    Some(CostSpec {
        stages,
        blending,
        terminal_terms,
    })
}

fn check_predicate(p: &StagePredicate, path: &str, errors: &mut Vec<String>) {
    if !p.threshold.is_finite() {
        errors.push(format!("{path}: threshold must be finite"));
    }
}

/// Semantic checks on an already-typed spec. Returns (errors, warnings).
pub fn validate(spec: &CostSpec, belief: Option<&WorldBelief>) -> (Vec<String>, Vec<String>) {
    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    if spec.stages.is_empty() {
        errors.push("spec needs at least one stage".into());
    }
    if let Some(last) = spec.stages.last() {
        if last.transition.is_some() {
            errors.push(format!("stages[{}]: the last stage must not have a transition", spec.stages.len() - 1));
        }
    }
    let check_label = |label: &str, path: &str, errors: &mut Vec<String>| {
        if let Some(b) = belief {
            if !b.contains(label) {
                errors.push(format!("{path}: unknown object label `{label}`"));
            }
        }
    };
    let mut check_term = |t: &CostTerm, path: &str, errors: &mut Vec<String>| {
        if !t.weight.is_finite() || t.weight < 0.0 || t.weight > WEIGHT_LIMIT {
            errors.push(format!("{path}: weight {} outside [0, {WEIGHT_LIMIT}]", t.weight));
        } else if t.weight < WEIGHT_GUIDANCE.0 || t.weight > WEIGHT_GUIDANCE.1 {
            warnings.push(format!(
                "{path}: weight {} outside the recommended range [{}, {}]",
                t.weight, WEIGHT_GUIDANCE.0, WEIGHT_GUIDANCE.1
            ));
        }
        match &t.kind {
            super::TermKind::ForceBand { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                    errors.push(format!("{path}: force band needs finite lo <= hi (got [{lo}, {hi}])"));
                }
            }
            super::TermKind::LateralDrift { axis, .. } => {
                let n = axis[0].hypot(axis[1]);
                if (n - 1.0).abs() > 1e-9 {
                    errors.push(format!("{path}: axis must be unit length (norm {n})"));
                }
            }
            super::TermKind::OverhangProgress { desired, .. } if !(*desired > 0.0) => {
                errors.push(format!("{path}: desired overhang must be > 0"));
            }
            super::TermKind::Stability { rate, .. } if !(*rate > 0.0) => {
                errors.push(format!("{path}: stability rate must be > 0"));
            }
            _ => {}
        }
        for l in t.kind.labels() {
            check_label(l, path, errors);
        }
    };
    for (i, s) in spec.stages.iter().enumerate() {
        for (j, t) in s.terms.iter().enumerate() {
            check_term(t, &format!("stages[{i}].terms[{j}]"), &mut errors);
        }
        if let Some(tr) = &s.transition {
            if tr.all.is_empty() {
                errors.push(format!("stages[{i}].transition: needs at least one predicate"));
            }
            for (k, p) in tr.all.iter().enumerate() {
                let path = format!("stages[{i}].transition.all[{k}]");
                check_predicate(p, &path, &mut errors);
                for l in p.metric.labels() {
                    check_label(l, &path, &mut errors);
                }
            }
        }
    }
    if let Blending::SoftSwitch { score_terms, gain, offset } = &spec.blending {
        if !(gain.is_finite() && offset.is_finite()) {
            errors.push("blending: gain and offset must be finite".into());
        }
        for (j, t) in score_terms.iter().enumerate() {
            check_term(t, &format!("blending.score_terms[{j}]"), &mut errors);
        }
    }
    for (j, t) in spec.terminal_terms.iter().enumerate() {
        check_term(t, &format!("terminal_terms[{j}]"), &mut errors);
    }

    let nonzero: Vec<f64> = spec
        .all_terms()
        .map(|t| t.weight)
        .filter(|w| w.is_finite() && *w > 0.0)
        .collect();
    if let (Some(lo), Some(hi)) = (
        nonzero.iter().cloned().reduce(f64::min),
        nonzero.iter().cloned().reduce(f64::max),
    ) {
        if hi / lo > IMBALANCE_RATIO {
            warnings.push(format!(
                "weights are imbalanced: largest/smallest = {:.0}:1 (above {IMBALANCE_RATIO:.0}:1)",
                hi / lo
            ));
        }
    }
    (errors, warnings)
}

/// Parse and validate a cost-spec document. With a belief, every label is
/// checked against it.
pub fn load_spec(document: &str, belief: Option<&WorldBelief>) -> Result<LoadedSpec, SpecError> {
    let doc: Value = serde_json::from_str(document).map_err(|e| SpecError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut errors = Vec::new();
    let spec = parse_structure(&doc, &mut errors);
    let spec = match spec {
        Some(s) if errors.is_empty() => s,
        _ => return Err(SpecError::Invalid(errors)),
    };
    let (errors, warnings) = validate(&spec, belief);
    if !errors.is_empty() {
        return Err(SpecError::Invalid(errors));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(LoadedSpec { spec, warnings })
}

/// Short content hash identifying a spec in traces.
pub fn spec_digest(spec: &CostSpec) -> String {
    let canonical = serde_json::to_string(spec).unwrap_or_default();
    let hash = Sha256::digest(canonical.as_bytes());
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::TermKind;

    const TWO_STAGE: &str = r#"{
      "stages": [
        {"terms": [
           {"kind": "distance_to_target", "weight": 1.0, "subject": "finger", "target": [0.1, 0.2]},
           {"kind": "contact_indicator", "weight": 2.0, "label": "box"}
         ],
         "transition": {"all": [
           {"metric": "overhang_of", "label": "box", "op": ">", "threshold": 0.06},
           {"metric": "speed_of", "label": "box", "op": "<", "threshold": 0.01}
         ]}},
        {"terms": [{"kind": "control_effort", "weight": 0.5}]}
      ],
      "blending": {"mode": "soft_switch", "gain": 12.0, "offset": 0.55,
                   "score_terms": [{"kind": "overhang_progress", "weight": 0.7, "label": "box", "desired": 0.08}]},
      "terminal_terms": [{"kind": "lift_reward", "weight": 3.2, "label": "box", "reference_height": 0.0}]
    }"#;

    #[test]
    fn round_trip_is_identical() {
        let a = load_spec(TWO_STAGE, None).unwrap().spec;
        let text = serde_json::to_string_pretty(&a).unwrap();
        let b = load_spec(&text, None).unwrap().spec;
        assert_eq!(a, b);
        assert_eq!(spec_digest(&a), spec_digest(&b));
        assert_eq!(spec_digest(&a).len(), 16);
    }

    #[test]
    fn imbalance_is_warned_not_rejected() {
        let doc = r#"{"stages": [{"terms": [
            {"kind": "distance_to_target", "weight": 1000.0, "subject": "finger", "target": [0, 0]},
            {"kind": "control_effort", "weight": 1.0}]}]}"#;
        let loaded = load_spec(doc, None).unwrap();
        assert!(loaded.warnings.iter().any(|w| w.contains("imbalanced")));
    }

    #[test]
    fn unknown_kind_is_named() {
        let doc = r#"{"stages": [{"terms": [{"kind": "teleport", "weight": 1.0}]}]}"#;
        let err = load_spec(doc, None).unwrap_err();
        assert!(err.to_string().contains("teleport"), "{err}");
    }

    #[test]
    fn every_violation_is_listed() {
        let doc = r#"{"stages": [
            {"terms": [{"kind": "control_effort", "weight": -1.0},
                       {"kind": "force_band", "weight": 1.0, "lo": 6.0, "hi": 4.0}],
             "transition": {"all": [{"metric": "speed_of", "label": "box", "op": "<", "threshold": 0.01}]}}]}"#;
        let SpecError::Invalid(errs) = load_spec(doc, None).unwrap_err() else {
            panic!("expected validation errors");
        };
        assert_eq!(errs.len(), 3, "{errs:?}");
    }

    #[test]
    fn syntax_error_has_location() {
        let err = load_spec("{\n  \"stages\": [,]\n}", None).unwrap_err();
        assert!(matches!(err, SpecError::Syntax { line: 2, .. }), "{err}");
    }

    #[test]
    fn labels_checked_against_belief() {
        use crate::world_model::{Fixtures, ObjectBelief, Pose2};
        let belief = WorldBelief::new(
            [ObjectBelief::new("crate", Pose2::default(), 1.0, 0.5, [0.1, 0.1])],
            Fixtures::default(),
        );
        let err = load_spec(TWO_STAGE, Some(&belief)).unwrap_err();
        assert!(err.to_string().contains("`box`"));
        let spec = CostSpec::single(vec![CostTerm::new(1.0, TermKind::StepPenalty)]);
        let text = serde_json::to_string(&spec).unwrap();
        load_spec(&text, Some(&belief)).unwrap();
    }
}
