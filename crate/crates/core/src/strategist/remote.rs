use std::time::Duration;

use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::contact_strategy::RegionDocument;
use crate::cost::{load_spec, spec_digest, CostSpec};
use crate::world_model::ParamUpdate;

use super::prompts;
use super::{
    validate_response, HeuristicStrategist, RefinementKind, Strategist, StrategistError, StrategistRequest,
    StrategistResponse,
};

pub const ENV_BASE_URL: &str = "CORAL_LLM_BASE_URL";
pub const ENV_API_KEY: &str = "CORAL_LLM_API_KEY";
pub const ENV_MODEL: &str = "CORAL_LLM_MODEL";
const DEFAULT_MODEL: &str = "gpt-4o";

/// Where and how to reach the chat-completion endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
}

impl EndpointConfig {
    pub fn new(base_url: &str) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: None,
            model: DEFAULT_MODEL.to_string(),
            timeout: Duration::from_secs(60),
        }
    }

    /// Read the endpoint from the environment; `None` without a base URL.
    pub fn from_env() -> Option<Self> {
        let base = std::env::var(ENV_BASE_URL).ok().filter(|s| !s.is_empty())?;
        let mut cfg = Self::new(&base);
        cfg.api_key = std::env::var(ENV_API_KEY).ok().filter(|s| !s.is_empty());
        if let Ok(m) = std::env::var(ENV_MODEL) {
            if !m.is_empty() {
                cfg.model = m;
            }
        }
        Some(cfg)
    }

    fn url(&self) -> String {
        format!("{}/v1/chat/completions", self.base_url)
    }
}

/// The JSON payload of a reply: the first fenced code block if there is
/// one, otherwise the first parseable JSON value in the text.
pub fn extract_json(text: &str) -> Option<Value> {
    if let Some(start) = text.find("```") {
        let after = &text[start + 3..];
        let body_start = after.find('\n').map_or(0, |i| i + 1);
        let body = &after[body_start..];
        if let Some(end) = body.find("```") {
            if let Ok(v) = serde_json::from_str(body[..end].trim()) {
                return Some(v);
            }
        }
    }
    for (i, c) in text.char_indices() {
        if c == '{' || c == '[' {
            let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
            if let Some(Ok(v)) = stream.next() {
                return Some(v);
            }
        }
    }
    None
}

/// Explanation following a `---` separator line, if any.
fn explanation_of(text: &str) -> Option<String> {
    let mut parts = text.splitn(2, "\n---");
    parts.next()?;
    let rest = parts.next()?.trim_start_matches('-').trim();
    (!rest.is_empty()).then(|| rest.to_string())
}

fn decode<T: DeserializeOwned>(v: Value) -> Result<T, String> {
    serde_json::from_value(v).map_err(|e| e.to_string())
}

/// Parameters in either the estimation shape
/// (`{label: {mass_kg, friction_coeff, ...}}`) or the refinement shape
/// (`[{label, mass, friction}]`).
pub fn parse_params(v: Value) -> Result<Vec<ParamUpdate>, String> {
    let number = |v: Option<&Value>| -> Result<Option<f64>, String> {
        match v {
            None | Some(Value::Null) => Ok(None),
            Some(Value::Number(n)) => Ok(n.as_f64()),
            Some(Value::String(s)) => s
                .trim()
                .parse::<f64>()
                .map(Some)
                .map_err(|_| format!("expected a number, got \"{s}\"")),
            Some(other) => Err(format!("expected a number, got {other}")),
        }
    };
    let out = match v {
        Value::Array(items) => items
            .into_iter()
            .map(|item| {
                let label = item
                    .get("label")
                    .and_then(Value::as_str)
                    .ok_or("each entry needs a string `label`")?
                    .to_string();
                Ok(ParamUpdate {
                    label,
                    mass: number(item.get("mass").or_else(|| item.get("mass_kg")))?,
                    friction: number(
                        item.get("friction")
                            .or_else(|| item.get("friction_coef"))
                            .or_else(|| item.get("friction_coeff")),
                    )?,
                })
            })
            .collect::<Result<Vec<_>, String>>()?,
        Value::Object(map) => map
            .into_iter()
            .map(|(label, item)| {
                Ok(ParamUpdate {
                    mass: number(item.get("mass_kg").or_else(|| item.get("mass")))?,
                    friction: number(item.get("friction_coeff").or_else(|| item.get("friction")))?,
                    label,
                })
            })
            .collect::<Result<Vec<_>, String>>()?,
        other => return Err(format!("expected a JSON object or array, got {other}")),
    };
    if out.is_empty() {
        return Err("no parameters in reply".into());
    }
    Ok(out)
}

/// Strategist backed by an OpenAI-compatible chat endpoint. Every answer is
/// validated; an invalid answer is retried once with the diagnostics, and a
/// second failure (or any transport error) falls back to the heuristic.
pub struct RemoteStrategist {
    config: EndpointConfig,
    agent: ureq::Agent,
    fallback: HeuristicStrategist,
    /// Human-readable record of every fallback taken.
    pub degradations: Vec<String>,
}

impl RemoteStrategist {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(true)
            .build()
            .into();
        Self {
            config,
            agent,
            fallback: HeuristicStrategist,
            degradations: Vec::new(),
        }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// One chat-completion round trip returning the assistant's text.
    pub fn complete(&self, prompt: &str) -> Result<String, String> {
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": prompts::SYSTEM.trim()},
                {"role": "user", "content": prompt},
            ],
        });
        let mut req = self.agent.post(&self.config.url());
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| format!("request failed: {e}"))?;
        let v: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| format!("unreadable response body: {e}"))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| "response has no choices[0].message.content".to_string())
    }

    /// Ask, parse, and validate; retry once with diagnostics appended.
    fn ask<T>(&self, prompt: &str, mut parse: impl FnMut(&str) -> Result<T, String>) -> Result<T, String> {
        let mut text = self.complete(prompt)?;
        match parse(&text) {
            Ok(v) => Ok(v),
            Err(first) => {
                log::warn!("remote strategist reply rejected: {first}");
                let retry = format!(
                    "{prompt}\n\nYour previous reply could not be used:\n{first}\nReply again, fixing these problems."
                );
                text = self.complete(&retry)?;
                parse(&text).map_err(|second| format!("{first}; after retry: {second}"))
            }
        }
    }

    fn degrade(&mut self, what: &str, why: &str) {
        let msg = format!("{what}: {why}; using heuristic strategist");
        log::warn!("{msg}");
        self.degradations.push(msg);
    }

    /// Physical parameter estimates for every object in the belief.
    pub fn estimate_params(&self, req: &StrategistRequest) -> Result<Vec<ParamUpdate>, String> {
        let belief = &req.belief;
        self.ask(&prompts::estimate_params_prompt(req), |text| {
            let v = extract_json(text).ok_or("no JSON found in reply")?;
            let params = parse_params(v)?;
            let resp = StrategistResponse {
                params: Some(params.clone()),
                ..StrategistResponse::default()
            };
            validate_response(&resp, belief).map_err(|e| e.to_string())?;
            Ok(params)
        })
    }

    fn ask_spec(&self, prompt: &str, req: &StrategistRequest) -> Result<(CostSpec, Option<String>), String> {
        self.ask(prompt, |text| {
            let v = extract_json(text).ok_or("no JSON found in reply")?;
            let loaded = load_spec(&v.to_string(), Some(&req.belief)).map_err(|e| e.to_string())?;
            Ok((loaded.spec, explanation_of(text)))
        })
    }

    fn ask_regions(&self, req: &StrategistRequest) -> Result<RegionDocument, String> {
        self.ask(&prompts::regions_prompt(req), |text| {
            let v = extract_json(text).ok_or("no JSON found in reply")?;
            let doc: RegionDocument = decode(v)?;
            let resp = StrategistResponse {
                regions: Some(doc.clone()),
                ..StrategistResponse::default()
            };
            validate_response(&resp, &req.belief).map_err(|e| e.to_string())?;
            Ok(doc)
        })
    }
}

impl Strategist for RemoteStrategist {
    fn name(&self) -> &str {
        "remote"
    }

    fn formulate(&mut self, req: &StrategistRequest) -> Result<StrategistResponse, StrategistError> {
        let heuristic = self.fallback.formulate(req)?;
        let mut out = StrategistResponse {
            explanation: "remote plan".into(),
            ..StrategistResponse::default()
        };
        match self.ask_spec(&prompts::cost_spec_prompt(req), req) {
            Ok((spec, _)) => out.spec = Some(spec),
            Err(e) => {
                self.degrade("cost specification", &e);
                out.spec = heuristic.spec.clone();
                out.degraded = true;
            }
        }
        match self.ask_regions(req) {
            Ok(doc) => out.regions = Some(doc),
            Err(e) => {
                self.degrade("contact regions", &e);
                out.regions = heuristic.regions.clone();
                out.degraded = true;
            }
        }
        Ok(out)
    }

    fn refine_params(&mut self, req: &StrategistRequest) -> StrategistResponse {
        let belief = &req.belief;
        let result = self.ask(&prompts::refine_params_prompt(req), |text| {
            let v = extract_json(text).ok_or("no JSON found in reply")?;
            let params = parse_params(v)?;
            let resp = StrategistResponse {
                params: Some(params),
                explanation: explanation_of(text).unwrap_or_else(|| "remote parameter estimate".into()),
                kind: Some(RefinementKind::Params),
                ..StrategistResponse::default()
            };
            validate_response(&resp, belief).map_err(|e| e.to_string())?;
            Ok(resp)
        });
        match result {
            Ok(resp) => resp,
            Err(e) => {
                self.degrade("parameter refinement", &e);
                let mut resp = self.fallback.refine_params(req);
                resp.degraded = true;
                resp
            }
        }
    }

    fn refine_plan(&mut self, req: &StrategistRequest) -> StrategistResponse {
        match self.ask_spec(&prompts::refine_plan_prompt(req), req) {
            Ok((spec, explanation)) => {
                let changed = req.failing_spec.as_ref().map(spec_digest) != Some(spec_digest(&spec));
                StrategistResponse {
                    spec: Some(spec),
                    explanation: explanation.unwrap_or_else(|| "remote plan revision".into()),
                    kind: Some(if changed {
                        RefinementKind::Remote
                    } else {
                        RefinementKind::Unchanged
                    }),
                    ..StrategistResponse::default()
                }
            }
            Err(e) => {
                self.degrade("plan refinement", &e);
                let mut resp = self.fallback.refine_plan(req);
                resp.degraded = true;
                resp
            }
        }
    }
}
