//! Append-only store of successful plans, retrieved by task-text overlap and
//! parameter similarity to warm-start new runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contact_strategy::RegionDocument;
use crate::cost::{validate, CostSpec};
use crate::world_model::{WorldBelief, FRICTION_CLAMP, MASS_CLAMP};

/// Default similarity required for a retrieval hit.
pub const DEFAULT_THRESHOLD: f64 = 0.7;

/// Mass and friction of one object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub mass: f64,
    pub friction: f64,
}

pub type Theta = BTreeMap<String, Params>;

pub fn theta_of(belief: &WorldBelief) -> Theta {
    belief
        .objects
        .iter()
        .map(|(l, o)| {
            (
                l.clone(),
                Params {
                    mass: o.mass,
                    friction: o.friction,
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    /// Simulation steps used by the successful run, all attempts included.
    pub steps: u64,
    /// Distance travelled by the finger (m).
    pub path_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub id: u64,
    pub task_text: String,
    pub theta: Theta,
    pub spec: CostSpec,
    #[serde(default)]
    pub regions: RegionDocument,
    pub outcome: Outcome,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("memory entry rejected: {0}")]
    Invalid(String),
    #[error("cannot read memory file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Lowercase alphanumeric tokens.
fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Jaccard overlap of the token sets of two texts.
pub fn token_overlap(a: &str, b: &str) -> f64 {
    let (ta, tb) = (tokens(a), tokens(b));
    let union = ta.union(&tb).count();
    if union == 0 {
        return 1.0;
    }
    ta.intersection(&tb).count() as f64 / union as f64
}

fn log_span((lo, hi): (f64, f64)) -> f64 {
    (hi / lo).ln()
}

/// Euclidean norm of per-parameter differences, each measured as a log
/// ratio divided by the log width of that parameter's admissible range.
/// An object present on only one side contributes the maximum of 1 per
/// parameter.
pub fn theta_distance(a: &Theta, b: &Theta) -> f64 {
    let labels: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    let mut sq = 0.0;
    for l in labels {
        match (a.get(l), b.get(l)) {
            (Some(x), Some(y)) => {
                let dm = (x.mass / y.mass).ln().abs() / log_span(MASS_CLAMP);
                let df = (x.friction / y.friction).ln().abs() / log_span(FRICTION_CLAMP);
                sq += dm * dm + df * df;
            }
            _ => sq += 2.0,
        }
    }
    sq.sqrt()
}

/// `0.5 * token_overlap + 0.5 * exp(-theta_distance)`.
pub fn similarity(task_text: &str, theta: &Theta, entry: &MemoryEntry) -> f64 {
    0.5 * token_overlap(task_text, &entry.task_text) + 0.5 * (-theta_distance(theta, &entry.theta)).exp()
}

/// Line-delimited JSON store. Without a path it lives only in memory.
#[derive(Debug, Default)]
pub struct MemoryStore {
    path: Option<PathBuf>,
    entries: Vec<MemoryEntry>,
}

impl MemoryStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Load a store from `path`, creating nothing until the first write.
    /// Lines that fail to parse or validate are skipped with a warning.
    pub fn open(path: &Path) -> Result<Self, MemoryError> {
        let mut entries = Vec::new();
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|source| MemoryError::Io {
                path: path.display().to_string(),
                source,
            })?;
            for (n, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<MemoryEntry>(line) {
                    Ok(e) => match check(&e) {
                        Ok(()) => entries.push(e),
                        Err(why) => log::warn!("{}:{}: skipping entry: {why}", path.display(), n + 1),
                    },
                    Err(err) => log::warn!("{}:{}: skipping unreadable entry: {err}", path.display(), n + 1),
                }
            }
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            entries,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn get(&self, id: u64) -> Option<&MemoryEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Validate and append an entry, assigning it a fresh id. A failed
    /// write keeps the entry for this process and logs a warning.
    pub fn store(&mut self, mut entry: MemoryEntry) -> Result<u64, MemoryError> {
        check(&entry).map_err(MemoryError::Invalid)?;
        entry.id = self.entries.iter().map(|e| e.id + 1).max().unwrap_or(1);
        if let Some(path) = &self.path {
            let line = serde_json::to_string(&entry).expect("entries serialize");
            let written = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .and_then(|mut f| writeln!(f, "{line}"));
            if let Err(e) = written {
                log::warn!("could not persist memory entry to {}: {e}", path.display());
            }
        }
        let id = entry.id;
        self.entries.push(entry);
        Ok(id)
    }

    /// Most similar entry at or above `threshold`; later entries win ties.
    pub fn retrieve(&self, task_text: &str, theta: &Theta, threshold: f64) -> Option<(&MemoryEntry, f64)> {
        let mut best: Option<(&MemoryEntry, f64)> = None;
        for e in &self.entries {
            let s = similarity(task_text, theta, e);
            if s >= threshold && best.is_none_or(|(_, b)| s >= b) {
                best = Some((e, s));
            }
        }
        best
    }
}

fn check(e: &MemoryEntry) -> Result<(), String> {
    let (errors, _) = validate(&e.spec, None);
    if !errors.is_empty() {
        return Err(errors.join("; "));
    }
    for (l, p) in &e.theta {
        if !(p.mass > 0.0 && p.mass.is_finite() && p.friction > 0.0 && p.friction.is_finite()) {
            return Err(format!("non-positive parameters for `{l}`"));
        }
    }
    for (l, r) in &e.regions {
        for reg in &r.regions {
            if !(reg.extent >= 0.0) || reg.num_samples == 0 || reg.normal.iter().all(|v| *v == 0.0) {
                return Err(format!("invalid contact region for `{l}`"));
            }
        }
    }
    Ok(())
}

/// Seconds since the Unix epoch, or 0 if the clock is unavailable.
pub fn now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}
