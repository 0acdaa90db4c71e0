//! Line-per-event output files. Field names are stable.
//!
//! `predictions.jsonl`:
//!
//! ```text
//! {"event_id":"ev00003","event_type":"crash","event_scores":[2.1,-0.3,0.4,-1.9],
//!  "conflict":{"label":1,"text":"Conflict with a lead vehicle","scores":[...16...],
//!              "top_k":[{"label":1,"text":"...","score":0.93}, ...]}}
//! ```
//!
//! `event_scores` are the classifier logits in event-type order; `conflict`
//! is present only when the matcher ran, and its `scores` are the cosines
//! against the 16 trainable labels in id order.
//!
//! `narratives.jsonl` holds one narrative object per event, or
//! `{"event_id":..,"error":..,"completed_calls":n}` for an event that failed.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::CliError;
use crate::data::{ConflictId, EventType};
use crate::narrative::Narrative;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedLabel {
    pub label: ConflictId,
    pub text: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConflictOutput {
    pub label: ConflictId,
    pub text: String,
    pub scores: Vec<f64>,
    pub top_k: Vec<RankedLabel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub event_id: String,
    pub event_type: EventType,
    pub event_scores: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub conflict: Option<ConflictOutput>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedNarrative {
    pub event_id: String,
    pub error: String,
    pub completed_calls: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NarrativeLine {
    Ok(Narrative),
    Failed(FailedNarrative),
}

impl NarrativeLine {
    pub fn event_id(&self) -> &str {
        match self {
            NarrativeLine::Ok(n) => &n.event_id,
            NarrativeLine::Failed(f) => &f.event_id,
        }
    }
}

pub fn to_jsonl<T: Serialize>(rows: &[T]) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::Artifact(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}
