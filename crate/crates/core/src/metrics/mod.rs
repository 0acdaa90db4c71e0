//! Classification metrics for both classifiers and text metrics for the
//! generated narratives. Everything here is a pure function of its inputs.

pub mod classification;
pub mod text;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classification::{
    average_precision, classification_report, one_hot_scores, roc_auc, ClassMetrics, ClassificationReport,
};
pub use text::{
    bert_score_f1, meteor, rouge_l_f1, score_text, HashEmbedder, TextScore, TokenEmbedder,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no items to score")]
    Empty,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite score")]
    NonFinite,
    #[error("text has no tokens: {0:?}")]
    EmptyText(String),
    #[error("embedding provider failed: {0}")]
    Provider(String),
}

/// A generated narrative and its reference description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NarrativePair {
    pub event_id: String,
    /// Ground truth is a crash, tire strike or near-crash.
    pub is_sce: bool,
    pub generated: String,
    pub reference: String,
}

/// One line of the per-event report. Exactly one of `score` and `error` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventScore {
    pub event_id: String,
    pub is_sce: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub score: Option<TextScore>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

/// Unweighted means over the scored events of one view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeans {
    pub scored: usize,
    pub excluded: usize,
    /// `None` when nothing in the view was scored.
    pub mean: Option<TextScore>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub events: Vec<EventScore>,
    pub all: CorpusMeans,
    pub sce: CorpusMeans,
}

fn means<'a>(rows: impl Iterator<Item = &'a EventScore>) -> CorpusMeans {
    let mut excluded = 0;
    let mut scores: Vec<&TextScore> = Vec::new();
    for r in rows {
        match &r.score {
            Some(s) => scores.push(s),
            None => excluded += 1,
        }
    }
    let n = scores.len() as f64;
    let mean = (!scores.is_empty()).then(|| TextScore {
        rouge_l_f1: scores.iter().map(|s| s.rouge_l_f1).sum::<f64>() / n,
        meteor: scores.iter().map(|s| s.meteor).sum::<f64>() / n,
        bert_f1: scores
            .iter()
            .map(|s| s.bert_f1)
            .collect::<Option<Vec<f64>>>()
            .map(|b| b.iter().sum::<f64>() / n),
    });
    CorpusMeans {
        scored: scores.len(),
        excluded,
        mean,
    }
}

impl CorpusReport {
    fn from_events(events: Vec<EventScore>) -> Self {
        let all = means(events.iter());
        let sce = means(events.iter().filter(|e| e.is_sce));
        Self { events, all, sce }
    }

    /// The report restricted to SCE ground truth, means recomputed.
    pub fn sce_only(&self) -> CorpusReport {
        Self::from_events(self.events.iter().filter(|e| e.is_sce).cloned().collect())
    }

    /// One JSON object per event, then a summary object.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("plain data serializes"));
            out.push('\n');
        }
        let summary = serde_json::json!({ "summary": { "all": self.all, "sce": self.sce } });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

/// Scores every pair. A pair that fails to score is kept in the report with
/// its error and left out of the means.
pub fn evaluate_narratives(
    pairs: &[NarrativePair],
    provider: Option<&dyn TokenEmbedder>,
) -> Result<CorpusReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let events = pairs
        .par_iter()
        .map(|p| {
            let (score, error) = match score_text(&p.generated, &p.reference, provider) {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(e.to_string())),
            };
            EventScore {
                event_id: p.event_id.clone(),
                is_sce: p.is_sce,
                score,
                error,
            }
        })
        .collect();
    Ok(CorpusReport::from_events(events))
}
