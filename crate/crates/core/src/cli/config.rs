//! Run configuration.
//!
//! A config file is TOML with one optional table per command:
//!
//! ```toml
//! [synth]
//! root = "data"
//! seed = 7
//! profile = "event_types"
//! per_type = 100
//!
//! [train]
//! task = "conflict"
//! epochs = 60
//! video.token_dim = 32
//! ```
//!
//! Each command reads only its own table. `--set key=value` overrides a key
//! inside that table (dotted keys reach nested tables); the value is parsed
//! as a TOML value and falls back to a plain string. Unknown tables and keys
//! are errors. Every run writes its resolved table as `<command>.resolved.toml`
//! next to its outputs, in a form `--config` accepts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use super::CliError;
use crate::encoders::{TextEncoderConfig, VideoEncoderConfig};
use crate::narrative::PromptStrategy;
use crate::synth::CountEntry;
use crate::Optimizer;

pub const SECTIONS: [&str; 6] = ["synth", "split", "train", "infer", "narrate", "evaluate"];

fn default_manifest() -> PathBuf {
    PathBuf::from("data/manifest.jsonl")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `per_type` events of each event type.
    #[default]
    EventTypes,
    /// `total_sce` events in reference conflict-type proportions plus
    /// `normal` normal-driving events.
    Table,
    /// Exactly the entries in `counts`.
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub root: PathBuf,
    pub seed: u64,
    pub num_frames: usize,
    pub height: usize,
    pub width: usize,
    pub fps: f64,
    pub profile: Profile,
    pub per_type: usize,
    pub total_sce: usize,
    pub normal: usize,
    pub counts: Vec<CountEntry>,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            root: PathBuf::from("data"),
            seed: 0,
            num_frames: 77,
            height: 64,
            width: 64,
            fps: 15.0,
            profile: Profile::EventTypes,
            per_type: 100,
            total_sce: 0,
            normal: 0,
            counts: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSection {
    pub manifest: PathBuf,
    pub seed: u64,
    pub train: f64,
    pub test: f64,
    pub val: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self {
            manifest: default_manifest(),
            seed: 0,
            train: 0.7,
            test: 0.2,
            val: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    Event,
    Conflict,
}

impl Task {
    pub fn key(self) -> &'static str {
        match self {
            Task::Event => "event",
            Task::Conflict => "conflict",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub manifest: PathBuf,
    pub task: Task,
    /// Directory for `<task>.ckpt` and `<task>_log.jsonl`.
    pub out: PathBuf,
    pub seed: u64,
    /// Class-covering share of the train split to use.
    pub fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub weight_decay: f64,
    pub video: VideoEncoderConfig,
    /// Conflict task only.
    pub text: TextEncoderConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = crate::TrainConfig::default();
        Self {
            manifest: default_manifest(),
            task: Task::Event,
            out: PathBuf::from("runs"),
            seed: 0,
            fraction: 1.0,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            optimizer: t.optimizer,
            weight_decay: t.weight_decay,
            video: VideoEncoderConfig::default(),
            text: TextEncoderConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSelection {
    Train,
    Val,
    #[default]
    Test,
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferSection {
    pub manifest: PathBuf,
    pub event_checkpoint: PathBuf,
    pub conflict_checkpoint: PathBuf,
    pub out: PathBuf,
    pub split: SplitSelection,
    /// Run the conflict matcher on every event, not only predicted SCEs.
    pub force_conflict: bool,
    pub top_k: usize,
}

impl Default for InferSection {
    fn default() -> Self {
        Self {
            manifest: default_manifest(),
            event_checkpoint: PathBuf::from("runs/event.ckpt"),
            conflict_checkpoint: PathBuf::from("runs/conflict.ckpt"),
            out: PathBuf::from("runs/predictions.jsonl"),
            split: SplitSelection::Test,
            force_conflict: false,
            top_k: 5,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    /// Endpoint and timeout come from the environment.
    Http,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendSection {
    pub kind: BackendKind,
    pub seed: u64,
    pub model: String,
    pub max_tokens: u32,
    pub frames_per_request: usize,
}

impl Default for BackendSection {
    fn default() -> Self {
        let h = crate::narrative::HttpBackendConfig::default();
        Self {
            kind: BackendKind::Mock,
            seed: 0,
            model: h.model,
            max_tokens: h.max_tokens,
            frames_per_request: h.frames_per_request,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NarrateSection {
    pub manifest: PathBuf,
    pub predictions: PathBuf,
    pub out: PathBuf,
    /// Per-call log with timings.
    pub transcripts: PathBuf,
    pub strategy: PromptStrategy,
    pub max_in_flight: usize,
    pub backend: BackendSection,
}

impl Default for NarrateSection {
    fn default() -> Self {
        Self {
            manifest: default_manifest(),
            predictions: PathBuf::from("runs/predictions.jsonl"),
            out: PathBuf::from("runs/narratives.jsonl"),
            transcripts: PathBuf::from("runs/transcripts.jsonl"),
            strategy: PromptStrategy::ChainOfThoughtRepeat,
            max_in_flight: 4,
            backend: BackendSection::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    #[default]
    All,
    /// Only events whose ground truth is a crash, tire strike or near-crash.
    Sce,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingProvider {
    #[default]
    None,
    /// Deterministic hash embeddings; for plumbing checks, not for scores
    /// that mean anything.
    Hash,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    pub manifest: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub narratives: Option<PathBuf>,
    /// Defaults to `references.jsonl` next to the manifest.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub references: Option<PathBuf>,
    pub out: PathBuf,
    pub subset: Subset,
    pub top_k: usize,
    pub embedding: EmbeddingProvider,
    pub embedding_dim: usize,
    pub embedding_seed: u64,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            manifest: default_manifest(),
            predictions: None,
            narratives: None,
            references: None,
            out: PathBuf::from("runs/eval"),
            subset: Subset::All,
            top_k: 5,
            embedding: EmbeddingProvider::None,
            embedding_dim: 64,
            embedding_seed: 0,
        }
    }
}

fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_owned())),
        Err(_) => Value::String(raw.to_owned()),
    }
}

fn apply_override(table: &mut Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set {assignment:?}: expected key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("--set {assignment:?}: empty key segment")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry((*p).to_owned()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("--set {key}: {p} is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_owned(), parse_value(raw.trim()));
    Ok(())
}

/// The `section` table of `file` (if any) with `overrides` applied, as `T`.
pub fn load_section<T: DeserializeOwned>(
    file: Option<&Path>,
    section: &str,
    overrides: &[String],
) -> Result<T, CliError> {
    let mut root = match file {
        None => Table::new(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            text.parse::<Table>()
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
    };
    if let Some(bad) = root.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
        return Err(CliError::Config(format!(
            "unknown config table [{bad}]; expected one of {}",
            SECTIONS.join(", ")
        )));
    }
    let mut table = match root.remove(section) {
        None => Table::new(),
        Some(Value::Table(t)) => t,
        Some(_) => return Err(CliError::Config(format!("[{section}] must be a table"))),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    T::deserialize(Value::Table(table)).map_err(|e| CliError::Config(format!("[{section}]: {e}")))
}

/// `[section]` followed by `value`, ready to be read back with `--config`.
pub fn resolved_text<T: Serialize>(section: &str, value: &T) -> Result<String, CliError> {
    let mut root = Table::new();
    let v = Value::try_from(value).map_err(|e| CliError::Config(e.to_string()))?;
    root.insert(section.to_owned(), v);
    toml::to_string(&root).map_err(|e| CliError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_keys() {
        let t: TrainSection = load_section(
            None,
            "train",
            &["epochs=3".into(), "video.token_dim=8".into(), "task=conflict".into()],
        )
        .unwrap();
        assert_eq!((t.epochs, t.video.token_dim, t.task), (3, 8, Task::Conflict));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(load_section::<TrainSection>(None, "train", &["epoch=3".into()]).is_err());
        assert!(load_section::<TrainSection>(None, "train", &["nonsense".into()]).is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let s = EvaluateSection {
            predictions: Some("p.jsonl".into()),
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.toml");
        fs::write(&path, resolved_text("evaluate", &s).unwrap()).unwrap();
        let back: EvaluateSection = load_section(Some(&path), "evaluate", &[]).unwrap();
        assert_eq!(back, s);
    }
}
