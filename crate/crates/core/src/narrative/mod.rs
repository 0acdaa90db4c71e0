//! Narrative generation over a pluggable backend.
//!
//! A backend answers two kinds of request: a prompt about a clip
//! ([`GenerationBackend::video_describe`]) and a plain system/user text
//! exchange ([`GenerationBackend::text_generate`]). The strategies chain them:
//!
//! | strategy | calls |
//! |---|---|
//! | `direct` | `video_describe(clip, direct prompt)` |
//! | `chain_of_thought` | environment description, then `text_generate(SYSTEM_PROMPT, composed prompt)` |
//! | `chain_of_thought_repeat` | as above, then `text_generate(SYSTEM_PROMPT, repeat prompt)` |
//!
//! Templates, byte for byte (`<env>` is the environment text, `<E>` the event
//! type text, `<C>` the conflict label):
//!
//! ```text
//! composed, normal driving:  Describe this event: 1: <env>. 2: Normal Driving.
//! composed, otherwise:       Describe this event: 1: <env>. 2: <E>. 3: <C>.
//! direct, normal driving:    Describe this driving event from dashcam view. The event type is 'Normal Driving'.
//! direct, otherwise:         Describe this driving event from dashcam view. The event type is '<E>' and the conflict type is '<C>'.
//! repeat, normal driving:    Description: <previous answer>\nRestate the description. You must repeat the event type 'Normal Driving' exactly.
//! repeat, otherwise:         Description: <previous answer>\nRestate the description. You must repeat the event type '<E>' and conflict type '<C>' exactly.
//! ```

mod http;
mod mock;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{EventType, FrameSequence};

pub use http::{HttpBackend, HttpBackendConfig, BACKEND_TIMEOUT_ENV, BACKEND_URL_ENV, DEFAULT_TIMEOUT_S};
pub use mock::MockBackend;

pub const ENVIRONMENT_PROMPT: &str = "Describe this driving event from dashcam view.";
pub const SYSTEM_PROMPT: &str = "This is related to a driving event. Describe objectively.";
pub const BENCHMARK_SCE_PROMPT: &str = "If there is a safety critical event, describe it.";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStrategy {
    Direct,
    ChainOfThought,
    #[default]
    ChainOfThoughtRepeat,
}

impl PromptStrategy {
    pub const ALL: [PromptStrategy; 3] = [Self::Direct, Self::ChainOfThought, Self::ChainOfThoughtRepeat];

    pub fn key(self) -> &'static str {
        match self {
            Self::Direct => "direct",
            Self::ChainOfThought => "chain_of_thought",
            Self::ChainOfThoughtRepeat => "chain_of_thought_repeat",
        }
    }

    /// Backend calls one successful narrative takes.
    pub fn call_count(self) -> usize {
        match self {
            Self::Direct => 1,
            Self::ChainOfThought => 2,
            Self::ChainOfThoughtRepeat => 3,
        }
    }
}

impl fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for PromptStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Self::ALL
            .into_iter()
            .find(|p| p.key() == norm)
            .ok_or_else(|| format!("unknown prompt strategy {s:?}"))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend timed out after {0:?}")]
    Timeout(Duration),
    #[error("backend protocol error: {0}")]
    Protocol(String),
    #[error("backend refused: {0}")]
    Refusal(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

/// A vision-language and language model pair behind one interface. Both
/// methods must return text or an error, and must not panic on odd input.
pub trait GenerationBackend: Send + Sync {
    fn video_describe(&self, seq: &FrameSequence, prompt: &str) -> Result<String, BackendError>;
    fn text_generate(&self, system_prompt: &str, user_prompt: &str) -> Result<String, BackendError>;
    /// Recorded in every narrative.
    fn id(&self) -> String;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    VideoDescribe,
    TextGenerate,
}

/// One backend exchange.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendCall {
    pub event_id: String,
    /// 1-based position within the event's transcript.
    pub step: usize,
    pub kind: CallKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub system: Option<String>,
    pub prompt: String,
    pub response: String,
    pub duration_ms: u64,
}

/// A finished narrative. Timings live in `transcript` and `duration`, which
/// are not serialized, so narrative files are reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Narrative {
    pub event_id: String,
    pub strategy: PromptStrategy,
    /// Empty for the direct strategy, which never asks for it separately.
    pub environment_text: String,
    pub event_type_used: EventType,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub conflict_type_used: Option<String>,
    pub prompts_sent: Vec<String>,
    pub final_text: String,
    pub backend: String,
    #[serde(skip)]
    pub transcript: Vec<BackendCall>,
    #[serde(skip)]
    pub duration: Duration,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ComposeError {
    #[error("environment text is empty")]
    EmptyEnvironment,
    #[error("{0} needs a conflict label")]
    MissingConflict(EventType),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NarrativeErrorKind {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Compose(#[from] ComposeError),
    #[error("backend returned an empty final text")]
    EmptyOutput,
}

/// A failed event, with the calls that completed before the failure.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("event {event_id}: {kind}")]
pub struct NarrativeError {
    pub event_id: String,
    pub kind: NarrativeErrorKind,
    pub transcript: Vec<BackendCall>,
}

pub fn compose_user_prompt(
    environment: &str,
    event_type: EventType,
    conflict_type: Option<&str>,
) -> Result<String, ComposeError> {
    if environment.trim().is_empty() {
        return Err(ComposeError::EmptyEnvironment);
    }
    if !event_type.is_sce() {
        return Ok(format!("Describe this event: 1: {environment}. 2: Normal Driving."));
    }
    let conflict = conflict_type.ok_or(ComposeError::MissingConflict(event_type))?;
    Ok(format!("Describe this event: 1: {environment}. 2: {event_type}. 3: {conflict}."))
}

/// Single prompt for the direct strategy.
pub fn direct_prompt(event_type: EventType, conflict_type: Option<&str>) -> Result<String, ComposeError> {
    if !event_type.is_sce() {
        return Ok(format!("{ENVIRONMENT_PROMPT} The event type is 'Normal Driving'."));
    }
    let conflict = conflict_type.ok_or(ComposeError::MissingConflict(event_type))?;
    Ok(format!(
        "{ENVIRONMENT_PROMPT} The event type is '{event_type}' and the conflict type is '{conflict}'."
    ))
}

/// Third prompt of the repeat strategy. It carries the previous answer since
/// backends are stateless.
pub fn repeat_prompt(
    previous: &str,
    event_type: EventType,
    conflict_type: Option<&str>,
) -> Result<String, ComposeError> {
    if !event_type.is_sce() {
        return Ok(format!(
            "Description: {previous}\nRestate the description. You must repeat the event type 'Normal Driving' exactly."
        ));
    }
    let conflict = conflict_type.ok_or(ComposeError::MissingConflict(event_type))?;
    Ok(format!(
        "Description: {previous}\nRestate the description. You must repeat the event type '{event_type}' and conflict type '{conflict}' exactly."
    ))
}

/// Sequential calls for one event; every exchange is appended to the
/// transcript before the next is made.
struct Session<'a> {
    backend: &'a dyn GenerationBackend,
    event_id: &'a str,
    transcript: Vec<BackendCall>,
}

impl<'a> Session<'a> {
    fn new(backend: &'a dyn GenerationBackend, event_id: &'a str) -> Self {
        Self {
            backend,
            event_id,
            transcript: Vec::new(),
        }
    }

    fn record(&mut self, kind: CallKind, system: Option<&str>, prompt: &str, response: &str, took: Duration) {
        self.transcript.push(BackendCall {
            event_id: self.event_id.to_owned(),
            step: self.transcript.len() + 1,
            kind,
            system: system.map(str::to_owned),
            prompt: prompt.to_owned(),
            response: response.to_owned(),
            duration_ms: took.as_millis() as u64,
        });
    }

    fn describe(&mut self, seq: &FrameSequence, prompt: &str) -> Result<String, NarrativeError> {
        let t = Instant::now();
        let out = self.backend.video_describe(seq, prompt).map_err(|e| self.fail(e.into()))?;
        self.record(CallKind::VideoDescribe, None, prompt, &out, t.elapsed());
        Ok(out)
    }

    fn generate(&mut self, system: &str, prompt: &str) -> Result<String, NarrativeError> {
        let t = Instant::now();
        let out = self.backend.text_generate(system, prompt).map_err(|e| self.fail(e.into()))?;
        self.record(CallKind::TextGenerate, Some(system), prompt, &out, t.elapsed());
        Ok(out)
    }

    fn fail(&self, kind: NarrativeErrorKind) -> NarrativeError {
        NarrativeError {
            event_id: self.event_id.to_owned(),
            kind,
            transcript: self.transcript.clone(),
        }
    }
}

/// The raw answer to [`ENVIRONMENT_PROMPT`].
pub fn describe_environment(
    backend: &dyn GenerationBackend,
    event_id: &str,
    seq: &FrameSequence,
) -> Result<String, NarrativeError> {
    Session::new(backend, event_id).describe(seq, ENVIRONMENT_PROMPT)
}

/// Classifier outputs and clip for one event.
#[derive(Clone, Debug)]
pub struct NarrativeJob {
    pub event_id: String,
    pub frames: FrameSequence,
    pub event_type: EventType,
    /// Required unless `event_type` is normal driving; ignored then.
    pub conflict_label: Option<String>,
}

pub fn generate_narrative(
    backend: &dyn GenerationBackend,
    job: &NarrativeJob,
    strategy: PromptStrategy,
) -> Result<Narrative, NarrativeError> {
    let started = Instant::now();
    let mut s = Session::new(backend, &job.event_id);
    let conflict = job.event_type.is_sce().then_some(job.conflict_label.as_deref()).flatten();
    let compose_err = |s: &Session, e: ComposeError| s.fail(e.into());

    let mut environment = String::new();
    let final_text = match strategy {
        PromptStrategy::Direct => {
            let prompt = direct_prompt(job.event_type, conflict).map_err(|e| compose_err(&s, e))?;
            s.describe(&job.frames, &prompt)?
        }
        PromptStrategy::ChainOfThought | PromptStrategy::ChainOfThoughtRepeat => {
            if job.event_type.is_sce() && conflict.is_none() {
                return Err(compose_err(&s, ComposeError::MissingConflict(job.event_type)));
            }
            environment = s.describe(&job.frames, ENVIRONMENT_PROMPT)?;
            let user = compose_user_prompt(&environment, job.event_type, conflict).map_err(|e| compose_err(&s, e))?;
            let answer = s.generate(SYSTEM_PROMPT, &user)?;
            if strategy == PromptStrategy::ChainOfThought {
                answer
            } else {
                let again = repeat_prompt(&answer, job.event_type, conflict).map_err(|e| compose_err(&s, e))?;
                s.generate(SYSTEM_PROMPT, &again)?
            }
        }
    };
    if final_text.trim().is_empty() {
        return Err(s.fail(NarrativeErrorKind::EmptyOutput));
    }
    Ok(Narrative {
        event_id: job.event_id.clone(),
        strategy,
        environment_text: environment,
        event_type_used: job.event_type,
        conflict_type_used: conflict.map(str::to_owned),
        prompts_sent: s.transcript.iter().map(|c| c.prompt.clone()).collect(),
        final_text,
        backend: backend.id(),
        transcript: s.transcript,
        duration: started.elapsed(),
    })
}

/// Narratives for many events, at most `max_in_flight` at a time. Results
/// come back in job order.
pub fn generate_batch(
    backend: &dyn GenerationBackend,
    jobs: &[NarrativeJob],
    strategy: PromptStrategy,
    max_in_flight: usize,
) -> Vec<Result<Narrative, NarrativeError>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| jobs.par_iter().map(|j| generate_narrative(backend, j, strategy)).collect())
}

/// Baseline protocol: describe the clip, then ask about safety-critical
/// events, and join the two answers with one newline.
pub fn benchmark_prompts(
    backend: &dyn GenerationBackend,
    event_id: &str,
    seq: &FrameSequence,
) -> Result<(String, Vec<BackendCall>), NarrativeError> {
    let mut s = Session::new(backend, event_id);
    let first = s.describe(seq, ENVIRONMENT_PROMPT)?;
    let second = s.describe(seq, BENCHMARK_SCE_PROMPT)?;
    Ok((format!("{first}\n{second}"), s.transcript))
}
