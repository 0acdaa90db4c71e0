//! JSON-over-HTTP backend.
//!
//! Each call POSTs one object to the endpoint:
//!
//! ```json
//! {"model": "...", "system": "...", "prompt": "...", "max_tokens": 512,
//!  "temperature": 0, "seed": 0, "frames": ["<base64 png>", ...]}
//! ```
//!
//! `system` is empty and `frames` is present only for clip descriptions. The
//! reply must be an object with a string field `text`; a string field
//! `refusal` instead is reported as a refusal.

use std::io::Cursor;
use std::time::Duration;

use base64::Engine;
use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BackendError, GenerationBackend};
use crate::data::FrameSequence;
use crate::encoders::sample_indices;

pub const BACKEND_URL_ENV: &str = "SCVLM_BACKEND_URL";
pub const BACKEND_TIMEOUT_ENV: &str = "SCVLM_BACKEND_TIMEOUT_S";
pub const DEFAULT_TIMEOUT_S: u64 = 120;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HttpBackendConfig {
    pub model: String,
    pub max_tokens: u32,
    pub seed: u64,
    /// Frames sent per clip, evenly spaced.
    pub frames_per_request: usize,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        Self {
            model: "default".into(),
            max_tokens: 512,
            seed: 0,
            frames_per_request: 8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HttpBackend {
    pub url: String,
    pub timeout: Duration,
    pub config: HttpBackendConfig,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, timeout: Duration, config: HttpBackendConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(true)
            .build()
            .into();
        Self {
            url: url.into(),
            timeout,
            config,
            agent,
        }
    }

    /// Endpoint from `SCVLM_BACKEND_URL`, timeout in seconds from
    /// `SCVLM_BACKEND_TIMEOUT_S` (default 120).
    pub fn from_env(config: HttpBackendConfig) -> Result<Self, BackendError> {
        let url = std::env::var(BACKEND_URL_ENV)
            .ok()
            .filter(|u| !u.trim().is_empty())
            .ok_or_else(|| BackendError::Config(format!("{BACKEND_URL_ENV} is not set")))?;
        let timeout = match std::env::var(BACKEND_TIMEOUT_ENV) {
            Err(_) => DEFAULT_TIMEOUT_S,
            Ok(v) => v
                .trim()
                .parse::<u64>()
                .ok()
                .filter(|&s| s > 0)
                .ok_or_else(|| BackendError::Config(format!("{BACKEND_TIMEOUT_ENV}={v:?} is not a positive integer")))?,
        };
        Ok(Self::new(url, Duration::from_secs(timeout), config))
    }

    fn request(&self, system: &str, prompt: &str, frames: Option<Vec<String>>) -> Result<String, BackendError> {
        let mut body = json!({
            "model": self.config.model,
            "system": system,
            "prompt": prompt,
            "max_tokens": self.config.max_tokens,
            "temperature": 0,
            "seed": self.config.seed,
        });
        if let Some(f) = frames {
            body["frames"] = json!(f);
        }
        let reply: Value = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .and_then(|mut r| r.body_mut().read_json())
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => BackendError::Timeout(self.timeout),
                other => BackendError::Protocol(other.to_string()),
            })?;
        if let Some(text) = reply.get("text").and_then(Value::as_str) {
            return Ok(text.to_owned());
        }
        if let Some(why) = reply.get("refusal").and_then(Value::as_str) {
            return Err(BackendError::Refusal(why.to_owned()));
        }
        Err(BackendError::Protocol("reply has no string field `text`".into()))
    }
}

fn encode_png(seq: &FrameSequence, index: usize) -> Result<String, BackendError> {
    let img = RgbImage::from_raw(seq.width() as u32, seq.height() as u32, seq.frame(index).to_vec())
        .ok_or_else(|| BackendError::Protocol("frame buffer does not match geometry".into()))?;
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| BackendError::Protocol(e.to_string()))?;
    Ok(base64::engine::general_purpose::STANDARD.encode(buf.into_inner()))
}

impl GenerationBackend for HttpBackend {
    fn video_describe(&self, seq: &FrameSequence, prompt: &str) -> Result<String, BackendError> {
        if seq.is_empty() {
            return Err(BackendError::Protocol("empty clip".into()));
        }
        let frames = sample_indices(seq.len(), self.config.frames_per_request.clamp(1, seq.len()))
            .into_iter()
            .map(|i| encode_png(seq, i))
            .collect::<Result<Vec<_>, _>>()?;
        self.request("", prompt, Some(frames))
    }

    fn text_generate(&self, system_prompt: &str, user_prompt: &str) -> Result<String, BackendError> {
        self.request(system_prompt, user_prompt, None)
    }

    fn id(&self) -> String {
        format!("http:{}:{}", self.config.model, self.url)
    }
}
