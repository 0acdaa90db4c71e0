use super::{BackendError, GenerationBackend, BENCHMARK_SCE_PROMPT};
use crate::data::FrameSequence;
use crate::tokenize::fnv1a64;

const FILLERS: [&str; 4] = [
    "the ego vehicle travels forward",
    "traffic around the ego vehicle is light",
    "the road ahead is visible",
    "the camera faces forward from the windshield",
];

/// Deterministic template filler. Every answer is a function of the seed,
/// the clip bytes and the prompt. Labels handed over in prompts are echoed
/// verbatim, and a repeat instruction is always honoured.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MockBackend {
    pub seed: u64,
    /// Every `video_describe` call fails with this error.
    pub fail_describe: Option<BackendError>,
    /// Every `text_generate` call fails with this error.
    pub fail_generate: Option<BackendError>,
    /// Prompts answered with an empty string.
    pub silent_prompts: Vec<String>,
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// `Environment: <light>, <weather>, <road>, <filler>` from coarse clip
    /// statistics plus a seeded filler phrase, without a final period. Brightness separates lighting and road
    /// kind; pixel-to-pixel variation near the top of the first frame
    /// separates rain from clear weather.
    pub fn environment(&self, seq: &FrameSequence) -> String {
        let bytes = seq.as_bytes();
        let mean = bytes.iter().map(|&b| f64::from(b)).sum::<f64>() / bytes.len().max(1) as f64;
        let (light, road, rain_above) = match mean {
            m if m >= 88.0 => ("day", "highway", 14.7),
            m if m >= 70.0 => ("day", "urban", 15.6),
            m if m >= 53.0 => ("night", "highway", 10.6),
            _ => ("night", "urban", 12.0),
        };
        let w = seq.width();
        let mut diff = 0.0;
        let mut count = 0usize;
        if !seq.is_empty() && w > 1 {
            let f = seq.frame(0);
            for y in 0..(seq.height() / 4).max(1) {
                for x in 1..w {
                    for c in 0..3 {
                        diff += (f64::from(f[(y * w + x) * 3 + c]) - f64::from(f[(y * w + x - 1) * 3 + c])).abs();
                        count += 1;
                    }
                }
            }
        }
        let weather = if count > 0 && diff / count as f64 > rain_above { "rain" } else { "clear" };
        let pick = fnv1a64(&[&self.seed.to_le_bytes()[..], bytes].concat()) as usize % FILLERS.len();
        format!("Environment: {light}, {weather}, {road}, {}", FILLERS[pick])
    }
}

/// Text between `marker` and the next single quote.
fn quoted_after<'a>(text: &'a str, marker: &str) -> Option<&'a str> {
    let start = text.find(marker)? + marker.len();
    let len = text[start..].find('\'')?;
    Some(&text[start..start + len])
}

impl GenerationBackend for MockBackend {
    fn video_describe(&self, seq: &FrameSequence, prompt: &str) -> Result<String, BackendError> {
        if let Some(e) = &self.fail_describe {
            return Err(e.clone());
        }
        if self.silent_prompts.iter().any(|p| p == prompt) {
            return Ok(String::new());
        }
        let mut out = self.environment(seq);
        if let Some(event) = quoted_after(prompt, "The event type is '") {
            out.push_str(&format!(". Event type: {event}."));
            if let Some(conflict) = quoted_after(prompt, "the conflict type is '") {
                out.push_str(&format!(" Conflict type: {conflict}."));
            }
        } else if prompt == BENCHMARK_SCE_PROMPT {
            out = "Another road user moves close to the ego vehicle.".to_owned();
        }
        Ok(out)
    }

    fn text_generate(&self, _system_prompt: &str, user_prompt: &str) -> Result<String, BackendError> {
        if let Some(e) = &self.fail_generate {
            return Err(e.clone());
        }
        if self.silent_prompts.iter().any(|p| p == user_prompt) {
            return Ok(String::new());
        }
        if user_prompt.contains("Restate the description.") {
            let previous = user_prompt
                .strip_prefix("Description: ")
                .and_then(|rest| rest.split('\n').next())
                .unwrap_or("");
            let event = quoted_after(user_prompt, "the event type '").unwrap_or("");
            let mut out = format!("Event type: {event}.");
            if let Some(conflict) = quoted_after(user_prompt, "conflict type '") {
                out.push_str(&format!(" Conflict type: {conflict}."));
            }
            out.push(' ');
            out.push_str(previous);
            return Ok(out);
        }
        if let Some(rest) = user_prompt.strip_prefix("Describe this event: ") {
            return Ok(format!("The dashcam clip shows the following. {rest}"));
        }
        Ok(format!("Noted: {user_prompt}"))
    }

    fn id(&self) -> String {
        format!("mock:{}", self.seed)
    }
}
