use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DataError;

/// A fixed-rate stack of RGB frames stored as one contiguous `T×H×W×3` buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    data: Vec<u8>,
    len: usize,
    height: usize,
    width: usize,
    fps: f64,
}

impl FrameSequence {
    pub fn new(
        data: Vec<u8>,
        len: usize,
        height: usize,
        width: usize,
        fps: f64,
    ) -> Result<Self, DataError> {
        if len == 0 || height == 0 || width == 0 {
            return Err(DataError::InvalidFrames(format!(
                "dimensions must be positive, got {len}x{height}x{width}"
            )));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(DataError::InvalidFrames(format!("fps must be positive, got {fps}")));
        }
        let expected = len * height * width * 3;
        if data.len() != expected {
            return Err(DataError::InvalidFrames(format!(
                "buffer holds {} bytes, expected {expected}",
                data.len()
            )));
        }
        Ok(Self {
            data,
            len,
            height,
            width,
            fps,
        })
    }

    /// All-black sequence, mostly useful in tests.
    pub fn zeros(len: usize, height: usize, width: usize, fps: f64) -> Result<Self, DataError> {
        Self::new(vec![0; len * height * width * 3], len, height, width, fps)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn frame_bytes(&self) -> usize {
        self.height * self.width * 3
    }

    pub fn frame(&self, index: usize) -> &[u8] {
        let n = self.frame_bytes();
        &self.data[index * n..(index + 1) * n]
    }

    pub fn frame_mut(&mut self, index: usize) -> &mut [u8] {
        let n = self.frame_bytes();
        &mut self.data[index * n..(index + 1) * n]
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, frame: usize, y: usize, x: usize) -> [u8; 3] {
        let off = ((y * self.width) + x) * 3;
        let f = self.frame(frame);
        [f[off], f[off + 1], f[off + 2]]
    }

    /// New sequence made of the given frame indices, in order. Repeats are allowed.
    pub fn select(&self, indices: &[usize]) -> FrameSequence {
        let n = self.frame_bytes();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(self.frame(i));
        }
        FrameSequence {
            data,
            len: indices.len(),
            height: self.height,
            width: self.width,
            fps: self.fps,
        }
    }
}

/// Event severity category. The ordinal order is part of the model and file
/// formats and must never change.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    Crash,
    TireStrike,
    NearCrash,
    NormalDriving,
}

impl EventType {
    pub const ALL: [EventType; 4] = [
        EventType::Crash,
        EventType::TireStrike,
        EventType::NearCrash,
        EventType::NormalDriving,
    ];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<EventType> {
        Self::ALL.get(index).copied()
    }

    /// Whether this is a safety-critical event (anything but normal driving).
    pub fn is_sce(self) -> bool {
        self != EventType::NormalDriving
    }

    /// Machine key used in manifests and configs.
    pub fn key(self) -> &'static str {
        match self {
            EventType::Crash => "crash",
            EventType::TireStrike => "tire_strike",
            EventType::NearCrash => "near_crash",
            EventType::NormalDriving => "normal_driving",
        }
    }

    /// Surface text used in prompts and narratives.
    pub fn display_text(self) -> &'static str {
        match self {
            EventType::Crash => "Crash",
            EventType::TireStrike => "Tire Strike",
            EventType::NearCrash => "Near-Crash",
            EventType::NormalDriving => "Normal Driving",
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_text())
    }
}

impl FromStr for EventType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Self::ALL
            .into_iter()
            .find(|e| e.key() == norm)
            .ok_or_else(|| format!("unknown event type {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
    #[default]
    Unassigned,
}

impl Split {
    pub fn key(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}
