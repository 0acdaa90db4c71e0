//! Encoder contracts plus the small reference encoders used for training.
//!
//! [`VideoEncode`] and [`TextEncode`] are what the rest of the pipeline
//! needs at inference time; anything producing a fixed-width finite vector
//! can stand in. The reference implementations ([`VideoEncoder`],
//! [`TextEncoder`]) additionally expose forward caches and hand-written
//! backward passes so the trainers can run without an autodiff framework.

mod aggregate;
mod checkpoint;
pub(crate) mod mlp;
mod tensor;
mod text;
mod video;

use thiserror::Error;

pub use aggregate::{aggregate_frames, Aggregation};
pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use tensor::{ParamSet, Tensor};
pub use text::{TextCache, TextEncoder, TextEncoderConfig, TEXT_ENCODER_VERSION};
pub use video::{VideoCache, VideoEncoder, VideoEncoderConfig, VIDEO_ENCODER_VERSION};

pub(crate) use tensor::affine;
pub(crate) use video::check_shapes;

use crate::data::FrameSequence;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error("invalid encoder config: {0}")]
    Config(String),
    #[error("frame geometry {found:?} does not match encoder geometry {expected:?}")]
    Geometry {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("text {0:?} has no tokens")]
    EmptyText(String),
    #[error("non-finite embedding")]
    NonFinite,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}

/// A finite, non-empty vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self, EncoderError> {
        if values.is_empty() {
            return Err(EncoderError::Shape("empty embedding".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EncoderError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Learnable arrays of one encoder, with provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub version: String,
    pub seed: u64,
    pub tensors: ParamSet,
}

pub trait VideoEncode {
    fn embed_dim(&self) -> usize;
    fn encode_video(&self, seq: &FrameSequence) -> Result<Embedding, EncoderError>;
}

pub trait TextEncode {
    fn embed_dim(&self) -> usize;
    fn encode_text(&self, text: &str) -> Result<Embedding, EncoderError>;
}

/// Centered-stride frame indices: `floor((i + 0.5) * len / count)`.
///
/// Computed as `(2i + 1) * len / (2 * count)` in integers so no rounding can
/// creep in. Returns an empty list when either argument is zero.
pub fn sample_indices(len: usize, count: usize) -> Vec<usize> {
    if len == 0 || count == 0 {
        return Vec::new();
    }
    (0..count).map(|i| (2 * i + 1) * len / (2 * count)).collect()
}

/// Pick `count` frames of `seq` by [`sample_indices`].
pub fn sample_frames(seq: &FrameSequence, count: usize) -> Result<FrameSequence, EncoderError> {
    if count == 0 || seq.is_empty() {
        return Err(EncoderError::Shape("frame sampling needs T >= 1 and F >= 1".into()));
    }
    Ok(seq.select(&sample_indices(seq.len(), count)))
}
