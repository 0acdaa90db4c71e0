//! Safety-critical driving event (SCE) description pipeline.
//!
//! The crate covers four stages: supervised event-type classification,
//! contrastive video/text conflict-type matching, prompt-chained narrative
//! generation over a pluggable backend, and the evaluation harness that
//! scores all of them. A procedural generator stands in for real dashcam
//! footage so every stage can be trained and tested on a laptop.
//!
//! Module map:
//!
//! - [`data`]: frame sequences, label vocabularies, manifests, windows, splits
//! - [`synth`]: deterministic synthetic event renderer and dataset writer
//! - [`encoders`]: reference video/text encoders with hand-written gradients
//! - [`supervised`]: event-type head, cross-entropy, minibatch training
//! - [`contrastive`]: dual-encoder similarity, symmetric loss, label matching
//! - [`narrative`]: prompt strategies over a generation backend
//! - [`metrics`]: classification and text-generation metrics
//! - [`cli`]: the `sce` command-line surface

pub mod cli;
pub mod contrastive;
pub mod data;
pub mod encoders;
pub mod math;
pub mod metrics;
pub mod narrative;
pub mod supervised;
pub mod synth;
pub mod tokenize;
mod training;

pub use training::{EpochLog, Optimizer, TrainConfig, TrainError};

pub use data::{
    ConflictId, DatasetManifest, EventRecord, EventType, FrameSequence, LabelVocabulary, Split,
};
