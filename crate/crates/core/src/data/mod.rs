//! Domain types, label vocabulary, manifest I/O, window extraction and
//! dataset splitting.

mod frames;
mod manifest;
mod split;
mod types;
mod vocab;
mod window;

use std::path::PathBuf;

pub use frames::{frame_file_name, read_frames, read_frames_sampled, write_frames};
pub use manifest::{load_manifest, save_manifest, DatasetManifest, EventRecord, MANIFEST_FORMAT};
pub use split::{largest_remainder_counts, split_dataset, subsample_fraction, SplitRatios};
pub use types::{EventType, FrameSequence, Split};
pub use vocab::{ConflictId, LabelEntry, LabelVocabulary, TABLE_COUNTS};
pub use window::{extract_event_window, window_bounds, DEFAULT_HALF_WINDOW};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("invalid frame sequence: {0}")]
    InvalidFrames(String),
    #[error("manifest not found: {0}")]
    MissingFile(PathBuf),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("event {event_id}: {message}")]
    InvalidRecord { event_id: String, message: String },
    #[error("event {event_id}: frames path {path} does not resolve under the manifest root")]
    DanglingFrames { event_id: String, path: String },
    #[error("duplicate event_id {0}")]
    DuplicateEvent(String),
    #[error("vocabulary checksum mismatch: manifest has {found}, expected {expected}")]
    VocabularyMismatch { found: String, expected: String },
    #[error("impact index {index} out of range for {len} frames")]
    ImpactOutOfRange { index: usize, len: usize },
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("empty dataset")]
    Empty,
    #[error("invalid fraction {0}; expected 0 < f <= 1")]
    InvalidFraction(f64),
    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }
}
