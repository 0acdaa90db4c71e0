//! Line-oriented dataset manifest.
//!
//! The file is UTF-8 JSON Lines. Line 1 is a header object, every following
//! non-empty line is one event record:
//!
//! ```text
//! {"format":"sce-manifest/1","seed":7,"fps":15.0,"height":64,"width":64,"vocabulary":"<sha256>"}
//! {"event_id":"ev00000","frames_path":"events/ev00000","event_type":"crash","conflict_type":1,"split":"train"}
//! {"event_id":"ev00001","frames_path":"events/ev00001","event_type":"normal_driving","split":"unassigned"}
//! ```
//!
//! `conflict_type` is omitted for normal driving. Field order is fixed so a
//! load/save cycle reproduces the file byte for byte.

use std::collections::HashSet;
use std::fs;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ConflictId, DataError, EventType, LabelVocabulary, Split};

pub const MANIFEST_FORMAT: &str = "sce-manifest/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub event_id: String,
    pub frames_path: String,
    pub event_type: EventType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conflict_type: Option<ConflictId>,
    #[serde(default)]
    pub split: Split,
}

impl EventRecord {
    pub fn validate(&self, vocab: &LabelVocabulary) -> Result<(), DataError> {
        let bad = |message: String| DataError::InvalidRecord {
            event_id: self.event_id.clone(),
            message,
        };
        if self.event_id.is_empty() {
            return Err(bad("empty event_id".into()));
        }
        match (self.event_type, self.conflict_type) {
            (EventType::NormalDriving, Some(c)) => Err(bad(format!(
                "normal_driving record must not carry a conflict_type (found {c})"
            ))),
            (et, None) if et.is_sce() => Err(bad(format!("{} record needs a conflict_type", et.key()))),
            (_, Some(c)) if !vocab.is_trainable(c) => Err(bad(format!(
                "conflict_type {c} is not a trainable vocabulary entry"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    seed: u64,
    fps: f64,
    height: usize,
    width: usize,
    vocabulary: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    /// Directory that `frames_path` entries are relative to.
    pub root: PathBuf,
    pub seed: u64,
    pub fps: f64,
    pub height: usize,
    pub width: usize,
    pub records: Vec<EventRecord>,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, seed: u64, fps: f64, height: usize, width: usize) -> Self {
        Self {
            root: root.into(),
            seed,
            fps,
            height,
            width,
            records: Vec::new(),
        }
    }

    pub fn vocabulary(&self) -> LabelVocabulary {
        LabelVocabulary::standard()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn frames_dir(&self, record: &EventRecord) -> PathBuf {
        self.root.join(&record.frames_path)
    }

    pub fn get(&self, event_id: &str) -> Option<&EventRecord> {
        self.records.iter().find(|r| r.event_id == event_id)
    }

    pub fn split(&self, split: Split) -> Vec<&EventRecord> {
        self.records.iter().filter(|r| r.split == split).collect()
    }

    /// Check record invariants and id uniqueness; with `check_frames` also
    /// require every frames directory to exist under the root.
    pub fn validate(&self, check_frames: bool) -> Result<(), DataError> {
        let vocab = self.vocabulary();
        let mut seen = HashSet::new();
        for r in &self.records {
            r.validate(&vocab)?;
            if !seen.insert(r.event_id.as_str()) {
                return Err(DataError::DuplicateEvent(r.event_id.clone()));
            }
            let rel = Path::new(&r.frames_path);
            let escapes = rel.is_absolute()
                || r.frames_path.is_empty()
                || rel
                    .components()
                    .any(|c| !matches!(c, Component::Normal(_) | Component::CurDir));
            if escapes || (check_frames && !self.root.join(rel).is_dir()) {
                return Err(DataError::DanglingFrames {
                    event_id: r.event_id.clone(),
                    path: r.frames_path.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let header = Header {
            format: MANIFEST_FORMAT.to_string(),
            seed: self.seed,
            fps: self.fps,
            height: self.height,
            width: self.width,
            vocabulary: self.vocabulary().checksum(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Parse manifest text; `root` becomes the base for frame paths.
    pub fn parse(text: &str, root: impl Into<PathBuf>) -> Result<Self, DataError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty());
        let (hline, htext) = lines.next().ok_or(DataError::Malformed {
            line: 1,
            message: "missing header line".into(),
        })?;
        let header: Header = serde_json::from_str(htext).map_err(|e| DataError::Malformed {
            line: hline,
            message: format!("bad header: {e}"),
        })?;
        if header.format != MANIFEST_FORMAT {
            return Err(DataError::Malformed {
                line: hline,
                message: format!("unsupported format {:?}", header.format),
            });
        }
        let expected = LabelVocabulary::standard().checksum();
        if header.vocabulary != expected {
            return Err(DataError::VocabularyMismatch {
                found: header.vocabulary,
                expected,
            });
        }
        let mut records = Vec::new();
        for (line, l) in lines {
            let rec: EventRecord = serde_json::from_str(l).map_err(|e| DataError::Malformed {
                line,
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        Ok(Self {
            root: root.into(),
            seed: header.seed,
            fps: header.fps,
            height: header.height,
            width: header.width,
            records,
        })
    }
}

/// Read and fully validate a manifest file, including frame directories.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, DataError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => DataError::MissingFile(path.to_path_buf()),
        _ => DataError::io(path, e),
    })?;
    let root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let manifest = DatasetManifest::parse(&text, root)?;
    manifest.validate(true)?;
    Ok(manifest)
}

pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    fs::write(path, manifest.to_text()).map_err(|e| DataError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, et: EventType, ct: Option<u8>) -> EventRecord {
        EventRecord {
            event_id: id.into(),
            frames_path: format!("events/{id}"),
            event_type: et,
            conflict_type: ct.map(ConflictId),
            split: Split::Unassigned,
        }
    }

    #[test]
    fn empty_manifest_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest::new(dir.path(), 3, 15.0, 64, 64);
        let p = dir.path().join("manifest.jsonl");
        save_manifest(&m, &p).unwrap();
        let back = load_manifest(&p).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.seed, 3);
    }

    #[test]
    fn normal_driving_with_conflict_is_rejected() {
        let mut m = DatasetManifest::new(".", 0, 15.0, 64, 64);
        m.records.push(record("ev7", EventType::NormalDriving, Some(1)));
        match m.validate(false) {
            Err(DataError::InvalidRecord { event_id, .. }) => assert_eq!(event_id, "ev7"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn sce_without_conflict_and_unknown_conflict_rejected() {
        let mut m = DatasetManifest::new(".", 0, 15.0, 64, 64);
        m.records.push(record("a", EventType::Crash, None));
        assert!(m.validate(false).is_err());
        m.records[0].conflict_type = Some(ConflictId::UNKNOWN);
        assert!(m.validate(false).is_err());
        m.records[0].conflict_type = Some(ConflictId(16));
        assert!(m.validate(false).is_ok());
    }

    #[test]
    fn duplicate_and_dangling_detected() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = DatasetManifest::new(dir.path(), 0, 15.0, 64, 64);
        m.records.push(record("a", EventType::NormalDriving, None));
        assert!(matches!(m.validate(true), Err(DataError::DanglingFrames { .. })));
        fs::create_dir_all(dir.path().join("events/a")).unwrap();
        assert!(m.validate(true).is_ok());
        m.records.push(record("a", EventType::NormalDriving, None));
        assert!(matches!(m.validate(true), Err(DataError::DuplicateEvent(_))));
        m.records.pop();
        m.records[0].frames_path = "../outside".into();
        assert!(matches!(m.validate(false), Err(DataError::DanglingFrames { .. })));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let m = DatasetManifest::new(".", 0, 15.0, 64, 64);
        let mut text = m.to_text();
        text.push_str("{\"event_id\":\"x\",\"frames_path\":\"events/x\",\"event_type\":\"normal_driving\",\"split\":\"train\"}\n");
        text.push_str("{\"event_id\": 5}\n");
        match DatasetManifest::parse(&text, ".") {
            Err(DataError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_manifest("/nonexistent/manifest.jsonl"),
            Err(DataError::MissingFile(_))
        ));
    }

    #[test]
    fn text_round_trip_is_identity() {
        let mut m = DatasetManifest::new(".", 11, 15.0, 32, 48);
        m.records.push(record("a", EventType::Crash, Some(4)));
        m.records.push(record("b", EventType::NormalDriving, None));
        m.records[1].split = Split::Val;
        let text = m.to_text();
        let back = DatasetManifest::parse(&text, ".").unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
    }
}
