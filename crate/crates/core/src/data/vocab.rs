use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// 1-based conflict-type identifier into the label vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConflictId(pub u8);

impl ConflictId {
    pub const LEAD_VEHICLE: ConflictId = ConflictId(1);
    pub const UNKNOWN: ConflictId = ConflictId(17);

    /// Zero-based position in the trainable label list.
    pub fn index(self) -> usize {
        usize::from(self.0) - 1
    }

    pub fn from_index(index: usize) -> ConflictId {
        ConflictId(u8::try_from(index + 1).expect("conflict index fits in u8"))
    }
}

impl fmt::Display for ConflictId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelEntry {
    pub id: ConflictId,
    pub text: &'static str,
    pub trainable: bool,
}

const LABELS: [&str; 17] = [
    "Conflict with a lead vehicle",
    "Single vehicle conflict",
    "Conflict with vehicle turning into another vehicle path (same direction)",
    "Conflict with parked vehicle",
    "Conflict with vehicle in adjacent lane",
    "Conflict with vehicle turning across another vehicle path (opposite direction)",
    "Conflict with a following vehicle",
    "Conflict with vehicle turning into another vehicle path (opposite direction)",
    "Conflict with vehicle moving across another vehicle path (through intersection)",
    "Conflict with animal",
    "Conflict with vehicle turning across another vehicle path (same direction)",
    "Conflict with merging vehicle",
    "Conflict with pedal cyclist",
    "Conflict with pedestrian",
    "Conflict with obstacle/object in roadway",
    "Conflict with oncoming traffic",
    "Unknown",
];

/// Event counts per conflict type in the reference naturalistic study; used to
/// build class-imbalance profiles for synthetic data. Indexed like the
/// vocabulary (entry 0 is conflict id 1).
pub const TABLE_COUNTS: [u32; 17] = [
    3165, 1441, 377, 173, 1508, 242, 181, 316, 170, 360, 65, 121, 64, 163, 176, 78, 19,
];

/// Ordered conflict-type vocabulary: 16 trainable labels plus "Unknown".
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVocabulary {
    entries: Vec<LabelEntry>,
}

impl Default for LabelVocabulary {
    fn default() -> Self {
        Self::standard()
    }
}

impl LabelVocabulary {
    pub fn standard() -> Self {
        let entries = LABELS
            .iter()
            .enumerate()
            .map(|(i, &text)| LabelEntry {
                id: ConflictId::from_index(i),
                text,
                trainable: i < 16,
            })
            .collect();
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LabelEntry] {
        &self.entries
    }

    pub fn get(&self, id: ConflictId) -> Option<&LabelEntry> {
        self.entries.get(id.index())
    }

    pub fn text(&self, id: ConflictId) -> Option<&'static str> {
        self.get(id).map(|e| e.text)
    }

    pub fn is_trainable(&self, id: ConflictId) -> bool {
        id.0 >= 1 && self.get(id).is_some_and(|e| e.trainable)
    }

    pub fn trainable(&self) -> impl Iterator<Item = &LabelEntry> {
        self.entries.iter().filter(|e| e.trainable)
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable().count()
    }

    pub fn trainable_texts(&self) -> Vec<&'static str> {
        self.trainable().map(|e| e.text).collect()
    }

    pub fn find(&self, text: &str) -> Option<ConflictId> {
        self.entries.iter().find(|e| e.text == text).map(|e| e.id)
    }

    /// SHA-256 over `id \t text \t trainable \n` lines, lowercase hex.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for e in &self.entries {
            hasher.update(format!("{}\t{}\t{}\n", e.id.0, e.text, u8::from(e.trainable)));
        }
        hex::encode(hasher.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn standard_vocabulary_shape() {
        let v = LabelVocabulary::standard();
        assert_eq!(v.len(), 17);
        assert_eq!(v.trainable_count(), 16);
        assert_eq!(v.text(ConflictId(1)), Some("Conflict with a lead vehicle"));
        assert_eq!(v.text(ConflictId::UNKNOWN), Some("Unknown"));
        assert!(!v.is_trainable(ConflictId::UNKNOWN));
        assert!(!v.is_trainable(ConflictId(0)));
        assert!(!v.is_trainable(ConflictId(18)));
        let distinct: HashSet<_> = v.entries().iter().map(|e| e.text).collect();
        assert_eq!(distinct.len(), 17);
        assert!(v.entries().iter().all(|e| !e.text.is_empty()));
        assert_eq!(TABLE_COUNTS[..16].iter().sum::<u32>(), 8600);
    }

    #[test]
    fn checksum_is_stable_hex() {
        let a = LabelVocabulary::standard().checksum();
        assert_eq!(a.len(), 64);
        assert_eq!(a, LabelVocabulary::standard().checksum());
    }
}
