use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ConflictId, DataError, DatasetManifest, EventRecord, Split};

/// Products within this distance of an integer are treated as that integer,
/// so `0.7 * 10` counts as exactly 7.
const SNAP: f64 = 1e-9;

fn snap_floor(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() < SNAP {
        r as usize
    } else {
        x.floor() as usize
    }
}

fn snap_ceil(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() < SNAP {
        r as usize
    } else {
        x.ceil() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub test: f64,
    pub val: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.7,
            test: 0.2,
            val: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<(), DataError> {
        let parts = [self.train, self.test, self.val];
        if parts.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(DataError::InvalidRatios(format!("ratios must be positive: {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidRatios(format!("ratios sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `n` items. Leftover units go to the
/// largest fractional parts; equal remainders favour the earlier share.
pub fn largest_remainder_counts(n: usize, shares: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = shares.iter().map(|s| s * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|&q| snap_floor(q)).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    // stable sort keeps index order among equal remainders
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a] as f64;
        let rb = quotas[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
    });
    for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Assign every record to train/test/val with a seeded uniform shuffle.
/// Record order in the returned manifest is unchanged.
pub fn split_dataset(
    manifest: &DatasetManifest,
    ratios: SplitRatios,
    seed: u64,
) -> Result<DatasetManifest, DataError> {
    ratios.validate()?;
    if manifest.is_empty() {
        return Err(DataError::Empty);
    }
    let n = manifest.len();
    let counts = largest_remainder_counts(n, &[ratios.train, ratios.test, ratios.val]);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut out = manifest.clone();
    for (pos, &idx) in order.iter().enumerate() {
        out.records[idx].split = if pos < counts[0] {
            Split::Train
        } else if pos < counts[0] + counts[1] {
            Split::Test
        } else {
            Split::Val
        };
    }
    Ok(out)
}

/// Class-covering random subset: per conflict type keep `ceil(f * count)`
/// records. Records without a conflict type form their own class. Input
/// order is preserved.
pub fn subsample_fraction(
    records: &[EventRecord],
    fraction: f64,
    seed: u64,
) -> Result<Vec<EventRecord>, DataError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DataError::InvalidFraction(fraction));
    }
    if records.is_empty() {
        return Err(DataError::Empty);
    }
    let mut classes: BTreeMap<Option<ConflictId>, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        classes.entry(r.conflict_type).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = HashSet::new();
    for members in classes.values_mut() {
        let k = snap_ceil(fraction * members.len() as f64).clamp(1, members.len());
        members.shuffle(&mut rng);
        keep.extend(members[..k].iter().copied());
    }
    Ok(records
        .iter()
        .enumerate()
        .filter(|(i, _)| keep.contains(i))
        .map(|(_, r)| r.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::EventType;
    use proptest::prelude::*;

    fn manifest(n: usize) -> DatasetManifest {
        let mut m = DatasetManifest::new(".", 0, 15.0, 64, 64);
        for i in 0..n {
            m.records.push(EventRecord {
                event_id: format!("ev{i:05}"),
                frames_path: format!("events/ev{i:05}"),
                event_type: EventType::Crash,
                conflict_type: Some(ConflictId((i % 3 + 1) as u8)),
                split: Split::Unassigned,
            });
        }
        m
    }

    fn sizes(m: &DatasetManifest) -> (usize, usize, usize) {
        (
            m.split(Split::Train).len(),
            m.split(Split::Test).len(),
            m.split(Split::Val).len(),
        )
    }

    #[test]
    fn seven_two_one() {
        let m = split_dataset(&manifest(10), SplitRatios::default(), 1).unwrap();
        assert_eq!(sizes(&m), (7, 2, 1));
    }

    #[test]
    fn nine_records_largest_remainder() {
        // 6.3 / 1.8 / 0.9: floors 6/1/0, leftovers go to val (.9) then test (.8)
        let m = split_dataset(&manifest(9), SplitRatios::default(), 1).unwrap();
        assert_eq!(sizes(&m), (6, 2, 1));
        assert_eq!(largest_remainder_counts(9, &[0.7, 0.2, 0.1]), vec![6, 2, 1]);
    }

    #[test]
    fn remainder_ties_follow_train_test_val() {
        // 1/3 each of 2 items: all remainders 2/3, so train then test
        assert_eq!(largest_remainder_counts(2, &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]), vec![1, 1, 0]);
    }

    #[test]
    fn split_is_deterministic() {
        let a = split_dataset(&manifest(50), SplitRatios::default(), 9).unwrap();
        let b = split_dataset(&manifest(50), SplitRatios::default(), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_errors() {
        let bad = SplitRatios { train: 0.7, test: 0.2, val: 0.2 };
        assert!(matches!(split_dataset(&manifest(3), bad, 0), Err(DataError::InvalidRatios(_))));
        assert!(matches!(
            split_dataset(&manifest(0), SplitRatios::default(), 0),
            Err(DataError::Empty)
        ));
    }

    #[test]
    fn subsample_rules() {
        let m = manifest(21); // 7 per class
        let all = subsample_fraction(&m.records, 1.0, 3).unwrap();
        assert_eq!(all, m.records);
        let few = subsample_fraction(&m.records, 0.05, 3).unwrap();
        assert_eq!(few.len(), 3); // ceil(0.35) = 1 per class
        assert_eq!(few, subsample_fraction(&m.records, 0.05, 3).unwrap());
        assert!(subsample_fraction(&m.records, 0.0, 3).is_err());
        assert!(subsample_fraction(&m.records, 1.5, 3).is_err());
        assert!(subsample_fraction(&[], 0.5, 3).is_err());
    }

    proptest! {
        #[test]
        fn split_partitions(n in 1usize..300, seed in any::<u64>()) {
            let m = split_dataset(&manifest(n), SplitRatios::default(), seed).unwrap();
            let (tr, te, va) = sizes(&m);
            prop_assert_eq!(tr + te + va, n);
            prop_assert_eq!(vec![tr, te, va], largest_remainder_counts(n, &[0.7, 0.2, 0.1]));
            prop_assert!(m.records.iter().all(|r| r.split != Split::Unassigned));
        }

        #[test]
        fn subsample_is_class_covering_subset(n in 1usize..120, f in 0.01f64..=1.0, seed in any::<u64>()) {
            let m = manifest(n);
            let sub = subsample_fraction(&m.records, f, seed).unwrap();
            let ids: HashSet<_> = m.records.iter().map(|r| &r.event_id).collect();
            prop_assert!(sub.iter().all(|r| ids.contains(&r.event_id)));
            let in_classes: HashSet<_> = m.records.iter().map(|r| r.conflict_type).collect();
            let out_classes: HashSet<_> = sub.iter().map(|r| r.conflict_type).collect();
            prop_assert_eq!(in_classes, out_classes);
        }
    }
}
