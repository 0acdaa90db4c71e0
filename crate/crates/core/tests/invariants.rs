use proptest::prelude::*;
use sce_core::contrastive::{contrastive_loss, softmax_rows};
use sce_core::data::{
    extract_event_window, largest_remainder_counts, split_dataset, ConflictId, DatasetManifest, EventRecord,
    EventType, FrameSequence, LabelVocabulary, Split, SplitRatios,
};
use sce_core::math::{argmax, ranked};
use sce_core::supervised::{cross_entropy, ScoreVector};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-30.0..30.0f64, cols), rows)
}

fn manifest(n: usize) -> DatasetManifest {
    let mut m = DatasetManifest::new("unused", 0, 15.0, 8, 8);
    m.records = (0..n)
        .map(|i| EventRecord {
            event_id: format!("ev{i:05}"),
            frames_path: format!("events/ev{i:05}"),
            event_type: EventType::NormalDriving,
            conflict_type: None,
            split: Split::Unassigned,
        })
        .collect();
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn softmax_rows_sum_to_one(m in (1usize..6, 1usize..17).prop_flat_map(|(r, c)| matrix(r, c))) {
        for row in softmax_rows(&m) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn predictions_ignore_positive_rescaling(v in prop::collection::vec(-5.0..5.0f64, 1..17), a in 1e-3..1e3f64) {
        let scaled: Vec<f64> = v.iter().map(|x| x * a).collect();
        prop_assert_eq!(argmax(&v), argmax(&scaled));
        prop_assert_eq!(ranked(&v), ranked(&scaled));
        if v.len() == 4 {
            let s = ScoreVector([v[0], v[1], v[2], v[3]]);
            let t = ScoreVector([scaled[0], scaled[1], scaled[2], scaled[3]]);
            prop_assert_eq!(s.predict(), t.predict());
        }
    }

    #[test]
    fn cross_entropy_ignores_translation(v in prop::collection::vec(-10.0..10.0f64, 4), c in -50.0..50.0f64, y in 0usize..4) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        prop_assert!((cross_entropy(&v, y) - cross_entropy(&shifted, y)).abs() <= 1e-9);
    }

    #[test]
    fn contrastive_loss_ignores_translation(
        m in matrix(4, 3),
        labels in prop::collection::vec(0usize..3, 4),
        c in -50.0..50.0f64,
    ) {
        let set = [ConflictId(1), ConflictId(5), ConflictId(10)];
        let batch: Vec<ConflictId> = labels.iter().map(|&i| set[i]).collect();
        let shifted: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|x| x + c).collect()).collect();
        let a = contrastive_loss(&m, &batch, &set).unwrap();
        let b = contrastive_loss(&shifted, &batch, &set).unwrap();
        prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
    }

    #[test]
    fn split_sizes_follow_largest_remainder(n in 1usize..400, seed in any::<u64>()) {
        let counts = largest_remainder_counts(n, &[0.7, 0.2, 0.1]);
        prop_assert_eq!(counts.iter().sum::<usize>(), n);
        for (c, share) in counts.iter().zip([0.7, 0.2, 0.1]) {
            prop_assert!((*c as f64 - share * n as f64).abs() < 1.0);
        }
        let out = split_dataset(&manifest(n), SplitRatios::default(), seed).unwrap();
        let got = [Split::Train, Split::Test, Split::Val].map(|s| out.split(s).len());
        prop_assert_eq!(got.to_vec(), counts);
    }

    #[test]
    fn unclamped_windows_have_77_frames(len in 77usize..300, at in 0usize..1000) {
        let impact = 38 + at % (len - 76);
        let seq = FrameSequence::zeros(len, 1, 1, 15.0).unwrap();
        prop_assert_eq!(extract_event_window(&seq, impact, 38).unwrap().len(), 77);
    }
}

#[test]
fn split_counts_match_hand_apportionment() {
    assert_eq!(largest_remainder_counts(10, &[0.7, 0.2, 0.1]), [7, 2, 1]);
    assert_eq!(largest_remainder_counts(400, &[0.7, 0.2, 0.1]), [280, 80, 40]);
    // quotas 3.5, 1.0, 0.5: tie on .5 goes to the earlier share
    assert_eq!(largest_remainder_counts(5, &[0.7, 0.2, 0.1]), [4, 1, 0]);
}

#[test]
fn vocabulary_round_trips_all_labels() {
    let v = LabelVocabulary::standard();
    assert_eq!(v.len(), 17);
    assert_eq!(v.trainable_count(), 16);
    for e in v.entries() {
        assert_eq!(v.find(e.text), Some(e.id));
        assert_eq!(v.text(e.id), Some(e.text));
    }
    assert!(!v.is_trainable(ConflictId(17)));
}
