use super::{DataError, FrameSequence};

/// Frames kept on each side of the impact frame: 2.5 s at 15 fps.
pub const DEFAULT_HALF_WINDOW: usize = 38;

/// Inclusive `[start, end]` frame range centred on `impact_index`, clamped to
/// the sequence.
pub fn window_bounds(
    len: usize,
    impact_index: usize,
    half_window: usize,
) -> Result<(usize, usize), DataError> {
    if impact_index >= len {
        return Err(DataError::ImpactOutOfRange {
            index: impact_index,
            len,
        });
    }
    let start = impact_index.saturating_sub(half_window);
    let end = impact_index.saturating_add(half_window).min(len - 1);
    Ok((start, end))
}

/// Cut the impact-centred window out of a longer clip. At the default half
/// window an unclamped result is 77 frames long.
pub fn extract_event_window(
    seq: &FrameSequence,
    impact_index: usize,
    half_window: usize,
) -> Result<FrameSequence, DataError> {
    let (start, end) = window_bounds(seq.len(), impact_index, half_window)?;
    let indices: Vec<usize> = (start..=end).collect();
    Ok(seq.select(&indices))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn numbered(len: usize) -> FrameSequence {
        let data = (0..len).flat_map(|i| [i as u8, 0, 0]).collect();
        FrameSequence::new(data, len, 1, 1, 15.0).unwrap()
    }

    #[test]
    fn thirty_second_clip_gives_77_frames() {
        let seq = numbered(450);
        let w = extract_event_window(&seq, 225, DEFAULT_HALF_WINDOW).unwrap();
        assert_eq!(w.len(), 77);
        assert_eq!(w.pixel(0, 0, 0)[0], 187u8);
        assert_eq!(w.pixel(76, 0, 0)[0], (263 % 256) as u8);
    }

    #[test]
    fn clamps_at_boundaries() {
        let w = extract_event_window(&numbered(10), 0, 38).unwrap();
        assert_eq!(w.len(), 10);
        let w = extract_event_window(&numbered(100), 50, 0).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w.pixel(0, 0, 0)[0], 50);
    }

    #[test]
    fn impact_out_of_range() {
        assert!(matches!(
            extract_event_window(&numbered(5), 5, 2),
            Err(DataError::ImpactOutOfRange { index: 5, len: 5 })
        ));
    }

    proptest! {
        #[test]
        fn window_length_matches_enumeration(len in 1usize..200, hw in 0usize..60, frac in 0.0f64..1.0) {
            let impact = ((len as f64) * frac) as usize % len;
            let (s, e) = window_bounds(len, impact, hw).unwrap();
            let brute: Vec<usize> = (0..len)
                .filter(|&i| (i as i64 - impact as i64).abs() <= hw as i64)
                .collect();
            prop_assert_eq!(e - s + 1, brute.len());
            prop_assert_eq!(s, brute[0]);
            prop_assert_eq!(e, *brute.last().unwrap());
        }
    }
}
