#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sce_core::data::FrameSequence;
use sce_core::encoders::{Aggregation, ParamSet, TextEncoderConfig, VideoEncoderConfig};

pub const EPS: f64 = 1e-5;
pub const TOL: f64 = 1e-4;

pub fn tiny_video(aggregation: Aggregation) -> VideoEncoderConfig {
    VideoEncoderConfig {
        height: 16,
        width: 16,
        patch_size: 8,
        token_dim: 3,
        hidden_dim: 4,
        embed_dim: 3,
        num_frames: 3,
        aggregation,
    }
}

pub fn tiny_text() -> TextEncoderConfig {
    TextEncoderConfig {
        vocab_slots: 8,
        token_dim: 3,
        hidden_dim: 4,
        embed_dim: 3,
    }
}

pub fn random_clip(rng: &mut ChaCha8Rng, frames: usize, height: usize, width: usize) -> FrameSequence {
    let data = (0..frames * height * width * 3).map(|_| rng.gen()).collect();
    FrameSequence::new(data, frames, height, width, 15.0).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps vanishing gradients
/// from turning round-off into large ratios.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Worst relative error between `analytic` and central differences of
/// `loss` over every scalar of `params`.
pub fn worst_fd_error(
    params: &ParamSet,
    analytic: &ParamSet,
    mut loss: impl FnMut(&ParamSet) -> f64,
) -> (f64, String) {
    let mut probe = params.clone();
    let mut worst = (0.0, String::new());
    for i in 0..params.flat_len() {
        let x = params.flat_get(i);
        probe.flat_set(i, x + EPS);
        let up = loss(&probe);
        probe.flat_set(i, x - EPS);
        let down = loss(&probe);
        probe.flat_set(i, x);
        let err = rel_error(analytic.flat_get(i), (up - down) / (2.0 * EPS));
        if err > worst.0 {
            worst = (err, params.flat_name(i));
        }
    }
    worst
}

pub mod oracles;
