//! Reference video encoder.
//!
//! sample `F` frames -> cut each frame into `p x p` patches -> per patch `k`
//! `tanh(W[k] x + b + pos[k])` -> mean over patches -> temporal
//! aggregation -> two-layer perceptron to `D`.
//!
//! Each frame is standardized to zero mean and unit variance over all of
//! its bytes first, which cancels global brightness. Every patch position has
//! its own projection `W[k]` (shape `[N, E, p*p*3]`): with a shared
//! projection the patch mean forgets where an object sits relative to the
//! ego car, which is exactly what separates a near-crash from normal driving.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::aggregate::{self, AggCache, Aggregation};
use super::checkpoint::Checkpoint;
use super::mlp::{self, MlpCache};
use super::tensor::{axpy, dot};
use super::{sample_indices, Embedding, EncoderError, EncoderParams, ParamSet, Tensor, VideoEncode};
use crate::data::FrameSequence;

pub(crate) const PATCH_W: &str = "patch.weight";
pub(crate) const PATCH_B: &str = "patch.bias";
pub(crate) const PATCH_POS: &str = "patch.position";

pub const VIDEO_ENCODER_VERSION: &str = "sce-video-encoder/2";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VideoEncoderConfig {
    pub height: usize,
    pub width: usize,
    pub patch_size: usize,
    pub token_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub num_frames: usize,
    pub aggregation: Aggregation,
}

impl Default for VideoEncoderConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            patch_size: 8,
            token_dim: 32,
            hidden_dim: 64,
            embed_dim: 128,
            num_frames: 8,
            aggregation: Aggregation::Mean,
        }
    }
}

impl VideoEncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let p = self.patch_size;
        if p == 0 || self.height == 0 || self.width == 0 || self.height % p != 0 || self.width % p != 0 {
            return Err(EncoderError::Config(format!(
                "frame {}x{} is not tiled by {p}x{p} patches",
                self.height, self.width
            )));
        }
        if self.token_dim == 0 || self.hidden_dim == 0 || self.embed_dim == 0 || self.num_frames == 0 {
            return Err(EncoderError::Config("dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn num_patches(&self) -> usize {
        (self.height / self.patch_size) * (self.width / self.patch_size)
    }

    pub fn patch_len(&self) -> usize {
        self.patch_size * self.patch_size * 3
    }

    pub(crate) fn write_attrs(&self, prefix: &str, attrs: &mut BTreeMap<String, String>) {
        let mut put = |k: &str, v: String| attrs.insert(format!("{prefix}{k}"), v);
        put("height", self.height.to_string());
        put("width", self.width.to_string());
        put("patch_size", self.patch_size.to_string());
        put("token_dim", self.token_dim.to_string());
        put("hidden_dim", self.hidden_dim.to_string());
        put("embed_dim", self.embed_dim.to_string());
        put("num_frames", self.num_frames.to_string());
        put("aggregation", self.aggregation.to_string());
    }

    pub(crate) fn read_attrs(ck: &Checkpoint, prefix: &str) -> Result<Self, EncoderError> {
        let k = |s: &str| format!("{prefix}{s}");
        let aggregation = ck
            .attr(&k("aggregation"))?
            .parse()
            .map_err(EncoderError::Checkpoint)?;
        Ok(Self {
            height: ck.attr_parse(&k("height"))?,
            width: ck.attr_parse(&k("width"))?,
            patch_size: ck.attr_parse(&k("patch_size"))?,
            token_dim: ck.attr_parse(&k("token_dim"))?,
            hidden_dim: ck.attr_parse(&k("hidden_dim"))?,
            embed_dim: ck.attr_parse(&k("embed_dim"))?,
            num_frames: ck.attr_parse(&k("num_frames"))?,
            aggregation,
        })
    }

    fn expected_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (e, h, d) = (self.token_dim, self.hidden_dim, self.embed_dim);
        let mut s = vec![
            (PATCH_W.to_string(), vec![self.num_patches(), e, self.patch_len()]),
            (PATCH_B.to_string(), vec![e]),
            (PATCH_POS.to_string(), vec![self.num_patches(), e]),
            (mlp::FC1_W.to_string(), vec![h, e]),
            (mlp::FC1_B.to_string(), vec![h]),
            (mlp::FC2_W.to_string(), vec![d, h]),
            (mlp::FC2_B.to_string(), vec![d]),
        ];
        if self.aggregation == Aggregation::Recurrent {
            for g in ["r", "z", "n"] {
                s.push((format!("gru.w_{g}"), vec![e, e]));
                s.push((format!("gru.u_{g}"), vec![e, e]));
                s.push((format!("gru.b_{g}"), vec![e]));
            }
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoEncoder {
    pub config: VideoEncoderConfig,
    pub params: EncoderParams,
}

/// Forward activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct VideoCache {
    patches: Vec<Vec<f64>>,
    tokens: Vec<Vec<f64>>,
    agg: AggCache,
    mlp: MlpCache,
}

impl VideoEncoder {
    pub fn new(config: VideoEncoderConfig, seed: u64) -> Result<Self, EncoderError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = ParamSet::new();
        let (e, n, plen) = (config.token_dim, config.num_patches(), config.patch_len());
        t.insert(PATCH_W, Tensor::glorot(&[n, e, plen], plen, e, &mut rng));
        t.insert(PATCH_B, Tensor::zeros(&[e]));
        // a lookup-style table: one input, `e` outputs
        t.insert(PATCH_POS, Tensor::glorot(&[n, e], 1, e, &mut rng));
        if config.aggregation == Aggregation::Recurrent {
            aggregate::init_recurrent(&mut t, e, &mut rng);
        }
        mlp::init(&mut t, e, config.hidden_dim, config.embed_dim, &mut rng);
        Ok(Self {
            config,
            params: EncoderParams {
                version: VIDEO_ENCODER_VERSION.to_string(),
                seed,
                tensors: t,
            },
        })
    }

    pub fn from_parts(config: VideoEncoderConfig, params: EncoderParams) -> Result<Self, EncoderError> {
        config.validate()?;
        check_shapes(&params.tensors, &config.expected_shapes())?;
        Ok(Self { config, params })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint {
            version: self.params.version.clone(),
            seed: self.params.seed,
            tensors: self.params.tensors.clone(),
            ..Default::default()
        };
        self.config.write_attrs("", &mut ck.attributes);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, EncoderError> {
        let config = VideoEncoderConfig::read_attrs(ck, "")?;
        Self::from_parts(
            config,
            EncoderParams {
                version: ck.version.clone(),
                seed: ck.seed,
                tensors: ck.tensors.clone(),
            },
        )
    }

    fn check_geometry(&self, seq: &FrameSequence) -> Result<(), EncoderError> {
        if seq.height() != self.config.height || seq.width() != self.config.width {
            return Err(EncoderError::Geometry {
                expected: (self.config.height, self.config.width),
                found: (seq.height(), seq.width()),
            });
        }
        Ok(())
    }

    fn patchify(&self, frame: &[u8]) -> Vec<f64> {
        let (p, w) = (self.config.patch_size, self.config.width);
        let (gh, gw) = (self.config.height / p, w / p);
        let (mean, inv_std) = frame_stats(frame);
        let mut out = Vec::with_capacity(gh * gw * p * p * 3);
        for py in 0..gh {
            for px in 0..gw {
                for dy in 0..p {
                    let row = (py * p + dy) * w + px * p;
                    for &v in &frame[row * 3..(row + p) * 3] {
                        out.push((f64::from(v) - mean) * inv_std);
                    }
                }
            }
        }
        out
    }

    pub fn forward(&self, seq: &FrameSequence) -> Result<(Vec<f64>, VideoCache), EncoderError> {
        self.check_geometry(seq)?;
        let p = &self.params.tensors;
        let (e, n, plen) = (self.config.token_dim, self.config.num_patches(), self.config.patch_len());
        let (wt, bt, pos) = (p.t(PATCH_W), p.t(PATCH_B), p.t(PATCH_POS));
        let picks = sample_indices(seq.len(), self.config.num_frames);
        let mut patches = Vec::with_capacity(picks.len());
        let mut tokens = Vec::with_capacity(picks.len());
        let mut frame_emb = Vec::with_capacity(picks.len());
        let inv_n = 1.0 / n as f64;
        for &fi in &picks {
            let x = self.patchify(seq.frame(fi));
            let mut tok = vec![0.0; n * e];
            let mut mean = vec![0.0; e];
            for k in 0..n {
                let xk = &x[k * plen..(k + 1) * plen];
                let posk = pos.row(k);
                for o in 0..e {
                    let wrow = &wt.data[(k * e + o) * plen..(k * e + o + 1) * plen];
                    let h = (dot(wrow, xk) + bt.data[o] + posk[o]).tanh();
                    tok[k * e + o] = h;
                    mean[o] += h;
                }
            }
            mean.iter_mut().for_each(|v| *v *= inv_n);
            patches.push(x);
            tokens.push(tok);
            frame_emb.push(mean);
        }
        let (z, agg) = aggregate::forward(p, &frame_emb, self.config.aggregation);
        let (out, mlp) = mlp::forward(p, &z);
        Ok((
            out,
            VideoCache {
                patches,
                tokens,
                agg,
                mlp,
            },
        ))
    }

    /// Accumulate `dL/dparams` into `grads` (same names as `params.tensors`).
    pub fn backward(&self, cache: &VideoCache, dout: &[f64], grads: &mut ParamSet) {
        let p = &self.params.tensors;
        let (e, n, plen) = (self.config.token_dim, self.config.num_patches(), self.config.patch_len());
        let dz = mlp::backward(p, &cache.mlp, dout, grads);
        let dframes = aggregate::backward(p, &cache.agg, &dz, grads);
        let inv_n = 1.0 / n as f64;
        let mut dw = std::mem::replace(grads.t_mut(PATCH_W), Tensor::zeros(&[0]));
        let mut db = std::mem::replace(grads.t_mut(PATCH_B), Tensor::zeros(&[0]));
        let dpos = grads.t_mut(PATCH_POS);
        for ((x, tok), du) in cache.patches.iter().zip(&cache.tokens).zip(&dframes) {
            for k in 0..n {
                let xk = &x[k * plen..(k + 1) * plen];
                let dposk = dpos.row_mut(k);
                for o in 0..e {
                    let h = tok[k * e + o];
                    let d = du[o] * inv_n * (1.0 - h * h);
                    if d == 0.0 {
                        continue;
                    }
                    dposk[o] += d;
                    db.data[o] += d;
                    axpy(&mut dw.data[(k * e + o) * plen..(k * e + o + 1) * plen], d, xk);
                }
            }
        }
        *grads.t_mut(PATCH_W) = dw;
        *grads.t_mut(PATCH_B) = db;
    }
}

impl VideoEncode for VideoEncoder {
    fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    fn encode_video(&self, seq: &FrameSequence) -> Result<Embedding, EncoderError> {
        Embedding::new(self.forward(seq)?.0)
    }
}

/// Mean and reciprocal standard deviation of a frame's bytes. A flat frame
/// gets `inv_std = 0` so it maps to all zeros.
fn frame_stats(frame: &[u8]) -> (f64, f64) {
    let n = frame.len() as f64;
    let mean = frame.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = frame.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / n;
    let inv_std = if var > 1e-12 { 1.0 / var.sqrt() } else { 0.0 };
    (mean, inv_std)
}

pub(crate) fn check_shapes(t: &ParamSet, expected: &[(String, Vec<usize>)]) -> Result<(), EncoderError> {
    for (name, shape) in expected {
        let got = t.get(name)?;
        if &got.shape != shape {
            return Err(EncoderError::Shape(format!(
                "{name}: expected {shape:?}, found {:?}",
                got.shape
            )));
        }
    }
    if t.len() != expected.len() {
        let extra: Vec<_> = t
            .names()
            .filter(|n| !expected.iter().any(|(e, _)| e == *n))
            .cloned()
            .collect();
        return Err(EncoderError::Shape(format!("unexpected tensors {extra:?}")));
    }
    Ok(())
}
