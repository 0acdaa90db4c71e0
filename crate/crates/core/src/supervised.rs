//! Event-type classification: a linear head over the reference video
//! encoder, trained with cross-entropy.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{read_frames_sampled, DatasetManifest, EventRecord, EventType, FrameSequence};
use crate::encoders::{
    affine, Checkpoint, EncoderError, EncoderParams, ParamSet, Tensor, VideoEncode, VideoEncoder,
    VideoEncoderConfig,
};
use crate::math::{argmax, log_sum_exp, softmax};
use crate::training::{self, fit, EpochLog, TrainConfig, TrainError, Trainable};

pub const SUPERVISED_VERSION: &str = "sce-supervised/1";
pub const HEAD_W: &str = "head.weight";
pub const HEAD_B: &str = "head.bias";

/// Scores aligned with [`EventType::ALL`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreVector(pub [f64; EventType::COUNT]);

impl ScoreVector {
    pub fn predict(&self) -> EventType {
        EventType::from_index(argmax(&self.0)).expect("four scores")
    }
}

/// `-log softmax(scores)[label]`.
pub fn cross_entropy(scores: &[f64], label: usize) -> f64 {
    (log_sum_exp(scores) - scores[label]).max(0.0)
}

/// Loss and `dL/dscores = softmax - onehot`.
pub fn cross_entropy_grad(scores: &[f64], label: usize) -> (f64, Vec<f64>) {
    let mut p = softmax(scores);
    p[label] -= 1.0;
    (cross_entropy(scores, label), p)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingMeta {
    pub epoch: usize,
    pub best_val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupervisedModel {
    pub encoder: VideoEncoder,
    /// `head.weight` `[4, D]` and `head.bias` `[4]`.
    pub head: ParamSet,
    pub meta: TrainingMeta,
}

impl SupervisedModel {
    pub fn new(config: VideoEncoderConfig, seed: u64) -> Result<Self, EncoderError> {
        let encoder = VideoEncoder::new(config, seed)?;
        let head = new_head(encoder.config.embed_dim, seed);
        Ok(Self {
            encoder,
            head,
            meta: TrainingMeta {
                epoch: 0,
                best_val_accuracy: 0.0,
            },
        })
    }

    pub fn scores_from_embedding(&self, emb: &[f64]) -> ScoreVector {
        let s = affine(self.head.t(HEAD_W), self.head.t(HEAD_B), emb);
        ScoreVector(s.try_into().expect("four scores"))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint {
            version: SUPERVISED_VERSION.to_string(),
            seed: self.encoder.params.seed,
            ..Default::default()
        };
        self.encoder.config.write_attrs("video.", &mut ck.attributes);
        ck.attributes.insert("kind".into(), "supervised".into());
        ck.attributes.insert("epoch".into(), self.meta.epoch.to_string());
        ck.attributes
            .insert("best_val_accuracy".into(), format!("{:?}", self.meta.best_val_accuracy));
        ck.attributes
            .insert("video.version".into(), self.encoder.params.version.clone());
        ck.tensors.merge_prefixed("video.", &self.encoder.params.tensors);
        ck.tensors.merge_prefixed("", &self.head);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, EncoderError> {
        if ck.version != SUPERVISED_VERSION || ck.attr("kind")? != "supervised" {
            return Err(EncoderError::Checkpoint(format!(
                "not a supervised checkpoint (version {:?})",
                ck.version
            )));
        }
        let config = VideoEncoderConfig::read_attrs(ck, "video.")?;
        let encoder = VideoEncoder::from_parts(
            config,
            EncoderParams {
                version: ck.attr("video.version")?.to_string(),
                seed: ck.seed,
                tensors: ck.tensors.extract_prefixed("video."),
            },
        )?;
        let d = encoder.config.embed_dim;
        let mut head = ParamSet::new();
        head.insert(HEAD_W, ck.tensors.get(HEAD_W)?.clone());
        head.insert(HEAD_B, ck.tensors.get(HEAD_B)?.clone());
        crate::encoders::check_shapes(
            &head,
            &[
                (HEAD_W.to_string(), vec![EventType::COUNT, d]),
                (HEAD_B.to_string(), vec![EventType::COUNT]),
            ],
        )?;
        if ck.tensors.len() != encoder.params.tensors.len() + 2 {
            return Err(EncoderError::Checkpoint("unexpected extra tensors".into()));
        }
        Ok(Self {
            encoder,
            head,
            meta: TrainingMeta {
                epoch: ck.attr_parse("epoch")?,
                best_val_accuracy: ck.attr_parse("best_val_accuracy")?,
            },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EncoderError> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EncoderError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

fn new_head(dim: usize, seed: u64) -> ParamSet {
    // separate stream from the encoder's so changing one never shifts the other
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6865_6164);
    let mut head = ParamSet::new();
    head.insert(HEAD_W, Tensor::glorot(&[EventType::COUNT, dim], dim, EventType::COUNT, &mut rng));
    head.insert(HEAD_B, Tensor::zeros(&[EventType::COUNT]));
    head
}

pub fn forward_scores(model: &SupervisedModel, seq: &FrameSequence) -> Result<ScoreVector, EncoderError> {
    let emb = model.encoder.encode_video(seq)?;
    Ok(model.scores_from_embedding(emb.values()))
}

pub fn predict_event_type(model: &SupervisedModel, seq: &FrameSequence) -> Result<EventType, EncoderError> {
    Ok(forward_scores(model, seq)?.predict())
}

/// A clip with its event-type label, frames already sampled for the encoder.
#[derive(Clone, Debug)]
pub struct LabeledClip {
    pub event_id: String,
    pub frames: FrameSequence,
    pub event_type: EventType,
}

/// Read and frame-sample the clips for `records`.
pub fn load_clips(
    manifest: &DatasetManifest,
    records: &[&EventRecord],
    num_frames: usize,
) -> Result<Vec<LabeledClip>, TrainError> {
    records
        .iter()
        .map(|r| {
            Ok(LabeledClip {
                event_id: r.event_id.clone(),
                frames: read_frames_sampled(&manifest.frames_dir(r), manifest.fps, num_frames)?,
                event_type: r.event_type,
            })
        })
        .collect()
}

/// Mean cross-entropy over `clips` and its gradient, split into encoder
/// and head parts.
pub fn batch_loss_and_grad(
    model: &SupervisedModel,
    clips: &[&LabeledClip],
) -> Result<(f64, ParamSet, ParamSet), EncoderError> {
    let mut g_enc = model.encoder.params.tensors.zeros_like();
    let mut g_head = model.head.zeros_like();
    let inv_b = 1.0 / clips.len() as f64;
    let mut total = 0.0;
    let w = model.head.t(HEAD_W);
    for clip in clips {
        let (emb, cache) = model.encoder.forward(&clip.frames)?;
        let scores = model.scores_from_embedding(&emb);
        let (loss, mut ds) = cross_entropy_grad(&scores.0, clip.event_type.index());
        total += loss;
        ds.iter_mut().for_each(|v| *v *= inv_b);
        let mut demb = vec![0.0; emb.len()];
        for (k, &d) in ds.iter().enumerate() {
            g_head.t_mut(HEAD_B).data[k] += d;
            let gw = g_head.t_mut(HEAD_W).row_mut(k);
            for (j, e) in emb.iter().enumerate() {
                gw[j] += d * e;
            }
            for (j, wk) in w.row(k).iter().enumerate() {
                demb[j] += d * wk;
            }
        }
        model.encoder.backward(&cache, &demb, &mut g_enc);
    }
    Ok((total * inv_b, g_enc, g_head))
}

impl Trainable for SupervisedModel {
    type Example = LabeledClip;

    fn zero_grads(&self) -> Vec<ParamSet> {
        vec![self.encoder.params.tensors.zeros_like(), self.head.zeros_like()]
    }

    fn decayed_params(&self) -> Vec<&ParamSet> {
        vec![&self.encoder.params.tensors, &self.head]
    }

    fn batch_loss(&self, batch: &[&LabeledClip], grads: &mut [ParamSet]) -> Result<f64, TrainError> {
        let (loss, g_enc, g_head) = batch_loss_and_grad(self, batch)?;
        grads[0] = g_enc;
        grads[1] = g_head;
        Ok(loss)
    }

    fn apply(&mut self, step: &[ParamSet]) {
        training::descend(&mut self.encoder.params.tensors, &step[0]);
        training::descend(&mut self.head, &step[1]);
    }

    fn accuracy(&self, examples: &[LabeledClip]) -> Result<f64, TrainError> {
        let mut hits = 0usize;
        for e in examples {
            if predict_event_type(self, &e.frames)? == e.event_type {
                hits += 1;
            }
        }
        Ok(hits as f64 / examples.len() as f64)
    }

    fn example_id(e: &LabeledClip) -> String {
        e.event_id.clone()
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupervisedConfig {
    pub encoder: VideoEncoderConfig,
    pub train: TrainConfig,
}

impl Default for SupervisedConfig {
    fn default() -> Self {
        Self {
            encoder: VideoEncoderConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Returned model plus the full per-epoch log.
#[derive(Clone, Debug)]
pub struct SupervisedRun {
    pub model: SupervisedModel,
    pub log: Vec<EpochLog>,
}

/// Minibatch descent on mean cross-entropy; keeps the epoch with the best
/// validation accuracy (earliest on ties). The encoder is seeded from
/// `config.train.seed`.
pub fn train_supervised(
    config: &SupervisedConfig,
    train: &[LabeledClip],
    val: &[LabeledClip],
) -> Result<SupervisedRun, TrainError> {
    let model = SupervisedModel::new(config.encoder.clone(), config.train.seed)?;
    train_from(model, &config.train, train, val)
}

/// Like [`train_supervised`] but starting from an existing model.
pub fn train_from(
    model: SupervisedModel,
    cfg: &TrainConfig,
    train: &[LabeledClip],
    val: &[LabeledClip],
) -> Result<SupervisedRun, TrainError> {
    let fitted = fit(model, train, val, cfg)?;
    let mut model = fitted.model;
    model.meta = TrainingMeta {
        epoch: fitted.best_epoch,
        best_val_accuracy: fitted.best_accuracy,
    };
    Ok(SupervisedRun {
        model,
        log: fitted.log,
    })
}

/// Linear head trained directly on fixed feature vectors, i.e. with the
/// encoder frozen to the identity. Shares the loss, optimizer and epoch
/// selection with [`train_supervised`].
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProbe {
    pub head: ParamSet,
}

#[derive(Clone, Debug)]
pub struct FeatureExample {
    pub features: Vec<f64>,
    pub event_type: EventType,
}

impl LinearProbe {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self {
            head: new_head(dim, seed),
        }
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        affine(self.head.t(HEAD_W), self.head.t(HEAD_B), x)
    }
}

impl Trainable for LinearProbe {
    type Example = FeatureExample;

    fn zero_grads(&self) -> Vec<ParamSet> {
        vec![self.head.zeros_like()]
    }

    fn decayed_params(&self) -> Vec<&ParamSet> {
        vec![&self.head]
    }

    fn batch_loss(&self, batch: &[&FeatureExample], grads: &mut [ParamSet]) -> Result<f64, TrainError> {
        let inv_b = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for e in batch {
            let (loss, ds) = cross_entropy_grad(&self.scores(&e.features), e.event_type.index());
            total += loss;
            for (k, d) in ds.into_iter().enumerate() {
                let d = d * inv_b;
                grads[0].t_mut(HEAD_B).data[k] += d;
                let gw = grads[0].t_mut(HEAD_W).row_mut(k);
                for (g, x) in gw.iter_mut().zip(&e.features) {
                    *g += d * x;
                }
            }
        }
        Ok(total * inv_b)
    }

    fn apply(&mut self, step: &[ParamSet]) {
        training::descend(&mut self.head, &step[0]);
    }

    fn accuracy(&self, examples: &[FeatureExample]) -> Result<f64, TrainError> {
        let hits = examples
            .iter()
            .filter(|e| argmax(&self.scores(&e.features)) == e.event_type.index())
            .count();
        Ok(hits as f64 / examples.len() as f64)
    }

    fn example_id(e: &FeatureExample) -> String {
        format!("{:?}", e.features)
    }
}

pub fn train_linear_probe(
    cfg: &TrainConfig,
    train: &[FeatureExample],
    val: &[FeatureExample],
) -> Result<(LinearProbe, Vec<EpochLog>), TrainError> {
    let dim = train.first().map_or(0, |e| e.features.len());
    let fitted = fit(LinearProbe::new(dim, cfg.seed), train, val, cfg)?;
    Ok((fitted.model, fitted.log))
}
