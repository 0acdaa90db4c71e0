//! Conflict-type matching with two encoders: clips and label texts are
//! embedded separately, compared by cosine similarity over a learned
//! temperature, and trained with a two-direction contrastive loss.
//!
//! Video-to-text rows always score a clip against the full trainable label
//! set. Text-to-video rows score each label present in the batch against the
//! batch clips, with the target spread evenly over the clips carrying it.

use std::path::Path;

use thiserror::Error;

use crate::data::{read_frames_sampled, ConflictId, DatasetManifest, EventRecord, FrameSequence, LabelVocabulary};
use crate::encoders::{
    Checkpoint, EncoderError, EncoderParams, ParamSet, Tensor, TextEncoder, TextEncoderConfig,
    VideoEncoder, VideoEncoderConfig,
};
use crate::math::{log_sum_exp, ranked, softmax};
use crate::supervised::TrainingMeta;
use crate::training::{self, fit, EpochLog, TrainConfig, TrainError, Trainable};

pub const CONTRASTIVE_VERSION: &str = "sce-contrastive/1";
pub const LOG_TAU: &str = "log_tau";
pub const TAU_INIT: f64 = 0.07;
pub const TAU_MIN: f64 = 0.01;
pub const TAU_MAX: f64 = 1.0;

#[derive(Debug, Error)]
pub enum ContrastiveError {
    #[error("zero-norm embedding has no direction")]
    ZeroNorm,
    #[error("non-finite logits")]
    NonFinite,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("label {0} is not in the label set")]
    UnknownLabel(ConflictId),
    #[error("no trainable labels to match against")]
    NoLabels,
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn cosine_similarity(v: &[f64], t: &[f64]) -> Result<f64, ContrastiveError> {
    if v.len() != t.len() {
        return Err(ContrastiveError::Shape(format!("{} vs {}", v.len(), t.len())));
    }
    let (nv, nt) = (norm(v), norm(t));
    if nv == 0.0 || nt == 0.0 {
        return Err(ContrastiveError::ZeroNorm);
    }
    let d: f64 = v.iter().zip(t).map(|(a, b)| a * b).sum();
    Ok((d / (nv * nt)).clamp(-1.0, 1.0))
}

/// Raw cosines between `B` clips and `M` label texts plus the temperature
/// that turns them into logits.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    pub cosines: Vec<Vec<f64>>,
    pub temperature: f64,
}

impl SimilarityMatrix {
    pub fn from_embeddings(
        videos: &[Vec<f64>],
        texts: &[Vec<f64>],
        temperature: f64,
    ) -> Result<Self, ContrastiveError> {
        let cosines = videos
            .iter()
            .map(|v| texts.iter().map(|t| cosine_similarity(v, t)).collect())
            .collect::<Result<_, _>>()?;
        Ok(Self { cosines, temperature })
    }

    pub fn logits(&self) -> Vec<Vec<f64>> {
        self.cosines
            .iter()
            .map(|row| row.iter().map(|c| c / self.temperature).collect())
            .collect()
    }

    /// Text-to-video view: `M x B`.
    pub fn transposed(&self) -> Vec<Vec<f64>> {
        transpose(&self.cosines)
    }
}

pub fn transpose(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let cols = m.first().map_or(0, Vec::len);
    (0..cols).map(|j| m.iter().map(|row| row[j]).collect()).collect()
}

pub fn softmax_rows(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    m.iter().map(|row| softmax(row)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    VideoToText,
    TextToVideo,
}

/// Match weights. Video-to-text: one row per clip over `label_set`.
/// Text-to-video: one row per label that occurs in the batch, over clips;
/// `rows` gives that label's position in `label_set`.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetMatrix {
    pub q: Vec<Vec<f64>>,
    pub rows: Vec<usize>,
}

pub fn build_targets(
    batch_labels: &[ConflictId],
    label_set: &[ConflictId],
    direction: Direction,
) -> Result<TargetMatrix, ContrastiveError> {
    let cols = batch_labels
        .iter()
        .map(|l| label_set.iter().position(|x| x == l).ok_or(ContrastiveError::UnknownLabel(*l)))
        .collect::<Result<Vec<usize>, _>>()?;
    Ok(match direction {
        Direction::VideoToText => TargetMatrix {
            q: cols
                .iter()
                .map(|&j| (0..label_set.len()).map(|k| if k == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            rows: (0..batch_labels.len()).collect(),
        },
        Direction::TextToVideo => {
            let mut q = Vec::new();
            let mut rows = Vec::new();
            for j in 0..label_set.len() {
                let n = cols.iter().filter(|&&c| c == j).count();
                if n == 0 {
                    continue;
                }
                q.push(cols.iter().map(|&c| if c == j { 1.0 / n as f64 } else { 0.0 }).collect());
                rows.push(j);
            }
            TargetMatrix { q, rows }
        }
    })
}

/// `0.5 * (mean CE over clips + mean KL over labels present)`, with
/// `logits` already divided by the temperature (`B x |label_set|`).
pub fn contrastive_loss(
    logits: &[Vec<f64>],
    batch_labels: &[ConflictId],
    label_set: &[ConflictId],
) -> Result<f64, ContrastiveError> {
    contrastive_loss_grad(logits, batch_labels, label_set).map(|(l, _)| l)
}

/// Loss and `dL/dlogits`.
pub fn contrastive_loss_grad(
    logits: &[Vec<f64>],
    batch_labels: &[ConflictId],
    label_set: &[ConflictId],
) -> Result<(f64, Vec<Vec<f64>>), ContrastiveError> {
    let b = logits.len();
    if b == 0 || b != batch_labels.len() || logits.iter().any(|r| r.len() != label_set.len()) {
        return Err(ContrastiveError::Shape(format!(
            "{b} logit rows for {} labels over a set of {}",
            batch_labels.len(),
            label_set.len()
        )));
    }
    if logits.iter().flatten().any(|x| !x.is_finite()) {
        return Err(ContrastiveError::NonFinite);
    }
    let mut grad = vec![vec![0.0; label_set.len()]; b];

    let v2t = build_targets(batch_labels, label_set, Direction::VideoToText)?;
    let mut ce = 0.0;
    for (i, row) in logits.iter().enumerate() {
        let lse = log_sum_exp(row);
        for (j, &x) in row.iter().enumerate() {
            let q = v2t.q[i][j];
            ce -= q * (x - lse);
            grad[i][j] += 0.5 / b as f64 * ((x - lse).exp() - q);
        }
    }
    ce /= b as f64;

    let t2v = build_targets(batch_labels, label_set, Direction::TextToVideo)?;
    let r = t2v.rows.len() as f64;
    let mut kl = 0.0;
    for (q, &j) in t2v.q.iter().zip(&t2v.rows) {
        let col: Vec<f64> = logits.iter().map(|row| row[j]).collect();
        let lse = log_sum_exp(&col);
        for (i, &x) in col.iter().enumerate() {
            if q[i] > 0.0 {
                kl += q[i] * (q[i].ln() - (x - lse));
            }
            grad[i][j] += 0.5 / r * ((x - lse).exp() - q[i]);
        }
    }
    kl /= r;
    Ok((0.5 * (ce + kl), grad))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveModel {
    pub video: VideoEncoder,
    pub text: TextEncoder,
    /// Holds the scalar `log_tau`.
    pub scale: ParamSet,
    pub meta: TrainingMeta,
}

impl ContrastiveModel {
    pub fn new(video: VideoEncoderConfig, text: TextEncoderConfig, seed: u64) -> Result<Self, EncoderError> {
        if video.embed_dim != text.embed_dim {
            return Err(EncoderError::Config(format!(
                "video embed_dim {} != text embed_dim {}",
                video.embed_dim, text.embed_dim
            )));
        }
        let mut scale = ParamSet::new();
        scale.insert(LOG_TAU, Tensor::from_vec(&[1], vec![TAU_INIT.ln()])?);
        Ok(Self {
            video: VideoEncoder::new(video, seed)?,
            text: TextEncoder::new(text, seed ^ 0x7465_7874)?,
            scale,
            meta: TrainingMeta {
                epoch: 0,
                best_val_accuracy: 0.0,
            },
        })
    }

    pub fn log_tau(&self) -> f64 {
        self.scale.t(LOG_TAU).data[0]
    }

    pub fn temperature(&self) -> f64 {
        self.log_tau().exp()
    }

    /// Set `log_tau`, clamped so the temperature stays in `[TAU_MIN, TAU_MAX]`.
    pub fn set_log_tau(&mut self, log_tau: f64) {
        self.scale.t_mut(LOG_TAU).data[0] = log_tau.clamp(TAU_MIN.ln(), TAU_MAX.ln());
    }

    pub fn label_bank(&self, vocab: &LabelVocabulary) -> Result<LabelBank, ContrastiveError> {
        let mut ids = Vec::new();
        let mut embeddings = Vec::new();
        for e in vocab.trainable() {
            ids.push(e.id);
            embeddings.push(self.text.forward(e.text)?.0);
        }
        if ids.is_empty() {
            return Err(ContrastiveError::NoLabels);
        }
        Ok(LabelBank { ids, embeddings })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint {
            version: CONTRASTIVE_VERSION.to_string(),
            seed: self.video.params.seed,
            ..Default::default()
        };
        let a = &mut ck.attributes;
        self.video.config.write_attrs("video.", a);
        self.text.config.write_attrs("text.", a);
        a.insert("kind".into(), "contrastive".into());
        a.insert("epoch".into(), self.meta.epoch.to_string());
        a.insert("best_val_accuracy".into(), format!("{:?}", self.meta.best_val_accuracy));
        a.insert("video.version".into(), self.video.params.version.clone());
        a.insert("text.version".into(), self.text.params.version.clone());
        a.insert("text.seed".into(), self.text.params.seed.to_string());
        ck.tensors.merge_prefixed("video.", &self.video.params.tensors);
        ck.tensors.merge_prefixed("text.", &self.text.params.tensors);
        ck.tensors.merge_prefixed("", &self.scale);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, EncoderError> {
        if ck.version != CONTRASTIVE_VERSION || ck.attr("kind")? != "contrastive" {
            return Err(EncoderError::Checkpoint(format!(
                "not a contrastive checkpoint (version {:?})",
                ck.version
            )));
        }
        let video = VideoEncoder::from_parts(
            VideoEncoderConfig::read_attrs(ck, "video.")?,
            EncoderParams {
                version: ck.attr("video.version")?.to_string(),
                seed: ck.seed,
                tensors: ck.tensors.extract_prefixed("video."),
            },
        )?;
        let text = TextEncoder::from_parts(
            TextEncoderConfig::read_attrs(ck, "text.")?,
            EncoderParams {
                version: ck.attr("text.version")?.to_string(),
                seed: ck.attr_parse("text.seed")?,
                tensors: ck.tensors.extract_prefixed("text."),
            },
        )?;
        if video.config.embed_dim != text.config.embed_dim {
            return Err(EncoderError::Checkpoint("encoder output dims differ".into()));
        }
        let mut scale = ParamSet::new();
        scale.insert(LOG_TAU, ck.tensors.get(LOG_TAU)?.clone());
        crate::encoders::check_shapes(&scale, &[(LOG_TAU.to_string(), vec![1])])?;
        if ck.tensors.len() != video.params.tensors.len() + text.params.tensors.len() + 1 {
            return Err(EncoderError::Checkpoint("unexpected extra tensors".into()));
        }
        Ok(Self {
            video,
            text,
            scale,
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

/// Label-text embeddings encoded once for repeated inference.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelBank {
    pub ids: Vec<ConflictId>,
    pub embeddings: Vec<Vec<f64>>,
}

pub fn similarity_logits(
    model: &ContrastiveModel,
    videos: &[FrameSequence],
    labels: &[&str],
) -> Result<SimilarityMatrix, ContrastiveError> {
    if videos.is_empty() || labels.is_empty() {
        return Err(ContrastiveError::Shape("empty batch or label set".into()));
    }
    let v = videos
        .iter()
        .map(|s| model.video.forward(s).map(|(e, _)| e))
        .collect::<Result<Vec<_>, _>>()?;
    let t = labels
        .iter()
        .map(|s| model.text.forward(s).map(|(e, _)| e))
        .collect::<Result<Vec<_>, _>>()?;
    SimilarityMatrix::from_embeddings(&v, &t, model.temperature())
}

/// Chosen label plus every trainable label with its cosine, best first.
#[derive(Clone, Debug, PartialEq)]
pub struct ConflictPrediction {
    pub label: ConflictId,
    pub ranked: Vec<(ConflictId, f64)>,
}

impl ConflictPrediction {
    pub fn top_k(&self, k: usize) -> &[(ConflictId, f64)] {
        &self.ranked[..k.min(self.ranked.len())]
    }
}

pub fn infer_conflict_type(
    model: &ContrastiveModel,
    seq: &FrameSequence,
    labels: &LabelVocabulary,
) -> Result<ConflictPrediction, ContrastiveError> {
    infer_with_bank(model, &model.label_bank(labels)?, seq)
}

/// Highest cosine wins; the bank is in vocabulary order, so ties go to the
/// lowest id.
pub fn infer_with_bank(
    model: &ContrastiveModel,
    bank: &LabelBank,
    seq: &FrameSequence,
) -> Result<ConflictPrediction, ContrastiveError> {
    let v = model.video.forward(seq)?.0;
    let sims = bank
        .embeddings
        .iter()
        .map(|t| cosine_similarity(&v, t))
        .collect::<Result<Vec<_>, _>>()?;
    let ranked: Vec<(ConflictId, f64)> = ranked(&sims).into_iter().map(|i| (bank.ids[i], sims[i])).collect();
    Ok(ConflictPrediction {
        label: ranked[0].0,
        ranked,
    })
}

/// A clip labelled with its conflict type, frames already sampled.
#[derive(Clone, Debug)]
pub struct ConflictClip {
    pub event_id: String,
    pub frames: FrameSequence,
    pub conflict_type: ConflictId,
}

pub fn load_conflict_clips(
    manifest: &DatasetManifest,
    records: &[&EventRecord],
    num_frames: usize,
) -> Result<Vec<ConflictClip>, TrainError> {
    records
        .iter()
        .map(|r| {
            let conflict_type = r
                .conflict_type
                .ok_or_else(|| TrainError::MissingConflict(r.event_id.clone()))?;
            Ok(ConflictClip {
                event_id: r.event_id.clone(),
                frames: read_frames_sampled(&manifest.frames_dir(r), manifest.fps, num_frames)?,
                conflict_type,
            })
        })
        .collect()
}

/// Loss over `clips` against every label in `labels` and its gradient,
/// split into video, text and `log_tau` parts.
pub fn batch_loss_and_grad(
    model: &ContrastiveModel,
    labels: &[(ConflictId, &str)],
    clips: &[&ConflictClip],
) -> Result<(f64, [ParamSet; 3]), ContrastiveError> {
    let label_set: Vec<ConflictId> = labels.iter().map(|(id, _)| *id).collect();
    let batch_labels: Vec<ConflictId> = clips.iter().map(|c| c.conflict_type).collect();
    let texts = labels
        .iter()
        .map(|(_, s)| model.text.forward(s))
        .collect::<Result<Vec<_>, _>>()?;
    let videos = clips
        .iter()
        .map(|c| model.video.forward(&c.frames))
        .collect::<Result<Vec<_>, _>>()?;
    let v: Vec<Vec<f64>> = videos.iter().map(|(e, _)| e.clone()).collect();
    let t: Vec<Vec<f64>> = texts.iter().map(|(e, _)| e.clone()).collect();
    let sim = SimilarityMatrix::from_embeddings(&v, &t, model.temperature())?;
    let logits = sim.logits();
    let (loss, dlogits) = contrastive_loss_grad(&logits, &batch_labels, &label_set)?;

    let inv_tau = 1.0 / sim.temperature;
    let mut dlog_tau = 0.0;
    let mut dv = vec![vec![0.0; v[0].len()]; v.len()];
    let mut dt = vec![vec![0.0; t[0].len()]; t.len()];
    let nv: Vec<f64> = v.iter().map(|x| norm(x)).collect();
    let nt: Vec<f64> = t.iter().map(|x| norm(x)).collect();
    for i in 0..v.len() {
        for j in 0..t.len() {
            // logit = cos * exp(-log_tau)
            dlog_tau -= dlogits[i][j] * logits[i][j];
            let dc = dlogits[i][j] * inv_tau;
            let c = sim.cosines[i][j];
            for k in 0..v[i].len() {
                dv[i][k] += dc * (t[j][k] / (nv[i] * nt[j]) - c * v[i][k] / (nv[i] * nv[i]));
                dt[j][k] += dc * (v[i][k] / (nv[i] * nt[j]) - c * t[j][k] / (nt[j] * nt[j]));
            }
        }
    }

    let mut g_video = model.video.params.tensors.zeros_like();
    for ((_, cache), d) in videos.iter().zip(&dv) {
        model.video.backward(cache, d, &mut g_video);
    }
    let mut g_text = model.text.params.tensors.zeros_like();
    for ((_, cache), d) in texts.iter().zip(&dt) {
        model.text.backward(cache, d, &mut g_text);
    }
    let mut g_scale = model.scale.zeros_like();
    g_scale.t_mut(LOG_TAU).data[0] = dlog_tau;
    Ok((loss, [g_video, g_text, g_scale]))
}

impl Trainable for ContrastiveModel {
    type Example = ConflictClip;

    fn zero_grads(&self) -> Vec<ParamSet> {
        vec![
            self.video.params.tensors.zeros_like(),
            self.text.params.tensors.zeros_like(),
            self.scale.zeros_like(),
        ]
    }

    fn decayed_params(&self) -> Vec<&ParamSet> {
        vec![&self.video.params.tensors, &self.text.params.tensors]
    }

    fn batch_loss(&self, batch: &[&ConflictClip], grads: &mut [ParamSet]) -> Result<f64, TrainError> {
        let vocab = LabelVocabulary::standard();
        let labels: Vec<(ConflictId, &str)> = vocab.trainable().map(|e| (e.id, e.text)).collect();
        let (loss, g) = batch_loss_and_grad(self, &labels, batch)?;
        for (dst, src) in grads.iter_mut().zip(g) {
            *dst = src;
        }
        Ok(loss)
    }

    fn apply(&mut self, step: &[ParamSet]) {
        training::descend(&mut self.video.params.tensors, &step[0]);
        training::descend(&mut self.text.params.tensors, &step[1]);
        training::descend(&mut self.scale, &step[2]);
        self.set_log_tau(self.log_tau());
    }

    fn accuracy(&self, examples: &[ConflictClip]) -> Result<f64, TrainError> {
        let bank = self.label_bank(&LabelVocabulary::standard())?;
        let mut hits = 0usize;
        for e in examples {
            if infer_with_bank(self, &bank, &e.frames)?.label == e.conflict_type {
                hits += 1;
            }
        }
        Ok(hits as f64 / examples.len() as f64)
    }

    fn example_id(e: &ConflictClip) -> String {
        e.event_id.clone()
    }

    fn temperature(&self) -> Option<f64> {
        Some(ContrastiveModel::temperature(self))
    }
}

#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContrastiveConfig {
    pub video: VideoEncoderConfig,
    pub text: TextEncoderConfig,
    pub train: TrainConfig,
}

#[derive(Clone, Debug)]
pub struct ContrastiveRun {
    pub model: ContrastiveModel,
    pub log: Vec<EpochLog>,
}

/// Minibatch descent on [`contrastive_loss`] against all 16 trainable
/// labels; keeps the epoch with the best validation top-1 accuracy
/// (earliest on ties). Few-shot training just passes a subsampled `train`.
pub fn train_contrastive(
    config: &ContrastiveConfig,
    train: &[ConflictClip],
    val: &[ConflictClip],
) -> Result<ContrastiveRun, TrainError> {
    let model = ContrastiveModel::new(config.video.clone(), config.text.clone(), config.train.seed)?;
    let fitted = fit(model, train, val, &config.train)?;
    let mut model = fitted.model;
    model.meta = TrainingMeta {
        epoch: fitted.best_epoch,
        best_val_accuracy: fitted.best_accuracy,
    };
    Ok(ContrastiveRun {
        model,
        log: fitted.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u8]) -> Vec<ConflictId> {
        v.iter().map(|&i| ConflictId(i)).collect()
    }

    #[test]
    fn cosine_hand_values() {
        assert!((cosine_similarity(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_similarity(&[1.0, 2.0], &[2.0, 1.0]).unwrap() - 0.8).abs() < 1e-15);
        assert!(matches!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(ContrastiveError::ZeroNorm)));
    }

    #[test]
    fn targets() {
        let v2t = build_targets(&ids(&[1, 2]), &ids(&[1, 2]), Direction::VideoToText).unwrap();
        assert_eq!(v2t.q, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let t2v = build_targets(&ids(&[1, 1]), &ids(&[1, 2]), Direction::TextToVideo).unwrap();
        assert_eq!(t2v.q, vec![vec![0.5, 0.5]]);
        assert_eq!(t2v.rows, vec![0]);
        let v2t = build_targets(&ids(&[1, 1]), &ids(&[1, 2]), Direction::VideoToText).unwrap();
        assert_eq!(v2t.q, vec![vec![1.0, 0.0], vec![1.0, 0.0]]);
        assert!(build_targets(&ids(&[3]), &ids(&[1, 2]), Direction::VideoToText).is_err());
    }

    #[test]
    fn loss_hand_values() {
        let l = contrastive_loss(&[vec![1.0, 0.0], vec![0.0, 1.0]], &ids(&[1, 2]), &ids(&[1, 2])).unwrap();
        assert!((l - (1.0 + (-1f64).exp()).ln()).abs() < 1e-12);
        let sep = contrastive_loss(&[vec![1000.0, -1000.0], vec![-1000.0, 1000.0]], &ids(&[1, 2]), &ids(&[1, 2]))
            .unwrap();
        assert!(sep.abs() < 1e-12);
    }

    #[test]
    fn tau_is_clamped() {
        let mut m = ContrastiveModel::new(
            VideoEncoderConfig {
                height: 8,
                width: 8,
                embed_dim: 4,
                ..Default::default()
            },
            TextEncoderConfig {
                vocab_slots: 8,
                embed_dim: 4,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        assert!((m.temperature() - TAU_INIT).abs() < 1e-15);
        m.set_log_tau(-10.0);
        assert!((m.temperature() - TAU_MIN).abs() < 1e-15);
        m.set_log_tau(3.0);
        assert_eq!(m.temperature(), TAU_MAX);
    }
}
