use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::{
    resolved_text, BackendKind, EmbeddingProvider, EvaluateSection, InferSection, NarrateSection, Profile,
    SplitSection, SplitSelection, Subset, SynthSection, Task, TrainSection,
};
use super::records::{read_jsonl, to_jsonl, ConflictOutput, FailedNarrative, NarrativeLine, PredictionRecord, RankedLabel};
use super::CliError;
use crate::contrastive::{self, ContrastiveConfig, ContrastiveModel};
use crate::data::{
    load_manifest, read_frames, save_manifest, split_dataset, subsample_fraction, DatasetManifest, EventRecord,
    EventType, LabelVocabulary, Split, SplitRatios,
};
use crate::encoders::{sample_frames, VideoEncoderConfig};
use crate::metrics::{classification_report, evaluate_narratives, HashEmbedder, NarrativePair, TokenEmbedder};
use crate::narrative::{
    generate_batch, GenerationBackend, HttpBackend, HttpBackendConfig, MockBackend, NarrativeJob,
};
use crate::supervised::{self, SupervisedConfig, SupervisedModel};
use crate::synth::{event_type_profile, generate_dataset, table_profile, ReferenceLine, SynthConfig};
use crate::{EpochLog, TrainConfig};

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn report(label: &str, path: &Path) -> Result<(), CliError> {
    println!("{label}: {} sha256={}", path.display(), sha256_file(path)?);
    Ok(())
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

pub fn cmd_synth(c: &SynthSection) -> Result<(), CliError> {
    let counts = match c.profile {
        Profile::EventTypes => event_type_profile(c.per_type),
        Profile::Table => table_profile(c.total_sce, c.normal),
        Profile::Custom => c.counts.clone(),
    };
    let cfg = SynthConfig {
        seed: c.seed,
        num_frames: c.num_frames,
        height: c.height,
        width: c.width,
        fps: c.fps,
        counts,
    };
    let manifest = generate_dataset(&cfg, &c.root)?;
    write(&c.root.join("synth.resolved.toml"), &resolved_text("synth", c)?)?;
    println!("events: {}", manifest.len());
    report("manifest", &c.root.join("manifest.jsonl"))?;
    report("references", &c.root.join("references.jsonl"))
}

pub fn cmd_split(c: &SplitSection) -> Result<(), CliError> {
    let manifest = load_manifest(&c.manifest)?;
    let ratios = SplitRatios {
        train: c.train,
        test: c.test,
        val: c.val,
    };
    let out = split_dataset(&manifest, ratios, c.seed)?;
    save_manifest(&out, &c.manifest)?;
    write(&sibling(&c.manifest, "split.resolved.toml"), &resolved_text("split", c)?)?;
    for s in [Split::Train, Split::Test, Split::Val] {
        println!("{}: {}", s.key(), out.split(s).len());
    }
    report("manifest", &c.manifest)
}

fn check_geometry(manifest: &DatasetManifest, video: &VideoEncoderConfig, err: fn(String) -> CliError) -> Result<(), CliError> {
    if (manifest.height, manifest.width) != (video.height, video.width) {
        return Err(err(format!(
            "frames are {}x{} but the video encoder expects {}x{}",
            manifest.height, manifest.width, video.height, video.width
        )));
    }
    Ok(())
}

fn train_config(c: &TrainSection) -> TrainConfig {
    TrainConfig {
        epochs: c.epochs,
        batch_size: c.batch_size,
        learning_rate: c.learning_rate,
        seed: c.seed,
        optimizer: c.optimizer,
        weight_decay: c.weight_decay,
    }
}

pub fn cmd_train(c: &TrainSection) -> Result<(), CliError> {
    let manifest = load_manifest(&c.manifest)?;
    check_geometry(&manifest, &c.video, CliError::Config)?;
    let vocab = LabelVocabulary::standard();
    let keep = |r: &&EventRecord| match c.task {
        Task::Event => true,
        Task::Conflict => r.conflict_type.is_some_and(|id| vocab.is_trainable(id)),
    };
    let train_all: Vec<EventRecord> = manifest.split(Split::Train).into_iter().filter(keep).cloned().collect();
    let val: Vec<&EventRecord> = manifest.split(Split::Val).into_iter().filter(keep).collect();
    if train_all.is_empty() || val.is_empty() {
        return Err(CliError::Config(format!(
            "{} has no {} events assigned to both train and val; run `sce split` first",
            c.manifest.display(),
            c.task.key()
        )));
    }
    let train = if c.fraction < 1.0 {
        subsample_fraction(&train_all, c.fraction, c.seed)?
    } else if c.fraction == 1.0 {
        train_all
    } else {
        return Err(CliError::Config(format!("fraction {} must be in (0, 1]", c.fraction)));
    };
    let train_refs: Vec<&EventRecord> = train.iter().collect();
    let frames = c.video.num_frames;
    let cfg = train_config(c);
    eprintln!("training {} on {} events ({} val)", c.task.key(), train.len(), val.len());

    let ckpt = c.out.join(format!("{}.ckpt", c.task.key()));
    let (log, best_epoch, best_acc): (Vec<EpochLog>, usize, f64) = match c.task {
        Task::Event => {
            let tr = supervised::load_clips(&manifest, &train_refs, frames)?;
            let va = supervised::load_clips(&manifest, &val, frames)?;
            let sc = SupervisedConfig {
                encoder: c.video.clone(),
                train: cfg,
            };
            let run = supervised::train_supervised(&sc, &tr, &va)?;
            fs::create_dir_all(&c.out).map_err(|e| io_err(&c.out, e))?;
            run.model.save(&ckpt)?;
            (run.log, run.model.meta.epoch, run.model.meta.best_val_accuracy)
        }
        Task::Conflict => {
            let tr = contrastive::load_conflict_clips(&manifest, &train_refs, frames)?;
            let va = contrastive::load_conflict_clips(&manifest, &val, frames)?;
            let cc = ContrastiveConfig {
                video: c.video.clone(),
                text: c.text.clone(),
                train: cfg,
            };
            let run = contrastive::train_contrastive(&cc, &tr, &va)?;
            fs::create_dir_all(&c.out).map_err(|e| io_err(&c.out, e))?;
            run.model.save(&ckpt)?;
            (run.log, run.model.meta.epoch, run.model.meta.best_val_accuracy)
        }
    };
    let log_path = c.out.join(format!("{}_log.jsonl", c.task.key()));
    write(&log_path, &to_jsonl(&log))?;
    write(
        &c.out.join(format!("train_{}.resolved.toml", c.task.key())),
        &resolved_text("train", c)?,
    )?;
    println!("best epoch {best_epoch}, validation accuracy {best_acc:.4}");
    report("checkpoint", &ckpt)?;
    report("log", &log_path)
}

fn select(manifest: &DatasetManifest, s: SplitSelection) -> Vec<&EventRecord> {
    match s {
        SplitSelection::All => manifest.records.iter().collect(),
        SplitSelection::Train => manifest.split(Split::Train),
        SplitSelection::Val => manifest.split(Split::Val),
        SplitSelection::Test => manifest.split(Split::Test),
    }
}

pub fn cmd_infer(c: &InferSection) -> Result<(), CliError> {
    let manifest = load_manifest(&c.manifest)?;
    let records = select(&manifest, c.split);
    if records.is_empty() {
        return Err(CliError::Config(format!("no events in the {:?} selection", c.split)));
    }
    if c.top_k == 0 {
        return Err(CliError::Config("top_k must be positive".into()));
    }
    let event_model = SupervisedModel::load(&c.event_checkpoint)?;
    check_geometry(&manifest, &event_model.encoder.config, CliError::Artifact)?;

    let clips = records
        .par_iter()
        .map(|r| read_frames(&manifest.frames_dir(r), manifest.fps))
        .collect::<Result<Vec<_>, _>>()?;
    let event_scores = clips
        .par_iter()
        .map(|clip| {
            let s = sample_frames(clip, event_model.encoder.config.num_frames)?;
            supervised::forward_scores(&event_model, &s)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let gated: Vec<bool> = event_scores.iter().map(|s| c.force_conflict || s.predict().is_sce()).collect();

    let vocab = LabelVocabulary::standard();
    let mut conflicts: Vec<Option<ConflictOutput>> = vec![None; records.len()];
    if gated.iter().any(|&g| g) {
        let model = ContrastiveModel::load(&c.conflict_checkpoint)?;
        check_geometry(&manifest, &model.video.config, CliError::Artifact)?;
        let bank = model.label_bank(&vocab)?;
        conflicts = clips
            .par_iter()
            .zip(&gated)
            .map(|(clip, &g)| -> Result<Option<ConflictOutput>, CliError> {
                if !g {
                    return Ok(None);
                }
                let s = sample_frames(clip, model.video.config.num_frames)?;
                let p = contrastive::infer_with_bank(&model, &bank, &s)?;
                let text = |id| vocab.text(id).unwrap_or_default().to_owned();
                let mut scores = vec![0.0; bank.ids.len()];
                for &(id, s) in &p.ranked {
                    scores[id.index()] = s;
                }
                Ok(Some(ConflictOutput {
                    label: p.label,
                    text: text(p.label),
                    scores,
                    top_k: p
                        .top_k(c.top_k)
                        .iter()
                        .map(|&(label, score)| RankedLabel {
                            label,
                            text: text(label),
                            score,
                        })
                        .collect(),
                }))
            })
            .collect::<Result<Vec<_>, _>>()?;
    }

    let rows: Vec<PredictionRecord> = records
        .iter()
        .zip(event_scores)
        .zip(conflicts)
        .map(|((r, s), conflict)| PredictionRecord {
            event_id: r.event_id.clone(),
            event_type: s.predict(),
            event_scores: s.0.to_vec(),
            conflict,
        })
        .collect();
    write(&c.out, &to_jsonl(&rows))?;
    write(&sibling(&c.out, "infer.resolved.toml"), &resolved_text("infer", c)?)?;
    println!(
        "events: {}, predicted SCE: {}",
        rows.len(),
        rows.iter().filter(|r| r.event_type.is_sce()).count()
    );
    report("predictions", &c.out)
}

fn missing_ids<'a>(ids: impl Iterator<Item = &'a str>, known: &dyn Fn(&str) -> bool) -> Result<(), CliError> {
    let missing: BTreeSet<&str> = ids.filter(|id| !known(id)).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "event ids not found in ground truth: {}",
            missing.into_iter().collect::<Vec<_>>().join(", ")
        )))
    }
}

pub fn cmd_narrate(c: &NarrateSection) -> Result<(), CliError> {
    let manifest = load_manifest(&c.manifest)?;
    let preds: Vec<PredictionRecord> = read_jsonl(&c.predictions)?;
    missing_ids(preds.iter().map(|p| p.event_id.as_str()), &|id| manifest.get(id).is_some())?;
    let backend: Box<dyn GenerationBackend> = match c.backend.kind {
        BackendKind::Mock => Box::new(MockBackend::new(c.backend.seed)),
        BackendKind::Http => Box::new(HttpBackend::from_env(HttpBackendConfig {
            model: c.backend.model.clone(),
            max_tokens: c.backend.max_tokens,
            seed: c.backend.seed,
            frames_per_request: c.backend.frames_per_request,
        })?),
    };
    let jobs = preds
        .par_iter()
        .map(|p| {
            let r = manifest.get(&p.event_id).expect("checked above");
            Ok(NarrativeJob {
                event_id: p.event_id.clone(),
                frames: read_frames(&manifest.frames_dir(r), manifest.fps)?,
                event_type: p.event_type,
                conflict_label: p.conflict.as_ref().map(|k| k.text.clone()),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let results = generate_batch(backend.as_ref(), &jobs, c.strategy, c.max_in_flight);

    let mut lines = Vec::with_capacity(results.len());
    let mut calls = Vec::new();
    for r in results {
        match r {
            Ok(n) => {
                calls.extend(n.transcript.iter().cloned());
                lines.push(NarrativeLine::Ok(n));
            }
            Err(e) => {
                calls.extend(e.transcript.iter().cloned());
                lines.push(NarrativeLine::Failed(FailedNarrative {
                    event_id: e.event_id.clone(),
                    error: e.kind.to_string(),
                    completed_calls: e.transcript.len(),
                }));
            }
        }
    }
    let failed = lines.iter().filter(|l| matches!(l, NarrativeLine::Failed(_))).count();
    write(&c.out, &to_jsonl(&lines))?;
    write(&c.transcripts, &to_jsonl(&calls))?;
    write(&sibling(&c.out, "narrate.resolved.toml"), &resolved_text("narrate", c)?)?;
    println!(
        "narratives: {} ok, {failed} failed, {} backend calls",
        lines.len() - failed,
        calls.len()
    );
    report("narratives", &c.out)
}

pub fn cmd_evaluate(c: &EvaluateSection) -> Result<(), CliError> {
    if c.predictions.is_none() && c.narratives.is_none() {
        return Err(CliError::Config("nothing to evaluate: set predictions and/or narratives".into()));
    }
    let manifest = load_manifest(&c.manifest)?;
    let truth: HashMap<&str, &EventRecord> = manifest.records.iter().map(|r| (r.event_id.as_str(), r)).collect();
    let in_subset = |id: &str| c.subset == Subset::All || truth[id].event_type.is_sce();
    fs::create_dir_all(&c.out).map_err(|e| io_err(&c.out, e))?;

    if let Some(path) = &c.predictions {
        let preds: Vec<PredictionRecord> = read_jsonl(path)?;
        missing_ids(preds.iter().map(|p| p.event_id.as_str()), &|id| truth.contains_key(id))?;
        let rows: Vec<&PredictionRecord> = preds.iter().filter(|p| in_subset(&p.event_id)).collect();
        let event_report = if rows.is_empty() {
            None
        } else {
            let y: Vec<usize> = rows.iter().map(|p| truth[p.event_id.as_str()].event_type.index()).collect();
            let s: Vec<Vec<f64>> = rows.iter().map(|p| p.event_scores.clone()).collect();
            if s.iter().any(|r| r.len() != EventType::COUNT) {
                return Err(CliError::Artifact("event_scores must have 4 entries".into()));
            }
            Some(classification_report(&y, &s, c.top_k).map_err(|e| CliError::Artifact(e.to_string()))?)
        };
        let vocab = LabelVocabulary::standard();
        let matched: Vec<(usize, &Vec<f64>)> = rows
            .iter()
            .filter_map(|p| {
                let id = truth[p.event_id.as_str()].conflict_type.filter(|&id| vocab.is_trainable(id))?;
                Some((id.index(), &p.conflict.as_ref()?.scores))
            })
            .collect();
        let conflict_report = if matched.is_empty() {
            None
        } else {
            let y: Vec<usize> = matched.iter().map(|m| m.0).collect();
            let s: Vec<Vec<f64>> = matched.iter().map(|m| m.1.clone()).collect();
            Some(classification_report(&y, &s, c.top_k).map_err(|e| CliError::Artifact(e.to_string()))?)
        };
        let out = c.out.join("classification.json");
        let json = serde_json::json!({
            "subset": c.subset,
            "event_type": event_report,
            "conflict_type": conflict_report,
        });
        write(&out, &(serde_json::to_string_pretty(&json).expect("report serializes") + "\n"))?;
        if let Some(r) = &event_report {
            println!("event type: accuracy {:.4}, macro F1 {:.4}", r.accuracy, r.macro_f1);
        }
        if let Some(r) = &conflict_report {
            println!("conflict type: top-1 {:.4}, top-{} {:.4}", r.accuracy, r.k, r.top_k_accuracy);
        }
        report("classification", &out)?;
    }

    if let Some(path) = &c.narratives {
        let refs_path = c.references.clone().unwrap_or_else(|| sibling(&c.manifest, "references.jsonl"));
        let refs: HashMap<String, String> = read_jsonl::<ReferenceLine>(&refs_path)?
            .into_iter()
            .map(|r| (r.event_id, r.text))
            .collect();
        let lines: Vec<NarrativeLine> = read_jsonl(path)?;
        missing_ids(lines.iter().map(NarrativeLine::event_id), &|id| {
            truth.contains_key(id) && refs.contains_key(id)
        })?;
        let pairs: Vec<NarrativePair> = lines
            .iter()
            .filter(|l| in_subset(l.event_id()))
            .map(|l| NarrativePair {
                event_id: l.event_id().to_owned(),
                is_sce: truth[l.event_id()].event_type.is_sce(),
                generated: match l {
                    NarrativeLine::Ok(n) => n.final_text.clone(),
                    NarrativeLine::Failed(_) => String::new(),
                },
                reference: refs[l.event_id()].clone(),
            })
            .collect();
        if pairs.is_empty() {
            return Err(CliError::Config("no narratives in the selected subset".into()));
        }
        let hash = HashEmbedder {
            dim: c.embedding_dim,
            seed: c.embedding_seed,
        };
        let provider: Option<&dyn TokenEmbedder> = match c.embedding {
            EmbeddingProvider::None => None,
            EmbeddingProvider::Hash => Some(&hash),
        };
        let scores = evaluate_narratives(&pairs, provider).map_err(|e| CliError::Config(e.to_string()))?;
        let out = c.out.join("text_scores.jsonl");
        write(&out, &scores.to_jsonl())?;
        if let Some(m) = &scores.all.mean {
            println!(
                "text: ROUGE-L {:.4}, METEOR {:.4} over {} events ({} excluded)",
                m.rouge_l_f1, m.meteor, scores.all.scored, scores.all.excluded
            );
        }
        report("text scores", &out)?;
    }
    write(&c.out.join("evaluate.resolved.toml"), &resolved_text("evaluate", c)?)
}
