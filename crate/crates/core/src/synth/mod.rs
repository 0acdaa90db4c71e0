//! Procedural stand-in for dashcam event footage.
//!
//! Each event is a short top-down clip: a road, the ego car, and one agent
//! whose approach direction, size and colour encode the conflict type and
//! whose closest approach encodes the event type. The geometry is fully
//! determined by [`plan_scene`], so labels can be checked without pixels.
//!
//! Output tree of [`generate_dataset`]:
//!
//! ```text
//! root/manifest.jsonl
//! root/references.jsonl          {"event_id": .., "text": ..} per line
//! root/events/<event_id>/frame_00000.png ...
//! ```

mod geometry;
mod render;

use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use geometry::{
    center_gap_range, conflict_style, on_screen_room, BoxI, ConflictStyle, Trajectory, DRIFT_RAMP, EGO, GRID, G_NEAR,
    G_SAFE, ROAD_LEFT, ROAD_RIGHT, TIRE_DRIFT,
};

use crate::data::{
    largest_remainder_counts, save_manifest, write_frames, ConflictId, DataError, DatasetManifest,
    EventRecord, EventType, FrameSequence, LabelVocabulary, Split, TABLE_COUNTS,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("no event requested")]
    NoEvents,
    #[error("could not place a {event_type} scene after {attempts} draws (seed {seed})")]
    Placement {
        event_type: EventType,
        seed: u64,
        attempts: usize,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lighting {
    Day,
    Night,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weather {
    Clear,
    Rain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoadKind {
    Highway,
    Urban,
}

/// Scene conditions. They only change global brightness and noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Environment {
    pub lighting: Lighting,
    pub weather: Weather,
    pub road: RoadKind,
}

impl Default for Environment {
    fn default() -> Self {
        Self {
            lighting: Lighting::Day,
            weather: Weather::Clear,
            road: RoadKind::Highway,
        }
    }
}

impl Environment {
    pub fn tags(&self) -> [&'static str; 3] {
        [
            match self.lighting {
                Lighting::Day => "day",
                Lighting::Night => "night",
            },
            match self.weather {
                Weather::Clear => "clear",
                Weather::Rain => "rain",
            },
            match self.road {
                RoadKind::Highway => "highway",
                RoadKind::Urban => "urban",
            },
        ]
    }

    pub fn brightness(&self) -> f64 {
        let base = match self.lighting {
            Lighting::Day => 1.0,
            Lighting::Night => 0.6,
        };
        match self.road {
            RoadKind::Highway => base,
            RoadKind::Urban => base * 0.85,
        }
    }

    pub fn noise_amplitude(&self) -> i32 {
        let base = match self.weather {
            Weather::Clear => 3,
            Weather::Rain => 10,
        };
        match self.road {
            RoadKind::Highway => base,
            RoadKind::Urban => base + 4,
        }
    }

    fn draw(rng: &mut impl Rng) -> Self {
        Self {
            lighting: if rng.gen_bool(0.5) { Lighting::Day } else { Lighting::Night },
            weather: if rng.gen_bool(0.5) { Weather::Clear } else { Weather::Rain },
            road: if rng.gen_bool(0.5) { RoadKind::Highway } else { RoadKind::Urban },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub event_type: EventType,
    pub conflict_type: Option<ConflictId>,
    pub seed: u64,
    pub num_frames: usize,
    pub height: usize,
    pub width: usize,
    pub fps: f64,
    pub environment: Environment,
}

impl SceneSpec {
    pub fn new(event_type: EventType, conflict_type: Option<ConflictId>, seed: u64) -> Self {
        Self {
            event_type,
            conflict_type,
            seed,
            num_frames: 77,
            height: 64,
            width: 64,
            fps: 15.0,
            environment: Environment::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        match (self.event_type, self.conflict_type) {
            (EventType::NormalDriving, Some(_)) => return bad("normal driving carries no conflict type"),
            (et, None) if et.is_sce() => return bad("safety-critical events need a conflict type"),
            (_, Some(c)) if !LabelVocabulary::standard().is_trainable(c) => {
                return bad("conflict type must be a trainable label")
            }
            _ => {}
        }
        if self.num_frames < 8 {
            return bad("num_frames must be at least 8");
        }
        if self.height < 8 || self.width < 8 {
            return bad("frames must be at least 8x8");
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad("fps must be positive");
        }
        Ok(())
    }
}

/// The replayable geometry of one event plus its agent's look.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenePlan {
    pub trajectory: Trajectory,
    /// Conflict geometry actually drawn; normal driving borrows a random one.
    pub geometry: ConflictId,
    pub agent_color: [u8; 3],
}

const STREAM_PLAN: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_ENV: u64 = 3;
const MAX_DRAWS: usize = 64;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Reference-study weights over the 16 trainable geometries.
fn table_geometry() -> WeightedIndex<u32> {
    WeightedIndex::new(&TABLE_COUNTS[..16]).expect("positive counts")
}

/// Draw trajectory parameters until the geometry predicates give exactly the
/// requested event type.
pub fn plan_scene(spec: &SceneSpec) -> Result<ScenePlan, SynthError> {
    spec.validate()?;
    let mut rng = stream(spec.seed, STREAM_PLAN);
    let geometry = spec
        .conflict_type
        .unwrap_or_else(|| ConflictId::from_index(table_geometry().sample(&mut rng)));
    let style = conflict_style(geometry).expect("trainable id");
    let (lo, mut hi) = center_gap_range(spec.event_type);
    if spec.event_type == EventType::NormalDriving {
        // keep the borrowed agent visible where the grid leaves room
        hi = hi.min(on_screen_room(style)).max(lo);
    }
    for _ in 0..MAX_DRAWS {
        let jitter = if style.dir.0 == 0 || style.dir.1 == 0 {
            rng.gen_range(-1..=1)
        } else {
            0
        };
        let trajectory = Trajectory {
            event_type: spec.event_type,
            num_frames: spec.num_frames,
            dir: style.dir,
            size: style.size,
            offset: style.offset + jitter,
            wobble: style.wobble,
            speed: style.speed * rng.gen_range(0.8..1.2),
            center_gap: rng.gen_range(lo..=hi),
        };
        if trajectory.classify() == Some(spec.event_type) {
            return Ok(ScenePlan {
                trajectory,
                geometry,
                agent_color: style.color,
            });
        }
    }
    Err(SynthError::Placement {
        event_type: spec.event_type,
        seed: spec.seed,
        attempts: MAX_DRAWS,
    })
}

pub fn render_event(spec: &SceneSpec) -> Result<FrameSequence, SynthError> {
    let plan = plan_scene(spec)?;
    let mut noise = stream(spec.seed, STREAM_NOISE);
    Ok(render::render(
        &plan.trajectory,
        plan.agent_color,
        spec.environment,
        spec.height,
        spec.width,
        spec.fps,
        &mut noise,
    ))
}

/// First 8 bytes (little-endian) of `sha256(master_seed_le || event_id)`.
pub fn event_seed(master_seed: u64, event_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(event_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("32-byte digest"))
}

/// How many events of one (event type, conflict type) pair to generate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountEntry {
    pub event_type: EventType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conflict_type: Option<ConflictId>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_frames: usize,
    pub height: usize,
    pub width: usize,
    pub fps: f64,
    pub counts: Vec<CountEntry>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_frames: 77,
            height: 64,
            width: 64,
            fps: 15.0,
            counts: Vec::new(),
        }
    }
}

impl SynthConfig {
    pub fn total(&self) -> usize {
        self.counts.iter().map(|c| c.count).sum()
    }

    /// Scene specs in event-id order.
    pub fn specs(&self) -> Vec<(String, SceneSpec)> {
        let mut out = Vec::with_capacity(self.total());
        for entry in &self.counts {
            for _ in 0..entry.count {
                let id = format!("ev{:05}", out.len());
                let seed = event_seed(self.seed, &id);
                let environment = Environment::draw(&mut stream(seed, STREAM_ENV));
                out.push((
                    id,
                    SceneSpec {
                        event_type: entry.event_type,
                        conflict_type: entry.conflict_type,
                        seed,
                        num_frames: self.num_frames,
                        height: self.height,
                        width: self.width,
                        fps: self.fps,
                        environment,
                    },
                ));
            }
        }
        out
    }
}

/// Scale the reference conflict-type profile to `total_sce` safety-critical
/// events (`round(total * n_k / 8600)` per trainable class, split across
/// crash / tire strike / near-crash by largest remainder in proportion
/// 1063 : 774 : 6782) plus `normal` normal-driving events.
pub fn table_profile(total_sce: usize, normal: usize) -> Vec<CountEntry> {
    let trainable_total: u32 = TABLE_COUNTS[..16].iter().sum();
    let severity = [1063.0, 774.0, 6782.0];
    let sev_sum: f64 = severity.iter().sum();
    let shares: Vec<f64> = severity.iter().map(|s| s / sev_sum).collect();
    let sce_types = [EventType::Crash, EventType::TireStrike, EventType::NearCrash];
    let mut out = Vec::new();
    for (k, &n_k) in TABLE_COUNTS[..16].iter().enumerate() {
        let n = (total_sce as f64 * f64::from(n_k) / f64::from(trainable_total)).round() as usize;
        for (et, c) in sce_types.iter().zip(largest_remainder_counts(n, &shares)) {
            if c > 0 {
                out.push(CountEntry {
                    event_type: *et,
                    conflict_type: Some(ConflictId::from_index(k)),
                    count: c,
                });
            }
        }
    }
    if normal > 0 {
        out.push(CountEntry {
            event_type: EventType::NormalDriving,
            conflict_type: None,
            count: normal,
        });
    }
    out
}

/// `per_type` events of each event type; the SCE classes spread over the
/// 16 trainable conflict types in reference-study proportions (largest remainder).
pub fn event_type_profile(per_type: usize) -> Vec<CountEntry> {
    let total: u32 = TABLE_COUNTS[..16].iter().sum();
    let weights: Vec<f64> = TABLE_COUNTS[..16].iter().map(|&n| f64::from(n) / f64::from(total)).collect();
    let mut out = Vec::new();
    for et in [EventType::Crash, EventType::TireStrike, EventType::NearCrash] {
        for (k, c) in largest_remainder_counts(per_type, &weights).into_iter().enumerate() {
            if c > 0 {
                out.push(CountEntry {
                    event_type: et,
                    conflict_type: Some(ConflictId::from_index(k)),
                    count: c,
                });
            }
        }
    }
    if per_type > 0 {
        out.push(CountEntry {
            event_type: EventType::NormalDriving,
            conflict_type: None,
            count: per_type,
        });
    }
    out
}

const AGENT_NOUNS: [&str; 16] = [
    "lead vehicle",
    "roadside barrier",
    "turning vehicle",
    "parked vehicle",
    "vehicle in the adjacent lane",
    "turning vehicle",
    "following vehicle",
    "turning vehicle",
    "crossing vehicle",
    "animal",
    "turning vehicle",
    "merging vehicle",
    "cyclist",
    "pedestrian",
    "obstacle",
    "oncoming vehicle",
];

/// Ground-truth narrative for a generated event.
pub fn reference_narrative(spec: &SceneSpec) -> String {
    let [light, weather, road] = spec.environment.tags();
    let env = format!("Environment: {light}, {weather}, {road}.");
    match spec.conflict_type {
        None => format!("{env} Normal Driving. The ego vehicle keeps its lane and no safety critical event occurs."),
        Some(c) => {
            let label = LabelVocabulary::standard().text(c).unwrap_or("Unknown");
            let noun = AGENT_NOUNS[c.index()];
            let action = match spec.event_type {
                EventType::Crash => format!("The ego vehicle collides with the {noun}."),
                EventType::NearCrash => format!("The ego vehicle narrowly avoids the {noun}."),
                _ => format!("The ego vehicle drifts off the road edge while passing the {noun}."),
            };
            format!("{env} {}. {label}. {action}", spec.event_type.display_text())
        }
    }
}

/// One line of `references.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLine {
    pub event_id: String,
    pub text: String,
}

/// Render every event, write the tree under `root`, and return the manifest
/// (records ordered by event id, all unassigned).
pub fn generate_dataset(config: &SynthConfig, root: &Path) -> Result<DatasetManifest, SynthError> {
    let specs = config.specs();
    if specs.is_empty() {
        return Err(SynthError::NoEvents);
    }
    for (_, s) in &specs {
        s.validate()?;
    }
    let io = |p: &Path| {
        let path = p.display().to_string();
        move |source| SynthError::Io { path, source }
    };
    let events = root.join("events");
    fs::create_dir_all(&events).map_err(io(&events))?;
    specs
        .par_iter()
        .map(|(id, spec)| -> Result<(), SynthError> {
            let seq = render_event(spec)?;
            let dir = events.join(id);
            fs::create_dir_all(&dir).map_err(io(&dir))?;
            write_frames(&dir, &seq)?;
            Ok(())
        })
        .collect::<Result<Vec<()>, SynthError>>()?;

    let mut manifest = DatasetManifest::new(root, config.seed, config.fps, config.height, config.width);
    let mut refs = String::new();
    for (id, spec) in &specs {
        manifest.records.push(EventRecord {
            event_id: id.clone(),
            frames_path: format!("events/{id}"),
            event_type: spec.event_type,
            conflict_type: spec.conflict_type,
            split: Split::Unassigned,
        });
        let line = ReferenceLine {
            event_id: id.clone(),
            text: reference_narrative(spec),
        };
        refs.push_str(&serde_json::to_string(&line).expect("plain strings serialize"));
        refs.push('\n');
    }
    let ref_path = root.join("references.jsonl");
    fs::write(&ref_path, refs).map_err(io(&ref_path))?;
    save_manifest(&manifest, root.join("manifest.jsonl"))?;
    Ok(manifest)
}
