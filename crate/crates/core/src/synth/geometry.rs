//! Scene layout and trajectories on a fixed 64 x 64 logical grid.
//!
//! Top-down view, ego car fixed in the right lane, road scrolling past.
//! An agent approaches along a per-conflict-type direction `dir`; its box is
//! placed so the Chebyshev box gap to the ego equals `s(t)`:
//!
//! ```text
//! crash, near-crash:        s(t) = s_c + floor(v * max(c - h - t, 0))
//! tire strike, normal:      s(t) = s_c + floor(v * |t - c|)
//! ```
//!
//! with `c = num_frames / 2` and `h = num_frames / 4`: a crash or near-crash
//! agent reaches its closest gap `h` frames early and stays there. A tire strike additionally drifts the ego
//! right until it crosses the road edge at `c` and holds it there.

use serde::{Deserialize, Serialize};

use crate::data::{ConflictId, EventType};

pub const GRID: i32 = 64;
pub const ROAD_LEFT: i32 = 16;
pub const ROAD_RIGHT: i32 = 48;
pub const LANE_CENTER: i32 = 32;
pub const EGO: BoxI = BoxI {
    x0: 37,
    y0: 43,
    x1: 43,
    y1: 53,
};
/// Gap at or below which a miss is a near-crash.
pub const G_NEAR: i32 = 3;
/// Gap above which normal driving must stay at all times.
pub const G_SAFE: i32 = 10;
/// Ego drift at the center frame of a tire strike; takes `EGO.x1` past the
/// right road edge.
pub const TIRE_DRIFT: i32 = 6;
pub const DRIFT_RAMP: usize = 15;

/// Half-open integer box `[x0, x1) x [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxI {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
}

impl BoxI {
    pub fn width(&self) -> i32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> i32 {
        self.y1 - self.y0
    }

    pub fn shifted(&self, dx: i32, dy: i32) -> BoxI {
        BoxI {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            x1: self.x1 + dx,
            y1: self.y1 + dy,
        }
    }

    pub fn contains(&self, x: i32, y: i32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// Chebyshev gap: negative iff the boxes share at least one pixel,
    /// zero when they touch edge to edge.
    pub fn gap(&self, other: &BoxI) -> i32 {
        let gx = (self.x0 - other.x1).max(other.x0 - self.x1);
        let gy = (self.y0 - other.y1).max(other.y0 - self.y1);
        gx.max(gy)
    }
}

/// How one conflict type looks on screen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConflictStyle {
    /// Unit step (each component in -1..=1) pointing from ego to agent.
    pub dir: (i32, i32),
    pub size: (i32, i32),
    pub color: [u8; 3],
    /// Closing speed in grid pixels per frame.
    pub speed: f64,
    /// Offset along the axis perpendicular to `dir` (axis-aligned only).
    pub offset: i32,
    pub wobble: bool,
}

const fn style(dir: (i32, i32), size: (i32, i32), color: [u8; 3], speed: f64, offset: i32, wobble: bool) -> ConflictStyle {
    ConflictStyle {
        dir,
        size,
        color,
        speed,
        offset,
        wobble,
    }
}

/// Indexed by conflict id - 1.
const STYLES: [ConflictStyle; 16] = [
    style((0, -1), (6, 9), [210, 40, 40], 0.6, 0, false),     // lead vehicle
    style((1, 0), (3, 14), [250, 140, 0], 0.4, 0, false),     // single vehicle: roadside barrier
    style((0, -1), (6, 8), [150, 60, 200], 0.7, 3, false),    // turning into path, same direction
    style((0, -1), (6, 9), [150, 150, 150], 1.2, 4, false),   // parked vehicle
    style((-1, 0), (6, 10), [0, 200, 210], 0.5, 0, false),    // adjacent lane
    style((0, -1), (6, 8), [20, 120, 40], 0.8, -3, false),    // turning across, opposite direction
    style((0, 1), (6, 9), [220, 0, 220], 0.6, 0, false),      // following vehicle
    style((0, -1), (5, 7), [240, 170, 200], 1.1, -2, false),  // turning into path, opposite direction
    style((-1, 0), (7, 5), [160, 220, 60], 1.3, -2, false),   // crossing through intersection
    style((1, 0), (5, 4), [130, 80, 30], 0.5, 3, true),       // animal
    style((0, -1), (5, 8), [0, 130, 130], 0.5, 2, false),     // turning across, same direction
    style((1, 0), (6, 10), [30, 30, 140], 0.4, -2, false),    // merging vehicle
    style((-1, 0), (3, 6), [120, 180, 255], 0.7, 1, false),   // pedal cyclist
    style((-1, 0), (3, 4), [255, 230, 0], 0.3, 0, false),     // pedestrian
    style((0, -1), (4, 4), [255, 255, 255], 0.6, 1, false),   // obstacle
    style((0, -1), (6, 9), [255, 120, 120], 1.5, -4, false),  // oncoming traffic
];

pub fn conflict_style(id: ConflictId) -> Option<&'static ConflictStyle> {
    (1..=16).contains(&id.0).then(|| &STYLES[id.index()])
}

/// Inclusive ranges of the center-frame gap `s_c` per event type.
pub fn center_gap_range(event_type: EventType) -> (i32, i32) {
    match event_type {
        EventType::Crash => (-6, -3),
        EventType::NearCrash => (1, G_NEAR),
        EventType::TireStrike => (12, 20),
        EventType::NormalDriving => (12, 24),
    }
}

/// Largest gap at which an agent of `style` still fits on the grid.
pub fn on_screen_room(style: &ConflictStyle) -> i32 {
    let (w, h) = style.size;
    let rx = match style.dir.0 {
        1 => GRID - EGO.x1 - w,
        -1 => EGO.x0 - w,
        _ => i32::MAX,
    };
    let ry = match style.dir.1 {
        1 => GRID - EGO.y1 - h,
        -1 => EGO.y0 - h,
        _ => i32::MAX,
    };
    rx.min(ry)
}

/// Everything needed to replay an event's geometry without pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub event_type: EventType,
    pub num_frames: usize,
    pub dir: (i32, i32),
    pub size: (i32, i32),
    pub offset: i32,
    pub wobble: bool,
    pub speed: f64,
    pub center_gap: i32,
}

impl Trajectory {
    pub fn center(&self) -> usize {
        self.num_frames / 2
    }

    pub fn gap_param(&self, t: usize) -> i32 {
        let c = self.center();
        let d = if matches!(self.event_type, EventType::Crash | EventType::NearCrash) {
            c.saturating_sub(t + self.hold())
        } else {
            c.abs_diff(t)
        };
        self.center_gap + (self.speed * d as f64).floor() as i32
    }

    /// Frames before `c` from which a crash or near-crash agent sits at `s_c`.
    pub fn hold(&self) -> usize {
        self.num_frames / 4
    }

    pub fn ego_drift(&self, t: usize) -> i32 {
        if self.event_type != EventType::TireStrike {
            return 0;
        }
        let c = self.center();
        let start = c.saturating_sub(DRIFT_RAMP);
        if t >= c {
            TIRE_DRIFT
        } else if t <= start {
            0
        } else {
            (TIRE_DRIFT as f64 * (t - start) as f64 / (c - start) as f64).round() as i32
        }
    }

    pub fn ego_box(&self, t: usize) -> BoxI {
        EGO.shifted(self.ego_drift(t), 0)
    }

    /// Agent placement relative to the undrifted ego.
    pub fn agent_box(&self, t: usize) -> BoxI {
        let s = self.gap_param(t);
        let (w, h) = self.size;
        let (dx, dy) = self.dir;
        let wob = if self.wobble { [0, 1, 0, -1][t % 4] } else { 0 };
        let x0 = match dx {
            -1 => EGO.x0 - s - w,
            1 => EGO.x1 + s,
            _ => EGO.x0 + (EGO.width() - w) / 2 + self.offset + wob,
        };
        let y0 = match dy {
            -1 => EGO.y0 - s - h,
            1 => EGO.y1 + s,
            _ => EGO.y0 + (EGO.height() - h) / 2 + self.offset + wob,
        };
        BoxI {
            x0,
            y0,
            x1: x0 + w,
            y1: y0 + h,
        }
    }

    pub fn gaps(&self) -> Vec<i32> {
        (0..self.num_frames)
            .map(|t| self.ego_box(t).gap(&self.agent_box(t)))
            .collect()
    }

    pub fn boundary_contact(&self) -> bool {
        (0..self.num_frames).any(|t| {
            let e = self.ego_box(t);
            e.x0 < ROAD_LEFT || e.x1 > ROAD_RIGHT
        })
    }

    /// Event type implied by the geometry, highest severity first; `None`
    /// for layouts no label describes (touching boxes, overlap away from the
    /// center frame, a gap between the near and safe bands).
    pub fn classify(&self) -> Option<EventType> {
        let gaps = self.gaps();
        let min_gap = *gaps.iter().min().expect("num_frames >= 1");
        let contact = self.boundary_contact();
        if gaps[self.center()] < 0 {
            Some(EventType::Crash)
        } else if min_gap > 0 && min_gap <= G_NEAR {
            Some(EventType::NearCrash)
        } else if contact && min_gap > G_NEAR {
            Some(EventType::TireStrike)
        } else if !contact && min_gap > G_SAFE {
            Some(EventType::NormalDriving)
        } else {
            None
        }
    }
}
