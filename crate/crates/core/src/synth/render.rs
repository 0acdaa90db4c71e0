use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::geometry::{BoxI, Trajectory, GRID, LANE_CENTER, ROAD_LEFT, ROAD_RIGHT};
use super::Environment;
use crate::data::FrameSequence;

const GRASS: [u8; 3] = [70, 120, 60];
const ROAD: [u8; 3] = [95, 95, 100];
const EDGE: [u8; 3] = [230, 230, 230];
const DASH: [u8; 3] = [230, 200, 60];
pub(crate) const EGO_COLOR: [u8; 3] = [40, 80, 230];

fn background(lx: i32, ly: i32, t: usize) -> [u8; 3] {
    if lx < ROAD_LEFT || lx >= ROAD_RIGHT {
        GRASS
    } else if lx == ROAD_LEFT || lx == ROAD_RIGHT - 1 {
        EDGE
    } else if (lx == LANE_CENTER - 1 || lx == LANE_CENTER) && (ly + 2 * t as i32).rem_euclid(8) < 4 {
        // dashes scroll down two grid rows per frame
        DASH
    } else {
        ROAD
    }
}

fn paint(
    lx: i32,
    ly: i32,
    t: usize,
    ego: &BoxI,
    agent: &BoxI,
    agent_color: [u8; 3],
) -> [u8; 3] {
    if agent.contains(lx, ly) {
        agent_color
    } else if ego.contains(lx, ly) {
        EGO_COLOR
    } else {
        background(lx, ly, t)
    }
}

pub(crate) fn render(
    traj: &Trajectory,
    agent_color: [u8; 3],
    env: Environment,
    height: usize,
    width: usize,
    fps: f64,
    noise_rng: &mut ChaCha8Rng,
) -> FrameSequence {
    let mut seq = FrameSequence::zeros(traj.num_frames, height, width, fps).expect("validated geometry");
    let gain = env.brightness();
    let amp = env.noise_amplitude();
    let lxs: Vec<i32> = (0..width).map(|px| (px * GRID as usize / width) as i32).collect();
    let lys: Vec<i32> = (0..height).map(|py| (py * GRID as usize / height) as i32).collect();
    for t in 0..traj.num_frames {
        let ego = traj.ego_box(t);
        let agent = traj.agent_box(t);
        let frame = seq.frame_mut(t);
        for (py, &ly) in lys.iter().enumerate() {
            for (px, &lx) in lxs.iter().enumerate() {
                let c = paint(lx, ly, t, &ego, &agent, agent_color);
                let n = if amp > 0 { noise_rng.gen_range(-amp..=amp) } else { 0 };
                let o = (py * width + px) * 3;
                for k in 0..3 {
                    let v = (f64::from(c[k]) * gain).round() as i32 + n;
                    frame[o + k] = v.clamp(0, 255) as u8;
                }
            }
        }
    }
    seq
}
