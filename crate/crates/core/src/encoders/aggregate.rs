//! Temporal aggregation of per-frame embeddings: arithmetic mean, or the final
//! hidden state of a single-layer gated recurrent unit.
//!
//! GRU step (no separate hidden bias on the candidate):
//!
//! ```text
//! r  = sigmoid(W_r x + U_r h + b_r)
//! z  = sigmoid(W_z x + U_z h + b_z)
//! n  = tanh(W_n x + r * (U_n h) + b_n)
//! h' = (1 - z) * n + z * h
//! ```

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{put2, take2};
use super::tensor::{axpy, dot};
use super::{EncoderError, ParamSet, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Recurrent,
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Mean => "mean",
            Aggregation::Recurrent => "recurrent",
        })
    }
}

impl FromStr for Aggregation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "recurrent" | "gru" | "lstm" => Ok(Aggregation::Recurrent),
            other => Err(format!("unknown aggregation {other:?}")),
        }
    }
}

const GATES: [&str; 3] = ["r", "z", "n"];

fn w(g: &str) -> String {
    format!("gru.w_{g}")
}
fn u(g: &str) -> String {
    format!("gru.u_{g}")
}
fn b(g: &str) -> String {
    format!("gru.b_{g}")
}

pub(crate) fn init_recurrent<R: Rng>(p: &mut ParamSet, dim: usize, rng: &mut R) {
    for g in GATES {
        p.insert(w(g), Tensor::glorot(&[dim, dim], dim, dim, rng));
        p.insert(u(g), Tensor::glorot(&[dim, dim], dim, dim, rng));
        p.insert(b(g), Tensor::zeros(&[dim]));
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Clone, Debug)]
pub(crate) struct Step {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    un_h: Vec<f64>,
}

#[derive(Clone, Debug)]
pub(crate) enum AggCache {
    Mean { frames: usize },
    Recurrent(Vec<Step>),
}

/// Combine `F` frame embeddings of equal length into one vector.
pub fn aggregate_frames(
    params: &ParamSet,
    frames: &[Vec<f64>],
    mode: Aggregation,
) -> Result<Vec<f64>, EncoderError> {
    if frames.is_empty() {
        return Err(EncoderError::Shape("no frames to aggregate".into()));
    }
    if mode == Aggregation::Recurrent {
        for g in GATES {
            params.get(&w(g))?;
            params.get(&u(g))?;
            params.get(&b(g))?;
        }
    }
    Ok(forward(params, frames, mode).0)
}

pub(crate) fn forward(p: &ParamSet, frames: &[Vec<f64>], mode: Aggregation) -> (Vec<f64>, AggCache) {
    let dim = frames[0].len();
    match mode {
        Aggregation::Mean => {
            let mut out = vec![0.0; dim];
            for f in frames {
                axpy(&mut out, 1.0, f);
            }
            let inv = 1.0 / frames.len() as f64;
            out.iter_mut().for_each(|v| *v *= inv);
            (out, AggCache::Mean { frames: frames.len() })
        }
        Aggregation::Recurrent => {
            let mut h = vec![0.0; dim];
            let mut steps = Vec::with_capacity(frames.len());
            for x in frames {
                let gate = |g: &str, h: &[f64], act: fn(f64) -> f64| -> Vec<f64> {
                    let (wt, ut, bt) = (p.t(&w(g)), p.t(&u(g)), p.t(&b(g)));
                    (0..dim)
                        .map(|i| act(dot(wt.row(i), x) + dot(ut.row(i), h) + bt.data[i]))
                        .collect()
                };
                let r = gate("r", &h, sigmoid);
                let z = gate("z", &h, sigmoid);
                let (wn, un, bn) = (p.t(&w("n")), p.t(&u("n")), p.t(&b("n")));
                let un_h: Vec<f64> = (0..dim).map(|i| dot(un.row(i), &h)).collect();
                let n: Vec<f64> = (0..dim)
                    .map(|i| (dot(wn.row(i), x) + r[i] * un_h[i] + bn.data[i]).tanh())
                    .collect();
                let h_new: Vec<f64> = (0..dim).map(|i| (1.0 - z[i]) * n[i] + z[i] * h[i]).collect();
                steps.push(Step {
                    x: x.clone(),
                    h_prev: std::mem::replace(&mut h, h_new),
                    r,
                    z,
                    n,
                    un_h,
                });
            }
            (h, AggCache::Recurrent(steps))
        }
    }
}

/// Back-propagate through the aggregator; returns per-frame gradients.
pub(crate) fn backward(p: &ParamSet, cache: &AggCache, dout: &[f64], g: &mut ParamSet) -> Vec<Vec<f64>> {
    match cache {
        AggCache::Mean { frames } => {
            let inv = 1.0 / *frames as f64;
            vec![dout.iter().map(|d| d * inv).collect(); *frames]
        }
        AggCache::Recurrent(steps) => {
            let dim = dout.len();
            let mut dx_all = vec![vec![0.0; dim]; steps.len()];
            let mut dh = dout.to_vec();
            for (t, s) in steps.iter().enumerate().rev() {
                let mut dh_prev: Vec<f64> = (0..dim).map(|i| dh[i] * s.z[i]).collect();
                let dz_pre: Vec<f64> = (0..dim)
                    .map(|i| dh[i] * (s.h_prev[i] - s.n[i]) * s.z[i] * (1.0 - s.z[i]))
                    .collect();
                let dn_pre: Vec<f64> = (0..dim)
                    .map(|i| dh[i] * (1.0 - s.z[i]) * (1.0 - s.n[i] * s.n[i]))
                    .collect();
                let dr_pre: Vec<f64> = (0..dim)
                    .map(|i| dn_pre[i] * s.un_h[i] * s.r[i] * (1.0 - s.r[i]))
                    .collect();
                // candidate path: U_n sees r * dn_pre
                let dm: Vec<f64> = (0..dim).map(|i| dn_pre[i] * s.r[i]).collect();
                let dx = &mut dx_all[t];
                for (gname, dpre, dpre_h) in [
                    ("r", &dr_pre, &dr_pre),
                    ("z", &dz_pre, &dz_pre),
                    ("n", &dn_pre, &dm),
                ] {
                    let (mut dw, mut db) = take2(g, &w(gname), &b(gname));
                    let du = g.t_mut(&u(gname));
                    let (wt, ut) = (p.t(&w(gname)), p.t(&u(gname)));
                    for i in 0..dim {
                        let a = dpre[i];
                        let c = dpre_h[i];
                        if a != 0.0 {
                            axpy(dw.row_mut(i), a, &s.x);
                            db.data[i] += a;
                            axpy(dx, a, wt.row(i));
                        }
                        if c != 0.0 {
                            axpy(du.row_mut(i), c, &s.h_prev);
                            axpy(&mut dh_prev, c, ut.row(i));
                        }
                    }
                    put2(g, &w(gname), &b(gname), dw, db);
                }
                dh = dh_prev;
            }
            dx_all
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mean_of_single_frame_is_identity() {
        let p = ParamSet::new();
        let v = vec![0.3, -1.0, 2.5];
        assert_eq!(aggregate_frames(&p, &[v.clone()], Aggregation::Mean).unwrap(), v);
    }

    #[test]
    fn mean_of_two_unit_vectors() {
        let p = ParamSet::new();
        let out = aggregate_frames(&p, &[vec![1.0, 0.0], vec![0.0, 1.0]], Aggregation::Mean).unwrap();
        assert_eq!(out, vec![0.5, 0.5]);
    }

    #[test]
    fn zero_recurrent_weights_give_zero_state() {
        let mut p = ParamSet::new();
        init_recurrent(&mut p, 3, &mut ChaCha8Rng::seed_from_u64(0));
        p.iter_mut().for_each(|(_, t)| t.data.iter_mut().for_each(|v| *v = 0.0));
        let out = aggregate_frames(&p, &[vec![1.0, 2.0, 3.0], vec![-4.0, 0.5, 9.0]], Aggregation::Recurrent).unwrap();
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn recurrent_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = ParamSet::new();
        init_recurrent(&mut p, 3, &mut rng);
        let frames: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let probe = |p: &ParamSet| forward(p, &frames, Aggregation::Recurrent).0.iter().sum::<f64>();
        let (_, cache) = forward(&p, &frames, Aggregation::Recurrent);
        let mut g = p.zeros_like();
        let dframes = backward(&p, &cache, &[1.0; 3], &mut g);
        let eps = 1e-5;
        for i in 0..p.flat_len() {
            let mut hi = p.clone();
            hi.flat_set(i, p.flat_get(i) + eps);
            let mut lo = p.clone();
            lo.flat_set(i, p.flat_get(i) - eps);
            let num = (probe(&hi) - probe(&lo)) / (2.0 * eps);
            let ana = g.flat_get(i);
            assert!((num - ana).abs() <= 1e-4 * num.abs().max(ana.abs()).max(1e-6), "{}: {ana} vs {num}", p.flat_name(i));
        }
        // input gradient
        for t in 0..frames.len() {
            for k in 0..3 {
                let mut hi = frames.clone();
                hi[t][k] += eps;
                let mut lo = frames.clone();
                lo[t][k] -= eps;
                let f = |fr: &[Vec<f64>]| forward(&p, fr, Aggregation::Recurrent).0.iter().sum::<f64>();
                let num = (f(&hi) - f(&lo)) / (2.0 * eps);
                assert!((num - dframes[t][k]).abs() < 1e-8);
            }
        }
    }
}
