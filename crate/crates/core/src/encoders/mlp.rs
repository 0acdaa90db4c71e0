//! Two-layer perceptron `fc2(tanh(fc1(x)))` shared by both encoders.

use rand::Rng;

use super::tensor::{affine, affine_backward};
use super::{ParamSet, Tensor};

pub(crate) const FC1_W: &str = "mlp.fc1.weight";
pub(crate) const FC1_B: &str = "mlp.fc1.bias";
pub(crate) const FC2_W: &str = "mlp.fc2.weight";
pub(crate) const FC2_B: &str = "mlp.fc2.bias";

pub(crate) fn init<R: Rng>(p: &mut ParamSet, input: usize, hidden: usize, output: usize, rng: &mut R) {
    p.insert(FC1_W, Tensor::glorot(&[hidden, input], input, hidden, rng));
    p.insert(FC1_B, Tensor::zeros(&[hidden]));
    p.insert(FC2_W, Tensor::glorot(&[output, hidden], hidden, output, rng));
    p.insert(FC2_B, Tensor::zeros(&[output]));
}

#[derive(Clone, Debug)]
pub(crate) struct MlpCache {
    input: Vec<f64>,
    hidden: Vec<f64>,
}

pub(crate) fn forward(p: &ParamSet, x: &[f64]) -> (Vec<f64>, MlpCache) {
    let hidden: Vec<f64> = affine(p.t(FC1_W), p.t(FC1_B), x)
        .into_iter()
        .map(f64::tanh)
        .collect();
    let out = affine(p.t(FC2_W), p.t(FC2_B), &hidden);
    (
        out,
        MlpCache {
            input: x.to_vec(),
            hidden,
        },
    )
}

/// Accumulate parameter gradients into `g`; returns `dL/dx`.
pub(crate) fn backward(p: &ParamSet, cache: &MlpCache, dout: &[f64], g: &mut ParamSet) -> Vec<f64> {
    let (mut dw2, mut db2) = take2(g, FC2_W, FC2_B);
    let dh = affine_backward(p.t(FC2_W), &cache.hidden, dout, &mut dw2, &mut db2);
    put2(g, FC2_W, FC2_B, dw2, db2);

    let da: Vec<f64> = dh
        .iter()
        .zip(&cache.hidden)
        .map(|(d, h)| d * (1.0 - h * h))
        .collect();
    let (mut dw1, mut db1) = take2(g, FC1_W, FC1_B);
    let dx = affine_backward(p.t(FC1_W), &cache.input, &da, &mut dw1, &mut db1);
    put2(g, FC1_W, FC1_B, dw1, db1);
    dx
}

pub(crate) fn take2(g: &mut ParamSet, w: &str, b: &str) -> (Tensor, Tensor) {
    (
        std::mem::replace(g.t_mut(w), Tensor::zeros(&[0])),
        std::mem::replace(g.t_mut(b), Tensor::zeros(&[0])),
    )
}

pub(crate) fn put2(g: &mut ParamSet, w: &str, b: &str, tw: Tensor, tb: Tensor) {
    *g.t_mut(w) = tw;
    *g.t_mut(b) = tb;
}
