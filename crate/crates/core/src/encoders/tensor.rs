use std::collections::BTreeMap;

use rand::Rng;

use super::EncoderError;

/// Dense row-major `f64` array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, EncoderError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(EncoderError::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Uniform in `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot<R: Rng>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(|_| rng.gen_range(-a..=a)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }
}

/// Named parameter (or gradient) arrays, ordered by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, EncoderError> {
        self.tensors
            .get(name)
            .ok_or_else(|| EncoderError::MissingParam(name.to_string()))
    }

    /// Panics on a missing name; used on hot paths after `check_shapes`.
    pub(crate) fn t(&self, name: &str) -> &Tensor {
        &self.tensors[name]
    }

    pub(crate) fn t_mut(&mut self, name: &str) -> &mut Tensor {
        self.tensors
            .get_mut(name)
            .unwrap_or_else(|| panic!("no tensor named {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), Tensor::zeros(&t.shape)))
                .collect(),
        }
    }

    /// Copy every tensor of `other` in under `prefix`.
    pub fn merge_prefixed(&mut self, prefix: &str, other: &ParamSet) {
        for (k, t) in other.iter() {
            self.tensors.insert(format!("{prefix}{k}"), t.clone());
        }
    }

    /// Tensors whose names start with `prefix`, with the prefix removed.
    pub fn extract_prefixed(&self, prefix: &str) -> ParamSet {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .filter_map(|(k, t)| k.strip_prefix(prefix).map(|s| (s.to_string(), t.clone())))
                .collect(),
        }
    }

    /// `self += scale * other` over the names present in `other`.
    pub fn add_scaled(&mut self, other: &ParamSet, scale: f64) {
        for (k, g) in other.iter() {
            let t = self.t_mut(k);
            for (a, b) in t.data.iter_mut().zip(&g.data) {
                *a += scale * b;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors.values_mut() {
            t.data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors
            .values()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Flat iteration over every scalar, for finite-difference checks.
    pub fn flat_len(&self) -> usize {
        self.num_values()
    }

    pub fn flat_get(&self, mut i: usize) -> f64 {
        for t in self.tensors.values() {
            if i < t.len() {
                return t.data[i];
            }
            i -= t.len();
        }
        panic!("flat index out of range")
    }

    pub fn flat_set(&mut self, mut i: usize, v: f64) {
        for t in self.tensors.values_mut() {
            if i < t.len() {
                t.data[i] = v;
                return;
            }
            i -= t.len();
        }
        panic!("flat index out of range")
    }

    pub fn flat_name(&self, mut i: usize) -> String {
        for (k, t) in self.tensors.iter() {
            if i < t.len() {
                return format!("{k}[{i}]");
            }
            i -= t.len();
        }
        panic!("flat index out of range")
    }
}

/// `y = W x + b` with `W` stored `[out, in]`.
pub(crate) fn affine(w: &Tensor, b: &Tensor, x: &[f64]) -> Vec<f64> {
    (0..w.rows())
        .map(|o| b.data[o] + dot(w.row(o), x))
        .collect()
}

/// Accumulate gradients of `y = W x + b` and return `dL/dx`.
pub(crate) fn affine_backward(
    w: &Tensor,
    x: &[f64],
    dy: &[f64],
    dw: &mut Tensor,
    db: &mut Tensor,
) -> Vec<f64> {
    let mut dx = vec![0.0; x.len()];
    for (o, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        db.data[o] += g;
        axpy(dw.row_mut(o), g, x);
        axpy(&mut dx, g, w.row(o));
    }
    dx
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += a * x`
#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
