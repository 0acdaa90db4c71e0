//! Reference text encoder: hashed bag of tokens -> mean -> perceptron.
//!
//! Each token from [`crate::tokenize::tokenize`] is mapped to a table row by
//! 64-bit FNV-1a modulo the slot count. Order is ignored.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::mlp::{self, MlpCache};
use super::tensor::axpy;
use super::video::check_shapes;
use super::{Embedding, EncoderError, EncoderParams, ParamSet, Tensor, TextEncode};
use crate::tokenize::{fnv1a64, tokenize};

pub(crate) const TABLE: &str = "tokens.table";

pub const TEXT_ENCODER_VERSION: &str = "sce-text-encoder/1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextEncoderConfig {
    pub vocab_slots: usize,
    pub token_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
}

impl Default for TextEncoderConfig {
    fn default() -> Self {
        Self {
            vocab_slots: 4096,
            token_dim: 32,
            hidden_dim: 64,
            embed_dim: 128,
        }
    }
}

impl TextEncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.vocab_slots == 0 || self.token_dim == 0 || self.hidden_dim == 0 || self.embed_dim == 0 {
            return Err(EncoderError::Config("dimensions must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn write_attrs(&self, prefix: &str, attrs: &mut BTreeMap<String, String>) {
        let mut put = |k: &str, v: usize| attrs.insert(format!("{prefix}{k}"), v.to_string());
        put("vocab_slots", self.vocab_slots);
        put("token_dim", self.token_dim);
        put("hidden_dim", self.hidden_dim);
        put("embed_dim", self.embed_dim);
    }

    pub(crate) fn read_attrs(ck: &Checkpoint, prefix: &str) -> Result<Self, EncoderError> {
        let k = |s: &str| format!("{prefix}{s}");
        Ok(Self {
            vocab_slots: ck.attr_parse(&k("vocab_slots"))?,
            token_dim: ck.attr_parse(&k("token_dim"))?,
            hidden_dim: ck.attr_parse(&k("hidden_dim"))?,
            embed_dim: ck.attr_parse(&k("embed_dim"))?,
        })
    }

    fn expected_shapes(&self) -> Vec<(String, Vec<usize>)> {
        vec![
            (TABLE.to_string(), vec![self.vocab_slots, self.token_dim]),
            (mlp::FC1_W.to_string(), vec![self.hidden_dim, self.token_dim]),
            (mlp::FC1_B.to_string(), vec![self.hidden_dim]),
            (mlp::FC2_W.to_string(), vec![self.embed_dim, self.hidden_dim]),
            (mlp::FC2_B.to_string(), vec![self.embed_dim]),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TextEncoder {
    pub config: TextEncoderConfig,
    pub params: EncoderParams,
}

#[derive(Clone, Debug)]
pub struct TextCache {
    slots: Vec<usize>,
    mlp: MlpCache,
}

impl TextEncoder {
    pub fn new(config: TextEncoderConfig, seed: u64) -> Result<Self, EncoderError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = ParamSet::new();
        t.insert(
            TABLE,
            Tensor::glorot(&[config.vocab_slots, config.token_dim], 1, config.token_dim, &mut rng),
        );
        mlp::init(&mut t, config.token_dim, config.hidden_dim, config.embed_dim, &mut rng);
        Ok(Self {
            config,
            params: EncoderParams {
                version: TEXT_ENCODER_VERSION.to_string(),
                seed,
                tensors: t,
            },
        })
    }

    pub fn from_parts(config: TextEncoderConfig, params: EncoderParams) -> Result<Self, EncoderError> {
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
        let config = TextEncoderConfig::read_attrs(ck, "")?;
        Self::from_parts(
            config,
            EncoderParams {
                version: ck.version.clone(),
                seed: ck.seed,
                tensors: ck.tensors.clone(),
            },
        )
    }

    pub fn slot(&self, token: &str) -> usize {
        (fnv1a64(token.as_bytes()) % self.config.vocab_slots as u64) as usize
    }

    pub fn forward(&self, text: &str) -> Result<(Vec<f64>, TextCache), EncoderError> {
        let mut slots: Vec<usize> = tokenize(text).iter().map(|t| self.slot(t)).collect();
        // fixed summation order makes the result bit-identical under permutation
        slots.sort_unstable();
        if slots.is_empty() {
            return Err(EncoderError::EmptyText(text.to_string()));
        }
        let table = self.params.tensors.t(TABLE);
        let mut mean = vec![0.0; self.config.token_dim];
        for &s in &slots {
            axpy(&mut mean, 1.0, table.row(s));
        }
        let inv = 1.0 / slots.len() as f64;
        mean.iter_mut().for_each(|v| *v *= inv);
        let (out, mlp) = mlp::forward(&self.params.tensors, &mean);
        Ok((out, TextCache { slots, mlp }))
    }

    pub fn backward(&self, cache: &TextCache, dout: &[f64], grads: &mut ParamSet) {
        let dmean = mlp::backward(&self.params.tensors, &cache.mlp, dout, grads);
        let inv = 1.0 / cache.slots.len() as f64;
        let dt = grads.t_mut(TABLE);
        for &s in &cache.slots {
            axpy(dt.row_mut(s), inv, &dmean);
        }
    }
}

impl TextEncode for TextEncoder {
    fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    fn encode_text(&self, text: &str) -> Result<Embedding, EncoderError> {
        Embedding::new(self.forward(text)?.0)
    }
}
