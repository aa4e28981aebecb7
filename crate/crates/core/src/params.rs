//! Model parameters and their gradient buffers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimensions and initialization of every trainable array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Embedding width `n`.
    pub embedding_dim: usize,
    /// Hidden width `h` of the document-set MLP.
    pub mlp_hidden: usize,
    /// Hidden width of the answer decoder.
    pub decoder_hidden: usize,
    /// Sentences per slice when embedding long documents.
    pub slice_len: usize,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            embedding_dim: 32,
            mlp_hidden: 32,
            decoder_hidden: 32,
            slice_len: 3,
            init_scale: 0.1,
            seed: 7,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.mlp_hidden == 0 || self.decoder_hidden == 0 || self.slice_len == 0 {
            return Err(Error::InvalidArgument(
                "embedding_dim, mlp_hidden, decoder_hidden and slice_len must be at least 1".into(),
            ));
        }
        if !self.init_scale.is_finite() || self.init_scale < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "init_scale must be finite and non-negative, got {}",
                self.init_scale
            )));
        }
        Ok(())
    }
}

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Array {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Array {
    pub fn zeros(shape: &[usize]) -> Self {
        Array {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    /// `self · x` for a matrix of shape `[rows, cols]`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let c = self.cols();
        debug_assert_eq!(x.len(), c);
        self.data.chunks_exact(c).map(|row| dot(row, x)).collect()
    }

    /// Adds `self^T · y` into `out`.
    pub fn matvec_t_into(&self, y: &[f64], out: &mut [f64]) {
        let c = self.cols();
        for (row, &yi) in self.data.chunks_exact(c).zip(y) {
            if yi != 0.0 {
                axpy(yi, row, out);
            }
        }
    }

    /// Adds the outer product `y ⊗ x` into the matrix.
    pub fn add_outer(&mut self, y: &[f64], x: &[f64]) {
        let c = self.cols();
        for (row, &yi) in self.data.chunks_exact_mut(c).zip(y) {
            if yi != 0.0 {
                axpy(yi, x, row);
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// The named arrays of the model. Used both for values and for gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `[vocab, n]` encoder token embeddings.
    pub token_embeddings: Array,
    /// `[h, 3n]` first MLP layer of the document-set scorer.
    pub mlp_w1: Array,
    /// `[1, h]` second MLP layer.
    pub mlp_w2: Array,
    /// `[n]` sentence-subset score vector.
    pub sentence_score: Array,
    /// `[vocab, n]` decoder-side token embeddings.
    pub decoder_embeddings: Array,
    /// `[hd, 2n]` decoder input projection.
    pub decoder_w: Array,
    /// `[vocab, hd]` decoder output projection.
    pub decoder_u: Array,
}

pub const PARAM_NAMES: [&str; 7] = [
    "token_embeddings",
    "mlp_w1",
    "mlp_w2",
    "sentence_score",
    "decoder_embeddings",
    "decoder_w",
    "decoder_u",
];

impl Params {
    pub fn zeros(cfg: &EncoderConfig, vocab_size: usize) -> Self {
        let n = cfg.embedding_dim;
        Params {
            token_embeddings: Array::zeros(&[vocab_size, n]),
            mlp_w1: Array::zeros(&[cfg.mlp_hidden, 3 * n]),
            mlp_w2: Array::zeros(&[1, cfg.mlp_hidden]),
            sentence_score: Array::zeros(&[n]),
            decoder_embeddings: Array::zeros(&[vocab_size, n]),
            decoder_w: Array::zeros(&[cfg.decoder_hidden, 2 * n]),
            decoder_u: Array::zeros(&[vocab_size, cfg.decoder_hidden]),
        }
    }

    pub fn arrays(&self) -> [(&'static str, &Array); 7] {
        [
            (PARAM_NAMES[0], &self.token_embeddings),
            (PARAM_NAMES[1], &self.mlp_w1),
            (PARAM_NAMES[2], &self.mlp_w2),
            (PARAM_NAMES[3], &self.sentence_score),
            (PARAM_NAMES[4], &self.decoder_embeddings),
            (PARAM_NAMES[5], &self.decoder_w),
            (PARAM_NAMES[6], &self.decoder_u),
        ]
    }

    pub fn arrays_mut(&mut self) -> [(&'static str, &mut Array); 7] {
        [
            (PARAM_NAMES[0], &mut self.token_embeddings),
            (PARAM_NAMES[1], &mut self.mlp_w1),
            (PARAM_NAMES[2], &mut self.mlp_w2),
            (PARAM_NAMES[3], &mut self.sentence_score),
            (PARAM_NAMES[4], &mut self.decoder_embeddings),
            (PARAM_NAMES[5], &mut self.decoder_w),
            (PARAM_NAMES[6], &mut self.decoder_u),
        ]
    }

    pub fn fill(&mut self, value: f64) {
        for (_, a) in self.arrays_mut() {
            a.data.fill(value);
        }
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &Params) {
        for ((_, a), (_, b)) in self.arrays_mut().into_iter().zip(other.arrays()) {
            axpy(alpha, &b.data, &mut a.data);
        }
    }

    /// Name of the first array holding a non-finite entry.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.arrays()
            .into_iter()
            .find(|(_, a)| a.data.iter().any(|x| !x.is_finite()))
            .map(|(name, _)| name)
    }

    pub fn same_shapes(&self, other: &Params) -> bool {
        self.arrays()
            .into_iter()
            .zip(other.arrays())
            .all(|((_, a), (_, b))| a.shape == b.shape)
    }
}

/// Parameter values with paired gradient buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub config: EncoderConfig,
    pub vocab_size: usize,
    pub values: Params,
    pub grads: Params,
}

impl ParamStore {
    pub fn zeros(cfg: &EncoderConfig, vocab_size: usize) -> Result<Self> {
        cfg.validate()?;
        if vocab_size == 0 {
            return Err(Error::InvalidArgument("vocabulary size must be positive".into()));
        }
        Ok(ParamStore {
            config: cfg.clone(),
            vocab_size,
            values: Params::zeros(cfg, vocab_size),
            grads: Params::zeros(cfg, vocab_size),
        })
    }

    pub fn zero_grads(&mut self) {
        self.grads.fill(0.0);
    }

    /// Checks shape consistency and finiteness of every array.
    pub fn check(&self) -> Result<()> {
        let expected = Params::zeros(&self.config, self.vocab_size);
        if !self.values.same_shapes(&expected) || !self.grads.same_shapes(&expected) {
            return Err(Error::InvalidArgument(
                "parameter shapes do not match the encoder config".into(),
            ));
        }
        if let Some(name) = self.values.first_non_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        Ok(())
    }
}

/// Uniform(−init_scale, +init_scale) initialization from the config seed.
pub fn init_params(cfg: &EncoderConfig, vocab_size: usize) -> Result<ParamStore> {
    let mut store = ParamStore::zeros(cfg, vocab_size)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let s = cfg.init_scale;
    for (_, arr) in store.values.arrays_mut() {
        for x in &mut arr.data {
            *x = if s > 0.0 { rng.gen_range(-s..s) } else { 0.0 };
        }
    }
    Ok(store)
}
