//! Desk-scale label-attention classifier.
//!
//! Token embedding, a per-token `tanh` feed-forward encoder applied segment by
//! segment, label attention (`Z = tanh(P H)`, `A = softmax(U Z)` over
//! positions, label representations `V = H A^T`) and one logistic classifier
//! per label.

mod checkpoint;
mod laat;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::privatizer::{GradientSet, GroupShape, ParamGroupSpec};

pub use checkpoint::{FORMAT_VERSION as CHECKPOINT_FORMAT_VERSION, load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use laat::{backward, backward_trace, forward, loss, predict, segment, ForwardCache};

pub const PROB_CLAMP: f64 = 1e-12;

/// Parameter group names, in storage order.
pub const GROUP_NAMES: [&str; 7] = [
    "embedding",
    "encoder.weight",
    "encoder.bias",
    "attention.P",
    "attention.U",
    "classifier.weight",
    "classifier.bias",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub num_labels: usize,
    pub segment_len: usize,
    pub max_len: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("attention_dim", self.attention_dim),
            ("num_labels", self.num_labels),
            ("segment_len", self.segment_len),
            ("max_len", self.max_len),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::config(format!("model.{name}"), "must be positive"));
            }
        }
        if self.segment_len > self.max_len {
            return Err(Error::config("model.segment_len", "must not exceed max_len"));
        }
        Ok(())
    }

    pub fn shapes(&self) -> [Vec<usize>; 7] {
        let d = self;
        [
            vec![d.vocab_size, d.embed_dim],
            vec![d.hidden_dim, d.embed_dim],
            vec![d.hidden_dim],
            vec![d.attention_dim, d.hidden_dim],
            vec![d.num_labels, d.attention_dim],
            vec![d.num_labels, d.hidden_dim],
            vec![d.num_labels],
        ]
    }

    /// One group per weight or bias, plus the embedding table and P, U.
    pub fn group_spec(&self) -> ParamGroupSpec {
        let groups = GROUP_NAMES
            .iter()
            .zip(self.shapes())
            .map(|(name, shape)| GroupShape {
                name: (*name).to_string(),
                shape,
            })
            .collect();
        ParamGroupSpec::new(groups).expect("static group names are unique")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// `V x d_e`
    pub embedding: Array2<f64>,
    /// `d_h x d_e`
    pub enc_weight: Array2<f64>,
    pub enc_bias: Array1<f64>,
    /// `P`, `d_p x d_h`
    pub attn_proj: Array2<f64>,
    /// `U`, `L x d_p`
    pub attn_query: Array2<f64>,
    /// `L x d_h`
    pub cls_weight: Array2<f64>,
    pub cls_bias: Array1<f64>,
}

fn xavier<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new(-a, a).expect("a > 0");
    Array2::from_shape_fn((rows, cols), |_| dist.sample(rng))
}

impl ModelParams {
    pub fn zeros(dims: &ModelDims) -> Self {
        Self {
            embedding: Array2::zeros((dims.vocab_size, dims.embed_dim)),
            enc_weight: Array2::zeros((dims.hidden_dim, dims.embed_dim)),
            enc_bias: Array1::zeros(dims.hidden_dim),
            attn_proj: Array2::zeros((dims.attention_dim, dims.hidden_dim)),
            attn_query: Array2::zeros((dims.num_labels, dims.attention_dim)),
            cls_weight: Array2::zeros((dims.num_labels, dims.hidden_dim)),
            cls_bias: Array1::zeros(dims.num_labels),
        }
    }

    /// Uniform `(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))` per matrix; zero biases.
    pub fn init<R: Rng + ?Sized>(dims: &ModelDims, rng: &mut R) -> Self {
        Self {
            embedding: xavier(dims.vocab_size, dims.embed_dim, rng),
            enc_weight: xavier(dims.hidden_dim, dims.embed_dim, rng),
            enc_bias: Array1::zeros(dims.hidden_dim),
            attn_proj: xavier(dims.attention_dim, dims.hidden_dim, rng),
            attn_query: xavier(dims.num_labels, dims.attention_dim, rng),
            cls_weight: xavier(dims.num_labels, dims.hidden_dim, rng),
            cls_bias: Array1::zeros(dims.num_labels),
        }
    }

    pub fn dims_match(&self, dims: &ModelDims) -> bool {
        let shapes = dims.shapes();
        self.blocks()
            .iter()
            .zip(shapes.iter())
            .all(|(b, s)| b.len() == s.iter().product::<usize>())
            && self.embedding.dim() == (dims.vocab_size, dims.embed_dim)
            && self.enc_weight.dim() == (dims.hidden_dim, dims.embed_dim)
            && self.attn_proj.dim() == (dims.attention_dim, dims.hidden_dim)
            && self.attn_query.dim() == (dims.num_labels, dims.attention_dim)
            && self.cls_weight.dim() == (dims.num_labels, dims.hidden_dim)
    }

    /// Flat row-major views in [`GROUP_NAMES`] order.
    pub fn blocks(&self) -> [&[f64]; 7] {
        [
            self.embedding.as_slice().expect("standard layout"),
            self.enc_weight.as_slice().expect("standard layout"),
            self.enc_bias.as_slice().expect("standard layout"),
            self.attn_proj.as_slice().expect("standard layout"),
            self.attn_query.as_slice().expect("standard layout"),
            self.cls_weight.as_slice().expect("standard layout"),
            self.cls_bias.as_slice().expect("standard layout"),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 7] {
        [
            self.embedding.as_slice_mut().expect("standard layout"),
            self.enc_weight.as_slice_mut().expect("standard layout"),
            self.enc_bias.as_slice_mut().expect("standard layout"),
            self.attn_proj.as_slice_mut().expect("standard layout"),
            self.attn_query.as_slice_mut().expect("standard layout"),
            self.cls_weight.as_slice_mut().expect("standard layout"),
            self.cls_bias.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn to_gradient_set(&self) -> GradientSet {
        GradientSet::from_blocks(self.blocks().iter().map(|b| b.to_vec()).collect())
    }

    pub fn from_gradient_set(dims: &ModelDims, set: &GradientSet) -> Result<Self> {
        set.check(&dims.group_spec())?;
        let mut params = Self::zeros(dims);
        for (dst, src) in params.blocks_mut().into_iter().zip(&set.blocks) {
            dst.copy_from_slice(src);
        }
        Ok(params)
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|x| x.is_finite()))
    }
}
