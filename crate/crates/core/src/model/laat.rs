use ndarray::{s, Array1, Array2, Axis};

use super::{ModelDims, ModelParams, PROB_CLAMP};
use crate::error::{Error, Result};
use crate::privatizer::{ExampleTrace, GradientSet, LayerTrace};

/// Consecutive non-overlapping chunks of length `segment_len` (the last may be shorter).
pub fn segment(tokens: &[usize], segment_len: usize) -> Result<Vec<&[usize]>> {
    if tokens.is_empty() {
        return Err(Error::InvalidArgument("cannot segment an empty document".into()));
    }
    if segment_len == 0 {
        return Err(Error::InvalidArgument("segment length must be positive".into()));
    }
    Ok(tokens.chunks(segment_len).collect())
}

/// Intermediates of one forward pass. Sequence-major: row `t` of `embeddings`,
/// `hidden` and `z` belongs to position `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub tokens: Vec<usize>,
    /// `N x d_e`
    pub embeddings: Array2<f64>,
    /// `N x d_h`, row `t` is `h_t`.
    pub hidden: Array2<f64>,
    /// `N x d_p`, row `t` is `tanh(P h_t)`.
    pub z: Array2<f64>,
    /// `L x N`; row `l` is label `l`'s attention over positions and sums to 1.
    pub attention: Array2<f64>,
    /// `d_h x L`; column `l` is `sum_t A[l, t] h_t`.
    pub label_repr: Array2<f64>,
    pub logits: Array1<f64>,
    pub probabilities: Array1<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

pub fn forward(params: &ModelParams, dims: &ModelDims, tokens: &[usize]) -> Result<ForwardCache> {
    if tokens.is_empty() {
        return Err(Error::InvalidArgument("empty token sequence".into()));
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t >= dims.vocab_size) {
        return Err(Error::InvalidArgument(format!(
            "token id {bad} outside vocabulary of {}",
            dims.vocab_size
        )));
    }
    let tokens = &tokens[..tokens.len().min(dims.max_len)];
    let n = tokens.len();

    let mut embeddings = Array2::zeros((n, dims.embed_dim));
    for (mut row, &t) in embeddings.rows_mut().into_iter().zip(tokens) {
        row.assign(&params.embedding.row(t));
    }

    let mut hidden = Array2::zeros((n, dims.hidden_dim));
    let mut start = 0;
    for seg in segment(tokens, dims.segment_len)? {
        let end = start + seg.len();
        let x = embeddings.slice(s![start..end, ..]);
        let mut h = x.dot(&params.enc_weight.t());
        h += &params.enc_bias;
        h.mapv_inplace(f64::tanh);
        hidden.slice_mut(s![start..end, ..]).assign(&h);
        start = end;
    }

    let mut z = hidden.dot(&params.attn_proj.t());
    z.mapv_inplace(f64::tanh);

    let mut attention = params.attn_query.dot(&z.t());
    softmax_rows(&mut attention);

    let pooled = attention.dot(&hidden);
    let logits = (&pooled * &params.cls_weight).sum_axis(Axis(1)) + &params.cls_bias;
    let probabilities = logits.mapv(sigmoid);

    Ok(ForwardCache {
        tokens: tokens.to_vec(),
        embeddings,
        hidden,
        z,
        attention,
        label_repr: pooled.reversed_axes(),
        logits,
        probabilities,
    })
}

fn check_labels(cache: &ForwardCache, labels: &[u8]) -> Result<()> {
    if labels.len() != cache.probabilities.len() {
        return Err(Error::Shape(format!(
            "{} labels for {} outputs",
            labels.len(),
            cache.probabilities.len()
        )));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::InvalidArgument("labels must be binary".into()));
    }
    Ok(())
}

/// Mean binary cross-entropy over labels, probabilities clamped to `[1e-12, 1 - 1e-12]`.
pub fn loss(cache: &ForwardCache, labels: &[u8]) -> Result<f64> {
    check_labels(cache, labels)?;
    let total: f64 = cache
        .probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / labels.len() as f64)
}

/// Gradient of [`loss`] in factored per-group form.
pub fn backward_trace(
    params: &ModelParams,
    dims: &ModelDims,
    cache: &ForwardCache,
    labels: &[u8],
) -> Result<ExampleTrace> {
    check_labels(cache, labels)?;
    let l = dims.num_labels as f64;
    let g_logit: Array1<f64> = cache
        .probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &y)| (p - y as f64) / l)
        .collect();
    let g_col = g_logit.view().insert_axis(Axis(1));

    // logit_l = W_cls[l] . pooled[l] + b_l, with pooled = A H (L x d_h).
    let pooled = cache.label_repr.t();
    let d_cls_weight = &pooled * &g_col;
    let d_pooled = &params.cls_weight * &g_col;

    let d_attention = d_pooled.dot(&cache.hidden.t());
    let mut d_hidden = cache.attention.t().dot(&d_pooled);

    // Row-wise softmax backward.
    let weighted = (&cache.attention * &d_attention).sum_axis(Axis(1));
    let d_scores = &cache.attention * &(&d_attention - &weighted.insert_axis(Axis(1)));

    let d_scores_t = d_scores.reversed_axes();
    let d_z = d_scores_t.dot(&params.attn_query);
    let d_z_pre = &d_z * &cache.z.mapv(|v| 1.0 - v * v);
    d_hidden += &d_z_pre.dot(&params.attn_proj);

    let d_hidden_pre = &d_hidden * &cache.hidden.mapv(|v| 1.0 - v * v);
    let d_embeddings = d_hidden_pre.dot(&params.enc_weight);

    Ok(ExampleTrace {
        groups: vec![
            LayerTrace::Embedding {
                ids: cache.tokens.clone(),
                output_grad: d_embeddings,
                vocab_size: dims.vocab_size,
            },
            LayerTrace::Linear {
                input: cache.embeddings.clone(),
                output_grad: d_hidden_pre.clone(),
            },
            LayerTrace::Bias {
                output_grad: d_hidden_pre,
            },
            LayerTrace::Linear {
                input: cache.hidden.clone(),
                output_grad: d_z_pre,
            },
            LayerTrace::Linear {
                input: cache.z.clone(),
                output_grad: d_scores_t,
            },
            LayerTrace::Dense(d_cls_weight.iter().copied().collect()),
            LayerTrace::Dense(g_logit.to_vec()),
        ],
    })
}

/// Dense gradient of [`loss`] with respect to every parameter.
pub fn backward(
    params: &ModelParams,
    dims: &ModelDims,
    cache: &ForwardCache,
    labels: &[u8],
) -> Result<GradientSet> {
    Ok(backward_trace(params, dims, cache, labels)?.materialize(&dims.group_spec()))
}

/// Label `l` is assigned iff `p_l >= threshold`.
pub fn predict(probabilities: &[f64], threshold: f64) -> Vec<u8> {
    probabilities.iter().map(|&p| u8::from(p >= threshold)).collect()
}
