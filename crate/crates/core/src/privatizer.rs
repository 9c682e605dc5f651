//! Per-example clipping, ghost norms and Gaussian noising of a batch gradient.
//!
//! Gradients are handled as [`GradientSet`]s: one flat, row-major block per
//! parameter group of a [`ParamGroupSpec`]. Noise is added to the *sum* of
//! clipped gradients with standard deviation `rho * C` per coordinate, and the
//! result is divided by the nominal batch size.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupShape {
    pub name: String,
    pub shape: Vec<usize>,
}

impl GroupShape {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamGroupSpec {
    groups: Vec<GroupShape>,
}

impl ParamGroupSpec {
    pub fn new(groups: Vec<GroupShape>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidArgument("at least one parameter group is required".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for g in &groups {
            if !seen.insert(g.name.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate group name `{}`", g.name)));
            }
        }
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &[GroupShape] {
        &self.groups
    }

    /// Number of groups `k`.
    pub fn k(&self) -> usize {
        self.groups.len()
    }

    pub fn numel(&self) -> usize {
        self.groups.iter().map(GroupShape::numel).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == name)
    }
}

/// One gradient (or parameter) collection, a flat block per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSet {
    pub blocks: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn zeros(spec: &ParamGroupSpec) -> Self {
        Self {
            blocks: spec.groups().iter().map(|g| vec![0.0; g.numel()]).collect(),
        }
    }

    pub fn from_blocks(blocks: Vec<Vec<f64>>) -> Self {
        Self { blocks }
    }

    pub fn check(&self, spec: &ParamGroupSpec) -> Result<()> {
        if self.blocks.len() != spec.k() {
            return Err(Error::Shape(format!(
                "gradient has {} groups, spec has {}",
                self.blocks.len(),
                spec.k()
            )));
        }
        for (block, group) in self.blocks.iter().zip(spec.groups()) {
            if block.len() != group.numel() {
                return Err(Error::Shape(format!(
                    "group `{}` has {} entries, expected {}",
                    group.name,
                    block.len(),
                    group.numel()
                )));
            }
            if block.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("gradient group `{}`", group.name)));
            }
        }
        Ok(())
    }

    pub fn group_sq_norms(&self) -> Vec<f64> {
        self.blocks.iter().map(|b| b.iter().map(|x| x * x).sum()).collect()
    }

    pub fn sq_norm(&self) -> f64 {
        self.group_sq_norms().iter().sum()
    }

    pub fn norm(&self) -> f64 {
        self.sq_norm().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for block in &mut self.blocks {
            for x in block.iter_mut() {
                *x *= factor;
            }
        }
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, other: &GradientSet, factor: f64) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += factor * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().flatten().all(|x| x.is_finite())
    }
}

/// Per-example gradients of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PerExampleGrads {
    pub examples: Vec<GradientSet>,
}

impl PerExampleGrads {
    pub fn new(examples: Vec<GradientSet>, spec: &ParamGroupSpec) -> Result<Self> {
        for g in &examples {
            g.check(spec)?;
        }
        Ok(Self { examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClipMode {
    /// One threshold `C` on the norm of the whole gradient.
    Flat,
    /// Threshold `C / sqrt(k)` on each of the `k` groups.
    Grouped,
}

impl std::str::FromStr for ClipMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(ClipMode::Flat),
            "grouped" => Ok(ClipMode::Grouped),
            other => Err(Error::InvalidArgument(format!("unknown clip mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipConfig {
    pub clip_norm: f64,
    pub mode: ClipMode,
    pub noise_multiplier: f64,
    pub rng_seed: u64,
}

impl ClipConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "clip norm must be positive, got {}",
                self.clip_norm
            )));
        }
        if !(self.noise_multiplier.is_finite() && self.noise_multiplier >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise multiplier must be non-negative, got {}",
                self.noise_multiplier
            )));
        }
        Ok(())
    }
}

/// Scaling factor that clips a vector of norm `norm` to `threshold`; exactly
/// 1.0 inside the ball and for zero vectors.
#[inline]
pub fn clip_factor(norm: f64, threshold: f64) -> f64 {
    if norm > threshold {
        threshold / norm
    } else {
        1.0
    }
}

pub fn clip_flat(grad: &GradientSet, clip_norm: f64) -> GradientSet {
    let factor = clip_factor(grad.norm(), clip_norm);
    let mut out = grad.clone();
    if factor != 1.0 {
        out.scale(factor);
    }
    out
}

pub fn clip_grouped(grad: &GradientSet, clip_norm: f64, spec: &ParamGroupSpec) -> GradientSet {
    let threshold = clip_norm / (spec.k() as f64).sqrt();
    let mut out = grad.clone();
    for block in &mut out.blocks {
        let norm = block.iter().map(|x| x * x).sum::<f64>().sqrt();
        let factor = clip_factor(norm, threshold);
        if factor != 1.0 {
            for x in block.iter_mut() {
                *x *= factor;
            }
        }
    }
    out
}

/// Per-group clip factors given per-group squared norms.
pub fn clip_factors(group_sq_norms: &[f64], clip_norm: f64, mode: ClipMode) -> Vec<f64> {
    match mode {
        ClipMode::Flat => {
            let total: f64 = group_sq_norms.iter().sum();
            vec![clip_factor(total.sqrt(), clip_norm); group_sq_norms.len()]
        }
        ClipMode::Grouped => {
            let threshold = clip_norm / (group_sq_norms.len() as f64).sqrt();
            group_sq_norms
                .iter()
                .map(|s| clip_factor(s.sqrt(), threshold))
                .collect()
        }
    }
}

/// Squared Frobenius norms of the per-example weight gradients `S_i^T A_i` of a
/// linear layer, from inputs `A_i` (`seq_len x d_in`) and output gradients
/// `S_i` (`seq_len x d_out`).
pub fn ghost_norm_linear(inputs: &[Array2<f64>], output_grads: &[Array2<f64>]) -> Result<Vec<f64>> {
    if inputs.len() != output_grads.len() {
        return Err(Error::Shape(format!(
            "{} inputs but {} output gradients",
            inputs.len(),
            output_grads.len()
        )));
    }
    inputs
        .iter()
        .zip(output_grads)
        .map(|(a, s)| linear_sq_norm(a.view(), s.view()))
        .collect()
}

pub(crate) fn linear_sq_norm(input: ArrayView2<f64>, output_grad: ArrayView2<f64>) -> Result<f64> {
    let (seq, d_in) = input.dim();
    let (seq_s, d_out) = output_grad.dim();
    if seq != seq_s {
        return Err(Error::Shape(format!(
            "input has {seq} positions, output gradient has {seq_s}"
        )));
    }
    if 2 * seq * seq < d_in * d_out {
        // <A A^T, S S^T>_F without forming S^T A.
        let gram_a = input.dot(&input.t());
        let gram_s = output_grad.dot(&output_grad.t());
        Ok(gram_a.iter().zip(gram_s.iter()).map(|(x, y)| x * y).sum())
    } else {
        let grad = output_grad.t().dot(&input);
        Ok(grad.iter().map(|x| x * x).sum())
    }
}

/// Squared norms of per-example embedding-table gradients, accumulating the
/// position gradients per distinct token id.
pub fn ghost_norm_embedding(
    token_ids: &[Vec<usize>],
    output_grads: &[Array2<f64>],
    vocab_size: usize,
) -> Result<Vec<f64>> {
    if token_ids.len() != output_grads.len() {
        return Err(Error::Shape(format!(
            "{} token sequences but {} output gradients",
            token_ids.len(),
            output_grads.len()
        )));
    }
    token_ids
        .iter()
        .zip(output_grads)
        .map(|(ids, g)| embedding_sq_norm(ids, g.view(), vocab_size))
        .collect()
}

pub(crate) fn embedding_sq_norm(
    ids: &[usize],
    output_grad: ArrayView2<f64>,
    vocab_size: usize,
) -> Result<f64> {
    if ids.len() != output_grad.nrows() {
        return Err(Error::Shape(format!(
            "{} tokens but {} gradient rows",
            ids.len(),
            output_grad.nrows()
        )));
    }
    let mut rows: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (&id, row) in ids.iter().zip(output_grad.rows()) {
        if id >= vocab_size {
            return Err(Error::Shape(format!("token id {id} outside vocabulary of {vocab_size}")));
        }
        let acc = rows.entry(id).or_insert_with(|| vec![0.0; row.len()]);
        for (a, x) in acc.iter_mut().zip(row.iter()) {
            *a += x;
        }
    }
    Ok(rows.values().flatten().map(|x| x * x).sum())
}

/// Gradient contribution of one parameter group for one example, kept in the
/// factored form produced by backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerTrace {
    /// Weight of a linear map: gradient is `output_grad^T . input`.
    Linear {
        input: Array2<f64>,
        output_grad: Array2<f64>,
    },
    /// Bias of a linear map: gradient is the column sum of `output_grad`.
    Bias { output_grad: Array2<f64> },
    /// Embedding table: row `ids[t]` receives `output_grad[t]`.
    Embedding {
        ids: Vec<usize>,
        output_grad: Array2<f64>,
        vocab_size: usize,
    },
    /// Already materialized gradient block.
    Dense(Vec<f64>),
}

impl LayerTrace {
    pub fn sq_norm(&self) -> Result<f64> {
        match self {
            LayerTrace::Linear { input, output_grad } => linear_sq_norm(input.view(), output_grad.view()),
            LayerTrace::Bias { output_grad } => Ok(output_grad
                .columns()
                .into_iter()
                .map(|c| c.sum().powi(2))
                .sum()),
            LayerTrace::Embedding {
                ids,
                output_grad,
                vocab_size,
            } => embedding_sq_norm(ids, output_grad.view(), *vocab_size),
            LayerTrace::Dense(v) => Ok(v.iter().map(|x| x * x).sum()),
        }
    }

    /// `target += factor * gradient`, with `target` the flat row-major block.
    pub fn accumulate_into(&self, target: &mut [f64], factor: f64) {
        match self {
            LayerTrace::Linear { input, output_grad } => {
                let grad = output_grad.t().dot(input);
                for (t, g) in target.iter_mut().zip(grad.iter()) {
                    *t += factor * g;
                }
            }
            LayerTrace::Bias { output_grad } => {
                for (t, c) in target.iter_mut().zip(output_grad.columns()) {
                    *t += factor * c.sum();
                }
            }
            LayerTrace::Embedding {
                ids, output_grad, ..
            } => {
                let width = output_grad.ncols();
                for (&id, row) in ids.iter().zip(output_grad.rows()) {
                    let dst = &mut target[id * width..(id + 1) * width];
                    for (t, g) in dst.iter_mut().zip(row.iter()) {
                        *t += factor * g;
                    }
                }
            }
            LayerTrace::Dense(v) => {
                for (t, g) in target.iter_mut().zip(v) {
                    *t += factor * g;
                }
            }
        }
    }
}

/// Factored per-example gradient, one trace per parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleTrace {
    pub groups: Vec<LayerTrace>,
}

impl ExampleTrace {
    pub fn group_sq_norms(&self) -> Result<Vec<f64>> {
        self.groups.iter().map(LayerTrace::sq_norm).collect()
    }

    pub fn materialize(&self, spec: &ParamGroupSpec) -> GradientSet {
        let mut out = GradientSet::zeros(spec);
        self.accumulate_into(&mut out, &vec![1.0; spec.k()]);
        out
    }

    pub fn accumulate_into(&self, target: &mut GradientSet, factors: &[f64]) {
        for ((trace, block), &f) in self.groups.iter().zip(target.blocks.iter_mut()).zip(factors) {
            trace.accumulate_into(block, f);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipDiagnostics {
    pub batch_size: usize,
    pub median_pre_clip_norm: f64,
    pub max_pre_clip_norm: f64,
    pub clipped_fraction: f64,
    /// Noise std per coordinate on the clipped sum (`rho * C`).
    pub noise_std: f64,
    pub empty_batch: bool,
}

impl ClipDiagnostics {
    fn from_norms(norms: &[f64], clipped: usize, noise_std: f64) -> Self {
        let mut sorted = norms.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let median = match sorted.len() {
            0 => 0.0,
            n if n % 2 == 1 => sorted[n / 2],
            n => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
        };
        Self {
            batch_size: norms.len(),
            median_pre_clip_norm: median,
            max_pre_clip_norm: sorted.last().copied().unwrap_or(0.0),
            clipped_fraction: if norms.is_empty() {
                0.0
            } else {
                clipped as f64 / norms.len() as f64
            },
            noise_std,
            empty_batch: norms.is_empty(),
        }
    }
}

fn noise_and_average<R: Rng + ?Sized>(
    sum: &mut GradientSet,
    cfg: &ClipConfig,
    nominal_batch: usize,
    rng: &mut R,
) {
    let std = cfg.noise_multiplier * cfg.clip_norm;
    if std > 0.0 {
        for block in &mut sum.blocks {
            for x in block.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *x += std * z;
            }
        }
    }
    sum.scale(1.0 / nominal_batch as f64);
}

fn check_nominal(nominal_batch: usize) -> Result<()> {
    if nominal_batch == 0 {
        return Err(Error::InvalidArgument("nominal batch size must be positive".into()));
    }
    Ok(())
}

/// Clips every example, sums in batch order, adds `Normal(0, (rho C)^2)` per
/// coordinate and divides by `nominal_batch`.
pub fn privatize_batch<R: Rng + ?Sized>(
    grads: &PerExampleGrads,
    cfg: &ClipConfig,
    spec: &ParamGroupSpec,
    nominal_batch: usize,
    rng: &mut R,
) -> Result<(GradientSet, ClipDiagnostics)> {
    cfg.validate()?;
    check_nominal(nominal_batch)?;
    for g in &grads.examples {
        g.check(spec)?;
    }
    let clipped: Vec<(GradientSet, f64, bool)> = grads
        .examples
        .par_iter()
        .map(|g| {
            let norm = g.norm();
            let out = match cfg.mode {
                ClipMode::Flat => clip_flat(g, cfg.clip_norm),
                ClipMode::Grouped => clip_grouped(g, cfg.clip_norm, spec),
            };
            let was_clipped = out != *g;
            (out, norm, was_clipped)
        })
        .collect();

    let mut sum = GradientSet::zeros(spec);
    for (g, _, _) in &clipped {
        sum.add_scaled(g, 1.0);
    }
    let norms: Vec<f64> = clipped.iter().map(|c| c.1).collect();
    let n_clipped = clipped.iter().filter(|c| c.2).count();
    noise_and_average(&mut sum, cfg, nominal_batch, rng);
    let diag = ClipDiagnostics::from_norms(&norms, n_clipped, cfg.noise_multiplier * cfg.clip_norm);
    Ok((sum, diag))
}

/// Same contract as [`privatize_batch`], but from factored traces: norms come
/// from ghost computations and each example's gradient is only ever
/// materialized into the running sum, already scaled by its clip factors.
pub fn privatize_traces<R: Rng + ?Sized>(
    traces: &[ExampleTrace],
    cfg: &ClipConfig,
    spec: &ParamGroupSpec,
    nominal_batch: usize,
    rng: &mut R,
) -> Result<(GradientSet, ClipDiagnostics)> {
    cfg.validate()?;
    check_nominal(nominal_batch)?;
    for t in traces {
        if t.groups.len() != spec.k() {
            return Err(Error::Shape(format!(
                "trace has {} groups, spec has {}",
                t.groups.len(),
                spec.k()
            )));
        }
    }
    let group_norms: Vec<Vec<f64>> = traces
        .par_iter()
        .map(ExampleTrace::group_sq_norms)
        .collect::<Result<_>>()?;
    let mut sum = GradientSet::zeros(spec);
    let mut norms = Vec::with_capacity(traces.len());
    let mut n_clipped = 0;
    for (trace, sq) in traces.iter().zip(&group_norms) {
        if sq.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("per-example gradient norm".into()));
        }
        let factors = clip_factors(sq, cfg.clip_norm, cfg.mode);
        if factors.iter().any(|&f| f != 1.0) {
            n_clipped += 1;
        }
        norms.push(sq.iter().sum::<f64>().sqrt());
        trace.accumulate_into(&mut sum, &factors);
    }
    noise_and_average(&mut sum, cfg, nominal_batch, rng);
    let diag = ClipDiagnostics::from_norms(&norms, n_clipped, cfg.noise_multiplier * cfg.clip_norm);
    Ok((sum, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(shapes: &[usize]) -> ParamGroupSpec {
        ParamGroupSpec::new(
            shapes
                .iter()
                .enumerate()
                .map(|(i, &n)| GroupShape {
                    name: format!("g{i}"),
                    shape: vec![n],
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn flat_clip_three_four_five() {
        let g = GradientSet::from_blocks(vec![vec![3.0], vec![4.0]]);
        let out = clip_flat(&g, 1.0);
        assert!((out.blocks[0][0] - 0.6).abs() < 1e-15);
        assert!((out.blocks[1][0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn flat_clip_inside_ball_is_identity() {
        let g = GradientSet::from_blocks(vec![vec![0.3, 0.4]]);
        assert_eq!(clip_flat(&g, 1.0), g);
        let zero = GradientSet::from_blocks(vec![vec![0.0, 0.0]]);
        assert_eq!(clip_flat(&zero, 1.0), zero);
        assert_eq!(clip_grouped(&zero, 1.0, &spec(&[2])), zero);
    }

    #[test]
    fn grouped_clip_examples() {
        let s = spec(&[1, 1, 1, 1]);
        let g = GradientSet::from_blocks(vec![vec![1.0], vec![-1.0], vec![1.0], vec![1.0]]);
        let out = clip_grouped(&g, 1.0, &s);
        for n in out.group_sq_norms() {
            assert!((n.sqrt() - 0.5).abs() < 1e-15);
        }
        assert!((out.norm() - 1.0).abs() < 1e-15);

        let s2 = spec(&[2, 1]);
        let g2 = GradientSet::from_blocks(vec![vec![6.0, 8.0], vec![0.0]]);
        let out2 = clip_grouped(&g2, 1.0, &s2);
        let norms = out2.group_sq_norms();
        assert!((norms[0].sqrt() - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(norms[1], 0.0);
    }

    #[test]
    fn ghost_linear_small_cases() {
        let eye = array![[1.0, 0.0], [0.0, 1.0]];
        let n = ghost_norm_linear(&[eye.clone()], &[eye]).unwrap();
        assert!((n[0] - 2.0).abs() < 1e-15);

        let a = array![[1.0, 2.0, 2.0]];
        let s = array![[3.0, 4.0]];
        let n = ghost_norm_linear(&[a], &[s]).unwrap();
        assert!((n[0] - 9.0 * 25.0).abs() < 1e-12);
    }

    #[test]
    fn ghost_linear_rejects_mismatched_positions() {
        let a = Array2::<f64>::zeros((3, 2));
        let s = Array2::<f64>::zeros((2, 2));
        assert!(ghost_norm_linear(&[a], &[s]).is_err());
    }

    #[test]
    fn ghost_embedding_cancellation_and_distinct() {
        let g = array![[1.0, 2.0], [-1.0, -2.0]];
        let n = ghost_norm_embedding(&[vec![4, 4]], &[g.clone()], 10).unwrap();
        assert_eq!(n[0], 0.0);
        let n = ghost_norm_embedding(&[vec![3, 4]], &[g.clone()], 10).unwrap();
        assert!((n[0] - 10.0).abs() < 1e-15);
        assert!(ghost_norm_embedding(&[vec![3, 10]], &[g], 10).is_err());
    }

    #[test]
    fn privatize_single_example() {
        let s = spec(&[1, 1]);
        let grads = PerExampleGrads::new(vec![GradientSet::from_blocks(vec![vec![3.0], vec![4.0]])], &s).unwrap();
        let cfg = ClipConfig {
            clip_norm: 1.0,
            mode: ClipMode::Flat,
            noise_multiplier: 0.0,
            rng_seed: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (out, diag) = privatize_batch(&grads, &cfg, &s, 1, &mut rng).unwrap();
        assert!((out.blocks[0][0] - 0.6).abs() < 1e-15);
        assert!((out.blocks[1][0] - 0.8).abs() < 1e-15);
        assert_eq!(diag.clipped_fraction, 1.0);
        assert_eq!(diag.max_pre_clip_norm, 5.0);
    }

    #[test]
    fn empty_batch_is_pure_noise() {
        let s = spec(&[3]);
        let grads = PerExampleGrads::new(vec![], &s).unwrap();
        let cfg = ClipConfig {
            clip_norm: 0.5,
            mode: ClipMode::Flat,
            noise_multiplier: 2.0,
            rng_seed: 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (out, diag) = privatize_batch(&grads, &cfg, &s, 4, &mut rng).unwrap();
        assert!(diag.empty_batch);
        assert_eq!(diag.noise_std, 1.0);
        assert!(out.blocks[0].iter().all(|x| *x != 0.0));
    }

    #[test]
    fn rejects_bad_config_and_shapes() {
        let s = spec(&[2]);
        let bad = GradientSet::from_blocks(vec![vec![1.0]]);
        assert!(PerExampleGrads::new(vec![bad], &s).is_err());
        let nan = GradientSet::from_blocks(vec![vec![f64::NAN, 1.0]]);
        assert!(PerExampleGrads::new(vec![nan], &s).is_err());
        let cfg = ClipConfig {
            clip_norm: 0.0,
            mode: ClipMode::Flat,
            noise_multiplier: 0.0,
            rng_seed: 0,
        };
        assert!(cfg.validate().is_err());
        assert!(ParamGroupSpec::new(vec![]).is_err());
        let dup = vec![
            GroupShape { name: "a".into(), shape: vec![1] },
            GroupShape { name: "a".into(), shape: vec![1] },
        ];
        assert!(ParamGroupSpec::new(dup).is_err());
    }
}
