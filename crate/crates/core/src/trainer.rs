//! Non-private and DP training loops: AdamW with warmup and linear decay,
//! Poisson subsampling, per-epoch accounting and early stopping.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::{prv_epsilon, PldOptions, PrivacyConfig};
use crate::datagen::LabeledNote;
use crate::error::{Error, Result};
use crate::metrics::{self, Metrics, PredictionRecord};
use crate::model::{backward_trace, forward, loss, predict, ModelDims, ModelParams};
use crate::privatizer::{privatize_traces, ClipConfig, ClipDiagnostics, ExampleTrace, GradientSet};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub base_lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub warmup_steps: u64,
    pub batch_size: usize,
    /// `None` means 5 epochs without privacy and 20 with.
    pub max_epochs: Option<usize>,
    /// Evaluations without validation improvement before stopping.
    pub patience: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            base_lr: 5e-5,
            weight_decay: 0.1,
            beta1: 0.9,
            beta2: 0.95,
            adam_eps: 1e-5,
            warmup_steps: 200,
            batch_size: 32,
            max_epochs: None,
            patience: 3,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let key = |k: &str| format!("optimizer.{k}");
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return Err(Error::config(key("base_lr"), "must be positive"));
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return Err(Error::config(key("adam_eps"), "must be positive"));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::config(key("weight_decay"), "must be non-negative"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(key(name), format!("must lie in [0, 1), got {b}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::config(key("batch_size"), "must be positive"));
        }
        if self.max_epochs == Some(0) {
            return Err(Error::config(key("max_epochs"), "must be positive"));
        }
        Ok(())
    }

    pub fn epochs(&self, private: bool) -> usize {
        self.max_epochs.unwrap_or(if private { 20 } else { 5 })
    }
}

/// Linear warmup from 0 to `base_lr` over `warmup_steps`, then linear decay
/// to 0 at `total_steps`.
pub fn lr_at(step: u64, total_steps: u64, cfg: &OptimizerConfig) -> f64 {
    if step >= total_steps {
        return 0.0;
    }
    if step < cfg.warmup_steps {
        return cfg.base_lr * step as f64 / cfg.warmup_steps as f64;
    }
    cfg.base_lr * (total_steps - step) as f64 / (total_steps - cfg.warmup_steps) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub m: GradientSet,
    pub v: GradientSet,
    pub t: u64,
}

impl AdamWState {
    pub fn new(dims: &ModelDims) -> Self {
        let spec = dims.group_spec();
        Self {
            m: GradientSet::zeros(&spec),
            v: GradientSet::zeros(&spec),
            t: 0,
        }
    }
}

/// One AdamW update with decoupled weight decay and bias-corrected moments.
pub fn adamw_step(
    params: &mut ModelParams,
    state: &mut AdamWState,
    grad: &GradientSet,
    cfg: &OptimizerConfig,
    lr: f64,
) -> Result<()> {
    if !grad.is_finite() {
        return Err(Error::NonFinite(format!("gradient at optimizer step {}", state.t + 1)));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let decay = 1.0 - lr * cfg.weight_decay;
    for (((p, g), m), v) in params
        .blocks_mut()
        .into_iter()
        .zip(&grad.blocks)
        .zip(state.m.blocks.iter_mut())
        .zip(state.v.blocks.iter_mut())
    {
        if p.len() != g.len() {
            return Err(Error::Shape("gradient does not match parameters".into()));
        }
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] = p[i] * decay - lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
    Ok(())
}

/// Includes each of `0..n` independently with probability `q`.
pub fn poisson_batch<R: Rng + ?Sized>(n: usize, q: f64, rng: &mut R) -> Vec<usize> {
    let q = q.clamp(0.0, 1.0);
    (0..n).filter(|_| rng.random_bool(q)).collect()
}

/// A random permutation of `0..n` cut into consecutive batches of `b` (the
/// last may be shorter).
pub fn shuffled_batches<R: Rng + ?Sized>(n: usize, b: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(b.max(1)).map(<[usize]>::to_vec).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpSettings {
    pub clip: ClipConfig,
    pub delta: f64,
    pub pld: PldOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dims: ModelDims,
    pub optimizer: OptimizerConfig,
    pub privacy: Option<DpSettings>,
    /// Decision threshold for validation micro-F1.
    pub threshold: f64,
    pub seed: u64,
    /// Replaces per-epoch sampling: every epoch walks these batches in order.
    pub schedule: Option<Vec<Vec<usize>>>,
}

/// Per-epoch summary of privatizer diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochDiagnostics {
    pub mean_batch_size: f64,
    pub empty_batches: usize,
    pub mean_clipped_fraction: f64,
    pub median_pre_clip_norm: f64,
    pub max_pre_clip_norm: f64,
    pub noise_std: f64,
}

impl EpochDiagnostics {
    fn summarize(diags: &[ClipDiagnostics]) -> Option<Self> {
        if diags.is_empty() {
            return None;
        }
        let n = diags.len() as f64;
        let mut medians: Vec<f64> = diags.iter().filter(|d| !d.empty_batch).map(|d| d.median_pre_clip_norm).collect();
        medians.sort_by(f64::total_cmp);
        Some(Self {
            mean_batch_size: diags.iter().map(|d| d.batch_size as f64).sum::<f64>() / n,
            empty_batches: diags.iter().filter(|d| d.empty_batch).count(),
            mean_clipped_fraction: diags.iter().map(|d| d.clipped_fraction).sum::<f64>() / n,
            median_pre_clip_norm: medians.get(medians.len() / 2).copied().unwrap_or(0.0),
            max_pre_clip_norm: diags.iter().map(|d| d.max_pre_clip_norm).fold(0.0, f64::max),
            noise_std: diags[0].noise_std,
        })
    }
}

/// One line of the training log, written after every epoch (epoch 0 is the
/// untrained baseline).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: Option<f64>,
    pub val_micro_f1: f64,
    pub epsilon: Option<f64>,
    pub diagnostics: Option<EpochDiagnostics>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation micro-F1.
    pub best: ModelParams,
    pub best_epoch: usize,
    pub last: ModelParams,
    pub records: Vec<TrainRecord>,
    pub steps: u64,
    /// Sampling rate and epsilon of DP runs.
    pub sampling_rate: Option<f64>,
    pub epsilon: Option<f64>,
}

/// Probabilities for every note, in order.
pub fn probabilities(params: &ModelParams, dims: &ModelDims, notes: &[LabeledNote]) -> Result<Vec<Vec<f64>>> {
    notes
        .par_iter()
        .map(|n| forward(params, dims, &n.tokens).map(|c| c.probabilities.to_vec()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub threshold: f64,
    pub metrics: Metrics,
    pub predictions: Vec<PredictionRecord>,
}

pub fn evaluate(params: &ModelParams, dims: &ModelDims, notes: &[LabeledNote], threshold: f64) -> Result<Evaluation> {
    if notes.is_empty() {
        return Err(Error::Data("cannot evaluate an empty split".into()));
    }
    let probs = probabilities(params, dims, notes)?;
    let predictions: Vec<PredictionRecord> = notes
        .iter()
        .zip(probs)
        .map(|(n, p)| PredictionRecord {
            admission_id: n.admission_id,
            predicted: predict(&p, threshold),
            gold: n.labels.clone(),
            probabilities: p,
        })
        .collect();
    let pred: Vec<Vec<u8>> = predictions.iter().map(|p| p.predicted.clone()).collect();
    let gold: Vec<Vec<u8>> = predictions.iter().map(|p| p.gold.clone()).collect();
    Ok(Evaluation {
        threshold,
        metrics: metrics::metrics(&pred, &gold)?,
        predictions,
    })
}

fn validation_f1(params: &ModelParams, dims: &ModelDims, notes: &[LabeledNote], threshold: f64) -> Result<f64> {
    Ok(evaluate(params, dims, notes, threshold)?.metrics.micro_f1)
}

/// Per-example traces and losses for a batch, in batch order.
fn batch_traces(
    params: &ModelParams,
    dims: &ModelDims,
    notes: &[LabeledNote],
    batch: &[usize],
) -> Result<(Vec<ExampleTrace>, f64)> {
    let out: Vec<(ExampleTrace, f64)> = batch
        .par_iter()
        .map(|&i| {
            let note = &notes[i];
            let cache = forward(params, dims, &note.tokens)?;
            let l = loss(&cache, &note.labels)?;
            Ok((backward_trace(params, dims, &cache, &note.labels)?, l))
        })
        .collect::<Result<_>>()?;
    let loss_sum = out.iter().map(|(_, l)| l).sum();
    Ok((out.into_iter().map(|(t, _)| t).collect(), loss_sum))
}

fn epsilon_after(dp: &DpSettings, q: f64, steps: u64) -> Result<Option<f64>> {
    if dp.clip.noise_multiplier == 0.0 || steps == 0 {
        return Ok(if steps == 0 { Some(0.0) } else { None });
    }
    let cfg = PrivacyConfig::new(dp.clip.noise_multiplier, q, steps, dp.delta)?;
    Ok(Some(prv_epsilon(&cfg, &dp.pld)?.epsilon))
}

pub fn train(cfg: &RunConfig, train_set: &[LabeledNote], validation: &[LabeledNote]) -> Result<TrainOutcome> {
    cfg.dims.validate()?;
    cfg.optimizer.validate()?;
    if train_set.is_empty() || validation.is_empty() {
        return Err(Error::Data("training and validation splits must be non-empty".into()));
    }
    for n in train_set.iter().chain(validation) {
        n.validate(cfg.dims.vocab_size, cfg.dims.num_labels)?;
    }
    if let Some(schedule) = &cfg.schedule {
        if schedule.is_empty() || schedule.iter().flatten().any(|&i| i >= train_set.len()) {
            return Err(Error::InvalidArgument("batch schedule is empty or out of range".into()));
        }
    }

    let opt = &cfg.optimizer;
    let n = train_set.len();
    let b = opt.batch_size;
    let epochs = opt.epochs(cfg.privacy.is_some());
    let steps_per_epoch = cfg.schedule.as_ref().map_or(n.div_ceil(b), Vec::len) as u64;
    let total_steps = epochs as u64 * steps_per_epoch;
    let q = (b as f64 / n as f64).min(1.0);
    let spec = cfg.dims.group_spec();

    if let Some(dp) = &cfg.privacy {
        dp.clip.validate()?;
        // Fails before any step when the planned run cannot be accounted for.
        epsilon_after(dp, q, total_steps)?;
    }

    let mut params = ModelParams::init(&cfg.dims, &mut rng::stream(cfg.seed, rng::INIT));
    let mut state = AdamWState::new(&cfg.dims);
    let mut shuffle_rng = rng::stream(cfg.seed, rng::SHUFFLE);
    let mut poisson_rng = rng::stream(cfg.seed, rng::POISSON);
    let mut noise_rng = rng::stream(cfg.seed, rng::NOISE);

    let baseline = validation_f1(&params, &cfg.dims, validation, cfg.threshold)?;
    let mut records = vec![TrainRecord {
        step: 0,
        epoch: 0,
        lr: 0.0,
        train_loss: None,
        val_micro_f1: baseline,
        epsilon: cfg.privacy.map(|_| 0.0),
        diagnostics: None,
    }];
    let mut best = params.clone();
    let mut best_f1 = baseline;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut step = 0u64;
    let mut epsilon = cfg.privacy.map(|_| 0.0);

    for epoch in 1..=epochs {
        let batches: Vec<Vec<usize>> = match (&cfg.schedule, cfg.privacy.is_some()) {
            (Some(s), _) => s.clone(),
            (None, false) => shuffled_batches(n, b, &mut shuffle_rng),
            (None, true) => (0..steps_per_epoch).map(|_| poisson_batch(n, q, &mut poisson_rng)).collect(),
        };
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        let mut diags = Vec::new();
        let mut lr = 0.0;
        for batch in &batches {
            lr = lr_at(step, total_steps, opt);
            let (traces, batch_loss) = batch_traces(&params, &cfg.dims, train_set, batch)?;
            loss_sum += batch_loss;
            loss_count += batch.len();
            let grad = match &cfg.privacy {
                Some(dp) => {
                    let (g, d) = privatize_traces(&traces, &dp.clip, &spec, b, &mut noise_rng)?;
                    diags.push(d);
                    g
                }
                None => {
                    let mut sum = GradientSet::zeros(&spec);
                    let ones = vec![1.0; spec.k()];
                    for t in &traces {
                        t.accumulate_into(&mut sum, &ones);
                    }
                    if !batch.is_empty() {
                        sum.scale(1.0 / batch.len() as f64);
                    }
                    sum
                }
            };
            adamw_step(&mut params, &mut state, &grad, opt, lr)?;
            step += 1;
        }
        if !params.is_finite() {
            return Err(Error::NonFinite(format!("parameters after epoch {epoch}")));
        }
        if let Some(dp) = &cfg.privacy {
            epsilon = epsilon_after(dp, q, step)?;
        }
        let f1 = validation_f1(&params, &cfg.dims, validation, cfg.threshold)?;
        records.push(TrainRecord {
            step,
            epoch,
            lr,
            train_loss: (loss_count > 0).then(|| loss_sum / loss_count as f64),
            val_micro_f1: f1,
            epsilon,
            diagnostics: EpochDiagnostics::summarize(&diags),
        });
        if f1 > best_f1 {
            best_f1 = f1;
            best = params.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= opt.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        best,
        best_epoch,
        last: params,
        records,
        steps: step,
        sampling_rate: cfg.privacy.map(|_| q),
        epsilon,
    })
}
