//! Pipelines behind the command-line tool and the on-disk artifact layout.
//!
//! ```text
//! <out>/raw/            records.jsonl, manifest.json
//! <out>/data/           train.jsonl, validation.jsonl, test.jsonl, labels.txt,
//!                       vocab.txt, split_manifest.json, summary.json, manifest.json
//! <out>/runs/<run>/     checkpoint.bin, train_log.jsonl, run.json, manifest.json
//!     evaluation/       metrics.json, predictions.jsonl, manifest.json
//!     fairness/         fairness.json, fairness.txt, manifest.json
//! <out>/report.json, report.txt, manifest.json    (reproduce only)
//! ```
//!
//! Run directories are named `<model>-dp` or `<model>-nondp`. No file records
//! absolute paths or clock times, so identical config and seed give identical
//! bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::accountant::{
    calibrate_noise, default_orders, prv_epsilon, rdp_epsilon, PldOptions, PrivacyConfig, PrivacySpend,
};
use crate::config::{ExperimentConfig, NoiseSetting};
use crate::datagen::{generate_corpus, prepare_corpus, LabeledNote, PreparedCorpus, RawRecord, Vocabulary, SPLIT_NAMES};
use crate::error::{Error, Result};
use crate::fairness::{audit, render_table, FairnessAudit, TableBlock, METRIC_NAMES};
use crate::io::{read_json, read_jsonl, write_json, write_jsonl, Manifest, Staged};
use crate::metrics::{threshold_grid, tune_threshold, Metrics, PredictionRecord};
use crate::model::{load_checkpoint, save_checkpoint, Checkpoint, ModelDims};
use crate::privatizer::ClipConfig;
use crate::rng;
use crate::trainer::{self, DpSettings, OptimizerConfig, RunConfig, TrainOutcome, TrainRecord};

pub const RAW_DIR: &str = "raw";
pub const DATA_DIR: &str = "data";
pub const RUNS_DIR: &str = "runs";
pub const EVALUATION_DIR: &str = "evaluation";
pub const FAIRNESS_DIR: &str = "fairness";

pub const RECORDS_FILE: &str = "records.jsonl";
pub const LABELS_FILE: &str = "labels.txt";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const SPLIT_MANIFEST_FILE: &str = "split_manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const RUN_FILE: &str = "run.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const FAIRNESS_JSON: &str = "fairness.json";
pub const FAIRNESS_TXT: &str = "fairness.txt";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";

pub fn split_file(split: &str) -> String {
    format!("{split}.jsonl")
}

pub fn run_name(model: &str, private: bool) -> String {
    format!("{model}-{}", if private { "dp" } else { "nondp" })
}

/// Seed of one training run, derived from the master seed.
pub fn run_seed(master: u64, model: &str, private: bool) -> u64 {
    rng::child_seed(master, &format!("run/{model}/{}", if private { "dp" } else { "nondp" }))
}

// ---------------------------------------------------------------- data

/// Synthetic raw records for the configured corpus.
pub fn generate_raw(cfg: &ExperimentConfig) -> Result<Vec<RawRecord>> {
    let mut spec = cfg.datagen.clone();
    spec.seed = cfg.seed;
    generate_corpus(&spec)
}

pub fn write_raw(dir: &Path, records: &[RawRecord]) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_jsonl(&dir.join(RECORDS_FILE), records)
}

pub fn read_raw(path: &Path) -> Result<Vec<RawRecord>> {
    read_jsonl(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub labels: usize,
    pub vocab_size: usize,
    pub dropped_empty_text: usize,
    pub dropped_no_code: usize,
    pub dropped_no_label: usize,
}

impl CorpusSummary {
    pub fn of(prepared: &PreparedCorpus) -> Self {
        Self {
            train: prepared.splits[0].len(),
            validation: prepared.splits[1].len(),
            test: prepared.splits[2].len(),
            labels: prepared.label_space.len(),
            vocab_size: prepared.vocabulary.len(),
            dropped_empty_text: prepared.dropped_empty_text.len(),
            dropped_no_code: prepared.manifest.dropped_no_code.len(),
            dropped_no_label: prepared.manifest.dropped_no_label.len(),
        }
    }
}

pub fn preprocess(cfg: &ExperimentConfig, records: Vec<RawRecord>) -> Result<PreparedCorpus> {
    prepare_corpus(records, &cfg.preprocess, cfg.seed)
}

pub fn write_prepared(dir: &Path, prepared: &PreparedCorpus) -> Result<CorpusSummary> {
    fs::create_dir_all(dir)?;
    for (name, notes) in SPLIT_NAMES.iter().zip(&prepared.splits) {
        write_jsonl(&dir.join(split_file(name)), notes)?;
    }
    let mut labels = prepared.label_space.join("\n");
    labels.push('\n');
    fs::write(dir.join(LABELS_FILE), labels)?;
    fs::write(dir.join(VOCAB_FILE), prepared.vocabulary.to_lines())?;
    write_json(&dir.join(SPLIT_MANIFEST_FILE), &prepared.manifest)?;
    let summary = CorpusSummary::of(prepared);
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

/// A preprocessed dataset as read back from disk.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub labels: Vec<String>,
    pub vocabulary: Vocabulary,
    pub splits: [Vec<LabeledNote>; 3],
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            fs::read_to_string(dir.join(name))
                .map_err(|e| Error::Data(format!("cannot read {}: {e}", dir.join(name).display())))
        };
        let labels: Vec<String> = read(LABELS_FILE)?.lines().map(str::to_owned).collect();
        if labels.is_empty() {
            return Err(Error::Data(format!("{} lists no labels", dir.join(LABELS_FILE).display())));
        }
        let vocabulary = Vocabulary::from_lines(&read(VOCAB_FILE)?)?;
        let mut splits: [Vec<LabeledNote>; 3] = Default::default();
        for (slot, name) in splits.iter_mut().zip(SPLIT_NAMES) {
            *slot = read_jsonl(&dir.join(split_file(name)))?;
            for n in slot.iter() {
                n.validate(vocabulary.len(), labels.len())?;
            }
        }
        Ok(Self {
            labels,
            vocabulary,
            splits,
        })
    }

    pub fn split(&self, name: &str) -> Result<&[LabeledNote]> {
        SPLIT_NAMES
            .iter()
            .position(|s| *s == name)
            .map(|i| self.splits[i].as_slice())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown split `{name}`")))
    }

    pub fn all_notes(&self) -> impl Iterator<Item = &LabeledNote> {
        self.splits.iter().flatten()
    }
}

// ---------------------------------------------------------------- accounting

/// Both accountants evaluated at one setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountRecord {
    pub noise_multiplier: f64,
    pub sampling_rate: f64,
    pub steps: u64,
    pub delta: f64,
    pub prv: PrivacySpend,
    pub rdp: PrivacySpend,
}

pub fn account(cfg: &PrivacyConfig, opts: &PldOptions) -> Result<AccountRecord> {
    cfg.validate()?;
    Ok(AccountRecord {
        noise_multiplier: cfg.noise_multiplier,
        sampling_rate: cfg.sampling_rate,
        steps: cfg.steps,
        delta: cfg.delta,
        prv: prv_epsilon(cfg, opts)?,
        rdp: rdp_epsilon(cfg.noise_multiplier, cfg.sampling_rate, cfg.steps, cfg.delta, &default_orders())?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub target_epsilon: f64,
    pub noise_multiplier: f64,
    pub account: AccountRecord,
}

pub fn calibrate(target_epsilon: f64, q: f64, steps: u64, delta: f64, opts: &PldOptions) -> Result<CalibrationRecord> {
    let rho = calibrate_noise(target_epsilon, q, steps, delta, opts)?;
    Ok(CalibrationRecord {
        target_epsilon,
        noise_multiplier: rho,
        account: account(&PrivacyConfig::new(rho, q, steps, delta)?, opts)?,
    })
}

/// Noise level and accounting inputs of a DP run, fixed before training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePlan {
    pub noise_multiplier: f64,
    /// Set when the multiplier was calibrated to a target.
    pub target_epsilon: Option<f64>,
    /// Std of the noise on the averaged gradient: multiplier * C / B.
    pub averaged_noise_std: f64,
    pub sampling_rate: f64,
    pub planned_steps: u64,
    pub delta: f64,
}

pub fn planned_steps(train_size: usize, opt: &OptimizerConfig, private: bool) -> u64 {
    opt.epochs(private) as u64 * train_size.div_ceil(opt.batch_size) as u64
}

pub fn plan_noise(cfg: &ExperimentConfig, train_size: usize) -> Result<NoisePlan> {
    if train_size == 0 {
        return Err(Error::Data("training split is empty".into()));
    }
    let p = &cfg.privacy;
    let opt = cfg.optimizer_for(true);
    let steps = planned_steps(train_size, &opt, true);
    let q = (opt.batch_size as f64 / train_size as f64).min(1.0);
    let delta = p.delta.unwrap_or(1.0 / train_size as f64);
    let (rho, target) = match p.noise()? {
        NoiseSetting::Multiplier(rho) => (rho, None),
        NoiseSetting::TargetEpsilon(eps) => (calibrate_noise(eps, q, steps, delta, &p.accountant)?, Some(eps)),
    };
    Ok(NoisePlan {
        noise_multiplier: rho,
        target_epsilon: target,
        averaged_noise_std: rho * p.clip_norm / opt.batch_size as f64,
        sampling_rate: q,
        planned_steps: steps,
        delta,
    })
}

// ---------------------------------------------------------------- training

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpentEpsilon {
    pub prv: f64,
    pub rdp: f64,
    pub error_bound: f64,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: String,
    pub model: String,
    pub private: bool,
    pub seed: u64,
    pub config_hash: String,
    pub dims: ModelDims,
    pub optimizer: OptimizerConfig,
    pub clip: Option<ClipConfig>,
    pub noise: Option<NoisePlan>,
    pub steps: u64,
    pub best_epoch: usize,
    pub best_val_micro_f1: f64,
    /// Privacy spent over every step taken; `None` without noise.
    pub epsilon: Option<SpentEpsilon>,
}

pub struct TrainedRun {
    pub summary: RunSummary,
    pub outcome: TrainOutcome,
}

pub fn train_run(cfg: &ExperimentConfig, data: &Dataset, model: &str, private: bool) -> Result<TrainedRun> {
    if private && !cfg.privacy.enabled {
        return Err(Error::config("privacy.enabled", "a private run was requested but privacy is disabled"));
    }
    let variant = cfg.model(model)?;
    let dims = variant.dims(data.vocabulary.len(), data.labels.len());
    let train_set = data.split("train")?;
    let seed = run_seed(cfg.seed, model, private);
    let optimizer = cfg.optimizer_for(private);
    let noise = if private { Some(plan_noise(cfg, train_set.len())?) } else { None };
    let clip = noise
        .as_ref()
        .map(|n| cfg.privacy.clip_config(n.noise_multiplier, rng::child_seed(seed, rng::NOISE)));
    let run_cfg = RunConfig {
        dims,
        optimizer,
        privacy: match (&noise, clip) {
            (Some(n), Some(c)) => Some(DpSettings {
                clip: c,
                delta: n.delta,
                pld: cfg.privacy.accountant,
            }),
            _ => None,
        },
        threshold: cfg.eval.threshold,
        seed,
        schedule: None,
    };
    let outcome = trainer::train(&run_cfg, train_set, data.split("validation")?)?;
    let epsilon = match (&noise, outcome.epsilon) {
        (Some(n), Some(prv)) if outcome.steps > 0 => {
            let pc = PrivacyConfig::new(n.noise_multiplier, n.sampling_rate, outcome.steps, n.delta)?;
            let spend = prv_epsilon(&pc, &cfg.privacy.accountant)?;
            debug_assert_eq!(spend.epsilon, prv);
            let rdp = rdp_epsilon(n.noise_multiplier, n.sampling_rate, outcome.steps, n.delta, &default_orders())?;
            Some(SpentEpsilon {
                prv: spend.epsilon,
                rdp: rdp.epsilon,
                error_bound: spend.error_bound,
            })
        }
        _ => None,
    };
    let best_val = outcome
        .records
        .iter()
        .find(|r| r.epoch == outcome.best_epoch)
        .map_or(0.0, |r| r.val_micro_f1);
    Ok(TrainedRun {
        summary: RunSummary {
            run: run_name(model, private),
            model: model.to_owned(),
            private,
            seed,
            config_hash: cfg.hash(),
            dims,
            optimizer,
            clip,
            noise,
            steps: outcome.steps,
            best_epoch: outcome.best_epoch,
            best_val_micro_f1: best_val,
            epsilon,
        },
        outcome,
    })
}

/// Writes the best checkpoint, the per-epoch log and `run.json`.
pub fn write_run(dir: &Path, run: &TrainedRun) -> Result<()> {
    fs::create_dir_all(dir)?;
    let s = &run.summary;
    let lineage = BTreeMap::from([
        ("config_hash".to_owned(), s.config_hash.clone()),
        ("run".to_owned(), s.run.clone()),
        ("run_seed".to_owned(), s.seed.to_string()),
        ("epoch".to_owned(), s.best_epoch.to_string()),
        ("steps".to_owned(), s.steps.to_string()),
        (
            "streams".to_owned(),
            [rng::INIT, rng::SHUFFLE, rng::POISSON, rng::NOISE].join(","),
        ),
    ]);
    save_checkpoint(
        &Checkpoint {
            dims: s.dims,
            params: run.outcome.best.clone(),
            lineage,
        },
        &dir.join(CHECKPOINT_FILE),
    )?;
    write_jsonl(&dir.join(TRAIN_LOG_FILE), &run.outcome.records)?;
    write_json(&dir.join(RUN_FILE), s)
}

pub fn read_train_log(dir: &Path) -> Result<Vec<TrainRecord>> {
    read_jsonl(&dir.join(TRAIN_LOG_FILE))
}

// ---------------------------------------------------------------- evaluation

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub run: String,
    pub split: String,
    pub threshold: f64,
    pub threshold_tuned: bool,
    pub validation_micro_f1: f64,
    pub metrics: Metrics,
}

pub struct EvaluatedRun {
    pub summary: EvalSummary,
    pub predictions: Vec<PredictionRecord>,
}

/// Evaluates a run's checkpoint on `split`, tuning the threshold on the
/// validation split first when configured.
pub fn evaluate_run(cfg: &ExperimentConfig, data: &Dataset, run_dir: &Path, split: &str) -> Result<EvaluatedRun> {
    let ckpt = load_checkpoint(&run_dir.join(CHECKPOINT_FILE))?;
    let run: RunSummary = read_json(&run_dir.join(RUN_FILE))?;
    if ckpt.dims != run.dims {
        return Err(Error::Checkpoint(format!(
            "{} does not match the dimensions in {}",
            CHECKPOINT_FILE, RUN_FILE
        )));
    }
    if ckpt.dims.vocab_size != data.vocabulary.len() || ckpt.dims.num_labels != data.labels.len() {
        return Err(Error::Data(format!(
            "checkpoint expects vocabulary {} and {} labels; dataset has {} and {}",
            ckpt.dims.vocab_size,
            ckpt.dims.num_labels,
            data.vocabulary.len(),
            data.labels.len()
        )));
    }
    let validation = data.split("validation")?;
    let (threshold, validation_f1) = if cfg.eval.tune_threshold {
        let probs = trainer::probabilities(&ckpt.params, &ckpt.dims, validation)?;
        let gold: Vec<Vec<u8>> = validation.iter().map(|n| n.labels.clone()).collect();
        tune_threshold(&probs, &gold, &threshold_grid())?
    } else {
        let t = cfg.eval.threshold;
        (t, trainer::evaluate(&ckpt.params, &ckpt.dims, validation, t)?.metrics.micro_f1)
    };
    let eval = trainer::evaluate(&ckpt.params, &ckpt.dims, data.split(split)?, threshold)?;
    Ok(EvaluatedRun {
        summary: EvalSummary {
            run: run.run,
            split: split.to_owned(),
            threshold,
            threshold_tuned: cfg.eval.tune_threshold,
            validation_micro_f1: validation_f1,
            metrics: eval.metrics,
        },
        predictions: eval.predictions,
    })
}

pub fn write_evaluation(dir: &Path, eval: &EvaluatedRun) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join(METRICS_FILE), &eval.summary)?;
    write_jsonl(&dir.join(PREDICTIONS_FILE), &eval.predictions)
}

// ---------------------------------------------------------------- fairness

pub fn audit_predictions(predictions: &[PredictionRecord], data: &Dataset) -> Result<FairnessAudit> {
    let notes: Vec<LabeledNote> = data.all_notes().cloned().collect();
    audit(predictions, &notes)
}

pub fn render_fairness(blocks: &[(&str, bool, &FairnessAudit)]) -> String {
    let mut out = String::new();
    for (title, pick) in [
        ("Gender", (|a: &FairnessAudit| &a.gender) as fn(&FairnessAudit) -> &crate::fairness::GroupReport),
        ("Ethnicity", |a: &FairnessAudit| &a.ethnicity),
    ] {
        let tb: Vec<TableBlock<'_>> = blocks
            .iter()
            .map(|(model, dp, a)| TableBlock {
                model,
                dp: *dp,
                report: pick(a),
            })
            .collect();
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(title);
        out.push('\n');
        out.push_str(&render_table(&tb));
    }
    out
}

pub fn write_fairness(dir: &Path, model: &str, private: bool, audit: &FairnessAudit) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join(FAIRNESS_JSON), audit)?;
    fs::write(dir.join(FAIRNESS_TXT), render_fairness(&[(model, private, audit)]))?;
    Ok(())
}

// ---------------------------------------------------------------- noise conventions

/// Reference setting whose noise parameterization is ambiguous: a noise value
/// of 0.05 with clip 0.1, batch 32, 8066 training notes, 20 epochs and a
/// reported epsilon of 9.97.
pub mod reference {
    pub const TRAIN_SIZE: usize = 8066;
    pub const BATCH_SIZE: usize = 32;
    pub const EPOCHS: usize = 20;
    pub const NOISE: f64 = 0.05;
    pub const CLIP_NORM: f64 = 0.1;
    pub const EPSILON: f64 = 9.97;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReading {
    pub reading: String,
    pub noise_multiplier: f64,
    pub averaged_noise_std: f64,
    pub epsilon_prv: f64,
    pub epsilon_rdp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConventionCheck {
    pub train_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub steps: u64,
    pub sampling_rate: f64,
    pub delta: f64,
    pub clip_norm: f64,
    pub stated_noise: f64,
    pub stated_epsilon: f64,
    /// Sum reading, averaged reading, and the multiplier matching the stated epsilon.
    pub readings: Vec<NoiseReading>,
}

pub fn noise_convention_check(opts: &PldOptions) -> Result<NoiseConventionCheck> {
    use reference::*;
    let steps = (EPOCHS * TRAIN_SIZE.div_ceil(BATCH_SIZE)) as u64;
    let q = BATCH_SIZE as f64 / TRAIN_SIZE as f64;
    let delta = 1.0 / TRAIN_SIZE as f64;
    let reading = |name: &str, rho: f64| -> Result<NoiseReading> {
        let rec = account(&PrivacyConfig::new(rho, q, steps, delta)?, opts)?;
        Ok(NoiseReading {
            reading: name.to_owned(),
            noise_multiplier: rho,
            averaged_noise_std: rho * CLIP_NORM / BATCH_SIZE as f64,
            epsilon_prv: rec.prv.epsilon,
            epsilon_rdp: rec.rdp.epsilon,
        })
    };
    let averaged = crate::accountant::noise_multiplier_from_averaged_std(NOISE, CLIP_NORM, BATCH_SIZE as f64);
    let matched = calibrate_noise(EPSILON, q, steps, delta, opts)?;
    Ok(NoiseConventionCheck {
        train_size: TRAIN_SIZE,
        batch_size: BATCH_SIZE,
        epochs: EPOCHS,
        steps,
        sampling_rate: q,
        delta,
        clip_norm: CLIP_NORM,
        stated_noise: NOISE,
        stated_epsilon: EPSILON,
        readings: vec![
            reading("noise is the multiplier on the clipped sum", NOISE)?,
            reading("noise is the std added to the averaged gradient", averaged)?,
            reading("multiplier matching the stated epsilon", matched)?,
        ],
    })
}

// ---------------------------------------------------------------- reproduce

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: String,
    pub private: bool,
    pub noise_multiplier: Option<f64>,
    pub averaged_noise_std: Option<f64>,
    pub epsilon: Option<SpentEpsilon>,
    pub steps: u64,
    pub best_epoch: usize,
    pub threshold: f64,
    pub validation_micro_f1: f64,
    pub test: Metrics,
    pub fairness: FairnessAudit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapChange {
    pub attribute: String,
    pub metric: String,
    pub non_dp: Option<f64>,
    pub dp: Option<f64>,
    /// DP minus non-DP largest pairwise gap.
    pub change: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub model: String,
    pub non_dp: RunResult,
    pub dp: RunResult,
    /// Non-DP minus DP test micro-F1.
    pub f1_drop: f64,
    pub gap_changes: Vec<GapChange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceReport {
    pub seed: u64,
    pub config_hash: String,
    pub corpus: CorpusSummary,
    pub models: Vec<ModelComparison>,
    pub noise_conventions: NoiseConventionCheck,
}

fn gap_changes(non_dp: &FairnessAudit, dp: &FairnessAudit) -> Vec<GapChange> {
    let mut out = Vec::new();
    for (attr, a, b) in [
        ("gender", &non_dp.gender, &dp.gender),
        ("ethnicity", &non_dp.ethnicity, &dp.ethnicity),
    ] {
        for metric in METRIC_NAMES {
            let x = a.max_gap.get(metric).copied();
            let y = b.max_gap.get(metric).copied();
            out.push(GapChange {
                attribute: attr.to_owned(),
                metric: metric.to_owned(),
                non_dp: x,
                dp: y,
                change: x.zip(y).map(|(x, y)| crate::fairness::round_half_even(y - x, crate::fairness::DECIMALS)),
            });
        }
    }
    out
}

fn manifest(cfg: &ExperimentConfig, command: &str) -> Manifest {
    Manifest::new(command, cfg.seed, &cfg.hash())
}

/// Train, evaluate and audit one run below `runs_dir`.
fn reproduce_run(cfg: &ExperimentConfig, data: &Dataset, runs_dir: &Path, model: &str, private: bool) -> Result<RunResult> {
    let dir = runs_dir.join(run_name(model, private));
    let trained = train_run(cfg, data, model, private)?;
    write_run(&dir, &trained)?;
    manifest(cfg, "train")
        .with_parameter("model", model)
        .with_parameter("private", private)
        .write_into(&dir)?;

    let eval = evaluate_run(cfg, data, &dir, "test")?;
    let eval_dir = dir.join(EVALUATION_DIR);
    write_evaluation(&eval_dir, &eval)?;
    manifest(cfg, "evaluate").with_parameter("split", "test").write_into(&eval_dir)?;

    let fairness = audit_predictions(&eval.predictions, data)?;
    let fair_dir = dir.join(FAIRNESS_DIR);
    write_fairness(&fair_dir, model, private, &fairness)?;
    manifest(cfg, "audit-fairness").write_into(&fair_dir)?;

    let s = trained.summary;
    Ok(RunResult {
        run: s.run,
        private,
        noise_multiplier: s.noise.as_ref().map(|n| n.noise_multiplier),
        averaged_noise_std: s.noise.as_ref().map(|n| n.averaged_noise_std),
        epsilon: s.epsilon,
        steps: s.steps,
        best_epoch: s.best_epoch,
        threshold: eval.summary.threshold,
        validation_micro_f1: eval.summary.validation_micro_f1,
        test: eval.summary.metrics,
        fairness,
    })
}

/// Generate, preprocess, train both modes of every model, evaluate, audit and
/// write the comparison report. Output is staged and promoted to `out` only
/// on success.
pub fn reproduce(cfg: &ExperimentConfig, out: &Path) -> Result<ReproduceReport> {
    cfg.validate()?;
    if cfg.models.len() != 2 {
        return Err(Error::config("models", "reproduce compares exactly two model variants"));
    }
    if !cfg.privacy.enabled {
        return Err(Error::config("privacy.enabled", "reproduce needs privacy enabled"));
    }
    let staged = Staged::new(out)?;
    let root = staged.path().to_path_buf();

    let raw_dir = root.join(RAW_DIR);
    let records = generate_raw(cfg)?;
    write_raw(&raw_dir, &records)?;
    manifest(cfg, "generate-data").write_into(&raw_dir)?;

    let data_dir = root.join(DATA_DIR);
    let prepared = preprocess(cfg, records)?;
    let corpus = write_prepared(&data_dir, &prepared)?;
    manifest(cfg, "preprocess").write_into(&data_dir)?;
    drop(prepared);
    let data = Dataset::load(&data_dir)?;

    let runs_dir = root.join(RUNS_DIR);
    let mut models = Vec::new();
    for variant in &cfg.models {
        let non_dp = reproduce_run(cfg, &data, &runs_dir, &variant.name, false)?;
        let dp = reproduce_run(cfg, &data, &runs_dir, &variant.name, true)?;
        models.push(ModelComparison {
            model: variant.name.clone(),
            f1_drop: non_dp.test.micro_f1 - dp.test.micro_f1,
            gap_changes: gap_changes(&non_dp.fairness, &dp.fairness),
            non_dp,
            dp,
        });
    }

    let report = ReproduceReport {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        corpus,
        models,
        noise_conventions: noise_convention_check(&cfg.privacy.accountant)?,
    };
    write_json(&root.join(REPORT_JSON), &report)?;
    fs::write(root.join(REPORT_TXT), render_report(&report))?;
    manifest(cfg, "reproduce").write_into(&root)?;
    staged.commit()?;
    Ok(report)
}

fn opt(x: Option<f64>, prec: usize) -> String {
    x.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.prec$}"))
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, w))| if c == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1)));
            out.push('\n');
        }
    }
    out
}

pub fn render_report(r: &ReproduceReport) -> String {
    let mut s = String::new();
    let c = &r.corpus;
    let _ = writeln!(s, "privcode reproduce report");
    let _ = writeln!(s, "seed {}  config {}", r.seed, r.config_hash);
    let _ = writeln!(
        s,
        "corpus: {} train, {} validation, {} test notes; {} labels; vocabulary {}",
        c.train, c.validation, c.test, c.labels, c.vocab_size
    );

    let _ = writeln!(s, "\nComparison of micro-F1 between models trained with and without DP (test split)\n");
    let mut rows = vec![["Model", "Non-DP F1", "DP F1", "Drop", "Epsilon (PRV)", "Epsilon (RDP)", "Noise mult.", "Avg. noise std"]
        .map(str::to_owned)
        .to_vec()];
    for m in &r.models {
        let eps = m.dp.epsilon.as_ref();
        rows.push(vec![
            m.model.clone(),
            format!("{:.4}", m.non_dp.test.micro_f1),
            format!("{:.4}", m.dp.test.micro_f1),
            format!("{:.4}", m.f1_drop),
            opt(eps.map(|e| e.prv), 3),
            opt(eps.map(|e| e.rdp), 3),
            opt(m.dp.noise_multiplier, 4),
            opt(m.dp.averaged_noise_std, 6),
        ]);
    }
    s.push_str(&aligned(&rows));

    let _ = writeln!(s, "\nLargest pairwise group gap, non-DP vs DP\n");
    let mut rows = vec![["Model", "Attribute", "Metric", "Non-DP", "DP", "Change"].map(str::to_owned).to_vec()];
    for m in &r.models {
        for g in &m.gap_changes {
            rows.push(vec![
                m.model.clone(),
                g.attribute.clone(),
                g.metric.clone(),
                opt(g.non_dp, 2),
                opt(g.dp, 2),
                g.change.map_or_else(|| "n/a".to_owned(), |v| format!("{v:+.2}")),
            ]);
        }
    }
    s.push_str(&aligned(&rows));

    let _ = writeln!(s, "\nPer-group metrics (test split)\n");
    let blocks: Vec<(&str, bool, &FairnessAudit)> = r
        .models
        .iter()
        .flat_map(|m| [(m.model.as_str(), false, &m.non_dp.fairness), (m.model.as_str(), true, &m.dp.fairness)])
        .collect();
    s.push_str(&render_fairness(&blocks));

    let n = &r.noise_conventions;
    let _ = writeln!(
        s,
        "\nNoise convention check: N={} B={} epochs={} (T={}) q={:.6} delta=1/{} C={} noise={} stated epsilon={}\n",
        n.train_size, n.batch_size, n.epochs, n.steps, n.sampling_rate, n.train_size, n.clip_norm, n.stated_noise, n.stated_epsilon
    );
    let mut rows = vec![["Reading", "Noise mult.", "Avg. noise std", "Epsilon (PRV)", "Epsilon (RDP)"]
        .map(str::to_owned)
        .to_vec()];
    for x in &n.readings {
        rows.push(vec![
            x.reading.clone(),
            format!("{:.4}", x.noise_multiplier),
            format!("{:.6}", x.averaged_noise_std),
            format!("{:.3}", x.epsilon_prv),
            format!("{:.3}", x.epsilon_rdp),
        ]);
    }
    s.push_str(&aligned(&rows));
    s
}

/// Standard location of a run directory below an output root.
pub fn run_dir(output_dir: &Path, model: &str, private: bool) -> PathBuf {
    output_dir.join(RUNS_DIR).join(run_name(model, private))
}
