//! `privcode`: data generation, training, evaluation, fairness auditing and
//! privacy accounting for DP label-attention coding experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use privcode_core::config::ExperimentConfig;
use privcode_core::experiment::{self as exp, Dataset};
use privcode_core::io::{read_jsonl, write_json, Manifest, Staged};
use privcode_core::metrics::PredictionRecord;
use privcode_core::{ClipMode, Error, PrivacyConfig};

#[derive(Parser)]
#[command(name = "privcode", version, about = "Differentially private ICD coding experiments")]
struct Cli {
    /// Experiment config (TOML). Defaults to the built-in reproduce preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `paths.output_dir`.
    #[arg(long, global = true, env = "PRIVCODE_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus to <out>/raw.
    GenerateData,
    /// Build labels, splits and vocabulary into the data directory.
    Preprocess {
        /// Raw records (JSON lines). Defaults to <out>/raw/records.jsonl.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train one model variant.
    Train {
        #[command(flatten)]
        run: RunSelect,
        #[command(flatten)]
        dp: DpFlags,
    },
    /// Evaluate a trained run and write predictions.
    Evaluate {
        #[command(flatten)]
        run: RunSelect,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Per-group metrics and gaps for a predictions file.
    AuditFairness {
        /// Audit this model's run (with --non-private for the non-DP run).
        #[arg(long, required_unless_present = "predictions", conflicts_with = "predictions")]
        model: Option<String>,
        #[arg(long, requires = "model")]
        non_private: bool,
        /// Audit an arbitrary predictions file instead of a run.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Output directory when auditing a file. Defaults to <out>/fairness.
        #[arg(long, requires = "predictions")]
        out: Option<PathBuf>,
        /// Mark the audited predictions as DP in the table.
        #[arg(long, requires = "predictions")]
        dp: bool,
    },
    /// Epsilon of a noise multiplier under the PRV and RDP accountants.
    Account {
        /// Noise multiplier on the clipped-gradient sum.
        #[arg(long)]
        rho: Option<f64>,
        #[command(flatten)]
        plan: PlanFlags,
    },
    /// Smallest noise multiplier meeting a target epsilon.
    Calibrate {
        #[arg(long)]
        target_epsilon: Option<f64>,
        #[command(flatten)]
        plan: PlanFlags,
    },
    /// Full pipeline: data, both models with and without DP, evaluation,
    /// fairness audit and a comparison report.
    Reproduce,
}

#[derive(Args)]
struct RunSelect {
    #[arg(long)]
    model: String,
    /// Select the non-DP run.
    #[arg(long, conflicts_with = "private")]
    non_private: bool,
    /// Select the DP run (default).
    #[arg(long)]
    private: bool,
}

impl RunSelect {
    fn private(&self) -> bool {
        !self.non_private
    }
}

#[derive(Args)]
struct DpFlags {
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    target_epsilon: Option<f64>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long, value_parser = parse_clip_mode)]
    clip_mode: Option<ClipMode>,
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args)]
struct PlanFlags {
    /// Sampling rate. Otherwise batch size over training-set size.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Defaults to the preprocessed training split when present.
    #[arg(long)]
    train_size: Option<usize>,
    /// Number of steps. Otherwise epochs times steps per epoch.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Defaults to the config value, then one over the training-set size.
    #[arg(long)]
    delta: Option<f64>,
    /// Report file. Defaults to <out>/accounting/<command>.json.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn parse_clip_mode(s: &str) -> std::result::Result<ClipMode, String> {
    match s {
        "flat" => Ok(ClipMode::Flat),
        "grouped" => Ok(ClipMode::Grouped),
        _ => Err(format!("expected `flat` or `grouped`, got `{s}`")),
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::reproduce_preset(),
    };
    if let Some(d) = &cli.output_dir {
        cfg.paths.output_dir = d.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn apply_dp_flags(cfg: &mut ExperimentConfig, f: &DpFlags) -> Result<()> {
    let p = &mut cfg.privacy;
    match (f.rho, f.target_epsilon) {
        (Some(_), Some(_)) => {
            return Err(Error::config(
                "privacy",
                "--rho and --target-epsilon are mutually exclusive; set exactly one",
            )
            .into())
        }
        (Some(rho), None) => {
            p.noise_multiplier = Some(rho);
            p.target_epsilon = None;
        }
        (None, Some(eps)) => {
            p.target_epsilon = Some(eps);
            p.noise_multiplier = None;
        }
        (None, None) => {}
    }
    if let Some(c) = f.clip_norm {
        p.clip_norm = c;
    }
    if let Some(m) = f.clip_mode {
        p.clip_mode = m;
    }
    if f.delta.is_some() {
        p.delta = f.delta;
    }
    cfg.validate()?;
    Ok(())
}

fn out_dir(cfg: &ExperimentConfig) -> &Path {
    &cfg.paths.output_dir
}

fn manifest(cfg: &ExperimentConfig, command: &str) -> Manifest {
    Manifest::new(command, cfg.seed, &cfg.hash())
}

fn load_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    let dir = cfg.data_dir();
    Dataset::load(&dir).with_context(|| format!("loading dataset from {}", dir.display()))
}

/// Resolved (q, steps, delta) for the accounting commands.
fn resolve_plan(cfg: &ExperimentConfig, f: &PlanFlags) -> Result<(f64, u64, f64)> {
    let train_size = match f.train_size {
        Some(n) => Some(n),
        None => {
            let summary = cfg.data_dir().join(exp::SUMMARY_FILE);
            if summary.exists() {
                let s: exp::CorpusSummary = privcode_core::io::read_json(&summary)?;
                Some(s.train)
            } else {
                None
            }
        }
    };
    let need_n = || Error::config("--train-size", "needed to derive this value; no preprocessed data found");
    let batch = f.batch_size.unwrap_or(cfg.optimizer.batch_size);
    let q = match f.q {
        Some(q) => q,
        None => batch as f64 / train_size.ok_or_else(need_n)? as f64,
    };
    let steps = match f.steps {
        Some(t) => t,
        None => {
            let epochs = f.epochs.unwrap_or_else(|| cfg.optimizer_for(true).epochs(true)) as u64;
            let per_epoch = match train_size {
                Some(n) => n.div_ceil(batch) as u64,
                None if f.q.is_some() => (1.0 / q).ceil() as u64,
                None => return Err(need_n().into()),
            };
            epochs * per_epoch
        }
    };
    let delta = match f.delta.or(cfg.privacy.delta) {
        Some(d) => d,
        None => 1.0 / train_size.ok_or_else(|| Error::config("--delta", "set --delta or --train-size"))? as f64,
    };
    Ok((q, steps, delta))
}

fn write_report(cfg: &ExperimentConfig, path: Option<&Path>, name: &str, value: &serde_json::Value) -> Result<PathBuf> {
    let path = match path {
        Some(p) => p.to_path_buf(),
        None => out_dir(cfg).join("accounting").join(format!("{name}.json")),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_json(&path, value)?;
    Ok(path)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    match &cli.command {
        Command::GenerateData => {
            let target = out_dir(&cfg).join(exp::RAW_DIR);
            std::fs::create_dir_all(out_dir(&cfg))?;
            let staged = Staged::new(&target)?;
            let records = exp::generate_raw(&cfg)?;
            exp::write_raw(staged.path(), &records)?;
            manifest(&cfg, "generate-data").write_into(staged.path())?;
            staged.commit()?;
            println!("wrote {} records to {}", records.len(), target.display());
        }
        Command::Preprocess { input } => {
            let input = input
                .clone()
                .unwrap_or_else(|| out_dir(&cfg).join(exp::RAW_DIR).join(exp::RECORDS_FILE));
            let records = exp::read_raw(&input)?;
            let prepared = exp::preprocess(&cfg, records)?;
            let target = cfg.data_dir();
            if let Some(parent) = target.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let staged = Staged::new(&target)?;
            let s = exp::write_prepared(staged.path(), &prepared)?;
            manifest(&cfg, "preprocess").write_into(staged.path())?;
            staged.commit()?;
            println!(
                "{} train / {} validation / {} test notes, {} labels, vocabulary {} -> {}",
                s.train,
                s.validation,
                s.test,
                s.labels,
                s.vocab_size,
                target.display()
            );
        }
        Command::Train { run, dp } => {
            apply_dp_flags(&mut cfg, dp)?;
            let private = run.private();
            let data = load_data(&cfg)?;
            let target = exp::run_dir(out_dir(&cfg), &run.model, private);
            std::fs::create_dir_all(target.parent().expect("run dir has a parent"))?;
            let trained = exp::train_run(&cfg, &data, &run.model, private)?;
            let staged = Staged::new(&target)?;
            exp::write_run(staged.path(), &trained)?;
            manifest(&cfg, "train")
                .with_parameter("model", &run.model)
                .with_parameter("private", private)
                .write_into(staged.path())?;
            staged.commit()?;
            let s = &trained.summary;
            let eps = s
                .epsilon
                .as_ref()
                .map_or_else(|| "none".to_owned(), |e| format!("{:.3} (RDP {:.3})", e.prv, e.rdp));
            println!(
                "{}: {} steps, best epoch {} (validation micro-F1 {:.4}), epsilon {} -> {}",
                s.run,
                s.steps,
                s.best_epoch,
                s.best_val_micro_f1,
                eps,
                target.display()
            );
        }
        Command::Evaluate { run, split } => {
            let data = load_data(&cfg)?;
            let dir = exp::run_dir(out_dir(&cfg), &run.model, run.private());
            let eval = exp::evaluate_run(&cfg, &data, &dir, split)?;
            let staged = Staged::new(&dir.join(exp::EVALUATION_DIR))?;
            exp::write_evaluation(staged.path(), &eval)?;
            manifest(&cfg, "evaluate")
                .with_parameter("split", split)
                .write_into(staged.path())?;
            let target = staged.commit()?;
            let m = &eval.summary.metrics;
            println!(
                "{} on {}: micro-F1 {:.4}, macro-F1 {:.4}, threshold {} -> {}",
                eval.summary.run,
                split,
                m.micro_f1,
                m.macro_f1,
                eval.summary.threshold,
                target.display()
            );
        }
        Command::AuditFairness {
            model,
            non_private,
            predictions,
            out,
            dp,
        } => {
            let data = load_data(&cfg)?;
            let (pred_path, target, label, private) = match (model, predictions) {
                (Some(m), _) => {
                    let dir = exp::run_dir(out_dir(&cfg), m, !non_private);
                    (
                        dir.join(exp::EVALUATION_DIR).join(exp::PREDICTIONS_FILE),
                        dir.join(exp::FAIRNESS_DIR),
                        m.clone(),
                        !non_private,
                    )
                }
                (None, Some(p)) => {
                    let label = p.file_stem().map_or("predictions".into(), |s| s.to_string_lossy().into_owned());
                    let target = out.clone().unwrap_or_else(|| out_dir(&cfg).join(exp::FAIRNESS_DIR));
                    (p.clone(), target, label, *dp)
                }
                (None, None) => unreachable!("clap requires one of --model or --predictions"),
            };
            let preds: Vec<PredictionRecord> = read_jsonl(&pred_path)?;
            let audit = exp::audit_predictions(&preds, &data)?;
            if let Some(parent) = target.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            let staged = Staged::new(&target)?;
            exp::write_fairness(staged.path(), &label, private, &audit)?;
            manifest(&cfg, "audit-fairness").write_into(staged.path())?;
            staged.commit()?;
            emit(&exp::render_fairness(&[(&label, private, &audit)]));
        }
        Command::Account { rho, plan } => {
            let rho = match (*rho, cfg.privacy.noise_multiplier) {
                (Some(r), _) | (None, Some(r)) => r,
                (None, None) => {
                    return Err(Error::config("privacy.noise_multiplier", "pass --rho or set it in the config").into())
                }
            };
            let (q, steps, delta) = resolve_plan(&cfg, plan)?;
            let record = exp::account(&PrivacyConfig::new(rho, q, steps, delta)?, &cfg.privacy.accountant)?;
            write_report(&cfg, plan.report.as_deref(), "account", &serde_json::to_value(&record)?)?;
            println!("{}", serde_json::to_string(&record)?);
        }
        Command::Calibrate { target_epsilon, plan } => {
            let target = target_epsilon
                .or(cfg.privacy.target_epsilon)
                .ok_or_else(|| Error::config("privacy.target_epsilon", "pass --target-epsilon or set it in the config"))?;
            let (q, steps, delta) = resolve_plan(&cfg, plan)?;
            let record = exp::calibrate(target, q, steps, delta, &cfg.privacy.accountant)?;
            write_report(&cfg, plan.report.as_deref(), "calibrate", &serde_json::to_value(&record)?)?;
            println!("{}", serde_json::to_string(&record)?);
        }
        Command::Reproduce => {
            let out = out_dir(&cfg).to_path_buf();
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            let report = exp::reproduce(&cfg, &out)?;
            emit(&format!("{}\nartifacts in {}\n", exp::render_report(&report), out.display()));
        }
    }
    Ok(())
}

/// Writes to stdout, tolerating a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Config { .. } | Error::InvalidArgument(_)) => 2,
        Some(Error::Unattainable(_)) => 3,
        Some(Error::Data(_) | Error::Checkpoint(_)) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
