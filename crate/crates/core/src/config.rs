//! Experiment configuration file (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::accountant::PldOptions;
use crate::datagen::{CorpusSpec, PreprocessOptions};
use crate::error::{Error, Result};
use crate::model::ModelDims;
use crate::privatizer::{ClipConfig, ClipMode};
use crate::trainer::OptimizerConfig;

/// Built-in configuration used by `reproduce` when no file is given.
pub const REPRODUCE_PRESET: &str = include_str!("../../../configs/reproduce.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Preprocessed data directory; relative paths resolve against the output directory.
    pub data_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            output_dir: PathBuf::from("privcode-out"),
        }
    }
}

/// Architecture of one model variant; vocabulary size and label count come
/// from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelVariant {
    pub name: String,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub segment_len: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
}

fn default_max_len() -> usize {
    512
}

impl ModelVariant {
    pub fn dims(&self, vocab_size: usize, num_labels: usize) -> ModelDims {
        ModelDims {
            vocab_size,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            attention_dim: self.attention_dim,
            num_labels,
            segment_len: self.segment_len,
            max_len: self.max_len,
        }
    }
}

fn default_models() -> Vec<ModelVariant> {
    vec![
        ModelVariant {
            name: "laat-small".into(),
            embed_dim: 32,
            hidden_dim: 32,
            attention_dim: 32,
            segment_len: 32,
            max_len: 512,
        },
        ModelVariant {
            name: "laat-wide".into(),
            embed_dim: 48,
            hidden_dim: 64,
            attention_dim: 48,
            segment_len: 64,
            max_len: 512,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivacySection {
    pub enabled: bool,
    pub noise_multiplier: Option<f64>,
    pub target_epsilon: Option<f64>,
    /// Defaults to one over the training-set size.
    pub delta: Option<f64>,
    pub clip_norm: f64,
    pub clip_mode: ClipMode,
    /// Optional learning rate and epoch count for DP runs.
    pub base_lr: Option<f64>,
    pub max_epochs: Option<usize>,
    pub accountant: PldOptions,
}

impl Default for PrivacySection {
    fn default() -> Self {
        Self {
            enabled: true,
            noise_multiplier: None,
            target_epsilon: Some(8.0),
            delta: None,
            clip_norm: 0.1,
            clip_mode: ClipMode::Grouped,
            base_lr: None,
            max_epochs: None,
            accountant: PldOptions::default(),
        }
    }
}

/// How the DP noise level is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSetting {
    Multiplier(f64),
    TargetEpsilon(f64),
}

impl PrivacySection {
    pub fn noise(&self) -> Result<NoiseSetting> {
        match (self.noise_multiplier, self.target_epsilon) {
            (Some(_), Some(_)) => Err(Error::config(
                "privacy",
                "noise_multiplier and target_epsilon are mutually exclusive; set exactly one",
            )),
            (None, None) => Err(Error::config(
                "privacy",
                "one of noise_multiplier or target_epsilon must be set",
            )),
            (Some(rho), None) => Ok(NoiseSetting::Multiplier(rho)),
            (None, Some(eps)) => Ok(NoiseSetting::TargetEpsilon(eps)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.enabled {
            return Ok(());
        }
        match self.noise()? {
            NoiseSetting::Multiplier(rho) if !(rho.is_finite() && rho >= 0.0) => {
                return Err(Error::config("privacy.noise_multiplier", "must be non-negative"));
            }
            NoiseSetting::TargetEpsilon(e) if !(e.is_finite() && e > 0.0) => {
                return Err(Error::config("privacy.target_epsilon", "must be positive"));
            }
            _ => {}
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(Error::config("privacy.delta", "must lie in (0, 1)"));
            }
        }
        if !(self.clip_norm.is_finite() && self.clip_norm > 0.0) {
            return Err(Error::config("privacy.clip_norm", "must be positive"));
        }
        if let Some(lr) = self.base_lr {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Error::config("privacy.base_lr", "must be positive"));
            }
        }
        if self.max_epochs == Some(0) {
            return Err(Error::config("privacy.max_epochs", "must be positive"));
        }
        self.accountant
            .validate()
            .map_err(|e| Error::config("privacy.accountant", e.to_string()))
    }

    /// Clip settings for a given noise multiplier.
    pub fn clip_config(&self, noise_multiplier: f64, rng_seed: u64) -> ClipConfig {
        ClipConfig {
            clip_norm: self.clip_norm,
            mode: self.clip_mode,
            noise_multiplier,
            rng_seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub threshold: f64,
    /// Pick the threshold on the validation split from 0.1, 0.2, ..., 0.9.
    pub tune_threshold: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            tune_threshold: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub datagen: CorpusSpec,
    pub preprocess: PreprocessOptions,
    pub models: Vec<ModelVariant>,
    pub optimizer: OptimizerConfig,
    pub privacy: PrivacySection,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: PathsConfig::default(),
            datagen: CorpusSpec::default(),
            preprocess: PreprocessOptions::default(),
            models: default_models(),
            optimizer: OptimizerConfig::default(),
            privacy: PrivacySection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates TOML; errors name the offending key path.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let message = e.inner().message().trim().to_owned();
            Error::config(if path == "." { "<document>".to_owned() } else { path }, message)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("<file>", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn reproduce_preset() -> Self {
        Self::from_toml_str(REPRODUCE_PRESET).expect("built-in preset is valid")
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<document>", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.datagen.validate()?;
        let p = &self.preprocess;
        if p.top_k < 2 {
            return Err(Error::config("preprocess.top_k", "at least 2 labels are required"));
        }
        if p.ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) || (p.ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("preprocess.ratios", "must be positive and sum to 1"));
        }
        if p.max_vocab.is_some_and(|m| m < 2) {
            return Err(Error::config("preprocess.max_vocab", "must leave room for at least one token"));
        }
        if self.models.is_empty() {
            return Err(Error::config("models", "at least one model variant is required"));
        }
        for (i, m) in self.models.iter().enumerate() {
            let key = format!("models[{i}]");
            if m.name.is_empty() || !m.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(Error::config(format!("{key}.name"), "must be non-empty and use only [A-Za-z0-9_-]"));
            }
            if self.models[..i].iter().any(|o| o.name == m.name) {
                return Err(Error::config(format!("{key}.name"), format!("duplicate model name `{}`", m.name)));
            }
            m.dims(2, 2).validate().map_err(|e| match e {
                Error::Config { key: k, message } => Error::config(k.replacen("model", &key, 1), message),
                other => other,
            })?;
        }
        self.optimizer.validate()?;
        self.privacy.validate()?;
        if !(self.eval.threshold > 0.0 && self.eval.threshold < 1.0) {
            return Err(Error::config("eval.threshold", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn model(&self, name: &str) -> Result<&ModelVariant> {
        self.models
            .iter()
            .find(|m| m.name == name)
            .ok_or_else(|| Error::config("models", format!("no model variant named `{name}`")))
    }

    /// Optimizer settings for a run, with DP overrides applied.
    pub fn optimizer_for(&self, private: bool) -> OptimizerConfig {
        let mut opt = self.optimizer;
        if private {
            if let Some(lr) = self.privacy.base_lr {
                opt.base_lr = lr;
            }
            if self.privacy.max_epochs.is_some() {
                opt.max_epochs = self.privacy.max_epochs;
            }
        }
        opt
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded. Paths are left
    /// out: where a run writes does not change what it computes.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.paths = PathsConfig::default();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// Data directory, resolved against the output directory when relative.
    pub fn data_dir(&self) -> PathBuf {
        if self.paths.data_dir.is_absolute() {
            self.paths.data_dir.clone()
        } else {
            self.paths.output_dir.join(&self.paths.data_dir)
        }
    }
}
