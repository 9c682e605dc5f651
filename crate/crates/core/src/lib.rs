//! Differentially private label-attention medical coding.
//!
//! The crate is organised around the pieces of a DP-SGD experiment:
//!
//! * [`accountant`]: privacy-loss-distribution (PRV) and RDP accounting for the
//!   Poisson-subsampled Gaussian mechanism, plus noise calibration.
//! * [`privatizer`]: per-example clipping (flat and grouped), ghost norms and
//!   Gaussian noising of a batch gradient.
//! * [`model`]: a small label-attention (LAAT) classifier with exact manual
//!   gradients and a binary checkpoint format.
//! * [`trainer`]: AdamW with warmup/linear decay, DP and non-DP loops, evaluation.
//! * [`datagen`]: note preprocessing, label-space construction, patient-level
//!   splitting and a seeded synthetic corpus generator.
//! * [`fairness`]: per-group micro metrics and pairwise gaps.
//! * [`io`]: JSON-lines files, staged output directories and manifests.
//! * [`experiment`]: the pipelines behind the `privcode` command line.

pub mod accountant;
pub mod config;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod fairness;
pub mod io;
pub mod metrics;
pub mod model;
pub mod privatizer;
pub mod rng;
pub mod trainer;

pub use accountant::{
    calibrate_noise, compose, epsilon_from_pld, gaussian_mechanism_delta, rdp_epsilon,
    subsampled_gaussian_pld, AccountantKind, PldOptions, PrivacyConfig, PrivacyLossDistribution,
    PrivacySpend,
};
pub use config::ExperimentConfig;
pub use datagen::{CorpusSpec, Ethnicity, Gender, LabeledNote, RawRecord};
pub use error::{Error, Result};
pub use fairness::GroupReport;
pub use metrics::ConfusionCounts;
pub use model::{ForwardCache, ModelDims, ModelParams};
pub use privatizer::{ClipConfig, ClipMode, GradientSet, ParamGroupSpec, PerExampleGrads};
pub use trainer::{AdamWState, OptimizerConfig, TrainRecord};
