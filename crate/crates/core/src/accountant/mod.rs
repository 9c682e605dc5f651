//! Privacy accounting for DP-SGD.
//!
//! Noise is parameterised by the *noise multiplier* `rho`: the standard
//! deviation of the Gaussian noise added to the sum of clipped per-example
//! gradients, in units of the clip norm `C`. A training step is then the
//! Poisson-subsampled Gaussian mechanism with sensitivity 1 and noise std `rho`.
//! Implementations that add `Normal(0, sigma^2)` after averaging a batch of `B`
//! correspond to `rho = sigma * B / C` (see [`noise_multiplier_from_averaged_std`]).
//!
//! Two accountants are provided. The privacy-loss-distribution accountant
//! ([`subsampled_gaussian_pld`], [`compose`], [`epsilon_from_pld`]) is tight;
//! the Rényi accountant ([`rdp_epsilon`]) is looser and serves as an
//! independent upper bound.

mod pld;
mod rdp;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

pub use pld::{
    compose, convolve, epsilon_from_pld, subsampled_delta, subsampled_gaussian_pld, PldOptions,
    PrivacyLossDistribution,
};
pub use rdp::{default_orders, rdp_epsilon, subsampled_gaussian_rdp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyConfig {
    pub noise_multiplier: f64,
    pub sampling_rate: f64,
    pub steps: u64,
    pub delta: f64,
}

impl PrivacyConfig {
    pub fn new(noise_multiplier: f64, sampling_rate: f64, steps: u64, delta: f64) -> Result<Self> {
        let cfg = Self {
            noise_multiplier,
            sampling_rate,
            steps,
            delta,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_rho(self.noise_multiplier)?;
        check_rate(self.sampling_rate)?;
        if self.steps == 0 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        check_delta(self.delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccountantKind {
    Prv,
    Rdp,
}

impl std::fmt::Display for AccountantKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AccountantKind::Prv => f.write_str("prv"),
            AccountantKind::Rdp => f.write_str("rdp"),
        }
    }
}

/// An `(epsilon, delta)` guarantee.
///
/// `error_bound` is the slack (in epsilon units) that discretization may have
/// added on top of the exact value; the reported epsilon already includes it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpend {
    pub epsilon: f64,
    pub delta: f64,
    pub error_bound: f64,
    pub accountant: AccountantKind,
}

pub(crate) fn check_rho(rho: f64) -> Result<()> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise multiplier must be positive, got {rho}"
        )));
    }
    Ok(())
}

pub(crate) fn check_rate(q: f64) -> Result<()> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sampling rate must lie in (0, 1], got {q}"
        )));
    }
    Ok(())
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    Ok(())
}

/// Standard normal CDF.
pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Hockey-stick divergence `delta(epsilon)` of the Gaussian mechanism with
/// sensitivity 1 and noise std `rho`.
pub fn gaussian_mechanism_delta(epsilon: f64, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok(gaussian_delta_unchecked(epsilon, rho))
}

pub(crate) fn gaussian_delta_unchecked(epsilon: f64, rho: f64) -> f64 {
    if epsilon == f64::INFINITY {
        return 0.0;
    }
    if epsilon == f64::NEG_INFINITY {
        return 1.0;
    }
    let a = 0.5 / rho;
    let b = epsilon * rho;
    let upper = normal_cdf(a - b);
    let lower = normal_cdf(-a - b);
    // exp(eps) * Phi(-a-b) underflows to 0 * inf for huge eps; both terms vanish there.
    let scaled = if lower == 0.0 { 0.0 } else { epsilon.exp() * lower };
    (upper - scaled).clamp(0.0, 1.0)
}

/// PRV epsilon for `cfg` using the default grid.
pub fn prv_epsilon(cfg: &PrivacyConfig, opts: &PldOptions) -> Result<PrivacySpend> {
    cfg.validate()?;
    let step = subsampled_gaussian_pld(cfg.noise_multiplier, cfg.sampling_rate, opts)?;
    let composed = compose(&step, cfg.steps, opts)?;
    epsilon_from_pld(&composed, cfg.delta)
}

/// Smallest noise multiplier (to relative tolerance 1e-3) whose PRV epsilon
/// after `steps` compositions does not exceed `target_epsilon`.
pub fn calibrate_noise(
    target_epsilon: f64,
    sampling_rate: f64,
    steps: u64,
    delta: f64,
    opts: &PldOptions,
) -> Result<f64> {
    const RHO_MIN: f64 = 1e-2;
    const RHO_MAX: f64 = 1e2;
    const REL_TOL: f64 = 1e-3;

    if !(target_epsilon.is_finite() && target_epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "target epsilon must be positive, got {target_epsilon}"
        )));
    }
    check_rate(sampling_rate)?;
    check_delta(delta)?;
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }

    // Grids that blow past the size limit belong to tiny noise levels, whose
    // epsilon is certainly above any sensible target.
    let meets = |rho: f64| -> Result<bool> {
        let cfg = PrivacyConfig::new(rho, sampling_rate, steps, delta)?;
        match prv_epsilon(&cfg, opts) {
            Ok(spend) => Ok(spend.epsilon <= target_epsilon),
            Err(Error::ResourceLimit(_)) | Err(Error::Unattainable(_)) => Ok(false),
            Err(e) => Err(e),
        }
    };

    if !meets(RHO_MAX)? {
        return Err(Error::Unattainable(format!(
            "epsilon {target_epsilon} not reachable with noise multiplier up to {RHO_MAX}"
        )));
    }
    let mut hi = RHO_MAX;
    let mut lo;
    loop {
        let candidate = (hi / 2.0).max(RHO_MIN);
        if candidate == hi {
            return Ok(hi);
        }
        if meets(candidate)? {
            hi = candidate;
        } else {
            lo = candidate;
            break;
        }
    }
    // Invariant: `hi` meets the target, `lo` does not.
    while hi / lo - 1.0 > REL_TOL {
        let mid = (lo * hi).sqrt();
        if meets(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Noise multiplier for implementations that add `Normal(0, sigma^2)` to the
/// *averaged* clipped gradient of a batch of `batch_size` with clip norm `clip_norm`.
pub fn noise_multiplier_from_averaged_std(sigma: f64, clip_norm: f64, batch_size: f64) -> f64 {
    sigma * batch_size / clip_norm
}
