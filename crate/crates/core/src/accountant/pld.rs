//! Discretized privacy loss distributions for the subsampled Gaussian mechanism.
//!
//! Losses live on the grid `{k * mesh : k integer}`. A distribution stores a
//! contiguous run of masses starting at grid index `origin_index`, plus three
//! scalar masses:
//!
//! * `truncated_mass_plus`: mass above the grid, charged as an infinite loss;
//! * `truncated_mass_minus`: mass at or below the grid origin, charged as if it
//!   sat exactly at the origin;
//! * `infinity_mass`: mass with genuinely infinite loss.
//!
//! The single-step distribution is built by evaluating the exact hockey-stick
//! curve `delta(eps)` at every grid point and interpolating linearly in
//! `exp(eps)` between them. The interpolated curve lies above the exact one, so
//! the discrete pair dominates the continuous one and every epsilon read off a
//! composition is an upper bound.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{check_delta, check_rate, check_rho, gaussian_delta_unchecked};
use super::{AccountantKind, PrivacySpend};
use crate::error::{Error, Result};

/// Largest truncated mass tolerated in a single-step distribution. Any
/// plausible delta target is at least 1e-9, and truncation may eat at most a
/// tenth of it.
const MAX_TRUNCATED_MASS: f64 = 1e-10;
const NORMALIZATION_TOL: f64 = 1e-9;
/// Below this many multiply-adds, convolve directly instead of by FFT.
const DIRECT_CONVOLUTION_LIMIT: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PldOptions {
    pub mesh: f64,
    /// Per-step mass allowed outside the grid on each side.
    pub tail_bound: f64,
    pub max_grid_len: usize,
    /// Tail mass trimmed after each convolution.
    pub trim_mass: f64,
}

impl Default for PldOptions {
    fn default() -> Self {
        Self {
            mesh: 1e-3,
            tail_bound: 1e-15,
            max_grid_len: 1 << 24,
            trim_mass: 1e-12,
        }
    }
}

impl PldOptions {
    pub fn with_mesh(mesh: f64) -> Self {
        Self {
            mesh,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mesh.is_finite() && self.mesh > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "mesh must be positive, got {}",
                self.mesh
            )));
        }
        if !(self.tail_bound > 0.0) || self.tail_bound > MAX_TRUNCATED_MASS {
            return Err(Error::GridTooSmall(format!(
                "tail bound {} would truncate more than {MAX_TRUNCATED_MASS}",
                self.tail_bound
            )));
        }
        if !(self.trim_mass >= 0.0) || self.trim_mass > MAX_TRUNCATED_MASS {
            return Err(Error::InvalidArgument(format!(
                "trim mass must lie in [0, {MAX_TRUNCATED_MASS}], got {}",
                self.trim_mass
            )));
        }
        if self.max_grid_len < 2 {
            return Err(Error::InvalidArgument("max grid length must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLossDistribution {
    origin_index: i64,
    mesh: f64,
    masses: Vec<f64>,
    truncated_mass_plus: f64,
    truncated_mass_minus: f64,
    infinity_mass: f64,
    compositions: u64,
}

impl PrivacyLossDistribution {
    /// Builds a distribution from raw parts, checking the type invariants.
    pub fn from_parts(
        origin_index: i64,
        mesh: f64,
        masses: Vec<f64>,
        truncated_mass_plus: f64,
        truncated_mass_minus: f64,
        infinity_mass: f64,
    ) -> Result<Self> {
        let pld = Self {
            origin_index,
            mesh,
            masses,
            truncated_mass_plus,
            truncated_mass_minus,
            infinity_mass,
            compositions: 1,
        };
        pld.validate()?;
        Ok(pld)
    }

    /// All mass at loss `index * mesh`.
    pub fn point_mass(index: i64, mesh: f64) -> Result<Self> {
        Self::from_parts(index, mesh, vec![1.0], 0.0, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mesh.is_finite() && self.mesh > 0.0) {
            return Err(Error::InvalidArgument(format!("mesh must be positive, got {}", self.mesh)));
        }
        if self.masses.is_empty() {
            return Err(Error::InvalidArgument("distribution has no grid points".into()));
        }
        let scalars = [self.truncated_mass_plus, self.truncated_mass_minus, self.infinity_mass];
        if self
            .masses
            .iter()
            .chain(scalars.iter())
            .any(|m| !m.is_finite() || *m < 0.0)
        {
            return Err(Error::InvalidArgument("masses must be finite and non-negative".into()));
        }
        let total = self.total_mass();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidArgument(format!("total mass {total} is not 1")));
        }
        Ok(())
    }

    pub fn origin_index(&self) -> i64 {
        self.origin_index
    }

    pub fn grid_origin(&self) -> f64 {
        self.origin_index as f64 * self.mesh
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn truncated_mass_plus(&self) -> f64 {
        self.truncated_mass_plus
    }

    pub fn truncated_mass_minus(&self) -> f64 {
        self.truncated_mass_minus
    }

    pub fn infinity_mass(&self) -> f64 {
        self.infinity_mass
    }

    /// Number of single-step mechanisms this distribution composes.
    pub fn compositions(&self) -> u64 {
        self.compositions
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn loss_at(&self, i: usize) -> f64 {
        (self.origin_index + i as i64) as f64 * self.mesh
    }

    /// Mass at absolute grid index `index`, including the origin-charged mass.
    pub fn mass_at_index(&self, index: i64) -> f64 {
        let rel = index - self.origin_index;
        if rel < 0 || rel as usize >= self.masses.len() {
            return 0.0;
        }
        let mut m = self.masses[rel as usize];
        if rel == 0 {
            m += self.truncated_mass_minus;
        }
        m
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum::<f64>()
            + self.truncated_mass_plus
            + self.truncated_mass_minus
            + self.infinity_mass
    }

    /// Hockey-stick divergence `delta(eps)` of the discrete pair.
    pub fn delta_at(&self, epsilon: f64) -> f64 {
        let mut delta = self.truncated_mass_plus + self.infinity_mass;
        let origin = self.grid_origin();
        if self.truncated_mass_minus > 0.0 && origin > epsilon {
            delta += self.truncated_mass_minus * -(epsilon - origin).exp_m1();
        }
        // First grid index with loss strictly above epsilon.
        let first = ((epsilon / self.mesh).floor() as i64 + 1 - self.origin_index).max(0) as usize;
        for (i, &m) in self.masses.iter().enumerate().skip(first) {
            let loss = self.loss_at(i);
            if loss > epsilon && m > 0.0 {
                delta += m * -(epsilon - loss).exp_m1();
            }
        }
        delta
    }

    /// Working copy with the origin-charged mass folded into the first bucket.
    fn folded_masses(&self) -> Vec<f64> {
        let mut v = self.masses.clone();
        v[0] += self.truncated_mass_minus;
        v
    }
}

/// Exact `delta(eps)` of the Poisson-subsampled Gaussian mechanism (remove
/// direction), `q * delta_gauss(ln(1 + (e^eps - 1) / q))`.
pub fn subsampled_delta(epsilon: f64, rho: f64, q: f64) -> f64 {
    if q >= 1.0 {
        return gaussian_delta_unchecked(epsilon, rho);
    }
    if epsilon <= (-q).ln_1p() {
        return -epsilon.exp_m1();
    }
    let ratio = epsilon.exp_m1() / q;
    let inner = if ratio.is_finite() {
        ratio.ln_1p()
    } else {
        epsilon - q.ln()
    };
    q * gaussian_delta_unchecked(inner, rho)
}

/// Privacy loss `ln(dP/dQ)(x)` for `P = (1-q) N(0, rho^2) + q N(1, rho^2)`, `Q = N(0, rho^2)`.
fn privacy_loss(x: f64, rho: f64, q: f64) -> f64 {
    let a = (2.0 * x - 1.0) / (2.0 * rho * rho);
    if q >= 1.0 {
        return a;
    }
    let inner = q * a.exp_m1();
    if inner.is_finite() {
        inner.ln_1p()
    } else {
        a + q.ln() + ((1.0 - q) * (-a).exp() / q).ln_1p()
    }
}

/// Single-step privacy loss distribution of the subsampled Gaussian mechanism
/// with noise multiplier `rho` and sampling rate `q`.
pub fn subsampled_gaussian_pld(rho: f64, q: f64, opts: &PldOptions) -> Result<PrivacyLossDistribution> {
    check_rho(rho)?;
    check_rate(q)?;
    opts.validate()?;
    let h = opts.mesh;
    let tail = opts.tail_bound;
    let delta = |eps: f64| subsampled_delta(eps, rho, q);

    // Upper end: smallest epsilon whose delta is within the tail bound.
    let mut eps_hi = 1.0;
    while delta(eps_hi) > tail {
        eps_hi *= 2.0;
        if eps_hi > 1e7 {
            return Err(Error::GridTooSmall(format!(
                "privacy loss tail does not decay for rho={rho}, q={q}"
            )));
        }
    }
    let mut eps_lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (eps_lo + eps_hi);
        if delta(mid) > tail {
            eps_lo = mid;
        } else {
            eps_hi = mid;
        }
    }
    let hi_index = ((eps_hi / h).ceil() as i64).max(1);

    // Lower end: the loss below which P carries at most `tail` mass. Everything
    // underneath lands on the lowest grid point, which only overstates losses.
    let x_lo = rho * Normal::standard().inverse_cdf(tail);
    let lo_index = ((privacy_loss(x_lo, rho, q) / h).floor() as i64).min(0);

    let n = (hi_index - lo_index + 1) as usize;
    if n > opts.max_grid_len {
        return Err(Error::ResourceLimit(format!(
            "single-step grid needs {n} points, limit is {}",
            opts.max_grid_len
        )));
    }

    let deltas: Vec<f64> = (0..n)
        .map(|i| delta((lo_index + i as i64) as f64 * h))
        .collect();
    let truncated = deltas[n - 1];
    if truncated > MAX_TRUNCATED_MASS {
        return Err(Error::GridTooSmall(format!(
            "truncated mass {truncated} exceeds {MAX_TRUNCATED_MASS}"
        )));
    }

    // With x_i = exp(eps_i), the interpolant has slope s_i on [x_i, x_{i+1}]
    // and the mass at grid point i is x_i * (s_i - s_{i-1}); s_{n-1} = 0.
    let growth = h.exp();
    let denom = h.exp_m1();
    let mut masses = vec![0.0; n];
    for i in 1..n {
        let right = if i + 1 < n { deltas[i + 1] - deltas[i] } else { 0.0 };
        let left = deltas[i] - deltas[i - 1];
        masses[i] = ((right - growth * left) / denom).max(0.0);
    }
    let rest: f64 = masses[1..].iter().sum();
    masses[0] = (1.0 - truncated - rest).max(0.0);

    let pld = PrivacyLossDistribution {
        origin_index: lo_index,
        mesh: h,
        masses,
        truncated_mass_plus: truncated,
        truncated_mass_minus: 0.0,
        infinity_mass: 0.0,
        compositions: 1,
    };
    pld.validate()?;
    Ok(pld)
}

/// `times`-fold self-composition by repeated squaring.
pub fn compose(
    pld: &PrivacyLossDistribution,
    times: u64,
    opts: &PldOptions,
) -> Result<PrivacyLossDistribution> {
    if times == 0 {
        return Err(Error::InvalidArgument("composition count must be at least 1".into()));
    }
    pld.validate()?;
    let mut result: Option<PrivacyLossDistribution> = None;
    let mut base = pld.clone();
    let mut remaining = times;
    loop {
        if remaining & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(acc) => convolve(&acc, &base, opts)?,
            });
        }
        remaining >>= 1;
        if remaining == 0 {
            break;
        }
        base = convolve(&base, &base, opts)?;
    }
    let mut out = result.expect("times >= 1");
    out.compositions = pld.compositions * times;
    Ok(out)
}

/// Distribution of the sum of independent losses drawn from `a` and `b`.
pub fn convolve(
    a: &PrivacyLossDistribution,
    b: &PrivacyLossDistribution,
    opts: &PldOptions,
) -> Result<PrivacyLossDistribution> {
    if (a.mesh - b.mesh).abs() > 1e-15 * a.mesh {
        return Err(Error::InvalidArgument(format!(
            "mesh mismatch: {} vs {}",
            a.mesh, b.mesh
        )));
    }
    let av = a.folded_masses();
    let bv = b.folded_masses();
    let len = av.len() + bv.len() - 1;
    if len > opts.max_grid_len {
        return Err(Error::ResourceLimit(format!(
            "composed grid needs {len} points, limit is {}",
            opts.max_grid_len
        )));
    }
    let mut out = if av.len() * bv.len() <= DIRECT_CONVOLUTION_LIMIT {
        direct_convolution(&av, &bv)
    } else {
        fft_convolution(&av, &bv)
    };

    let finite_a = 1.0 - a.infinity_mass - a.truncated_mass_plus;
    let finite_b = 1.0 - b.infinity_mass - b.truncated_mass_plus;
    let infinity_mass = 1.0 - (1.0 - a.infinity_mass) * (1.0 - b.infinity_mass);
    let mut truncated_plus = a.truncated_mass_plus * (1.0 - b.infinity_mass)
        + b.truncated_mass_plus * (1.0 - a.infinity_mass)
        - a.truncated_mass_plus * b.truncated_mass_plus;

    // Trim on signed cumulative sums: FFT round-off is zero-mean and cancels
    // there, whereas clamped values would accumulate it.
    let trim = opts.trim_mass;
    let mut start = 0;
    let mut low = 0.0;
    while start + 1 < out.len() && low + out[start] <= trim {
        low += out[start];
        start += 1;
    }
    let mut end = out.len();
    let mut high = 0.0;
    while end > start + 1 && high + out[end - 1] <= trim {
        high += out[end - 1];
        end -= 1;
    }
    out.truncate(end);
    out.drain(..start);
    for m in out.iter_mut() {
        if *m < 0.0 {
            *m = 0.0;
        }
    }
    let low = low.max(0.0);
    let high = high.max(0.0);
    truncated_plus += high;

    // Rescale the kept masses so the total matches the exact finite mass.
    let kept_target = finite_a * finite_b - low - high;
    let kept: f64 = out.iter().sum();
    if kept > 0.0 && kept_target > 0.0 {
        let scale = kept_target / kept;
        for m in out.iter_mut() {
            *m *= scale;
        }
    }

    Ok(PrivacyLossDistribution {
        origin_index: a.origin_index + b.origin_index + start as i64,
        mesh: a.mesh,
        masses: out,
        truncated_mass_plus: truncated_plus,
        truncated_mass_minus: low,
        infinity_mass,
        compositions: a.compositions + b.compositions,
    })
}

fn direct_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn fft_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
    let len = a.len() + b.len() - 1;
    let size = len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(size);
    let inverse = planner.plan_fft_inverse(size);

    let pad = |v: &[f64]| {
        let mut buf = vec![Complex::new(0.0, 0.0); size];
        for (slot, &x) in buf.iter_mut().zip(v) {
            slot.re = x;
        }
        buf
    };
    let mut fa = pad(a);
    let mut fb = pad(b);
    forward.process(&mut fa);
    forward.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= *y;
    }
    inverse.process(&mut fa);
    let scale = 1.0 / size as f64;
    fa[..len].iter().map(|c| c.re * scale).collect()
}

/// Smallest grid epsilon whose delta does not exceed `delta`.
pub fn epsilon_from_pld(pld: &PrivacyLossDistribution, delta: f64) -> Result<PrivacySpend> {
    check_delta(delta)?;
    pld.validate()?;
    let h = pld.mesh;
    let spend = |epsilon: f64| PrivacySpend {
        epsilon,
        delta,
        error_bound: h * pld.compositions as f64,
        accountant: AccountantKind::Prv,
    };

    if pld.delta_at(0.0) <= delta {
        return Ok(spend(0.0));
    }
    let top = (pld.origin_index + pld.masses.len() as i64 - 1).max(0);
    if pld.delta_at(top as f64 * h) > delta {
        return Err(Error::Unattainable(format!(
            "delta {delta} is below the mass charged to infinite loss ({})",
            pld.truncated_mass_plus + pld.infinity_mass
        )));
    }
    // delta_at(lo * h) > delta >= delta_at(hi * h)
    let (mut lo, mut hi) = (0i64, top);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pld.delta_at(mid as f64 * h) <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(spend(hi as f64 * h))
}
