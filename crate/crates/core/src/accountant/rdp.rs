//! Rényi-DP accountant for the Poisson-subsampled Gaussian mechanism.

use statrs::function::factorial::ln_binomial;

use super::{check_delta, check_rate, check_rho, AccountantKind, PrivacySpend};
use crate::error::{Error, Result};

pub fn default_orders() -> Vec<u32> {
    (2..=256).collect()
}

/// RDP of one step at integer order `alpha`:
/// `ln(sum_j C(alpha, j) (1-q)^(alpha-j) q^j exp(j(j-1) / (2 rho^2))) / (alpha - 1)`,
/// evaluated in log space.
pub fn subsampled_gaussian_rdp(rho: f64, q: f64, alpha: u32) -> f64 {
    let a = alpha as u64;
    let inv_two_var = 1.0 / (2.0 * rho * rho);
    let ln_q = q.ln();
    let ln_1mq = (-q).ln_1p();
    let terms: Vec<f64> = (0..=a)
        .filter_map(|j| {
            let rest = a - j;
            if rest > 0 && q >= 1.0 {
                return None;
            }
            let jf = j as f64;
            let mut t = ln_binomial(a, j) + jf * (jf - 1.0) * inv_two_var;
            if j > 0 {
                t += jf * ln_q;
            }
            if rest > 0 {
                t += rest as f64 * ln_1mq;
            }
            Some(t)
        })
        .collect();
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return f64::INFINITY;
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    (max + sum.ln()) / (alpha as f64 - 1.0)
}

/// `eps = min_alpha [steps * RDP(alpha) + ln(1/delta) / (alpha - 1)]`.
pub fn rdp_epsilon(
    rho: f64,
    q: f64,
    steps: u64,
    delta: f64,
    orders: &[u32],
) -> Result<PrivacySpend> {
    check_rho(rho)?;
    check_rate(q)?;
    check_delta(delta)?;
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    if orders.is_empty() || orders.iter().any(|&a| a < 2) {
        return Err(Error::InvalidArgument("RDP orders must be integers >= 2".into()));
    }
    let log_inv_delta = -delta.ln();
    let epsilon = orders
        .iter()
        .map(|&alpha| {
            let rdp = subsampled_gaussian_rdp(rho, q, alpha);
            steps as f64 * rdp + log_inv_delta / (alpha as f64 - 1.0)
        })
        .filter(|e| !e.is_nan())
        .fold(f64::INFINITY, f64::min);
    Ok(PrivacySpend {
        epsilon,
        delta,
        error_bound: 0.0,
        accountant: AccountantKind::Rdp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unsubsampled_order_two_is_alpha_over_two_var() {
        assert!((subsampled_gaussian_rdp(1.0, 1.0, 2) - 1.0).abs() < 1e-12);
        for alpha in [2u32, 3, 10, 64] {
            for rho in [0.5, 1.0, 3.0] {
                let expected = alpha as f64 / (2.0 * rho * rho);
                let got = subsampled_gaussian_rdp(rho, 1.0, alpha);
                assert!((got - expected).abs() < 1e-9 * expected, "{alpha} {rho}: {got}");
            }
        }
    }

    #[test]
    fn order_two_closed_form() {
        // alpha = 2: ln(1 - q + q e^{1/rho^2}) ... expand the three binomial terms by hand.
        let (rho, q) = (1.3f64, 0.05f64);
        let direct = ((1.0 - q).powi(2) + 2.0 * q * (1.0 - q) + q * q * (1.0 / (rho * rho)).exp()).ln();
        assert!((subsampled_gaussian_rdp(rho, q, 2) - direct).abs() < 1e-13);
    }

    #[test]
    fn doubling_steps_increases_epsilon() {
        let orders = default_orders();
        let a = rdp_epsilon(1.0, 0.01, 1000, 1e-5, &orders).unwrap().epsilon;
        let b = rdp_epsilon(1.0, 0.01, 2000, 1e-5, &orders).unwrap().epsilon;
        assert!(a.is_finite() && b > a);
    }

    #[test]
    fn huge_orders_stay_in_log_space() {
        let r = subsampled_gaussian_rdp(0.1, 0.5, 256);
        assert!(r.is_finite() && r > 0.0);
        let e = rdp_epsilon(0.05, 0.5, 10_000, 1e-5, &default_orders()).unwrap();
        assert!(e.epsilon > 1e3);
    }

    #[test]
    fn rejects_bad_orders() {
        assert!(rdp_epsilon(1.0, 0.1, 1, 1e-5, &[1]).is_err());
        assert!(rdp_epsilon(1.0, 0.1, 1, 1e-5, &[]).is_err());
    }
}
