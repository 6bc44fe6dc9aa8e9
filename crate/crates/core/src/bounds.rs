//! Closed-form regret guarantees and their ingredients.
//!
//! These are the numbers the tests compare simulations against, and what the
//! `bounds` CLI subcommand prints. Every function checks its own domain and
//! returns [`HedgeError::Domain`] naming the violated precondition.

use std::f64::consts::{E, LN_2};

use statrs::function::gamma::gamma;

use crate::error::{HedgeError, Result};

/// `e - 1`
pub const E_MINUS_1: f64 = E - 1.0;
/// `e - 2`
pub const E_MINUS_2: f64 = E - 2.0;

fn require(cond: bool, what: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(HedgeError::Domain(what.to_string()))
    }
}

fn check_k(k: usize) -> Result<f64> {
    require(k >= 2, "K >= 2")?;
    Ok((k as f64).ln())
}

fn check_eta(eta: f64) -> Result<()> {
    require(eta.is_finite() && eta > 0.0, "eta > 0")
}

fn check_unit_eta(eta: f64) -> Result<()> {
    require(eta.is_finite() && eta > 0.0 && eta <= 1.0, "eta in (0, 1]")
}

fn check_phi(phi: f64) -> Result<()> {
    require(phi.is_finite() && phi > 1.0, "phi > 1")
}

fn check_lstar(lstar: f64) -> Result<()> {
    require(lstar.is_finite() && lstar >= 0.0, "lstar >= 0")
}

fn ceil_to_int(x: f64) -> i64 {
    x.ceil() as i64
}

/// Validated bundle of the symbols that appear across the bounds. Fields not
/// needed by a particular bound may be left at their defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    pub k: usize,
    pub eta: f64,
    pub phi: f64,
    pub lstar: f64,
    pub m: u32,
    pub alpha: f64,
    pub beta: f64,
    pub delta_prob: f64,
    pub tau: u64,
}

impl Default for BoundInputs {
    fn default() -> Self {
        Self {
            k: 2,
            eta: 1.0,
            phi: 2.0,
            lstar: 0.0,
            m: 1,
            alpha: 0.5,
            beta: 1.0,
            delta_prob: 1.0,
            tau: 1,
        }
    }
}

impl BoundInputs {
    pub fn validate(self) -> Result<Self> {
        check_k(self.k)?;
        check_eta(self.eta)?;
        check_phi(self.phi)?;
        check_lstar(self.lstar)?;
        require(self.m >= 1, "m >= 1")?;
        require(self.alpha.is_finite() && self.alpha > 0.0, "alpha > 0")?;
        require(self.beta.is_finite() && self.beta > 0.0, "beta > 0")?;
        require(
            self.delta_prob > 0.0 && self.delta_prob <= 1.0,
            "delta_prob in (0, 1]",
        )?;
        require(self.tau >= 1, "tau >= 1")?;
        Ok(self)
    }
}

/// AdaHedge's budget on the cumulative mixability gap:
/// `b(eta) = (1/eta + 1/(e-1)) ln K`.
pub fn budget(eta: f64, k: usize) -> Result<f64> {
    check_eta(eta)?;
    let ln_k = check_k(k)?;
    Ok((1.0 / eta + 1.0 / E_MINUS_1) * ln_k)
}

/// `(eta L* + ln K) / (e - 1)`, an upper bound on the cumulative mixability
/// gap for `eta <= 1`.
pub fn lemma2_bound(eta: f64, lstar: f64, k: usize) -> Result<f64> {
    check_unit_eta(eta)?;
    check_lstar(lstar)?;
    let ln_k = check_k(k)?;
    Ok((eta * lstar + ln_k) / E_MINUS_1)
}

/// Smallest learning rate at which the budget can have been depleted:
/// `sqrt((e-1) ln K / L*)`.
pub fn eta_floor(lstar: f64, k: usize) -> Result<f64> {
    require(lstar.is_finite() && lstar > 0.0, "lstar > 0")?;
    let ln_k = check_k(k)?;
    Ok((E_MINUS_1 * ln_k / lstar).sqrt())
}

/// Regret of Hedge at the round its budget runs out:
/// `sqrt(4/(e-1) L* ln K) + ln K/(e-1) + 1/8`.
pub fn theorem1_bound(lstar: f64, k: usize) -> Result<f64> {
    check_lstar(lstar)?;
    let ln_k = check_k(k)?;
    Ok((4.0 / E_MINUS_1 * lstar * ln_k).sqrt() + ln_k / E_MINUS_1 + 0.125)
}

/// Regret of AdaHedge after `m` segments:
/// `2 ln K (phi^m - 1)/(phi - 1) + m (ln K/(e-1) + 1/8)`.
pub fn lemma3_bound(m: u32, k: usize, phi: f64) -> Result<f64> {
    require(m >= 1, "m >= 1")?;
    check_phi(phi)?;
    let ln_k = check_k(k)?;
    let m_f = f64::from(m);
    Ok(2.0 * ln_k * (phi.powf(m_f) - 1.0) / (phi - 1.0) + m_f * (ln_k / E_MINUS_1 + 0.125))
}

/// `phi sqrt(phi^2 - 1) / (phi - 1)`, the constant in front of the
/// worst-case AdaHedge regret.
pub fn theorem2_leading_factor(phi: f64) -> Result<f64> {
    check_phi(phi)?;
    Ok(phi * (phi * phi - 1.0).sqrt() / (phi - 1.0))
}

/// Leading term of the worst-case AdaHedge guarantee. The remainder is an
/// `O(ln(L*+2) ln K)` term without an explicit constant, which is never
/// included here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem2Leading {
    pub value: f64,
    pub omits_lower_order_term: bool,
}

pub fn theorem2_leading_term(lstar: f64, k: usize, phi: f64) -> Result<Theorem2Leading> {
    check_lstar(lstar)?;
    let ln_k = check_k(k)?;
    let factor = theorem2_leading_factor(phi)?;
    Ok(Theorem2Leading {
        value: factor * (4.0 / E_MINUS_1 * lstar * ln_k).sqrt(),
        omits_lower_order_term: true,
    })
}

/// `(e-2) eta (1 - w*)`, the posterior-sensitive bound on one round's gap.
pub fn lemma4_bound(eta: f64, wstar: f64) -> Result<f64> {
    check_unit_eta(eta)?;
    require((0.0..=1.0).contains(&wstar), "wstar in [0, 1]")?;
    Ok(E_MINUS_2 * eta * (1.0 - wstar))
}

fn check_alpha_beta(alpha: f64, beta: f64) -> Result<()> {
    require(alpha.is_finite() && alpha > 0.0, "alpha > 0")?;
    require(beta.is_finite() && beta >= 0.1, "beta >= 1/10")
}

/// `C_K = (K-1) alpha^(-1/beta) Gamma(1 + 1/beta)`.
pub fn lemma5_ck(k: usize, alpha: f64, beta: f64) -> Result<f64> {
    check_k(k)?;
    check_alpha_beta(alpha, beta)?;
    Ok((k - 1) as f64 * alpha.powf(-1.0 / beta) * gamma(1.0 + 1.0 / beta))
}

/// `C_K eta^(-1/beta)`, a bound on the summed posterior tail
/// `sum_t (1 - w*_{t+1})` when cumulative losses diverge like `alpha t^beta`.
pub fn lemma5_bound(k: usize, alpha: f64, beta: f64, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    Ok(lemma5_ck(k, alpha, beta)? * eta.powf(-1.0 / beta))
}

/// Segment cap for the two-action alternating example with gap `alpha`:
/// `1 + ceil(log_phi((e-2)/(alpha ln 2) + 1/(8 ln 2)))`.
pub fn intro_mstar(alpha: f64, phi: f64) -> Result<i64> {
    require(alpha.is_finite() && alpha > 0.0, "alpha > 0")?;
    check_phi(phi)?;
    let arg = E_MINUS_2 / (alpha * LN_2) + 1.0 / (8.0 * LN_2);
    Ok(1 + ceil_to_int(arg.ln() / phi.ln()))
}

/// High-probability segment cap when the best action has expected
/// per-round advantage `2 alpha`.
pub fn theorem3_mstar(alpha: f64, delta_prob: f64, k: usize, phi: f64) -> Result<i64> {
    require(alpha > 0.0 && alpha <= 0.5, "alpha in (0, 1/2]")?;
    require(
        delta_prob > 0.0 && delta_prob <= 1.0,
        "delta_prob in (0, 1]",
    )?;
    let ln_k = check_k(k)?;
    check_phi(phi)?;
    let kf = k as f64;
    let a2 = alpha * alpha;
    let arg = (kf - 1.0) * E_MINUS_2 / (alpha * ln_k)
        + (2.0 * kf / (a2 * delta_prob)).ln() / (4.0 * a2 * ln_k)
        + 1.0 / (8.0 * ln_k);
    Ok(1 + ceil_to_int(arg.ln() / phi.ln()))
}

/// `tau = floor(8 ln K phi^((m*-1)(2-1/beta)) - 8 (e-2) C_K + 1)`. May be
/// nonpositive, in which case the constant-regret argument does not apply.
pub fn lemma6_tau(mstar: u32, k: usize, alpha: f64, beta: f64, phi: f64) -> Result<i64> {
    require(mstar >= 1, "mstar >= 1")?;
    require(beta > 0.5, "beta > 1/2")?;
    check_phi(phi)?;
    let ln_k = check_k(k)?;
    let ck = lemma5_ck(k, alpha, beta)?;
    let exponent = f64::from(mstar - 1) * (2.0 - 1.0 / beta);
    Ok((8.0 * ln_k * phi.powf(exponent) - 8.0 * E_MINUS_2 * ck + 1.0).floor() as i64)
}

/// Hindsight learning rate `sqrt(2 ln K / L*)`, or 1 when `L* = 0`.
pub fn oracle_eta(lstar: f64, k: usize) -> Result<f64> {
    check_lstar(lstar)?;
    let ln_k = check_k(k)?;
    if lstar == 0.0 {
        Ok(1.0)
    } else {
        Ok((2.0 * ln_k / lstar).sqrt())
    }
}
