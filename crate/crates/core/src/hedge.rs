//! Exponential-weights primitives.
//!
//! Everything here works in the log domain: weights are stored as natural-log
//! probabilities and normalised with a max-shifted log-sum-exp, so products
//! like `eta * L` in the thousands never underflow.
//!
//! The mixability gap is computed from two nonnegative pieces,
//!
//! ```text
//! delta = sum_k w_k (d_k - g_k)  -  (-(y + ln(1 - y)) / eta)
//! ```
//!
//! where `d_k` is the loss in excess of the round minimum,
//! `g_k = (1 - exp(-eta d_k)) / eta` and `y = eta * sum_k w_k g_k`.
//! Both pieces are `O(eta)`, so the difference keeps its relative accuracy
//! even for tiny learning rates where the textbook
//! `w.l + ln(w.exp(-eta l)) / eta` would lose everything to cancellation.

use std::fmt;

use crate::error::{HedgeError, Result};

/// Per-operation floating point slack.
pub const OP_TOLERANCE: f64 = 1e-12;

/// Slack for quantities accumulated over many rounds.
pub const ACCUMULATED_TOLERANCE: f64 = 1e-9;

/// Losses this far outside `[0, 1]` are rejected instead of clamped.
pub const LOSS_RANGE_SLACK: f64 = 1e-9;

/// `ln(sum_i exp(x_i))` with the usual max shift. Returns `-inf` for an
/// empty slice or when every entry is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Indices attaining the minimum of `xs` (exact comparison).
pub fn argmin_set(xs: &[f64]) -> Vec<usize> {
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    (0..xs.len()).filter(|&i| xs[i] == min).collect()
}

/// Indices attaining the maximum of `xs` (exact comparison).
pub fn argmax_set(xs: &[f64]) -> Vec<usize> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..xs.len()).filter(|&i| xs[i] == max).collect()
}

fn check_eta(eta: f64) -> Result<()> {
    if eta.is_finite() && eta > 0.0 {
        Ok(())
    } else {
        Err(HedgeError::InvalidArgument(format!(
            "learning rate must be finite and positive, got {eta}"
        )))
    }
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(HedgeError::DimensionMismatch { expected, got })
    }
}

/// One round of losses, one entry per action, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossVector(Vec<f64>);

impl LossVector {
    pub fn new(losses: Vec<f64>) -> Result<Self> {
        if losses.len() < 2 {
            return Err(HedgeError::InvalidArgument(format!(
                "need at least 2 actions, got {}",
                losses.len()
            )));
        }
        let mut losses = losses;
        for (k, l) in losses.iter_mut().enumerate() {
            if !l.is_finite() || *l < -LOSS_RANGE_SLACK || *l > 1.0 + LOSS_RANGE_SLACK {
                return Err(HedgeError::InvalidArgument(format!(
                    "loss of action {k} is {l}, outside [0, 1]"
                )));
            }
            *l = l.clamp(0.0, 1.0);
        }
        Ok(Self(losses))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Componentwise running sum of observed loss vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeLoss {
    totals: Vec<f64>,
    rounds: u64,
}

impl CumulativeLoss {
    pub fn zeros(num_actions: usize) -> Result<Self> {
        if num_actions < 2 {
            return Err(HedgeError::InvalidArgument(format!(
                "need at least 2 actions, got {num_actions}"
            )));
        }
        Ok(Self {
            totals: vec![0.0; num_actions],
            rounds: 0,
        })
    }

    /// Builds a cumulative loss directly from totals, e.g. for tests or for
    /// evaluating bounds at a given point. `rounds` must cover every total.
    pub fn from_totals(totals: Vec<f64>, rounds: u64) -> Result<Self> {
        if totals.len() < 2 {
            return Err(HedgeError::InvalidArgument(format!(
                "need at least 2 actions, got {}",
                totals.len()
            )));
        }
        for (k, &l) in totals.iter().enumerate() {
            if !l.is_finite() || l < 0.0 || l > rounds as f64 + LOSS_RANGE_SLACK * rounds as f64 {
                return Err(HedgeError::InvalidArgument(format!(
                    "cumulative loss of action {k} is {l}, outside [0, {rounds}]"
                )));
            }
        }
        Ok(Self { totals, rounds })
    }

    pub fn add(&mut self, loss: &LossVector) -> Result<()> {
        check_dims(self.totals.len(), loss.len())?;
        for (total, l) in self.totals.iter_mut().zip(loss.as_slice()) {
            *total += l;
        }
        self.rounds += 1;
        Ok(())
    }

    pub fn totals(&self) -> &[f64] {
        &self.totals
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn num_actions(&self) -> usize {
        self.totals.len()
    }

    /// `L_t^*`, the loss of the best action so far.
    pub fn best(&self) -> f64 {
        self.totals.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn leaders(&self) -> Vec<usize> {
        argmin_set(&self.totals)
    }
}

/// A probability vector over actions, held as log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSnapshot {
    log_weights: Vec<f64>,
}

impl WeightSnapshot {
    pub fn uniform(num_actions: usize) -> Self {
        let lw = -(num_actions as f64).ln();
        Self {
            log_weights: vec![lw; num_actions],
        }
    }

    /// Normalises arbitrary log-masses (entries may be `-inf`).
    pub fn from_log_masses(log_masses: Vec<f64>) -> Result<Self> {
        if log_masses.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(HedgeError::InvalidArgument(
                "log masses must not be NaN or +inf".into(),
            ));
        }
        let norm = log_sum_exp(&log_masses);
        if !norm.is_finite() {
            return Err(HedgeError::InvalidArgument(
                "log masses carry no probability".into(),
            ));
        }
        Ok(Self {
            log_weights: log_masses.into_iter().map(|x| x - norm).collect(),
        })
    }

    /// Normalises nonnegative masses.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(HedgeError::InvalidArgument(
                "weights must be finite and nonnegative".into(),
            ));
        }
        Self::from_log_masses(weights.iter().map(|w| w.ln()).collect())
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|lw| lw.exp()).collect()
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    /// `w^*`, the largest weight.
    pub fn max_weight(&self) -> f64 {
        self.log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
            .exp()
    }

    /// Expected loss `w . l` under these weights. Normalised by the weight
    /// sum so the result stays inside the loss range despite rounding.
    pub fn dot(&self, loss: &LossVector) -> Result<f64> {
        check_dims(self.len(), loss.len())?;
        let weights = self.weights();
        let total: f64 = weights.iter().sum();
        let expected: f64 = weights
            .iter()
            .zip(loss.as_slice())
            .map(|(w, l)| w * l)
            .sum();
        Ok(expected / total)
    }
}

impl fmt::Display for WeightSnapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ws: Vec<String> = self.weights().iter().map(|w| format!("{w:.6}")).collect();
        write!(f, "({})", ws.join(", "))
    }
}

/// Losses of Hedge and of the ideal mixing pseudo-algorithm for one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundReport {
    pub hedge_loss: f64,
    pub mix_loss: f64,
    /// Mixability gap, `hedge_loss - mix_loss`.
    pub delta: f64,
    pub eta: f64,
}

/// Shared decomposition behind [`mix_loss`], [`mixability_gap`] and
/// [`log_mix`]. All fields are relative to the smallest loss of the round.
struct MixTerms {
    min_loss: f64,
    /// `sum_k w_k d_k`
    excess: f64,
    /// `sum_k w_k g_k`
    shrunk: f64,
    /// `sum_k w_k (d_k - g_k)`, nonnegative
    shrink_gap: f64,
    /// `-(y + ln(1 - y)) / eta`, nonnegative
    curvature: f64,
    /// `ln(sum_k w_k exp(-eta d_k))`
    log_shifted_mix: f64,
}

fn mix_terms(w: &WeightSnapshot, loss: &LossVector, eta: f64) -> Result<MixTerms> {
    check_eta(eta)?;
    check_dims(w.len(), loss.len())?;
    let min_loss = loss.min();
    let weights = w.weights();
    let total: f64 = weights.iter().sum();

    let mut excess = 0.0;
    let mut shrunk = 0.0;
    let mut shrink_gap = 0.0;
    for (&wk, &l) in weights.iter().zip(loss.as_slice()) {
        let d = l - min_loss;
        let x = eta * d;
        let em1 = (-x).exp_m1();
        excess += wk * d;
        shrunk += wk * (-em1 / eta);
        shrink_gap += wk * ((x + em1) / eta);
    }
    excess /= total;
    shrunk /= total;
    shrink_gap /= total;

    // y is the mass lost to the exponential tilt; near 1 the ln_1p route
    // breaks down, so fall back to log-sum-exp over the log weights.
    let y = eta * shrunk;
    let log_shifted_mix = if y <= 0.5 {
        (-y).ln_1p()
    } else {
        let shifted: Vec<f64> = w
            .log_weights()
            .iter()
            .zip(loss.as_slice())
            .map(|(lw, l)| lw - eta * (l - min_loss))
            .collect();
        log_sum_exp(&shifted) - log_sum_exp(w.log_weights())
    };
    let curvature = -(y + log_shifted_mix) / eta;

    Ok(MixTerms {
        min_loss,
        excess,
        shrunk,
        shrink_gap,
        curvature: curvature.max(0.0),
        log_shifted_mix,
    })
}

/// Hedge weights `w^k ∝ exp(-eta L^k)` for the given cumulative losses.
pub fn hedge_weights(cum: &CumulativeLoss, eta: f64) -> Result<WeightSnapshot> {
    check_eta(eta)?;
    let scaled: Vec<f64> = cum.totals().iter().map(|l| -eta * l).collect();
    let norm = log_sum_exp(&scaled);
    if !norm.is_finite() {
        return Err(HedgeError::InvalidArgument(
            "cumulative losses overflow the log domain".into(),
        ));
    }
    Ok(WeightSnapshot {
        log_weights: scaled.into_iter().map(|x| x - norm).collect(),
    })
}

/// Mix loss `-(1/eta) ln(w . exp(-eta l))`.
pub fn mix_loss(w: &WeightSnapshot, loss: &LossVector, eta: f64) -> Result<f64> {
    let t = mix_terms(w, loss, eta)?;
    Ok(t.min_loss + t.shrunk + t.curvature)
}

/// `ln(w . exp(-eta l))`, the per-round factor of the marginal likelihood.
pub fn log_mix(w: &WeightSnapshot, loss: &LossVector, eta: f64) -> Result<f64> {
    let t = mix_terms(w, loss, eta)?;
    Ok(-eta * t.min_loss + t.log_shifted_mix)
}

/// Hedge loss, mix loss and their difference for one round.
pub fn mixability_gap(w: &WeightSnapshot, loss: &LossVector, eta: f64) -> Result<RoundReport> {
    let t = mix_terms(w, loss, eta)?;
    let hedge_loss = t.min_loss + t.excess;
    let mix_loss = t.min_loss + t.shrunk + t.curvature;
    Ok(RoundReport {
        hedge_loss,
        mix_loss,
        delta: t.shrink_gap - t.curvature,
        eta,
    })
}

/// Bayesian-style update `w^k <- w^k exp(-eta l^k) / (w . exp(-eta l))`.
pub fn posterior_update(w: &WeightSnapshot, loss: &LossVector, eta: f64) -> Result<WeightSnapshot> {
    check_eta(eta)?;
    check_dims(w.len(), loss.len())?;
    let min_loss = loss.min();
    let tilted: Vec<f64> = w
        .log_weights()
        .iter()
        .zip(loss.as_slice())
        .map(|(lw, l)| lw - eta * (l - min_loss))
        .collect();
    WeightSnapshot::from_log_masses(tilted)
}

/// `ln B_t = ln((1/K) sum_k exp(-eta L^k))`.
pub fn log_marginal_likelihood(cum: &CumulativeLoss, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    let best = cum.best();
    let shifted: Vec<f64> = cum.totals().iter().map(|l| -eta * (l - best)).collect();
    Ok(-eta * best + log_sum_exp(&shifted) - (cum.num_actions() as f64).ln())
}
