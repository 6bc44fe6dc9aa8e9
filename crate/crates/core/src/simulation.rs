//! Loss generators and the multi-repetition experiment runner.
//!
//! Randomness comes from xoshiro256++ seeded per repetition with
//! [`repetition_seed`], a SplitMix64 finaliser applied to
//! `base_seed + (r + 1) * 0x9E3779B97F4A7C15`. Uniforms are the top 53 bits
//! of the next output scaled into `[0, 1)`, and a Bernoulli(p) draw emits 1
//! iff `u < p`. The same streams therefore come out on every platform and
//! under every thread count.
//!
//! Within a repetition the stream is generated once and every strategy
//! plays against it. Repetitions run in fixed-size batches and are summed in
//! repetition order, so averages do not depend on scheduling.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use crate::error::{HedgeError, Result};
use crate::hedge::LossVector;
use crate::strategies::{self, StrategyKind};

/// Repetitions evaluated together before being folded into the sums.
const BATCH_SIZE: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorSpec {
    /// Action `k` suffers loss 1 with probability `probs[k]`, independently.
    IidBernoulli { probs: Vec<f64> },
    /// Two actions sharing a hard/easy regime per round. In a hard round the
    /// actions lose with probabilities `1 - p1/t` and `1 - p2/t`, in an easy
    /// round with `p1/t` and `p2/t`.
    Correlated { hard_prob: f64, p1: f64, p2: f64 },
    /// `(a + eps, b - eps)` in odd rounds and `(a - eps, b + eps)` in even ones.
    AlternatingPair { a: f64, b: f64, eps: f64 },
    /// Action 1: `1/2, 0, 1, 0, 1, ...`; action 2: `0, 1, 0, 1, 0, ...`.
    FtlKiller,
}

impl GeneratorSpec {
    /// Experiment I: four i.i.d. Bernoulli actions.
    pub fn iid_experiment() -> Self {
        Self::IidBernoulli {
            probs: vec![0.35, 0.4, 0.45, 0.5],
        }
    }

    /// Experiment II: two actions with correlated losses.
    pub fn correlated_experiment() -> Self {
        Self::Correlated {
            hard_prob: 0.3,
            p1: 0.01,
            p2: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(HedgeError::InvalidArgument(format!(
                    "{name} must be a probability in [0, 1], got {p}"
                )))
            }
        };
        match self {
            Self::IidBernoulli { probs } => {
                if probs.len() < 2 {
                    return Err(HedgeError::InvalidArgument(
                        "iid_bernoulli needs at least 2 actions".into(),
                    ));
                }
                for (k, &p) in probs.iter().enumerate() {
                    prob(&format!("probs[{k}]"), p)?;
                }
            }
            Self::Correlated { hard_prob, p1, p2 } => {
                prob("hard_prob", *hard_prob)?;
                prob("p1", *p1)?;
                prob("p2", *p2)?;
            }
            Self::AlternatingPair { a, b, eps } => {
                if !(a - eps > 0.0 && b + eps < 1.0 && b - a > 2.0 * eps && *eps >= 0.0) {
                    return Err(HedgeError::InvalidArgument(format!(
                        "alternating pair needs 0 < a - eps, b + eps < 1 and b - a > 2 eps \
                         (a={a}, b={b}, eps={eps})"
                    )));
                }
            }
            Self::FtlKiller => {}
        }
        Ok(())
    }

    pub fn num_actions(&self) -> usize {
        match self {
            Self::IidBernoulli { probs } => probs.len(),
            _ => 2,
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, Self::IidBernoulli { .. } | Self::Correlated { .. })
    }
}

/// SplitMix64 output function.
fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of repetition `r` (0-based) derived from the experiment's base seed.
pub fn repetition_seed(base_seed: u64, repetition: u64) -> u64 {
    splitmix64_mix(
        base_seed.wrapping_add(
            repetition
                .wrapping_add(1)
                .wrapping_mul(0x9E37_79B9_7F4A_7C15),
        ),
    )
}

fn bernoulli(rng: &mut Xoshiro256PlusPlus, p: f64) -> f64 {
    let u: f64 = rng.random();
    if u < p {
        1.0
    } else {
        0.0
    }
}

/// `horizon` loss vectors drawn from `spec`, a pure function of its inputs.
pub fn generate(spec: &GeneratorSpec, horizon: usize, seed: u64) -> Result<Vec<LossVector>> {
    spec.validate()?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    (1..=horizon)
        .map(|t| {
            let row = match spec {
                GeneratorSpec::IidBernoulli { probs } => {
                    probs.iter().map(|&p| bernoulli(&mut rng, p)).collect()
                }
                GeneratorSpec::Correlated { hard_prob, p1, p2 } => {
                    let hard = bernoulli(&mut rng, *hard_prob) == 1.0;
                    let (q1, q2) = (p1 / t as f64, p2 / t as f64);
                    let (q1, q2) = if hard { (1.0 - q1, 1.0 - q2) } else { (q1, q2) };
                    let l1 = bernoulli(&mut rng, q1);
                    let l2 = bernoulli(&mut rng, q2);
                    vec![l1, l2]
                }
                GeneratorSpec::AlternatingPair { a, b, eps } => {
                    if t % 2 == 1 {
                        vec![a + eps, b - eps]
                    } else {
                        vec![a - eps, b + eps]
                    }
                }
                GeneratorSpec::FtlKiller => match t {
                    1 => vec![0.5, 0.0],
                    t if t % 2 == 0 => vec![0.0, 1.0],
                    _ => vec![1.0, 0.0],
                },
            };
            LossVector::new(row)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub generator: GeneratorSpec,
    pub horizon: usize,
    pub repetitions: usize,
    pub strategies: Vec<StrategyKind>,
    pub base_seed: u64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        if self.horizon < 1 {
            return Err(HedgeError::InvalidArgument("horizon_t must be >= 1".into()));
        }
        if self.repetitions < 1 {
            return Err(HedgeError::InvalidArgument(
                "repetitions must be >= 1".into(),
            ));
        }
        if self.strategies.is_empty() {
            return Err(HedgeError::InvalidArgument(
                "at least one strategy is required".into(),
            ));
        }
        for s in &self.strategies {
            s.validate()?;
        }
        Ok(())
    }
}

/// Per-strategy averages over all repetitions plus per-repetition finals.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyAggregate {
    pub kind: StrategyKind,
    /// Mean regret after each round, index `t - 1`.
    pub mean_regret: Vec<f64>,
    /// Mean cumulative agent loss after each round.
    pub mean_cum_loss: Vec<f64>,
    /// Mean learning rate used in each round (infinite for FTL).
    pub mean_eta: Vec<f64>,
    /// Repetitions that opened a new segment (after the first) in each round.
    pub segment_events: Vec<u32>,
    pub final_regrets: Vec<f64>,
    pub segments_started: Vec<u32>,
}

impl StrategyAggregate {
    pub fn final_mean_regret(&self) -> f64 {
        self.mean_regret.last().copied().unwrap_or(0.0)
    }

    pub fn mean_segments(&self) -> f64 {
        let n = self.segments_started.len() as f64;
        self.segments_started
            .iter()
            .map(|&s| f64::from(s))
            .sum::<f64>()
            / n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub horizon: usize,
    pub repetitions: usize,
    pub base_seed: u64,
    pub strategies: Vec<StrategyAggregate>,
}

impl AggregateResult {
    pub fn strategy(&self, kind: StrategyKind) -> Option<&StrategyAggregate> {
        self.strategies.iter().find(|s| s.kind == kind)
    }
}

struct StrategyRun {
    regret: Vec<f64>,
    cum_loss: Vec<f64>,
    eta: Vec<f64>,
    segment_started: Vec<bool>,
    final_regret: f64,
    segments: u32,
}

fn run_repetition(cfg: &ExperimentConfig, repetition: usize) -> Result<Vec<StrategyRun>> {
    let seed = repetition_seed(cfg.base_seed, repetition as u64);
    let losses = generate(&cfg.generator, cfg.horizon, seed)?;
    cfg.strategies
        .iter()
        .map(|&kind| {
            let trace = strategies::run(kind, &losses)?;
            let mut segment_started = vec![false; cfg.horizon];
            for &s in &trace.segment_starts[1..] {
                segment_started[(s - 1) as usize] = true;
            }
            Ok(StrategyRun {
                final_regret: trace.final_regret(),
                segments: trace.segments_started(),
                regret: trace.rows.iter().map(|r| r.regret).collect(),
                cum_loss: trace.rows.iter().map(|r| r.cum_agent_loss).collect(),
                eta: trace.rows.iter().map(|r| r.eta).collect(),
                segment_started,
            })
        })
        .collect()
}

/// Runs the experiment on rayon's global pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<AggregateResult> {
    run_batches(cfg)
}

/// Runs the experiment on a dedicated pool of `threads` workers. The result
/// is bitwise identical for every thread count.
pub fn run_experiment_with_threads(
    cfg: &ExperimentConfig,
    threads: usize,
) -> Result<AggregateResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| HedgeError::InvalidArgument(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run_batches(cfg))
}

fn run_batches(cfg: &ExperimentConfig) -> Result<AggregateResult> {
    cfg.validate()?;
    let horizon = cfg.horizon;
    let mut aggs: Vec<StrategyAggregate> = cfg
        .strategies
        .iter()
        .map(|&kind| StrategyAggregate {
            kind,
            mean_regret: vec![0.0; horizon],
            mean_cum_loss: vec![0.0; horizon],
            mean_eta: vec![0.0; horizon],
            segment_events: vec![0; horizon],
            final_regrets: Vec::with_capacity(cfg.repetitions),
            segments_started: Vec::with_capacity(cfg.repetitions),
        })
        .collect();

    let mut start = 0;
    while start < cfg.repetitions {
        let end = (start + BATCH_SIZE).min(cfg.repetitions);
        let batch: Vec<Vec<StrategyRun>> = (start..end)
            .into_par_iter()
            .map(|r| run_repetition(cfg, r))
            .collect::<Result<_>>()?;
        for runs in batch {
            for (agg, run) in aggs.iter_mut().zip(runs) {
                for t in 0..horizon {
                    agg.mean_regret[t] += run.regret[t];
                    agg.mean_cum_loss[t] += run.cum_loss[t];
                    agg.mean_eta[t] += run.eta[t];
                    agg.segment_events[t] += u32::from(run.segment_started[t]);
                }
                agg.final_regrets.push(run.final_regret);
                agg.segments_started.push(run.segments);
            }
        }
        start = end;
    }

    let n = cfg.repetitions as f64;
    for agg in &mut aggs {
        for v in agg
            .mean_regret
            .iter_mut()
            .chain(agg.mean_cum_loss.iter_mut())
            .chain(agg.mean_eta.iter_mut())
        {
            *v /= n;
        }
    }
    Ok(AggregateResult {
        horizon,
        repetitions: cfg.repetitions,
        base_seed: cfg.base_seed,
        strategies: aggs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentStatistics {
    pub mean: f64,
    /// Segments started -> number of repetitions.
    pub histogram: BTreeMap<u32, usize>,
}

/// Mean and histogram of the number of segments a restarting strategy started.
pub fn segment_statistics(
    result: &AggregateResult,
    kind: StrategyKind,
) -> Result<SegmentStatistics> {
    if !kind.is_segmented() {
        return Err(HedgeError::InvalidArgument(format!(
            "{kind} does not restart in segments"
        )));
    }
    let agg = result
        .strategy(kind)
        .ok_or_else(|| HedgeError::NotFound(format!("strategy {kind} not in result")))?;
    let mut histogram = BTreeMap::new();
    for &s in &agg.segments_started {
        *histogram.entry(s).or_insert(0) += 1;
    }
    Ok(SegmentStatistics {
        mean: agg.mean_segments(),
        histogram,
    })
}
