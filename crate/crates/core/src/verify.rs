//! Cross-module property suites behind `adahedge verify`.
//!
//! Every randomized property derives sample `i` from the seed `seed + i`, so
//! a failure reports the seed of its first failing sample and rerunning with
//! `--seed <that seed>` reproduces it as sample 0.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::bounds;
use crate::error::Result;
use crate::hedge::{self, CumulativeLoss, LossVector, WeightSnapshot};
use crate::report::format_sig;
use crate::simulation::{self, ExperimentConfig, GeneratorSpec};
use crate::strategies::{self, Strategy, StrategyKind};

/// Mean number of AdaHedge segments reported for the correlated experiment.
pub const EXPERIMENT_II_REFERENCE_SEGMENTS: f64 = 2.265;

const GOLDEN_RATIO: f64 = 1.618_033_988_749_895;
const WINDOW_ROUND_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Quick,
    Full,
}

/// Sample sizes for one scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleCounts {
    pub gap_samples: u64,
    pub streams: u64,
    pub window_streams: u64,
    pub lemma3_horizon: usize,
    pub intro_horizon: usize,
}

impl Scale {
    pub fn counts(self) -> SampleCounts {
        match self {
            Scale::Quick => SampleCounts {
                gap_samples: 20_000,
                streams: 20,
                window_streams: 20,
                lemma3_horizon: 2_000,
                intro_horizon: 10_000,
            },
            Scale::Full => SampleCounts {
                gap_samples: 100_000,
                streams: 100,
                window_streams: 100,
                lemma3_horizon: 10_000,
                intro_horizon: 100_000,
            },
        }
    }
}

pub type GapBound = fn(f64, f64) -> Result<f64>;

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub scale: Scale,
    pub seed: u64,
    /// Per-round gap bound checked by the posterior-sensitive property.
    /// Replaceable so the suite itself can be mutation tested.
    pub gap_bound: GapBound,
}

impl VerifyOptions {
    pub fn new(scale: Scale, seed: u64) -> Self {
        Self {
            scale,
            seed,
            gap_bound: bounds::lemma4_bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    /// Seed that replays the first failure, for randomized properties.
    pub failing_seed: Option<u64>,
}

impl PropertyReport {
    fn pass(name: &'static str, detail: String) -> Self {
        Self {
            name,
            passed: true,
            detail,
            failing_seed: None,
        }
    }

    fn fail(name: &'static str, seed: Option<u64>, detail: String) -> Self {
        Self {
            name,
            passed: false,
            detail,
            failing_seed: seed,
        }
    }
}

fn rng_for(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

fn uniform(rng: &mut Xoshiro256PlusPlus) -> f64 {
    rng.random::<f64>()
}

/// A uniformly random point of the simplex.
fn simplex(rng: &mut Xoshiro256PlusPlus, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -(1.0 - uniform(rng)).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// One `(w, l, eta)` case for the per-round gap properties. Mixes generic
/// cases with near-degenerate posteriors and 0/1 losses, which is where the
/// posterior-sensitive bound is tight.
pub fn sample_gap_case(seed: u64, eta_max: f64) -> Result<(WeightSnapshot, LossVector, f64)> {
    let mut rng = rng_for(seed);
    let k = rng.random_range(2..=8usize);
    let eta = eta_max * (1.0 - uniform(&mut rng));
    let (w, l) = match rng.random_range(0..3u8) {
        0 => {
            let w = simplex(&mut rng, k);
            let l = (0..k).map(|_| uniform(&mut rng)).collect();
            (w, l)
        }
        1 => {
            let leader = rng.random_range(0..k);
            let tail_mass = 0.5 * 10f64.powf(-6.0 * uniform(&mut rng));
            let tail = simplex(&mut rng, k - 1);
            let mut w = Vec::with_capacity(k);
            let mut rest = tail.iter();
            for j in 0..k {
                if j == leader {
                    w.push(1.0 - tail_mass);
                } else {
                    w.push(tail_mass * rest.next().expect("k - 1 tail weights"));
                }
            }
            let l = if rng.random_bool(0.5) {
                (0..k)
                    .map(|j| if j == leader { 1.0 } else { 0.0 })
                    .collect()
            } else {
                (0..k)
                    .map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })
                    .collect()
            };
            (w, l)
        }
        _ => {
            let w = simplex(&mut rng, k);
            let l = (0..k)
                .map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 })
                .collect();
            (w, l)
        }
    };
    Ok((WeightSnapshot::from_weights(&w)?, LossVector::new(l)?, eta))
}

fn gap_range(opts: &VerifyOptions) -> Result<PropertyReport> {
    const NAME: &str = "gap-range";
    let n = opts.scale.counts().gap_samples;
    for i in 0..n {
        let seed = opts.seed.wrapping_add(i);
        let (w, l, eta) = sample_gap_case(seed, 4.0)?;
        let delta = hedge::mixability_gap(&w, &l, eta)?.delta;
        if !(delta >= 0.0 && delta <= eta / 8.0 + hedge::OP_TOLERANCE) {
            return Ok(PropertyReport::fail(
                NAME,
                Some(seed),
                format!("gap {delta:e} outside [0, eta/8] at eta {eta}"),
            ));
        }
    }
    Ok(PropertyReport::pass(
        NAME,
        format!("{n} samples, 0 <= gap <= eta/8"),
    ))
}

fn posterior_gap(opts: &VerifyOptions) -> Result<PropertyReport> {
    const NAME: &str = "posterior-gap";
    let n = opts.scale.counts().gap_samples;
    for i in 0..n {
        let seed = opts.seed.wrapping_add(i);
        let (w, l, eta) = sample_gap_case(seed, 1.0)?;
        let delta = hedge::mixability_gap(&w, &l, eta)?.delta;
        let bound = (opts.gap_bound)(eta, w.max_weight())?;
        if delta > bound + hedge::OP_TOLERANCE {
            return Ok(PropertyReport::fail(
                NAME,
                Some(seed),
                format!(
                    "gap {delta:e} exceeds bound {bound:e} at eta {eta}, w* {}",
                    w.max_weight()
                ),
            ));
        }
    }
    Ok(PropertyReport::pass(
        NAME,
        format!("{n} samples, gap <= (e-2) eta (1-w*)"),
    ))
}

fn random_stream(seed: u64, horizon: usize, k: usize) -> Result<Vec<LossVector>> {
    let mut rng = rng_for(seed);
    let binary = rng.random_bool(0.5);
    (0..horizon)
        .map(|_| {
            let row = (0..k)
                .map(|_| {
                    let u = uniform(&mut rng);
                    if binary {
                        if u < 0.5 {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        u
                    }
                })
                .collect();
            LossVector::new(row)
        })
        .collect()
}

const STREAM_HORIZON: usize = 200;
const STREAM_ACTIONS: usize = 5;
const STREAM_ETAS: [f64; 2] = [1.0, 0.3];

fn factorization(opts: &VerifyOptions) -> Result<PropertyReport> {
    const NAME: &str = "factorization";
    let n = opts.scale.counts().streams;
    let mut worst = 0.0f64;
    for i in 0..n {
        let seed = opts.seed.wrapping_add(i);
        let stream = random_stream(seed, STREAM_HORIZON, STREAM_ACTIONS)?;
        for eta in STREAM_ETAS {
            let mut w = WeightSnapshot::uniform(STREAM_ACTIONS);
            let mut cum = CumulativeLoss::zeros(STREAM_ACTIONS)?;
            let mut sum = 0.0;
            for l in &stream {
                sum += hedge::log_mix(&w, l, eta)?;
                w = hedge::posterior_update(&w, l, eta)?;
                cum.add(l)?;
            }
            let direct = hedge::log_marginal_likelihood(&cum, eta)?;
            let err = (direct - sum).abs();
            worst = worst.max(err);
            if err >= hedge::ACCUMULATED_TOLERANCE {
                return Ok(PropertyReport::fail(
                    NAME,
                    Some(seed),
                    format!("|ln B_T - sum ln mix| = {err:e} at eta {eta}"),
                ));
            }
        }
    }
    Ok(PropertyReport::pass(
        NAME,
        format!("{n} streams, worst error {worst:.1e}"),
    ))
}

fn cumulative_gap(opts: &VerifyOptions) -> Result<PropertyReport> {
    const NAME: &str = "cumulative-gap";
    let n = opts.scale.counts().streams;
    for i in 0..n {
        let seed = opts.seed.wrapping_add(i);
        let stream = random_stream(seed, STREAM_HORIZON, STREAM_ACTIONS)?;
        for eta in STREAM_ETAS {
            let mut hedge = Strategy::new(StrategyKind::FixedHedge { eta }, STREAM_ACTIONS)?;
            for (t, l) in stream.iter().enumerate() {
                hedge.act()?;
                hedge.observe(l)?;
                let bound = bounds::lemma2_bound(eta, hedge.cumulative().best(), STREAM_ACTIONS)?;
                if hedge.delta_sum() > bound + hedge::ACCUMULATED_TOLERANCE {
                    return Ok(PropertyReport::fail(
                        NAME,
                        Some(seed),
                        format!(
                            "cumulative gap {} exceeds {bound} after round {} at eta {eta}",
                            hedge.delta_sum(),
                            t + 1
                        ),
                    ));
                }
            }
        }
    }
    Ok(PropertyReport::pass(
        NAME,
        format!("{n} streams, every prefix within bound"),
    ))
}

/// Plays `strategy` against an adaptive adversary that hands the largest of
/// `K` fresh uniform losses to the currently heaviest action, the next largest
/// to the next heaviest, and so on. Stops when `stop` returns true or after
/// `cap` rounds; returns the agent's cumulative loss.
fn play_adversary(
    strategy: &mut Strategy,
    rng: &mut Xoshiro256PlusPlus,
    cap: usize,
    mut stop: impl FnMut(&Strategy, f64) -> bool,
) -> Result<f64> {
    let k = strategy.num_actions();
    let mut agent = 0.0;
    for _ in 0..cap {
        let w = strategy.act()?;
        let weights = w.weights();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
        let mut draws: Vec<f64> = (0..k).map(|_| uniform(rng)).collect();
        draws.sort_by(|a, b| b.total_cmp(a));
        let mut row = vec![0.0; k];
        for (&action, &d) in order.iter().zip(&draws) {
            row[action] = d;
        }
        agent += strategy.observe(&LossVector::new(row)?)?;
        if stop(strategy, agent) {
            break;
        }
    }
    Ok(agent)
}

fn budget_window(opts: &VerifyOptions) -> Result<PropertyReport> {
    const NAME: &str = "budget-window";
    let n = opts.scale.counts().window_streams;
    for i in 0..n {
        let seed = opts.seed.wrapping_add(i);
        for eta in [1.0, 0.5, 0.25] {
            let mut rng = rng_for(seed);
            let k = rng.random_range(2..=8usize);
            let budget = bounds::budget(eta, k)?;
            let mut hedge = Strategy::new(StrategyKind::FixedHedge { eta }, k)?;
            let agent = play_adversary(&mut hedge, &mut rng, WINDOW_ROUND_CAP, |s, _| {
                s.delta_sum() >= budget
            })?;
            let gap = hedge.delta_sum();
            let lstar = hedge.cumulative().best();
            let regret = agent - lstar;
            let fail = |msg: String| {
                Ok(PropertyReport::fail(
                    NAME,
                    Some(seed),
                    format!("{msg} (K {k}, eta {eta})"),
                ))
            };
            if gap < budget {
                return fail(format!(
                    "budget {budget} not depleted in {WINDOW_ROUND_CAP} rounds"
                ));
            }
            if gap >= budget + eta / 8.0 {
                return fail(format!(
                    "window overshoot: gap {gap} >= budget {budget} + eta/8"
                ));
            }
            let bound = bounds::theorem1_bound(lstar, k)?;
            if regret >= bound {
                return fail(format!("regret {regret} >= {bound} at L* {lstar}"));
            }
        }
    }
    Ok(PropertyReport::pass(
        NAME,
        format!("{n} adversarial streams per eta in {{1, 1/2, 1/4}}"),
    ))
}

/// Checks the segment-count regret cap at every round of one run.
fn check_segment_cap(
    kind: StrategyKind,
    phi: f64,
    losses: &[LossVector],
) -> Result<Option<String>> {
    let k = losses[0].len();
    let mut ada = Strategy::new(kind, k)?;
    let mut agent = 0.0;
    for (t, l) in losses.iter().enumerate() {
        ada.act()?;
        agent += ada.observe(l)?;
        let regret = agent - ada.cumulative().best();
        let cap = bounds::lemma3_bound(ada.segment(), k, phi)?;
        if regret >= cap {
            return Ok(Some(format!(
                "regret {regret} >= {cap} in segment {} at round {}",
                ada.segment(),
                t + 1
            )));
        }
    }
    Ok(None)
}

fn segment_cap(opts: &VerifyOptions) -> Result<PropertyReport> {
    const NAME: &str = "segment-cap";
    let counts = opts.scale.counts();
    let horizon = counts.lemma3_horizon;
    let mut runs = 0;
    for phi in [1.5, GOLDEN_RATIO, 2.0, 3.0] {
        let kind = StrategyKind::AdaHedge { phi };
        let fixed = [
            GeneratorSpec::FtlKiller,
            GeneratorSpec::AlternatingPair {
                a: 0.2,
                b: 0.6,
                eps: 0.1,
            },
        ];
        for spec in &fixed {
            let losses = simulation::generate(spec, horizon, 0)?;
            runs += 1;
            if let Some(msg) = check_segment_cap(kind, phi, &losses)? {
                return Ok(PropertyReport::fail(
                    NAME,
                    None,
                    format!("{msg} (phi {phi}, {spec:?})"),
                ));
            }
        }
        for i in 0..counts.streams.min(20) {
            let seed = opts.seed.wrapping_add(i);
            for spec in [
                GeneratorSpec::iid_experiment(),
                GeneratorSpec::correlated_experiment(),
            ] {
                let losses = simulation::generate(&spec, horizon, seed)?;
                runs += 1;
                if let Some(msg) = check_segment_cap(kind, phi, &losses)? {
                    return Ok(PropertyReport::fail(
                        NAME,
                        Some(seed),
                        format!("{msg} (phi {phi}, {spec:?})"),
                    ));
                }
            }
            let mut rng = rng_for(seed);
            let k = rng.random_range(2..=8usize);
            let mut ada = Strategy::new(kind, k)?;
            let mut failure = None;
            play_adversary(&mut ada, &mut rng, horizon, |s, agent| {
                let regret = agent - s.cumulative().best();
                match bounds::lemma3_bound(s.segment(), k, phi) {
                    Ok(cap) if regret < cap => false,
                    Ok(cap) => {
                        failure = Some(format!(
                            "regret {regret} >= {cap} in segment {}",
                            s.segment()
                        ));
                        true
                    }
                    Err(e) => {
                        failure = Some(e.to_string());
                        true
                    }
                }
            })?;
            runs += 1;
            if let Some(msg) = failure {
                return Ok(PropertyReport::fail(
                    NAME,
                    Some(seed),
                    format!("{msg} (phi {phi}, adversarial K {k})"),
                ));
            }
        }
    }
    Ok(PropertyReport::pass(
        NAME,
        format!("{runs} AdaHedge runs, cap holds every round"),
    ))
}

fn easy_example(opts: &VerifyOptions) -> Result<PropertyReport> {
    const NAME: &str = "easy-example";
    let horizon = opts.scale.counts().intro_horizon;
    let spec = GeneratorSpec::AlternatingPair {
        a: 0.2,
        b: 0.6,
        eps: 0.1,
    };
    let losses = simulation::generate(&spec, horizon, 0)?;
    let ftl = strategies::run(StrategyKind::FollowTheLeader, &losses)?;
    let worst_ftl = ftl
        .rows
        .iter()
        .map(|r| r.regret)
        .fold(f64::NEG_INFINITY, f64::max);
    if worst_ftl > 1.0 {
        return Ok(PropertyReport::fail(
            NAME,
            None,
            format!("FTL regret reached {worst_ftl} > 1"),
        ));
    }
    let ada = strategies::run(StrategyKind::AdaHedge { phi: 2.0 }, &losses)?;
    let cap = bounds::intro_mstar(0.2, 2.0)?;
    let segments = ada.segments_started();
    if i64::from(segments) > cap {
        return Ok(PropertyReport::fail(
            NAME,
            None,
            format!("AdaHedge started {segments} > {cap} segments"),
        ));
    }
    let early = ada
        .regret_at((horizon / 10) as u64)
        .expect("round within horizon");
    let late = ada.final_regret();
    if (late - early).abs() >= 0.5 {
        return Ok(PropertyReport::fail(
            NAME,
            None,
            format!(
                "AdaHedge regret moved from {early} to {late} between rounds {} and {horizon}",
                horizon / 10
            ),
        ));
    }
    Ok(PropertyReport::pass(
        NAME,
        format!(
            "FTL regret <= {worst_ftl:.3}, AdaHedge {segments} segments, regret {late:.3} flat"
        ),
    ))
}

fn ftl_lower_bound(_opts: &VerifyOptions) -> Result<PropertyReport> {
    const NAME: &str = "ftl-lower-bound";
    let horizon = 1000;
    let losses = simulation::generate(&GeneratorSpec::FtlKiller, horizon, 0)?;
    let ftl = strategies::run(StrategyKind::FollowTheLeader, &losses)?.final_regret();
    let floor = horizon as f64 / 2.0 - 1.0;
    if ftl < floor {
        return Ok(PropertyReport::fail(
            NAME,
            None,
            format!("FTL regret {ftl} < {floor}"),
        ));
    }
    let ada = strategies::run(StrategyKind::AdaHedge { phi: 2.0 }, &losses)?;
    let cap = bounds::lemma3_bound(ada.segments_started(), 2, 2.0)?;
    if ada.final_regret() > cap {
        return Ok(PropertyReport::fail(
            NAME,
            None,
            format!("AdaHedge regret {} > {cap}", ada.final_regret()),
        ));
    }
    Ok(PropertyReport::pass(
        NAME,
        format!(
            "FTL regret {ftl} >= {floor}, AdaHedge regret {:.3} <= {cap:.3}",
            ada.final_regret()
        ),
    ))
}

type Property = fn(&VerifyOptions) -> Result<PropertyReport>;

const PROPERTIES: [(&str, Property); 8] = [
    ("gap-range", gap_range),
    ("posterior-gap", posterior_gap),
    ("factorization", factorization),
    ("cumulative-gap", cumulative_gap),
    ("budget-window", budget_window),
    ("segment-cap", segment_cap),
    ("easy-example", easy_example),
    ("ftl-lower-bound", ftl_lower_bound),
];

/// Names of all properties, in the order they run.
pub fn property_names() -> Vec<&'static str> {
    PROPERTIES.iter().map(|(n, _)| *n).collect()
}

/// Runs one property by name.
pub fn run_property(name: &str, opts: &VerifyOptions) -> Option<PropertyReport> {
    let (n, f) = PROPERTIES.iter().find(|(n, _)| *n == name)?;
    Some(f(opts).unwrap_or_else(|e| PropertyReport::fail(n, None, format!("error: {e}"))))
}

/// Mean number of AdaHedge(phi = 2) segments on the correlated experiment at
/// full scale (T = 10^4, 200 repetitions).
pub fn experiment_ii_segments(seed: u64) -> Result<f64> {
    let kind = StrategyKind::AdaHedge { phi: 2.0 };
    let cfg = ExperimentConfig {
        generator: GeneratorSpec::correlated_experiment(),
        horizon: 10_000,
        repetitions: 200,
        strategies: vec![kind],
        base_seed: seed,
        output_dir: Default::default(),
    };
    let result = simulation::run_experiment(&cfg)?;
    Ok(simulation::segment_statistics(&result, kind)?.mean)
}

/// Runs every property, printing one line each. At full scale also prints
/// the correlated experiment's mean segment count beside the reference.
pub fn run_all(opts: &VerifyOptions, out: &mut dyn Write) -> io::Result<Vec<PropertyReport>> {
    let mut reports = Vec::new();
    for name in property_names() {
        let report = run_property(name, opts).expect("listed property");
        if report.passed {
            writeln!(out, "PASS {:<16} {}", report.name, report.detail)?;
        } else {
            write!(out, "FAIL {:<16} {}", report.name, report.detail)?;
            match report.failing_seed {
                Some(seed) => writeln!(out, " [reproduce with --seed {seed}]")?,
                None => writeln!(out, " [deterministic]")?,
            }
        }
        reports.push(report);
    }
    if opts.scale == Scale::Full {
        match experiment_ii_segments(opts.seed) {
            Ok(mean) => writeln!(
                out,
                "INFO correlated experiment: AdaHedge mean segments {} (reference {})",
                format_sig(mean),
                EXPERIMENT_II_REFERENCE_SEGMENTS
            )?,
            Err(e) => writeln!(out, "INFO correlated experiment failed: {e}")?,
        }
    }
    Ok(reports)
}
