//! Acceptance criteria, one test each. Every test writes a single
//! `criterion N: PASS|FAIL ...` line straight to stdout, so the lines show up
//! even when the harness captures output.

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use adahedge::hedge::{self, CumulativeLoss, LossVector, WeightSnapshot};
use adahedge::simulation::{self, ExperimentConfig, GeneratorSpec};
use adahedge::strategies::{self, Strategy, StrategyKind};
use adahedge::verify::sample_gap_case;
use adahedge::{bounds, cli};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const GOLDEN_RATIO: f64 = 1.618_033_988_749_895;
const ADAHEDGE: StrategyKind = StrategyKind::AdaHedge { phi: 2.0 };

// Written through the handle rather than `println!` so libtest does not
// capture it.
#[allow(clippy::explicit_write)]
fn verdict(n: u32, failures: &[String], detail: &str) {
    let line = if failures.is_empty() {
        format!("criterion {n}: PASS {detail}")
    } else {
        format!("criterion {n}: FAIL {detail}; {}", failures.join("; "))
    };
    writeln!(std::io::stdout(), "{line}").unwrap();
    assert!(failures.is_empty(), "{line}");
}

fn within(n: u32, failures: &mut Vec<String>, elapsed: Duration, limit_s: f64) {
    if elapsed.as_secs_f64() >= limit_s {
        failures.push(format!(
            "criterion {n} took {:.2} s, limit {limit_s} s",
            elapsed.as_secs_f64()
        ));
    }
}

fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// A uniformly random simplex point and a uniformly random loss vector.
fn plain_gap_case(seed: u64, eta_max: f64) -> (WeightSnapshot, LossVector, f64) {
    let mut r = rng(seed);
    let k = r.random_range(2..=8usize);
    let e: Vec<f64> = (0..k).map(|_| -(1.0 - r.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    let w: Vec<f64> = e.iter().map(|x| x / s).collect();
    let l: Vec<f64> = (0..k).map(|_| r.random::<f64>()).collect();
    let eta = eta_max * (1.0 - r.random::<f64>());
    (
        WeightSnapshot::from_weights(&w).unwrap(),
        LossVector::new(l).unwrap(),
        eta,
    )
}

const GAP_SAMPLES: u64 = 100_000;

/// Runs `check` over `GAP_SAMPLES` plain samples and as many samples
/// concentrated near the tight cases, returning the first failure.
fn over_gap_samples(
    eta_max: f64,
    check: impl Fn(&WeightSnapshot, &LossVector, f64) -> Option<String>,
) -> Vec<String> {
    for i in 0..GAP_SAMPLES {
        let (w, l, eta) = plain_gap_case(1_000 + i, eta_max);
        if let Some(msg) = check(&w, &l, eta) {
            return vec![format!("plain sample {i}: {msg}")];
        }
        let (w, l, eta) = sample_gap_case(1_000 + i, eta_max).unwrap();
        if let Some(msg) = check(&w, &l, eta) {
            return vec![format!("concentrated sample seed {}: {msg}", 1_000 + i)];
        }
    }
    Vec::new()
}

#[test]
fn criterion_01_gap_range() {
    let start = Instant::now();
    let mut failures = over_gap_samples(4.0, |w, l, eta| {
        let d = hedge::mixability_gap(w, l, eta).unwrap().delta;
        (!(0.0..=eta / 8.0 + 1e-12).contains(&d)).then(|| format!("gap {d:e} at eta {eta}"))
    });
    within(1, &mut failures, start.elapsed(), 5.0);
    verdict(
        1,
        &failures,
        &format!("{} samples with 0 <= gap <= eta/8", 2 * GAP_SAMPLES),
    );
}

#[test]
fn criterion_02_posterior_gap() {
    let start = Instant::now();
    let mut failures = over_gap_samples(1.0, |w, l, eta| {
        let d = hedge::mixability_gap(w, l, eta).unwrap().delta;
        let bound = (std::f64::consts::E - 2.0) * eta * (1.0 - w.max_weight());
        (d > bound + 1e-12).then(|| format!("gap {d:e} > {bound:e} at eta {eta}"))
    });
    within(2, &mut failures, start.elapsed(), 5.0);
    verdict(
        2,
        &failures,
        &format!("{} samples with gap <= (e-2) eta (1-w*)", 2 * GAP_SAMPLES),
    );
}

fn random_stream(seed: u64) -> Vec<LossVector> {
    let mut r = rng(seed);
    (0..200)
        .map(|_| LossVector::new((0..5).map(|_| r.random::<f64>()).collect()).unwrap())
        .collect()
}

#[test]
fn criterion_03_factorization() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for s in 0..100 {
        let stream = random_stream(s);
        for eta in [1.0, 0.3] {
            let mut w = WeightSnapshot::uniform(5);
            let mut cum = CumulativeLoss::zeros(5).unwrap();
            let mut sum = 0.0;
            for l in &stream {
                sum += hedge::log_mix(&w, l, eta).unwrap();
                w = hedge::posterior_update(&w, l, eta).unwrap();
                cum.add(l).unwrap();
            }
            // Direct evaluation of ln((1/K) sum_k exp(-eta L_k)).
            let direct = (cum.totals().iter().map(|x| (-eta * x).exp()).sum::<f64>() / 5.0).ln();
            let err = (direct - sum).abs();
            worst = worst.max(err);
            if err >= 1e-9 {
                failures.push(format!("stream {s}, eta {eta}: error {err:e}"));
            }
        }
    }
    within(3, &mut failures, start.elapsed(), 2.0);
    verdict(
        3,
        &failures,
        &format!("100 streams x 2 rates, worst error {worst:.1e}"),
    );
}

#[test]
fn criterion_04_cumulative_gap() {
    let mut failures = Vec::new();
    for s in 0..100 {
        let stream = random_stream(s);
        for eta in [1.0, 0.3] {
            let mut w = WeightSnapshot::uniform(5);
            let mut cum = CumulativeLoss::zeros(5).unwrap();
            let mut gap = 0.0;
            for (t, l) in stream.iter().enumerate() {
                gap += hedge::mixability_gap(&w, l, eta).unwrap().delta;
                w = hedge::posterior_update(&w, l, eta).unwrap();
                cum.add(l).unwrap();
                let bound = (eta * cum.best() + 5f64.ln()) / (std::f64::consts::E - 1.0);
                if gap > bound + 1e-9 {
                    failures.push(format!(
                        "stream {s}, eta {eta}, round {}: {gap} > {bound}",
                        t + 1
                    ));
                    break;
                }
            }
        }
    }
    verdict(
        4,
        &failures,
        "100 streams x 2 rates, every prefix within (eta L* + ln K)/(e-1)",
    );
}

#[test]
fn criterion_05_budget_window() {
    let mut failures = Vec::new();
    let mut rounds_used = Vec::new();
    for s in 0..100u64 {
        for eta in [1.0, 0.5, 0.25] {
            let mut r = rng(10_000 + s);
            let k = r.random_range(2..=8usize);
            let budget = bounds::budget(eta, k).unwrap();
            let mut h = Strategy::new(StrategyKind::FixedHedge { eta }, k).unwrap();
            let mut agent = 0.0;
            let mut rounds = 0;
            // The heaviest action always receives the largest fresh uniform
            // loss, so the gap keeps accumulating until the budget runs out.
            while h.delta_sum() < budget && rounds < 1_000_000 {
                let w = h.act().unwrap().weights();
                let mut order: Vec<usize> = (0..k).collect();
                order.sort_by(|&a, &b| w[b].total_cmp(&w[a]));
                let mut draws: Vec<f64> = (0..k).map(|_| r.random::<f64>()).collect();
                draws.sort_by(|a, b| b.total_cmp(a));
                let mut row = vec![0.0; k];
                for (&a, &d) in order.iter().zip(&draws) {
                    row[a] = d;
                }
                agent += h.observe(&LossVector::new(row).unwrap()).unwrap();
                rounds += 1;
            }
            rounds_used.push(rounds);
            let gap = h.delta_sum();
            let lstar = h.cumulative().best();
            let regret = agent - lstar;
            let bound = bounds::theorem1_bound(lstar, k).unwrap();
            if gap < budget {
                failures.push(format!("stream {s}, eta {eta}: budget never depleted"));
            } else if gap >= budget + eta / 8.0 {
                failures.push(format!(
                    "stream {s}, eta {eta}: gap {gap} >= {budget} + eta/8"
                ));
            } else if regret >= bound {
                failures.push(format!("stream {s}, eta {eta}: regret {regret} >= {bound}"));
            }
        }
    }
    let max_rounds = rounds_used.iter().max().unwrap();
    verdict(
        5,
        &failures,
        &format!("300 windows closed within {max_rounds} rounds"),
    );
}

fn check_segment_caps(
    label: &str,
    phi: f64,
    losses: &[LossVector],
    failures: &mut Vec<String>,
) -> u32 {
    let k = losses[0].len();
    let trace = strategies::run(StrategyKind::AdaHedge { phi }, losses).unwrap();
    for row in &trace.rows {
        let cap = bounds::lemma3_bound(row.segment, k, phi).unwrap();
        if row.regret >= cap {
            failures.push(format!(
                "{label}, phi {phi}: regret {} >= {cap} in segment {} at round {}",
                row.regret, row.segment, row.round
            ));
            break;
        }
    }
    trace.segments_started()
}

#[test]
fn criterion_06_segment_cap() {
    let mut failures = Vec::new();
    let mut runs = 0;
    let mut max_segments = 0;
    for phi in [2.0, GOLDEN_RATIO, 1.2] {
        let mut cases: Vec<(String, Vec<LossVector>)> = vec![
            (
                "ftl-killer".into(),
                simulation::generate(&GeneratorSpec::FtlKiller, 10_000, 0).unwrap(),
            ),
            (
                "easy".into(),
                simulation::generate(
                    &GeneratorSpec::AlternatingPair {
                        a: 0.2,
                        b: 0.6,
                        eps: 0.1,
                    },
                    10_000,
                    0,
                )
                .unwrap(),
            ),
        ];
        for r in 0..50 {
            let seed = simulation::repetition_seed(1, r);
            cases.push((
                format!("iid rep {r}"),
                simulation::generate(&GeneratorSpec::iid_experiment(), 10_000, seed).unwrap(),
            ));
            cases.push((
                format!("correlated rep {r}"),
                simulation::generate(&GeneratorSpec::correlated_experiment(), 10_000, seed)
                    .unwrap(),
            ));
        }
        for r in 0..20 {
            let mut g = rng(r);
            let stream = (0..5_000)
                .map(|_| {
                    let l = (0..3).map(|_| g.random::<f64>()).collect();
                    LossVector::new(l).unwrap()
                })
                .collect();
            cases.push((format!("uniform {r}"), stream));
        }
        for (label, losses) in &cases {
            max_segments = max_segments.max(check_segment_caps(label, phi, losses, &mut failures));
            runs += 1;
        }
    }
    verdict(
        6,
        &failures,
        &format!("{runs} AdaHedge runs checked every round, up to {max_segments} segments"),
    );
}

#[test]
fn criterion_07_easy_example() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let spec = GeneratorSpec::AlternatingPair {
        a: 0.2,
        b: 0.6,
        eps: 0.1,
    };
    let losses = simulation::generate(&spec, 100_000, 0).unwrap();
    let ftl = strategies::run(StrategyKind::FollowTheLeader, &losses).unwrap();
    let ftl_regret = ftl.final_regret();
    if ftl_regret > 1.0 {
        failures.push(format!("FTL regret {ftl_regret} > 1"));
    }
    let ada = strategies::run(ADAHEDGE, &losses).unwrap();
    let segments = ada.segments_started();
    let cap = bounds::intro_mstar(0.2, 2.0).unwrap();
    if i64::from(segments) > cap || segments > 4 {
        failures.push(format!("AdaHedge started {segments} segments, cap {cap}"));
    }
    let r4 = ada.regret_at(10_000).unwrap();
    let r5 = ada.final_regret();
    if (r5 - r4).abs() >= 0.5 {
        failures.push(format!("AdaHedge regret {r4} at 10^4 vs {r5} at 10^5"));
    }
    within(7, &mut failures, start.elapsed(), 5.0);
    verdict(
        7,
        &failures,
        &format!(
            "FTL regret {ftl_regret:.3}, AdaHedge {segments} segments, regret {r4:.4} -> {r5:.4}"
        ),
    );
}

#[test]
fn criterion_08_ftl_worst_case() {
    let mut failures = Vec::new();
    let losses = simulation::generate(&GeneratorSpec::FtlKiller, 1_000, 0).unwrap();
    let ftl = strategies::run(StrategyKind::FollowTheLeader, &losses)
        .unwrap()
        .final_regret();
    if ftl < 499.0 {
        failures.push(format!("FTL regret {ftl} < 499"));
    }
    let ada = strategies::run(ADAHEDGE, &losses).unwrap();
    let m = ada.segments_started();
    let cap = bounds::lemma3_bound(m, 2, 2.0).unwrap();
    if ada.final_regret() > cap {
        failures.push(format!("AdaHedge regret {} > {cap}", ada.final_regret()));
    }
    verdict(
        8,
        &failures,
        &format!(
            "FTL regret {ftl}, AdaHedge regret {:.3} <= {cap:.3} after {m} segments",
            ada.final_regret()
        ),
    );
}

fn five_strategies() -> Vec<StrategyKind> {
    vec![
        StrategyKind::FollowTheLeader,
        StrategyKind::OracleHedge,
        StrategyKind::DoublingHedge { phi: 2.0 },
        ADAHEDGE,
        StrategyKind::VariableHedge,
    ]
}

#[test]
fn criterion_09_experiment_one() {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        generator: GeneratorSpec::iid_experiment(),
        horizon: 10_000,
        repetitions: 50,
        strategies: five_strategies(),
        base_seed: 1,
        output_dir: Default::default(),
    };
    let result = simulation::run_experiment(&cfg).unwrap();
    let mut failures = Vec::new();
    let get = |k| result.strategy(k).unwrap();
    let ada = get(ADAHEDGE);
    let oracle = get(StrategyKind::OracleHedge);
    let ftl = get(StrategyKind::FollowTheLeader);
    if ada.final_mean_regret() >= oracle.final_mean_regret() {
        failures.push(format!(
            "AdaHedge {} >= oracle-rate Hedge {}",
            ada.final_mean_regret(),
            oracle.final_mean_regret()
        ));
    }
    let ftl_rise = ftl.final_mean_regret() - ftl.mean_regret[4_999];
    if ftl_rise >= 1.0 {
        failures.push(format!("FTL regret rose {ftl_rise} after round 5000"));
    }
    let ada_rise = ada.final_mean_regret() - ada.mean_regret[4_999];
    if ada_rise >= 2.0 {
        failures.push(format!("AdaHedge regret rose {ada_rise} after round 5000"));
    }
    within(9, &mut failures, start.elapsed(), 30.0);
    verdict(
        9,
        &failures,
        &format!(
            "AdaHedge {:.3} < oracle-rate Hedge {:.3}; plateau rises FTL {ftl_rise:.3}, AdaHedge {ada_rise:.3}",
            ada.final_mean_regret(),
            oracle.final_mean_regret()
        ),
    );
}

#[test]
fn criterion_10_experiment_two() {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        generator: GeneratorSpec::correlated_experiment(),
        horizon: 10_000,
        repetitions: 200,
        strategies: five_strategies(),
        base_seed: 1,
        output_dir: Default::default(),
    };
    let result = simulation::run_experiment(&cfg).unwrap();
    let mut failures = Vec::new();
    let segments = simulation::segment_statistics(&result, ADAHEDGE)
        .unwrap()
        .mean;
    if (segments - 2.265).abs() > 0.5 {
        failures.push(format!(
            "AdaHedge mean segments {segments} outside 2.265 +/- 0.5"
        ));
    }
    let ftl = result
        .strategy(StrategyKind::FollowTheLeader)
        .unwrap()
        .final_mean_regret();
    let var = result
        .strategy(StrategyKind::VariableHedge)
        .unwrap()
        .final_mean_regret();
    if ftl >= var {
        failures.push(format!("FTL {ftl} >= variable-rate Hedge {var}"));
    }
    within(10, &mut failures, start.elapsed(), 60.0);
    verdict(
        10,
        &failures,
        &format!("AdaHedge mean segments {segments:.3} (reference 2.265), FTL {ftl:.4} vs variable-rate Hedge {var:.4}"),
    );
}

#[test]
fn criterion_11_leading_factor() {
    let mut failures = Vec::new();
    let golden = bounds::theorem2_leading_factor(GOLDEN_RATIO).unwrap();
    let two = bounds::theorem2_leading_factor(2.0).unwrap();
    if !(3.32..=3.34).contains(&golden) {
        failures.push(format!("factor(golden ratio) = {golden}"));
    }
    if !(3.45..=3.47).contains(&two) {
        failures.push(format!("factor(2) = {two}"));
    }
    verdict(
        11,
        &failures,
        &format!("factor(golden ratio) = {golden:.5}, factor(2) = {two:.5}"),
    );
}

fn run_cli_with_threads(threads: &str, out: &Path) -> Vec<(String, Vec<u8>)> {
    let cfg_src = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../experiments/iid.cfg"),
    )
    .unwrap()
    .replace(
        "output_dir = \"out/iid\"",
        &format!("output_dir = \"{}\"", out.display()),
    );
    let cfg = out.with_extension("cfg");
    std::fs::write(&cfg, cfg_src).unwrap();
    // Only this test touches the variable, and it runs the two passes in turn.
    std::env::set_var(cli::THREADS_ENV, threads);
    let (mut stdout, mut stderr) = (Vec::new(), Vec::new());
    let code = cli::run(
        ["adahedge", "run", cfg.to_str().unwrap()],
        &mut stdout,
        &mut stderr,
    );
    std::env::remove_var(cli::THREADS_ENV);
    assert_eq!(code, cli::EXIT_OK, "{}", String::from_utf8_lossy(&stderr));
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_12_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let one = run_cli_with_threads("1", &dir.path().join("one"));
    let four = run_cli_with_threads("4", &dir.path().join("four"));
    let mut failures = Vec::new();
    if one.len() != 6 {
        failures.push(format!("expected 6 CSV files, got {}", one.len()));
    }
    let names: Vec<_> = one.iter().map(|(n, _)| n.clone()).collect();
    if names != four.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>() {
        failures.push("file sets differ".into());
    }
    for ((name, a), (_, b)) in one.iter().zip(&four) {
        if a != b {
            failures.push(format!("{name} differs between 1 and 4 threads"));
        }
    }
    verdict(
        12,
        &failures,
        &format!(
            "{} CSV files byte-identical under 1 and 4 threads",
            one.len()
        ),
    );
}
