//! CSV and SVG output for aggregated experiments.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::simulation::{AggregateResult, StrategyAggregate};

pub const TRACE_HEADER: [&str; 5] = [
    "round",
    "mean_regret",
    "mean_cum_loss",
    "mean_eta",
    "segment_events",
];
pub const SUMMARY_HEADER: [&str; 6] = [
    "strategy",
    "final_mean_regret",
    "mean_segments",
    "repetitions",
    "horizon",
    "seed",
];

const SVG_WIDTH: f64 = 800.0;
const SVG_HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 50.0;
const MAX_POINTS: usize = 1000;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Formats with 9 significant digits, like C's `%.9g`.
pub fn format_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        return format!("{}e{exp}", trim_zeros(mantissa));
    }
    let decimals = (8 - exp) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn trace_file_name(agg: &StrategyAggregate) -> String {
    format!("trace_{}.csv", agg.kind.label())
}

pub fn write_trace(path: &Path, agg: &StrategyAggregate) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRACE_HEADER)?;
    for t in 0..agg.mean_regret.len() {
        w.write_record([
            (t + 1).to_string(),
            format_sig(agg.mean_regret[t]),
            format_sig(agg.mean_cum_loss[t]),
            format_sig(agg.mean_eta[t]),
            agg.segment_events[t].to_string(),
        ])?;
    }
    w.flush()
}

pub fn write_summary(path: &Path, result: &AggregateResult) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for agg in &result.strategies {
        w.write_record([
            agg.kind.label(),
            format_sig(agg.final_mean_regret()),
            format_sig(agg.mean_segments()),
            result.repetitions.to_string(),
            result.horizon.to_string(),
            result.base_seed.to_string(),
        ])?;
    }
    w.flush()
}

/// Rounds (1-based) to plot: all of them when short, otherwise an evenly
/// (or geometrically, for a log axis) spaced subset that keeps both ends.
fn sample_rounds(horizon: usize, log_x: bool) -> Vec<usize> {
    if horizon <= MAX_POINTS {
        return (1..=horizon).collect();
    }
    let mut rounds: Vec<usize> = (0..MAX_POINTS)
        .map(|i| {
            let f = i as f64 / (MAX_POINTS - 1) as f64;
            let r = if log_x {
                (horizon as f64).powf(f)
            } else {
                1.0 + f * (horizon - 1) as f64
            };
            (r.round() as usize).clamp(1, horizon)
        })
        .collect();
    rounds.dedup();
    rounds
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders mean regret against round, one polyline per strategy.
pub fn render_svg(result: &AggregateResult, log_x: bool) -> String {
    let horizon = result.horizon.max(1);
    let rounds = sample_rounds(horizon, log_x);
    let finite = result
        .strategies
        .iter()
        .flat_map(|s| rounds.iter().map(move |&r| s.mean_regret[r - 1]))
        .filter(|v| v.is_finite());
    let (mut y_min, mut y_max) =
        finite.fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if y_max - y_min < 1e-12 {
        y_max = y_min + 1.0;
    }
    let pad = 0.05 * (y_max - y_min);
    y_max += pad;
    if y_min < 0.0 {
        y_min -= pad;
    }

    let plot_w = SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = SVG_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |round: usize| -> f64 {
        let f = if horizon == 1 {
            0.0
        } else if log_x {
            (round as f64).ln() / (horizon as f64).ln()
        } else {
            (round - 1) as f64 / (horizon - 1) as f64
        };
        MARGIN_LEFT + f * plot_w
    };
    let y_of = |v: f64| -> f64 { MARGIN_TOP + (1.0 - (v - y_min) / (y_max - y_min)) * plot_h };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );

    for i in 0..=4 {
        let v = y_min + (y_max - y_min) * i as f64 / 4.0;
        let y = y_of(v);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 6.0,
            y + 4.0,
            format_tick(v)
        );
    }
    let x_ticks: Vec<usize> = if log_x {
        std::iter::successors(Some(1usize), |&r| r.checked_mul(10))
            .take_while(|&r| r <= horizon)
            .collect()
    } else {
        (0..=4).map(|i| 1 + (horizon - 1) * i / 4).collect()
    };
    for r in x_ticks {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{r}</text>"#,
            x_of(r),
            MARGIN_TOP + plot_h + 16.0
        );
    }
    let x_label = if log_x { "round (log scale)" } else { "round" };
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x_label}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        SVG_HEIGHT - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">mean regret</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );

    for (i, agg) in result.strategies.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = rounds
            .iter()
            .filter(|&&r| agg.mean_regret[r - 1].is_finite())
            .map(|&r| format!("{:.2},{:.2}", x_of(r), y_of(agg.mean_regret[r - 1])))
            .collect();
        let label = escape(&agg.kind.label());
        let _ = writeln!(
            svg,
            r#"<polyline data-strategy="{label}" fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = MARGIN_TOP + 14.0 + 18.0 * i as f64;
        let lx = SVG_WIDTH - MARGIN_RIGHT + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{:.1}" x2="{}" y2="{:.1}" stroke="{colour}" stroke-width="2"/>"#,
            ly - 4.0,
            lx + 20.0,
            ly - 4.0
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{ly:.1}">{label}</text>"#, lx + 26.0);
    }
    svg.push_str("</svg>\n");
    svg
}

fn format_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    trim_zeros(&s).to_string()
}

/// Writes every trace, the summary and the plot into `dir`, creating it if
/// needed. Returns the paths written.
pub fn write_outputs(
    result: &AggregateResult,
    dir: &Path,
    log_x: bool,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for agg in &result.strategies {
        let path = dir.join(trace_file_name(agg));
        write_trace(&path, agg)?;
        written.push(path);
    }
    let summary = dir.join("summary.csv");
    write_summary(&summary, result)?;
    written.push(summary);
    let svg = dir.join("regret.svg");
    fs::write(&svg, render_svg(result, log_x))?;
    written.push(svg);
    Ok(written)
}
