//! Experiment configuration files.
//!
//! Configs are TOML documents. Unknown keys are errors, and every error
//! carries the 1-based line it refers to:
//!
//! ```toml
//! horizon_t = 10000
//! repetitions = 50
//! base_seed = 1
//! output_dir = "out/iid"
//!
//! [generator]
//! type = "iid_bernoulli"        # iid_bernoulli | correlated | alternating_pair | ftl_killer
//! probs = [0.35, 0.4, 0.45, 0.5]
//!
//! [[strategies]]
//! kind = "adahedge"             # ftl | fixed_hedge | oracle_hedge | doubling_hedge | adahedge | variable_hedge
//! phi = 2.0
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::Spanned;

use crate::simulation::{ExperimentConfig, GeneratorSpec};
use crate::strategies::StrategyKind;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    generator: Spanned<RawGenerator>,
    horizon_t: Spanned<i64>,
    repetitions: Spanned<i64>,
    strategies: Spanned<Vec<Spanned<RawStrategy>>>,
    base_seed: Spanned<i64>,
    output_dir: Spanned<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenerator {
    #[serde(rename = "type")]
    kind: Spanned<String>,
    probs: Option<Spanned<Vec<f64>>>,
    hard_prob: Option<Spanned<f64>>,
    p1: Option<Spanned<f64>>,
    p2: Option<Spanned<f64>>,
    a: Option<Spanned<f64>>,
    b: Option<Spanned<f64>>,
    eps: Option<Spanned<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStrategy {
    kind: Spanned<String>,
    eta: Option<Spanned<f64>>,
    phi: Option<Spanned<f64>>,
}

/// Maps byte offsets to 1-based line numbers.
struct Lines<'a>(&'a str);

impl Lines<'_> {
    fn line(&self, span: Range<usize>) -> usize {
        let end = span.start.min(self.0.len());
        self.0[..end].bytes().filter(|&b| b == b'\n').count() + 1
    }

    fn err<T>(&self, span: Range<usize>, message: impl Into<String>) -> Result<T, ConfigError> {
        Err(ConfigError {
            line: Some(self.line(span)),
            message: message.into(),
        })
    }
}

fn required<'a, T>(
    lines: &Lines<'_>,
    owner: Range<usize>,
    value: &'a Option<Spanned<T>>,
    what: &str,
) -> Result<&'a Spanned<T>, ConfigError> {
    match value {
        Some(v) => Ok(v),
        None => lines.err(owner, format!("missing key `{what}`")),
    }
}

fn forbid<T>(
    lines: &Lines<'_>,
    value: &Option<Spanned<T>>,
    key: &str,
    context: &str,
) -> Result<(), ConfigError> {
    match value {
        Some(v) => lines.err(v.span(), format!("key `{key}` is not used by {context}")),
        None => Ok(()),
    }
}

fn probability(lines: &Lines<'_>, v: &Spanned<f64>, key: &str) -> Result<f64, ConfigError> {
    let p = *v.get_ref();
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        lines.err(v.span(), format!("`{key}` must be in [0, 1], got {p}"))
    }
}

fn parse_generator(
    lines: &Lines<'_>,
    g: &Spanned<RawGenerator>,
) -> Result<GeneratorSpec, ConfigError> {
    let span = g.span();
    let raw = g.get_ref();
    let kind = raw.kind.get_ref().as_str();
    let ctx = format!("generator `{kind}`");
    let spec = match kind {
        "iid_bernoulli" => {
            for (key, v) in [
                ("hard_prob", &raw.hard_prob),
                ("p1", &raw.p1),
                ("p2", &raw.p2),
                ("a", &raw.a),
                ("b", &raw.b),
                ("eps", &raw.eps),
            ] {
                forbid(lines, v, key, &ctx)?;
            }
            let probs = required(lines, span.clone(), &raw.probs, "probs")?;
            if probs.get_ref().len() < 2 {
                return lines.err(probs.span(), "`probs` needs at least 2 actions");
            }
            for &p in probs.get_ref() {
                if !(0.0..=1.0).contains(&p) {
                    return lines.err(
                        probs.span(),
                        format!("`probs` entries must be in [0, 1], got {p}"),
                    );
                }
            }
            GeneratorSpec::IidBernoulli {
                probs: probs.get_ref().clone(),
            }
        }
        "correlated" => {
            for (key, v) in [("a", &raw.a), ("b", &raw.b), ("eps", &raw.eps)] {
                forbid(lines, v, key, &ctx)?;
            }
            forbid(lines, &raw.probs, "probs", &ctx)?;
            GeneratorSpec::Correlated {
                hard_prob: probability(
                    lines,
                    required(lines, span.clone(), &raw.hard_prob, "hard_prob")?,
                    "hard_prob",
                )?,
                p1: probability(lines, required(lines, span.clone(), &raw.p1, "p1")?, "p1")?,
                p2: probability(lines, required(lines, span.clone(), &raw.p2, "p2")?, "p2")?,
            }
        }
        "alternating_pair" => {
            for (key, v) in [
                ("hard_prob", &raw.hard_prob),
                ("p1", &raw.p1),
                ("p2", &raw.p2),
            ] {
                forbid(lines, v, key, &ctx)?;
            }
            forbid(lines, &raw.probs, "probs", &ctx)?;
            let spec = GeneratorSpec::AlternatingPair {
                a: *required(lines, span.clone(), &raw.a, "a")?.get_ref(),
                b: *required(lines, span.clone(), &raw.b, "b")?.get_ref(),
                eps: *required(lines, span.clone(), &raw.eps, "eps")?.get_ref(),
            };
            if let Err(e) = spec.validate() {
                return lines.err(span, e.to_string());
            }
            spec
        }
        "ftl_killer" => {
            for (key, v) in [
                ("hard_prob", &raw.hard_prob),
                ("p1", &raw.p1),
                ("p2", &raw.p2),
                ("a", &raw.a),
                ("b", &raw.b),
                ("eps", &raw.eps),
            ] {
                forbid(lines, v, key, &ctx)?;
            }
            forbid(lines, &raw.probs, "probs", &ctx)?;
            GeneratorSpec::FtlKiller
        }
        other => {
            return lines.err(
                raw.kind.span(),
                format!(
                    "unknown generator type `{other}` (expected iid_bernoulli, correlated, \
                     alternating_pair or ftl_killer)"
                ),
            )
        }
    };
    Ok(spec)
}

fn parse_strategy(
    lines: &Lines<'_>,
    s: &Spanned<RawStrategy>,
) -> Result<StrategyKind, ConfigError> {
    let raw = s.get_ref();
    let name = raw.kind.get_ref().as_str();
    let ctx = format!("strategy `{name}`");
    let phi = |lines: &Lines<'_>| -> Result<f64, ConfigError> {
        forbid(lines, &raw.eta, "eta", &ctx)?;
        match &raw.phi {
            None => Ok(2.0),
            Some(v) if *v.get_ref() > 1.0 && v.get_ref().is_finite() => Ok(*v.get_ref()),
            Some(v) => lines.err(v.span(), format!("`phi` must be > 1, got {}", v.get_ref())),
        }
    };
    let plain = |lines: &Lines<'_>, kind| -> Result<StrategyKind, ConfigError> {
        forbid(lines, &raw.eta, "eta", &ctx)?;
        forbid(lines, &raw.phi, "phi", &ctx)?;
        Ok(kind)
    };
    match name {
        "ftl" => plain(lines, StrategyKind::FollowTheLeader),
        "oracle_hedge" => plain(lines, StrategyKind::OracleHedge),
        "variable_hedge" => plain(lines, StrategyKind::VariableHedge),
        "fixed_hedge" => {
            forbid(lines, &raw.phi, "phi", &ctx)?;
            let eta = required(lines, s.span(), &raw.eta, "eta")?;
            if !(eta.get_ref().is_finite() && *eta.get_ref() > 0.0) {
                return lines.err(
                    eta.span(),
                    format!("`eta` must be > 0, got {}", eta.get_ref()),
                );
            }
            Ok(StrategyKind::FixedHedge {
                eta: *eta.get_ref(),
            })
        }
        "doubling_hedge" => Ok(StrategyKind::DoublingHedge { phi: phi(lines)? }),
        "adahedge" => Ok(StrategyKind::AdaHedge { phi: phi(lines)? }),
        other => lines.err(
            raw.kind.span(),
            format!(
                "unknown strategy kind `{other}` (expected ftl, fixed_hedge, oracle_hedge, \
                 doubling_hedge, adahedge or variable_hedge)"
            ),
        ),
    }
}

/// Parses and validates a config document. Relative output directories are
/// kept as written.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let lines = Lines(text);
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError {
        line: e.span().map(|s| lines.line(s)),
        message: e.message().trim().to_string(),
    })?;

    let positive = |v: &Spanned<i64>, key: &str| -> Result<usize, ConfigError> {
        match usize::try_from(*v.get_ref()) {
            Ok(n) if n >= 1 => Ok(n),
            _ => lines.err(
                v.span(),
                format!("`{key}` must be >= 1, got {}", v.get_ref()),
            ),
        }
    };
    let horizon = positive(&raw.horizon_t, "horizon_t")?;
    let repetitions = positive(&raw.repetitions, "repetitions")?;
    // TOML integers are signed 64-bit; negative seeds are reinterpreted bitwise.
    let base_seed = *raw.base_seed.get_ref() as u64;

    let generator = parse_generator(&lines, &raw.generator)?;

    if raw.strategies.get_ref().is_empty() {
        return lines.err(raw.strategies.span(), "at least one strategy is required");
    }
    let mut strategies = Vec::new();
    let mut labels = BTreeSet::new();
    for s in raw.strategies.get_ref() {
        let kind = parse_strategy(&lines, s)?;
        if !labels.insert(kind.label()) {
            return lines.err(s.span(), format!("duplicate strategy `{}`", kind.label()));
        }
        strategies.push(kind);
    }

    if raw.output_dir.get_ref().is_empty() {
        return lines.err(raw.output_dir.span(), "`output_dir` must not be empty");
    }

    let cfg = ExperimentConfig {
        generator,
        horizon,
        repetitions,
        strategies,
        base_seed,
        output_dir: PathBuf::from(raw.output_dir.get_ref()),
    };
    cfg.validate().map_err(|e| ConfigError {
        line: None,
        message: e.to_string(),
    })?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        line: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const IID: &str = r#"# Experiment I
horizon_t = 100
repetitions = 3
base_seed = 7
output_dir = "out"

[generator]
type = "iid_bernoulli"
probs = [0.35, 0.4, 0.45, 0.5]

[[strategies]]
kind = "ftl"

[[strategies]]
kind = "adahedge"
phi = 1.5

[[strategies]]
kind = "fixed_hedge"
eta = 0.25
"#;

    #[test]
    fn parses_full_config() {
        let cfg = parse_config(IID).unwrap();
        assert_eq!(cfg.horizon, 100);
        assert_eq!(cfg.repetitions, 3);
        assert_eq!(cfg.base_seed, 7);
        assert_eq!(cfg.generator, GeneratorSpec::iid_experiment());
        assert_eq!(
            cfg.strategies,
            vec![
                StrategyKind::FollowTheLeader,
                StrategyKind::AdaHedge { phi: 1.5 },
                StrategyKind::FixedHedge { eta: 0.25 }
            ]
        );
    }

    fn line_of(text: &str) -> Option<usize> {
        parse_config(text).unwrap_err().line
    }

    #[test]
    fn unknown_top_level_key() {
        let text = IID.replace("base_seed = 7", "base_seed = 7\ncolour = \"red\"");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.line, Some(5), "{err}");
        assert!(err.message.contains("colour"), "{err}");
    }

    #[test]
    fn unknown_strategy_key() {
        let text = IID.replace("phi = 1.5", "phi = 1.5\nrate = 3");
        assert_eq!(line_of(&text), Some(17));
    }

    #[test]
    fn bad_values_point_at_their_line() {
        assert_eq!(
            line_of(&IID.replace("horizon_t = 100", "horizon_t = 0")),
            Some(2)
        );
        assert_eq!(
            line_of(&IID.replace("repetitions = 3", "repetitions = -1")),
            Some(3)
        );
        assert_eq!(line_of(&IID.replace("phi = 1.5", "phi = 1.0")), Some(16));
        assert_eq!(line_of(&IID.replace("eta = 0.25", "eta = 0")), Some(20));
        assert_eq!(line_of(&IID.replace("0.45, 0.5]", "0.45, 1.5]")), Some(9));
        assert_eq!(line_of(&IID.replace("\"ftl\"", "\"ftx\"")), Some(12));
        assert_eq!(
            line_of(&IID.replace("probs = [0.35, 0.4, 0.45, 0.5]", "probs = [0.3]\neps = 0.1")),
            Some(10)
        );
    }

    #[test]
    fn missing_and_duplicate() {
        let err = parse_config(&IID.replace("repetitions = 3\n", "")).unwrap_err();
        assert!(err.message.contains("repetitions"), "{err}");
        let dup = format!("{IID}\n[[strategies]]\nkind = \"ftl\"\n");
        assert_eq!(line_of(&dup), Some(22));
        let err = parse_config(&IID.replace("eta = 0.25", "")).unwrap_err();
        assert!(err.message.contains("eta"), "{err}");
    }

    #[test]
    fn other_generators() {
        let base = "horizon_t = 10\nrepetitions = 1\nbase_seed = 0\noutput_dir = \"o\"\n[[strategies]]\nkind = \"ftl\"\n";
        let cfg = parse_config(&format!("{base}[generator]\ntype = \"ftl_killer\"\n")).unwrap();
        assert_eq!(cfg.generator, GeneratorSpec::FtlKiller);
        let cfg = parse_config(&format!(
            "{base}[generator]\ntype = \"correlated\"\nhard_prob = 0.3\np1 = 0.01\np2 = 0.02\n"
        ))
        .unwrap();
        assert_eq!(cfg.generator, GeneratorSpec::correlated_experiment());
        let cfg = parse_config(&format!(
            "{base}[generator]\ntype = \"alternating_pair\"\na = 0.2\nb = 0.6\neps = 0.1\n"
        ))
        .unwrap();
        assert_eq!(
            cfg.generator,
            GeneratorSpec::AlternatingPair {
                a: 0.2,
                b: 0.6,
                eps: 0.1
            }
        );
        let err = parse_config(&format!(
            "{base}[generator]\ntype = \"alternating_pair\"\na = 0.2\nb = 0.3\neps = 0.1\n"
        ))
        .unwrap_err();
        assert_eq!(err.line, Some(7));
    }

    #[test]
    fn syntax_error_has_line() {
        let err = parse_config("horizon_t = 10\nrepetitions = = 1\n").unwrap_err();
        assert_eq!(err.line, Some(2), "{err}");
    }
}
