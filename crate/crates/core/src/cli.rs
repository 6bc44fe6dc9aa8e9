//! The `adahedge` command line.
//!
//! Exit codes: 0 success, 1 property failure or internal error, 2 bad
//! arguments, config or parameter domain, 3 I/O error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bounds;
use crate::config;
use crate::error::{HedgeError, Result};
use crate::report::{self, format_sig};
use crate::simulation::{self, ExperimentConfig};
use crate::verify::{self, Scale, VerifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "ADAHEDGE_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "adahedge",
    version,
    about = "Hedge and AdaHedge experiments, bounds and checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment config and write traces, a summary and a plot.
    Run {
        config: PathBuf,
        /// Validate the config and print the plan without simulating.
        #[arg(long)]
        dry_run: bool,
        /// Use a logarithmic round axis in the plot.
        #[arg(long)]
        log_x: bool,
    },
    /// Evaluate one of the closed-form bounds.
    Bounds(BoundsArgs),
    /// Run the property suites.
    Verify {
        /// Reduced sample counts (the default).
        #[arg(long, conflicts_with = "full")]
        quick: bool,
        /// Full sample counts.
        #[arg(long)]
        full: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BoundName {
    Budget,
    Lemma2,
    EtaFloor,
    Theorem1,
    Lemma3,
    Factor,
    Lemma4,
    Lemma5,
    IntroMstar,
    Theorem3Mstar,
    Lemma6Tau,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[arg(value_enum)]
    name: BoundName,
    /// Number of actions.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
    /// Cumulative loss of the best action.
    #[arg(long)]
    lstar: Option<f64>,
    /// Number of segments.
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Failure probability.
    #[arg(long)]
    delta: Option<f64>,
    /// Weight of the heaviest action.
    #[arg(long)]
    wstar: Option<f64>,
    #[arg(long)]
    mstar: Option<u32>,
}

fn need<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| HedgeError::InvalidArgument(format!("missing --{flag}")))
}

enum BoundValue {
    Real(f64),
    Integer(i64),
}

fn evaluate(a: &BoundsArgs) -> Result<BoundValue> {
    use BoundValue::{Integer, Real};
    Ok(match a.name {
        BoundName::Budget => Real(bounds::budget(need(a.eta, "eta")?, need(a.k, "k")?)?),
        BoundName::Lemma2 => Real(bounds::lemma2_bound(
            need(a.eta, "eta")?,
            need(a.lstar, "lstar")?,
            need(a.k, "k")?,
        )?),
        BoundName::EtaFloor => Real(bounds::eta_floor(need(a.lstar, "lstar")?, need(a.k, "k")?)?),
        BoundName::Theorem1 => Real(bounds::theorem1_bound(
            need(a.lstar, "lstar")?,
            need(a.k, "k")?,
        )?),
        BoundName::Lemma3 => Real(bounds::lemma3_bound(
            need(a.m, "m")?,
            need(a.k, "k")?,
            need(a.phi, "phi")?,
        )?),
        BoundName::Factor => Real(bounds::theorem2_leading_factor(need(a.phi, "phi")?)?),
        BoundName::Lemma4 => Real(bounds::lemma4_bound(
            need(a.eta, "eta")?,
            need(a.wstar, "wstar")?,
        )?),
        BoundName::Lemma5 => Real(bounds::lemma5_bound(
            need(a.k, "k")?,
            need(a.alpha, "alpha")?,
            need(a.beta, "beta")?,
            need(a.eta, "eta")?,
        )?),
        BoundName::IntroMstar => Integer(bounds::intro_mstar(
            need(a.alpha, "alpha")?,
            need(a.phi, "phi")?,
        )?),
        BoundName::Theorem3Mstar => Integer(bounds::theorem3_mstar(
            need(a.alpha, "alpha")?,
            need(a.delta, "delta")?,
            need(a.k, "k")?,
            need(a.phi, "phi")?,
        )?),
        BoundName::Lemma6Tau => Integer(bounds::lemma6_tau(
            need(a.mstar, "mstar")?,
            need(a.k, "k")?,
            need(a.alpha, "alpha")?,
            need(a.beta, "beta")?,
            need(a.phi, "phi")?,
        )?),
    })
}

fn cmd_bounds(a: &BoundsArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match evaluate(a) {
        Ok(BoundValue::Real(v)) => {
            let _ = writeln!(out, "{}", format_sig(v));
            EXIT_OK
        }
        Ok(BoundValue::Integer(v)) => {
            let _ = writeln!(out, "{v}");
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

/// Worker count from the environment, or `None` for all cores.
fn threads_from_env() -> std::result::Result<Option<usize>, String> {
    match std::env::var(THREADS_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(format!("{THREADS_ENV}: {e}")),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            )),
        },
    }
}

fn print_plan(cfg: &ExperimentConfig, out: &mut dyn Write) {
    let _ = writeln!(out, "generator:   {:?}", cfg.generator);
    let _ = writeln!(out, "horizon:     {}", cfg.horizon);
    let _ = writeln!(out, "repetitions: {}", cfg.repetitions);
    let _ = writeln!(out, "base seed:   {}", cfg.base_seed);
    let _ = writeln!(out, "output dir:  {}", cfg.output_dir.display());
    let _ = writeln!(out, "strategies:");
    for kind in &cfg.strategies {
        let _ = writeln!(out, "  {:<20} -> trace_{}.csv", kind.label(), kind.label());
    }
    let _ = writeln!(out, "also writes summary.csv and regret.svg");
}

fn cmd_run(
    path: &Path,
    dry_run: bool,
    log_x: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let cfg = match config::load_config(path) {
        Ok(cfg) => cfg,
        Err(e) => {
            let _ = match e.line {
                Some(line) => writeln!(err, "{}:{line}: {}", path.display(), e.message),
                None => writeln!(err, "{}: {}", path.display(), e.message),
            };
            return EXIT_USAGE;
        }
    };
    if dry_run {
        print_plan(&cfg, out);
        return EXIT_OK;
    }
    let threads = match threads_from_env() {
        Ok(t) => t,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            return EXIT_USAGE;
        }
    };
    let result = match threads {
        Some(n) => simulation::run_experiment_with_threads(&cfg, n),
        None => simulation::run_experiment(&cfg),
    };
    let result = match result {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_FAILURE;
        }
    };
    match report::write_outputs(&result, &cfg.output_dir, log_x) {
        Ok(files) => {
            for agg in &result.strategies {
                let _ = writeln!(
                    out,
                    "{:<20} final mean regret {:>12}  mean segments {}",
                    agg.kind.label(),
                    format_sig(agg.final_mean_regret()),
                    format_sig(agg.mean_segments())
                );
            }
            let _ = writeln!(
                out,
                "wrote {} files to {}",
                files.len(),
                cfg.output_dir.display()
            );
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error writing to {}: {e}", cfg.output_dir.display());
            EXIT_IO
        }
    }
}

fn cmd_verify(scale: Scale, seed: u64, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let opts = VerifyOptions::new(scale, seed);
    match verify::run_all(&opts, out) {
        Ok(reports) if reports.iter().all(|r| r.passed) => EXIT_OK,
        Ok(reports) => {
            let failed = reports.iter().filter(|r| !r.passed).count();
            let _ = writeln!(err, "{failed} of {} properties failed", reports.len());
            EXIT_FAILURE
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_IO
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    match &cli.command {
        Command::Run {
            config,
            dry_run,
            log_x,
        } => cmd_run(config, *dry_run, *log_x, out, err),
        Command::Bounds(a) => cmd_bounds(a, out, err),
        Command::Verify { full, seed, .. } => {
            let scale = if *full { Scale::Full } else { Scale::Quick };
            cmd_verify(scale, *seed, out, err)
        }
    }
}
