//! Command-line front end: parses flags into a validated [`RunConfig`], runs
//! one subcommand and renders its result.
//!
//! Exit status: 0 on success, 1 when a verification fails, 2 on a usage,
//! configuration or precondition error.

pub mod commands;
pub mod config;
pub mod output;

use std::io::Write;

use birthdeath::exec::with_threads;
use birthdeath::{Error, Result};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{parse_usize_list, CommonArgs, Format, RunConfig};
use crate::output::{render, Tabular};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "birthdeath",
    version,
    about = "Intertwining and functional-inequality checks for birth-death chains"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ergodicity verdicts and the curvature of the configured weight
    Validate,
    /// Stationary law on the truncation
    Stationary,
    /// Transient law of X_t started at x0
    Evolve {
        #[arg(long, default_value_t = 0)]
        x0: usize,
    },
    /// Gradient intertwining on the test-function corpus
    VerifyIntertwine,
    /// φ(∂_u P_t f) <= P^{cV_u}_{u,t} φ(∂_u f) on the corpus
    VerifySubcommute {
        /// square, rlogr or power:<p>
        #[arg(long, default_value = "square")]
        phi: String,
    },
    /// B^φ sub-commutation for positive test functions
    VerifyBicommute {
        /// square, rlogr or power:<p>
        #[arg(long, default_value = "rlogr")]
        phi: String,
    },
    /// Potential V_u, sigma_u and the Lipschitz contraction profile
    Curvature,
    /// Maximise sigma_u over a weight family
    OptimizeWeight {
        /// const, geometric or table:<len>
        #[arg(long, default_value = "geometric")]
        family: String,
        #[arg(long, default_value_t = 400)]
        budget: usize,
        /// States scanned for inf V_u [default: n - max(n/4, 4)]
        #[arg(long)]
        scan: Option<usize>,
    },
    /// Best curvature per family next to the spectral gap
    GapReport {
        #[arg(long, default_value_t = 400)]
        budget: usize,
        /// Length of the free part of the tabulated family
        #[arg(long, default_value_t = 40)]
        table_len: usize,
    },
    /// W_1 in the d_u metric, closed form against the transport LP
    Wasserstein {
        #[arg(long, default_value_t = 0)]
        x0: usize,
        /// First law (JSON array or CSV); needs --mu2
        #[arg(long)]
        mu1: Option<String>,
        #[arg(long)]
        mu2: Option<String>,
    },
    /// Poincaré, φ-entropy, isoperimetry, transportation-information and Poisson gradient checks
    Inequalities,
    /// M/M/1 hitting-time identity, bound and Monte Carlo survival
    Hitting {
        /// Comma-separated states x; paths start at x + 1
        #[arg(long, default_value = "0,1,3")]
        x: String,
    },
    /// Transient law of M/M/∞ against the Binomial * Poisson formula
    Mehler {
        #[arg(long, default_value_t = 3)]
        x0: usize,
    },
    /// Convex domination of X_t^{x+1} by X_t^x plus a Bernoulli
    Order {
        #[arg(long, default_value_t = 2)]
        x: usize,
    },
    /// Monte Carlo estimate of E[X_t] next to the matrix value
    Simulate {
        #[arg(long, default_value_t = 0)]
        x0: usize,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Stationary => "stationary",
            Command::Evolve { .. } => "evolve",
            Command::VerifyIntertwine => "verify-intertwine",
            Command::VerifySubcommute { .. } => "verify-subcommute",
            Command::VerifyBicommute { .. } => "verify-bicommute",
            Command::Curvature => "curvature",
            Command::OptimizeWeight { .. } => "optimize-weight",
            Command::GapReport { .. } => "gap-report",
            Command::Wasserstein { .. } => "wasserstein",
            Command::Inequalities => "inequalities",
            Command::Hitting { .. } => "hitting",
            Command::Mehler { .. } => "mehler",
            Command::Order { .. } => "order",
            Command::Simulate { .. } => "simulate",
        }
    }

    fn default_times(&self) -> &'static [f64] {
        match self {
            Command::VerifyIntertwine | Command::VerifySubcommute { .. } | Command::Curvature => {
                &[0.1, 0.5, 1.0, 2.0]
            }
            Command::VerifyBicommute { .. } => &[0.2, 1.0],
            Command::Hitting { .. } => &[0.5, 1.0, 2.0],
            Command::Order { .. } => &[0.3, 1.0],
            _ => &[1.0],
        }
    }
}

/// Rendered output and whether the checks passed.
struct Outcome {
    text: String,
    pass: Option<bool>,
}

fn finish<T: Serialize + Tabular>(name: &str, cfg: &RunConfig, r: Result<T>) -> Result<Outcome> {
    let r = r?;
    Ok(Outcome {
        text: render(name, cfg, &r)?,
        pass: r.pass(),
    })
}

fn execute(command: &Command, cfg: &RunConfig) -> Result<Outcome> {
    use commands as c;
    let name = command.name();
    match command {
        Command::Validate => finish(name, cfg, c::validate(cfg)),
        Command::Stationary => finish(name, cfg, c::stationary(cfg)),
        Command::Evolve { x0 } => finish(name, cfg, c::evolve(cfg, *x0)),
        Command::VerifyIntertwine => finish(name, cfg, c::verify_intertwine(cfg)),
        Command::VerifySubcommute { phi } => {
            finish(name, cfg, c::verify_subcommute(cfg, &c::parse_phi(phi)?))
        }
        Command::VerifyBicommute { phi } => {
            finish(name, cfg, c::verify_bicommute(cfg, &c::parse_phi(phi)?))
        }
        Command::Curvature => finish(name, cfg, c::curvature(cfg)),
        Command::OptimizeWeight {
            family,
            budget,
            scan,
        } => finish(
            name,
            cfg,
            c::optimize(cfg, &c::parse_family(family)?, *budget, *scan),
        ),
        Command::GapReport { budget, table_len } => {
            finish(name, cfg, c::gap(cfg, *budget, *table_len))
        }
        Command::Wasserstein { x0, mu1, mu2 } => finish(
            name,
            cfg,
            c::wasserstein(cfg, *x0, mu1.as_deref(), mu2.as_deref()),
        ),
        Command::Inequalities => finish(name, cfg, c::inequalities(cfg)),
        Command::Hitting { x } => finish(name, cfg, c::hitting(cfg, &parse_usize_list(x, "--x")?)),
        Command::Mehler { x0 } => finish(name, cfg, c::mehler(cfg, *x0)),
        Command::Order { x } => finish(name, cfg, c::order(cfg, *x)),
        Command::Simulate { x0 } => finish(name, cfg, c::simulate(cfg, *x0)),
    }
}

fn report_error(e: &Error, format: Format, err: &mut dyn Write) {
    let line = if format == Format::Json {
        serde_json::json!({ "error": { "code": e.code(), "message": e.to_string() } }).to_string()
    } else {
        format!("error[{}]: {e}", e.code())
    };
    let _ = writeln!(err, "{line}");
}

/// Runs the CLI on `argv` (including the program name), writing results to
/// `out` (unless `--out` is given) and diagnostics to `err`. Returns the
/// exit status.
pub fn run<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{rendered}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{rendered}");
                    EXIT_USAGE
                }
            };
        }
    };
    let cfg = match RunConfig::from_args(&cli.common, cli.command.default_times()) {
        Ok(cfg) => cfg,
        Err(e) => {
            report_error(&e, cli.common.format, err);
            return EXIT_USAGE;
        }
    };
    let outcome = with_threads(cfg.threads, || execute(&cli.command, &cfg));
    match outcome {
        Ok(o) => {
            let written = match &cfg.out {
                Some(path) => std::fs::write(path, &o.text)
                    .map_err(|e| Error::Config(format!("--out {path}: {e}"))),
                None => out
                    .write_all(o.text.as_bytes())
                    .map_err(|e| Error::Numerical(format!("stdout: {e}"))),
            };
            if let Err(e) = written {
                report_error(&e, cfg.format, err);
                return EXIT_USAGE;
            }
            if o.pass == Some(false) {
                EXIT_FAILED
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            report_error(&e, cfg.format, err);
            EXIT_USAGE
        }
    }
}
