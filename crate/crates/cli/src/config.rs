//! Command-line flags and the validated run configuration built from them.

use std::fs;
use std::path::Path;

use birthdeath::model::config::{ModelConfig, ModelKind, RateValue, WeightConfig};
use birthdeath::model::{RateSpec, TailRule, Weight, WeightTail};
use birthdeath::{Error, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Table,
    Json,
    Csv,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Builtin model (`mm_infty`, `mm1`) or path to a JSON model file
    #[arg(long, global = true, default_value = "mm_infty")]
    pub model: String,
    /// Birth rate of a builtin model [default: 1]
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    /// Death rate of a builtin model [default: 1]
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub nu: Option<f64>,
    /// `const[:<c>]`, `geometric:<k>` or `table:<path>` (JSON array or CSV)
    #[arg(long, global = true)]
    pub weight: Option<String>,
    /// Comma-separated times
    #[arg(long = "t", global = true)]
    pub times: Option<String>,
    /// Truncation level n (states 0..=n)
    #[arg(long, global = true, default_value_t = 200)]
    pub trunc: usize,
    #[arg(
        long,
        global = true,
        default_value_t = 1e-8,
        allow_negative_numbers = true
    )]
    pub tol: f64,
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Monte Carlo paths
    #[arg(long, global = true, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Write the output here instead of stdout
    #[arg(long, global = true)]
    pub out: Option<String>,
    /// Cap on worker threads
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

/// Everything a subcommand needs, validated before it runs. Serialised into
/// every JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub times: Vec<f64>,
    pub n_trunc: usize,
    pub tol: f64,
    pub seed: u64,
    pub paths: usize,
    pub format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Reads numbers from a JSON array or a CSV file (any layout, no header).
pub fn read_numbers(path: &str) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("{path}: {e}")))?;
    let is_json = Path::new(path)
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
        || text.trim_start().starts_with('[');
    if is_json {
        return serde_json::from_str(&text).map_err(|e| config_err(format!("{path}: {e}")));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| config_err(format!("{path}: {e}")))?;
        for field in record.iter().map(str::trim).filter(|f| !f.is_empty()) {
            out.push(
                field
                    .parse()
                    .map_err(|_| config_err(format!("{path}: not a number: {field}")))?,
            );
        }
    }
    Ok(out)
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| config_err(format!("{what}: not a number: {s}")))
}

pub fn parse_weight(s: &str) -> Result<WeightConfig> {
    let (kind, arg) = s.split_once(':').map_or((s, None), |(k, a)| (k, Some(a)));
    match (kind, arg) {
        ("const", None) => Ok(WeightConfig::Const { value: 1.0 }),
        ("const", Some(c)) => Ok(WeightConfig::Const {
            value: parse_f64(c, "--weight const")?,
        }),
        ("geometric", Some(k)) => Ok(WeightConfig::Geometric {
            kappa: parse_f64(k, "--weight geometric")?,
        }),
        ("table", Some(path)) => Ok(WeightConfig::Table {
            values: read_numbers(path)?,
            tail: WeightTail::default(),
        }),
        _ => Err(config_err(format!(
            "--weight expects const[:<c>], geometric:<k> or table:<path>, got {s}"
        ))),
    }
}

pub fn parse_times(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|t| parse_f64(t, "--t")).collect()
}

pub fn parse_usize_list(s: &str, flag: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| config_err(format!("{flag}: not a state: {v}")))
        })
        .collect()
}

impl RunConfig {
    /// Resolves the model and validates every field; `default_times` applies
    /// when `--t` is absent.
    pub fn from_args(a: &CommonArgs, default_times: &[f64]) -> Result<Self> {
        let builtin = match a.model.as_str() {
            "mm_infty" => Some(ModelKind::MmInfty),
            "mm1" => Some(ModelKind::Mm1),
            _ => None,
        };
        let mut model = match builtin {
            Some(kind) => ModelConfig {
                kind,
                lambda: RateValue::Scalar(a.lambda.unwrap_or(1.0)),
                nu: RateValue::Scalar(a.nu.unwrap_or(1.0)),
                tail: TailRule::default(),
                weight: None,
            },
            None => {
                if a.lambda.is_some() || a.nu.is_some() {
                    return Err(config_err("--lambda and --nu only apply to builtin models"));
                }
                let text = fs::read_to_string(&a.model).map_err(|e| {
                    config_err(format!(
                        "--model {}: not a builtin model or readable file: {e}",
                        a.model
                    ))
                })?;
                ModelConfig::from_json(&text)?
            }
        };
        if let Some(w) = &a.weight {
            model.weight = Some(parse_weight(w)?);
        }
        let times = match &a.times {
            Some(s) => parse_times(s)?,
            None => default_times.to_vec(),
        };
        let cfg = RunConfig {
            model,
            times,
            n_trunc: a.trunc,
            tol: a.tol,
            seed: a.seed,
            paths: a.paths,
            format: a.format,
            out: a.out.clone(),
            threads: a.threads,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trunc < 2 {
            return Err(config_err(format!(
                "--trunc must be at least 2, got {}",
                self.n_trunc
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(config_err(format!(
                "--tol must be positive, got {}",
                self.tol
            )));
        }
        if self.paths == 0 {
            return Err(config_err("--paths must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(config_err("--threads must be at least 1"));
        }
        if self.times.is_empty() || self.times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(config_err(format!(
                "--t needs nonnegative finite times, got {:?}",
                self.times
            )));
        }
        self.spec()?.validate(self.n_trunc)?;
        self.weight()?.validate(self.n_trunc)?;
        Ok(())
    }

    pub fn spec(&self) -> Result<RateSpec> {
        self.model.build_spec()
    }

    pub fn weight(&self) -> Result<Weight> {
        self.model.build_weight()
    }

    /// `(lambda, nu)` of a builtin model of the given kind.
    pub fn builtin_rates(&self, kind: ModelKind) -> Result<(f64, f64)> {
        match (&self.model.kind, &self.model.lambda, &self.model.nu) {
            (k, RateValue::Scalar(l), RateValue::Scalar(n)) if *k == kind => Ok((*l, *n)),
            _ => {
                let name = match kind {
                    ModelKind::MmInfty => "mm_infty",
                    ModelKind::Mm1 => "mm1",
                    ModelKind::Table => "table",
                };
                Err(Error::Precondition(format!(
                    "this command needs the {name} model"
                )))
            }
        }
    }
}
