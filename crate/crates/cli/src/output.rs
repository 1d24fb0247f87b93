//! Rendering of command results as an aligned table, CSV or JSON.

use birthdeath::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{Format, RunConfig};

/// A command result that can be shown as a key-value summary plus a table.
pub trait Tabular {
    fn summary(&self) -> Vec<(String, String)> {
        Vec::new()
    }
    fn headers(&self) -> Vec<&'static str>;
    fn rows(&self) -> Vec<Vec<String>>;
    /// `Some(false)` makes the run exit with status 1.
    fn pass(&self) -> Option<bool> {
        None
    }
}

/// JSON document written by every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub command: String,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
    pub result: T,
}

/// Fixed-width float formatting, identical on every platform.
#[must_use]
pub fn num(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let a = v.abs();
    if (1e-3..1e6).contains(&a) {
        let s = format!("{v:.9}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.6e}")
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), num)
}

pub fn verdict(pass: bool) -> String {
    if pass { "pass" } else { "FAIL" }.into()
}

fn table(summary: &[(String, String)], headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    let key_w = summary
        .iter()
        .map(|(k, _)| k.chars().count())
        .max()
        .unwrap_or(0);
    for (k, v) in summary {
        out.push_str(&format!("{k:<key_w$}  {v}\n"));
    }
    if rows.is_empty() {
        return out;
    }
    if !summary.is_empty() {
        out.push('\n');
    }
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        // first column (labels) left-aligned, values right-aligned
        let joined: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| {
                if i == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        format!("{}\n", joined.join("  ").trim_end())
    };
    out.push_str(&line(headers.to_vec()));
    let rules: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&line(rules.iter().map(String::as_str).collect()));
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

fn csv_text(headers: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Numerical(format!("csv: {e}"));
    w.write_record(headers).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Numerical(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Numerical(e.to_string()))
}

/// Renders `result` in the configured format.
pub fn render<T: Serialize + Tabular>(
    command: &str,
    cfg: &RunConfig,
    result: &T,
) -> Result<String> {
    match cfg.format {
        Format::Table => Ok(table(&result.summary(), &result.headers(), &result.rows())),
        Format::Csv => csv_text(&result.headers(), &result.rows()),
        Format::Json => {
            let env = Envelope {
                command: command.to_string(),
                config: cfg.clone(),
                pass: result.pass(),
                result,
            };
            let mut s =
                serde_json::to_string_pretty(&env).map_err(|e| Error::Numerical(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(num(1.0), "1");
        assert_eq!(num(0.125), "0.125");
        assert_eq!(num(2.5e-7), "2.500000e-7");
        assert_eq!(num(0.0), "0");
    }

    #[test]
    fn table_aligns() {
        let t = table(
            &[("k".into(), "v".into())],
            &["a", "bb"],
            &[vec!["1".into(), "22".into()]],
        );
        assert_eq!(t, "k  v\n\na  bb\n-  --\n1  22\n");
    }
}
