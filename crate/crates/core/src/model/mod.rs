//! Birth-death chain specifications, ergodicity diagnostics, stationary laws,
//! u-modifications and their potentials.

pub mod config;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;
use crate::semigroup::Distribution;

type ScalarFn = Arc<dyn Fn(usize) -> f64 + Send + Sync>;

/// Extension rule for tabulated rates beyond the last entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailRule {
    #[default]
    HoldLast,
    LinearExtrapolate,
}

/// A rate function on ℕ.
#[derive(Clone)]
pub enum RateFn {
    Constant(f64),
    /// `c * x`
    Linear(f64),
    /// `c * 1{x >= 1}`
    Step(f64),
    Table {
        values: Vec<f64>,
        tail: TailRule,
    },
    Custom(ScalarFn),
}

impl RateFn {
    #[must_use]
    pub fn eval(&self, x: usize) -> f64 {
        match self {
            RateFn::Constant(c) => *c,
            RateFn::Linear(c) => c * x as f64,
            RateFn::Step(c) => {
                if x >= 1 {
                    *c
                } else {
                    0.0
                }
            }
            RateFn::Table { values, tail } => table_eval(values, *tail, x),
            RateFn::Custom(f) => f(x),
        }
    }

    pub fn custom(f: impl Fn(usize) -> f64 + Send + Sync + 'static) -> Self {
        RateFn::Custom(Arc::new(f))
    }
}

fn table_eval(values: &[f64], tail: TailRule, x: usize) -> f64 {
    let last = values.len() - 1;
    if x <= last {
        return values[x];
    }
    match tail {
        TailRule::HoldLast => values[last],
        TailRule::LinearExtrapolate => {
            let slope = if last >= 1 {
                values[last] - values[last - 1]
            } else {
                0.0
            };
            values[last] + slope * (x - last) as f64
        }
    }
}

impl fmt::Debug for RateFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateFn::Constant(c) => write!(f, "Constant({c})"),
            RateFn::Linear(c) => write!(f, "Linear({c})"),
            RateFn::Step(c) => write!(f, "Step({c})"),
            RateFn::Table { values, tail } => write!(f, "Table(len={}, {tail:?})", values.len()),
            RateFn::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Closed-form families recognised by downstream modules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    MmInfinity { lambda: f64, nu: f64 },
    Mm1 { lambda: f64, nu: f64 },
    Tabulated,
    Derived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinKind {
    MmInfty,
    Mm1,
}

/// Birth rates `lambda` and death rates `nu` of a chain on ℕ.
#[derive(Debug, Clone)]
pub struct RateSpec {
    pub label: String,
    pub lambda: RateFn,
    pub nu: RateFn,
    pub family: Family,
}

impl RateSpec {
    pub fn new(label: impl Into<String>, lambda: RateFn, nu: RateFn) -> Self {
        Self {
            label: label.into(),
            lambda,
            nu,
            family: Family::Derived,
        }
    }

    /// Tabulated rates; `nu[0]` must be 0 and all other entries positive.
    pub fn tabulated(lambda: Vec<f64>, nu: Vec<f64>, tail: TailRule) -> Result<Self> {
        if lambda.is_empty() || nu.len() < 2 {
            return Err(Error::InvalidModel(
                "tables need at least one birth rate and two death rates".into(),
            ));
        }
        if nu[0] != 0.0 {
            return Err(Error::InvalidModel(format!(
                "nu(0) must be 0, got {}",
                nu[0]
            )));
        }
        if let Some(x) = lambda.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidModel(format!(
                "lambda({x}) = {} is not positive",
                lambda[x]
            )));
        }
        if let Some(x) = nu.iter().skip(1).position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidModel(format!(
                "nu({}) = {} is not positive",
                x + 1,
                nu[x + 1]
            )));
        }
        Ok(Self {
            label: "table".into(),
            lambda: RateFn::Table {
                values: lambda,
                tail,
            },
            nu: RateFn::Table { values: nu, tail },
            family: Family::Tabulated,
        })
    }

    #[must_use]
    pub fn lambda(&self, x: usize) -> f64 {
        self.lambda.eval(x)
    }

    #[must_use]
    pub fn nu(&self, x: usize) -> f64 {
        if x == 0 {
            0.0
        } else {
            self.nu.eval(x)
        }
    }

    /// `(lambda(0..=n), nu(0..=n))`.
    #[must_use]
    pub fn rates(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        (
            (0..=n).map(|x| self.lambda(x)).collect(),
            (0..=n).map(|x| self.nu(x)).collect(),
        )
    }

    /// Checks positivity and finiteness of the rates on `{0..=n}`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let raw_nu0 = self.nu.eval(0);
        if raw_nu0 != 0.0 {
            return Err(Error::InvalidModel(format!(
                "nu(0) must be 0, got {raw_nu0}"
            )));
        }
        for x in 0..=n {
            let l = self.lambda(x);
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "lambda({x}) = {l} is not positive"
                )));
            }
            if x >= 1 {
                let v = self.nu(x);
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidModel(format!(
                        "nu({x}) = {v} is not positive"
                    )));
                }
            }
        }
        Ok(())
    }

    #[must_use]
    pub fn lambda_nonincreasing(&self, n: usize) -> bool {
        (0..n).all(|x| self.lambda(x + 1) <= self.lambda(x))
    }

    #[must_use]
    pub fn nu_nondecreasing(&self, n: usize) -> bool {
        (0..n).all(|x| self.nu(x + 1) >= self.nu(x))
    }
}

pub fn make_builtin(kind: BuiltinKind, lambda: f64, nu: f64) -> Result<RateSpec> {
    for (name, v) in [("lambda", lambda), ("nu", nu)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    Ok(match kind {
        BuiltinKind::MmInfty => RateSpec {
            label: format!("mm_infty({lambda},{nu})"),
            lambda: RateFn::Constant(lambda),
            nu: RateFn::Linear(nu),
            family: Family::MmInfinity { lambda, nu },
        },
        BuiltinKind::Mm1 => RateSpec {
            label: format!("mm1({lambda},{nu})"),
            lambda: RateFn::Constant(lambda),
            nu: RateFn::Step(nu),
            family: Family::Mm1 { lambda, nu },
        },
    })
}

/// Extension rule for tabulated weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightTail {
    /// `u(x) = u(L)` beyond the table.
    #[default]
    HoldLast,
    /// `u(x) = u(L) r^(x-L)` with `r = u(L)/u(L-1)`.
    HoldRatio,
}

/// A positive weight `u` on ℕ with metric function `rho(x) = sum_{y<x} u(y)`.
#[derive(Clone)]
pub enum Weight {
    Constant(f64),
    /// `u(x) = kappa^x`
    Geometric(f64),
    Table {
        values: Vec<f64>,
        tail: WeightTail,
    },
    Custom(ScalarFn),
}

impl fmt::Debug for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Weight::Constant(c) => write!(f, "Constant({c})"),
            Weight::Geometric(k) => write!(f, "Geometric({k})"),
            Weight::Table { values, tail } => write!(f, "Table({values:?}, {tail:?})"),
            Weight::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Weight {
    #[must_use]
    pub fn unit() -> Self {
        Weight::Constant(1.0)
    }

    pub fn table(values: Vec<f64>, tail: WeightTail) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("weight table is empty".into()));
        }
        if let Some(x) = values.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "u({x}) = {} is not positive",
                values[x]
            )));
        }
        Ok(Weight::Table { values, tail })
    }

    pub fn custom(f: impl Fn(usize) -> f64 + Send + Sync + 'static) -> Self {
        Weight::Custom(Arc::new(f))
    }

    #[must_use]
    pub fn u(&self, x: usize) -> f64 {
        match self {
            Weight::Constant(c) => *c,
            Weight::Geometric(k) => k.powi(x as i32),
            Weight::Table { values, tail } => {
                let last = values.len() - 1;
                if x <= last {
                    values[x]
                } else {
                    match tail {
                        WeightTail::HoldLast => values[last],
                        WeightTail::HoldRatio => {
                            let r = if last >= 1 {
                                values[last] / values[last - 1]
                            } else {
                                1.0
                            };
                            values[last] * r.powi((x - last) as i32)
                        }
                    }
                }
            }
            Weight::Custom(f) => f(x),
        }
    }

    /// `u(x+1) / u(x)`.
    #[must_use]
    pub fn ratio_up(&self, x: usize) -> f64 {
        match self {
            Weight::Constant(_) => 1.0,
            Weight::Geometric(k) => *k,
            _ => self.u(x + 1) / self.u(x),
        }
    }

    /// `u(x-1) / u(x)` for `x >= 1`.
    #[must_use]
    pub fn ratio_down(&self, x: usize) -> f64 {
        match self {
            Weight::Constant(_) => 1.0,
            Weight::Geometric(k) => 1.0 / k,
            _ => self.u(x - 1) / self.u(x),
        }
    }

    /// `u(0..=n)`.
    #[must_use]
    pub fn values(&self, n: usize) -> Vec<f64> {
        (0..=n).map(|x| self.u(x)).collect()
    }

    /// `rho(0..=n)`.
    #[must_use]
    pub fn rho(&self, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for x in 0..n {
            acc += self.u(x);
            out.push(acc);
        }
        out
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for x in 0..=n {
            let v = self.u(x);
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "u({x}) = {v} is not positive"
                )));
            }
        }
        Ok(())
    }

    /// Multiplies the weight by a positive constant.
    #[must_use]
    pub fn scaled(&self, c: f64) -> Weight {
        match self {
            Weight::Constant(v) => Weight::Constant(v * c),
            Weight::Table { values, tail } => Weight::Table {
                values: values.iter().map(|v| v * c).collect(),
                tail: *tail,
            },
            other => {
                let w = other.clone();
                Weight::custom(move |x| c * w.u(x))
            }
        }
    }
}

/// A potential `V` on ℕ together with its minimum over a finite scan.
#[derive(Clone)]
pub struct Potential {
    /// `V(0..=inf_range)`
    pub values: Vec<f64>,
    pub inf_estimate: f64,
    pub argmin: usize,
    pub inf_range: usize,
    eval: ScalarFn,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential")
            .field("inf_estimate", &self.inf_estimate)
            .field("argmin", &self.argmin)
            .field("inf_range", &self.inf_range)
            .finish_non_exhaustive()
    }
}

impl Potential {
    pub fn from_fn(f: impl Fn(usize) -> f64 + Send + Sync + 'static, inf_range: usize) -> Self {
        Self::from_arc(Arc::new(f), inf_range)
    }

    fn from_arc(eval: ScalarFn, inf_range: usize) -> Self {
        let values: Vec<f64> = (0..=inf_range).map(|x| eval(x)).collect();
        let (argmin, inf_estimate) =
            values
                .iter()
                .copied()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |(i, m), (j, v)| if v < m { (j, v) } else { (i, m) },
                );
        Self {
            values,
            inf_estimate,
            argmin,
            inf_range,
            eval,
        }
    }

    #[must_use]
    pub fn constant(a: f64, inf_range: usize) -> Self {
        Self::from_fn(move |_| a, inf_range)
    }

    #[must_use]
    pub fn eval(&self, x: usize) -> f64 {
        if x <= self.inf_range {
            self.values[x]
        } else {
            (self.eval)(x)
        }
    }

    #[must_use]
    pub fn scaled(&self, c: f64) -> Potential {
        let inner = self.eval.clone();
        Self::from_fn(move |x| c * inner(x), self.inf_range)
    }
}

/// Rates of the u-modified chain.
#[must_use]
pub fn u_modification(spec: &RateSpec, w: &Weight) -> RateSpec {
    let (s1, w1) = (spec.clone(), w.clone());
    let (s2, w2) = (spec.clone(), w.clone());
    RateSpec::new(
        format!("{}^u", spec.label),
        RateFn::custom(move |x| w1.ratio_up(x) * s1.lambda(x + 1)),
        RateFn::custom(move |x| {
            if x == 0 {
                0.0
            } else {
                w2.ratio_down(x) * s2.nu(x)
            }
        }),
    )
}

/// `V_u(x) = nu(x+1) - nu_u(x) + lambda(x) - lambda_u(x)`.
#[must_use]
pub fn potential_value(spec: &RateSpec, w: &Weight, x: usize) -> f64 {
    let nu_u = if x == 0 {
        0.0
    } else {
        w.ratio_down(x) * spec.nu(x)
    };
    let lambda_u = w.ratio_up(x) * spec.lambda(x + 1);
    spec.nu(x + 1) - nu_u + spec.lambda(x) - lambda_u
}

#[must_use]
pub fn potential(spec: &RateSpec, w: &Weight, scan_range: usize) -> Potential {
    let (s, w) = (spec.clone(), w.clone());
    Potential::from_fn(move |x| potential_value(&s, &w, x), scan_range)
}

/// Infimum of `V_u` over a finite scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChenExponent {
    pub sigma: f64,
    pub argmin: usize,
    /// The minimiser sits on the scan boundary, so the tail may go lower.
    pub boundary_minimizer: bool,
}

#[must_use]
pub fn chen_exponent(spec: &RateSpec, w: &Weight, scan_range: usize) -> ChenExponent {
    let p = potential(spec, w, scan_range);
    ChenExponent {
        sigma: p.inf_estimate,
        argmin: p.argmin,
        boundary_minimizer: p.argmin == scan_range && scan_range > 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityReport {
    pub recurrence_partial_sums: Vec<f64>,
    pub nonexplosion_partial_sums: Vec<f64>,
    pub recurrent_verdict: Verdict,
    pub nonexplosive_verdict: Verdict,
    pub terms_used: usize,
    pub assumptions: Vec<String>,
}

pub const INTEGRABILITY_ASSUMPTION: &str =
    "rates and potential of the u-modified chain assumed integrable along its semigroup";

/// Partial sums of the positive-recurrence series (must converge) and of the
/// non-explosion series (must diverge), with ratio-trend verdicts.
pub fn ergodicity_report(
    spec: &RateSpec,
    n_terms: usize,
    blowup_threshold: f64,
) -> Result<ErgodicityReport> {
    if n_terms == 0 {
        return Err(Error::InvalidParameter("n_terms must be at least 1".into()));
    }
    spec.validate(n_terms)?;

    let mut log_term = 0.0;
    let mut rec_terms = Vec::with_capacity(n_terms);
    let mut rec_sums = Vec::with_capacity(n_terms);
    let mut acc = 0.0;
    for x in 1..=n_terms {
        log_term += spec.lambda(x - 1).ln() - spec.nu(x).ln();
        rec_terms.push(log_term);
        acc += log_term.exp();
        rec_sums.push(acc);
    }

    let mut e = 1.0 / spec.lambda(0);
    let mut ne_terms = vec![e];
    let mut ne_sums = vec![e];
    for x in 1..n_terms {
        e = 1.0 / spec.lambda(x) + spec.nu(x) / spec.lambda(x) * e;
        ne_terms.push(e);
        let s = ne_sums[x - 1] + e;
        ne_sums.push(s);
    }

    let recurrent_verdict = if rec_sums.iter().any(|&s| !(s <= blowup_threshold)) {
        Verdict::Fails
    } else {
        match series_trend(&rec_terms, true) {
            Trend::Converges => Verdict::Holds,
            Trend::Diverges => Verdict::Fails,
            Trend::Unclear => Verdict::Inconclusive,
        }
    };
    let ne_logs: Vec<f64> = ne_terms.iter().map(|e| e.ln()).collect();
    let nonexplosive_verdict = if ne_sums.iter().any(|&s| !(s <= blowup_threshold)) {
        Verdict::Holds
    } else {
        match series_trend(&ne_logs, false) {
            Trend::Converges => Verdict::Fails,
            Trend::Diverges => Verdict::Holds,
            Trend::Unclear => Verdict::Inconclusive,
        }
    };

    Ok(ErgodicityReport {
        recurrence_partial_sums: rec_sums,
        nonexplosion_partial_sums: ne_sums,
        recurrent_verdict,
        nonexplosive_verdict,
        terms_used: n_terms,
        assumptions: vec![INTEGRABILITY_ASSUMPTION.to_string()],
    })
}

enum Trend {
    Converges,
    Diverges,
    Unclear,
}

/// Ratio and Raabe tests over the second half of a positive series given by
/// its log-terms (index `i` is term number `i + offset`, offset 1 for the
/// recurrence series).
fn series_trend(log_terms: &[f64], one_based: bool) -> Trend {
    let k = log_terms.len();
    if k < 4 {
        return Trend::Unclear;
    }
    if log_terms.iter().any(|l| l.is_infinite() && *l > 0.0) {
        return Trend::Diverges;
    }
    let offset = usize::from(one_based);
    let stats: Vec<(f64, f64)> = (k / 2..k)
        .map(|i| {
            let r = (log_terms[i] - log_terms[i - 1]).exp();
            let x = (i - 1 + offset) as f64;
            (r, x * (1.0 - r))
        })
        .collect();
    let max_ratio = stats.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let min_ratio = stats.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let min_raabe = stats.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let max_raabe = stats.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    if max_ratio <= 0.95 || min_raabe > 1.5 {
        Trend::Converges
    } else if min_ratio >= 1.0 || max_raabe < 0.5 {
        Trend::Diverges
    } else {
        Trend::Unclear
    }
}

/// Stationary law restricted to `{0..=n}` (exactly the stationary law of the
/// reflecting truncation), with an estimate of the mass beyond `n`.
pub fn stationary_distribution(spec: &RateSpec, n: usize) -> Result<Distribution> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "truncation must be at least 1".into(),
        ));
    }
    spec.validate(n)?;
    let extra = n.max(64);
    let mut logs = Vec::with_capacity(n + extra + 1);
    logs.push(0.0);
    for x in 1..=n + extra {
        let (l, v) = (spec.lambda(x - 1), spec.nu(x));
        if !(l > 0.0 && v > 0.0 && l.is_finite() && v.is_finite()) {
            if x <= n {
                return Err(Error::InvalidModel(format!("non-finite rate at state {x}")));
            }
            break;
        }
        logs.push(logs[x - 1] + l.ln() - v.ln());
    }
    let z = log_sum_exp(&logs[..=n]);
    let probs: Vec<f64> = logs[..=n].iter().map(|&l| (l - z).exp()).collect();

    let mut tail_mass: f64 = logs[n + 1..].iter().map(|&l| (l - z).exp()).sum();
    let end = logs.len() - 1;
    if end > n {
        // geometric bound on the remainder from the last quarter of ratios
        let start = end - ((end - n) / 4).max(1);
        let r = (start..end)
            .map(|i| logs[i + 1] - logs[i])
            .fold(f64::NEG_INFINITY, f64::max)
            .exp();
        if r < 1.0 {
            tail_mass += (logs[end] - z).exp() * r / (1.0 - r);
        } else {
            tail_mass = f64::INFINITY;
        }
    }
    Ok(Distribution {
        probs,
        tail_mass_bound: tail_mass,
    })
}

/// `max_x |lambda(x) mu(x) - nu(x+1) mu(x+1)|`.
#[must_use]
pub fn detailed_balance_residual(spec: &RateSpec, mu: &[f64]) -> f64 {
    mu.windows(2)
        .enumerate()
        .map(|(x, w)| (spec.lambda(x) * w[0] - spec.nu(x + 1) * w[1]).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mm1(l: f64, n: f64) -> RateSpec {
        make_builtin(BuiltinKind::Mm1, l, n).unwrap()
    }
    fn mminf(l: f64, n: f64) -> RateSpec {
        make_builtin(BuiltinKind::MmInfty, l, n).unwrap()
    }

    #[test]
    fn builtin_rates() {
        assert_eq!(mminf(1.0, 2.0).nu(3), 6.0);
        let s = mm1(1.0, 4.0);
        assert_eq!((s.nu(0), s.nu(1), s.nu(7)), (0.0, 4.0, 4.0));
        assert_eq!(
            make_builtin(BuiltinKind::Mm1, 0.0, 1.0).unwrap_err().code(),
            "invalid-parameter"
        );
    }

    #[test]
    fn ergodicity_verdicts() {
        let r = ergodicity_report(&mminf(1.0, 1.0), 50, 1e12).unwrap();
        assert_eq!(r.recurrent_verdict, Verdict::Holds);
        assert_eq!(r.nonexplosive_verdict, Verdict::Holds);
        let r = ergodicity_report(&mm1(1.0, 4.0), 50, 1e12).unwrap();
        assert_eq!(r.recurrent_verdict, Verdict::Holds);
        let r = ergodicity_report(&mm1(4.0, 1.0), 50, 1e12).unwrap();
        assert_eq!(r.recurrent_verdict, Verdict::Fails);
        // oracle: direct summation of 4^x
        let direct: f64 = (1..=50).map(|x| 4f64.powi(x)).sum();
        assert!((r.recurrence_partial_sums[49] / direct - 1.0).abs() < 1e-12);
        assert!(r.recurrence_partial_sums.windows(2).all(|w| w[1] >= w[0]));
        let r = ergodicity_report(&mm1(1.0, 1.0), 50, 1e12).unwrap();
        assert_eq!(r.recurrent_verdict, Verdict::Fails);
        // terms 1/(x+1): harmonic, too slow for the heuristics to decide
        let harmonic = RateSpec::new(
            "harmonic",
            RateFn::custom(|x| (x + 1) as f64),
            RateFn::custom(|x| if x == 0 { 0.0 } else { (x + 1) as f64 }),
        );
        let r = ergodicity_report(&harmonic, 50, 1e12).unwrap();
        assert_eq!(r.recurrent_verdict, Verdict::Inconclusive);
        // terms 1/(x+1)^2: Raabe statistic near 2
        let squares = RateSpec::new(
            "squares",
            RateFn::custom(|x| ((x + 1) * (x + 1)) as f64),
            RateFn::custom(|x| {
                if x == 0 {
                    0.0
                } else {
                    ((x + 1) * (x + 1)) as f64
                }
            }),
        );
        let r = ergodicity_report(&squares, 50, 1e12).unwrap();
        assert_eq!(r.recurrent_verdict, Verdict::Holds);
    }

    #[test]
    fn explosive_chain_detected() {
        let s = RateSpec::new(
            "fast",
            RateFn::custom(|x| 2f64.powi(x as i32)),
            RateFn::custom(|x| if x == 0 { 0.0 } else { 1.0 }),
        );
        let r = ergodicity_report(&s, 60, 1e12).unwrap();
        assert_eq!(r.nonexplosive_verdict, Verdict::Fails);
    }

    #[test]
    fn stationary_closed_forms() {
        let mu = stationary_distribution(&mminf(1.0, 1.0), 40).unwrap();
        assert!((mu.probs[0] - (-1f64).exp()).abs() < 1e-12);
        assert!(mu.tail_mass_bound < 1e-40);
        let mu = stationary_distribution(&mm1(1.0, 4.0), 60).unwrap();
        for (x, p) in mu.probs.iter().enumerate() {
            assert!((p - 0.75 * 0.25f64.powi(x as i32)).abs() < 1e-12);
        }
        let tail: f64 = 0.25f64.powi(61);
        assert!(mu.tail_mass_bound >= 0.9 * tail && mu.tail_mass_bound < 2.0 * tail);
        assert!(stationary_distribution(&mm1(1.0, 1.0), 30)
            .unwrap()
            .tail_mass_bound
            .is_infinite());
    }

    #[test]
    fn large_truncation_does_not_overflow() {
        let mu = stationary_distribution(&mminf(50.0, 1.0), 600).unwrap();
        assert!((mu.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(detailed_balance_residual(&mminf(50.0, 1.0), &mu.probs) < 1e-12);
    }

    #[test]
    fn u_modification_examples() {
        let m = u_modification(&mm1(1.0, 4.0), &Weight::Geometric(2.0));
        for x in 0..10 {
            assert_eq!(m.lambda(x), 2.0);
            assert_eq!(m.nu(x), if x >= 1 { 2.0 } else { 0.0 });
        }
        let s = mminf(1.0, 1.0);
        let m = u_modification(&s, &Weight::unit());
        for x in 0..10 {
            assert_eq!(m.lambda(x), 1.0);
            assert_eq!(m.nu(x), x as f64);
        }
    }

    #[test]
    fn potential_examples() {
        let p = potential(&mminf(1.5, 0.7), &Weight::unit(), 30);
        assert!(p.values.iter().all(|&v| (v - 0.7).abs() < 1e-14));
        let p = potential(&mm1(1.0, 4.0), &Weight::unit(), 30);
        assert_eq!(p.values[0], 4.0);
        assert!(p.values[1..].iter().all(|&v| v == 0.0));
        assert_eq!(p.inf_estimate, 0.0);
        let p = potential(&mm1(1.0, 4.0), &Weight::Geometric(2.0), 30);
        assert_eq!(p.values[0], 3.0);
        assert!(p.values[1..].iter().all(|&v| v == 1.0));
        assert_eq!(p.inf_estimate, 1.0);
    }

    #[test]
    fn chen_exponent_examples() {
        assert_eq!(
            chen_exponent(&mminf(1.0, 1.0), &Weight::unit(), 50).sigma,
            1.0
        );
        assert_eq!(
            chen_exponent(&mm1(1.0, 4.0), &Weight::Geometric(2.0), 50).sigma,
            1.0
        );
        let c = chen_exponent(&mm1(1.0, 4.0), &Weight::unit(), 50);
        assert_eq!(c.sigma, 0.0);
        assert!(!c.boundary_minimizer);
        let dec = RateSpec::new(
            "growing births",
            RateFn::custom(|x| 1.0 + (x * x) as f64),
            RateFn::Step(1.0),
        );
        assert!(chen_exponent(&dec, &Weight::unit(), 20).boundary_minimizer);
    }

    #[test]
    fn table_tails() {
        let s = RateSpec::tabulated(
            vec![1.0, 2.0],
            vec![0.0, 1.0, 3.0],
            TailRule::LinearExtrapolate,
        )
        .unwrap();
        assert_eq!(s.lambda(4), 5.0);
        assert_eq!(s.nu(5), 9.0);
        assert!(RateSpec::tabulated(vec![1.0], vec![0.5, 1.0], TailRule::HoldLast).is_err());
        let w = Weight::table(vec![1.0, 2.0, 6.0], WeightTail::HoldRatio).unwrap();
        assert_eq!(w.u(4), 54.0);
        assert_eq!(w.rho(3), vec![0.0, 1.0, 3.0, 9.0]);
    }
}
