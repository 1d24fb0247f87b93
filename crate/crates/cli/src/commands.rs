//! One function per subcommand; each returns a serialisable, tabular result.

use birthdeath::corpus::{
    gradient_test_functions, increasing_test_functions, positive_test_functions,
};
use birthdeath::inequalities::{
    contraction_profile, isoperimetry_margin_with_kappa, kappa_u, phi_entropy_margin,
    poincare_margin, poisson_gradient_bound, spectral_gap, transport_info_margin, wasserstein_du,
    wasserstein_lp, InequalityMargin, KappaEstimate, MetricSpace,
};
use birthdeath::intertwine::{
    hitting_identity_checks, infinitesimal_intertwining, verify_bicommutation, verify_intertwining,
    verify_subcommutation, PhiFunction, VerificationReport,
};
use birthdeath::model::config::ModelKind;
use birthdeath::model::{
    chen_exponent, detailed_balance_residual, ergodicity_report, potential_value,
    stationary_distribution, RateSpec, Verdict,
};
use birthdeath::model::{Potential, WeightTail};
use birthdeath::numeric::{binomial_pmf, convolve};
use birthdeath::optimize::{
    default_scan_range, gap_report, optimize_weight, Certificate, GapReport, TraceEntry,
    WeightFamily,
};
use birthdeath::ordering::{
    convex_domination_check, domination_rate, iterated_domination_check, stochastic_order,
    OrderingVerdict,
};
use birthdeath::semigroup::{build_generator, transient_distribution, Distribution, Func};
use birthdeath::simulate::{
    feynman_kac_estimate, hitting_times, mehler_distribution, survival_estimate, McConfig,
    McEstimate,
};
use birthdeath::transport::MAX_STATES;
use birthdeath::{Error, Execution, Result};
use serde::{Deserialize, Serialize};

use crate::config::{read_numbers, RunConfig};
use crate::output::{num, opt_num, verdict, Tabular};

/// Accuracy of the transient laws the commands compare against.
const LAW_TOL: f64 = 1e-14;

fn law(spec: &RateSpec, x0: usize, t: f64, n: usize) -> Result<Distribution> {
    transient_distribution(&build_generator(spec, n, None)?, x0, t, LAW_TOL)
}

fn check_state(x: usize, n: usize) -> Result<()> {
    if x > n {
        Err(Error::StateOutOfRange { state: x, n })
    } else {
        Ok(())
    }
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Holds => "holds",
        Verdict::Fails => "fails",
        Verdict::Inconclusive => "inconclusive",
    }
}

// validate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateResult {
    pub label: String,
    pub recurrent: Verdict,
    pub nonexplosive: Verdict,
    pub terms_used: usize,
    /// Last partial sums; `None` once a sum overflows.
    pub recurrence_partial_sum: Option<f64>,
    pub nonexplosion_partial_sum: Option<f64>,
    pub sigma: f64,
    pub sigma_argmin: usize,
    pub boundary_minimizer: bool,
    pub assumptions: Vec<String>,
}

impl Tabular for ValidateResult {
    fn summary(&self) -> Vec<(String, String)> {
        vec![
            ("model".into(), self.label.clone()),
            (
                "positive recurrent".into(),
                verdict_name(self.recurrent).into(),
            ),
            (
                "non-explosive".into(),
                verdict_name(self.nonexplosive).into(),
            ),
            ("series terms".into(), self.terms_used.to_string()),
            ("sigma_u".into(), num(self.sigma)),
            ("sigma_u argmin".into(), self.sigma_argmin.to_string()),
            (
                "boundary minimiser".into(),
                self.boundary_minimizer.to_string(),
            ),
        ]
    }
    fn headers(&self) -> Vec<&'static str> {
        vec!["assumption"]
    }
    fn rows(&self) -> Vec<Vec<String>> {
        self.assumptions.iter().map(|a| vec![a.clone()]).collect()
    }
    fn pass(&self) -> Option<bool> {
        Some(self.recurrent != Verdict::Fails && self.nonexplosive != Verdict::Fails)
    }
}

pub fn validate(cfg: &RunConfig) -> Result<ValidateResult> {
    let (spec, w, n) = (cfg.spec()?, cfg.weight()?, cfg.n_trunc);
    let r = ergodicity_report(&spec, n, 1e100)?;
    let chen = chen_exponent(&spec, &w, n);
    Ok(ValidateResult {
        label: spec.label.clone(),
        recurrent: r.recurrent_verdict,
        nonexplosive: r.nonexplosive_verdict,
        terms_used: r.terms_used,
        recurrence_partial_sum: r
            .recurrence_partial_sums
            .last()
            .copied()
            .filter(|s| s.is_finite()),
        nonexplosion_partial_sum: r
            .nonexplosion_partial_sums
            .last()
            .copied()
            .filter(|s| s.is_finite()),
        sigma: chen.sigma,
        sigma_argmin: chen.argmin,
        boundary_minimizer: chen.boundary_minimizer,
        assumptions: r.assumptions,
    })
}

// stationary

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryResult {
    pub probs: Vec<f64>,
    pub tail_mass_bound: f64,
    pub mean: f64,
    pub detailed_balance_residual: f64,
}

impl Tabular for StationaryResult {
    fn summary(&self) -> Vec<(String, String)> {
        vec![
            ("mean".into(), num(self.mean)),
            ("tail mass bound".into(), num(self.tail_mass_bound)),
            (
                "detailed balance residual".into(),
                num(self.detailed_balance_residual),
            ),
        ]
    }
    fn headers(&self) -> Vec<&'static str> {
        vec!["x", "mu"]
    }
    fn rows(&self) -> Vec<Vec<String>> {
        self.probs
            .iter()
            .enumerate()
            .map(|(x, p)| vec![x.to_string(), num(*p)])
            .collect()
    }
}

pub fn stationary(cfg: &RunConfig) -> Result<StationaryResult> {
    let spec = cfg.spec()?;
    let mu = stationary_distribution(&spec, cfg.n_trunc)?;
    Ok(StationaryResult {
        mean: mu.mean(),
        detailed_balance_residual: detailed_balance_residual(&spec, &mu.probs),
        tail_mass_bound: mu.tail_mass_bound,
        probs: mu.probs,
    })
}

// evolve

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedLaw {
    pub t: f64,
    pub mean: f64,
    pub tail_mass_bound: f64,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveResult {
    pub x0: usize,
    pub laws: Vec<TimedLaw>,
}

impl Tabular for EvolveResult {
    fn summary(&self) -> Vec<(String, String)> {
        let mut s = vec![("x0".into(), self.x0.to_string())];
        s.extend(
            self.laws
                .iter()
                .map(|l| (format!("mean at t={}", num(l.t)), num(l.mean))),
        );
        s
    }
    fn headers(&self) -> Vec<&'static str> {
        vec!["t", "x", "p"]
    }
    fn rows(&self) -> Vec<Vec<String>> {
        self.laws
            .iter()
            .flat_map(|l| {
                l.probs
                    .iter()
                    .enumerate()
                    .map(move |(x, p)| vec![num(l.t), x.to_string(), num(*p)])
            })
            .collect()
    }
}

pub fn evolve(cfg: &RunConfig, x0: usize) -> Result<EvolveResult> {
    let n = cfg.n_trunc;
    check_state(x0, n)?;
    let gen = build_generator(&cfg.spec()?, n, None)?;
    let laws = cfg
        .times
        .iter()
        .map(|&t| {
            let d = transient_distribution(&gen, x0, t, LAW_TOL)?;
            Ok(TimedLaw {
                t,
                mean: d.mean(),
                tail_mass_bound: d.tail_mass_bound,
                probs: d.probs,
            })
        })
        .collect::<Result<_>>()?;
    Ok(EvolveResult { x0, laws })
}

// verification reports shared by the verify-* commands

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedReport {
    pub function: String,
    pub report: VerificationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyResult {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
    pub reports: Vec<NamedReport>,
}

impl Tabular for VerifyResult {
    fn summary(&self) -> Vec<(String, String)> {
        let mut s = Vec::new();
        if let Some(p) = &self.phi {
            s.push(("phi".into(), p.clone()));
        }
        s.push(("result".into(), verdict(self.pass().unwrap_or(true))));
        s
    }
    fn headers(&self) -> Vec<&'static str> {
        vec![
            "function",
            "identity",
            "value",
            "tolerance",
            "worst_state",
            "worst_time",
            "states_checked",
            "status",
        ]
    }
    fn rows(&self) -> Vec<Vec<String>> {
        self.reports
            .iter()
            .map(|r| {
                let p = &r.report;
                vec![
                    r.function.clone(),
                    p.identity.clone(),
                    num(p.residual_or_margin),
                    num(p.tolerance),
                    p.worst_state.to_string(),
                    num(p.worst_time),
                    p.states_checked.to_string(),
                    verdict(p.pass),
                ]
            })
            .collect()
    }
    fn pass(&self) -> Option<bool> {
        Some(self.reports.iter().all(|r| r.report.pass))
    }
}

pub fn parse_phi(s: &str) -> Result<PhiFunction> {
    match s {
        "square" => Ok(PhiFunction::square()),
        "rlogr" => Ok(PhiFunction::r_log_r()),
        _ => match s.strip_prefix("power:") {
            Some(p) => PhiFunction::power(
                p.parse()
                    .map_err(|_| Error::Config(format!("--phi: bad power {p}")))?,
            ),
            None => Err(Error::Config(format!(
                "--phi expects square, rlogr or power:<p>, got {s}"
            ))),
        },
    }
}

pub fn verify_intertwine(cfg: &RunConfig) -> Result<VerifyResult> {
    let (spec, w, n) = (cfg.spec()?, cfg.weight()?, cfg.n_trunc);
    let funcs = gradient_test_functions(&w, n);
    let reports = Execution::Parallel.try_map(funcs.len(), |i| {
        let (name, f) = &funcs[i];
        let semigroup = verify_intertwining(&spec, &w, f, &cfg.times, n, cfg.tol)?;
        let generator = infinitesimal_intertwining(&spec, &w, f, n, cfg.tol)?;
        Ok::<_, Error>([
            NamedReport {
                function: (*name).into(),
                report: semigroup,
            },
            NamedReport {
                function: (*name).into(),
                report: generator,
            },
        ])
    })?;
    Ok(VerifyResult {
        phi: None,
        reports: reports.into_iter().flatten().collect(),
    })
}

pub fn verify_subcommute(cfg: &RunConfig, phi: &PhiFunction) -> Result<VerifyResult> {
    let (spec, w, n) = (cfg.spec()?, cfg.weight()?, cfg.n_trunc);
    let funcs = if phi.domain.lo == f64::NEG_INFINITY {
        gradient_test_functions(&w, n)
    } else {
        increasing_test_functions(&w, n)
    };
    let reports = Execution::Parallel.try_map(funcs.len(), |i| {
        let (name, f) = &funcs[i];
        Ok::<_, Error>(NamedReport {
            function: (*name).into(),
            report: verify_subcommutation(&spec, &w, phi, f, &cfg.times, n, cfg.tol)?,
        })
    })?;
    Ok(VerifyResult {
        phi: Some(phi.name.clone()),
        reports,
    })
}

pub fn verify_bicommute(cfg: &RunConfig, phi: &PhiFunction) -> Result<VerifyResult> {
    let (spec, n) = (cfg.spec()?, cfg.n_trunc);
    let funcs = positive_test_functions(n);
    let reports = Execution::Parallel.try_map(funcs.len(), |i| {
        let (name, f) = &funcs[i];
        Ok::<_, Error>(NamedReport {
            function: (*name).into(),
            report: verify_bicommutation(&spec, phi, f, &cfg.times, n, cfg.tol)?,
        })
    })?;
    Ok(VerifyResult {
        phi: Some(phi.name.clone()),
        reports,
    })
}

// curvature

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionRow {
    pub t: f64,
    pub lipschitz_norm: f64,
    pub feynman_kac: f64,
    pub bound: f64,
    pub worst_state: usize,
    pub states_checked: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureResult {
    pub sigma: f64,
    pub argmin: usize,
    pub boundary_minimizer: bool,
    /// `V_u(0..=n)`
    pub potential: Vec<f64>,
    pub contraction: Vec<ContractionRow>,
    pub tolerance: f64,
}

impl Tabular for CurvatureResult {
    fn summary(&self) -> Vec<(String, String)> {
        vec![
            ("sigma_u".into(), num(self.sigma)),
            ("argmin".into(), self.argmin.to_string()),
            (
                "boundary minimiser".into(),
                self.boundary_minimizer.to_string(),
            ),
        ]
    }
    fn headers(&self) -> Vec<&'static str> {
        vec![
            "t",
            "lipschitz_norm",
            "feynman_kac",
            "exp(-sigma t)",
            "worst_state",
            "states_checked",
            "status",
        ]
    }
    fn rows(&self) -> Vec<Vec<String>> {
        self.contraction
            .iter()
            .map(|c| {
                vec![
                    num(c.t),
                    num(c.lipschitz_norm),
                    num(c.feynman_kac),
                    num(c.bound),
                    c.worst_state.to_string(),
                    c.states_checked.to_string(),
                    verdict(c.lipschitz_norm <= c.bound + self.tolerance),
                ]
            })
            .collect()
    }
    fn pass(&self) -> Option<bool> {
        Some(
            self.contraction
                .iter()
                .all(|c| c.lipschitz_norm <= c.bound + self.tolerance),
        )
    }
}

pub fn curvature(cfg: &RunConfig) -> Result<CurvatureResult> {
    let (spec, w, n) = (cfg.spec()?, cfg.weight()?, cfg.n_trunc);
    let chen = chen_exponent(&spec, &w, n);
    let contraction = contraction_profile(&spec, &w, &cfg.times, n, cfg.tol)?
        .into_iter()
        .map(|p| ContractionRow {
            t: p.t,
            lipschitz_norm: p.value,
            feynman_kac: p.feynman_kac,
            bound: p.bound,
            worst_state: p.worst_state,
            states_checked: p.states_checked,
        })
        .collect();
    Ok(CurvatureResult {
        sigma: chen.sigma,
        argmin: chen.argmin,
        boundary_minimizer: chen.boundary_minimizer,
        potential: (0..=n).map(|x| potential_value(&spec, &w, x)).collect(),
        contraction,
        tolerance: cfg.tol,
    })
}

// optimize-weight and gap-report

pub fn parse_family(s: &str) -> Result<WeightFamily> {
    match s {
        "const" => Ok(WeightFamily::Constant),
        "geometric" => Ok(WeightFamily::geometric()),
        _ => match s.strip_prefix("table:") {
            Some(len) => {
                let len: usize = len
                    .parse()
                    .map_err(|_| Error::Config(format!("--family: bad table length {len}")))?;
                Ok(WeightFamily::Tabulated {
                    len,
                    tail: WeightTail::HoldRatio,
                })
            }
            None => Err(Error::Config(format!(
                "--family expects const, geometric or table:<len>, got {s}"
            ))),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub family: WeightFamily,
    pub params: Vec<f64>,
    pub sigma: f64,
    pub certificate: Certificate,
    pub evaluations: usize,
    pub scan_range: usize,
    pub trace: Vec<TraceEntry>,
}

impl Tabular for OptimizeResult {
    fn summary(&self) -> Vec<(String, String)> {
        vec![
            ("family".into(), self.family.name()),
            ("sigma*".into(), num(self.sigma)),
            (
                "certificate".into(),
                format!("{:?}", self.certificate).to_lowercase(),
            ),
            ("evaluations".into(), self.evaluations.to_string()),
            ("scan range".into(), self.scan_range.to_string()),
        ]
    }
    fn headers(&self) -> Vec<&'static str> {
        vec!["index", "param"]
    }
    fn rows(&self) -> Vec<Vec<String>> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| vec![i.to_string(), num(*p)])
            .collect()
    }
}

pub fn optimize(
    cfg: &RunConfig,
    family: &WeightFamily,
    budget: usize,
    scan: Option<usize>,
) -> Result<OptimizeResult> {
    let spec = cfg.spec()?;
    let scan_range = scan.unwrap_or_else(|| default_scan_range(cfg.n_trunc));
    let r = optimize_weight(&spec, family, scan_range, budget, Execution::Parallel)?;
    Ok(OptimizeResult {
        family: r.family,
        params: r.params,
        sigma: r.sigma,
        certificate: r.certificate,
        evaluations: r.evaluations,
        scan_range,
        trace: r.trace,
    })
}

impl Tabular for GapReport {
    fn summary(&self) -> Vec<(String, String)> {
        let mut s = vec![
            ("truncation".into(), self.n.to_string()),
            ("scan range".into(), self.scan_range.to_string()),
            ("spectral gap".into(), num(self.gap)),
            ("allowance".into(), num(self.allowance)),
        ];
        s.extend(self.warnings.iter().map(|w| ("warning".into(), w.clone())));
        s
    }
    fn headers(&self) -> Vec<&'static str> {
        vec![
            "family",
            "sigma*",
            "gap",
            "sigma*/gap",
            "certificate",
            "sound",
        ]
    }
    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.family.clone(),
                    num(r.sigma),
                    num(r.gap),
                    num(r.ratio),
                    format!("{:?}", r.certificate).to_lowercase(),
                    r.sound.to_string(),
                ]
            })
            .collect()
    }
    fn pass(&self) -> Option<bool> {
        Some(self.rows.iter().all(|r| r.sound))
    }
}

pub fn gap(cfg: &RunConfig, budget: usize, table_len: usize) -> Result<GapReport> {
    let families = [
        WeightFamily::Constant,
        WeightFamily::geometric(),
        WeightFamily::Tabulated {
            len: table_len,
            tail: WeightTail::HoldRatio,
        },
    ];
    gap_report(
        &cfg.spec()?,
        cfg.n_trunc,
        &families,
        budget,
        Execution::Parallel,
    )
}

// wasserstein

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WassersteinRow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    /// Closed form on the full truncation.
    pub closed_form: f64,
    /// States of the lumped support the LP ran on (0 when skipped).
    pub lp_states: usize,
    /// Closed form on the lumped support, comparable to the LP.
    pub closed_form_lumped: Option<f64>,
    pub lp_primal: Option<f64>,
    pub lp_dual: Option<f64>,
    pub kr_value: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WassersteinResult {
    pub source: String,
    pub rows: Vec<WassersteinRow>,
}

impl Tabular for WassersteinResult {
    fn summary(&self) -> Vec<(String, String)> {
        vec![("pair".into(), self.source.clone())]
    }
    fn headers(&self) -> Vec<&'static str> {
        vec![
            "t",
            "closed_form",
            "lp_states",
            "closed_form_lumped",
            "lp_primal",
            "lp_dual",
            "kr_value",
            "status",
        ]
    }
    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    opt_num(r.t),
                    num(r.closed_form),
                    r.lp_states.to_string(),
                    opt_num(r.closed_form_lumped),
                    opt_num(r.lp_primal),
                    opt_num(r.lp_dual),
                    opt_num(r.kr_value),
                    verdict(r.pass),
                ]
            })
            .collect()
    }
    fn pass(&self) -> Option<bool> {
        Some(self.rows.iter().all(|r| r.pass))
    }
}

/// Lumps the mass past the last state where either law has more than
/// `cut` remaining onto that state, so the LP fits its size guard.
fn lump(a: &Distribution, b: &Distribution, cut: f64) -> Option<(Distribution, Distribution)> {
    let len = a.len().max(b.len());
    let (pa, pb) = (a.padded(len).probs, b.padded(len).probs);
    let (mut ta, mut tb) = (0.0, 0.0);
    let mut k = len - 1;
    while k > 0 && ta + pa[k] <= cut && tb + pb[k] <= cut {
        ta += pa[k];
        tb += pb[k];
        k -= 1;
    }
    if k + 1 > MAX_STATES {
        return None;
    }
    let fold = |p: &[f64], tail: f64| {
        let mut v = p[..=k].to_vec();
        v[k] += tail;
        Distribution {
            probs: v,
            tail_mass_bound: 0.0,
        }
    };
    Some((fold(&pa, ta), fold(&pb, tb)))
}

fn wasserstein_row(
    t: Option<f64>,
    a: &Distribution,
    b: &Distribution,
    cfg: &RunConfig,
) -> Result<WassersteinRow> {
    let w = cfg.weight()?;
    let n = a.len().max(b.len()) - 1;
    let closed_form = wasserstein_du(a, b, &MetricSpace::new(&w, n)?)?;
    let mut row = WassersteinRow {
        t,
        closed_form,
        lp_states: 0,
        closed_form_lumped: None,
        lp_primal: None,
        lp_dual: None,
        kr_value: None,
        pass: true,
    };
    if let Some((la, lb)) = lump(a, b, 1e-16) {
        let m = MetricSpace::new(&w, la.len() - 1)?;
        let lumped = wasserstein_du(&la, &lb, &m)?;
        let lp = wasserstein_lp(&la, &lb, &m.cost_matrix())?;
        let scale = lumped.abs().max(1.0);
        row.pass = (lumped - lp.primal).abs() <= cfg.tol * scale
            && (lp.primal - lp.dual).abs() <= cfg.tol * scale
            && lp
                .kr_value
                .is_none_or(|k| (k - lp.primal).abs() <= cfg.tol * scale);
        row.lp_states = la.len();
        row.closed_form_lumped = Some(lumped);
        row.lp_primal = Some(lp.primal);
        row.lp_dual = Some(lp.dual);
        row.kr_value = lp.kr_value;
    }
    Ok(row)
}

pub fn wasserstein(
    cfg: &RunConfig,
    x0: usize,
    mu1: Option<&str>,
    mu2: Option<&str>,
) -> Result<WassersteinResult> {
    match (mu1, mu2) {
        (Some(p1), Some(p2)) => {
            let a = Distribution::from_masses(read_numbers(p1)?)?;
            let b = Distribution::from_masses(read_numbers(p2)?)?;
            let n = a.len().max(b.len()) - 1;
            cfg.weight()?.validate(n)?;
            Ok(WassersteinResult {
                source: format!("{p1} vs {p2}"),
                rows: vec![wasserstein_row(None, &a, &b, cfg)?],
            })
        }
        (None, None) => {
            let (spec, n) = (cfg.spec()?, cfg.n_trunc);
            check_state(x0, n)?;
            let mu = stationary_distribution(&spec, n)?;
            let rows = cfg
                .times
                .iter()
                .map(|&t| wasserstein_row(Some(t), &law(&spec, x0, t, n)?, &mu, cfg))
                .collect::<Result<_>>()?;
            Ok(WassersteinResult {
                source: format!("law of X_t from {x0} vs stationary"),
                rows,
            })
        }
        _ => Err(Error::Config(
            "--mu1 and --mu2 must be given together".into(),
        )),
    }
}

// inequalities

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityRow {
    pub inequality: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<InequalityMargin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<VerificationReport>,
    /// Reason the check did not apply to this model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

impl InequalityRow {
    fn passed(&self) -> bool {
        self.margin.as_ref().is_none_or(|m| m.pass) && self.report.as_ref().is_none_or(|r| r.pass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalitiesResult {
    pub spectral_gap: f64,
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<KappaEstimate>,
    pub rows: Vec<InequalityRow>,
}

impl Tabular for InequalitiesResult {
    fn summary(&self) -> Vec<(String, String)> {
        vec![
            ("spectral gap".into(), num(self.spectral_gap)),
            ("sigma_u".into(), num(self.sigma)),
            (
                "kappa_u".into(),
                opt_num(self.kappa.as_ref().map(|k| k.value)),
            ),
        ]
    }
    fn headers(&self) -> Vec<&'static str> {
        vec!["inequality", "lhs", "rhs", "margin", "constant", "status"]
    }
    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| match (&r.margin, &r.report, &r.skipped) {
                (Some(m), _, _) => {
                    vec![
                        m.inequality.clone(),
                        num(m.lhs),
                        num(m.rhs),
                        num(m.margin),
                        num(m.constant),
                        verdict(m.pass),
                    ]
                }
                (_, Some(v), _) => vec![
                    v.identity.clone(),
                    "-".into(),
                    "-".into(),
                    num(v.residual_or_margin),
                    "-".into(),
                    verdict(v.pass),
                ],
                (_, _, reason) => vec![
                    r.inequality.clone(),
                    "-".into(),
                    "-".into(),
                    "-".into(),
                    "-".into(),
                    format!("skipped: {}", reason.as_deref().unwrap_or("")),
                ],
            })
            .collect()
    }
    fn pass(&self) -> Option<bool> {
        Some(self.rows.iter().all(InequalityRow::passed))
    }
}

/// Precondition failures become skipped rows; other errors propagate.
fn row_or_skip(name: &str, r: Result<InequalityRow>) -> Result<InequalityRow> {
    match r {
        Err(e @ (Error::Precondition(_) | Error::NegativePotential { .. })) => Ok(InequalityRow {
            inequality: name.into(),
            margin: None,
            report: None,
            skipped: Some(format!("{} ({e})", e.code())),
        }),
        other => other,
    }
}

fn margin_row(m: InequalityMargin) -> InequalityRow {
    InequalityRow {
        inequality: m.inequality.clone(),
        margin: Some(m),
        report: None,
        skipped: None,
    }
}

pub fn inequalities(cfg: &RunConfig) -> Result<InequalitiesResult> {
    let (spec, w, n, tol) = (cfg.spec()?, cfg.weight()?, cfg.n_trunc, cfg.tol);
    let mu = stationary_distribution(&spec, n)?;
    let bump = Func::from_fn(n, |x| 1.0 + 0.5 * (x as f64).sin());
    let total = mu.expect(&bump.values);
    let density = Func::from(bump.values.iter().map(|v| v / total).collect::<Vec<_>>());
    let capped = Func::from_fn(n, |x| x.min(10) as f64);
    let sigma = chen_exponent(&spec, &w, n).sigma;
    let kappa = match kappa_u(&spec, &w, n, tol) {
        Ok(k) => Some(k),
        Err(Error::Precondition(_) | Error::NegativePotential { .. }) => None,
        Err(e) => return Err(e),
    };
    let mut rows = vec![
        row_or_skip(
            "Poincaré",
            poincare_margin(&spec, &w, &capped, n, tol).map(margin_row),
        )?,
        row_or_skip(
            "phi-entropy (r log r)",
            phi_entropy_margin(&spec, &PhiFunction::r_log_r(), &density, n, tol).map(margin_row),
        )?,
    ];
    rows.push(match &kappa {
        Some(k) => row_or_skip(
            "isoperimetry",
            isoperimetry_margin_with_kappa(&spec, &w, &density, n, k.value, tol).map(margin_row),
        )?,
        None => row_or_skip(
            "isoperimetry",
            Err(Error::Precondition("kappa_u needs sigma_u > 0".into())),
        )?,
    });
    rows.push(row_or_skip(
        "transportation-information",
        transport_info_margin(&spec, &w, &density, n, tol).map(margin_row),
    )?);
    rows.push(row_or_skip(
        "Poisson gradient bound",
        poisson_gradient_bound(&spec, &w, n, tol).map(|r| InequalityRow {
            inequality: r.identity.clone(),
            margin: None,
            report: Some(r),
            skipped: None,
        }),
    )?);
    Ok(InequalitiesResult {
        spectral_gap: spectral_gap(&spec, n)?,
        sigma,
        kappa,
        rows,
    })
}

// hitting

/// Monte Carlo estimate in the documented `{mean, stderr, n, seed}` shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
}

impl From<McEstimate> for Estimate {
    fn from(e: McEstimate) -> Self {
        Self {
            mean: e.mean,
            stderr: e.stderr,
            n: e.n_paths,
            seed: e.seed,
        }
    }
}

fn z_score(est: &Estimate, exact: f64) -> f64 {
    let d = (est.mean - exact).abs();
    if d == 0.0 {
        0.0
    } else {
        d / est.stderr.max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingRow {
    pub x: usize,
    pub t: f64,
    pub survival: f64,
    pub feynman_kac: f64,
    pub bound: f64,
    pub residual: f64,
    pub monte_carlo: Estimate,
    pub z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingResult {
    pub lambda: f64,
    pub nu: f64,
    pub rows: Vec<HittingRow>,
}

impl Tabular for HittingResult {
    fn summary(&self) -> Vec<(String, String)> {
        vec![
            ("lambda".into(), num(self.lambda)),
            ("nu".into(), num(self.nu)),
            (
                "decay rate".into(),
                num((self.lambda.sqrt() - self.nu.sqrt()).powi(2)),
            ),
        ]
    }
    fn headers(&self) -> Vec<&'static str> {
        vec![
            "x",
            "t",
            "survival",
            "feynman_kac",
            "bound",
            "residual",
            "mc_mean",
            "mc_stderr",
            "z",
            "status",
        ]
    }
    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.x.to_string(),
                    num(r.t),
                    num(r.survival),
                    num(r.feynman_kac),
                    num(r.bound),
                    num(r.residual),
                    num(r.monte_carlo.mean),
                    num(r.monte_carlo.stderr),
                    format!("{:.3}", r.z),
                    verdict(r.pass),
                ]
            })
            .collect()
    }
    fn pass(&self) -> Option<bool> {
        Some(self.rows.iter().all(|r| r.pass))
    }
}

/// Checks the identity and bound for `P(T_0 > t)` from `x + 1`, next to a
/// Monte Carlo estimate (reported, not part of the verdict).
pub fn hitting(cfg: &RunConfig, xs: &[usize]) -> Result<HittingResult> {
    let (lambda, nu) = cfg.builtin_rates(ModelKind::Mm1)?;
    let t_cap = cfg.times.iter().copied().fold(0.0, f64::max);
    let mc = McConfig::new(cfg.paths, cfg.seed);
    let mut rows = Vec::new();
    for &x in xs {
        let reports = hitting_identity_checks(lambda, nu, x, &cfg.times, cfg.n_trunc, cfg.tol)?;
        let samples = hitting_times(lambda, nu, x + 1, t_cap, &mc)?;
        for (r, &t) in reports.into_iter().zip(&cfg.times) {
            let est = Estimate::from(survival_estimate(&samples, t, t_cap, cfg.seed)?);
            rows.push(HittingRow {
                x,
                t,
                survival: r.survival,
                feynman_kac: r.feynman_kac,
                bound: r.bound,
                residual: r.report.residual_or_margin,
                z: z_score(&est, r.survival),
                monte_carlo: est,
                pass: r.report.pass,
            });
        }
    }
    Ok(HittingResult { lambda, nu, rows })
}

// mehler

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MehlerRow {
    pub t: f64,
    pub total_variation: f64,
    pub mean: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MehlerResult {
    pub x0: usize,
    pub rows: Vec<MehlerRow>,
}

impl Tabular for MehlerResult {
    fn summary(&self) -> Vec<(String, String)> {
        vec![("x0".into(), self.x0.to_string())]
    }
    fn headers(&self) -> Vec<&'static str> {
        vec!["t", "tv(transient, binomial*poisson)", "mean", "status"]
    }
    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    num(r.t),
                    num(r.total_variation),
                    num(r.mean),
                    verdict(r.pass),
                ]
            })
            .collect()
    }
    fn pass(&self) -> Option<bool> {
        Some(self.rows.iter().all(|r| r.pass))
    }
}

pub fn mehler(cfg: &RunConfig, x0: usize) -> Result<MehlerResult> {
    let (lambda, nu) = cfg.builtin_rates(ModelKind::MmInfty)?;
    let (spec, n) = (cfg.spec()?, cfg.n_trunc);
    check_state(x0, n)?;
    let rows = cfg
        .times
        .iter()
        .map(|&t| {
            let p = law(&spec, x0, t, n)?;
            let q = mehler_distribution(lambda, nu, x0, t, n)?;
            let tv = p.total_variation(&q);
            Ok(MehlerRow {
                t,
                total_variation: tv,
                mean: q.mean(),
                pass: tv <= cfg.tol,
            })
        })
        .collect::<Result<_>>()?;
    Ok(MehlerResult { x0, rows })
}

// order

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderRow {
    pub check: String,
    pub t: f64,
    /// Whether the verdict decides the exit status.
    pub asserted: bool,
    pub verdict: OrderingVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderResult {
    pub x: usize,
    pub kappa: f64,
    pub rows: Vec<OrderRow>,
}

impl Tabular for OrderResult {
    fn summary(&self) -> Vec<(String, String)> {
        vec![
            ("x".into(), self.x.to_string()),
            ("kappa".into(), num(self.kappa)),
        ]
    }
    fn headers(&self) -> Vec<&'static str> {
        vec![
            "check",
            "t",
            "holds",
            "worst_point",
            "worst_gap",
            "truncated",
            "asserted",
        ]
    }
    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.check.clone(),
                    num(r.t),
                    r.verdict.holds.to_string(),
                    r.verdict.worst_point.to_string(),
                    num(r.verdict.worst_gap),
                    r.verdict.truncated.to_string(),
                    r.asserted.to_string(),
                ]
            })
            .collect()
    }
    fn pass(&self) -> Option<bool> {
        Some(
            self.rows
                .iter()
                .filter(|r| r.asserted)
                .all(|r| r.verdict.holds),
        )
    }
}

/// Convex domination of `X_t^{x+1}` and its iterated form; the stochastic
/// verdict on the same pair is reported without being asserted.
pub fn order(cfg: &RunConfig, x: usize) -> Result<OrderResult> {
    let (spec, n, tol) = (cfg.spec()?, cfg.n_trunc, cfg.tol);
    check_state(x + 1, n)?;
    let kappa = domination_rate(&spec, n)?;
    let mut rows = Vec::new();
    for &t in &cfg.times {
        rows.push(OrderRow {
            check: "convex domination".into(),
            t,
            asserted: true,
            verdict: convex_domination_check(&spec, x, t, n, tol)?,
        });
        rows.push(OrderRow {
            check: "iterated domination".into(),
            t,
            asserted: true,
            verdict: iterated_domination_check(&spec, x, t, n, tol)?,
        });
        let upper = law(&spec, x + 1, t, n)?;
        let base = law(&spec, x, t, n)?;
        let shifted = Distribution {
            probs: convolve(&base.probs, &binomial_pmf(1, (-kappa * t).exp())),
            tail_mass_bound: base.tail_mass_bound,
        };
        rows.push(OrderRow {
            check: "stochastic (same pair)".into(),
            t,
            asserted: false,
            verdict: stochastic_order(&upper, &shifted, tol)?,
        });
    }
    Ok(OrderResult { x, kappa, rows })
}

// simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRow {
    pub t: f64,
    pub estimate: Estimate,
    pub exact_mean: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResult {
    pub x0: usize,
    pub rows: Vec<SimulateRow>,
}

impl Tabular for SimulateResult {
    fn summary(&self) -> Vec<(String, String)> {
        vec![
            ("x0".into(), self.x0.to_string()),
            ("statistic".into(), "E[min(X_t, n)]".into()),
        ]
    }
    fn headers(&self) -> Vec<&'static str> {
        vec!["t", "mean", "stderr", "n", "seed", "exact", "z"]
    }
    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    num(r.t),
                    num(r.estimate.mean),
                    num(r.estimate.stderr),
                    r.estimate.n.to_string(),
                    r.estimate.seed.to_string(),
                    num(r.exact_mean),
                    format!("{:.3}", r.z),
                ]
            })
            .collect()
    }
}

/// Event-driven estimate of `E[min(X_t, n)]` next to the matrix value.
pub fn simulate(cfg: &RunConfig, x0: usize) -> Result<SimulateResult> {
    let (spec, n) = (cfg.spec()?, cfg.n_trunc);
    check_state(x0, n)?;
    let ident = Func::from_fn(n, |x| x as f64);
    let zero = Potential::constant(0.0, n);
    let mc = McConfig::new(cfg.paths, cfg.seed);
    let gen = build_generator(&spec, n, None)?;
    let rows = cfg
        .times
        .iter()
        .map(|&t| {
            let estimate = Estimate::from(feynman_kac_estimate(&spec, &zero, &ident, x0, t, &mc)?);
            let exact_mean = transient_distribution(&gen, x0, t, LAW_TOL)?.mean();
            Ok(SimulateRow {
                t,
                z: z_score(&estimate, exact_mean),
                estimate,
                exact_mean,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SimulateResult { x0, rows })
}
