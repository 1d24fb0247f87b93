//! Discrete gradients, φ-functionals, and residual/margin checks for the
//! gradient intertwining `∂_u P_t f = P^{V_u}_{u,t} ∂_u f`, its sub-commutation
//! forms, and the M/M/1 hitting-time identity.

use serde::{Deserialize, Serialize};

use crate::error::{check_tol, Error, Result};
use crate::model::{
    make_builtin, potential, u_modification, BuiltinKind, Potential, RateSpec, Weight,
};
use crate::semigroup::{
    apply_semigroup_times, build_generator, max_abs, prefix_len, survival_probabilities,
    top_reach_probability, Func, TruncatedGenerator,
};

/// Forward, backward and weighted discrete gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// `∂f(x)` for `x` in `{0..n-1}`
    pub forward: Func,
    /// `∂*f(x)` for `x` in `{1..n}` (index `i` is state `i + 1`)
    pub backward: Func,
    /// `∂_u f(x)` for `x` in `{0..n-1}`
    pub weighted: Option<Func>,
}

#[must_use]
pub fn gradients(f: &Func, w: Option<&Weight>) -> Gradients {
    let v = &f.values;
    Gradients {
        forward: Func::from(v.windows(2).map(|p| p[1] - p[0]).collect::<Vec<_>>()),
        backward: Func::from(v.windows(2).map(|p| p[0] - p[1]).collect::<Vec<_>>()),
        weighted: w.map(|w| Func::from(weighted_gradient(v, w))),
    }
}

/// `∂_u f(x) = (f(x+1) - f(x)) / u(x)` on `{0..n-1}`.
#[must_use]
pub fn weighted_gradient(f: &[f64], w: &Weight) -> Vec<f64> {
    f.windows(2)
        .enumerate()
        .map(|(x, p)| (p[1] - p[0]) / w.u(x))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PhiKind {
    /// `r^2`
    Square,
    /// `r log r`
    EntropyLog,
    /// `r^p`, `p` in `(1, 2]`
    Power(f64),
}

/// Open interval `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    #[must_use]
    pub fn contains(&self, r: f64) -> bool {
        r > self.lo && r < self.hi
    }
}

/// A convex functional `φ` with the constant `c` of `φ'(r) r >= c φ(r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiFunction {
    pub name: String,
    pub kind: PhiKind,
    pub domain: Interval,
    pub c_const: f64,
    pub satisfies_eqphi: bool,
    /// `φ'(r) r = c φ(r)` identically on the domain.
    pub equality_in_eqphi: bool,
    pub neg_recip_phi2_convex: bool,
}

impl PhiFunction {
    #[must_use]
    pub fn square() -> Self {
        Self::build(
            "r^2",
            PhiKind::Square,
            Interval {
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            },
            2.0,
        )
    }

    #[must_use]
    pub fn r_log_r() -> Self {
        Self::build(
            "r log r",
            PhiKind::EntropyLog,
            Interval {
                lo: 0.0,
                hi: f64::INFINITY,
            },
            1.0,
        )
    }

    pub fn power(p: f64) -> Result<Self> {
        if !(p > 1.0 && p <= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "power must lie in (1, 2], got {p}"
            )));
        }
        Ok(Self::build(
            &format!("r^{p}"),
            PhiKind::Power(p),
            Interval {
                lo: 0.0,
                hi: f64::INFINITY,
            },
            p,
        ))
    }

    /// Derives the flags from a grid over the domain.
    fn build(name: &str, kind: PhiKind, domain: Interval, c: f64) -> Self {
        let mut phi = Self {
            name: name.to_string(),
            kind,
            domain,
            c_const: c,
            satisfies_eqphi: false,
            equality_in_eqphi: false,
            neg_recip_phi2_convex: false,
        };
        let grid: Vec<f64> = if domain.lo == f64::NEG_INFINITY {
            (-400..=400).map(|i| f64::from(i) * 0.125).collect()
        } else {
            (-240..=240)
                .map(|i| 10f64.powf(f64::from(i) / 40.0))
                .collect()
        };
        let slack = |r: f64| phi.phi1(r) * r - c * phi.phi(r);
        let scale = |r: f64| 1e-12 * (1.0 + (c * phi.phi(r)).abs());
        let satisfies = grid.iter().all(|&r| slack(r) >= -scale(r));
        let equality = grid.iter().all(|&r| slack(r).abs() <= scale(r));
        let q = |r: f64| -1.0 / phi.phi2(r);
        let convex = grid.iter().all(|&r| phi.phi2(r) > 0.0)
            && grid.windows(3).all(|w| {
                // convexity through the chord test on consecutive grid points
                let t = (w[1] - w[0]) / (w[2] - w[0]);
                let chord = (1.0 - t) * q(w[0]) + t * q(w[2]);
                q(w[1]) <= chord + 1e-10 * (1.0 + chord.abs())
            });
        phi.satisfies_eqphi = satisfies;
        phi.equality_in_eqphi = equality;
        phi.neg_recip_phi2_convex = convex;
        phi
    }

    #[must_use]
    pub fn phi(&self, r: f64) -> f64 {
        match self.kind {
            PhiKind::Square => r * r,
            PhiKind::EntropyLog => r * r.ln(),
            PhiKind::Power(p) => r.powf(p),
        }
    }

    #[must_use]
    pub fn phi1(&self, r: f64) -> f64 {
        match self.kind {
            PhiKind::Square => 2.0 * r,
            PhiKind::EntropyLog => r.ln() + 1.0,
            PhiKind::Power(p) => p * r.powf(p - 1.0),
        }
    }

    #[must_use]
    pub fn phi2(&self, r: f64) -> f64 {
        match self.kind {
            PhiKind::Square => 2.0,
            PhiKind::EntropyLog => 1.0 / r,
            PhiKind::Power(p) => p * (p - 1.0) * r.powf(p - 2.0),
        }
    }

    pub fn check_domain(&self, r: f64) -> Result<()> {
        if self.domain.contains(r) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "{r} outside the domain of {}",
                self.name
            )))
        }
    }
}

/// `A^φ(r,s) = φ(r+s) - φ(r) - φ'(r)s` and `B^φ(r,s) = (φ'(r+s) - φ'(r))s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiTransforms {
    pub a_transform: f64,
    pub b_transform: f64,
}

pub fn phi_transforms(phi: &PhiFunction, r: f64, s: f64) -> Result<PhiTransforms> {
    phi.check_domain(r)?;
    phi.check_domain(r + s)?;
    Ok(PhiTransforms {
        a_transform: phi.phi(r + s) - phi.phi(r) - phi.phi1(r) * s,
        b_transform: (phi.phi1(r + s) - phi.phi1(r)) * s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// Passes when the value is at most the tolerance.
    Residual,
    /// Passes when the value is at least minus the tolerance.
    Margin,
}

/// Outcome of a residual or margin check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub identity: String,
    pub measure: Measure,
    pub residual_or_margin: f64,
    pub worst_state: usize,
    pub worst_time: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Number of states `{0..k-1}` the check covered.
    pub states_checked: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl VerificationReport {
    #[must_use]
    pub fn new(
        identity: &str,
        measure: Measure,
        value: f64,
        worst_state: usize,
        worst_time: f64,
        tolerance: f64,
        states_checked: usize,
    ) -> Self {
        let pass = match measure {
            Measure::Residual => value <= tolerance,
            Measure::Margin => value >= -tolerance,
        };
        Self {
            identity: identity.to_string(),
            measure,
            residual_or_margin: value,
            worst_state,
            worst_time,
            tolerance,
            pass,
            states_checked,
            notes: Vec::new(),
        }
    }

    /// Keeps the worse of two reports on the same identity.
    #[must_use]
    pub fn merge(self, other: VerificationReport) -> VerificationReport {
        let other_worse = match self.measure {
            Measure::Residual => other.residual_or_margin > self.residual_or_margin,
            Measure::Margin => other.residual_or_margin < self.residual_or_margin,
        };
        let (mut worst, best) = if other_worse {
            (other, self)
        } else {
            (self, other)
        };
        worst.states_checked = worst.states_checked.min(best.states_checked);
        for n in best.notes {
            if !worst.notes.contains(&n) {
                worst.notes.push(n);
            }
        }
        worst
    }

    pub fn merge_all(
        reports: impl IntoIterator<Item = VerificationReport>,
    ) -> Option<VerificationReport> {
        reports.into_iter().reduce(VerificationReport::merge)
    }
}

/// Worst entry of `value(t, x)` over times and the first `states` states.
pub(crate) fn scan_worst(
    times: &[f64],
    states: usize,
    measure: Measure,
    value: impl Fn(usize, usize) -> f64,
) -> (f64, usize, f64) {
    let mut best = match measure {
        Measure::Residual => (f64::NEG_INFINITY, 0, 0.0),
        Measure::Margin => (f64::INFINITY, 0, 0.0),
    };
    for (ti, &t) in times.iter().enumerate() {
        for x in 0..states {
            let v = value(ti, x);
            let worse = match measure {
                Measure::Residual => v > best.0 || v.is_nan(),
                Measure::Margin => v < best.0 || v.is_nan(),
            };
            if worse {
                best = (v, x, t);
            }
        }
    }
    best
}

/// Probability budget for boundary contamination, relative to the check
/// tolerance.
pub(crate) const REACH_FRACTION: f64 = 1e-2;

/// States `{0..k-1}` on which neither truncated chain can feel its top state
/// before `t_max` beyond `REACH_FRACTION * tol`, given the scale of the
/// quantity each side propagates.
pub(crate) fn interior_states(
    gen: &TruncatedGenerator,
    gen_u: &TruncatedGenerator,
    t_max: f64,
    lhs_scale: impl Fn(usize) -> f64,
    rhs_scale: f64,
    tol: f64,
) -> Result<usize> {
    // the uniformized reach is a lower bound short by at most its tolerance
    let reach = top_reach_probability(gen, t_max, 1e-300)?;
    let reach_u = top_reach_probability(gen_u, t_max, 1e-300)?;
    let shift = (0..=gen_u.n)
        .map(|x| gen_u.potential_at(x))
        .fold(0.0, f64::min);
    let amplify = (-shift * t_max).exp();
    let budget = REACH_FRACTION * tol;
    let k = prefix_len(gen_u.n + 1, |x| {
        (reach[x] + reach[x + 1]) * lhs_scale(x) <= budget
            && reach_u[x] * rhs_scale * amplify <= budget
    });
    if k == 0 {
        return Err(Error::Precondition(
            "truncation too small: no state is free of boundary effects".into(),
        ));
    }
    Ok(k)
}

fn check_inputs(spec: &RateSpec, f: &Func, times: &[f64], n: usize, tol: f64) -> Result<f64> {
    check_tol(tol)?;
    if n < 2 {
        return Err(Error::InvalidParameter(
            "truncation must be at least 2".into(),
        ));
    }
    if f.len() != n + 1 {
        return Err(Error::Shape {
            expected: n + 1,
            got: f.len(),
        });
    }
    if f.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("test function must be finite".into()));
    }
    if times.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one time is required".into(),
        ));
    }
    spec.validate(n)?;
    times.iter().copied().try_fold(0.0, |m: f64, t| {
        if t >= 0.0 && t.is_finite() {
            Ok(m.max(t))
        } else {
            Err(Error::InvalidParameter(format!("invalid time {t}")))
        }
    })
}

/// Uniformization tolerance used inside the verifiers.
pub(crate) fn inner_tol(tol: f64) -> f64 {
    (tol * 1e-4).min(1e-12)
}

fn oscillation(v: &[f64]) -> f64 {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        });
    hi - lo
}

/// Original truncated chain on `{0..n}` and the u-modified chain with
/// potential `scale * V_u` on `{0..n-1}`.
pub(crate) fn chain_pair(
    spec: &RateSpec,
    w: &Weight,
    n: usize,
    potential_scale: f64,
) -> Result<(TruncatedGenerator, TruncatedGenerator, Potential)> {
    w.validate(n)?;
    let gen = build_generator(spec, n, None)?;
    let pot = potential(spec, w, n);
    if pot.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition(
            "potential is not finite on the truncation".into(),
        ));
    }
    let scaled = if potential_scale == 1.0 {
        pot.clone()
    } else {
        pot.scaled(potential_scale)
    };
    let gen_u = build_generator(&u_modification(spec, w), n - 1, Some(&scaled))?;
    Ok((gen, gen_u, pot))
}

/// Max over `times` and interior states of `|∂_u P_t f - P^{V_u}_{u,t} ∂_u f|`.
pub fn verify_intertwining(
    spec: &RateSpec,
    w: &Weight,
    f: &Func,
    times: &[f64],
    n: usize,
    tol: f64,
) -> Result<VerificationReport> {
    let t_max = check_inputs(spec, f, times, n, tol)?;
    let (gen, gen_u, _) = chain_pair(spec, w, n, 1.0)?;
    let g = Func::from(weighted_gradient(&f.values, w));
    let itol = inner_tol(tol);
    let lhs: Vec<Vec<f64>> = apply_semigroup_times(&gen, f, times, itol)?
        .iter()
        .map(|p| weighted_gradient(&p.values, w))
        .collect();
    let rhs = apply_semigroup_times(&gen_u, &g, times, itol)?;
    let osc = oscillation(&f.values);
    let k = interior_states(
        &gen,
        &gen_u,
        t_max,
        |x| osc / w.u(x),
        max_abs(&g.values),
        tol,
    )?;
    let (v, x, t) = scan_worst(times, k, Measure::Residual, |ti, x| {
        (lhs[ti][x] - rhs[ti].values[x]).abs()
    });
    Ok(VerificationReport::new(
        "intertwining",
        Measure::Residual,
        v,
        x,
        t,
        tol,
        k,
    ))
}

/// `max_x |∂_u 𝓛f(x) - (𝓛_u - V_u) ∂_u f(x)|` over `{0..n-2}` using the
/// untruncated rates, each term relative to `max(1, |magnitude of its summands|)`.
pub fn infinitesimal_intertwining(
    spec: &RateSpec,
    w: &Weight,
    f: &Func,
    n: usize,
    tol: f64,
) -> Result<VerificationReport> {
    check_inputs(spec, f, &[0.0], n, tol)?;
    w.validate(n)?;
    let fv = &f.values;
    let gen_f = |x: usize| {
        let mut s = spec.lambda(x) * (fv[x + 1] - fv[x]);
        if x > 0 {
            s += spec.nu(x) * (fv[x - 1] - fv[x]);
        }
        s
    };
    let g = weighted_gradient(fv, w);
    let m = u_modification(spec, w);
    let pot = potential(spec, w, n);
    let (v, x, _) = scan_worst(&[0.0], n - 1, Measure::Residual, |_, x| {
        let lhs = (gen_f(x + 1) - gen_f(x)) / w.u(x);
        let mut rhs = m.lambda(x) * (g[x + 1] - g[x]) - pot.eval(x) * g[x];
        let mut size = (m.lambda(x) * (g[x + 1].abs() + g[x].abs())) + (pot.eval(x) * g[x]).abs();
        if x > 0 {
            rhs += m.nu(x) * (g[x - 1] - g[x]);
            size += m.nu(x) * (g[x - 1].abs() + g[x].abs());
        }
        (lhs - rhs).abs() / size.max(1.0)
    });
    Ok(VerificationReport::new(
        "infinitesimal intertwining",
        Measure::Residual,
        v,
        x,
        0.0,
        tol,
        n - 1,
    ))
}

/// Min over times and interior states of
/// `P^{cV_u}_{u,t} φ(∂_u f) - φ(∂_u P_t f)`.
pub fn verify_subcommutation(
    spec: &RateSpec,
    w: &Weight,
    phi: &PhiFunction,
    f: &Func,
    times: &[f64],
    n: usize,
    tol: f64,
) -> Result<VerificationReport> {
    let t_max = check_inputs(spec, f, times, n, tol)?;
    if !phi.satisfies_eqphi {
        return Err(Error::Precondition(format!(
            "{} does not satisfy φ'(r)r >= cφ(r)",
            phi.name
        )));
    }
    let (gen, gen_u, pot) = chain_pair(spec, w, n, phi.c_const)?;
    if pot.inf_estimate < 0.0 && !phi.equality_in_eqphi {
        return Err(Error::NegativePotential {
            state: pot.argmin,
            value: pot.inf_estimate,
        });
    }
    let g = weighted_gradient(&f.values, w);
    for &r in &g {
        phi.check_domain(r)?;
    }
    let phi_g = Func::from(g.iter().map(|&r| phi.phi(r)).collect::<Vec<_>>());
    let itol = inner_tol(tol);
    let pf = apply_semigroup_times(&gen, f, times, itol)?;
    let mut lhs = Vec::with_capacity(times.len());
    for p in &pf {
        let grad = weighted_gradient(&p.values, w);
        let mut row = Vec::with_capacity(grad.len());
        for r in grad {
            phi.check_domain(r)?;
            row.push(phi.phi(r));
        }
        lhs.push(row);
    }
    let rhs = apply_semigroup_times(&gen_u, &phi_g, times, itol)?;
    let osc = oscillation(&f.values);
    let slope = g.iter().map(|&r| phi.phi1(r).abs()).fold(1.0, f64::max);
    let k = interior_states(
        &gen,
        &gen_u,
        t_max,
        |x| slope * osc / w.u(x),
        max_abs(&phi_g.values),
        tol,
    )?;
    let (v, x, t) = scan_worst(times, k, Measure::Margin, |ti, x| {
        rhs[ti].values[x] - lhs[ti][x]
    });
    Ok(VerificationReport::new(
        "sub-commutation",
        Measure::Margin,
        v,
        x,
        t,
        tol,
        k,
    ))
}

/// Min over times and interior states of
/// `P^{V_1}_{1,t} B^φ(f, ∂f) - B^φ(P_t f, ∂P_t f)`.
pub fn verify_bicommutation(
    spec: &RateSpec,
    phi: &PhiFunction,
    f: &Func,
    times: &[f64],
    n: usize,
    tol: f64,
) -> Result<VerificationReport> {
    let t_max = check_inputs(spec, f, times, n, tol)?;
    if !spec.lambda_nonincreasing(n) || !spec.nu_nondecreasing(n) {
        return Err(Error::Precondition(
            "requires nonincreasing birth rates and nondecreasing death rates".into(),
        ));
    }
    if !phi.neg_recip_phi2_convex {
        return Err(Error::Precondition(format!(
            "-1/φ'' is not convex for {}",
            phi.name
        )));
    }
    for &r in &f.values {
        phi.check_domain(r)?;
    }
    let unit = Weight::unit();
    let (gen, gen_u, _) = chain_pair(spec, &unit, n, 1.0)?;
    let bracket = |v: &[f64]| -> Vec<f64> {
        v.windows(2)
            .map(|p| (phi.phi1(p[1]) - phi.phi1(p[0])) * (p[1] - p[0]))
            .collect()
    };
    let b0 = Func::from(bracket(&f.values));
    let itol = inner_tol(tol);
    let pf = apply_semigroup_times(&gen, f, times, itol)?;
    let lhs: Vec<Vec<f64>> = pf.iter().map(|p| bracket(&p.values)).collect();
    let rhs = apply_semigroup_times(&gen_u, &b0, times, itol)?;
    let osc = oscillation(&f.values);
    let (lo, hi) = f.values.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| {
        (a.min(x), b.max(x.abs()))
    });
    let slope = 2.0 * (phi.phi1(hi).abs() + phi.phi1(lo).abs() + phi.phi2(lo).abs() * osc) + 1.0;
    let k = interior_states(
        &gen,
        &gen_u,
        t_max,
        |_| slope * osc,
        max_abs(&b0.values),
        tol,
    )?;
    let (v, x, t) = scan_worst(times, k, Measure::Margin, |ti, x| {
        rhs[ti].values[x] - lhs[ti][x]
    });
    Ok(VerificationReport::new(
        "B-phi sub-commutation",
        Measure::Margin,
        v,
        x,
        t,
        tol,
        k,
    ))
}

/// Both sides of the M/M/1 hitting-time identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingReport {
    pub report: VerificationReport,
    pub survival: f64,
    pub feynman_kac: f64,
    pub bound: f64,
}

/// `P(T_0^{x+1} > t) = u_x P^{V_u}_{u,t}(1/u)(x)` with `u_x = (ν/λ)^{x/2}`,
/// and the bound `P(T_0^{x+1} > t) <= u_x e^{-t(√λ-√ν)²}`.
pub fn hitting_identity_check(
    lambda: f64,
    nu: f64,
    x: usize,
    t: f64,
    n: usize,
    tol: f64,
) -> Result<HittingReport> {
    Ok(hitting_identity_checks(lambda, nu, x, &[t], n, tol)?
        .pop()
        .expect("one time"))
}

pub fn hitting_identity_checks(
    lambda: f64,
    nu: f64,
    x: usize,
    times: &[f64],
    n: usize,
    tol: f64,
) -> Result<Vec<HittingReport>> {
    check_tol(tol)?;
    let spec = make_builtin(BuiltinKind::Mm1, lambda, nu)?;
    if lambda >= nu {
        return Err(Error::ParameterOrder(format!(
            "requires lambda < nu, got {lambda} >= {nu}"
        )));
    }
    if x + 2 > n {
        return Err(Error::StateOutOfRange { state: x + 1, n });
    }
    let w = Weight::Geometric((nu / lambda).sqrt());
    let itol = inner_tol(tol);
    let surv = survival_probabilities(&spec, x + 1, times, n, itol)?;
    let (_, gen_u, _) = chain_pair(&spec, &w, n, 1.0)?;
    let inv_u = Func::from_fn(n - 1, |y| 1.0 / w.u(y));
    let fk = apply_semigroup_times(&gen_u, &inv_u, times, itol)?;
    let gap = (lambda.sqrt() - nu.sqrt()).powi(2);
    Ok(times
        .iter()
        .zip(surv)
        .zip(fk)
        .map(|((&t, s), p)| {
            let rhs = w.u(x) * p.values[x];
            let bound = w.u(x) * (-t * gap).exp();
            let mut report = VerificationReport::new(
                "hitting-time identity",
                Measure::Residual,
                (s - rhs).abs(),
                x,
                t,
                tol,
                n,
            );
            if s > bound + tol {
                report.pass = false;
                report
                    .notes
                    .push(format!("survival {s} exceeds bound {bound}"));
            }
            HittingReport {
                report,
                survival: s,
                feynman_kac: rhs,
                bound,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RateFn, TailRule};

    fn mm1(l: f64, n: f64) -> RateSpec {
        make_builtin(BuiltinKind::Mm1, l, n).unwrap()
    }
    fn mminf(l: f64, n: f64) -> RateSpec {
        make_builtin(BuiltinKind::MmInfty, l, n).unwrap()
    }

    #[test]
    fn gradient_examples() {
        let g = gradients(&Func::constant(2.0, 5), Some(&Weight::Geometric(2.0)));
        assert!(g
            .forward
            .values
            .iter()
            .chain(&g.backward.values)
            .all(|&v| v == 0.0));
        let id = Func::from_fn(6, |x| x as f64);
        let g = gradients(&id, Some(&Weight::unit()));
        assert!(g.weighted.unwrap().values.iter().all(|&v| v == 1.0));
        assert!(g.backward.values.iter().all(|&v| v == -1.0));
        let w =
            Weight::table(vec![0.5, 2.0, 1.5, 3.0], crate::model::WeightTail::HoldLast).unwrap();
        let rho = Func::from(w.rho(8));
        assert!(weighted_gradient(&rho.values, &w)
            .iter()
            .all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn phi_library_flags() {
        let sq = PhiFunction::square();
        assert!(sq.satisfies_eqphi && sq.equality_in_eqphi && sq.neg_recip_phi2_convex);
        let ent = PhiFunction::r_log_r();
        assert!(ent.satisfies_eqphi && !ent.equality_in_eqphi && ent.neg_recip_phi2_convex);
        let p = PhiFunction::power(1.5).unwrap();
        assert!(p.satisfies_eqphi && p.equality_in_eqphi && p.neg_recip_phi2_convex);
        assert!(PhiFunction::power(2.5).is_err());
    }

    #[test]
    fn transforms() {
        let sq = PhiFunction::square();
        let t = phi_transforms(&sq, 1.0, 2.0).unwrap();
        assert_eq!((t.a_transform, t.b_transform), (4.0, 8.0));
        let t = phi_transforms(&PhiFunction::r_log_r(), 0.7, 0.0).unwrap();
        assert_eq!((t.a_transform, t.b_transform), (0.0, 0.0));
        assert!(phi_transforms(&PhiFunction::r_log_r(), 0.5, -1.0).is_err());
    }

    #[test]
    fn intertwining_mm_infinity() {
        let f = Func::from_fn(200, |x| x.min(10) as f64);
        let r = verify_intertwining(
            &mminf(1.0, 1.0),
            &Weight::unit(),
            &f,
            &[0.1, 0.5, 1.0],
            200,
            1e-7,
        )
        .unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.states_checked > 100);
    }

    #[test]
    fn intertwining_mm1_geometric() {
        let w = Weight::Geometric(2.0);
        let f = Func::from(w.rho(200));
        let r = verify_intertwining(&mm1(1.0, 4.0), &w, &f, &[0.2, 1.0], 200, 1e-6).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.states_checked > 50, "{r:?}");
    }

    #[test]
    fn infinitesimal_identity() {
        let spec = RateSpec::tabulated(
            vec![1.0, 2.0, 0.5, 1.2],
            vec![0.0, 1.0, 3.0, 3.5],
            TailRule::LinearExtrapolate,
        )
        .unwrap();
        let w = Weight::table(
            vec![1.0, 0.7, 1.9, 1.1],
            crate::model::WeightTail::HoldRatio,
        )
        .unwrap();
        let f = Func::from_fn(30, |x| ((x * 7) % 5) as f64 - 2.0);
        let r = infinitesimal_intertwining(&spec, &w, &f, 30, 1e-10).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn subcommutation_examples() {
        let sq = PhiFunction::square();
        let f = Func::from_fn(200, |x| x.min(8) as f64);
        let r = verify_subcommutation(
            &mminf(1.0, 1.0),
            &Weight::unit(),
            &sq,
            &f,
            &[0.3, 1.0],
            200,
            1e-8,
        )
        .unwrap();
        assert!(r.pass, "{r:?}");
        let c = verify_subcommutation(
            &mminf(1.0, 1.0),
            &Weight::unit(),
            &sq,
            &Func::constant(2.0, 200),
            &[1.0],
            200,
            1e-8,
        )
        .unwrap();
        assert_eq!(c.residual_or_margin, 0.0);
        let neg = RateSpec::new(
            "births up",
            RateFn::custom(|x| 1.0 + x as f64),
            RateFn::Step(1.0),
        );
        let err = verify_subcommutation(
            &neg,
            &Weight::unit(),
            &PhiFunction::r_log_r(),
            &Func::from_fn(40, |x| 1.0 + x as f64),
            &[0.1],
            40,
            1e-8,
        )
        .unwrap_err();
        assert_eq!(err.code(), "negative-potential");
    }

    #[test]
    fn bicommutation_examples() {
        let f = Func::from_fn(200, |x| if x < 6 { 1.0 + 0.3 * x as f64 } else { 2.5 });
        for phi in [PhiFunction::r_log_r(), PhiFunction::power(1.5).unwrap()] {
            let r =
                verify_bicommutation(&mminf(1.0, 1.0), &phi, &f, &[0.2, 1.0], 200, 1e-8).unwrap();
            assert!(r.pass, "{r:?}");
        }
        let bad = RateSpec::new(
            "births up",
            RateFn::custom(|x| 1.0 + x as f64),
            RateFn::Linear(1.0),
        );
        assert_eq!(
            verify_bicommutation(&bad, &PhiFunction::square(), &f, &[0.2], 200, 1e-8)
                .unwrap_err()
                .code(),
            "precondition-violation"
        );
    }

    #[test]
    fn hitting_examples() {
        let r = hitting_identity_check(1.0, 4.0, 0, 1.0, 200, 1e-6).unwrap();
        assert!(r.report.pass, "{r:?}");
        assert!(r.survival <= (-1f64).exp());
        let r = hitting_identity_check(1.0, 4.0, 2, 0.0, 200, 1e-6).unwrap();
        assert!((r.survival - 1.0).abs() < 1e-12 && (r.feynman_kac - 1.0).abs() < 1e-12);
        let r = hitting_identity_check(1.0, 4.0, 3, 2.0, 200, 1e-6).unwrap();
        assert!(r.survival <= 8.0 * (-2f64).exp());
        assert_eq!(
            hitting_identity_check(4.0, 1.0, 0, 1.0, 200, 1e-6)
                .unwrap_err()
                .code(),
            "parameter-order"
        );
    }

    #[test]
    fn merge_keeps_worst() {
        let a = VerificationReport::new("x", Measure::Margin, -1e-3, 1, 0.5, 1e-8, 10);
        let b = VerificationReport::new("x", Measure::Margin, 0.0, 2, 1.0, 1e-8, 12);
        let m = VerificationReport::merge_all([b, a.clone()]).unwrap();
        assert_eq!(m.worst_state, 1);
        assert!(!m.pass);
    }
}
