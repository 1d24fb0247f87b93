//! Dirichlet forms, Wasserstein distances for the line metric `d_u`, and
//! margins for the functional inequalities driven by the intertwining:
//! Lipschitz contraction, Poincaré, φ-entropy, weighted isoperimetry and
//! transportation-information, plus the Poisson-equation gradient bound.

use serde::{Deserialize, Serialize};

use crate::error::{check_tol, Error, Result};
use crate::intertwine::{
    chain_pair, inner_tol, interior_states, Measure, PhiFunction, VerificationReport,
    REACH_FRACTION,
};
use crate::model::{chen_exponent, stationary_distribution, Family, RateSpec, Weight};
use crate::numeric::{golden_max, kronrod_points, kronrod_rule, nelder_mead_max, ExactSum};
use crate::semigroup::{apply_semigroup_times, build_generator, poisson_solve, Distribution, Func};
use crate::transport::{solve_transport, TransportSolution};
use crate::tridiag::kth_eigenvalue;

/// The line metric `d_u(x, y) = |rho(x) - rho(y)|` on `{0..=n}`.
#[derive(Debug, Clone)]
pub struct MetricSpace {
    pub weight: Weight,
    pub rho: Func,
    pub n: usize,
}

impl MetricSpace {
    pub fn new(weight: &Weight, n: usize) -> Result<Self> {
        weight.validate(n)?;
        Ok(Self {
            weight: weight.clone(),
            rho: Func::from(weight.rho(n)),
            n,
        })
    }

    #[must_use]
    pub fn distance(&self, x: usize, y: usize) -> f64 {
        (self.rho.values[x] - self.rho.values[y]).abs()
    }

    /// Dense cost matrix `d_u(x, y)`.
    #[must_use]
    pub fn cost_matrix(&self) -> Vec<Vec<f64>> {
        (0..=self.n)
            .map(|x| (0..=self.n).map(|y| self.distance(x, y)).collect())
            .collect()
    }
}

/// Both sides of an inequality `rhs <= lhs` and their difference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityMargin {
    pub inequality: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs - rhs`
    pub margin: f64,
    /// The constant the inequality was tested with.
    pub constant: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl InequalityMargin {
    fn new(inequality: &str, lhs: f64, rhs: f64, constant: f64, tolerance: f64) -> Self {
        let margin = lhs - rhs;
        Self {
            inequality: inequality.to_string(),
            lhs,
            rhs,
            margin,
            constant,
            tolerance,
            pass: margin >= -tolerance,
        }
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape { expected, got })
    }
}

/// `sum_{x<n} lambda(x) ∂f(x) ∂g(x) mu(x)` on the support `{0..=n}` of `mu`.
pub fn dirichlet_form(spec: &RateSpec, mu: &Distribution, f: &Func, g: &Func) -> Result<f64> {
    check_len(mu.len(), f.len())?;
    check_len(mu.len(), g.len())?;
    let (f, g) = (&f.values, &g.values);
    Ok((0..mu.len().saturating_sub(1))
        .map(|x| spec.lambda(x) * (f[x + 1] - f[x]) * (g[x + 1] - g[x]) * mu.probs[x])
        .sum())
}

/// `mu(f^2) - mu(f)^2`.
fn variance(mu: &Distribution, f: &[f64]) -> f64 {
    let m = mu.expect(f);
    mu.probs
        .iter()
        .zip(f)
        .map(|(p, v)| p * (v - m) * (v - m))
        .sum()
}

/// Closed-form `W_{d_u}` through the CDFs: `sum_{x<n} u(x) |F1(x) - F2(x)|`.
pub fn wasserstein_du(mu1: &Distribution, mu2: &Distribution, m: &MetricSpace) -> Result<f64> {
    if mu1.len() > m.n + 1 || mu2.len() > m.n + 1 {
        return Err(Error::Shape {
            expected: m.n + 1,
            got: mu1.len().max(mu2.len()),
        });
    }
    let (a, b) = (mu1.padded(m.n + 1), mu2.padded(m.n + 1));
    // F1 - F2 at x equals minus the same difference summed over y > x; use
    // whichever side carries less mass so rounding in the totals is not
    // amplified by a growing weight
    let n = m.n;
    let mut below = Vec::with_capacity(n);
    let (mut diff, mut mass) = (ExactSum::new(), 0.0);
    for x in 0..n {
        diff.add(a.probs[x]);
        diff.add(-b.probs[x]);
        mass += a.probs[x] + b.probs[x];
        below.push((diff.value(), mass));
    }
    let mut above = vec![(0.0, 0.0); n];
    let (mut diff, mut mass) = (ExactSum::new(), 0.0);
    for x in (0..n).rev() {
        diff.add(a.probs[x + 1]);
        diff.add(-b.probs[x + 1]);
        mass += a.probs[x + 1] + b.probs[x + 1];
        above[x] = (diff.value(), mass);
    }
    let mut total = ExactSum::new();
    for x in 0..n {
        let d = if below[x].1 <= above[x].1 {
            below[x].0
        } else {
            above[x].0
        };
        total.add(m.weight.u(x) * d.abs());
    }
    Ok(total.value())
}

/// Exact optimal transport cost between two laws for an arbitrary cost
/// matrix (at most 64 states), with the dual value and 1-Lipschitz potential.
pub fn wasserstein_lp(
    mu1: &Distribution,
    mu2: &Distribution,
    cost: &[Vec<f64>],
) -> Result<TransportSolution> {
    let len = cost.len();
    if mu1.len() > len || mu2.len() > len {
        return Err(Error::Shape {
            expected: len,
            got: mu1.len().max(mu2.len()),
        });
    }
    let (a, b) = (mu1.padded(len), mu2.padded(len));
    solve_transport(&a.probs, &b.probs, cost)
}

/// One time of the Lipschitz contraction profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionPoint {
    pub t: f64,
    /// `max_x ∂_u P_t rho(x)` over interior states
    pub value: f64,
    /// `max_x P^{V_u}_{u,t} 1(x)` over the same states
    pub feynman_kac: f64,
    /// `e^{-sigma_u t}`
    pub bound: f64,
    pub worst_state: usize,
    pub states_checked: usize,
}

/// `‖P_t‖_{Lip(d_u)}` at several times, computed as `sup ∂_u P_t rho` and
/// cross-checked against the Feynman-Kac form.
pub fn contraction_profile(
    spec: &RateSpec,
    w: &Weight,
    times: &[f64],
    n: usize,
    tol: f64,
) -> Result<Vec<ContractionPoint>> {
    check_tol(tol)?;
    if n < 2 {
        return Err(Error::InvalidParameter(
            "truncation must be at least 2".into(),
        ));
    }
    spec.validate(n)?;
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let (gen, gen_u, pot) = chain_pair(spec, w, n, 1.0)?;
    let rho = Func::from(w.rho(n));
    let ones = Func::constant(1.0, n - 1);
    let itol = inner_tol(tol);
    let prho = apply_semigroup_times(&gen, &rho, times, itol)?;
    let fk = apply_semigroup_times(&gen_u, &ones, times, itol)?;
    let osc = rho.values[n];
    let k = interior_states(&gen, &gen_u, t_max, |x| osc / w.u(x), 1.0, tol)?;
    let sigma = pot.inf_estimate;
    Ok(times
        .iter()
        .zip(prho.iter().zip(&fk))
        .map(|(&t, (p, q))| {
            let (mut value, mut worst) = (f64::NEG_INFINITY, 0);
            for x in 0..k {
                let g = (p.values[x + 1] - p.values[x]) / w.u(x);
                if g > value {
                    value = g;
                    worst = x;
                }
            }
            let feynman_kac = q.values[..k]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            ContractionPoint {
                t,
                value,
                feynman_kac,
                bound: (-sigma * t).exp(),
                worst_state: worst,
                states_checked: k,
            }
        })
        .collect())
}

/// `‖P_t‖_{Lip(d_u) -> Lip(d_u)} = sup_x ∂_u P_t rho(x)` on the truncation.
pub fn lipschitz_contraction(spec: &RateSpec, w: &Weight, t: f64, n: usize) -> Result<f64> {
    Ok(contraction_profile(spec, w, &[t], n, 1e-10)?[0].value)
}

/// `𝓔(f, f) - sigma_u Var(f)` under the stationary law on `{0..=n}`.
pub fn poincare_margin(
    spec: &RateSpec,
    w: &Weight,
    f: &Func,
    n: usize,
    tol: f64,
) -> Result<InequalityMargin> {
    check_tol(tol)?;
    check_len(n + 1, f.len())?;
    let mu = stationary_distribution(spec, n)?;
    let sigma = chen_exponent(spec, w, n).sigma;
    let energy = dirichlet_form(spec, &mu, f, f)?;
    let var = variance(&mu, &f.values);
    Ok(InequalityMargin::new(
        "poincare",
        energy,
        sigma * var,
        sigma,
        tol,
    ))
}

/// Smallest nonzero eigenvalue of `-𝓛` on the reflecting truncation, from
/// the √mu-symmetrised tridiagonal matrix.
pub fn spectral_gap(spec: &RateSpec, n: usize) -> Result<f64> {
    let gen = build_generator(spec, n, None)?;
    let d: Vec<f64> = (0..=n).map(|x| gen.up[x] + gen.down[x]).collect();
    let e: Vec<f64> = (0..n)
        .map(|x| -(gen.up[x] * gen.down[x + 1]).sqrt())
        .collect();
    let gap = kth_eigenvalue(&d, &e, 1);
    if gap.is_finite() {
        Ok(gap)
    } else {
        Err(Error::Numerical("eigenvalue bisection failed".into()))
    }
}

/// `𝓔(f, φ'(f)) - sigma_1 Ent^φ(f)` with `sigma_1` the curvature for `u = 1`.
pub fn phi_entropy_margin(
    spec: &RateSpec,
    phi: &PhiFunction,
    f: &Func,
    n: usize,
    tol: f64,
) -> Result<InequalityMargin> {
    check_tol(tol)?;
    check_len(n + 1, f.len())?;
    if !spec.lambda_nonincreasing(n) {
        return Err(Error::Precondition(
            "birth rates must be nonincreasing".into(),
        ));
    }
    let sigma = chen_exponent(spec, &Weight::unit(), n).sigma;
    if !(sigma > 0.0) {
        return Err(Error::Precondition(format!(
            "curvature sigma_1 = {sigma} is not positive"
        )));
    }
    for &r in &f.values {
        phi.check_domain(r)?;
    }
    let mu = stationary_distribution(spec, n)?;
    let dphi = Func::from(f.values.iter().map(|&r| phi.phi1(r)).collect::<Vec<_>>());
    let energy = dirichlet_form(spec, &mu, f, &dphi)?;
    let mean = mu.expect(&f.values);
    phi.check_domain(mean)?;
    let ent = mu
        .probs
        .iter()
        .zip(&f.values)
        .map(|(p, &r)| p * phi.phi(r))
        .sum::<f64>()
        - phi.phi(mean);
    let name = format!("phi-entropy ({})", phi.name);
    Ok(InequalityMargin::new(
        &name,
        energy,
        sigma * ent,
        sigma,
        tol,
    ))
}

/// `kappa_u = ∫_0^∞ sup_x E_x[exp(-∫_0^t V_u(X_{u,s}) ds)] dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    /// `integral + tail_bound`
    pub value: f64,
    pub integral: f64,
    /// `e^{-sigma_u T} / sigma_u`, the bound on the part past the horizon.
    pub tail_bound: f64,
    pub horizon: f64,
    pub error_estimate: f64,
    pub sigma: f64,
    pub evaluations: usize,
    pub states_checked: usize,
}

/// Adaptive Gauss-Kronrod quadrature of the Feynman-Kac contraction profile,
/// cut off where `e^{-sigma_u t}` leaves a tail below `tol / 10`.
pub fn kappa_u(spec: &RateSpec, w: &Weight, n: usize, tol: f64) -> Result<KappaEstimate> {
    check_tol(tol)?;
    if n < 2 {
        return Err(Error::InvalidParameter(
            "truncation must be at least 2".into(),
        ));
    }
    spec.validate(n)?;
    let (gen, gen_u, pot) = chain_pair(spec, w, n, 1.0)?;
    let sigma = pot.inf_estimate;
    if !(sigma > 0.0) {
        return Err(Error::Precondition(format!(
            "kappa_u is not certified integrable: sigma_u = {sigma} <= 0"
        )));
    }
    let horizon = ((10.0 / (sigma * tol)).ln() / sigma).max(1.0 / sigma);
    let tail_bound = (-sigma * horizon).exp() / sigma;
    let k = interior_states(&gen, &gen_u, horizon, |_| 0.0, 1.0, tol)?;
    let ones = Func::constant(1.0, n - 1);
    let itol = inner_tol(tol);
    let sup_fk = |a: f64, b: f64| -> Result<[f64; 15]> {
        let pts = kronrod_points(a, b);
        let vals = apply_semigroup_times(&gen_u, &ones, &pts, itol)?;
        let mut out = [0.0; 15];
        for (o, v) in out.iter_mut().zip(&vals) {
            *o = v.values[..k]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
        }
        Ok(out)
    };
    let pieces = 8;
    let mut stack: Vec<(f64, f64, usize)> = (0..pieces)
        .map(|i| {
            (
                horizon * i as f64 / pieces as f64,
                horizon * (i + 1) as f64 / pieces as f64,
                0,
            )
        })
        .collect();
    let (mut integral, mut error) = (ExactSum::new(), 0.0);
    let mut evaluations = 0;
    let budget = 0.5 * tol;
    while let Some((a, b, depth)) = stack.pop() {
        let vals = sup_fk(a, b)?;
        evaluations += 15;
        let (v, e) = kronrod_rule(a, b, &vals);
        if e <= budget * (b - a) / horizon || depth >= 30 {
            integral.add(v);
            error += e;
        } else {
            let mid = 0.5 * (a + b);
            stack.push((a, mid, depth + 1));
            stack.push((mid, b, depth + 1));
        }
    }
    let integral = integral.value();
    Ok(KappaEstimate {
        value: integral + tail_bound,
        integral,
        tail_bound,
        horizon,
        error_estimate: error,
        sigma,
        evaluations,
        states_checked: k,
    })
}

/// Validates a density against `mu` and rescales it to integral exactly 1.
fn normalized_density(mu: &Distribution, density: &Func) -> Result<Vec<f64>> {
    check_len(mu.len(), density.len())?;
    if density.values.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::Domain(
            "density must be finite and nonnegative".into(),
        ));
    }
    let total = mu.expect(&density.values);
    if !((total - 1.0).abs() <= 1e-6) {
        return Err(Error::Domain(format!(
            "density integrates to {total}, not 1"
        )));
    }
    Ok(density.values.iter().map(|v| v / total).collect())
}

fn density_law(mu: &Distribution, f: &[f64]) -> Distribution {
    Distribution {
        probs: mu.probs.iter().zip(f).map(|(p, v)| p * v).collect(),
        tail_mass_bound: 0.0,
    }
}

/// `∫ lambda u |∂f| dmu - W_{d_u}(f mu, mu) / kappa_u` with `kappa_u` from
/// [`kappa_u`].
pub fn isoperimetry_margin(
    spec: &RateSpec,
    w: &Weight,
    density: &Func,
    n: usize,
    tol: f64,
) -> Result<InequalityMargin> {
    let kappa = kappa_u(spec, w, n, tol)?;
    isoperimetry_margin_with_kappa(spec, w, density, n, kappa.value, tol)
}

pub fn isoperimetry_margin_with_kappa(
    spec: &RateSpec,
    w: &Weight,
    density: &Func,
    n: usize,
    kappa: f64,
    tol: f64,
) -> Result<InequalityMargin> {
    check_tol(tol)?;
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    let mu = stationary_distribution(spec, n)?;
    let f = normalized_density(&mu, density)?;
    let lhs: f64 = (0..n)
        .map(|x| spec.lambda(x) * w.u(x) * (f[x + 1] - f[x]).abs() * mu.probs[x])
        .sum();
    let m = MetricSpace::new(w, n)?;
    let dist = wasserstein_du(&density_law(&mu, &f), &mu, &m)?;
    Ok(InequalityMargin::new(
        "weighted isoperimetry",
        lhs,
        dist / kappa,
        1.0 / kappa,
        tol,
    ))
}

/// `𝓔_mu(√f, √f)`.
pub fn fisher_information(spec: &RateSpec, mu: &Distribution, density: &Func) -> Result<f64> {
    check_len(mu.len(), density.len())?;
    if density.values.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::Domain(
            "density must be finite and nonnegative".into(),
        ));
    }
    let root = Func::from(density.values.iter().map(|v| v.sqrt()).collect::<Vec<_>>());
    dirichlet_form(spec, mu, &root, &root)
}

/// Constants `(epsilon, theta, a, b)` of the Lyapunov condition with test
/// function `theta^x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationParams {
    pub epsilon: f64,
    pub theta: f64,
    pub a: f64,
    pub b: f64,
}

impl DeviationParams {
    pub fn new(epsilon: f64, theta: f64, a: f64, b: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(theta > 1.0 && theta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "theta must exceed 1, got {theta}"
            )));
        }
        if !(a >= 0.0 && a.is_finite()) || !(b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need a >= 0 and b > 0, got a = {a}, b = {b}"
            )));
        }
        Ok(Self {
            epsilon,
            theta,
            a,
            b,
        })
    }

    /// The M/M/∞ choice `a = theta(1 + 1/eps)/(theta - 1)`,
    /// `b = lambda(1 + eps + (1 + 1/eps) theta)`, scaled by `c^2` for the
    /// constant weight `u = c`. It makes the Lyapunov condition an equality.
    pub fn mm_infinity_rule(lambda: f64, epsilon: f64, theta: f64, c: f64) -> Result<Self> {
        let inv = 1.0 + 1.0 / epsilon;
        let c2 = c * c;
        Self::new(
            epsilon,
            theta,
            c2 * theta * inv / (theta - 1.0),
            c2 * lambda * (1.0 + epsilon + inv * theta),
        )
    }

    /// Deviation value at `s = r / kappa`: the positive root `I` of
    /// `a I^2 + b I = s^2`, i.e. `2 s^2 / (sqrt(b^2 + 4 a s^2) + b)`.
    #[must_use]
    pub fn alpha(&self, s: f64) -> f64 {
        let s2 = s * s;
        2.0 * s2 / ((self.b * self.b + 4.0 * self.a * s2).sqrt() + self.b)
    }
}

/// How `(a, b)` are chosen for each `(epsilon, theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LyapunovRule {
    /// Closed form for M/M/∞ with a constant weight.
    MmInfinity,
    /// `a` optimised numerically, `b` the smallest value that works on the
    /// truncation; rejected when doubling the truncation raises `b`.
    Fitted,
}

fn lyapunov_lhs(spec: &RateSpec, w: &Weight, eps: f64, x: usize) -> f64 {
    let mut s = (1.0 + eps) * spec.lambda(x) * w.u(x).powi(2);
    if x > 0 {
        s += (1.0 + 1.0 / eps) * spec.nu(x) * w.u(x - 1).powi(2);
    }
    s
}

/// `lambda_x (theta - 1) + nu_x (1/theta - 1) = 𝓛V_theta / V_theta`.
fn lyapunov_drift(spec: &RateSpec, theta: f64, x: usize) -> f64 {
    spec.lambda(x) * (theta - 1.0) + spec.nu(x) * (1.0 / theta - 1.0)
}

/// Worst relative residual of
/// `(1+eps) lambda_x u_x^2 + (1+1/eps) nu_x u_{x-1}^2 <= -a drift(x) + b`
/// over `{0..=n}`.
pub fn lyapunov_check(
    spec: &RateSpec,
    w: &Weight,
    params: &DeviationParams,
    n: usize,
    tol: f64,
) -> Result<VerificationReport> {
    check_tol(tol)?;
    spec.validate(n)?;
    w.validate(n)?;
    let p = DeviationParams::new(params.epsilon, params.theta, params.a, params.b)?;
    let (mut worst, mut at) = (f64::NEG_INFINITY, 0);
    for x in 0..=n {
        let lhs = lyapunov_lhs(spec, w, p.epsilon, x);
        let drift = p.a * lyapunov_drift(spec, p.theta, x);
        let rhs = p.b - drift;
        let scale = lhs.abs().max(drift.abs()).max(p.b).max(1.0);
        let r = (lhs - rhs) / scale;
        if r > worst || r.is_nan() {
            worst = r;
            at = x;
        }
    }
    Ok(VerificationReport::new(
        "lyapunov condition",
        Measure::Residual,
        worst,
        at,
        0.0,
        tol,
        n + 1,
    ))
}

/// Smallest `b` making the Lyapunov condition hold on `{0..=n}` for this `a`;
/// `None` when the truncation at `2n` needs a larger one.
fn fitted_b(spec: &RateSpec, w: &Weight, eps: f64, theta: f64, a: f64, n: usize) -> Option<f64> {
    let need = |x: usize| lyapunov_lhs(spec, w, eps, x) + a * lyapunov_drift(spec, theta, x);
    let b = (0..=n).map(need).fold(f64::NEG_INFINITY, f64::max);
    let b2 = (n + 1..=2 * n).map(need).fold(f64::NEG_INFINITY, f64::max);
    let b = b.max(f64::MIN_POSITIVE);
    (b.is_finite() && b2 <= b * (1.0 + 1e-9) + 1e-12).then_some(b)
}

/// The `(epsilon, theta)` search box and the truncation used for the
/// Lyapunov condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationGrid {
    pub epsilon: Vec<f64>,
    pub theta: Vec<f64>,
    pub n: usize,
    pub refine: bool,
}

fn log_space(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..k)
        .map(|i| (a + (b - a) * i as f64 / (k - 1) as f64).exp())
        .collect()
}

impl DeviationGrid {
    /// `epsilon` in `[1e-3, 1e3]`, `theta - 1` in `[1e-3, 999]`, log-spaced.
    #[must_use]
    pub fn standard(n: usize) -> Self {
        Self {
            epsilon: log_space(1e-3, 1e3, 25),
            theta: log_space(1e-3, 999.0, 25)
                .into_iter()
                .map(|v| 1.0 + v)
                .collect(),
            n,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationEstimate {
    pub alpha: f64,
    pub params: Option<DeviationParams>,
    pub feasible_points: usize,
}

fn rule_params(
    spec: &RateSpec,
    w: &Weight,
    rule: LyapunovRule,
    eps: f64,
    theta: f64,
    s: f64,
    n: usize,
) -> Result<Option<DeviationParams>> {
    match rule {
        LyapunovRule::MmInfinity => {
            let Family::MmInfinity { lambda, .. } = spec.family else {
                return Err(Error::Precondition(
                    "the M/M/∞ rule needs an M/M/∞ model".into(),
                ));
            };
            let Weight::Constant(c) = *w else {
                return Err(Error::Precondition(
                    "the M/M/∞ rule needs a constant weight".into(),
                ));
            };
            Ok(Some(DeviationParams::mm_infinity_rule(
                lambda, eps, theta, c,
            )?))
        }
        LyapunovRule::Fitted => {
            let feasible = |a: f64| fitted_b(spec, w, eps, theta, a, n);
            let a_min = if feasible(0.0).is_some() {
                0.0
            } else {
                let mut hi = 1.0;
                while feasible(hi).is_none() {
                    hi *= 4.0;
                    if hi > 1e12 {
                        return Ok(None);
                    }
                }
                let mut lo = 0.0;
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if feasible(mid).is_some() {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            };
            let value = |a: f64| match feasible(a) {
                Some(b) => DeviationParams {
                    epsilon: eps,
                    theta,
                    a,
                    b,
                }
                .alpha(s),
                None => 0.0,
            };
            let span = 10.0 * (a_min + 1.0);
            let (a, _, _) = golden_max(value, a_min, a_min + span, 1e-10 * (1.0 + a_min), 200);
            let a = if value(a) >= value(a_min) { a } else { a_min };
            Ok(feasible(a).map(|b| DeviationParams {
                epsilon: eps,
                theta,
                a,
                b,
            }))
        }
    }
}

/// `alpha(r) = sup_{eps, theta} alpha_{a,b}(r / kappa)`: grid search over
/// the box, then Nelder-Mead in `(ln eps, ln(theta - 1))` kept inside it.
/// Every candidate must pass [`lyapunov_check`].
pub fn deviation_function(
    spec: &RateSpec,
    w: &Weight,
    kappa: f64,
    r: f64,
    grid: &DeviationGrid,
    rule: LyapunovRule,
) -> Result<DeviationEstimate> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "r must be finite and >= 0, got {r}"
        )));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    if grid.epsilon.is_empty() || grid.theta.is_empty() {
        return Err(Error::InvalidParameter("empty parameter grid".into()));
    }
    let s = r / kappa;
    let lyap_tol = 1e-10;
    let eval = |eps: f64, theta: f64| -> Result<Option<(f64, DeviationParams)>> {
        let Some(p) = rule_params(spec, w, rule, eps, theta, s, grid.n)? else {
            return Ok(None);
        };
        if !lyapunov_check(spec, w, &p, grid.n, lyap_tol)?.pass {
            return Ok(None);
        }
        Ok(Some((p.alpha(s), p)))
    };
    let mut best: Option<(f64, DeviationParams)> = None;
    let mut feasible_points = 0;
    for &eps in &grid.epsilon {
        for &theta in &grid.theta {
            if let Some(c) = eval(eps, theta)? {
                feasible_points += 1;
                if best.is_none_or(|b| c.0 > b.0) {
                    best = Some(c);
                }
            }
        }
    }
    let Some(mut best) = best else {
        return Err(Error::Precondition(
            "no (epsilon, theta) in the grid satisfies the Lyapunov condition".into(),
        ));
    };
    if r == 0.0 {
        return Ok(DeviationEstimate {
            alpha: 0.0,
            params: Some(best.1),
            feasible_points,
        });
    }
    if grid.refine {
        let bounds = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min).ln();
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max).ln();
            (lo, hi)
        };
        let (elo, ehi) = bounds(&grid.epsilon);
        let tm1: Vec<f64> = grid.theta.iter().map(|t| t - 1.0).collect();
        let (tlo, thi) = bounds(&tm1);
        let mut failure = None;
        let objective = |z: &[f64]| -> f64 {
            let eps = z[0].clamp(elo, ehi).exp();
            let theta = 1.0 + z[1].clamp(tlo, thi).exp();
            match eval(eps, theta) {
                Ok(Some((v, _))) => v,
                Ok(None) => 0.0,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        };
        let start = [best.1.epsilon.ln(), (best.1.theta - 1.0).ln()];
        let (z, _) = nelder_mead_max(objective, &start, 0.5, 1e-15, 2000);
        if let Some(e) = failure {
            return Err(e);
        }
        let eps = z[0].clamp(elo, ehi).exp();
        let theta = 1.0 + z[1].clamp(tlo, thi).exp();
        if let Some(c) = eval(eps, theta)? {
            if c.0 > best.0 {
                best = c;
            }
        }
    }
    Ok(DeviationEstimate {
        alpha: best.0,
        params: Some(best.1),
        feasible_points,
    })
}

/// The closed-form rule when it applies (M/M/∞ with a constant weight),
/// otherwise the fitted one.
#[must_use]
pub fn default_rule(spec: &RateSpec, w: &Weight) -> LyapunovRule {
    match (&spec.family, w) {
        (Family::MmInfinity { .. }, Weight::Constant(_)) => LyapunovRule::MmInfinity,
        _ => LyapunovRule::Fitted,
    }
}

/// `I(f mu, mu) - alpha(W_{d_u}(f mu, mu))` with `kappa_u` computed here.
pub fn transport_info_margin(
    spec: &RateSpec,
    w: &Weight,
    density: &Func,
    n: usize,
    tol: f64,
) -> Result<InequalityMargin> {
    let kappa = kappa_u(spec, w, n, (tol * 1e-2).min(1e-8))?;
    let grid = DeviationGrid::standard(n);
    transport_info_margin_with(
        spec,
        w,
        density,
        n,
        kappa.value,
        &grid,
        default_rule(spec, w),
        tol,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn transport_info_margin_with(
    spec: &RateSpec,
    w: &Weight,
    density: &Func,
    n: usize,
    kappa: f64,
    grid: &DeviationGrid,
    rule: LyapunovRule,
    tol: f64,
) -> Result<InequalityMargin> {
    check_tol(tol)?;
    let mu = stationary_distribution(spec, n)?;
    let f = normalized_density(&mu, density)?;
    let info = fisher_information(spec, &mu, &Func::from(f.clone()))?;
    let m = MetricSpace::new(w, n)?;
    let dist = wasserstein_du(&density_law(&mu, &f), &mu, &m)?;
    let alpha = deviation_function(spec, w, kappa, dist, grid, rule)?.alpha;
    Ok(InequalityMargin::new(
        "transportation-information",
        info,
        alpha,
        kappa,
        tol,
    ))
}

/// Checks `|∂_u g(x)| <= 1/sigma_u` for the solution `g` of
/// `-𝓛g = rho - mu(rho)`. Interior states are those where the solutions on
/// `{0..=n}` and on a 1.5x larger truncation agree.
pub fn poisson_gradient_bound(
    spec: &RateSpec,
    w: &Weight,
    n: usize,
    tol: f64,
) -> Result<VerificationReport> {
    check_tol(tol)?;
    let sigma = chen_exponent(spec, w, n).sigma;
    if !(sigma > 0.0) {
        return Err(Error::Precondition(format!(
            "sigma_u = {sigma} is not positive"
        )));
    }
    let solve = |m: usize| -> Result<Vec<f64>> {
        w.validate(m)?;
        let gen = build_generator(spec, m, None)?;
        let mu = stationary_distribution(spec, m)?;
        let g = poisson_solve(&gen, &mu, &Func::from(w.rho(m)))?;
        Ok(g.values
            .windows(2)
            .enumerate()
            .map(|(x, p)| (p[1] - p[0]) / w.u(x))
            .collect())
    };
    let grad = solve(n)?;
    let wide = solve(n + (n / 2).max(16))?;
    let budget = REACH_FRACTION * tol * (1.0 / sigma).max(1.0);
    let k = (0..n)
        .position(|x| !((grad[x] - wide[x]).abs() <= budget))
        .unwrap_or(n);
    if k == 0 {
        return Err(Error::Precondition(
            "truncation too small: no state is free of boundary effects".into(),
        ));
    }
    let (mut worst, mut at) = (f64::INFINITY, 0);
    for (x, g) in grad[..k].iter().enumerate() {
        let m = 1.0 / sigma - g.abs();
        if m < worst {
            worst = m;
            at = x;
        }
    }
    Ok(VerificationReport::new(
        "poisson gradient bound",
        Measure::Margin,
        worst,
        at,
        0.0,
        tol,
        k,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_builtin, BuiltinKind};

    fn mminf(l: f64, v: f64) -> RateSpec {
        make_builtin(BuiltinKind::MmInfty, l, v).unwrap()
    }
    fn mm1(l: f64, v: f64) -> RateSpec {
        make_builtin(BuiltinKind::Mm1, l, v).unwrap()
    }

    #[test]
    fn dirichlet_form_of_identity_is_total_mass() {
        let s = mminf(1.0, 1.0);
        let mu = stationary_distribution(&s, 60).unwrap();
        let id = Func::from_fn(60, |x| x as f64);
        let e = dirichlet_form(&s, &mu, &id, &id).unwrap();
        let mass: f64 = mu.probs[..60].iter().sum();
        assert!((e - mass).abs() < 1e-15);
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_between_point_masses() {
        let w = Weight::Geometric(1.5);
        let m = MetricSpace::new(&w, 10).unwrap();
        let d = wasserstein_du(
            &Distribution::point_mass(2, 10),
            &Distribution::point_mass(7, 10),
            &m,
        )
        .unwrap();
        assert!((d - m.distance(2, 7)).abs() < 1e-12);
        let lp = wasserstein_lp(
            &Distribution::point_mass(2, 10),
            &Distribution::point_mass(7, 10),
            &m.cost_matrix(),
        )
        .unwrap();
        assert!((lp.primal - d).abs() < 1e-12);
    }

    #[test]
    fn contraction_is_exponential_for_mm_infinity() {
        let s = mminf(1.0, 1.0);
        let pts = contraction_profile(&s, &Weight::unit(), &[0.0, 0.5, 2.0], 120, 1e-10).unwrap();
        for p in pts {
            assert!((p.value - (-p.t).exp()).abs() < 1e-9, "{p:?}");
            assert!((p.feynman_kac - p.value).abs() < 1e-9);
        }
    }

    #[test]
    fn spectral_gaps() {
        assert!((spectral_gap(&mminf(2.0, 1.0), 80).unwrap() - 1.0).abs() < 1e-6);
        let two = RateSpec::tabulated(vec![0.7], vec![0.0, 2.9], crate::model::TailRule::HoldLast)
            .unwrap();
        // the reflecting truncation at n = 1 is the two-state chain
        assert!((spectral_gap(&two, 1).unwrap() - 3.6).abs() < 1e-12);
    }

    #[test]
    fn poincare_is_tight_for_affine_functions() {
        let s = mminf(1.0, 1.0);
        let m = poincare_margin(
            &s,
            &Weight::unit(),
            &Func::from_fn(80, |x| 3.0 * x as f64 - 1.0),
            80,
            1e-10,
        )
        .unwrap();
        assert!(m.margin.abs() < 1e-10, "{m:?}");
    }

    #[test]
    fn kappa_for_constant_potential() {
        let k = kappa_u(&mminf(1.0, 1.0), &Weight::unit(), 60, 1e-8).unwrap();
        assert!((k.value - 1.0).abs() < 1e-6, "{k:?}");
        let k = kappa_u(&mminf(1.0, 2.5), &Weight::unit(), 60, 1e-8).unwrap();
        assert!((k.value - 0.4).abs() < 1e-6, "{k:?}");
    }

    #[test]
    fn lyapunov_rule_is_an_equality() {
        let s = mminf(1.3, 0.7);
        let p = DeviationParams::mm_infinity_rule(1.3, 0.4, 2.5, 1.0).unwrap();
        let r = lyapunov_check(&s, &Weight::unit(), &p, 200, 1e-10).unwrap();
        assert!(r.pass && r.residual_or_margin.abs() < 1e-12, "{r:?}");
        let p = DeviationParams::new(1.0, 2.0, 0.0, 0.1).unwrap();
        let r = lyapunov_check(&mm1(1.0, 4.0), &Weight::Geometric(2.0), &p, 20, 1e-10).unwrap();
        assert!(!r.pass && r.residual_or_margin > 0.0);
    }

    #[test]
    fn deviation_function_matches_closed_form() {
        let s = mminf(1.0, 1.0);
        let grid = DeviationGrid::standard(100);
        for (r, want) in [(0.25, 0.0139320), (1.0, 0.171573), (4.0, 1.527864)] {
            let got =
                deviation_function(&s, &Weight::unit(), 1.0, r, &grid, LyapunovRule::MmInfinity)
                    .unwrap();
            let exact = ((1.0f64 + r).sqrt() - 1.0).powi(2);
            assert!(
                (got.alpha - exact).abs() < 1e-6,
                "r = {r}: {got:?} vs {exact}"
            );
            assert!((exact - want).abs() < 1e-6);
        }
        let zero = deviation_function(
            &s,
            &Weight::unit(),
            1.0,
            0.0,
            &grid,
            LyapunovRule::MmInfinity,
        )
        .unwrap();
        assert_eq!(zero.alpha, 0.0);
    }

    #[test]
    fn fitted_rule_recovers_mm_infinity() {
        let s = mminf(1.0, 1.0);
        let grid = DeviationGrid::standard(100);
        let got =
            deviation_function(&s, &Weight::unit(), 1.0, 1.0, &grid, LyapunovRule::Fitted).unwrap();
        assert!((got.alpha - 0.171573).abs() < 1e-4, "{got:?}");
    }

    #[test]
    fn fitted_rule_rejects_mm1_with_growing_weight() {
        let grid = DeviationGrid::standard(40);
        let e = deviation_function(
            &mm1(1.0, 4.0),
            &Weight::Geometric(2.0),
            1.0,
            1.0,
            &grid,
            LyapunovRule::Fitted,
        );
        assert!(matches!(e, Err(Error::Precondition(_))));
    }

    #[test]
    fn poisson_shift_saturates_transport_information() {
        let s = mminf(1.0, 1.0);
        let n = 60;
        let mu = stationary_distribution(&s, n).unwrap();
        let target = crate::numeric::poisson_pmf(1.5, n);
        let f = Func::from((0..=n).map(|x| target[x] / mu.probs[x]).collect::<Vec<_>>());
        let m = transport_info_margin(&s, &Weight::unit(), &f, n, 1e-6).unwrap();
        assert!(m.margin.abs() < 1e-6, "{m:?}");
        assert!((m.lhs - (1.5f64.sqrt() - 1.0).powi(2)).abs() < 1e-9);
    }

    #[test]
    fn isoperimetry_for_mm1_example() {
        let (s, w, n) = (mm1(1.0, 4.0), Weight::Geometric(2.0), 120);
        let f = Func::from_fn(n, |x| if x == 0 { 0.0 } else { 4.0 });
        // rescale to the truncated normalisation
        let mu = stationary_distribution(&s, n).unwrap();
        let total = mu.expect(&f.values);
        let f = Func::from(f.values.iter().map(|v| v / total).collect::<Vec<_>>());
        let m = isoperimetry_margin_with_kappa(&s, &w, &f, n, 1.0, 1e-10).unwrap();
        assert!((m.lhs / m.rhs - 2.0).abs() < 1e-9, "{m:?}");
    }

    #[test]
    fn poisson_gradient_bound_is_saturated_for_mm_infinity() {
        let r = poisson_gradient_bound(&mminf(1.0, 1.0), &Weight::unit(), 100, 1e-8).unwrap();
        assert!(r.pass && r.residual_or_margin.abs() < 1e-8, "{r:?}");
        let r = poisson_gradient_bound(&mm1(1.0, 4.0), &Weight::Geometric(2.0), 100, 1e-8).unwrap();
        assert!(r.pass, "{r:?}");
    }
}
