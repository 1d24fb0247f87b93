//! Finite-truncation engine: generator matrices, `P_t f` and `P_t^V f` by
//! uniformization, transient laws, killed-chain survival and the Poisson
//! equation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_tol, Error, Result};
use crate::model::{Potential, RateSpec};

/// Probability vector on `{0..=n}` plus an estimate of the mass it misses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub probs: Vec<f64>,
    pub tail_mass_bound: f64,
}

impl Distribution {
    #[must_use]
    pub fn point_mass(x: usize, n: usize) -> Self {
        let mut probs = vec![0.0; n + 1];
        probs[x] = 1.0;
        Self {
            probs,
            tail_mass_bound: 0.0,
        }
    }

    /// Wraps a mass vector, normalising it to total mass 1.
    pub fn from_masses(masses: Vec<f64>) -> Result<Self> {
        if masses.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::Domain(
                "masses must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = masses.iter().sum();
        if total <= 0.0 {
            return Err(Error::Domain("total mass must be positive".into()));
        }
        Ok(Self {
            probs: masses.iter().map(|p| p / total).collect(),
            tail_mass_bound: 0.0,
        })
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    #[must_use]
    pub fn expect(&self, f: &[f64]) -> f64 {
        self.probs.iter().zip(f).map(|(p, v)| p * v).sum()
    }

    #[must_use]
    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(x, p)| x as f64 * p)
            .sum()
    }

    /// Total-variation distance; the shorter vector is padded with zeros.
    #[must_use]
    pub fn total_variation(&self, other: &Distribution) -> f64 {
        let n = self.len().max(other.len());
        let at = |d: &Distribution, i: usize| d.probs.get(i).copied().unwrap_or(0.0);
        0.5 * (0..n)
            .map(|i| (at(self, i) - at(other, i)).abs())
            .sum::<f64>()
    }

    /// Zero-pads to `len` states.
    #[must_use]
    pub fn padded(&self, len: usize) -> Distribution {
        let mut probs = self.probs.clone();
        probs.resize(len.max(probs.len()), 0.0);
        Distribution {
            probs,
            tail_mass_bound: self.tail_mass_bound,
        }
    }
}

/// Test function on `{0..=n}`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Func {
    pub values: Vec<f64>,
}

impl From<Vec<f64>> for Func {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

impl Func {
    pub fn from_fn(n: usize, f: impl Fn(usize) -> f64) -> Self {
        Self {
            values: (0..=n).map(f).collect(),
        }
    }

    #[must_use]
    pub fn constant(c: f64, n: usize) -> Self {
        Self {
            values: vec![c; n + 1],
        }
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[must_use]
    pub fn max_abs(&self) -> f64 {
        max_abs(&self.values)
    }

    /// Member of 𝓕_+.
    #[must_use]
    pub fn is_positive(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }

    /// Member of 𝓕_d (nonnegative, nondecreasing).
    #[must_use]
    pub fn is_nondecreasing(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0) && self.values.windows(2).all(|w| w[1] >= w[0])
    }

    /// Member of 𝓕_c (nonnegative, nondecreasing, convex).
    #[must_use]
    pub fn is_convex_nondecreasing(&self) -> bool {
        self.is_nondecreasing()
            && self
                .values
                .windows(3)
                .all(|w| w[2] - 2.0 * w[1] + w[0] >= 0.0)
    }
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Birth rate at the top state set to zero.
    #[default]
    Reflecting,
}

/// Tridiagonal generator `A` on `{0..=n}` (optionally `A - V`).
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedGenerator {
    pub n: usize,
    /// rate `x -> x+1`; `up[n] = 0`
    pub up: Vec<f64>,
    /// rate `x -> x-1`; `down[0] = 0`
    pub down: Vec<f64>,
    pub potential: Option<Vec<f64>>,
    pub boundary: Boundary,
}

impl TruncatedGenerator {
    pub fn from_rates(
        mut up: Vec<f64>,
        mut down: Vec<f64>,
        potential: Option<Vec<f64>>,
    ) -> Result<Self> {
        if up.len() != down.len() || up.is_empty() {
            return Err(Error::Shape {
                expected: up.len(),
                got: down.len(),
            });
        }
        let n = up.len() - 1;
        up[n] = 0.0;
        down[0] = 0.0;
        if let Some(x) = up
            .iter()
            .chain(&down)
            .position(|&r| !(r >= 0.0 && r.is_finite()))
        {
            return Err(Error::InvalidModel(format!(
                "rate entry {x} is negative or non-finite"
            )));
        }
        if let Some(v) = &potential {
            if v.len() != n + 1 {
                return Err(Error::Shape {
                    expected: n + 1,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidModel("potential is not finite".into()));
            }
        }
        Ok(Self {
            n,
            up,
            down,
            potential,
            boundary: Boundary::Reflecting,
        })
    }

    #[must_use]
    pub fn states(&self) -> usize {
        self.n + 1
    }

    #[must_use]
    pub fn is_conservative(&self) -> bool {
        self.potential
            .as_ref()
            .is_none_or(|v| v.iter().all(|&x| x == 0.0))
    }

    #[must_use]
    pub fn potential_at(&self, x: usize) -> f64 {
        self.potential.as_ref().map_or(0.0, |v| v[x])
    }

    #[must_use]
    pub fn diag(&self, x: usize) -> f64 {
        -(self.up[x] + self.down[x]) - self.potential_at(x)
    }

    /// `A f`
    #[must_use]
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..=n)
            .map(|x| {
                let mut s = -self.potential_at(x) * f[x];
                if x < n {
                    s += self.up[x] * (f[x + 1] - f[x]);
                }
                if x > 0 {
                    s += self.down[x] * (f[x - 1] - f[x]);
                }
                s
            })
            .collect()
    }

    #[must_use]
    pub fn row_sums(&self) -> Vec<f64> {
        self.apply(&vec![1.0; self.n + 1])
    }

    #[must_use]
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut m = DMatrix::zeros(n + 1, n + 1);
        for x in 0..=n {
            m[(x, x)] = self.diag(x);
            if x < n {
                m[(x, x + 1)] = self.up[x];
            }
            if x > 0 {
                m[(x, x - 1)] = self.down[x];
            }
        }
        m
    }

    /// The same chain with its top state made absorbing and no potential.
    #[must_use]
    pub(crate) fn absorbing_top(&self) -> TruncatedGenerator {
        let mut down = self.down.clone();
        down[self.n] = 0.0;
        TruncatedGenerator {
            n: self.n,
            up: self.up.clone(),
            down,
            potential: None,
            boundary: self.boundary,
        }
    }
}

pub fn build_generator(
    spec: &RateSpec,
    n: usize,
    v: Option<&Potential>,
) -> Result<TruncatedGenerator> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "truncation must be at least 1".into(),
        ));
    }
    let (up, down) = spec.rates(n);
    TruncatedGenerator::from_rates(up, down, v.map(|p| (0..=n).map(|x| p.eval(x)).collect()))
}

/// Poisson(m) weights `w_0..=w_K` where `K` is the first index past the mode
/// at which the remaining tail is provably below `tail_tol`. Weights are built
/// by ratios outward from the mode and normalised over `0..=K`.
fn poisson_weights(m: f64, tail_tol: f64) -> Vec<f64> {
    if m == 0.0 {
        return vec![1.0];
    }
    let lm = m.ln();
    let mut lw = -m;
    let cap = (m + 60.0 * m.sqrt() + 1000.0) as usize;
    let mut k = 0usize;
    loop {
        let next = lw + lm - ((k + 1) as f64).ln();
        if (k as f64) >= m {
            let q = m / (k + 2) as f64;
            if next.exp() / (1.0 - q) <= tail_tol || k >= cap {
                break;
            }
        }
        k += 1;
        lw = next;
    }
    let mode = (m.floor() as usize).min(k);
    let mut w = vec![0.0; k + 1];
    w[mode] = 1.0;
    for j in mode + 1..=k {
        w[j] = w[j - 1] * m / j as f64;
    }
    for j in (0..mode).rev() {
        w[j] = w[j + 1] * (j + 1) as f64 / m;
    }
    let total: f64 = crate::numeric::exact_sum(w.iter().copied());
    w.iter_mut().for_each(|x| *x /= total);
    w
}

fn check_func(gen: &TruncatedGenerator, f: &[f64]) -> Result<()> {
    if f.len() != gen.states() {
        return Err(Error::Shape {
            expected: gen.states(),
            got: f.len(),
        });
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("function values must be finite".into()));
    }
    Ok(())
}

/// Uniformized `e^{tA} f` (or `f e^{tA}` when `transpose`) for several times
/// at once. A negative part of the potential is shifted out and restored as
/// the scalar factor `e^{-c t}`.
fn uniformized(
    gen: &TruncatedGenerator,
    f: &[f64],
    times: &[f64],
    tol: f64,
    transpose: bool,
) -> Result<Vec<Vec<f64>>> {
    check_tol(tol)?;
    check_func(gen, f)?;
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "time must be finite and >= 0, got {t}"
        )));
    }
    let n = gen.n;
    let shift = (0..=n).map(|x| gen.potential_at(x)).fold(0.0, f64::min);
    let vs: Vec<f64> = (0..=n).map(|x| gen.potential_at(x) - shift).collect();
    let rate = (0..=n)
        .map(|x| gen.up[x] + gen.down[x] + vs[x])
        .fold(0.0, f64::max);
    let scale = max_abs(f).max(1.0);

    let weights: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| poisson_weights(rate * t, tol / (scale * (-shift * t).exp())))
        .collect();
    let kmax = weights.iter().map(Vec::len).max().unwrap_or(1);
    let mut acc = vec![vec![0.0; n + 1]; times.len()];
    let mut v = f.to_vec();
    let mut next = vec![0.0; n + 1];
    for k in 0..kmax {
        for (a, w) in acc.iter_mut().zip(&weights) {
            if let Some(&wk) = w.get(k) {
                if wk > 0.0 {
                    for (ai, vi) in a.iter_mut().zip(&v) {
                        *ai += wk * vi;
                    }
                }
            }
        }
        if k + 1 == kmax {
            break;
        }
        // v <- P v with P = I + (A - V')/rate
        for x in 0..=n {
            let stay = 1.0 - (gen.up[x] + gen.down[x] + vs[x]) / rate;
            let mut s = stay * v[x];
            if transpose {
                if x > 0 {
                    s += gen.up[x - 1] / rate * v[x - 1];
                }
                if x < n {
                    s += gen.down[x + 1] / rate * v[x + 1];
                }
            } else {
                if x < n {
                    s += gen.up[x] / rate * v[x + 1];
                }
                if x > 0 {
                    s += gen.down[x] / rate * v[x - 1];
                }
            }
            next[x] = s;
        }
        std::mem::swap(&mut v, &mut next);
    }
    for (a, &t) in acc.iter_mut().zip(times) {
        let factor = (-shift * t).exp();
        if factor != 1.0 {
            a.iter_mut().for_each(|x| *x *= factor);
        }
    }
    Ok(acc)
}

/// `P_t f` (or `P_t^V f` when the generator carries a potential).
pub fn apply_semigroup(gen: &TruncatedGenerator, f: &Func, t: f64, tol: f64) -> Result<Func> {
    Ok(uniformized(gen, &f.values, &[t], tol, false)?
        .pop()
        .map(Func::from)
        .unwrap_or_default())
}

/// [`apply_semigroup`] at several times, sharing the matrix powers.
pub fn apply_semigroup_times(
    gen: &TruncatedGenerator,
    f: &Func,
    times: &[f64],
    tol: f64,
) -> Result<Vec<Func>> {
    Ok(uniformized(gen, &f.values, times, tol, false)?
        .into_iter()
        .map(Func::from)
        .collect())
}

pub const EXPM_MAX_STATES: usize = 2000;

/// Dense matrix exponential `e^{tA} f`; reference evaluator for tests.
pub fn expm_oracle(gen: &TruncatedGenerator, f: &Func, t: f64) -> Result<Func> {
    if gen.n > EXPM_MAX_STATES {
        return Err(Error::SizeGuard {
            size: gen.n,
            limit: EXPM_MAX_STATES,
        });
    }
    check_func(gen, &f.values)?;
    if t == 0.0 {
        return Ok(f.clone());
    }
    let e = (gen.to_dense() * t).exp();
    let out = e * DVector::from_column_slice(&f.values);
    Ok(Func::from(out.as_slice().to_vec()))
}

/// Law of `X_t` started at `x0`. `tail_mass_bound` reports the mass sitting
/// on the reflecting top state plus the uniformization tolerance.
pub fn transient_distribution(
    gen: &TruncatedGenerator,
    x0: usize,
    t: f64,
    tol: f64,
) -> Result<Distribution> {
    transient_distributions(gen, x0, &[t], tol)?
        .pop()
        .ok_or_else(|| Error::Numerical("empty".into()))
}

pub fn transient_distributions(
    gen: &TruncatedGenerator,
    x0: usize,
    times: &[f64],
    tol: f64,
) -> Result<Vec<Distribution>> {
    if x0 > gen.n {
        return Err(Error::StateOutOfRange {
            state: x0,
            n: gen.n,
        });
    }
    if !gen.is_conservative() {
        return Err(Error::Precondition(
            "transient laws need a conservative generator".into(),
        ));
    }
    let start = Distribution::point_mass(x0, gen.n).probs;
    Ok(uniformized(gen, &start, times, tol, true)?
        .into_iter()
        .map(|probs| {
            let top = probs[gen.n];
            Distribution {
                probs,
                tail_mass_bound: top + tol,
            }
        })
        .collect())
}

/// `P(T_0 > t)` for the chain started at `x0 >= 1`: the sub-Markov chain on
/// `{1..=n}` where a death from state 1 kills.
pub fn survival_probability(spec: &RateSpec, x0: usize, t: f64, n: usize, tol: f64) -> Result<f64> {
    Ok(survival_probabilities(spec, x0, &[t], n, tol)?[0])
}

pub fn survival_probabilities(
    spec: &RateSpec,
    x0: usize,
    times: &[f64],
    n: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    if x0 == 0 {
        return Err(Error::InvalidParameter(
            "hitting time of 0 from 0 is 0".into(),
        ));
    }
    if x0 > n {
        return Err(Error::StateOutOfRange { state: x0, n });
    }
    spec.validate(n)?;
    let up: Vec<f64> = (1..=n).map(|x| spec.lambda(x)).collect();
    let down: Vec<f64> = (1..=n).map(|x| spec.nu(x)).collect();
    let mut kill = vec![0.0; n];
    kill[0] = spec.nu(1);
    let gen = TruncatedGenerator::from_rates(up, down, Some(kill))?;
    let ones = vec![1.0; n];
    Ok(uniformized(&gen, &ones, times, tol, false)?
        .into_iter()
        .map(|v| v[x0 - 1])
        .collect())
}

/// `P_x(top state reached by time t)` for every `x`, ignoring any potential.
pub(crate) fn top_reach_probability(
    gen: &TruncatedGenerator,
    t: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    let abs = gen.absorbing_top();
    let mut ind = vec![0.0; gen.n + 1];
    ind[gen.n] = 1.0;
    Ok(uniformized(&abs, &ind, &[t], tol, false)?
        .pop()
        .unwrap_or_default())
}

/// Largest prefix `{0..end}` on which `ok(x)` holds (`end` exclusive).
pub(crate) fn prefix_len(len: usize, ok: impl Fn(usize) -> bool) -> usize {
    (0..len).position(|x| !ok(x)).unwrap_or(len)
}

/// Solves `A g = -(f - mu(f))` with `mu(g) = 0` through the flux identity
/// `mu(x) up(x) (g(x+1) - g(x)) = -sum_{y<=x} mu(y) h(y)`, accumulated from
/// whichever side of the mode is numerically stable.
pub fn poisson_solve(gen: &TruncatedGenerator, mu: &Distribution, f: &Func) -> Result<Func> {
    if !gen.is_conservative() {
        return Err(Error::Precondition(
            "Poisson equation needs a conservative generator".into(),
        ));
    }
    check_func(gen, &f.values)?;
    if mu.len() != gen.states() {
        return Err(Error::Shape {
            expected: gen.states(),
            got: mu.len(),
        });
    }
    let n = gen.n;
    let mean = mu.expect(&f.values);
    let h: Vec<f64> = f.values.iter().map(|v| v - mean).collect();

    // r[x] = mu(x+1)/mu(x)
    let mut r = vec![0.0; n];
    for (x, rx) in r.iter_mut().enumerate() {
        if !(gen.up[x] > 0.0 && gen.down[x + 1] > 0.0) {
            return Err(Error::Numerical(format!("chain is reducible at state {x}")));
        }
        *rx = gen.up[x] / gen.down[x + 1];
    }
    let mode = r.iter().position(|&q| q < 1.0).unwrap_or(n);

    let mut d = vec![0.0; n];
    let mut fwd = 0.0;
    for x in 0..mode.min(n) {
        fwd = h[x] + if x > 0 { fwd / r[x - 1] } else { 0.0 };
        d[x] = -fwd / gen.up[x];
    }
    let mut bwd = 0.0;
    for x in (mode.min(n)..n).rev() {
        bwd = r[x] * (h[x + 1] + bwd);
        d[x] = bwd / gen.up[x];
    }
    let mut g = vec![0.0; n + 1];
    for x in 0..n {
        g[x + 1] = g[x] + d[x];
    }
    let c = mu.expect(&g);
    g.iter_mut().for_each(|v| *v -= c);

    let res = poisson_residual(gen, &h, &g);
    if !(res <= 1e-9 * max_abs(&h).max(1.0)) {
        return Err(Error::Numerical(format!(
            "Poisson residual {res:e} too large"
        )));
    }
    Ok(Func::from(g))
}

/// `max_x |(A g)(x) + h(x)|`.
#[must_use]
pub fn poisson_residual(gen: &TruncatedGenerator, h: &[f64], g: &[f64]) -> f64 {
    gen.apply(g)
        .iter()
        .zip(h)
        .map(|(a, b)| (a + b).abs())
        .fold(0.0, f64::max)
}
