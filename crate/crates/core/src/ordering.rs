//! Stochastic (`<=_d`) and increasing-convex (`<=_c`) orderings of laws on
//! `{0..=n}`, the rate-comparison lemma and the convex-domination bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_tol, Error, Result};
use crate::model::{Family, RateSpec};
use crate::numeric::{binomial_pmf, convolve, poisson_pmf, ExactSum};
use crate::semigroup::{build_generator, transient_distribution, Distribution};

/// Tail mass above which a verdict is marked as truncated.
pub const TRUNCATION_FLAG: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingVerdict {
    pub holds: bool,
    pub worst_point: usize,
    /// Negative means violation.
    pub worst_gap: f64,
    pub tolerance: f64,
    /// Either law has more than [`TRUNCATION_FLAG`] mass outside its support.
    pub truncated: bool,
}

impl OrderingVerdict {
    fn from_gaps(gaps: &[f64], tol: f64, truncated: bool) -> Self {
        let (worst_point, worst_gap) =
            gaps.iter()
                .copied()
                .enumerate()
                .fold((0, f64::INFINITY), |(i, m), (j, g)| {
                    if g < m || g.is_nan() {
                        (j, g)
                    } else {
                        (i, m)
                    }
                });
        Self {
            holds: worst_gap >= -tol,
            worst_point,
            worst_gap,
            tolerance: tol,
            truncated,
        }
    }
}

fn common(d1: &Distribution, d2: &Distribution) -> (Vec<f64>, Vec<f64>, bool) {
    let len = d1.len().max(d2.len());
    let truncated = d1.tail_mass_bound > TRUNCATION_FLAG || d2.tail_mass_bound > TRUNCATION_FLAG;
    (d1.padded(len).probs, d2.padded(len).probs, truncated)
}

/// `P(X > k)` for `k` in `0..len`, summed from the top.
fn upper_tails(p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len()];
    let mut acc = ExactSum::new();
    for k in (0..p.len()).rev() {
        out[k] = acc.value();
        acc.add(p[k]);
    }
    out
}

/// `E[(X - k)^+]` for `k` in `0..len`, using `SL(k) = sum_{j >= k} P(X > j)`.
fn stop_loss(p: &[f64]) -> Vec<f64> {
    let tails = upper_tails(p);
    let mut out = vec![0.0; p.len()];
    let mut acc = ExactSum::new();
    for k in (0..p.len()).rev() {
        acc.add(tails[k]);
        out[k] = acc.value();
    }
    out
}

/// `X <=_d Y`: gaps `P(Y >= x) - P(X >= x)` for `x` in `1..len`.
pub fn stochastic_order(d1: &Distribution, d2: &Distribution, tol: f64) -> Result<OrderingVerdict> {
    check_tol(tol)?;
    let (p, q, truncated) = common(d1, d2);
    let (tp, tq) = (upper_tails(&p), upper_tails(&q));
    // P(X >= x) = P(X > x - 1)
    let gaps: Vec<f64> = (0..p.len()).map(|k| tq[k] - tp[k]).collect();
    let mut v = OrderingVerdict::from_gaps(&gaps, tol, truncated);
    v.worst_point += 1;
    Ok(v)
}

/// `X <=_c Y`: gaps `E[(Y - k)^+] - E[(X - k)^+]` for integer `k >= 0`.
pub fn convex_order(d1: &Distribution, d2: &Distribution, tol: f64) -> Result<OrderingVerdict> {
    check_tol(tol)?;
    let (p, q, truncated) = common(d1, d2);
    let (sp, sq) = (stop_loss(&p), stop_loss(&q));
    let gaps: Vec<f64> = (0..p.len()).map(|k| sq[k] - sp[k]).collect();
    Ok(OrderingVerdict::from_gaps(&gaps, tol, truncated))
}

fn law(spec: &RateSpec, x0: usize, t: f64, n: usize) -> Result<Distribution> {
    let gen = build_generator(spec, n, None)?;
    transient_distribution(&gen, x0, t, 1e-14)
}

/// With `lambda_B <= lambda_A` and `nu_B >= nu_A` on `{0..=n}`, checks
/// `X^B_t <=_d X^A_t` from the same start on the reflecting truncations.
pub fn comparison_lemma_check(
    spec_a: &RateSpec,
    spec_b: &RateSpec,
    x0: usize,
    t: f64,
    n: usize,
    tol: f64,
) -> Result<OrderingVerdict> {
    spec_a.validate(n)?;
    spec_b.validate(n)?;
    for x in 0..=n {
        if spec_b.lambda(x) > spec_a.lambda(x) || spec_b.nu(x) < spec_a.nu(x) {
            return Err(Error::Precondition(format!(
                "rates are not dominated at state {x}"
            )));
        }
    }
    if x0 > n {
        return Err(Error::StateOutOfRange { state: x0, n });
    }
    stochastic_order(&law(spec_b, x0, t, n)?, &law(spec_a, x0, t, n)?, tol)
}

/// `kappa = min_{x<n} ∂(nu - lambda)(x)`, requiring nonincreasing births and
/// `kappa >= 0`.
pub fn domination_rate(spec: &RateSpec, n: usize) -> Result<f64> {
    spec.validate(n)?;
    if !spec.lambda_nonincreasing(n) {
        return Err(Error::Precondition(
            "birth rates must be nonincreasing".into(),
        ));
    }
    let d = |x: usize| spec.nu(x) - spec.lambda(x);
    let kappa = (0..n)
        .map(|x| d(x + 1) - d(x))
        .fold(f64::INFINITY, f64::min);
    if !(kappa >= 0.0) {
        return Err(Error::Precondition(format!(
            "∂(nu - lambda) has infimum {kappa} < 0"
        )));
    }
    Ok(kappa)
}

fn bernoulli(p: f64) -> Vec<f64> {
    vec![1.0 - p, p]
}

/// `X_t^{x+1} <=_c X_t^x + Y_t` with `Y_t ~ Bernoulli(e^{-kappa t})`.
pub fn convex_domination_check(
    spec: &RateSpec,
    x: usize,
    t: f64,
    n: usize,
    tol: f64,
) -> Result<OrderingVerdict> {
    let kappa = domination_rate(spec, n)?;
    if x + 1 > n {
        return Err(Error::StateOutOfRange { state: x + 1, n });
    }
    let lhs = law(spec, x + 1, t, n)?;
    let base = law(spec, x, t, n)?;
    let rhs = Distribution {
        probs: convolve(&base.probs, &bernoulli((-kappa * t).exp())),
        tail_mass_bound: base.tail_mass_bound,
    };
    convex_order(&lhs, &rhs, tol)
}

/// `X_t^x <=_c X_t^0 + B` with `B ~ Binomial(x, e^{-kappa t})`.
pub fn iterated_domination_check(
    spec: &RateSpec,
    x: usize,
    t: f64,
    n: usize,
    tol: f64,
) -> Result<OrderingVerdict> {
    let kappa = domination_rate(spec, n)?;
    if x > n {
        return Err(Error::StateOutOfRange { state: x, n });
    }
    let lhs = law(spec, x, t, n)?;
    let base = law(spec, 0, t, n)?;
    let rhs = Distribution {
        probs: convolve(&base.probs, &binomial_pmf(x, (-kappa * t).exp())),
        tail_mass_bound: base.tail_mass_bound,
    };
    convex_order(&lhs, &rhs, tol)
}

/// `E[e^{theta X}]` next to `E[e^{theta N}]` for `N` Poisson with the same
/// mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplacePoint {
    pub theta: f64,
    pub law: f64,
    pub poisson: f64,
    pub holds: bool,
}

/// Laplace-transform comparison for the law of `X_t^x` of an M/M/∞ chain.
pub fn laplace_report(
    spec: &RateSpec,
    x: usize,
    t: f64,
    thetas: &[f64],
    n: usize,
) -> Result<Vec<LaplacePoint>> {
    if !matches!(spec.family, Family::MmInfinity { .. }) {
        return Err(Error::Precondition(
            "the Laplace comparison is stated for M/M/∞".into(),
        ));
    }
    let d = law(spec, x, t, n)?;
    let mean = d.mean();
    let pois = poisson_pmf(mean, n);
    Ok(thetas
        .iter()
        .map(|&theta| {
            let mgf = |p: &[f64]| {
                p.iter()
                    .enumerate()
                    .map(|(k, q)| q * (theta * k as f64).exp())
                    .sum::<f64>()
            };
            let (a, b) = (mgf(&d.probs), mgf(&pois));
            LaplacePoint {
                theta,
                law: a,
                poisson: b,
                holds: a <= b * (1.0 + 1e-12),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderKind {
    Stochastic,
    Convex,
}

/// Checks `E f(X) <= E f(Y) + tol` over a grid of test functions: the
/// extremal ones (indicators `1{x >= k}` or hinges `(x - k)^+`) plus
/// `samples` random members of the class drawn from `seed`.
pub fn functional_order(
    d1: &Distribution,
    d2: &Distribution,
    kind: OrderKind,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<bool> {
    check_tol(tol)?;
    let (p, q, _) = common(d1, d2);
    let len = p.len();
    let expect = |v: &[f64], f: &[f64]| v.iter().zip(f).map(|(a, b)| a * b).sum::<f64>();
    let mut fs: Vec<Vec<f64>> = (0..len)
        .map(|k| match kind {
            OrderKind::Stochastic => (0..len).map(|x| if x >= k { 1.0 } else { 0.0 }).collect(),
            OrderKind::Convex => (0..len).map(|x| x.saturating_sub(k) as f64).collect(),
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        // nonnegative increments (and increasing increments for convex)
        let mut inc: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
        if kind == OrderKind::Convex {
            for i in 1..len {
                inc[i] += inc[i - 1];
            }
        }
        let mut f = vec![rng.random::<f64>(); len];
        for x in 1..len {
            f[x] = f[x - 1] + inc[x - 1];
        }
        fs.push(f);
    }
    Ok(fs.iter().all(|f| expect(&p, f) <= expect(&q, f) + tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_builtin, BuiltinKind};

    fn dist(p: Vec<f64>) -> Distribution {
        Distribution::from_masses(p).unwrap()
    }

    #[test]
    fn point_masses() {
        let (a, b) = (
            Distribution::point_mass(1, 4),
            Distribution::point_mass(2, 4),
        );
        assert!(stochastic_order(&a, &b, 0.0 + 1e-15).unwrap().holds);
        assert!(!stochastic_order(&b, &a, 1e-15).unwrap().holds);
        let v = stochastic_order(&a, &a, 1e-15).unwrap();
        assert!(v.holds && v.worst_gap == 0.0);
    }

    #[test]
    fn mean_preserving_spread() {
        let a = Distribution::point_mass(1, 2);
        let b = dist(vec![0.5, 0.0, 0.5]);
        assert!(convex_order(&a, &b, 1e-15).unwrap().holds);
        assert!(!convex_order(&b, &a, 1e-15).unwrap().holds);
        assert!(!stochastic_order(&a, &b, 1e-15).unwrap().holds);
    }

    #[test]
    fn geometric_tails() {
        let n = 200;
        let geo = |p: f64| dist((0..=n).map(|k| p * (1.0 - p).powi(k)).collect());
        let (a, b) = (geo(0.5), geo(1.0 / 3.0));
        // P(X >= k) = (1 - p)^k, larger for the smaller success probability
        assert!(stochastic_order(&a, &b, 1e-14).unwrap().holds);
        assert!(!stochastic_order(&b, &a, 1e-14).unwrap().holds);
    }

    #[test]
    fn mm_infinity_domination_is_an_equality() {
        let s = make_builtin(BuiltinKind::MmInfty, 1.0, 1.0).unwrap();
        let v = convex_domination_check(&s, 2, 0.5, 60, 1e-8).unwrap();
        assert!(v.holds && v.worst_gap.abs() < 1e-8, "{v:?}");
        let v = iterated_domination_check(&s, 4, 1.0, 60, 1e-8).unwrap();
        assert!(v.holds && v.worst_gap.abs() < 1e-8, "{v:?}");
    }

    #[test]
    fn zero_time_domination() {
        let s = make_builtin(BuiltinKind::MmInfty, 1.0, 1.0).unwrap();
        let v = convex_domination_check(&s, 3, 0.0, 30, 1e-12).unwrap();
        assert!(v.holds && v.worst_gap.abs() < 1e-15);
    }

    #[test]
    fn comparison_lemma_on_death_rates() {
        let a = make_builtin(BuiltinKind::MmInfty, 1.0, 1.0).unwrap();
        let b = make_builtin(BuiltinKind::MmInfty, 1.0, 2.0).unwrap();
        assert!(
            comparison_lemma_check(&a, &b, 2, 0.5, 60, 1e-12)
                .unwrap()
                .holds
        );
        assert!(matches!(
            comparison_lemma_check(&b, &a, 2, 0.5, 60, 1e-12),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn laplace_comparison_for_mm_infinity() {
        let s = make_builtin(BuiltinKind::MmInfty, 2.0, 1.0).unwrap();
        let rep = laplace_report(&s, 3, 0.7, &[0.0, 0.5, 1.0, 2.0], 80).unwrap();
        assert!(rep.iter().all(|p| p.holds), "{rep:?}");
    }
}
