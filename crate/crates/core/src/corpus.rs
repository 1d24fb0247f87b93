//! Reference chains and test functions shared by the CLI, the integration
//! tests and the benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{make_builtin, BuiltinKind, RateSpec, TailRule, Weight, WeightTail};
use crate::semigroup::Func;

/// A chain paired with the weight used to build its `d_u` metric.
#[derive(Debug, Clone)]
pub struct CorpusChain {
    pub name: String,
    pub spec: RateSpec,
    pub weight: Weight,
}

/// Length of the random rate and weight tables.
pub const RANDOM_TABLE_LEN: usize = 12;

/// A tabulated ergodic chain with a random positive weight. Rates are held
/// constant past the table with the death rate above the birth rate.
#[must_use]
pub fn random_chain(seed: u64) -> CorpusChain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = RANDOM_TABLE_LEN;
    let lambda: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..2.0)).collect();
    let mut nu: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..3.0)).collect();
    nu[0] = 0.0;
    nu[k - 1] = nu[k - 1].max(lambda[k - 1] + 1.0);
    let u: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..2.0)).collect();
    let spec = RateSpec::tabulated(lambda, nu, TailRule::HoldLast).expect("valid random rates");
    let weight = Weight::table(u, WeightTail::HoldLast).expect("valid random weight");
    CorpusChain {
        name: format!("random({seed})"),
        spec,
        weight,
    }
}

/// M/M/∞(1,1) with `u ≡ 1`, M/M/1(1,4) with `u_x = 2^x`, and three random
/// tabulated chains (seeds 1, 2, 3).
#[must_use]
pub fn reference_chains() -> Vec<CorpusChain> {
    let mut out = vec![
        CorpusChain {
            name: "mm_infty(1,1)".into(),
            spec: make_builtin(BuiltinKind::MmInfty, 1.0, 1.0).expect("valid rates"),
            weight: Weight::unit(),
        },
        CorpusChain {
            name: "mm1(1,4)".into(),
            spec: make_builtin(BuiltinKind::Mm1, 1.0, 4.0).expect("valid rates"),
            weight: Weight::Geometric(2.0),
        },
    ];
    out.extend((1..=3).map(random_chain));
    out
}

type Gradient = fn(usize) -> f64;

const GRADIENTS: [(&str, Gradient); 5] = [
    ("rho", |_| 1.0),
    ("rho-capped", |y| if y < 10 { 1.0 } else { 0.0 }),
    ("sin", |y| (y as f64).sin()),
    ("harmonic", |y| 1.0 / (1.0 + y as f64)),
    ("alternating", |y| if y % 2 == 0 { 1.0 } else { -1.0 }),
];

/// Builds `f(x) = Σ_{y<x} u_y g(y)` on `{0..n}`, so that `∂_u f = g`.
#[must_use]
pub fn integrate_gradient(w: &Weight, n: usize, g: impl Fn(usize) -> f64) -> Func {
    let mut acc = 0.0;
    let mut values = Vec::with_capacity(n + 1);
    values.push(0.0);
    for y in 0..n {
        acc += w.u(y) * g(y);
        values.push(acc);
    }
    Func::from(values)
}

/// Five test functions whose `d_u` gradients are bounded by 1.
#[must_use]
pub fn gradient_test_functions(w: &Weight, n: usize) -> Vec<(&'static str, Func)> {
    GRADIENTS
        .iter()
        .map(|&(name, g)| (name, integrate_gradient(w, n, g)))
        .collect()
}

/// Test functions with strictly positive `d_u` gradient, for φ defined on
/// `(0, ∞)` only.
#[must_use]
pub fn increasing_test_functions(w: &Weight, n: usize) -> Vec<(&'static str, Func)> {
    let shifted: [(&str, Gradient); 3] = [
        ("rho", |_| 1.0),
        ("harmonic", |y| 1.0 / (1.0 + y as f64)),
        ("sin-shifted", |y| 2.0 + (y as f64).sin()),
    ];
    shifted
        .iter()
        .map(|&(name, g)| (name, integrate_gradient(w, n, g)))
        .collect()
}

/// Bounded, strictly positive test functions on `{0..n}`.
#[must_use]
pub fn positive_test_functions(n: usize) -> Vec<(&'static str, Func)> {
    vec![
        (
            "ramp-capped",
            Func::from_fn(n, |x| 1.0 + 0.3 * x.min(6) as f64),
        ),
        ("sin-shifted", Func::from_fn(n, |x| 2.0 + (x as f64).sin())),
        (
            "harmonic",
            Func::from_fn(n, |x| 1.0 + 1.0 / (1.0 + x as f64)),
        ),
        (
            "alternating",
            Func::from_fn(n, |x| if x % 2 == 0 { 2.0 } else { 1.0 }),
        ),
        (
            "decay",
            Func::from_fn(n, |x| 0.5 + (-(x as f64) / 4.0).exp()),
        ),
    ]
}
