//! Seeded event-driven simulation: trajectories, Feynman-Kac path
//! functionals, M/M/1 hitting times, the shared-clock coupling and the
//! Binomial-Poisson transient law of M/M/∞.
//!
//! Path `i` of a run with seed `s` draws from `ChaCha8Rng::seed_from_u64(s)`
//! on stream `i`, so results do not depend on how paths are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{Potential, RateSpec};
use crate::numeric::{binomial_pmf, convolve, poisson_pmf, ExactSum};
use crate::semigroup::{Distribution, Func};

/// Piecewise-constant trajectory on `[0, t_end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub jump_times: Vec<f64>,
    pub states: Vec<usize>,
    pub t_end: f64,
}

impl Path {
    #[must_use]
    pub fn state_at(&self, t: f64) -> usize {
        let k = self.jump_times.partition_point(|&s| s <= t);
        self.states[k]
    }

    #[must_use]
    pub fn final_state(&self) -> usize {
        *self.states.last().unwrap_or(&0)
    }

    /// `∫_0^{t_end} v(X_s) ds`, exact for the piecewise-constant path.
    pub fn integral(&self, v: impl Fn(usize) -> f64) -> f64 {
        let mut acc = 0.0;
        let mut last = 0.0;
        for (i, &t) in self.jump_times.iter().enumerate() {
            acc += v(self.states[i]) * (t - last);
            last = t;
        }
        acc + v(self.final_state()) * (self.t_end - last)
    }

    /// Checks the structural invariants of a birth-death path.
    #[must_use]
    pub fn is_valid(&self) -> bool {
        self.states.len() == self.jump_times.len() + 1
            && self.states.windows(2).all(|w| w[0].abs_diff(w[1]) == 1)
            && self.jump_times.windows(2).all(|w| w[0] < w[1])
            && self.jump_times.iter().all(|&t| t > 0.0 && t <= self.t_end)
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// Exact running sums of values and squares; merging is exact, so any
/// grouping of the same samples gives the same estimate.
#[derive(Debug, Clone, Default)]
pub struct McAccumulator {
    sum: ExactSum,
    sum_sq: ExactSum,
    n: usize,
}

impl McAccumulator {
    #[must_use]
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, v: f64) {
        self.sum.add(v);
        self.sum_sq.add(v * v);
        self.n += 1;
    }

    pub fn merge(&mut self, other: &McAccumulator) {
        self.sum.merge(&other.sum);
        self.sum_sq.merge(&other.sum_sq);
        self.n += other.n;
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.n
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[must_use]
    pub fn estimate(&self, seed: u64) -> McEstimate {
        let n = self.n as f64;
        let mean = self.sum.value() / n;
        let var = if self.n > 1 {
            let mut centered = self.sum_sq.clone();
            centered.add(-self.sum.value() * mean);
            (centered.value() / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        McEstimate {
            mean,
            stderr: (var / n).sqrt(),
            n_paths: self.n,
            seed,
        }
    }
}

impl FromIterator<f64> for McAccumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = McAccumulator::new();
        for v in iter {
            acc.push(v);
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl McConfig {
    #[must_use]
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self {
            n_paths,
            seed,
            exec: Execution::default(),
        }
    }

    fn check(&self) -> Result<()> {
        if self.n_paths == 0 {
            Err(Error::InvalidParameter(
                "at least one path is required".into(),
            ))
        } else {
            Ok(())
        }
    }

    /// Per-path values in index order, pooled exactly.
    fn run(
        &self,
        value: impl Fn(&mut ChaCha8Rng) -> Result<f64> + Sync + Send,
    ) -> Result<McEstimate> {
        self.check()?;
        let vals = self
            .exec
            .try_map(self.n_paths, |i| value(&mut path_rng(self.seed, i)))?;
        Ok(vals
            .into_iter()
            .collect::<McAccumulator>()
            .estimate(self.seed))
    }
}

/// Generator for path `index` of a run seeded with `seed`.
#[must_use]
pub fn path_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "time must be finite and >= 0, got {t}"
        )))
    }
}

/// Runs the chain from `x0` until `t_end`, calling `visit(state, duration)`
/// for every sojourn; returns the final state.
fn walk(
    spec: &RateSpec,
    x0: usize,
    t_end: f64,
    rng: &mut ChaCha8Rng,
    mut on_jump: impl FnMut(f64, usize),
    mut visit: impl FnMut(usize, f64),
) -> Result<usize> {
    let (mut x, mut t) = (x0, 0.0);
    loop {
        let (up, down) = (spec.lambda(x), spec.nu(x));
        let rate = up + down;
        if !(rate.is_finite() && up >= 0.0 && down >= 0.0) {
            return Err(Error::InvalidModel(format!(
                "bad rates at state {x}: {up}, {down}"
            )));
        }
        let hold = if rate > 0.0 {
            rng.sample::<f64, _>(Exp1) / rate
        } else {
            f64::INFINITY
        };
        if t + hold > t_end {
            visit(x, t_end - t);
            return Ok(x);
        }
        visit(x, hold);
        t += hold;
        x = if rng.random::<f64>() * rate < up {
            x + 1
        } else {
            x - 1
        };
        on_jump(t, x);
    }
}

/// Exact event-driven trajectory on `[0, t_end]`.
pub fn sample_path(spec: &RateSpec, x0: usize, t_end: f64, seed: u64) -> Result<Path> {
    check_time(t_end)?;
    sample_path_with(spec, x0, t_end, &mut path_rng(seed, 0))
}

pub fn sample_path_with(
    spec: &RateSpec,
    x0: usize,
    t_end: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Path> {
    let (mut jump_times, mut states) = (Vec::new(), vec![x0]);
    walk(
        spec,
        x0,
        t_end,
        rng,
        |t, x| {
            jump_times.push(t);
            states.push(x);
        },
        |_, _| {},
    )?;
    Ok(Path {
        jump_times,
        states,
        t_end,
    })
}

fn func_at(f: &Func, x: usize) -> f64 {
    f.values[x.min(f.values.len() - 1)]
}

/// Monte Carlo `E_{x0}[f(X_t) exp(-∫_0^t V(X_s) ds)]`. `f` is held at its
/// last value beyond its table.
pub fn feynman_kac_estimate(
    spec: &RateSpec,
    v: &Potential,
    f: &Func,
    x0: usize,
    t: f64,
    cfg: &McConfig,
) -> Result<McEstimate> {
    check_time(t)?;
    if f.is_empty() {
        return Err(Error::Shape {
            expected: 1,
            got: 0,
        });
    }
    cfg.run(|rng| {
        let mut integral = 0.0;
        let end = walk(
            spec,
            x0,
            t,
            rng,
            |_, _| {},
            |x, dt| integral += v.eval(x) * dt,
        )?;
        Ok(func_at(f, end) * (-integral).exp())
    })
}

/// Law of `X_t` from `x0` over `n_paths` paths, on `{0..=n}`; mass above
/// `n` goes to `tail_mass_bound`.
pub fn empirical_distribution(
    spec: &RateSpec,
    x0: usize,
    t: f64,
    n: usize,
    cfg: &McConfig,
) -> Result<Distribution> {
    check_time(t)?;
    cfg.check()?;
    let ends = cfg.exec.try_map(cfg.n_paths, |i| {
        walk(
            spec,
            x0,
            t,
            &mut path_rng(cfg.seed, i),
            |_, _| {},
            |_, _| {},
        )
    })?;
    let mut counts = vec![0usize; n + 1];
    let mut over = 0usize;
    for x in ends {
        match counts.get_mut(x) {
            Some(c) => *c += 1,
            None => over += 1,
        }
    }
    let total = cfg.n_paths as f64;
    Ok(Distribution {
        probs: counts.iter().map(|&c| c as f64 / total).collect(),
        tail_mass_bound: over as f64 / total,
    })
}

/// First passage of M/M/1 to 0, or `None` if not reached by `t_cap`.
pub fn hitting_time_sample(
    lambda: f64,
    nu: f64,
    x0: usize,
    rng: &mut ChaCha8Rng,
    t_cap: f64,
) -> Option<f64> {
    let rate = lambda + nu;
    let (mut x, mut t) = (x0, 0.0);
    while x > 0 {
        t += rng.sample::<f64, _>(Exp1) / rate;
        if t > t_cap {
            return None;
        }
        if rng.random::<f64>() * rate < lambda {
            x += 1;
        } else {
            x -= 1;
        }
    }
    Some(t)
}

fn check_mm1(lambda: f64, nu: f64) -> Result<()> {
    if !(lambda > 0.0 && nu > 0.0 && lambda.is_finite() && nu.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "rates must be positive, got {lambda}, {nu}"
        )));
    }
    Ok(())
}

/// Hitting times of `n_paths` independent M/M/1 paths from `x0 >= 1`.
pub fn hitting_times(
    lambda: f64,
    nu: f64,
    x0: usize,
    t_cap: f64,
    cfg: &McConfig,
) -> Result<Vec<Option<f64>>> {
    check_mm1(lambda, nu)?;
    cfg.check()?;
    if x0 == 0 {
        return Err(Error::InvalidParameter(
            "hitting time of 0 from 0 is 0".into(),
        ));
    }
    Ok(cfg.exec.map(cfg.n_paths, |i| {
        hitting_time_sample(lambda, nu, x0, &mut path_rng(cfg.seed, i), t_cap)
    }))
}

/// Empirical `P(T > t)`; censored samples count as survivors, which is
/// exact for `t <= t_cap`.
pub fn survival_estimate(
    samples: &[Option<f64>],
    t: f64,
    t_cap: f64,
    seed: u64,
) -> Result<McEstimate> {
    if t > t_cap {
        return Err(Error::InvalidParameter(format!(
            "t = {t} is past the censoring time {t_cap}"
        )));
    }
    if samples.is_empty() {
        return Err(Error::InvalidParameter("no samples".into()));
    }
    Ok(samples
        .iter()
        .map(|s| if s.is_none_or(|h| h > t) { 1.0 } else { 0.0 })
        .collect::<McAccumulator>()
        .estimate(seed))
}

/// Least-squares slope of `-log P(T > t)` against `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSlope {
    pub slope: f64,
    /// Grid times with at least one survivor, used in the fit.
    pub times_used: Vec<f64>,
    pub log_survival: Vec<f64>,
}

/// Fits `-log S(t)` on the grid points where `S(t) > 0`; `slope` is NaN
/// with fewer than two usable points.
#[must_use]
pub fn tail_slope(times: &[f64], survival: &[f64]) -> TailSlope {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(survival)
        .filter(|(_, &s)| s > 0.0)
        .map(|(&t, &s)| (t, -s.ln()))
        .collect();
    let slope = if pts.len() < 2 {
        f64::NAN
    } else {
        let k = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let ml = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
        sxy / sxx
    };
    TailSlope {
        slope,
        times_used: pts.iter().map(|p| p.0).collect(),
        log_survival: pts.iter().map(|p| -p.1).collect(),
    }
}

/// M/M/1 paths from `x` and `x + 1` driven by the same arrival and service
/// clocks; a service event at an empty queue is ignored.
pub fn coupled_mm1_paths(
    lambda: f64,
    nu: f64,
    x: usize,
    t_end: f64,
    seed: u64,
) -> Result<(Path, Path)> {
    check_mm1(lambda, nu)?;
    check_time(t_end)?;
    Ok(coupled_with(lambda, nu, x, t_end, &mut path_rng(seed, 0)))
}

fn coupled_with(lambda: f64, nu: f64, x: usize, t_end: f64, rng: &mut ChaCha8Rng) -> (Path, Path) {
    let rate = lambda + nu;
    let mut lower = Path {
        jump_times: Vec::new(),
        states: vec![x],
        t_end,
    };
    let mut upper = Path {
        jump_times: Vec::new(),
        states: vec![x + 1],
        t_end,
    };
    let mut t = 0.0;
    loop {
        t += rng.sample::<f64, _>(Exp1) / rate;
        if t > t_end {
            return (lower, upper);
        }
        let arrival = rng.random::<f64>() * rate < lambda;
        for p in [&mut lower, &mut upper] {
            let s = p.final_state();
            if arrival {
                p.jump_times.push(t);
                p.states.push(s + 1);
            } else if s > 0 {
                p.jump_times.push(t);
                p.states.push(s - 1);
            }
        }
    }
}

/// `upper - lower` stays in `{0, 1}` and never increases.
#[must_use]
pub fn coupling_is_monotone(lower: &Path, upper: &Path) -> bool {
    let mut times: Vec<f64> = lower
        .jump_times
        .iter()
        .chain(&upper.jump_times)
        .copied()
        .collect();
    times.sort_by(f64::total_cmp);
    let mut prev = upper.states[0] as i64 - lower.states[0] as i64;
    if !(0..=1).contains(&prev) {
        return false;
    }
    for t in times {
        let d = upper.state_at(t) as i64 - lower.state_at(t) as i64;
        if !(0..=1).contains(&d) || d > prev {
            return false;
        }
        prev = d;
    }
    true
}

/// Empirical `P(paths differ at t)` and `P(T_0^{x+1} > t)` from the same
/// coupled runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingEstimate {
    pub differ: McEstimate,
    pub survival: McEstimate,
    pub monotone: bool,
}

pub fn coupling_estimate(
    lambda: f64,
    nu: f64,
    x: usize,
    t: f64,
    cfg: &McConfig,
) -> Result<CouplingEstimate> {
    check_mm1(lambda, nu)?;
    check_time(t)?;
    cfg.check()?;
    let per_path = cfg.exec.map(cfg.n_paths, |i| {
        let (lo, up) = coupled_with(lambda, nu, x, t, &mut path_rng(cfg.seed, i));
        let differ = up.final_state() != lo.final_state();
        let survived = !up.states.contains(&0);
        (differ, survived, coupling_is_monotone(&lo, &up))
    });
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    Ok(CouplingEstimate {
        differ: per_path
            .iter()
            .map(|p| ind(p.0))
            .collect::<McAccumulator>()
            .estimate(cfg.seed),
        survival: per_path
            .iter()
            .map(|p| ind(p.1))
            .collect::<McAccumulator>()
            .estimate(cfg.seed),
        monotone: per_path.iter().all(|p| p.2),
    })
}

/// `Binomial(x, e^{-nu t}) * Poisson((lambda/nu)(1 - e^{-nu t}))` on
/// `{0..=n}`, with the mass beyond `n` in `tail_mass_bound`.
pub fn mehler_distribution(
    lambda: f64,
    nu: f64,
    x: usize,
    t: f64,
    n: usize,
) -> Result<Distribution> {
    check_mm1(lambda, nu)?;
    check_time(t)?;
    let p = (-nu * t).exp();
    let m = lambda / nu * -(-nu * t).exp_m1();
    let mut probs = convolve(&binomial_pmf(x, p), &poisson_pmf(m, n));
    probs.resize(n + 1, 0.0);
    let kept: f64 = probs.iter().sum();
    Ok(Distribution {
        probs,
        tail_mass_bound: (1.0 - kept).max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_builtin, BuiltinKind};

    #[test]
    fn zero_horizon_has_no_jumps() {
        let s = make_builtin(BuiltinKind::Mm1, 1.0, 4.0).unwrap();
        let p = sample_path(&s, 3, 0.0, 9).unwrap();
        assert!(p.jump_times.is_empty() && p.states == vec![3]);
    }

    #[test]
    fn paths_are_valid_and_reproducible() {
        let s = make_builtin(BuiltinKind::MmInfty, 3.0, 1.0).unwrap();
        let a = sample_path(&s, 0, 5.0, 42).unwrap();
        let b = sample_path(&s, 0, 5.0, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.is_valid() && !a.jump_times.is_empty());
    }

    #[test]
    fn accumulator_merge_is_exact() {
        let vals: Vec<f64> = (0..1000)
            .map(|i| ((i * 7919) % 1013) as f64 * 1e-3 + 1e10 * ((i % 3) as f64))
            .collect();
        let whole: McAccumulator = vals.iter().copied().collect();
        let mut parts: McAccumulator = vals[..333].iter().copied().collect();
        parts.merge(&vals[333..].iter().copied().collect());
        assert_eq!(whole.estimate(1), parts.estimate(1));
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let s = make_builtin(BuiltinKind::MmInfty, 1.0, 1.0).unwrap();
        let v = Potential::constant(0.5, 10);
        let f = Func::from_fn(10, |x| x as f64);
        let seq = McConfig {
            n_paths: 2000,
            seed: 7,
            exec: Execution::Sequential,
        };
        let par = McConfig {
            exec: Execution::Parallel,
            ..seq
        };
        let a = feynman_kac_estimate(&s, &v, &f, 2, 1.0, &seq).unwrap();
        let b = feynman_kac_estimate(&s, &v, &f, 2, 1.0, &par).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_potential_is_a_factor() {
        let s = make_builtin(BuiltinKind::MmInfty, 1.0, 1.0).unwrap();
        let f = Func::from_fn(30, |x| x as f64);
        let cfg = McConfig::new(4000, 3);
        let plain =
            feynman_kac_estimate(&s, &Potential::constant(0.0, 5), &f, 1, 0.8, &cfg).unwrap();
        let killed =
            feynman_kac_estimate(&s, &Potential::constant(0.7, 5), &f, 1, 0.8, &cfg).unwrap();
        assert!((killed.mean - (-0.56f64).exp() * plain.mean).abs() < 1e-12);
    }

    #[test]
    fn coupling_difference_is_the_survival_indicator() {
        let c = coupling_estimate(1.0, 4.0, 0, 1.0, &McConfig::new(5000, 11)).unwrap();
        assert!(c.monotone);
        assert_eq!(c.differ, c.survival);
    }

    #[test]
    fn mehler_edge_cases() {
        let d = mehler_distribution(1.0, 1.0, 4, 0.0, 10).unwrap();
        assert_eq!(d.probs[4], 1.0);
        let d = mehler_distribution(2.0, 1.0, 0, 1.0, 40).unwrap();
        let want = poisson_pmf(2.0 * (1.0 - (-1.0f64).exp()), 40);
        for (a, b) in d.probs.iter().zip(&want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn tail_slope_of_exact_exponential() {
        let times: Vec<f64> = (0..6).map(|i| 5.0 + i as f64).collect();
        let surv: Vec<f64> = times.iter().map(|t| 0.3 * (-1.5 * t).exp()).collect();
        assert!((tail_slope(&times, &surv).slope - 1.5).abs() < 1e-12);
    }
}
