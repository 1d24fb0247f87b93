//! Small numerical kernels shared across modules: exact summation, log-space
//! helpers, 1-D and simplex search, and Gauss-Kronrod quadrature.

/// Exactly rounded floating-point accumulator (Shewchuk partials). The final
/// value does not depend on the order in which terms were added.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    #[must_use]
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
    }

    #[must_use]
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let Some(&last) = p.last() else { return 0.0 };
        let mut n = p.len() - 1;
        let mut hi = last;
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            lo = y - (hi - x);
            if lo != 0.0 {
                break;
            }
        }
        // round-half-even correction across the remaining partials
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

impl FromIterator<f64> for ExactSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = ExactSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

#[must_use]
pub fn exact_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().collect::<ExactSum>().value()
}

#[must_use]
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Table of ln(k!) for k = 0..=n.
#[must_use]
pub fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Poisson(m) probabilities on {0..=n}, computed in log space.
#[must_use]
pub fn poisson_pmf(m: f64, n: usize) -> Vec<f64> {
    if m <= 0.0 {
        let mut v = vec![0.0; n + 1];
        v[0] = 1.0;
        return v;
    }
    let lf = ln_factorials(n);
    let lm = m.ln();
    (0..=n).map(|k| (k as f64 * lm - m - lf[k]).exp()).collect()
}

/// Binomial(x, p) probabilities on {0..=x}.
#[must_use]
pub fn binomial_pmf(x: usize, p: f64) -> Vec<f64> {
    if p <= 0.0 {
        let mut v = vec![0.0; x + 1];
        v[0] = 1.0;
        return v;
    }
    if p >= 1.0 {
        let mut v = vec![0.0; x + 1];
        v[x] = 1.0;
        return v;
    }
    let lf = ln_factorials(x);
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    (0..=x)
        .map(|k| (lf[x] - lf[k] - lf[x - k] + k as f64 * lp + (x - k) as f64 * lq).exp())
        .collect()
}

/// Discrete convolution of two mass vectors.
#[must_use]
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
/// Returns `(argmax, max, evaluations)`.
pub fn golden_max(
    mut f: impl FnMut(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    xtol: f64,
    max_iter: usize,
) -> (f64, f64, usize) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut evals = 2;
    for _ in 0..max_iter {
        if (hi - lo).abs() <= xtol {
            break;
        }
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
        evals += 1;
    }
    if fc >= fd {
        (c, fc, evals)
    } else {
        (d, fd, evals)
    }
}

/// Nelder-Mead maximization from `x0` with initial step `step`.
/// Returns `(argmax, max)`.
pub fn nelder_mead_max(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: f64,
    ftol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let d = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let v0 = f(x0);
    simplex.push((x0.to_vec(), -v0));
    for i in 0..d {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = f(&x);
        simplex.push((x, -v));
    }
    let cmp = |a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)| a.1.total_cmp(&b.1);
    for _ in 0..max_iter {
        simplex.sort_by(cmp);
        let best = simplex[0].1;
        let worst = simplex[d].1;
        if (worst - best).abs() <= ftol * (1.0 + best.abs()) {
            break;
        }
        let mut centroid = vec![0.0; d];
        for (x, _) in &simplex[..d] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / d as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[d].0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = along(-1.0);
        let fr = -f(&xr);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = -f(&xe);
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let xc = if fr < worst { along(-0.5) } else { along(0.5) };
            let fc = -f(&xc);
            if fc < worst.min(fr) {
                simplex[d] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for (x, v) in simplex.iter_mut().skip(1) {
                    for (xi, b) in x.iter_mut().zip(&x_best) {
                        *xi = b + 0.5 * (*xi - b);
                    }
                    *v = -f(x);
                }
            }
        }
    }
    simplex.sort_by(cmp);
    let (x, v) = simplex.swap_remove(0);
    (x, -v)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// The 15 Kronrod abscissae mapped to `[a, b]`.
#[must_use]
pub fn kronrod_points(a: f64, b: f64) -> [f64; 15] {
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut out = [0.0; 15];
    for i in 0..7 {
        out[i] = c - h * GK_NODES[i];
        out[14 - i] = c + h * GK_NODES[i];
    }
    out[7] = c;
    out
}

/// Kronrod estimate and Gauss-Kronrod error estimate for values sampled at
/// [`kronrod_points`].
#[must_use]
pub fn kronrod_rule(a: f64, b: f64, vals: &[f64; 15]) -> (f64, f64) {
    let h = 0.5 * (b - a);
    let mut k = GK_WK[7] * vals[7];
    let mut g = GK_WG[3] * vals[7];
    for i in 0..7 {
        let pair = vals[i] + vals[14 - i];
        k += GK_WK[i] * pair;
        if i % 2 == 1 {
            g += GK_WG[i / 2] * pair;
        }
    }
    (k * h, ((k - g) * h).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_sum_is_order_independent() {
        let xs = [1e16, 1.0, -1e16, 3.0, 1e-8, -2.5];
        let a = exact_sum(xs);
        let b = exact_sum(xs.iter().rev().copied());
        assert_eq!(a, b);
        assert_eq!(a, 1.5 + 1e-8);
    }

    #[test]
    fn exact_sum_merge_matches_pooled() {
        let xs: Vec<f64> = (0..1000)
            .map(|i| ((i * 7919) % 1013) as f64 / 37.0 - 13.0)
            .collect();
        let pooled = exact_sum(xs.iter().copied());
        let mut a: ExactSum = xs[..400].iter().copied().collect();
        let b: ExactSum = xs[400..].iter().copied().collect();
        a.merge(&b);
        assert_eq!(a.value(), pooled);
    }

    #[test]
    fn pmfs_sum_to_one() {
        assert!((poisson_pmf(3.0, 60).iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!((binomial_pmf(12, 0.3).iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let b = binomial_pmf(2, 0.5);
        assert!((b[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, v, _) = golden_max(|x| -(x - 0.3) * (x - 0.3), -2.0, 5.0, 1e-10, 200);
        assert!((x - 0.3).abs() < 1e-8 && v.abs() < 1e-15);
    }

    #[test]
    fn nelder_mead_finds_quadratic_peak() {
        let (x, _) = nelder_mead_max(
            |p| -(p[0] - 1.0).powi(2) - 3.0 * (p[1] + 2.0).powi(2),
            &[0.0, 0.0],
            0.5,
            1e-14,
            2000,
        );
        assert!((x[0] - 1.0).abs() < 1e-5 && (x[1] + 2.0).abs() < 1e-5);
    }

    #[test]
    fn kronrod_integrates_exponential() {
        let pts = kronrod_points(0.0, 2.0);
        let vals = pts.map(|t| (-t).exp());
        let (v, err) = kronrod_rule(0.0, 2.0, &vals);
        assert!((v - (1.0 - (-2f64).exp())).abs() < 1e-14);
        assert!(err < 1e-10);
    }
}
