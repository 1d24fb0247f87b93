//! Eigenvalues of symmetric tridiagonal matrices by Sturm-sequence bisection.

/// Number of eigenvalues strictly below `x` for the matrix with diagonal `d`
/// and off-diagonal `e` (`e.len() == d.len() - 1`).
#[must_use]
pub fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let tiny = f64::MIN_POSITIVE.sqrt();
    let mut count = 0;
    let mut q = d[0] - x;
    for i in 0..d.len() {
        if i > 0 {
            q = d[i] - x - e[i - 1] * e[i - 1] / q;
        }
        if q.abs() < tiny {
            q = -tiny;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Gershgorin enclosure of the spectrum.
#[must_use]
pub fn gershgorin(d: &[f64], e: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..d.len() {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + e.get(i).map_or(0.0, |v| v.abs());
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    (lo, hi)
}

/// The `k`-th smallest eigenvalue (0-based), to full double precision.
#[must_use]
pub fn kth_eigenvalue(d: &[f64], e: &[f64], k: usize) -> f64 {
    assert!(k < d.len() && e.len() + 1 == d.len());
    let (mut lo, mut hi) = gershgorin(d, e);
    let span = hi.abs().max(lo.abs()).max(1.0);
    lo -= 1e-12 * span;
    hi += 1e-12 * span;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(d, e, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn matches_dense_solver() {
        let d: Vec<f64> = (0..25).map(|i| ((i * 37) % 11) as f64 - 3.0).collect();
        let e: Vec<f64> = (0..24).map(|i| 0.3 + ((i * 17) % 7) as f64 * 0.4).collect();
        let mut m = DMatrix::zeros(25, 25);
        for i in 0..25 {
            m[(i, i)] = d[i];
            if i < 24 {
                m[(i, i + 1)] = e[i];
                m[(i + 1, i)] = e[i];
            }
        }
        let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for (k, want) in ev.iter().enumerate() {
            assert!((kth_eigenvalue(&d, &e, k) - want).abs() < 1e-10);
        }
    }

    #[test]
    fn two_by_two() {
        // [[a, -sqrt(ab)], [-sqrt(ab), b]] has eigenvalues 0 and a + b
        let (a, b): (f64, f64) = (0.7, 2.9);
        let d = [a, b];
        let e = [-(a * b).sqrt()];
        assert!(kth_eigenvalue(&d, &e, 0).abs() < 1e-14);
        assert!((kth_eigenvalue(&d, &e, 1) - (a + b)).abs() < 1e-14);
    }
}
