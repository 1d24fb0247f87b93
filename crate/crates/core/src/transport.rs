//! Exact discrete optimal transport by the transportation simplex method
//! (north-west corner start, MODI duals, cycle pivots).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_STATES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportSolution {
    /// Optimal cost `sum c_ij x_ij`.
    pub primal: f64,
    /// `sum a_i u_i + sum b_j v_j` at the optimal duals.
    pub dual: f64,
    /// `sum_x g(x) (a_x - b_x)` for the 1-Lipschitz potential
    /// `g(x) = min_j (c_xj - v_j)`; only for square costs.
    pub kr_value: Option<f64>,
    pub plan: Vec<Vec<f64>>,
    pub row_potential: Vec<f64>,
    pub col_potential: Vec<f64>,
    pub kr_potential: Option<Vec<f64>>,
    pub pivots: usize,
}

#[derive(Clone, Copy)]
struct Cell {
    r: usize,
    c: usize,
    flow: f64,
}

/// Row duals `u` and column duals `v` with `u_r + v_c = cost` on the basis
/// tree, rooted at `u_0 = 0`.
fn duals(
    basis: &[Cell],
    cost: &dyn Fn(usize, usize) -> f64,
    m: usize,
    k: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut u = vec![f64::NAN; m];
    let mut v = vec![f64::NAN; k];
    let mut row_cells: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut col_cells: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, cell) in basis.iter().enumerate() {
        row_cells[cell.r].push(i);
        col_cells[cell.c].push(i);
    }
    u[0] = 0.0;
    // node ids: rows 0..m, columns m..m+k
    let mut stack = vec![0usize];
    while let Some(node) = stack.pop() {
        if node < m {
            for &i in &row_cells[node] {
                let c = basis[i].c;
                if v[c].is_nan() {
                    v[c] = cost(node, c) - u[node];
                    stack.push(m + c);
                }
            }
        } else {
            let c = node - m;
            for &i in &col_cells[c] {
                let r = basis[i].r;
                if u[r].is_nan() {
                    u[r] = cost(r, c) - v[c];
                    stack.push(r);
                }
            }
        }
    }
    (u, v)
}

/// Basis cells on the tree path from row `r0` to column `c0`, in order.
fn tree_path(basis: &[Cell], m: usize, k: usize, r0: usize, c0: usize) -> Option<Vec<usize>> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m + k];
    for (i, cell) in basis.iter().enumerate() {
        adj[cell.r].push((m + cell.c, i));
        adj[m + cell.c].push((cell.r, i));
    }
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; m + k];
    let mut seen = vec![false; m + k];
    let mut queue = std::collections::VecDeque::from([r0]);
    seen[r0] = true;
    while let Some(node) = queue.pop_front() {
        if node == m + c0 {
            break;
        }
        for &(next, cell) in &adj[node] {
            if !seen[next] {
                seen[next] = true;
                parent[next] = Some((node, cell));
                queue.push_back(next);
            }
        }
    }
    if !seen[m + c0] {
        return None;
    }
    let mut path = Vec::new();
    let mut node = m + c0;
    while node != r0 {
        let (prev, cell) = parent[node]?;
        path.push(cell);
        node = prev;
    }
    path.reverse();
    Some(path)
}

/// Minimum-cost transport from `supply` to `demand` (equal totals).
pub fn solve_transport(
    supply: &[f64],
    demand: &[f64],
    cost: &[Vec<f64>],
) -> Result<TransportSolution> {
    if supply.len() > MAX_STATES || demand.len() > MAX_STATES {
        return Err(Error::SizeGuard {
            size: supply.len().max(demand.len()),
            limit: MAX_STATES,
        });
    }
    if cost.len() != supply.len() || cost.iter().any(|row| row.len() != demand.len()) {
        return Err(Error::Shape {
            expected: supply.len(),
            got: cost.len(),
        });
    }
    if supply
        .iter()
        .chain(demand)
        .any(|&p| !(p >= 0.0 && p.is_finite()))
    {
        return Err(Error::Domain(
            "masses must be finite and nonnegative".into(),
        ));
    }
    let (sa, sb): (f64, f64) = (supply.iter().sum(), demand.iter().sum());
    if sa <= 0.0 || (sa - sb).abs() > 1e-9 * sa.max(sb) {
        return Err(Error::Domain(format!("unbalanced transport: {sa} vs {sb}")));
    }
    let rows: Vec<usize> = (0..supply.len()).filter(|&i| supply[i] > 0.0).collect();
    let cols: Vec<usize> = (0..demand.len()).filter(|&j| demand[j] > 0.0).collect();
    let (m, k) = (rows.len(), cols.len());
    let a: Vec<f64> = rows.iter().map(|&i| supply[i]).collect();
    let b: Vec<f64> = cols.iter().map(|&j| demand[j] * sa / sb).collect();
    let c = |r: usize, q: usize| cost[rows[r]][cols[q]];
    let cmax = cost.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));

    // north-west corner
    let mut basis: Vec<Cell> = Vec::with_capacity(m + k - 1);
    let (mut ra, mut rb) = (a.clone(), b.clone());
    let (mut i, mut j) = (0, 0);
    loop {
        let q = ra[i].min(rb[j]);
        basis.push(Cell {
            r: i,
            c: j,
            flow: q,
        });
        ra[i] -= q;
        rb[j] -= q;
        if i == m - 1 && j == k - 1 {
            break;
        }
        if (ra[i] <= rb[j] && i < m - 1) || j == k - 1 {
            i += 1;
        } else {
            j += 1;
        }
    }

    let mut pivots = 0;
    let mut degenerate_run = 0;
    let limit = 200 * (m + k) * (m + k);
    loop {
        let (u, v) = duals(&basis, &c, m, k);
        let mut in_basis = vec![false; m * k];
        for cell in &basis {
            in_basis[cell.r * k + cell.c] = true;
        }
        let threshold = -1e-12 * (1.0 + cmax);
        let mut entering: Option<(usize, usize, f64)> = None;
        'search: for r in 0..m {
            for q in 0..k {
                if in_basis[r * k + q] {
                    continue;
                }
                let d = c(r, q) - u[r] - v[q];
                if d < threshold {
                    // Bland's rule after a run of degenerate pivots
                    if degenerate_run > m + k {
                        entering = Some((r, q, d));
                        break 'search;
                    }
                    if entering.is_none_or(|e| d < e.2) {
                        entering = Some((r, q, d));
                    }
                }
            }
        }
        let Some((r, q, _)) = entering else {
            return Ok(finish(
                supply, demand, cost, &rows, &cols, &basis, &u, &v, pivots,
            ));
        };
        if pivots >= limit {
            return Err(Error::Numerical(
                "transport simplex did not converge".into(),
            ));
        }
        let path = tree_path(&basis, m, k, r, q)
            .ok_or_else(|| Error::Numerical("basis is not a spanning tree".into()))?;
        // path cells alternate -, +, -, ... ending with -
        let (mut theta, mut leave) = (f64::INFINITY, usize::MAX);
        for (step, &cell) in path.iter().enumerate() {
            if step % 2 == 0 && (basis[cell].flow < theta || leave == usize::MAX) {
                theta = basis[cell].flow;
                leave = cell;
            }
        }
        for (step, &cell) in path.iter().enumerate() {
            if step % 2 == 0 {
                basis[cell].flow -= theta;
            } else {
                basis[cell].flow += theta;
            }
        }
        basis[leave] = Cell {
            r,
            c: q,
            flow: theta,
        };
        degenerate_run = if theta == 0.0 { degenerate_run + 1 } else { 0 };
        pivots += 1;
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    supply: &[f64],
    demand: &[f64],
    cost: &[Vec<f64>],
    rows: &[usize],
    cols: &[usize],
    basis: &[Cell],
    u: &[f64],
    v: &[f64],
    pivots: usize,
) -> TransportSolution {
    let (ns, nd) = (supply.len(), demand.len());
    let mut plan = vec![vec![0.0; nd]; ns];
    for cell in basis {
        plan[rows[cell.r]][cols[cell.c]] += cell.flow.max(0.0);
    }
    let primal: f64 = (0..ns)
        .flat_map(|i| (0..nd).map(move |j| (i, j)))
        .map(|(i, j)| cost[i][j] * plan[i][j])
        .sum();
    let dual: f64 = rows
        .iter()
        .zip(u)
        .map(|(&i, ui)| supply[i] * ui)
        .sum::<f64>()
        + cols
            .iter()
            .zip(v)
            .map(|(&j, vj)| demand[j] * vj)
            .sum::<f64>();
    // c-transforms extend the duals to empty rows and columns
    let col_full: Vec<f64> = (0..nd)
        .map(|j| match cols.iter().position(|&q| q == j) {
            Some(p) => v[p],
            None => rows
                .iter()
                .zip(u)
                .map(|(&i, ui)| cost[i][j] - ui)
                .fold(f64::INFINITY, f64::min),
        })
        .collect();
    let ctrans = |i: usize| {
        cols.iter()
            .zip(v)
            .map(|(&j, vj)| cost[i][j] - vj)
            .fold(f64::INFINITY, f64::min)
    };
    let row_full: Vec<f64> = (0..ns)
        .map(|i| match rows.iter().position(|&r| r == i) {
            Some(p) => u[p],
            None => ctrans(i),
        })
        .collect();
    let (kr_value, kr_potential) = if ns == nd {
        let g: Vec<f64> = (0..ns).map(ctrans).collect();
        let val = (0..ns).map(|x| g[x] * (supply[x] - demand[x])).sum();
        (Some(val), Some(g))
    } else {
        (None, None)
    };
    TransportSolution {
        primal,
        dual,
        kr_value,
        plan,
        row_potential: row_full,
        col_potential: col_full,
        kr_potential,
        pivots,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_cost(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..n).map(|j| (i as f64 - j as f64).abs()).collect())
            .collect()
    }

    #[test]
    fn point_mass_versus_uniform() {
        let s = solve_transport(&[1.0, 0.0], &[0.5, 0.5], &line_cost(2)).unwrap();
        assert!((s.primal - 0.5).abs() < 1e-15);
        assert!((s.dual - 0.5).abs() < 1e-12);
        assert!((s.kr_value.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identical_marginals_cost_nothing() {
        let p = [0.1, 0.4, 0.2, 0.3];
        let s = solve_transport(&p, &p, &line_cost(4)).unwrap();
        assert!(s.primal.abs() < 1e-15);
    }

    #[test]
    fn brute_force_small_instance() {
        // 2x3 instance; enumerate vertices by the free parameter grid
        let a = [0.6, 0.4];
        let b = [0.3, 0.3, 0.4];
        let cost = vec![vec![1.0, 3.0, 2.0], vec![4.0, 1.0, 5.0]];
        let s = solve_transport(&a, &b, &cost).unwrap();
        let mut best = f64::INFINITY;
        let steps = 600;
        for i in 0..=steps {
            for j in 0..=steps {
                let x00 = 0.3 * i as f64 / steps as f64;
                let x01 = 0.3 * j as f64 / steps as f64;
                let x02 = 0.6 - x00 - x01;
                if !(0.0..=0.4 + 1e-12).contains(&x02) {
                    continue;
                }
                let (x10, x11, x12) = (0.3 - x00, 0.3 - x01, 0.4 - x02);
                if x12 < -1e-12 {
                    continue;
                }
                let v = x00 + 3.0 * x01 + 2.0 * x02 + 4.0 * x10 + x11 + 5.0 * x12;
                best = best.min(v);
            }
        }
        assert!((s.primal - best).abs() < 1e-9, "{} vs {best}", s.primal);
        assert!((s.primal - s.dual).abs() < 1e-12);
    }

    #[test]
    fn size_guard() {
        let p = vec![1.0 / 65.0; 65];
        assert!(matches!(
            solve_transport(&p, &p, &line_cost(65)),
            Err(Error::SizeGuard { .. })
        ));
    }
}
