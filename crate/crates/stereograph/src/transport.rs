//! Exact 1-Wasserstein cost between small discrete distributions via the
//! transportation simplex (northwest-corner start, MODI pivoting).
//!
//! Problem sizes here are tiny — supports are an edge's endpoints plus their
//! one-hop neighborhoods — so an exact basis-tree method beats any
//! approximation and lets tests pin values to 1e-8.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TransportError {
    #[error("supply and demand totals differ by {0}")]
    Unbalanced(f64),
    #[error("empty marginal")]
    EmptyMarginal,
    #[error("cost matrix shape mismatch")]
    ShapeMismatch,
    #[error("pivoting failed to converge")]
    NoConvergence,
}

const EPS: f64 = 1e-12;

/// Minimum transport cost between `supply` and `demand` under `cost`
/// (row-major, `supply.len() x demand.len()`). Marginals must balance.
pub fn min_cost(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<f64, TransportError> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 {
        return Err(TransportError::EmptyMarginal);
    }
    if cost.len() != m * n {
        return Err(TransportError::ShapeMismatch);
    }
    let (sa, sb): (f64, f64) = (supply.iter().sum(), demand.iter().sum());
    if (sa - sb).abs() > 1e-9 {
        return Err(TransportError::Unbalanced(sa - sb));
    }

    // Northwest-corner initial basis: exactly m + n - 1 cells, degenerate
    // zero-flow cells included.
    let mut basis: Vec<(usize, usize)> = Vec::with_capacity(m + n - 1);
    let mut flow: Vec<f64> = Vec::with_capacity(m + n - 1);
    {
        let mut ra = supply.to_vec();
        let mut rb = demand.to_vec();
        let (mut i, mut j) = (0usize, 0usize);
        loop {
            let t = ra[i].min(rb[j]).max(0.0);
            basis.push((i, j));
            flow.push(t);
            ra[i] -= t;
            rb[j] -= t;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if ra[i] <= EPS && i < m - 1 {
                i += 1;
            } else {
                j += 1;
            }
        }
    }
    debug_assert_eq!(basis.len(), m + n - 1);

    let c = |i: usize, j: usize| cost[i * n + j];
    let max_iters = 1000 * (m + n).max(8);
    for _ in 0..max_iters {
        // Duals over the basis spanning tree: u_i + v_j = c_ij.
        let mut u = vec![f64::NAN; m];
        let mut v = vec![f64::NAN; n];
        u[0] = 0.0;
        let mut settled = 1usize;
        while settled < m + n {
            let mut progressed = false;
            for &(i, j) in &basis {
                match (u[i].is_nan(), v[j].is_nan()) {
                    (false, true) => {
                        v[j] = c(i, j) - u[i];
                        settled += 1;
                        progressed = true;
                    }
                    (true, false) => {
                        u[i] = c(i, j) - v[j];
                        settled += 1;
                        progressed = true;
                    }
                    _ => {}
                }
            }
            if !progressed {
                return Err(TransportError::NoConvergence);
            }
        }

        // Entering cell: first non-basic cell with negative reduced cost.
        let in_basis = |i: usize, j: usize| basis.iter().any(|&(a, b)| (a, b) == (i, j));
        let mut entering = None;
        'scan: for i in 0..m {
            for j in 0..n {
                if c(i, j) - u[i] - v[j] < -EPS && !in_basis(i, j) {
                    entering = Some((i, j));
                    break 'scan;
                }
            }
        }
        let Some((ei, ej)) = entering else {
            let total = basis
                .iter()
                .zip(&flow)
                .map(|(&(i, j), f)| f * c(i, j))
                .sum();
            return Ok(total);
        };

        // Unique alternating cycle: path from row ei to col ej through the
        // basis tree, found by DFS over tree edges.
        let path = tree_path(&basis, m, ei, ej).ok_or(TransportError::NoConvergence)?;
        // Cycle cells in order: entering (+), then path cells walked from the
        // ej end back to ei with alternating signs (-, +, -, ...).
        let mut theta = f64::INFINITY;
        let mut leave_pos = usize::MAX;
        for (step, &cell) in path.iter().enumerate() {
            if step % 2 == 0 {
                // minus position
                let pos = basis.iter().position(|&b| b == cell).unwrap();
                if flow[pos] < theta - EPS {
                    theta = flow[pos];
                    leave_pos = pos;
                }
            }
        }
        for (step, &cell) in path.iter().enumerate() {
            let pos = basis.iter().position(|&b| b == cell).unwrap();
            if step % 2 == 0 {
                flow[pos] -= theta;
            } else {
                flow[pos] += theta;
            }
        }
        basis[leave_pos] = (ei, ej);
        flow[leave_pos] = theta;
    }
    Err(TransportError::NoConvergence)
}

/// Path of basis cells from row `ri` to column `cj` through the basis tree,
/// ordered starting with the cell incident to `cj`. Rows are vertices
/// `0..m`, columns `m..m+n`.
fn tree_path(basis: &[(usize, usize)], m: usize, ri: usize, cj: usize) -> Option<Vec<(usize, usize)>> {
    let verts = m + basis.len() + 1; // upper bound on vertex count
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); verts.max(m + 1)];
    let mut vmax = 0usize;
    for (pos, &(i, j)) in basis.iter().enumerate() {
        let (a, b) = (i, m + j);
        vmax = vmax.max(a).max(b);
        if adj.len() <= vmax {
            adj.resize(vmax + 1, Vec::new());
        }
        adj[a].push((b, pos));
        adj[b].push((a, pos));
    }
    let target = m + cj;
    if ri >= adj.len() || target >= adj.len() {
        return None;
    }
    // Iterative DFS recording the parent edge.
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; adj.len()];
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![ri];
    seen[ri] = true;
    while let Some(v) = stack.pop() {
        if v == target {
            break;
        }
        for &(w, pos) in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                parent[w] = Some((v, pos));
                stack.push(w);
            }
        }
    }
    if !seen[target] {
        return None;
    }
    let mut path = Vec::new();
    let mut v = target;
    while v != ri {
        let (p, pos) = parent[v]?;
        path.push(basis[pos]);
        v = p;
    }
    Some(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_marginals_cost_zero() {
        let a = [0.5, 0.25, 0.25];
        let cost = [0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        let w = min_cost(&a, &a, &cost).unwrap();
        assert!(w.abs() < 1e-12);
    }

    #[test]
    fn point_masses_pay_the_distance() {
        let w = min_cost(&[1.0], &[1.0], &[3.0]).unwrap();
        assert!((w - 3.0).abs() < 1e-12);
    }

    #[test]
    fn triangle_neighborhoods() {
        // K3 edge (x, y), alpha = 0.5: supports {x, y, z} on both sides with
        // masses (0.5, 0.25, 0.25) and (0.25, 0.5, 0.25); all distances 1.
        let mu = [0.5, 0.25, 0.25];
        let nu = [0.25, 0.5, 0.25];
        let cost = [0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        let w = min_cost(&mu, &nu, &cost).unwrap();
        assert!((w - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rejects_unbalanced() {
        assert!(matches!(
            min_cost(&[1.0], &[0.5], &[1.0]),
            Err(TransportError::Unbalanced(_))
        ));
    }

    #[test]
    fn asymmetric_costs_pick_cheap_route() {
        // Two sources, two sinks; optimal is the anti-diagonal.
        let w = min_cost(&[0.5, 0.5], &[0.5, 0.5], &[2.0, 1.0, 1.0, 2.0]).unwrap();
        assert!((w - 1.0).abs() < 1e-12);
    }
}
