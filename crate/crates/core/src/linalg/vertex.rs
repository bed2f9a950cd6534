//! Vertices of `{h ∈ Rᵏ : h >= 0, Cᵀh = 0, 1ᵀh = 1}`.
//!
//! Coordinates that are forced to zero on the whole polytope are removed
//! first (one LP each). The remaining equality system is reduced to
//! independent rows by Gauss-Jordan elimination, and every basis of that
//! system is tried: a vertex is a basic feasible solution.

use super::{lp::solve_lp, matrix_rank, reduced_row_echelon, LpStatus, Matrix, Settings, Vector};
use crate::error::{Error, Result};

/// Number of `choose` subsets of `n` items.
pub fn candidate_bases(n: usize, choose: usize) -> u128 {
    if choose > n {
        return 0;
    }
    let choose = choose.min(n - choose);
    let mut acc: u128 = 1;
    for i in 0..choose {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Rows of the returned matrix are the vertices, deduplicated under the
/// max-norm. An empty (0 x k) matrix means the polytope is empty.
pub fn enumerate_vertices(c: &Matrix, settings: &Settings) -> Result<Matrix> {
    let tol = &settings.tolerances;
    let k = c.nrows();
    let p = c.ncols();
    if k == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    super::ensure_finite("C", c.as_slice())?;

    // Equalities [Cᵀ; 1ᵀ] h = (0, 1), Cᵀ rows scaled to unit max-norm.
    let mut eq = Matrix::zeros(p + 1, k);
    for j in 0..p {
        let col = c.column(j);
        let scale = col.amax();
        if scale > 0.0 {
            for i in 0..k {
                eq[(j, i)] = col[i] / scale;
            }
        }
    }
    for i in 0..k {
        eq[(p, i)] = 1.0;
    }
    let mut rhs = Vector::zeros(p + 1);
    rhs[p] = 1.0;

    // Implicit equalities: h_j = 0 on the whole polytope.
    let bounds = vec![(0.0, 1.0); k];
    let mut known_positive = vec![false; k];
    let mut zero = vec![false; k];
    for j in 0..k {
        if known_positive[j] {
            continue;
        }
        let mut obj = Vector::zeros(k);
        obj[j] = -1.0;
        let res = solve_lp(&obj, &eq, &rhs, &bounds, tol).map_err(|e| Error::Lp { index: j, message: e.to_string() })?;
        match res.status {
            LpStatus::Infeasible => return Ok(Matrix::zeros(0, k)),
            LpStatus::Unbounded => {
                return Err(Error::Invariant("bounded vertex LP reported unbounded".into()));
            }
            LpStatus::Optimal => {}
        }
        if res.value >= -tol.tol_feas {
            zero[j] = true;
        } else {
            for i in 0..k {
                if res.x[i] > tol.tol_feas {
                    known_positive[i] = true;
                }
            }
        }
    }
    let free: Vec<usize> = (0..k).filter(|&j| !zero[j]).collect();

    // Independent rows of the augmented system restricted to the free coordinates.
    let mut aug = Matrix::zeros(p + 1, free.len() + 1);
    for r in 0..=p {
        for (ci, &j) in free.iter().enumerate() {
            aug[(r, ci)] = eq[(r, j)];
        }
        aug[(r, free.len())] = rhs[r];
    }
    let reduced = reduced_row_echelon(&aug, tol.tol_rank);
    if reduced.pivots.contains(&free.len()) {
        return Ok(Matrix::zeros(0, k));
    }
    let system = reduced.reduced.columns(0, free.len()).into_owned();
    let target = reduced.reduced.column(free.len()).into_owned();
    let rank = system.nrows();

    let candidates = candidate_bases(free.len(), rank);
    if candidates > settings.vertex_budget {
        return Err(Error::BudgetExceeded { candidates, budget: settings.vertex_budget });
    }

    let mut vertices: Vec<Vector> = Vec::new();
    let mut subset: Vec<usize> = (0..rank).collect();
    loop {
        let square = system.select_columns(&subset);
        if matrix_rank(&square, tol.tol_rank) == rank {
            if let Some(sol) = square.clone().lu().solve(&target) {
                let residual = (&square * &sol - &target).amax();
                if residual <= tol.tol_feas && sol.iter().all(|&v| v >= -tol.tol_feas) {
                    let mut h = Vector::zeros(k);
                    for (pos, &ci) in subset.iter().enumerate() {
                        h[free[ci]] = sol[pos].max(0.0);
                    }
                    let duplicate = vertices.iter().any(|v| (v - &h).amax() <= tol.tol_vertex_dedupe);
                    if !duplicate {
                        vertices.push(h);
                    }
                }
            }
        }
        if !next_subset(&mut subset, free.len()) {
            break;
        }
    }

    let mut out = Matrix::zeros(vertices.len(), k);
    for (i, v) in vertices.iter().enumerate() {
        out.set_row(i, &v.transpose());
    }
    Ok(out)
}

/// Advance `subset` to the next combination in lexicographic order.
fn next_subset(subset: &mut [usize], n: usize) -> bool {
    let r = subset.len();
    if r == 0 {
        return false;
    }
    let mut i = r;
    while i > 0 {
        i -= 1;
        if subset[i] < n - r + i {
            subset[i] += 1;
            for j in (i + 1)..r {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
