//! Bounded-variable primal simplex with Bland's pivot rule.
//!
//! Solves `min cᵀx  s.t.  E x = f,  lo <= x <= hi` where bounds may be
//! infinite. Variables are shifted, flipped or split so that every working
//! column lives in `[0, u]`, then a two-phase dense tableau method runs with
//! artificial variables on every row.

use serde::Serialize;

use super::{Matrix, Tolerances, Vector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpResult {
    pub status: LpStatus,
    /// Objective value at `x`; NaN unless optimal.
    pub value: f64,
    pub x: Vector,
    /// Original variables that are basic in the final tableau, ascending.
    pub basis: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
enum Column {
    /// x = lo + y
    Shift { var: usize, lo: f64 },
    /// x = hi - y
    Flip { var: usize, hi: f64 },
    /// positive part of a free variable
    Plus { var: usize },
    /// negative part of a free variable
    Minus { var: usize },
}

impl Column {
    fn var(self) -> usize {
        match self {
            Column::Shift { var, .. } | Column::Flip { var, .. } | Column::Plus { var } | Column::Minus { var } => var,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Column::Shift { .. } | Column::Plus { .. } => 1.0,
            Column::Flip { .. } | Column::Minus { .. } => -1.0,
        }
    }
}

const PIVOT_TOL: f64 = 1e-10;

struct Tableau {
    rows: usize,
    width: usize,
    t: Vec<f64>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    at_upper: Vec<bool>,
    upper: Vec<f64>,
    beta: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
}

enum Phase {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    fn value_of(&self, j: usize) -> f64 {
        if self.is_basic[j] {
            let r = self.basis.iter().position(|&b| b == j).expect("basic column has a row");
            self.beta[r]
        } else if self.at_upper[j] {
            self.upper[j]
        } else {
            0.0
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.width;
        let p = self.t[r * w + q];
        for c in 0..w {
            self.t[r * w + c] /= p;
        }
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.t[i * w + q];
            if f != 0.0 {
                for c in 0..w {
                    self.t[i * w + c] -= f * self.t[r * w + c];
                }
                self.t[i * w + q] = 0.0;
            }
        }
    }

    fn run(&mut self, cost: &[f64]) -> Result<Phase> {
        let cscale = cost.iter().fold(1.0_f64, |a, c| a.max(c.abs()));
        let dtol = 1e-11 * cscale;
        loop {
            self.iterations += 1;
            if self.iterations > self.max_iterations {
                return Err(Error::Convergence(format!(
                    "simplex exceeded {} iterations",
                    self.max_iterations
                )));
            }
            // Bland: the lowest-index improving column enters.
            let mut entering = None;
            for j in 0..self.width {
                if self.is_basic[j] || self.upper[j] <= 0.0 {
                    continue;
                }
                let mut d = cost[j];
                for i in 0..self.rows {
                    d -= cost[self.basis[i]] * self.at(i, j);
                }
                if (!self.at_upper[j] && d < -dtol) || (self.at_upper[j] && d > dtol) {
                    entering = Some(j);
                    break;
                }
            }
            let Some(q) = entering else { return Ok(Phase::Optimal) };
            let dir = if self.at_upper[q] { -1.0 } else { 1.0 };

            let mut step = self.upper[q];
            let mut leaving: Option<(usize, bool)> = None;
            for i in 0..self.rows {
                let alpha = dir * self.at(i, q);
                let bv = self.basis[i];
                let (limit, to_upper) = if alpha > PIVOT_TOL {
                    ((self.beta[i] / alpha).max(0.0), false)
                } else if alpha < -PIVOT_TOL && self.upper[bv].is_finite() {
                    (((self.upper[bv] - self.beta[i]) / -alpha).max(0.0), true)
                } else {
                    continue;
                };
                let better = match leaving {
                    _ if limit < step => true,
                    Some((r, _)) if limit == step => bv < self.basis[r],
                    _ => false,
                };
                if better {
                    step = limit;
                    leaving = Some((i, to_upper));
                }
            }
            if !step.is_finite() {
                return Ok(Phase::Unbounded);
            }
            for i in 0..self.rows {
                let a = self.at(i, q);
                self.beta[i] -= dir * step * a;
            }
            match leaving {
                None => self.at_upper[q] = !self.at_upper[q],
                Some((r, to_upper)) => {
                    let entering_value = if dir > 0.0 { step } else { self.upper[q] - step };
                    let out = self.basis[r];
                    self.pivot(r, q);
                    self.is_basic[out] = false;
                    self.at_upper[out] = to_upper;
                    self.is_basic[q] = true;
                    self.at_upper[q] = false;
                    self.basis[r] = q;
                    self.beta[r] = entering_value;
                }
            }
        }
    }
}

/// Minimise `objective · x` subject to `eq_matrix x = eq_rhs` and the
/// per-variable `bounds` (which may be infinite).
pub fn solve_lp(
    objective: &Vector,
    eq_matrix: &Matrix,
    eq_rhs: &Vector,
    bounds: &[(f64, f64)],
    tol: &Tolerances,
) -> Result<LpResult> {
    let n = objective.len();
    if eq_matrix.ncols() != n || bounds.len() != n {
        return Err(Error::Dimension(format!(
            "objective has {n} entries, equality matrix has {} columns, {} bounds given",
            eq_matrix.ncols(),
            bounds.len()
        )));
    }
    if eq_matrix.nrows() != eq_rhs.len() {
        return Err(Error::Dimension(format!(
            "equality matrix has {} rows but right-hand side has {} entries",
            eq_matrix.nrows(),
            eq_rhs.len()
        )));
    }
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
            return Err(Error::Argument(format!("invalid bounds [{lo}, {hi}] for variable {j}")));
        }
    }
    super::ensure_finite("objective", objective.as_slice())?;
    super::ensure_finite("equality matrix", eq_matrix.as_slice())?;
    super::ensure_finite("equality right-hand side", eq_rhs.as_slice())?;

    let mut columns = Vec::with_capacity(n);
    let mut col_upper = Vec::with_capacity(n);
    for (var, &(lo, hi)) in bounds.iter().enumerate() {
        if lo.is_finite() {
            columns.push(Column::Shift { var, lo });
            col_upper.push(hi - lo);
        } else if hi.is_finite() {
            columns.push(Column::Flip { var, hi });
            col_upper.push(f64::INFINITY);
        } else {
            columns.push(Column::Plus { var });
            col_upper.push(f64::INFINITY);
            columns.push(Column::Minus { var });
            col_upper.push(f64::INFINITY);
        }
    }

    // Shifted right-hand side, then row equilibration.
    let mut rhs: Vec<f64> = eq_rhs.iter().copied().collect();
    for col in &columns {
        let offset = match *col {
            Column::Shift { lo, .. } => lo,
            Column::Flip { hi, .. } => hi,
            _ => continue,
        };
        if offset != 0.0 {
            for (i, r) in rhs.iter_mut().enumerate() {
                *r -= eq_matrix[(i, col.var())] * offset;
            }
        }
    }
    let ncols = columns.len();
    let mut rows_kept: Vec<(Vec<f64>, f64)> = Vec::new();
    let rhs_scale = rhs.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    for (i, &r) in rhs.iter().enumerate() {
        let coeffs: Vec<f64> = columns.iter().map(|c| c.sign() * eq_matrix[(i, c.var())]).collect();
        let scale = coeffs.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if scale == 0.0 {
            if r.abs() > tol.tol_feas * rhs_scale {
                return Ok(infeasible(n));
            }
            continue;
        }
        let (coeffs, r) = if r < 0.0 {
            (coeffs.iter().map(|v| -v / scale).collect(), -r / scale)
        } else {
            (coeffs.iter().map(|v| v / scale).collect(), r / scale)
        };
        rows_kept.push((coeffs, r));
    }

    let m = rows_kept.len();
    let width = ncols + m;
    let mut t = vec![0.0; m * width];
    let mut beta = vec![0.0; m];
    for (i, (coeffs, r)) in rows_kept.iter().enumerate() {
        t[i * width..i * width + ncols].copy_from_slice(coeffs);
        t[i * width + ncols + i] = 1.0;
        beta[i] = *r;
    }
    let mut upper = col_upper.clone();
    upper.extend(std::iter::repeat_n(f64::INFINITY, m));
    let mut is_basic = vec![false; width];
    for i in 0..m {
        is_basic[ncols + i] = true;
    }
    let mut tab = Tableau {
        rows: m,
        width,
        t,
        basis: (ncols..width).collect(),
        is_basic,
        at_upper: vec![false; width],
        upper,
        beta,
        iterations: 0,
        max_iterations: 10_000 + 50 * (m + width),
    };

    if m > 0 {
        let mut phase1 = vec![0.0; width];
        for c in phase1.iter_mut().skip(ncols) {
            *c = 1.0;
        }
        tab.run(&phase1)?;
        let infeas: f64 = (ncols..width).map(|j| tab.value_of(j)).sum();
        let scale = rows_kept.iter().fold(1.0_f64, |a, (_, r)| a.max(r.abs()));
        if infeas > tol.tol_feas * scale {
            return Ok(infeasible(n));
        }
        for j in ncols..width {
            tab.upper[j] = 0.0;
            tab.at_upper[j] = false;
        }
        for i in 0..m {
            if tab.basis[i] >= ncols {
                tab.beta[i] = 0.0;
            }
        }
    }

    let mut phase2 = vec![0.0; width];
    for (j, col) in columns.iter().enumerate() {
        phase2[j] = col.sign() * objective[col.var()];
    }
    if let Phase::Unbounded = tab.run(&phase2)? {
        return Ok(LpResult {
            status: LpStatus::Unbounded,
            value: f64::NEG_INFINITY,
            x: Vector::from_element(n, f64::NAN),
            basis: Vec::new(),
        });
    }

    let mut y = vec![0.0; ncols];
    for (j, yj) in y.iter_mut().enumerate() {
        let v = tab.value_of(j);
        *yj = if tab.upper[j].is_finite() { v.clamp(0.0, tab.upper[j]) } else { v.max(0.0) };
    }

    // Residual check against the working system guards against pivot drift.
    let mut worst = 0.0_f64;
    for (coeffs, r) in &rows_kept {
        let lhs: f64 = coeffs.iter().zip(&y).map(|(a, b)| a * b).sum();
        worst = worst.max((lhs - r).abs());
    }
    let yscale = y.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    if worst > 1e-7 * yscale {
        return Err(Error::DegeneratePivot(format!(
            "final basis violates the equality system by {worst:e} after {} iterations",
            tab.iterations
        )));
    }

    let mut x = Vector::zeros(n);
    for (j, col) in columns.iter().enumerate() {
        match *col {
            Column::Shift { var, lo } => x[var] = lo + y[j],
            Column::Flip { var, hi } => x[var] = hi - y[j],
            Column::Plus { var } => x[var] += y[j],
            Column::Minus { var } => x[var] -= y[j],
        }
    }
    let mut basis: Vec<usize> = tab.basis.iter().filter(|&&b| b < ncols).map(|&b| columns[b].var()).collect();
    basis.sort_unstable();
    basis.dedup();
    Ok(LpResult { status: LpStatus::Optimal, value: objective.dot(&x), x, basis })
}

fn infeasible(n: usize) -> LpResult {
    LpResult {
        status: LpStatus::Infeasible,
        value: f64::NAN,
        x: Vector::from_element(n, f64::NAN),
        basis: Vec::new(),
    }
}
