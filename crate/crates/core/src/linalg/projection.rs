//! Σ-metric projection onto a polyhedron.
//!
//! The metric is removed by Cholesky whitening (`μ = L y`), after which the
//! problem `min ½‖y - x̃‖²  s.t.  (A L) y <= b` is solved by a dual active-set
//! iteration in the style of Goldfarb and Idnani: start from the
//! unconstrained minimiser and repeatedly add the most violated constraint,
//! dropping constraints whose multipliers would turn negative.

use super::{cholesky_factor, forward_substitute, Matrix, PolyhedralSpec, Tolerances, Vector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    /// Minimiser `μ̂` of `(x - μ)ᵀ Σ⁻¹ (x - μ)` over the polyhedron.
    pub point: Vector,
    /// Minimum value, `>= 0`.
    pub distance_sq: f64,
    /// Constraints with `|a_jᵀ μ̂ - b_j| <= tol_active (1 + |b_j|)`.
    pub active: Vec<usize>,
    /// Lagrange multipliers, one per constraint (zero off the working set).
    pub multipliers: Vector,
}

/// Orthonormal basis of the working-set normals, kept with the triangular
/// factor so that `N = Q R`.
struct WorkingSet {
    members: Vec<usize>,
    q: Vec<Vector>,
    r: Vec<Vec<f64>>,
    lambda: Vec<f64>,
}

impl WorkingSet {
    fn new() -> Self {
        Self { members: Vec::new(), q: Vec::new(), r: Vec::new(), lambda: Vec::new() }
    }

    /// Split `a` into its component orthogonal to the working set and the
    /// coefficients `r` with `N r = a - z`.
    fn decompose(&self, a: &Vector) -> (Vector, Vec<f64>) {
        let mut z = a.clone();
        let mut coeff = Vec::with_capacity(self.q.len());
        for qi in &self.q {
            let c = qi.dot(&z);
            z.axpy(-c, qi, 1.0);
            coeff.push(c);
        }
        // Second Gram-Schmidt pass for stability.
        for (qi, c) in self.q.iter().zip(coeff.iter_mut()) {
            let extra = qi.dot(&z);
            z.axpy(-extra, qi, 1.0);
            *c += extra;
        }
        // Back substitution R r = coeff.
        let k = self.q.len();
        let mut r = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = coeff[i];
            for j in (i + 1)..k {
                s -= self.r[i][j] * r[j];
            }
            r[i] = s / self.r[i][i];
        }
        (z, r)
    }

    fn rebuild(&mut self, normals: &Matrix) {
        let members = std::mem::take(&mut self.members);
        let lambda = std::mem::take(&mut self.lambda);
        self.q.clear();
        self.r.clear();
        for (j, l) in members.into_iter().zip(lambda) {
            let a = normals.row(j).transpose();
            self.push(j, &a, l);
        }
    }

    fn push(&mut self, j: usize, a: &Vector, lambda: f64) {
        let k = self.q.len();
        let mut z = a.clone();
        let mut col = vec![0.0; k + 1];
        for (i, qi) in self.q.iter().enumerate() {
            let c = qi.dot(&z);
            z.axpy(-c, qi, 1.0);
            col[i] = c;
        }
        for (i, qi) in self.q.iter().enumerate() {
            let c = qi.dot(&z);
            z.axpy(-c, qi, 1.0);
            col[i] += c;
        }
        let norm = z.norm();
        col[k] = norm;
        for (i, row) in self.r.iter_mut().enumerate() {
            row.push(col[i]);
        }
        let mut last = vec![0.0; k + 1];
        last[k] = norm;
        self.r.push(last);
        self.q.push(z / norm);
        self.members.push(j);
        self.lambda.push(lambda);
    }

    fn remove(&mut self, pos: usize, normals: &Matrix) {
        self.members.remove(pos);
        self.lambda.remove(pos);
        self.rebuild(normals);
    }
}

/// Project `x` onto `{μ : A μ <= b}` in the metric `Σ⁻¹`.
pub fn project_polyhedron(x: &Vector, sigma: &Matrix, spec: &PolyhedralSpec, tol: &Tolerances) -> Result<ProjectionResult> {
    let d = spec.dim();
    if x.len() != d || sigma.nrows() != d || sigma.ncols() != d {
        return Err(Error::Dimension(format!(
            "point has {} entries, Σ is {}x{}, constraints act on {d} coordinates",
            x.len(),
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    super::ensure_finite("point", x.as_slice())?;
    let l = cholesky_factor(sigma, tol.tol_rank)?;
    let (y, lambda) = project_whitened(&forward_substitute(&l, x), &(&spec.a * &l), &spec.b)?;
    let point = &l * &y;
    let xt = forward_substitute(&l, x);
    let distance_sq = (&xt - &y).norm_squared();
    let active = active_set(spec, &point, tol.tol_active);
    Ok(ProjectionResult { point, distance_sq, active, multipliers: lambda })
}

/// Largest violation of the optimality conditions of a projection:
/// stationarity `Σ⁻¹(x - μ̂) = Aᵀλ`, primal and dual feasibility, and
/// complementary slackness.
pub fn kkt_residual(x: &Vector, sigma: &Matrix, spec: &PolyhedralSpec, result: &ProjectionResult, tol: &Tolerances) -> Result<f64> {
    let l = cholesky_factor(sigma, tol.tol_rank)?;
    let grad = super::backward_substitute_transpose(&l, &forward_substitute(&l, &(x - &result.point)));
    let stationarity = (grad - spec.a.transpose() * &result.multipliers).amax();
    let slack = &spec.a * &result.point - &spec.b;
    let mut worst = stationarity;
    for j in 0..spec.n_constraints() {
        let lam = result.multipliers[j];
        worst = worst.max(slack[j]).max(-lam).max((lam * slack[j]).abs());
    }
    Ok(worst)
}

/// Indices `j` with `|a_jᵀ μ - b_j| <= tol_active (1 + |b_j|)`.
pub fn active_set(spec: &PolyhedralSpec, point: &Vector, tol_active: f64) -> Vec<usize> {
    let ax = &spec.a * point;
    (0..spec.n_constraints())
        .filter(|&j| (ax[j] - spec.b[j]).abs() <= tol_active * (1.0 + spec.b[j].abs()))
        .collect()
}

/// Euclidean projection of `target` onto `{y : normals y <= rhs}`. Returns
/// the projection and the multipliers.
pub(crate) fn project_whitened(target: &Vector, normals: &Matrix, rhs: &Vector) -> Result<(Vector, Vector)> {
    let m = normals.nrows();
    let row_norms: Vec<f64> = (0..m).map(|j| normals.row(j).norm()).collect();
    let mut y = target.clone();
    let mut ws = WorkingSet::new();
    let max_iter = 50 * (m + target.len()) + 100;
    let mut iterations = 0;

    loop {
        // Most violated constraint, measured in Euclidean distance.
        let mut worst: Option<(usize, f64)> = None;
        for j in 0..m {
            if ws.members.contains(&j) {
                continue;
            }
            let s = normals.row(j).dot(&y.transpose()) - rhs[j];
            let scale = 1.0 + rhs[j].abs() + row_norms[j] * y.amax();
            if row_norms[j] == 0.0 {
                if s > 1e-12 * scale {
                    return Err(Error::Infeasible(format!("constraint {j} reads 0 <= {}", rhs[j])));
                }
                continue;
            }
            if s > 1e-12 * scale {
                let v = s / row_norms[j];
                if worst.is_none_or(|(_, w)| v > w) {
                    worst = Some((j, v));
                }
            }
        }
        let Some((p, _)) = worst else { break };
        let ap = normals.row(p).transpose();
        let mut lambda_p = 0.0;

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(Error::Convergence(format!("projection exceeded {max_iter} active-set steps")));
            }
            let (z, r) = ws.decompose(&ap);
            let znorm_sq = z.norm_squared();
            let dependent = znorm_sq <= 1e-20 * ap.norm_squared();

            // Partial step: largest move keeping working multipliers >= 0.
            let mut t2 = f64::INFINITY;
            let mut drop = None;
            for (i, &ri) in r.iter().enumerate() {
                if ri > 1e-14 {
                    let ratio = ws.lambda[i] / ri;
                    if ratio < t2 {
                        t2 = ratio;
                        drop = Some(i);
                    }
                }
            }
            let violation = ap.dot(&y) - rhs[p];
            if dependent {
                let Some(k) = drop else {
                    return Err(Error::Infeasible(format!(
                        "constraint {p} cannot be satisfied together with the working set"
                    )));
                };
                for (l, ri) in ws.lambda.iter_mut().zip(&r) {
                    *l -= t2 * ri;
                }
                lambda_p += t2;
                ws.remove(k, normals);
                continue;
            }
            let t1 = (violation / znorm_sq).max(0.0);
            if t1 <= t2 {
                y.axpy(-t1, &z, 1.0);
                for (l, ri) in ws.lambda.iter_mut().zip(&r) {
                    *l -= t1 * ri;
                }
                lambda_p += t1;
                ws.push(p, &ap, lambda_p);
                break;
            }
            y.axpy(-t2, &z, 1.0);
            for (l, ri) in ws.lambda.iter_mut().zip(&r) {
                *l -= t2 * ri;
            }
            lambda_p += t2;
            let k = drop.expect("finite partial step has a blocking constraint");
            ws.remove(k, normals);
        }
    }

    let mut lambda = Vector::zeros(m);
    for (&j, &l) in ws.members.iter().zip(&ws.lambda) {
        lambda[j] = l.max(0.0);
    }
    Ok((y, lambda))
}
