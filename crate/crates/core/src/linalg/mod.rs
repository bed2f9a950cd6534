//! Dense linear algebra and polyhedral primitives.
//!
//! Matrices are `nalgebra` dense matrices of `f64`. The polyhedral routines
//! (LP, Σ-metric projection, vertex enumeration) are written for the small,
//! well-conditioned systems that moment inequality tests produce.

mod lp;
mod projection;
mod vertex;

pub use lp::{solve_lp, LpResult, LpStatus};
pub use projection::{active_set, kkt_residual, project_polyhedron, ProjectionResult};
pub(crate) use projection::project_whitened;
pub use vertex::{candidate_bases, enumerate_vertices};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Numerical tolerances. The defaults assume double precision and matrices
/// of modest condition number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub tol_feas: f64,
    pub tol_active: f64,
    pub tol_rank: f64,
    pub tol_kkt: f64,
    pub tol_vertex_dedupe: f64,
    pub tol_zero_statistic: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tol_feas: 1e-9,
            tol_active: 1e-7,
            tol_rank: 1e-9,
            tol_kkt: 1e-7,
            tol_vertex_dedupe: 1e-8,
            tol_zero_statistic: 1e-10,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("tol_feas", self.tol_feas),
            ("tol_active", self.tol_active),
            ("tol_rank", self.tol_rank),
            ("tol_kkt", self.tol_kkt),
            ("tol_vertex_dedupe", self.tol_vertex_dedupe),
            ("tol_zero_statistic", self.tol_zero_statistic),
        ];
        for (name, v) in all {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Argument(format!("{name} must be a nonnegative finite number, got {v}")));
            }
        }
        Ok(())
    }
}

/// Solver settings shared by every test: tolerances plus the few knobs that
/// are not tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub tolerances: Tolerances,
    /// Relative ridge added to every covariance estimate:
    /// `Σ + ridge * mean(diag Σ) * I`. Zero disables the ridge.
    pub ridge: f64,
    /// Scale of the proximal term on the nuisance parameter in the joint
    /// subvector QP, relative to `trace(Σ⁻¹)`.
    pub delta_ridge: f64,
    /// Maximum number of candidate bases examined by vertex enumeration.
    pub vertex_budget: u128,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            ridge: 0.0,
            delta_ridge: 1e-10,
            vertex_budget: 1_000_000,
        }
    }
}

impl Settings {
    pub fn validate(&self) -> Result<()> {
        self.tolerances.validate()?;
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(Error::Argument(format!("ridge must be nonnegative, got {}", self.ridge)));
        }
        if !(self.delta_ridge.is_finite() && self.delta_ridge > 0.0) {
            return Err(Error::Argument(format!("delta_ridge must be positive, got {}", self.delta_ridge)));
        }
        Ok(())
    }
}

/// The polyhedron `{μ : A μ <= b}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyhedralSpec {
    pub a: Matrix,
    pub b: Vector,
}

impl PolyhedralSpec {
    pub fn new(a: Matrix, b: Vector) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::Dimension(format!(
                "A has {} rows but b has {} entries",
                a.nrows(),
                b.len()
            )));
        }
        ensure_finite("A", a.as_slice())?;
        ensure_finite("b", b.as_slice())?;
        Ok(Self { a, b })
    }

    pub fn n_constraints(&self) -> usize {
        self.a.nrows()
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    /// Rows of `A` and entries of `b` restricted to `rows`.
    pub fn restrict(&self, rows: &[usize]) -> Self {
        Self { a: self.a.select_rows(rows), b: self.b.select_rows(rows) }
    }
}

pub(crate) fn ensure_finite(name: &str, values: &[f64]) -> Result<()> {
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Argument(format!("{name} has a non-finite entry at position {pos}")));
    }
    Ok(())
}

/// Build a matrix from row-major data.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("row {bad} has {} entries, expected {ncols}", rows[bad].len())));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Maximum absolute row sum.
pub fn norm_inf(m: &Matrix) -> f64 {
    (0..m.nrows()).map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn is_symmetric(m: &Matrix, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    for i in 0..m.nrows() {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

/// Lower-triangular `L` with `L Lᵀ = Σ`.
///
/// A pivot passes when it exceeds `tol_rank * trace(Σ) / d`; the error
/// carries the zero-based index of the first pivot that does not.
pub fn cholesky_factor(sigma: &Matrix, tol_rank: f64) -> Result<Matrix> {
    if !sigma.is_square() {
        return Err(Error::Dimension(format!("covariance is {}x{}", sigma.nrows(), sigma.ncols())));
    }
    let d = sigma.nrows();
    let threshold = tol_rank * sigma.trace().max(0.0) / d.max(1) as f64;
    let mut l = Matrix::zeros(d, d);
    for j in 0..d {
        let mut pivot = sigma[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > threshold) || pivot <= 0.0 {
            return Err(Error::NotPositiveDefinite { pivot: j, value: pivot });
        }
        let diag = pivot.sqrt();
        l[(j, j)] = diag;
        for i in (j + 1)..d {
            let mut s = sigma[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / diag;
        }
    }
    Ok(l)
}

/// Solve `L x = rhs` for lower-triangular `L`.
pub fn forward_substitute(l: &Matrix, rhs: &Vector) -> Vector {
    let d = l.nrows();
    let mut x = rhs.clone();
    for i in 0..d {
        let mut s = x[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solve `Lᵀ x = rhs` for lower-triangular `L`.
pub fn backward_substitute_transpose(l: &Matrix, rhs: &Vector) -> Vector {
    let d = l.nrows();
    let mut x = rhs.clone();
    for i in (0..d).rev() {
        let mut s = x[i];
        for k in (i + 1)..d {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Inverse of a symmetric positive definite matrix through its Cholesky factor.
pub fn spd_inverse(sigma: &Matrix, tol_rank: f64) -> Result<Matrix> {
    let l = cholesky_factor(sigma, tol_rank)?;
    let d = sigma.nrows();
    let mut inv = Matrix::zeros(d, d);
    for j in 0..d {
        let mut e = Vector::zeros(d);
        e[j] = 1.0;
        let col = backward_substitute_transpose(&l, &forward_substitute(&l, &e));
        inv.set_column(j, &col);
    }
    Ok(inv)
}

/// Result of Gauss-Jordan reduction of a homogeneous system `E h = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowEchelon {
    /// Pivot (non-core) columns, in increasing order.
    pub pivots: Vec<usize>,
    /// Free (core) columns, in increasing order.
    pub free: Vec<usize>,
    /// `h[pivots] = g1 * h[free]` describes the solution space.
    pub g1: Matrix,
    /// Nonzero rows of the reduced row echelon form.
    pub reduced: Matrix,
}

/// Column-by-column elimination shared by [`matrix_rank`] and
/// [`reduced_row_echelon`]: leftmost admissible column, largest-magnitude
/// row pivot. Returns the reduced matrix and its pivot columns.
fn gauss_jordan(m: &Matrix, tol_rank: f64) -> (Matrix, Vec<usize>) {
    let (nrows, ncols) = m.shape();
    let threshold = tol_rank * norm_inf(m).max(1.0);
    let mut work = m.clone();
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..ncols {
        if row == nrows {
            break;
        }
        let (best, mag) = (row..nrows)
            .map(|r| (r, work[(r, col)].abs()))
            .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if mag <= threshold {
            for r in row..nrows {
                work[(r, col)] = 0.0;
            }
            continue;
        }
        work.swap_rows(row, best);
        let p = work[(row, col)];
        for c in 0..ncols {
            work[(row, c)] /= p;
        }
        for r in 0..nrows {
            if r != row {
                let f = work[(r, col)];
                if f != 0.0 {
                    for c in 0..ncols {
                        work[(r, c)] -= f * work[(row, c)];
                    }
                    work[(r, col)] = 0.0;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    (work, pivots)
}

/// Numerical rank by Gaussian elimination with partial pivoting. A pivot
/// counts when its magnitude exceeds `tol_rank * max(1, ‖M‖∞)`.
pub fn matrix_rank(m: &Matrix, tol_rank: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    gauss_jordan(m, tol_rank).1.len()
}

/// Gauss-Jordan reduction of `E` into the parametric form of its null space.
pub fn reduced_row_echelon(e: &Matrix, tol_rank: f64) -> RowEchelon {
    let ncols = e.ncols();
    let (work, pivots) = if e.nrows() == 0 { (e.clone(), Vec::new()) } else { gauss_jordan(e, tol_rank) };
    let free: Vec<usize> = (0..ncols).filter(|c| !pivots.contains(c)).collect();
    let mut g1 = Matrix::zeros(pivots.len(), free.len());
    for (i, _) in pivots.iter().enumerate() {
        for (j, &f) in free.iter().enumerate() {
            g1[(i, j)] = -work[(i, f)];
        }
    }
    let reduced = work.rows(0, pivots.len()).into_owned();
    RowEchelon { pivots, free, g1, reduced }
}

/// Stack matrices with equal column counts vertically.
pub fn vstack(blocks: &[&Matrix]) -> Matrix {
    let ncols = blocks.iter().map(|b| b.ncols()).max().unwrap_or(0);
    let nrows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(nrows, ncols);
    let mut r = 0;
    for b in blocks {
        debug_assert!(b.nrows() == 0 || b.ncols() == ncols);
        out.view_mut((r, 0), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        matrix_from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn rank_examples() {
        assert_eq!(matrix_rank(&Matrix::identity(3, 3), 1e-9), 3);
        assert_eq!(matrix_rank(&Matrix::zeros(3, 2), 1e-9), 0);
        assert_eq!(matrix_rank(&m(&[&[1.0, 2.0], &[2.0, 4.0]]), 1e-9), 1);
        assert_eq!(matrix_rank(&Matrix::zeros(0, 4), 1e-9), 0);
    }

    #[test]
    fn rref_examples() {
        let r = reduced_row_echelon(&m(&[&[1.0, -1.0]]), 1e-9);
        assert_eq!(r.pivots, vec![0]);
        assert_eq!(r.free, vec![1]);
        assert_eq!(r.g1, m(&[&[1.0]]));

        let r = reduced_row_echelon(&Matrix::identity(2, 2), 1e-9);
        assert_eq!(r.pivots, vec![0, 1]);
        assert!(r.free.is_empty());
        assert_eq!(r.g1.shape(), (2, 0));

        let r = reduced_row_echelon(&m(&[&[1.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]), 1e-9);
        assert_eq!(r.pivots, vec![0, 2]);
        assert_eq!(r.free, vec![1]);
        assert_eq!(r.g1, m(&[&[-1.0], &[0.0]]));
    }

    #[test]
    fn cholesky_examples() {
        assert_eq!(cholesky_factor(&Matrix::identity(3, 3), 1e-9).unwrap(), Matrix::identity(3, 3));
        let l = cholesky_factor(&m(&[&[4.0, 0.0], &[0.0, 9.0]]), 1e-9).unwrap();
        assert_eq!(l, m(&[&[2.0, 0.0], &[0.0, 3.0]]));
        match cholesky_factor(&m(&[&[1.0, 1.0], &[1.0, 1.0]]), 1e-9) {
            Err(Error::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("expected a covariance error, got {other:?}"),
        }
    }

    #[test]
    fn cholesky_reconstructs() {
        let s = m(&[&[2.0, 0.5, 0.1], &[0.5, 1.0, 0.2], &[0.1, 0.2, 3.0]]);
        let l = cholesky_factor(&s, 1e-9).unwrap();
        assert!((&l * l.transpose() - &s).abs().max() < 1e-14);
        let inv = spd_inverse(&s, 1e-9).unwrap();
        assert!((&inv * &s - Matrix::identity(3, 3)).abs().max() < 1e-12);
    }

    #[test]
    fn spec_rejects_mismatched_rows() {
        assert!(matches!(
            PolyhedralSpec::new(Matrix::zeros(2, 2), Vector::zeros(3)),
            Err(Error::Dimension(_))
        ));
        assert!(PolyhedralSpec::new(m(&[&[f64::NAN]]), Vector::zeros(1)).is_err());
    }
}
