//! Interval regression with a binomially censored share.
//!
//! Observed: a share `s_N` of `N` trials, a binary regressor `X`, and binary
//! covariates `Z`. The last covariate is excluded (it shifts `X` only); the
//! others enter the index with a constant. The bounds `Y_L <= Y* <= Y_U` on
//! the latent log-odds give the moment inequalities
//! `E[(Y_L - Xθ - Z_cᵀδ) I(Z)] <= 0 <= E[(Y_U - Xθ - Z_cᵀδ) I(Z)]`
//! for indicator instruments `I(Z)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use super::projection::LinearNuisanceMoments;
use crate::dist::normal_cdf;
use crate::error::{Error, Result};
use crate::linalg::{solve_lp, LpStatus, Matrix, Settings, Tolerances, Vector};
use crate::subvector::{cond_var_from_neighbors, nearest_neighbors, SubvectorProblem};

/// Data-generating process parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntervalRegressionDesign {
    /// Trials behind each observed share.
    pub trials: usize,
    /// Small offset keeping the logs finite.
    pub s_lower: f64,
    pub theta0: f64,
    /// Index coefficients on `(1, Z_c2, ...)`; defaults to `(0, -1, 0, ...)`.
    pub delta0: Option<Vec<f64>>,
    /// Number of index covariates including the constant.
    pub d_c: usize,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
}

impl Default for IntervalRegressionDesign {
    fn default() -> Self {
        Self { trials: 100, s_lower: 0.00125, theta0: -1.0, delta0: None, d_c: 2, n: 1000, replications: 1000, seed: 0 }
    }
}

impl IntervalRegressionDesign {
    pub fn delta0(&self) -> Vec<f64> {
        self.delta0.clone().unwrap_or_else(|| {
            let mut d = vec![0.0; self.d_c];
            if self.d_c > 1 {
                d[1] = -1.0;
            }
            d
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s_lower > 0.0 && self.s_lower <= 0.05) {
            return Err(Error::Argument(format!("s_lower must lie in (0, 0.05], got {}", self.s_lower)));
        }
        if self.trials < 100 {
            return Err(Error::Argument(format!("the bounds need at least 100 trials, got {}", self.trials)));
        }
        if self.d_c < 2 {
            return Err(Error::Argument("d_c must be at least 2".into()));
        }
        if self.delta0().len() != self.d_c {
            return Err(Error::Dimension(format!("delta0 has {} entries, d_c is {}", self.delta0().len(), self.d_c)));
        }
        if self.n < 2 {
            return Err(Error::Argument("n must be at least 2".into()));
        }
        if !self.theta0.is_finite() || self.delta0().iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("coefficients must be finite".into()));
        }
        Ok(())
    }

    /// Upper and lower bound transforms of a count `i` out of `trials`.
    fn bound_tables(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.trials as f64;
        let sl = self.s_lower;
        (0..=self.trials)
            .map(|i| {
                let s = i as f64 / n;
                let upper = (s + 2.0 / n).ln() - (1.0 - s + sl).ln();
                let lower = (s + sl).ln() - (1.0 - s + 2.0 / n).ln();
                (upper, lower)
            })
            .unzip()
    }

    /// Draw one sample of size `n`.
    pub fn generate<R: Rng>(&self, rng: &mut R) -> Result<IntervalRegressionSample> {
        self.validate()?;
        let dz = self.d_c;
        let delta0 = self.delta0();
        let (upper, lower) = self.bound_tables();
        let mut pmf = vec![0.0; self.trials + 1];
        let mut z = Matrix::zeros(self.n, dz);
        let mut x = Vector::zeros(self.n);
        let mut yu = Vector::zeros(self.n);
        let mut yl = Vector::zeros(self.n);
        for i in 0..self.n {
            let eps = clipped_normal(rng);
            for j in 0..dz {
                z[(i, j)] = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            }
            let xi = if z[(i, dz - 1)] + eps / 2.0 > 0.0 { 1.0 } else { 0.0 };
            let mut index = xi * self.theta0 + delta0[0] + eps;
            for j in 1..self.d_c {
                index += delta0[j] * z[(i, j - 1)];
            }
            binomial_pmf(self.trials, logistic(index), &mut pmf);
            let count = invert_cdf(&pmf, rng.random::<f64>());
            x[i] = xi;
            yu[i] = upper[count];
            yl[i] = lower[count];
        }
        IntervalRegressionSample::new(yu, yl, x, z)
    }
}

fn clipped_normal<R: Rng>(rng: &mut R) -> f64 {
    let e: f64 = rng.sample(StandardNormal);
    e.clamp(-4.0, 4.0)
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Binomial probabilities, recursing outward from the mode in log space.
fn binomial_pmf(trials: usize, s: f64, out: &mut [f64]) {
    let n = trials;
    if s <= 0.0 || s >= 1.0 {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[if s <= 0.0 { 0 } else { n }] = 1.0;
        return;
    }
    let mode = (((n + 1) as f64 * s).floor() as usize).min(n);
    let log_mode = ln_binomial(n as u64, mode as u64) + mode as f64 * s.ln() + (n - mode) as f64 * (1.0 - s).ln();
    let odds = s / (1.0 - s);
    out[mode] = log_mode.exp();
    for i in (mode + 1)..=n {
        out[i] = out[i - 1] * ((n - i + 1) as f64 / i as f64) * odds;
    }
    for i in (0..mode).rev() {
        out[i] = out[i + 1] * ((i + 1) as f64 / (n - i) as f64) / odds;
    }
}

fn invert_cdf(pmf: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    pmf.len() - 1
}

/// One observed sample with its instruments.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalRegressionSample {
    pub y_upper: Vector,
    pub y_lower: Vector,
    pub x: Vector,
    /// Binary covariates; the last column is the excluded one.
    pub z: Matrix,
    /// `(1, z_1, ..., z_{d-1})`.
    pub z_index: Matrix,
    /// Indicator instruments, one column each.
    pub instruments: Matrix,
    pub instrument_labels: Vec<String>,
    /// Instruments dropped because no observation falls in their cell.
    pub warnings: Vec<String>,
}

impl IntervalRegressionSample {
    /// Instruments are the four cells `1{z_j = a, z_l = b}` of every pair
    /// `j < l` of covariates.
    pub fn new(y_upper: Vector, y_lower: Vector, x: Vector, z: Matrix) -> Result<Self> {
        let n = z.nrows();
        let dz = z.ncols();
        if y_upper.len() != n || y_lower.len() != n || x.len() != n {
            return Err(Error::Dimension("sample vectors and Z must have the same number of rows".into()));
        }
        if dz < 2 {
            return Err(Error::Argument("at least two covariates are required".into()));
        }
        for (name, v) in [("y_upper", y_upper.as_slice()), ("y_lower", y_lower.as_slice()), ("x", x.as_slice()), ("z", z.as_slice())] {
            crate::linalg::ensure_finite(name, v)?;
        }
        let mut z_index = Matrix::from_element(n, dz, 1.0);
        for j in 1..dz {
            z_index.set_column(j, &z.column(j - 1));
        }
        let mut columns = Vec::new();
        let mut labels = Vec::new();
        let mut warnings = Vec::new();
        for j in 0..dz {
            for l in (j + 1)..dz {
                for (a, b) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
                    let col = Vector::from_fn(n, |i, _| if z[(i, j)] == a && z[(i, l)] == b { 1.0 } else { 0.0 });
                    let label = format!("z{j}={a},z{l}={b}");
                    if col.sum() == 0.0 {
                        log::warn!("instrument {label} has an empty cell and is dropped");
                        warnings.push(format!("dropped empty instrument {label}"));
                    } else {
                        columns.push(col);
                        labels.push(label);
                    }
                }
            }
        }
        if columns.is_empty() {
            return Err(Error::Argument("every instrument cell is empty".into()));
        }
        let instruments = Matrix::from_columns(&columns);
        Ok(Self { y_upper, y_lower, x, z, z_index, instruments, instrument_labels: labels, warnings })
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn n_moments(&self) -> usize {
        2 * self.instruments.ncols()
    }

    /// `m_i(θ) = ((Y_L - Xθ) I_i, -(Y_U - Xθ) I_i)`.
    pub fn moments(&self, theta: f64) -> Matrix {
        let n = self.n();
        let j = self.instruments.ncols();
        Matrix::from_fn(n, 2 * j, |i, c| {
            if c < j {
                (self.y_lower[i] - self.x[i] * theta) * self.instruments[(i, c)]
            } else {
                -(self.y_upper[i] - self.x[i] * theta) * self.instruments[(i, c - j)]
            }
        })
    }

    /// Per-observation loading of the moments on coordinate `k` of `δ`.
    fn loading(&self, k: usize) -> Matrix {
        let j = self.instruments.ncols();
        Matrix::from_fn(self.n(), 2 * j, |i, c| {
            if c < j {
                self.instruments[(i, c)] * self.z_index[(i, k)]
            } else {
                -self.instruments[(i, c - j)] * self.z_index[(i, k)]
            }
        })
    }

    /// Sample average of the loadings: the `C` matrix of the subvector model.
    pub fn c_matrix(&self) -> Matrix {
        let cols: Vec<Vector> = (0..self.z_index.ncols()).map(|k| crate::fullvector::column_means(&self.loading(k))).collect();
        Matrix::from_columns(&cols)
    }

    pub fn nearest_neighbors(&self, seed: u64) -> Result<Vec<usize>> {
        nearest_neighbors(&self.z, seed)
    }

    /// Subvector problem at `θ`, the conditional variance matched on the
    /// supplied neighbours.
    pub fn subvector_problem(&self, theta: f64, neighbors: &[usize], alpha: f64) -> Result<SubvectorProblem> {
        let m = self.moments(theta);
        let variance = cond_var_from_neighbors(&m, neighbors)?;
        let k = m.ncols();
        SubvectorProblem::new(
            Matrix::identity(k, k),
            self.c_matrix(),
            Vector::zeros(k),
            crate::fullvector::column_means(&m),
            variance,
            self.n(),
            alpha,
        )
    }

    /// Moments at `θ` as an affine function of `δ`.
    pub fn nuisance_moments(&self, theta: f64) -> Result<LinearNuisanceMoments> {
        LinearNuisanceMoments::new(self.moments(theta), (0..self.z_index.ncols()).map(|k| self.loading(k)).collect())
    }

    /// Least-squares coefficients of the bound midpoint `(Y_U + Y_L)/2 - Xθ`
    /// on the index covariates.
    pub fn nuisance_start(&self, theta: f64) -> Vec<f64> {
        let y = Vector::from_fn(self.n(), |i, _| 0.5 * (self.y_upper[i] + self.y_lower[i]) - self.x[i] * theta);
        let zt = self.z_index.transpose();
        let gram = &zt * &self.z_index;
        match gram.cholesky() {
            Some(ch) => ch.solve(&(&zt * y)).iter().copied().collect(),
            None => vec![0.0; self.z_index.ncols()],
        }
    }
}

/// Bounds on `θ`, possibly empty or unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiedSet {
    pub lower: f64,
    pub upper: f64,
    pub empty: bool,
    /// Conditional means per covariate cell: `(z, E[X|z], E[Y_L|z], E[Y_U|z])`.
    pub cells: Vec<(Vec<f64>, f64, f64, f64)>,
}

/// Identified set for `θ` by simulating the conditional means over `draws`
/// error draws and solving two LPs in `(θ, δ)`.
pub fn identified_set_interval_regression(
    design: &IntervalRegressionDesign,
    draws: usize,
    seed: u64,
) -> Result<IdentifiedSet> {
    design.validate()?;
    if draws == 0 {
        return Err(Error::Argument("at least one draw is required".into()));
    }
    let dz = design.d_c;
    let n_cells = 1usize << dz;
    let cells: Vec<Vec<f64>> =
        (0..n_cells).map(|c| (0..dz).map(|j| ((c >> (dz - 1 - j)) & 1) as f64).collect()).collect();
    let delta0 = design.delta0();
    let (upper, lower) = design.bound_tables();
    // Index without the regressor term, per cell.
    let base_index: Vec<f64> = cells
        .iter()
        .map(|z| delta0[0] + (1..design.d_c).map(|j| delta0[j] * z[j - 1]).sum::<f64>())
        .collect();

    const CHUNK: usize = 20_000;
    let chunks = draws.div_ceil(CHUNK);
    let partial: Vec<Vec<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let size = CHUNK.min(draws - chunk * CHUNK);
            let mut pmf = vec![0.0; design.trials + 1];
            let mut sums = vec![(0.0, 0.0); n_cells];
            for _ in 0..size {
                let eps = clipped_normal(&mut rng);
                for (c, z) in cells.iter().enumerate() {
                    let x = if z[dz - 1] + eps / 2.0 > 0.0 { 1.0 } else { 0.0 };
                    binomial_pmf(design.trials, logistic(x * design.theta0 + base_index[c] + eps), &mut pmf);
                    let mut eu = 0.0;
                    let mut el = 0.0;
                    for (i, p) in pmf.iter().enumerate() {
                        eu += p * upper[i];
                        el += p * lower[i];
                    }
                    sums[c].0 += el;
                    sums[c].1 += eu;
                }
            }
            sums
        })
        .collect();
    let mut means = vec![(0.0, 0.0); n_cells];
    for chunk in &partial {
        for (m, s) in means.iter_mut().zip(chunk) {
            m.0 += s.0;
            m.1 += s.1;
        }
    }
    let summary: Vec<(Vec<f64>, f64, f64, f64)> = cells
        .iter()
        .zip(&means)
        .map(|(z, &(el, eu))| (z.clone(), normal_cdf(2.0 * z[dz - 1]), el / draws as f64, eu / draws as f64))
        .collect();
    identified_set_from_cells(&summary, &Settings::default().tolerances)
}

/// The LP step: `θ` such that some `δ` has
/// `E[Y_L|z] <= E[X|z] θ + z_cᵀδ <= E[Y_U|z]` in every cell.
pub fn identified_set_from_cells(cells: &[(Vec<f64>, f64, f64, f64)], tol: &Tolerances) -> Result<IdentifiedSet> {
    let dz = cells.first().map_or(0, |c| c.0.len());
    if dz == 0 {
        return Err(Error::Argument("no covariate cells".into()));
    }
    let nv = 1 + dz;
    let rows = 2 * cells.len();
    // Variables: θ, δ (free) then one slack per inequality.
    let mut eq = Matrix::zeros(rows, nv + rows);
    let mut rhs = Vector::zeros(rows);
    for (c, (z, ex, el, eu)) in cells.iter().enumerate() {
        let mut coeff = vec![*ex, 1.0];
        coeff.extend_from_slice(&z[..dz - 1]);
        for (v, a) in coeff.iter().enumerate() {
            eq[(2 * c, v)] = *a;
            eq[(2 * c + 1, v)] = -a;
        }
        rhs[2 * c] = *eu;
        rhs[2 * c + 1] = -el;
        eq[(2 * c, nv + 2 * c)] = 1.0;
        eq[(2 * c + 1, nv + 2 * c + 1)] = 1.0;
    }
    let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); nv];
    bounds.extend(std::iter::repeat_n((0.0, f64::INFINITY), rows));
    let solve = |sign: f64| -> Result<Option<f64>> {
        let mut obj = Vector::zeros(nv + rows);
        obj[0] = sign;
        let res = solve_lp(&obj, &eq, &rhs, &bounds, tol)?;
        Ok(match res.status {
            LpStatus::Optimal => Some(res.x[0]),
            LpStatus::Unbounded => Some(-sign * f64::INFINITY),
            LpStatus::Infeasible => None,
        })
    };
    let lo = solve(1.0)?;
    let hi = solve(-1.0)?;
    Ok(match (lo, hi) {
        (Some(lower), Some(upper)) => IdentifiedSet { lower, upper, empty: false, cells: cells.to_vec() },
        _ => IdentifiedSet { lower: f64::NAN, upper: f64::NAN, empty: true, cells: cells.to_vec() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pmf_sums_to_one() {
        let mut pmf = vec![0.0; 101];
        for s in [1e-6, 0.01, 0.3, 0.5, 0.77, 0.999] {
            binomial_pmf(100, s, &mut pmf);
            let total: f64 = pmf.iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "s = {s}");
            let mean: f64 = pmf.iter().enumerate().map(|(i, p)| i as f64 * p).sum();
            assert!((mean - 100.0 * s).abs() < 1e-9);
        }
    }

    #[test]
    fn instruments_for_two_covariates() {
        let design = IntervalRegressionDesign { n: 200, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = design.generate(&mut rng).unwrap();
        assert_eq!(s.instruments.ncols(), 4);
        assert_eq!(s.n_moments(), 8);
        for i in 0..s.n() {
            assert_eq!(s.instruments.row(i).sum(), 1.0);
            assert!(s.y_lower[i] <= s.y_upper[i]);
        }
        let c = s.c_matrix();
        assert_eq!(c.shape(), (8, 2));
    }

    #[test]
    fn moment_counts_by_dimension() {
        for (dc, moments) in [(2, 8), (3, 24), (4, 48)] {
            let design = IntervalRegressionDesign { n: 400, d_c: dc, ..Default::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            assert_eq!(design.generate(&mut rng).unwrap().n_moments(), moments);
        }
    }

    #[test]
    fn point_identified_cells_collapse() {
        // Y_U = Y_L = 0.5 x - 1 + 2 z1 exactly.
        let mut cells = Vec::new();
        for (z1, ze) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
            let ex = normal_cdf(2.0 * ze);
            let y = 0.5 * ex - 1.0 + 2.0 * z1;
            cells.push((vec![z1, ze], ex, y, y));
        }
        let set = identified_set_from_cells(&cells, &Tolerances::default()).unwrap();
        assert!(!set.empty);
        assert!((set.lower - 0.5).abs() < 1e-9 && (set.upper - 0.5).abs() < 1e-9, "{set:?}");
    }

    #[test]
    fn wider_bounds_widen_the_set() {
        let mut cells = Vec::new();
        for (z1, ze) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
            let ex = normal_cdf(2.0 * ze);
            let y = 0.5 * ex - 1.0 + 2.0 * z1;
            cells.push((vec![z1, ze], ex, y - 0.1, y + 0.1));
        }
        let narrow = identified_set_from_cells(&cells, &Tolerances::default()).unwrap();
        for c in cells.iter_mut() {
            c.2 -= 0.05;
            c.3 += 0.05;
        }
        let wide = identified_set_from_cells(&cells, &Tolerances::default()).unwrap();
        assert!(wide.lower <= narrow.lower && wide.upper >= narrow.upper);
        assert!(narrow.lower < 0.5 && narrow.upper > 0.5);
    }
}
