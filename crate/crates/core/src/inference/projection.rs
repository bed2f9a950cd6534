//! Projection tests: the full-vector refined test applied at each value of
//! the nuisance parameter, with the infimum over the nuisance found by
//! multi-start Nelder-Mead.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::neldermead::{nelder_mead, NelderMeadOptions};
use crate::error::{Error, Result};
use crate::fullvector::{column_means, FullVectorProblem, Variant};
use crate::linalg::{Matrix, PolyhedralSpec, Settings, Vector};

/// Moments `m_i(δ) = a_i - Σ_k δ_k g_{ik}` that are affine in the nuisance.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearNuisanceMoments {
    pub base: Matrix,
    pub loadings: Vec<Matrix>,
    mean_base: Vector,
    mean_loadings: Matrix,
    cross: Option<CrossMoments>,
}

#[derive(Debug, Clone, PartialEq)]
struct CrossMoments {
    aa: Matrix,
    /// `ak[k] = (1/n) Σ (a_i - ā)(g_ik - ḡ_k)ᵀ`
    ak: Vec<Matrix>,
    /// `kl[k][l] = (1/n) Σ (g_ik - ḡ_k)(g_il - ḡ_l)ᵀ`
    kl: Vec<Vec<Matrix>>,
}

fn centered(m: &Matrix) -> Matrix {
    let mean = column_means(m);
    let mut c = m.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    c
}

impl LinearNuisanceMoments {
    pub fn new(base: Matrix, loadings: Vec<Matrix>) -> Result<Self> {
        if let Some(bad) = loadings.iter().position(|g| g.shape() != base.shape()) {
            return Err(Error::Dimension(format!("loading {bad} does not match the {}x{} moments", base.nrows(), base.ncols())));
        }
        if base.nrows() < 2 {
            return Err(Error::Argument("at least two observations are required".into()));
        }
        let mean_base = column_means(&base);
        let mut mean_loadings = Matrix::zeros(base.ncols(), loadings.len());
        for (k, g) in loadings.iter().enumerate() {
            mean_loadings.set_column(k, &column_means(g));
        }
        Ok(Self { base, loadings, mean_base, mean_loadings, cross: None })
    }

    pub fn n(&self) -> usize {
        self.base.nrows()
    }

    pub fn nuisance_dim(&self) -> usize {
        self.loadings.len()
    }

    pub fn mean_at(&self, delta: &[f64]) -> Vector {
        &self.mean_base - &self.mean_loadings * Vector::from_column_slice(delta)
    }

    fn cross_moments(&mut self) -> &CrossMoments {
        if self.cross.is_none() {
            let n = self.n() as f64;
            let a = centered(&self.base);
            let g: Vec<Matrix> = self.loadings.iter().map(centered).collect();
            let aa = a.transpose() * &a / n;
            let ak = g.iter().map(|gk| a.transpose() * gk / n).collect();
            let kl = g.iter().map(|gk| g.iter().map(|gl| gk.transpose() * gl / n).collect()).collect();
            self.cross = Some(CrossMoments { aa, ak, kl });
        }
        self.cross.as_ref().expect("cross moments were just computed")
    }

    /// Sample variance of `m_i(δ)` (divisor n).
    pub fn unconditional_variance(&mut self, delta: &[f64]) -> Matrix {
        let c = self.cross_moments();
        let mut v = c.aa.clone();
        for (k, &dk) in delta.iter().enumerate() {
            v -= (&c.ak[k] + c.ak[k].transpose()) * dk;
            for (l, &dl) in delta.iter().enumerate() {
                v += &c.kl[k][l] * (dk * dl);
            }
        }
        (&v + v.transpose()) * 0.5
    }
}

/// Variance used at each nuisance value.
#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionVariance {
    /// Sample variance of `m_i(δ)`, recomputed at every `δ`.
    Unconditional,
    /// A fixed matrix, e.g. a conditional variance estimate that does not
    /// depend on `δ`.
    Fixed(Matrix),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionOptions {
    /// Total number of starting points, the first being the supplied one.
    pub starts: usize,
    pub seed: u64,
    pub nelder_mead: NelderMeadOptions,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self { starts: 5, seed: 0, nelder_mead: NelderMeadOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionDecision {
    pub reject: bool,
    /// Smallest value of `T(δ) - cv(δ)` found.
    pub min_value: f64,
    pub best_nuisance: Vec<f64>,
    pub starts_used: usize,
    /// Starts whose local search stopped without converging; they count as
    /// positive (they never force acceptance).
    pub nonconverged: usize,
}

/// Reject iff `inf_δ T(δ) - cv(δ)` is positive at every start.
pub fn projection_test(
    moments: &mut LinearNuisanceMoments,
    spec: &PolyhedralSpec,
    variance: &ProjectionVariance,
    start: &[f64],
    alpha: f64,
    options: &ProjectionOptions,
    settings: &Settings,
) -> Result<ProjectionDecision> {
    if start.len() != moments.nuisance_dim() {
        return Err(Error::Dimension(format!(
            "start has {} entries, nuisance has {}",
            start.len(),
            moments.nuisance_dim()
        )));
    }
    if options.starts == 0 {
        return Err(Error::Argument("at least one start is required".into()));
    }
    if let ProjectionVariance::Fixed(v) = variance {
        // Validate once so that a bad matrix is an error, not a silent +∞.
        FullVectorProblem::new(moments.mean_at(start), v.clone(), moments.n(), spec.clone(), alpha)?;
    } else {
        crate::fullvector::validate_alpha(alpha)?;
    }
    let n = moments.n();
    let mut gap = |delta: &[f64]| -> f64 {
        let sigma = match variance {
            ProjectionVariance::Unconditional => moments.unconditional_variance(delta),
            ProjectionVariance::Fixed(v) => v.clone(),
        };
        FullVectorProblem::new(moments.mean_at(delta), sigma, n, spec.clone(), alpha)
            .and_then(|p| p.run_test(Variant::Rcc, settings))
            .map(|o| o.statistic - o.critical_value)
            .unwrap_or(f64::INFINITY)
    };

    let nm = NelderMeadOptions { target: Some(0.0), ..options.nelder_mead };
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut best = (f64::INFINITY, start.to_vec());
    let mut nonconverged = 0;
    for s in 0..options.starts {
        let x0: Vec<f64> = if s == 0 {
            start.to_vec()
        } else {
            start.iter().map(|v| v + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect()
        };
        let res = nelder_mead(&mut gap, &x0, &nm);
        if res.value < best.0 {
            best = (res.value, res.point.clone());
        }
        if res.value <= 0.0 {
            return Ok(ProjectionDecision {
                reject: false,
                min_value: res.value,
                best_nuisance: res.point,
                starts_used: s + 1,
                nonconverged,
            });
        }
        if !res.converged {
            nonconverged += 1;
            log::debug!("projection start {s} stopped after {} evaluations without converging", res.evaluations);
        }
    }
    Ok(ProjectionDecision {
        reject: true,
        min_value: best.0,
        best_nuisance: best.1,
        starts_used: options.starts,
        nonconverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn unconditional_variance_matches_direct() {
        let base = DMatrix::from_fn(6, 2, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.5);
        let g = DMatrix::from_fn(6, 2, |i, j| ((i + 2 * j) % 3) as f64);
        let mut m = LinearNuisanceMoments::new(base.clone(), vec![g.clone()]).unwrap();
        let delta = [0.7];
        let direct = crate::fullvector::sample_variance(&(&base - &g * 0.7)).unwrap();
        assert!((m.unconditional_variance(&delta) - direct).amax() < 1e-12);
        assert!((m.mean_at(&delta) - column_means(&(&base - &g * 0.7))).amax() < 1e-12);
    }

    #[test]
    fn empty_nuisance_is_the_full_vector_test() {
        let base = DMatrix::from_fn(40, 1, |i, _| 0.4 + ((i * 13) % 7) as f64 / 7.0 - 0.5);
        let spec = PolyhedralSpec::new(DMatrix::identity(1, 1), Vector::zeros(1)).unwrap();
        let mut m = LinearNuisanceMoments::new(base.clone(), vec![]).unwrap();
        let d = projection_test(&mut m, &spec, &ProjectionVariance::Unconditional, &[], 0.05, &ProjectionOptions::default(), &Settings::default()).unwrap();
        let full = FullVectorProblem::from_data(&base, spec, 0.05).unwrap().run_test(Variant::Rcc, &Settings::default()).unwrap();
        assert_eq!(d.reject, full.reject);
        assert!((d.min_value - (full.statistic - full.critical_value)).abs() < 1e-12);
    }
}
