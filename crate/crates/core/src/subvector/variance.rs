//! Estimators of `Var(√n m̄ | Z)`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fullvector::column_means;
use crate::linalg::{cholesky_factor, forward_substitute, Matrix, Vector};

/// How the conditional variance is obtained from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConditionalVarianceMode {
    /// Weighted within-category variances.
    Discrete { labels: Vec<i64> },
    /// Nearest-neighbour matching on `z` (one row per observation).
    NearestNeighbor { z: Vec<Vec<f64>>, seed: u64 },
    /// A known matrix.
    Provided { variance: Vec<Vec<f64>> },
}

impl ConditionalVarianceMode {
    pub fn estimate(&self, data: &Matrix) -> Result<Matrix> {
        match self {
            Self::Discrete { labels } => cond_var_discrete(data, labels),
            Self::NearestNeighbor { z, seed } => {
                cond_var_nearest_neighbor(data, &crate::linalg::matrix_from_rows(z)?, *seed)
            }
            Self::Provided { variance } => crate::linalg::matrix_from_rows(variance),
        }
    }
}

/// `Σ_ℓ (n_ℓ/n) (n_ℓ - 1)⁻¹ Σ_{i ∈ ℓ} (m_i - m̄_ℓ)(m_i - m̄_ℓ)ᵀ`.
pub fn cond_var_discrete<L: Ord + Clone + std::fmt::Debug>(data: &Matrix, labels: &[L]) -> Result<Matrix> {
    let n = data.nrows();
    if labels.len() != n {
        return Err(Error::Dimension(format!("{} labels for {n} observations", labels.len())));
    }
    let mut groups: BTreeMap<L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(l.clone()).or_default().push(i);
    }
    let dm = data.ncols();
    let mut out = Matrix::zeros(dm, dm);
    for (label, rows) in &groups {
        let nl = rows.len();
        if nl < 2 {
            return Err(Error::Argument(format!("category {label:?} has a single observation")));
        }
        let sub = data.select_rows(rows);
        let mean = column_means(&sub);
        let mut centered = sub;
        for mut row in centered.row_iter_mut() {
            row -= mean.transpose();
        }
        out += centered.transpose() * centered * (1.0 / ((nl - 1) as f64 * n as f64) * nl as f64);
    }
    Ok(out)
}

/// Index of each observation's nearest neighbour in the Mahalanobis metric
/// of the sample variance of `z`. Exact ties (up to rounding) are broken
/// uniformly at random from `seed`.
pub fn nearest_neighbors(z: &Matrix, seed: u64) -> Result<Vec<usize>> {
    let n = z.nrows();
    if n < 2 {
        return Err(Error::Argument(format!("nearest-neighbour matching needs 2 observations, got {n}")));
    }
    let dz = z.ncols();
    let mean = column_means(z);
    let mut centered = z.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / n as f64;
    let l = cholesky_factor(&cov, 1e-9)?;
    let white: Vec<Vector> = (0..n).map(|i| forward_substitute(&l, &centered.row(i).transpose())).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut ties = Vec::new();
    for i in 0..n {
        let mut best = f64::INFINITY;
        ties.clear();
        for j in 0..n {
            if j == i {
                continue;
            }
            let mut dist = 0.0;
            for t in 0..dz {
                let diff = white[i][t] - white[j][t];
                dist += diff * diff;
            }
            let slack = 1e-12 * (1.0 + best.min(dist));
            if dist < best - slack {
                best = dist;
                ties.clear();
                ties.push(j);
            } else if (dist - best).abs() <= slack {
                ties.push(j);
            }
        }
        let pick = if ties.len() == 1 { ties[0] } else { ties[rng.random_range(0..ties.len())] };
        out.push(pick);
    }
    Ok(out)
}

/// `(1/2n) Σ_i (m_i - m_{ℓ(i)})(m_i - m_{ℓ(i)})ᵀ` for given neighbours.
pub fn cond_var_from_neighbors(data: &Matrix, neighbors: &[usize]) -> Result<Matrix> {
    let n = data.nrows();
    if neighbors.len() != n || neighbors.iter().any(|&j| j >= n) {
        return Err(Error::Dimension(format!("neighbour list does not index the {n} observations")));
    }
    let dm = data.ncols();
    let mut out = Matrix::zeros(dm, dm);
    for (i, &j) in neighbors.iter().enumerate() {
        let diff = (data.row(i) - data.row(j)).transpose();
        out += &diff * diff.transpose();
    }
    Ok(out / (2.0 * n as f64))
}

pub fn cond_var_nearest_neighbor(data: &Matrix, z: &Matrix, seed: u64) -> Result<Matrix> {
    if z.nrows() != data.nrows() {
        return Err(Error::Dimension(format!("Z has {} rows, data has {}", z.nrows(), data.nrows())));
    }
    cond_var_from_neighbors(data, &nearest_neighbors(z, seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discrete_examples() {
        let data = Matrix::from_vec(4, 1, vec![0.0, 2.0, 10.0, 14.0]);
        let v = cond_var_discrete(&data, &[0, 0, 1, 1]).unwrap();
        assert!((v[(0, 0)] - 5.0).abs() < 1e-12);
        let same = Matrix::from_vec(4, 1, vec![1.0, 1.0, 3.0, 3.0]);
        assert_eq!(cond_var_discrete(&same, &[0, 0, 1, 1]).unwrap()[(0, 0)], 0.0);
        assert!(cond_var_discrete(&data, &[0, 0, 0, 1]).is_err());
    }

    #[test]
    fn single_category_is_unbiased_sample_variance() {
        let data = Matrix::from_vec(3, 1, vec![1.0, 2.0, 6.0]);
        let v = cond_var_discrete(&data, &["a"; 3]).unwrap();
        assert!((v[(0, 0)] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn nearest_neighbour_examples() {
        let data = Matrix::from_vec(2, 1, vec![0.0, 2.0]);
        let z = Matrix::from_vec(2, 1, vec![0.0, 1.0]);
        assert!((cond_var_nearest_neighbor(&data, &z, 1).unwrap()[(0, 0)] - 2.0).abs() < 1e-15);
        let flat = Matrix::from_element(5, 2, 3.0);
        let z = Matrix::from_vec(5, 1, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(cond_var_nearest_neighbor(&flat, &z, 1).unwrap(), Matrix::zeros(2, 2));
        assert!(matches!(
            nearest_neighbors(&Matrix::from_element(4, 1, 1.0), 0),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn ties_are_seeded() {
        let z = Matrix::from_vec(6, 1, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let a = nearest_neighbors(&z, 11).unwrap();
        assert_eq!(a, nearest_neighbors(&z, 11).unwrap());
        for (i, &j) in a.iter().enumerate() {
            assert_ne!(i, j);
            assert_eq!(z[(i, 0)], z[(j, 0)]);
        }
    }
}
