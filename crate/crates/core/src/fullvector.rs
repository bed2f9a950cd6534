//! Conditional chi-squared tests of `A E[m] <= b` on the full moment vector.

use serde::{Deserialize, Serialize};

use crate::dist::{chi2_quantile, normal_cdf};
use crate::error::{Error, Result};
use crate::linalg::{
    is_symmetric, kkt_residual, matrix_rank, project_polyhedron, Matrix, PolyhedralSpec, Settings, Vector,
};

/// Which critical value to use: the plain conditional chi-squared value or
/// the refined one. For subvector problems the same flag selects between
/// the subvector analogues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Cc,
    Rcc,
}

impl Variant {
    pub fn refined(self) -> bool {
        matches!(self, Variant::Rcc)
    }
}

/// Everything a test run reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub variant: Variant,
    pub statistic: f64,
    /// Restricted estimator `μ̂`.
    pub restricted_estimate: Vec<f64>,
    /// Nuisance estimate for subvector problems.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nuisance_estimate: Option<Vec<f64>>,
    /// Active inequalities, zero-based.
    pub active_set: Vec<usize>,
    pub r_hat: usize,
    /// `None` when the refinement was not needed; may be infinite.
    #[serde(with = "extended_float")]
    pub tau_hat: Option<f64>,
    pub beta_hat: f64,
    pub critical_value: f64,
    pub reject: bool,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Largest violation of the projection optimality conditions.
    pub kkt_residual: f64,
    /// Relative ridge applied to the covariance estimate, if any.
    pub ridge_applied: f64,
    /// Number of vertices used by the subvector refinement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<usize>,
    /// Implicit equalities found by the subvector rank computation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub implicit_equalities: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Serialises an optional float, writing infinities as the strings
/// `"inf"` / `"-inf"` because JSON has no infinity literal.
pub(crate) mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if *x == f64::INFINITY => s.serialize_str("inf"),
            Some(x) if *x == f64::NEG_INFINITY => s.serialize_str("-inf"),
            Some(x) => s.serialize_f64(*x),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Num(x)) => Ok(Some(x)),
            Some(Repr::Text(t)) => match t.as_str() {
                "inf" | "Infinity" => Ok(Some(f64::INFINITY)),
                "-inf" | "-Infinity" => Ok(Some(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {other:?}"))),
            },
        }
    }
}

/// Statistic, restricted estimator, active set and active rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Statistic {
    pub value: f64,
    pub restricted_estimate: Vector,
    pub active_set: Vec<usize>,
    pub rank: usize,
    pub kkt_residual: f64,
}

/// `(1/n) Σ (m_i - m̄)(m_i - m̄)ᵀ` over the rows of `data`.
pub fn sample_variance(data: &Matrix) -> Result<Matrix> {
    let n = data.nrows();
    if n < 2 {
        return Err(Error::Argument(format!("sample variance needs at least 2 observations, got {n}")));
    }
    let mean = column_means(data);
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    Ok(centered.transpose() * centered / n as f64)
}

pub(crate) fn column_means(data: &Matrix) -> Vector {
    let n = data.nrows().max(1) as f64;
    Vector::from_iterator(data.ncols(), data.column_iter().map(|c| c.sum() / n))
}

pub(crate) fn validate_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(Error::Argument(format!("alpha must lie in (0, 1/2], got {alpha}")));
    }
    Ok(())
}

pub(crate) fn validate_covariance(name: &str, sigma: &Matrix, dim: usize) -> Result<Matrix> {
    if sigma.nrows() != dim || sigma.ncols() != dim {
        return Err(Error::Dimension(format!("{name} is {}x{}, expected {dim}x{dim}", sigma.nrows(), sigma.ncols())));
    }
    crate::linalg::ensure_finite(name, sigma.as_slice())?;
    if !is_symmetric(sigma, 1e-8) {
        return Err(Error::Argument(format!("{name} is not symmetric")));
    }
    Ok((sigma + sigma.transpose()) * 0.5)
}

/// `Σ + ridge * mean(diag Σ) * I`, or `Σ` itself when the ridge is off.
pub(crate) fn apply_ridge(sigma: &Matrix, ridge: f64) -> Matrix {
    if ridge == 0.0 || sigma.nrows() == 0 {
        return sigma.clone();
    }
    let scale = sigma.trace() / sigma.nrows() as f64;
    sigma + Matrix::identity(sigma.nrows(), sigma.nrows()) * (ridge * scale)
}

/// Critical value `χ²_{r, 1-level}`, with the conventions `χ²_0 ≡ 0` and a
/// zero critical value once the level reaches one.
pub fn critical_value(rank: usize, level: f64) -> Result<f64> {
    if rank == 0 || level >= 1.0 {
        return Ok(0.0);
    }
    chi2_quantile(rank as u32, 1.0 - level)
}

/// `τ̂` for a rank-one active set.
///
/// The reference row is the lowest-index active row that is not zero.
/// Rows parallel to it in the `Σ` metric give an infinite contribution.
pub fn compute_tau(
    spec: &PolyhedralSpec,
    restricted: &Vector,
    sigma: &Matrix,
    n: usize,
    active: &[usize],
    tol_rank: f64,
) -> Result<f64> {
    let reference = active
        .iter()
        .copied()
        .find(|&j| spec.a.row(j).amax() > 0.0)
        .ok_or_else(|| Error::Invariant("τ needs an active row that is not zero".into()))?;
    tau_with_reference(spec, restricted, sigma, n, reference, tol_rank)
}

/// `τ̂` computed against a caller-chosen reference row.
pub fn tau_with_reference(
    spec: &PolyhedralSpec,
    restricted: &Vector,
    sigma: &Matrix,
    n: usize,
    reference: usize,
    tol_rank: f64,
) -> Result<f64> {
    if reference >= spec.n_constraints() {
        return Err(Error::Invariant(format!("reference row {reference} out of range")));
    }
    let a_ref = spec.a.row(reference).transpose();
    let sigma_ref = sigma * &a_ref;
    let norm_ref = a_ref.dot(&sigma_ref).max(0.0).sqrt();
    if norm_ref == 0.0 {
        return Err(Error::Invariant("reference row has zero Σ-norm".into()));
    }
    let slack = &spec.b - &spec.a * restricted;
    let root_n = (n as f64).sqrt();
    let mut tau = f64::INFINITY;
    for j in 0..spec.n_constraints() {
        if j == reference {
            continue;
        }
        let a_j = spec.a.row(j).transpose();
        let norm_j = a_j.dot(&(sigma * &a_j)).max(0.0).sqrt();
        let denom = norm_ref * norm_j - sigma_ref.dot(&a_j);
        if denom > tol_rank * norm_ref * norm_j {
            let t = root_n * norm_ref * slack[j] / denom;
            tau = tau.min(t.max(0.0));
        }
    }
    Ok(tau)
}

/// `β̂ = 2α Φ(τ̂)` when `r̂ = 1`, otherwise `α`.
pub fn compute_beta(rank: usize, tau: f64, alpha: f64) -> f64 {
    if rank == 1 {
        2.0 * alpha * normal_cdf(tau)
    } else {
        alpha
    }
}

/// The conditional decision shared by the full-vector and subvector tests.
/// `tau` is evaluated only when the refinement can change the outcome:
/// rank one and the statistic between `χ²_{1,1-2α}` and `χ²_{1,1-α}`.
pub(crate) struct Decision {
    pub tau: Option<f64>,
    pub beta: f64,
    pub critical_value: f64,
    pub reject: bool,
}

pub(crate) fn decide(
    statistic: f64,
    rank: usize,
    alpha: f64,
    variant: Variant,
    tau: impl FnOnce() -> Result<f64>,
) -> Result<Decision> {
    let plain = critical_value(rank, alpha)?;
    if variant.refined() && rank == 1 {
        let low = critical_value(1, 2.0 * alpha)?;
        if statistic >= low && statistic <= plain {
            let t = tau()?;
            let beta = compute_beta(1, t, alpha);
            let cv = critical_value(1, beta)?;
            return Ok(Decision { tau: Some(t), beta, critical_value: cv, reject: statistic > cv });
        }
    }
    Ok(Decision { tau: None, beta: alpha, critical_value: plain, reject: statistic > plain })
}

/// Moment mean, covariance estimate of `√n m̄`, sample size, constraints
/// and level.
#[derive(Debug, Clone, PartialEq)]
pub struct FullVectorProblem {
    pub mean: Vector,
    pub variance: Matrix,
    pub n: usize,
    pub spec: PolyhedralSpec,
    pub alpha: f64,
}

impl FullVectorProblem {
    pub fn new(mean: Vector, variance: Matrix, n: usize, spec: PolyhedralSpec, alpha: f64) -> Result<Self> {
        validate_alpha(alpha)?;
        if n == 0 {
            return Err(Error::Argument("sample size must be positive".into()));
        }
        if spec.n_constraints() == 0 {
            return Err(Error::Argument("at least one inequality is required".into()));
        }
        if mean.len() != spec.dim() {
            return Err(Error::Dimension(format!(
                "moment mean has {} entries, constraints act on {}",
                mean.len(),
                spec.dim()
            )));
        }
        crate::linalg::ensure_finite("moment mean", mean.as_slice())?;
        let variance = validate_covariance("variance", &variance, mean.len())?;
        Ok(Self { mean, variance, n, spec, alpha })
    }

    /// Mean and sample variance from an `n x d_m` matrix of moment values.
    pub fn from_data(data: &Matrix, spec: PolyhedralSpec, alpha: f64) -> Result<Self> {
        let variance = sample_variance(data)?;
        Self::new(column_means(data), variance, data.nrows(), spec, alpha)
    }

    fn effective_variance(&self, settings: &Settings) -> Matrix {
        apply_ridge(&self.variance, settings.ridge)
    }

    /// `T = min_{Aμ<=b} n (m̄ - μ)ᵀ Σ̂⁻¹ (m̄ - μ)` with its active set and rank.
    pub fn compute_statistic(&self, settings: &Settings) -> Result<Statistic> {
        settings.validate()?;
        let tol = &settings.tolerances;
        let metric = self.effective_variance(settings) / self.n as f64;
        let proj = project_polyhedron(&self.mean, &metric, &self.spec, tol)?;
        let residual = kkt_residual(&self.mean, &metric, &self.spec, &proj, tol)?;
        let value = if proj.distance_sq <= tol.tol_zero_statistic { 0.0 } else { proj.distance_sq };
        let rank = matrix_rank(&self.spec.a.select_rows(&proj.active), tol.tol_rank);
        Ok(Statistic {
            value,
            restricted_estimate: proj.point,
            active_set: proj.active,
            rank,
            kkt_residual: residual,
        })
    }

    pub fn run_test(&self, variant: Variant, settings: &Settings) -> Result<TestOutcome> {
        let stat = self.compute_statistic(settings)?;
        let sigma = self.effective_variance(settings);
        let decision = decide(stat.value, stat.rank, self.alpha, variant, || {
            compute_tau(
                &self.spec,
                &stat.restricted_estimate,
                &sigma,
                self.n,
                &stat.active_set,
                settings.tolerances.tol_rank,
            )
        })?;
        Ok(TestOutcome {
            variant,
            statistic: stat.value,
            restricted_estimate: stat.restricted_estimate.iter().copied().collect(),
            nuisance_estimate: None,
            active_set: stat.active_set,
            r_hat: stat.rank,
            tau_hat: decision.tau,
            beta_hat: decision.beta,
            critical_value: decision.critical_value,
            reject: decision.reject,
            diagnostics: Diagnostics { kkt_residual: stat.kkt_residual, ridge_applied: settings.ridge, ..Default::default() },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn quadrant() -> PolyhedralSpec {
        PolyhedralSpec::new(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap()
    }

    #[test]
    fn geometric_example() {
        let n = 25;
        let root = (n as f64).sqrt();
        let p = FullVectorProblem::new(
            DVector::from_vec(vec![2.0 / root, -3.5 / root]),
            DMatrix::identity(2, 2),
            n,
            quadrant(),
            0.05,
        )
        .unwrap();
        let s = Settings::default();
        let stat = p.compute_statistic(&s).unwrap();
        assert!((stat.value - 4.0).abs() < 1e-12);
        assert_eq!(stat.active_set, vec![0]);
        assert_eq!(stat.rank, 1);
        assert!((stat.restricted_estimate[1] * root + 3.5).abs() < 1e-12);
        let tau = compute_tau(&p.spec, &stat.restricted_estimate, &p.variance, n, &stat.active_set, 1e-9).unwrap();
        assert!((tau - 3.5).abs() < 1e-12);

        let cc = p.run_test(Variant::Cc, &s).unwrap();
        assert!(cc.reject);
        assert!((cc.critical_value - 3.841_458_820_694_124).abs() < 1e-9);
        assert_eq!(cc.tau_hat, None);
        // Outside the refinement window: same decision, no τ.
        let rcc = p.run_test(Variant::Rcc, &s).unwrap();
        assert!(rcc.reject);
        assert_eq!(rcc.tau_hat, None);
    }

    #[test]
    fn refined_window() {
        // One inequality, T = 3: CC accepts, RCC rejects with β = 2α.
        let spec = PolyhedralSpec::new(DMatrix::from_element(1, 1, 1.0), DVector::zeros(1)).unwrap();
        let p = FullVectorProblem::new(DVector::from_element(1, 3f64.sqrt()), DMatrix::identity(1, 1), 1, spec, 0.05)
            .unwrap();
        let s = Settings::default();
        let cc = p.run_test(Variant::Cc, &s).unwrap();
        let rcc = p.run_test(Variant::Rcc, &s).unwrap();
        assert!(!cc.reject);
        assert!(rcc.reject);
        assert_eq!(rcc.tau_hat, Some(f64::INFINITY));
        assert!((rcc.beta_hat - 0.1).abs() < 1e-15);
        assert!((rcc.critical_value - 2.705_543_454_095_404).abs() < 1e-9);
    }

    #[test]
    fn equality_rows() {
        let spec = PolyhedralSpec::new(DMatrix::from_vec(2, 1, vec![1.0, -1.0]), DVector::zeros(2)).unwrap();
        let p = FullVectorProblem::new(DVector::from_element(1, 1.0), DMatrix::identity(1, 1), 1, spec, 0.05).unwrap();
        let stat = p.compute_statistic(&Settings::default()).unwrap();
        assert!((stat.value - 1.0).abs() < 1e-12);
        assert_eq!(stat.active_set, vec![0, 1]);
        assert_eq!(stat.rank, 1);
        let tau = compute_tau(&p.spec, &stat.restricted_estimate, &p.variance, 1, &stat.active_set, 1e-9).unwrap();
        assert_eq!(tau, 0.0);
        assert_eq!(compute_beta(1, tau, 0.05), 0.05);
    }

    #[test]
    fn interior_accepts() {
        let p = FullVectorProblem::new(DVector::from_vec(vec![-1.0, -1.0]), DMatrix::identity(2, 2), 4, quadrant(), 0.05)
            .unwrap();
        for v in [Variant::Cc, Variant::Rcc] {
            let o = p.run_test(v, &Settings::default()).unwrap();
            assert_eq!(o.statistic, 0.0);
            assert_eq!(o.r_hat, 0);
            assert!(o.active_set.is_empty());
            assert!(!o.reject);
        }
    }

    #[test]
    fn beta_branches() {
        assert_eq!(compute_beta(2, 1.0, 0.05), 0.05);
        assert_eq!(compute_beta(1, 0.0, 0.05), 0.05);
        assert!((compute_beta(1, 3.5, 0.05) - 0.099_976_737_4).abs() < 1e-9);
        assert_eq!(compute_beta(1, f64::INFINITY, 0.05), 0.1);
    }

    #[test]
    fn collinear_rows_give_infinite_tau() {
        let spec = PolyhedralSpec::new(DMatrix::from_vec(2, 1, vec![1.0, 2.0]), DVector::from_vec(vec![0.0, 5.0])).unwrap();
        let tau = compute_tau(&spec, &DVector::zeros(1), &DMatrix::identity(1, 1), 1, &[0], 1e-9).unwrap();
        assert_eq!(tau, f64::INFINITY);
    }

    #[test]
    fn vertex_gives_zero_tau() {
        let tau = compute_tau(&quadrant(), &DVector::zeros(2), &DMatrix::identity(2, 2), 9, &[0, 1], 1e-9).unwrap();
        assert_eq!(tau, 0.0);
    }

    #[test]
    fn construction_checks() {
        let m = DVector::zeros(2);
        let v = DMatrix::identity(2, 2);
        assert!(FullVectorProblem::new(m.clone(), v.clone(), 1, quadrant(), 0.6).is_err());
        assert!(FullVectorProblem::new(m.clone(), v.clone(), 0, quadrant(), 0.05).is_err());
        assert!(FullVectorProblem::new(DVector::zeros(3), v.clone(), 1, quadrant(), 0.05).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(FullVectorProblem::new(m.clone(), asym, 1, quadrant(), 0.05).is_err());
        let singular = DMatrix::from_element(2, 2, 1.0);
        let p = FullVectorProblem::new(DVector::from_vec(vec![1.0, 1.0]), singular, 1, quadrant(), 0.05).unwrap();
        assert!(matches!(p.run_test(Variant::Cc, &Settings::default()), Err(Error::NotPositiveDefinite { .. })));
        let ridged = Settings { ridge: 0.1, ..Settings::default() };
        assert!(p.run_test(Variant::Cc, &ridged).is_ok());
    }

    #[test]
    fn sample_variance_small_cases() {
        let v = sample_variance(&DMatrix::from_vec(2, 1, vec![0.0, 2.0])).unwrap();
        assert!((v[(0, 0)] - 1.0).abs() < 1e-15);
        let c = sample_variance(&DMatrix::from_element(5, 3, 2.5)).unwrap();
        assert_eq!(c, DMatrix::zeros(3, 3));
        assert!(sample_variance(&DMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn outcome_json_round_trip() {
        let spec = PolyhedralSpec::new(DMatrix::from_element(1, 1, 1.0), DVector::zeros(1)).unwrap();
        let p = FullVectorProblem::new(DVector::from_element(1, 3f64.sqrt()), DMatrix::identity(1, 1), 1, spec, 0.05)
            .unwrap();
        let o = p.run_test(Variant::Rcc, &Settings::default()).unwrap();
        let text = serde_json::to_string(&o).unwrap();
        assert!(text.contains("\"tau_hat\":\"inf\""));
        let back: TestOutcome = serde_json::from_str(&text).unwrap();
        assert_eq!(back, o);
    }
}
