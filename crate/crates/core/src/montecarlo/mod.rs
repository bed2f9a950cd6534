//! Rejection-rate studies: the Gaussian full-vector design and the
//! interval-regression subvector design.
//!
//! Every replication draws from its own ChaCha stream derived from the
//! master seed, the point and the replication index, so reports do not
//! depend on the number of worker threads.

mod metrics;

pub use crate::inference::IntervalRegressionDesign;
pub use metrics::{compute_metrics, rejection_rate, size_correction, Metrics};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fullvector::{sample_variance, FullVectorProblem, Variant};
use crate::inference::{projection_test, ProjectionOptions, ProjectionVariance};
use crate::linalg::{cholesky_factor, is_symmetric, matrix_from_rows, Matrix, PolyhedralSpec, Settings, Vector};
use crate::subvector::{cond_var_from_neighbors, VertexCache};

/// Correlation matrix of the Gaussian design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OmegaSpec {
    /// Identity.
    Zero,
    /// Unit diagonal, `rho` off the diagonal.
    Equicorrelated { rho: f64 },
    /// `rho^|i-j|`.
    Toeplitz { rho: f64 },
    Matrix { rows: Vec<Vec<f64>> },
}

impl OmegaSpec {
    pub fn build(&self, p: usize) -> Result<Matrix> {
        let m = match self {
            OmegaSpec::Zero => Matrix::identity(p, p),
            OmegaSpec::Equicorrelated { rho } => Matrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { *rho }),
            OmegaSpec::Toeplitz { rho } => Matrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs())),
            OmegaSpec::Matrix { rows } => matrix_from_rows(rows)?,
        };
        if m.shape() != (p, p) {
            return Err(Error::Dimension(format!("Ω is {}x{}, expected {p}x{p}", m.nrows(), m.ncols())));
        }
        crate::linalg::ensure_finite("Ω", m.as_slice())?;
        if !is_symmetric(&m, 1e-12) || (0..p).any(|i| (m[(i, i)] - 1.0).abs() > 1e-12) {
            return Err(Error::Argument("Ω must be a symmetric matrix with unit diagonal".into()));
        }
        cholesky_factor(&m, 1e-12).map_err(|e| Error::Argument(format!("Ω is not positive definite: {e}")))?;
        Ok(m)
    }
}

/// A mean vector `E[W]` at which rejection rates are estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignPoint {
    pub mu: Vec<f64>,
    /// Defaults to whether `mu >= 0` holds, i.e. the null.
    #[serde(default)]
    pub null: Option<bool>,
    #[serde(default)]
    pub label: Option<String>,
}

impl DesignPoint {
    pub fn is_null(&self) -> bool {
        self.null.unwrap_or_else(|| self.mu.iter().all(|&v| v >= 0.0))
    }
}

/// `E[W] >= 0` tested with `W_i ~ N(μ, Ω)` i.i.d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FullVectorDesign {
    pub p: usize,
    pub omega: OmegaSpec,
    pub points: Vec<DesignPoint>,
    #[serde(default = "default_n")]
    pub n: usize,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Use `Ω` itself as the variance estimate instead of the sample variance.
    #[serde(default = "default_true")]
    pub known_variance: bool,
}

fn default_n() -> usize {
    100
}
fn default_alpha() -> f64 {
    0.05
}
fn default_true() -> bool {
    true
}

impl FullVectorDesign {
    pub fn new(p: usize, omega: OmegaSpec, points: Vec<DesignPoint>, replications: usize, seed: u64) -> Self {
        Self { p, omega, points, n: default_n(), replications, seed, alpha: default_alpha(), known_variance: true }
    }

    pub fn validate(&self) -> Result<Matrix> {
        if self.p == 0 {
            return Err(Error::Argument("p must be positive".into()));
        }
        if self.points.is_empty() {
            return Err(Error::Argument("at least one design point is required".into()));
        }
        if self.replications == 0 {
            return Err(Error::Argument("at least one replication is required".into()));
        }
        if self.n < 2 && !self.known_variance {
            return Err(Error::Argument("the sample variance needs n >= 2".into()));
        }
        if self.n == 0 {
            return Err(Error::Argument("n must be positive".into()));
        }
        crate::fullvector::validate_alpha(self.alpha)?;
        if let Some(bad) = self.points.iter().position(|pt| pt.mu.len() != self.p) {
            return Err(Error::Dimension(format!("point {bad} has {} entries, p is {}", self.points[bad].mu.len(), self.p)));
        }
        self.omega.build(self.p)
    }
}

/// Rejection summary at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub label: String,
    pub location: Vec<f64>,
    pub null: bool,
    pub rejections: usize,
    pub replications: usize,
    /// Replications whose test failed numerically; counted as non-rejections.
    pub errors: usize,
    pub rate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub test: String,
    pub points: Vec<PointSummary>,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub design: String,
    pub seed: u64,
    pub replications: usize,
    pub alpha: f64,
    pub results: Vec<TestSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Wall-clock time; left out unless requested so that reports are
    /// reproducible byte for byte.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

impl MonteCarloReport {
    /// One row per (design, test, point).
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let fail = |e: csv::Error| Error::Argument(format!("CSV output failed: {e}"));
        out.write_record(["design", "test", "point", "location", "null", "rejections", "replications", "errors", "rate", "std_error"])
            .map_err(fail)?;
        for t in &self.results {
            for p in &t.points {
                let loc = p.location.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
                out.write_record([
                    self.design.clone(),
                    t.test.clone(),
                    p.label.clone(),
                    loc,
                    p.null.to_string(),
                    p.rejections.to_string(),
                    p.replications.to_string(),
                    p.errors.to_string(),
                    p.rate.to_string(),
                    p.std_error.to_string(),
                ])
                .map_err(fail)?;
            }
        }
        out.flush().map_err(|e| Error::Argument(e.to_string()))
    }
}

/// Stream for replication `rep` at point `point`.
pub(crate) fn replication_rng(seed: u64, point: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((point as u64) << 40) | rep as u64);
    rng
}

/// Margins `T - cv` (positive means reject) for every requested
/// `(variant, α)`, point and replication: `out[test][point][rep]`.
/// A failed replication is recorded as `-∞`.
pub fn simulate_fullvector_margins(
    design: &FullVectorDesign,
    tests: &[(Variant, f64)],
    settings: &Settings,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let omega = design.validate()?;
    for (_, a) in tests {
        crate::fullvector::validate_alpha(*a)?;
    }
    let l = cholesky_factor(&omega, 1e-12)?;
    let p = design.p;
    let spec = PolyhedralSpec::new(-Matrix::identity(p, p), Vector::zeros(p))?;
    let n = design.n;
    let root_n = (n as f64).sqrt();

    let mut out = vec![vec![Vec::new(); design.points.len()]; tests.len()];
    for (pi, point) in design.points.iter().enumerate() {
        let mu = Vector::from_column_slice(&point.mu);
        let reps: Vec<Vec<f64>> = (0..design.replications)
            .into_par_iter()
            .map(|rep| {
                let mut rng = replication_rng(design.seed, pi, rep);
                let draw = |rng: &mut ChaCha8Rng| -> Vector {
                    let z = Vector::from_fn(p, |_, _| StandardNormal.sample(rng));
                    &l * z
                };
                let (mean, variance) = if design.known_variance {
                    (&mu + draw(&mut rng) / root_n, omega.clone())
                } else {
                    let mut w = Matrix::zeros(n, p);
                    for i in 0..n {
                        w.set_row(i, &(&mu + draw(&mut rng)).transpose());
                    }
                    let v = sample_variance(&w).unwrap_or_else(|_| Matrix::zeros(p, p));
                    (crate::fullvector::column_means(&w), v)
                };
                tests
                    .iter()
                    .map(|&(variant, alpha)| {
                        FullVectorProblem::new(mean.clone(), variance.clone(), n, spec.clone(), alpha)
                            .and_then(|prob| prob.run_test(variant, settings))
                            .map(|o| o.statistic - o.critical_value)
                            .unwrap_or(f64::NEG_INFINITY)
                    })
                    .collect()
            })
            .collect();
        for (ti, column) in out.iter_mut().enumerate() {
            column[pi] = reps.iter().map(|r| r[ti]).collect();
        }
    }
    Ok(out)
}

fn summarize(
    test: String,
    labels: &[(String, Vec<f64>, bool)],
    margins: &[Vec<f64>],
    alpha: f64,
) -> TestSummary {
    let points = labels
        .iter()
        .zip(margins)
        .map(|((label, location, null), m)| {
            let reps = m.len();
            let rejections = m.iter().filter(|&&v| v > 0.0).count();
            let errors = m.iter().filter(|v| **v == f64::NEG_INFINITY).count();
            let rate = rejections as f64 / reps.max(1) as f64;
            PointSummary {
                label: label.clone(),
                location: location.clone(),
                null: *null,
                rejections,
                replications: reps,
                errors,
                rate,
                std_error: (rate * (1.0 - rate) / reps.max(1) as f64).sqrt(),
            }
        })
        .collect::<Vec<_>>();
    let null: Vec<usize> = labels.iter().enumerate().filter(|(_, l)| l.2).map(|(i, _)| i).collect();
    let alt: Vec<usize> = labels.iter().enumerate().filter(|(_, l)| !l.2).map(|(i, _)| i).collect();
    TestSummary { test, points, metrics: compute_metrics(margins, &null, &alt, alpha) }
}

pub fn simulate_fullvector(design: &FullVectorDesign, variants: &[Variant], settings: &Settings) -> Result<MonteCarloReport> {
    let tests: Vec<(Variant, f64)> = variants.iter().map(|&v| (v, design.alpha)).collect();
    let margins = simulate_fullvector_margins(design, &tests, settings)?;
    let labels: Vec<(String, Vec<f64>, bool)> = design
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| (p.label.clone().unwrap_or_else(|| format!("point{i}")), p.mu.clone(), p.is_null()))
        .collect();
    let results = variants
        .iter()
        .zip(&margins)
        .map(|(v, m)| summarize(variant_name(*v).to_string(), &labels, m, design.alpha))
        .collect();
    Ok(MonteCarloReport {
        design: format!("fullvector(p={}, n={})", design.p, design.n),
        seed: design.seed,
        replications: design.replications,
        alpha: design.alpha,
        results,
        warnings: Vec::new(),
        timings: None,
    })
}

fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::Cc => "cc",
        Variant::Rcc => "rcc",
    }
}

/// Tests available in the interval-regression study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubvectorTest {
    Scc,
    Srcc,
    ProjU,
    ProjC,
}

impl SubvectorTest {
    pub fn name(self) -> &'static str {
        match self {
            SubvectorTest::Scc => "scc",
            SubvectorTest::Srcc => "srcc",
            SubvectorTest::ProjU => "proj-u",
            SubvectorTest::ProjC => "proj-c",
        }
    }
}

/// Options of the interval-regression study beyond the design itself.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalStudy {
    pub thetas: Vec<f64>,
    pub alpha: f64,
    /// θ values inside this closed interval are treated as null points.
    pub null_interval: Option<(f64, f64)>,
    pub projection: ProjectionOptions,
}

impl Default for IntervalStudy {
    fn default() -> Self {
        Self { thetas: vec![-1.0], alpha: 0.05, null_interval: None, projection: ProjectionOptions::default() }
    }
}

/// Margins for one replication of the interval-regression study:
/// `out[test][theta]`.
pub fn interval_replication(
    design: &IntervalRegressionDesign,
    study: &IntervalStudy,
    tests: &[SubvectorTest],
    rep: usize,
    settings: &Settings,
) -> Result<(Vec<Vec<f64>>, Vec<String>)> {
    let mut rng = replication_rng(design.seed, 0, rep);
    let sample = design.generate(&mut rng)?;
    let neighbors = sample.nearest_neighbors(design.seed.wrapping_add(rep as u64))?;
    let cache = VertexCache::new();
    let k = sample.n_moments();
    let spec = PolyhedralSpec::new(Matrix::identity(k, k), Vector::zeros(k))?;
    let mut out = vec![vec![f64::NEG_INFINITY; study.thetas.len()]; tests.len()];
    for (ti, &theta) in study.thetas.iter().enumerate() {
        let needs_sub = tests.iter().any(|t| matches!(t, SubvectorTest::Scc | SubvectorTest::Srcc));
        let problem = if needs_sub { Some(sample.subvector_problem(theta, &neighbors, study.alpha)) } else { None };
        for (si, test) in tests.iter().enumerate() {
            let margin = match test {
                SubvectorTest::Scc | SubvectorTest::Srcc => {
                    let variant = if *test == SubvectorTest::Scc { Variant::Cc } else { Variant::Rcc };
                    problem
                        .as_ref()
                        .expect("subvector problem built above")
                        .clone()
                        .and_then(|p| p.run_test(variant, settings, Some(&cache)))
                        .map(|o| o.statistic - o.critical_value)
                }
                SubvectorTest::ProjU | SubvectorTest::ProjC => {
                    let variance = if *test == SubvectorTest::ProjU {
                        Ok(ProjectionVariance::Unconditional)
                    } else {
                        cond_var_from_neighbors(&sample.moments(theta), &neighbors).map(ProjectionVariance::Fixed)
                    };
                    let options = ProjectionOptions {
                        seed: design.seed ^ ((rep as u64) << 20) ^ ti as u64,
                        ..study.projection
                    };
                    variance.and_then(|v| {
                        let mut moments = sample.nuisance_moments(theta)?;
                        projection_test(&mut moments, &spec, &v, &sample.nuisance_start(theta), study.alpha, &options, settings)
                    })
                    .map(|d| if d.reject { d.min_value.max(f64::MIN_POSITIVE) } else { d.min_value.min(0.0) })
                }
            };
            match margin {
                Ok(m) => out[si][ti] = m,
                Err(e) => log::debug!("replication {rep}, θ = {theta}, {}: {e}", test.name()),
            }
        }
    }
    Ok((out, sample.warnings))
}

pub fn simulate_interval_regression(
    design: &IntervalRegressionDesign,
    study: &IntervalStudy,
    tests: &[SubvectorTest],
    settings: &Settings,
) -> Result<MonteCarloReport> {
    design.validate()?;
    crate::fullvector::validate_alpha(study.alpha)?;
    if study.thetas.is_empty() {
        return Err(Error::Argument("at least one θ is required".into()));
    }
    let reps: Vec<Result<(Vec<Vec<f64>>, Vec<String>)>> = (0..design.replications)
        .into_par_iter()
        .map(|rep| interval_replication(design, study, tests, rep, settings))
        .collect();
    let mut margins = vec![vec![Vec::with_capacity(design.replications); study.thetas.len()]; tests.len()];
    let mut warnings = Vec::new();
    let mut failed = 0;
    for r in reps {
        match r {
            Ok((m, w)) => {
                for (si, row) in m.into_iter().enumerate() {
                    for (ti, v) in row.into_iter().enumerate() {
                        margins[si][ti].push(v);
                    }
                }
                for msg in w {
                    if !warnings.contains(&msg) {
                        warnings.push(msg);
                    }
                }
            }
            Err(e) => {
                failed += 1;
                for test in margins.iter_mut() {
                    for col in test.iter_mut() {
                        col.push(f64::NEG_INFINITY);
                    }
                }
                log::warn!("replication failed: {e}");
            }
        }
    }
    if failed > 0 {
        warnings.push(format!("{failed} replications could not be generated"));
    }
    let labels: Vec<(String, Vec<f64>, bool)> = study
        .thetas
        .iter()
        .map(|&t| {
            let null = study.null_interval.is_some_and(|(lo, hi)| t >= lo && t <= hi);
            (format!("theta={t}"), vec![t], null)
        })
        .collect();
    let results = tests.iter().zip(&margins).map(|(t, m)| summarize(t.name().to_string(), &labels, m, study.alpha)).collect();
    Ok(MonteCarloReport {
        design: format!("interval_regression(d_c={}, n={})", design.d_c, design.n),
        seed: design.seed,
        replications: design.replications,
        alpha: study.alpha,
        results,
        warnings,
        timings: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omega_checks() {
        assert_eq!(OmegaSpec::Zero.build(3).unwrap(), Matrix::identity(3, 3));
        assert!(OmegaSpec::Equicorrelated { rho: 0.5 }.build(4).is_ok());
        assert!(OmegaSpec::Equicorrelated { rho: -0.5 }.build(4).is_err());
        let t = OmegaSpec::Toeplitz { rho: 0.5 }.build(3).unwrap();
        assert_eq!(t[(0, 2)], 0.25);
        assert!(OmegaSpec::Matrix { rows: vec![vec![1.0, 2.0], vec![2.0, 1.0]] }.build(2).is_err());
    }

    #[test]
    fn seeded_reports_repeat() {
        let design = FullVectorDesign::new(2, OmegaSpec::Zero, vec![DesignPoint { mu: vec![0.0, 0.0], null: None, label: None }], 500, 7);
        let a = simulate_fullvector(&design, &[Variant::Cc, Variant::Rcc], &Settings::default()).unwrap();
        let b = simulate_fullvector(&design, &[Variant::Cc, Variant::Rcc], &Settings::default()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a.results[0].points[0].null);
    }
}
