//! Confidence sets by test inversion, projection-test baselines and the
//! interval-regression model.

mod interval;
mod neldermead;
mod projection;

pub use interval::{
    identified_set_interval_regression, IdentifiedSet, IntervalRegressionDesign, IntervalRegressionSample,
};
pub use neldermead::{nelder_mead, NelderMeadOptions, NelderMeadResult};
pub use projection::{projection_test, LinearNuisanceMoments, ProjectionDecision, ProjectionOptions, ProjectionVariance};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fullvector::TestOutcome;

/// One coordinate of a parameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridAxis {
    Range { lower: f64, upper: f64, count: usize },
    Points { points: Vec<f64> },
}

impl GridAxis {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            GridAxis::Range { lower, upper, count } => {
                if !(lower.is_finite() && upper.is_finite() && lower <= upper) {
                    return Err(Error::Argument(format!("grid bounds [{lower}, {upper}] are not ordered")));
                }
                if *count == 0 {
                    return Err(Error::Argument("grid needs at least one point".into()));
                }
                if *count == 1 {
                    return Ok(vec![*lower]);
                }
                let step = (upper - lower) / (*count - 1) as f64;
                Ok((0..*count).map(|i| if i + 1 == *count { *upper } else { lower + step * i as f64 }).collect())
            }
            GridAxis::Points { points } => {
                if points.is_empty() {
                    return Err(Error::Argument("grid needs at least one point".into()));
                }
                crate::linalg::ensure_finite("grid points", points)?;
                Ok(points.clone())
            }
        }
    }
}

/// Cartesian product of axes; the last axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GridSpec {
    pub axes: Vec<GridAxis>,
}

impl GridSpec {
    pub fn new(axes: Vec<GridAxis>) -> Self {
        Self { axes }
    }

    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        if self.axes.is_empty() {
            return Err(Error::Argument("grid has no axes".into()));
        }
        let mut out: Vec<Vec<f64>> = vec![Vec::new()];
        for axis in &self.axes {
            let values = axis.values()?;
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |&v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        Ok(out)
    }
}

/// Test result at one grid point; `outcome` is `None` when the test failed
/// there, with the reason in `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub theta: Vec<f64>,
    pub outcome: Option<TestOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl GridPoint {
    pub fn retained(&self) -> bool {
        matches!(&self.outcome, Some(o) if !o.reject)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSetReport {
    pub level: f64,
    pub points: Vec<GridPoint>,
    pub retained: Vec<Vec<f64>>,
    /// Grid points where the test could not be evaluated.
    pub indeterminate: Vec<Vec<f64>>,
}

impl ConfidenceSetReport {
    /// One row per grid point: θ coordinates, T, r̂, β̂, cv, reject, status.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let dims = self.points.first().map_or(0, |p| p.theta.len());
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..dims).map(|i| format!("theta_{i}")).collect();
        header.extend(["statistic", "r_hat", "beta_hat", "critical_value", "reject", "status"].map(String::from));
        out.write_record(&header).map_err(csv_error)?;
        for p in &self.points {
            let mut row: Vec<String> = p.theta.iter().map(|v| v.to_string()).collect();
            match &p.outcome {
                Some(o) => row.extend([
                    o.statistic.to_string(),
                    o.r_hat.to_string(),
                    o.beta_hat.to_string(),
                    o.critical_value.to_string(),
                    o.reject.to_string(),
                    "ok".to_string(),
                ]),
                None => {
                    row.extend(std::iter::repeat_n(String::new(), 5));
                    row.push(p.error.clone().unwrap_or_default());
                }
            }
            out.write_record(&row).map_err(csv_error)?;
        }
        out.flush().map_err(|e| Error::Argument(e.to_string()))?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Argument(format!("CSV output failed: {e}"))
}

/// Evaluate `test` at every grid point in parallel. Results keep grid order
/// and a failure at one point does not stop the others.
pub fn invert_test<F>(points: &[Vec<f64>], alpha: f64, test: F) -> ConfidenceSetReport
where
    F: Fn(&[f64]) -> Result<TestOutcome> + Sync,
{
    let results: Vec<GridPoint> = points
        .par_iter()
        .map(|theta| match test(theta) {
            Ok(o) => GridPoint { theta: theta.clone(), outcome: Some(o), error: None },
            Err(e) => {
                log::warn!("test failed at {theta:?}: {e}");
                GridPoint { theta: theta.clone(), outcome: None, error: Some(e.to_string()) }
            }
        })
        .collect();
    let retained = results.iter().filter(|p| p.retained()).map(|p| p.theta.clone()).collect();
    let indeterminate = results.iter().filter(|p| p.outcome.is_none()).map(|p| p.theta.clone()).collect();
    ConfidenceSetReport { level: 1.0 - alpha, points: results, retained, indeterminate }
}
