//! JSON run configuration.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use super::data::{read_matrix_file, DataTable};
use super::CliError;
use crate::fullvector::Variant;
use crate::inference::{GridSpec, IntervalRegressionDesign};
use crate::linalg::{matrix_from_rows, matrix_to_rows, Matrix, Settings, Vector};
use crate::montecarlo::{FullVectorDesign, SubvectorTest};

/// Test selected on the command line or in the config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum VariantArg {
    Cc,
    Rcc,
    Scc,
    Srcc,
    ProjU,
    ProjC,
}

impl VariantArg {
    /// Critical-value variant for the non-projection tests; the subvector
    /// names map onto the same two variants.
    pub fn variant(self) -> Option<Variant> {
        match self {
            VariantArg::Cc | VariantArg::Scc => Some(Variant::Cc),
            VariantArg::Rcc | VariantArg::Srcc => Some(Variant::Rcc),
            VariantArg::ProjU | VariantArg::ProjC => None,
        }
    }

    pub fn subvector_test(self) -> SubvectorTest {
        match self {
            VariantArg::Cc | VariantArg::Scc => SubvectorTest::Scc,
            VariantArg::Rcc | VariantArg::Srcc => SubvectorTest::Srcc,
            VariantArg::ProjU => SubvectorTest::ProjU,
            VariantArg::ProjC => SubvectorTest::ProjC,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VariantArg::Cc => "cc",
            VariantArg::Rcc => "rcc",
            VariantArg::Scc => "scc",
            VariantArg::Srcc => "srcc",
            VariantArg::ProjU => "proj-u",
            VariantArg::ProjC => "proj-c",
        }
    }
}

/// A matrix given inline as rows or as a header-less CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Rows(Vec<Vec<f64>>),
    File(PathBuf),
}

impl MatrixSource {
    pub fn load(&self, base: &Path) -> Result<Matrix, CliError> {
        match self {
            MatrixSource::Rows(rows) => matrix_from_rows(rows).map_err(|e| CliError::Usage(e.to_string())),
            MatrixSource::File(p) => read_matrix_file(&base.join(p)),
        }
    }
}

/// A vector given inline or as a header-less CSV file (one row or one column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSource {
    Values(Vec<f64>),
    File(PathBuf),
}

impl VectorSource {
    pub fn load(&self, base: &Path) -> Result<Vector, CliError> {
        match self {
            VectorSource::Values(v) => Ok(Vector::from_column_slice(v)),
            VectorSource::File(p) => {
                let m = read_matrix_file(&base.join(p))?;
                if m.nrows() != 1 && m.ncols() != 1 {
                    return Err(CliError::Usage(format!(
                        "{}: expected a single row or column, found {}x{}",
                        p.display(),
                        m.nrows(),
                        m.ncols()
                    )));
                }
                Ok(Vector::from_iterator(m.len(), m.transpose().iter().copied()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelBlock {
    /// `A E[m] <= b`.
    Full { a: MatrixSource, b: VectorSource },
    /// `B E[m | Z] <= C δ + d` for some `δ`.
    Sub { b: MatrixSource, c: MatrixSource, d: VectorSource },
    /// `A E[w - G θ] <= b`, for confidence sets over `θ`.
    Linear { g: MatrixSource, a: MatrixSource, b: VectorSource },
    /// The built-in interval-regression model; the data come from the CSV
    /// file (columns `y_lower`, `y_upper`, `x`, `z_*`) or are simulated
    /// from the `interval` block.
    IntervalRegression,
}

/// Sufficient statistics in place of raw data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentSummary {
    pub mean: Vec<f64>,
    /// Variance of `√n m̄`.
    pub variance: Vec<Vec<f64>>,
    pub n: usize,
}

impl MomentSummary {
    pub fn new(mean: &Vector, variance: &Matrix, n: usize) -> Self {
        Self { mean: mean.as_slice().to_vec(), variance: matrix_to_rows(variance), n }
    }

    pub fn mean(&self) -> Vector {
        Vector::from_column_slice(&self.mean)
    }

    pub fn variance(&self) -> Result<Matrix, CliError> {
        matrix_from_rows(&self.variance).map_err(|e| CliError::Usage(format!("moments.variance: {e}")))
    }
}

/// How the variance of the moments is estimated from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum VarianceBlock {
    /// Unconditional sample variance.
    Sample,
    /// Within-category variances, categories taken from one CSV column.
    Discrete { column: String },
    /// Nearest-neighbour matching on the listed CSV columns.
    NearestNeighbor {
        columns: Vec<String>,
        #[serde(default)]
        seed: Option<u64>,
    },
    Provided { variance: MatrixSource },
}

impl VarianceBlock {
    /// CSV columns consumed by the estimator rather than being moments.
    pub fn used_columns(&self) -> Vec<String> {
        match self {
            VarianceBlock::Discrete { column } => vec![column.clone()],
            VarianceBlock::NearestNeighbor { columns, .. } => columns.clone(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyBlock {
    pub thetas: Vec<f64>,
    /// θ values in this closed interval count as null points.
    #[serde(default)]
    pub null_interval: Option<(f64, f64)>,
    /// Starting points of each projection search.
    #[serde(default = "default_starts")]
    pub starts: usize,
}

fn default_starts() -> usize {
    5
}

/// Everything a run needs besides the command-line flags. Unknown keys are
/// rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcommand: Option<String>,
    /// CSV data file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Moment columns of the data; defaults to every column not used
    /// by the variance estimator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<MomentSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<VariantArg>,
    /// Tests compared by the Monte Carlo subcommands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tests: Option<Vec<VariantArg>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<VarianceBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settings: Option<Settings>,
    /// Result path, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Gaussian design for `mc-full`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<FullVectorDesign>,
    /// Interval-regression design for `identified-set`, `mc-sub` and
    /// simulated `confset` runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<IntervalRegressionDesign>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyBlock>,
    /// Error draws for `identified-set`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
}

/// Parses a config file. A result file written by this tool is accepted
/// too: its embedded `config` block is used.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let json_error = |e: serde_json::Error| {
        CliError::Usage(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column()))
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(json_error)?;
    let value = match value {
        serde_json::Value::Object(mut map) if map.contains_key("version") && map.contains_key("config") => {
            map.remove("config").expect("checked above")
        }
        other => other,
    };
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

impl RunConfig {
    /// Moment columns: explicit, or every column not claimed by the
    /// variance estimator.
    pub fn moment_columns(&self, table: &DataTable) -> Result<Vec<usize>, CliError> {
        let names: Vec<String> = match &self.columns {
            Some(c) => c.clone(),
            None => {
                let used = self.variance.as_ref().map(|v| v.used_columns()).unwrap_or_default();
                table.headers.iter().filter(|h| !used.contains(h)).cloned().collect()
            }
        };
        if names.is_empty() {
            return Err(CliError::Usage("no moment columns in the data".into()));
        }
        names.iter().map(|n| table.column_index(n)).collect()
    }
}
