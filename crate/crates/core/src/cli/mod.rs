//! The `momineq` command line.
//!
//! Every subcommand reads a JSON config (`--config`) and, where moments are
//! needed, a CSV file with a header row (`--data` or the config's `data`).
//! Results are JSON; tables go next to the JSON output with a `.csv`
//! extension. Exit status is 0 on success, 1 for usage errors and 2 for
//! numerical failures.

mod config;
mod data;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

pub use config::{
    load_config, MatrixSource, ModelBlock, MomentSummary, RunConfig, StudyBlock, VarianceBlock, VariantArg,
    VectorSource,
};
pub use data::{read_matrix_file, DataTable};

use crate::error::Error;
use crate::fullvector::{column_means, sample_variance, Diagnostics, FullVectorProblem, TestOutcome, Variant};
use crate::inference::{
    identified_set_interval_regression, invert_test, projection_test, IntervalRegressionDesign,
    IntervalRegressionSample, ProjectionOptions, ProjectionVariance,
};
use crate::linalg::{matrix_to_rows, Matrix, PolyhedralSpec, Settings, Vector};
use crate::montecarlo::{replication_rng, simulate_fullvector, simulate_interval_regression, IntervalStudy};
use crate::subvector::{
    cond_var_discrete, cond_var_from_neighbors, cond_var_nearest_neighbor, SubvectorProblem, VertexCache,
};
use crate::VERSION;

#[derive(Debug, Parser)]
#[command(name = "momineq", version = VERSION, about = "Conditional chi-squared tests for moment inequalities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// CSV data with a header row; overrides the config's `data`.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Result JSON path; tables are written next to it as `.csv`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub variant: Option<VariantArg>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for grid and Monte Carlo runs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Check the config and data shapes, then stop.
    #[arg(long, global = true)]
    pub validate_only: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Test `A E[m] <= b`.
    TestFull,
    /// Test `B E[m|Z] <= C δ + d` for some `δ`.
    TestSub,
    /// Confidence set by test inversion over a grid.
    Confset,
    /// Identified set of the interval-regression design.
    IdentifiedSet,
    /// Monte Carlo study of the full-vector tests.
    McFull,
    /// Monte Carlo study of the interval-regression subvector tests.
    McSub,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::TestFull => "test-full",
            Command::TestSub => "test-sub",
            Command::Confset => "confset",
            Command::IdentifiedSet => "identified-set",
            Command::McFull => "mc-full",
            Command::McSub => "mc-sub",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e)
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.threads {
        Some(0) => usage("--threads must be positive"),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => usage(format!("cannot start {t} threads: {e}")),
        },
        None => execute(&cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            report_error(&e);
            e.exit_code()
        }
    }
}

fn report_error(e: &CliError) {
    match e {
        CliError::Usage(msg) => eprintln!("error: {msg}"),
        CliError::Numerical(err) => {
            let mut body = json!({ "kind": error_kind(err), "message": err.to_string() });
            match err {
                Error::NotPositiveDefinite { pivot, value } => {
                    body["pivot"] = json!(pivot);
                    body["value"] = json!(value);
                }
                Error::BudgetExceeded { candidates, budget } => {
                    body["candidates"] = json!(candidates.to_string());
                    body["budget"] = json!(budget.to_string());
                }
                Error::Lp { index, .. } => body["lp_index"] = json!(index),
                _ => {}
            }
            eprintln!("{}", json!({ "error": body }));
        }
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Argument(_) => "argument",
        Error::Dimension(_) => "dimension",
        Error::NotPositiveDefinite { .. } => "not_positive_definite",
        Error::Infeasible(_) => "infeasible",
        Error::DegeneratePivot(_) => "degenerate_pivot",
        Error::BudgetExceeded { .. } => "budget_exceeded",
        Error::Lp { .. } => "lp",
        Error::Convergence(_) => "convergence",
        Error::Invariant(_) => "invariant",
    }
}

/// Resolved inputs shared by every subcommand.
struct Context<'a> {
    cli: &'a Cli,
    cfg: RunConfig,
    /// Directory that relative paths in the config are resolved against.
    base: PathBuf,
    settings: Settings,
    alpha: f64,
    seed: u64,
}

impl Context<'_> {
    fn data_path(&self) -> Option<PathBuf> {
        self.cli.data.clone().or_else(|| self.cfg.data.as_ref().map(|p| self.base.join(p)))
    }

    fn out_path(&self) -> Option<PathBuf> {
        self.cli.out.clone().or_else(|| self.cfg.output.as_ref().map(|p| self.base.join(p)))
    }

    fn variant_arg(&self) -> Option<VariantArg> {
        self.cli.variant.or(self.cfg.variant)
    }

    /// Critical-value variant for the single-test subcommands.
    fn variant(&self, default: VariantArg) -> CliResult<(VariantArg, Variant)> {
        let arg = self.variant_arg().unwrap_or(default);
        match arg.variant() {
            Some(v) => Ok((arg, v)),
            None => usage(format!("variant {} is not available for this subcommand", arg.name())),
        }
    }

    /// Tests for the Monte Carlo subcommands: the flag, else the config's
    /// list, else `default`.
    fn tests(&self, default: &[VariantArg]) -> Vec<VariantArg> {
        match self.cli.variant {
            Some(v) => vec![v],
            None => self.cfg.tests.clone().unwrap_or_else(|| default.to_vec()),
        }
    }

    fn seed_override(&self) -> Option<u64> {
        self.cli.seed.or(self.cfg.seed)
    }

    fn echo(&self, name: &str) -> RunConfig {
        RunConfig {
            subcommand: Some(name.to_string()),
            alpha: Some(self.alpha),
            seed: Some(self.seed),
            settings: Some(self.settings),
            variant: self.variant_arg(),
            ..Default::default()
        }
    }

    fn stamp(&self, mut value: Value, echo: RunConfig) -> CliResult<Value> {
        let obj = value
            .as_object_mut()
            .ok_or_else(|| CliError::Numerical(Error::Invariant("result is not a JSON object".into())))?;
        obj.insert("seed".into(), json!(echo.seed.unwrap_or(self.seed)));
        obj.insert("version".into(), json!(VERSION));
        obj.insert("settings".into(), to_json(&self.settings)?);
        obj.insert("config".into(), to_json(&echo)?);
        Ok(value)
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| CliError::Numerical(Error::Invariant(format!("serialisation failed: {e}"))))
}

/// A computed result: JSON plus an optional CSV table.
struct Output {
    json: Value,
    csv: Option<Vec<u8>>,
}

fn execute(cli: &Cli) -> CliResult<()> {
    let (cfg, base) = match &cli.config {
        Some(p) => {
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            (load_config(p)?, base)
        }
        None => (RunConfig::default(), PathBuf::new()),
    };
    let name = cli.command.name();
    if let Some(sub) = &cfg.subcommand {
        if sub != name {
            return usage(format!("config is for {sub:?} but {name:?} was requested"));
        }
    }
    let settings = cfg.settings.unwrap_or_default();
    settings.validate()?;
    let alpha = cli.alpha.or(cfg.alpha).unwrap_or(0.05);
    crate::fullvector::validate_alpha(alpha)?;
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let ctx = Context { cli, cfg, base, settings, alpha, seed };
    let output = match cli.command {
        Command::TestFull => test_full(&ctx)?,
        Command::TestSub => test_sub(&ctx)?,
        Command::Confset => confset(&ctx)?,
        Command::IdentifiedSet => identified_set(&ctx)?,
        Command::McFull => mc_full(&ctx)?,
        Command::McSub => mc_sub(&ctx)?,
    };
    if cli.validate_only {
        let mut stdout = std::io::stdout().lock();
        return writeln!(stdout, "{}", pretty(&output.json)).map_err(|e| CliError::Usage(e.to_string()));
    }
    write_output(&ctx, output)
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON values always serialise")
}

fn write_output(ctx: &Context, output: Output) -> CliResult<()> {
    let text = pretty(&output.json) + "\n";
    match ctx.out_path() {
        Some(path) => {
            std::fs::write(&path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
            if let Some(csv) = output.csv {
                let csv_path = path.with_extension("csv");
                std::fs::write(&csv_path, csv)
                    .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", csv_path.display())))?;
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| CliError::Usage(e.to_string()))?;
        }
    }
    Ok(())
}

fn validation(name: &str, details: Value) -> Output {
    let mut json = json!({ "valid": true, "subcommand": name, "version": VERSION });
    if let (Some(obj), Value::Object(extra)) = (json.as_object_mut(), details) {
        obj.extend(extra);
    }
    Output { json, csv: None }
}

/// Moment mean, variance of `√n m̄` and sample size.
struct Moments {
    mean: Vector,
    variance: Matrix,
    n: usize,
}

impl Moments {
    fn summary(&self) -> MomentSummary {
        MomentSummary::new(&self.mean, &self.variance, self.n)
    }
}

fn load_moments(ctx: &Context) -> CliResult<Moments> {
    if let Some(path) = ctx.data_path() {
        let table = DataTable::read(&path)?;
        let cols = ctx.cfg.moment_columns(&table)?;
        let data = table.numeric(&cols)?;
        let variance = match ctx.cfg.variance.as_ref().unwrap_or(&VarianceBlock::Sample) {
            VarianceBlock::Sample => sample_variance(&data)?,
            VarianceBlock::Discrete { column } => cond_var_discrete(&data, &table.strings(table.column_index(column)?))?,
            VarianceBlock::NearestNeighbor { columns, seed } => {
                let idx = columns.iter().map(|c| table.column_index(c)).collect::<CliResult<Vec<_>>>()?;
                cond_var_nearest_neighbor(&data, &table.numeric(&idx)?, seed.unwrap_or(ctx.seed))?
            }
            VarianceBlock::Provided { variance } => variance.load(&ctx.base)?,
        };
        return Ok(Moments { mean: column_means(&data), variance, n: data.nrows() });
    }
    match &ctx.cfg.moments {
        Some(m) => {
            if ctx.cfg.variance.is_some() {
                return usage("a variance block needs data; with a moments block give the variance there");
            }
            Ok(Moments { mean: m.mean(), variance: m.variance()?, n: m.n })
        }
        None => usage("either data (CSV) or a moments block is required"),
    }
}

fn outcome_output(ctx: &Context, outcome: &TestOutcome, echo: RunConfig) -> CliResult<Output> {
    let mut value = to_json(outcome)?;
    value["alpha"] = json!(ctx.alpha);
    Ok(Output { json: ctx.stamp(value, echo)?, csv: None })
}

fn test_full(ctx: &Context) -> CliResult<Output> {
    let Some(ModelBlock::Full { a, b }) = &ctx.cfg.model else {
        return usage("test-full needs a model block of kind \"full\"");
    };
    let spec = PolyhedralSpec::new(a.load(&ctx.base)?, b.load(&ctx.base)?)?;
    let (_, variant) = ctx.variant(VariantArg::Rcc)?;
    let m = load_moments(ctx)?;
    let summary = m.summary();
    let problem = FullVectorProblem::new(m.mean, m.variance, m.n, spec, ctx.alpha)?;
    if ctx.cli.validate_only {
        return Ok(validation(
            "test-full",
            json!({ "inequalities": problem.spec.n_constraints(), "moments": problem.spec.dim(), "n": problem.n }),
        ));
    }
    let outcome = problem.run_test(variant, &ctx.settings)?;
    let echo = RunConfig {
        model: Some(ModelBlock::Full {
            a: MatrixSource::Rows(matrix_to_rows(&problem.spec.a)),
            b: VectorSource::Values(problem.spec.b.as_slice().to_vec()),
        }),
        moments: Some(summary),
        ..ctx.echo("test-full")
    };
    outcome_output(ctx, &outcome, echo)
}

fn test_sub(ctx: &Context) -> CliResult<Output> {
    let Some(ModelBlock::Sub { b, c, d }) = &ctx.cfg.model else {
        return usage("test-sub needs a model block of kind \"sub\"");
    };
    let (b, c, d) = (b.load(&ctx.base)?, c.load(&ctx.base)?, d.load(&ctx.base)?);
    let (_, variant) = ctx.variant(VariantArg::Srcc)?;
    let m = load_moments(ctx)?;
    let summary = m.summary();
    let problem = SubvectorProblem::new(b, c, d, m.mean, m.variance, m.n, ctx.alpha)?;
    if ctx.cli.validate_only {
        return Ok(validation(
            "test-sub",
            json!({ "inequalities": problem.k(), "moments": problem.b.ncols(), "nuisance": problem.c.ncols(), "n": problem.n }),
        ));
    }
    let outcome = problem.run_test(variant, &ctx.settings, None)?;
    let echo = RunConfig {
        model: Some(ModelBlock::Sub {
            b: MatrixSource::Rows(matrix_to_rows(&problem.b)),
            c: MatrixSource::Rows(matrix_to_rows(&problem.c)),
            d: VectorSource::Values(problem.d.as_slice().to_vec()),
        }),
        moments: Some(summary),
        ..ctx.echo("test-sub")
    };
    outcome_output(ctx, &outcome, echo)
}

fn confset(ctx: &Context) -> CliResult<Output> {
    let Some(grid) = &ctx.cfg.grid else {
        return usage("confset needs a grid");
    };
    let points = grid.points()?;
    if points.is_empty() {
        return usage("the grid is empty");
    }
    let (report, echo) = match &ctx.cfg.model {
        Some(ModelBlock::Linear { g, a, b }) => {
            let g = g.load(&ctx.base)?;
            let spec = PolyhedralSpec::new(a.load(&ctx.base)?, b.load(&ctx.base)?)?;
            let (_, variant) = ctx.variant(VariantArg::Rcc)?;
            let m = load_moments(ctx)?;
            if g.nrows() != m.mean.len() {
                return usage(format!("G has {} rows but there are {} moments", g.nrows(), m.mean.len()));
            }
            if let Some(bad) = points.iter().find(|p| p.len() != g.ncols()) {
                return usage(format!("grid points have {} coordinates, G has {} columns", bad.len(), g.ncols()));
            }
            // Shape check at the first point; the variance does not depend on θ.
            FullVectorProblem::new(m.mean.clone(), m.variance.clone(), m.n, spec.clone(), ctx.alpha)?;
            if ctx.cli.validate_only {
                return Ok(validation("confset", json!({ "points": points.len(), "moments": m.mean.len() })));
            }
            let report = invert_test(&points, ctx.alpha, |theta| {
                let mean = &m.mean - &g * Vector::from_column_slice(theta);
                FullVectorProblem::new(mean, m.variance.clone(), m.n, spec.clone(), ctx.alpha)?
                    .run_test(variant, &ctx.settings)
            });
            let echo = RunConfig {
                model: Some(ModelBlock::Linear {
                    g: MatrixSource::Rows(matrix_to_rows(&g)),
                    a: MatrixSource::Rows(matrix_to_rows(&spec.a)),
                    b: VectorSource::Values(spec.b.as_slice().to_vec()),
                }),
                moments: Some(m.summary()),
                grid: Some(grid.clone()),
                ..ctx.echo("confset")
            };
            (report, echo)
        }
        Some(ModelBlock::IntervalRegression) => {
            if let Some(bad) = points.iter().find(|p| p.len() != 1) {
                return usage(format!("the interval-regression grid is one-dimensional, got a point with {}", bad.len()));
            }
            let arg = ctx.variant_arg().unwrap_or(VariantArg::Srcc);
            let (sample, design) = interval_sample(ctx)?;
            let neighbors = sample.nearest_neighbors(ctx.seed)?;
            if ctx.cli.validate_only {
                return Ok(validation(
                    "confset",
                    json!({ "points": points.len(), "moments": sample.n_moments(), "n": sample.n() }),
                ));
            }
            let cache = VertexCache::new();
            let report = invert_test(&points, ctx.alpha, |theta| match arg.variant() {
                Some(variant) => sample
                    .subvector_problem(theta[0], &neighbors, ctx.alpha)?
                    .run_test(variant, &ctx.settings, Some(&cache)),
                None => projection_outcome(ctx, &sample, &neighbors, theta[0], arg),
            });
            let echo = RunConfig {
                data: ctx.data_path().map(|p| std::path::absolute(&p).unwrap_or(p)),
                model: Some(ModelBlock::IntervalRegression),
                interval: design,
                grid: Some(grid.clone()),
                ..ctx.echo("confset")
            };
            (report, echo)
        }
        _ => return usage("confset needs a model block of kind \"linear\" or \"interval_regression\""),
    };
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    let mut value = to_json(&report)?;
    value["alpha"] = json!(ctx.alpha);
    Ok(Output { json: ctx.stamp(value, echo)?, csv: Some(csv) })
}

/// Interval-regression sample from the CSV data, or simulated from the
/// config's design. The design is returned when it was used.
fn interval_sample(ctx: &Context) -> CliResult<(IntervalRegressionSample, Option<IntervalRegressionDesign>)> {
    if let Some(path) = ctx.data_path() {
        let table = DataTable::read(&path)?;
        let column = |name: &str| -> CliResult<Vector> {
            let m = table.numeric(&[table.column_index(name)?])?;
            Ok(Vector::from_column_slice(m.as_slice()))
        };
        let z_cols: Vec<usize> = (0..table.headers.len()).filter(|&i| table.headers[i].starts_with("z_")).collect();
        if z_cols.is_empty() {
            return usage(format!("{}: no covariate columns (names starting with \"z_\")", path.display()));
        }
        let sample = IntervalRegressionSample::new(column("y_upper")?, column("y_lower")?, column("x")?, table.numeric(&z_cols)?)?;
        return Ok((sample, None));
    }
    let mut design = ctx.cfg.interval.clone().unwrap_or_default();
    design.seed = ctx.seed;
    design.validate()?;
    let sample = design.generate(&mut replication_rng(design.seed, 0, 0))?;
    Ok((sample, Some(design)))
}

/// Projection test at one θ, reported as a test outcome whose statistic is
/// `min_δ T(δ) - cv(δ)` against a critical value of zero.
fn projection_outcome(
    ctx: &Context,
    sample: &IntervalRegressionSample,
    neighbors: &[usize],
    theta: f64,
    arg: VariantArg,
) -> crate::Result<TestOutcome> {
    let k = sample.n_moments();
    let spec = PolyhedralSpec::new(Matrix::identity(k, k), Vector::zeros(k))?;
    let variance = if arg == VariantArg::ProjU {
        ProjectionVariance::Unconditional
    } else {
        ProjectionVariance::Fixed(cond_var_from_neighbors(&sample.moments(theta), neighbors)?)
    };
    let options = ProjectionOptions { seed: ctx.seed, ..ProjectionOptions::default() };
    let mut moments = sample.nuisance_moments(theta)?;
    let d = projection_test(&mut moments, &spec, &variance, &sample.nuisance_start(theta), ctx.alpha, &options, &ctx.settings)?;
    Ok(TestOutcome {
        variant: Variant::Rcc,
        statistic: d.min_value,
        restricted_estimate: Vec::new(),
        nuisance_estimate: Some(d.best_nuisance),
        active_set: Vec::new(),
        r_hat: 0,
        tau_hat: None,
        beta_hat: ctx.alpha,
        critical_value: 0.0,
        reject: d.reject,
        diagnostics: Diagnostics {
            notes: vec![
                format!("{}: statistic is the smallest T - cv found over the nuisance parameter", arg.name()),
                format!("{} starts, {} stopped before converging", d.starts_used, d.nonconverged),
            ],
            ..Diagnostics::default()
        },
    })
}

fn identified_set(ctx: &Context) -> CliResult<Output> {
    let mut design = ctx.cfg.interval.clone().unwrap_or_default();
    if let Some(s) = ctx.seed_override() {
        design.seed = s;
    }
    design.validate()?;
    let draws = ctx.cfg.draws.unwrap_or(1_000_000);
    if draws == 0 {
        return usage("draws must be positive");
    }
    if ctx.cli.validate_only {
        return Ok(validation("identified-set", json!({ "draws": draws, "d_c": design.d_c })));
    }
    let set = identified_set_interval_regression(&design, draws, design.seed)?;
    let mut value = to_json(&set)?;
    value["draws"] = json!(draws);
    let echo = RunConfig { interval: Some(design), draws: Some(draws), ..ctx.echo("identified-set") };
    Ok(Output { json: ctx.stamp(value, echo)?, csv: None })
}

fn mc_full(ctx: &Context) -> CliResult<Output> {
    let Some(design) = &ctx.cfg.design else {
        return usage("mc-full needs a design block");
    };
    let mut design = design.clone();
    if let Some(s) = ctx.seed_override() {
        design.seed = s;
    }
    if let Some(a) = ctx.cli.alpha.or(ctx.cfg.alpha) {
        design.alpha = a;
    }
    let tests = ctx.tests(&[VariantArg::Cc, VariantArg::Rcc]);
    let variants = tests
        .iter()
        .map(|t| t.variant())
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| CliError::Usage("mc-full runs cc and rcc only".into()))?;
    design.validate()?;
    if ctx.cli.validate_only {
        return Ok(validation(
            "mc-full",
            json!({ "points": design.points.len(), "replications": design.replications, "p": design.p }),
        ));
    }
    let report = simulate_fullvector(&design, &variants, &ctx.settings)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    let echo = RunConfig {
        design: Some(design.clone()),
        tests: Some(tests),
        alpha: Some(design.alpha),
        seed: Some(design.seed),
        ..ctx.echo("mc-full")
    };
    Ok(Output { json: ctx.stamp(to_json(&report)?, echo)?, csv: Some(csv) })
}

fn mc_sub(ctx: &Context) -> CliResult<Output> {
    let Some(study) = &ctx.cfg.study else {
        return usage("mc-sub needs a study block with the θ values");
    };
    let mut design = ctx.cfg.interval.clone().unwrap_or_default();
    if let Some(s) = ctx.seed_override() {
        design.seed = s;
    }
    design.validate()?;
    let args = ctx.tests(&[VariantArg::Scc, VariantArg::Srcc, VariantArg::ProjU, VariantArg::ProjC]);
    let tests: Vec<_> = args.iter().map(|a| a.subvector_test()).collect();
    let study_opts = IntervalStudy {
        thetas: study.thetas.clone(),
        alpha: ctx.alpha,
        null_interval: study.null_interval,
        projection: ProjectionOptions { starts: study.starts, seed: design.seed, ..ProjectionOptions::default() },
    };
    if study.starts == 0 {
        return usage("study.starts must be positive");
    }
    if ctx.cli.validate_only {
        return Ok(validation(
            "mc-sub",
            json!({ "thetas": study.thetas.len(), "replications": design.replications, "n": design.n }),
        ));
    }
    let report = simulate_interval_regression(&design, &study_opts, &tests, &ctx.settings)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    let echo = RunConfig {
        interval: Some(design.clone()),
        study: Some(study.clone()),
        tests: Some(args),
        seed: Some(design.seed),
        ..ctx.echo("mc-sub")
    };
    Ok(Output { json: ctx.stamp(to_json(&report)?, echo)?, csv: Some(csv) })
}
