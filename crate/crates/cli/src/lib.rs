//! The `gamforge` command-line tool: fit models from CSV, save and load them
//! as versioned JSON, and write tidy tables, posterior draws, diagnostics and
//! SVG figures.
//!
//! Exit codes are part of the interface: 0 success, 1 usage or I/O problem,
//! 2 formula error, 3 data or model-file error, 4 fit failure, 5 sampling
//! failure.

pub mod render;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gamforge::diagnostics::{appraise_data, DiagnosticsError, QqMethod};
use gamforge::engine::{load_model, model_constant, model_edf, overview, save_model, ModelIoError};
use gamforge::family::FamilyError;
use gamforge::formula::FormulaError;
use gamforge::inspect::{
    add_confint, basis_functions, data_slice, evenly, fitted_values, penalty_matrices, smooth_estimates, InspectError,
    Scale, Spacing,
};
use gamforge::posterior::{
    fitted_samples, median_qi, posterior_samples, predicted_samples, PosteriorDraws, PosteriorError, SampleMethod,
    SampleOptions,
};
use gamforge::{fit, parse_formula, Column, Dataset, Family, FitControl, FitError, FittedGam, Link, Method, TidyTable};
use thiserror::Error;

use render::{PlotKind, PlotSpec, RenderError};

/// Environment variable consulted when `--seed` is absent.
pub const SEED_ENV: &str = "GAMFORGE_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("formula: {0}")]
    Formula(#[from] FormulaError),
    #[error("data: {0}")]
    Data(String),
    #[error("model file: {0}")]
    Model(#[from] ModelIoError),
    #[error("fit: {0}")]
    Fit(String),
    #[error("sampling: {0}")]
    Sampling(String),
    #[error("render: {0}")]
    Render(#[from] RenderError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Render(_) | CliError::Io(_) => 1,
            CliError::Formula(_) => 2,
            CliError::Data(_) | CliError::Model(_) => 3,
            CliError::Fit(_) => 4,
            CliError::Sampling(_) => 5,
        }
    }
}

fn fit_error(e: FitError) -> CliError {
    match e {
        FitError::Data(d) => CliError::Data(d.to_string()),
        FitError::Family(f @ FamilyError::InvalidResponse { .. }) => CliError::Data(f.to_string()),
        FitError::TooFewRows { .. } => CliError::Data(e.to_string()),
        other => CliError::Fit(other.to_string()),
    }
}

fn inspect_error(e: InspectError) -> CliError {
    match e {
        InspectError::Fit(f) => fit_error(f),
        InspectError::Posterior(p) => posterior_error(p),
        other => CliError::Usage(other.to_string()),
    }
}

fn posterior_error(e: PosteriorError) -> CliError {
    match e {
        PosteriorError::Fit(FitError::Data(d)) => CliError::Data(d.to_string()),
        other => CliError::Sampling(other.to_string()),
    }
}

fn diagnostics_error(e: DiagnosticsError) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "gamforge",
    version,
    about = "Generalized additive models from the command line"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and save it as JSON; prints the term overview.
    Fit(FitArgs),
    /// Tidy views of a saved model.
    Inspect {
        #[command(subcommand)]
        what: InspectCommand,
    },
    /// Posterior draws of fitted values or new responses.
    Sample(SampleArgs),
    /// Residual diagnostics as CSV tables and a four-panel SVG.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub formula: String,
    #[arg(long, default_value = "gaussian")]
    pub family: String,
    /// Override the family's default link.
    #[arg(long)]
    pub link: Option<String>,
    #[arg(long, default_value = "gcv")]
    pub method: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Score the smoothing-parameter grid on one thread.
    #[arg(long)]
    pub serial: bool,
}

#[derive(Debug, Args)]
pub struct ModelArg {
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum InspectCommand {
    /// One row per term with type, basis size and effective degrees of freedom.
    Summary {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        output: Output,
    },
    /// Smooth estimates with credible intervals.
    Smooths {
        #[command(flatten)]
        model: ModelArg,
        /// Restrict to these smooth labels.
        #[arg(long)]
        select: Vec<String>,
        /// Grid points per covariate.
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Evaluate at the rows of this CSV instead of a grid.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 0.95)]
        coverage: f64,
        /// Also draw the (single) selected smooth.
        #[arg(long)]
        svg: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Basis functions of one smooth on a grid.
    Basis {
        #[command(flatten)]
        model: ModelArg,
        /// Smooth label; defaults to the first smooth.
        #[arg(long)]
        smooth: Option<String>,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Penalty matrices in long format.
    Penalty {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        select: Vec<String>,
        /// Heatmap of the (single) selected penalty.
        #[arg(long)]
        svg: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Fitted values with credible intervals.
    Predict {
        #[command(flatten)]
        model: ModelArg,
        /// New data; defaults to the training data.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Keep only these terms in the linear predictor.
        #[arg(long)]
        terms: Vec<String>,
        #[arg(long, default_value = "response")]
        scale: String,
        #[arg(long, default_value_t = 0.95)]
        coverage: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Covariate grid crossing `--grid name=lower:upper:by` specifications,
    /// other covariates held at their training median.
    Slice {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, required = true)]
        grid: Vec<String>,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SampleKind {
    /// Expected response under coefficient uncertainty.
    Fitted,
    /// New responses at the fitted mean.
    Predicted,
    /// New responses under coefficient uncertainty.
    Posterior,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Rows to sample at; defaults to the training data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, value_enum, default_value = "fitted")]
    pub kind: SampleKind,
    #[arg(long, default_value = "gaussian")]
    pub method: String,
    /// Propagate smoothing-parameter uncertainty.
    #[arg(long)]
    pub unconditional: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keep only these terms (fitted draws only).
    #[arg(long)]
    pub terms: Vec<String>,
    /// Average each draw over rows and summarise with a median and an
    /// equal-tailed interval of this width.
    #[arg(long)]
    pub summarise: Option<f64>,
    #[arg(long, default_value = "value")]
    pub value_name: String,
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub model: ModelArg,
    /// Directory for qq.csv, resid_vs_eta.csv, histogram.csv, obs_vs_fit.csv.
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "simulate")]
    pub method: String,
    #[arg(long, default_value_t = 50)]
    pub n_sim: usize,
    #[arg(long, default_value_t = 30)]
    pub bins: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Four-panel figure; defaults to `appraise.svg` in the output directory.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
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
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Inspect { what } => cmd_inspect(what),
        Command::Sample(a) => cmd_sample(a),
        Command::Diagnose(a) => cmd_diagnose(a),
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(0),
    }
}

fn read_data(path: &Path, required: &[String]) -> Result<Dataset, CliError> {
    Dataset::read_csv_path(path, required).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_text(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn emit(table: &TidyTable, output: &Output) -> Result<(), CliError> {
    let text = match output.format {
        Format::Csv => table.to_csv_string(),
        Format::Json => table.to_json_string(),
    };
    write_text(output.out.as_deref(), &text)
}

fn cmd_fit(a: FitArgs) -> Result<(), CliError> {
    let formula = parse_formula(&a.formula)?;
    let mut family: Family = a
        .family
        .parse()
        .map_err(|e: FamilyError| CliError::Usage(e.to_string()))?;
    if let Some(l) = &a.link {
        family.link = l.parse::<Link>().map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let method: Method = a.method.parse().map_err(CliError::Usage)?;
    let mut required = vec![formula.response.clone()];
    for c in formula.covariates() {
        if !required.contains(&c) {
            required.push(c);
        }
    }
    let data = read_data(&a.data, &required)?;
    let control = FitControl {
        parallel: !a.serial,
        ..FitControl::default()
    };
    let model = fit(&formula, &data, family, method, &control).map_err(fit_error)?;
    for w in &model.warnings {
        eprintln!("warning: {w}");
    }
    save_model(&model, &a.out)?;
    write_text(None, &overview(&model).to_csv_string())
}

fn load(m: &ModelArg) -> Result<FittedGam, CliError> {
    Ok(load_model(&m.model)?)
}

fn model_data(model: &FittedGam, path: Option<&Path>) -> Result<Dataset, CliError> {
    match path {
        Some(p) => read_data(p, &model.covariates()),
        None => Ok(model.training.clone()),
    }
}

fn optional(v: &[String]) -> Option<&[String]> {
    if v.is_empty() {
        None
    } else {
        Some(v)
    }
}

/// `name=lower:upper:by`
pub fn parse_grid(spec: &str) -> Result<(String, Vec<f64>), CliError> {
    let bad = || CliError::Usage(format!("grid `{spec}` must look like name=lower:upper:by"));
    let (name, rest) = spec.split_once('=').ok_or_else(bad)?;
    let parts: Vec<&str> = rest.split(':').collect();
    let [lo, hi, by] = parts.as_slice() else {
        return Err(bad());
    };
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let values = evenly(parse(lo)?, parse(hi)?, Spacing::By(parse(by)?)).map_err(inspect_error)?;
    Ok((name.trim().to_string(), values))
}

fn summary_json(model: &FittedGam) -> String {
    let ov = overview(model);
    let sp: serde_json::Map<String, serde_json::Value> = model
        .smooths
        .iter()
        .zip(model.sp())
        .map(|(s, v)| (s.label().to_string(), serde_json::Value::from(v)))
        .collect();
    let terms: Vec<serde_json::Value> = (0..ov.n_rows())
        .map(|i| {
            serde_json::json!({
                "term": ov.strs("term").expect("term")[i],
                "type": ov.strs("type").expect("type")[i],
                "k": ov.ints("k").expect("k")[i],
                "edf": ov.num("edf").expect("edf")[i],
            })
        })
        .collect();
    let v = serde_json::json!({
        "formula": gamforge::print_formula(&model.formula),
        "family": model.family.to_string(),
        "method": model.method.to_string(),
        "n": model.n(),
        "constant": model_constant(model),
        "edf": model_edf(model),
        "scale": model.phi,
        "deviance": model.deviance,
        "null_deviance": model.null_deviance,
        "score": if model.score.is_finite() { serde_json::Value::from(model.score) } else { serde_json::Value::Null },
        "converged": model.converged,
        "sp": sp,
        "terms": terms,
    });
    serde_json::to_string_pretty(&v).expect("json value") + "\n"
}

fn cmd_inspect(what: InspectCommand) -> Result<(), CliError> {
    match what {
        InspectCommand::Summary { model, output } => {
            let m = load(&model)?;
            match output.format {
                Format::Csv => emit(&overview(&m), &output),
                Format::Json => write_text(output.out.as_deref(), &summary_json(&m)),
            }
        }
        InspectCommand::Smooths {
            model,
            select,
            n,
            data,
            coverage,
            svg,
            output,
        } => {
            let m = load(&model)?;
            let data = match &data {
                Some(p) => Some(read_data(p, &m.covariates())?),
                None => None,
            };
            let t = smooth_estimates(&m, optional(&select), n, data.as_ref()).map_err(inspect_error)?;
            let t = add_confint(&t, coverage).map_err(inspect_error)?;
            if let Some(path) = svg {
                let dims = t
                    .columns()
                    .filter(|(n, c)| {
                        !n.starts_with('.') && matches!(c, Column::Num(v) if v.iter().any(|x| !x.is_nan()))
                    })
                    .count();
                let kind = if dims == 2 {
                    PlotKind::Smooth2dHeatmap
                } else {
                    PlotKind::Smooth1dRibbon
                };
                let spec = PlotSpec::new(kind, path);
                spec.write(&render::render_table(&t, &spec)?)?;
            }
            emit(&t, &output)
        }
        InspectCommand::Basis {
            model,
            smooth,
            n,
            svg,
            output,
        } => {
            let m = load(&model)?;
            let label = match smooth {
                Some(l) => l,
                None => m
                    .smooths
                    .first()
                    .map(|s| s.label().to_string())
                    .ok_or_else(|| CliError::Usage("the model has no smooths".into()))?,
            };
            let t = basis_functions(&m, &label, n).map_err(inspect_error)?;
            if let Some(path) = svg {
                let spec = PlotSpec::new(PlotKind::BasisCurves, path);
                spec.write(&render::render_table(&t, &spec)?)?;
            }
            emit(&t, &output)
        }
        InspectCommand::Penalty {
            model,
            select,
            svg,
            output,
        } => {
            let m = load(&model)?;
            let t = penalty_matrices(&m, optional(&select)).map_err(inspect_error)?;
            if let Some(path) = svg {
                let spec = PlotSpec::new(PlotKind::PenaltyHeatmap, path);
                spec.write(&render::render_table(&t, &spec)?)?;
            }
            emit(&t, &output)
        }
        InspectCommand::Predict {
            model,
            data,
            terms,
            scale,
            coverage,
            output,
        } => {
            let m = load(&model)?;
            let d = model_data(&m, data.as_deref())?;
            let scale: Scale = scale.parse().map_err(CliError::Usage)?;
            let t = fitted_values(&m, &d, optional(&terms), scale, coverage).map_err(inspect_error)?;
            emit(&t, &output)
        }
        InspectCommand::Slice { model, grid, output } => {
            let m = load(&model)?;
            let grids = grid.iter().map(|g| parse_grid(g)).collect::<Result<Vec<_>, _>>()?;
            let d = data_slice(&m, &grids).map_err(inspect_error)?;
            emit(&dataset_table(&d), &output)
        }
    }
}

fn dataset_table(d: &Dataset) -> TidyTable {
    let mut t = TidyTable::new();
    for name in d.names() {
        let col = d.get(name).expect("listed column").to_vec();
        t.push(name.clone(), Column::Num(col)).expect("equal lengths");
    }
    t
}

fn cmd_sample(a: SampleArgs) -> Result<(), CliError> {
    let m = load(&a.model)?;
    let d = model_data(&m, a.data.as_deref())?;
    let seed = resolve_seed(a.seed)?;
    let method: SampleMethod = a.method.parse().map_err(CliError::Usage)?;
    if !a.terms.is_empty() && a.kind != SampleKind::Fitted {
        return Err(CliError::Usage("--terms applies to fitted draws only".into()));
    }
    let opts = SampleOptions {
        method,
        unconditional: a.unconditional,
        workers: a.workers,
        ..SampleOptions::new(a.n, seed)
    };
    let draws: PosteriorDraws = match a.kind {
        SampleKind::Fitted => fitted_samples(&m, &d, optional(&a.terms), &opts),
        SampleKind::Predicted => {
            if method != SampleMethod::Gaussian || a.unconditional {
                return Err(CliError::Usage(
                    "predicted draws involve no coefficient sampling options".into(),
                ));
            }
            predicted_samples(&m, &d, a.n, seed, a.workers)
        }
        SampleKind::Posterior => posterior_samples(&m, &d, &opts),
    }
    .map_err(posterior_error)?;
    if let Some(rate) = draws.acceptance {
        eprintln!("acceptance rate: {rate:.4}");
    }
    match a.summarise {
        Some(width) => {
            let t = median_qi(&draws.draw_means(), width, &a.value_name).map_err(posterior_error)?;
            emit(&t, &a.output)
        }
        None => emit(&draws.table, &a.output),
    }
}

fn cmd_diagnose(a: DiagnoseArgs) -> Result<(), CliError> {
    let m = load(&a.model)?;
    let method: QqMethod = a.method.parse().map_err(CliError::Usage)?;
    let seed = resolve_seed(a.seed)?;
    let ap = appraise_data(&m, method, a.n_sim, a.bins, seed).map_err(diagnostics_error)?;
    std::fs::create_dir_all(&a.out_dir)?;
    for (name, t) in [
        ("qq.csv", &ap.qq.table),
        ("resid_vs_eta.csv", &ap.resid_vs_eta),
        ("histogram.csv", &ap.histogram),
        ("obs_vs_fit.csv", &ap.obs_vs_fit),
    ] {
        std::fs::write(a.out_dir.join(name), t.to_csv_string())?;
    }
    let svg_path = a.svg.unwrap_or_else(|| a.out_dir.join("appraise.svg"));
    let spec = PlotSpec::new(PlotKind::AppraiseGrid, svg_path);
    spec.write(&render::appraise_grid(&ap, &spec)?)?;
    Ok(())
}
