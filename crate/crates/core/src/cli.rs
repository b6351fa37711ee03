//! The `cdri` command line: ingest, synth, forecast, backtest, report.
//!
//! Exit codes: 0 success, 1 data or validation error, 2 usage error.
//! Payloads go to stdout (or `--out`); diagnostics go to stderr.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::CdriError;
use crate::ingest::{
    assessment_csv_string, dataset_from_json, dataset_to_json, generate_synthetic, parse_assessment_csv, Shock,
    SynthConfig,
};
use crate::model::{aggregate_experts, Dimension, PanelDataset};
use crate::pipeline::{backtest, run_forecast, ForecastConfig, ModelKind, PredictionReport};
use crate::report::{
    render_backtest_table, render_grouped_bars, render_loss_curve, render_spider, render_table, report_vectors,
    TableFormat,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Issues listed per validation code before the rest are counted.
const SUMMARY_LIMIT: usize = 20;

#[derive(Debug, Parser)]
#[command(name = "cdri", version, about = "Climate Disaster Resilience Index: scoring, forecasting and reports")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate an assessment CSV and archive it as dataset JSON
    Ingest(IngestArgs),
    /// Generate a seeded synthetic assessment CSV
    Synth(SynthArgs),
    /// Fit all six models and forecast the horizon year
    Forecast(ForecastArgs),
    /// Hold out the last year and score every model on it
    Backtest(BacktestArgs),
    /// Render tables and SVG charts
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Assessment CSV
    #[arg(long)]
    pub input: PathBuf,
    /// Dataset JSON to write
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 11)]
    pub experts: usize,
    /// Comma-separated assessment years
    #[arg(long, value_delimiter = ',', default_values_t = vec![2013, 2016, 2019, 2022])]
    pub years: Vec<i32>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Baseline score, one value or five comma-separated values
    #[arg(long, value_delimiter = ',')]
    pub base: Vec<f64>,
    /// Score change per interval, one value or five comma-separated values
    #[arg(long, value_delimiter = ',')]
    pub slope: Vec<f64>,
    /// Half-width of the uniform per-parameter noise
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Shock as YEAR:DIM[+DIM...]:MAGNITUDE, e.g. 2019:economic+natural_health:-1
    #[arg(long)]
    pub shock: Option<String>,
    /// CSV to write (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Dataset JSON (or an assessment CSV)
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Hyperparameter override, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Models to show in printed tables (all six are always fitted)
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub common: ModelArgs,
    #[arg(long)]
    pub horizon: i32,
    /// Report JSON to write
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[command(flatten)]
    pub common: ModelArgs,
    /// Backtest JSON to write
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Prediction report JSON
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Dataset JSON, for per-year spider diagrams
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Assessment year for dataset spider diagrams
    #[arg(long)]
    pub year: Option<i32>,
    /// Experts to overlay on a dataset spider diagram (default: the aggregate)
    #[arg(long, value_delimiter = ',')]
    pub expert: Vec<String>,
    /// md, csv, spider, bars or loss
    #[arg(long, default_value = "md")]
    pub format: String,
    /// Models to include (default: all six)
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    /// Output file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
}

impl From<CdriError> for Failure {
    fn from(e: CdriError) -> Self {
        match e {
            CdriError::UnknownConfigKey(_) | CdriError::InvalidHyperparameter(_) => Failure::Usage(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

struct Io<'a> {
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
}

impl Io<'_> {
    fn note(&mut self, msg: impl AsRef<str>) {
        let _ = writeln!(self.stderr, "{}", msg.as_ref());
    }

    fn emit(&mut self, payload: &str) -> CmdResult {
        self.stdout
            .write_all(payload.as_bytes())
            .map_err(|e| Failure::Data(format!("cannot write to stdout: {e}")))
    }
}

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{text}")
            } else {
                write!(stdout, "{text}")
            };
            return code;
        }
    };
    let mut io = Io { stdout, stderr };
    let outcome = match cli.command {
        Command::Ingest(a) => cmd_ingest(&a, &mut io),
        Command::Synth(a) => cmd_synth(&a, &mut io),
        Command::Forecast(a) => cmd_forecast(&a, &mut io),
        Command::Backtest(a) => cmd_backtest(&a, &mut io),
        Command::Report(a) => cmd_report(&a, &mut io),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            io.note(format!("error: {msg}"));
            EXIT_USAGE
        }
        Err(Failure::Data(msg)) => {
            io.note(format!("error: {msg}"));
            EXIT_DATA
        }
    }
}

/// Writes via a temporary file in the target directory and renames it into
/// place, so a failed run never leaves partial output.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(fs::Permissions::from_mode(0o644))?;
    }
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn write_out(path: &Path, contents: &str) -> CmdResult {
    write_atomic(path, contents.as_bytes()).map_err(|e| Failure::Data(format!("cannot write {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))
}

fn load_dataset(path: &Path, io: &mut Io<'_>) -> Result<PanelDataset, Failure> {
    let text = read_text(path)?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if !is_csv {
        return Ok(dataset_from_json(&text)?);
    }
    match parse_assessment_csv(text.as_bytes()) {
        Ok((dataset, report)) => {
            if !report.warnings.is_empty() {
                io.note(report.summary_limited(SUMMARY_LIMIT));
            }
            Ok(dataset)
        }
        Err(report) => {
            io.note(report.summary_limited(SUMMARY_LIMIT));
            Err(Failure::Data(CdriError::Validation(report.errors.len()).to_string()))
        }
    }
}

fn parse_models(names: &[String]) -> Result<Vec<ModelKind>, Failure> {
    if names.is_empty() {
        return Ok(ModelKind::ALL.to_vec());
    }
    let mut kinds: Vec<ModelKind> = names.iter().map(|n| n.parse()).collect::<Result<_, CdriError>>()?;
    kinds.sort();
    kinds.dedup();
    Ok(kinds)
}

fn select_models(report: &PredictionReport, kinds: &[ModelKind]) -> PredictionReport {
    let mut out = report.clone();
    out.models.retain(|m| kinds.contains(&m.kind));
    out
}

fn per_dimension_arg(values: &[f64], default: f64, flag: &str) -> Result<[f64; 5], Failure> {
    match values {
        [] => Ok([default; 5]),
        [v] => Ok([*v; 5]),
        v if v.len() == 5 => Ok([v[0], v[1], v[2], v[3], v[4]]),
        _ => Err(Failure::Usage(format!("--{flag} takes one or five values"))),
    }
}

fn parse_shock(spec: &str) -> Result<Shock, Failure> {
    let bad = || Failure::Usage(format!("--shock {spec:?} is not YEAR:DIM[+DIM...]:MAGNITUDE"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [year, dims, magnitude] = parts.as_slice() else {
        return Err(bad());
    };
    let dimensions = dims
        .split('+')
        .map(|d| d.parse::<Dimension>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| bad())?;
    Ok(Shock {
        year: year.trim().parse().map_err(|_| bad())?,
        dimensions,
        magnitude: magnitude.trim().parse().map_err(|_| bad())?,
    })
}

fn effective_config(args: &ModelArgs, io: &mut Io<'_>) -> Result<ForecastConfig, Failure> {
    let config = ForecastConfig::default().with_overrides(&args.overrides)?;
    let logged = serde_json::to_string(&config).map_err(|e| Failure::Data(e.to_string()))?;
    io.note(format!("seed: {}", args.seed));
    io.note(format!("config: {logged}"));
    Ok(config)
}

fn cmd_ingest(args: &IngestArgs, io: &mut Io<'_>) -> CmdResult {
    let file = fs::File::open(&args.input)
        .map_err(|e| Failure::Data(format!("cannot read {}: {e}", args.input.display())))?;
    match parse_assessment_csv(file) {
        Ok((dataset, report)) => {
            write_out(&args.out, &dataset_to_json(&dataset)?)?;
            io.emit(&report.summary_limited(SUMMARY_LIMIT))?;
            io.note(format!("wrote {}", args.out.display()));
            Ok(())
        }
        Err(report) => {
            io.emit(&report.summary_limited(SUMMARY_LIMIT))?;
            Err(Failure::Data(CdriError::Validation(report.errors.len()).to_string()))
        }
    }
}

fn cmd_synth(args: &SynthArgs, io: &mut Io<'_>) -> CmdResult {
    let config = SynthConfig {
        experts: args.experts,
        years: args.years.clone(),
        base: per_dimension_arg(&args.base, 3.0, "base")?,
        slope: per_dimension_arg(&args.slope, 0.0, "slope")?,
        noise: args.noise,
        shock: args.shock.as_deref().map(parse_shock).transpose()?,
        seed: args.seed,
    };
    io.note(format!("seed: {}", args.seed));
    let dataset = generate_synthetic(&config).map_err(|e| match e {
        CdriError::EmptyDataset | CdriError::TooFewYears { .. } => Failure::Usage(e.to_string()),
        other => other.into(),
    })?;
    let csv = assessment_csv_string(&dataset)?;
    match &args.out {
        Some(path) => {
            write_out(path, &csv)?;
            io.note(format!("wrote {} rows to {}", dataset.records().len() * 5, path.display()));
            Ok(())
        }
        None => io.emit(&csv),
    }
}

fn cmd_forecast(args: &ForecastArgs, io: &mut Io<'_>) -> CmdResult {
    let config = effective_config(&args.common, io)?;
    let shown = parse_models(&args.common.models)?;
    let dataset = load_dataset(&args.common.dataset, io)?;
    io.note(format!("horizon: {}", args.horizon));
    let report = run_forecast(&dataset, args.horizon, &config, args.common.seed)?;
    if let Some(path) = &args.out {
        write_out(path, &report.to_json()?)?;
        io.note(format!("wrote {}", path.display()));
    }
    io.emit(&render_table(&select_models(&report, &shown), TableFormat::Markdown))
}

fn cmd_backtest(args: &BacktestArgs, io: &mut Io<'_>) -> CmdResult {
    let config = effective_config(&args.common, io)?;
    let shown = parse_models(&args.common.models)?;
    let dataset = load_dataset(&args.common.dataset, io)?;
    let mut result = backtest(&dataset, &config, args.common.seed)?;
    if let Some(path) = &args.out {
        let mut text = serde_json::to_string_pretty(&result).map_err(|e| Failure::Data(e.to_string()))?;
        text.push('\n');
        write_out(path, &text)?;
        io.note(format!("wrote {}", path.display()));
    }
    result.models.retain(|m| shown.contains(&m.kind));
    io.emit(&render_backtest_table(&result))
}

fn cmd_report(args: &ReportArgs, io: &mut Io<'_>) -> CmdResult {
    let kinds = parse_models(&args.models)?;
    let load_report = || -> Result<PredictionReport, Failure> {
        let path = args
            .predictions
            .as_ref()
            .ok_or_else(|| Failure::Usage(format!("--format {} needs --predictions", args.format)))?;
        let report = PredictionReport::from_json(&read_text(path)?)?;
        Ok(select_models(&report, &kinds))
    };

    let text = match args.format.to_ascii_lowercase().as_str() {
        "md" | "markdown" | "csv" => {
            let format: TableFormat = args.format.parse()?;
            render_table(&load_report()?, format)
        }
        "bars" => render_grouped_bars(&load_report()?).text,
        "loss" => render_loss_curve(&load_report()?.lstm_loss)?.text,
        "spider" => {
            if let Some(path) = &args.dataset {
                let dataset = load_dataset(path, io)?;
                let year = args
                    .year
                    .ok_or_else(|| Failure::Usage("a dataset spider diagram needs --year".into()))?;
                let series = if args.expert.is_empty() {
                    vec![(format!("Aggregate {year}"), aggregate_experts(&dataset, year)?)]
                } else {
                    args.expert
                        .iter()
                        .map(|e| {
                            dataset
                                .expert_vector(e, year)?
                                .map(|v| (format!("{e} {year}"), v))
                                .ok_or(CdriError::YearAbsent(year))
                        })
                        .collect::<Result<Vec<_>, CdriError>>()?
                };
                render_spider(&series)?.text
            } else {
                render_spider(&report_vectors(&load_report()?))?.text
            }
        }
        other => {
            return Err(Failure::Usage(format!(
                "unknown --format {other:?} (expected md, csv, spider, bars or loss)"
            )))
        }
    };
    match &args.out {
        Some(path) => {
            write_out(path, &text)?;
            io.note(format!("wrote {}", path.display()));
            Ok(())
        }
        None => io.emit(&text),
    }
}
