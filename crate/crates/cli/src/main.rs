//! `woe`: fit class-conditional Gaussian models, explain their predictions
//! with sequential weight-of-evidence reports, and self-check the identities
//! those reports rely on.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{debug, info};
use woe_core::data_io::{self, DataError, Dataset, OracleSpec};
use woe_core::density::{default_variance_floor, LoadError};
use woe_core::{
    explain, validate, AttributeSource, ContrastParams, CovarianceMode, DensityBackend, Evidence,
    ExplainerParams, ExplanationReport, GaussianClassModel, OrderingPolicy, RemainingUpdate,
    ScoringMode, WoeError,
};

const EXIT_VALIDATION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "woe",
    version,
    about = "Weight-of-evidence explanations for Gaussian class models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one Gaussian per class and write the model JSON.
    Fit(FitArgs),
    /// Explain the model's prediction on one input row.
    Explain(ExplainArgs),
    /// Check the decomposition identities on sampled rows.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Training CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Name of the label column in the CSV.
    #[arg(
        long,
        conflicts_with = "oracle_cmd",
        required_unless_present = "oracle_cmd"
    )]
    labels: Option<String>,
    /// Shell command labelling rows: CSV rows on stdin, one integer per line on stdout.
    #[arg(long)]
    oracle_cmd: Option<String>,
    #[arg(long, value_enum, default_value_t = Mode::Full)]
    mode: Mode,
    /// Diagonal variance floor, or ridge for full covariances. Defaults to
    /// 1e-6 times the mean feature variance.
    #[arg(long)]
    variance_floor: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    /// `@file.csv:ROW` (0-based data row) or an inline comma-separated vector.
    #[arg(long, allow_hyphen_values = true)]
    input: String,
    /// Attribute partition JSON.
    #[arg(long, conflicts_with = "attr_size")]
    partition: Option<PathBuf>,
    /// Build attributes greedily from groups of this many features.
    #[arg(long)]
    attr_size: Option<usize>,
    /// Collect features missing from the partition into a residual group.
    #[arg(long, requires = "partition")]
    lenient_partition: bool,
    #[arg(long, value_enum, default_value_t = Scoring::Conditional)]
    scoring: Scoring,
    /// Attributes with |woe| at or above this many nats are marked.
    #[arg(long, default_value_t = 2.0)]
    threshold: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha_reg: f64,
    #[arg(long, default_value_t = 12)]
    max_exhaustive: usize,
    #[arg(long, value_enum, default_value_t = Ordering::Greedy)]
    ordering: Ordering,
    /// Seed for `--ordering random`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Classes carried into the next step.
    #[arg(long, value_enum, default_value_t = Update::Entailed)]
    update: Update,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV whose columns include the model's features.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    alpha_reg: f64,
    #[arg(long, default_value_t = 12)]
    max_exhaustive: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Diag,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scoring {
    Conditional,
    Marginal,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ordering {
    Greedy,
    Fixed,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Update {
    /// Keep the entailed set and refine it.
    Entailed,
    /// Move on to the contrast set.
    Contrast,
}

/// Terminal failure: exit code plus a one-line diagnostic.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<WoeError> for Failure {
    fn from(e: WoeError) -> Self {
        Self::new(EXIT_USAGE, e.to_string())
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        let code = match e {
            DataError::Io { .. } | DataError::Oracle { .. } => EXIT_IO,
            DataError::Csv { .. } | DataError::MissingColumn(_) | DataError::Config(_) => {
                EXIT_USAGE
            }
        };
        Self::new(code, e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("WOE_LOG_LEVEL", "error"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_model(path: &Path, invalid_code: u8) -> Result<GaussianClassModel, Failure> {
    GaussianClassModel::load(path).map_err(|e| match e {
        LoadError::Io(e) => Failure::new(EXIT_IO, format!("{}: {e}", path.display())),
        LoadError::Model(e) => Failure::new(invalid_code, format!("{}: {e}", path.display())),
    })
}

fn write_file(path: &Path, text: &str) -> CmdResult {
    std::fs::write(path, text)
        .map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))
}

/// Restricts `data` to the model's feature columns when its header carries
/// them all; otherwise returns it untouched for the dimension check.
fn model_columns(data: Dataset, model: &GaussianClassModel) -> Result<Dataset, Failure> {
    let names = model.feature_names();
    if data.header == names || !names.iter().all(|n| data.header.contains(n)) {
        return Ok(data);
    }
    debug!(
        "selecting model columns from {} CSV columns",
        data.num_features()
    );
    Ok(data.select_columns(names)?)
}

fn check_width(expected: usize, actual: usize, what: &str) -> CmdResult {
    if expected == actual {
        return Ok(());
    }
    Err(Failure::new(
        EXIT_USAGE,
        format!("{what} has {actual} features, model expects n = {expected}"),
    ))
}

fn cmd_fit(a: FitArgs) -> CmdResult {
    if let Some(f) = a.variance_floor {
        if !(f > 0.0 && f.is_finite()) {
            return Err(Failure::new(
                EXIT_USAGE,
                format!("--variance-floor must be positive, got {f}"),
            ));
        }
    }
    let data = data_io::load_csv(&a.data, a.labels.as_deref())?;
    info!(
        "loaded {} rows x {} features from {}",
        data.len(),
        data.num_features(),
        a.data.display()
    );
    let oracle = OracleSpec::from_options(a.labels.clone(), a.oracle_cmd.clone())?;
    let labels = data_io::query_oracle(&oracle, &data)?;
    let mode = match a.mode {
        Mode::Diag => CovarianceMode::Diagonal,
        Mode::Full => CovarianceMode::Full,
    };
    let floor = a
        .variance_floor
        .unwrap_or_else(|| default_variance_floor(&data.rows));
    let model = GaussianClassModel::fit(&data.rows, &labels, mode, floor)?
        .with_feature_names(data.header.clone())?;
    write_file(&a.out, &model.to_json())?;

    let k = model.num_classes();
    let mut counts = vec![0usize; k];
    for &l in &labels {
        counts[l] += 1;
    }
    println!(
        "fitted {k} classes on {} rows, {} features",
        data.len(),
        data.num_features()
    );
    for (c, (count, prior)) in counts.iter().zip(model.priors()).enumerate() {
        let name = data
            .label_names
            .as_ref()
            .map(|names| format!(" ({})", names[c]))
            .unwrap_or_default();
        println!("  class {c}{name}: n = {count}, prior = {prior:.6}");
    }
    println!("model written to {}", a.out.display());
    Ok(())
}

fn parse_input(spec: &str, model: &GaussianClassModel) -> Result<Vec<f64>, Failure> {
    if let Some(rest) = spec.strip_prefix('@') {
        let (path, row) = rest.rsplit_once(':').ok_or_else(|| {
            Failure::new(
                EXIT_USAGE,
                format!("row spec '{spec}' must look like @file.csv:ROW"),
            )
        })?;
        let row: usize = row
            .parse()
            .map_err(|_| Failure::new(EXIT_USAGE, format!("bad row index '{row}' in '{spec}'")))?;
        let data = model_columns(data_io::load_csv(path, None)?, model)?;
        return data.rows.get(row).cloned().ok_or_else(|| {
            Failure::new(
                EXIT_USAGE,
                format!("{path} has {} data rows, asked for row {row}", data.len()),
            )
        });
    }
    spec.split(',')
        .map(|cell| {
            let cell = cell.trim();
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Failure::new(
                    EXIT_USAGE,
                    format!("input value '{cell}' is not a finite number"),
                )),
            }
        })
        .collect()
}

fn cmd_explain(a: ExplainArgs) -> CmdResult {
    let model = load_model(&a.model, EXIT_USAGE)?;
    let n = model.num_features();
    let x = parse_input(&a.input, &model)?;
    check_width(n, x.len(), "input")?;

    let attribute_source = match (&a.partition, a.attr_size) {
        (Some(path), _) => AttributeSource::FixedPartition(data_io::load_partition(
            path,
            model.feature_names(),
            a.lenient_partition,
        )?),
        (None, Some(size)) => AttributeSource::GreedyGroups { size },
        (None, None) => AttributeSource::EachFeature,
    };
    let params = ExplainerParams {
        attribute_source,
        scoring_mode: match a.scoring {
            Scoring::Conditional => ScoringMode::ConditionalChain,
            Scoring::Marginal => ScoringMode::Marginal,
        },
        display_threshold: a.threshold,
        contrast: ContrastParams {
            alpha_reg: a.alpha_reg,
            max_exhaustive_classes: a.max_exhaustive,
        },
        ordering_policy: match a.ordering {
            Ordering::Greedy => OrderingPolicy::GreedyMaxWoe,
            Ordering::Fixed => OrderingPolicy::Fixed,
            Ordering::Random => OrderingPolicy::Random { seed: a.seed },
        },
        remaining_update: match a.update {
            Update::Entailed => RemainingUpdate::KeepEntailed,
            Update::Contrast => RemainingUpdate::RemoveEntailed,
        },
    };
    params.validate(n)?;

    let report = explain(&Evidence::full(x)?, &model, &params)?;
    if let Some(out) = &a.out {
        write_file(out, &report.to_json())?;
    }
    print!("{}", render_report(&report, model.feature_names()));
    if let Some(out) = &a.out {
        println!("report written to {}", out.display());
    }
    Ok(())
}

/// Text view of `report`; every number comes from the report itself.
fn render_report(report: &ExplanationReport, feature_names: &[String]) -> String {
    let mut s = String::new();
    let t = report.settings.display_threshold;
    let _ = writeln!(s, "predicted class: {}", report.predicted_class);
    for (i, step) in report.steps.iter().enumerate() {
        let _ = writeln!(
            s,
            "\nstep {}: {} vs {}",
            i + 1,
            step.entailed,
            step.contrast
        );
        let labels: Vec<String> = step
            .attributes
            .iter()
            .map(|a| {
                a.name.clone().unwrap_or_else(|| {
                    let names: Vec<&str> = a
                        .features
                        .iter()
                        .map(|&f| feature_names[f].as_str())
                        .collect();
                    names.join("+")
                })
            })
            .collect();
        let width = labels.iter().map(String::len).max().unwrap_or(0).max(18);
        let _ = writeln!(
            s,
            "  {:<width$}  {:>14}",
            "prior log-odds",
            fmt(step.prior_log_odds)
        );
        for (a, label) in step.attributes.iter().zip(&labels) {
            let mark = if a.displayed { '*' } else { ' ' };
            let _ = writeln!(s, "{mark} {label:<width$}  {:>14}", fmt(a.woe));
        }
        let _ = writeln!(
            s,
            "  {:<width$}  {:>14}",
            "total woe",
            fmt(step.total_woe())
        );
        let _ = writeln!(
            s,
            "  {:<width$}  {:>14}",
            "prior + sum woe",
            fmt(step.prior_log_odds + step.total_woe())
        );
        let _ = writeln!(
            s,
            "  {:<width$}  {:>14}",
            "posterior log-odds",
            fmt(step.posterior_log_odds)
        );
    }
    let _ = writeln!(s, "\n* |woe| >= {t} nats");
    s
}

fn fmt(v: f64) -> String {
    format!("{v:+.9}")
}

fn cmd_validate(a: ValidateArgs) -> CmdResult {
    let model = load_model(&a.model, EXIT_VALIDATION)?;
    let data = model_columns(data_io::load_csv(&a.data, None)?, &model)?;
    check_width(model.num_features(), data.num_features(), "data")?;
    let params = ContrastParams {
        alpha_reg: a.alpha_reg,
        max_exhaustive_classes: a.max_exhaustive,
    };
    params.validate()?;
    let summary = validate::run(&model, &data.rows, a.trials, a.seed, &params)?;
    println!(
        "validated on {} sampled rows (seed {})",
        summary.trials, a.seed
    );
    for check in &summary.checks {
        let verdict = if check.passed() { "PASS" } else { "FAIL" };
        println!(
            "  [{verdict}] {:<22} max deviation {:.3e} (tolerance {:.0e}, {} checked)",
            check.name, check.max_deviation, check.tolerance, check.checked
        );
        for f in check.failures.iter().take(10) {
            println!("         row {}: deviation {:.3e}", f.row, f.deviation);
        }
        if check.failures.len() > 10 {
            println!("         ... {} more", check.failures.len() - 10);
        }
    }
    if summary.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = summary
            .checks
            .iter()
            .filter(|c| !c.passed())
            .map(|c| c.name)
            .collect();
        Err(Failure::new(
            EXIT_VALIDATION,
            format!("failed checks: {}", failed.join(", ")),
        ))
    }
}
