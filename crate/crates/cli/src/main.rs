//! Command-line front end: `simulate`, `fit`, `predict`, and `report`
//! workflows over CSV and JSON files.
//!
//! Exit codes: 0 on success, 1 for runtime failures, 2 for usage, schema,
//! or configuration errors.

use clap::{Args, Parser, Subcommand, ValueEnum};
use musci_core::dataset::Dataset;
use musci_core::federate::{WeightObjective, WeightScheme};
use musci_core::predict::{
    musci_fit_with, predict_interval, FitOptions, FittedPredictor, LambdaPolicy, MethodSpec,
};
use musci_core::scores::ScoreKind;
use musci_core::simulate::{
    run_scenario_with_threads, write_outputs, PropensityRange, ScenarioConfig,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Environment variable overriding every configured seed.
const SEED_ENV: &str = "MUSCI_SEED";

#[derive(Parser)]
#[command(
    name = "musci",
    about = "Multi-source conformal prediction intervals for missing outcomes",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo scenario from a JSON config and write result CSVs.
    Simulate(SimulateArgs),
    /// Fit a predictor on a training CSV and write it as JSON.
    Fit(FitArgs),
    /// Apply a fitted predictor to new covariates.
    Predict(PredictArgs),
    /// Summarize a replications CSV into report tables.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Training data CSV (`site,observed,y,x1..xp`).
    #[arg(long)]
    data: PathBuf,
    /// Miscoverage level in (0, 0.5).
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Conformal score family.
    #[arg(long, value_enum, default_value_t = ScoreArg::Asr)]
    score: ScoreArg,
    /// Threshold construction.
    #[arg(long, value_enum, default_value_t = MethodArg::Federated)]
    method: MethodArg,
    /// Weight constraint scheme for the federated method.
    #[arg(long, value_enum, default_value_t = SchemeArg::Fed2)]
    scheme: SchemeArg,
    /// Penalty: `cv` or a fixed nonnegative number.
    #[arg(long, default_value = "cv")]
    lambda: String,
    /// Quadratic form of the weight loss.
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Combination)]
    objective: ObjectiveArg,
    /// Split seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path for the predictor JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Fitted predictor JSON from `musci fit`.
    #[arg(long)]
    predictor: PathBuf,
    /// Covariate CSV with header `x1..xp`.
    #[arg(long)]
    covariates: PathBuf,
    /// Output CSV (`lower,upper,empty`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// `replications.csv` produced by `musci simulate`.
    #[arg(long)]
    replications: PathBuf,
    /// Output directory for the report tables.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreArg {
    Asr,
    LocalAsr,
    Cqr,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Federated,
    TargetOnly,
    Pooled,
    EqualWeights,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Fed1,
    Fed2,
    Fed3,
    Equal,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Combination,
    Residual,
}

/// A command failure carrying its exit code.
enum Failure {
    /// Usage, schema, or configuration problem.
    Usage(String),
    /// Runtime problem after valid inputs.
    Runtime(String),
}

impl Failure {
    fn code(&self) -> ExitCode {
        match self {
            Failure::Usage(_) => ExitCode::from(2),
            Failure::Runtime(_) => ExitCode::from(1),
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => m,
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Run configuration: a scenario plus output controls.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    scenario: ScenarioConfig<f64>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    /// Worker threads; defaults to the available cores. Outputs are
    /// byte-identical regardless.
    #[serde(default)]
    parallelism: Option<usize>,
}

/// Reproducibility record written next to the result CSVs.
#[derive(Debug, Serialize)]
struct RunMeta<'a> {
    version: &'static str,
    seed: u64,
    config: &'a RunConfig,
    notes: Vec<String>,
}

fn seed_override() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(raw) => raw
            .parse::<u64>()
            .map(Some)
            .map_err(|_| usage(format!("{SEED_ENV} must be an unsigned integer, got {raw:?}"))),
        Err(_) => Ok(None),
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| usage(format!("cannot read config {}: {e}", args.config.display())))?;
    let mut config: RunConfig = serde_json::from_str(&text).map_err(|e| {
        usage(format!(
            "invalid config {} at line {}, column {} (byte offset {}): {e}",
            args.config.display(),
            e.line(),
            e.column(),
            byte_offset(&text, e.line(), e.column()),
        ))
    })?;
    if let Some(seed) = seed_override()? {
        config.scenario.base_seed = seed;
    }
    config.scenario.validate().map_err(usage)?;

    let out_dir = args
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| usage("no output directory: pass --out or set output_dir"))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism.unwrap_or(0))
        .build()
        .map_err(runtime)?;
    let (summary, replications) =
        pool.install(|| run_scenario(&config.scenario)).map_err(runtime)?;

    write_outputs(&summary, &replications, &out_dir).map_err(runtime)?;
    let mut notes = Vec::new();
    if config.scenario.propensity_range == PropensityRange::Wide {
        notes.push(
            "wide propensity uses the stand-in 1/(1+exp(-8.8(x-0.5))) clipped to (0.1, 0.9)"
                .to_string(),
        );
    }
    let meta = RunMeta {
        version: env!("CARGO_PKG_VERSION"),
        seed: config.scenario.base_seed,
        config: &config,
        notes,
    };
    let meta_json = serde_json::to_string_pretty(&meta).map_err(runtime)?;
    std::fs::write(Path::new(&out_dir).join("run_meta.json"), meta_json).map_err(runtime)?;
    for line in &summary.failures {
        eprintln!("warning: {line}");
    }
    println!(
        "wrote scenario.csv, replications.csv, local_coverage.csv, weights.csv to {}",
        out_dir.display()
    );
    Ok(())
}

/// Byte offset of a 1-based line/column position in `text`.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.split('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1);
        }
        offset += l.len() + 1;
    }
    offset
}

fn parse_lambda(raw: &str) -> Result<LambdaPolicy<f64>, Failure> {
    if raw == "cv" {
        return Ok(LambdaPolicy::CrossValidated);
    }
    let value: f64 = raw
        .parse()
        .map_err(|_| usage(format!("--lambda must be `cv` or a number, got {raw:?}")))?;
    if value < 0.0 {
        return Err(usage(format!("--lambda must be nonnegative, got {value}")));
    }
    Ok(LambdaPolicy::Fixed(value))
}

fn cmd_fit(args: &FitArgs) -> Result<(), Failure> {
    if args.alpha <= 0.0 || args.alpha >= 0.5 {
        return Err(usage(format!(
            "--alpha must lie in (0, 0.5), got {}",
            args.alpha
        )));
    }
    let lambda = parse_lambda(&args.lambda)?;
    let data = Dataset::<f64>::load_csv(&args.data).map_err(usage)?;
    let seed = seed_override()?.unwrap_or(args.seed);

    let kind = match args.score {
        ScoreArg::Asr => ScoreKind::Asr,
        ScoreArg::LocalAsr => ScoreKind::LocalAsr,
        ScoreArg::Cqr => ScoreKind::Cqr { alpha: args.alpha },
    };
    let scheme = match args.scheme {
        SchemeArg::Fed1 => WeightScheme::Fed1,
        SchemeArg::Fed2 => WeightScheme::Fed2,
        SchemeArg::Fed3 => WeightScheme::Fed3,
        SchemeArg::Equal => WeightScheme::Equal,
    };
    let objective = match args.objective {
        ObjectiveArg::Combination => WeightObjective::Combination,
        ObjectiveArg::Residual => WeightObjective::Residual,
    };
    let method = match args.method {
        MethodArg::Federated => MethodSpec::Federated {
            scheme,
            lambda,
            objective,
        },
        MethodArg::TargetOnly => MethodSpec::TargetOnly,
        MethodArg::Pooled => MethodSpec::Pooled,
        MethodArg::EqualWeights => MethodSpec::EqualWeights,
    };

    let predictor = musci_fit_with(&data, args.alpha, kind, method, seed, FitOptions::default())
        .map_err(runtime)?;
    for &site in &predictor.diagnostics.dropped_sites {
        eprintln!("warning: source site {site} has no observed outcomes; weight forced to 0");
    }
    let json = predictor.to_json().map_err(runtime)?;
    std::fs::write(&args.out, json).map_err(runtime)?;
    println!("wrote predictor to {}", args.out.display());
    Ok(())
}

/// Loads a covariate CSV with header `x1..xp`.
fn load_covariates(path: &Path) -> Result<Vec<Vec<f64>>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read covariates {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| usage("empty covariate file"))?;
    let fields: Vec<&str> = header.trim_end().split(',').collect();
    for (j, name) in fields.iter().enumerate() {
        let expected = format!("x{}", j + 1);
        if *name != expected {
            return Err(usage(format!(
                "covariate header column {} must be {expected}, got {name:?}",
                j + 1
            )));
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.trim_end().split(',').collect();
        if parts.len() != fields.len() {
            return Err(usage(format!(
                "line {}: expected {} fields, got {}",
                idx + 1,
                fields.len(),
                parts.len()
            )));
        }
        let row: Result<Vec<f64>, _> = parts.iter().map(|p| p.parse::<f64>()).collect();
        rows.push(row.map_err(|e| usage(format!("line {}: {e}", idx + 1)))?);
    }
    Ok(rows)
}

fn cmd_predict(args: &PredictArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.predictor)
        .map_err(|e| usage(format!("cannot read predictor {}: {e}", args.predictor.display())))?;
    let predictor = FittedPredictor::<f64>::from_json(&text).map_err(usage)?;
    let rows = load_covariates(&args.covariates)?;
    if let Some(row) = rows.first() {
        if row.len() != predictor.covariate_dim {
            return Err(usage(format!(
                "covariate dimension mismatch: predictor expects {}, file has {}",
                predictor.covariate_dim,
                row.len()
            )));
        }
    }
    let mut out = String::from("lower,upper,empty\n");
    for row in &rows {
        match predict_interval(&predictor, row) {
            Ok(interval) => {
                out.push_str(&format!("{},{},0\n", interval.lower, interval.upper))
            }
            Err(musci_core::Error::EmptyInterval) => out.push_str(",,1\n"),
            Err(e) => return Err(runtime(e)),
        }
    }
    std::fs::write(&args.out, out).map_err(runtime)?;
    println!("wrote {} intervals to {}", rows.len(), args.out.display());
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.replications).map_err(|e| {
        usage(format!(
            "cannot read replications {}: {e}",
            args.replications.display()
        ))
    })?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| usage("empty replications file"))?;
    let columns: Vec<&str> = header.trim_end().split(',').collect();
    let col = |name: &str| -> Result<usize, Failure> {
        columns
            .iter()
            .position(|&c| c == name)
            .ok_or_else(|| usage(format!("replications file is missing column {name:?}")))
    };
    let rep_col = col("replication")?;
    let method_col = col("method")?;
    let coverage_col = col("coverage")?;
    let width_col = col("width")?;

    // method -> (replication labels, coverages, widths), insertion order.
    let mut order: Vec<String> = Vec::new();
    let mut per_method: std::collections::BTreeMap<String, (Vec<String>, Vec<f64>, Vec<f64>)> =
        std::collections::BTreeMap::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.trim_end().split(',').collect();
        if parts.len() != columns.len() {
            return Err(usage(format!(
                "line {}: expected {} fields, got {}",
                idx + 2,
                columns.len(),
                parts.len()
            )));
        }
        let parse = |c: usize| -> Result<f64, Failure> {
            parts[c]
                .parse::<f64>()
                .map_err(|e| usage(format!("line {}: {e}", idx + 2)))
        };
        let method = parts[method_col].to_string();
        if !order.contains(&method) {
            order.push(method.clone());
        }
        let entry = per_method.entry(method).or_default();
        entry.0.push(parts[rep_col].to_string());
        entry.1.push(parse(coverage_col)?);
        entry.2.push(parse(width_col)?);
    }
    if per_method.is_empty() {
        return Err(usage("replications file has no data rows"));
    }

    std::fs::create_dir_all(&args.out).map_err(runtime)?;
    let mut summary =
        String::from("method,mean_coverage,sd_coverage,mean_width,sd_width,replications\n");
    let mut boxplot = String::from("replication,method,metric,value\n");
    for method in &order {
        let (reps, coverages, widths) = &per_method[method];
        summary.push_str(&format!(
            "{},{},{},{},{},{}\n",
            method,
            musci_core::stats::mean(coverages),
            musci_core::stats::sample_sd(coverages),
            musci_core::stats::mean(widths),
            musci_core::stats::sample_sd(widths),
            coverages.len()
        ));
        for ((rep, &c), &w) in reps.iter().zip(coverages).zip(widths) {
            boxplot.push_str(&format!("{rep},{method},coverage,{c}\n"));
            boxplot.push_str(&format!("{rep},{method},width,{w}\n"));
        }
    }
    std::fs::write(args.out.join("summary.csv"), summary).map_err(runtime)?;
    std::fs::write(args.out.join("boxplot_long.csv"), boxplot).map_err(runtime)?;

    // Pass the scenario's local-coverage curves through when present.
    let sibling = args
        .replications
        .parent()
        .map(|p| p.join("local_coverage.csv"));
    if let Some(path) = sibling.filter(|p| p.exists()) {
        let curves = std::fs::read_to_string(path).map_err(runtime)?;
        std::fs::write(args.out.join("local_coverage_curves.csv"), curves).map_err(runtime)?;
    }
    println!("wrote report tables to {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            failure.code()
        }
    }
}
