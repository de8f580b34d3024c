//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage/I-O/validation error, 2 fit did not converge
//! (outputs are still written, with `converged: false`).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparisons::{load_csv, save_csv, CsvSchema, DataError, ItemRegistry};
use crate::evaluate::{
    curve_csv, evaluate_fit, fdr_power_curve, format_table, parse_grid, run_simulation_experiment, EnsembleReport,
    EvalError, FitEvaluation,
};
use crate::inference::{infer, InferenceError, InferenceReport, ThresholdBounds, ThresholdRule};
use crate::links::LinkModel;
use crate::mle::{fit, MleError, SolverConfig};
use crate::partial_order::{empirical_alpha_cut, export_dot, lambda_cut, level_decomposition, OrderError, PartialOrder};
use crate::simulate::{generate_replication, GroundTruth, SimConfig, SimError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Mle(#[from] MleError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Order(#[from] OrderError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: invalid JSON: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(name = "margin-rank", version, about = "Partial ranking from pairwise comparisons with abstentions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit scores and margin to a comparison CSV.
    Fit(FitArgs),
    /// Generate synthetic comparisons with known ground truth.
    Simulate(SimulateArgs),
    /// Score fits against ground truth, or run a self-contained simulation study.
    Evaluate(EvaluateArgs),
    /// Re-cut a saved fit at a threshold rule and export levels / DOT.
    ExportDag(ExportArgs),
    /// Empirical win-frequency cut of a comparison CSV.
    AlphaCut(AlphaArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long = "max-iter", default_value_t = 200)]
    pub max_iter: usize,
    #[arg(long = "lambda-cap", default_value_t = 1e3)]
    pub lambda_cap: f64,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            lambda_cap: self.lambda_cap,
            ..SolverConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "bradley-terry", value_parser = parse_model)]
    pub model: LinkModel,
    /// Fit JSON output.
    #[arg(long)]
    pub out: PathBuf,
    /// Level JSON output; defaults to `<out>.levels.json`.
    #[arg(long)]
    pub levels: Option<PathBuf>,
    #[arg(long)]
    pub dot: Option<PathBuf>,
    /// mle | conservative | aggressive | fixed:<value>
    #[arg(long, default_value = "mle", value_parser = parse_rule)]
    pub threshold: ThresholdRule,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimArgs {
    #[arg(long, default_value_t = 20)]
    pub n: usize,
    /// Comparisons per replication.
    #[arg(long = "N", visible_alias = "samples", default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long = "lambda-star", default_value_t = 1.0)]
    pub lambda_star: f64,
    #[arg(long = "score-scale", default_value_t = 10.0)]
    pub score_scale: f64,
    /// Generating noise model.
    #[arg(long = "generator", default_value = "bradley-terry", value_parser = parse_model)]
    pub generator: LinkModel,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub replications: usize,
}

impl SimArgs {
    fn config(&self) -> SimConfig {
        SimConfig {
            n: self.n,
            samples: self.samples,
            lambda_star: self.lambda_star,
            score_scale: self.score_scale,
            model: self.generator,
            seed: self.seed,
            replications: self.replications,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Output prefix: writes `<out>.csv` and `<out>.truth.json`, or
    /// `<out>_repNN.*` when there are several replications.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Saved fit JSON (file mode).
    #[arg(long, requires = "truth")]
    pub fit: Option<PathBuf>,
    /// Ground-truth JSON (file mode).
    #[arg(long, requires = "fit")]
    pub truth: Option<PathBuf>,
    /// Models to fit in simulation mode, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_model, default_value = "uniform,bradley-terry,thurstone-mosteller")]
    pub models: Vec<LinkModel>,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Sweep of true margins for the FDR/Power curve, `start:step:end`.
    #[arg(long = "lambda-grid")]
    pub lambda_grid: Option<String>,
    /// Output directory for the report files.
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long, default_value = "mle", value_parser = parse_rule)]
    pub threshold: ThresholdRule,
    #[arg(long)]
    pub dot: Option<PathBuf>,
    #[arg(long)]
    pub levels: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AlphaArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub alpha: f64,
    /// JSON with the relation and its axiom report.
    #[arg(long)]
    pub out: PathBuf,
    /// DOT output, written only when the cut is a valid partial order.
    #[arg(long)]
    pub dot: Option<PathBuf>,
}

fn parse_model(s: &str) -> Result<LinkModel, String> {
    s.parse().map_err(|e: crate::links::LinkError| e.to_string())
}

fn parse_rule(s: &str) -> Result<ThresholdRule, String> {
    s.parse().map_err(|e: InferenceError| e.to_string())
}

/// Serialized fit: scores, margin, diagnostics and (when available) the
/// variance report and threshold bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub model: LinkModel,
    pub items: Vec<String>,
    pub scores: Vec<f64>,
    pub lambda: f64,
    pub nll: f64,
    pub grad_norm: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub lambda_fixed: bool,
    pub n_items: usize,
    pub n_comparisons: usize,
    pub diagnostics: Vec<String>,
    pub sigma2_lambda: Option<f64>,
    pub sigma2_scores: Option<Vec<f64>>,
    pub delta_hat: Option<f64>,
    #[serde(rename = "Delta")]
    pub delta: Option<f64>,
    pub lambda_lower: Option<f64>,
    pub lambda_upper: Option<f64>,
    pub threshold_rule: String,
    pub threshold: f64,
}

impl FitOutput {
    fn bounds(&self) -> Option<ThresholdBounds> {
        Some(ThresholdBounds {
            lambda_hat: self.lambda,
            delta: self.delta?,
            lambda_lower: self.lambda_lower?,
            lambda_upper: self.lambda_upper?,
        })
    }

    fn threshold_for(&self, rule: ThresholdRule) -> Result<f64, CliError> {
        match (rule, self.bounds()) {
            (ThresholdRule::Mle, _) => Ok(self.lambda),
            (ThresholdRule::Fixed(v), _) => Ok(v),
            (rule, Some(b)) => Ok(b.threshold(rule)),
            (rule, None) => Err(CliError::Usage(format!(
                "threshold rule `{rule}` needs variance estimates, which are unavailable for this fit"
            ))),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_owned(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_owned(),
        source,
    })?;
    text.push('\n');
    write_file(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_owned(),
        source,
    })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn default_levels_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "fit".into());
    out.with_file_name(format!("{stem}.levels.json"))
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("input file {} does not exist", path.display())))
    }
}

/// Writes level JSON (and DOT if requested) for the cut at `threshold`.
fn write_order(
    scores: &[f64],
    threshold: f64,
    names: &ItemRegistry,
    levels_path: Option<&Path>,
    dot_path: Option<&Path>,
) -> Result<PartialOrder, CliError> {
    let order = lambda_cut(scores, threshold);
    let levels = level_decomposition(&order, Some(scores))?;
    if let Some(p) = levels_path {
        write_json(p, &levels.named(names))?;
    }
    if let Some(p) = dot_path {
        write_file(p, &export_dot(&order, &levels, names))?;
    }
    Ok(order)
}

pub fn cmd_fit(args: &FitArgs) -> Result<i32, CliError> {
    require_file(&args.input)?;
    let data = load_csv(&args.input, &CsvSchema::default())?;
    let fitted = fit(&data, args.model, &args.solver.config())?;
    let inference: Option<InferenceReport> = match infer(&data, args.model, &fitted) {
        Ok(r) => Some(r),
        Err(e) => {
            log::warn!("variance estimates unavailable: {e}");
            None
        }
    };
    let mut diagnostics = fitted.diagnostics.clone();
    if inference.is_none() {
        diagnostics.push("variance estimates unavailable: information matrix is not positive definite".into());
    }
    let mut out = FitOutput {
        model: args.model,
        items: data.items().names().to_vec(),
        scores: fitted.theta_hat.scores.clone(),
        lambda: fitted.theta_hat.lambda,
        nll: fitted.nll,
        grad_norm: fitted.grad_norm.is_finite().then_some(fitted.grad_norm),
        iterations: fitted.iterations,
        converged: fitted.converged,
        lambda_fixed: fitted.lambda_fixed,
        n_items: data.n_items(),
        n_comparisons: data.len(),
        diagnostics,
        sigma2_lambda: inference.as_ref().map(|r| r.sigma2_lambda),
        sigma2_scores: inference.as_ref().map(|r| r.sigma2_scores.clone()),
        delta_hat: inference.as_ref().map(|r| r.delta_hat),
        delta: inference.as_ref().map(|r| r.delta),
        lambda_lower: inference.as_ref().map(|r| r.lambda_lower),
        lambda_upper: inference.as_ref().map(|r| r.lambda_upper),
        threshold_rule: args.threshold.name(),
        threshold: fitted.theta_hat.lambda,
    };
    out.threshold = out.threshold_for(args.threshold)?;
    write_json(&args.out, &out)?;
    let levels_path = args.levels.clone().unwrap_or_else(|| default_levels_path(&args.out));
    write_order(&out.scores, out.threshold, data.items(), Some(&levels_path), args.dot.as_deref())?;

    println!("{}", fit_summary(&out));
    if fitted.converged {
        Ok(EXIT_OK)
    } else {
        for d in &out.diagnostics {
            eprintln!("warning: {d}");
        }
        Ok(EXIT_NOT_CONVERGED)
    }
}

fn fit_summary(out: &FitOutput) -> String {
    let mut order: Vec<usize> = (0..out.scores.len()).collect();
    order.sort_by(|&a, &b| out.scores[b].total_cmp(&out.scores[a]).then(a.cmp(&b)));
    let mut s = format!(
        "model {}  lambda {:.6}  nll {:.6}  iterations {}  converged {}\n",
        out.model, out.lambda, out.nll, out.iterations, out.converged
    );
    if let Some(b) = out.bounds() {
        s.push_str(&format!(
            "Delta {:.6}  bounds [{:.6}, {:.6}]  threshold ({}) {:.6}\n",
            b.delta, b.lambda_lower, b.lambda_upper, out.threshold_rule, out.threshold
        ));
    }
    s.push_str(&format!("{:<24}{:>12}\n", "item", "score"));
    for i in order {
        s.push_str(&format!("{:<24}{:>12.6}\n", out.items[i], out.scores[i]));
    }
    s.pop();
    s
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<i32, CliError> {
    let cfg = args.sim.config();
    cfg.validate()?;
    for rep in 0..cfg.replications {
        let (truth, data) = generate_replication(&cfg, rep)?;
        let prefix = if cfg.replications == 1 {
            args.out.clone()
        } else {
            with_suffix(&args.out, &format!("_rep{rep:02}"))
        };
        let csv_path = with_suffix(&prefix, ".csv");
        if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        save_csv(&data, &csv_path)?;
        write_json(&with_suffix(&prefix, ".truth.json"), &TruthFile::new(&truth, data.items()))?;
    }
    Ok(EXIT_OK)
}

/// Ground truth as written by `simulate`: the generating scores keyed by item
/// name. Without `items`, scores are matched to the fit by position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items: Option<Vec<String>>,
    pub scores_star: Vec<f64>,
    pub lambda_star: f64,
}

impl TruthFile {
    fn new(truth: &GroundTruth, names: &ItemRegistry) -> Self {
        TruthFile {
            items: Some(names.names().to_vec()),
            scores_star: truth.scores_star.clone(),
            lambda_star: truth.lambda_star,
        }
    }

    /// Fitted scores reordered to the truth's item order.
    fn align(&self, fitted: &FitOutput) -> Result<Vec<f64>, CliError> {
        if fitted.scores.len() != self.scores_star.len() {
            return Err(EvalError::ItemMismatch(self.scores_star.len(), fitted.scores.len()).into());
        }
        let Some(items) = &self.items else {
            return Ok(fitted.scores.clone());
        };
        items
            .iter()
            .map(|name| {
                fitted
                    .items
                    .iter()
                    .position(|n| n == name)
                    .map(|k| fitted.scores[k])
                    .ok_or_else(|| CliError::Usage(format!("item `{name}` of the truth file is missing from the fit")))
            })
            .collect()
    }
}

/// File-mode evaluation result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileEvaluation {
    pub fit: PathBuf,
    pub truth: PathBuf,
    #[serde(flatten)]
    pub evaluation: FitEvaluation,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<i32, CliError> {
    fs::create_dir_all(&args.out_dir).map_err(io_err(&args.out_dir))?;
    match (&args.fit, &args.truth) {
        (Some(fit_path), Some(truth_path)) => evaluate_files(args, fit_path, truth_path),
        _ => evaluate_simulation(args),
    }
}

fn evaluate_files(args: &EvaluateArgs, fit_path: &Path, truth_path: &Path) -> Result<i32, CliError> {
    require_file(fit_path)?;
    require_file(truth_path)?;
    let fitted: FitOutput = read_json(fit_path)?;
    let truth_file: TruthFile = read_json(truth_path)?;
    let scores = truth_file.align(&fitted)?;
    let truth = GroundTruth {
        scores_star: truth_file.scores_star,
        lambda_star: truth_file.lambda_star,
    };
    let (bounds, rules) = match fitted.bounds() {
        Some(b) => (b, ThresholdRule::BUILTIN.to_vec()),
        None => (ThresholdBounds::new(fitted.lambda, f64::NAN), vec![ThresholdRule::Mle]),
    };
    let evaluation = evaluate_fit(&truth, &scores, &bounds, &rules)?;
    let mut text = format!(
        "Macro-F1 {:.4}  Micro-F1 {:.4}\n",
        evaluation.f1.macro_f1, evaluation.f1.micro_f1
    );
    text.push_str(&format!("{:<14}{:>11}{:>9}{:>9}\n", "rule", "threshold", "FDR", "Power"));
    for r in &evaluation.rules {
        text.push_str(&format!("{:<14}{:>11.4}{:>9.4}{:>9.4}\n", r.rule, r.threshold, r.fdr, r.power));
    }
    let a = &evaluation.agreement;
    let fmt = |v: Option<f64>| v.map_or("undefined".to_owned(), |v| format!("{v:.4}"));
    text.push_str(&format!(
        "correctness {}  completeness {}  geomean {}\n",
        fmt(a.correctness),
        fmt(a.completeness),
        fmt(a.geomean)
    ));
    let report = FileEvaluation {
        fit: fit_path.to_owned(),
        truth: truth_path.to_owned(),
        evaluation,
    };
    write_json(&args.out_dir.join("evaluation.json"), &report)?;
    write_file(&args.out_dir.join("evaluation.txt"), &text)?;
    print!("{text}");
    Ok(EXIT_OK)
}

fn evaluate_simulation(args: &EvaluateArgs) -> Result<i32, CliError> {
    let base = SimConfig {
        replications: args.sim.replications.max(1),
        ..args.sim.config()
    };
    let solver = args.solver.config();
    if args.models.is_empty() {
        return Err(CliError::Usage("--models must name at least one model".into()));
    }
    let reports: Vec<EnsembleReport> = args
        .models
        .iter()
        .map(|&m| run_simulation_experiment(&base, m, &solver))
        .collect::<Result<_, _>>()?;
    let mut text = format!(
        "n={} N={} lambda*={} generator={} replications={} seed={}\n\n",
        base.n, base.samples, base.lambda_star, base.model, base.replications, base.seed
    );
    text.push_str(&format_table("Macro-F1", &reports, |r| r.macro_f1));
    text.push('\n');
    text.push_str(&format_table("Micro-F1", &reports, |r| r.micro_f1));
    for r in &reports {
        if !r.failures.is_empty() || r.nonconverged > 0 {
            text.push_str(&format!(
                "\n{}: {} failed fits excluded, {} non-converged fits included\n",
                r.fitted_model.title(),
                r.failures.len(),
                r.nonconverged
            ));
        }
    }
    write_json(&args.out_dir.join("report.json"), &reports)?;

    if let Some(grid) = &args.lambda_grid {
        let grid = parse_grid(grid)?;
        for &m in &args.models {
            let rows = fdr_power_curve(&base, &grid, m, &solver)?;
            write_file(&args.out_dir.join(format!("fdr_power_{}.csv", m.name())), &curve_csv(&rows))?;
            write_json(&args.out_dir.join(format!("fdr_power_{}.json", m.name())), &rows)?;
        }
    }
    write_file(&args.out_dir.join("report.txt"), &text)?;
    print!("{text}");
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct AlphaOutput<'a> {
    alpha: f64,
    items: &'a [String],
    relation: Vec<(String, String)>,
    irreflexive: bool,
    asymmetric: bool,
    transitive: bool,
    is_partial_order: bool,
}

pub fn cmd_export_dag(args: &ExportArgs) -> Result<i32, CliError> {
    require_file(&args.fit)?;
    let fitted: FitOutput = read_json(&args.fit)?;
    let threshold = fitted.threshold_for(args.threshold)?;
    let names = ItemRegistry::from_names(fitted.items.iter().cloned())?;
    if names.len() != fitted.scores.len() {
        return Err(CliError::Usage(format!(
            "fit has {} item names but {} scores",
            names.len(),
            fitted.scores.len()
        )));
    }
    let levels_path = args.levels.clone().unwrap_or_else(|| default_levels_path(&args.fit));
    write_order(&fitted.scores, threshold, &names, Some(&levels_path), args.dot.as_deref())?;
    Ok(EXIT_OK)
}

pub fn cmd_alpha_cut(args: &AlphaArgs) -> Result<i32, CliError> {
    require_file(&args.input)?;
    let data = load_csv(&args.input, &CsvSchema::default())?;
    let cut = empirical_alpha_cut(&data, args.alpha)?;
    let names = data.items();
    let out = AlphaOutput {
        alpha: args.alpha,
        items: names.names(),
        relation: cut
            .relation
            .pairs()
            .map(|(i, j)| (names.names()[i].clone(), names.names()[j].clone()))
            .collect(),
        irreflexive: cut.axioms.irreflexive,
        asymmetric: cut.axioms.asymmetric,
        transitive: cut.axioms.transitive,
        is_partial_order: cut.axioms.all(),
    };
    write_json(&args.out, &out)?;
    println!("alpha-cut at {}: {} pairs, {}", args.alpha, out.relation.len(), cut.axioms);
    if let Some(dot) = &args.dot {
        match cut.relation.clone().into_partial_order() {
            Ok(order) => {
                let levels = level_decomposition(&order, None)?;
                write_file(dot, &export_dot(&order, &levels, names))?;
            }
            Err(e) => eprintln!("warning: DOT not written: {e}"),
        }
    }
    Ok(EXIT_OK)
}

pub fn run(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::ExportDag(a) => cmd_export_dag(a),
        Command::AlphaCut(a) => cmd_alpha_cut(a),
    }
}

/// Parses `args`, runs the subcommand and maps errors to exit code 1.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
