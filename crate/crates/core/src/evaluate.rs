//! Metrics and the simulation experiment harness.
//!
//! Pair-level metrics treat every unordered pair `(i, j)`, `i < j`, as one
//! instance with three classes: `i ≻ j`, `j ≻ i`, or incomparable.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparisons::{ComparisonDataset, DataError};
use crate::inference::{incomparable_set, infer, PairSet, ThresholdBounds, ThresholdRule};
use crate::links::LinkModel;
use crate::mle::{fit, SolverConfig};
use crate::partial_order::{lambda_cut, PartialOrder};
use crate::simulate::{generate_replication, ground_truth_classes, GroundTruth, SimConfig, SimError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("pair universes differ: {0} vs {1} pairs")]
    UniverseMismatch(usize, usize),
    #[error("item universes differ: {0} vs {1} items")]
    ItemMismatch(usize, usize),
    #[error("invalid grid `{0}` (expected start:step:end with step > 0)")]
    BadGrid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairClass {
    /// `i ≻ j` for the pair `(i, j)`, `i < j`.
    FirstPreferred,
    /// `j ≻ i`
    SecondPreferred,
    Incomparable,
}

impl PairClass {
    const ALL: [PairClass; 3] = [PairClass::FirstPreferred, PairClass::SecondPreferred, PairClass::Incomparable];
}

/// All unordered pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn pair_list(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// Class of each pair under the cut at `lambda` (incomparable iff `|s_i − s_j| ≤ λ`).
pub fn classify_pairs(scores: &[f64], lambda: f64) -> Vec<PairClass> {
    pair_list(scores.len())
        .into_iter()
        .map(|(i, j)| {
            let d = scores[i] - scores[j];
            if d.abs() <= lambda {
                PairClass::Incomparable
            } else if d > 0.0 {
                PairClass::FirstPreferred
            } else {
                PairClass::SecondPreferred
            }
        })
        .collect()
}

/// Counts indexed as `(detected, truth)` with 0 = comparable, 1 = incomparable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCells {
    pub n00: usize,
    pub n01: usize,
    pub n10: usize,
    pub n11: usize,
}

impl ConfusionCells {
    pub fn total(&self) -> usize {
        self.n00 + self.n01 + self.n10 + self.n11
    }
}

pub fn confusion(truth_incomparable: &PairSet, detected_incomparable: &PairSet, n: usize) -> ConfusionCells {
    let mut c = ConfusionCells::default();
    for (i, j) in pair_list(n) {
        match (detected_incomparable.contains(i, j), truth_incomparable.contains(i, j)) {
            (false, false) => c.n00 += 1,
            (false, true) => c.n01 += 1,
            (true, false) => c.n10 += 1,
            (true, true) => c.n11 += 1,
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdrPower {
    pub fdr: f64,
    pub power: f64,
}

/// FDR is 0 when nothing is detected incomparable; Power is 1 when nothing is
/// truly incomparable.
pub fn fdr_power(cells: &ConfusionCells) -> FdrPower {
    let detected = cells.n10 + cells.n11;
    let truly = cells.n01 + cells.n11;
    FdrPower {
        fdr: if detected == 0 { 0.0 } else { cells.n10 as f64 / detected as f64 },
        power: if truly == 0 { 1.0 } else { cells.n11 as f64 / truly as f64 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub macro_f1: f64,
    pub micro_f1: f64,
}

pub fn f1_scores(truth: &[PairClass], pred: &[PairClass]) -> Result<F1Scores, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::UniverseMismatch(truth.len(), pred.len()));
    }
    let (mut sum_tp, mut sum_fp, mut sum_fn) = (0usize, 0usize, 0usize);
    let mut per_class = Vec::new();
    for class in PairClass::ALL {
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (&t, &p) in truth.iter().zip(pred) {
            match (t == class, p == class) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => {}
            }
        }
        sum_tp += tp;
        sum_fp += fp;
        sum_fn += fn_;
        if tp + fp + fn_ > 0 {
            per_class.push(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64);
        }
    }
    let pooled = 2 * sum_tp + sum_fp + sum_fn;
    Ok(F1Scores {
        macro_f1: if per_class.is_empty() {
            1.0
        } else {
            per_class.iter().sum::<f64>() / per_class.len() as f64
        },
        micro_f1: if pooled == 0 { 1.0 } else { 2.0 * sum_tp as f64 / pooled as f64 },
    })
}

/// Agreement of an estimated order with a reference order. Undefined ratios
/// are `None` with the reason recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderAgreement {
    pub concordant: usize,
    pub discordant: usize,
    pub reference_comparable: usize,
    pub correctness: Option<f64>,
    pub completeness: Option<f64>,
    pub geomean: Option<f64>,
    pub undefined: Vec<String>,
}

pub fn correctness_completeness(reference: &PartialOrder, est: &PartialOrder) -> Result<OrderAgreement, EvalError> {
    let n = reference.n_items();
    if est.n_items() != n {
        return Err(EvalError::ItemMismatch(n, est.n_items()));
    }
    let (mut concordant, mut discordant, mut reference_comparable) = (0, 0, 0);
    for (i, j) in pair_list(n) {
        if reference.comparable(i, j) {
            reference_comparable += 1;
        }
        let agree = (est.precedes(i, j) && reference.precedes(i, j)) || (est.precedes(j, i) && reference.precedes(j, i));
        let disagree = (est.precedes(i, j) && reference.precedes(j, i)) || (est.precedes(j, i) && reference.precedes(i, j));
        concordant += usize::from(agree);
        discordant += usize::from(disagree);
    }
    let mut undefined = Vec::new();
    let completeness = if reference_comparable == 0 {
        undefined.push("completeness: reference order has no comparable pair".to_owned());
        None
    } else {
        Some((concordant + discordant) as f64 / reference_comparable as f64)
    };
    let correctness = if concordant + discordant == 0 {
        undefined.push("correctness: estimate is comparable on no reference-comparable pair".to_owned());
        None
    } else {
        Some(concordant as f64 / (concordant + discordant) as f64)
    };
    let geomean = match (correctness, completeness) {
        (Some(a), Some(b)) => Some((a * b).sqrt()),
        _ => None,
    };
    Ok(OrderAgreement {
        concordant,
        discordant,
        reference_comparable,
        correctness,
        completeness,
        geomean,
        undefined,
    })
}

/// Random split of the comparisons into train/test parts.
pub fn train_test_split<R: Rng + ?Sized>(
    d: &ComparisonDataset,
    train_fraction: f64,
    rng: &mut R,
) -> Result<(ComparisonDataset, ComparisonDataset), DataError> {
    let mut rows = d.comparisons().to_vec();
    rows.shuffle(rng);
    let cut = ((rows.len() as f64) * train_fraction.clamp(0.0, 1.0)).round() as usize;
    let test = rows.split_off(cut.min(rows.len()));
    Ok((d.with_comparisons(rows)?, d.with_comparisons(test)?))
}

/// Metrics of fitted scores against a known ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitEvaluation {
    pub f1: F1Scores,
    pub rules: Vec<RuleOutcome>,
    pub agreement: OrderAgreement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleOutcome {
    pub rule: String,
    pub threshold: f64,
    pub cells: ConfusionCells,
    pub fdr: f64,
    pub power: f64,
}

/// F1 at `λ̂`, FDR/Power for every available rule, and correctness/completeness
/// of the `λ̂`-cut against the true order.
pub fn evaluate_fit(truth: &GroundTruth, scores: &[f64], bounds: &ThresholdBounds, rules: &[ThresholdRule]) -> Result<FitEvaluation, EvalError> {
    let n = truth.scores_star.len();
    if scores.len() != n {
        return Err(EvalError::ItemMismatch(n, scores.len()));
    }
    let f1 = f1_scores(&ground_truth_classes(truth), &classify_pairs(scores, bounds.lambda_hat))?;
    let truth_set = incomparable_set(&truth.scores_star, truth.lambda_star);
    let rules = rules
        .iter()
        .map(|&rule| {
            let threshold = bounds.threshold(rule);
            let cells = confusion(&truth_set, &incomparable_set(scores, threshold), n);
            let fp = fdr_power(&cells);
            RuleOutcome {
                rule: rule.name(),
                threshold,
                cells,
                fdr: fp.fdr,
                power: fp.power,
            }
        })
        .collect();
    let agreement = correctness_completeness(
        &lambda_cut(&truth.scores_star, truth.lambda_star),
        &lambda_cut(scores, bounds.lambda_hat),
    )?;
    Ok(FitEvaluation { f1, rules, agreement })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
    /// Sample standard deviation (divisor `k − 1`).
    pub std: f64,
}

impl SummaryStats {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let k = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / k;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        Some(SummaryStats {
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            mean,
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            std: var.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOutcome {
    pub replication: usize,
    pub converged: bool,
    pub lambda_hat: f64,
    #[serde(rename = "Delta")]
    pub delta: Option<f64>,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub rules: Vec<RuleOutcome>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSummary {
    pub rule: String,
    /// Replications for which this rule could be evaluated.
    pub evaluated: usize,
    pub mean_fdr: f64,
    pub mean_power: f64,
    pub fdr_zero_fraction: f64,
    pub power_one_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub generator: SimConfig,
    pub fitted_model: LinkModel,
    pub macro_f1: Option<SummaryStats>,
    pub micro_f1: Option<SummaryStats>,
    pub rules: Vec<RuleSummary>,
    /// Replications whose fit returned an error; excluded from the aggregates.
    pub failures: Vec<(usize, String)>,
    /// Included replications whose solver stopped without meeting the tolerance.
    pub nonconverged: usize,
    pub replications: Vec<ReplicationOutcome>,
}

fn run_replication(cfg: &SimConfig, model: LinkModel, solver: &SolverConfig, rep: usize) -> Result<ReplicationOutcome, String> {
    let (truth, data) = generate_replication(cfg, rep).map_err(|e| e.to_string())?;
    let fitted = fit(&data, model, solver).map_err(|e| e.to_string())?;
    let mut notes = fitted.diagnostics.clone();
    let lambda_hat = fitted.theta_hat.lambda;
    let (bounds, rules) = match infer(&data, model, &fitted) {
        Ok(report) => (report.bounds(lambda_hat), ThresholdRule::BUILTIN.to_vec()),
        Err(e) => {
            notes.push(format!("inference unavailable: {e}"));
            (ThresholdBounds::new(lambda_hat, f64::NAN), vec![ThresholdRule::Mle])
        }
    };
    let eval = evaluate_fit(&truth, &fitted.theta_hat.scores, &bounds, &rules).map_err(|e| e.to_string())?;
    Ok(ReplicationOutcome {
        replication: rep,
        converged: fitted.converged,
        lambda_hat,
        delta: bounds.delta.is_finite().then_some(bounds.delta),
        macro_f1: eval.f1.macro_f1,
        micro_f1: eval.f1.micro_f1,
        rules: eval.rules,
        notes,
    })
}

/// Generates `cfg.replications` datasets, fits `model` to each and scores the
/// fits against the generating truth.
pub fn run_simulation_experiment(cfg: &SimConfig, model: LinkModel, solver: &SolverConfig) -> Result<EnsembleReport, SimError> {
    cfg.validate()?;
    let results: Vec<Result<ReplicationOutcome, String>> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(cfg, model, solver, rep))
        .collect();

    let mut replications = Vec::new();
    let mut failures = Vec::new();
    for (rep, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => replications.push(o),
            Err(e) => failures.push((rep, e)),
        }
    }
    let macros: Vec<f64> = replications.iter().map(|r| r.macro_f1).collect();
    let micros: Vec<f64> = replications.iter().map(|r| r.micro_f1).collect();
    let rules = ThresholdRule::BUILTIN
        .iter()
        .map(|rule| {
            let name = rule.name();
            let outs: Vec<&RuleOutcome> = replications
                .iter()
                .filter_map(|r| r.rules.iter().find(|o| o.rule == name))
                .collect();
            let k = outs.len().max(1) as f64;
            RuleSummary {
                evaluated: outs.len(),
                mean_fdr: outs.iter().map(|o| o.fdr).sum::<f64>() / k,
                mean_power: outs.iter().map(|o| o.power).sum::<f64>() / k,
                fdr_zero_fraction: outs.iter().filter(|o| o.fdr == 0.0).count() as f64 / k,
                power_one_fraction: outs.iter().filter(|o| o.power == 1.0).count() as f64 / k,
                rule: name,
            }
        })
        .collect();
    Ok(EnsembleReport {
        generator: cfg.clone(),
        fitted_model: model,
        macro_f1: SummaryStats::of(&macros),
        micro_f1: SummaryStats::of(&micros),
        rules,
        nonconverged: replications.iter().filter(|r| !r.converged).count(),
        failures,
        replications,
    })
}

/// Parses `start:step:end` (inclusive end) into a list of values.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, EvalError> {
    let bad = || EvalError::BadGrid(spec.to_owned());
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [v] => Ok(vec![*v]),
        &[start, step, end] if step > 0.0 && end >= start => {
            let count = ((end - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|k| start + step * k as f64).collect())
        }
        _ => Err(bad()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub lambda_star: f64,
    pub rules: Vec<RuleSummary>,
}

/// FDR/Power per threshold rule as the true margin varies.
pub fn fdr_power_curve(base: &SimConfig, grid: &[f64], model: LinkModel, solver: &SolverConfig) -> Result<Vec<CurveRow>, SimError> {
    grid.iter()
        .map(|&lambda_star| {
            let cfg = SimConfig {
                lambda_star,
                ..base.clone()
            };
            let report = run_simulation_experiment(&cfg, model, solver)?;
            Ok(CurveRow {
                lambda_star,
                rules: report.rules,
            })
        })
        .collect()
}

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from("lambda_star");
    for rule in ThresholdRule::BUILTIN {
        let _ = write!(out, ",fdr_{0},power_{0}", rule.name());
    }
    out.push('\n');
    for row in rows {
        let _ = write!(out, "{}", row.lambda_star);
        for rule in ThresholdRule::BUILTIN {
            let name = rule.name();
            match row.rules.iter().find(|r| r.rule == name) {
                Some(r) if r.evaluated > 0 => {
                    let _ = write!(out, ",{:.6},{:.6}", r.mean_fdr, r.mean_power);
                }
                _ => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

/// Min/mean/max/std table of one metric, one row per fitted model.
pub fn format_table(title: &str, reports: &[EnsembleReport], metric: impl Fn(&EnsembleReport) -> Option<SummaryStats>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "{:<22}{:>9}{:>9}{:>9}{:>9}", "", "min", "mean", "max", "std");
    for r in reports {
        match metric(r) {
            Some(s) => {
                let _ = writeln!(
                    out,
                    "{:<22}{:>9.4}{:>9.4}{:>9.4}{:>9.4}",
                    r.fitted_model.title(),
                    s.min,
                    s.mean,
                    s.max,
                    s.std
                );
            }
            None => {
                let _ = writeln!(out, "{:<22}{:>9}", r.fitted_model.title(), "n/a");
            }
        }
    }
    out
}
