//! Fisher-information variances and the FDR/Power threshold bounds.
//!
//! The estimated information is the reduced Hessian divided by `N`. Its
//! inverse gives asymptotic variances of `√N (θ̂ − θ*)`; the largest of them,
//! `δ̂`, sets the concentration radius `Δ = √(4 ln(n+1) δ̂) / √N`. Cutting at
//! `λ̂ − 3Δ` makes every declared-incomparable pair truly incomparable with
//! high probability (FDR = 0), cutting at `λ̂ + 3Δ` catches every truly
//! incomparable pair (Power = 1).

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparisons::ComparisonDataset;
use crate::links::LinkModel;
use crate::mle::{nll_hessian, FitResult, MleError, Theta};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("information matrix is singular (min eigenvalue {min_eigenvalue:.3e}); null direction {null_direction:?}")]
    Singular {
        min_eigenvalue: f64,
        null_direction: Vec<f64>,
    },
    #[error("information matrix must be square with at least 2 rows, got {0}x{1}")]
    Shape(usize, usize),
    #[error(transparent)]
    Mle(#[from] MleError),
    #[error("invalid threshold rule `{0}` (expected mle, conservative, aggressive or fixed:<value>)")]
    BadRule(String),
}

/// Estimated Fisher information `Ĩ = H(θ̂)/N` in reduced coordinates.
pub fn fisher_information(d: &ComparisonDataset, m: LinkModel, theta_hat: &Theta) -> Result<DMatrix<f64>, InferenceError> {
    let h = nll_hessian(d, m, &theta_hat.to_reduced())?;
    let info = h / d.len() as f64;
    check_positive_definite(&info)?;
    Ok(info)
}

fn check_positive_definite(info: &DMatrix<f64>) -> Result<(), InferenceError> {
    if info.clone().cholesky().is_some() {
        return Ok(());
    }
    let eig = SymmetricEigen::new(info.clone());
    let (k, min) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((0, f64::NAN));
    Err(InferenceError::Singular {
        min_eigenvalue: min,
        null_direction: eig.eigenvectors.column(k).iter().copied().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimates {
    pub sigma2_lambda: f64,
    /// One entry per item; the last is the implied score's variance.
    pub sigma2_scores: Vec<f64>,
    pub delta_hat: f64,
}

/// Diagonal of `Ĩ⁻¹`, plus the quadratic form `(0,1,…,1) Ĩ⁻¹ (0,1,…,1)ᵀ` for
/// the implied last score.
pub fn variance_estimates(info: &DMatrix<f64>) -> Result<VarianceEstimates, InferenceError> {
    let dim = info.nrows();
    if dim < 2 || info.ncols() != dim {
        return Err(InferenceError::Shape(info.nrows(), info.ncols()));
    }
    let Some(chol) = info.clone().cholesky() else {
        check_positive_definite(info)?;
        unreachable!("cholesky failed on a positive definite matrix");
    };
    let l = chol.l();
    // (Ĩ⁻¹)_kk = ‖L⁻¹ e_k‖², vᵀĨ⁻¹v = ‖L⁻¹ v‖².
    let l_inv = l
        .solve_lower_triangular(&DMatrix::identity(dim, dim))
        .expect("cholesky factor has a positive diagonal");
    let diag: Vec<f64> = (0..dim).map(|k| l_inv.column(k).norm_squared()).collect();
    let ones = DVector::from_fn(dim, |k, _| if k == 0 { 0.0 } else { 1.0 });
    let last = (&l_inv * ones).norm_squared();

    let sigma2_lambda = diag[0];
    let mut sigma2_scores: Vec<f64> = diag[1..].to_vec();
    sigma2_scores.push(last);
    let delta_hat = sigma2_scores.iter().copied().fold(sigma2_lambda, f64::max);
    Ok(VarianceEstimates {
        sigma2_lambda,
        sigma2_scores,
        delta_hat,
    })
}

/// `Δ = √(4 ln(n+1) δ̂) / √N`.
pub fn compute_delta(delta_hat: f64, n: usize, samples: usize) -> f64 {
    (4.0 * ((n + 1) as f64).ln() * delta_hat).sqrt() / (samples as f64).sqrt()
}

/// Unordered item pairs stored as `(i, j)` with `i < j`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSet {
    pairs: BTreeSet<(usize, usize)>,
}

impl PairSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `{i, j}`; self-pairs are ignored.
    pub fn insert(&mut self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        self.pairs.insert((i.min(j), i.max(j)))
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.pairs.contains(&(i.min(j), i.max(j)))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn is_subset(&self, other: &PairSet) -> bool {
        self.pairs.is_subset(&other.pairs)
    }
}

impl FromIterator<(usize, usize)> for PairSet {
    fn from_iter<T: IntoIterator<Item = (usize, usize)>>(iter: T) -> Self {
        let mut s = PairSet::new();
        for (i, j) in iter {
            s.insert(i, j);
        }
        s
    }
}

/// Pairs with `|s_i − s_j| ≤ λ`.
pub fn incomparable_set(scores: &[f64], lambda: f64) -> PairSet {
    let lambda = if lambda < 0.0 {
        log::warn!("negative threshold {lambda} clamped to 0");
        0.0
    } else {
        lambda
    };
    let n = scores.len();
    let mut set = PairSet::new();
    for i in 0..n {
        for j in i + 1..n {
            if (scores[i] - scores[j]).abs() <= lambda {
                set.insert(i, j);
            }
        }
    }
    set
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdBounds {
    pub lambda_hat: f64,
    #[serde(rename = "Delta")]
    pub delta: f64,
    pub lambda_lower: f64,
    pub lambda_upper: f64,
}

impl ThresholdBounds {
    pub fn new(lambda_hat: f64, delta: f64) -> Self {
        ThresholdBounds {
            lambda_hat,
            delta,
            lambda_lower: (lambda_hat - 3.0 * delta).max(0.0),
            lambda_upper: lambda_hat + 3.0 * delta,
        }
    }

    pub fn threshold(&self, rule: ThresholdRule) -> f64 {
        match rule {
            ThresholdRule::Mle => self.lambda_hat,
            ThresholdRule::Conservative => self.lambda_lower,
            ThresholdRule::Aggressive => self.lambda_upper,
            ThresholdRule::Fixed(v) => v,
        }
    }
}

pub fn threshold_bounds(fit: &FitResult, var: &VarianceEstimates, d: &ComparisonDataset) -> ThresholdBounds {
    let delta = compute_delta(var.delta_hat, d.n_items(), d.len());
    ThresholdBounds::new(fit.theta_hat.lambda, delta)
}

/// Which margin to cut the fitted scores at.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ThresholdRule {
    /// `λ̂`
    #[default]
    Mle,
    /// `λ̂ − 3Δ`, floored at 0
    Conservative,
    /// `λ̂ + 3Δ`
    Aggressive,
    Fixed(f64),
}

impl ThresholdRule {
    pub const BUILTIN: [ThresholdRule; 3] = [ThresholdRule::Mle, ThresholdRule::Conservative, ThresholdRule::Aggressive];

    pub fn name(&self) -> String {
        match self {
            ThresholdRule::Mle => "mle".into(),
            ThresholdRule::Conservative => "conservative".into(),
            ThresholdRule::Aggressive => "aggressive".into(),
            ThresholdRule::Fixed(v) => format!("fixed:{v}"),
        }
    }
}

impl fmt::Display for ThresholdRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for ThresholdRule {
    type Err = InferenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "mle" => Ok(ThresholdRule::Mle),
            "conservative" => Ok(ThresholdRule::Conservative),
            "aggressive" => Ok(ThresholdRule::Aggressive),
            _ => s
                .strip_prefix("fixed:")
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|v| v.is_finite() && *v >= 0.0)
                .map(ThresholdRule::Fixed)
                .ok_or_else(|| InferenceError::BadRule(s.to_owned())),
        }
    }
}

/// Variances, `δ̂`, `Δ` and bounds for one fit, as serialized alongside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub sigma2_lambda: f64,
    pub sigma2_scores: Vec<f64>,
    pub delta_hat: f64,
    #[serde(rename = "Delta")]
    pub delta: f64,
    pub lambda_lower: f64,
    pub lambda_upper: f64,
}

impl InferenceReport {
    pub fn bounds(&self, lambda_hat: f64) -> ThresholdBounds {
        ThresholdBounds {
            lambda_hat,
            delta: self.delta,
            lambda_lower: self.lambda_lower,
            lambda_upper: self.lambda_upper,
        }
    }
}

/// Runs information → variances → bounds for a finished fit.
pub fn infer(d: &ComparisonDataset, m: LinkModel, fit: &FitResult) -> Result<InferenceReport, InferenceError> {
    let info = fisher_information(d, m, &fit.theta_hat)?;
    let var = variance_estimates(&info)?;
    let b = threshold_bounds(fit, &var, d);
    Ok(InferenceReport {
        sigma2_lambda: var.sigma2_lambda,
        sigma2_scores: var.sigma2_scores,
        delta_hat: var.delta_hat,
        delta: b.delta,
        lambda_lower: b.lambda_lower,
        lambda_upper: b.lambda_upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_inverse() {
        let (a, b, c) = (3.0, 0.7, 2.0);
        let v = variance_estimates(&dmatrix![a, b; b, c]).unwrap();
        let det = a * c - b * b;
        assert!((v.sigma2_lambda - c / det).abs() < 1e-14);
        assert!((v.sigma2_scores[0] - a / det).abs() < 1e-14);
        assert!((v.sigma2_scores[1] - a / det).abs() < 1e-14);
        assert_eq!(v.delta_hat, v.sigma2_lambda.max(v.sigma2_scores[0]));
    }

    #[test]
    fn identity_information() {
        let v = variance_estimates(&DMatrix::identity(4, 4)).unwrap();
        assert!((v.sigma2_lambda - 1.0).abs() < 1e-15);
        assert!(v.sigma2_scores[..3].iter().all(|x| (x - 1.0).abs() < 1e-15));
        // (0,1,1,1)·I·(0,1,1,1)ᵀ = 3
        assert!((v.sigma2_scores[3] - 3.0).abs() < 1e-14);
        assert_eq!(v.delta_hat, 3.0);
    }

    #[test]
    fn singular_information_reports_null_direction() {
        let err = variance_estimates(&dmatrix![1.0, 1.0; 1.0, 1.0]).unwrap_err();
        let InferenceError::Singular { null_direction, .. } = err else {
            panic!("{err:?}")
        };
        assert!((null_direction[0] + null_direction[1]).abs() < 1e-12);
    }

    #[test]
    fn delta_formula() {
        let d = compute_delta(0.5, 20, 10_000);
        assert!((d - (4.0 * 21f64.ln() * 0.5).sqrt() / 100.0).abs() < 1e-15);
        assert!((d - 0.024676).abs() < 1e-5);
        assert_eq!(compute_delta(0.0, 20, 10_000), 0.0);
        let q = compute_delta(0.5, 20, 40_000);
        assert!((q - d / 2.0).abs() < 1e-15);
    }

    #[test]
    fn incomparable_examples() {
        let s = incomparable_set(&[3.0, 1.0, 0.0], 1.5);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![(1, 2)]);
        assert!(incomparable_set(&[3.0, 1.0, 0.0], 0.0).is_empty());
        assert_eq!(incomparable_set(&[0.5; 5], 0.0).len(), 10);
        assert!(incomparable_set(&[3.0, 1.0, 0.0], -1.0).is_empty());
    }

    #[test]
    fn bounds_examples() {
        let b = ThresholdBounds::new(1.0, 0.02);
        assert!((b.lambda_lower - 0.94).abs() < 1e-12 && (b.lambda_upper - 1.06).abs() < 1e-12);
        let b = ThresholdBounds::new(1.0, 0.0);
        assert_eq!((b.lambda_lower, b.lambda_upper), (1.0, 1.0));
        let b = ThresholdBounds::new(0.05, 0.05);
        assert_eq!(b.lambda_lower, 0.0);
    }

    #[test]
    fn rule_parsing() {
        assert_eq!("conservative".parse::<ThresholdRule>().unwrap(), ThresholdRule::Conservative);
        assert_eq!("fixed:0.75".parse::<ThresholdRule>().unwrap(), ThresholdRule::Fixed(0.75));
        assert!("fixed:-1".parse::<ThresholdRule>().is_err());
        assert!("median".parse::<ThresholdRule>().is_err());
    }

    proptest! {
        #[test]
        fn nested_sets(scores in prop::collection::vec(-5.0f64..5.0, 2..12), a in 0.0f64..4.0, b in 0.0f64..4.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(incomparable_set(&scores, lo).is_subset(&incomparable_set(&scores, hi)));
        }

        #[test]
        fn bounds_bracket_estimate(lambda in 0.0f64..5.0, delta in 0.0f64..2.0) {
            let b = ThresholdBounds::new(lambda, delta);
            prop_assert!(b.lambda_lower <= b.lambda_hat && b.lambda_hat <= b.lambda_upper);
            prop_assert!(b.lambda_lower >= 0.0);
        }
    }
}
