//! Synthetic comparison data with known ground truth.
//!
//! Scores are drawn as `score_scale · N(0, 1)`. Each sample picks an unordered
//! pair uniformly (with replacement), orients it by a fair coin and labels it
//! by thresholding `s_i − s_j + ε` against `±λ*`, with `ε` drawn from the
//! model's noise distribution.
//!
//! Randomness comes from ChaCha8 seeded with `seed`; replication `r` uses
//! stream `r` of that seed, so replications are independent and can be
//! generated in any order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comparisons::{Comparison, ComparisonDataset, DataError, ItemId, ItemRegistry, Label};
use crate::evaluate::{classify_pairs, PairClass};
use crate::links::LinkModel;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    /// Number of comparisons per replication.
    pub samples: usize,
    pub lambda_star: f64,
    pub score_scale: f64,
    pub model: LinkModel,
    pub seed: u64,
    pub replications: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 20,
            samples: 10_000,
            lambda_star: 1.0,
            score_scale: 10.0,
            model: LinkModel::BradleyTerry,
            seed: 0,
            replications: 20,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n < 2 {
            return Err(SimError::Config(format!("need n >= 2 items, got {}", self.n)));
        }
        if self.samples < 1 {
            return Err(SimError::Config("need at least one sample".into()));
        }
        if self.lambda_star < 0.0 || !self.lambda_star.is_finite() {
            return Err(SimError::Config(format!("lambda_star must be finite and >= 0, got {}", self.lambda_star)));
        }
        if self.score_scale < 0.0 || !self.score_scale.is_finite() {
            return Err(SimError::Config(format!("score_scale must be finite and >= 0, got {}", self.score_scale)));
        }
        if self.replications < 1 {
            return Err(SimError::Config("need at least one replication".into()));
        }
        Ok(())
    }

    /// Independent generator for replication `rep`.
    pub fn rng(&self, rep: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(rep as u64);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scores_star: Vec<f64>,
    pub lambda_star: f64,
}

impl GroundTruth {
    /// Scores shifted to mean zero, comparable with fitted scores.
    pub fn centered_scores(&self) -> Vec<f64> {
        let mean = self.scores_star.iter().sum::<f64>() / self.scores_star.len() as f64;
        self.scores_star.iter().map(|s| s - mean).collect()
    }
}

/// One draw of the model's noise `ε`.
pub fn sample_noise<R: Rng + ?Sized>(model: LinkModel, rng: &mut R) -> f64 {
    match model {
        LinkModel::Uniform => rng.random_range(-1.0..=1.0),
        LinkModel::BradleyTerry => {
            // Inverse logistic c.d.f. on an open-interval uniform.
            let u: f64 = loop {
                let u: f64 = rng.random();
                if u > 0.0 {
                    break u;
                }
            };
            (u / (1.0 - u)).ln()
        }
        LinkModel::ThurstoneMosteller => StandardNormal.sample(rng),
    }
}

/// Label for a comparison of `left` against `right` with noise `eps`.
pub fn label_from_noise(left_score: f64, right_score: f64, eps: f64, lambda: f64) -> Label {
    let v = left_score - right_score + eps;
    if v > lambda {
        Label::LeftPreferred
    } else if v < -lambda {
        Label::RightPreferred
    } else {
        Label::Tie
    }
}

/// `(P(y=+1), P(y=0), P(y=−1))` for score difference `s_i − s_j`.
pub fn outcome_probabilities(model: LinkModel, diff: f64, lambda: f64) -> [f64; 3] {
    let plus = model.sf_unchecked(lambda - diff);
    let minus = model.cdf_unchecked(-lambda - diff);
    let tie = model.mass_between(-lambda - diff, lambda - diff);
    [plus, tie, minus]
}

pub fn sample_scores<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

/// Draws `samples` comparisons under a fixed ground truth.
pub fn sample_comparisons<R: Rng + ?Sized>(truth: &GroundTruth, model: LinkModel, samples: usize, rng: &mut R) -> Vec<Comparison> {
    let n = truth.scores_star.len();
    let n_pairs = n * (n - 1) / 2;
    (0..samples)
        .map(|_| {
            let (a, b) = unrank_pair(rng.random_range(0..n_pairs), n);
            let (left, right) = if rng.random::<bool>() { (a, b) } else { (b, a) };
            let eps = sample_noise(model, rng);
            let label = label_from_noise(truth.scores_star[left], truth.scores_star[right], eps, truth.lambda_star);
            Comparison {
                left: ItemId(left),
                right: ItemId(right),
                label,
            }
        })
        .collect()
}

/// Maps `k ∈ [0, n(n−1)/2)` to the `k`-th pair `(a, b)`, `a < b`, in
/// lexicographic order.
fn unrank_pair(mut k: usize, n: usize) -> (usize, usize) {
    let mut a = 0;
    while k >= n - 1 - a {
        k -= n - 1 - a;
        a += 1;
    }
    (a, a + 1 + k)
}

/// Ground truth and dataset for replication `rep`.
pub fn generate_replication(cfg: &SimConfig, rep: usize) -> Result<(GroundTruth, ComparisonDataset), SimError> {
    cfg.validate()?;
    let mut rng = cfg.rng(rep);
    let truth = GroundTruth {
        scores_star: sample_scores(cfg.n, cfg.score_scale, &mut rng),
        lambda_star: cfg.lambda_star,
    };
    let comparisons = sample_comparisons(&truth, cfg.model, cfg.samples, &mut rng);
    let data = ComparisonDataset::new(ItemRegistry::anonymous(cfg.n), comparisons)?;
    Ok((truth, data))
}

pub fn generate(cfg: &SimConfig) -> Result<(GroundTruth, ComparisonDataset), SimError> {
    generate_replication(cfg, 0)
}

/// True class of every unordered pair: incomparable iff `|s*_i − s*_j| ≤ λ*`.
pub fn ground_truth_classes(gt: &GroundTruth) -> Vec<PairClass> {
    classify_pairs(&gt.scores_star, gt.lambda_star)
}
