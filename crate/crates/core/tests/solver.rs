use margin_rank::comparisons::{Comparison, ComparisonDataset, ItemRegistry};
use margin_rank::evaluate::run_simulation_experiment;
use margin_rank::inference::{fisher_information, incomparable_set, variance_estimates};
use margin_rank::mle::{nll, nll_grad, ReducedTheta};
use margin_rank::simulate::{sample_comparisons, sample_scores, GroundTruth, SimConfig};
use margin_rank::{fit, LinkModel, SolverConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dataset(model: LinkModel, n: usize, samples: usize, scale: f64, seed: u64) -> ComparisonDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = GroundTruth {
        scores_star: sample_scores(n, scale, &mut rng),
        lambda_star: 0.8,
    };
    let comps = sample_comparisons(&truth, model, samples, &mut rng);
    ComparisonDataset::new(ItemRegistry::anonymous(n), comps).unwrap()
}

fn model() -> impl Strategy<Value = LinkModel> {
    prop_oneof![
        Just(LinkModel::Uniform),
        Just(LinkModel::BradleyTerry),
        Just(LinkModel::ThurstoneMosteller)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn descent_is_monotone(m in model(), n in 3usize..7, samples in 30usize..400, seed in any::<u64>()) {
        let d = dataset(m, n, samples, 1.5, seed);
        let f = fit(&d, m, &SolverConfig::default()).unwrap();
        for w in f.nll_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()), "{:?}", f.nll_trace);
        }
        prop_assert_eq!(*f.nll_trace.last().unwrap(), f.nll);
    }

    #[test]
    fn fitted_theta_is_valid(m in model(), n in 3usize..7, samples in 30usize..400, seed in any::<u64>()) {
        let d = dataset(m, n, samples, 1.5, seed);
        let cfg = SolverConfig::default();
        let f = fit(&d, m, &cfg).unwrap();
        let sum: f64 = f.theta_hat.scores.iter().sum();
        prop_assert!(sum.abs() <= 1e-9);
        prop_assert!(f.theta_hat.lambda >= 0.0 && f.theta_hat.lambda <= cfg.lambda_cap);
        prop_assert!(f.nll.is_finite());
        if f.converged {
            prop_assert!(f.grad_norm <= cfg.tol);
        }
        // The reported value is the objective at the reported point.
        let again = nll(&d, m, &f.theta_hat).unwrap();
        prop_assert!((again - f.nll).abs() <= 1e-9 * (1.0 + f.nll.abs()));
    }

    #[test]
    fn fit_is_deterministic(m in model(), seed in any::<u64>()) {
        let d = dataset(m, 5, 200, 1.0, seed);
        let a = fit(&d, m, &SolverConfig::default()).unwrap();
        let b = fit(&d, m, &SolverConfig::default()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn objective_ignores_common_shift(m in model(), seed in any::<u64>(), shift in -5.0f64..5.0) {
        let d = dataset(m, 4, 100, 1.0, seed);
        let f = fit(&d, m, &SolverConfig::default()).unwrap();
        let shifted: Vec<f64> = f.theta_hat.scores.iter().map(|s| s + shift).collect();
        let a = margin_rank::mle::nll_at(&d, m, f.theta_hat.lambda, &f.theta_hat.scores).unwrap();
        let b = margin_rank::mle::nll_at(&d, m, f.theta_hat.lambda, &shifted).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn smooth_fits_reach_a_stationary_point(seed in any::<u64>()) {
        for m in [LinkModel::BradleyTerry, LinkModel::ThurstoneMosteller] {
            let d = dataset(m, 6, 600, 1.0, seed);
            let f = fit(&d, m, &SolverConfig::default()).unwrap();
            prop_assert!(f.converged, "{:?}", f.diagnostics);
            let g = nll_grad(&d, m, &f.theta_hat.to_reduced()).unwrap();
            prop_assert!(g.amax() <= 1e-8);
        }
    }

    #[test]
    fn variances_ignore_observation_order(seed in any::<u64>()) {
        let m = LinkModel::BradleyTerry;
        let d = dataset(m, 5, 300, 1.0, seed);
        let f = fit(&d, m, &SolverConfig::default()).unwrap();
        let mut comps: Vec<Comparison> = d.comparisons().to_vec();
        comps.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
        let shuffled = ComparisonDataset::new(d.items().clone(), comps).unwrap();
        let a = variance_estimates(&fisher_information(&d, m, &f.theta_hat).unwrap()).unwrap();
        let b = variance_estimates(&fisher_information(&shuffled, m, &f.theta_hat).unwrap()).unwrap();
        prop_assert!((a.sigma2_lambda - b.sigma2_lambda).abs() <= 1e-9 * a.sigma2_lambda);
        for (x, y) in a.sigma2_scores.iter().zip(&b.sigma2_scores) {
            prop_assert!((x - y).abs() <= 1e-9 * x);
        }
    }

    #[test]
    fn incomparable_sets_nest(scores in prop::collection::vec(-5.0f64..5.0, 2..12), a in 0.0f64..4.0, b in 0.0f64..4.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(incomparable_set(&scores, lo).is_subset(&incomparable_set(&scores, hi)));
    }
}

#[test]
fn bt_recovers_generating_parameters() {
    let m = LinkModel::BradleyTerry;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let truth = GroundTruth {
        scores_star: vec![-1.0, -0.3, 0.2, 1.1],
        lambda_star: 0.7,
    };
    let comps = sample_comparisons(&truth, m, 40_000, &mut rng);
    let d = ComparisonDataset::new(ItemRegistry::anonymous(4), comps).unwrap();
    let f = fit(&d, m, &SolverConfig::default()).unwrap();
    assert!(f.converged);
    assert!((f.theta_hat.lambda - 0.7).abs() < 0.05, "{}", f.theta_hat.lambda);
    for (a, b) in f.theta_hat.scores.iter().zip(truth.centered_scores()) {
        assert!((a - b).abs() < 0.05, "{a} vs {b}");
    }
}

#[test]
fn uniform_fit_is_a_local_minimum() {
    // Data with many saturated pairs, where the uniform objective has kinks
    // near the optimum.
    let m = LinkModel::Uniform;
    let d = dataset(m, 8, 2000, 2.0, 3);
    let f = fit(&d, m, &SolverConfig::default()).unwrap();
    // Small random perturbations never find a lower value.
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let base = f.theta_hat.to_reduced();
    for _ in 0..500 {
        let mut x = base.0.clone();
        for v in x.iter_mut() {
            *v += 1e-4 * rand::Rng::random_range(&mut rng, -1.0..1.0);
        }
        x[0] = x[0].max(0.0);
        let v = margin_rank::mle::nll_reduced(&d, m, &ReducedTheta(x)).unwrap();
        assert!(v >= f.nll - 1e-7, "{v} < {}", f.nll);
    }
}

#[test]
fn bound_thresholds_control_fdr_and_power_in_every_replication() {
    let cfg = SimConfig::default();
    let r = run_simulation_experiment(&cfg, LinkModel::BradleyTerry, &SolverConfig::default()).unwrap();
    assert!(r.failures.is_empty());
    for rep in &r.replications {
        let get = |name: &str| rep.rules.iter().find(|o| o.rule == name).unwrap();
        assert_eq!(get("conservative").fdr, 0.0, "replication {}", rep.replication);
        assert_eq!(get("aggressive").power, 1.0, "replication {}", rep.replication);
    }
}
