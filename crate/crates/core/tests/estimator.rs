use proptest::prelude::*;
use romberg::analytic::bs_partial_lookback;
use romberg::estimator::{
    estimate, estimate_black_scholes, pilot_from_pair, run_extrapolation, weighted_sum, EstimatorConfig, Scheme,
    SyntheticExpansion,
};
use romberg::model::BlackScholes;
use romberg::payoff::{ExtremaSource, PayoffKind, PayoffSpec};
use romberg::scheme::Coupling;
use romberg::weights::{half_order_weights, leading_coefficient_factor, standard_weights, ErrorScale};

fn synthetic(order: usize, steps: usize, mean: f64, coefficients: Vec<f64>, unit: f64) -> SyntheticExpansion {
    SyntheticExpansion { mean, coefficients, exponent_unit: unit, order, steps, noise_sd: 0.0, seed: 0 }
}

fn combined_mean(s: &SyntheticExpansion, weights: &[f64]) -> f64 {
    run_extrapolation(s, weights, 4, Some(1)).unwrap().combined.mean()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn integer_weights_cancel_planted_terms(
        order in 1usize..=6,
        steps in 1usize..=20,
        mean in -10.0f64..10.0,
        coefficients in prop::collection::vec(-5.0f64..5.0, 5),
    ) {
        let c = coefficients[..order - 1].to_vec();
        let scale = 1.0 + mean.abs() + c.iter().map(|x| x.abs()).sum::<f64>();
        let s = synthetic(order, steps, mean, c, 1.0);
        let w = standard_weights(order).unwrap();
        prop_assert!((combined_mean(&s, w.weights()) - mean).abs() <= 1e-11 * scale);
    }

    #[test]
    fn weight_invariants(order in 1usize..=10) {
        let w = standard_weights(order).unwrap();
        let l1: f64 = w.weights().iter().map(|a| a.abs()).sum();
        prop_assert!((w.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-14 * l1);
        prop_assert!(w.max_residual() <= 1e-13 * l1);
        let h = half_order_weights(order).unwrap();
        prop_assert!(h.max_residual() <= 1e-12 * h.weights().iter().map(|a| a.abs()).sum::<f64>());
    }

    #[test]
    fn weighted_sum_matches_naive_on_benign_input(a in prop::collection::vec(0.0f64..1.0, 1..8)) {
        let v: Vec<f64> = a.iter().map(|x| 1.0 + x).collect();
        let naive: f64 = a.iter().zip(&v).map(|(x, y)| x * y).sum();
        prop_assert!((weighted_sum(&a, &v) - naive).abs() <= 1e-14 * naive.max(1.0));
    }
}

#[test]
fn combined_bias_is_the_leading_uncancelled_term() {
    // mean + Σ_{k ≤ R} c_k (rn)^{-k}: only c_R survives, scaled by (-1)^{R-1}/R!
    for order in 1..=6 {
        let steps = 3;
        let mut c = vec![0.4; order];
        c[order - 1] = 2.5;
        let s = synthetic(order, steps, 1.0, c, 1.0);
        let w = standard_weights(order).unwrap();
        let bias = combined_mean(&s, w.weights()) - 1.0;
        let expect = 2.5 * leading_coefficient_factor(order).unwrap() * (steps as f64).powi(-(order as i32));
        assert!((bias - expect).abs() < 1e-12 * expect.abs().max(1.0), "R={order}: {bias} vs {expect}");
    }
}

#[test]
fn pilot_recovers_leading_coefficient() {
    for order in 2..=4 {
        let steps = 8;
        let mut c = vec![0.3; order + 1];
        c[order - 1] = -1.7;
        let w = standard_weights(order).unwrap();
        let coarse = combined_mean(&synthetic(order, steps, 0.0, c.clone(), 1.0), w.weights());
        let fine = combined_mean(&synthetic(order, 2 * steps, 0.0, c, 1.0), w.weights());
        let pilot = pilot_from_pair(order, steps, (coarse, 0.0), (fine, 0.0));
        let target = 1.7 * leading_coefficient_factor(order).unwrap().abs();
        // the c_{R+1} term perturbs the estimate by O(1/n)
        assert!((pilot.c_tilde / target - 1.0).abs() < 0.1, "R={order}: {} vs {target}", pilot.c_tilde);
        assert!(!pilot.noisy);
    }
}

fn call() -> EstimatorConfig<BlackScholes> {
    let payoff = PayoffSpec::new(PayoffKind::VanillaCall { strike: 100.0 }, 0.15, 1.0, ExtremaSource::DiscreteGrid).unwrap();
    EstimatorConfig::new(BlackScholes::new(100.0, 0.15, 1.0), payoff, 1, 200, 100_000)
}

#[test]
fn consistent_variance_approaches_single_level_variance() {
    let reference = estimate(&call()).unwrap().variance;
    let mut c = call();
    c.order = 2;
    c.steps = 50;
    let consistent = estimate(&c).unwrap().variance;
    c.coupling = Coupling::Independent;
    let independent = estimate(&c).unwrap().variance;
    assert!((consistent / reference - 1.0).abs() < 0.1, "{consistent} vs {reference}");
    // Σα² = 5 for R = 2
    assert!((independent / reference - 5.0).abs() < 1.0, "{independent} vs {reference}");
}

#[test]
fn discrete_lookback_sits_below_continuous_price() {
    // the grid minimum exceeds the continuous one, so the discrete price is too low
    let payoff =
        PayoffSpec::new(PayoffKind::PartialLookbackCall { lambda: 1.1 }, 0.15, 1.0, ExtremaSource::DiscreteGrid).unwrap();
    let mut c = EstimatorConfig::new(BlackScholes::new(100.0, 0.15, 1.0), payoff, 1, 10, 100_000);
    c.scale = ErrorScale::HalfOrder;
    c.scheme = Scheme::Discrete;
    let r = estimate_black_scholes(&c).unwrap();
    let exact = bs_partial_lookback(100.0, 1.1, 1.0, 0.15, 1.0).unwrap();
    assert!(r.mean + 3.0 * r.std_err < exact, "{} ± {} vs {exact}", r.mean, r.std_err);
}

#[test]
fn worker_count_does_not_change_results() {
    let mut c = call();
    c.order = 3;
    c.steps = 4;
    c.samples = 20_000;
    c.workers = Some(1);
    let a = estimate(&c).unwrap();
    c.workers = Some(3);
    let b = estimate(&c).unwrap();
    assert_eq!((a.mean, a.variance), (b.mean, b.variance));
}
