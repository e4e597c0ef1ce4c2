use rwdrift::analytic::{drift_exact, entropy_exact, solve_traffic, DEFAULT_TOL};
use rwdrift::convolution::{distribution_at, entropy_and_length, ConvolutionConfig};
use rwdrift::group::{Letter, StepDistribution};
use rwdrift::simulate::*;
use rwdrift::walk::{FreeGroupWalk, FreeProductWalk};
use rwdrift::Error;

// Upper 0.001 quantile of the chi-square law with 3 degrees of freedom.
const CHI2_3DF_999: f64 = 16.266;

#[test]
fn one_step_law_goodness_of_fit() {
    let law = StepDistribution::new(&[0.4, 0.2, 0.3, 0.1]).unwrap();
    let walk = FreeGroupWalk::new(law.clone());
    let sampler = StepSampler::new(&walk);
    let samples = 1_000_000;
    let mut counts = [0usize; 4];
    for i in 0..samples {
        let w = sample_endpoint(&walk, &sampler, 1, &mut sample_rng(99, i as u64));
        counts[w.letters()[0].index()] += 1;
    }
    let chi2: f64 = (0..4)
        .map(|i| {
            let expected = samples as f64 * law.prob(Letter::from_index(i));
            (counts[i] as f64 - expected).powi(2) / expected
        })
        .sum();
    assert!(chi2 < CHI2_3DF_999, "chi2 = {chi2}");
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let walk = FreeGroupWalk::new(StepDistribution::new(&[0.4, 0.2, 0.3, 0.1]).unwrap());
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_drift(&walk, &LengthFunctional::Word, 500, 1000, 42).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
}

#[test]
fn uniform_drift_concentrates() {
    let walk = FreeGroupWalk::new(StepDistribution::uniform(2));
    let est = estimate_drift(&walk, &LengthFunctional::Word, 10_000, 200, 1).unwrap();
    assert!((est.value - 0.5).abs() < 0.01);
    assert!(est.z_score(0.5) < 3.0);
}

#[test]
fn green_drift_estimates_entropy() {
    let law = StepDistribution::symmetric(&[0.15, 0.35]).unwrap();
    let sol = solve_traffic(&law, DEFAULT_TOL).unwrap();
    let walk = FreeGroupWalk::new(law);
    let est = estimate_drift(&walk, &LengthFunctional::Green(sol.neg_log_z()), 10_000, 1_000, 8).unwrap();
    assert!(est.z_score(entropy_exact(&sol)) < 3.0, "{est:?}");
}

#[test]
fn green_needs_free_group() {
    let spec = rwdrift::group::FreeProductSpec::from_json(
        r#"{"factors":[{"kind":"cyclic","order":3,"law":[0.5,0.5]},{"kind":"cyclic","order":2,"law":[1.0]}],"alpha":[0.5,0.5]}"#,
    )
    .unwrap();
    let walk = FreeProductWalk::new(&spec);
    let err = estimate_drift(&walk, &LengthFunctional::Green(vec![1.0; 4]), 10, 10, 1).unwrap_err();
    assert!(matches!(err, Error::IncompatibleFunctional(_)));
}

#[test]
fn confidence_interval_calibration() {
    // At n = 4000 the finite-horizon bias is about a fifth of the stderr.
    let walk = FreeGroupWalk::new(StepDistribution::uniform(2));
    let replications = 200;
    let covered = (0..replications)
        .filter(|&r| estimate_drift(&walk, &LengthFunctional::Word, 4000, 200, 10_000 + r).unwrap().covers(0.5))
        .count();
    assert!(covered as f64 >= 0.9 * replications as f64, "coverage {covered}/{replications}");
}

#[test]
fn longer_horizon_does_not_exceed_shorter() {
    let walk = FreeGroupWalk::new(StepDistribution::new(&[0.3, 0.3, 0.05, 0.35]).unwrap());
    let a = estimate_drift(&walk, &LengthFunctional::Word, 1000, 2000, 3).unwrap();
    let b = estimate_drift(&walk, &LengthFunctional::Word, 2000, 2000, 4).unwrap();
    let pooled = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    assert!(b.value <= a.value + 3.0 * pooled);
}

#[test]
fn pointwise_entropy_is_unbiased_for_entropy_ratio() {
    // E[-ln p^(n)(X_n)] = H_n exactly, so the estimator targets H_n / n.
    let walk = FreeGroupWalk::new(StepDistribution::uniform(2));
    let cfg = ConvolutionConfig::default();
    let mut previous = f64::INFINITY;
    let h = 0.5 * 3f64.ln();
    for n in [4, 8, 12] {
        let est = estimate_entropy_pointwise(&walk, n, 20_000, n as u64, &cfg).unwrap();
        let exact = entropy_and_length(&distribution_at(&walk, n, &cfg).unwrap(), &walk).entropy / n as f64;
        assert!(est.z_score(exact) < 3.0, "n {n}: {est:?} vs {exact}");
        assert!(est.value < previous && est.value > h);
        previous = est.value;
    }
}

#[test]
fn drift_matches_analytic_value_on_a_skewed_law() {
    let law = StepDistribution::new(&[0.05, 0.25, 0.45, 0.25]).unwrap();
    let l = drift_exact(&solve_traffic(&law, DEFAULT_TOL).unwrap()).unwrap();
    let est = estimate_drift(&FreeGroupWalk::new(law), &LengthFunctional::Word, 20_000, 1_000, 77).unwrap();
    assert!(est.z_score(l) < 3.0, "{est:?} vs {l}");
}
