use proptest::prelude::*;
use rwdrift::convolution::*;
use rwdrift::group::{sphere_size, ReducedWord, StepDistribution};
use rwdrift::walk::{FreeGroupWalk, FreeProductWalk, GroupWalk};

/// Under the uniform law `|X_n|` is a birth-death chain: from 0 it moves up,
/// elsewhere up with probability `(2d-1)/2d`. Returns `P(|X_n| = k)`.
fn radial_law(d: usize, n: usize) -> Vec<f64> {
    let up = (2 * d - 1) as f64 / (2 * d) as f64;
    let mut law = vec![0.0; n + 1];
    law[0] = 1.0;
    for _ in 0..n {
        let mut next = vec![0.0; n + 1];
        for k in 0..n {
            if law[k] == 0.0 {
                continue;
            }
            if k == 0 {
                next[1] += law[0];
            } else {
                next[k + 1] += law[k] * up;
                next[k - 1] += law[k] * (1.0 - up);
            }
        }
        law = next;
    }
    law
}

fn radial_entropy(d: usize, law: &[f64]) -> f64 {
    law.iter()
        .enumerate()
        .filter(|&(_, &m)| m > 0.0)
        .map(|(k, &m)| -m * (m / sphere_size(d, k) as f64).ln())
        .sum()
}

fn cfg() -> ConvolutionConfig {
    ConvolutionConfig::default()
}

#[test]
fn uniform_tables_match_radial_chain() {
    for d in [2usize, 3] {
        let walk = FreeGroupWalk::new(StepDistribution::uniform(d));
        let mut table = DistributionTable::dirac(&walk);
        for n in 1..=8 {
            table = convolve_step(&table, &walk, &cfg()).unwrap();
            let radial = radial_law(d, n);
            let s = entropy_and_length(&table, &walk);
            let mean: f64 = radial.iter().enumerate().map(|(k, m)| k as f64 * m).sum();
            assert!((s.mean_length - mean).abs() < 1e-11, "d {d} n {n}");
            let diff = (s.entropy - radial_entropy(d, &radial)).abs();
            assert!(diff < 1e-10, "d {d} n {n}: {diff:e}");
            assert!((s.return_prob - radial[0]).abs() < 1e-15);
        }
    }
}

#[test]
fn length_law_matches_radial_chain_at_long_horizon() {
    let walk = FreeGroupWalk::new(StepDistribution::uniform(2));
    let law = length_law(&walk, 24, &cfg()).unwrap();
    let radial = radial_law(2, 24);
    for (a, b) in law.word_length.iter().zip(&radial) {
        assert!((a - b).abs() < 1e-13);
    }
}

#[test]
fn entropy_increment_and_ratio_bracket_the_limit() {
    // H_n is concave in n, so increments decrease and H_n / n stays above them.
    let walk = FreeGroupWalk::new(StepDistribution::uniform(2));
    let rows = convolution_rows(&walk, 10, &cfg()).unwrap();
    let h = 0.5 * 3f64.ln();
    for w in rows[1..].windows(2) {
        assert!(w[1].entropy_increment <= w[0].entropy_increment + 1e-12);
        assert!(w[1].entropy_ratio >= w[1].entropy_increment - 1e-12);
    }
    assert!(rows[10].entropy_increment > h);
}

#[test]
fn subadditivity_of_mean_length() {
    let walk = FreeGroupWalk::new(StepDistribution::new(&[0.35, 0.05, 0.3, 0.3]).unwrap());
    let laws: Vec<f64> = (0..=16).map(|n| length_law(&walk, n, &cfg()).unwrap().mean_word_length()).collect();
    for n in 1..=8 {
        assert!(laws[2 * n] <= 2.0 * laws[n] + 1e-12);
        for m in 1..=(16 - n) {
            assert!(laws[n + m] <= laws[n] + laws[m] + 1e-12);
        }
    }
}

#[test]
fn return_series_approaches_kesten_radius() {
    let walk = FreeGroupWalk::new(StepDistribution::uniform(2));
    let series = return_series(&walk, 20, &cfg()).unwrap();
    let rho = 3f64.sqrt() / 2.0;
    let last = series.last_estimate().unwrap();
    assert!(last < rho && last > 0.7);
    assert!(series.tail_increasing);
    let radial = radial_law(2, 20);
    assert!((series.return_probs[20] - radial[0]).abs() < 1e-15);
}

#[test]
fn tables_do_not_depend_on_thread_count() {
    // Step 11 on F_2 has more source entries than one chunk.
    let walk = FreeGroupWalk::new(StepDistribution::new(&[0.4, 0.2, 0.3, 0.1]).unwrap());
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| distribution_at(&walk, 11, &cfg()).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.len(), b.len());
    for (w, m) in a.iter() {
        assert_eq!(m.to_bits(), b.get(w).to_bits());
    }
}

#[test]
fn free_product_support_radius_in_blocks() {
    let spec = rwdrift::group::FreeProductSpec::from_json(
        r#"{"factors":[{"kind":"cyclic","order":3,"law":[0.5,0.5]},{"kind":"cyclic","order":2,"law":[1.0]}],"alpha":[0.5,0.5]}"#,
    )
    .unwrap();
    let walk = FreeProductWalk::new(&spec);
    let table = distribution_at(&walk, 7, &cfg()).unwrap();
    assert!(table.iter().all(|(w, _)| walk.block_length(w) <= 7));
    assert!((table.total_mass() - 1.0).abs() < 1e-13);
}

#[test]
fn identity_lookup() {
    let walk = FreeGroupWalk::new(StepDistribution::uniform(2));
    let table = distribution_at(&walk, 4, &cfg()).unwrap();
    let radial = radial_law(2, 4);
    assert!((table.get(&ReducedWord::identity()) - radial[0]).abs() < 1e-15);
}

fn law_strategy(d: usize) -> impl Strategy<Value = StepDistribution> {
    prop::collection::vec(0.02f64..1.0, 2 * d).prop_map(|raw| {
        let s: f64 = raw.iter().sum();
        StepDistribution::new(&raw.iter().map(|x| x / s).collect::<Vec<_>>()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mass_is_conserved(law in law_strategy(2), n in 1usize..7) {
        let walk = FreeGroupWalk::new(law);
        let table = distribution_at(&walk, n, &cfg()).unwrap();
        prop_assert!((table.total_mass() - 1.0).abs() < 1e-13);
        prop_assert!(table.iter().all(|(w, _)| w.len() <= n));
    }

    #[test]
    fn pruned_mass_is_accounted(law in law_strategy(2), n in 4usize..8) {
        let walk = FreeGroupWalk::new(law);
        let table = distribution_at(&walk, n, &cfg().pruned(1e-5)).unwrap();
        prop_assert!((table.total_mass() + table.mass_defect - 1.0).abs() < 1e-13);
    }

    #[test]
    fn length_law_is_exact(law in law_strategy(2), n in 1usize..9) {
        let walk = FreeGroupWalk::new(law);
        let s = entropy_and_length(&distribution_at(&walk, n, &cfg()).unwrap(), &walk);
        let l = length_law(&walk, n, &cfg()).unwrap();
        prop_assert!((l.mean_word_length() - s.mean_length).abs() < 1e-12);
        prop_assert!((l.mean_block_length() - s.mean_block_length).abs() < 1e-12);
        prop_assert!((l.word_length.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }
}
