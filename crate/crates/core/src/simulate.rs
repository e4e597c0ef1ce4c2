//! Seeded Monte Carlo estimators over i.i.d. path endpoints.
//!
//! Sample `i` draws from `ChaCha8` seeded with the master seed on stream `i`.
//! Samples are grouped into fixed chunks whose moments are merged in chunk
//! order, so results are bit-identical for any worker count.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convolution::{distribution_at, ConvolutionConfig};
use crate::error::{Error, Result};
use crate::group::StepDistribution;
use crate::walk::GroupWalk;

/// Default horizon.
pub const DEFAULT_STEPS: usize = 20_000;
/// Default sample count.
pub const DEFAULT_SAMPLES: usize = 10_000;
const CHUNK: usize = 32;
const Z95: f64 = 1.96;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
    pub n_steps: usize,
    pub ci95: [f64; 2],
}

impl EstimateWithCI {
    /// `|value - x|` in units of the standard error.
    pub fn z_score(&self, x: f64) -> f64 {
        (self.value - x).abs() / self.stderr
    }

    pub fn covers(&self, x: f64) -> bool {
        self.ci95[0] <= x && x <= self.ci95[1]
    }
}

/// `(count, mean, sum of squared deviations)`, merged pairwise.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(self, other: Moments) -> Moments {
        if self.count == 0 {
            return other;
        }
        if other.count == 0 {
            return self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let w = other.count as f64 / count as f64;
        Moments { count, mean: self.mean + delta * w, m2: self.m2 + other.m2 + delta * delta * self.count as f64 * w }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        self.m2 / (self.count as f64 - 1.0)
    }

    pub fn estimate(&self, n_steps: usize) -> EstimateWithCI {
        let value = self.mean();
        let stderr = (self.variance() / self.count as f64).sqrt();
        EstimateWithCI { value, stderr, samples: self.count, n_steps, ci95: [value - Z95 * stderr, value + Z95 * stderr] }
    }
}

/// Generator for sample `index` under `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Sampler over the moves of a walk.
pub struct StepSampler {
    index: WeightedIndex<f64>,
}

impl StepSampler {
    pub fn new<G: GroupWalk>(walk: &G) -> StepSampler {
        StepSampler { index: WeightedIndex::new(walk.move_probs()).expect("move probabilities are positive") }
    }

    #[inline]
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        self.index.sample(rng)
    }
}

/// Endpoint of an `n`-step path.
pub fn sample_endpoint<G: GroupWalk, R: Rng>(walk: &G, sampler: &StepSampler, n: usize, rng: &mut R) -> G::Word {
    let mut w = walk.identity();
    for _ in 0..n {
        walk.apply(&mut w, sampler.sample(rng));
    }
    w
}

/// Runs `f` once per sample on its own stream and merges chunks in order.
fn run_samples<F>(samples: usize, seed: u64, f: F) -> Moments
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let chunks: Vec<usize> = (0..samples.div_ceil(CHUNK)).collect();
    chunks
        .par_iter()
        .map(|&c| {
            let mut m = Moments::default();
            for i in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                m.push(f(&mut sample_rng(seed, i as u64)));
            }
            m
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Moments::default(), Moments::merge)
}

fn check_counts(n: usize, samples: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidSpec("horizon must be at least 1".into()));
    }
    if samples < 2 {
        return Err(Error::InvalidSpec("at least two samples are required".into()));
    }
    Ok(())
}

/// Length functional whose per-step growth is estimated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LengthFunctional {
    Word,
    Block,
    /// Green distance given `-ln z` per letter index.
    Green(Vec<f64>),
}

/// Mean of `length(X_n)/n` over independent endpoints.
pub fn estimate_drift<G: GroupWalk>(
    walk: &G,
    functional: &LengthFunctional,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<EstimateWithCI> {
    check_counts(n, samples)?;
    if let LengthFunctional::Green(neg_log_z) = functional {
        if walk.green_length(&walk.identity(), neg_log_z).is_none() {
            return Err(Error::IncompatibleFunctional("Green distance needs a free-group walk"));
        }
    }
    let sampler = StepSampler::new(walk);
    let nf = n as f64;
    let moments = run_samples(samples, seed, |rng| {
        let w = sample_endpoint(walk, &sampler, n, rng);
        let len = match functional {
            LengthFunctional::Word => walk.word_length(&w) as f64,
            LengthFunctional::Block => walk.block_length(&w) as f64,
            LengthFunctional::Green(z) => walk.green_length(&w, z).expect("checked above"),
        };
        len / nf
    });
    Ok(moments.estimate(n))
}

/// Mean of `-(1/n) ln p^(n)(X_n)` with `p^(n)` from exact convolution.
pub fn estimate_entropy_pointwise<G: GroupWalk>(
    walk: &G,
    n: usize,
    samples: usize,
    seed: u64,
    cfg: &ConvolutionConfig,
) -> Result<EstimateWithCI> {
    check_counts(n, samples)?;
    let table = distribution_at(walk, n, cfg)?;
    let sampler = StepSampler::new(walk);
    let nf = n as f64;
    let moments = run_samples(samples, seed, |rng| {
        let w = sample_endpoint(walk, &sampler, n, rng);
        -table.get(&w).ln() / nf
    });
    Ok(moments.estimate(n))
}

/// Frequency of paths from `start` that hit a target within `max_steps`.
pub fn estimate_hitting_probability<G, F>(
    walk: &G,
    start: &G::Word,
    is_target: F,
    max_steps: usize,
    samples: usize,
    seed: u64,
) -> Result<EstimateWithCI>
where
    G: GroupWalk,
    F: Fn(&G::Word) -> bool + Sync,
{
    check_counts(max_steps, samples)?;
    let sampler = StepSampler::new(walk);
    let moments = run_samples(samples, seed, |rng| {
        let mut w = start.clone();
        if is_target(&w) {
            return 1.0;
        }
        for _ in 0..max_steps {
            walk.apply(&mut w, sampler.sample(rng));
            if is_target(&w) {
                return 1.0;
            }
        }
        0.0
    });
    Ok(moments.estimate(max_steps))
}

/// Uniform draw from the simplex on `2d` letters, redrawn until every mass
/// is at least `min_mass`.
pub fn random_step_law<R: Rng>(d: usize, min_mass: f64, rng: &mut R) -> StepDistribution {
    loop {
        let e: Vec<f64> = (0..2 * d).map(|_| Exp1.sample(rng)).collect();
        let s: f64 = e.iter().sum();
        let p: Vec<f64> = e.iter().map(|x| x / s).collect();
        if p.iter().all(|&x| x >= min_mass) {
            if let Ok(law) = StepDistribution::new(&p) {
                return law;
            }
        }
    }
}

/// Uniform draw of `(q_1..q_d)` with `Σ q = 1/2`, each at least `min_mass`.
pub fn random_symmetric_half<R: Rng>(d: usize, min_mass: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let e: Vec<f64> = (0..d).map(|_| Exp1.sample(rng)).collect();
        let s: f64 = e.iter().sum();
        let q: Vec<f64> = e.iter().map(|x| 0.5 * x / s).collect();
        if q.iter().all(|&x| x >= min_mass) {
            return q;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::ReducedWord;
    use crate::walk::FreeGroupWalk;

    #[test]
    fn moments_merge_and_variance() {
        let mut a = Moments::default();
        let mut b = Moments::default();
        for x in [1.0, 2.0] {
            a.push(x);
        }
        for x in [3.0, 4.0] {
            b.push(x);
        }
        let m = a.merge(b);
        assert_eq!(m.count, 4);
        assert!((m.mean() - 2.5).abs() < 1e-15);
        assert!((m.variance() - 5.0 / 3.0).abs() < 1e-14);
        let e = m.estimate(10);
        assert!((e.ci95[1] - e.value - 1.96 * e.stderr).abs() < 1e-15);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let walk = FreeGroupWalk::new(StepDistribution::uniform(2));
        let a = estimate_drift(&walk, &LengthFunctional::Word, 200, 100, 7).unwrap();
        let b = estimate_drift(&walk, &LengthFunctional::Word, 200, 100, 7).unwrap();
        assert_eq!(a, b);
        let c = estimate_drift(&walk, &LengthFunctional::Word, 200, 100, 8).unwrap();
        assert_ne!(a.value, c.value);
    }

    #[test]
    fn rejects_bad_counts() {
        let walk = FreeGroupWalk::new(StepDistribution::uniform(2));
        assert!(estimate_drift(&walk, &LengthFunctional::Word, 0, 10, 1).is_err());
        assert!(estimate_drift(&walk, &LengthFunctional::Word, 10, 1, 1).is_err());
    }

    #[test]
    fn one_step_entropy_is_exact() {
        let walk = FreeGroupWalk::new(StepDistribution::uniform(2));
        let e = estimate_entropy_pointwise(&walk, 1, 50, 3, &ConvolutionConfig::default()).unwrap();
        assert!((e.value - 4f64.ln()).abs() < 1e-15);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn hitting_from_a_target_is_certain() {
        let walk = FreeGroupWalk::new(StepDistribution::uniform(2));
        let e = estimate_hitting_probability(&walk, &ReducedWord::identity(), |w| w.is_empty(), 5, 10, 1).unwrap();
        assert_eq!(e.value, 1.0);
    }

    #[test]
    fn random_laws_respect_floor() {
        let mut rng = sample_rng(1, 0);
        for _ in 0..50 {
            let p = random_step_law(3, 0.02, &mut rng);
            assert!(p.probs().iter().all(|&x| x >= 0.02));
            let q = random_symmetric_half(3, 0.01, &mut rng);
            assert!((q.iter().sum::<f64>() - 0.5).abs() < 1e-15);
        }
    }
}
