//! Exact laws of `X_n` by repeated convolution over normal-form words.
//!
//! A [`DistributionTable`] holds `p^(n)` as a sparse map from words to
//! probabilities. Large steps are split into fixed-size chunks of source
//! entries whose partial tables are merged in chunk order, so the result does
//! not depend on the number of worker threads.

use std::env;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::walk::GroupWalk;

/// Environment variable bounding table memory, in megabytes.
pub const MEM_CAP_ENV: &str = "RWDRIFT_MEM_CAP_MB";
/// Default table memory cap in megabytes.
pub const DEFAULT_MEM_CAP_MB: usize = 2048;
/// Rough bytes per table entry (key, heap word, value, map overhead).
pub const ENTRY_BYTES: usize = 96;
/// Default pruning threshold when pruning is enabled.
pub const DEFAULT_PRUNE: f64 = 1e-16;

const CHUNK: usize = 1 << 15;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionConfig {
    pub max_entries: usize,
    /// Entries below this mass are moved to the mass defect.
    pub prune_below: Option<f64>,
}

impl Default for ConvolutionConfig {
    fn default() -> Self {
        ConvolutionConfig::with_cap_mb(DEFAULT_MEM_CAP_MB)
    }
}

impl ConvolutionConfig {
    pub fn with_cap_mb(mb: usize) -> ConvolutionConfig {
        ConvolutionConfig { max_entries: mb.saturating_mul(1 << 20) / ENTRY_BYTES, prune_below: None }
    }

    /// Reads the cap from `RWDRIFT_MEM_CAP_MB`, falling back to the default.
    pub fn from_env() -> ConvolutionConfig {
        let mb = env::var(MEM_CAP_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(DEFAULT_MEM_CAP_MB);
        ConvolutionConfig::with_cap_mb(mb)
    }

    pub fn pruned(mut self, threshold: f64) -> ConvolutionConfig {
        self.prune_below = Some(threshold);
        self
    }
}

/// The law of `X_n` as a sparse table.
#[derive(Clone, Debug)]
pub struct DistributionTable<W> {
    pub n: usize,
    entries: FxHashMap<W, f64>,
    /// Mass removed by pruning; zero unless pruning is enabled.
    pub mass_defect: f64,
}

impl<W: Clone + Eq + std::hash::Hash> DistributionTable<W> {
    /// Dirac mass at the identity, `p^(0)`.
    pub fn dirac<G: GroupWalk<Word = W>>(walk: &G) -> DistributionTable<W> {
        let mut entries = FxHashMap::default();
        entries.insert(walk.identity(), 1.0);
        DistributionTable { n: 0, entries, mass_defect: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, w: &W) -> f64 {
        self.entries.get(w).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&W, f64)> {
        self.entries.iter().map(|(w, &m)| (w, m))
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.values().sum()
    }
}

fn scatter<G: GroupWalk>(walk: &G, sources: &[(G::Word, f64)], out: &mut FxHashMap<G::Word, f64>) {
    let probs = walk.move_probs();
    for (w, mass) in sources {
        for (m, &pm) in probs.iter().enumerate() {
            if pm == 0.0 {
                continue;
            }
            let mut next = w.clone();
            walk.apply(&mut next, m);
            *out.entry(next).or_insert(0.0) += mass * pm;
        }
    }
}

/// Scatters `sources` through one step, chunked for determinism.
fn step_entries<G: GroupWalk>(walk: &G, sources: Vec<(G::Word, f64)>, cap: usize) -> Result<FxHashMap<G::Word, f64>> {
    let mut out = FxHashMap::default();
    if sources.len() <= CHUNK {
        scatter(walk, &sources, &mut out);
    } else {
        let partials: Vec<FxHashMap<G::Word, f64>> = sources
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut part = FxHashMap::default();
                scatter(walk, chunk, &mut part);
                part
            })
            .collect();
        for part in partials {
            for (w, m) in part {
                *out.entry(w).or_insert(0.0) += m;
            }
            if out.len() > cap {
                return Err(Error::MemoryBudgetExceeded { entries: out.len(), cap });
            }
        }
    }
    if out.len() > cap {
        return Err(Error::MemoryBudgetExceeded { entries: out.len(), cap });
    }
    Ok(out)
}

/// `p^(n+1) = p^(n) ⋆ p`.
pub fn convolve_step<G: GroupWalk>(
    table: &DistributionTable<G::Word>,
    walk: &G,
    cfg: &ConvolutionConfig,
) -> Result<DistributionTable<G::Word>> {
    let estimate = table.entries.len().saturating_mul(2);
    if estimate > cfg.max_entries.saturating_mul(4) {
        return Err(Error::MemoryBudgetExceeded { entries: estimate, cap: cfg.max_entries });
    }
    let sources: Vec<(G::Word, f64)> = table.entries.iter().map(|(w, &m)| (w.clone(), m)).collect();
    let mut entries = step_entries(walk, sources, cfg.max_entries)?;
    let mut mass_defect = table.mass_defect;
    if let Some(eps) = cfg.prune_below {
        entries.retain(|_, m| {
            if *m < eps {
                mass_defect += *m;
                false
            } else {
                true
            }
        });
    }
    Ok(DistributionTable { n: table.n + 1, entries, mass_defect })
}

/// `p^(n)` from the Dirac mass.
pub fn distribution_at<G: GroupWalk>(walk: &G, n: usize, cfg: &ConvolutionConfig) -> Result<DistributionTable<G::Word>> {
    let mut table = DistributionTable::dirac(walk);
    for _ in 0..n {
        table = convolve_step(&table, walk, cfg)?;
    }
    Ok(table)
}

/// Shannon entropy and mean lengths of one table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableSummary {
    pub n: usize,
    /// `H_n = -Σ p ln p`.
    pub entropy: f64,
    /// `L_n = Σ |g| p(g)`.
    pub mean_length: f64,
    pub mean_block_length: f64,
    /// `p^(n)(e)`.
    pub return_prob: f64,
    pub mass_defect: f64,
    /// Bound on the error of `mean_length` caused by pruning.
    pub length_error: f64,
    pub support: usize,
}

/// `(H_n, L_n)` and related summaries of a table.
pub fn entropy_and_length<G: GroupWalk>(table: &DistributionTable<G::Word>, walk: &G) -> TableSummary {
    let mut entropy = 0.0;
    let mut mean_length = 0.0;
    let mut mean_block_length = 0.0;
    let mut max_len = 0usize;
    for (w, &m) in &table.entries {
        let len = walk.word_length(w);
        entropy -= m * m.ln();
        mean_length += m * len as f64;
        mean_block_length += m * walk.block_length(w) as f64;
        max_len = max_len.max(len);
    }
    TableSummary {
        n: table.n,
        entropy,
        mean_length,
        mean_block_length,
        return_prob: table.get(&walk.identity()),
        mass_defect: table.mass_defect,
        length_error: table.mass_defect * table.n.max(max_len) as f64,
        support: table.entries.len(),
    }
}

/// Largest `|p(g) - p(g⁻¹)|` over the table.
pub fn symmetry_defect<G: GroupWalk>(table: &DistributionTable<G::Word>, walk: &G) -> f64 {
    table
        .entries
        .iter()
        .map(|(w, &m)| (m - table.get(&walk.inverse(w))).abs())
        .fold(0.0, f64::max)
}

/// One row of the convolution stream: `(n, H_n, L_n, p^(n)(e))` plus the
/// entropy estimates `H_n / n` and `H_n - H_{n-1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionRow {
    pub n: usize,
    pub entropy: f64,
    pub mean_length: f64,
    pub return_prob: f64,
    pub entropy_ratio: f64,
    pub entropy_increment: f64,
    pub drift_ratio: f64,
    pub mass_defect: f64,
}

/// Convolves up to `n_max`, reporting one row per step (including `n = 0`).
pub fn convolution_rows<G: GroupWalk>(walk: &G, n_max: usize, cfg: &ConvolutionConfig) -> Result<Vec<ConvolutionRow>> {
    let mut rows = Vec::with_capacity(n_max + 1);
    let mut table = DistributionTable::dirac(walk);
    let mut prev_entropy = 0.0;
    loop {
        let s = entropy_and_length(&table, walk);
        let n = s.n;
        rows.push(ConvolutionRow {
            n,
            entropy: s.entropy,
            mean_length: s.mean_length,
            return_prob: s.return_prob,
            entropy_ratio: if n == 0 { 0.0 } else { s.entropy / n as f64 },
            entropy_increment: s.entropy - prev_entropy,
            drift_ratio: if n == 0 { 0.0 } else { s.mean_length / n as f64 },
            mass_defect: s.mass_defect,
        });
        prev_entropy = s.entropy;
        if n == n_max {
            return Ok(rows);
        }
        table = convolve_step(&table, walk, cfg)?;
    }
}

/// Return probabilities and spectral-radius estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    /// `p^(n)(e)` for `n = 0..=n_max`.
    pub return_probs: Vec<f64>,
    /// `(2n, p^(2n)(e)^(1/2n))` for `2 <= 2n <= n_max`.
    pub rho_estimates: Vec<(usize, f64)>,
    /// Whether the estimates increase over the second half of the series.
    pub tail_increasing: bool,
}

impl ReturnSeries {
    pub fn last_estimate(&self) -> Option<f64> {
        self.rho_estimates.last().map(|&(_, r)| r)
    }
}

/// Return probabilities up to `n_max`.
///
/// A word of length `k` cannot come back to the identity within fewer than
/// `k` steps, so after step `j` words longer than `n_max - j` are dropped;
/// the return probabilities are still exact.
pub fn return_series<G: GroupWalk>(walk: &G, n_max: usize, cfg: &ConvolutionConfig) -> Result<ReturnSeries> {
    let identity = walk.identity();
    let mut current: FxHashMap<G::Word, f64> = FxHashMap::default();
    current.insert(identity.clone(), 1.0);
    let mut return_probs = vec![1.0];
    for j in 1..=n_max {
        let sources: Vec<(G::Word, f64)> = current.into_iter().collect();
        let mut next = step_entries(walk, sources, cfg.max_entries)?;
        let horizon = n_max - j;
        next.retain(|w, _| walk.word_length(w) <= horizon);
        return_probs.push(next.get(&identity).copied().unwrap_or(0.0));
        current = next;
    }
    let rho_estimates: Vec<(usize, f64)> = (1..=n_max / 2)
        .map(|k| (2 * k, return_probs[2 * k].powf(1.0 / (2 * k) as f64)))
        .collect();
    let half = rho_estimates.len() / 2;
    let tail_increasing = rho_estimates[half..].windows(2).all(|w| w[1].1 >= w[0].1);
    Ok(ReturnSeries { return_probs, rho_estimates, tail_increasing })
}

/// Exact law of the word length and block length of `X_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthLaw {
    pub n: usize,
    /// `P(|X_n| = k)`.
    pub word_length: Vec<f64>,
    /// `P(‖X_n‖ = k)`.
    pub block_length: Vec<f64>,
}

impl LengthLaw {
    pub fn mean_word_length(&self) -> f64 {
        self.word_length.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    pub fn mean_block_length(&self) -> f64 {
        self.block_length.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }
}

/// Law of `|X_n|` and `‖X_n‖` without storing whole words.
///
/// With `n - j` steps left, at most the last `n - j` blocks of `X_j` can
/// still change, so only that suffix is kept together with the length of the
/// discarded prefix. States merge accordingly and the law stays exact while
/// the table grows only like a ball of radius `min(j, n - j)`.
pub fn length_law<G: GroupWalk>(walk: &G, n: usize, cfg: &ConvolutionConfig) -> Result<LengthLaw> {
    type Key<W> = (W, usize, usize);
    let mut current: FxHashMap<Key<G::Word>, f64> = FxHashMap::default();
    current.insert((walk.identity(), 0, 0), 1.0);
    let probs = walk.move_probs();
    for j in 1..=n {
        let keep = n - j;
        let mut next: FxHashMap<Key<G::Word>, f64> = FxHashMap::default();
        for ((w, len, blocks), mass) in current {
            for (m, &pm) in probs.iter().enumerate() {
                if pm == 0.0 {
                    continue;
                }
                let mut word = w.clone();
                walk.apply(&mut word, m);
                let (dl, db) = walk.keep_suffix(&mut word, keep);
                *next.entry((word, len + dl, blocks + db)).or_insert(0.0) += mass * pm;
            }
            if next.len() > cfg.max_entries {
                return Err(Error::MemoryBudgetExceeded { entries: next.len(), cap: cfg.max_entries });
            }
        }
        current = next;
    }
    let mut word_length = vec![0.0; 1];
    let mut block_length = vec![0.0; 1];
    for ((w, len, blocks), mass) in current {
        let k = len + walk.word_length(&w);
        let b = blocks + walk.block_length(&w);
        if word_length.len() <= k {
            word_length.resize(k + 1, 0.0);
        }
        if block_length.len() <= b {
            block_length.resize(b + 1, 0.0);
        }
        word_length[k] += mass;
        block_length[b] += mass;
    }
    Ok(LengthLaw { n, word_length, block_length })
}
