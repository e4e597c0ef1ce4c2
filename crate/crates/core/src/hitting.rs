//! Two-sided brackets for hitting probabilities by ball truncation.
//!
//! Inside the ball of radius `R` around the identity the hitting probability
//! solves a finite linear system; every transition leaving the ball is charged
//! a boundary value. Boundary values that bound the true hitting probability
//! from below and above give a bracket.
//!
//! With the trivial bounds `0` and `1` the bracket needs balls far larger than
//! fit in memory on non-amenable groups. [`passage_brackets`] instead uses the
//! product structure of first-passage probabilities on free products: the
//! hitting probability from a word outside the ball is a product of block
//! removal probabilities, which are themselves unknowns of the same systems.
//! The lower bound iterates up from zero. The upper bound starts from a
//! vector `u` with `Ψ(u) <= u` and iterates down; it bounds the true value
//! because hitting probabilities form the least fixed point of `Ψ`.

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{FactorSpec, NormalFormWord, StepDistribution};
use crate::walk::{FreeProductWalk, GroupWalk};

/// Default cap on ball states.
pub const DEFAULT_MAX_STATES: usize = 200_000;
/// Gauss-Seidel stops once no value moves by more than this in a sweep.
pub const SWEEP_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 1_000_000;
const MAX_BOOTSTRAP: usize = 100_000;
const SEED_MARGIN: f64 = 1e-9;
/// Slack allowed when checking `Ψ(u) <= u`, covering solver error.
const CERTIFY_SLACK: f64 = 1e-13;
const EXIT: u32 = 1 << 31;
/// Outward widening of computed endpoints, absorbing rounding in the last sweep.
const ROUNDING_ULPS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HittingBracket {
    pub lower: f64,
    pub upper: f64,
    pub radius: usize,
}

impl HittingBracket {
    /// Bracket from computed bounds, rounded outward and clipped to `[0, 1]`.
    pub fn rounded_outward(lower: f64, upper: f64, radius: usize) -> HittingBracket {
        let (mut lower, mut upper) = (lower, upper);
        for _ in 0..ROUNDING_ULPS {
            lower = lower.next_down();
            upper = upper.next_up();
        }
        HittingBracket { lower: lower.max(0.0), upper: upper.min(1.0), radius }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// States of the ball `|g| <= R` with transitions in compressed rows.
///
/// A destination with the high bit set refers to an exit word outside the
/// ball.
#[derive(Clone, Debug)]
pub struct Ball<W> {
    radius: usize,
    words: Vec<W>,
    index: FxHashMap<W, u32>,
    offsets: Vec<usize>,
    dest: Vec<u32>,
    prob: Vec<f64>,
    exits: Vec<W>,
}

impl<W: Clone + Eq + std::hash::Hash> Ball<W> {
    /// Breadth-first enumeration from the identity.
    pub fn build<G: GroupWalk<Word = W>>(walk: &G, radius: usize, max_states: usize) -> Result<Ball<W>> {
        let mut words = vec![walk.identity()];
        let mut index = FxHashMap::default();
        index.insert(walk.identity(), 0u32);
        let mut exit_index: FxHashMap<W, u32> = FxHashMap::default();
        let mut exits = Vec::new();
        let mut offsets = vec![0];
        let mut dest = Vec::new();
        let mut prob = Vec::new();
        let mut i = 0;
        while i < words.len() {
            for (m, &pm) in walk.move_probs().iter().enumerate() {
                if pm == 0.0 {
                    continue;
                }
                let mut next = words[i].clone();
                walk.apply(&mut next, m);
                let id = if walk.word_length(&next) <= radius {
                    match index.get(&next) {
                        Some(&id) => id,
                        None => {
                            if words.len() >= max_states {
                                return Err(Error::MemoryBudgetExceeded { entries: words.len() + 1, cap: max_states });
                            }
                            let id = words.len() as u32;
                            index.insert(next.clone(), id);
                            words.push(next);
                            id
                        }
                    }
                } else {
                    let id = *exit_index.entry(next.clone()).or_insert_with(|| {
                        exits.push(next);
                        (exits.len() - 1) as u32
                    });
                    id | EXIT
                };
                dest.push(id);
                prob.push(pm);
            }
            offsets.push(dest.len());
            i += 1;
        }
        Ok(Ball { radius, words, index, offsets, dest, prob, exits })
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[W] {
        &self.words
    }

    pub fn exits(&self) -> &[W] {
        &self.exits
    }

    pub fn state(&self, w: &W) -> Option<usize> {
        self.index.get(w).map(|&i| i as usize)
    }

    /// Solves `x = P x` off the targets with `x = 1` on targets and the given
    /// exit values, by Gauss-Seidel from the initial `x`.
    pub fn solve(&self, is_target: &[bool], exit_values: &[f64], x: &mut [f64]) -> Result<usize> {
        for (s, &t) in is_target.iter().enumerate() {
            if t {
                x[s] = 1.0;
            }
        }
        for sweep in 1..=MAX_SWEEPS {
            let mut change: f64 = 0.0;
            for s in 0..self.words.len() {
                if is_target[s] {
                    continue;
                }
                let mut v = 0.0;
                for e in self.offsets[s]..self.offsets[s + 1] {
                    let d = self.dest[e];
                    let val = if d & EXIT != 0 { exit_values[(d & !EXIT) as usize] } else { x[d as usize] };
                    v += self.prob[e] * val;
                }
                change = change.max((v - x[s]).abs());
                x[s] = v;
            }
            if change <= SWEEP_TOL {
                return Ok(sweep);
            }
        }
        Err(Error::NoConvergence { what: "ball hitting system", iterations: MAX_SWEEPS })
    }

    fn target_mask(&self, targets: &[W]) -> Result<Vec<bool>> {
        let mut mask = vec![false; self.words.len()];
        for t in targets {
            let s = self
                .state(t)
                .ok_or_else(|| Error::InvalidSpec(format!("target outside the ball of radius {}", self.radius)))?;
            mask[s] = true;
        }
        Ok(mask)
    }
}

/// Bracket from the trivial boundary values `0` and `1`.
pub fn hitting_bracket<G: GroupWalk>(
    walk: &G,
    start: &G::Word,
    targets: &[G::Word],
    radius: usize,
    max_states: usize,
) -> Result<HittingBracket> {
    hitting_bracket_with_bounds(walk, start, targets, radius, max_states, |_| (0.0, 1.0))
}

/// Bracket with caller-supplied bounds on the hitting probability from each
/// exit word.
pub fn hitting_bracket_with_bounds<G, F>(
    walk: &G,
    start: &G::Word,
    targets: &[G::Word],
    radius: usize,
    max_states: usize,
    exit_bounds: F,
) -> Result<HittingBracket>
where
    G: GroupWalk,
    F: Fn(&G::Word) -> (f64, f64),
{
    let ball = Ball::build(walk, radius, max_states)?;
    let mask = ball.target_mask(targets)?;
    let s0 = ball
        .state(start)
        .ok_or_else(|| Error::InvalidSpec(format!("start outside the ball of radius {radius}")))?;
    let (lo_exit, hi_exit): (Vec<f64>, Vec<f64>) = ball.exits().iter().map(exit_bounds).unzip();
    let mut lo = vec![0.0; ball.len()];
    ball.solve(&mask, &lo_exit, &mut lo)?;
    let mut hi = vec![1.0; ball.len()];
    ball.solve(&mask, &hi_exit, &mut hi)?;
    Ok(HittingBracket::rounded_outward(lo[s0], hi[s0], radius))
}

/// Trivial-boundary bracket with `R` doubling from 10 until the width is
/// below `tol` or the state cap is reached. Returns the last bracket built.
pub fn hitting_bracket_adaptive<G: GroupWalk>(
    walk: &G,
    start: &G::Word,
    targets: &[G::Word],
    tol: f64,
    max_states: usize,
) -> Result<HittingBracket> {
    let mut radius = 10;
    let mut best: Option<HittingBracket> = None;
    loop {
        match hitting_bracket(walk, start, targets, radius, max_states) {
            Ok(b) => {
                if b.width() < tol {
                    return Ok(b);
                }
                best = Some(b);
            }
            Err(Error::MemoryBudgetExceeded { .. }) if best.is_some() => return Ok(best.unwrap()),
            Err(e) => return Err(e),
        }
        radius *= 2;
    }
}

/// Configuration of [`passage_brackets`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassageConfig {
    /// Ball radius; `None` picks the largest radius up to `max_radius` whose
    /// ball fits in `max_states`.
    pub radius: Option<usize>,
    pub max_radius: usize,
    pub max_states: usize,
}

impl Default for PassageConfig {
    fn default() -> Self {
        PassageConfig { radius: None, max_radius: 12, max_states: 20_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemovalBracket {
    pub factor: u16,
    pub element: i64,
    /// Probability of ever reaching `y` from `y·b`.
    pub bracket: HittingBracket,
}

/// Brackets for block-removal probabilities and `ξ_i` on a free product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PassageBrackets {
    pub radius: usize,
    pub states: usize,
    pub removal: Vec<RemovalBracket>,
    /// `ξ_i`: probability of ever hitting `G_i \ {e}` from `e`.
    pub xi: Vec<HittingBracket>,
    pub iterations: usize,
}

impl PassageBrackets {
    pub fn removal(&self, factor: u16, element: i64) -> Option<HittingBracket> {
        self.removal.iter().find(|r| r.factor == factor && r.element == element).map(|r| r.bracket)
    }

    pub fn max_width(&self) -> f64 {
        self.removal.iter().map(|r| r.bracket.width()).chain(self.xi.iter().map(|b| b.width())).fold(0.0, f64::max)
    }
}

/// Unknowns of the bootstrap: block removal probabilities, then `ξ_i`.
struct Unknowns {
    /// `(factor, element)` per removal unknown; ℤ factors carry `±1` only.
    removal: Vec<(u16, i64)>,
    lookup: FxHashMap<(u16, i64), usize>,
    rank: usize,
}

impl Unknowns {
    fn new(factors: &[FactorSpec]) -> Unknowns {
        let mut removal = Vec::new();
        for (k, f) in factors.iter().enumerate() {
            match f.order() {
                Some(m) => removal.extend((1..m as i64).map(|b| (k as u16, b))),
                None => removal.extend([(k as u16, 1), (k as u16, -1)]),
            }
        }
        let lookup = removal.iter().enumerate().map(|(i, &key)| (key, i)).collect();
        Unknowns { removal, lookup, rank: factors.len() }
    }

    fn len(&self) -> usize {
        self.removal.len() + self.rank
    }

    fn xi(&self, i: usize) -> usize {
        self.removal.len() + i
    }

    /// Removal probability of one block, `r(ℤ, v) = r(ℤ, sign v)^|v|`.
    fn block(&self, factors: &[FactorSpec], factor: u16, element: i64, v: &[f64]) -> f64 {
        match factors[factor as usize] {
            FactorSpec::Integer { .. } => {
                let unit = self.lookup[&(factor, element.signum())];
                v[unit].powi(element.unsigned_abs() as i32)
            }
            FactorSpec::Finite(_) => v[self.lookup[&(factor, element)]],
        }
    }

    fn word(&self, factors: &[FactorSpec], w: &NormalFormWord, skip: usize, v: &[f64]) -> f64 {
        w.blocks()[skip..].iter().map(|b| self.block(factors, b.factor, b.element, v)).product()
    }
}

struct Bootstrap<'a> {
    walk: &'a FreeProductWalk,
    ball: Ball<NormalFormWord>,
    unknowns: Unknowns,
    removal_mask: Vec<bool>,
    xi_masks: Vec<Vec<bool>>,
}

impl Bootstrap<'_> {
    fn exit_values(&self, target: Option<usize>, v: &[f64]) -> Vec<f64> {
        let factors = self.walk.factors();
        self.ball
            .exits()
            .iter()
            .map(|w| match target {
                None => self.unknowns.word(factors, w, 0, v),
                Some(i) => {
                    if w.blocks()[0].factor as usize == i {
                        self.unknowns.word(factors, w, 1, v)
                    } else {
                        self.unknowns.word(factors, w, 0, v) * v[self.unknowns.xi(i)]
                    }
                }
            })
            .collect()
    }

    /// `Ψ(v)`, warm-starting each system from `states`.
    fn apply(&self, v: &[f64], states: &mut [Vec<f64>]) -> Result<Vec<f64>> {
        let rank = self.unknowns.rank;
        let solved: Vec<Result<()>> = states
            .par_iter_mut()
            .enumerate()
            .map(|(sys, x)| {
                let (target, mask) = if sys == 0 { (None, &self.removal_mask) } else { (Some(sys - 1), &self.xi_masks[sys - 1]) };
                let exits = self.exit_values(target, v);
                self.ball.solve(mask, &exits, x).map(|_| ())
            })
            .collect();
        solved.into_iter().collect::<Result<Vec<()>>>()?;
        let mut out = vec![0.0; self.unknowns.len()];
        for (u, &(factor, element)) in self.unknowns.removal.iter().enumerate() {
            let mut w = NormalFormWord::identity();
            w.push(self.walk.factors(), factor, element);
            out[u] = states[0][self.ball.state(&w).expect("unit block lies in the ball")];
        }
        for i in 0..rank {
            out[self.unknowns.xi(i)] = states[i + 1][0];
        }
        Ok(out)
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn pick_radius(walk: &FreeProductWalk, cfg: &PassageConfig) -> Result<Ball<NormalFormWord>> {
    if let Some(r) = cfg.radius {
        return Ball::build(walk, r, cfg.max_states);
    }
    let mut ball = Ball::build(walk, 1, cfg.max_states)?;
    for r in 2..=cfg.max_radius {
        match Ball::build(walk, r, cfg.max_states) {
            Ok(b) => ball = b,
            Err(Error::MemoryBudgetExceeded { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(ball)
}

/// Certified brackets for removal probabilities and `ξ_i`.
pub fn passage_brackets(walk: &FreeProductWalk, cfg: &PassageConfig) -> Result<PassageBrackets> {
    let ball = pick_radius(walk, cfg)?;
    let factors = walk.factors();
    let unknowns = Unknowns::new(factors);
    let mut removal_mask = vec![false; ball.len()];
    removal_mask[0] = true;
    let xi_masks: Vec<Vec<bool>> = (0..factors.len())
        .map(|i| ball.words().iter().map(|w| w.block_length() == 1 && w.blocks()[0].factor as usize == i).collect())
        .collect();
    let boot = Bootstrap { walk, ball, unknowns, removal_mask, xi_masks };
    let systems = factors.len() + 1;
    let n = boot.unknowns.len();
    let mut iterations = 0;

    let mut lo = vec![0.0; n];
    let mut lo_states = vec![vec![0.0; boot.ball.len()]; systems];
    loop {
        iterations += 1;
        let next = boot.apply(&lo, &mut lo_states)?;
        let change = max_diff(&next, &lo);
        lo = next;
        if change <= SWEEP_TOL {
            break;
        }
        if iterations > MAX_BOOTSTRAP {
            return Err(Error::NoConvergence { what: "lower passage bootstrap", iterations });
        }
    }

    // Seed: the fixed point of Ψ(u) + δ, which satisfies Ψ(u) = u - δ.
    let mut hi: Vec<f64> = lo.iter().map(|&x| (x + SEED_MARGIN).min(1.0)).collect();
    let mut hi_states = lo_states.clone();
    let mut seed_iterations = 0;
    loop {
        seed_iterations += 1;
        let next: Vec<f64> = boot.apply(&hi, &mut hi_states)?.iter().map(|&x| (x + SEED_MARGIN).min(1.0)).collect();
        let change = max_diff(&next, &hi);
        hi = next;
        if change <= SEED_MARGIN * 1e-3 {
            break;
        }
        if seed_iterations > MAX_BOOTSTRAP {
            return Err(Error::NoConvergence { what: "upper passage seed", iterations: seed_iterations });
        }
    }
    iterations += seed_iterations;
    let image = boot.apply(&hi, &mut hi_states)?;
    if image.iter().zip(&hi).any(|(&psi, &u)| psi > u + CERTIFY_SLACK) {
        return Err(Error::NoConvergence { what: "upper passage certificate", iterations });
    }
    hi = image.iter().zip(&hi).map(|(&a, &b)| a.min(b)).collect();
    loop {
        iterations += 1;
        let next: Vec<f64> = boot.apply(&hi, &mut hi_states)?.iter().zip(&hi).map(|(&a, &b)| a.min(b)).collect();
        let change = max_diff(&next, &hi);
        hi = next;
        if change <= SWEEP_TOL || iterations > MAX_BOOTSTRAP {
            break;
        }
    }

    let radius = boot.ball.radius();
    let bracket = |u: usize| HittingBracket::rounded_outward(lo[u].min(hi[u]), hi[u], radius);
    let removal = boot
        .unknowns
        .removal
        .iter()
        .enumerate()
        .map(|(u, &(factor, element))| RemovalBracket { factor, element, bracket: bracket(u) })
        .collect();
    let xi = (0..factors.len()).map(|i| bracket(boot.unknowns.xi(i))).collect();
    Ok(PassageBrackets { radius, states: boot.ball.len(), removal, xi, iterations })
}

/// Brackets for `z_x = F(e, x)` on a free group, in letter-index order.
pub fn free_group_z_brackets(law: &StepDistribution, cfg: &PassageConfig) -> Result<Vec<HittingBracket>> {
    let walk = FreeProductWalk::from_free_group(law);
    let pb = passage_brackets(&walk, cfg)?;
    // Reaching `x` from `e` is removing the block `x⁻¹`.
    Ok((0..2 * law.rank())
        .map(|i| {
            let element = if i % 2 == 0 { -1 } else { 1 };
            pb.removal((i / 2) as u16, element).expect("every generator has a removal unknown")
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{FreeProductSpec, ReducedWord};
    use crate::walk::FreeGroupWalk;

    fn w(v: &[i32]) -> ReducedWord {
        ReducedWord::from_values(v).unwrap()
    }

    #[test]
    fn outward_rounding_stays_in_unit_interval() {
        let b = HittingBracket::rounded_outward(0.25, 0.25, 3);
        assert!(b.lower < 0.25 && b.upper > 0.25 && b.width() < 1e-15);
        let edge = HittingBracket::rounded_outward(0.0, 1.0, 3);
        assert_eq!((edge.lower, edge.upper), (0.0, 1.0));
    }

    #[test]
    fn rank_one_toward_target() {
        let walk = FreeGroupWalk::new(StepDistribution::new(&[0.7, 0.3]).unwrap());
        let b = hitting_bracket(&walk, &ReducedWord::identity(), &[w(&[1])], 40, 1000).unwrap();
        assert!(b.contains(1.0) || (1.0 - b.upper).abs() < 1e-15);
        assert!(b.width() < 1e-6);
    }

    #[test]
    fn rank_one_against_drift() {
        let walk = FreeGroupWalk::new(StepDistribution::new(&[0.7, 0.3]).unwrap());
        let b = hitting_bracket(&walk, &ReducedWord::identity(), &[w(&[-1])], 60, 1000).unwrap();
        assert!(b.lower <= 3.0 / 7.0 + 1e-14 && 3.0 / 7.0 <= b.upper + 1e-14);
        // Escaping to the far side is likely, so only the lower end is sharp.
        assert!((b.lower - 3.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn trivial_brackets_nest() {
        let walk = FreeGroupWalk::new(StepDistribution::uniform(2));
        let mut prev = HittingBracket { lower: 0.0, upper: 1.0, radius: 0 };
        for r in 1..=7 {
            let b = hitting_bracket(&walk, &ReducedWord::identity(), &[w(&[1])], r, 100_000).unwrap();
            assert!(b.lower >= prev.lower - 1e-15 && b.upper <= prev.upper + 1e-15, "radius {r}");
            assert!(b.contains(1.0 / 3.0));
            prev = b;
        }
    }

    #[test]
    fn ball_sizes_match_free_group_counts() {
        let walk = FreeGroupWalk::new(StepDistribution::uniform(2));
        let ball = Ball::build(&walk, 3, 1000).unwrap();
        assert_eq!(ball.len(), 1 + 4 + 12 + 36);
        assert_eq!(ball.exits().len(), 108);
        assert!(matches!(Ball::build(&walk, 6, 1000), Err(Error::MemoryBudgetExceeded { .. })));
    }

    #[test]
    fn certified_uniform_free_group() {
        let z = free_group_z_brackets(&StepDistribution::uniform(2), &PassageConfig::default()).unwrap();
        for b in z {
            assert!(b.width() < 1e-12, "{b:?}");
            assert!((b.midpoint() - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn certified_rank_one() {
        let cfg = PassageConfig { radius: Some(30), ..PassageConfig::default() };
        let z = free_group_z_brackets(&StepDistribution::new(&[0.7, 0.3]).unwrap(), &cfg).unwrap();
        assert!(z[0].upper >= 1.0 - 1e-12);
        assert!(z[1].contains(3.0 / 7.0) || (z[1].midpoint() - 3.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn xi_exceeds_first_step_mass() {
        let law = StepDistribution::new(&[0.4, 0.2, 0.3, 0.1]).unwrap();
        let walk = FreeProductWalk::from_free_group(&law);
        let pb = passage_brackets(&walk, &PassageConfig::default()).unwrap();
        for (b, &a) in pb.xi.iter().zip(walk.alpha()) {
            assert!(b.lower > a && b.upper < 1.0 && b.width() < 1e-9, "{b:?}");
        }
    }

    #[test]
    fn symmetric_factors_give_equal_xi() {
        let f = FactorSpec::cyclic(3, vec![0.5, 0.5]).unwrap();
        let spec = FreeProductSpec::new(vec![f.clone(), f.clone(), f], vec![1.0 / 3.0; 3]).unwrap();
        let pb = passage_brackets(&FreeProductWalk::new(&spec), &PassageConfig::default()).unwrap();
        for b in &pb.xi {
            assert!(b.width() < 1e-6 && b.lower > 0.0 && b.upper < 1.0);
            assert!((b.midpoint() - pb.xi[0].midpoint()).abs() < 1e-12);
        }
    }
}
