//! Random-walk laws as a finite list of moves acting on normal-form words.
//!
//! Both the convolution engine and the simulator are generic over
//! [`GroupWalk`]; the free group and the lifted free-product law are the two
//! implementations.

use std::fmt::Debug;
use std::hash::Hash;

use crate::group::product::integer_factors;
use crate::group::{FactorSpec, FreeProductSpec, Letter, NormalFormWord, ReducedWord, StepDistribution};

/// A finitely supported step law on a group with normal forms.
pub trait GroupWalk: Sync {
    type Word: Clone + Eq + Hash + Debug + Send + Sync;

    fn identity(&self) -> Self::Word;

    /// Probabilities of the moves; move `m` is applied by [`GroupWalk::apply`].
    fn move_probs(&self) -> &[f64];

    /// Right-multiplies `word` by move `m` in place.
    fn apply(&self, word: &mut Self::Word, m: usize);

    fn word_length(&self, word: &Self::Word) -> usize;

    fn block_length(&self, word: &Self::Word) -> usize;

    fn inverse(&self, word: &Self::Word) -> Self::Word;

    /// Removes all but the last `keep` blocks and returns the removed
    /// `(word length, block length)`.
    fn keep_suffix(&self, word: &mut Self::Word, keep: usize) -> (usize, usize);

    /// Green distance `-Σ ln z` of a free-group word, given `-ln z` per letter
    /// index. `None` when the group is not a free group.
    fn green_length(&self, _word: &Self::Word, _neg_log_z: &[f64]) -> Option<f64> {
        None
    }

    /// Total mass of the moves; one for a probability law.
    fn total_mass(&self) -> f64 {
        self.move_probs().iter().sum()
    }
}

/// Nearest-neighbour walk on a free group. Move `m` is the letter with index `m`.
#[derive(Clone, Debug)]
pub struct FreeGroupWalk {
    law: StepDistribution,
}

impl FreeGroupWalk {
    pub fn new(law: StepDistribution) -> FreeGroupWalk {
        FreeGroupWalk { law }
    }

    pub fn law(&self) -> &StepDistribution {
        &self.law
    }

    pub fn rank(&self) -> usize {
        self.law.rank()
    }
}

impl GroupWalk for FreeGroupWalk {
    type Word = ReducedWord;

    fn identity(&self) -> ReducedWord {
        ReducedWord::identity()
    }

    fn move_probs(&self) -> &[f64] {
        self.law.probs()
    }

    #[inline]
    fn apply(&self, word: &mut ReducedWord, m: usize) {
        word.push(Letter::from_index(m));
    }

    fn word_length(&self, word: &ReducedWord) -> usize {
        word.len()
    }

    fn block_length(&self, word: &ReducedWord) -> usize {
        // maximal runs of one generator, i.e. blocks over Z * ... * Z
        let letters = word.letters();
        letters
            .iter()
            .enumerate()
            .filter(|&(j, x)| j == 0 || letters[j - 1].generator() != x.generator())
            .count()
    }

    fn inverse(&self, word: &ReducedWord) -> ReducedWord {
        word.inverse()
    }

    fn keep_suffix(&self, word: &mut ReducedWord, keep: usize) -> (usize, usize) {
        // The cut moves left to a generator-run boundary so that the dropped
        // prefix holds whole blocks.
        let letters = word.letters();
        let mut drop = letters.len().saturating_sub(keep);
        while drop > 0 && drop < letters.len() && letters[drop].generator() == letters[drop - 1].generator() {
            drop -= 1;
        }
        if drop == 0 {
            return (0, 0);
        }
        let blocks = letters[..drop]
            .iter()
            .enumerate()
            .filter(|&(j, x)| j == 0 || letters[j - 1].generator() != x.generator())
            .count();
        word.drop_front(drop);
        (drop, blocks)
    }

    fn green_length(&self, word: &ReducedWord, neg_log_z: &[f64]) -> Option<f64> {
        Some(word.letters().iter().map(|x| neg_log_z[x.index()]).sum())
    }
}

/// The lifted law `Σ α_i p̄_i` on a free product.
///
/// Also accepts a single factor or any weights, which the hitting solver uses
/// for the free group of rank one; validated specs come through
/// [`FreeProductWalk::new`].
#[derive(Clone, Debug)]
pub struct FreeProductWalk {
    factors: Vec<FactorSpec>,
    alpha: Vec<f64>,
    moves: Vec<(u16, i64)>,
    probs: Vec<f64>,
}

impl FreeProductWalk {
    pub fn new(spec: &FreeProductSpec) -> FreeProductWalk {
        FreeProductWalk::from_parts(spec.factors().to_vec(), spec.alpha().to_vec())
    }

    /// Free group of any rank as `ℤ * ... * ℤ`, same law.
    pub fn from_free_group(law: &StepDistribution) -> FreeProductWalk {
        let (factors, alpha) = integer_factors(law);
        FreeProductWalk::from_parts(factors, alpha)
    }

    fn from_parts(factors: Vec<FactorSpec>, alpha: Vec<f64>) -> FreeProductWalk {
        let mut moves = Vec::new();
        let mut probs = Vec::new();
        for (k, (f, a)) in factors.iter().zip(&alpha).enumerate() {
            for (g, w) in f.steps() {
                moves.push((k as u16, g));
                probs.push(a * w);
            }
        }
        FreeProductWalk { factors, alpha, moves, probs }
    }

    pub fn factors(&self) -> &[FactorSpec] {
        &self.factors
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// `(factor, element)` of each move.
    pub fn moves(&self) -> &[(u16, i64)] {
        &self.moves
    }
}

impl GroupWalk for FreeProductWalk {
    type Word = NormalFormWord;

    fn identity(&self) -> NormalFormWord {
        NormalFormWord::identity()
    }

    fn move_probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    fn apply(&self, word: &mut NormalFormWord, m: usize) {
        let (factor, element) = self.moves[m];
        word.push(&self.factors, factor, element);
    }

    fn word_length(&self, word: &NormalFormWord) -> usize {
        word.word_length(&self.factors)
    }

    fn block_length(&self, word: &NormalFormWord) -> usize {
        word.block_length()
    }

    fn inverse(&self, word: &NormalFormWord) -> NormalFormWord {
        word.inverse(&self.factors)
    }

    fn keep_suffix(&self, word: &mut NormalFormWord, keep: usize) -> (usize, usize) {
        let drop = word.block_length().saturating_sub(keep);
        let length = word.blocks()[..drop]
            .iter()
            .map(|b| self.factors[b.factor as usize].element_length(b.element))
            .sum();
        word.drop_front(drop);
        (length, drop)
    }
}
