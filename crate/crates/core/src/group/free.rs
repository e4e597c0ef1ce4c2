//! Free groups on `d` generators: letters, reduced words and nearest-neighbour
//! step laws.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported rank. Letters are stored in one byte.
pub const MAX_RANK: usize = 127;

/// Tolerance on the total mass of a raw step law before renormalization.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A generator `+i` or its inverse `-i` of the free group.
///
/// Letters are laid out as `+1, -1, +2, -2, ...` when used as an index into a
/// probability vector, see [`Letter::index`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub struct Letter(i8);

impl Letter {
    pub fn new(value: i32) -> Option<Letter> {
        if value == 0 || value.unsigned_abs() as usize > MAX_RANK {
            None
        } else {
            Some(Letter(value as i8))
        }
    }

    /// Letter at position `index` of the `+1, -1, +2, -2, ...` ordering.
    pub fn from_index(index: usize) -> Letter {
        assert!(index < 2 * MAX_RANK, "letter index {index} out of range");
        let generator = (index / 2 + 1) as i8;
        Letter(if index.is_multiple_of(2) { generator } else { -generator })
    }

    pub fn value(self) -> i32 {
        self.0 as i32
    }

    /// Generator number `|i|`, starting at 1.
    pub fn generator(self) -> usize {
        self.0.unsigned_abs() as usize
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn index(self) -> usize {
        2 * (self.generator() - 1) + usize::from(self.0 < 0)
    }

    pub fn inverse(self) -> Letter {
        Letter(-self.0)
    }
}

impl TryFrom<i32> for Letter {
    type Error = Error;

    fn try_from(value: i32) -> Result<Self> {
        Letter::new(value).ok_or_else(|| Error::InvalidShape(format!("{value} is not a letter")))
    }
}

impl From<Letter> for i32 {
    fn from(letter: Letter) -> i32 {
        letter.value()
    }
}

impl fmt::Debug for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.0)
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.0)
    }
}

/// A freely reduced word. The empty word is the identity.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<Letter>", into = "Vec<Letter>")]
pub struct ReducedWord {
    letters: Vec<Letter>,
}

impl ReducedWord {
    pub fn identity() -> ReducedWord {
        ReducedWord::default()
    }

    /// Builds a word from letters that must already be reduced.
    pub fn new(letters: Vec<Letter>) -> Result<ReducedWord> {
        if let Some(pos) = letters.windows(2).position(|w| w[1] == w[0].inverse()) {
            return Err(Error::InvalidShape(format!(
                "letters {} and {} at position {pos} cancel",
                letters[pos],
                letters[pos + 1]
            )));
        }
        Ok(ReducedWord { letters })
    }

    /// Reduces an arbitrary letter sequence.
    pub fn reduce<I: IntoIterator<Item = Letter>>(letters: I) -> ReducedWord {
        let mut word = ReducedWord::identity();
        for x in letters {
            word.push(x);
        }
        word
    }

    pub fn from_values(values: &[i32]) -> Result<ReducedWord> {
        let letters = values
            .iter()
            .map(|&v| Letter::try_from(v))
            .collect::<Result<Vec<_>>>()?;
        ReducedWord::new(letters)
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn first(&self) -> Option<Letter> {
        self.letters.first().copied()
    }

    pub fn last(&self) -> Option<Letter> {
        self.letters.last().copied()
    }

    /// Right-multiplies by one letter in place.
    #[inline]
    pub fn push(&mut self, x: Letter) {
        if self.letters.last() == Some(&x.inverse()) {
            self.letters.pop();
        } else {
            self.letters.push(x);
        }
    }

    /// Reduced form of `self · x`.
    pub fn reduce_concat(&self, x: Letter) -> ReducedWord {
        let mut out = self.clone();
        out.push(x);
        out
    }

    pub fn mul(&self, other: &ReducedWord) -> ReducedWord {
        let mut out = self.clone();
        for &x in &other.letters {
            out.push(x);
        }
        out
    }

    pub fn inverse(&self) -> ReducedWord {
        ReducedWord {
            letters: self.letters.iter().rev().map(|x| x.inverse()).collect(),
        }
    }

    /// Word length `|g|`.
    pub fn word_length(&self) -> usize {
        self.letters.len()
    }

    /// Distance `|x⁻¹ y|` in the word metric.
    pub fn distance(&self, other: &ReducedWord) -> usize {
        let common = self
            .letters
            .iter()
            .zip(&other.letters)
            .take_while(|(a, b)| a == b)
            .count();
        self.len() + other.len() - 2 * common
    }

    pub(crate) fn drop_front(&mut self, count: usize) {
        self.letters.drain(..count);
    }
}

impl TryFrom<Vec<Letter>> for ReducedWord {
    type Error = Error;

    fn try_from(letters: Vec<Letter>) -> Result<Self> {
        ReducedWord::new(letters)
    }
}

impl From<ReducedWord> for Vec<Letter> {
    fn from(word: ReducedWord) -> Vec<Letter> {
        word.letters
    }
}

impl fmt::Debug for ReducedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.letters).finish()
    }
}

/// A fully supported probability vector on the `2d` letters of the free group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct StepDistribution {
    probs: Vec<f64>,
}

impl StepDistribution {
    /// Validates a raw vector in `+1, -1, +2, -2, ...` order and renormalizes
    /// it to total mass one.
    pub fn new(raw: &[f64]) -> Result<StepDistribution> {
        if raw.is_empty() || !raw.len().is_multiple_of(2) {
            return Err(Error::InvalidShape(format!(
                "a step law needs 2d > 0 entries, got {}",
                raw.len()
            )));
        }
        if raw.len() > 2 * MAX_RANK {
            return Err(Error::InvalidShape(format!("rank above {MAX_RANK}")));
        }
        if let Some((index, &value)) = raw
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v > 0.0) || !v.is_finite())
        {
            return Err(Error::NonPositiveMass { index, value });
        }
        let sum: f64 = raw.iter().sum();
        if (sum - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::MassNotOne { sum });
        }
        Ok(StepDistribution {
            probs: raw.iter().map(|v| v / sum).collect(),
        })
    }

    pub fn uniform(d: usize) -> StepDistribution {
        StepDistribution::new(&vec![1.0 / (2 * d) as f64; 2 * d]).expect("uniform law is valid")
    }

    /// Symmetric law from the `d` half-weights `p(+i) = p(-i)`, which must sum to 1/2.
    pub fn symmetric(half: &[f64]) -> Result<StepDistribution> {
        let raw: Vec<f64> = half.iter().flat_map(|&v| [v, v]).collect();
        StepDistribution::new(&raw)
    }

    pub fn rank(&self) -> usize {
        self.probs.len() / 2
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, x: Letter) -> f64 {
        self.probs[x.index()]
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.probs.chunks(2).all(|c| (c[0] - c[1]).abs() <= tol)
    }
}

impl TryFrom<Vec<f64>> for StepDistribution {
    type Error = Error;

    fn try_from(raw: Vec<f64>) -> Result<Self> {
        StepDistribution::new(&raw)
    }
}

impl From<StepDistribution> for Vec<f64> {
    fn from(p: StepDistribution) -> Vec<f64> {
        p.probs
    }
}

/// Number of reduced words of length exactly `n` in the free group of rank `d`.
pub fn sphere_size(d: usize, n: usize) -> u128 {
    if n == 0 {
        1
    } else {
        2 * d as u128 * (2 * d as u128 - 1).pow(n as u32 - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(values: &[i32]) -> ReducedWord {
        ReducedWord::from_values(values).unwrap()
    }

    fn l(v: i32) -> Letter {
        Letter::new(v).unwrap()
    }

    #[test]
    fn reduce_concat_examples() {
        assert_eq!(w(&[1, 2]).reduce_concat(l(-2)), w(&[1]));
        assert_eq!(ReducedWord::identity().reduce_concat(l(1)), w(&[1]));
        assert_eq!(w(&[1, 2]).reduce_concat(l(1)), w(&[1, 2, 1]));
    }

    #[test]
    fn letter_indexing() {
        for idx in 0..10 {
            assert_eq!(Letter::from_index(idx).index(), idx);
        }
        assert_eq!(l(1).index(), 0);
        assert_eq!(l(-1).index(), 1);
        assert_eq!(l(-3).index(), 5);
        assert_eq!(l(2).inverse(), l(-2));
        assert!(Letter::new(0).is_none());
    }

    #[test]
    fn rejects_unreduced_words() {
        assert!(ReducedWord::from_values(&[1, -1]).is_err());
        assert_eq!(ReducedWord::reduce([l(1), l(2), l(-2), l(3)]), w(&[1, 3]));
    }

    #[test]
    fn word_length_examples() {
        assert_eq!(w(&[1, 2, -1]).word_length(), 3);
        assert_eq!(ReducedWord::identity().word_length(), 0);
        assert_eq!(w(&[1, 2]).distance(&w(&[1, -3])), 2);
    }

    #[test]
    fn step_distribution_validation() {
        let p = StepDistribution::new(&[0.25; 4]).unwrap();
        assert_eq!(p.rank(), 2);
        assert!(StepDistribution::new(&[0.4, 0.2, 0.3, 0.1]).is_ok());
        assert!(matches!(
            StepDistribution::new(&[0.5, 0.5, 0.0, 0.0]),
            Err(Error::NonPositiveMass { index: 2, .. })
        ));
        assert!(matches!(
            StepDistribution::new(&[0.5, 0.5, 0.1, 0.1]),
            Err(Error::MassNotOne { .. })
        ));
        assert!(StepDistribution::new(&[0.5, 0.25, 0.25]).is_err());
        let q = StepDistribution::new(&[0.25, 0.25, 0.25, 0.25 + 5e-13]).unwrap();
        assert!((q.probs().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn serde_round_trip() {
        let word = w(&[1, -2, -2]);
        let json = serde_json::to_string(&word).unwrap();
        assert_eq!(json, "[1,-2,-2]");
        assert_eq!(serde_json::from_str::<ReducedWord>(&json).unwrap(), word);
        assert!(serde_json::from_str::<ReducedWord>("[1,-1]").is_err());
    }
}
