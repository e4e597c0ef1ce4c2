//! Free products of finite groups and copies of ℤ, in alternating-block
//! normal form.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::free::StepDistribution;

/// Tolerance on the total mass of factor laws and factor weights.
pub const WEIGHT_TOLERANCE: f64 = 1e-15;

/// Associativity is checked exhaustively up to this order, on a sample above it.
const FULL_ASSOCIATIVITY_ORDER: usize = 24;

/// A finite group given by its multiplication table, with a step law on its
/// non-identity elements. Element 0 is the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteFactor {
    table: Vec<Vec<usize>>,
    inverse: Vec<usize>,
    /// `law[g - 1]` is the probability of multiplying by element `g`.
    law: Vec<f64>,
}

impl FiniteFactor {
    pub fn from_table(table: Vec<Vec<usize>>, law: Vec<f64>) -> Result<FiniteFactor> {
        let m = table.len();
        if m < 2 {
            return Err(Error::InvalidSpec("a finite factor needs order at least 2".into()));
        }
        if table.iter().any(|row| row.len() != m || row.iter().any(|&g| g >= m)) {
            return Err(Error::InvalidSpec(format!("multiplication table is not {m}x{m}")));
        }
        for g in 0..m {
            if table[0][g] != g || table[g][0] != g {
                return Err(Error::InvalidSpec("element 0 is not the identity".into()));
            }
        }
        let mut inverse = vec![usize::MAX; m];
        for (g, row) in table.iter().enumerate() {
            let mut seen = vec![false; m];
            for &h in row {
                if std::mem::replace(&mut seen[h], true) {
                    return Err(Error::InvalidSpec(format!("row {g} is not a permutation")));
                }
            }
            inverse[g] = row.iter().position(|&h| h == 0).expect("row is a permutation");
            if table[inverse[g]][g] != 0 {
                return Err(Error::InvalidSpec(format!("element {g} has no two-sided inverse")));
            }
        }
        let triples: Box<dyn Iterator<Item = (usize, usize, usize)>> =
            if m <= FULL_ASSOCIATIVITY_ORDER {
                Box::new((0..m).flat_map(move |a| (0..m).flat_map(move |b| (0..m).map(move |c| (a, b, c)))))
            } else {
                // deterministic spot check
                Box::new((0..4096usize).map(move |k| {
                    let h = k.wrapping_mul(0x9E37_79B9_7F4A_7C15);
                    (h % m, (h >> 20) % m, (h >> 40) % m)
                }))
            };
        for (a, b, c) in triples {
            if table[table[a][b]][c] != table[a][table[b][c]] {
                return Err(Error::InvalidSpec(format!("table is not associative at ({a},{b},{c})")));
            }
        }
        let law = validate_weights(&law, m - 1, "factor law")?;
        Ok(FiniteFactor { table, inverse, law })
    }

    /// Cyclic group ℤ/mℤ with element `g` standing for the residue `g`.
    pub fn cyclic(order: usize, law: Vec<f64>) -> Result<FiniteFactor> {
        let table = (0..order)
            .map(|a| (0..order).map(|b| (a + b) % order).collect())
            .collect();
        FiniteFactor::from_table(table, law)
    }

    pub fn order(&self) -> usize {
        self.table.len()
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.table[a][b]
    }

    pub fn inverse(&self, a: usize) -> usize {
        self.inverse[a]
    }

    pub fn table(&self) -> &[Vec<usize>] {
        &self.table
    }

    /// Probability of the step `g`; zero for the identity.
    pub fn step_prob(&self, g: usize) -> f64 {
        if g == 0 {
            0.0
        } else {
            self.law[g - 1]
        }
    }

    pub fn law(&self) -> &[f64] {
        &self.law
    }
}

/// One factor of a free product.
#[derive(Clone, Debug, PartialEq)]
pub enum FactorSpec {
    Finite(FiniteFactor),
    /// ℤ with nearest-neighbour law `p_plus` on `+1` and `p_minus` on `-1`.
    Integer { p_plus: f64, p_minus: f64 },
}

impl FactorSpec {
    pub fn integer(p_plus: f64, p_minus: f64) -> Result<FactorSpec> {
        let w = validate_weights(&[p_plus, p_minus], 2, "integer factor law")?;
        if w.iter().any(|&v| v <= 0.0) {
            return Err(Error::InvalidSpec("integer factor law must charge both directions".into()));
        }
        Ok(FactorSpec::Integer { p_plus: w[0], p_minus: w[1] })
    }

    pub fn cyclic(order: usize, law: Vec<f64>) -> Result<FactorSpec> {
        FiniteFactor::cyclic(order, law).map(FactorSpec::Finite)
    }

    /// Group order, `None` for ℤ.
    pub fn order(&self) -> Option<usize> {
        match self {
            FactorSpec::Finite(f) => Some(f.order()),
            FactorSpec::Integer { .. } => None,
        }
    }

    /// Product of two elements; for ℤ elements are integers, for finite
    /// factors table indices.
    #[inline]
    pub fn mul(&self, a: i64, b: i64) -> i64 {
        match self {
            FactorSpec::Finite(f) => f.mul(a as usize, b as usize) as i64,
            FactorSpec::Integer { .. } => a + b,
        }
    }

    pub fn inverse(&self, a: i64) -> i64 {
        match self {
            FactorSpec::Finite(f) => f.inverse(a as usize) as i64,
            FactorSpec::Integer { .. } => -a,
        }
    }

    /// Word length of a non-identity element inside the factor.
    #[inline]
    pub fn element_length(&self, a: i64) -> usize {
        match self {
            FactorSpec::Finite(_) => usize::from(a != 0),
            FactorSpec::Integer { .. } => a.unsigned_abs() as usize,
        }
    }

    /// Support of the step law as `(element, probability)` pairs.
    pub fn steps(&self) -> Vec<(i64, f64)> {
        match self {
            FactorSpec::Finite(f) => (1..f.order())
                .map(|g| (g as i64, f.step_prob(g)))
                .filter(|&(_, w)| w > 0.0)
                .collect(),
            FactorSpec::Integer { p_plus, p_minus } => vec![(1, *p_plus), (-1, *p_minus)],
        }
    }
}

/// A free product `G_1 * ... * G_r` with factor weights `alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct FreeProductSpec {
    factors: Vec<FactorSpec>,
    alpha: Vec<f64>,
}

impl FreeProductSpec {
    pub fn new(factors: Vec<FactorSpec>, alpha: Vec<f64>) -> Result<FreeProductSpec> {
        if factors.len() < 2 {
            return Err(Error::InvalidSpec("a free product needs at least two factors".into()));
        }
        if factors.len() > u16::MAX as usize {
            return Err(Error::InvalidSpec("too many factors".into()));
        }
        let alpha = validate_weights(&alpha, factors.len(), "alpha")?;
        if alpha.iter().any(|&a| a <= 0.0) {
            return Err(Error::InvalidSpec("factor weights must be positive".into()));
        }
        if factors.len() == 2 && factors.iter().all(|f| f.order() == Some(2)) {
            return Err(Error::InvalidSpec(
                "Z/2 * Z/2 carries only recurrent walks and is excluded".into(),
            ));
        }
        Ok(FreeProductSpec { factors, alpha })
    }

    /// The free group of rank `d >= 2` as a free product of `d` copies of ℤ,
    /// with the same nearest-neighbour law.
    pub fn free_group(p: &StepDistribution) -> Result<FreeProductSpec> {
        let (factors, alpha) = integer_factors(p);
        FreeProductSpec::new(factors, alpha)
    }

    pub fn factors(&self) -> &[FactorSpec] {
        &self.factors
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn rank(&self) -> usize {
        self.factors.len()
    }

    pub fn with_alpha(&self, alpha: Vec<f64>) -> Result<FreeProductSpec> {
        FreeProductSpec::new(self.factors.clone(), alpha)
    }

    pub fn from_json(text: &str) -> Result<FreeProductSpec> {
        let doc: FreeProductJson =
            serde_json::from_str(text).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        doc.try_into()
    }

    pub fn to_json(&self) -> FreeProductJson {
        FreeProductJson::from(self)
    }
}

/// Splits a free-group law into per-generator ℤ factors and their weights.
pub(crate) fn integer_factors(p: &StepDistribution) -> (Vec<FactorSpec>, Vec<f64>) {
    p.probs()
        .chunks(2)
        .map(|c| {
            let a = c[0] + c[1];
            (FactorSpec::Integer { p_plus: c[0] / a, p_minus: c[1] / a }, a)
        })
        .unzip()
}

fn validate_weights(raw: &[f64], len: usize, what: &str) -> Result<Vec<f64>> {
    if raw.len() != len {
        return Err(Error::InvalidSpec(format!("{what} has {} entries, expected {len}", raw.len())));
    }
    if let Some((index, &value)) = raw.iter().enumerate().find(|(_, &v)| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::NonPositiveMass { index, value });
    }
    let sum: f64 = raw.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
        return Err(Error::MassNotOne { sum });
    }
    Ok(raw.iter().map(|v| v / sum).collect())
}

/// One block of a normal-form word: a non-identity element of one factor.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Block {
    pub factor: u16,
    pub element: i64,
}

impl fmt::Debug for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "G{}:{}", self.factor + 1, self.element)
    }
}

/// An alternating-block word. The empty word is the identity.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NormalFormWord {
    blocks: Vec<Block>,
}

impl NormalFormWord {
    pub fn identity() -> NormalFormWord {
        NormalFormWord::default()
    }

    pub fn new(blocks: Vec<Block>, spec: &[FactorSpec]) -> Result<NormalFormWord> {
        for (j, b) in blocks.iter().enumerate() {
            let factor = spec
                .get(b.factor as usize)
                .ok_or_else(|| Error::InvalidShape(format!("block {j} names unknown factor")))?;
            let ok = match factor {
                FactorSpec::Finite(f) => b.element > 0 && (b.element as usize) < f.order(),
                FactorSpec::Integer { .. } => b.element != 0,
            };
            if !ok {
                return Err(Error::InvalidShape(format!("block {j} is not a non-identity element")));
            }
            if j > 0 && blocks[j - 1].factor == b.factor {
                return Err(Error::InvalidShape(format!("blocks {} and {j} share a factor", j - 1)));
            }
        }
        Ok(NormalFormWord { blocks })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn last(&self) -> Option<Block> {
        self.blocks.last().copied()
    }

    /// Block length `‖x‖`.
    pub fn block_length(&self) -> usize {
        self.blocks.len()
    }

    /// Word length: factor-internal lengths summed over blocks.
    pub fn word_length(&self, factors: &[FactorSpec]) -> usize {
        self.blocks
            .iter()
            .map(|b| factors[b.factor as usize].element_length(b.element))
            .sum()
    }

    /// Right-multiplies by a single element of one factor in place.
    #[inline]
    pub fn push(&mut self, factors: &[FactorSpec], factor: u16, element: i64) {
        let spec = &factors[factor as usize];
        match self.blocks.last_mut() {
            Some(last) if last.factor == factor => {
                let product = spec.mul(last.element, element);
                if product == 0 {
                    self.blocks.pop();
                } else {
                    last.element = product;
                }
            }
            _ => {
                if element != 0 {
                    self.blocks.push(Block { factor, element });
                }
            }
        }
    }

    pub fn inverse(&self, factors: &[FactorSpec]) -> NormalFormWord {
        NormalFormWord {
            blocks: self
                .blocks
                .iter()
                .rev()
                .map(|b| Block { factor: b.factor, element: factors[b.factor as usize].inverse(b.element) })
                .collect(),
        }
    }

    pub(crate) fn drop_front(&mut self, count: usize) {
        self.blocks.drain(..count);
    }
}

impl fmt::Debug for NormalFormWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(&self.blocks).finish()
    }
}

/// Normal form of `x · y`.
pub fn multiply_normal_form(x: &NormalFormWord, y: &NormalFormWord, spec: &FreeProductSpec) -> NormalFormWord {
    let mut out = x.clone();
    for b in &y.blocks {
        out.push(spec.factors(), b.factor, b.element);
    }
    out
}

/// JSON form of a free-product specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeProductJson {
    pub factors: Vec<FactorJson>,
    pub alpha: Vec<f64>,
}

/// JSON form of one factor. `law` is indexed over non-identity elements in
/// table order; for `integer` it is `[p_plus, p_minus]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FactorJson {
    Cyclic { order: usize, law: Vec<f64> },
    Table { table: Vec<Vec<usize>>, law: Vec<f64> },
    Integer { law: Vec<f64> },
}

impl TryFrom<FactorJson> for FactorSpec {
    type Error = Error;

    fn try_from(doc: FactorJson) -> Result<FactorSpec> {
        match doc {
            FactorJson::Cyclic { order, law } => FactorSpec::cyclic(order, law),
            FactorJson::Table { table, law } => FiniteFactor::from_table(table, law).map(FactorSpec::Finite),
            FactorJson::Integer { law } => match law[..] {
                [p_plus, p_minus] => FactorSpec::integer(p_plus, p_minus),
                _ => Err(Error::InvalidSpec("integer factor law needs two entries".into())),
            },
        }
    }
}

impl TryFrom<FreeProductJson> for FreeProductSpec {
    type Error = Error;

    fn try_from(doc: FreeProductJson) -> Result<FreeProductSpec> {
        let factors = doc.factors.into_iter().map(FactorSpec::try_from).collect::<Result<Vec<_>>>()?;
        FreeProductSpec::new(factors, doc.alpha)
    }
}

impl From<&FreeProductSpec> for FreeProductJson {
    fn from(spec: &FreeProductSpec) -> FreeProductJson {
        let factors = spec
            .factors
            .iter()
            .map(|f| match f {
                FactorSpec::Finite(ff) => {
                    let m = ff.order();
                    let cyclic = (0..m).all(|a| (0..m).all(|b| ff.mul(a, b) == (a + b) % m));
                    if cyclic {
                        FactorJson::Cyclic { order: m, law: ff.law().to_vec() }
                    } else {
                        FactorJson::Table { table: ff.table().to_vec(), law: ff.law().to_vec() }
                    }
                }
                FactorSpec::Integer { p_plus, p_minus } => FactorJson::Integer { law: vec![*p_plus, *p_minus] },
            })
            .collect();
        FreeProductJson { factors, alpha: spec.alpha.clone() }
    }
}
