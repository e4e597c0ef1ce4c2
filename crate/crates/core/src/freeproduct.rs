//! Block-length drift of nearest-neighbour walks on free products.
//!
//! `ℓ_B = Σ α_i ((1 - ξ_i)/ξ_i)(1 - (1 - ξ_i) G_i(ξ_i))`, where `G_i` is the
//! return generating function of the factor walk and `ξ_i` the probability
//! of ever hitting `G_i \ {e}` from `e`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{FactorSpec, FreeProductSpec};
use crate::hitting::{passage_brackets, PassageConfig};
use crate::walk::FreeProductWalk;

/// Largest number of factors for the endpoint enumeration of [`block_drift`].
pub const MAX_ENDPOINT_FACTORS: usize = 16;

/// Return generating function `G(z) = Σ p^(n)(e) z^n` of one factor walk.
#[derive(Clone, Debug)]
pub struct FactorGreenFunction {
    factor: FactorSpec,
}

impl FactorGreenFunction {
    pub fn new(factor: FactorSpec) -> FactorGreenFunction {
        FactorGreenFunction { factor }
    }

    /// Radius of convergence: `1` for finite factors, `1/(2√(p₊p₋))` for ℤ.
    pub fn radius(&self) -> f64 {
        match &self.factor {
            FactorSpec::Finite(_) => 1.0,
            FactorSpec::Integer { p_plus, p_minus } => 1.0 / (2.0 * (p_plus * p_minus).sqrt()),
        }
    }

    pub fn eval(&self, z: f64) -> Result<f64> {
        factor_green(&self.factor, z)
    }
}

/// Factor transition matrix `P[g][h] = μ(g⁻¹h)`.
fn transition_matrix(factor: &FactorSpec) -> Option<DMatrix<f64>> {
    let m = factor.order()?;
    let mut p = DMatrix::zeros(m, m);
    for g in 0..m {
        for (s, w) in factor.steps() {
            p[(g, factor.mul(g as i64, s) as usize)] += w;
        }
    }
    Some(p)
}

/// `G(z)`: the `(e, e)` entry of `(I - zP)⁻¹` for finite factors,
/// `1/√(1 - 4p₊p₋z²)` for ℤ.
pub fn factor_green(factor: &FactorSpec, z: f64) -> Result<f64> {
    let radius = FactorGreenFunction::new(factor.clone()).radius();
    if !(0.0..radius).contains(&z) {
        return Err(Error::OutOfDomain(format!("z = {z} outside [0, {radius})")));
    }
    match factor {
        FactorSpec::Integer { p_plus, p_minus } => Ok(1.0 / (1.0 - 4.0 * p_plus * p_minus * z * z).sqrt()),
        FactorSpec::Finite(_) => {
            let p = transition_matrix(factor).expect("finite factor");
            let m = p.nrows();
            let a = DMatrix::identity(m, m) - p * z;
            let mut e0 = DVector::zeros(m);
            e0[0] = 1.0;
            let x = a
                .lu()
                .solve(&e0)
                .ok_or_else(|| Error::OutOfDomain(format!("resolvent singular at z = {z}")))?;
            Ok(x[0])
        }
    }
}

/// `ξ_1..ξ_r` with their brackets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiVector {
    /// Bracket midpoints.
    pub values: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub radius: usize,
}

impl XiVector {
    pub fn max_width(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).fold(0.0, f64::max)
    }
}

/// Brackets each `ξ_i` to width below `tol`.
pub fn xi_vector(spec: &FreeProductSpec, tol: f64) -> Result<XiVector> {
    xi_vector_with(spec, tol, &PassageConfig::default())
}

pub fn xi_vector_with(spec: &FreeProductSpec, tol: f64, cfg: &PassageConfig) -> Result<XiVector> {
    let pb = passage_brackets(&FreeProductWalk::new(spec), cfg)?;
    let xi = XiVector {
        values: pb.xi.iter().map(|b| b.midpoint()).collect(),
        lower: pb.xi.iter().map(|b| b.lower).collect(),
        upper: pb.xi.iter().map(|b| b.upper).collect(),
        radius: pb.radius,
    };
    if xi.max_width() >= tol {
        return Err(Error::NoConvergence { what: "ξ bracket", iterations: pb.iterations });
    }
    if xi.lower.iter().any(|&l| l <= 0.0) || xi.upper.iter().any(|&u| u >= 1.0) {
        return Err(Error::DomainViolation("ξ bracket not inside (0, 1)".into()));
    }
    Ok(xi)
}

/// `ℓ_B` at given `ξ`.
pub fn block_drift_at(spec: &FreeProductSpec, xi: &[f64]) -> Result<f64> {
    if xi.len() != spec.rank() {
        return Err(Error::InvalidShape(format!("{} ξ values for {} factors", xi.len(), spec.rank())));
    }
    let mut total = 0.0;
    for ((factor, &a), &x) in spec.factors().iter().zip(spec.alpha()).zip(xi) {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::OutOfDomain(format!("ξ = {x} outside (0, 1)")));
        }
        let g = factor_green(factor, x)?;
        total += a * ((1.0 - x) / x) * (1.0 - (1.0 - x) * g);
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockDrift {
    pub l_block: f64,
    /// Min and max of `ℓ_B` over all bracket-endpoint combinations.
    pub interval: [f64; 2],
    pub xi: Vec<f64>,
}

/// `ℓ_B` at the bracket midpoints, with the endpoint interval.
pub fn block_drift(spec: &FreeProductSpec, xi: &XiVector) -> Result<BlockDrift> {
    let r = spec.rank();
    if r > MAX_ENDPOINT_FACTORS {
        return Err(Error::InvalidShape(format!("{r} factors exceed the endpoint limit {MAX_ENDPOINT_FACTORS}")));
    }
    let l_block = block_drift_at(spec, &xi.values)?;
    let mut lo = l_block;
    let mut hi = l_block;
    let mut point = vec![0.0; r];
    for mask in 0u32..(1 << r) {
        for (i, x) in point.iter_mut().enumerate() {
            *x = if mask >> i & 1 == 0 { xi.lower[i] } else { xi.upper[i] };
        }
        let v = block_drift_at(spec, &point)?;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok(BlockDrift { l_block, interval: [lo, hi], xi: xi.values.clone() })
}

/// `ξ` then `ℓ_B` in one call.
pub fn block_drift_for(spec: &FreeProductSpec, tol: f64) -> Result<BlockDrift> {
    block_drift(spec, &xi_vector(spec, tol)?)
}
