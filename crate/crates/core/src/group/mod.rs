//! Group elements in normal form.
//!
//! Free groups use [`ReducedWord`]; free products of finite groups and ℤ use
//! [`NormalFormWord`]. In both cases the identity is the empty word and all
//! values are immutable once built.

pub mod free;
pub mod product;

pub use free::{sphere_size, Letter, ReducedWord, StepDistribution};
pub use product::{
    multiply_normal_form, Block, FactorJson, FactorSpec, FiniteFactor, FreeProductJson, FreeProductSpec,
    NormalFormWord,
};

/// Validates a raw step law on the `2d` letters, see [`StepDistribution::new`].
pub fn validate_step_distribution(raw: &[f64]) -> crate::Result<StepDistribution> {
    StepDistribution::new(raw)
}
