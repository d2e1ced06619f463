//! Monte Carlo estimation of Weyl symbols of Schrödinger semigroups `e^{-tH}`,
//! `H = -Δ + V`, with a grid oracle and bound checks.
//!
//! The Monte Carlo side is generic over [`Real`] (`f32`, `f64`); the grid
//! oracle and the commutator experiment are `f64`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod brownian;
pub mod commutator;
pub mod error;
pub mod faadibruno;
pub mod multiindex;
pub mod oracle;
pub mod potentials;
pub mod scalar;
pub mod symbol_estimator;

pub use brownian::{a_constant, b_constant, SampleMean, VariancePreset};
pub use error::{Error, Result};
pub use faadibruno::{derivative_of_exponential, enumerate_f, theorem31_bound, FaaDiBrunoTerm};
pub use multiindex::{MultiIndex, Site};
pub use potentials::{PotentialConfig, PotentialKind, PotentialSpec, ScalarFunction};
pub use scalar::Real;
pub use symbol_estimator::{EstimatorParams, PhasePoint, SymbolEstimate};

pub type Potential = PotentialSpec<f64>;
pub type Potential32 = PotentialSpec<f32>;
pub type Function = ScalarFunction<f64>;
pub type Point = PhasePoint<f64>;
pub type Point32 = PhasePoint<f32>;
pub type Estimate = SymbolEstimate<f64>;
pub type Estimate32 = SymbolEstimate<f32>;
pub type Path = brownian::DiscretePath<f64>;
