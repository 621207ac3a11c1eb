//! Problem instances: parameters, claim laws, the reserve grid, the
//! claim-free dynamics and the claim integral shared by every equation.

mod claims;
mod grid;
mod integral;
mod params;

pub use claims::ClaimDistribution;
pub(crate) use claims::AtomTable;
pub use grid::Grid;
pub(crate) use grid::{forward_derivative, interpolate};
pub use integral::{claim_integral, ClaimEvaluator, ClaimKernel};
pub use params::{Diagnostics, ModelParams, WARN_NEGATIVE_RESERVE};
