//! Optimal dividend bands for the compound Poisson reserve with credit
//! interest, debit interest and absolute ruin.
//!
//! The crate solves the integro-differential equation of the no-dividend
//! region by forward marching, assembles the value function and its band
//! strategy, certifies the result against the HJB complementarity
//! conditions and the one-step dynamic-programming operator, and offers two
//! independent checks: a discretised value iteration and an exact
//! event-driven Monte Carlo simulator.

pub mod error;
pub mod hjb;
pub mod model;
pub mod odeint;
pub mod sim;

pub use error::{Error, Result};
pub use hjb::{
    apply_t, build_value, build_value_auto, classify_regions, g_value, generator_value, hjb_residual,
    value_iteration_oracle, BandStrategy, BuildOptions, Label, ResidualReport, Segment, Solution,
};
pub use model::{claim_integral, ClaimDistribution, Diagnostics, Grid, ModelParams};
pub use odeint::{seed_boundary, solve_homogeneous, solve_patched, GridKind, ValueGrid};
pub use sim::{dominance_check, estimate_return, simulate_path, SimConfig, SimEstimate, Strategy};
