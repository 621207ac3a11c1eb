//! Value function, band strategy and optimality certificates.

mod build;
mod operator;
mod oracle;
mod residual;
mod strategy;

pub use build::{barrier_candidate, build_value, build_value_auto, default_x_hi, BuildOptions, Solution};
pub use operator::{apply_t, t_fixed_sup, TOperator, MIN_PANELS};
pub use oracle::{oracle_grid, value_iteration_oracle, value_iteration_traced, TOL_VI};
pub use residual::{
    default_tol_rel, g_value, generator_value, hjb_residual, hjb_residual_with, node_operators, RegionCounts,
    ResidualReport, INCREMENT_PAIRS, TOL_MONO,
};
pub use strategy::{classify_regions, BandStrategy, Label, Segment};
