//! Finite differences on quasi-uniform grids for first-order boundary value
//! problems on the semi-infinite interval `[0, inf)`.
//!
//! * [`grid`] builds grids from the logarithmic and algebraic grid
//!   generating functions; the last node sits at `x = inf`.
//! * [`scheme`] assembles the residual and block Jacobian of the
//!   non-standard finite-difference scheme.
//! * [`newton`] solves the discrete system and runs mesh continuation.
//! * [`richardson`] extrapolates over nested grids, computes observed orders
//!   and the a posteriori error estimate.
//! * [`problems`] holds the colloid benchmark and a linear fixture.
//! * [`cli`] backs the `nsfd-bvp` binary.

pub mod cli;
pub mod error;
pub mod grid;
mod linalg;
pub mod newton;
pub mod problems;
pub mod richardson;
pub mod scheme;

pub use error::{BvpError, Result};
pub use grid::{build_grid, map_eval, scheme_coefficients, GridMap, MapKind, QuasiUniformGrid, SchemeCoefficients};
pub use newton::{
    continuation_solve, interpolate_to_finer, newton_solve, solve_linear, update_norm, ContinuationRun,
    NewtonConfig, NewtonReport, StartPath,
};
pub use problems::{colloid_continuation, colloid_dudx0, colloid_exact, colloid_system, linear_exact, linear_fixture, ColloidProblem};
pub use richardson::{
    build_table, error_estimate, extrapolate_common_nodes, extrapolate_step, global_error, observed_order,
    max_abs_by_component, observed_orders, restrict_to_coarse, ErrorEstimate, ExtrapolationTable, NormKind, OrderEstimate, ROUND_OFF_FLOOR,
};
pub use scheme::{fd_jacobian_f, jacobian, legacy_midpoint_weights, residual, BcStructure, BlockJacobian, BvpSystem, DiscreteSolution};
