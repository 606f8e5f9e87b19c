//! Explicit finite-difference scheme for the trader's impulse-control
//! problem, policy extraction and certainty equivalents.

mod grid;
mod io;
mod scheme;
mod surface;

pub use grid::{interpolate_lambda, Grid, GridSpec};
pub use io::{read_policy, read_surface, write_policy, write_surface};
pub use scheme::{
    breaker_value, impulse_step, solve, terminal_condition, transport_step, SolverOptions, TransportStep,
};
pub use surface::{certainty_equivalent, Policy, Solution, SolveStats, ValueSurface};
