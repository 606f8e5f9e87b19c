//! Order-flow driven market model with a circuit breaker and private trade
//! signals, an explicit impulse-control solver for the trader's problem, and
//! Monte-Carlo evaluation of the resulting policies.

pub mod error;
pub mod eval;
pub mod exec;
pub mod flow;
pub mod hjb;
pub mod impact;
pub mod market;
pub mod marks;
pub mod policy;
pub mod rng;

pub use error::{ModelError, Result};
pub use eval::{consistency_check, run_experiment, signal_sharpe_ratio, EvalReport, Experiment};
pub use exec::Exec;
pub use flow::{simulate_path, vbar_bound, Agent, DoNothing, EventKind, PathRecord, SimOptions};
pub use impact::ImpactCurve;
pub use market::{check_elasticity, clip_to_liquidity, MarketParams, MarketState, ShockTriple};
pub use marks::{emit_signal, Mark, MarkModel, OrderKind};
pub use rng::PathSeed;
pub use policy::{ImmediateExecution, SolvedAgent, Twap};
