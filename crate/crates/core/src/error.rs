use thiserror::Error;

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("shock carries both a market order ({eta}) and a limit-order flow ({rho})")]
    SimultaneousOrders { eta: f64, rho: f64 },

    #[error("initial liquidity {lambda} outside [{lower}, {upper}]")]
    LiquidityOutOfBounds { lambda: f64, lower: f64, upper: f64 },

    #[error(
        "explicit step not monotone: dT * max rate = {dt} * {rate} = {product} > 1"
    )]
    StabilityViolation { dt: f64, rate: f64, product: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("elasticity check degenerate at lambda = {lambda}: squared impact norm is zero")]
    DegenerateImpactNorm { lambda: f64 },

    #[error("candidate event budget of {budget} exhausted on path {path}")]
    CandidateBudgetExhausted { path: u64, budget: usize },

    #[error("path {path} (seed {seed}) failed: {source}")]
    PathFailure {
        seed: u64,
        path: u64,
        #[source]
        source: Box<ModelError>,
    },

    #[error("surfaces are not comparable: {0}")]
    Mismatch(String),

    #[error("statistic undefined: {0}")]
    Undefined(String),

    #[error("policy file: {0}")]
    PolicyFormat(String),
}

impl ModelError {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        ModelError::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
