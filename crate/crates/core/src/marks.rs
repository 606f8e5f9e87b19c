//! Finite mark space for the external order flow.
//!
//! Market orders and limit-order events live in two bands of the driving
//! point process: a market-order mark is live at rate `f(lambda)` times its
//! probability, a limit-order mark at rate `g(lambda)` times its probability.
//! Each band carries its own conditional distribution, so at `lambda = 0`
//! the benchmark expects `f(0) = 20` market orders and `g(0) = 40`
//! limit-order events (30 posts, 10 cancellations) per unit time.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderKind {
    Market,
    Post,
    Cancel,
}

impl OrderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OrderKind::Market => "market",
            OrderKind::Post => "post",
            OrderKind::Cancel => "cancel",
        }
    }

    pub fn takes_liquidity(self) -> bool {
        !matches!(self, OrderKind::Post)
    }
}

/// One mark: signed volume and its probability within its band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mark {
    pub volume: f64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarkModel {
    /// Market-order marks; `volume` is the signed order size `eta`.
    pub market_orders: Vec<Mark>,
    /// Limit-order marks; `volume` is `rho`, positive for posts and
    /// negative for cancellations.
    pub limit_orders: Vec<Mark>,
    /// Probability that a live event is announced to the trader.
    pub signal_prob: f64,
}

impl Default for MarkModel {
    fn default() -> Self {
        Self::benchmark()
    }
}

impl MarkModel {
    /// Buy/sell market orders of 1-3 lots, posts and cancellations of 1-3
    /// lots with a 3:1 post/cancel split, signal probability 0.2.
    pub fn benchmark() -> Self {
        let side = [(1.0, 0.2), (2.0, 0.2), (3.0, 0.1)];
        let sizes = [(1.0, 0.4), (2.0, 0.4), (3.0, 0.2)];
        let mut market_orders = Vec::new();
        for &(v, p) in side.iter().rev() {
            market_orders.push(Mark { volume: -v, prob: p });
        }
        for &(v, p) in &side {
            market_orders.push(Mark { volume: v, prob: p });
        }
        let mut limit_orders = Vec::new();
        for &(v, p) in &sizes {
            limit_orders.push(Mark { volume: v, prob: 0.75 * p });
        }
        for &(v, p) in &sizes {
            limit_orders.push(Mark { volume: -v, prob: 0.25 * p });
        }
        MarkModel {
            market_orders,
            limit_orders,
            signal_prob: 0.2,
        }
    }

    pub fn with_signal_prob(mut self, p: f64) -> Self {
        self.signal_prob = p;
        self
    }

    /// Structural checks: finite volumes, nonzero sizes, each non-empty band
    /// a probability distribution, signal probability in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.signal_prob) {
            return Err(ModelError::param("signal_prob", "must lie in [0, 1]"));
        }
        for (name, band) in [
            ("market_orders", &self.market_orders),
            ("limit_orders", &self.limit_orders),
        ] {
            if band.is_empty() {
                continue;
            }
            for (i, m) in band.iter().enumerate() {
                if !m.volume.is_finite() || m.volume == 0.0 {
                    return Err(ModelError::param(
                        &format!("{name}[{i}].volume"),
                        "must be finite and nonzero",
                    ));
                }
                if !(m.prob >= 0.0 && m.prob <= 1.0) {
                    return Err(ModelError::param(
                        &format!("{name}[{i}].prob"),
                        "must lie in [0, 1]",
                    ));
                }
            }
            let total: f64 = band.iter().map(|m| m.prob).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(ModelError::param(
                    name,
                    format!("probabilities sum to {total}, expected 1"),
                ));
            }
        }
        Ok(())
    }

    /// Limit-order provision must dominate cancellations on average.
    pub fn validate_resilience(&self) -> Result<()> {
        let drift = self.mean_limit_volume();
        if drift > 0.0 {
            Ok(())
        } else {
            Err(ModelError::param(
                "limit_orders",
                format!("mean limit-order volume {drift} must be positive"),
            ))
        }
    }

    pub fn mean_limit_volume(&self) -> f64 {
        self.limit_orders.iter().map(|m| m.prob * m.volume).sum()
    }

    /// `sum_e nu(e) rho^+(e)^n` over the limit-order band.
    pub fn positive_limit_moment(&self, n: i32) -> f64 {
        self.limit_orders
            .iter()
            .map(|m| m.prob * m.volume.max(0.0).powi(n))
            .sum()
    }

    /// Total mass of the limit-order band.
    pub fn limit_mass(&self) -> f64 {
        self.limit_orders.iter().map(|m| m.prob).sum()
    }

    pub fn limit_kind(volume: f64) -> OrderKind {
        if volume > 0.0 {
            OrderKind::Post
        } else {
            OrderKind::Cancel
        }
    }
}

/// Signal the trader sees ahead of an event: `-1` for liquidity taking
/// (market orders, cancellations), `+1` for provision, `0` when unseen.
/// The signal carries direction only, never size.
pub fn emit_signal(kind: OrderKind, visible: bool) -> i8 {
    if !visible {
        return 0;
    }
    match kind {
        OrderKind::Market | OrderKind::Cancel => -1,
        OrderKind::Post => 1,
    }
}
