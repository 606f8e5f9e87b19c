use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::market::MarketParams;
use crate::marks::MarkModel;

/// User-facing grid settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub dt: f64,
    pub d_lambda: f64,
    pub q_min: f64,
    pub q_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            dt: 0.005,
            d_lambda: 1.0,
            q_min: -12.0,
            q_max: 12.0,
        }
    }
}

/// Time, liquidity and inventory lattice of the scheme.
///
/// Liquidity row `0` sits at `lambda_lower - d_lambda` and holds the value
/// after the circuit breaker; rows `1..n_lambda` run from `lambda_lower` to
/// `lambda_upper`. Time index `k` means `k dt` of remaining horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub dt: f64,
    pub d_lambda: f64,
    pub dq: f64,
    pub lambda_lower: f64,
    pub lambda_upper: f64,
    pub q_min: f64,
    pub n_t: usize,
    pub n_lambda: usize,
    pub n_q: usize,
}

const SNAP: f64 = 1e-9;

fn whole(x: f64, what: &str) -> Result<usize> {
    let n = x.round();
    if (x - n).abs() > SNAP * x.abs().max(1.0) || n < 0.0 {
        return Err(ModelError::InvalidGrid(format!("{what} = {x} is not a whole number")));
    }
    Ok(n as usize)
}

impl Grid {
    pub fn new(params: &MarketParams, spec: &GridSpec) -> Result<Self> {
        if !(spec.dt > 0.0 && spec.d_lambda > 0.0) {
            return Err(ModelError::InvalidGrid("steps must be positive".into()));
        }
        if spec.q_min > spec.q_max {
            return Err(ModelError::InvalidGrid("q_min exceeds q_max".into()));
        }
        let dq = params.lot_size;
        let n_t = whole(params.horizon / spec.dt, "T / dt")?;
        let rows = whole(
            (params.lambda_upper - params.lambda_lower) / spec.d_lambda,
            "(lambda_upper - lambda_lower) / d_lambda",
        )?;
        let lo = spec.q_min / dq;
        let hi = spec.q_max / dq;
        let n_lo = lo.round();
        if (lo - n_lo).abs() > SNAP || (hi - hi.round()).abs() > SNAP {
            return Err(ModelError::InvalidGrid("inventory bounds must be lot multiples".into()));
        }
        Ok(Grid {
            dt: spec.dt,
            d_lambda: spec.d_lambda,
            dq,
            lambda_lower: params.lambda_lower,
            lambda_upper: params.lambda_upper,
            q_min: n_lo * dq,
            n_t,
            n_lambda: rows + 2,
            n_q: (hi.round() - n_lo) as usize + 1,
        })
    }

    #[inline]
    pub fn lambda(&self, j: usize) -> f64 {
        self.lambda_lower + (j as f64 - 1.0) * self.d_lambda
    }

    #[inline]
    pub fn q(&self, i: usize) -> f64 {
        self.q_min + i as f64 * self.dq
    }

    pub fn q_max(&self) -> f64 {
        self.q(self.n_q - 1)
    }

    pub fn slice_len(&self) -> usize {
        self.n_lambda * self.n_q
    }

    #[inline]
    pub fn node(&self, j: usize, i: usize) -> usize {
        j * self.n_q + i
    }

    /// Nearest liquidity row at or above the trigger.
    pub fn nearest_lambda(&self, lambda: f64) -> usize {
        let pos = ((lambda - self.lambda_lower) / self.d_lambda).round() + 1.0;
        pos.clamp(1.0, (self.n_lambda - 1) as f64) as usize
    }

    pub fn nearest_q(&self, q: f64) -> usize {
        let pos = ((q - self.q_min) / self.dq).round();
        pos.clamp(0.0, (self.n_q - 1) as f64) as usize
    }

    /// Time index for `remaining` horizon.
    pub fn nearest_t(&self, remaining: f64) -> usize {
        let pos = (remaining / self.dt).round();
        pos.clamp(0.0, self.n_t as f64) as usize
    }

    pub fn q_index(&self, q: f64) -> Option<usize> {
        let pos = (q - self.q_min) / self.dq;
        let n = pos.round();
        ((pos - n).abs() <= SNAP && n >= 0.0 && (n as usize) < self.n_q).then_some(n as usize)
    }

    /// Largest event rate the scheme sees times the step.
    pub fn stability_product(&self, params: &MarketParams, marks: &MarkModel) -> (f64, f64) {
        let rate = params.market_rate(self.lambda_upper) * mass(&marks.market_orders)
            + params.limit_rate(self.lambda_lower) * mass(&marks.limit_orders);
        (rate, self.dt * rate)
    }

    /// The explicit step is monotone iff `dt * max rate <= 1`.
    pub fn check_stability(&self, params: &MarketParams, marks: &MarkModel) -> Result<()> {
        let (rate, product) = self.stability_product(params, marks);
        if product > 1.0 {
            return Err(ModelError::StabilityViolation {
                dt: self.dt,
                rate,
                product,
            });
        }
        Ok(())
    }
}

fn mass(marks: &[crate::marks::Mark]) -> f64 {
    marks.iter().map(|m| m.prob).sum()
}

/// Linear interpolation in liquidity of column `qi` of one time slice.
///
/// Liquidity above the top row is clamped to it.
pub fn interpolate_lambda(grid: &Grid, slice: &[f64], lambda: f64, qi: usize) -> f64 {
    let base = grid.lambda_lower - grid.d_lambda;
    let pos = (lambda - base) / grid.d_lambda;
    let top = grid.n_lambda - 1;
    if pos >= top as f64 {
        return slice[grid.node(top, qi)];
    }
    let pos = pos.max(0.0);
    let lo = pos.floor();
    let frac = pos - lo;
    let k = lo as usize;
    if frac <= SNAP {
        return slice[grid.node(k, qi)];
    }
    if frac >= 1.0 - SNAP {
        return slice[grid.node(k + 1, qi)];
    }
    (1.0 - frac) * slice[grid.node(k, qi)] + frac * slice[grid.node(k + 1, qi)]
}
