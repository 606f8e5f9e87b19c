use crate::error::{ModelError, Result};
use crate::market::{MarketParams, MarketState};
use crate::marks::MarkModel;

use super::grid::{interpolate_lambda, Grid};

/// Reduced value `w(T', lambda, q)` on every grid node, time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    pub grid: Grid,
    pub params: MarketParams,
    pub marks: MarkModel,
    pub values: Vec<f64>,
}

impl ValueSurface {
    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.grid.slice_len();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn value(&self, k: usize, j: usize, i: usize) -> f64 {
        self.slice(k)[self.grid.node(j, i)]
    }

    /// `w` at remaining-time index `k`, interpolated in liquidity; `q` must
    /// be an inventory node.
    pub fn at(&self, k: usize, lambda: f64, q: f64) -> Result<f64> {
        let i = self
            .grid
            .q_index(q)
            .ok_or_else(|| ModelError::InvalidGrid(format!("inventory {q} is not a grid node")))?;
        Ok(interpolate_lambda(&self.grid, self.slice(k), lambda, i))
    }

    /// Largest `|w(k, j, q) - w(k, j, -q)|` over live rows. Meaningful when
    /// the inventory grid and the mark model are symmetric.
    pub fn symmetry_residual(&self) -> f64 {
        let g = &self.grid;
        let mut worst: f64 = 0.0;
        for k in 0..=g.n_t {
            let s = self.slice(k);
            for j in 1..g.n_lambda {
                for i in 0..g.n_q {
                    worst = worst.max((s[g.node(j, i)] - s[g.node(j, g.n_q - 1 - i)]).abs());
                }
            }
        }
        worst
    }

    /// Node pairs where `w` falls by more than `tol` as liquidity rises, and
    /// as the remaining horizon grows.
    pub fn monotonicity_violations(&self, tol: f64) -> (usize, usize) {
        let g = &self.grid;
        let (mut in_lambda, mut in_time) = (0, 0);
        for k in 0..=g.n_t {
            for j in 1..g.n_lambda {
                for i in 0..g.n_q {
                    let v = self.value(k, j, i);
                    if j + 1 < g.n_lambda && self.value(k, j + 1, i) < v - tol {
                        in_lambda += 1;
                    }
                    if k > 0 && v < self.value(k - 1, j, i) - tol {
                        in_time += 1;
                    }
                }
            }
        }
        (in_lambda, in_time)
    }

    /// Full value `v(T, state)` at the start of the horizon.
    pub fn initial_value(&self, state: &MarketState) -> Result<f64> {
        let w = self.at(self.grid.n_t, state.lambda, state.q)?;
        let book = state.book_value();
        Ok(if self.params.alpha > 0.0 {
            (-self.params.alpha * book).exp() * w
        } else {
            book + w
        })
    }
}

/// Feedback policy: signal trades per sign and impulse trades, in lots.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub grid: Grid,
    pub params: MarketParams,
    /// `[z = -1, z = +1]` per node.
    pub gamma: Vec<[i16; 2]>,
    /// Zero where no impulse is taken.
    pub delta: Vec<i16>,
}

impl Policy {
    fn index(&self, k: usize, j: usize, i: usize) -> usize {
        k * self.grid.slice_len() + self.grid.node(j, i)
    }

    pub fn gamma_star(&self, k: usize, j: usize, i: usize, z: i8) -> f64 {
        let side = usize::from(z > 0);
        self.gamma[self.index(k, j, i)][side] as f64 * self.grid.dq
    }

    pub fn delta_star(&self, k: usize, j: usize, i: usize) -> Option<f64> {
        match self.delta[self.index(k, j, i)] {
            0 => None,
            n => Some(n as f64 * self.grid.dq),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SolveStats {
    /// Post-event liquidity clamped to the cap.
    pub clamped: usize,
    /// Optimal actions ending on the inventory boundary.
    pub saturated: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub surface: ValueSurface,
    pub policy: Policy,
    pub stats: SolveStats,
}

/// Cash amount that makes the trader without the signal indifferent to
/// having it, node by node.
pub fn certainty_equivalent(with: &ValueSurface, without: &ValueSurface) -> Result<Vec<f64>> {
    if with.grid != without.grid {
        return Err(ModelError::Mismatch("grids differ".into()));
    }
    let alpha = with.params.alpha;
    if alpha != without.params.alpha {
        return Err(ModelError::Mismatch("risk aversion differs".into()));
    }
    with.values
        .iter()
        .zip(&without.values)
        .map(|(&a, &b)| {
            if alpha == 0.0 {
                return Ok(a - b);
            }
            let ratio = a / b;
            if a == 0.0 || b == 0.0 || ratio.is_nan() || ratio <= 0.0 {
                return Err(ModelError::Undefined(format!("value ratio {a} / {b}")));
            }
            Ok(-ratio.ln() / alpha)
        })
        .collect()
}
