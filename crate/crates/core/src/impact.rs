//! Price impact and impact cost for arbitrary impact densities.
//!
//! [`crate::MarketParams`] evaluates both quantities in closed form for the
//! affine density it carries. Anything else goes through the composite
//! Gauss-Legendre rule here.

/// Impact density `iota(lambda)`: price move per unit volume at liquidity
/// `lambda`. Must be nonnegative and non-increasing on the traded range.
pub trait ImpactCurve {
    fn density(&self, lambda: f64) -> f64;

    /// Signed price change caused by a market order of size `delta`.
    fn impact(&self, delta: f64, lambda: f64) -> f64 {
        if delta == 0.0 {
            return 0.0;
        }
        delta.signum() * integrate(|z| self.density(lambda - z), 0.0, delta.abs())
    }

    /// Cash slippage of executing `delta` at liquidity `lambda`.
    fn cost(&self, delta: f64, lambda: f64) -> f64 {
        if delta == 0.0 {
            return 0.0;
        }
        integrate(|z| self.impact(z, lambda), 0.0, delta.abs())
    }
}

/// Wraps a closure as an [`ImpactCurve`].
pub struct DensityFn<F>(pub F);

impl<F: Fn(f64) -> f64> ImpactCurve for DensityFn<F> {
    fn density(&self, lambda: f64) -> f64 {
        (self.0)(lambda)
    }
}

const GL_NODES: usize = 12;
const PANELS: usize = 4;

/// Composite Gauss-Legendre on `[a, b]`.
fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (nodes, weights) = legendre_rule(GL_NODES);
    let h = (b - a) / PANELS as f64;
    let mut total = 0.0;
    for k in 0..PANELS {
        let lo = a + k as f64 * h;
        let mid = lo + 0.5 * h;
        let half = 0.5 * h;
        let panel: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum();
        total += half * panel;
    }
    total
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub(crate) fn legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials_exactly() {
        let (x, w) = legendre_rule(GL_NODES);
        let sum_w: f64 = w.iter().sum();
        assert!((sum_w - 2.0).abs() < 1e-13);
        // int_{-1}^{1} x^10 = 2/11
        let m: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((m - 2.0 / 11.0).abs() < 1e-13);
    }

    #[test]
    fn nonlinear_density_matches_closed_form() {
        // iota(l) = exp(-l): I(d, l) = e^{-l} (e^{d} - 1)
        let curve = DensityFn(|l: f64| (-l).exp());
        let (d, l) = (1.5f64, 0.3f64);
        let exact = (-l).exp() * (d.exp() - 1.0);
        assert!((curve.impact(d, l) - exact).abs() < 1e-12);
        assert!((curve.impact(-d, l) + exact).abs() < 1e-12);
        let exact_cost = (-l).exp() * (d.exp() - 1.0 - d);
        assert!((curve.cost(d, l) - exact_cost).abs() < 1e-12);
    }
}
