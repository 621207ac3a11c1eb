//! The claim term `∫_0^{x + p/alpha} V(x - u) dF(u)`.
//!
//! Claims larger than `x + p/alpha` cause ruin and contribute nothing. Three
//! quadratures are provided: exact summation over atoms (with interpolation
//! of `V` between nodes), a composite trapezoid on the grid for continuous
//! laws, and for exponential claims an O(1)-per-node recursion that is exact
//! for piecewise-linear `V`.

use super::grid::{interp_weights, interpolate};
use super::{ClaimDistribution, Grid, ModelParams};
use crate::error::{domain, Result};
use crate::odeint::ValueGrid;

#[derive(Debug, Clone)]
enum Kernel {
    Atoms(Vec<(f64, f64)>),
    Exponential {
        rate: f64,
        decay: f64,
        w_lo: f64,
        w_hi: f64,
        w_first: f64,
    },
    Trapezoid {
        /// `density(k * step)`, `k = 0..n`
        f: Vec<f64>,
    },
}

/// Node-wise claim integrals for one grid, split as `base + coef * V_i` so a
/// march can evaluate the integral at a provisional value of the current node.
#[derive(Debug, Clone)]
pub struct ClaimKernel {
    kernel: Kernel,
    gamma: f64,
}

/// Weights of `V(x_i)` and `V(x_{i+1})` in `∫_0^h V(s) ν e^{-ν(h - s)} ds`
/// for `V` linear on the panel, returned as `(w_lo, w_hi)`.
pub(crate) fn exp_panel_weights(rate: f64, h: f64) -> (f64, f64) {
    let a = rate * h;
    let one_minus_e = -(-a).exp_m1();
    // 1 - e^{-a}(1 + a), by series when cancellation would bite
    let q = if a < 0.1 {
        let mut term = a * a / 2.0;
        let mut sum = 0.0f64;
        let mut k = 2.0;
        while term.abs() > 1e-18 * sum.abs().max(1e-300) {
            sum += term;
            // next term of sum_{k>=2} (-1)^k a^k (k-1)/k!
            let next = -term * a * k / ((k + 1.0) * (k - 1.0));
            term = next;
            k += 1.0;
            if k > 60.0 {
                break;
            }
        }
        sum
    } else {
        one_minus_e - a * (-a).exp()
    };
    let w_lo = q / a;
    (w_lo, one_minus_e - w_lo)
}

impl ClaimKernel {
    pub fn new(params: &ModelParams, grid: &Grid) -> Self {
        Self::build(params, grid, false, params.boundary_exponent())
    }

    /// Kernel whose atom lookups interpolate with the given boundary exponent.
    pub fn with_exponent(params: &ModelParams, grid: &Grid, gamma: f64) -> Self {
        Self::build(params, grid, false, gamma)
    }

    /// Force the generic trapezoid even for exponential claims.
    pub fn trapezoid(params: &ModelParams, grid: &Grid) -> Self {
        Self::build(params, grid, true, params.boundary_exponent())
    }

    fn build(params: &ModelParams, grid: &Grid, force_trapezoid: bool, gamma: f64) -> Self {
        let h = grid.step();
        let kernel = match (&params.claims, force_trapezoid) {
            (ClaimDistribution::Exponential { rate }, false) => {
                let (w_lo, w_hi) = exp_panel_weights(*rate, h);
                let (_, w_first) = exp_panel_weights(*rate, grid.eps_c());
                Kernel::Exponential {
                    rate: *rate,
                    decay: (-rate * h).exp(),
                    w_lo,
                    w_hi,
                    w_first,
                }
            }
            (claims, _) => match claims.atoms() {
                Some(atoms) => Kernel::Atoms(atoms),
                None => Kernel::Trapezoid {
                    f: (0..=grid.len()).map(|k| claims.density(k as f64 * h)).collect(),
                },
            },
        };
        Self { kernel, gamma }
    }

    pub fn uses_recursion(&self) -> bool {
        matches!(self.kernel, Kernel::Exponential { .. })
    }

    /// `(base, coef)` with `I(x_i) = base + coef * V(x_i)`, given the values
    /// strictly below node `i` and the integral at node `i - 1` (only read by
    /// the exponential recursion).
    pub fn split(&self, grid: &Grid, below: &[f64], i: usize, prev: f64) -> (f64, f64) {
        debug_assert!(below.len() >= i);
        match &self.kernel {
            Kernel::Exponential {
                decay,
                w_lo,
                w_hi,
                w_first,
                ..
            } => {
                if i == 0 {
                    (0.0, *w_first)
                } else {
                    (decay * prev + w_lo * below[i - 1], *w_hi)
                }
            }
            Kernel::Trapezoid { f } => {
                let h = grid.step();
                if i == 0 {
                    return (0.0, 0.5 * grid.eps_c() * f[0]);
                }
                let mut s = 0.0;
                for j in 1..i {
                    s += below[j] * f[i - j];
                }
                let base = h * s + (0.5 * h + 0.5 * grid.eps_c()) * below[0] * f[i];
                (base, 0.5 * h * f[0])
            }
            Kernel::Atoms(atoms) => {
                let x = grid.x(i);
                let mut base = 0.0;
                let mut coef = 0.0;
                for &(u, prob) in atoms {
                    if u == 0.0 {
                        coef += prob;
                        continue;
                    }
                    let (j, wa, wb) = interp_weights(grid, self.gamma, i, x - u);
                    if j == i {
                        coef += prob * wa;
                        continue;
                    }
                    base += prob * wa * below[j];
                    if wb != 0.0 {
                        if j + 1 == i {
                            coef += prob * wb;
                        } else {
                            base += prob * wb * below[j + 1];
                        }
                    }
                }
                (base, coef)
            }
        }
    }

    /// Claim integral at every node.
    pub fn sweep(&self, grid: &Grid, values: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(values.len());
        let mut prev = 0.0;
        for i in 0..values.len() {
            let (base, coef) = self.split(grid, values, i, prev);
            prev = base + coef * values[i];
            out.push(prev);
        }
        out
    }
}

/// Claim integral at an arbitrary `x` inside the grid, straight from the
/// quadrature definition: exact atom sums, otherwise composite trapezoid on
/// the nodes below `x` plus the partial panel ending at `x`.
pub fn claim_integral(params: &ModelParams, values: &ValueGrid, x: f64) -> Result<f64> {
    let grid = &values.grid;
    if !grid.contains(x) {
        return Err(domain(format!(
            "claim_integral: x = {x} outside grid [{}, {}]",
            grid.x_lo(),
            grid.x_hi()
        )));
    }
    let x = x.clamp(grid.x_lo(), grid.x_hi());
    let gamma = values.exponent;
    let v = &values.values;
    if let Some(atoms) = params.claims.atoms() {
        return Ok(atoms
            .iter()
            .map(|&(u, prob)| prob * interpolate(grid, gamma, v, x - u))
            .sum());
    }
    let f = |u: f64| params.claims.density(u);
    let c = grid.critical();
    let m = grid.cell(x) + usize::from(x >= grid.x(grid.cell(x) + 1));
    // nodes 0..=m lie at or below x
    let mut total = 0.0;
    let mut prev_s = c;
    let mut prev_val = 0.0;
    for j in 0..=m {
        let s = grid.x(j);
        let val = v[j] * f(x - s);
        total += 0.5 * (s - prev_s) * (prev_val + val);
        prev_s = s;
        prev_val = val;
    }
    if x > prev_s {
        let val = interpolate(grid, gamma, v, x) * f(0.0);
        total += 0.5 * (x - prev_s) * (prev_val + val);
    }
    Ok(total)
}

/// Repeated claim-integral queries against one fixed value grid.
#[derive(Debug, Clone)]
pub struct ClaimEvaluator<'a> {
    params: &'a ModelParams,
    values: &'a ValueGrid,
    kernel: ClaimKernel,
    nodes: Vec<f64>,
}

impl<'a> ClaimEvaluator<'a> {
    pub fn new(params: &'a ModelParams, values: &'a ValueGrid) -> Self {
        let kernel = ClaimKernel::with_exponent(params, &values.grid, values.exponent);
        let nodes = kernel.sweep(&values.grid, &values.values);
        Self {
            params,
            values,
            kernel,
            nodes,
        }
    }

    pub fn at_node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    pub fn node_integrals(&self) -> &[f64] {
        &self.nodes
    }

    /// Integral at an arbitrary `x` in `[x_lo, x_hi]`.
    pub fn at(&self, x: f64) -> f64 {
        let grid = &self.values.grid;
        let v = &self.values.values;
        let gamma = self.values.exponent;
        let x = x.clamp(grid.x_lo(), grid.x_hi());
        match &self.kernel.kernel {
            Kernel::Atoms(atoms) => atoms
                .iter()
                .map(|&(u, prob)| prob * interpolate(grid, gamma, v, x - u))
                .sum(),
            Kernel::Exponential { rate, .. } => {
                let j = grid.cell(x);
                let d = x - grid.x(j);
                if d <= 0.0 {
                    return self.nodes[j];
                }
                let vx = interpolate(grid, gamma, v, x);
                let (w_lo, w_hi) = exp_panel_weights(*rate, d);
                (-rate * d).exp() * self.nodes[j] + w_lo * v[j] + w_hi * vx
            }
            Kernel::Trapezoid { .. } => {
                let j = grid.cell(x);
                let t = ((x - grid.x(j)) / grid.step()).clamp(0.0, 1.0);
                self.nodes[j] + t * (self.nodes[j + 1] - self.nodes[j])
            }
        }
    }

    pub fn params(&self) -> &ModelParams {
        self.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::odeint::GridKind;

    fn params(claims: ClaimDistribution) -> ModelParams {
        ModelParams::new(1.0, 0.5, 0.05, 1.0, 0.1, claims)
    }

    fn vgrid(m: &ModelParams, dx: f64, x_hi: f64, f: impl Fn(f64) -> f64) -> ValueGrid {
        let g = Grid::new(m, 1e-6, dx, x_hi).unwrap();
        let v = g.nodes().map(f).collect();
        ValueGrid::new(g, v, GridKind::ValueV, 0.0)
    }

    #[test]
    fn zero_integrand() {
        let m = params(ClaimDistribution::Exponential { rate: 1.0 });
        let vg = vgrid(&m, 1e-2, 2.0, |_| 0.0);
        assert_eq!(claim_integral(&m, &vg, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn point_mass_at_zero_returns_value() {
        let m = params(ClaimDistribution::PointMassZero);
        let vg = vgrid(&m, 1e-2, 2.0, |x| 3.0 + x * x);
        for x in [-0.5, 0.0, 0.37, 1.5] {
            let got = claim_integral(&m, &vg, x).unwrap();
            let want = vg.interp(x);
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn exponential_constant_integrand() {
        // ∫_0^1 e^{-u} du = 1 - 1/e
        let m = params(ClaimDistribution::Exponential { rate: 1.0 });
        let vg = vgrid(&m, 1e-3, 1.0, |_| 1.0);
        let exact = 1.0 - (-1.0f64).exp();
        let got = claim_integral(&m, &vg, 0.0).unwrap();
        assert!((got - exact).abs() < 1e-6, "{got} vs {exact}");
        let ev = ClaimEvaluator::new(&m, &vg);
        let i0 = ev.at_node(vg.grid.zero_index());
        assert!((i0 - exact).abs() < 1e-6, "{i0}");
    }

    #[test]
    fn outside_grid_is_domain_error() {
        let m = params(ClaimDistribution::Exponential { rate: 1.0 });
        let vg = vgrid(&m, 1e-2, 1.0, |_| 1.0);
        assert!(claim_integral(&m, &vg, 5.0).is_err());
        assert!(claim_integral(&m, &vg, -1.0).is_err());
    }

    #[test]
    fn recursion_agrees_with_trapezoid() {
        let m = params(ClaimDistribution::Exponential { rate: 1.0 });
        let g = Grid::new(&m, 1e-6, 5e-5, 2.0).unwrap();
        let v: Vec<f64> = g.nodes().map(|x| 1.0 + x + 0.1 * (x + 1.0).powi(2)).collect();
        let fast = ClaimKernel::new(&m, &g).sweep(&g, &v);
        let trap = ClaimKernel::trapezoid(&m, &g).sweep(&g, &v);
        // trapezoid error grows like 1/z next to the critical level
        let mut worst = 0.0f64;
        for i in 2000..g.len() {
            worst = worst.max(((fast[i] - trap[i]) / trap[i]).abs());
        }
        assert!(worst < 1e-8, "relative gap {worst:e}");
    }

    #[test]
    fn node_split_matches_direct_quadrature() {
        for claims in [
            ClaimDistribution::Erlang { shape: 2, rate: 2.0 },
            ClaimDistribution::Uniform { lo: 0.2, hi: 0.9 },
            ClaimDistribution::DiscreteAtoms {
                atoms: vec![(0.0, 0.2), (0.25, 0.3), (1.3, 0.5)],
            },
        ] {
            let m = params(claims);
            let vg = vgrid(&m, 1e-2, 2.0, |x| (x + 1.0).sqrt() + x);
            let sweep = ClaimKernel::with_exponent(&m, &vg.grid, vg.exponent).sweep(&vg.grid, &vg.values);
            for i in [0, 5, 57, 150, vg.grid.len() - 1] {
                let direct = claim_integral(&m, &vg, vg.grid.x(i)).unwrap();
                assert!((sweep[i] - direct).abs() < 1e-12, "i={i}");
            }
        }
    }

    #[test]
    fn trapezoid_is_second_order() {
        let m = params(ClaimDistribution::Erlang { shape: 2, rate: 2.0 });
        let v = |x: f64| (1.0 + x).powf(1.5) + 0.3 * x;
        let at = |dx: f64| {
            let vg = vgrid(&m, dx, 1.0, v);
            claim_integral(&m, &vg, 0.5).unwrap()
        };
        let (a, b, c) = (at(4e-3), at(2e-3), at(1e-3));
        let ratio = (a - b) / (b - c);
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }
}
