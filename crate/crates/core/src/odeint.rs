//! Forward marching of the no-dividend equation
//! `drift(x) W'(x) = (lambda + delta) W(x) - lambda ∫ W(x - u) dF(u)`.
//!
//! The claim integral at `x` only reads values at or below `x`, so the
//! equation can be integrated left to right. The drift vanishes at the
//! critical level, where solutions behave like `z^gamma` with
//! `z = x + p/alpha`. Below zero the drift is `alpha z` and the march works
//! on `g = W / z^gamma`, which stays smooth down to the critical level.
//! Above zero the scheme is Heun's method applied to `W` directly. Both
//! evaluate the claim integral at the two stage points.

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::model::{forward_derivative, interpolate, ClaimEvaluator, ClaimKernel, Grid, ModelParams};

/// Values above `OVERFLOW_FACTOR * p / (delta - r)` abort the march.
pub const OVERFLOW_FACTOR: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GridKind {
    HomogeneousW,
    ValueV,
    PatchU,
}

/// Node values on a [`Grid`] plus one-sided derivative estimates.
///
/// `exponent` is the power-law exponent used for interpolation and
/// derivatives below zero (0 means plain linear).
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub deriv: Vec<f64>,
    pub kind: GridKind,
    pub exponent: f64,
}

impl ValueGrid {
    pub fn new(grid: Grid, values: Vec<f64>, kind: GridKind, exponent: f64) -> Self {
        assert_eq!(grid.len(), values.len(), "one value per node");
        let deriv = forward_derivative(&grid, exponent, &values);
        Self {
            grid,
            values,
            deriv,
            kind,
            exponent,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.grid.x(i)
    }

    /// Value at an arbitrary reserve level. Below the critical level this is
    /// zero; above `x_hi` a value function continues with slope one, other
    /// kinds are clamped.
    pub fn interp(&self, x: f64) -> f64 {
        let hi = self.grid.x_hi();
        if x > hi {
            let top = *self.values.last().unwrap();
            return match self.kind {
                GridKind::ValueV => top + (x - hi),
                _ => top,
            };
        }
        interpolate(&self.grid, self.exponent, &self.values, x)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(
            self.grid.clone(),
            self.values.iter().map(|v| v * factor).collect(),
            self.kind,
            self.exponent,
        )
    }

    /// Values finite, nonnegative, nondecreasing; for value functions the
    /// forward differences are at least `1 - tol_mono`.
    pub fn check_invariants(&self, tol_mono: f64) -> std::result::Result<(), String> {
        let h = self.grid.step();
        for (i, v) in self.values.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(format!("node {i}: value {v} not finite and nonnegative"));
            }
        }
        for i in 0..self.len() - 1 {
            let d = (self.values[i + 1] - self.values[i]) / h;
            if d < 0.0 {
                return Err(format!("node {i}: values decrease"));
            }
            if self.kind == GridKind::ValueV && d < 1.0 - tol_mono {
                return Err(format!("node {i}: forward difference {d} below 1"));
            }
        }
        Ok(())
    }
}

/// Leading-order behaviour of the homogeneous solution at
/// `critical + eps`, normalised to leading coefficient one.
pub fn seed_boundary(params: &ModelParams, eps: f64) -> Result<(f64, f64)> {
    let limit = 1e-3 * params.p / params.alpha;
    if !(eps > 0.0) || eps > limit * (1.0 + 1e-12) {
        return Err(domain(format!("seed offset must lie in (0, {limit}], got {eps}")));
    }
    let gamma = params.boundary_exponent();
    let w = eps.powf(gamma);
    Ok((w, gamma * w / eps))
}

/// Shared left-to-right Heun march.
struct Marcher<'a> {
    params: &'a ModelParams,
    grid: &'a Grid,
    kernel: ClaimKernel,
    gamma: f64,
    guard: f64,
    m0: f64,
}

impl<'a> Marcher<'a> {
    fn new(params: &'a ModelParams, grid: &'a Grid) -> Self {
        Self {
            params,
            grid,
            kernel: ClaimKernel::new(params, grid),
            gamma: params.boundary_exponent(),
            guard: OVERFLOW_FACTOR * params.p / (params.delta - params.r),
            m0: params.claims.mass_at_zero(),
        }
    }

    #[inline]
    fn rhs_w(&self, x: f64, w: f64, integral: f64) -> f64 {
        let m = self.params;
        ((m.lambda + m.delta) * w - m.lambda * integral) / m.drift_unchecked(x)
    }

    /// `g' = lambda (m0 W - I) / (alpha z^{gamma+1})`, valid below zero.
    #[inline]
    fn rhs_g(&self, z: f64, w: f64, integral: f64) -> f64 {
        let m = self.params;
        m.lambda * (self.m0 * w - integral) / (m.alpha * z.powf(self.gamma + 1.0))
    }

    /// Extend `values`/`integrals` (which hold nodes `0..=start`) up to node
    /// `end`. `stop` sees each new node and may end the march early; the
    /// index of the last node written is returned.
    fn run(
        &self,
        values: &mut Vec<f64>,
        integrals: &mut Vec<f64>,
        end: usize,
        mut stop: impl FnMut(usize, f64, f64) -> bool,
    ) -> Result<usize> {
        let g = self.grid;
        let h = g.step();
        let c = g.critical();
        let mut i = values.len() - 1;
        while i < end {
            let (xa, xb) = (g.x(i), g.x(i + 1));
            let (wa, ia) = (values[i], integrals[i]);
            let (base, coef) = self.kernel.split(g, values, i + 1, ia);
            let wb = if xb <= 0.0 {
                let (za, zb) = (xa - c, xb - c);
                let (pa, pb) = (za.powf(self.gamma), zb.powf(self.gamma));
                let ga = wa / pa;
                let k1 = self.rhs_g(za, wa, ia);
                let g_star = ga + h * k1;
                let w_star = pb * g_star;
                let k2 = self.rhs_g(zb, w_star, base + coef * w_star);
                pb * (ga + 0.5 * h * (k1 + k2))
            } else {
                let k1 = self.rhs_w(xa, wa, ia);
                let w_star = wa + h * k1;
                let k2 = self.rhs_w(xb, w_star, base + coef * w_star);
                wa + 0.5 * h * (k1 + k2)
            };
            if !wb.is_finite() || wb.abs() > self.guard {
                return Err(Error::BlowUp {
                    node: i + 1,
                    x: xb,
                    value: wb,
                });
            }
            let ib = base + coef * wb;
            values.push(wb);
            integrals.push(ib);
            i += 1;
            if stop(i, wb, ib) {
                break;
            }
        }
        Ok(i)
    }
}

/// Homogeneous solution `W` on the whole grid, seeded at the first node.
pub fn solve_homogeneous(params: &ModelParams, grid: &Grid) -> Result<ValueGrid> {
    solve_homogeneous_scaled(params, grid, 1.0)
}

/// As [`solve_homogeneous`] with the seed multiplied by `scale`.
pub fn solve_homogeneous_scaled(params: &ModelParams, grid: &Grid, scale: f64) -> Result<ValueGrid> {
    params.checked()?;
    let (w0, _) = seed_boundary(params, grid.eps_c())?;
    let marcher = Marcher::new(params, grid);
    let mut values = Vec::with_capacity(grid.len());
    let mut integrals = Vec::with_capacity(grid.len());
    let w0 = scale * w0;
    let (_, coef) = marcher.kernel.split(grid, &values, 0, 0.0);
    values.push(w0);
    integrals.push(coef * w0);
    marcher.run(&mut values, &mut integrals, grid.len() - 1, |_, _, _| false)?;
    Ok(ValueGrid::new(
        grid.clone(),
        values,
        GridKind::HomogeneousW,
        params.boundary_exponent(),
    ))
}

/// Homogeneous solution marched only while it stays below a thousandth of
/// the overflow guard. Nodes past the last marched one repeat its value.
/// Returns the grid and the index of the last marched node.
pub(crate) fn solve_homogeneous_capped(params: &ModelParams, grid: &Grid) -> Result<(ValueGrid, usize)> {
    params.checked()?;
    let (w0, _) = seed_boundary(params, grid.eps_c())?;
    let marcher = Marcher::new(params, grid);
    let cap = 1e-3 * marcher.guard;
    let mut values = Vec::with_capacity(grid.len());
    let mut integrals = Vec::with_capacity(grid.len());
    let (_, coef) = marcher.kernel.split(grid, &values, 0, 0.0);
    values.push(w0);
    integrals.push(coef * w0);
    let last = marcher.run(&mut values, &mut integrals, grid.len() - 1, |_, w, _| w > cap)?;
    let top = values[last];
    values.resize(grid.len(), top);
    let w = ValueGrid::new(grid.clone(), values, GridKind::HomogeneousW, params.boundary_exponent());
    Ok((w, last))
}

/// Node index of a reserve level that must sit strictly inside the grid;
/// levels between nodes snap to the nearest node.
fn inner_node(grid: &Grid, x0: f64) -> Result<usize> {
    if !(x0 >= grid.x_lo() && x0 < grid.x_hi()) {
        return Err(domain(format!(
            "x0 = {x0} not inside grid [{}, {})",
            grid.x_lo(),
            grid.x_hi()
        )));
    }
    let k = ((x0 - grid.x_lo()) / grid.step()).round() as usize;
    Ok(k.min(grid.len() - 2))
}

/// Continuation from node `start`: the nodes up to `start` keep the frozen
/// values, the march runs until `stop` fires or the grid ends.
pub(crate) fn patch_from(
    params: &ModelParams,
    frozen: &ValueGrid,
    start: usize,
    stop: impl FnMut(usize, f64, f64) -> bool,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let grid = &frozen.grid;
    let marcher = Marcher::new(params, grid);
    let mut values: Vec<f64> = frozen.values[..=start].to_vec();
    let mut integrals = marcher.kernel.sweep(grid, &values);
    marcher.run(&mut values, &mut integrals, grid.len() - 1, stop)?;
    Ok((values, integrals))
}

/// Solution `u` of the patched equation on `[x0, x_hi]` with `u(x0) = V(x0)`:
/// claims landing below `x0` read the frozen `V`, claims landing above read
/// `u`. Nodes below `x0` in the returned grid carry the frozen values.
pub fn solve_patched(params: &ModelParams, x0: f64, v_below: &ValueGrid) -> Result<ValueGrid> {
    params.checked()?;
    let start = inner_node(&v_below.grid, x0)?;
    let (values, _) = patch_from(params, v_below, start, |_, _, _| false)?;
    Ok(ValueGrid::new(
        v_below.grid.clone(),
        values,
        GridKind::PatchU,
        v_below.exponent,
    ))
}

/// Derivative implied by the no-dividend equation at every node,
/// `((lambda + delta) W - lambda I) / drift`.
pub fn equation_slope(params: &ModelParams, w: &ValueGrid) -> Vec<f64> {
    let ev = ClaimEvaluator::new(params, w);
    (0..w.len())
        .map(|i| {
            let x = w.x(i);
            ((params.lambda + params.delta) * w.values[i] - params.lambda * ev.at_node(i))
                / params.drift_unchecked(x)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ClaimDistribution;

    fn degenerate() -> ModelParams {
        ModelParams::new(1.0, 0.5, 0.05, 1.0, 0.1, ClaimDistribution::PointMassZero)
    }

    fn cfg1() -> ModelParams {
        ModelParams::new(1.0, 0.5, 0.05, 1.0, 0.1, ClaimDistribution::Exponential { rate: 1.0 })
    }

    fn closed_form_w(x: f64) -> f64 {
        if x <= 0.0 {
            (1.0 + x).powf(0.1)
        } else {
            (1.0 + 0.05 * x).powi(2)
        }
    }

    fn normalised_error(dx: f64) -> f64 {
        let m = degenerate();
        let g = Grid::new(&m, 1e-6, dx, 3.0).unwrap();
        let w = solve_homogeneous(&m, &g).unwrap();
        let w0 = w.values[g.zero_index()];
        (0..g.len())
            .map(|i| (w.values[i] / w0 - closed_form_w(g.x(i))).abs() / closed_form_w(g.x(i)))
            .fold(0.0, f64::max)
    }

    #[test]
    fn seed_examples() {
        let (w, d) = seed_boundary(&cfg1(), 1e-4).unwrap();
        assert!((w - 10f64.powf(-2.4)).abs() < 1e-12);
        assert!((w - 3.98107e-3).abs() < 1e-8);
        assert!((d - 0.6 * 10f64.powf(1.6)).abs() < 1e-9);
        assert!((d - 23.8864).abs() < 1e-3);

        let mut m = cfg1();
        m.lambda = 0.9; // lambda + delta = alpha
        let (w, d) = seed_boundary(&m, 1e-4).unwrap();
        assert!((w - 1e-4).abs() < 1e-16 && (d - 1.0).abs() < 1e-12);

        let (w1, _) = seed_boundary(&cfg1(), 2e-4).unwrap();
        let (w2, _) = seed_boundary(&cfg1(), 1e-4).unwrap();
        assert!((w2 / w1 - 2f64.powf(-0.6)).abs() < 1e-12);

        assert!(seed_boundary(&cfg1(), 0.0).is_err());
        assert!(seed_boundary(&cfg1(), 0.1).is_err());
    }

    #[test]
    fn homogeneous_degenerate_closed_form() {
        let m = degenerate();
        let g = Grid::new(&m, 1e-6, 1e-4, 3.0).unwrap();
        let w = solve_homogeneous(&m, &g).unwrap();
        let w0 = w.values[g.zero_index()];
        for i in (0..g.len()).step_by(97) {
            let x = g.x(i);
            let rel = (w.values[i] / w0 - closed_form_w(x)).abs() / closed_form_w(x);
            assert!(rel < 1e-6, "x={x} rel={rel:e}");
        }
        // minimum slope sits at zero and equals 0.1 after normalisation
        let slope = equation_slope(&m, &w);
        let (imin, smin) = slope
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bs), (i, &s)| if s < bs { (i, s) } else { (bi, bs) });
        assert_eq!(imin, g.zero_index());
        assert!((smin / w0 - 0.1).abs() < 1e-9);
    }

    #[test]
    fn homogeneous_is_linear_in_seed() {
        let m = cfg1();
        let g = Grid::new(&m, 1e-6, 1e-2, 5.0).unwrap();
        let a = solve_homogeneous(&m, &g).unwrap();
        let b = solve_homogeneous_scaled(&m, &g, 2.0).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((2.0 * x - y).abs() <= 1e-12 * y.abs());
        }
        let c = solve_homogeneous_scaled(&m, &g, 0.37).unwrap();
        for (x, y) in a.values.iter().zip(&c.values) {
            assert!((0.37 * x - y).abs() <= 1e-12 * y.abs());
        }
    }

    #[test]
    fn homogeneous_is_second_order() {
        let e1 = normalised_error(4e-3);
        let e2 = normalised_error(2e-3);
        let e3 = normalised_error(1e-3);
        assert!(e1 / e2 >= 3.5 && e2 / e3 >= 3.5, "{e1:e} {e2:e} {e3:e}");
    }

    #[test]
    fn homogeneous_positive_increasing() {
        for claims in [
            ClaimDistribution::Exponential { rate: 1.0 },
            ClaimDistribution::Erlang { shape: 2, rate: 2.0 },
            ClaimDistribution::Uniform { lo: 0.0, hi: 2.0 },
            ClaimDistribution::DiscreteAtoms {
                atoms: vec![(0.5, 0.5), (1.5, 0.5)],
            },
        ] {
            let m = ModelParams::new(1.0, 0.5, 0.05, 1.0, 0.1, claims);
            let g = Grid::new(&m, 1e-6, 1e-2, 10.0).unwrap();
            let w = solve_homogeneous(&m, &g).unwrap();
            assert!(w.values[0] > 0.0);
            for i in 1..w.len() {
                assert!(w.values[i] > w.values[i - 1], "{:?} node {i}", m.claims);
            }
        }
    }

    #[test]
    fn patched_degenerate_closed_form() {
        let m = degenerate();
        let g = Grid::new(&m, 1e-6, 1e-4, 2.0).unwrap();
        let v = ValueGrid::new(
            g.clone(),
            g.nodes().map(|x| 10.0 * (1.0 + x.min(0.0)).powf(0.1)).collect(),
            GridKind::ValueV,
            m.boundary_exponent(),
        );
        let u = solve_patched(&m, 0.0, &v).unwrap();
        assert_eq!(u.values[g.zero_index()], v.values[g.zero_index()]);
        for i in (g.zero_index()..g.len()).step_by(101) {
            let exact = 10.0 * (1.0 + 0.05 * g.x(i)).powi(2);
            assert!((u.values[i] - exact).abs() < 1e-8 * exact, "x={}", g.x(i));
        }
    }

    #[test]
    fn patched_at_left_end_reproduces_homogeneous() {
        let m = cfg1();
        let g = Grid::new(&m, 1e-6, 1e-2, 5.0).unwrap();
        let w = solve_homogeneous(&m, &g).unwrap();
        let u = solve_patched(&m, g.x_lo(), &w).unwrap();
        for (a, b) in w.values.iter().zip(&u.values) {
            assert!((a - b).abs() <= 1e-13 * a.abs());
        }
    }

    #[test]
    fn patched_boundary_value_is_exact() {
        let m = cfg1();
        let g = Grid::new(&m, 1e-6, 1e-2, 5.0).unwrap();
        let w = solve_homogeneous(&m, &g).unwrap();
        let k = g.zero_index() + 37;
        let u = solve_patched(&m, g.x(k), &w).unwrap();
        assert_eq!(u.values[k], w.values[k]);
        assert!(solve_patched(&m, 50.0, &w).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        // rare huge claims: W grows like e^{(lambda + delta) x / p}
        let m = ModelParams::new(1.0, 5.0, 1e-3, 100.0, 0.01, ClaimDistribution::Exponential { rate: 0.01 });
        let g = Grid::new(&m, 1e-6, 1e-2, 50.0).unwrap();
        let err = solve_homogeneous(&m, &g).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }), "{err}");
    }
}
