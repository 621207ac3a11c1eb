use super::ModelParams;
use crate::error::{domain, Result};

/// Uniform reserve grid starting just above the critical level.
///
/// Node spacing is adjusted so that `x = 0` is a node: the drift has a kink
/// there and no integration step may straddle it.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    critical: f64,
    step: f64,
    n: usize,
    zero: usize,
}

impl Grid {
    /// Grid from the critical offset `eps_c`, a target spacing and an upper
    /// end; the actual spacing is the largest value `<= dx` that puts 0 on a
    /// node, and `x_hi` is rounded up to the next node.
    pub fn new(params: &ModelParams, eps_c: f64, dx: f64, x_hi: f64) -> Result<Self> {
        let critical = params.critical_level();
        check_offsets(critical, eps_c, x_hi)?;
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(domain(format!("grid step must be positive, got {dx}")));
        }
        let span_neg = -(critical + eps_c);
        let zero = (span_neg / dx).ceil().max(1.0) as usize;
        let step = span_neg / zero as f64;
        let above = (x_hi / step).ceil().max(1.0) as usize;
        Ok(Self {
            critical,
            step,
            n: zero + above + 1,
            zero,
        })
    }

    /// Grid with (approximately) `n` nodes on `[critical + eps_c, x_hi]`.
    pub fn with_nodes(params: &ModelParams, eps_c: f64, x_hi: f64, n: usize) -> Result<Self> {
        let critical = params.critical_level();
        check_offsets(critical, eps_c, x_hi)?;
        if n < 3 {
            return Err(domain(format!("grid needs at least 3 nodes, got {n}")));
        }
        let span_neg = -(critical + eps_c);
        let dx = (x_hi + span_neg) / (n - 1) as f64;
        let zero = ((span_neg / dx).round() as usize).clamp(1, n - 2);
        let step = span_neg / zero as f64;
        Ok(Self {
            critical,
            step,
            n,
            zero,
        })
    }

    /// Rebuild a grid from its spacing, the index of `x = 0` and the node
    /// count, as reported by [`Grid::step`], [`Grid::zero_index`] and
    /// [`Grid::len`].
    pub fn from_layout(params: &ModelParams, step: f64, zero: usize, n: usize) -> Result<Self> {
        let critical = params.critical_level();
        if !(step > 0.0 && step.is_finite()) || zero == 0 || n < zero + 2 {
            return Err(domain(format!("bad grid layout: step {step}, zero index {zero}, {n} nodes")));
        }
        if -(zero as f64) * step <= critical {
            return Err(domain(format!("grid layout starts at or below the critical level {critical}")));
        }
        Ok(Self {
            critical,
            step,
            n,
            zero,
        })
    }

    pub fn critical(&self) -> f64 {
        self.critical
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Index of the node at `x = 0`.
    pub fn zero_index(&self) -> usize {
        self.zero
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - self.zero as f64) * self.step
    }

    pub fn x_lo(&self) -> f64 {
        self.x(0)
    }

    pub fn x_hi(&self) -> f64 {
        self.x(self.n - 1)
    }

    pub fn eps_c(&self) -> f64 {
        self.x_lo() - self.critical
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.x(i))
    }

    /// Index `j` of the cell `[x_j, x_{j+1}]` holding `x` (clamped to the grid).
    #[inline]
    pub fn cell(&self, x: f64) -> usize {
        let s = (x - self.x_lo()) / self.step;
        if s <= 0.0 {
            0
        } else {
            (s.floor() as usize).min(self.n - 2)
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let tol = 1e-12 * self.x_hi().abs().max(1.0);
        x >= self.x_lo() - tol && x <= self.x_hi() + tol
    }
}

fn check_offsets(critical: f64, eps_c: f64, x_hi: f64) -> Result<()> {
    if !(eps_c > 0.0 && eps_c < -critical) {
        return Err(domain(format!(
            "eps_c must lie in (0, {}), got {eps_c}",
            -critical
        )));
    }
    if !(x_hi > 0.0 && x_hi.is_finite()) {
        return Err(domain(format!("x_hi must be positive, got {x_hi}")));
    }
    Ok(())
}

/// Interpolation weights at `x`: returns `(j, wa, wb)` such that the value
/// is `wa * v[j] + wb * v[j + 1]` (`wb` is zero when only `v[j]` matters).
///
/// On cells below zero the values are treated as `z^gamma * g(x)` with
/// `z = x - critical` and `g` linear, which is exact for the pure power law
/// the solution follows at the critical level. Elsewhere the interpolant is
/// linear. Between the critical level and the first node the power law (or
/// a straight line to zero when `gamma == 0`) is used, and below the
/// critical level the value is zero (`wa = wb = 0`).
///
/// `last` is the highest usable node index; `x` beyond it is clamped.
#[inline]
pub(crate) fn interp_weights(grid: &Grid, gamma: f64, last: usize, x: f64) -> (usize, f64, f64) {
    let c = grid.critical;
    if x <= c {
        return (0, 0.0, 0.0);
    }
    let x0 = grid.x_lo();
    if x < x0 {
        let ratio = (x - c) / (x0 - c);
        return (0, if gamma > 0.0 { ratio.powf(gamma) } else { ratio }, 0.0);
    }
    if last == 0 {
        return (0, 1.0, 0.0);
    }
    let j = grid.cell(x).min(last - 1);
    let xa = grid.x(j);
    let xb = grid.x(j + 1);
    let t = ((x - xa) / (xb - xa)).clamp(0.0, 1.0);
    if gamma > 0.0 && j < grid.zero {
        let z = x - c;
        let wa = (z / (xa - c)).powf(gamma) * (1.0 - t);
        let wb = (z / (xb - c)).powf(gamma) * t;
        (j, wa, wb)
    } else {
        (j, 1.0 - t, t)
    }
}

/// Interpolate node values at `x`; see [`interp_weights`]. `values` may be a
/// prefix of the grid.
#[inline]
pub(crate) fn interpolate(grid: &Grid, gamma: f64, values: &[f64], x: f64) -> f64 {
    let (j, wa, wb) = interp_weights(grid, gamma, values.len() - 1, x);
    let mut v = wa * values[j];
    if wb != 0.0 {
        v += wb * values[j + 1];
    }
    v
}

/// One-sided forward derivative estimates, one per node.
///
/// Below zero the forward difference is taken on `g = V / z^gamma` and mapped
/// back, which keeps it accurate next to the singular critical level. The
/// last node repeats the estimate of the node before it.
pub(crate) fn forward_derivative(grid: &Grid, gamma: f64, values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let h = grid.step;
    let c = grid.critical;
    let mut d = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        d[i] = if gamma > 0.0 && i < grid.zero {
            let za = grid.x(i) - c;
            let zb = grid.x(i + 1) - c;
            let pa = za.powf(gamma);
            let ga = values[i] / pa;
            let gb = values[i + 1] / zb.powf(gamma);
            gamma * values[i] / za + pa * (gb - ga) / h
        } else {
            (values[i + 1] - values[i]) / h
        };
    }
    if n >= 2 {
        d[n - 1] = d[n - 2];
    }
    d
}
