//! Brute-force dynamic programming on a coarse grid.
//!
//! Deliberately shares nothing with the marching solver beyond the model
//! primitives: values are linear between nodes, the path over one time step
//! is interpolated in travel time, the claim integral is a plain trapezoid
//! (or an atom sum) and the claim stream over the step is a one-panel
//! trapezoid.

use crate::error::{domain, Error, Result};
use crate::model::{Grid, ModelParams};
use crate::odeint::{GridKind, ValueGrid};

/// Stop when the sup-norm change of a sweep drops below this fraction of
/// the upper envelope at the top node.
pub const TOL_VI: f64 = 1e-10;

/// Grid for the oracle: `n` nodes on `[critical + dx, x_hi]`.
pub fn oracle_grid(params: &ModelParams, x_hi: f64, n: usize) -> Result<Grid> {
    let span = x_hi - params.critical_level();
    Grid::with_nodes(params, span / n as f64, x_hi, n)
}

/// `I(x_i) = base_i + coef_i V_i`, with `V` linear between nodes and from
/// zero at the critical level.
struct Claims {
    base: Vec<f64>,
    coef: Vec<f64>,
}

fn claim_split(params: &ModelParams, grid: &Grid, v: &[f64]) -> Claims {
    let n = grid.len();
    let c = grid.critical();
    let h = grid.step();
    let x0 = grid.x_lo();
    let lin = |y: f64| -> f64 {
        if y <= c {
            0.0
        } else if y < x0 {
            v[0] * (y - c) / (x0 - c)
        } else {
            let s = (y - x0) / h;
            let j = (s.floor() as usize).min(n - 2);
            let t = s - j as f64;
            v[j] * (1.0 - t) + v[j + 1] * t
        }
    };
    let eps = x0 - c;
    let mut base = vec![0.0; n];
    let mut coef = vec![0.0; n];
    if let Some(atoms) = params.claims.atoms() {
        for i in 0..n {
            let x = grid.x(i);
            for &(u, p) in &atoms {
                if i == 0 {
                    coef[0] += p * ((eps - u) / eps).max(0.0);
                } else if u <= h {
                    // lands on the cell just below node i
                    let t = u / h;
                    coef[i] += p * (1.0 - t);
                    base[i] += p * t * v[i - 1];
                } else {
                    base[i] += p * lin(x - u);
                }
            }
        }
    } else {
        let f = |u: f64| params.claims.density(u);
        coef[0] = 0.5 * eps * f(0.0);
        for i in 1..n {
            let x = grid.x(i);
            let mut s = 0.5 * (eps + h) * v[0] * f(x - x0);
            for j in 1..i {
                s += h * v[j] * f(x - grid.x(j));
            }
            base[i] = s;
            coef[i] = 0.5 * h * f(0.0);
        }
    }
    Claims { base, coef }
}

/// Discretised dynamic-programming principle iterated to a fixed point.
///
/// One sweep runs right to left taking the best of three options at each
/// node: continue for `dt` (the dependence of node `i` on itself is solved
/// exactly), hold the level by paying out the gain of the step, or pay a lump
/// down to the node below. A left-to-right pass then re-applies the lump
/// option with the fresh values. Starting from zero
/// the iterates increase monotonically.
pub fn value_iteration_oracle(params: &ModelParams, grid: &Grid, dt: f64, iters: usize) -> Result<ValueGrid> {
    value_iteration_traced(params, grid, dt, iters, |_, _| {})
}

/// As [`value_iteration_oracle`], calling `trace(sweep, values)` after
/// every sweep.
pub fn value_iteration_traced(
    params: &ModelParams,
    grid: &Grid,
    dt: f64,
    iters: usize,
    mut trace: impl FnMut(usize, &[f64]),
) -> Result<ValueGrid> {
    params.checked()?;
    let n = grid.len();
    let h = grid.step();
    let max_drift = params.drift_unchecked(grid.x_hi());
    if !(dt > 0.0 && dt <= h / max_drift * (1.0 + 1e-12)) {
        return Err(domain(format!(
            "value iteration needs 0 < dt <= dx / max drift = {}, got {dt}",
            h / max_drift
        )));
    }
    let k = params.lambda + params.delta;
    let a = (-k * dt).exp();
    let half = 0.5 * params.lambda * dt;
    let theta: Vec<f64> = (0..n - 1)
        .map(|i| dt / params.reach_time_unchecked(grid.x(i), grid.x(i + 1)))
        .collect();
    let top_shift = params.flow_unchecked(grid.x_hi(), dt) - grid.x_hi();
    let tol = TOL_VI * params.upper_envelope(grid.x_hi());

    let mut v = vec![0.0; n];
    let mut change = f64::INFINITY;
    for sweep in 0..iters {
        let cl = claim_split(params, grid, &v);
        let old = v.clone();

        // holding at x_i pays out whatever the path gains over the step
        let hold = |i: usize, gain: f64| {
            let num = a * gain + half * (cl.base[i] * (1.0 + a) + a * gain);
            let den = 1.0 - a - half * cl.coef[i] * (1.0 + a);
            num / den
        };
        v[n - 1] = hold(n - 1, top_shift).max(v[n - 2] + h);
        for i in (0..n - 1).rev() {
            let t = theta[i];
            let i_next = cl.base[i + 1] + cl.coef[i + 1] * v[i + 1];
            let keep = a * (1.0 - t);
            let num = a * t * v[i + 1] + half * (cl.base[i] * (1.0 + keep) + a * t * i_next);
            let den = 1.0 - keep - half * cl.coef[i] * (1.0 + keep);
            let lump = if i > 0 { v[i - 1] + h } else { 0.0 };
            v[i] = (num / den).max(hold(i, t * h)).max(lump);
        }
        for i in 1..n {
            v[i] = v[i].max(v[i - 1] + h);
        }

        change = v.iter().zip(&old).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        trace(sweep, &v);
        if !change.is_finite() {
            return Err(Error::NonConvergence { iters: sweep + 1, change });
        }
        if change < tol {
            return Ok(ValueGrid::new(grid.clone(), v, GridKind::ValueV, 0.0));
        }
    }
    Err(Error::NonConvergence { iters, change })
}
