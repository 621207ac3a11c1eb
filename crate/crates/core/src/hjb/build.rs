use super::operator::t_fixed_sup;
use super::residual::{default_tol_rel, node_operators, residual_from_operators, scale_of, ResidualReport};
use super::strategy::{classify_with, BandStrategy};
use crate::error::{Error, Result};
use crate::model::{Grid, ModelParams};
use crate::odeint::{equation_slope, patch_from, solve_homogeneous_capped, GridKind, ValueGrid};

/// Continuation starts tried per band before refinement.
const COARSE_CANDIDATES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    pub max_bands: usize,
    pub tol_region: f64,
    /// Relative HJB tolerance; `None` means `max(1e-4, 10 dx)`.
    pub tol_hjb: Option<f64>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            max_bands: 8,
            tol_region: 1e-3,
            tol_hjb: None,
        }
    }
}

/// Certified value function with its strategy and node-wise operators.
#[derive(Debug, Clone)]
pub struct Solution {
    pub value: ValueGrid,
    pub strategy: BandStrategy,
    pub report: ResidualReport,
    /// `L_V` per node
    pub generator: Vec<f64>,
    /// `G_V` per node
    pub g: Vec<f64>,
}

/// Default upper end when none is given: ten times the scale set by the
/// mean claim and the premium capitalised at the discount rate.
pub fn default_x_hi(params: &ModelParams) -> f64 {
    10.0 * (params.claims.mean() + params.p / params.delta)
}

fn linear_above(grid: &Grid, values: &mut Vec<f64>, from: usize) {
    let vb = values[from];
    let xb = grid.x(from);
    values.truncate(from + 1);
    values.extend((from + 1..grid.len()).map(|i| vb + (grid.x(i) - xb)));
}

/// Barrier candidate: `W / W'(b1)` below the minimiser `b1` of `W'`,
/// slope one above. Returns the node values and `b1`'s index.
pub fn barrier_candidate(params: &ModelParams, w: &ValueGrid) -> (Vec<f64>, usize) {
    barrier_within(params, w, w.len() - 1)
}

/// As [`barrier_candidate`] with `b1` searched on nodes `0..=last` only.
fn barrier_within(params: &ModelParams, w: &ValueGrid, last: usize) -> (Vec<f64>, usize) {
    let slope = equation_slope(params, w);
    let mut b = 0;
    for (i, &s) in slope.iter().enumerate().take(last + 1) {
        if s < slope[b] {
            b = i;
        }
    }
    let k = 1.0 / slope[b];
    let mut values: Vec<f64> = w.values.iter().map(|x| x * k).collect();
    linear_above(&w.grid, &mut values, b);
    (values, b)
}

/// Continue from node `c` with the patched equation until its slope first
/// drops to one; `None` when it never does.
fn continuation(params: &ModelParams, frozen: &ValueGrid, c: usize) -> Result<Option<(Vec<f64>, usize)>> {
    let grid = &frozen.grid;
    let k = params.lambda + params.delta;
    let mut hit = None;
    let (mut values, _) = patch_from(params, frozen, c, |i, w, integral| {
        let s = (k * w - params.lambda * integral) / params.drift_unchecked(grid.x(i));
        if s <= 1.0 {
            hit = Some(i);
            true
        } else {
            false
        }
    })?;
    Ok(hit.map(|b| {
        linear_above(grid, &mut values, b);
        (values, b)
    }))
}

/// Best continuation start in `(lo, hi]`, judged by the value at `x_hi`.
fn best_continuation(
    params: &ModelParams,
    frozen: &ValueGrid,
    lo: usize,
    hi: usize,
) -> Result<Option<(Vec<f64>, usize)>> {
    let m = hi - lo;
    let stride = m.div_ceil(COARSE_CANDIDATES).max(1);
    let mut best: Option<(f64, usize, Vec<f64>, usize)> = None;
    let consider = |c: usize, best: &mut Option<(f64, usize, Vec<f64>, usize)>| -> Result<()> {
        if let Some((vals, b)) = continuation(params, frozen, c)? {
            let top = *vals.last().unwrap();
            if best.as_ref().is_none_or(|(t, ..)| top > *t) {
                *best = Some((top, c, vals, b));
            }
        }
        Ok(())
    };
    let mut c = lo + stride;
    while c <= hi {
        consider(c, &mut best)?;
        c += stride;
    }
    if stride > 1 {
        if let Some((_, c0, ..)) = best {
            let from = c0.saturating_sub(stride - 1).max(lo + 1);
            let to = (c0 + stride - 1).min(hi);
            for c in from..=to {
                if c != c0 {
                    consider(c, &mut best)?;
                }
            }
        }
    }
    Ok(best.map(|(_, _, vals, b)| (vals, b)))
}

/// Assemble and certify the value function on a fixed grid.
///
/// Starts from the barrier candidate. While `G_V` of the slope-one
/// extension above the current top anchor rises above tolerance, a new
/// continuation band is inserted: every continuation start between the
/// anchor and the first offending node is tried with the patched equation,
/// stopping where its slope falls to one, and the start with the largest
/// value at `x_hi` is kept. The result is then certified.
pub fn build_value(params: &ModelParams, grid: &Grid, opts: &BuildOptions) -> Result<Solution> {
    params.checked()?;
    let gamma = params.boundary_exponent();
    // W outgrows the guard far above any barrier on long grids
    let (w, last) = solve_homogeneous_capped(params, grid)?;
    let (mut values, mut b) = barrier_within(params, &w, last);
    let tol_rel = opts.tol_hjb.unwrap_or_else(|| default_tol_rel(grid.step()));
    let mut bands = 1;

    loop {
        let v = ValueGrid::new(grid.clone(), values, GridKind::ValueV, gamma);
        let (l, g) = node_operators(params, &v);
        let tol = tol_rel * scale_of(&v);
        let reentry = (b + 1..grid.len()).find(|&i| g[i] >= tol);
        let Some(x2) = reentry else {
            return certify(params, v, l, g, tol_rel, opts);
        };
        if bands >= opts.max_bands {
            let report = residual_from_operators(params, &v, &l, Some(tol_rel));
            return Err(Error::MaxBandsExceeded {
                max_bands: opts.max_bands,
                report: Box::new(report),
            });
        }
        match best_continuation(params, &v, b, x2)? {
            Some((next, nb)) => {
                values = next;
                b = nb;
                bands += 1;
            }
            None => {
                let mut report = residual_from_operators(params, &v, &l, Some(tol_rel));
                report.warnings.push(format!("no continuation band above x = {}", grid.x(b)));
                return Err(Error::Certification {
                    reason: format!("G_V re-enters positive at x = {} and no band fits", grid.x(x2)),
                    report: Box::new(report),
                });
            }
        }
    }
}

fn certify(
    params: &ModelParams,
    v: ValueGrid,
    l: Vec<f64>,
    g: Vec<f64>,
    tol_rel: f64,
    opts: &BuildOptions,
) -> Result<Solution> {
    let mut report = residual_from_operators(params, &v, &l, Some(tol_rel));
    report.warnings.extend(params.validate().warnings);
    let strategy = classify_with(params, &v, &g, opts.tol_region)?;
    report.region_counts = strategy.region_counts();
    report.warnings.extend(strategy.violations.iter().cloned());
    report.warnings.extend(tail_warning(&v, &g));
    if strategy.is_well_formed() {
        report.t_fixed_sup = Some(t_fixed_sup(params, &v, &strategy)?);
    }
    if !report.passed() || !strategy.is_well_formed() {
        let reason = failure_reason(&report, &strategy);
        return Err(Error::Certification {
            reason,
            report: Box::new(report),
        });
    }
    Ok(Solution {
        value: v,
        strategy,
        report,
        generator: l,
        g,
    })
}

pub(crate) fn failure_reason(report: &ResidualReport, strategy: &BandStrategy) -> String {
    let mut why = Vec::new();
    if !strategy.is_well_formed() {
        why.push(format!("malformed strategy ({})", strategy.violations.join("; ")));
    }
    if report.hjb_sup > report.tol_hjb {
        why.push(format!("hjb_sup {:e} > {:e}", report.hjb_sup, report.tol_hjb));
    }
    if !report.super_ok {
        why.push("super-solution inequalities violated".into());
    }
    if !report.sub_ok {
        why.push("sub-solution inequality violated".into());
    }
    if !report.envelope_ok {
        why.push(format!("{} envelope violations", report.envelope_violations));
    }
    if !report.growth_ok {
        why.push(format!("{} increment violations", report.growth_violations));
    }
    if let Some(t) = report.t_fixed_sup {
        if t > report.tol_t {
            why.push(format!("T_fixed_sup {t:e} > {:e}", report.tol_t));
        }
    }
    why.join(", ")
}

/// `G_V` over the top tenth of the grid should be negative and decreasing.
fn tail_warning(v: &ValueGrid, g: &[f64]) -> Option<String> {
    let n = g.len();
    let from = n - (n / 10).max(2);
    let tail = &g[from..];
    let negative = tail.iter().all(|&x| x < 0.0);
    let decreasing = tail.windows(2).all(|w| w[1] <= w[0]);
    (!(negative && decreasing)).then(|| {
        format!(
            "G_V on the top tenth of the grid (x >= {}) is not negative and decreasing; x_hi may be too small",
            v.x(from)
        )
    })
}

/// [`build_value`] with the upper end chosen automatically: start from
/// [`default_x_hi`] and re-solve once on `2 b_top + default_x_hi` when the
/// top anchor lands in the upper tenth of the grid.
pub fn build_value_auto(params: &ModelParams, eps_c: f64, dx: f64, opts: &BuildOptions) -> Result<Solution> {
    params.checked()?;
    let base = default_x_hi(params);
    let grid = Grid::new(params, eps_c, dx, base)?;
    let sol = build_value(params, &grid, opts)?;
    let top = sol.strategy.top;
    let cut = grid.x_lo() + 0.9 * (grid.x_hi() - grid.x_lo());
    if top > cut {
        let grid = Grid::new(params, eps_c, dx, 2.0 * top + base)?;
        return build_value(params, &grid, opts);
    }
    Ok(sol)
}
