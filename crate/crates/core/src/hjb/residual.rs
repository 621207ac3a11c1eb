use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{domain, Result};
use crate::model::{claim_integral, ClaimEvaluator, ModelParams};
use crate::odeint::ValueGrid;

/// Random grid pairs drawn for the increment bounds.
pub const INCREMENT_PAIRS: usize = 1000;
const PAIR_SEED: u64 = 0x005e_ed0f_9a1c;

/// Slack on the unit lower slope bound between grid nodes.
pub const TOL_MONO: f64 = 1e-6;

/// Node counts per region label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RegionCounts {
    pub a: usize,
    pub b: usize,
    pub c: usize,
}

/// Certification report for a candidate value function.
///
/// Residuals are in money units. The slope condition `1 - V'` is
/// dimensionless, so it enters the complementarity residual multiplied by
/// `scale = V(x_hi)`; every tolerance is `tol_rel * scale`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub scale: f64,
    pub tol_hjb: f64,
    pub hjb_sup: f64,
    /// x where `hjb_sup` is attained
    pub hjb_argmax: f64,
    /// `max (1 - V')` over the grid, dimensionless
    pub slope_excess: f64,
    /// `max L_V` over the grid
    pub generator_max: f64,
    pub super_ok: bool,
    pub sub_ok: bool,
    pub envelope_ok: bool,
    pub envelope_violations: usize,
    pub growth_ok: bool,
    pub growth_violations: usize,
    #[serde(rename = "T_fixed_sup")]
    pub t_fixed_sup: Option<f64>,
    pub tol_t: f64,
    pub region_counts: RegionCounts,
    pub warnings: Vec<String>,
}

impl ResidualReport {
    pub fn hjb_ok(&self) -> bool {
        self.hjb_sup <= self.tol_hjb && self.super_ok && self.sub_ok
    }

    pub fn t_ok(&self) -> bool {
        matches!(self.t_fixed_sup, Some(t) if t <= self.tol_t)
    }

    /// Everything that makes the candidate acceptable.
    pub fn passed(&self) -> bool {
        self.hjb_ok() && self.envelope_ok && self.growth_ok && self.t_ok()
    }
}

/// Default relative tolerance `max(1e-4, 10 dx)`.
pub fn default_tol_rel(step: f64) -> f64 {
    (10.0 * step).max(1e-4)
}

/// `V(x_hi)`, or 1 when that is not positive.
pub(crate) fn scale_of(v: &ValueGrid) -> f64 {
    match v.values.last() {
        Some(&s) if s > 0.0 && s.is_finite() => s,
        _ => 1.0,
    }
}

pub(crate) fn node_of(v: &ValueGrid, x: f64) -> Result<usize> {
    let g = &v.grid;
    let s = (x - g.x_lo()) / g.step();
    let i = s.round();
    if i < 0.0 || i as usize >= g.len() || (s - i).abs() > 1e-6 {
        return Err(domain(format!("x = {x} is not a grid node")));
    }
    Ok(i as usize)
}

/// `L_V(x) = drift(x) V'(x) - (lambda + delta) V(x) + lambda I(x)` at a grid
/// node, with the stored forward difference as `V'`.
pub fn generator_value(params: &ModelParams, v: &ValueGrid, x: f64) -> Result<f64> {
    let i = node_of(v, x)?;
    let xi = v.x(i);
    let integral = claim_integral(params, v, xi)?;
    Ok(params.drift(xi)? * v.deriv[i] - (params.lambda + params.delta) * v.values[i] + params.lambda * integral)
}

/// `G_V(x)`: the generator with `V'` replaced by one.
pub fn g_value(params: &ModelParams, v: &ValueGrid, x: f64) -> Result<f64> {
    let c = params.critical_level();
    if x <= c {
        if x < c {
            return Err(domain(format!("x = {x} below critical level {c}")));
        }
        return Ok(0.0);
    }
    let i = node_of(v, x)?;
    let xi = v.x(i);
    let integral = claim_integral(params, v, xi)?;
    Ok(params.drift(xi)? - (params.lambda + params.delta) * v.values[i] + params.lambda * integral)
}

/// `(L_V, G_V)` at every node, sharing one claim-integral sweep.
pub fn node_operators(params: &ModelParams, v: &ValueGrid) -> (Vec<f64>, Vec<f64>) {
    let ev = ClaimEvaluator::new(params, v);
    let k = params.lambda + params.delta;
    let mut l = Vec::with_capacity(v.len());
    let mut g = Vec::with_capacity(v.len());
    for i in 0..v.len() {
        let d = params.drift_unchecked(v.x(i));
        let base = -k * v.values[i] + params.lambda * ev.at_node(i);
        l.push(d * v.deriv[i] + base);
        g.push(d + base);
    }
    (l, g)
}

/// HJB complementarity, envelope and increment checks. `tol_rel` defaults
/// to [`default_tol_rel`].
pub fn hjb_residual(params: &ModelParams, v: &ValueGrid) -> ResidualReport {
    hjb_residual_with(params, v, None)
}

pub fn hjb_residual_with(params: &ModelParams, v: &ValueGrid, tol_rel: Option<f64>) -> ResidualReport {
    let (l, _) = node_operators(params, v);
    residual_from_operators(params, v, &l, tol_rel)
}

pub(crate) fn residual_from_operators(
    params: &ModelParams,
    v: &ValueGrid,
    l: &[f64],
    tol_rel: Option<f64>,
) -> ResidualReport {
    let scale = scale_of(v);
    let tol_rel = tol_rel.unwrap_or_else(|| default_tol_rel(v.grid.step()));
    let tol = tol_rel * scale;

    let mut hjb_sup = 0.0f64;
    let mut hjb_argmax = v.x(0);
    let mut slope_excess = f64::NEG_INFINITY;
    let mut generator_max = f64::NEG_INFINITY;
    let mut sub_ok = true;
    let mut bad_value = false;
    for i in 0..v.len() {
        let s = 1.0 - v.deriv[i];
        let r = (scale * s).max(l[i]);
        if !r.is_finite() {
            bad_value = true;
            continue;
        }
        if r.abs() > hjb_sup {
            hjb_sup = r.abs();
            hjb_argmax = v.x(i);
        }
        slope_excess = slope_excess.max(s);
        generator_max = generator_max.max(l[i]);
        if r < -tol {
            sub_ok = false;
        }
    }
    if bad_value {
        hjb_sup = f64::INFINITY;
    }
    let super_ok = !bad_value && slope_excess * scale <= tol && generator_max <= tol;

    let envelope_violations = envelope_violations(params, v, scale);
    let growth_violations = growth_violations(params, v, scale);
    ResidualReport {
        scale,
        tol_hjb: tol,
        hjb_sup,
        hjb_argmax,
        slope_excess,
        generator_max,
        super_ok,
        sub_ok: sub_ok && !bad_value,
        envelope_ok: envelope_violations == 0,
        envelope_violations,
        growth_ok: growth_violations == 0,
        growth_violations,
        t_fixed_sup: None,
        tol_t: tol,
        region_counts: RegionCounts::default(),
        warnings: Vec::new(),
    }
}

fn envelope_violations(params: &ModelParams, v: &ValueGrid, scale: f64) -> usize {
    let slack = 1e-12 * scale;
    (0..v.len())
        .filter(|&i| {
            let x = v.x(i);
            let val = v.values[i];
            let low = x + params.p / params.alpha;
            let below = val < low - slack;
            let above = x >= 0.0 && val > params.upper_envelope(x) + slack;
            below || above
        })
        .count()
}

fn increment_ok(params: &ModelParams, v: &ValueGrid, i: usize, j: usize, scale: f64) -> bool {
    let (x, y) = (v.x(i), v.x(j));
    let inc = v.values[j] - v.values[i];
    let slack = 1e-12 * scale;
    let lower = (y - x) * (1.0 - TOL_MONO) - slack;
    let upper = v.values[i] * params.increment_factor(x, y) * (1.0 + 1e-9) + slack;
    inc >= lower && inc <= upper
}

/// Adjacent nodes plus [`INCREMENT_PAIRS`] random pairs.
fn growth_violations(params: &ModelParams, v: &ValueGrid, scale: f64) -> usize {
    let n = v.len();
    let mut bad = (0..n - 1)
        .filter(|&i| !increment_ok(params, v, i, i + 1, scale))
        .count();
    let mut rng = ChaCha8Rng::seed_from_u64(PAIR_SEED);
    for _ in 0..INCREMENT_PAIRS {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a == b {
            continue;
        }
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        if !increment_ok(params, v, i, j, scale) {
            bad += 1;
        }
    }
    bad
}
