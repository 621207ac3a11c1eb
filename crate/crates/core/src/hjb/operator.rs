use rayon::prelude::*;

use super::strategy::{BandStrategy, Label};
use crate::error::{domain, Error, Result};
use crate::model::{ClaimEvaluator, ModelParams};
use crate::odeint::ValueGrid;

/// Minimum Simpson panels along the claim-free path.
pub const MIN_PANELS: usize = 64;

/// The one-claim-step operator `T` for a fixed value grid and strategy.
pub struct TOperator<'a> {
    params: &'a ModelParams,
    v: &'a ValueGrid,
    strategy: &'a BandStrategy,
    ev: ClaimEvaluator<'a>,
}

impl<'a> TOperator<'a> {
    pub fn new(params: &'a ModelParams, v: &'a ValueGrid, strategy: &'a BandStrategy) -> Self {
        Self {
            params,
            v,
            strategy,
            ev: ClaimEvaluator::new(params, v),
        }
    }

    fn on_anchor(&self, x: f64) -> f64 {
        let m = self.params;
        (m.drift_unchecked(x) + m.lambda * self.ev.at(x)) / (m.lambda + m.delta)
    }

    /// `∫_t1^t2 lambda e^{-(lambda+delta) t} I(flow(x, t)) dt` by composite Simpson.
    fn claim_stream(&self, x: f64, t1: f64, t2: f64) -> f64 {
        if t2 <= t1 {
            return 0.0;
        }
        let m = self.params;
        let k = m.lambda + m.delta;
        let rate = k + m.alpha.max(m.r);
        let mut panels = MIN_PANELS.max((40.0 * rate * (t2 - t1)).ceil() as usize);
        panels += panels % 2;
        let h = (t2 - t1) / panels as f64;
        let f = |t: f64| (-k * t).exp() * self.ev.at(m.flow_unchecked(x, t));
        let mut s = f(t1) + f(t2);
        for j in 1..panels {
            let w = if j % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(t1 + j as f64 * h);
        }
        m.lambda * s * h / 3.0
    }

    pub fn at(&self, x: f64) -> Result<f64> {
        let m = self.params;
        let g = &self.v.grid;
        if !(x > m.critical_level()) || !g.contains(x) {
            return Err(domain(format!("apply_t: x = {x} outside grid")));
        }
        match self.strategy.label_at(x) {
            Label::A => Ok(self.on_anchor(x)),
            Label::B => {
                let x0 = self.strategy.anchor_below(x).ok_or(Error::NoAnchorAbove(x))?;
                Ok(x - x0 + self.on_anchor(x0))
            }
            Label::C => {
                let x1 = self.strategy.anchor_above(x).ok_or(Error::NoAnchorAbove(x))?;
                let t0 = m.reach_time_unchecked(x, x1);
                let k = m.lambda + m.delta;
                // the path's curvature jumps where it crosses zero
                let mut total = if x < 0.0 && x1 > 0.0 {
                    let tz = m.reach_time_unchecked(x, 0.0);
                    self.claim_stream(x, 0.0, tz) + self.claim_stream(x, tz, t0)
                } else {
                    self.claim_stream(x, 0.0, t0)
                };
                total += (-k * t0).exp() * self.v.interp(x1);
                Ok(total)
            }
        }
    }

    /// `sup_i |T V(x_i) - V(x_i)|` over all nodes.
    pub fn fixed_point_sup(&self) -> Result<f64> {
        let n = self.v.len();
        let diffs: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| self.at(self.v.x(i)).map(|t| (t - self.v.values[i]).abs()))
            .collect::<Result<_>>()?;
        Ok(diffs.into_iter().fold(0.0, f64::max))
    }
}

/// `T V(x)` for the given strategy: the anchor formula on A, the lump to
/// the anchor below on B, and on C the discounted claim stream along the
/// claim-free path up to the next anchor plus the value on arrival.
pub fn apply_t(params: &ModelParams, v: &ValueGrid, strategy: &BandStrategy, x: f64) -> Result<f64> {
    TOperator::new(params, v, strategy).at(x)
}

/// `sup_x |T V(x) - V(x)|` over the grid nodes.
pub fn t_fixed_sup(params: &ModelParams, v: &ValueGrid, strategy: &BandStrategy) -> Result<f64> {
    TOperator::new(params, v, strategy).fixed_point_sup()
}
