//! Event-driven Monte Carlo for the controlled reserve.
//!
//! Between claims the reserve follows the closed-form claim-free path, so a
//! path is simulated claim by claim with no time stepping. Replicate `k`
//! draws from ChaCha8 stream `k` under the configured seed, which makes every
//! estimate independent of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::hjb::{BandStrategy, Label};
use crate::model::{AtomTable, ClaimDistribution, ModelParams};
use crate::odeint::ValueGrid;

/// Dividend policy driving a simulated path.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    /// Band strategy from the solver.
    Band(BandStrategy),
    /// Reflect at `b`, pay any excess above `b` at once.
    Barrier(f64),
    /// Pay the incoming drift while the reserve is at or above `b`.
    Threshold(f64),
    /// Pay `x + p/alpha` immediately.
    TakeAll,
    NoDividends,
}

impl Strategy {
    pub fn name(&self) -> String {
        match self {
            Strategy::Band(_) => "optimal".into(),
            Strategy::Barrier(b) => format!("barrier({b})"),
            Strategy::Threshold(b) => format!("threshold({b})"),
            Strategy::TakeAll => "take_all".into(),
            Strategy::NoDividends => "none".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub n_paths: u64,
    pub seed: u64,
    /// Hard horizon cap.
    pub t_max: f64,
    /// A path stops once `e^{-delta t}` times the upper value envelope at
    /// the current reserve is at most this.
    pub tail_tol: f64,
}

impl SimConfig {
    /// Horizon cap set to ten times the time after which the discounted
    /// envelope at `b_top` falls below `tail_tol`.
    pub fn new(params: &ModelParams, n_paths: u64, seed: u64, tail_tol: f64, b_top: f64) -> Self {
        let horizon = (params.upper_envelope(b_top) / tail_tol).ln().max(0.0) / params.delta;
        Self {
            n_paths,
            seed,
            t_max: 10.0 * horizon.max(1.0),
            tail_tol,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(domain("n_paths must be at least 1"));
        }
        if !(self.tail_tol > 0.0) || !(self.t_max > 0.0) {
            return Err(domain("tail_tol and t_max must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: u64,
    /// Largest discounted envelope left over when a path was cut short.
    pub trunc_bound: f64,
    pub ruin_fraction: f64,
    /// Paths on which a lump was capped to keep it admissible.
    pub capped_paths: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    pub discounted: f64,
    /// `None` when the path was censored.
    pub ruin_time: Option<f64>,
    pub trunc_bound: f64,
    pub capped: bool,
    /// Largest reserve seen after the first dividend payment.
    pub max_after_payment: f64,
}

enum Action {
    Lump(f64),
    Hold,
    Flow(Option<f64>),
}

fn action(params: &ModelParams, strategy: &Strategy, x: f64) -> Result<Action> {
    Ok(match strategy {
        Strategy::Band(s) => match s.label_at(x) {
            Label::A => Action::Hold,
            Label::B => Action::Lump(s.anchor_below(x).ok_or(Error::NoAnchorAbove(x))?),
            Label::C => Action::Flow(Some(s.anchor_above(x).ok_or(Error::NoAnchorAbove(x))?)),
        },
        Strategy::Barrier(b) => {
            if x > *b {
                Action::Lump(*b)
            } else if x == *b {
                Action::Hold
            } else {
                Action::Flow(Some(*b))
            }
        }
        Strategy::Threshold(b) => {
            if x >= *b {
                Action::Hold
            } else {
                Action::Flow(Some(*b))
            }
        }
        Strategy::TakeAll => Action::Lump(params.critical_level()),
        Strategy::NoDividends => Action::Flow(None),
    })
}

/// Claim-size sampler by inverse CDF.
pub(crate) enum Sampler {
    Atoms(AtomTable),
    Law(ClaimDistribution),
}

impl Sampler {
    pub(crate) fn new(claims: &ClaimDistribution) -> Self {
        match claims.atoms() {
            Some(a) => Sampler::Atoms(AtomTable::new(&a)),
            None => Sampler::Law(claims.clone()),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        let q: f64 = rng.random();
        match self {
            Sampler::Atoms(t) => t.sample(q),
            Sampler::Law(d) => d.quantile(q),
        }
    }
}

/// One path from `x0`: discounted dividends until ruin or truncation.
pub fn simulate_path<R: Rng>(
    params: &ModelParams,
    strategy: &Strategy,
    x0: f64,
    rng: &mut R,
    cfg: &SimConfig,
) -> Result<PathOutcome> {
    simulate_with(params, strategy, &Sampler::new(&params.claims), x0, rng, cfg)
}

fn simulate_with<R: Rng>(
    params: &ModelParams,
    strategy: &Strategy,
    sampler: &Sampler,
    x0: f64,
    rng: &mut R,
    cfg: &SimConfig,
) -> Result<PathOutcome> {
    let crit = params.critical_level();
    if !(x0 > crit) {
        return Err(domain(format!("x0 = {x0} must exceed critical level {crit}")));
    }
    let d = params.delta;
    let mut x = x0;
    let mut t = 0.0;
    let mut total = 0.0;
    let mut capped = false;
    let mut max_after = f64::NEG_INFINITY;
    let outcome = |total: f64, ruin: Option<f64>, bound: f64, capped: bool, max_after: f64| PathOutcome {
        discounted: total,
        ruin_time: ruin,
        trunc_bound: bound,
        capped,
        max_after_payment: max_after,
    };

    loop {
        if x <= crit {
            return Ok(outcome(total, Some(t), 0.0, capped, max_after));
        }
        let bound = (-d * t).exp() * params.upper_envelope(x);
        if bound <= cfg.tail_tol || t >= cfg.t_max {
            return Ok(outcome(total, None, bound, capped, max_after));
        }
        let mut wait = -(-rng.random::<f64>()).ln_1p() / params.lambda;
        let mut act = action(params, strategy, x)?;
        if let Action::Lump(to) = act {
            let cap = x - crit;
            let mut amount = x - to;
            if amount > cap {
                amount = cap;
                capped = true;
            }
            total += (-d * t).exp() * amount;
            x = if amount >= cap { crit } else { to };
            max_after = max_after.max(x);
            if x <= crit {
                return Ok(outcome(total, Some(t), 0.0, capped, max_after));
            }
            act = action(params, strategy, x)?;
        }
        if let Action::Flow(target) = act {
            let reach = target.map_or(f64::INFINITY, |a| params.reach_time_unchecked(x, a));
            if wait < reach {
                x = params.flow_unchecked(x, wait);
                t += wait;
                x -= sampler.draw(rng);
                continue;
            }
            let a = target.unwrap();
            t += reach;
            wait -= reach;
            x = a;
            act = action(params, strategy, x)?;
        }
        match act {
            Action::Hold => {
                max_after = max_after.max(x);
                let rate = params.drift_unchecked(x);
                let stop = ((params.upper_envelope(x) / cfg.tail_tol).ln() / d).min(cfg.t_max);
                let paid_for = |span: f64| (-d * t).exp() * rate * (-(-d * span).exp_m1()) / d;
                if t + wait >= stop {
                    total += paid_for((stop - t).max(0.0));
                    let bound = (-d * stop.max(t)).exp() * params.upper_envelope(x);
                    return Ok(outcome(total, None, bound, capped, max_after));
                }
                total += paid_for(wait);
                t += wait;
            }
            _ => return Err(domain(format!("strategy does not hold at its own target x = {x}"))),
        }
        x -= sampler.draw(rng);
    }
}

/// Sum by recursive halving, fixed by the slice order.
fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

fn rng_for(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}

/// Mean and standard error over `cfg.n_paths` replicates.
pub fn estimate_return(params: &ModelParams, strategy: &Strategy, x0: f64, cfg: &SimConfig) -> Result<SimEstimate> {
    params.checked()?;
    cfg.validate()?;
    let sampler = Sampler::new(&params.claims);
    let outcomes: Vec<PathOutcome> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_for(cfg.seed, k);
            simulate_with(params, strategy, &sampler, x0, &mut rng, cfg).map_err(|e| Error::Replicate {
                replicate: k,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    Ok(summarise(&outcomes))
}

/// Serial reference for [`estimate_return`]; bit-identical results.
pub fn estimate_return_serial(
    params: &ModelParams,
    strategy: &Strategy,
    x0: f64,
    cfg: &SimConfig,
) -> Result<SimEstimate> {
    params.checked()?;
    cfg.validate()?;
    let sampler = Sampler::new(&params.claims);
    let mut outcomes = Vec::with_capacity(cfg.n_paths as usize);
    for k in 0..cfg.n_paths {
        let mut rng = rng_for(cfg.seed, k);
        outcomes.push(
            simulate_with(params, strategy, &sampler, x0, &mut rng, cfg).map_err(|e| Error::Replicate {
                replicate: k,
                source: Box::new(e),
            })?,
        );
    }
    Ok(summarise(&outcomes))
}

fn summarise(outcomes: &[PathOutcome]) -> SimEstimate {
    let n = outcomes.len();
    // shift by the first sample so identical samples give an exact mean
    let shift = outcomes[0].discounted;
    let dev: Vec<f64> = outcomes.iter().map(|o| o.discounted - shift).collect();
    let mean_dev = pairwise_sum(&dev) / n as f64;
    let sq: Vec<f64> = dev.iter().map(|x| (x - mean_dev) * (x - mean_dev)).collect();
    let var = if n > 1 { pairwise_sum(&sq) / (n - 1) as f64 } else { 0.0 };
    SimEstimate {
        mean: shift + mean_dev,
        std_err: (var / n as f64).sqrt(),
        n: n as u64,
        trunc_bound: outcomes.iter().map(|o| o.trunc_bound).fold(0.0, f64::max),
        ruin_fraction: outcomes.iter().filter(|o| o.ruin_time.is_some()).count() as f64 / n as f64,
        capped_paths: outcomes.iter().filter(|o| o.capped).count() as u64,
    }
}

/// One dominance probe: a named strategy, optionally the optimal one.
#[derive(Debug, Clone)]
pub struct Probe {
    pub name: String,
    pub strategy: Strategy,
    pub optimal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceRow {
    pub x0: f64,
    pub strategy: String,
    pub mean: f64,
    pub std_err: f64,
    pub trunc_bound: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub rows: Vec<DominanceRow>,
    pub all_pass: bool,
}

/// Every probe must satisfy `mean <= V(x0) + 3 se + tol`; the optimal one
/// also `mean >= V(x0) - 3 se - tol - trunc_bound`.
pub fn dominance_check(
    params: &ModelParams,
    v: &ValueGrid,
    probes: &[Probe],
    x0s: &[f64],
    cfg: &SimConfig,
    tol: f64,
) -> Result<DominanceReport> {
    let mut rows = Vec::new();
    for &x0 in x0s {
        let target = v.interp(x0);
        for p in probes {
            let est = estimate_return(params, &p.strategy, x0, cfg)?;
            let margin = 3.0 * est.std_err + tol;
            let mut pass = est.mean <= target + margin;
            if p.optimal {
                pass &= est.mean >= target - margin - est.trunc_bound;
            }
            rows.push(DominanceRow {
                x0,
                strategy: p.name.clone(),
                mean: est.mean,
                std_err: est.std_err,
                trunc_bound: est.trunc_bound,
                v: target,
                pass,
            });
        }
    }
    let all_pass = rows.iter().all(|r| r.pass);
    Ok(DominanceReport { rows, all_pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn degenerate() -> ModelParams {
        ModelParams::new(1.0, 0.5, 0.05, 1.0, 0.1, ClaimDistribution::PointMassZero)
    }

    fn cfg1() -> ModelParams {
        ModelParams::new(1.0, 0.5, 0.05, 1.0, 0.1, ClaimDistribution::Exponential { rate: 1.0 })
    }

    fn config(m: &ModelParams, n: u64) -> SimConfig {
        SimConfig::new(m, n, 7, 1e-8, 3.0)
    }

    #[test]
    fn take_all_is_exact() {
        let m = cfg1();
        let e = estimate_return(&m, &Strategy::TakeAll, 0.4, &config(&m, 100)).unwrap();
        assert!((e.mean - 1.4).abs() < 1e-15);
        assert_eq!(e.std_err, 0.0);
        assert_eq!(e.ruin_fraction, 1.0);
    }

    #[test]
    fn degenerate_hold_at_zero() {
        let m = degenerate();
        let cfg = config(&m, 50);
        let e = estimate_return(&m, &Strategy::Barrier(0.0), 0.0, &cfg).unwrap();
        assert!(e.trunc_bound <= cfg.tail_tol * 1.0001);
        assert!((e.mean - 10.0).abs() <= e.trunc_bound + 1e-9, "{e:?}");
        assert!(e.std_err < 1e-9);
    }

    #[test]
    fn degenerate_from_negative_reserve() {
        let m = degenerate();
        let e = estimate_return(&m, &Strategy::Barrier(0.0), -0.5, &config(&m, 1)).unwrap();
        let exact = 10.0 * 0.5f64.powf(0.1);
        assert!((e.mean - exact).abs() < 1e-6, "{} vs {exact}", e.mean);
    }

    #[test]
    fn no_dividends_pays_nothing() {
        let m = cfg1();
        let e = estimate_return(&m, &Strategy::NoDividends, 1.0, &config(&m, 200)).unwrap();
        assert_eq!(e.mean, 0.0);
        assert_eq!(e.std_err, 0.0);
    }

    #[test]
    fn parallel_matches_serial_bitwise() {
        let m = cfg1();
        let cfg = config(&m, 2000);
        for s in [Strategy::Barrier(1.5), Strategy::Threshold(1.0)] {
            let a = estimate_return(&m, &s, 0.5, &cfg).unwrap();
            let b = estimate_return_serial(&m, &s, 0.5, &cfg).unwrap();
            assert_eq!(a.mean.to_bits(), b.mean.to_bits());
            assert_eq!(a.std_err.to_bits(), b.std_err.to_bits());
        }
    }

    #[test]
    fn reserve_stays_below_barrier_after_payment() {
        let m = cfg1();
        let cfg = config(&m, 1);
        for k in 0..500 {
            let mut rng = rng_for(3, k);
            let o = simulate_path(&m, &Strategy::Barrier(2.0), 4.0, &mut rng, &cfg).unwrap();
            assert!(o.max_after_payment <= 2.0);
        }
    }

    #[test]
    fn ruin_is_less_likely_with_more_reserve() {
        let m = cfg1();
        let cfg = config(&m, 4000);
        let mut last = 1.0;
        for x0 in [-0.5, 0.0, 1.0, 2.0] {
            let e = estimate_return(&m, &Strategy::Barrier(2.0), x0, &cfg).unwrap();
            assert!(e.ruin_fraction <= last);
            last = e.ruin_fraction;
        }
    }

    #[test]
    fn rejects_reserve_at_critical() {
        let m = cfg1();
        assert!(estimate_return(&m, &Strategy::TakeAll, -2.0, &config(&m, 1)).is_err());
        let zero = SimConfig { n_paths: 0, ..config(&m, 1) };
        assert!(estimate_return(&m, &Strategy::TakeAll, 0.0, &zero).is_err());
    }
}
