use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Claim-size law. The set of variants is closed so that every quadrature
/// rule in the crate knows exactly what it integrates against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClaimDistribution {
    Exponential { rate: f64 },
    Erlang { shape: u32, rate: f64 },
    Uniform { lo: f64, hi: f64 },
    /// `(size, probability)` pairs.
    DiscreteAtoms { atoms: Vec<(f64, f64)> },
    PointMassZero,
}

impl ClaimDistribution {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidClaims(m));
        match self {
            Self::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return bad(format!("exponential rate must be positive, got {rate}"));
                }
            }
            Self::Erlang { shape, rate } => {
                if *shape == 0 {
                    return bad("erlang shape must be at least 1".into());
                }
                if !(rate.is_finite() && *rate > 0.0) {
                    return bad(format!("erlang rate must be positive, got {rate}"));
                }
            }
            Self::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && *lo >= 0.0 && hi > lo) {
                    return bad(format!("uniform needs 0 <= lo < hi, got [{lo}, {hi}]"));
                }
            }
            Self::DiscreteAtoms { atoms } => {
                if atoms.is_empty() {
                    return bad("no atoms".into());
                }
                let mut total = 0.0;
                for &(size, prob) in atoms {
                    if !(size.is_finite() && size >= 0.0) {
                        return bad(format!("atom size must be finite and >= 0, got {size}"));
                    }
                    if !(prob.is_finite() && prob >= 0.0) {
                        return bad(format!("atom probability must be >= 0, got {prob}"));
                    }
                    total += prob;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return bad(format!("atom probabilities sum to {total}, not 1"));
                }
            }
            Self::PointMassZero => {}
        }
        if matches!(self, Self::Exponential { .. } | Self::Erlang { .. }) {
            // composite Simpson over a range carrying all but a negligible tail
            let hi = self.quantile(1.0 - 1e-12);
            let n = 4000;
            let h = hi / n as f64;
            let mut s = self.density(0.0) + self.density(hi);
            for k in 1..n {
                let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                s += w * self.density(k as f64 * h);
            }
            let mass = s * h / 3.0;
            if !(mass <= 1.0 + 1e-6) {
                return bad(format!("density integrates to {mass} > 1"));
            }
        }
        Ok(())
    }

    pub fn is_continuous(&self) -> bool {
        matches!(
            self,
            Self::Exponential { .. } | Self::Erlang { .. } | Self::Uniform { .. }
        )
    }

    /// Atoms of a purely discrete law, `None` for the continuous variants.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Self::DiscreteAtoms { atoms } => Some(atoms.clone()),
            Self::PointMassZero => Some(vec![(0.0, 1.0)]),
            _ => None,
        }
    }

    /// Probability of a claim of size exactly zero.
    pub fn mass_at_zero(&self) -> f64 {
        match self {
            Self::DiscreteAtoms { atoms } => atoms
                .iter()
                .filter(|(u, _)| *u == 0.0)
                .map(|(_, p)| p)
                .sum(),
            Self::PointMassZero => 1.0,
            _ => 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::Erlang { shape, rate } => *shape as f64 / rate,
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
            Self::DiscreteAtoms { atoms } => atoms.iter().map(|(u, p)| u * p).sum(),
            Self::PointMassZero => 0.0,
        }
    }

    /// Density of the continuous part (zero for atomic laws).
    pub fn density(&self, u: f64) -> f64 {
        if u < 0.0 {
            return 0.0;
        }
        match self {
            Self::Exponential { rate } => rate * (-rate * u).exp(),
            Self::Erlang { shape, rate } => {
                let k = *shape as i32;
                let mut log_fact = 0.0;
                for j in 2..k {
                    log_fact += (j as f64).ln();
                }
                if k == 1 {
                    return rate * (-rate * u).exp();
                }
                if u == 0.0 {
                    return 0.0;
                }
                (k as f64 * rate.ln() + (k - 1) as f64 * u.ln() - rate * u - log_fact).exp()
            }
            Self::Uniform { lo, hi } => {
                if u >= *lo && u <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Self::DiscreteAtoms { .. } | Self::PointMassZero => 0.0,
        }
    }

    pub fn cdf(&self, u: f64) -> f64 {
        if u < 0.0 {
            return 0.0;
        }
        match self {
            Self::Exponential { rate } => -(-rate * u).exp_m1(),
            Self::Erlang { shape, rate } => {
                let x = rate * u;
                let mut term = 1.0;
                let mut sum = 1.0;
                for j in 1..*shape {
                    term *= x / j as f64;
                    sum += term;
                }
                (1.0 - (-x).exp() * sum).clamp(0.0, 1.0)
            }
            Self::Uniform { lo, hi } => ((u - lo) / (hi - lo)).clamp(0.0, 1.0),
            Self::DiscreteAtoms { atoms } => atoms
                .iter()
                .filter(|(s, _)| *s <= u)
                .map(|(_, p)| p)
                .sum::<f64>()
                .min(1.0),
            Self::PointMassZero => 1.0,
        }
    }

    /// Inverse CDF, `q` in `[0, 1)`. Used for claim sampling.
    pub fn quantile(&self, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0 - 1e-16);
        match self {
            Self::Exponential { rate } => -(-q).ln_1p() / rate,
            Self::Uniform { lo, hi } => lo + q * (hi - lo),
            Self::PointMassZero => 0.0,
            Self::DiscreteAtoms { atoms } => {
                let mut sorted = atoms.clone();
                sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut acc = 0.0;
                for &(u, p) in &sorted {
                    acc += p;
                    if q < acc {
                        return u;
                    }
                }
                sorted.last().map(|a| a.0).unwrap_or(0.0)
            }
            Self::Erlang { .. } => {
                // bracket then Newton with bisection fallback
                let mut lo = 0.0;
                let mut hi = self.mean().max(1e-12);
                while self.cdf(hi) < q {
                    lo = hi;
                    hi *= 2.0;
                }
                let mut u = 0.5 * (lo + hi);
                for _ in 0..200 {
                    let f = self.cdf(u) - q;
                    if f.abs() < 1e-15 {
                        break;
                    }
                    if f > 0.0 {
                        hi = u;
                    } else {
                        lo = u;
                    }
                    let d = self.density(u);
                    let newton = u - f / d;
                    u = if d > 0.0 && newton > lo && newton < hi {
                        newton
                    } else {
                        0.5 * (lo + hi)
                    };
                    if hi - lo < 1e-15 * hi.max(1.0) {
                        break;
                    }
                }
                u
            }
        }
    }
}

/// Atom list with exact lookup by sorted order, pre-sorted for sampling.
#[derive(Debug, Clone)]
pub(crate) struct AtomTable {
    sizes: Vec<f64>,
    cum: Vec<f64>,
}

impl AtomTable {
    pub(crate) fn new(atoms: &[(f64, f64)]) -> Self {
        let mut sorted = atoms.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc = 0.0;
        let mut sizes = Vec::with_capacity(sorted.len());
        let mut cum = Vec::with_capacity(sorted.len());
        for (u, p) in sorted {
            acc += p;
            sizes.push(u);
            cum.push(acc);
        }
        Self { sizes, cum }
    }

    pub(crate) fn sample(&self, q: f64) -> f64 {
        let idx = self.cum.partition_point(|&c| c <= q);
        self.sizes[idx.min(self.sizes.len() - 1)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atoms_must_sum_to_one() {
        let d = ClaimDistribution::DiscreteAtoms {
            atoms: vec![(1.0, 0.5), (2.0, 0.4)],
        };
        assert!(d.validate().is_err());
        let d = ClaimDistribution::DiscreteAtoms {
            atoms: vec![(1.0, 0.5), (2.0, 0.5)],
        };
        assert!(d.validate().is_ok());
        let d = ClaimDistribution::DiscreteAtoms {
            atoms: vec![(-1.0, 0.5), (2.0, 0.5)],
        };
        assert!(d.validate().is_err());
    }

    #[test]
    fn erlang_quantile_inverts_cdf() {
        let d = ClaimDistribution::Erlang { shape: 3, rate: 2.0 };
        for q in [0.001, 0.1, 0.5, 0.9, 0.999] {
            let u = d.quantile(q);
            assert!((d.cdf(u) - q).abs() < 1e-12, "q={q} u={u}");
        }
    }

    #[test]
    fn erlang_one_is_exponential() {
        let e = ClaimDistribution::Exponential { rate: 1.7 };
        let k = ClaimDistribution::Erlang { shape: 1, rate: 1.7 };
        for u in [0.0, 0.3, 2.0] {
            assert!((e.density(u) - k.density(u)).abs() < 1e-14);
            assert!((e.cdf(u) - k.cdf(u)).abs() < 1e-14);
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        for d in [
            ClaimDistribution::Exponential { rate: 1.0 },
            ClaimDistribution::Erlang { shape: 2, rate: 2.0 },
            ClaimDistribution::Uniform { lo: 0.5, hi: 1.5 },
        ] {
            d.validate().unwrap();
            assert!((d.cdf(1e3) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn atom_sampling_follows_cumulative_weights() {
        let t = AtomTable::new(&[(2.0, 0.25), (0.0, 0.5), (1.0, 0.25)]);
        assert_eq!(t.sample(0.1), 0.0);
        assert_eq!(t.sample(0.6), 1.0);
        assert_eq!(t.sample(0.8), 2.0);
    }

    #[test]
    fn mass_at_zero() {
        assert_eq!(ClaimDistribution::PointMassZero.mass_at_zero(), 1.0);
        let d = ClaimDistribution::DiscreteAtoms {
            atoms: vec![(0.0, 0.3), (1.0, 0.7)],
        };
        assert!((d.mass_at_zero() - 0.3).abs() < 1e-15);
        assert_eq!(ClaimDistribution::Exponential { rate: 1.0 }.mass_at_zero(), 0.0);
    }
}
