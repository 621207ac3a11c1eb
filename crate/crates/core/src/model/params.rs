use serde::Serialize;

use super::ClaimDistribution;
use crate::error::{domain, Error, Result};

/// One problem instance: premium rate `p`, claim intensity `lambda`, credit
/// interest `r`, debit interest `alpha`, discount force `delta` and the claim law.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub p: f64,
    pub lambda: f64,
    pub r: f64,
    pub alpha: f64,
    pub delta: f64,
    pub claims: ClaimDistribution,
}

/// Outcome of [`ModelParams::validate`]. Violations make the instance
/// unusable; warnings only disable structural guarantees.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub const WARN_NEGATIVE_RESERVE: &str = "negative-reserve no-dividend theorem inapplicable (alpha <= lambda + delta)";

impl ModelParams {
    pub fn new(p: f64, lambda: f64, r: f64, alpha: f64, delta: f64, claims: ClaimDistribution) -> Self {
        Self {
            p,
            lambda,
            r,
            alpha,
            delta,
            claims,
        }
    }

    pub fn validate(&self) -> Diagnostics {
        let mut d = Diagnostics::default();
        for (name, v) in [
            ("p", self.p),
            ("lambda", self.lambda),
            ("r", self.r),
            ("alpha", self.alpha),
            ("delta", self.delta),
        ] {
            if !(v.is_finite() && v > 0.0) {
                d.violations.push(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.delta > self.r) {
            d.violations.push(format!(
                "delta must exceed r (upper value bound needs r < delta), got delta={} r={}",
                self.delta, self.r
            ));
        }
        if !(self.alpha > self.r) {
            d.violations.push(format!(
                "alpha must exceed r (debit interest above credit interest), got alpha={} r={}",
                self.alpha, self.r
            ));
        }
        if let Err(e) = self.claims.validate() {
            d.violations.push(e.to_string());
        }
        if d.violations.is_empty() && !self.no_negative_dividends() {
            d.warnings.push(WARN_NEGATIVE_RESERVE.to_string());
        }
        d
    }

    /// Validation as a hard gate.
    pub fn checked(&self) -> Result<&Self> {
        let d = self.validate();
        if d.is_ok() {
            Ok(self)
        } else {
            Err(Error::InvalidParams(d.violations))
        }
    }

    /// `alpha > lambda + delta`: the hypothesis under which no dividend is
    /// ever paid at negative reserve.
    pub fn no_negative_dividends(&self) -> bool {
        self.alpha > self.lambda + self.delta
    }

    /// Absolute-ruin level `-p/alpha`.
    pub fn critical_level(&self) -> f64 {
        -self.p / self.alpha
    }

    /// Exponent of the power law `W ~ (x + p/alpha)^gamma` at the critical
    /// level. An atom of the claim law at zero removes its share of the
    /// killing rate because such claims leave the reserve unchanged.
    pub fn boundary_exponent(&self) -> f64 {
        (self.lambda * (1.0 - self.claims.mass_at_zero()) + self.delta) / self.alpha
    }

    #[inline]
    pub(crate) fn drift_unchecked(&self, x: f64) -> f64 {
        if x >= 0.0 {
            self.p + self.r * x
        } else {
            self.p + self.alpha * x
        }
    }

    /// Claim-free, dividend-free reserve velocity.
    pub fn drift(&self, x: f64) -> Result<f64> {
        let c = self.critical_level();
        if x < c {
            return Err(domain(format!("x = {x} below critical level {c}")));
        }
        if x == c {
            return Ok(0.0);
        }
        Ok(self.drift_unchecked(x).max(0.0))
    }

    /// Time for the claim-free path to climb from `x` to `y`.
    pub fn reach_time(&self, x: f64, y: f64) -> Result<f64> {
        let c = self.critical_level();
        if !(x > c) {
            return Err(domain(format!("reach_time: x = {x} must exceed critical level {c}")));
        }
        if y < x {
            return Err(domain(format!("reach_time: y = {y} below x = {x}")));
        }
        Ok(self.reach_time_unchecked(x, y))
    }

    pub(crate) fn reach_time_unchecked(&self, x: f64, y: f64) -> f64 {
        let (p, r, a) = (self.p, self.r, self.alpha);
        if y <= x {
            0.0
        } else if x >= 0.0 {
            (r * (y - x) / (r * x + p)).ln_1p() / r
        } else if y > 0.0 {
            (r * y / p).ln_1p() / r - (a * x / p).ln_1p() / a
        } else {
            (a * (y - x) / (a * x + p)).ln_1p() / a
        }
    }

    /// Position after time `t` on the claim-free, dividend-free path from `x`.
    pub fn flow(&self, x: f64, t: f64) -> Result<f64> {
        let c = self.critical_level();
        if !(x > c) {
            return Err(domain(format!("flow: x = {x} must exceed critical level {c}")));
        }
        if !(t >= 0.0) {
            return Err(domain(format!("flow: negative time {t}")));
        }
        Ok(self.flow_unchecked(x, t))
    }

    pub(crate) fn flow_unchecked(&self, x: f64, t: f64) -> f64 {
        let (p, r, a) = (self.p, self.r, self.alpha);
        if x >= 0.0 {
            return x + (p + r * x) * (r * t).exp_m1() / r;
        }
        let to_zero = -(a * x / p).ln_1p() / a;
        if t < to_zero {
            x + (p + a * x) * (a * t).exp_m1() / a
        } else {
            let s = t - to_zero;
            p * (r * s).exp_m1() / r
        }
    }

    /// Upper bound on the value function at `x` (nondecreasing in `x`).
    pub fn upper_envelope(&self, x: f64) -> f64 {
        let x = x.max(0.0);
        (self.delta * x + self.p) / (self.delta - self.r) + self.p / self.alpha
    }

    /// Lower bound: pay everything above the critical level at once.
    pub fn lower_envelope(&self, x: f64) -> f64 {
        (x + self.p / self.alpha).max(0.0)
    }

    /// Growth factor `V(y)/V(x) - 1` bound for `x < y`.
    pub fn increment_factor(&self, x: f64, y: f64) -> f64 {
        ((self.lambda + self.delta) * self.reach_time_unchecked(x, y)).exp_m1()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ModelParams {
        ModelParams::new(1.0, 0.5, 0.05, 1.0, 0.1, ClaimDistribution::Exponential { rate: 1.0 })
    }

    // RK4 on dx/dt = drift(x), stopping when x reaches y; independent of the closed form.
    fn rk4_reach(m: &ModelParams, x: f64, y: f64) -> f64 {
        let f = |x: f64| m.drift_unchecked(x);
        let mut t = 0.0;
        let mut s = x;
        let h = 1e-4;
        loop {
            let k1 = f(s);
            let k2 = f(s + 0.5 * h * k1);
            let k3 = f(s + 0.5 * h * k2);
            let k4 = f(s + h * k3);
            let next = s + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if next >= y {
                // linear finish inside the last step
                return t + h * (y - s) / (next - s);
            }
            s = next;
            t += h;
        }
    }

    #[test]
    fn drift_examples() {
        let m = base();
        assert_eq!(m.drift(0.0).unwrap(), 1.0);
        assert_eq!(m.drift(-0.5).unwrap(), 0.5);
        assert_eq!(m.drift(-1.0).unwrap(), 0.0);
        assert!(m.drift(-1.1).is_err());
    }

    #[test]
    fn critical_level_examples() {
        let mut m = base();
        assert_eq!(m.critical_level(), -1.0);
        m.p = 2.0;
        m.alpha = 0.8;
        assert_eq!(m.critical_level(), -2.5);
        m.p = 1.0;
        m.alpha = 4.0;
        assert_eq!(m.critical_level(), -0.25);
    }

    #[test]
    fn reach_time_examples() {
        let m = base();
        assert_eq!(m.reach_time(0.0, 0.0).unwrap(), 0.0);
        let t = m.reach_time(-0.5, 0.0).unwrap();
        assert!((t - 2f64.ln()).abs() < 1e-14);
        assert!((t - rk4_reach(&m, -0.5, 0.0)).abs() < 1e-6);
        let t = m.reach_time(0.0, 1.0).unwrap();
        assert!((t - 20.0 * 1.05f64.ln()).abs() < 1e-13);
        assert!((t - 0.975803).abs() < 1e-6);
        assert!((t - rk4_reach(&m, 0.0, 1.0)).abs() < 1e-6);
        // straddling branch
        let t = m.reach_time(-0.5, 1.0).unwrap();
        assert!((t - rk4_reach(&m, -0.5, 1.0)).abs() < 1e-6);
    }

    #[test]
    fn reach_time_domain_errors() {
        let m = base();
        assert!(m.reach_time(-1.0, 0.0).is_err());
        assert!(m.reach_time(0.5, 0.0).is_err());
    }

    #[test]
    fn flow_examples() {
        let m = base();
        assert_eq!(m.flow(-0.5, 0.0).unwrap(), -0.5);
        assert!(m.flow(-0.5, 2f64.ln()).unwrap().abs() < 1e-15);
        assert!((m.flow(0.0, 20.0 * 1.05f64.ln()).unwrap() - 1.0).abs() < 1e-14);
        assert!(m.flow(-1.0, 1.0).is_err());
    }

    #[test]
    fn validate_examples() {
        let d = base().validate();
        assert!(d.violations.is_empty() && d.warnings.is_empty());

        let mut m = base();
        m.delta = 0.04;
        let d = m.validate();
        assert!(d.violations.iter().any(|v| v.contains("delta must exceed r")));

        let mut m = base();
        m.alpha = 0.55;
        let d = m.validate();
        assert!(d.violations.is_empty());
        assert_eq!(d.warnings, vec![WARN_NEGATIVE_RESERVE.to_string()]);

        let mut m = base();
        m.lambda = -1.0;
        assert!(!m.validate().is_ok());
        assert!(m.checked().is_err());
    }

    #[test]
    fn no_negative_dividends_flag() {
        let mut m = base();
        assert!(m.no_negative_dividends());
        m.alpha = 0.6;
        assert!(!m.no_negative_dividends());
    }
}
