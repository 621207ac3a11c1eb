//! Run configuration. Parsing is strict: unknown keys anywhere are errors.

use std::path::Path;

use bandopt_core::{BuildOptions, ClaimDistribution, ModelParams, Strategy};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub oracle: OracleSection,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub p: f64,
    pub lambda: f64,
    pub r: f64,
    pub alpha: f64,
    pub delta: f64,
    pub claims: ClaimDistribution,
}

/// Upper grid end: a number or `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Bound {
    Value(f64),
    Word(Auto),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum Auto {
    #[serde(rename = "auto")]
    Auto,
}

impl Bound {
    pub fn value(self) -> Option<f64> {
        match self {
            Bound::Value(v) => Some(v),
            Bound::Word(_) => None,
        }
    }
}

impl Default for Bound {
    fn default() -> Self {
        Bound::Word(Auto::Auto)
    }
}

/// `eps_c` defaults to `1e-6 p/alpha`, `dx` to `1e-3`, `x_hi` to `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub eps_c: Option<f64>,
    pub dx: Option<f64>,
    #[serde(default)]
    pub x_hi: Bound,
}

/// Defaults: `max_bands = 8`, `tol_region = 1e-3`, `tol_hjb = max(1e-4, 10 dx)`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub max_bands: usize,
    pub tol_region: f64,
    pub tol_hjb: Option<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let o = BuildOptions::default();
        Self {
            max_bands: o.max_bands,
            tol_region: o.tol_region,
            tol_hjb: o.tol_hjb,
        }
    }
}

pub const DEFAULT_PROBES: [&str; 6] = [
    "optimal",
    "take_all",
    "barrier(b_top+0.5)",
    "barrier(b_top-0.5)",
    "threshold(b_top)",
    "none",
];

/// Defaults: 200000 paths, seed 1, `tail_tol = 1e-6`, starts `[-0.5, 0, 1]`
/// and [`DEFAULT_PROBES`].
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub n_paths: u64,
    pub seed: u64,
    pub tail_tol: f64,
    pub x0_list: Vec<f64>,
    pub probe_strategies: Vec<String>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            n_paths: 200_000,
            seed: 1,
            tail_tol: 1e-6,
            x0_list: vec![-0.5, 0.0, 1.0],
            probe_strategies: DEFAULT_PROBES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Defaults: 1000 nodes, `dt = 1e-4`, at most 100000 sweeps, and an upper
/// end of `b_top + 2 (mean claim + p/alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub n: usize,
    pub dt: f64,
    pub max_iters: usize,
    pub x_hi: Bound,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            n: 1000,
            dt: 1e-4,
            max_iters: 100_000,
            x_hi: Bound::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    /// Model parameters after every hypothesis check.
    pub fn params(&self) -> Result<ModelParams, CliError> {
        let m = &self.model;
        let params = ModelParams::new(m.p, m.lambda, m.r, m.alpha, m.delta, m.claims.clone());
        let diag = params.validate();
        if !diag.violations.is_empty() {
            return Err(CliError::Config(diag.violations.join("; ")));
        }
        Ok(params)
    }

    pub fn eps_c(&self, params: &ModelParams) -> f64 {
        self.grid.eps_c.unwrap_or(1e-6 * params.p / params.alpha)
    }

    pub fn dx(&self) -> f64 {
        self.grid.dx.unwrap_or(1e-3)
    }

    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            max_bands: self.solver.max_bands,
            tol_region: self.solver.tol_region,
            tol_hjb: self.solver.tol_hjb,
        }
    }

    /// Apply command-line overrides.
    pub fn override_with(&mut self, seed: Option<u64>, paths: Option<u64>, x0: Option<Vec<f64>>) {
        if let Some(s) = seed {
            self.sim.seed = s;
        }
        if let Some(n) = paths {
            self.sim.n_paths = n;
        }
        if let Some(x) = x0 {
            self.sim.x0_list = x;
        }
    }
}

/// Probe strategy named in the config.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbeSpec {
    Optimal,
    TakeAll,
    None,
    Barrier(Level),
    Threshold(Level),
}

/// A reserve level, absolute or relative to the top anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Level {
    Fixed(f64),
    FromTop(f64),
}

impl Level {
    fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        match s.strip_prefix("b_top") {
            Some("") => Some(Level::FromTop(0.0)),
            Some(rest) => {
                let rest = rest.trim();
                let (sign, num) = if let Some(n) = rest.strip_prefix('+') {
                    (1.0, n)
                } else {
                    (-1.0, rest.strip_prefix('-')?)
                };
                num.trim().parse::<f64>().ok().map(|v| Level::FromTop(sign * v))
            }
            None => s.parse::<f64>().ok().map(Level::Fixed),
        }
    }

    pub fn resolve(self, b_top: f64) -> f64 {
        match self {
            Level::Fixed(v) => v,
            Level::FromTop(d) => b_top + d,
        }
    }
}

impl ProbeSpec {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Config(format!("unknown probe strategy {s:?}"));
        let t = s.trim();
        match t {
            "optimal" => return Ok(ProbeSpec::Optimal),
            "take_all" => return Ok(ProbeSpec::TakeAll),
            "none" => return Ok(ProbeSpec::None),
            _ => {}
        }
        let (name, arg) = t.split_once('(').ok_or_else(bad)?;
        let arg = arg.strip_suffix(')').ok_or_else(bad)?;
        let level = Level::parse(arg).ok_or_else(bad)?;
        match name.trim() {
            "barrier" => Ok(ProbeSpec::Barrier(level)),
            "threshold" => Ok(ProbeSpec::Threshold(level)),
            _ => Err(bad()),
        }
    }

    /// Needs a solved value function to be resolved.
    pub fn needs_solution(&self) -> bool {
        matches!(
            self,
            ProbeSpec::Optimal | ProbeSpec::Barrier(Level::FromTop(_)) | ProbeSpec::Threshold(Level::FromTop(_))
        )
    }

    pub fn resolve(&self, solution: Option<&bandopt_core::BandStrategy>) -> Strategy {
        let top = || solution.map(|s| s.top).unwrap_or(f64::NAN);
        match self {
            ProbeSpec::Optimal => Strategy::Band(solution.expect("optimal probe needs a solution").clone()),
            ProbeSpec::TakeAll => Strategy::TakeAll,
            ProbeSpec::None => Strategy::NoDividends,
            ProbeSpec::Barrier(l) => Strategy::Barrier(l.resolve(top())),
            ProbeSpec::Threshold(l) => Strategy::Threshold(l.resolve(top())),
        }
    }
}
