//! The four subcommands. Every artifact is written with fixed formatting so
//! identical configs give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use bandopt_core::hjb::{hjb_residual_with, oracle_grid, t_fixed_sup, ResidualReport};
use bandopt_core::sim::{dominance_check, estimate_return, DominanceRow, Probe, SimConfig};
use bandopt_core::{
    build_value, build_value_auto, classify_regions, value_iteration_oracle, BandStrategy, Diagnostics,
    Error, Grid, GridKind, ModelParams, Solution, ValueGrid,
};
use serde::{Deserialize, Serialize};

use crate::config::{ProbeSpec, RunConfig};
use crate::error::CliError;

pub const GRID_CSV: &str = "grid.csv";
pub const BANDS_JSON: &str = "bands.json";
pub const VERIFY_JSON: &str = "verify.json";
pub const SIM_CSV: &str = "sim.csv";
pub const ORACLE_CSV: &str = "oracle.csv";

/// Monte Carlo and oracle tolerances, relative to `V(x_hi)`.
pub const MC_TOL_REL: f64 = 1e-3;
pub const ORACLE_TOL_REL: f64 = 5e-3;

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write(dir: &Path, name: &str, body: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| CliError::io(&path, e))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut body = serde_json::to_string_pretty(value).expect("reports serialize");
    body.push('\n');
    write(dir, name, &body)
}

/// Layout needed to rebuild the exact grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridLayout {
    pub step: f64,
    pub zero_index: usize,
    pub len: usize,
    pub x_lo: f64,
    pub x_hi: f64,
}

impl GridLayout {
    fn of(g: &Grid) -> Self {
        Self {
            step: g.step(),
            zero_index: g.zero_index(),
            len: g.len(),
            x_lo: g.x_lo(),
            x_hi: g.x_hi(),
        }
    }
}

#[derive(Debug, Serialize)]
struct BandsFile<'a> {
    certified: bool,
    anchors: Vec<f64>,
    b_top: Option<f64>,
    x_hi: Option<f64>,
    eps_c: f64,
    dx: f64,
    grid: Option<GridLayout>,
    strategy: Option<&'a BandStrategy>,
    residuals: Option<&'a ResidualReport>,
    hjb_ok: bool,
    envelope_ok: bool,
    growth_ok: bool,
    t_ok: bool,
    diagnostics: Diagnostics,
    error: Option<String>,
}

/// Only the part of bands.json that verify reads back.
#[derive(Debug, Deserialize)]
struct BandsLayout {
    grid: Option<GridLayout>,
}

/// Solve with the configured grid; `x_hi = "auto"` uses the automatic rule.
pub fn solve(cfg: &RunConfig, params: &ModelParams) -> Result<Solution, Error> {
    let eps_c = cfg.eps_c(params);
    let opts = cfg.build_options();
    match cfg.grid.x_hi.value() {
        Some(x_hi) => build_value(params, &Grid::new(params, eps_c, cfg.dx(), x_hi)?, &opts),
        None => build_value_auto(params, eps_c, cfg.dx(), &opts),
    }
}

/// `solve`: grid.csv and bands.json. A certification failure still writes
/// bands.json with the failing report.
pub fn run_solve(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let params = cfg.params()?;
    let diagnostics = params.validate();
    let base = |error: Option<String>| BandsFile {
        certified: false,
        anchors: Vec::new(),
        b_top: None,
        x_hi: None,
        eps_c: cfg.eps_c(&params),
        dx: cfg.dx(),
        grid: None,
        strategy: None,
        residuals: None,
        hjb_ok: false,
        envelope_ok: false,
        growth_ok: false,
        t_ok: false,
        diagnostics: diagnostics.clone(),
        error,
    };
    let sol = match solve(cfg, &params) {
        Ok(s) => s,
        Err(e) => {
            let err = CliError::from(e);
            if let CliError::Solver(inner) = &err {
                let report = match inner {
                    Error::Certification { report, .. } | Error::MaxBandsExceeded { report, .. } => Some(&**report),
                    _ => None,
                };
                let file = BandsFile {
                    residuals: report,
                    hjb_ok: report.is_some_and(|r| r.hjb_ok()),
                    envelope_ok: report.is_some_and(|r| r.envelope_ok),
                    growth_ok: report.is_some_and(|r| r.growth_ok),
                    t_ok: report.is_some_and(|r| r.t_ok()),
                    ..base(Some(inner.to_string()))
                };
                write_json(out, BANDS_JSON, &file)?;
            }
            return Err(err);
        }
    };

    let v = &sol.value;
    let mut csv = String::from("x,V,dV,L_V,G_V,region\n");
    for i in 0..v.len() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            num(v.x(i)),
            num(v.values[i]),
            num(v.deriv[i]),
            num(sol.generator[i]),
            num(sol.g[i]),
            sol.strategy.labels[i].as_str()
        );
    }
    write(out, GRID_CSV, &csv)?;

    let r = &sol.report;
    let file = BandsFile {
        certified: true,
        anchors: sol.strategy.anchors.clone(),
        b_top: Some(sol.strategy.top),
        x_hi: Some(v.grid.x_hi()),
        grid: Some(GridLayout::of(&v.grid)),
        strategy: Some(&sol.strategy),
        residuals: Some(r),
        hjb_ok: r.hjb_ok(),
        envelope_ok: r.envelope_ok,
        growth_ok: r.growth_ok,
        t_ok: r.t_ok(),
        ..base(None)
    };
    write_json(out, BANDS_JSON, &file)
}

/// Value grid from a previous `solve` in `out`.
pub fn load_value(params: &ModelParams, out: &Path) -> Result<ValueGrid, CliError> {
    let bands_path = out.join(BANDS_JSON);
    let text = fs::read_to_string(&bands_path).map_err(|e| CliError::io(&bands_path, e))?;
    let layout: BandsLayout =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", bands_path.display())))?;
    let layout = layout
        .grid
        .ok_or_else(|| CliError::Config(format!("{} holds no certified grid", bands_path.display())))?;
    let grid = Grid::from_layout(params, layout.step, layout.zero_index, layout.len)?;

    let csv_path = out.join(GRID_CSV);
    let text = fs::read_to_string(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    let bad = |line: usize, what: &str| CliError::Config(format!("{}:{line}: {what}", csv_path.display()));
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("x,V,dV,L_V,G_V,region") {
        return Err(bad(1, "unexpected header"));
    }
    let mut values = Vec::with_capacity(grid.len());
    for (k, line) in lines.enumerate() {
        let mut cols = line.split(',');
        let mut field = || cols.next().and_then(|c| c.trim().parse::<f64>().ok());
        let (Some(x), Some(v)) = (field(), field()) else {
            return Err(bad(k + 2, "expected numeric x and V"));
        };
        let i = values.len();
        if i >= grid.len() || (x - grid.x(i)).abs() > 1e-9 * grid.step() {
            return Err(bad(k + 2, "x does not match the grid in bands.json"));
        }
        values.push(v);
    }
    if values.len() != grid.len() {
        return Err(bad(values.len() + 1, "too few rows"));
    }
    Ok(ValueGrid::new(grid, values, GridKind::ValueV, params.boundary_exponent()))
}

#[derive(Debug, Serialize)]
struct Checks {
    hjb: bool,
    #[serde(rename = "T")]
    t: bool,
    envelope: bool,
    growth: bool,
    strategy: bool,
    oracle: bool,
    mc: bool,
}

#[derive(Debug, Serialize)]
struct VerifyFile {
    pass: bool,
    checks: Checks,
    scale: f64,
    hjb_sup: f64,
    tol_hjb: f64,
    #[serde(rename = "T_fixed_sup")]
    t_fixed_sup: Option<f64>,
    tol_t: f64,
    oracle_gap: Option<f64>,
    oracle_tol: f64,
    oracle_x_hi: f64,
    anchors: Vec<f64>,
    strategy_problems: Vec<String>,
    mc_table: Vec<DominanceRow>,
}

/// Upper end of the oracle grid: configured, or two claim-plus-ruin scales
/// above the top anchor.
fn oracle_x_hi(cfg: &RunConfig, params: &ModelParams, top: f64) -> f64 {
    cfg.oracle
        .x_hi
        .value()
        .unwrap_or(top.max(0.0) + 2.0 * (params.claims.mean() + params.p / params.alpha))
}

fn probes(cfg: &RunConfig, strategy: Option<&BandStrategy>) -> Result<Vec<Probe>, CliError> {
    let mut out = Vec::new();
    for name in &cfg.sim.probe_strategies {
        let spec = ProbeSpec::parse(name)?;
        if spec.needs_solution() && strategy.is_none() {
            continue;
        }
        out.push(Probe {
            name: name.clone(),
            strategy: spec.resolve(strategy),
            optimal: spec == ProbeSpec::Optimal,
        });
    }
    Ok(out)
}

/// `verify`: re-derives every certificate from grid.csv alone and writes
/// verify.json. Fails with exit 4 unless every check passes.
pub fn run_verify(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let params = cfg.params()?;
    for name in &cfg.sim.probe_strategies {
        ProbeSpec::parse(name)?;
    }
    let v = load_value(&params, out)?;
    let report = hjb_residual_with(&params, &v, cfg.solver.tol_hjb);
    let scale = report.scale;

    let (strategy, mut problems) = match classify_regions(&params, &v, cfg.solver.tol_region) {
        Ok(s) => {
            let p = s.violations.clone();
            (Some(s), p)
        }
        Err(e) => (None, vec![e.to_string()]),
    };
    let well_formed = strategy.as_ref().is_some_and(|s| s.is_well_formed());
    if strategy.as_ref().is_some_and(|s| s.anchors.is_empty()) {
        problems.push("no anchor found".into());
    }
    let t_sup = match &strategy {
        Some(s) if well_formed => match t_fixed_sup(&params, &v, s) {
            Ok(t) => Some(t),
            Err(e) => {
                problems.push(e.to_string());
                None
            }
        },
        _ => None,
    };
    let usable = strategy.as_ref().filter(|_| well_formed);

    let top = usable.map_or(v.grid.x_hi(), |s| s.top);
    let ox = oracle_x_hi(cfg, &params, top);
    let oracle_gap = match oracle_grid(&params, ox, cfg.oracle.n)
        .and_then(|g| value_iteration_oracle(&params, &g, cfg.oracle.dt, cfg.oracle.max_iters))
    {
        Ok(o) => Some(
            (0..o.len())
                .map(|i| (o.values[i] - v.interp(o.x(i))).abs())
                .fold(0.0, f64::max),
        ),
        Err(e) => {
            problems.push(format!("oracle: {e}"));
            None
        }
    };

    let probes = probes(cfg, usable)?;
    let sim = SimConfig::new(&params, cfg.sim.n_paths, cfg.sim.seed, cfg.sim.tail_tol, top);
    let mc = dominance_check(&params, &v, &probes, &cfg.sim.x0_list, &sim, MC_TOL_REL * scale)?;

    let oracle_tol = ORACLE_TOL_REL * scale;
    let checks = Checks {
        hjb: report.hjb_ok(),
        t: t_sup.is_some_and(|t| t <= report.tol_t),
        envelope: report.envelope_ok,
        growth: report.growth_ok,
        strategy: well_formed,
        oracle: oracle_gap.is_some_and(|g| g <= oracle_tol),
        mc: mc.all_pass && probes.len() == cfg.sim.probe_strategies.len(),
    };
    let pass = checks.hjb && checks.t && checks.envelope && checks.growth && checks.strategy && checks.oracle && checks.mc;
    let failed: Vec<&str> = [
        ("hjb", checks.hjb),
        ("T", checks.t),
        ("envelope", checks.envelope),
        ("growth", checks.growth),
        ("strategy", checks.strategy),
        ("oracle", checks.oracle),
        ("mc", checks.mc),
    ]
    .iter()
    .filter(|(_, ok)| !ok)
    .map(|(n, _)| *n)
    .collect();
    let file = VerifyFile {
        pass,
        checks,
        scale,
        hjb_sup: report.hjb_sup,
        tol_hjb: report.tol_hjb,
        t_fixed_sup: t_sup,
        tol_t: report.tol_t,
        oracle_gap,
        oracle_tol,
        oracle_x_hi: ox,
        anchors: strategy.as_ref().map(|s| s.anchors.clone()).unwrap_or_default(),
        strategy_problems: problems,
        mc_table: mc.rows,
    };
    write_json(out, VERIFY_JSON, &file)?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Verification(format!("failed checks: {}", failed.join(", "))))
    }
}

/// `simulate`: one sim.csv row per start and probe.
pub fn run_simulate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let params = cfg.params()?;
    let specs = cfg
        .sim
        .probe_strategies
        .iter()
        .map(|s| ProbeSpec::parse(s))
        .collect::<Result<Vec<_>, _>>()?;
    let sol = if specs.iter().any(ProbeSpec::needs_solution) {
        Some(solve(cfg, &params)?)
    } else {
        None
    };
    let strategy = sol.as_ref().map(|s| &s.strategy);
    let top = strategy.map_or(0.0, |s| s.top);
    let sim = SimConfig::new(&params, cfg.sim.n_paths, cfg.sim.seed, cfg.sim.tail_tol, top);

    let mut csv = String::from("x0,strategy,mean,std_err,n,trunc_bound,ruin_fraction,capped_paths\n");
    for &x0 in &cfg.sim.x0_list {
        for (name, spec) in cfg.sim.probe_strategies.iter().zip(&specs) {
            let e = estimate_return(&params, &spec.resolve(strategy), x0, &sim)?;
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{}",
                num(x0),
                name.trim(),
                num(e.mean),
                num(e.std_err),
                e.n,
                num(e.trunc_bound),
                num(e.ruin_fraction),
                e.capped_paths
            );
        }
    }
    write(out, SIM_CSV, &csv)
}

/// `oracle`: the value-iteration reference on its own grid.
pub fn run_oracle(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let params = cfg.params()?;
    let x_hi = match cfg.oracle.x_hi.value() {
        Some(x) => x,
        None => oracle_x_hi(cfg, &params, solve(cfg, &params)?.strategy.top),
    };
    let g = oracle_grid(&params, x_hi, cfg.oracle.n)?;
    let o = value_iteration_oracle(&params, &g, cfg.oracle.dt, cfg.oracle.max_iters)?;
    let mut csv = String::from("x,V\n");
    for i in 0..o.len() {
        let _ = writeln!(csv, "{},{}", num(o.x(i)), num(o.values[i]));
    }
    write(out, ORACLE_CSV, &csv)
}
