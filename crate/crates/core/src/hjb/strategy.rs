use serde::Serialize;

use super::residual::{node_operators, scale_of, RegionCounts};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::odeint::ValueGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Label {
    A,
    B,
    C,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::A => "A",
            Label::B => "B",
            Label::C => "C",
        }
    }
}

/// One piece of the partition of `(critical, x_hi]`.
///
/// A segments are the single point `lo == hi`. B segments are `(lo, hi]`
/// with `lo` an anchor. C segments are `(lo, hi]`, or `(lo, hi)` when an
/// anchor sits at `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub label: Label,
}

/// Band strategy: hold the reserve at anchors, pay lumps down to the anchor
/// below on B, pay nothing on C. Above `x_hi` everything is paid down to
/// `top`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandStrategy {
    pub critical: f64,
    pub anchors: Vec<f64>,
    pub top: f64,
    pub segments: Vec<Segment>,
    /// Structural invariants that did not hold; empty for a well-formed strategy.
    pub violations: Vec<String>,
    #[serde(skip)]
    pub labels: Vec<Label>,
}

impl BandStrategy {
    /// Single barrier at `b`: continuation below, lump above.
    pub fn barrier(critical: f64, b: f64) -> Self {
        Self {
            critical,
            anchors: vec![b],
            top: b,
            segments: vec![
                Segment {
                    lo: critical,
                    hi: b,
                    label: Label::C,
                },
                Segment {
                    lo: b,
                    hi: b,
                    label: Label::A,
                },
                Segment {
                    lo: b,
                    hi: f64::INFINITY,
                    label: Label::B,
                },
            ],
            violations: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn is_well_formed(&self) -> bool {
        self.violations.is_empty() && !self.anchors.is_empty()
    }

    pub fn region_counts(&self) -> RegionCounts {
        let mut c = RegionCounts::default();
        for l in &self.labels {
            match l {
                Label::A => c.a += 1,
                Label::B => c.b += 1,
                Label::C => c.c += 1,
            }
        }
        c
    }

    pub fn label_at(&self, x: f64) -> Label {
        if self.anchors.contains(&x) {
            return Label::A;
        }
        if x > self.top {
            // above the last segment the tail is B by construction
            if let Some(last) = self.segments.last() {
                if x > last.hi {
                    return Label::B;
                }
            }
        }
        for s in &self.segments {
            if s.label == Label::B && x > s.lo && x <= s.hi {
                return Label::B;
            }
        }
        Label::C
    }

    /// Anchor a B point is paid down to.
    pub fn anchor_below(&self, x: f64) -> Option<f64> {
        self.anchors.iter().rev().copied().find(|&a| a <= x)
    }

    /// First anchor at or above `x`.
    pub fn anchor_above(&self, x: f64) -> Option<f64> {
        self.anchors.iter().copied().find(|&a| a >= x)
    }
}

/// Label every node and assemble the strategy.
///
/// Nodes with `V' <= 1 + tol_region` form slope-one runs. In each run the
/// node with the largest `G_V` is the anchor; run nodes to its right are B,
/// to its left C. A run whose anchor has `|G_V| > tol_region * scale` is
/// recorded as a violation, as are a top that is not B and, when no dividends
/// are paid at negative reserve, any A or B node below zero.
pub fn classify_regions(params: &ModelParams, v: &ValueGrid, tol_region: f64) -> Result<BandStrategy> {
    let (_, g) = node_operators(params, v);
    classify_with(params, v, &g, tol_region)
}

pub(crate) fn classify_with(params: &ModelParams, v: &ValueGrid, g: &[f64], tol_region: f64) -> Result<BandStrategy> {
    let n = v.len();
    let scale = scale_of(v);
    let mut labels = vec![Label::C; n];
    let mut anchors = Vec::new();
    let mut violations = Vec::new();

    for i in 0..n {
        if v.deriv[i] < 1.0 - tol_region {
            return Err(Error::Classification {
                x: v.x(i),
                reason: format!("slope {} below 1", v.deriv[i]),
            });
        }
    }

    let mut i = 0;
    while i < n {
        if v.deriv[i] > 1.0 + tol_region {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && v.deriv[i] <= 1.0 + tol_region {
            i += 1;
        }
        let end = i; // exclusive
        let mut k = start;
        for j in start..end {
            if g[j] > g[k] {
                k = j;
            }
        }
        if g[k].abs() > tol_region * scale {
            violations.push(format!(
                "slope-one run [{}, {}] has max G = {:e} away from zero",
                v.x(start),
                v.x(end - 1),
                g[k]
            ));
            continue;
        }
        labels[k] = Label::A;
        for l in labels.iter_mut().take(end).skip(k + 1) {
            *l = Label::B;
        }
        anchors.push(v.x(k));
    }

    if labels[n - 1] == Label::C {
        violations.push("top of the grid is not a B region".into());
    }
    if params.no_negative_dividends() {
        if let Some(j) = (0..n).find(|&j| v.x(j) < 0.0 && labels[j] != Label::C) {
            violations.push(format!(
                "{} point at x = {} below zero although alpha > lambda + delta",
                labels[j].as_str(),
                v.x(j)
            ));
        }
    }

    let segments = segments_from_labels(v, &labels, params.critical_level());
    let top = anchors.last().copied().unwrap_or(f64::NAN);
    Ok(BandStrategy {
        critical: params.critical_level(),
        anchors,
        top,
        segments,
        violations,
        labels,
    })
}

fn segments_from_labels(v: &ValueGrid, labels: &[Label], critical: f64) -> Vec<Segment> {
    let n = labels.len();
    let mut out: Vec<Segment> = Vec::new();
    let mut lo = critical;
    let mut i = 0;
    while i < n {
        let label = labels[i];
        let mut j = i;
        while j + 1 < n && labels[j + 1] == label && label != Label::A {
            j += 1;
        }
        match label {
            Label::A => {
                if let Some(prev) = out.last_mut() {
                    if prev.label == Label::C {
                        prev.hi = v.x(i);
                    }
                }
                out.push(Segment {
                    lo: v.x(i),
                    hi: v.x(i),
                    label,
                });
                lo = v.x(i);
            }
            _ => {
                out.push(Segment { lo, hi: v.x(j), label });
                lo = v.x(j);
            }
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClaimDistribution, Grid};
    use crate::odeint::GridKind;

    fn degenerate() -> ModelParams {
        ModelParams::new(1.0, 0.5, 0.05, 1.0, 0.1, ClaimDistribution::PointMassZero)
    }

    fn grid_of(m: &ModelParams, f: impl Fn(f64) -> f64) -> ValueGrid {
        let g = Grid::new(m, 1e-6, 1e-3, 2.0).unwrap();
        let v = g.nodes().map(f).collect();
        ValueGrid::new(g, v, GridKind::ValueV, m.boundary_exponent())
    }

    #[test]
    fn degenerate_has_single_anchor_at_zero() {
        let m = degenerate();
        let v = grid_of(&m, |x| if x <= 0.0 { 10.0 * (1.0 + x).powf(0.1) } else { x + 10.0 });
        let s = classify_regions(&m, &v, 1e-3).unwrap();
        assert_eq!(s.anchors, vec![0.0]);
        assert!(s.violations.is_empty(), "{:?}", s.violations);
        let labels: Vec<Label> = s.segments.iter().map(|s| s.label).collect();
        assert_eq!(labels, vec![Label::C, Label::A, Label::B]);
        assert_eq!(s.segments[0].lo, -1.0);
        assert_eq!(s.segments[0].hi, 0.0);
        assert_eq!(s.segments[2].hi, v.grid.x_hi());
        assert_eq!(s.label_at(-0.5), Label::C);
        assert_eq!(s.label_at(0.0), Label::A);
        assert_eq!(s.label_at(0.7), Label::B);
        assert_eq!(s.label_at(50.0), Label::B);
        assert_eq!(s.anchor_below(0.7), Some(0.0));
        assert_eq!(s.anchor_above(-0.3), Some(0.0));
    }

    #[test]
    fn steep_convex_value_is_all_continuation() {
        let m = degenerate();
        let v = grid_of(&m, |x| 30.0 + 3.0 * (x + 1.0) + (x + 1.0).powi(2));
        let s = classify_regions(&m, &v, 1e-3).unwrap();
        assert!(s.labels.iter().all(|&l| l == Label::C));
        assert!(s.anchors.is_empty());
        assert!(!s.is_well_formed());
    }

    #[test]
    fn slope_below_one_is_an_error() {
        let m = degenerate();
        let v = grid_of(&m, |x| 10.0 + 0.5 * x);
        assert!(matches!(
            classify_regions(&m, &v, 1e-3),
            Err(Error::Classification { .. })
        ));
    }

    #[test]
    fn barrier_strategy_labels() {
        let s = BandStrategy::barrier(-1.0, 2.0);
        assert_eq!(s.label_at(1.0), Label::C);
        assert_eq!(s.label_at(2.0), Label::A);
        assert_eq!(s.label_at(2.5), Label::B);
        assert_eq!(s.anchor_below(7.0), Some(2.0));
    }
}
