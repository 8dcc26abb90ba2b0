//! Cutting of overlapping bridge arcs.
//!
//! Inside the two overlap windows the boundary may be pushed across the
//! symmetry line `y = 0`. The cut replaces every such node by its
//! projection onto the line (`ρ̃ = b0 = y0 / n0_y`) and zeroes the curvature
//! there; elsewhere the curve is left alone.

use crate::error::{Error, Result};
use crate::geometry::{
    geometry_from_derivatives, graph_to_curve_unchecked, BoundaryField, ClosedCurve, CurveGeometry,
    FieldKind, NormalGraph, ReferenceFrame,
};
use crate::spectral;

/// Default bound `μ` for the Lipschitz check.
pub const DEFAULT_LIPSCHITZ_BOUND: f64 = 0.25;

/// Smallest opening used for solver curves.
pub const MIN_OPENING: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct CutResult {
    pub rho_tilde: NormalGraph,
    pub mask: Vec<bool>,
    pub curve_tilde: ClosedCurve,
    /// Reference arclength whose image lies on the wrong side of `y = 0`.
    pub overlap_measure: f64,
    /// Largest distance into the wrong side.
    pub overlap_depth: f64,
    pub lipschitz_norm: f64,
}

impl CutResult {
    pub fn any_cut(&self) -> bool {
        self.mask.iter().any(|&m| m)
    }
}

/// Side sign of each window: the upper window must stay at `y >= 0`.
fn side(window: usize) -> f64 {
    if window == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Nodes inside the windows that lie on the wrong side of `y = 0`.
pub fn detect_o(frame: &ReferenceFrame, curve: &ClosedCurve) -> Vec<bool> {
    let mut mask = vec![false; curve.len()];
    for (k, w) in frame.windows.iter().enumerate() {
        for i in w.indices() {
            mask[i] = side(k) * curve.y[i] < 0.0;
        }
    }
    mask
}

/// Length of the part of the windows whose image has `side * y < 0`, with
/// crossings located by linear interpolation, and the deepest penetration.
///
/// Length is measured along the reference polyline, so the steep flanks of
/// a pushed bridge count with their footprint only.
fn overlap_extent(frame: &ReferenceFrame, curve: &ClosedCurve) -> (f64, f64) {
    let base = &frame.base;
    let (mut measure, mut depth) = (0.0, 0.0f64);
    for (k, w) in frame.windows.iter().enumerate() {
        let g = |i: usize| side(k) * curve.y[i];
        for i in w.indices() {
            depth = depth.max(-g(i));
            if i + 1 >= w.end {
                continue;
            }
            let (a, b) = (g(i), g(i + 1));
            let len = (base.x[i + 1] - base.x[i]).hypot(base.y[i + 1] - base.y[i]);
            let frac = if a < 0.0 && b < 0.0 {
                1.0
            } else if a < 0.0 {
                a / (a - b)
            } else if b < 0.0 {
                b / (b - a)
            } else {
                0.0
            };
            measure += frac * len;
        }
    }
    (measure, depth)
}

pub fn cut(frame: &ReferenceFrame, rho: &NormalGraph) -> Result<CutResult> {
    let n = frame.len();
    if rho.values.len() != n {
        return Err(Error::InvalidInput(
            "graph length differs from frame".into(),
        ));
    }
    let uncut = graph_to_curve_unchecked(frame, &rho.values);
    let mask = detect_o(frame, &uncut);
    let b0 = &frame.bridge_profile;
    let mut rt = rho.values.clone();
    for i in 0..n {
        if mask[i] {
            rt[i] = b0[i];
        }
    }
    // the same cut through the min formula, in the shifted variable
    for w in frame.windows.iter() {
        for i in w.indices() {
            let via_min = (rho.values[i] - b0[i]).min(0.0);
            let direct = rt[i] - b0[i];
            if via_min != direct && !(mask[i] && via_min == 0.0) {
                return Err(Error::InvalidInput(format!(
                    "cut disagrees with min formula at node {i}: {direct} vs {via_min}"
                )));
            }
        }
    }
    let mut curve_tilde = graph_to_curve_unchecked(frame, &rt);
    for i in 0..n {
        if mask[i] {
            // exact projection; avoids rounding in x0 - b0 n0
            curve_tilde.y[i] = 0.0;
        }
    }
    let (overlap_measure, overlap_depth) = overlap_extent(frame, &uncut);
    let rho_tilde = NormalGraph::new(rt);
    let lipschitz_norm = lipschitz_norm(&rho_tilde);
    Ok(CutResult {
        rho_tilde,
        mask,
        curve_tilde,
        overlap_measure,
        overlap_depth,
        lipschitz_norm,
    })
}

/// `max(‖ρ‖∞, max |Δρ / Δs|)` over all nodes.
pub fn lipschitz_norm(rho: &NormalGraph) -> f64 {
    let n = rho.values.len();
    let ds = 2.0 * std::f64::consts::PI / n as f64;
    let mut lip = 0.0f64;
    for i in 0..n {
        let d = (rho.values[(i + 1) % n] - rho.values[i]).abs() / ds;
        lip = lip.max(d);
    }
    lip.max(rho.sup_norm())
}

pub fn lipschitz_check(result: &CutResult, mu: f64) -> (f64, bool) {
    (result.lipschitz_norm, result.lipschitz_norm <= mu)
}

/// `H̃`: the curvature with the cut nodes set to zero.
pub fn cut_curvature(h: &BoundaryField, mask: &[bool]) -> Result<BoundaryField> {
    if h.len() != mask.len() {
        return Err(Error::InvalidInput("mask length differs from field".into()));
    }
    BoundaryField::new(
        FieldKind::CutCurvature,
        h.values
            .iter()
            .zip(mask)
            .map(|(&v, &m)| if m { 0.0 } else { v })
            .collect(),
    )
}

/// Opening width used for the solver: twice the node spacing on the
/// bridges, but at least [`MIN_OPENING`].
pub fn opening_width(frame: &ReferenceFrame) -> f64 {
    let b = &frame.base;
    let n = b.len();
    let (mut sum, mut count) = (0.0, 0usize);
    for w in frame.bridges.iter() {
        for i in w.indices() {
            let j = (i + 1) % n;
            sum += (b.x[j] - b.x[i]).hypot(b.y[j] - b.y[i]);
            count += 1;
        }
    }
    if count == 0 {
        return MIN_OPENING;
    }
    (2.0 * sum / count as f64).max(MIN_OPENING)
}

/// Lift `t ∈ [0, 1)` to `[½, 1)`; matches the identity to second order at 1.
fn lift(t: f64) -> (f64, f64, f64) {
    (
        0.5 + t.powi(3) - 0.5 * t.powi(4),
        3.0 * t * t - 2.0 * t.powi(3),
        6.0 * t - 6.0 * t * t,
    )
}

/// Curve handed to the Robin solver: the cut curve with the two halves of
/// the bridge pulled apart to a gap of `eta`, together with its derivatives.
///
/// Derivatives come from the uncut curve (smooth) off the mask and from the
/// flat line on it, so the kinks of the cut do not produce oscillations.
pub fn solver_curve(
    frame: &ReferenceFrame,
    uncut: &ClosedCurve,
    result: &CutResult,
    eta: f64,
) -> Result<(ClosedCurve, CurveGeometry)> {
    let n = uncut.len();
    let x = result.curve_tilde.x.clone();
    let mut y = result.curve_tilde.y.clone();
    let dx = spectral::derivative(&uncut.x, 1);
    let mut dy = spectral::derivative(&uncut.y, 1);
    let ddx = spectral::derivative(&uncut.x, 2);
    let mut ddy = spectral::derivative(&uncut.y, 2);
    for i in 0..n {
        if result.mask[i] {
            dy[i] = 0.0;
            ddy[i] = 0.0;
        }
    }
    let centre = bridge_centre(frame);
    if let Some(xc) = centre {
        for i in 1..n {
            if i == n / 2 || (x[i] - xc).abs() >= 1.0 {
                continue;
            }
            let sign = if i < n / 2 { 1.0 } else { -1.0 };
            let t = sign * y[i] / eta;
            if (0.0..1.0).contains(&t) {
                let (p, dp, ddp) = lift(t);
                y[i] = sign * eta * p;
                ddy[i] = ddp * dy[i] * dy[i] / (sign * eta) + dp * ddy[i];
                dy[i] *= dp;
            }
        }
    }
    let geom = geometry_from_derivatives(dx, dy, &ddx, &ddy)?;
    Ok((ClosedCurve::from_raw(x, y), geom))
}

fn bridge_centre(frame: &ReferenceFrame) -> Option<f64> {
    let idx: Vec<usize> = frame.bridges.iter().flat_map(|w| w.indices()).collect();
    if idx.is_empty() {
        return None;
    }
    Some(idx.iter().map(|&i| frame.base.x[i]).sum::<f64>() / idx.len() as f64)
}
