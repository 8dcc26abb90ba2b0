//! Periodic sampled curves, their differential geometry and normal graphs
//! over a fixed reference curve.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intersect;
use crate::spectral::{self, TrigInterpolant};

/// Closed planar curve sampled at `s_i = 2π i / N`, counterclockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedCurve {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl ClosedCurve {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidInput("coordinate length mismatch".into()));
        }
        if x.len() < 4 || x.len() % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "node count must be even and >= 4, got {}",
                x.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite node position".into()));
        }
        let c = ClosedCurve { x, y };
        if c.signed_area() <= 0.0 {
            return Err(Error::InvalidInput(
                "curve must be positively oriented".into(),
            ));
        }
        Ok(c)
    }

    /// Builds a curve without checking orientation (used for intermediate,
    /// possibly self-overlapping shapes).
    pub fn from_raw(x: Vec<f64>, y: Vec<f64>) -> Self {
        debug_assert_eq!(x.len(), y.len());
        ClosedCurve { x, y }
    }

    pub fn from_fn(n: usize, f: impl Fn(f64) -> (f64, f64)) -> Result<Self> {
        let (x, y) = (0..n).map(|i| f(param(i, n))).unzip();
        ClosedCurve::new(x, y)
    }

    pub fn circle(n: usize, center: (f64, f64), radius: f64) -> Result<Self> {
        ClosedCurve::from_fn(n, |s| {
            (center.0 + radius * s.cos(), center.1 + radius * s.sin())
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn point(&self, i: usize) -> (f64, f64) {
        (self.x[i], self.y[i])
    }

    /// Shoelace area of the polygon through the nodes.
    pub fn signed_area(&self) -> f64 {
        let n = self.len();
        let mut a = 0.0;
        for i in 0..n {
            let j = (i + 1) % n;
            a += self.x[i] * self.y[j] - self.x[j] * self.y[i];
        }
        0.5 * a
    }

    pub fn polygon_length(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| {
                let j = (i + 1) % n;
                (self.x[j] - self.x[i]).hypot(self.y[j] - self.y[i])
            })
            .sum()
    }

    /// Spectrally accurate length `∮ |F'| ds`.
    pub fn length(&self) -> Result<f64> {
        let g = self.geometry()?;
        Ok(g.speed.iter().sum::<f64>() * 2.0 * PI / self.len() as f64)
    }

    pub fn geometry(&self) -> Result<CurveGeometry> {
        tangent_normal_curvature(self)
    }

    /// Winding-number test against the node polygon.
    pub fn contains(&self, p: (f64, f64)) -> bool {
        let n = self.len();
        let mut wn = 0i32;
        for i in 0..n {
            let j = (i + 1) % n;
            let (x0, y0) = (self.x[i], self.y[i]);
            let (x1, y1) = (self.x[j], self.y[j]);
            let cross = (x1 - x0) * (p.1 - y0) - (p.0 - x0) * (y1 - y0);
            if y0 <= p.1 {
                if y1 > p.1 && cross > 0.0 {
                    wn += 1;
                }
            } else if y1 <= p.1 && cross < 0.0 {
                wn -= 1;
            }
        }
        wn != 0
    }

    /// Mirror image `(x, y) -> (x, -y)` with the parameter reversed so that
    /// orientation is preserved.
    pub fn mirrored(&self) -> ClosedCurve {
        let n = self.len();
        let x = (0..n).map(|i| self.x[(n - i) % n]).collect();
        let y = (0..n).map(|i| -self.y[(n - i) % n]).collect();
        ClosedCurve::from_raw(x, y)
    }

    pub fn to_csv(&self) -> String {
        let n = self.len();
        let mut out = String::from("s,x,y\n");
        for i in 0..n {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e}",
                param(i, n),
                self.x[i],
                self.y[i]
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty curve file".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let xi = cols.iter().position(|c| *c == "x");
        let yi = cols.iter().position(|c| *c == "y");
        let (Some(xi), Some(yi)) = (xi, yi) else {
            return Err(Error::InvalidInput(
                "curve csv needs x and y columns".into(),
            ));
        };
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let parse = |k: usize| -> Result<f64> {
                f.get(k)
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidInput(format!("bad value on line {}", ln + 2)))
            };
            x.push(parse(xi)?);
            y.push(parse(yi)?);
        }
        ClosedCurve::new(x, y)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        ClosedCurve::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Grid parameter `s_i`.
pub fn param(i: usize, n: usize) -> f64 {
    2.0 * PI * i as f64 / n as f64
}

/// Derived pointwise geometry of a sampled curve.
#[derive(Debug, Clone)]
pub struct CurveGeometry {
    /// `F'`
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    /// `|F'|`
    pub speed: Vec<f64>,
    /// unit tangent
    pub tx: Vec<f64>,
    pub ty: Vec<f64>,
    /// inner unit normal, tangent rotated by +90°
    pub nx: Vec<f64>,
    pub ny: Vec<f64>,
    pub curvature: Vec<f64>,
}

/// Unit tangent, inner normal and curvature by spectral differentiation.
pub fn tangent_normal_curvature(curve: &ClosedCurve) -> Result<CurveGeometry> {
    let dx = spectral::derivative(&curve.x, 1);
    let dy = spectral::derivative(&curve.y, 1);
    let ddx = spectral::derivative(&curve.x, 2);
    let ddy = spectral::derivative(&curve.y, 2);
    geometry_from_derivatives(dx, dy, &ddx, &ddy)
}

pub(crate) fn geometry_from_derivatives(
    dx: Vec<f64>,
    dy: Vec<f64>,
    ddx: &[f64],
    ddy: &[f64],
) -> Result<CurveGeometry> {
    let n = dx.len();
    let mut speed = Vec::with_capacity(n);
    let mut tx = Vec::with_capacity(n);
    let mut ty = Vec::with_capacity(n);
    let mut curvature = Vec::with_capacity(n);
    for i in 0..n {
        let v = dx[i].hypot(dy[i]);
        if !v.is_finite() || v <= 1e-14 {
            return Err(Error::InvalidInput(format!(
                "degenerate parameterization at node {i}"
            )));
        }
        speed.push(v);
        tx.push(dx[i] / v);
        ty.push(dy[i] / v);
        curvature.push((dx[i] * ddy[i] - dy[i] * ddx[i]) / (v * v * v));
    }
    let nx = ty.iter().map(|t| -t).collect();
    let ny = tx.clone();
    Ok(CurveGeometry {
        dx,
        dy,
        speed,
        tx,
        ty,
        nx,
        ny,
        curvature,
    })
}

/// Which scalar a [`BoundaryField`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    Temperature,
    Curvature,
    CutCurvature,
    Lambda,
    Density,
}

/// One scalar per curve node.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryField {
    pub kind: FieldKind,
    pub values: Vec<f64>,
}

impl BoundaryField {
    pub fn new(kind: FieldKind, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite {kind:?} field")));
        }
        Ok(BoundaryField { kind, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Half-open node index range `[start, end)`; never wraps past node 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub const EMPTY: Window = Window { start: 0, end: 0 };

    pub fn new(start: usize, end: usize) -> Self {
        Window { start, end }
    }

    pub fn contains(&self, i: usize) -> bool {
        i >= self.start && i < self.end
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }
}

/// Default bound on `|b0|` inside the overlap windows.
pub const DEFAULT_WINDOW_FLATNESS: f64 = 0.1;

/// Fixed reference curve `F0` with tubular radius and overlap windows.
#[derive(Debug, Clone)]
pub struct ReferenceFrame {
    pub base: ClosedCurve,
    pub geom: CurveGeometry,
    pub tubular_radius: f64,
    /// Overlap windows on the upper (`[0]`) and lower (`[1]`) half.
    pub windows: [Window; 2],
    /// Flat contact parts inside the windows.
    pub bridges: [Window; 2],
    /// `y0 / n0²` on window nodes, zero elsewhere.
    pub bridge_profile: Vec<f64>,
}

impl ReferenceFrame {
    /// Frame without overlap windows (plain embedded reference).
    pub fn plain(base: ClosedCurve) -> Result<Self> {
        let geom = base.geometry()?;
        let a0 = estimate_tubular_radius(&base, &geom, &[Window::EMPTY; 2]);
        let n = base.len();
        Ok(ReferenceFrame {
            base,
            geom,
            tubular_radius: a0,
            windows: [Window::EMPTY; 2],
            bridges: [Window::EMPTY; 2],
            bridge_profile: vec![0.0; n],
        })
    }

    /// Frame with overlap windows; checks the window invariants.
    pub fn with_windows(
        base: ClosedCurve,
        windows: [Window; 2],
        bridges: [Window; 2],
        flatness: f64,
    ) -> Result<Self> {
        let geom = base.geometry()?;
        let n = base.len();
        for w in windows.iter() {
            if w.end > n {
                return Err(Error::InvalidInput("window exceeds node range".into()));
            }
        }
        let mut b0 = vec![0.0; n];
        for (k, w) in windows.iter().enumerate() {
            let sign = if k == 0 { 1.0 } else { -1.0 };
            for i in w.indices() {
                if geom.ny[i] * sign <= 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "window {k}: normal y-component has wrong sign at node {i}"
                    )));
                }
                if geom.dx[i] * sign <= 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "window {k}: x0' has wrong sign at node {i}"
                    )));
                }
                b0[i] = base.y[i] / geom.ny[i];
            }
        }
        for w in windows.iter() {
            for i in w.indices() {
                if b0[i].abs() > flatness {
                    return Err(Error::InvalidInput(format!(
                        "|b0| = {} exceeds {flatness} at node {i}",
                        b0[i].abs()
                    )));
                }
            }
        }
        let a0 = estimate_tubular_radius(&base, &geom, &windows);
        Ok(ReferenceFrame {
            base,
            geom,
            tubular_radius: a0,
            windows,
            bridges,
            bridge_profile: b0,
        })
    }

    pub fn len(&self) -> usize {
        self.base.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.is_empty()
    }

    /// `Some(0)` on the upper window, `Some(1)` on the lower one.
    pub fn window_of(&self, i: usize) -> Option<usize> {
        self.windows.iter().position(|w| w.contains(i))
    }

    pub fn in_bridge(&self, i: usize) -> bool {
        self.bridges.iter().any(|w| w.contains(i))
    }

    pub fn to_file(&self) -> FrameFile {
        let mut b0 = Vec::new();
        for w in self.windows.iter() {
            for i in w.indices() {
                b0.push((i, self.bridge_profile[i]));
            }
        }
        FrameFile {
            nodes: self.len(),
            tubular_radius: self.tubular_radius,
            windows: self.windows,
            bridges: self.bridges,
            b0,
        }
    }

    /// Rebuilds a frame from its serialized windows over `base`.
    pub fn from_file(base: ClosedCurve, file: &FrameFile) -> Result<Self> {
        if file.nodes != base.len() {
            return Err(Error::InvalidInput(
                "frame file node count differs from curve".into(),
            ));
        }
        let mut f = ReferenceFrame::with_windows(base, file.windows, file.bridges, f64::INFINITY)?;
        f.tubular_radius = file.tubular_radius;
        Ok(f)
    }
}

/// Serialized form of a [`ReferenceFrame`] (`frame.json`).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FrameFile {
    pub nodes: usize,
    pub tubular_radius: f64,
    pub windows: [Window; 2],
    pub bridges: [Window; 2],
    pub b0: Vec<(usize, f64)>,
}

/// `min(1 / max|H|, minGap / 2)` where pairs of nodes that both lie in
/// overlap windows are ignored: the two halves are tubes of their own.
pub fn estimate_tubular_radius(
    curve: &ClosedCurve,
    geom: &CurveGeometry,
    windows: &[Window; 2],
) -> f64 {
    let hmax = geom.curvature.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let in_win = |i: usize| windows.iter().any(|w| w.contains(i));
    let gap = intersect::min_gap_filtered(curve, |i, j| !(in_win(i) && in_win(j)));
    let mut a0 = if hmax > 0.0 {
        1.0 / hmax
    } else {
        f64::INFINITY
    };
    if gap.is_finite() {
        a0 = a0.min(0.5 * gap);
    }
    a0
}

/// Scalar field `ρ` over a reference frame: `F = F0 - ρ N0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalGraph {
    pub values: Vec<f64>,
}

impl NormalGraph {
    pub fn zeros(n: usize) -> Self {
        NormalGraph {
            values: vec![0.0; n],
        }
    }

    pub fn new(values: Vec<f64>) -> Self {
        NormalGraph { values }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `F_i = F0_i - ρ_i N0_i`, rejecting graphs outside `|ρ| ≤ a0/4`.
pub fn graph_to_curve(frame: &ReferenceFrame, rho: &NormalGraph) -> Result<ClosedCurve> {
    let bound = 0.25 * frame.tubular_radius;
    if rho.values.len() != frame.len() {
        return Err(Error::InvalidInput(
            "graph length differs from frame".into(),
        ));
    }
    let sup = rho.sup_norm();
    if sup > bound {
        return Err(Error::RebaselineRequired(format!(
            "|rho| = {sup:.3e} exceeds a0/4 = {bound:.3e}"
        )));
    }
    Ok(graph_to_curve_unchecked(frame, &rho.values))
}

pub(crate) fn graph_to_curve_unchecked(frame: &ReferenceFrame, rho: &[f64]) -> ClosedCurve {
    let g = &frame.geom;
    let b = &frame.base;
    let x = (0..rho.len()).map(|i| b.x[i] - rho[i] * g.nx[i]).collect();
    let y = (0..rho.len()).map(|i| b.y[i] - rho[i] * g.ny[i]).collect();
    ClosedCurve::from_raw(x, y)
}

/// `ρ_i = (F0_i - F_i | N0_i)`.
pub fn curve_to_graph(frame: &ReferenceFrame, curve: &ClosedCurve) -> Result<NormalGraph> {
    if curve.len() != frame.len() {
        return Err(Error::InvalidInput(
            "curve length differs from frame".into(),
        ));
    }
    let g = &frame.geom;
    let b = &frame.base;
    let a0 = frame.tubular_radius;
    let mut rho = Vec::with_capacity(curve.len());
    for i in 0..curve.len() {
        let ex = b.x[i] - curve.x[i];
        let ey = b.y[i] - curve.y[i];
        let r = ex * g.nx[i] + ey * g.ny[i];
        let tang = ex * g.tx[i] + ey * g.ty[i];
        if r.abs() > a0 || tang.abs() > 0.25 * a0 {
            return Err(Error::RebaselineRequired(format!(
                "node {i} lies outside the tubular neighbourhood"
            )));
        }
        rho.push(r);
    }
    Ok(NormalGraph::new(rho))
}

/// Resamples a curve to `n_out` nodes equispaced in arclength.
pub fn resample_arclength(curve: &ClosedCurve, n_out: usize) -> Result<ClosedCurve> {
    let geom = curve.geometry()?;
    let n = curve.len();
    let (periodic, mean) = spectral::antiderivative(&geom.speed);
    let total = mean * 2.0 * PI;
    let hmax = geom.curvature.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let needed = 16.0 * total * hmax / (2.0 * PI);
    if (n_out as f64) < needed || n_out < 4 || n_out % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "{n_out} nodes cannot resolve the curve (need at least {:.0})",
            needed.ceil()
        )));
    }
    let arc = TrigInterpolant::new(&periodic);
    let xi = TrigInterpolant::new(&curve.x);
    let yi = TrigInterpolant::new(&curve.y);
    let arclen = |s: f64| {
        let (p, dp) = arc.eval(s);
        (mean * s + p, mean + dp)
    };
    let mut x = Vec::with_capacity(n_out);
    let mut y = Vec::with_capacity(n_out);
    let mut s = 0.0;
    for k in 0..n_out {
        let target = total * k as f64 / n_out as f64;
        // s from the previous node is a good initial guess
        if k > 0 {
            s += 2.0 * PI / n_out as f64;
        }
        let mut converged = false;
        for _ in 0..50 {
            let (l, dl) = arclen(s);
            let step = (l - target) / dl;
            s -= step;
            if step.abs() < 1e-14 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NoConvergence("arclength inversion".into()));
        }
        x.push(xi.eval(s).0);
        y.push(yi.eval(s).0);
    }
    let _ = n;
    ClosedCurve::new(x, y)
}
