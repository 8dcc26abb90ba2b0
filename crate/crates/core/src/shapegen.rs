//! Initial shapes: a ring-shaped liquid region around a large solid island,
//! cut by a thin solid bridge whose two sides are flattened caps of unit
//! disks `B((x0, ±(1 + η)), 1)`.
//!
//! The curve is built from its curvature: a piecewise constant profile is
//! mollified, integrated to a turning angle and a position, closed by a
//! small Newton correction of the two large radii, and finally sampled on a
//! parameterization that concentrates nodes near the bridge.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryField, ClosedCurve, FieldKind, ReferenceFrame, Window};
use crate::quadrature::bump_cdf;

/// Node density profile along arclength, peaked at the two bridge flats.
///
/// Density is `1 + Σ peak · sech²(d / width)` with `d` the arclength
/// distance to a flat center; zero peaks give plain arclength sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grading {
    pub flat_peak: f64,
    pub flat_width: f64,
    pub cap_peak: f64,
    pub cap_width: f64,
}

impl Default for Grading {
    fn default() -> Self {
        Grading {
            flat_peak: 30.0,
            flat_width: 0.25,
            cap_peak: 9.0,
            cap_width: 1.5,
        }
    }
}

impl Grading {
    pub fn uniform() -> Self {
        Grading {
            flat_peak: 0.0,
            flat_width: 1.0,
            cap_peak: 0.0,
            cap_width: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapeSpec {
    /// Radius of the large outer arc.
    pub radius: f64,
    /// Length of each flat bridge part.
    pub delta: f64,
    /// Abscissa of the bridge center.
    pub x0: f64,
    /// Mollifier half-width.
    pub zeta: f64,
    /// Half the vertical separation of the flats; 0 is the touching state.
    pub gap: f64,
    pub nodes: usize,
    pub grading: Grading,
}

impl Default for ShapeSpec {
    fn default() -> Self {
        ShapeSpec {
            radius: 10.0,
            delta: 0.2,
            x0: 9.0,
            zeta: 0.05,
            gap: 0.02,
            nodes: 1024,
            grading: Grading::default(),
        }
    }
}

impl ShapeSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if !(self.radius >= 4.0) {
            return bad(format!("radius {} < 4", self.radius));
        }
        if !(0.0..=0.5).contains(&self.delta) {
            return bad(format!("delta {} outside [0, 0.5]", self.delta));
        }
        if !(self.zeta > 0.0) {
            return bad("zeta must be positive".into());
        }
        if self.delta > 0.0 && self.zeta > 0.5 * self.delta + 1e-15 {
            return bad(format!("zeta {} exceeds delta/2", self.zeta));
        }
        if !(0.0..=0.1).contains(&self.gap) {
            return bad(format!("gap {} outside [0, 0.1]", self.gap));
        }
        if self.nodes < 64 || self.nodes % 2 != 0 {
            return bad(format!("node count {} must be even and >= 64", self.nodes));
        }
        if !self.x0.is_finite() {
            return bad("x0 must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PieceKind {
    InnerArc,
    UnitArc,
    Flat,
    OuterArc,
    Arc,
}

/// Constant-curvature piece; `turn` is the signed change of tangent angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub kind: PieceKind,
    pub length: f64,
    pub curvature: f64,
}

impl Piece {
    fn arc(kind: PieceKind, radius: f64, turn: f64) -> Piece {
        Piece {
            kind,
            length: radius * turn.abs(),
            curvature: turn.signum() / radius,
        }
    }

    pub fn turn(&self) -> f64 {
        self.length * self.curvature
    }
}

/// Piecewise constant curvature along arclength, starting at `anchor` with
/// tangent angle `heading`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureProfile {
    pub pieces: Vec<Piece>,
    pub anchor: (f64, f64),
    pub heading: f64,
    /// Arclength interval of the upper bridge flat (a point when `δ = 0`).
    pub bridge: Option<(f64, f64)>,
    /// Target height of the upper flat after closing.
    pub bridge_height: Option<f64>,
}

impl CurvatureProfile {
    /// Single circle of radius `r`, starting at `(r, 0)`.
    pub fn circle(r: f64) -> Self {
        CurvatureProfile {
            pieces: vec![Piece::arc(PieceKind::Arc, r, 2.0 * PI)],
            anchor: (r, 0.0),
            heading: 0.5 * PI,
            bridge: None,
            bridge_height: None,
        }
    }

    pub fn total_length(&self) -> f64 {
        self.pieces.iter().map(|p| p.length).sum()
    }

    pub fn total_turning(&self) -> f64 {
        self.pieces.iter().map(Piece::turn).sum()
    }

    /// Start arclength of every piece.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.pieces
            .iter()
            .map(|p| {
                let s = acc;
                acc += p.length;
                s
            })
            .collect()
    }

    pub fn value_at(&self, l: f64) -> f64 {
        let total = self.total_length();
        let l = l.rem_euclid(total);
        let mut acc = 0.0;
        for p in &self.pieces {
            if l < acc + p.length {
                return p.curvature;
            }
            acc += p.length;
        }
        self.pieces.last().map_or(0.0, |p| p.curvature)
    }

    fn shortest_piece(&self) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.length)
            .fold(f64::INFINITY, f64::min)
    }

    fn scale_radii(&self, outer: f64, inner: f64) -> CurvatureProfile {
        let mut p = self.clone();
        for piece in p.pieces.iter_mut() {
            let r = match piece.kind {
                PieceKind::OuterArc => outer,
                PieceKind::InnerArc => inner,
                _ => continue,
            };
            let turn = piece.turn();
            *piece = Piece::arc(piece.kind, r, turn);
        }
        // only the first inner arc precedes the bridge
        let shift = p.pieces[0].length - self.pieces[0].length;
        p.bridge = self.bridge.map(|(a, b)| (a + shift, b + shift));
        p
    }

    fn radii(&self) -> (f64, f64) {
        let find = |k: PieceKind| {
            self.pieces
                .iter()
                .find(|p| p.kind == k)
                .map(|p| 1.0 / p.curvature.abs())
                .unwrap_or(f64::NAN)
        };
        (find(PieceKind::OuterArc), find(PieceKind::InnerArc))
    }
}

/// Lays out the ring with its bridge: inner island arc, the two unit caps
/// with flats of length `δ`, and the outer arc of radius `R`. The caps are
/// tangent to both large circles, which share a center.
pub fn build_profile(spec: &ShapeSpec) -> Result<CurvatureProfile> {
    spec.validate()?;
    let r = spec.radius;
    let h = spec.gap + 1.0;
    let p2 = (r - 1.0).powi(2) - h * h;
    if p2 <= 0.0 {
        return Err(Error::InvalidSpec(
            "outer radius too small for the caps".into(),
        ));
    }
    let p = p2.sqrt();
    let q = p - spec.delta;
    if q <= 0.0 {
        return Err(Error::InvalidSpec("flat part does not fit".into()));
    }
    let r_inner = q.hypot(h) - 1.0;
    if r_inner <= 1.0 {
        return Err(Error::InvalidSpec("inner island degenerates".into()));
    }
    let alpha = h.atan2(p);
    let beta = h.atan2(q);

    let mut pieces = vec![Piece::arc(PieceKind::InnerArc, r_inner, -(PI - beta))];
    let flat = Piece {
        kind: PieceKind::Flat,
        length: spec.delta,
        curvature: 0.0,
    };
    let has_flat = spec.delta > 0.0;
    let cap_in = Piece::arc(PieceKind::UnitArc, 1.0, 0.5 * PI - beta);
    let cap_out = Piece::arc(PieceKind::UnitArc, 1.0, 0.5 * PI + alpha);
    let bridge_start = pieces[0].length + cap_in.length;
    if has_flat {
        pieces.extend([cap_in, flat, cap_out]);
    } else {
        pieces.push(Piece::arc(PieceKind::UnitArc, 1.0, PI + alpha - beta));
    }
    pieces.push(Piece::arc(PieceKind::OuterArc, r, 2.0 * PI - 2.0 * alpha));
    if has_flat {
        pieces.extend([cap_out, flat, cap_in]);
    } else {
        pieces.push(Piece::arc(PieceKind::UnitArc, 1.0, PI + alpha - beta));
    }
    pieces.push(Piece::arc(PieceKind::InnerArc, r_inner, -(PI - beta)));

    Ok(CurvatureProfile {
        pieces,
        anchor: (-r_inner, 0.0),
        heading: 0.5 * PI,
        bridge: Some((bridge_start, bridge_start + spec.delta)),
        bridge_height: Some(spec.gap),
    })
}

/// Mollified profile `J * φ_ζ` evaluated pointwise.
#[derive(Debug, Clone)]
pub struct MollifiedProfile<'a> {
    profile: &'a CurvatureProfile,
    zeta: f64,
    breaks: Vec<(f64, f64)>,
    total: f64,
}

impl<'a> MollifiedProfile<'a> {
    pub fn new(profile: &'a CurvatureProfile, zeta: f64) -> Result<Self> {
        if !(zeta > 0.0) {
            return Err(Error::InvalidInput(
                "mollifier width must be positive".into(),
            ));
        }
        if zeta > profile.shortest_piece() {
            return Err(Error::InvalidInput(format!(
                "mollifier width {zeta} exceeds the shortest constant piece"
            )));
        }
        let starts = profile.breakpoints();
        let n = profile.pieces.len();
        let mut breaks = Vec::new();
        for k in 0..n {
            let before = profile.pieces[(k + n - 1) % n].curvature;
            let jump = profile.pieces[k].curvature - before;
            if jump != 0.0 {
                breaks.push((starts[k], jump));
            }
        }
        Ok(MollifiedProfile {
            profile,
            zeta,
            breaks,
            total: profile.total_length(),
        })
    }

    pub fn eval(&self, l: f64) -> f64 {
        let mut v = self.profile.value_at(l);
        let l = l.rem_euclid(self.total);
        for &(b, jump) in &self.breaks {
            for image in [-self.total, 0.0, self.total] {
                let d = (l - b - image) / self.zeta;
                if d.abs() < 1.0 {
                    let step = if d > 0.0 { 1.0 } else { 0.0 };
                    v += jump * (bump_cdf(d) - step);
                }
            }
        }
        v
    }
}

/// Samples `J * φ_ζ` at `samples` uniform arclength positions.
pub fn mollify_profile(
    profile: &CurvatureProfile,
    zeta: f64,
    samples: usize,
) -> Result<BoundaryField> {
    let m = MollifiedProfile::new(profile, zeta)?;
    let h = profile.total_length() / samples as f64;
    BoundaryField::new(
        FieldKind::Curvature,
        (0..samples).map(|k| m.eval(k as f64 * h)).collect(),
    )
}

/// Curve integrated from curvature samples on a uniform arclength grid.
#[derive(Debug, Clone)]
pub struct IntegratedCurve {
    /// Positions at `ℓ_k = k L / M`, `k = 0..=M`.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub theta: Vec<f64>,
    pub length: f64,
    /// `G(L) - G(0)`.
    pub closure_defect: (f64, f64),
}

impl IntegratedCurve {
    pub fn defect_norm(&self) -> f64 {
        self.closure_defect.0.hypot(self.closure_defect.1)
    }

    /// Cubic Hermite interpolation using the exact unit tangents.
    pub fn at(&self, l: f64) -> (f64, f64) {
        let m = self.x.len() - 1;
        let h = self.length / m as f64;
        let k = ((l / h).floor() as isize).clamp(0, m as isize - 1) as usize;
        let t = (l - k as f64 * h) / h;
        let (h00, h10, h01, h11) = (
            2.0 * t * t * t - 3.0 * t * t + 1.0,
            t * t * t - 2.0 * t * t + t,
            -2.0 * t * t * t + 3.0 * t * t,
            t * t * t - t * t,
        );
        let (c0, s0) = (self.theta[k].cos(), self.theta[k].sin());
        let (c1, s1) = (self.theta[k + 1].cos(), self.theta[k + 1].sin());
        (
            h00 * self.x[k] + h10 * h * c0 + h01 * self.x[k + 1] + h11 * h * c1,
            h00 * self.y[k] + h10 * h * s0 + h01 * self.y[k + 1] + h11 * h * s1,
        )
    }

    pub fn translate(&mut self, dx: f64, dy: f64) {
        self.x.iter_mut().for_each(|v| *v += dx);
        self.y.iter_mut().for_each(|v| *v += dy);
    }

    /// The `M` grid samples as a closed curve (drops the duplicate endpoint).
    pub fn to_closed_curve(&self) -> Result<ClosedCurve> {
        let m = self.x.len() - 1;
        ClosedCurve::new(self.x[..m].to_vec(), self.y[..m].to_vec())
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Integrates curvature samples over `[0, length)` to a turning angle
/// (trapezoid) and a position (exact for piecewise linear angle).
pub fn integrate_curve(
    curvature: &BoundaryField,
    length: f64,
    anchor: (f64, f64),
    heading: f64,
) -> Result<IntegratedCurve> {
    let m = curvature.len();
    if m < 2 || !(length > 0.0) {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    let h = length / m as f64;
    let hv = &curvature.values;
    let mut theta = Vec::with_capacity(m + 1);
    theta.push(heading);
    for k in 0..m {
        let next = hv[(k + 1) % m];
        theta.push(theta[k] + 0.5 * h * (hv[k] + next));
    }
    let turning = theta[m] - theta[0];
    if (turning - 2.0 * PI).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!(
            "total turning {turning} differs from 2π"
        )));
    }
    // remove the quadrature residue so the tangent closes up exactly
    let scale = 2.0 * PI / turning;
    for t in theta.iter_mut() {
        *t = heading + (*t - heading) * scale;
    }
    let mut x = Vec::with_capacity(m + 1);
    let mut y = Vec::with_capacity(m + 1);
    x.push(anchor.0);
    y.push(anchor.1);
    for k in 0..m {
        let d = theta[k + 1] - theta[k];
        let mid = theta[k] + 0.5 * d;
        let f = h * sinc(0.5 * d);
        x.push(x[k] + f * mid.cos());
        y.push(y[k] + f * mid.sin());
    }
    let closure_defect = (x[m] - x[0], y[m] - y[0]);
    Ok(IntegratedCurve {
        x,
        y,
        theta,
        length,
        closure_defect,
    })
}

fn integrate_profile(
    profile: &CurvatureProfile,
    zeta: f64,
    samples: usize,
) -> Result<IntegratedCurve> {
    let field = mollify_profile(profile, zeta, samples)?;
    integrate_curve(
        &field,
        profile.total_length(),
        profile.anchor,
        profile.heading,
    )
}

fn bridge_center(profile: &CurvatureProfile) -> Option<f64> {
    profile.bridge.map(|(a, b)| 0.5 * (a + b))
}

fn closure_residual(profile: &CurvatureProfile, c: &IntegratedCurve) -> Vec<f64> {
    let mut r = vec![c.closure_defect.0, c.closure_defect.1];
    if let (Some(lc), Some(target)) = (bridge_center(profile), profile.bridge_height) {
        r.push(c.at(lc).1 - c.y[0] - target);
    }
    r
}

/// Closes a mollified profile by adjusting the outer and inner radii with a
/// Gauss–Newton iteration; the unit caps and flats are untouched.
pub fn close_correction(
    profile: &CurvatureProfile,
    zeta: f64,
    samples: usize,
) -> Result<(CurvatureProfile, IntegratedCurve)> {
    let curve = integrate_profile(profile, zeta, samples)?;
    if curve.defect_norm() >= 0.1 {
        return Err(Error::InvalidSpec(format!(
            "closure defect {:.3e} too large to correct",
            curve.defect_norm()
        )));
    }
    let res = closure_residual(profile, &curve);
    if res.iter().all(|v| v.abs() <= 1e-10) {
        return Ok((profile.clone(), curve));
    }
    let (mut ro, mut ri) = profile.radii();
    if !ro.is_finite() || !ri.is_finite() {
        return Err(Error::InvalidSpec(
            "profile has no adjustable arcs and does not close".into(),
        ));
    }
    let mut res = res;
    for _ in 0..50 {
        let fd = 1e-6;
        let mut jac = DMatrix::zeros(res.len(), 2);
        for (col, (dro, dri)) in [(fd, 0.0), (0.0, fd)].into_iter().enumerate() {
            let p = profile.scale_radii(ro + dro, ri + dri);
            let c = integrate_profile(&p, zeta, samples)?;
            let r = closure_residual(&p, &c);
            for k in 0..res.len() {
                jac[(k, col)] = (r[k] - res[k]) / fd;
            }
        }
        let rv = DVector::from_vec(res.clone());
        let step = jac
            .svd(true, true)
            .solve(&rv, 1e-10)
            .map_err(|e| Error::NoConvergence(e.to_string()))?;
        ro -= step[0];
        ri -= step[1];
        let current = profile.scale_radii(ro, ri);
        let curve = integrate_profile(&current, zeta, samples)?;
        res = closure_residual(&current, &curve);
        if res.iter().all(|v| v.abs() <= 1e-10) {
            return Ok((current, curve));
        }
    }
    Err(Error::NoConvergence(format!(
        "closure correction stalled at residual {res:?}"
    )))
}

/// Cumulative node density `W(ℓ)` for the graded parameterization.
struct Density {
    grading: Grading,
    centers: [f64; 2],
    total: f64,
}

impl Density {
    fn bump_integral(&self, l: f64, c: f64, peak: f64, width: f64) -> f64 {
        let mut v = 0.0;
        for image in [-self.total, 0.0, self.total] {
            let c = c + image;
            v += peak * width * (((l - c) / width).tanh() - ((-c) / width).tanh());
        }
        v
    }

    fn cumulative(&self, l: f64) -> f64 {
        let g = &self.grading;
        let mut w = l;
        for &c in &self.centers {
            w += self.bump_integral(l, c, g.flat_peak, g.flat_width);
            w += self.bump_integral(l, c, g.cap_peak, g.cap_width);
        }
        w
    }

    fn density(&self, l: f64) -> f64 {
        let g = &self.grading;
        let mut w = 1.0;
        for &c in &self.centers {
            for image in [-self.total, 0.0, self.total] {
                let d = l - c - image;
                w += g.flat_peak / (d / g.flat_width).cosh().powi(2);
                w += g.cap_peak / (d / g.cap_width).cosh().powi(2);
            }
        }
        w
    }

    /// Arclength positions of `n` nodes equispaced in cumulative density.
    fn node_positions(&self, n: usize) -> Result<Vec<f64>> {
        let wt = self.cumulative(self.total);
        let mut out = Vec::with_capacity(n);
        let mut l = 0.0;
        for i in 0..n {
            let target = wt * i as f64 / n as f64;
            let mut ok = false;
            for _ in 0..100 {
                let step = (self.cumulative(l) - target) / self.density(l);
                l = (l - step).clamp(0.0, self.total);
                if step.abs() < 1e-13 {
                    ok = true;
                    break;
                }
            }
            if !ok {
                return Err(Error::NoConvergence("graded node placement".into()));
            }
            out.push(l);
        }
        Ok(out)
    }
}

/// Generated initial state.
#[derive(Debug, Clone)]
pub struct Dumbbell {
    pub curve: ClosedCurve,
    pub frame: ReferenceFrame,
    pub profile: CurvatureProfile,
    /// Arclength position of every node.
    pub node_arclength: Vec<f64>,
    pub spec: ShapeSpec,
}

impl Dumbbell {
    /// Center of the upper (`+1`) or lower (`-1`) unit disk.
    pub fn disk_center(&self, sign: f64) -> (f64, f64) {
        (self.spec.x0, sign * (1.0 + self.spec.gap))
    }
}

fn fine_samples(length: f64, zeta: f64) -> usize {
    let need = (16.0 * length / zeta).ceil() as usize;
    need.next_power_of_two().max(1 << 14)
}

/// Full pipeline: profile, mollification, integration, closure, sampling.
pub fn make_dumbbell(spec: &ShapeSpec) -> Result<Dumbbell> {
    let profile = build_profile(spec)?;
    let samples = fine_samples(profile.total_length(), spec.zeta);
    let (profile, mut fine) = close_correction(&profile, spec.zeta, samples)?;
    let (fa, fb) = profile.bridge.expect("dumbbell profile has a bridge");
    let lc = 0.5 * (fa + fb);
    let (xc, yc) = fine.at(lc);
    fine.translate(spec.x0 - xc, spec.gap - yc);

    let length = profile.total_length();
    let density = Density {
        grading: spec.grading,
        centers: [lc, length - lc],
        total: length,
    };
    let n = spec.nodes;
    let ell = density.node_positions(n)?;
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for &l in &ell {
        let p = fine.at(l);
        x.push(p.0);
        y.push(p.1);
    }
    // enforce exact mirror symmetry: node i mirrors node n - i
    for i in 0..=n / 2 {
        let j = (n - i) % n;
        let xm = 0.5 * (x[i] + x[j]);
        let ym = 0.5 * (y[i] - y[j]);
        x[i] = xm;
        x[j] = xm;
        y[i] = ym;
        y[j] = -ym;
    }
    let curve = ClosedCurve::new(x, y)?;

    let collar = 2.0 * spec.zeta;
    let pick = |lo: f64, hi: f64| -> Window {
        let idx: Vec<usize> = (0..n).filter(|&i| ell[i] >= lo && ell[i] <= hi).collect();
        match (idx.first(), idx.last()) {
            (Some(&a), Some(&b)) => Window::new(a, b + 1),
            _ => Window::EMPTY,
        }
    };
    let mirror = |w: Window| Window::new(n + 1 - w.end, n + 1 - w.start);
    let upper = pick(fa - collar, fb + collar);
    let bridge_upper = if spec.delta > 0.0 {
        pick(fa, fb)
    } else {
        pick(lc - 0.5 * spec.zeta, lc + 0.5 * spec.zeta)
    };
    if upper.is_empty() || bridge_upper.is_empty() {
        return Err(Error::InvalidSpec("too few nodes on the bridge".into()));
    }
    let windows = [upper, mirror(upper)];
    let bridges = [bridge_upper, mirror(bridge_upper)];
    let flatness = crate::geometry::DEFAULT_WINDOW_FLATNESS.max(spec.gap + 0.05);
    let frame = ReferenceFrame::with_windows(curve.clone(), windows, bridges, flatness)?;
    Ok(Dumbbell {
        curve,
        frame,
        profile,
        node_arclength: ell,
        spec: spec.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l2(a: &[f64], b: &[f64], h: f64) -> f64 {
        (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() * h).sqrt()
    }

    #[test]
    fn profile_turns_once() {
        let spec = ShapeSpec {
            delta: 0.0,
            zeta: 0.05,
            ..ShapeSpec::default()
        };
        let p = build_profile(&spec).unwrap();
        // oracle: sum of length * curvature over the pieces
        let turning: f64 = p.pieces.iter().map(|q| q.length * q.curvature).sum();
        assert!((turning - 2.0 * PI).abs() < 1e-12);
        for q in &p.pieces {
            assert!(q.kind != PieceKind::Flat);
            let k = q.curvature;
            assert!(
                (k - 1.0).abs() < 1e-12 || (k - 0.1).abs() < 1e-12 || (k < 0.0 && k > -0.2),
                "unexpected curvature {k}"
            );
        }
    }

    #[test]
    fn profile_with_flats() {
        let p = build_profile(&ShapeSpec::default()).unwrap();
        let flats: Vec<_> = p
            .pieces
            .iter()
            .filter(|q| q.kind == PieceKind::Flat)
            .collect();
        assert_eq!(flats.len(), 2);
        for f in flats {
            assert_eq!(f.length, 0.2);
            assert_eq!(f.curvature, 0.0);
        }
        assert!((p.total_turning() - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn circle_profile() {
        let p = CurvatureProfile::circle(1.0);
        assert!((p.total_length() - 2.0 * PI).abs() < 1e-15);
        assert_eq!(p.value_at(1.0), 1.0);
        let h = mollify_profile(&p, 0.1, 64).unwrap();
        assert!(h.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rejects_bad_specs() {
        for spec in [
            ShapeSpec {
                radius: 3.0,
                ..ShapeSpec::default()
            },
            ShapeSpec {
                delta: 0.6,
                ..ShapeSpec::default()
            },
            ShapeSpec {
                zeta: 0.2,
                ..ShapeSpec::default()
            },
            ShapeSpec {
                gap: 0.2,
                ..ShapeSpec::default()
            },
        ] {
            assert!(matches!(build_profile(&spec), Err(Error::InvalidSpec(_))));
        }
    }

    fn step_profile() -> CurvatureProfile {
        // four pieces on a circle-like loop with curvature jumps
        CurvatureProfile {
            pieces: vec![
                Piece {
                    kind: PieceKind::Arc,
                    length: 1.0,
                    curvature: 2.0,
                },
                Piece {
                    kind: PieceKind::Flat,
                    length: 1.0,
                    curvature: 0.0,
                },
                Piece {
                    kind: PieceKind::Arc,
                    length: 2.0,
                    curvature: 1.0,
                },
                Piece {
                    kind: PieceKind::Arc,
                    length: 1.0,
                    curvature: 2.0 * PI - 4.0,
                },
            ],
            anchor: (0.0, 0.0),
            heading: 0.0,
            bridge: None,
            bridge_height: None,
        }
    }

    #[test]
    fn mollification_converges_to_profile() {
        let p = step_profile();
        let m = 1 << 14;
        let h = p.total_length() / m as f64;
        let exact: Vec<f64> = (0..m).map(|k| p.value_at(k as f64 * h)).collect();
        let mut prev = f64::INFINITY;
        for zeta in [0.2, 0.1, 0.05, 0.025] {
            let hz = mollify_profile(&p, zeta, m).unwrap();
            let e = l2(&hz.values, &exact, h);
            assert!(e < prev, "zeta={zeta} err={e} prev={prev}");
            prev = e;
        }
        assert!(prev < 0.2);
    }

    #[test]
    fn mollification_is_an_l2_contraction() {
        let a = step_profile();
        let mut b = step_profile();
        b.pieces[1].curvature = 0.3;
        b.pieces[3].curvature -= 0.3;
        let m = 1 << 13;
        let h = a.total_length() / m as f64;
        let ja: Vec<f64> = (0..m).map(|k| a.value_at(k as f64 * h)).collect();
        let jb: Vec<f64> = (0..m).map(|k| b.value_at(k as f64 * h)).collect();
        let ha = mollify_profile(&a, 0.1, m).unwrap();
        let hb = mollify_profile(&b, 0.1, m).unwrap();
        assert!(l2(&ha.values, &hb.values, h) <= l2(&ja, &jb, h) + 1e-12);
    }

    #[test]
    fn mollification_preserves_monotone_runs() {
        let p = step_profile();
        let m = 1 << 12;
        let hz = mollify_profile(&p, 0.1, m).unwrap();
        let h = p.total_length() / m as f64;
        // J increases 0 -> 1 at l = 2 and decreases 2 -> 0 at l = 1
        let idx = |l: f64| (l / h).round() as usize;
        for k in idx(1.55)..idx(2.45) {
            assert!(hz.values[k + 1] >= hz.values[k] - 1e-14);
        }
        for k in idx(0.55)..idx(1.45) {
            assert!(hz.values[k + 1] <= hz.values[k] + 1e-14);
        }
    }

    #[test]
    fn mollifier_wider_than_piece_is_rejected() {
        let p = step_profile();
        assert!(mollify_profile(&p, 1.5, 256).is_err());
    }

    #[test]
    fn integrate_unit_circle() {
        let m = 256;
        let f = BoundaryField::new(FieldKind::Curvature, vec![1.0; m]).unwrap();
        let c = integrate_curve(&f, 2.0 * PI, (1.0, 0.0), 0.5 * PI).unwrap();
        for k in 0..=m {
            let t = 2.0 * PI * k as f64 / m as f64;
            assert!((c.x[k] - t.cos()).abs() < 1e-10);
            assert!((c.y[k] - t.sin()).abs() < 1e-10);
        }
        assert!(c.defect_norm() < 1e-10);
    }

    #[test]
    fn integrate_straight_part() {
        // zero curvature on the first k0 samples, constant elsewhere
        let (m, length, k0) = (2000, 10.0, 40);
        let h: f64 = length / m as f64;
        let kappa = 2.0 * PI / (h * (m - k0) as f64);
        let vals: Vec<f64> = (0..m).map(|k| if k < k0 { 0.0 } else { kappa }).collect();
        let f = BoundaryField::new(FieldKind::Curvature, vals).unwrap();
        let c = integrate_curve(&f, length, (0.0, 0.0), 0.0).unwrap();
        for k in 0..k0 {
            assert!(c.theta[k].abs() < 1e-15);
            assert!((c.x[k] - k as f64 * h).abs() < 1e-12);
            assert!(c.y[k].abs() < 1e-15);
        }
        assert!((c.theta[m] - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn turning_defect_is_rejected() {
        let f = BoundaryField::new(FieldKind::Curvature, vec![1.1; 64]).unwrap();
        assert!(integrate_curve(&f, 2.0 * PI, (1.0, 0.0), 0.5 * PI).is_err());
    }

    #[test]
    fn closed_circle_is_left_alone() {
        let p = CurvatureProfile::circle(1.0);
        let (q, c) = close_correction(&p, 0.1, 1024).unwrap();
        assert_eq!(q, p);
        assert!(c.defect_norm() < 1e-12);
    }

    #[test]
    fn dumbbell_closes_after_correction() {
        let spec = ShapeSpec::default();
        let p = build_profile(&spec).unwrap();
        let m = fine_samples(p.total_length(), spec.zeta);
        let raw = integrate_profile(&p, spec.zeta, m).unwrap();
        assert!(raw.defect_norm() <= 1e-2, "defect {}", raw.defect_norm());
        let (q, c) = close_correction(&p, spec.zeta, m).unwrap();
        assert!(c.defect_norm() <= 1e-9);
        // caps and flats keep their parameters exactly
        for (a, b) in p.pieces.iter().zip(&q.pieces) {
            if matches!(a.kind, PieceKind::UnitArc | PieceKind::Flat) {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn coarse_mollifier_defect_is_rejected() {
        // a profile that is far from closing
        let mut p = CurvatureProfile::circle(1.0);
        p.pieces = vec![
            Piece {
                kind: PieceKind::Arc,
                length: PI,
                curvature: 1.0,
            },
            Piece {
                kind: PieceKind::Flat,
                length: 0.2,
                curvature: 0.0,
            },
            Piece {
                kind: PieceKind::Arc,
                length: PI,
                curvature: 1.0,
            },
        ];
        assert!(matches!(
            close_correction(&p, 0.05, 4096),
            Err(Error::InvalidSpec(_))
        ));
    }

    fn disks_inside(d: &Dumbbell) -> bool {
        [1.0, -1.0].iter().all(|&sign| {
            let (cx, cy) = d.disk_center(sign);
            (0..256).all(|k| {
                let t = 2.0 * PI * k as f64 / 256.0;
                let r = 1.0 - 1e-3;
                d.curve.contains((cx + r * t.cos(), cy + r * t.sin()))
            })
        })
    }

    #[test]
    fn default_dumbbell() {
        let d = make_dumbbell(&ShapeSpec::default()).unwrap();
        let n = d.curve.len();
        let g = d.curve.geometry().unwrap();
        let gap = crate::intersect::min_gap(&d.curve);
        assert!((gap - 0.04).abs() <= 5e-3, "gap {gap}");
        // curvature vanishes on the flat away from the mollified joints
        let (fa, fb) = d.profile.bridge.unwrap();
        let zeta = d.spec.zeta;
        let flat: Vec<usize> = (0..n)
            .filter(|&i| d.node_arclength[i] >= fa + zeta && d.node_arclength[i] <= fb - zeta)
            .collect();
        let span = d.node_arclength[*flat.last().unwrap()] - d.node_arclength[flat[0]];
        let spacing = d.node_arclength[flat[1]] - d.node_arclength[flat[0]];
        assert!(span >= 0.1 - 2.0 * spacing, "span {span}");
        for &i in &flat {
            assert!(g.curvature[i].abs() <= 1e-3, "H[{i}] = {}", g.curvature[i]);
            let j = n - i;
            assert!(g.curvature[j].abs() <= 1e-3, "H[{j}] = {}", g.curvature[j]);
        }
        for i in 0..n {
            let j = (n - i) % n;
            assert_eq!(d.curve.x[i], d.curve.x[j]);
            assert_eq!(d.curve.y[i], -d.curve.y[j]);
        }
        assert!(crate::intersect::self_intersections(&d.curve).embedded());
        assert!(disks_inside(&d));
        let (lo, hi) = flat
            .iter()
            .map(|&i| d.curve.y[i])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v), b.max(v))
            });
        assert!(
            (lo - 0.02).abs() < 1e-8 && (hi - 0.02).abs() < 1e-8,
            "{lo} {hi}"
        );
    }

    #[test]
    fn touching_dumbbell() {
        let spec = ShapeSpec {
            delta: 0.0,
            gap: 0.0,
            ..ShapeSpec::default()
        };
        let d = make_dumbbell(&spec).unwrap();
        let gap = crate::intersect::min_gap(&d.curve);
        assert!(gap < 1e-3, "gap {gap}");
        // caps keep unit curvature away from the mollified joints
        let g = d.curve.geometry().unwrap();
        let (cx, cy) = d.disk_center(1.0);
        for i in 0..d.curve.len() {
            let (x, y) = d.curve.point(i);
            let r = (x - cx).hypot(y - cy);
            if (r - 1.0).abs() < 1e-6 && y > cy - 0.9 && y < cy + 0.9 && (x - cx).abs() > 0.3 {
                assert!(
                    (g.curvature[i] - 1.0).abs() < 1e-2,
                    "H[{i}] = {} at ({x}, {y})",
                    g.curvature[i]
                );
            }
        }
    }

    #[test]
    fn shapes_converge_in_delta() {
        let base = ShapeSpec {
            zeta: 0.025,
            ..ShapeSpec::default()
        };
        let at = |delta: f64| {
            make_dumbbell(&ShapeSpec {
                delta,
                ..base.clone()
            })
            .unwrap()
            .curve
        };
        let limit = at(0.0);
        let dist = |c: &ClosedCurve| {
            (0..c.len())
                .map(|i| (c.x[i] - limit.x[i]).hypot(c.y[i] - limit.y[i]))
                .fold(0.0, f64::max)
        };
        let ratios: Vec<f64> = [0.2, 0.1, 0.05].iter().map(|&d| dist(&at(d)) / d).collect();
        let (lo, hi) = ratios
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
        assert!(hi < 3.0 * lo && hi < 5.0, "{ratios:?}");
    }

    #[test]
    fn critical_dumbbell_touches_along_segment() {
        let spec = ShapeSpec {
            gap: 0.0,
            ..ShapeSpec::default()
        };
        let d = make_dumbbell(&spec).unwrap();
        let report = crate::intersect::self_intersections(&d.curve);
        assert!(report.embedded());
        assert!(report.min_gap <= 1e-9, "gap {}", report.min_gap);
    }
}
