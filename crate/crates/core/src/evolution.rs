//! Time stepping of the normal graph `ρ` with `ρ̇ = λ (-H + ũ)`.
//!
//! `H` and `λ` are taken from the uncut curve `F(ρ)`; `ũ` is the Robin
//! solution on the cut curve with data `H̃`. The second-order part of `-λH`
//! is treated implicitly, everything else explicitly.

use log::{debug, info};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    graph_to_curve, graph_to_curve_unchecked, BoundaryField, ClosedCurve, CurveGeometry, FieldKind,
    NormalGraph, ReferenceFrame,
};
use crate::intersect;
use crate::overlap::{self, CutResult};
use crate::robin::{RobinSolution, RobinSystem};
use crate::spectral;

/// Event thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EventConfig {
    /// First touch is reported once the minimal gap falls below this.
    pub touch_tolerance: f64,
    /// Overlap onset is reported once the bridge has crossed `y = 0` by
    /// this depth.
    pub onset_depth: f64,
    /// The run stops once the overlap measure reaches this.
    pub overlap_cap: f64,
}

impl Default for EventConfig {
    fn default() -> Self {
        EventConfig {
            touch_tolerance: 1e-3,
            onset_depth: 1e-3,
            overlap_cap: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepConfig {
    pub dt: f64,
    pub omega: f64,
    /// Rebaseline once `‖ρ‖∞` exceeds this fraction of the tubular radius.
    pub rebaseline_threshold: f64,
    pub max_t: f64,
    /// Extra Robin solves per step.
    pub picard: usize,
    /// Solver opening; `None` uses twice the bridge node spacing.
    pub opening: Option<f64>,
    /// Keep every `frame_every`-th state.
    pub frame_every: usize,
    pub events: EventConfig,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            dt: 1e-3,
            omega: 1.0,
            rebaseline_threshold: 0.25,
            max_t: 0.5,
            picard: 0,
            opening: None,
            frame_every: 10,
            events: EventConfig::default(),
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if !(self.omega >= 0.0) {
            return bad("omega must be non-negative");
        }
        if !(self.rebaseline_threshold > 0.0 && self.rebaseline_threshold <= 0.25) {
            return bad("rebaseline threshold must lie in (0, 1/4]");
        }
        if !(self.max_t >= 0.0) {
            return bad("max_t must be non-negative");
        }
        if self.frame_every == 0 {
            return bad("frame_every must be at least 1");
        }
        if let Some(e) = self.opening {
            if !(e > 0.0) {
                return bad("opening must be positive");
            }
        }
        let ev = &self.events;
        if !(ev.touch_tolerance > 0.0 && ev.onset_depth > 0.0 && ev.overlap_cap > 0.0) {
            return bad("event thresholds must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub min_gap: f64,
    pub overlap_measure: f64,
    pub overlap_depth: f64,
    pub embedded: bool,
    /// `min (ũ - H)` over the bridge nodes.
    pub bridge_sign: f64,
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub t: f64,
    pub frame: ReferenceFrame,
    pub rho: NormalGraph,
    pub last_trace: Option<BoundaryField>,
    pub diagnostics: Diagnostics,
    /// Set once rebaselining was skipped because the curve overlaps.
    pub extended: bool,
}

impl SimState {
    pub fn new(frame: ReferenceFrame) -> Self {
        let n = frame.len();
        SimState {
            t: 0.0,
            frame,
            rho: NormalGraph::zeros(n),
            last_trace: None,
            diagnostics: Diagnostics::default(),
            extended: false,
        }
    }

    pub fn curve(&self) -> ClosedCurve {
        graph_to_curve_unchecked(&self.frame, &self.rho.values)
    }
}

/// Everything the right-hand side needs at one state.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub curve: ClosedCurve,
    pub geom: CurveGeometry,
    pub cut: CutResult,
    pub lambda: BoundaryField,
    pub u_tilde: BoundaryField,
    /// `λ (-H + ũ)`.
    pub rate: Vec<f64>,
    pub diagnostics: Diagnostics,
}

fn lambda_from(frame: &ReferenceFrame, geom: &CurveGeometry) -> Result<BoundaryField> {
    let g0 = &frame.geom;
    let mut out = Vec::with_capacity(geom.nx.len());
    for i in 0..geom.nx.len() {
        let dot = g0.nx[i] * geom.nx[i] + g0.ny[i] * geom.ny[i];
        if dot <= 0.5 {
            return Err(Error::RebaselineRequired(format!(
                "normal tilted too far at node {i} (N0·N = {dot:.3})"
            )));
        }
        out.push(1.0 / dot);
    }
    BoundaryField::new(FieldKind::Lambda, out)
}

/// `λ = 1 / (N0 | N_F)` on the uncut curve.
pub fn lambda_field(frame: &ReferenceFrame, rho: &NormalGraph) -> Result<BoundaryField> {
    let curve = graph_to_curve(frame, rho)?;
    lambda_from(frame, &curve.geometry()?)
}

fn coefficient_from(
    frame: &ReferenceFrame,
    curve: &ClosedCurve,
    lambda: &BoundaryField,
) -> Result<BoundaryField> {
    let g0 = &frame.geom;
    let dx = spectral::derivative(&curve.x, 1);
    let dy = spectral::derivative(&curve.y, 1);
    let mut a = Vec::with_capacity(dx.len());
    for i in 0..dx.len() {
        let s0 = g0.speed[i];
        let v = lambda.values[i] * (g0.dx[i] * dx[i] + g0.dy[i] * dy[i]) / s0.powi(4);
        if !(v > 0.0) {
            return Err(Error::EllipticityLost(format!(
                "principal coefficient {v:.3e} at node {i}"
            )));
        }
        a.push(v);
    }
    BoundaryField::new(FieldKind::Lambda, a)
}

/// Coefficient `a` of `ρ''` in the linearized `-λ H`:
/// `a = λ (F0' · F(σ)') / |F0'|⁴`.
pub fn principal_coefficient(frame: &ReferenceFrame, sigma: &NormalGraph) -> Result<BoundaryField> {
    let curve = graph_to_curve(frame, sigma)?;
    let lambda = lambda_from(frame, &curve.geometry()?)?;
    coefficient_from(frame, &curve, &lambda)
}

/// Robin solve on the opened cut curve with data `h_tilde`.
pub fn robin_solve(
    frame: &ReferenceFrame,
    uncut: &ClosedCurve,
    cut: &CutResult,
    h_tilde: &BoundaryField,
    opening: Option<f64>,
) -> Result<(RobinSystem, RobinSolution)> {
    let eta = opening.unwrap_or_else(|| overlap::opening_width(frame));
    let (curve, geom) = overlap::solver_curve(frame, uncut, cut, eta)?;
    let system = RobinSystem::assemble_with(&curve, geom)?;
    let solution = system.solve(h_tilde)?;
    Ok((system, solution))
}

/// Evaluates the right-hand side and the diagnostics at `rho`.
pub fn evaluate(
    frame: &ReferenceFrame,
    rho: &NormalGraph,
    opening: Option<f64>,
) -> Result<Evaluation> {
    let curve = graph_to_curve(frame, rho)?;
    let geom = curve.geometry()?;
    let lambda = lambda_from(frame, &geom)?;
    let cut = overlap::cut(frame, rho)?;
    let h = BoundaryField::new(FieldKind::Curvature, geom.curvature.clone())?;
    let h_tilde = overlap::cut_curvature(&h, &cut.mask)?;
    let (_, solution) = robin_solve(frame, &curve, &cut, &h_tilde, opening)?;
    let u = solution.u;
    let n = curve.len();
    let rate: Vec<f64> = (0..n)
        .map(|i| lambda.values[i] * (u.values[i] - h.values[i]))
        .collect();
    let mut bridge_sign = f64::INFINITY;
    for w in frame.bridges.iter() {
        for i in w.indices() {
            bridge_sign = bridge_sign.min(u.values[i] - h.values[i]);
        }
    }
    if !bridge_sign.is_finite() {
        bridge_sign = 0.0;
    }
    let diagnostics = Diagnostics {
        min_gap: intersect::min_gap(&curve),
        overlap_measure: cut.overlap_measure,
        overlap_depth: cut.overlap_depth,
        embedded: intersect::crossings_hashed(&curve).is_empty(),
        bridge_sign,
    };
    Ok(Evaluation {
        curve,
        geom,
        cut,
        lambda,
        u_tilde: u,
        rate,
        diagnostics,
    })
}

/// One implicit solve `(1 + dt ω - dt a D²) ρ⁺ = ρ + dt (f - a D² ρ + ω ρ)`,
/// where `D²` is the spectral second derivative. Dividing by `a` makes the
/// matrix symmetric positive definite.
fn implicit_update(rho: &[f64], rate: &[f64], a: &[f64], dt: f64, omega: f64) -> Result<Vec<f64>> {
    let n = rho.len();
    let d2 = spectral::second_derivative_matrix(n);
    let rho2 = spectral::derivative(rho, 2);
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = -dt * d2[i * n + j];
        }
        m[(i, i)] += (1.0 + dt * omega) / a[i];
    }
    // symmetrize away rounding in the circulant fill
    let m = (&m + m.transpose()) * 0.5;
    let rhs = DVector::from_iterator(
        n,
        (0..n).map(|i| (rho[i] + dt * (rate[i] - a[i] * rho2[i] + omega * rho[i])) / a[i]),
    );
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Singular("implicit step matrix is not positive definite".into()))?;
    let out = chol.solve(&rhs);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite implicit update".into()));
    }
    Ok(out.as_slice().to_vec())
}

fn advance(state: &SimState, eval: &Evaluation, cfg: &StepConfig) -> Result<SimState> {
    let a = coefficient_from(&state.frame, &eval.curve, &eval.lambda)?;
    let mut next = implicit_update(&state.rho.values, &eval.rate, &a.values, cfg.dt, cfg.omega)?;
    for _ in 0..cfg.picard {
        let trial = NormalGraph::new(next.clone());
        let e = evaluate(&state.frame, &trial, cfg.opening)?;
        let rate: Vec<f64> = eval
            .rate
            .iter()
            .zip(&e.rate)
            .map(|(r0, r1)| 0.5 * (r0 + r1))
            .collect();
        next = implicit_update(&state.rho.values, &rate, &a.values, cfg.dt, cfg.omega)?;
    }
    Ok(SimState {
        t: state.t + cfg.dt,
        frame: state.frame.clone(),
        rho: NormalGraph::new(next),
        last_trace: Some(eval.u_tilde.clone()),
        diagnostics: eval.diagnostics,
        extended: state.extended,
    })
}

/// One step, with a single rebaseline-and-retry if the graph leaves the
/// admissible tube.
pub fn step_imex(state: &SimState, cfg: &StepConfig) -> Result<SimState> {
    let eval = match evaluate(&state.frame, &state.rho, cfg.opening) {
        Ok(e) => e,
        Err(Error::RebaselineRequired(_)) => {
            let re = force_rebaseline(state)?;
            let e = evaluate(&re.frame, &re.rho, cfg.opening)?;
            return rebaseline(&advance(&re, &e, cfg)?, cfg);
        }
        Err(e) => return Err(e),
    };
    rebaseline(&advance(state, &eval, cfg)?, cfg)
}

fn force_rebaseline(state: &SimState) -> Result<SimState> {
    if state.rho.sup_norm() == 0.0 {
        return Err(Error::RebaselineRequired(
            "graph is outside the tube at zero offset".into(),
        ));
    }
    let curve = state.curve();
    let cut = overlap::cut(&state.frame, &state.rho)?;
    if cut.any_cut() || cut.overlap_measure > 0.0 {
        return Err(Error::RebaselineRequired(
            "tube left while the curve overlaps".into(),
        ));
    }
    let frame = reframe(&state.frame, curve)?;
    let n = frame.len();
    Ok(SimState {
        frame,
        rho: NormalGraph::zeros(n),
        ..state.clone()
    })
}

fn reframe(old: &ReferenceFrame, curve: ClosedCurve) -> Result<ReferenceFrame> {
    if old.windows.iter().all(|w| w.is_empty()) {
        ReferenceFrame::plain(curve)
    } else {
        ReferenceFrame::with_windows(curve, old.windows, old.bridges, f64::INFINITY)
    }
}

/// Moves the reference to the current curve once `‖ρ‖∞` passes the
/// threshold. Nodes keep their parameter values, so the curve itself is
/// unchanged. Skipped (and flagged) while the curve overlaps.
pub fn rebaseline(state: &SimState, cfg: &StepConfig) -> Result<SimState> {
    let limit = cfg.rebaseline_threshold * state.frame.tubular_radius;
    if state.rho.sup_norm() <= limit {
        return Ok(state.clone());
    }
    let cut = overlap::cut(&state.frame, &state.rho)?;
    if cut.any_cut() || cut.overlap_measure > 0.0 {
        return Ok(SimState {
            extended: true,
            ..state.clone()
        });
    }
    match reframe(&state.frame, state.curve()) {
        Ok(frame) => {
            info!("rebaselined at t = {:.6}", state.t);
            let n = frame.len();
            Ok(SimState {
                frame,
                rho: NormalGraph::zeros(n),
                ..state.clone()
            })
        }
        Err(_) => Ok(SimState {
            extended: true,
            ..state.clone()
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    FirstTouch,
    OverlapOnset,
    Horizon,
    OverlapCap,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub t: f64,
    pub step: usize,
    pub detail: String,
}

/// Stored output state.
#[derive(Debug, Clone)]
pub struct Frame {
    pub step: usize,
    pub t: f64,
    pub curve: ClosedCurve,
    pub mask: Vec<bool>,
    pub rho: NormalGraph,
    pub diagnostics: Diagnostics,
    pub extended: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub frames: Vec<Frame>,
    pub events: Vec<Event>,
    pub final_state: SimState,
}

impl RunOutput {
    pub fn event(&self, kind: EventKind) -> Option<&Event> {
        self.events.iter().find(|e| e.kind == kind)
    }

    pub fn failed(&self) -> bool {
        self.event(EventKind::Failure).is_some()
    }

    pub fn capped(&self) -> bool {
        self.event(EventKind::OverlapCap).is_some()
    }
}

/// Time where a quantity that moved from `prev` to `cur` over one step
/// reaches `level`.
fn crossing_time(t_prev: f64, dt: f64, prev: f64, cur: f64, level: f64) -> f64 {
    if (cur - prev).abs() < f64::MIN_POSITIVE {
        return t_prev + dt;
    }
    let w = ((level - prev) / (cur - prev)).clamp(0.0, 1.0);
    t_prev + w * dt
}

/// Integrates up to `max_t`, recording frames and events.
pub fn run(initial: SimState, cfg: &StepConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let ev = cfg.events;
    let mut state = initial;
    let mut frames = Vec::new();
    let mut events = Vec::new();
    let mut step = 0usize;
    let mut prev: Option<(f64, Diagnostics)> = None;
    let (mut touched, mut onset) = (false, false);
    let push_frame = |frames: &mut Vec<Frame>, st: &SimState, e: &Evaluation, step: usize| {
        frames.push(Frame {
            step,
            t: st.t,
            curve: e.curve.clone(),
            mask: e.cut.mask.clone(),
            rho: st.rho.clone(),
            diagnostics: e.diagnostics,
            extended: st.extended,
        });
    };
    loop {
        let eval = match evaluate(&state.frame, &state.rho, cfg.opening) {
            Ok(e) => e,
            Err(Error::RebaselineRequired(msg)) => match force_rebaseline(&state) {
                Ok(s) => {
                    debug!("forced rebaseline: {msg}");
                    state = s;
                    continue;
                }
                Err(e) => {
                    events.push(Event {
                        kind: EventKind::Failure,
                        t: state.t,
                        step,
                        detail: e.to_string(),
                    });
                    break;
                }
            },
            Err(e) => {
                events.push(Event {
                    kind: EventKind::Failure,
                    t: state.t,
                    step,
                    detail: e.to_string(),
                });
                break;
            }
        };
        let d = eval.diagnostics;
        state.diagnostics = d;
        if !touched && d.min_gap <= ev.touch_tolerance {
            touched = true;
            let t = prev.map_or(state.t, |(tp, dp)| {
                crossing_time(tp, state.t - tp, dp.min_gap, d.min_gap, ev.touch_tolerance)
            });
            events.push(Event {
                kind: EventKind::FirstTouch,
                t,
                step,
                detail: format!("min gap {:.3e}", d.min_gap),
            });
        }
        if !onset && d.overlap_depth >= ev.onset_depth {
            onset = true;
            let t = prev.map_or(state.t, |(tp, dp)| {
                crossing_time(
                    tp,
                    state.t - tp,
                    dp.overlap_depth,
                    d.overlap_depth,
                    ev.onset_depth,
                )
            });
            events.push(Event {
                kind: EventKind::OverlapOnset,
                t,
                step,
                detail: format!(
                    "depth {:.3e}, measure {:.3e}",
                    d.overlap_depth, d.overlap_measure
                ),
            });
        }
        let capped = onset && d.overlap_measure >= ev.overlap_cap;
        let horizon = state.t >= cfg.max_t - 1e-12 * cfg.dt.max(1.0);
        if step % cfg.frame_every == 0 || capped || horizon {
            push_frame(&mut frames, &state, &eval, step);
        }
        if capped {
            events.push(Event {
                kind: EventKind::OverlapCap,
                t: state.t,
                step,
                detail: format!("overlap measure {:.3e}", d.overlap_measure),
            });
            break;
        }
        if horizon {
            events.push(Event {
                kind: EventKind::Horizon,
                t: state.t,
                step,
                detail: String::new(),
            });
            break;
        }
        prev = Some((state.t, d));
        let next = advance(&state, &eval, cfg).and_then(|s| rebaseline(&s, cfg));
        match next {
            Ok(s) => state = s,
            Err(e) => {
                events.push(Event {
                    kind: EventKind::Failure,
                    t: state.t,
                    step,
                    detail: e.to_string(),
                });
                break;
            }
        }
        step += 1;
        debug!(
            "step {step} t={:.5} gap={:.3e} overlap={:.3e}",
            state.t, d.min_gap, d.overlap_measure
        );
    }
    Ok(RunOutput {
        frames,
        events,
        final_state: state,
    })
}
