//! One Robin solve on an initial state and the quantities that decide
//! whether the bridge starts to melt.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::evolution::robin_solve;
use crate::geometry::{BoundaryField, FieldKind, NormalGraph, ReferenceFrame};
use crate::overlap;
use crate::robin::{energy_diagnostics_with, EnergyDiagnostics};

/// Heights above and below the bridge at which the potential is sampled.
pub const PROBE_HEIGHTS: [f64; 2] = [0.05, 0.02];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeValue {
    pub x: f64,
    pub y: f64,
    /// `None` when the point lies outside the liquid.
    pub u: Option<f64>,
}

/// Sign of `H - u` along one flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatSign {
    pub flat_length: f64,
    /// Length of the longest run of nodes with `H - u < 0`.
    pub negative_length: f64,
    pub max_h_minus_u: f64,
    pub min_h_minus_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub nodes: usize,
    pub u_min: f64,
    pub u_max: f64,
    pub probes: Vec<ProbeValue>,
    pub flats: Vec<FlatSign>,
    pub energy: EnergyDiagnostics,
    pub residual: f64,
    pub condition_estimate: Option<f64>,
    /// `H - u < 0` on an open part of some flat.
    pub melting: bool,
}

impl Report {
    pub fn verdict(&self) -> &'static str {
        if self.melting {
            "PASS"
        } else {
            "FAIL"
        }
    }
}

/// Solves once on `frame` (at `ρ = 0`) and collects the report. `bridge_x`
/// places the probes; without it no probes are taken.
pub fn diagnose(
    frame: &ReferenceFrame,
    bridge_x: Option<f64>,
    opening: Option<f64>,
) -> Result<Report> {
    let n = frame.len();
    let rho = NormalGraph::zeros(n);
    let curve = frame.base.clone();
    let h = BoundaryField::new(FieldKind::Curvature, frame.geom.curvature.clone())?;
    let cut = overlap::cut(frame, &rho)?;
    let h_tilde = overlap::cut_curvature(&h, &cut.mask)?;
    let (system, solution) = robin_solve(frame, &curve, &cut, &h_tilde, opening)?;
    let u = &solution.u.values;
    let u_min = u.iter().copied().fold(f64::INFINITY, f64::min);
    let u_max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut points = Vec::new();
    if let Some(x) = bridge_x {
        for hgt in PROBE_HEIGHTS {
            points.push((x, hgt));
            points.push((x, -hgt));
        }
    }
    let values = system.eval_interior(&solution, &points);
    let probes = points
        .iter()
        .zip(values)
        .map(|(&(x, y), u)| ProbeValue { x, y, u })
        .collect();

    let mut flats = Vec::new();
    for w in frame.bridges.iter().filter(|w| !w.is_empty()) {
        let seg = |i: usize| {
            let j = (i + 1) % n;
            (curve.x[j] - curve.x[i]).hypot(curve.y[j] - curve.y[i])
        };
        let idx: Vec<usize> = w.indices().collect();
        let d: Vec<f64> = idx.iter().map(|&i| h.values[i] - u[i]).collect();
        let flat_length: f64 = idx[..idx.len() - 1].iter().map(|&i| seg(i)).sum();
        let (mut best, mut run) = (0.0f64, 0.0f64);
        for k in 1..idx.len() {
            if d[k - 1] < 0.0 && d[k] < 0.0 {
                run += seg(idx[k - 1]);
                best = best.max(run);
            } else {
                run = 0.0;
            }
        }
        flats.push(FlatSign {
            flat_length,
            negative_length: best,
            max_h_minus_u: d.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min_h_minus_u: d.iter().copied().fold(f64::INFINITY, f64::min),
        });
    }
    let melting = flats.iter().any(|f| f.negative_length > 0.0);
    Ok(Report {
        nodes: n,
        u_min,
        u_max,
        probes,
        flats,
        energy: energy_diagnostics_with(&system.geometry().speed, &solution.u, &h_tilde),
        residual: solution.residual,
        condition_estimate: system.warning().map(|w| w.condition_estimate),
        melting,
    })
}
