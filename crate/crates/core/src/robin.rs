//! Interior Laplace problem with the Robin condition `u - ∂_N u = H` on a
//! closed curve, solved with a single-layer boundary integral equation.
//!
//! With `u = S̃σ`, where `S̃` uses the shifted kernel `-(1/2π) ln r + 1`, the
//! interior jump relation turns the boundary condition into the second-kind
//! system `(½I + K' + S̃) σ = H`. The shift keeps the single layer injective
//! on curves of logarithmic capacity one. The log singularity of `S̃` is
//! integrated with the trigonometric product rule on the uniform parameter
//! grid; `K'` has a smooth kernel and uses the trapezoid rule.

use std::f64::consts::PI;

use log::warn;
use nalgebra::{DMatrix, DVector, LU};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryField, ClosedCurve, CurveGeometry, FieldKind};
use crate::intersect;
use crate::spectral::TrigInterpolant;

/// Curves whose parts come closer than this trigger a conditioning warning.
pub const REGULARIZATION_FLOOR: f64 = 1e-3;

/// Points closer to the boundary than this many local node spacings are
/// evaluated by interpolation along the normal.
const NEAR_ZONE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningWarning {
    pub min_gap: f64,
    /// 1-norm condition number estimate.
    pub condition_estimate: f64,
}

/// Assembled and factorized boundary integral system for one curve.
pub struct RobinSystem {
    curve: ClosedCurve,
    geom: CurveGeometry,
    /// Quadrature matrix of `S̃`: the trace is `single * σ`.
    single: DMatrix<f64>,
    matrix: DMatrix<f64>,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    min_gap: f64,
    warning: Option<ConditioningWarning>,
}

#[derive(Debug, Clone)]
pub struct RobinSolution {
    pub u: BoundaryField,
    pub sigma: BoundaryField,
    /// Relative residual of the discrete boundary condition.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EnergyDiagnostics {
    /// `∮ u (H - u)`, equal to the Dirichlet energy of the harmonic extension.
    pub dirichlet: f64,
    /// `dirichlet + ½ ∮ u²`.
    pub robin: f64,
    /// `½ ∮ H²`.
    pub bound: f64,
}

/// Weights of the trigonometric product rule for `ln(4 sin²((t - τ)/2))`,
/// indexed by `(i - j) mod n`.
fn log_weights(n: usize) -> Vec<f64> {
    let half = n / 2;
    let nf = n as f64;
    (0..n)
        .map(|k| {
            let d = 2.0 * PI * k as f64 / nf;
            let mut s = 0.0;
            for m in 1..half {
                s += (m as f64 * d).cos() / m as f64;
            }
            -4.0 * PI / nf * s - 4.0 * PI / (nf * nf) * (half as f64 * d).cos()
        })
        .collect()
}

impl RobinSystem {
    pub fn assemble(curve: &ClosedCurve) -> Result<Self> {
        let geom = curve.geometry()?;
        Self::assemble_with(curve, geom)
    }

    /// Assembles with externally supplied derivatives, for curves whose
    /// geometry is known more accurately than spectral differentiation of
    /// the node positions would give.
    pub fn assemble_with(curve: &ClosedCurve, geom: CurveGeometry) -> Result<Self> {
        let n = curve.len();
        if geom.speed.len() != n {
            return Err(Error::InvalidInput("geometry does not match curve".into()));
        }
        let w = 2.0 * PI / n as f64;
        let logw = log_weights(n);
        let mut single = DMatrix::<f64>::zeros(n, n);
        let mut matrix = DMatrix::<f64>::zeros(n, n);
        // nalgebra is column-major; build rows in parallel, then scatter
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (xi, yi) = curve.point(i);
                // outward normal is minus the inner one
                let (nox, noy) = (-geom.nx[i], -geom.ny[i]);
                let mut srow = vec![0.0; n];
                let mut krow = vec![0.0; n];
                for j in 0..n {
                    let sj = geom.speed[j];
                    let m1 = -sj / (4.0 * PI);
                    let lw = logw[(i + n - j) % n];
                    if i == j {
                        let m2 = -sj * sj.ln() / (2.0 * PI) + sj;
                        srow[j] = lw * m1 + w * m2;
                        krow[j] = -w * geom.curvature[i] * sj / (4.0 * PI);
                    } else {
                        let (dx, dy) = (xi - curve.x[j], yi - curve.y[j]);
                        let r2 = dx * dx + dy * dy;
                        let d = 2.0 * PI * (i as f64 - j as f64) / n as f64;
                        let s2 = 4.0 * (0.5 * d).sin().powi(2);
                        let kernel = (-r2.ln() / (4.0 * PI) + 1.0) * sj;
                        let m2 = kernel - m1 * s2.ln();
                        srow[j] = lw * m1 + w * m2;
                        krow[j] = -w * (dx * nox + dy * noy) / (2.0 * PI * r2) * sj;
                    }
                }
                (srow, krow)
            })
            .collect();
        for (i, (srow, krow)) in rows.into_iter().enumerate() {
            for j in 0..n {
                single[(i, j)] = srow[j];
                matrix[(i, j)] = srow[j] + krow[j] + if i == j { 0.5 } else { 0.0 };
            }
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("non-finite matrix entry".into()));
        }
        let lu = matrix.clone().lu();
        let min_gap = intersect::min_gap(curve);
        let mut system = RobinSystem {
            curve: curve.clone(),
            geom,
            single,
            matrix,
            lu,
            min_gap,
            warning: None,
        };
        if min_gap < REGULARIZATION_FLOOR {
            let condition_estimate = system.condition_estimate();
            warn!(
                "boundary parts {min_gap:.3e} apart; condition number estimate {condition_estimate:.3e}"
            );
            system.warning = Some(ConditioningWarning {
                min_gap,
                condition_estimate,
            });
        }
        Ok(system)
    }

    pub fn len(&self) -> usize {
        self.curve.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curve.is_empty()
    }

    pub fn curve(&self) -> &ClosedCurve {
        &self.curve
    }

    pub fn geometry(&self) -> &CurveGeometry {
        &self.geom
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn min_gap(&self) -> f64 {
        self.min_gap
    }

    pub fn warning(&self) -> Option<&ConditioningWarning> {
        self.warning.as_ref()
    }

    /// 2-norm condition number from a full singular value decomposition.
    pub fn condition_number(&self) -> f64 {
        let sv = self.matrix.clone().singular_values();
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }

    /// Hager's estimate of the 1-norm condition number.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.len();
        let norm1 = (0..n)
            .map(|j| self.matrix.column(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let lu_t = self.matrix.transpose().lu();
        let mut x = DVector::from_element(n, 1.0 / n as f64);
        let mut est = 0.0;
        for _ in 0..5 {
            let Some(y) = self.lu.solve(&x) else {
                return f64::INFINITY;
            };
            est = y.iter().map(|v| v.abs()).sum::<f64>();
            let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            let Some(z) = lu_t.solve(&xi) else {
                return f64::INFINITY;
            };
            let (jmax, zmax) = z.iter().enumerate().fold((0, 0.0), |(bj, bv), (j, v)| {
                if v.abs() > bv {
                    (j, v.abs())
                } else {
                    (bj, bv)
                }
            });
            if zmax <= z.dot(&x) {
                break;
            }
            x.fill(0.0);
            x[jmax] = 1.0;
        }
        norm1 * est
    }

    pub fn solve(&self, h: &BoundaryField) -> Result<RobinSolution> {
        let n = self.len();
        if h.len() != n {
            return Err(Error::InvalidInput(
                "data length does not match curve".into(),
            ));
        }
        let rhs = DVector::from_column_slice(&h.values);
        let sigma = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("boundary integral system".into()))?;
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("non-finite density".into()));
        }
        let r = &self.matrix * &sigma - &rhs;
        let scale = rhs.amax().max(f64::MIN_POSITIVE);
        let residual = r.amax() / scale;
        if residual > 1e-8 {
            return Err(Error::Singular(format!("residual {residual:.3e}")));
        }
        let u = &self.single * &sigma;
        Ok(RobinSolution {
            u: BoundaryField::new(FieldKind::Temperature, u.as_slice().to_vec())?,
            sigma: BoundaryField::new(FieldKind::Density, sigma.as_slice().to_vec())?,
            residual,
        })
    }

    fn direct(&self, sigma: &[f64], p: (f64, f64)) -> f64 {
        let n = self.len();
        let w = 2.0 * PI / n as f64;
        let mut s = 0.0;
        for j in 0..n {
            let r2 = (p.0 - self.curve.x[j]).powi(2) + (p.1 - self.curve.y[j]).powi(2);
            s += (-r2.ln() / (4.0 * PI) + 1.0) * self.geom.speed[j] * sigma[j];
        }
        s * w
    }

    /// Potential at interior points; `None` for points outside the domain.
    pub fn eval_interior(
        &self,
        solution: &RobinSolution,
        points: &[(f64, f64)],
    ) -> Vec<Option<f64>> {
        let n = self.len();
        let xi = TrigInterpolant::new(&self.curve.x);
        let yi = TrigInterpolant::new(&self.curve.y);
        let ui = TrigInterpolant::new(&solution.u.values);
        let sigma = &solution.sigma.values;
        let dt = 2.0 * PI / n as f64;
        points
            .par_iter()
            .map(|&p| {
                if !self.curve.contains(p) {
                    return None;
                }
                let (mut best, mut dist) = (0, f64::INFINITY);
                for j in 0..n {
                    let d = (p.0 - self.curve.x[j]).hypot(p.1 - self.curve.y[j]);
                    if d < dist {
                        best = j;
                        dist = d;
                    }
                }
                if dist >= NEAR_ZONE * self.geom.speed[best] * dt {
                    return Some(self.direct(sigma, p));
                }
                // foot of the normal through p
                let mut t = best as f64 * dt;
                for _ in 0..60 {
                    let (x, dx) = xi.eval(t);
                    let (y, dy) = yi.eval(t);
                    let step = ((x - p.0) * dx + (y - p.1) * dy) / (dx * dx + dy * dy);
                    t -= step;
                    if step.abs() < 1e-15 {
                        break;
                    }
                }
                let (fx, dx) = xi.eval(t);
                let (fy, dy) = yi.eval(t);
                let speed = dx.hypot(dy);
                let (nx, ny) = (-dy / speed, dx / speed);
                let d = (p.0 - fx) * nx + (p.1 - fy) * ny;
                let h = speed * dt;
                let nodes = [0.0, 5.0 * h, 6.0 * h, 7.0 * h];
                let mut vals = [ui.eval(t).0, 0.0, 0.0, 0.0];
                for k in 1..4 {
                    vals[k] = self.direct(sigma, (fx + nodes[k] * nx, fy + nodes[k] * ny));
                }
                Some(lagrange(&nodes, &vals, d))
            })
            .collect()
    }
}

fn lagrange(nodes: &[f64], vals: &[f64], x: f64) -> f64 {
    let mut s = 0.0;
    for (k, (&xk, &vk)) in nodes.iter().zip(vals).enumerate() {
        let mut l = 1.0;
        for (m, &xm) in nodes.iter().enumerate() {
            if m != k {
                l *= (x - xm) / (xk - xm);
            }
        }
        s += l * vk;
    }
    s
}

/// Energy identities for a solved trace; `speed` is `|F'|` per node.
pub fn energy_diagnostics_with(
    speed: &[f64],
    u: &BoundaryField,
    h: &BoundaryField,
) -> EnergyDiagnostics {
    let n = speed.len();
    let w = 2.0 * PI / n as f64;
    let (mut dir, mut uu, mut hh) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (ui, hi) = (u.values[i], h.values[i]);
        dir += ui * (hi - ui) * speed[i];
        uu += ui * ui * speed[i];
        hh += hi * hi * speed[i];
    }
    EnergyDiagnostics {
        dirichlet: dir * w,
        robin: (dir + 0.5 * uu) * w,
        bound: 0.5 * hh * w,
    }
}

pub fn energy_diagnostics(
    curve: &ClosedCurve,
    u: &BoundaryField,
    h: &BoundaryField,
) -> Result<EnergyDiagnostics> {
    let g = curve.geometry()?;
    Ok(energy_diagnostics_with(&g.speed, u, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::param;

    fn field(kind: FieldKind, v: Vec<f64>) -> BoundaryField {
        BoundaryField::new(kind, v).unwrap()
    }

    fn ellipse(n: usize) -> ClosedCurve {
        ClosedCurve::from_fn(n, |t| (t.cos(), 0.6 * t.sin())).unwrap()
    }

    /// Robin data `u - ∂_N u` for a harmonic `u` with gradient `grad`.
    fn robin_data(
        curve: &ClosedCurve,
        u: impl Fn(f64, f64) -> f64,
        grad: impl Fn(f64, f64) -> (f64, f64),
    ) -> BoundaryField {
        let g = curve.geometry().unwrap();
        field(
            FieldKind::Curvature,
            (0..curve.len())
                .map(|i| {
                    let (x, y) = curve.point(i);
                    let (ux, uy) = grad(x, y);
                    u(x, y) - (ux * g.nx[i] + uy * g.ny[i])
                })
                .collect(),
        )
    }

    fn cubic(x: f64, y: f64) -> f64 {
        x * x * x - 3.0 * x * y * y
    }

    fn cubic_grad(x: f64, y: f64) -> (f64, f64) {
        (3.0 * x * x - 3.0 * y * y, -6.0 * x * y)
    }

    #[test]
    fn circle_matrix_is_symmetric_circulant() {
        let n = 64;
        let c = ClosedCurve::circle(n, (0.0, 0.0), 1.0).unwrap();
        let sys = RobinSystem::assemble(&c).unwrap();
        let a = sys.matrix();
        for i in 0..n {
            for j in 0..n {
                assert!((a[(i, j)] - a[((i + 1) % n, (j + 1) % n)]).abs() < 1e-10);
                assert!((a[(i, j)] - a[(j, i)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn circle_is_well_conditioned() {
        let c = ClosedCurve::circle(256, (0.0, 0.0), 1.0).unwrap();
        let sys = RobinSystem::assemble(&c).unwrap();
        let k = sys.condition_number();
        assert!(k <= 50.0, "cond {k}");
        assert!(sys.warning().is_none());
    }

    #[test]
    fn constant_data_gives_constant_solution() {
        for (r, h) in [(1.0, 1.0), (2.0, 0.5)] {
            let n = 64;
            let c = ClosedCurve::circle(n, (0.3, -0.2), r).unwrap();
            let sys = RobinSystem::assemble(&c).unwrap();
            let sol = sys.solve(&field(FieldKind::Curvature, vec![h; n])).unwrap();
            for v in &sol.u.values {
                assert!((v - h).abs() < 1e-8, "{v}");
            }
            assert!(sol.residual < 1e-10);
        }
    }

    #[test]
    fn linear_solution_on_unit_circle() {
        // u = x: inner normal derivative is -cos θ, so the data is 2 cos θ
        let n = 64;
        let c = ClosedCurve::circle(n, (0.0, 0.0), 1.0).unwrap();
        let sys = RobinSystem::assemble(&c).unwrap();
        let h = field(
            FieldKind::Curvature,
            (0..n).map(|i| 2.0 * param(i, n).cos()).collect(),
        );
        let sol = sys.solve(&h).unwrap();
        for i in 0..n {
            assert!((sol.u.values[i] - param(i, n).cos()).abs() < 1e-8);
        }
        let v = sys.eval_interior(&sol, &[(0.3, 0.2)]);
        assert!((v[0].unwrap() - 0.3).abs() < 1e-7);
        let e = energy_diagnostics(&c, &sol.u, &h).unwrap();
        assert!((e.dirichlet - PI).abs() < 1e-6, "{e:?}");
    }

    #[test]
    fn unit_circle_energies() {
        let n = 64;
        let c = ClosedCurve::circle(n, (0.0, 0.0), 1.0).unwrap();
        let sys = RobinSystem::assemble(&c).unwrap();
        let h = field(FieldKind::Curvature, vec![1.0; n]);
        let sol = sys.solve(&h).unwrap();
        let e = energy_diagnostics(&c, &sol.u, &h).unwrap();
        assert!(e.dirichlet.abs() < 1e-8);
        assert!((e.robin - PI).abs() < 1e-8);
        assert!((e.bound - PI).abs() < 1e-12);
        let v = sys.eval_interior(&sol, &[(0.0, 0.0), (2.0, 0.0)]);
        assert!((v[0].unwrap() - 1.0).abs() < 1e-8);
        assert!(v[1].is_none());
    }

    #[test]
    fn manufactured_trace_converges_fast() {
        let err = |n: usize| {
            let c = ellipse(n);
            let sys = RobinSystem::assemble(&c).unwrap();
            let sol = sys.solve(&robin_data(&c, cubic, cubic_grad)).unwrap();
            (0..n)
                .map(|i| {
                    let (x, y) = c.point(i);
                    (sol.u.values[i] - cubic(x, y)).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e16, e32, e64) = (err(16), err(32), err(64));
        assert!(e32 < e16 / 16.0, "{e16} {e32}");
        assert!(e64 < e32 / 16.0 || e64 < 1e-12, "{e32} {e64}");
        assert!(e64 < 1e-10, "{e64}");
    }

    #[test]
    fn near_boundary_evaluation() {
        let n = 128;
        let c = ellipse(n);
        let sys = RobinSystem::assemble(&c).unwrap();
        let sol = sys.solve(&robin_data(&c, cubic, cubic_grad)).unwrap();
        let pts = [(0.995, 0.0), (0.0, 0.598), (0.7, 0.42), (0.0, 0.55)];
        let v = sys.eval_interior(&sol, &pts);
        for (p, v) in pts.iter().zip(v) {
            let v = v.unwrap();
            assert!((v - cubic(p.0, p.1)).abs() < 1e-6, "{p:?}: {v}");
        }
    }

    #[test]
    fn interior_values_are_harmonic() {
        let n = 128;
        let c = ClosedCurve::from_fn(n, |t| {
            let r = 1.0 + 0.2 * (3.0 * t).cos();
            (r * t.cos(), r * t.sin())
        })
        .unwrap();
        let sys = RobinSystem::assemble(&c).unwrap();
        let h = field(
            FieldKind::Curvature,
            (0..n).map(|i| 1.0 + (2.0 * param(i, n)).sin()).collect(),
        );
        let sol = sys.solve(&h).unwrap();
        let step = 1e-3;
        let mut state = 7u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..10 {
            let (r, t) = (0.6 * next(), 2.0 * PI * next());
            let p = (r * t.cos(), r * t.sin());
            let pts = [
                p,
                (p.0 + step, p.1),
                (p.0 - step, p.1),
                (p.0, p.1 + step),
                (p.0, p.1 - step),
            ];
            let v: Vec<f64> = sys
                .eval_interior(&sol, &pts)
                .into_iter()
                .map(Option::unwrap)
                .collect();
            let lap = (v[1] + v[2] + v[3] + v[4] - 4.0 * v[0]) / (step * step);
            assert!(lap.abs() <= 1e-4, "{lap}");
        }
    }

    #[test]
    fn solution_depends_continuously_on_the_curve() {
        let n = 128;
        let c = ellipse(n);
        let g = c.geometry().unwrap();
        let data = |c: &ClosedCurve| {
            let g = c.geometry().unwrap();
            field(FieldKind::Curvature, g.curvature.clone())
        };
        let base = RobinSystem::assemble(&c).unwrap().solve(&data(&c)).unwrap();
        let ratio = |eps: f64| {
            let p = ClosedCurve::new(
                (0..n)
                    .map(|i| c.x[i] + eps * (2.0 * param(i, n)).cos() * g.nx[i])
                    .collect(),
                (0..n)
                    .map(|i| c.y[i] + eps * (2.0 * param(i, n)).cos() * g.ny[i])
                    .collect(),
            )
            .unwrap();
            let s = RobinSystem::assemble(&p).unwrap().solve(&data(&p)).unwrap();
            let d = (0..n)
                .map(|i| (s.u.values[i] - base.u.values[i]).abs())
                .fold(0.0, f64::max);
            d / eps
        };
        let (r2, r3) = (ratio(1e-2), ratio(1e-3));
        assert!(r2 / r3 < 3.0 && r3 / r2 < 3.0, "{r2} {r3}");
    }

    #[test]
    fn narrow_waist_warns() {
        let w = 5e-5;
        let c = ClosedCurve::from_fn(256, |t| {
            let x = t.cos();
            (x, t.sin() * (w + x * x))
        })
        .unwrap();
        let sys = RobinSystem::assemble(&c).unwrap();
        let warning = sys
            .warning()
            .unwrap_or_else(|| panic!("gap {}", sys.min_gap()));
        assert!(warning.min_gap < 2e-4, "{}", warning.min_gap);
        assert!(warning.condition_estimate > 1.0);
    }
}
