//! Self-intersection detection and minimal self-distance of the node
//! polyline of a closed curve.

use std::collections::HashMap;

use crate::geometry::ClosedCurve;

/// Distances below this are tangencies, not transversal crossings.
pub const TOUCH_TOLERANCE: f64 = 1e-9;

/// Chords counted by [`min_gap`] must be this close to normal to both
/// segments (cosine of the angle to each tangent).
const DOUBLE_NORMAL_COS: f64 = 0.02;

/// A transversal crossing of polyline segments `i` and `j` (`i < j`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub i: usize,
    pub j: usize,
    pub point: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct IntersectionReport {
    pub crossings: Vec<Crossing>,
    pub min_gap: f64,
}

impl IntersectionReport {
    pub fn embedded(&self) -> bool {
        self.crossings.is_empty()
    }
}

pub fn self_intersections(curve: &ClosedCurve) -> IntersectionReport {
    IntersectionReport {
        crossings: crossings_hashed(curve),
        min_gap: min_gap(curve),
    }
}

fn segment(curve: &ClosedCurve, i: usize) -> [(f64, f64); 2] {
    let n = curve.len();
    [curve.point(i), curve.point((i + 1) % n)]
}

fn adjacent(i: usize, j: usize, n: usize) -> bool {
    let d = i.abs_diff(j);
    d <= 1 || d == n - 1
}

/// Signed distance of `p` from the line through `a`, `b`.
fn side(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    let (ux, uy) = (b.0 - a.0, b.1 - a.1);
    let len = ux.hypot(uy);
    (ux * (p.1 - a.1) - uy * (p.0 - a.0)) / len
}

fn transversal(s: [(f64, f64); 2], t: [(f64, f64); 2]) -> Option<(f64, f64)> {
    let d1 = side(s[0], s[1], t[0]);
    let d2 = side(s[0], s[1], t[1]);
    let d3 = side(t[0], t[1], s[0]);
    let d4 = side(t[0], t[1], s[1]);
    let strict = |a: f64, b: f64| {
        a.abs() > TOUCH_TOLERANCE && b.abs() > TOUCH_TOLERANCE && (a > 0.0) != (b > 0.0)
    };
    if strict(d1, d2) && strict(d3, d4) {
        let w = d3 / (d3 - d4);
        Some((
            s[0].0 + w * (s[1].0 - s[0].0),
            s[0].1 + w * (s[1].1 - s[0].1),
        ))
    } else {
        None
    }
}

/// O(N²) reference implementation.
pub fn crossings_brute(curve: &ClosedCurve) -> Vec<Crossing> {
    let n = curve.len();
    let mut out = Vec::new();
    for i in 0..n {
        let si = segment(curve, i);
        for j in i + 2..n {
            if adjacent(i, j, n) {
                continue;
            }
            if let Some(point) = transversal(si, segment(curve, j)) {
                out.push(Crossing { i, j, point });
            }
        }
    }
    out
}

/// Crossings via a uniform spatial hash over segment bounding boxes.
pub fn crossings_hashed(curve: &ClosedCurve) -> Vec<Crossing> {
    let n = curve.len();
    let mut cell = 0.0f64;
    for i in 0..n {
        let [a, b] = segment(curve, i);
        cell = cell.max((b.0 - a.0).abs()).max((b.1 - a.1).abs());
    }
    if cell <= 0.0 {
        return Vec::new();
    }
    let key = |v: f64| (v / cell).floor() as i64;
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for i in 0..n {
        let [a, b] = segment(curve, i);
        for gx in key(a.0.min(b.0))..=key(a.0.max(b.0)) {
            for gy in key(a.1.min(b.1))..=key(a.1.max(b.1)) {
                grid.entry((gx, gy)).or_default().push(i);
            }
        }
    }
    let mut pairs = Vec::new();
    for bucket in grid.values() {
        for (k, &i) in bucket.iter().enumerate() {
            for &j in &bucket[k + 1..] {
                let (i, j) = if i < j { (i, j) } else { (j, i) };
                if !adjacent(i, j, n) {
                    pairs.push((i, j));
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
        .into_iter()
        .filter_map(|(i, j)| {
            transversal(segment(curve, i), segment(curve, j)).map(|point| Crossing { i, j, point })
        })
        .collect()
}

/// Closest points between two segments.
fn segment_distance(
    s: [(f64, f64); 2],
    t: [(f64, f64); 2],
) -> (f64, (f64, f64), (f64, f64), f64, f64) {
    let d1 = (s[1].0 - s[0].0, s[1].1 - s[0].1);
    let d2 = (t[1].0 - t[0].0, t[1].1 - t[0].1);
    let r = (s[0].0 - t[0].0, s[0].1 - t[0].1);
    let a = d1.0 * d1.0 + d1.1 * d1.1;
    let e = d2.0 * d2.0 + d2.1 * d2.1;
    let f = d2.0 * r.0 + d2.1 * r.1;
    let c = d1.0 * r.0 + d1.1 * r.1;
    let b = d1.0 * d2.0 + d1.1 * d2.1;
    let denom = a * e - b * b;
    if denom <= 1e-10 * a * e {
        // parallel: the distance is constant on the overlap, take its middle
        let u0 = -c / a;
        let u1 = u0 + b / a;
        let (lo, hi) = (u0.min(u1).max(0.0), u0.max(u1).min(1.0));
        if lo <= hi {
            let sp = 0.5 * (lo + hi);
            let p = (s[0].0 + sp * d1.0, s[0].1 + sp * d1.1);
            let tp = (((p.0 - t[0].0) * d2.0 + (p.1 - t[0].1) * d2.1) / e).clamp(0.0, 1.0);
            let q = (t[0].0 + tp * d2.0, t[0].1 + tp * d2.1);
            return ((p.0 - q.0).hypot(p.1 - q.1), p, q, sp, tp);
        }
    }
    let mut sp = if denom > 0.0 {
        ((b * f - c * e) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut tp = (b * sp + f) / e;
    if tp < 0.0 {
        tp = 0.0;
        sp = (-c / a).clamp(0.0, 1.0);
    } else if tp > 1.0 {
        tp = 1.0;
        sp = ((b - c) / a).clamp(0.0, 1.0);
    }
    let p = (s[0].0 + sp * d1.0, s[0].1 + sp * d1.1);
    let q = (t[0].0 + tp * d2.0, t[0].1 + tp * d2.1);
    ((p.0 - q.0).hypot(p.1 - q.1), p, q, sp, tp)
}

/// Minimum distance between non-adjacent segments joined by a chord that is
/// (nearly) normal to both. Neighbouring parts of the same arc never form
/// such a chord, so this measures the width across the curve; on a circle it
/// is the diameter.
pub fn min_gap(curve: &ClosedCurve) -> f64 {
    min_gap_filtered(curve, |_, _| true)
}

/// [`min_gap`] restricted to node pairs accepted by `keep`.
pub fn min_gap_filtered(curve: &ClosedCurve, keep: impl Fn(usize, usize) -> bool) -> f64 {
    let n = curve.len();
    let dirs: Vec<(f64, f64)> = (0..n).map(|i| unit(segment(curve, i))).collect();
    // vertex tangents, interpolated linearly along each segment
    let vertex: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let (a, b) = (dirs[(i + n - 1) % n], dirs[i]);
            let (x, y) = (a.0 + b.0, a.1 + b.1);
            let l = x.hypot(y);
            (x / l, y / l)
        })
        .collect();
    let tangent = |i: usize, w: f64| {
        let (a, b) = (vertex[i], vertex[(i + 1) % n]);
        let (x, y) = ((1.0 - w) * a.0 + w * b.0, (1.0 - w) * a.1 + w * b.1);
        let l = x.hypot(y);
        (x / l, y / l)
    };
    let mut best = f64::INFINITY;
    for i in 0..n {
        let si = segment(curve, i);
        for j in i + 2..n {
            if adjacent(i, j, n) || !keep(i, j) {
                continue;
            }
            let (d, p, q, sp, tp) = segment_distance(si, segment(curve, j));
            if d >= best {
                continue;
            }
            if d > TOUCH_TOLERANCE {
                let c = ((q.0 - p.0) / d, (q.1 - p.1) / d);
                let (ti, tj) = (tangent(i, sp), tangent(j, tp));
                if (c.0 * ti.0 + c.1 * ti.1).abs() > DOUBLE_NORMAL_COS
                    || (c.0 * tj.0 + c.1 * tj.1).abs() > DOUBLE_NORMAL_COS
                {
                    continue;
                }
            }
            best = d;
        }
    }
    best
}

fn unit(s: [(f64, f64); 2]) -> (f64, f64) {
    let (dx, dy) = (s[1].0 - s[0].0, s[1].1 - s[0].1);
    let l = dx.hypot(dy);
    (dx / l, dy / l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::param;
    use std::f64::consts::PI;

    #[test]
    fn circle_is_embedded_with_diameter_gap() {
        let n = 128;
        let c = ClosedCurve::circle(n, (0.0, 0.0), 1.0).unwrap();
        let r = self_intersections(&c);
        assert!(r.embedded());
        let inradius = (PI / n as f64).cos();
        assert!((r.min_gap - 2.0 * inradius).abs() < 1e-3, "{}", r.min_gap);
    }

    #[test]
    fn lemniscate_has_one_crossing() {
        let n = 200;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = param(i, n) + 0.01;
                t.cos() / (1.0 + t.sin().powi(2))
            })
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let t = param(i, n) + 0.01;
                t.sin() * t.cos() / (1.0 + t.sin().powi(2))
            })
            .collect();
        let c = ClosedCurve::from_raw(x, y);
        let fast = crossings_hashed(&c);
        let slow = crossings_brute(&c);
        assert_eq!(fast, slow);
        assert_eq!(fast.len(), 1);
        let p = fast[0].point;
        assert!(p.0.abs() < 1e-2 && p.1.abs() < 1e-2);
    }

    #[test]
    fn hashed_matches_brute_on_wavy_curve() {
        let n = 300;
        let c = ClosedCurve::from_raw(
            (0..n)
                .map(|i| {
                    let s = param(i, n);
                    (1.0 + 0.6 * (5.0 * s).cos()) * s.cos() + 0.3 * (7.0 * s).sin()
                })
                .collect(),
            (0..n)
                .map(|i| {
                    let s = param(i, n);
                    (1.0 + 0.6 * (5.0 * s).cos()) * s.sin()
                })
                .collect(),
        );
        assert_eq!(crossings_hashed(&c), crossings_brute(&c));
    }

    #[test]
    fn collinear_overlap_is_touching_not_crossing() {
        // two squares sharing an edge segment, traced as one loop
        let pts = [
            (0.0, 0.0),
            (1.0, 0.0),
            (2.0, 0.0),
            (2.0, 1.0),
            (1.0, 1.0),
            (1.0, 0.0),
            (1.0, -1.0),
            (0.0, -1.0),
        ];
        let c = ClosedCurve::from_raw(
            pts.iter().map(|p| p.0).collect(),
            pts.iter().map(|p| p.1).collect(),
        );
        assert!(crossings_brute(&c).is_empty());
    }
}
