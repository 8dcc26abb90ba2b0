//! Gauss–Legendre rules and the standard mollifier.

use std::sync::OnceLock;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

const PANELS: usize = 16;
const ORDER: usize = 24;

fn rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(ORDER))
}

fn raw_bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (xs, ws) = rule();
    let h = (b - a) / PANELS as f64;
    let mut sum = 0.0;
    for p in 0..PANELS {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        for (x, w) in xs.iter().zip(ws) {
            sum += w * f(mid + 0.5 * h * x);
        }
    }
    sum * 0.5 * h
}

fn bump_mass() -> f64 {
    static MASS: OnceLock<f64> = OnceLock::new();
    *MASS.get_or_init(|| integrate(raw_bump, -1.0, 1.0))
}

/// Standard mollifier on `[-1, 1]` with unit mass.
pub fn bump(x: f64) -> f64 {
    raw_bump(x) / bump_mass()
}

/// Cumulative mass `∫_{-1}^{x} bump`.
pub fn bump_cdf(x: f64) -> f64 {
    if x <= -1.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else if x <= 0.0 {
        integrate(bump, -1.0, x)
    } else {
        1.0 - integrate(bump, x, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn bump_cdf_is_monotone_and_symmetric() {
        assert_eq!(bump_cdf(-1.0), 0.0);
        assert_eq!(bump_cdf(1.0), 1.0);
        assert!((bump_cdf(0.0) - 0.5).abs() < 1e-13);
        let mut prev = 0.0;
        for k in 0..=200 {
            let x = -1.0 + 0.01 * k as f64;
            let c = bump_cdf(x);
            assert!(c >= prev - 1e-15);
            assert!((c + bump_cdf(-x) - 1.0).abs() < 1e-13);
            prev = c;
        }
    }
}
