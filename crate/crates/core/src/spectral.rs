//! Periodic spectral differentiation on a uniform grid over `[0, 2π)`.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

fn wavenumber(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// `order`-th derivative of periodic samples `f(2π i / n)`.
///
/// For odd orders the Nyquist mode is dropped so that derivatives of real
/// data stay real.
pub fn derivative(f: &[f64], order: u32) -> Vec<f64> {
    let n = f.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    let i = Complex64::new(0.0, 1.0);
    for (k, c) in buf.iter_mut().enumerate() {
        let kk = wavenumber(k, n);
        if n % 2 == 0 && k == n / 2 && order % 2 == 1 {
            *c = Complex64::new(0.0, 0.0);
            continue;
        }
        *c *= (i * kk).powu(order);
    }
    inv.process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|c| c.re * scale).collect()
}

/// Splits `∫_0^s f` into `mean * s + p(s)` with `p` periodic, returning the
/// samples of `p` at the grid nodes and `mean`.
pub fn antiderivative(f: &[f64]) -> (Vec<f64>, f64) {
    let n = f.len();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    let scale = 1.0 / n as f64;
    let mean = buf[0].re * scale;
    let i = Complex64::new(0.0, 1.0);
    buf[0] = Complex64::new(0.0, 0.0);
    for k in 1..n {
        if n % 2 == 0 && k == n / 2 {
            buf[k] = Complex64::new(0.0, 0.0);
            continue;
        }
        buf[k] /= i * wavenumber(k, n);
    }
    inv.process(&mut buf);
    let p0 = buf[0].re * scale;
    let p = buf.iter().map(|c| c.re * scale - p0).collect();
    (p, mean)
}

/// Evaluates the trigonometric interpolant of periodic samples at `t`.
pub struct TrigInterpolant {
    coeffs: Vec<Complex64>,
}

impl TrigInterpolant {
    pub fn new(f: &[f64]) -> Self {
        let n = f.len();
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(n);
        let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fwd.process(&mut buf);
        let scale = 1.0 / n as f64;
        for c in buf.iter_mut() {
            *c *= scale;
        }
        TrigInterpolant { coeffs: buf }
    }

    /// Value and first derivative at parameter `t`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let n = self.coeffs.len();
        let mut val = self.coeffs[0].re;
        let mut der = 0.0;
        let step = Complex64::from_polar(1.0, t);
        let mut rot = step;
        for k in 1..n.div_ceil(2) {
            // pair k with n - k
            let c = self.coeffs[k];
            let term = c * rot;
            val += 2.0 * term.re;
            der += -2.0 * k as f64 * term.im;
            rot *= step;
        }
        if n % 2 == 0 {
            let c = self.coeffs[n / 2];
            val += c.re * (t * (n / 2) as f64).cos();
        }
        (val, der)
    }
}

/// Second-derivative matrix of the periodic spectral interpolant, row-major.
pub fn second_derivative_matrix(n: usize) -> Vec<f64> {
    let mut col = vec![0.0; n];
    let mut unit = vec![0.0; n];
    unit[0] = 1.0;
    let d = derivative(&unit, 2);
    col.copy_from_slice(&d);
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            // circulant: (D e_j)_i = d[(i - j) mod n]
            m[i * n + j] = col[(i + n - j) % n];
        }
    }
    m
}
