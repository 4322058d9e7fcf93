//! Independent numerical oracles shared by the integration tests. These
//! deliberately avoid the library's own quadrature and propagator paths.
#![allow(dead_code)] // each test binary uses its own subset

use nalgebra::{DMatrix, DVector};

/// Dormand–Prince 5(4) adaptive integration of `dp/dt = W p` from `t0` to
/// `t1`, mixed absolute/relative tolerance `tol`.
pub fn rk45_linear(w: &DMatrix<f64>, p0: &DVector<f64>, t_span: f64, tol: f64) -> DVector<f64> {
    const A21: f64 = 1.0 / 5.0;
    const A31: f64 = 3.0 / 40.0;
    const A32: f64 = 9.0 / 40.0;
    const A41: f64 = 44.0 / 45.0;
    const A42: f64 = -56.0 / 15.0;
    const A43: f64 = 32.0 / 9.0;
    const A51: f64 = 19372.0 / 6561.0;
    const A52: f64 = -25360.0 / 2187.0;
    const A53: f64 = 64448.0 / 6561.0;
    const A54: f64 = -212.0 / 729.0;
    const A61: f64 = 9017.0 / 3168.0;
    const A62: f64 = -355.0 / 33.0;
    const A63: f64 = 46732.0 / 5247.0;
    const A64: f64 = 49.0 / 176.0;
    const A65: f64 = -5103.0 / 18656.0;
    const B1: f64 = 35.0 / 384.0;
    const B3: f64 = 500.0 / 1113.0;
    const B4: f64 = 125.0 / 192.0;
    const B5: f64 = -2187.0 / 6784.0;
    const B6: f64 = 11.0 / 84.0;
    // embedded 4th-order weights
    const E1: f64 = 5179.0 / 57600.0;
    const E3: f64 = 7571.0 / 16695.0;
    const E4: f64 = 393.0 / 640.0;
    const E5: f64 = -92097.0 / 339200.0;
    const E6: f64 = 187.0 / 2100.0;
    const E7: f64 = 1.0 / 40.0;

    if t_span == 0.0 {
        return p0.clone();
    }
    let f = |p: &DVector<f64>| w * p;
    let mut t = 0.0;
    let mut p = p0.clone();
    let scale = w.amax().max(1e-30);
    let mut h = (0.01 / scale).min(t_span);

    while t < t_span {
        if t + h > t_span {
            h = t_span - t;
        }
        let k1 = f(&p);
        let k2 = f(&(&p + &k1 * (A21 * h)));
        let k3 = f(&(&p + &k1 * (A31 * h) + &k2 * (A32 * h)));
        let k4 = f(&(&p + &k1 * (A41 * h) + &k2 * (A42 * h) + &k3 * (A43 * h)));
        let k5 = f(&(&p + &k1 * (A51 * h) + &k2 * (A52 * h) + &k3 * (A53 * h) + &k4 * (A54 * h)));
        let k6 = f(&(&p
            + &k1 * (A61 * h)
            + &k2 * (A62 * h)
            + &k3 * (A63 * h)
            + &k4 * (A64 * h)
            + &k5 * (A65 * h)));
        let p5 = &p + (&k1 * B1 + &k3 * B3 + &k4 * B4 + &k5 * B5 + &k6 * B6) * h;
        let k7 = f(&p5);
        let p4 = &p + (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * h;

        let mut err = 0.0f64;
        for i in 0..p.len() {
            let sc = tol + tol * p[i].abs().max(p5[i].abs());
            err = err.max((p5[i] - p4[i]).abs() / sc);
        }
        if err <= 1.0 {
            t += h;
            p = p5;
        }
        let factor = if err > 0.0 {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        } else {
            5.0
        };
        h *= factor;
        if h < 1e-14 * t_span {
            panic!("rk45 step size underflow at t = {t}");
        }
    }
    p
}

/// Composite trapezoid with step halving to relative tolerance `tol`,
/// applied per segment so cusps sit only on segment boundaries.
pub fn trapezoid_refined<F: FnMut(f64) -> f64>(mut f: F, segments: &[f64], tol: f64) -> f64 {
    let mut total = 0.0;
    for win in segments.windows(2) {
        let (a, b) = (win[0], win[1]);
        let mut n = 64usize;
        let mut h = (b - a) / n as f64;
        let mut sum = 0.5 * (f(a) + f(b));
        for i in 1..n {
            sum += f(a + h * i as f64);
        }
        let mut value = sum * h;
        loop {
            // refine: add midpoints of the current grid
            let mut new_sum = 0.0;
            for i in 0..n {
                new_sum += f(a + h * (i as f64 + 0.5));
            }
            let refined = 0.5 * value + 0.5 * h * new_sum;
            n *= 2;
            h *= 0.5;
            let done = (refined - value).abs() <= tol * refined.abs().max(1e-300);
            value = refined;
            if done || n > (1 << 22) {
                assert!(done, "trapezoid oracle failed to converge on [{a}, {b}]");
                break;
            }
        }
        total += value;
    }
    total
}

/// Deterministic pseudo-random stream (xorshift64*), good enough for
/// sampling test parameters without pulling in an RNG dependency.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        Self(seed.max(1))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.0 = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        lo + (hi - lo) * u
    }
}
