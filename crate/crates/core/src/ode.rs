//! Dormand–Prince 5(4) for small autonomous systems `y' = f(y)`.

use std::ops::ControlFlow;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: u64,
    pub max_step: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_steps: 2_000_000,
            max_step: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdeStatus {
    /// Integrated all the way to `t_end`.
    Finished,
    /// The observer asked to stop.
    Halted,
    StepLimit,
    StepUnderflow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOutcome<const D: usize> {
    pub t: f64,
    pub y: [f64; D],
    pub dy: [f64; D],
    pub steps: u64,
    pub status: OdeStatus,
}

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
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combine<const D: usize>(y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]) -> [f64; D] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        *o += h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>();
    }
    out
}

/// Integrates from `t = 0` to `t_end` (which may be negative, meaning the
/// flow is run backwards). `observe` sees the initial point and every accepted
/// step as `(t, y, f(y))` and may halt the integration.
pub fn dopri5<const D: usize, F, O>(f: F, y0: [f64; D], t_end: f64, tol: &Tolerances, mut observe: O) -> OdeOutcome<D>
where
    F: Fn(&[f64; D]) -> [f64; D],
    O: FnMut(f64, &[f64; D], &[f64; D]) -> ControlFlow<()>,
{
    let dir = if t_end < 0.0 { -1.0 } else { 1.0 };
    let span = t_end.abs();
    let rhs = |y: &[f64; D]| f(y).map(|v| dir * v);

    let mut t = 0.0;
    let mut y = y0;
    let mut k1 = rhs(&y);
    let mut steps = 0;
    let outcome = |t: f64, y: [f64; D], k: [f64; D], steps, status| OdeOutcome {
        t: dir * t,
        y,
        dy: k.map(|v| dir * v),
        steps,
        status,
    };

    if observe(0.0, &y, &k1.map(|v| dir * v)).is_break() {
        return outcome(t, y, k1, steps, OdeStatus::Halted);
    }
    let mut h = span.min(1e-2).min(tol.max_step);
    while t < span {
        if steps >= tol.max_steps {
            return outcome(t, y, k1, steps, OdeStatus::StepLimit);
        }
        if h < 1e-14 * t.max(1.0) {
            return outcome(t, y, k1, steps, OdeStatus::StepUnderflow);
        }
        let last = t + h >= span;
        if last {
            h = span - t;
        }
        let k2 = rhs(&combine(&y, h, &[(A21, &k1)]));
        let k3 = rhs(&combine(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = rhs(&combine(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = rhs(&combine(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = rhs(&combine(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let y_new = combine(&y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = rhs(&y_new);

        let mut err = 0.0;
        for i in 0..D {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / scale).powi(2);
        }
        let err = (err / D as f64).sqrt();

        if err.is_finite() && err <= 1.0 {
            t = if last { span } else { t + h };
            y = y_new;
            k1 = k7;
            steps += 1;
            if observe(dir * t, &y, &k1.map(|v| dir * v)).is_break() {
                return outcome(t, y, k1, steps, OdeStatus::Halted);
            }
            let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = (h * grow).min(tol.max_step);
        } else {
            let shrink = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
            h *= shrink;
        }
    }
    outcome(t, y, k1, steps, OdeStatus::Finished)
}
