//! Embedded Dormand-Prince 5(4) integrator with adaptive step control.
//!
//! Integrates y' = f(t, y) from t0 to t1 (either direction) for dense f64
//! state vectors, with the FSAL optimization and a standard mixed
//! absolute/relative error norm. Step size underflow surfaces as a
//! stiffness error rather than silent stalling.

use crate::error::{Error, Result};

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
const MAX_STEPS: usize = 2_000_000;

// Dormand-Prince tableau.
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
// Fifth-order solution weights (also the seventh stage position).
const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
// Difference between the 5th- and embedded 4th-order solutions.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate from (t0, y0) to t1. Returns the state at t1.
pub fn dopri5<F>(mut f: F, t0: f64, t1: f64, y0: &[f64], rel_tol: f64, abs_tol: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(rel_tol > 0.0 && abs_tol > 0.0) {
        return Err(Error::Config(format!(
            "ode tolerances must be positive, got rel {rel_tol}, abs {abs_tol}"
        )));
    }
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(y0.to_vec());
    }
    let dir = span.signum();
    let n = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; n]).collect();
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    f(t, &y, &mut k[0]);
    let mut h = dir * (span.abs() / 100.0).min(0.1).max(1e-6);
    let h_floor = 1e-13 * span.abs().max(1.0);

    for _ in 0..MAX_STEPS {
        if (t - t1) * dir >= 0.0 {
            return Ok(y);
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        if h.abs() < h_floor {
            return Err(Error::Stiffness { t });
        }

        // Stages 2..7; the A rows are lower-triangular.
        let a_rows: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
        for (s, a) in a_rows.iter().enumerate() {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, aj) in a.iter().enumerate() {
                    acc += aj * k[j][i];
                }
                stage[i] = y[i] + h * acc;
            }
            f(t + C[s] * h, &stage, &mut k[s + 1]);
        }
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..6 {
                acc += B[j] * k[j][i];
            }
            y_new[i] = y[i] + h * acc;
        }
        f(t + h, &y_new, &mut k[6]);

        // Error norm against the embedded fourth-order solution.
        let mut err_sq = 0.0;
        let mut finite = true;
        for i in 0..n {
            let mut e = 0.0;
            for j in 0..7 {
                e += E[j] * k[j][i];
            }
            e *= h;
            let scale = abs_tol + rel_tol * y[i].abs().max(y_new[i].abs());
            let r = e / scale;
            if !r.is_finite() {
                finite = false;
                break;
            }
            err_sq += r * r;
        }
        let err = if finite { (err_sq / n as f64).sqrt() } else { f64::INFINITY };

        if err <= 1.0 {
            t += h;
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6); // FSAL: last stage is the next first stage.
            let fac = if err == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
            };
            h *= fac;
        } else {
            let fac = if err.is_finite() {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0)
            } else {
                FAC_MIN
            };
            h *= fac;
        }
    }
    Err(Error::Stiffness { t })
}
