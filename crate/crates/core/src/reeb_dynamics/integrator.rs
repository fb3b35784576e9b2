//! Explicit Runge-Kutta integrators on `DVector` states.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    /// Dormand-Prince 5(4) with error control.
    Rk45 { rtol: f64, atol: f64 },
    /// Classical RK4 with at most `max_step` per step.
    Rk4 { max_step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { method: Method::Rk45 { rtol: 1e-10, atol: 1e-12 }, max_steps: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepFailure<E> {
    Rhs(E),
    StepUnderflow { t: f64 },
    TooManySteps { t: f64 },
}

/// Integrate y' = f(t, y) from t0 to t1.
pub fn integrate<E, F>(mut f: F, t0: f64, y0: &DVector<f64>, t1: f64, cfg: &IntegratorConfig) -> Result<DVector<f64>, StepFailure<E>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>, E>,
{
    if t1 == t0 {
        return Ok(y0.clone());
    }
    match cfg.method {
        Method::Rk4 { max_step } => rk4(&mut f, t0, y0, t1, max_step),
        Method::Rk45 { rtol, atol } => dopri5(&mut f, t0, y0, t1, rtol, atol, cfg.max_steps),
    }
}

fn rk4<E, F>(f: &mut F, t0: f64, y0: &DVector<f64>, t1: f64, max_step: f64) -> Result<DVector<f64>, StepFailure<E>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>, E>,
{
    let span = t1 - t0;
    let n = (span.abs() / max_step).ceil().max(1.0) as usize;
    let h = span / n as f64;
    let mut y = y0.clone();
    for i in 0..n {
        let t = t0 + i as f64 * h;
        let k1 = f(t, &y).map_err(StepFailure::Rhs)?;
        let k2 = f(t + 0.5 * h, &(&y + &k1 * (0.5 * h))).map_err(StepFailure::Rhs)?;
        let k3 = f(t + 0.5 * h, &(&y + &k2 * (0.5 * h))).map_err(StepFailure::Rhs)?;
        let k4 = f(t + h, &(&y + &k3 * h)).map_err(StepFailure::Rhs)?;
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok(y)
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// 5th-order weights minus embedded 4th-order weights.
const E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

fn dopri5<E2, F>(
    f: &mut F,
    t0: f64,
    y0: &DVector<f64>,
    t1: f64,
    rtol: f64,
    atol: f64,
    max_steps: usize,
) -> Result<DVector<f64>, StepFailure<E2>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>, E2>,
{
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let mut t = t0;
    let mut y = y0.clone();
    let mut k1 = f(t, &y).map_err(StepFailure::Rhs)?;
    let scale0 = y.iter().map(|v| atol + rtol * v.abs()).fold(f64::INFINITY, f64::min);
    let slope = k1.amax().max(1e-12);
    let mut h = (0.01 * span).min(0.1 * (scale0 / slope).powf(0.2)).max(1e-6 * span);
    let mut steps = 0;
    loop {
        let remaining = (t1 - t) * dir;
        if remaining <= 1e-14 * span.max(1.0) {
            return Ok(y);
        }
        if steps >= max_steps {
            return Err(StepFailure::TooManySteps { t });
        }
        steps += 1;
        let h_try = h.min(remaining);
        if h_try < 1e-14 * span.max(t.abs()) {
            return Err(StepFailure::StepUnderflow { t });
        }
        let hs = h_try * dir;
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
        k.push(k1.clone());
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate().take(s) {
                if A[s][j] != 0.0 {
                    ys.axpy(hs * A[s][j], kj, 1.0);
                }
            }
            k.push(f(t + C[s] * hs, &ys).map_err(StepFailure::Rhs)?);
        }
        let mut y_new = y.clone();
        for (j, kj) in k.iter().enumerate().take(6) {
            if A[6][j] != 0.0 {
                y_new.axpy(hs * A[6][j], kj, 1.0);
            }
        }
        let mut err_sq = 0.0;
        for i in 0..y.len() {
            let e: f64 = (0..7).map(|s| E[s] * k[s][i]).sum::<f64>() * hs;
            let sc = atol + rtol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / sc).powi(2);
        }
        let err = (err_sq / y.len() as f64).sqrt();
        if err <= 1.0 {
            t += hs;
            y = y_new;
            k1 = k.pop().expect("seven stages");
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = h_try * fac;
        } else {
            h = h_try * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
        }
    }
}
