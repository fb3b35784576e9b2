use serde::Serialize;

use super::{CylinderField, DecayError};

/// Slices at or below this norm are excluded from decay fits.
pub const DEFAULT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub delta_hat: f64,
    /// Intercept of log‖ζ‖ = b − δτ.
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
    /// The record never fell below 0.1·initial; the tail half was fitted instead.
    pub tail_fallback: bool,
    /// e^{b − δτ} at every slice.
    pub fitted: Vec<f64>,
}

pub fn decay_rate(field: &CylinderField, floor: f64) -> Result<DecayFit, DecayError> {
    decay_rate_series(&field.tau, &field.slice_norms, floor)
}

/// Least-squares slope of log-norms over slices with norm in (floor, 0.1·norm₀).
pub fn decay_rate_series(tau: &[f64], norms: &[f64], floor: f64) -> Result<DecayFit, DecayError> {
    if tau.len() != norms.len() || tau.is_empty() {
        return Err(DecayError::ModeMismatch("τ and norm series differ in length".into()));
    }
    let initial = norms[0];
    let mut idx: Vec<usize> = (0..norms.len()).filter(|&i| norms[i] > floor && norms[i] < 0.1 * initial).collect();
    let mut tail_fallback = false;
    if idx.is_empty() {
        let half = tau[tau.len() - 1] / 2.0;
        idx = (0..norms.len()).filter(|&i| tau[i] >= half && norms[i] > floor).collect();
        tail_fallback = true;
    }
    if idx.len() < 10 {
        return Err(DecayError::InsufficientDecay { points: idx.len() });
    }
    let m = idx.len() as f64;
    let xs: Vec<f64> = idx.iter().map(|&i| tau[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| norms[i].ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys.iter()).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let ss_res: f64 = xs.iter().zip(ys.iter()).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let fitted = tau.iter().map(|t| (intercept + slope * t).exp()).collect();
    Ok(DecayFit { delta_hat: -slope, intercept, r_squared, points: idx.len(), tail_fallback, fitted })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_exponential() {
        let tau: Vec<f64> = (0..200).map(|i| i as f64 * 0.1).collect();
        let norms: Vec<f64> = tau.iter().map(|t| 5.0 * (-0.7 * t).exp()).collect();
        let fit = decay_rate_series(&tau, &norms, DEFAULT_FLOOR).unwrap();
        assert!((fit.delta_hat - 0.7).abs() < 1e-6);
        assert!((fit.intercept - 5f64.ln()).abs() < 1e-6);
        assert!(!fit.tail_fallback && fit.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn constant_record_uses_tail() {
        let tau: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let fit = decay_rate_series(&tau, &vec![2.0; 40], DEFAULT_FLOOR).unwrap();
        assert!(fit.tail_fallback && fit.delta_hat.abs() < 1e-14);
    }

    #[test]
    fn too_short_window() {
        let tau: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let norms: Vec<f64> = tau.iter().map(|t| (-3.0 * t).exp()).collect();
        assert!(matches!(decay_rate_series(&tau, &norms, 1e-3), Err(DecayError::InsufficientDecay { .. })));
    }
}
