use nalgebra::DVector;
use serde::Serialize;

use super::DecayError;
use crate::contact_core::{self, ContactChart, Point};
use crate::linalg;

/// Samples w(τ_i, t_j) of a map [0, R] × S¹ → chart, τ_i = iR/(n_tau − 1), t_j = j/n_t.
#[derive(Debug, Clone)]
pub struct CylinderMap {
    pub r: f64,
    pub n_tau: usize,
    pub n_t: usize,
    /// Index i·n_t + j.
    pub points: Vec<Point>,
}

impl CylinderMap {
    pub fn sample<F>(r: f64, n_tau: usize, n_t: usize, w: F) -> Self
    where
        F: Fn(f64, f64) -> Point,
    {
        let mut points = Vec::with_capacity(n_tau * n_t);
        for i in 0..n_tau {
            for j in 0..n_t {
                points.push(w(r * i as f64 / (n_tau - 1) as f64, j as f64 / n_t as f64));
            }
        }
        CylinderMap { r, n_tau, n_t, points }
    }

    pub fn at(&self, i: usize, j: usize) -> &Point {
        &self.points[i * self.n_t + j]
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ActionCharge {
    /// 𝒯 = E^π + ∫_{τ=0} w*λ.
    pub action: f64,
    /// 𝒬 = ∫_{τ=0} w*λ∘j = −∫ λ(∂_τw)(0, t) dt.
    pub charge: f64,
    /// E^π = ½∫(|π∂_τw|² + |π∂_tw|²) in the triad metric of a compatible J.
    pub pi_energy: f64,
}

/// Action, charge and π-energy by trapezoid quadrature; ∂_t spectral, ∂_τ second-order differences.
pub fn action_charge(map: &CylinderMap, chart: &ContactChart) -> Result<ActionCharge, DecayError> {
    let (nt, ntau) = (map.n_t, map.n_tau);
    if ntau < 3 || nt < 4 {
        return Err(DecayError::ResolutionTooCoarse("need n_tau ≥ 3 and n_t ≥ 4".into()));
    }
    let h = map.r / (ntau - 1) as f64;
    let diff = |a: &Point, b: &Point| chart.wrap_difference(a, b);
    let d_tau = |i: usize, j: usize| -> DVector<f64> {
        if i == 0 {
            let (w0, w1, w2) = (map.at(0, j), map.at(1, j), map.at(2, j));
            (diff(w1, w0) * 4.0 - diff(w2, w0)) / (2.0 * h)
        } else if i == ntau - 1 {
            let (w0, w1, w2) = (map.at(i, j), map.at(i - 1, j), map.at(i - 2, j));
            (diff(w1, w0) * -4.0 + diff(w2, w0)) / (2.0 * h)
        } else {
            diff(map.at(i + 1, j), map.at(i - 1, j)) / (2.0 * h)
        }
    };
    let mut pi_energy = 0.0;
    let mut boundary_action = 0.0;
    let mut charge = 0.0;
    for i in 0..ntau {
        let slice: Vec<Point> = (0..nt).map(|j| map.at(i, j).clone()).collect();
        let dt = linalg::loop_velocity(&slice, 1.0, diff);
        let weight = if i == 0 || i == ntau - 1 { 0.5 * h } else { h };
        let mut dens = 0.0;
        for j in 0..nt {
            let x = &slice[j];
            let jx = contact_core::compatible_j(chart, x)?;
            let g = contact_core::triad_metric(chart, &jx, x);
            let dtau = d_tau(i, j);
            let (pa, pb) = (contact_core::project_xi(chart, &dtau, x)?, contact_core::project_xi(chart, &dt[j], x)?);
            dens += pa.dot(&(&g * &pa)) + pb.dot(&(&g * &pb));
            if i == 0 {
                boundary_action += chart.lambda_of(x, &dt[j]);
                charge -= chart.lambda_of(x, &dtau);
            }
        }
        pi_energy += 0.5 * weight * dens / nt as f64;
    }
    boundary_action /= nt as f64;
    charge /= nt as f64;
    Ok(ActionCharge { action: pi_energy + boundary_action, charge, pi_energy })
}
