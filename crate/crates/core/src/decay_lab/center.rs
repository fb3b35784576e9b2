use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::DecayError;
use crate::contact_core::{self, ContactChart, ContactError, Point};
use crate::linalg;
use crate::reeb_dynamics::{self, IntegratorConfig};

/// A locus Q of closed Reeb orbits with its flow, contact form θ and chart exponential map.
///
/// Loop points carry Q coordinates followed by normal (fiber) coordinates; E(x, y) is the
/// chart difference y − x reduced by the periods, so D_xE = −I and D_yE = I.
pub trait ReebLocusModel: Sync {
    fn q_dim(&self) -> usize;
    fn normal_dim(&self) -> usize;
    fn reeb(&self, q: &Point) -> Result<DVector<f64>, DecayError>;
    fn theta(&self, q: &Point) -> DVector<f64>;
    fn flow(&self, q: &Point, s: f64) -> Result<Point, DecayError>;
    fn flow_derivative(&self, q: &Point, s: f64) -> Result<DMatrix<f64>, DecayError>;
    fn log(&self, x: &Point, y: &Point) -> DVector<f64>;
    fn tube_radius(&self) -> f64;

    fn project(&self, x: &Point) -> Point {
        x.rows(0, self.q_dim()).into_owned()
    }

    fn normal_part(&self, x: &Point) -> DVector<f64> {
        x.rows(self.q_dim(), self.normal_dim()).into_owned()
    }
}

/// Q = ℝ^d/ℤ^d with constant X_θ, θ = X_θ/|X_θ|², inside Q × ℝ^k.
#[derive(Debug, Clone)]
pub struct FlatTorus {
    pub reeb: DVector<f64>,
    pub normal_dim: usize,
    pub tube_radius: f64,
}

impl FlatTorus {
    pub fn new(reeb: DVector<f64>, normal_dim: usize, tube_radius: f64) -> Self {
        FlatTorus { reeb, normal_dim, tube_radius }
    }

    /// m = mean_j(q̃_j − T t_j X_θ) over the unwrapped projected loop.
    pub fn closed_form_center(&self, gamma: &[Point], period: f64) -> Point {
        let n = gamma.len();
        let mut lift = self.project(&gamma[0]);
        let mut acc = DVector::zeros(self.q_dim());
        for j in 0..n {
            if j > 0 {
                lift += self.log(&self.project(&gamma[j - 1]), &self.project(&gamma[j]));
            }
            acc += &lift - &self.reeb * (period * j as f64 / n as f64);
        }
        acc / n as f64
    }
}

impl ReebLocusModel for FlatTorus {
    fn q_dim(&self) -> usize {
        self.reeb.len()
    }
    fn normal_dim(&self) -> usize {
        self.normal_dim
    }
    fn reeb(&self, _q: &Point) -> Result<DVector<f64>, DecayError> {
        Ok(self.reeb.clone())
    }
    fn theta(&self, _q: &Point) -> DVector<f64> {
        &self.reeb / self.reeb.norm_squared()
    }
    fn flow(&self, q: &Point, s: f64) -> Result<Point, DecayError> {
        Ok(q + &self.reeb * s)
    }
    fn flow_derivative(&self, _q: &Point, _s: f64) -> Result<DMatrix<f64>, DecayError> {
        Ok(DMatrix::identity(self.q_dim(), self.q_dim()))
    }
    fn log(&self, x: &Point, y: &Point) -> DVector<f64> {
        (y - x).map(|d| d - d.round())
    }
    fn tube_radius(&self) -> f64 {
        self.tube_radius
    }
}

/// A contact chart all of whose points lie on closed Reeb orbits (Q = the chart).
#[derive(Debug, Clone)]
pub struct ChartReebModel {
    pub chart: ContactChart,
    pub tube_radius: f64,
    pub integrator: IntegratorConfig,
}

impl ChartReebModel {
    pub fn new(chart: ContactChart, tube_radius: f64) -> Self {
        ChartReebModel { chart, tube_radius, integrator: IntegratorConfig::default() }
    }
}

impl ReebLocusModel for ChartReebModel {
    fn q_dim(&self) -> usize {
        self.chart.dim()
    }
    fn normal_dim(&self) -> usize {
        0
    }
    fn reeb(&self, q: &Point) -> Result<DVector<f64>, DecayError> {
        Ok(reeb_dynamics::reeb_rhs(&self.chart, q)?)
    }
    fn theta(&self, q: &Point) -> DVector<f64> {
        self.chart.lambda_at(q)
    }
    fn flow(&self, q: &Point, s: f64) -> Result<Point, DecayError> {
        if s == 0.0 {
            return Ok(q.clone());
        }
        let tr = reeb_dynamics::flow_with(&self.chart, q, s, 1, &self.integrator)?;
        Ok(tr.points[1].clone())
    }
    fn flow_derivative(&self, q: &Point, s: f64) -> Result<DMatrix<f64>, DecayError> {
        Ok(reeb_dynamics::flow_variational(&self.chart, q, s, &self.integrator)?.1)
    }
    fn log(&self, x: &Point, y: &Point) -> DVector<f64> {
        self.chart.wrap_difference(y, x)
    }
    fn tube_radius(&self) -> f64 {
        self.tube_radius
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CenterOfMassOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for CenterOfMassOptions {
    fn default() -> Self {
        CenterOfMassOptions { max_iter: 12, tol: 1e-12 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CenterOfMassResult {
    pub m: Vec<f64>,
    /// h(t_j), t_j = j/N, with h(t + 1) = h(t) + 1.
    pub h: Vec<f64>,
    /// |∫E(m, φ^{−Th}γ) dt|.
    pub mean_residual: f64,
    /// max_j |θ(m)(E_j)|.
    pub xi_residual: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
    pub tube_distance: f64,
}

impl CenterOfMassResult {
    pub fn residual(&self) -> f64 {
        self.mean_residual.max(self.xi_residual)
    }
}

struct Eval {
    f: DVector<f64>,
    e: Vec<DVector<f64>>,
    xs: Vec<DVector<f64>>,
}

fn evaluate(model: &dyn ReebLocusModel, q: &[Point], period: f64, m: &Point, h: &[f64]) -> Result<Eval, DecayError> {
    let n = q.len();
    let d = model.q_dim();
    let th = model.theta(m);
    let mut f = DVector::zeros(d + n + 1);
    let mut e = Vec::with_capacity(n);
    let mut xs = Vec::with_capacity(n);
    for j in 0..n {
        let y = model.flow(&q[j], -period * h[j])?;
        let ej = model.log(m, &y);
        for k in 0..d {
            f[k] += ej[k] / n as f64;
        }
        f[d + j] = th.dot(&ej);
        f[d + n] += (h[j] - j as f64 / n as f64) / n as f64;
        xs.push(model.reeb(&y)?);
        e.push(ej);
    }
    Ok(Eval { f, e, xs })
}

fn norms(model: &dyn ReebLocusModel, ev: &Eval) -> (f64, f64) {
    let d = model.q_dim();
    let n = ev.e.len();
    (ev.f.rows(0, d).norm(), ev.f.rows(d, n).amax())
}

/// Tube distance: max|e| + max|∂_t e| of the normal part of the loop.
fn tube_distance(model: &dyn ReebLocusModel, gamma: &[Point]) -> f64 {
    if model.normal_dim() == 0 {
        return 0.0;
    }
    let e: Vec<DVector<f64>> = gamma.iter().map(|x| model.normal_part(x)).collect();
    let de = linalg::periodic_derivative(&e, 1.0);
    e.iter().map(|v| v.norm()).fold(0.0, f64::max) + de.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Center of mass m(γ) and reparametrization h of a loop near the Reeb locus.
///
/// Solves ∫E(m, φ^{−Th(t)}γ(t)) dt = 0 and E(m, φ^{−Th(t)}γ(t)) ∈ ker θ(m) for all t,
/// with the normalization ∫(h(t) − t) dt = 0 fixing the Reeb-flow gauge, by Gauss-Newton.
pub fn center_of_mass(model: &dyn ReebLocusModel, gamma: &[Point], period: f64, opts: &CenterOfMassOptions) -> Result<CenterOfMassResult, DecayError> {
    let n = gamma.len();
    if n < 4 {
        return Err(DecayError::ResolutionTooCoarse("need at least 4 loop samples".into()));
    }
    if !(period > 0.0) {
        return Err(DecayError::OutOfRange(format!("period must be positive, got {period}")));
    }
    let dist = tube_distance(model, gamma);
    if dist >= model.tube_radius() {
        return Err(DecayError::OutsideTube { distance: dist, radius: model.tube_radius() });
    }
    let d = model.q_dim();
    let q: Vec<Point> = gamma.iter().map(|x| model.project(x)).collect();
    let mut m = q[0].clone();
    let mut h: Vec<f64> = (0..n).map(|j| j as f64 / n as f64).collect();
    let mut ev = evaluate(model, &q, period, &m, &h)?;
    let mut res = ev.f.amax();
    let mut history = vec![res];
    let mut iterations = 0;
    while res > opts.tol {
        if iterations >= opts.max_iter {
            return Err(DecayError::NoConvergence { history });
        }
        iterations += 1;
        let th = model.theta(&m);
        let dth = linalg_theta_jacobian(model, &m);
        let mut jac = DMatrix::zeros(d + n + 1, d + n);
        for k in 0..d {
            jac[(k, k)] = -1.0;
        }
        for j in 0..n {
            let dh = &ev.xs[j] * (-period);
            for k in 0..d {
                jac[(k, d + j)] = dh[k] / n as f64;
            }
            let row = dth.transpose() * &ev.e[j] - &th;
            for k in 0..d {
                jac[(d + j, k)] = row[k];
            }
            jac[(d + j, d + j)] = th.dot(&dh);
            jac[(d + n, d + j)] = 1.0 / n as f64;
        }
        let step = linalg::pinv_solve(&jac, &(-&ev.f), 1e-12);
        let mut accepted = false;
        let mut alpha = 1.0;
        for _ in 0..20 {
            let m2 = &m + step.rows(0, d) * alpha;
            let mut h2: Vec<f64> = (0..n).map(|j| h[j] + alpha * step[d + j]).collect();
            project_monotone(&mut h2);
            if let Ok(ev2) = evaluate(model, &q, period, &m2, &h2) {
                let r2 = ev2.f.amax();
                if r2 < res {
                    m = m2;
                    h = h2;
                    ev = ev2;
                    res = r2;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        history.push(res);
        if !accepted {
            break;
        }
    }
    let (mean_residual, xi_residual) = norms(model, &ev);
    if mean_residual.max(xi_residual) > 1e-9 {
        return Err(DecayError::NoConvergence { history });
    }
    Ok(CenterOfMassResult { m: m.iter().copied().collect(), h, mean_residual, xi_residual, iterations, history, tube_distance: dist })
}

/// ∂θ_i/∂x_k by centered differences.
fn linalg_theta_jacobian(model: &dyn ReebLocusModel, m: &Point) -> DMatrix<f64> {
    contact_core::fd_jacobian(|x| model.theta(x), m, model.q_dim(), 1e-5)
}

/// Keep h strictly increasing with h(t_{N−1}) < h(t_0) + 1.
fn project_monotone(h: &mut [f64]) {
    let n = h.len();
    let eps = 1e-9 / n as f64;
    for j in 1..n {
        if h[j] <= h[j - 1] {
            h[j] = h[j - 1] + eps;
        }
    }
    if h[n - 1] >= h[0] + 1.0 {
        h[n - 1] = h[0] + 1.0 - eps;
    }
}

/// ∫_{S¹} (dφ^{Tt})⁻¹ζ(t) dt along the orbit through z0, by the periodic trapezoid rule.
pub fn mean_zero_check(model: &dyn ReebLocusModel, z0: &Point, period: f64, zeta: &[DVector<f64>]) -> Result<DVector<f64>, DecayError> {
    let n = zeta.len();
    let mut acc = DVector::zeros(model.q_dim());
    for (j, z) in zeta.iter().enumerate() {
        let m = model.flow_derivative(z0, period * j as f64 / n as f64)?;
        let lu = m.lu();
        let pulled = lu.solve(z).ok_or(DecayError::Contact(ContactError::SingularChart { condition: f64::INFINITY }))?;
        acc += pulled;
    }
    Ok(acc / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact_core::models;
    use std::f64::consts::PI;

    fn torus() -> FlatTorus {
        FlatTorus::new(DVector::from_vec(vec![1.0, 0.0, 0.0]), 2, 0.5)
    }

    fn orbit_loop(z0: &[f64], t: f64, n: usize, offset: impl Fn(f64) -> Vec<f64>) -> Vec<Point> {
        (0..n)
            .map(|j| {
                let s = j as f64 / n as f64;
                let o = offset(s);
                let mut p = DVector::from_vec(z0.to_vec());
                p[0] += t * s;
                for (k, v) in o.iter().enumerate() {
                    p[k] += v;
                }
                p.map(|x| x)
            })
            .collect()
    }

    #[test]
    fn reeb_orbit_is_its_own_center() {
        let model = torus();
        let g = orbit_loop(&[0.2, 0.3, 0.4, 0.0, 0.0], 1.0, 32, |_| vec![0.0; 5]);
        let r = center_of_mass(&model, &g, 1.0, &CenterOfMassOptions::default()).unwrap();
        assert!(r.residual() < 1e-12 && r.iterations == 0);
        assert!((DVector::from_vec(r.m.clone()) - DVector::from_vec(vec![0.2, 0.3, 0.4])).amax() < 1e-15);
        assert!(r.h.iter().enumerate().all(|(j, h)| (h - j as f64 / 32.0).abs() < 1e-10));
    }

    #[test]
    fn flat_torus_offsets_match_closed_form() {
        let model = torus();
        let g = orbit_loop(&[0.9, 0.1, 0.5, 0.0, 0.0], 1.0, 64, |s| {
            vec![0.03 * (2.0 * PI * s).sin(), 0.05 + 0.02 * (4.0 * PI * s).cos(), -0.04, 0.01 * (2.0 * PI * s).cos(), 0.02]
        });
        let r = center_of_mass(&model, &g, 1.0, &CenterOfMassOptions::default()).unwrap();
        let cf = model.closed_form_center(&g, 1.0);
        assert!(model.log(&cf, &DVector::from_vec(r.m.clone())).amax() < 1e-8);
        assert!((cf[1] - 0.15).abs() < 1e-12 && (cf[2] - 0.46).abs() < 1e-12);
        assert!(r.iterations <= 12 && r.residual() < 1e-12);
    }

    #[test]
    fn far_loops_are_rejected() {
        let model = torus();
        let g = orbit_loop(&[0.0; 5], 1.0, 16, |_| vec![0.0, 0.0, 0.0, 0.6, 0.0]);
        assert!(matches!(center_of_mass(&model, &g, 1.0, &CenterOfMassOptions::default()), Err(DecayError::OutsideTube { .. })));
    }

    #[test]
    fn curved_chart_orbit_family() {
        // Every orbit of the round ellipsoid chart closes with T = 2π.
        let chart = models::ellipsoid(1.0, 1.0);
        let model = ChartReebModel::new(chart.clone(), 0.1);
        let p = DVector::from_vec(vec![0.3, 0.5, 0.2]);
        let tr = reeb_dynamics::flow(&chart, &p, 2.0 * PI, 32).unwrap();
        let g: Vec<Point> = tr.points[..32].to_vec();
        let r = center_of_mass(&model, &g, 2.0 * PI, &CenterOfMassOptions { tol: 1e-11, ..Default::default() }).unwrap();
        assert!(r.residual() < 1e-9);
        assert!(chart.wrap_difference(&DVector::from_vec(r.m.clone()), &p).amax() < 1e-9);
    }

    #[test]
    fn mean_zero_of_linearized_flow() {
        let chart = models::ellipsoid(1.0, 1.0);
        let model = ChartReebModel::new(chart, 0.1);
        let z0 = DVector::from_vec(vec![0.0, 0.5, 0.0]);
        let v = DVector::from_vec(vec![0.0, 0.3, -0.7]);
        let zeta: Vec<DVector<f64>> = (0..16).map(|j| model.flow_derivative(&z0, 2.0 * PI * j as f64 / 16.0).unwrap() * &v).collect();
        let avg = mean_zero_check(&model, &z0, 2.0 * PI, &zeta).unwrap();
        assert!((&avg - &v).amax() < 1e-10);
        let centered: Vec<DVector<f64>> = (0..16)
            .map(|j| model.flow_derivative(&z0, 2.0 * PI * j as f64 / 16.0).unwrap() * (&v - &avg))
            .collect();
        assert!(mean_zero_check(&model, &z0, 2.0 * PI, &centered).unwrap().amax() < 1e-10);
    }
}
