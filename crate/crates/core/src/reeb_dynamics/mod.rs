//! Reeb flows, closed orbits by shooting, linearized return maps and Morse-Bott families.

pub mod integrator;

use nalgebra::{Complex, DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::contact_core::{self, fd_jacobian, ContactChart, ContactError, Point, H_FD};
use crate::linalg;
pub use integrator::{IntegratorConfig, Method, StepFailure};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error("integrator step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("integrator exceeded its step budget at t = {t}")]
    TooManySteps { t: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl From<StepFailure<ContactError>> for DynamicsError {
    fn from(f: StepFailure<ContactError>) -> Self {
        match f {
            StepFailure::Rhs(e) => DynamicsError::Contact(e),
            StepFailure::StepUnderflow { t } => DynamicsError::StepUnderflow { t },
            StepFailure::TooManySteps { t } => DynamicsError::TooManySteps { t },
        }
    }
}

/// Reeb field restricted to the chart domain.
pub fn reeb_rhs(chart: &ContactChart, x: &Point) -> Result<DVector<f64>, ContactError> {
    chart.check_domain(x)?;
    contact_core::reeb_field(chart, x)
}

/// DX_λ at x by centered differences of the Reeb solve.
pub fn reeb_jacobian(chart: &ContactChart, x: &Point) -> Result<DMatrix<f64>, ContactError> {
    chart.check_domain(x)?;
    let d = chart.dim();
    let jac = fd_jacobian(
        |p| contact_core::reeb_field(chart, p).unwrap_or_else(|_| DVector::from_element(d, f64::NAN)),
        x,
        d,
        H_FD,
    );
    if jac.iter().all(|v| v.is_finite()) {
        Ok(jac)
    } else {
        Err(ContactError::SingularChart { condition: f64::INFINITY })
    }
}

/// Sampled trajectory of the Reeb flow.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<DVector<f64>>,
    /// Largest defining-equation residual of the Reeb solve along the samples.
    pub max_reeb_residual: f64,
}

/// Flow x0 for time t, sampled at `steps + 1` equally spaced times.
pub fn flow(chart: &ContactChart, x0: &Point, t: f64, steps: usize) -> Result<Trajectory, DynamicsError> {
    flow_with(chart, x0, t, steps, &IntegratorConfig::default())
}

pub fn flow_with(
    chart: &ContactChart,
    x0: &Point,
    t: f64,
    steps: usize,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, DynamicsError> {
    let steps = steps.max(1);
    chart.check_domain(x0)?;
    let mut times = vec![0.0];
    let mut points = vec![x0.clone()];
    let mut x = x0.clone();
    let mut max_res = reeb_residual(chart, x0)?;
    for i in 1..=steps {
        let (ta, tb) = ((i - 1) as f64 * t / steps as f64, i as f64 * t / steps as f64);
        x = integrator::integrate(|_, y| reeb_rhs(chart, y), ta, &x, tb, cfg)?;
        max_res = max_res.max(reeb_residual(chart, &x)?);
        times.push(tb);
        points.push(x.clone());
    }
    Ok(Trajectory { times, points, max_reeb_residual: max_res })
}

fn reeb_residual(chart: &ContactChart, x: &Point) -> Result<f64, ContactError> {
    let v = contact_core::reeb_field(chart, x)?;
    let lam = (chart.lambda_of(x, &v) - 1.0).abs();
    let contraction = (chart.dlambda_at(x).transpose() * &v).amax();
    Ok(lam.max(contraction))
}

/// Flow together with the linearization: returns (φ^t(x0), dφ^t(x0)).
pub fn flow_variational(
    chart: &ContactChart,
    x0: &Point,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<(DVector<f64>, DMatrix<f64>), DynamicsError> {
    let d = chart.dim();
    let mut y0 = DVector::zeros(d + d * d);
    y0.rows_mut(0, d).copy_from(x0);
    for i in 0..d {
        y0[d + i * d + i] = 1.0;
    }
    let y = integrator::integrate(
        |_, y: &DVector<f64>| {
            let x = y.rows(0, d).into_owned();
            let v = reeb_rhs(chart, &x)?;
            let dx = reeb_jacobian(chart, &x)?;
            let phi = DMatrix::from_column_slice(d, d, &y.as_slice()[d..]);
            let dphi = dx * phi;
            let mut out = DVector::zeros(d + d * d);
            out.rows_mut(0, d).copy_from(&v);
            out.rows_mut(d, d * d).copy_from_slice(dphi.as_slice());
            Ok(out)
        },
        0.0,
        &y0,
        t,
        cfg,
    )?;
    let x = y.rows(0, d).into_owned();
    let phi = DMatrix::from_column_slice(d, d, &y.as_slice()[d..]);
    Ok((x, phi))
}

#[derive(Debug, Clone, Copy)]
pub struct OrbitOptions {
    pub n_samples: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub integrator: IntegratorConfig,
}

impl Default for OrbitOptions {
    fn default() -> Self {
        OrbitOptions { n_samples: 256, max_iter: 30, tol: 1e-8, integrator: IntegratorConfig::default() }
    }
}

/// A closed Reeb orbit z(t) = φ^{Tt}(p), t ∈ [0, 1).
#[derive(Debug, Clone)]
pub struct ReebOrbit {
    pub period: f64,
    /// z(j/N) for j = 0..N.
    pub samples: Vec<DVector<f64>>,
    pub base_point: DVector<f64>,
    pub xi_frame: Vec<DVector<f64>>,
    pub closure_residual: f64,
    pub iterations: usize,
}

impl ReebOrbit {
    /// Assemble the orbit through `p` with period `t` by sampling the flow.
    pub fn through(chart: &ContactChart, p: &Point, t: f64, opts: &OrbitOptions) -> Result<Self, DynamicsError> {
        let n = opts.n_samples.max(4);
        let traj = flow_with(chart, p, t, n, &opts.integrator)?;
        let end = traj.points[n].clone();
        let samples = traj.points[..n].to_vec();
        let closure_residual = chart.wrap_difference(&end, p).norm();
        let xi_frame = contact_core::xi_frame(chart, p)?;
        Ok(ReebOrbit { period: t, samples, base_point: p.clone(), xi_frame, closure_residual, iterations: 0 })
    }
}

/// Shooting Gauss-Newton for a closed orbit, with x restricted to `x_ref + span(section)`.
fn shoot(
    chart: &ContactChart,
    x_ref: &Point,
    section: &DMatrix<f64>,
    t_guess: f64,
    opts: &OrbitOptions,
) -> Result<(DVector<f64>, f64, usize, f64), DynamicsError> {
    let t_min = 0.1 * t_guess;
    let k = section.ncols();
    let mut sigma = DVector::zeros(k);
    let mut t = t_guess;
    let eval = |sigma: &DVector<f64>, t: f64| -> Result<(DVector<f64>, DVector<f64>, DMatrix<f64>), DynamicsError> {
        let x = x_ref + section * sigma;
        let (xt, m) = flow_variational(chart, &x, t, &opts.integrator)?;
        Ok((x, xt, m))
    };
    let (mut x, mut xt, mut m) = eval(&sigma, t)?;
    let mut r = chart.wrap_difference(&xt, &x);
    let mut res = r.norm();
    for it in 0..opts.max_iter {
        if res < 0.1 * opts.tol {
            return Ok((x, t, it, res));
        }
        let d = chart.dim();
        let mut jac = DMatrix::zeros(d, k + 1);
        let ms = (&m - DMatrix::identity(d, d)) * section;
        jac.view_mut((0, 0), (d, k)).copy_from(&ms);
        jac.set_column(k, &reeb_rhs(chart, &xt)?);
        let step = linalg::pinv_solve(&jac, &(-&r), 1e-9);
        let mut accepted = false;
        let mut alpha = 1.0;
        for _ in 0..12 {
            let s_new = &sigma + step.rows(0, k) * alpha;
            let t_new = (t + alpha * step[k]).max(t_min);
            if let Ok((x2, xt2, m2)) = eval(&s_new, t_new) {
                let r2 = chart.wrap_difference(&xt2, &x2);
                if r2.norm() < res {
                    sigma = s_new;
                    t = t_new;
                    x = x2;
                    xt = xt2;
                    m = m2;
                    r = r2;
                    res = r.norm();
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            if res < opts.tol {
                return Ok((x, t, it, res));
            }
            return Err(DynamicsError::NoConvergence { iterations: it + 1, residual: res });
        }
    }
    if res < opts.tol {
        Ok((x, t, opts.max_iter, res))
    } else {
        Err(DynamicsError::NoConvergence { iterations: opts.max_iter, residual: res })
    }
}

fn complement_basis(d: usize, avoid: &[DVector<f64>]) -> DMatrix<f64> {
    let mut vecs: Vec<DVector<f64>> = avoid.to_vec();
    for i in 0..d {
        vecs.push(DVector::from_fn(d, |k, _| if k == i { 1.0 } else { 0.0 }));
    }
    let q = linalg::gram_schmidt(&vecs, 1e-10);
    let kept = avoid.iter().filter(|v| v.norm() > 0.0).count();
    DMatrix::from_columns(&q[kept.min(q.len())..])
}

/// Closed orbit near (guess, t_guess) by shooting on the hyperplane through the guess
/// orthogonal to X_λ(guess).
pub fn find_closed_orbit(chart: &ContactChart, guess: &Point, t_guess: f64, opts: &OrbitOptions) -> Result<ReebOrbit, DynamicsError> {
    if !(t_guess > 0.0) {
        return Err(DynamicsError::InvalidInput(format!("period guess must be positive, got {t_guess}")));
    }
    let xg = reeb_rhs(chart, guess)?;
    let section = complement_basis(chart.dim(), &[xg]);
    let (p, t, iterations, _) = shoot(chart, guess, &section, t_guess, opts)?;
    let mut orbit = ReebOrbit::through(chart, &p, t, opts)?;
    orbit.iterations = iterations;
    if orbit.closure_residual >= opts.tol {
        return Err(DynamicsError::NoConvergence { iterations, residual: orbit.closure_residual });
    }
    Ok(orbit)
}

/// ∫_0^1 λ(z(t)) ż(t) dt with ż from the spectral derivative of the unwrapped loop.
pub fn action(chart: &ContactChart, orbit: &ReebOrbit) -> f64 {
    let n = orbit.samples.len();
    let vel = linalg::loop_velocity(&orbit.samples, 1.0, |a, b| chart.wrap_difference(a, b));
    let total: f64 = orbit.samples.iter().zip(vel.iter()).map(|(z, dz)| chart.lambda_of(z, dz)).sum();
    total / n as f64
}

/// Linearized return map on ξ_p in the orbit's frame.
#[derive(Debug, Clone)]
pub struct ReturnMap {
    pub matrix: DMatrix<f64>,
    pub eigenvalues: Vec<Complex<f64>>,
    pub unit_eigen_dim: usize,
    /// dλ|ξ in the frame.
    pub omega: DMatrix<f64>,
    /// max |Ψᵀ Ω Ψ − Ω|.
    pub symplectic_defect: f64,
    pub monodromy: DMatrix<f64>,
}

pub const UNIT_EIGEN_TOL: f64 = 1e-6;

impl ReturnMap {
    /// Wrap an arbitrary square matrix with the standard symplectic form.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Self {
        let k = matrix.nrows();
        let mut omega = DMatrix::zeros(k, k);
        for i in 0..k / 2 {
            omega[(i, k / 2 + i)] = 1.0;
            omega[(k / 2 + i, i)] = -1.0;
        }
        Self::assemble(matrix, omega, DMatrix::zeros(0, 0))
    }

    fn assemble(matrix: DMatrix<f64>, omega: DMatrix<f64>, monodromy: DMatrix<f64>) -> Self {
        let eigenvalues: Vec<Complex<f64>> = matrix.complex_eigenvalues().iter().copied().collect();
        let unit_eigen_dim = eigenvalues.iter().filter(|z| (*z - Complex::new(1.0, 0.0)).norm() <= UNIT_EIGEN_TOL).count();
        let symplectic_defect = (matrix.transpose() * &omega * &matrix - &omega).amax();
        ReturnMap { matrix, eigenvalues, unit_eigen_dim, omega, symplectic_defect, monodromy }
    }
}

pub fn return_map(chart: &ContactChart, orbit: &ReebOrbit) -> Result<ReturnMap, DynamicsError> {
    return_map_with(chart, orbit, &IntegratorConfig::default())
}

pub fn return_map_with(chart: &ContactChart, orbit: &ReebOrbit, cfg: &IntegratorConfig) -> Result<ReturnMap, DynamicsError> {
    let p = &orbit.base_point;
    let (_, m) = flow_variational(chart, p, orbit.period, cfg)?;
    let frame = DMatrix::from_columns(&orbit.xi_frame);
    let xr = contact_core::reeb_field(chart, p)?;
    let a = chart.lambda_at(p);
    let d = chart.dim();
    let pi = DMatrix::identity(d, d) - &xr * a.transpose();
    let psi = frame.transpose() * pi * &m * &frame;
    let omega = frame.transpose() * chart.dlambda_at(p) * &frame;
    Ok(ReturnMap::assemble(psi, omega, m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OrbitClass {
    Nondegenerate,
    MorseBottCandidate(usize),
}

/// Nondegenerate iff no eigenvalue lies within `tol` of 1; otherwise counts those that do.
pub fn classify_orbit(rm: &ReturnMap, tol: f64) -> OrbitClass {
    let k = rm.eigenvalues.iter().filter(|z| (*z - Complex::new(1.0, 0.0)).norm() <= tol).count();
    if k == 0 {
        OrbitClass::Nondegenerate
    } else {
        OrbitClass::MorseBottCandidate(k)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilySample {
    pub direction: usize,
    pub offset: f64,
    pub period: Option<f64>,
    pub residual: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyReport {
    pub seed_period: f64,
    pub samples: Vec<FamilySample>,
    pub converged: usize,
    /// max |T_i − T_0| over converged samples.
    pub max_period_deviation: f64,
}

/// Continue the seed orbit along `seed + s·d` for each direction d and offset s.
/// Each sample is held fixed along its scan direction.
pub fn orbit_family_scan(
    chart: &ContactChart,
    seed: &ReebOrbit,
    directions: &[DVector<f64>],
    offsets: &[f64],
    opts: &OrbitOptions,
) -> FamilyReport {
    let jobs: Vec<(usize, f64)> = directions
        .iter()
        .enumerate()
        .flat_map(|(i, _)| offsets.iter().map(move |&s| (i, s)))
        .collect();
    let samples: Vec<FamilySample> = jobs
        .par_iter()
        .map(|&(i, s)| {
            let dir = &directions[i];
            let x_s = &seed.base_point + dir * s;
            let result = reeb_rhs(chart, &x_s).map_err(DynamicsError::from).and_then(|xs| {
                let section = complement_basis(chart.dim(), &[xs, dir.clone()]);
                shoot(chart, &x_s, &section, seed.period, opts)
            });
            match result {
                Ok((_, t, _, res)) => FamilySample { direction: i, offset: s, period: Some(t), residual: res, error: None },
                Err(e) => {
                    let residual = match &e {
                        DynamicsError::NoConvergence { residual, .. } => *residual,
                        _ => f64::NAN,
                    };
                    FamilySample { direction: i, offset: s, period: None, residual, error: Some(e.to_string()) }
                }
            }
        })
        .collect();
    let converged = samples.iter().filter(|s| s.period.is_some()).count();
    let max_period_deviation = samples
        .iter()
        .filter_map(|s| s.period)
        .map(|t| (t - seed.period).abs())
        .fold(0.0, f64::max);
    FamilyReport { seed_period: seed.period, samples, converged, max_period_deviation }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact_core::models;
    use std::f64::consts::PI;

    fn pt(v: &[f64]) -> Point {
        DVector::from_vec(v.to_vec())
    }

    #[test]
    fn darboux_flow_is_vertical() {
        let tr = flow(&models::darboux(1), &pt(&[0.0, 0.0, 0.0]), 2.5, 5).unwrap();
        assert!((tr.points[5].clone() - pt(&[0.0, 0.0, 2.5])).amax() < 1e-12);
        assert!(tr.max_reeb_residual < 1e-12);
    }

    #[test]
    fn torus_flow_translates() {
        let tr = flow(&models::torus(), &pt(&[0.0, 0.0, 0.0]), 0.7, 3).unwrap();
        assert!((tr.points[3].clone() - pt(&[0.7, 0.0, 0.0])).amax() < 1e-12);
    }

    #[test]
    fn ellipsoid_flow_matches_rotation() {
        let (wa, wt) = (1.0, 1.3);
        let c = models::ellipsoid(wa, wt);
        let x0 = pt(&[0.1, 0.3, -0.2]);
        let tr = flow(&c, &x0, 1.0, 4).unwrap();
        let exact = models::ellipsoid_flow(wa, wt, &x0, 1.0);
        assert!((tr.points[4].clone() - exact).amax() < 1e-9);
    }

    #[test]
    fn leaving_domain_is_reported() {
        let c = models::ellipsoid(1.0, 1.0).with_domain(|x: &Point| x[0] < 1.0);
        let err = flow(&c, &pt(&[0.0, 0.1, 0.0]), 2.0, 2).unwrap_err();
        assert!(matches!(err, DynamicsError::Contact(ContactError::LeftChartDomain(_))));
    }

    #[test]
    fn torus_orbit_has_unit_period() {
        let o = find_closed_orbit(&models::torus(), &pt(&[0.2, 0.4, 0.0]), 0.93, &OrbitOptions::default()).unwrap();
        assert!((o.period - 1.0).abs() < 1e-10);
        assert!(o.closure_residual < 1e-8);
        assert!((action(&models::torus(), &o) - o.period).abs() < 1e-8);
    }

    #[test]
    fn universal_cover_has_no_closed_orbit() {
        let r = find_closed_orbit(&models::torus_universal_cover(), &pt(&[0.0, 0.0, 0.3]), 1.0, &OrbitOptions::default());
        assert!(matches!(r, Err(DynamicsError::NoConvergence { .. })), "{r:?}");
    }

    #[test]
    fn short_ellipsoid_orbit() {
        // Weights (1, 2): the orbit of the heavier axis has period π.
        let c = models::ellipsoid(2.0, 1.0);
        let o = find_closed_orbit(&c, &pt(&[0.0, 0.01, -0.02]), 3.0, &OrbitOptions::default()).unwrap();
        assert!((o.period - PI).abs() < 1e-8, "{}", o.period);
        assert!((action(&c, &o) - o.period).abs() < 1e-8);
    }

    #[test]
    fn classify_examples() {
        let id = ReturnMap::from_matrix(DMatrix::identity(2, 2));
        assert_eq!(classify_orbit(&id, 1e-6), OrbitClass::MorseBottCandidate(2));
        let (c, s) = ((PI / 3.0).cos(), (PI / 3.0).sin());
        let rot = ReturnMap::from_matrix(DMatrix::from_row_slice(2, 2, &[c, -s, s, c]));
        assert_eq!(classify_orbit(&rot, 1e-6), OrbitClass::Nondegenerate);
        assert!(rot.symplectic_defect < 1e-15);
        let near = ReturnMap::from_matrix(DMatrix::from_row_slice(2, 2, &[1.0 + 0.5e-6, 0.0, 0.0, 2.0]));
        assert_eq!(classify_orbit(&near, 1e-6), OrbitClass::MorseBottCandidate(1));
    }

    #[test]
    fn resonant_return_map_is_identity() {
        // Weights (1, 2) seen from the lighter axis: rotation by 4π.
        let c = models::ellipsoid(1.0, 2.0);
        let o = find_closed_orbit(&c, &pt(&[0.0, 0.0, 0.0]), 2.0 * PI, &OrbitOptions::default()).unwrap();
        let rm = return_map(&c, &o).unwrap();
        assert!((rm.matrix.clone() - DMatrix::identity(2, 2)).amax() < 1e-7);
        assert!((rm.matrix.determinant() - 1.0).abs() < 1e-8);
    }
}
