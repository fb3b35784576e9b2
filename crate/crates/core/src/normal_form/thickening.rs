use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{MorseBottSetup, NormalFormError};
use crate::contact_core::{self, ContactChart, FormExpr, Point};
use crate::linalg;

#[derive(Debug, Clone, Copy)]
pub struct ThickeningOptions {
    pub requested_radius: f64,
    /// Upper end of the radius search.
    pub max_radius: f64,
    /// Grid points per fiber dimension.
    pub grid_points: usize,
}

impl Default for ThickeningOptions {
    fn default() -> Self {
        ThickeningOptions { requested_radius: 0.5, max_radius: 2.0, grid_points: 16 }
    }
}

/// λ_F = θ + Θ_G + ½ R⌋Ω̃ on F = T*𝒩 ⊕ E over a chart of Q, in coordinates (y, μ, e).
#[derive(Clone, Debug)]
pub struct ThickeningChart {
    pub setup: MorseBottSetup,
    pub omega: DMatrix<f64>,
    pub chart: ContactChart,
    /// Largest fiber radius on which the volume bound was verified.
    pub tube_radius: f64,
}

fn lambda_f(setup: &MorseBottSetup, omega: &DMatrix<f64>) -> FormExpr {
    let (q, m, k2) = (setup.q_dim(), setup.m, omega.nrows());
    let dim = q + m + k2;
    let s1 = setup.clone();
    let om1 = omega.clone();
    let s2 = setup.clone();
    let om2 = omega.clone();
    FormExpr::new(dim, move |x| {
        let y = x.rows(0, q).into_owned();
        let mu = x.rows(q, m).into_owned();
        let e = x.rows(q + m, k2).into_owned();
        let mut a = DVector::zeros(dim);
        let base = s1.theta.eval(&y) + s1.theta_g(&y, &mu);
        a.rows_mut(0, q).copy_from(&base);
        let fib = om1.transpose() * e * 0.5;
        a.rows_mut(q + m, k2).copy_from(&fib);
        a
    })
    .with_jacobian(move |x| {
        let y = x.rows(0, q).into_owned();
        let mu = x.rows(q, m).into_owned();
        let mut j = DMatrix::zeros(dim, dim);
        let jt = s2.theta.jacobian(&y);
        j.view_mut((0, 0), (q, q)).copy_from(&jt);
        if m > 0 {
            let s3 = s2.clone();
            let mu3 = mu.clone();
            let jg = contact_core::fd_jacobian(|p| s3.theta_g(p, &mu3), &y, q, contact_core::H_FD);
            let cur = j.view((0, 0), (q, q)).into_owned();
            j.view_mut((0, 0), (q, q)).copy_from(&(cur + jg));
            let beta = s2.h_coframe(&y);
            j.view_mut((0, q), (q, m)).copy_from(&beta.transpose());
        }
        j.view_mut((q + m, q + m), (k2, k2)).copy_from(&(om2.transpose() * 0.5));
        j
    })
}

impl ThickeningChart {
    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn fiber_dim(&self) -> usize {
        self.setup.m + self.omega.nrows()
    }

    pub fn k(&self) -> usize {
        self.omega.nrows() / 2
    }

    /// Point (y, μ, e).
    pub fn point(&self, y: &Point, mu: &DVector<f64>, e: &DVector<f64>) -> Point {
        let mut v = Vec::with_capacity(self.dim());
        v.extend(y.iter());
        v.extend(mu.iter());
        v.extend(e.iter());
        DVector::from_vec(v)
    }

    /// Split x into (y, μ, e).
    pub fn parts(&self, x: &Point) -> (Point, DVector<f64>, DVector<f64>) {
        let (q, m, k2) = (self.setup.q_dim(), self.setup.m, self.omega.nrows());
        (x.rows(0, q).into_owned(), x.rows(q, m).into_owned(), x.rows(q + m, k2).into_owned())
    }

    pub fn fiber_norm(&self, x: &Point) -> f64 {
        x.rows(self.setup.q_dim(), self.fiber_dim()).norm()
    }

    /// Horizontal lift of a tangent vector of Q (flat connection).
    pub fn lift(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        out.rows_mut(0, v.len()).copy_from(v);
        out
    }

    /// Ω̃ at x: the fiber form on the E-components.
    pub fn omega_tilde(&self, _x: &Point) -> DMatrix<f64> {
        let off = self.setup.q_dim() + self.setup.m;
        let k2 = self.omega.nrows();
        let mut w = DMatrix::zeros(self.dim(), self.dim());
        w.view_mut((off, off), (k2, k2)).copy_from(&self.omega);
        w
    }

    /// Radial field R = Σ μ_a ∂μ_a + Σ e_r ∂e_r.
    pub fn radial(&self, x: &Point) -> DVector<f64> {
        let q = self.setup.q_dim();
        let mut r = x.clone();
        r.rows_mut(0, q).fill(0.0);
        r
    }

    /// Fiberwise scaling R_c.
    pub fn scale(&self, x: &Point, c: f64) -> Point {
        let q = self.setup.q_dim();
        let mut y = x * c;
        y.rows_mut(0, q).copy_from(&x.rows(0, q));
        y
    }

    /// Minimum of vol(x)/vol(zero section) over base samples and fiber points of radius ≤ r.
    pub fn volume_ratio_min(&self, r: f64, grid_points: usize) -> f64 {
        let fibers = fiber_samples(self.fiber_dim(), r, grid_points);
        let q = self.setup.q_dim();
        self.setup
            .samples
            .par_iter()
            .map(|y| {
                let zero = self.point(y, &DVector::zeros(self.setup.m), &DVector::zeros(self.omega.nrows()));
                let v0 = self.chart.contact_volume(&zero);
                fibers
                    .iter()
                    .map(|f| {
                        let mut x = zero.clone();
                        x.rows_mut(q, f.len()).copy_from(f);
                        self.chart.contact_volume(&x) / v0
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }
}

impl ThickeningChart {
    /// vol ≥ ½ vol(zero section) at every sample of radius ≤ r.
    pub fn volume_bound_holds(&self, r: f64, grid_points: usize) -> bool {
        let fibers = fiber_samples(self.fiber_dim(), r, grid_points);
        let q = self.setup.q_dim();
        self.setup.samples.par_iter().all(|y| {
            let zero = self.point(y, &DVector::zeros(self.setup.m), &DVector::zeros(self.omega.nrows()));
            let v0 = self.chart.contact_volume(&zero);
            fibers.iter().all(|f| {
                let mut x = zero.clone();
                x.rows_mut(q, f.len()).copy_from(f);
                self.chart.contact_volume(&x) / v0 >= 0.5
            })
        })
    }
}

fn fiber_samples(fdim: usize, r: f64, grid_points: usize) -> Vec<DVector<f64>> {
    const CAP: usize = 4096;
    if fdim == 0 {
        return vec![DVector::zeros(0)];
    }
    let gp = grid_points.max(2);
    let mut pts = Vec::new();
    let full = (gp as f64).powi(fdim as i32);
    if full <= CAP as f64 {
        let total = gp.pow(fdim as u32);
        for idx in 0..total {
            let mut rem = idx;
            let v = DVector::from_fn(fdim, |_, _| {
                let i = rem % gp;
                rem /= gp;
                -r + 2.0 * r * i as f64 / (gp - 1) as f64
            });
            if v.norm() <= r * (1.0 + 1e-12) {
                pts.push(v);
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        while pts.len() < CAP {
            let v = DVector::from_fn(fdim, |_, _| rng.random_range(-r..=r));
            if v.norm() <= r {
                pts.push(v);
            }
        }
    }
    for i in 0..fdim {
        for s in [-r, r] {
            pts.push(DVector::from_fn(fdim, |k, _| if k == i { s } else { 0.0 }));
        }
    }
    pts
}

/// Assemble λ_F and verify the volume bound on the requested tube.
pub fn build_thickening(
    setup: &MorseBottSetup,
    omega: &DMatrix<f64>,
    opts: &ThickeningOptions,
) -> Result<ThickeningChart, NormalFormError> {
    setup.validate()?;
    let k2 = omega.nrows();
    if omega.ncols() != k2 || !k2.is_multiple_of(2) {
        return Err(NormalFormError::BadSetup("Ω must be 2k × 2k".into()));
    }
    if k2 > 0 {
        if (omega + omega.transpose()).amax() > 1e-14 {
            return Err(NormalFormError::BadSetup("Ω is not antisymmetric".into()));
        }
        if linalg::rank(omega, 1e-12) != k2 {
            return Err(NormalFormError::BadSetup("Ω is degenerate".into()));
        }
    }
    let lam = lambda_f(setup, omega);
    let mut periods = setup.periods.clone();
    periods.extend(std::iter::repeat_n(None, setup.m + k2));
    let chart = ContactChart::new(format!("thickening[{}]", setup.name), lam)
        .map_err(|e| NormalFormError::BadSetup(e.to_string()))?
        .with_periods(periods);
    let mut tc = ThickeningChart { setup: setup.clone(), omega: omega.clone(), chart, tube_radius: 0.0 };
    for y in &setup.samples {
        let zero = tc.point(y, &DVector::zeros(setup.m), &DVector::zeros(k2));
        if tc.chart.contact_volume(&zero).abs() < 1e-12 {
            return Err(NormalFormError::NotContact { radius: 0.0 });
        }
    }
    let ok = |r: f64| tc.volume_bound_holds(r, opts.grid_points);
    if !ok(opts.requested_radius) {
        return Err(NormalFormError::NotContact { radius: opts.requested_radius });
    }
    let radius = if tc.fiber_dim() == 0 || ok(opts.max_radius) {
        opts.max_radius
    } else {
        let (mut lo, mut hi) = (opts.requested_radius, opts.max_radius);
        for _ in 0..24 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    tc.tube_radius = radius;
    Ok(tc)
}

/// Zero-section Reeb check.
#[derive(Debug, Clone)]
pub struct ZeroSectionReeb {
    pub reeb: DVector<f64>,
    pub lift: DVector<f64>,
    pub gap: f64,
}

pub fn reeb_of_thickening(tc: &ThickeningChart, y: &Point) -> Result<ZeroSectionReeb, NormalFormError> {
    let x = tc.point(y, &DVector::zeros(tc.setup.m), &DVector::zeros(tc.omega.nrows()));
    let reeb = contact_core::reeb_field(&tc.chart, &x)?;
    let lift = tc.lift(&tc.setup.x_theta.eval(y));
    let gap = (&reeb - &lift).amax();
    Ok(ZeroSectionReeb { reeb, lift, gap })
}

/// Bases of V (lifts of H ⊕ G) and W (fiber directions), corrected into ker λ_F.
#[derive(Debug, Clone)]
pub struct Splitting {
    pub v_basis: Vec<DVector<f64>>,
    pub w_basis: Vec<DVector<f64>>,
    pub rank: usize,
    /// max |λ_F| over both bases.
    pub max_lambda: f64,
}

pub fn split_contact_distribution(tc: &ThickeningChart, x: &Point) -> Result<Splitting, NormalFormError> {
    let r = tc.fiber_norm(x);
    if r > tc.tube_radius {
        return Err(NormalFormError::NotContact { radius: r });
    }
    let (y, mu, e) = tc.parts(x);
    let xf = contact_core::reeb_field(&tc.chart, x)?;
    let theta_g = tc.setup.theta_g(&y, &mu);
    let mut v_basis = Vec::new();
    for eta in tc.setup.h_basis.iter().chain(tc.setup.g_basis.iter()) {
        let ev = eta.eval(&y);
        let corr = theta_g.dot(&ev);
        v_basis.push(tc.lift(&ev) - &xf * corr);
    }
    let (q, m, k2) = (tc.setup.q_dim(), tc.setup.m, tc.omega.nrows());
    let mut w_basis = Vec::new();
    for a in 0..m {
        let mut v = DVector::zeros(tc.dim());
        v[q + a] = 1.0;
        w_basis.push(v);
    }
    for s in 0..k2 {
        let mut v = DVector::zeros(tc.dim());
        v[q + m + s] = 1.0;
        let corr = 0.5 * (e.transpose() * tc.omega.column(s))[(0, 0)];
        w_basis.push(v - &xf * corr);
    }
    let all: Vec<DVector<f64>> = v_basis.iter().chain(w_basis.iter()).cloned().collect();
    let stacked = if all.is_empty() { DMatrix::zeros(tc.dim(), 0) } else { DMatrix::from_columns(&all) };
    let rank = linalg::rank(&stacked, 1e-8);
    let max_lambda = all.iter().map(|v| tc.chart.lambda_of(x, v).abs()).fold(0.0, f64::max);
    Ok(Splitting { v_basis, w_basis, rank, max_lambda })
}

#[derive(Debug, Clone, Copy)]
pub struct RadialReport {
    /// max |R_c^*Ω̃ − c²Ω̃|.
    pub scaling_error: f64,
    /// max |d(R⌋Ω̃) − 2Ω̃|.
    pub cartan_error: f64,
}

pub fn radial_identities(tc: &ThickeningChart, c: f64, grid: &[Point]) -> RadialReport {
    let d = tc.dim();
    let q = tc.setup.q_dim();
    let mut dr = DMatrix::identity(d, d) * c;
    for i in 0..q {
        dr[(i, i)] = 1.0;
    }
    let tc1 = tc.clone();
    let contraction = FormExpr::new(d, move |x| tc1.omega_tilde(x).transpose() * tc1.radial(x));
    let mut rep = RadialReport { scaling_error: 0.0, cartan_error: 0.0 };
    for x in grid {
        let pulled = dr.transpose() * tc.omega_tilde(&tc.scale(x, c)) * &dr;
        let target = tc.omega_tilde(x) * (c * c);
        rep.scaling_error = rep.scaling_error.max((pulled - target).amax());
        let w = contraction.exterior_derivative(x);
        rep.cartan_error = rep.cartan_error.max((w - tc.omega_tilde(x) * 2.0).amax());
    }
    rep
}

/// Random points of the tube (fiber norm ≤ radius) over the setup's base samples.
pub fn tube_points(tc: &ThickeningChart, radius: f64, count: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fd = tc.fiber_dim();
    (0..count)
        .map(|i| {
            let y = tc.setup.samples[i % tc.setup.samples.len()].clone();
            let mut f = DVector::from_fn(fd, |_, _| rng.random_range(-1.0..1.0));
            let n = f.norm();
            if n > 0.0 {
                f *= radius * rng.random_range(0.0..1.0f64).powf(1.0 / fd as f64) / n;
            }
            let mut x = tc.point(&y, &DVector::zeros(tc.setup.m), &DVector::zeros(tc.omega.nrows()));
            x.rows_mut(tc.setup.q_dim(), fd).copy_from(&f);
            x
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal_form::standard_omega;

    #[test]
    fn circle_plane_form() {
        let tc = build_thickening(&MorseBottSetup::circle(), &standard_omega(1), &ThickeningOptions::default()).unwrap();
        let x = DVector::from_vec(vec![0.3, 0.4, -0.7]);
        let a = tc.chart.lambda_at(&x);
        assert!((a - DVector::from_vec(vec![1.0, 0.35, 0.2])).amax() < 1e-15);
        assert_eq!(tc.tube_radius, 2.0);
        let r = reeb_of_thickening(&tc, &DVector::from_vec(vec![0.1])).unwrap();
        assert!(r.gap < 1e-12);
    }

    #[test]
    fn torus_form_matches_model() {
        let tc = build_thickening(&MorseBottSetup::torus2(), &DMatrix::zeros(0, 0), &ThickeningOptions::default()).unwrap();
        let x = DVector::from_vec(vec![0.2, 0.6, 0.45]);
        assert!((tc.chart.lambda_at(&x) - DVector::from_vec(vec![1.0, 0.45, 0.0])).amax() < 1e-15);
        let sp = split_contact_distribution(&tc, &DVector::from_vec(vec![0.2, 0.6, 0.0])).unwrap();
        assert_eq!((sp.v_basis.len(), sp.w_basis.len(), sp.rank), (1, 1, 2));
    }

    #[test]
    fn sheared_tube_radius() {
        let c = 0.8;
        let tc = build_thickening(&MorseBottSetup::sheared(c), &DMatrix::zeros(0, 0), &ThickeningOptions::default()).unwrap();
        assert!((tc.tube_radius - 1.0 / (2.0 * c)).abs() < 1e-5, "{}", tc.tube_radius);
        let opts = ThickeningOptions { requested_radius: 1.0, ..Default::default() };
        assert!(matches!(
            build_thickening(&MorseBottSetup::sheared(c), &DMatrix::zeros(0, 0), &opts),
            Err(NormalFormError::NotContact { radius }) if radius == 1.0
        ));
    }

    #[test]
    fn vertical_block_at_zero_section() {
        let s = MorseBottSetup::sheared(0.5);
        let tc = build_thickening(&s, &standard_omega(1), &ThickeningOptions::default()).unwrap();
        let x = tc.point(&DVector::from_vec(vec![0.1, 0.2, 0.3, -0.4]), &DVector::zeros(1), &DVector::zeros(2));
        let w = tc.chart.dlambda_at(&x);
        let vert = w.view((4, 4), (3, 3)).into_owned();
        let mut expect = DMatrix::zeros(3, 3);
        expect.view_mut((1, 1), (2, 2)).copy_from(&standard_omega(1));
        assert!((vert - expect).amax() < 1e-8);
    }

    #[test]
    fn degenerate_omega_rejected() {
        let bad = DMatrix::zeros(2, 2);
        assert!(matches!(
            build_thickening(&MorseBottSetup::circle(), &bad, &ThickeningOptions::default()),
            Err(NormalFormError::BadSetup(_))
        ));
    }

    #[test]
    fn radial_identities_on_plane_bundle() {
        let tc = build_thickening(&MorseBottSetup::circle(), &standard_omega(1), &ThickeningOptions::default()).unwrap();
        let grid = tube_points(&tc, 0.5, 20, 3);
        let one = radial_identities(&tc, 1.0, &grid);
        assert_eq!(one.scaling_error, 0.0);
        let two = radial_identities(&tc, 2.0, &grid);
        assert!(two.scaling_error < 1e-12 && two.cartan_error < 1e-8);
    }
}
