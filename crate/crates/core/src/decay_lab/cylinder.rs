use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::DecayError;
use crate::spectral::{spectrum, SpectralOperator};

/// Most Picard sweeps used by the τ-dependent Crank-Nicolson march.
pub const CN_MAX_PICARD: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CylinderGrid {
    /// Slices τ_i = iR/(n_tau − 1), i = 0..n_tau.
    pub n_tau: usize,
    /// Loop samples t_j = jT/n_t.
    pub n_t: usize,
}

/// Right-hand side L(τ) of ∂_τζ + Bζ = L, in Galerkin coefficients.
#[derive(Clone)]
pub enum Forcing {
    Zero,
    /// L(τ) = e^{−δ₀τ}·profile.
    Exponential { profile: DVector<f64>, delta0: f64 },
    /// Arbitrary L(τ) with a declared decay rate δ₀.
    General { f: Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>, delta0: f64 },
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Forcing::Zero => write!(f, "Zero"),
            Forcing::Exponential { delta0, .. } => write!(f, "Exponential {{ delta0: {delta0} }}"),
            Forcing::General { delta0, .. } => write!(f, "General {{ delta0: {delta0} }}"),
        }
    }
}

impl Forcing {
    pub fn delta0(&self) -> Option<f64> {
        match self {
            Forcing::Zero => None,
            Forcing::Exponential { delta0, .. } | Forcing::General { delta0, .. } => Some(*delta0),
        }
    }

    pub fn eval(&self, tau: f64, dim: usize) -> DVector<f64> {
        match self {
            Forcing::Zero => DVector::zeros(dim),
            Forcing::Exponential { profile, delta0 } => profile * (-delta0 * tau).exp(),
            Forcing::General { f, .. } => f(tau),
        }
    }

    fn validate(&self, dim: usize) -> Result<(), DecayError> {
        if let Some(d) = self.delta0() {
            if !(d > 0.0 && d.is_finite()) {
                return Err(DecayError::OutOfRange(format!("forcing decay rate must be positive, got {d}")));
            }
        }
        let len = match self {
            Forcing::Zero => dim,
            Forcing::Exponential { profile, .. } => profile.len(),
            Forcing::General { f, .. } => f(0.0).len(),
        };
        if len != dim {
            return Err(DecayError::ModeMismatch(format!("forcing has {len} coefficients, operator has {dim}")));
        }
        Ok(())
    }
}

/// B(τ) − B_∞ in the Galerkin basis of the limiting operator.
pub type TauPerturbation = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// Sampled solution ζ on [0, R] × S¹.
#[derive(Debug, Clone)]
pub struct CylinderField {
    pub r: f64,
    pub period: f64,
    pub rank: usize,
    pub n_t: usize,
    pub tau: Vec<f64>,
    /// Galerkin coefficients per slice.
    pub coeffs: Vec<DVector<f64>>,
    /// ζ(τ_i, t_j)_c at index (i·n_t + j)·rank + c.
    pub values: Vec<f64>,
    /// ‖ζ(τ_i)‖_{L²(S¹)} by the periodic trapezoid rule.
    pub slice_norms: Vec<f64>,
    /// L² size of the initial data dropped from unstable modes (replaced by the decaying solution).
    pub discarded_unstable: f64,
    /// Picard sweeps of the τ-dependent march (0 for closed-form solves).
    pub sweeps: usize,
}

impl CylinderField {
    pub fn n_tau(&self) -> usize {
        self.tau.len()
    }

    pub fn value(&self, i: usize, j: usize) -> DVector<f64> {
        let off = (i * self.n_t + j) * self.rank;
        DVector::from_column_slice(&self.values[off..off + self.rank])
    }

    pub fn slice(&self, i: usize) -> Vec<DVector<f64>> {
        (0..self.n_t).map(|j| self.value(i, j)).collect()
    }

    pub fn recompute_slice_norms(&self) -> Vec<f64> {
        (0..self.n_tau()).map(|i| slice_norm(&self.values[i * self.n_t * self.rank..(i + 1) * self.n_t * self.rank], self.period, self.n_t)).collect()
    }
}

fn slice_norm(vals: &[f64], period: f64, n_t: usize) -> f64 {
    (vals.iter().map(|v| v * v).sum::<f64>() * period / n_t as f64).sqrt()
}

fn check_inputs(op: &SpectralOperator, forcing: &Forcing, zeta0: &DVector<f64>, r: f64, grid: CylinderGrid) -> Result<(), DecayError> {
    if zeta0.len() != op.dim() {
        return Err(DecayError::ModeMismatch(format!("initial slice has {} coefficients, operator has {}", zeta0.len(), op.dim())));
    }
    if grid.n_t <= 2 * op.n_modes {
        return Err(DecayError::ResolutionTooCoarse(format!("{} loop samples cannot resolve {} Fourier modes", grid.n_t, op.n_modes)));
    }
    if grid.n_tau < 2 {
        return Err(DecayError::ResolutionTooCoarse("need at least two τ slices".into()));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(DecayError::OutOfRange(format!("cylinder length must be positive, got {r}")));
    }
    forcing.validate(op.dim())
}

fn tau_grid(r: f64, n_tau: usize) -> Vec<f64> {
    (0..n_tau).map(|i| r * i as f64 / (n_tau - 1) as f64).collect()
}

fn assemble_field(op: &SpectralOperator, r: f64, tau: Vec<f64>, coeffs: Vec<DVector<f64>>, n_t: usize, discarded_unstable: f64, sweeps: usize) -> CylinderField {
    let rank = op.rank;
    let na = 2 * op.n_modes + 1;
    let table: Vec<f64> = (0..na).flat_map(|a| (0..n_t).map(move |j| (a, j))).map(|(a, j)| op.basis_fn(a, op.period * j as f64 / n_t as f64)).collect();
    let per_slice: Vec<Vec<f64>> = coeffs
        .par_iter()
        .map(|c| {
            let mut out = vec![0.0; n_t * rank];
            for a in 0..na {
                for i in 0..rank {
                    let ca = c[a * rank + i];
                    if ca == 0.0 {
                        continue;
                    }
                    for j in 0..n_t {
                        out[j * rank + i] += ca * table[a * n_t + j];
                    }
                }
            }
            out
        })
        .collect();
    let slice_norms = per_slice.iter().map(|v| slice_norm(v, op.period, n_t)).collect();
    let values = per_slice.into_iter().flatten().collect();
    CylinderField { r, period: op.period, rank, n_t, tau, coeffs, values, slice_norms, discarded_unstable, sweeps }
}

/// Closed-form modal solve of ∂_τζ + Bζ = L for τ-independent B.
///
/// Stable and kernel modes start from ζ₀; unstable modes take the decaying solution with
/// a(R) = 0. Only zero or exponential forcing is supported.
pub fn solve_cylinder(op: &SpectralOperator, forcing: &Forcing, zeta0: &DVector<f64>, r: f64, grid: CylinderGrid) -> Result<CylinderField, DecayError> {
    check_inputs(op, forcing, zeta0, r, grid)?;
    let (profile, d0) = match forcing {
        Forcing::Zero => (DVector::zeros(op.dim()), 1.0),
        Forcing::Exponential { profile, delta0 } => (profile.clone(), *delta0),
        Forcing::General { .. } => {
            return Err(DecayError::UnsupportedForcing("the closed-form solver needs exponential forcing; use the Crank-Nicolson march".into()))
        }
    };
    let sp = spectrum(op);
    let v = &sp.eigenvectors;
    let a0 = v.transpose() * zeta0;
    let ell = v.transpose() * profile;
    let tol = sp.kernel_tol;
    let discarded = sp.eigenvalues.iter().zip(a0.iter()).filter(|(l, _)| **l < -tol).map(|(_, a)| a * a).sum::<f64>().sqrt();
    let tau = tau_grid(r, grid.n_tau);
    let coeffs: Vec<DVector<f64>> = tau
        .par_iter()
        .map(|&t| {
            let a = DVector::from_fn(op.dim(), |j, _| mode_value(sp.eigenvalues[j], a0[j], ell[j], d0, t, r, tol));
            v * a
        })
        .collect();
    Ok(assemble_field(op, r, tau, coeffs, grid.n_t, discarded, 0))
}

fn mode_value(lam: f64, a0: f64, ell: f64, d0: f64, t: f64, r: f64, tol: f64) -> f64 {
    if lam.abs() <= tol {
        return a0 + ell * (1.0 - (-d0 * t).exp()) / d0;
    }
    if lam < 0.0 {
        let k = ell / (lam - d0);
        return k * ((-d0 * t).exp() - (-d0 * r).exp() * (lam * (r - t)).exp());
    }
    if (lam - d0).abs() <= 1e-10 * lam.max(1.0) {
        return (a0 + ell * t) * (-lam * t).exp();
    }
    let k = ell / (lam - d0);
    (a0 - k) * (-lam * t).exp() + k * (-d0 * t).exp()
}

/// Crank-Nicolson march of ∂_τζ + (B_∞ + P(τ))ζ = L in the eigenbasis of B_∞.
///
/// Stable and kernel modes march forward from ζ₀, unstable modes backward from 0 at τ = R.
/// A τ-dependent part P is moved to the right-hand side and resolved by Picard sweeps,
/// which contract when sup‖P‖ is small against the gap of B_∞.
pub fn solve_cylinder_cn(
    op: &SpectralOperator,
    perturbation: Option<&TauPerturbation>,
    forcing: &Forcing,
    zeta0: &DVector<f64>,
    r: f64,
    grid: CylinderGrid,
) -> Result<CylinderField, DecayError> {
    check_inputs(op, forcing, zeta0, r, grid)?;
    let sp = spectrum(op);
    let v = &sp.eigenvectors;
    let vt = v.transpose();
    let dim = op.dim();
    let tol = sp.kernel_tol;
    let tau = tau_grid(r, grid.n_tau);
    let n = tau.len();
    let h = r / (n - 1) as f64;
    let a0 = &vt * zeta0;
    let discarded = sp.eigenvalues.iter().zip(a0.iter()).filter(|(l, _)| **l < -tol).map(|(_, a)| a * a).sum::<f64>().sqrt();
    let base: Vec<DVector<f64>> = tau.iter().map(|&t| &vt * forcing.eval(t, dim)).collect();
    let p_mats: Option<Vec<DMatrix<f64>>> = perturbation.map(|p| tau.iter().map(|&t| &vt * p(t) * v).collect());

    // Modal amplitudes a[i] (eigen coordinates) at each slice.
    let march = |g: &[DVector<f64>]| -> Vec<DVector<f64>> {
        let mut a = vec![DVector::zeros(dim); n];
        for j in 0..dim {
            let lam = sp.eigenvalues[j];
            let (p, m) = (1.0 + 0.5 * h * lam, 1.0 - 0.5 * h * lam);
            if lam >= -tol {
                a[0][j] = a0[j];
                for i in 0..n - 1 {
                    a[i + 1][j] = (m * a[i][j] + 0.5 * h * (g[i][j] + g[i + 1][j])) / p;
                }
            } else {
                a[n - 1][j] = 0.0;
                for i in (0..n - 1).rev() {
                    a[i][j] = (p * a[i + 1][j] - 0.5 * h * (g[i][j] + g[i + 1][j])) / m;
                }
            }
        }
        a
    };

    let mut a = march(&base);
    let mut sweeps = 0;
    if let Some(pm) = &p_mats {
        let scale = a.iter().map(|x| x.amax()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut last = f64::INFINITY;
        loop {
            sweeps += 1;
            let g: Vec<DVector<f64>> = (0..n).map(|i| &base[i] - &pm[i] * &a[i]).collect();
            let next = march(&g);
            let update = next.iter().zip(a.iter()).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max) / scale;
            a = next;
            if update <= 1e-13 {
                break;
            }
            if sweeps >= CN_MAX_PICARD || (sweeps > 3 && update > last) {
                return Err(DecayError::NoContraction { iterations: sweeps, update });
            }
            last = update;
        }
    }
    let coeffs = a.iter().map(|x| v * x).collect();
    Ok(assemble_field(op, r, tau, coeffs, grid.n_t, discarded, sweeps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::ZerothOrder;
    use std::f64::consts::PI;

    fn j_std() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
    }

    fn shifted(a: f64, n: usize) -> SpectralOperator {
        SpectralOperator::new(j_std(), ZerothOrder::Constant(DMatrix::identity(2, 2) * a), 1.0, n).unwrap()
    }

    fn eigvec_for(op: &SpectralOperator, target: f64) -> DVector<f64> {
        let sp = spectrum(op);
        let i = sp.eigenvalues.iter().position(|l| (l - target).abs() < 1e-9).unwrap();
        sp.eigenvectors.column(i).into_owned()
    }

    #[test]
    fn eigenvector_decays_exponentially() {
        let op = shifted(PI, 4);
        let e = eigvec_for(&op, PI);
        let f = solve_cylinder(&op, &Forcing::Zero, &e, 2.0, CylinderGrid { n_tau: 21, n_t: 16 }).unwrap();
        for (t, c) in f.tau.iter().zip(f.coeffs.iter()) {
            assert!((c - &e * (-PI * t).exp()).amax() < 1e-13);
        }
        assert!(f.slice_norms.iter().zip(f.recompute_slice_norms()).all(|(a, b)| (a - b).abs() <= 1e-12));
        assert!((f.slice_norms[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forced_mode_closed_form() {
        let op = shifted(PI, 3);
        let e = eigvec_for(&op, PI);
        let (d0, a0) = (1.2, 0.7);
        let forcing = Forcing::Exponential { profile: e.clone(), delta0: d0 };
        let f = solve_cylinder(&op, &forcing, &(&e * a0), 3.0, CylinderGrid { n_tau: 31, n_t: 16 }).unwrap();
        for (t, c) in f.tau.iter().zip(f.coeffs.iter()) {
            let k = 1.0 / (PI - d0);
            let want = (a0 - k) * (-PI * t).exp() + k * (-d0 * t).exp();
            assert!((e.dot(c) - want).abs() < 1e-13);
        }
    }

    #[test]
    fn kernel_data_is_conserved() {
        let op = shifted(0.0, 3);
        let sp = spectrum(&op);
        let kern = sp.kernel_basis().column(0).into_owned();
        let stable = eigvec_for(&op, 2.0 * PI);
        let f = solve_cylinder(&op, &Forcing::Exponential { profile: stable, delta0: 0.5 }, &kern, 4.0, CylinderGrid { n_tau: 9, n_t: 8 }).unwrap();
        for c in &f.coeffs {
            assert!((kern.dot(c) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn unstable_modes_are_replaced_by_decaying_solution() {
        let op = shifted(PI, 2);
        let un = eigvec_for(&op, -PI);
        let f = solve_cylinder(&op, &Forcing::Exponential { profile: un.clone(), delta0: 1.0 }, &un, 5.0, CylinderGrid { n_tau: 11, n_t: 8 }).unwrap();
        assert!((f.discarded_unstable - 1.0).abs() < 1e-12);
        assert!(un.dot(f.coeffs.last().unwrap()).abs() < 1e-14);
        let k = 1.0 / (-PI - 1.0);
        assert!((un.dot(&f.coeffs[0]) - k * (1.0 - (-5.0f64).exp() * (-PI * 5.0).exp())).abs() < 1e-13);
    }

    #[test]
    fn crank_nicolson_is_second_order() {
        let op = shifted(1.0, 2);
        let mut z0 = DVector::zeros(op.dim());
        for (i, z) in z0.iter_mut().enumerate() {
            *z = 1.0 / (1.0 + i as f64);
        }
        let forcing = Forcing::Exponential { profile: DVector::from_element(op.dim(), 0.3), delta0: 0.8 };
        let gap = |n_tau| {
            let g = CylinderGrid { n_tau, n_t: 8 };
            let e = solve_cylinder(&op, &forcing, &z0, 4.0, g).unwrap();
            let c = solve_cylinder_cn(&op, None, &forcing, &z0, 4.0, g).unwrap();
            e.coeffs.iter().zip(c.coeffs.iter()).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
        };
        let (g1, g2) = (gap(201), gap(401));
        assert!(g1 / g2 >= 3.5, "{g1} {g2}");
    }

    #[test]
    fn tau_dependent_march_converges_to_limit_rate() {
        let op = shifted(PI, 3);
        let sp = spectrum(&op);
        let e = eigvec_for(&op, PI);
        let eps = 0.3;
        let id = DMatrix::<f64>::identity(op.dim(), op.dim());
        let p: TauPerturbation = Arc::new(move |t: f64| &id * (eps * (-2.0 * t).exp()));
        let f = solve_cylinder_cn(&op, Some(&p), &Forcing::Zero, &e, 6.0, CylinderGrid { n_tau: 2001, n_t: 8 }).unwrap();
        assert!(f.sweeps > 1);
        // Exact: a(τ) = exp(−πτ − ε(1 − e^{−2τ})/2).
        for (t, c) in f.tau.iter().zip(f.coeffs.iter()).step_by(100) {
            let want = (-PI * t - eps * (1.0 - (-2.0 * t).exp()) / 2.0).exp();
            assert!((e.dot(c) - want).abs() < 1e-5, "{t}");
        }
        assert!(sp.gap > eps);
    }

    #[test]
    fn input_checks() {
        let op = shifted(PI, 4);
        let z = DVector::zeros(op.dim());
        assert!(matches!(
            solve_cylinder(&op, &Forcing::Zero, &z, 1.0, CylinderGrid { n_tau: 4, n_t: 8 }),
            Err(DecayError::ResolutionTooCoarse(_))
        ));
        assert!(matches!(
            solve_cylinder(&op, &Forcing::Zero, &DVector::zeros(3), 1.0, CylinderGrid { n_tau: 4, n_t: 16 }),
            Err(DecayError::ModeMismatch(_))
        ));
        let bad = Forcing::Exponential { profile: DVector::zeros(5), delta0: 1.0 };
        assert!(matches!(solve_cylinder(&op, &bad, &z, 1.0, CylinderGrid { n_tau: 4, n_t: 16 }), Err(DecayError::ModeMismatch(_))));
    }
}
