//! Fourier-Galerkin discretization of first-order self-adjoint loop operators
//! B = −J₀ ∂_t − S(t), their spectra, gaps, and the linearized Reeb operator along orbits.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::contact_core::{self, fd_jacobian, ContactChart, ContactError, PerturbationData, H_FD};
use crate::linalg;
use crate::reeb_dynamics::ReebOrbit;

pub const KERNEL_TOL: f64 = 1e-8;
pub const DEFAULT_MODES: usize = 128;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SpectralError {
    #[error("J₀ is not an orthogonal complex structure (error {0:.3e})")]
    BadComplexStructure(f64),
    #[error("zeroth-order term is not symmetric (error {0:.3e})")]
    AsymmetricTerm(f64),
    #[error("J_E·DᵛX is not symmetric (error {0:.3e})")]
    AsymmetricHessian(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("normal-form hypothesis violated: |f − 1| = {f_dev:.3e}, |df| = {df:.3e}")]
    HypothesisViolated { f_dev: f64, df: f64 },
    #[error(transparent)]
    Contact(#[from] ContactError),
}

/// Symmetric zeroth-order term, constant or periodic in t.
#[derive(Clone)]
pub enum ZerothOrder {
    Constant(DMatrix<f64>),
    Periodic(Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>),
}

impl ZerothOrder {
    pub fn periodic<F>(f: F) -> Self
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        ZerothOrder::Periodic(Arc::new(f))
    }

    pub fn at(&self, t: f64) -> DMatrix<f64> {
        match self {
            ZerothOrder::Constant(s) => s.clone(),
            ZerothOrder::Periodic(f) => f(t),
        }
    }
}

impl fmt::Debug for ZerothOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ZerothOrder::Constant(s) => write!(f, "Constant({}×{})", s.nrows(), s.ncols()),
            ZerothOrder::Periodic(_) => write!(f, "Periodic(..)"),
        }
    }
}

/// Galerkin matrix of B in the orthonormal basis
/// {1/√T, √(2/T) cos(2πkt/T), √(2/T) sin(2πkt/T)}_{k ≤ N} ⊗ ℝ^{2k}.
///
/// Basis index: (mode a, component i) ↦ a·rank + i with a = 0 for the constant,
/// 2k−1 for cos k and 2k for sin k.
#[derive(Clone, Debug)]
pub struct SpectralOperator {
    pub rank: usize,
    pub n_modes: usize,
    pub period: f64,
    pub j0: DMatrix<f64>,
    pub s: ZerothOrder,
    pub matrix: DMatrix<f64>,
}

fn check_j0(j0: &DMatrix<f64>) -> Result<(), SpectralError> {
    let n = j0.nrows();
    if j0.ncols() != n || !n.is_multiple_of(2) || n == 0 {
        return Err(SpectralError::Dimension(format!("J₀ must be 2k × 2k, got {}×{}", j0.nrows(), j0.ncols())));
    }
    let id = DMatrix::identity(n, n);
    let err = (j0 * j0 + &id).amax().max((j0.transpose() * j0 - id).amax());
    if err > 1e-12 {
        return Err(SpectralError::BadComplexStructure(err));
    }
    Ok(())
}

fn sample_count(n_modes: usize) -> usize {
    (8 * n_modes + 8).max(64)
}

impl SpectralOperator {
    pub fn new(j0: DMatrix<f64>, s: ZerothOrder, period: f64, n_modes: usize) -> Result<Self, SpectralError> {
        check_j0(&j0)?;
        let rank = j0.nrows();
        if !(period > 0.0) {
            return Err(SpectralError::Dimension(format!("period must be positive, got {period}")));
        }
        let m = sample_count(n_modes);
        let samples: Vec<DMatrix<f64>> = match &s {
            ZerothOrder::Constant(c) => vec![c.clone()],
            ZerothOrder::Periodic(f) => (0..m).map(|j| f(period * j as f64 / m as f64)).collect(),
        };
        for sm in &samples {
            if sm.shape() != (rank, rank) {
                return Err(SpectralError::Dimension(format!("S must be {rank}×{rank}")));
            }
            let asym = (sm - sm.transpose()).amax();
            if asym > 1e-10 {
                return Err(SpectralError::AsymmetricTerm(asym));
            }
        }
        let matrix = assemble(&j0, &s, &samples, period, n_modes);
        Ok(SpectralOperator { rank, n_modes, period, j0, s, matrix })
    }

    pub fn dim(&self) -> usize {
        self.rank * (2 * self.n_modes + 1)
    }

    /// Value of basis function a at t.
    pub fn basis_fn(&self, a: usize, t: f64) -> f64 {
        basis_fn(a, t, self.period)
    }

    /// Galerkin coefficients of uniformly sampled data ζ(jT/N_t), by the trapezoid rule.
    pub fn coefficients_from_samples(&self, samples: &[DVector<f64>]) -> Result<DVector<f64>, SpectralError> {
        let nt = samples.len();
        if nt <= 2 * self.n_modes {
            return Err(SpectralError::Dimension(format!("{nt} samples cannot resolve {} modes", self.n_modes)));
        }
        let mut c = DVector::zeros(self.dim());
        let h = self.period / nt as f64;
        for (j, z) in samples.iter().enumerate() {
            if z.len() != self.rank {
                return Err(SpectralError::Dimension("sample rank".into()));
            }
            let t = j as f64 * h;
            for a in 0..2 * self.n_modes + 1 {
                let w = self.basis_fn(a, t) * h;
                for i in 0..self.rank {
                    c[a * self.rank + i] += w * z[i];
                }
            }
        }
        Ok(c)
    }

    /// Evaluate a coefficient vector at t_j = jT/n_t.
    pub fn synthesize(&self, coeffs: &DVector<f64>, n_t: usize) -> Vec<DVector<f64>> {
        (0..n_t)
            .map(|j| {
                let t = self.period * j as f64 / n_t as f64;
                let mut z = DVector::zeros(self.rank);
                for a in 0..2 * self.n_modes + 1 {
                    let w = self.basis_fn(a, t);
                    for i in 0..self.rank {
                        z[i] += w * coeffs[a * self.rank + i];
                    }
                }
                z
            })
            .collect()
    }

    /// Operator with the same J₀ and modes but a different zeroth-order term.
    pub fn with_zeroth_order(&self, s: ZerothOrder) -> Result<Self, SpectralError> {
        SpectralOperator::new(self.j0.clone(), s, self.period, self.n_modes)
    }
}

fn basis_fn(a: usize, t: f64, period: f64) -> f64 {
    if a == 0 {
        return 1.0 / period.sqrt();
    }
    let k = a.div_ceil(2);
    let arg = 2.0 * PI * k as f64 * t / period;
    let amp = (2.0 / period).sqrt();
    if a % 2 == 1 {
        amp * arg.cos()
    } else {
        amp * arg.sin()
    }
}

fn assemble(j0: &DMatrix<f64>, s: &ZerothOrder, samples: &[DMatrix<f64>], period: f64, n: usize) -> DMatrix<f64> {
    let r = j0.nrows();
    let na = 2 * n + 1;
    let dim = r * na;
    let mut b = DMatrix::zeros(dim, dim);
    // −J₀ ⊗ D with D[cos k, sin k] = ω_k, D[sin k, cos k] = −ω_k.
    for k in 1..=n {
        let w = 2.0 * PI * k as f64 / period;
        let (ac, as_) = (2 * k - 1, 2 * k);
        for i in 0..r {
            for j in 0..r {
                b[(ac * r + i, as_ * r + j)] -= j0[(i, j)] * w;
                b[(as_ * r + i, ac * r + j)] += j0[(i, j)] * w;
            }
        }
    }
    // Fourier data C(m), Sn(m) of S for m ≤ 2N.
    let (cm, sm): (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) = match s {
        ZerothOrder::Constant(c) => {
            let mut cm = vec![DMatrix::zeros(r, r); 2 * n + 1];
            cm[0] = c.clone();
            (cm, vec![DMatrix::zeros(r, r); 2 * n + 1])
        }
        ZerothOrder::Periodic(_) => {
            let m = samples.len();
            let mut cm = vec![DMatrix::zeros(r, r); 2 * n + 1];
            let mut sn = vec![DMatrix::zeros(r, r); 2 * n + 1];
            for (j, sj) in samples.iter().enumerate() {
                let phase = 2.0 * PI * j as f64 / m as f64;
                for mm in 0..=2 * n {
                    let arg = phase * mm as f64;
                    cm[mm] += sj * (arg.cos() / m as f64);
                    sn[mm] += sj * (arg.sin() / m as f64);
                }
            }
            (cm, sn)
        }
    };
    let c_at = |m: i64| -> &DMatrix<f64> { &cm[m.unsigned_abs() as usize] };
    let s_at = |m: i64| -> DMatrix<f64> {
        if m >= 0 {
            sm[m as usize].clone()
        } else {
            -&sm[(-m) as usize]
        }
    };
    let kind = |a: usize| -> (i64, u8) {
        if a == 0 {
            (0, 0)
        } else {
            (a.div_ceil(2) as i64, if a % 2 == 1 { 1 } else { 2 })
        }
    };
    let sqrt2 = 2f64.sqrt();
    for a in 0..na {
        for bb in a..na {
            let (k, ta) = kind(a);
            let (l, tb) = kind(bb);
            let blk: DMatrix<f64> = match (ta, tb) {
                (0, 0) => c_at(0).clone(),
                (0, 1) => c_at(l) * sqrt2,
                (0, 2) => s_at(l) * sqrt2,
                (1, 1) => c_at(k - l) + c_at(k + l),
                (2, 2) => c_at(k - l) - c_at(k + l),
                (1, 2) => s_at(l + k) + s_at(l - k),
                (2, 1) => s_at(k + l) + s_at(k - l),
                _ => unreachable!(),
            };
            for i in 0..r {
                for j in 0..r {
                    b[(a * r + i, bb * r + j)] -= blk[(i, j)];
                }
            }
        }
    }
    // Mirror the upper block triangle; diagonal blocks are symmetric since S is.
    for a in 0..na {
        for bb in a + 1..na {
            for i in 0..r {
                for j in 0..r {
                    b[(bb * r + j, a * r + i)] = b[(a * r + i, bb * r + j)];
                }
            }
        }
        for i in 0..r {
            for j in i + 1..r {
                let v = 0.5 * (b[(a * r + i, a * r + j)] + b[(a * r + j, a * r + i)]);
                b[(a * r + i, a * r + j)] = v;
                b[(a * r + j, a * r + i)] = v;
            }
        }
    }
    b
}

/// Fiber derivative data along an orbit, parametrized by t ∈ [0, 1).
#[derive(Clone, Debug)]
pub struct HessianData {
    pub j_e: DMatrix<f64>,
    /// DᵛX(t).
    pub dv_x: ZerothOrder,
}

impl HessianData {
    pub fn validate(&self) -> Result<(), SpectralError> {
        check_j0(&self.j_e)?;
        for j in 0..64 {
            let t = j as f64 / 64.0;
            let h = &self.j_e * self.dv_x.at(t);
            let asym = (&h - h.transpose()).amax();
            if asym > 1e-10 {
                return Err(SpectralError::AsymmetricHessian(asym));
            }
        }
        Ok(())
    }
}

/// B = −J_E(∂_t − T·DᵛX) on loops of period 1, i.e. S(t) = −T·J_E·DᵛX(t).
pub fn build_operator(orbit_period: f64, hess: &HessianData, n_modes: usize) -> Result<SpectralOperator, SpectralError> {
    hess.validate()?;
    let je = hess.j_e.clone();
    let s = match &hess.dv_x {
        ZerothOrder::Constant(d) => ZerothOrder::Constant(sym(&(&je * d * (-orbit_period)))),
        ZerothOrder::Periodic(f) => {
            let f = f.clone();
            ZerothOrder::periodic(move |t| sym(&(&je * f(t) * (-orbit_period))))
        }
    };
    SpectralOperator::new(hess.j_e.clone(), s, 1.0, n_modes)
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Sorted eigen-decomposition with kernel dimension and gap.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    /// Columns match `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    pub kernel_dim: usize,
    /// min{|λ| : |λ| > kernel_tol}.
    pub gap: f64,
    pub kernel_tol: f64,
}

impl Spectrum {
    /// Orthonormal basis of the numerical kernel.
    pub fn kernel_basis(&self) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = self
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, l)| l.abs() <= self.kernel_tol)
            .map(|(i, _)| self.eigenvectors.column(i).into_owned())
            .collect();
        if cols.is_empty() {
            DMatrix::zeros(self.eigenvectors.nrows(), 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    }

    /// Index of the eigenvalue of smallest |λ| above the kernel threshold.
    pub fn first_nonzero(&self) -> Option<usize> {
        self.eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, l)| l.abs() > self.kernel_tol)
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
    }

    /// Eigenvalues sorted by |λ| (ties by value).
    pub fn by_magnitude(&self) -> Vec<f64> {
        let mut v = self.eigenvalues.clone();
        v.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
        v
    }
}

pub fn spectrum(op: &SpectralOperator) -> Spectrum {
    spectrum_with_tol(op, KERNEL_TOL)
}

pub fn spectrum_with_tol(op: &SpectralOperator, kernel_tol: f64) -> Spectrum {
    let eig = SymmetricEigen::new(op.matrix.clone());
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let cols: Vec<DVector<f64>> = idx.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    let eigenvectors = DMatrix::from_columns(&cols);
    let kernel_dim = eigenvalues.iter().filter(|l| l.abs() <= kernel_tol).count();
    let gap = eigenvalues.iter().map(|l| l.abs()).filter(|&l| l > kernel_tol).fold(f64::INFINITY, f64::min);
    Spectrum { eigenvalues, eigenvectors, kernel_dim, gap, kernel_tol }
}

#[derive(Clone, Debug)]
pub struct GapReport {
    pub trials: usize,
    pub delta_sq: f64,
    pub min_quotient: f64,
    pub slack: f64,
    /// Trial indices whose quotient fell below δ² − slack.
    pub failures: Vec<usize>,
    pub passed: bool,
}

/// ‖Bs‖² ≥ (δ² − slack)‖s‖² for random off-kernel s, drawn in the eigenbasis with
/// weights 1/(1+λ²).
pub fn gap_inequality_check(op: &SpectralOperator, spec: &Spectrum, n_trials: usize, seed: u64) -> GapReport {
    let slack = 1e-8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta_sq = spec.gap * spec.gap;
    let mut min_quotient = f64::INFINITY;
    let mut failures = Vec::new();
    for trial in 0..n_trials {
        // Eigen-coefficients weighted by 1/(1+λ²) so sections near the gap dominate.
        let c = DVector::from_fn(op.dim(), |i, _| {
            let l = spec.eigenvalues[i];
            let g: f64 = StandardNormal.sample(&mut rng);
            if l.abs() <= spec.kernel_tol {
                0.0
            } else {
                g / (1.0 + l * l)
            }
        });
        let s = &spec.eigenvectors * c;
        let q = rayleigh_gap_quotient(op, &s);
        min_quotient = min_quotient.min(q);
        if q < delta_sq - slack {
            failures.push(trial);
        }
    }
    GapReport { trials: n_trials, delta_sq, min_quotient, slack, passed: failures.is_empty(), failures }
}

/// ‖Bs‖² / ‖s‖².
pub fn rayleigh_gap_quotient(op: &SpectralOperator, s: &DVector<f64>) -> f64 {
    (&op.matrix * s).norm_squared() / s.norm_squared()
}

/// DΥ(z)(Y) = Ẏ − T·DX_{fλ}(z)·Y at the orbit samples, for each sampled frame field Y.
///
/// Uses the flat connection of the chart; Ẏ is the spectral derivative in t ∈ [0, 1).
pub fn linearized_orbit_operator(
    chart: &ContactChart,
    pert: &PerturbationData,
    orbit: &ReebOrbit,
    frame: &[Vec<DVector<f64>>],
) -> Result<Vec<Vec<DVector<f64>>>, SpectralError> {
    let n = orbit.samples.len();
    let d = chart.dim();
    let (mut f_dev, mut df) = (0.0f64, 0.0f64);
    for z in &orbit.samples {
        f_dev = f_dev.max((pert.f().value(z) - 1.0).abs());
        df = df.max(pert.f().gradient(z).amax());
    }
    if f_dev > 1e-8 || df > 1e-8 {
        return Err(SpectralError::HypothesisViolated { f_dev, df });
    }
    let mut jacs = Vec::with_capacity(n);
    for z in &orbit.samples {
        let jac = fd_jacobian(
            |p| contact_core::perturbed_reeb(chart, pert, p).unwrap_or_else(|_| DVector::from_element(d, f64::NAN)),
            z,
            d,
            H_FD,
        );
        if !jac.iter().all(|v| v.is_finite()) {
            return Err(SpectralError::Contact(ContactError::SingularChart { condition: f64::INFINITY }));
        }
        jacs.push(jac);
    }
    frame
        .iter()
        .map(|y| {
            if y.len() != n {
                return Err(SpectralError::Dimension(format!("frame field has {} samples, orbit has {n}", y.len())));
            }
            let dy = linalg::periodic_derivative(y, 1.0);
            Ok((0..n).map(|j| &dy[j] - &jacs[j] * &y[j] * orbit.period).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn j_std() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
    }

    fn expected(a: f64, n: usize, period: f64) -> Vec<f64> {
        let mut v: Vec<f64> = Vec::new();
        for k in -(n as i64)..=(n as i64) {
            let l = 2.0 * PI * k as f64 / period - a;
            v.push(l);
            v.push(l);
        }
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn free_operator_spectrum() {
        let op = SpectralOperator::new(j_std(), ZerothOrder::Constant(DMatrix::zeros(2, 2)), 1.0, 16).unwrap();
        assert!((&op.matrix - op.matrix.transpose()).amax() < 1e-12);
        let sp = spectrum(&op);
        assert_eq!(sp.kernel_dim, 2);
        assert!((sp.gap - 2.0 * PI).abs() < 1e-10);
        for (l, e) in sp.eigenvalues.iter().zip(expected(0.0, 16, 1.0)) {
            assert!((l - e).abs() < 1e-10);
        }
    }

    #[test]
    fn shifted_spectrum_and_gap() {
        let op = SpectralOperator::new(j_std(), ZerothOrder::Constant(DMatrix::identity(2, 2) * PI), 1.0, 12).unwrap();
        let sp = spectrum(&op);
        assert!((sp.gap - PI).abs() < 1e-10);
        assert_eq!(sp.kernel_dim, 0);
    }

    #[test]
    fn period_scaling() {
        let op = SpectralOperator::new(j_std(), ZerothOrder::Constant(DMatrix::zeros(2, 2)), 2.0, 8).unwrap();
        assert!((spectrum(&op).gap - PI).abs() < 1e-10);
    }

    #[test]
    fn scalar_periodic_term_is_gauge_equivalent_to_its_mean() {
        // S(t) = s(t)·Id commutes with J₀, so the spectrum is {2πk − mean s}.
        let s = ZerothOrder::periodic(|t| DMatrix::identity(2, 2) * (0.7 + 0.4 * (2.0 * PI * t).cos() + 0.2 * (4.0 * PI * t).sin()));
        let low = |n: usize| {
            let op = SpectralOperator::new(j_std(), s.clone(), 1.0, n).unwrap();
            let mut v = spectrum(&op).by_magnitude();
            v.truncate(10);
            v
        };
        let (a, b) = (low(24), low(48));
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
        let mut exact = expected(0.7, 10, 1.0);
        exact.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
        for (x, e) in b.iter().zip(exact.iter()) {
            assert!((x - e).abs() < 1e-9, "{x} vs {e}");
        }
    }

    #[test]
    fn frame_change_invariance() {
        let s = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]);
        let th: f64 = 0.37;
        let o = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let base = spectrum(&SpectralOperator::new(j_std(), ZerothOrder::Constant(s.clone()), 1.0, 10).unwrap());
        let rot = spectrum(
            &SpectralOperator::new(o.transpose() * j_std() * &o, ZerothOrder::Constant(o.transpose() * s * &o), 1.0, 10).unwrap(),
        );
        assert!((base.gap - rot.gap).abs() < 1e-10);
    }

    #[test]
    fn asymmetric_inputs_rejected() {
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            SpectralOperator::new(j_std(), ZerothOrder::Constant(s.clone()), 1.0, 4),
            Err(SpectralError::AsymmetricTerm(_))
        ));
        let h = HessianData { j_e: j_std(), dv_x: ZerothOrder::Constant(DMatrix::identity(2, 2)) };
        assert!(matches!(build_operator(1.0, &h, 4), Err(SpectralError::AsymmetricHessian(_))));
        assert!(matches!(
            SpectralOperator::new(DMatrix::identity(2, 2), ZerothOrder::Constant(DMatrix::zeros(2, 2)), 1.0, 4),
            Err(SpectralError::BadComplexStructure(_))
        ));
    }

    #[test]
    fn gap_check_and_extremal_eigenvector() {
        let op = SpectralOperator::new(j_std(), ZerothOrder::Constant(DMatrix::identity(2, 2) * 1.3), 1.0, 10).unwrap();
        let sp = spectrum(&op);
        let rep = gap_inequality_check(&op, &sp, 200, 7);
        assert!(rep.passed && rep.min_quotient >= rep.delta_sq - 1e-8);
        assert!(rep.min_quotient < 2.0 * rep.delta_sq, "sampler never approaches the gap");
        let i = sp.first_nonzero().unwrap();
        let v = sp.eigenvectors.column(i).into_owned();
        assert!((rayleigh_gap_quotient(&op, &v) - rep.delta_sq).abs() < 1e-10);
        let mut wrong = sp.clone();
        wrong.gap *= 1.05;
        let rep = gap_inequality_check(&op, &wrong, 200, 7);
        assert!(!rep.passed && !rep.failures.is_empty());
    }

    #[test]
    fn sample_round_trip() {
        let op = SpectralOperator::new(j_std(), ZerothOrder::Constant(DMatrix::zeros(2, 2)), 1.0, 6).unwrap();
        let c = DVector::from_fn(op.dim(), |i, _| ((i * 7) % 5) as f64 - 2.0);
        let z = op.synthesize(&c, 32);
        let back = op.coefficients_from_samples(&z).unwrap();
        assert!((back - c).amax() < 1e-12);
    }

    use crate::contact_core::{models, ScalarExpr};
    use crate::normal_form::{build_thickening, MorseBottSetup, ThickeningOptions};
    use crate::reeb_dynamics::{flow_variational, OrbitOptions};

    #[test]
    fn linearized_operator_kills_periodic_linearized_flow() {
        let chart = models::ellipsoid(1.0, 1.0);
        let opts = OrbitOptions { n_samples: 64, ..OrbitOptions::default() };
        let p = DVector::from_vec(vec![0.0, 0.5, 0.0]);
        let orbit = ReebOrbit::through(&chart, &p, 2.0 * PI, &opts).unwrap();
        let pert = PerturbationData::constant(1.0, 3);
        let frame: Vec<Vec<DVector<f64>>> = [DVector::from_vec(vec![0.0, 1.0, 0.0]), DVector::from_vec(vec![0.0, 0.0, 1.0])]
            .iter()
            .map(|v| {
                (0..64)
                    .map(|j| {
                        let t = orbit.period * j as f64 / 64.0;
                        let (_, m) = flow_variational(&chart, &p, t, &opts.integrator).unwrap();
                        m * v
                    })
                    .collect()
            })
            .collect();
        let out = linearized_orbit_operator(&chart, &pert, &orbit, &frame).unwrap();
        let worst = out.iter().flatten().map(|v| v.amax()).fold(0.0, f64::max);
        assert!(worst < 1e-7, "{worst}");
    }

    #[test]
    fn normal_form_perturbation_matches_model_spectrum() {
        let a = 0.3;
        let tc = build_thickening(&MorseBottSetup::circle(), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]), &ThickeningOptions::default())
            .unwrap();
        let chart = &tc.chart;
        let f = ScalarExpr::new(move |x: &DVector<f64>| (0.5 * a * (x[1] * x[1] + x[2] * x[2])).exp());
        let pert = PerturbationData::new(f);
        let opts = OrbitOptions { n_samples: 32, ..OrbitOptions::default() };
        let orbit = ReebOrbit::through(chart, &DVector::zeros(3), 1.0, &opts).unwrap();
        let e = |i: usize| vec![DVector::from_fn(3, |k, _| if k == i { 1.0 } else { 0.0 }); 32];
        let out = linearized_orbit_operator(chart, &pert, &orbit, &[e(1), e(2)]).unwrap();
        let mut dv = DMatrix::zeros(2, 2);
        for c in 0..2 {
            for r in 0..2 {
                dv[(r, c)] = -out[c][5][r + 1] / orbit.period;
            }
        }
        let hess = HessianData { j_e: j_std(), dv_x: ZerothOrder::Constant(dv) };
        let op = build_operator(orbit.period, &hess, 12).unwrap();
        let sp = spectrum(&op);
        for (l, x) in sp.eigenvalues.iter().zip(expected(-a, 12, 1.0)) {
            assert!((l - x).abs() < 1e-6, "{l} vs {x}");
        }

        let bad = PerturbationData::new(ScalarExpr::new(|x: &DVector<f64>| 1.0 + 0.1 * x[1]));
        assert!(matches!(
            linearized_orbit_operator(chart, &bad, &orbit, &[e(1)]),
            Err(SpectralError::HypothesisViolated { .. })
        ));
    }
}
