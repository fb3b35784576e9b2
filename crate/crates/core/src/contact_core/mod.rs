//! Chart-level contact algebra: Reeb fields, ξ-projections, the λ-dual isomorphism,
//! conformally perturbed forms and triad gradients.
//!
//! Conventions: λ = Σ a_i dx^i, dλ is the antisymmetric matrix W with
//! W[(j, k)] = dλ(e_j, e_k), so (v⌋dλ) has coefficients Wᵀv.

mod chart;
mod expr;
pub mod models;

pub use chart::ContactChart;
pub use expr::{fd_gradient, fd_jacobian, FieldExpr, FormExpr, Point, ScalarExpr, H_FD};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg;

/// Reeb solves with a larger condition estimate are reported as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ContactError {
    #[error("chart dimension {0} is not of the form 2n+1 with n >= 1")]
    BadDimension(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("contact system is singular (condition estimate {condition:.3e})")]
    SingularChart { condition: f64 },
    #[error("point left the chart domain: {0:?}")]
    LeftChartDomain(Vec<f64>),
    #[error("conformal factor must be positive, got {0}")]
    NonPositiveFactor(f64),
    #[error("dg disagrees with the derivative of log f by {0:.3e}")]
    BadPerturbation(f64),
    #[error("J is not compatible with dλ on ξ: {0}")]
    IncompatibleJ(String),
}

/// Reeb vector with solve diagnostics.
#[derive(Debug, Clone)]
pub struct ReebSolve {
    pub vector: DVector<f64>,
    /// Residual of the stacked defining system.
    pub residual: f64,
    /// 2-norm condition number of the stacked system.
    pub condition: f64,
}

fn reeb_system(chart: &ContactChart, x: &Point) -> (DMatrix<f64>, DVector<f64>) {
    let d = chart.dim();
    let a = chart.lambda_at(x);
    let w = chart.dlambda_at(x);
    let mut m = DMatrix::zeros(d + 1, d);
    m.row_mut(0).copy_from(&a.transpose());
    m.view_mut((1, 0), (d, d)).copy_from(&w.transpose());
    let mut rhs = DVector::zeros(d + 1);
    rhs[0] = 1.0;
    (m, rhs)
}

fn qr_least_squares(m: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, ContactError> {
    let qr = m.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..r.ncols()).map(|i| r[(i, i)].abs()).collect();
    let rmax = diag.iter().cloned().fold(0.0, f64::max);
    let rmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let cond = if rmin == 0.0 { f64::INFINITY } else { rmax / rmin };
    if !(cond < SINGULAR_CONDITION) {
        return Err(ContactError::SingularChart { condition: cond });
    }
    let qtb = qr.q().transpose() * rhs;
    r.solve_upper_triangular(&qtb).ok_or(ContactError::SingularChart { condition: cond })
}

/// The Reeb field X_λ(x): λ(X) = 1, X⌋dλ = 0.
pub fn reeb_field(chart: &ContactChart, x: &Point) -> Result<DVector<f64>, ContactError> {
    let (m, rhs) = reeb_system(chart, x);
    qr_least_squares(m, &rhs)
}

/// [`reeb_field`] with residual and condition number.
pub fn reeb_solve(chart: &ContactChart, x: &Point) -> Result<ReebSolve, ContactError> {
    let (m, rhs) = reeb_system(chart, x);
    let condition = linalg::condition_number(&m);
    let vector = qr_least_squares(m.clone(), &rhs)?;
    let residual = (&m * &vector - rhs).norm();
    Ok(ReebSolve { vector, residual, condition })
}

/// π_λ(Z) = Z − λ(Z) X_λ.
pub fn project_xi(chart: &ContactChart, z: &DVector<f64>, x: &Point) -> Result<DVector<f64>, ContactError> {
    let xr = reeb_field(chart, x)?;
    Ok(z - xr * chart.lambda_of(x, z))
}

/// Matrix of ♯_λ at x: v ↦ v⌋dλ + λ(v)λ, i.e. Wᵀ + a aᵀ.
pub fn sharp_matrix(chart: &ContactChart, x: &Point) -> DMatrix<f64> {
    let a = chart.lambda_at(x);
    chart.dlambda_at(x).transpose() + &a * a.transpose()
}

/// ♯_λ(X) = X⌋dλ + λ(X)λ as covector coefficients.
pub fn sharp_dual(chart: &ContactChart, v: &DVector<f64>, x: &Point) -> DVector<f64> {
    sharp_matrix(chart, x) * v
}

/// ♭_λ of a covector given by its coefficients at x.
pub fn flat_dual_covector(chart: &ContactChart, alpha: &DVector<f64>, x: &Point) -> Result<DVector<f64>, ContactError> {
    let m = sharp_matrix(chart, x);
    let cond = linalg::condition_number(&m);
    if !(cond < SINGULAR_CONDITION) {
        return Err(ContactError::SingularChart { condition: cond });
    }
    m.lu().solve(alpha).ok_or(ContactError::SingularChart { condition: cond })
}

/// ♭_λ(α)(x) = Y_α + α(X_λ)X_λ, the unique vector with α = ♭⌋dλ + λ(♭)λ.
pub fn flat_dual(chart: &ContactChart, alpha: &FormExpr, x: &Point) -> Result<DVector<f64>, ContactError> {
    flat_dual_covector(chart, &alpha.eval(x), x)
}

/// Y_α = π(♭(α)), the ξ-component of the dual.
pub fn xi_dual(chart: &ContactChart, alpha: &DVector<f64>, x: &Point) -> Result<DVector<f64>, ContactError> {
    let b = flat_dual_covector(chart, alpha, x)?;
    project_xi(chart, &b, x)
}

/// Conformal factor f > 0 with g = log f.
#[derive(Clone, Debug)]
pub struct PerturbationData {
    f: ScalarExpr,
}

impl PerturbationData {
    pub fn new(f: ScalarExpr) -> Self {
        PerturbationData { f }
    }

    pub fn constant(c: f64, dim: usize) -> Self {
        PerturbationData { f: ScalarExpr::constant(c, dim) }
    }

    pub fn f(&self) -> &ScalarExpr {
        &self.f
    }

    pub fn f_at(&self, x: &Point) -> Result<f64, ContactError> {
        let v = self.f.value(x);
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(ContactError::NonPositiveFactor(v))
        }
    }

    /// g(x) = log f(x).
    pub fn g(&self, x: &Point) -> Result<f64, ContactError> {
        Ok(self.f_at(x)?.ln())
    }

    /// dg = df / f.
    pub fn dg(&self, x: &Point) -> Result<DVector<f64>, ContactError> {
        let f = self.f_at(x)?;
        Ok(self.f.gradient(x) / f)
    }

    /// dg as a one-form.
    pub fn dg_form(&self, dim: usize) -> FormExpr {
        let this = self.clone();
        FormExpr::new(dim, move |x| this.dg(x).unwrap_or_else(|_| DVector::from_element(dim, f64::NAN)))
    }

    /// f > 0 and dg within 1e−8 of a finite-difference derivative of log f.
    pub fn validate(&self, x: &Point) -> Result<(), ContactError> {
        let dg = self.dg(x)?;
        let f = self.f.clone();
        let fd = fd_gradient(|p| f.value(p).ln(), x, H_FD);
        let gap = (dg - fd).amax();
        if gap <= 1e-8 {
            Ok(())
        } else {
            Err(ContactError::BadPerturbation(gap))
        }
    }
}

/// X_{fλ} = (1/f)(X_λ + Y_{dg}).
pub fn perturbed_reeb(chart: &ContactChart, pert: &PerturbationData, x: &Point) -> Result<DVector<f64>, ContactError> {
    let f = pert.f_at(x)?;
    let xr = reeb_field(chart, x)?;
    let y = xi_dual(chart, &pert.dg(x)?, x)?;
    Ok((xr + y) / f)
}

/// π_{fλ}(Z) = π_λ(Z) − λ(Z) Y_{dg}.
pub fn perturbed_projection(
    chart: &ContactChart,
    pert: &PerturbationData,
    z: &DVector<f64>,
    x: &Point,
) -> Result<DVector<f64>, ContactError> {
    pert.f_at(x)?;
    let pz = project_xi(chart, z, x)?;
    let y = xi_dual(chart, &pert.dg(x)?, x)?;
    Ok(pz - y * chart.lambda_of(x, z))
}

/// Orthonormal basis of ξ_x from the projected coordinate frame, in coordinate order.
pub fn xi_frame(chart: &ContactChart, x: &Point) -> Result<Vec<DVector<f64>>, ContactError> {
    let d = chart.dim();
    let xr = reeb_field(chart, x)?;
    let a = chart.lambda_at(x);
    let projected: Vec<DVector<f64>> = (0..d)
        .map(|i| {
            let e = DVector::from_fn(d, |k, _| if k == i { 1.0 } else { 0.0 });
            &e - &xr * a[i]
        })
        .collect();
    let frame = linalg::gram_schmidt(&projected, 1e-8);
    if frame.len() != d - 1 {
        return Err(ContactError::SingularChart { condition: f64::INFINITY });
    }
    Ok(frame)
}

/// Symplectic basis (e_1..e_n, f_1..f_n) of (ξ_x, dλ) with dλ(e_i, f_j) = δ_ij.
pub fn symplectic_xi_basis(chart: &ContactChart, x: &Point) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>), ContactError> {
    let w = chart.dlambda_at(x);
    let omega = |u: &DVector<f64>, v: &DVector<f64>| (u.transpose() * &w * v)[(0, 0)];
    let mut pool = xi_frame(chart, x)?;
    let (mut es, mut fs) = (Vec::new(), Vec::new());
    while !pool.is_empty() {
        let e = pool.remove(0);
        let (idx, val) = pool
            .iter()
            .enumerate()
            .map(|(i, b)| (i, omega(&e, b)))
            .fold((0, 0.0f64), |acc, (i, v)| if v.abs() > acc.1.abs() { (i, v) } else { acc });
        if val.abs() < 1e-12 {
            return Err(ContactError::SingularChart { condition: f64::INFINITY });
        }
        let f = pool.remove(idx) / val;
        for b in pool.iter_mut() {
            let (bf, be) = (omega(b, &f), omega(b, &e));
            *b = &*b - &e * bf + &f * be;
        }
        es.push(e);
        fs.push(f);
    }
    Ok((es, fs))
}

/// A dλ-compatible complex structure on ξ_x, extended by J X_λ = 0.
pub fn compatible_j(chart: &ContactChart, x: &Point) -> Result<DMatrix<f64>, ContactError> {
    let (es, fs) = symplectic_xi_basis(chart, x)?;
    let xr = reeb_field(chart, x)?;
    let d = chart.dim();
    let mut src = es.clone();
    src.extend(fs.iter().cloned());
    src.push(xr);
    let mut img: Vec<DVector<f64>> = fs.clone();
    img.extend(es.iter().map(|e| -e));
    img.push(DVector::zeros(d));
    let p = DMatrix::from_columns(&src);
    let q = DMatrix::from_columns(&img);
    let pinv = p.try_inverse().ok_or(ContactError::SingularChart { condition: f64::INFINITY })?;
    Ok(q * pinv)
}

/// Matrix of the triad metric dλ(·, J·) + λ⊗λ.
pub fn triad_metric(chart: &ContactChart, j: &DMatrix<f64>, x: &Point) -> DMatrix<f64> {
    let a = chart.lambda_at(x);
    chart.dlambda_at(x) * j + &a * a.transpose()
}

/// Checks J X = 0, J² = −Π and that the triad metric is symmetric positive definite.
pub fn check_compatible(chart: &ContactChart, j: &DMatrix<f64>, x: &Point, tol: f64) -> Result<(), ContactError> {
    let d = chart.dim();
    if j.nrows() != d || j.ncols() != d {
        return Err(ContactError::DimensionMismatch { expected: d, got: j.nrows() });
    }
    let xr = reeb_field(chart, x)?;
    let a = chart.lambda_at(x);
    let pi = DMatrix::identity(d, d) - &xr * a.transpose();
    let jx = (j * &xr).amax();
    if jx > tol {
        return Err(ContactError::IncompatibleJ(format!("|J X| = {jx:.3e}")));
    }
    let sq = (j * j + &pi).amax();
    if sq > tol {
        return Err(ContactError::IncompatibleJ(format!("|J² + Π| = {sq:.3e}")));
    }
    let g = triad_metric(chart, j, x);
    let asym = (&g - g.transpose()).amax();
    if asym > tol * g.amax().max(1.0) {
        return Err(ContactError::IncompatibleJ(format!("metric asymmetry {asym:.3e}")));
    }
    let sym = (&g + g.transpose()) * 0.5;
    if sym.cholesky().is_none() {
        return Err(ContactError::IncompatibleJ("metric is not positive definite".into()));
    }
    Ok(())
}

/// Gradient of h for the triad metric: J Y_{dh} + X_λ[h] X_λ.
pub fn triad_gradient(chart: &ContactChart, j: &DMatrix<f64>, h: &ScalarExpr, x: &Point) -> Result<DVector<f64>, ContactError> {
    check_compatible(chart, j, x, 1e-8)?;
    let dh = h.gradient(x);
    let xr = reeb_field(chart, x)?;
    let y = xi_dual(chart, &dh, x)?;
    Ok(j * y + &xr * dh.dot(&xr))
}
