use nalgebra::{DMatrix, DVector};

use super::NormalFormError;
use crate::contact_core::{FieldExpr, FormExpr, Point};
use crate::linalg;

/// Pre-contact data (Q, θ, X_θ, H, G) in one chart of Q.
///
/// Coordinates are arbitrary; the splitting TQ = ℝX_θ ⊕ H ⊕ G is given by explicit
/// frame fields, with H ⊂ ker dθ and G a complement on which dθ is non-degenerate.
#[derive(Clone, Debug)]
pub struct MorseBottSetup {
    pub name: String,
    pub m: usize,
    pub g: usize,
    pub theta: FormExpr,
    pub x_theta: FieldExpr,
    pub h_basis: Vec<FieldExpr>,
    pub g_basis: Vec<FieldExpr>,
    pub periods: Vec<Option<f64>>,
    /// Base points used for validation and tube checks.
    pub samples: Vec<Point>,
}

/// Diagnostics from [`MorseBottSetup::validate`].
#[derive(Debug, Clone)]
pub struct SetupReport {
    pub max_theta_x_error: f64,
    pub dtheta_rank: usize,
    pub max_kernel_residual: f64,
    pub min_frame_singular_value: f64,
}

impl MorseBottSetup {
    pub fn q_dim(&self) -> usize {
        1 + self.m + 2 * self.g
    }

    /// Frame matrix [X_θ, H, G] at y.
    pub fn frame(&self, y: &Point) -> DMatrix<f64> {
        let mut cols = vec![self.x_theta.eval(y)];
        cols.extend(self.h_basis.iter().map(|h| h.eval(y)));
        cols.extend(self.g_basis.iter().map(|g| g.eval(y)));
        DMatrix::from_columns(&cols)
    }

    /// Dual coframe rows β^a (a = 0..m) picking out the H-components.
    pub fn h_coframe(&self, y: &Point) -> DMatrix<f64> {
        let inv = self.frame(y).try_inverse().unwrap_or_else(|| DMatrix::from_element(self.q_dim(), self.q_dim(), f64::NAN));
        inv.rows(1, self.m).into_owned()
    }

    /// Θ_G at (y, μ): Σ μ_a β^a(y).
    pub fn theta_g(&self, y: &Point, mu: &DVector<f64>) -> DVector<f64> {
        if self.m == 0 {
            return DVector::zeros(self.q_dim());
        }
        self.h_coframe(y).transpose() * mu
    }

    /// ω_G: matrix of dθ restricted to the G frame.
    pub fn omega_g(&self, y: &Point) -> DMatrix<f64> {
        let w = self.theta.exterior_derivative(y);
        let gm = if self.g == 0 {
            DMatrix::zeros(self.q_dim(), 0)
        } else {
            DMatrix::from_columns(&self.g_basis.iter().map(|g| g.eval(y)).collect::<Vec<_>>())
        };
        gm.transpose() * w * gm
    }

    pub fn validate(&self) -> Result<SetupReport, NormalFormError> {
        let q = self.q_dim();
        if self.theta.dim() != q || self.x_theta.dim() != q || self.h_basis.len() != self.m || self.g_basis.len() != 2 * self.g {
            return Err(NormalFormError::BadSetup("frame sizes do not match 1 + m + 2g".into()));
        }
        let mut rep = SetupReport {
            max_theta_x_error: 0.0,
            dtheta_rank: 2 * self.g,
            max_kernel_residual: 0.0,
            min_frame_singular_value: f64::INFINITY,
        };
        for y in &self.samples {
            let x = self.x_theta.eval(y);
            let err = (self.theta.apply(y, &x) - 1.0).abs();
            rep.max_theta_x_error = rep.max_theta_x_error.max(err);
            if err > 1e-10 {
                return Err(NormalFormError::BadSetup(format!("θ(X_θ) − 1 = {err:.3e}")));
            }
            let w = self.theta.exterior_derivative(y);
            let sv = w.clone().singular_values();
            let big = sv.iter().filter(|&&s| s > 1e-6).count();
            let small = sv.iter().filter(|&&s| s < 1e-10).count();
            if big != 2 * self.g || big + small != q {
                return Err(NormalFormError::BadSetup(format!("dθ does not have constant rank {}", 2 * self.g)));
            }
            let mut kr = (w.transpose() * &x).amax();
            for h in &self.h_basis {
                kr = kr.max((w.transpose() * h.eval(y)).amax());
            }
            rep.max_kernel_residual = rep.max_kernel_residual.max(kr);
            if kr > 1e-8 {
                return Err(NormalFormError::BadSetup(format!("X_θ, H not in ker dθ (residual {kr:.3e})")));
            }
            let fsv = self.frame(y).singular_values().min();
            rep.min_frame_singular_value = rep.min_frame_singular_value.min(fsv);
            if fsv < 1e-8 {
                return Err(NormalFormError::BadSetup("X_θ, H, G do not span TQ".into()));
            }
        }
        Ok(rep)
    }

    /// Q = S¹ with θ = dt (nondegenerate type, m = g = 0).
    pub fn circle() -> Self {
        MorseBottSetup {
            name: "circle".into(),
            m: 0,
            g: 0,
            theta: FormExpr::constant(DVector::from_vec(vec![1.0])),
            x_theta: FieldExpr::constant(DVector::from_vec(vec![1.0])),
            h_basis: vec![],
            g_basis: vec![],
            periods: vec![Some(1.0)],
            samples: (0..4).map(|i| DVector::from_vec(vec![0.25 * i as f64])).collect(),
        }
    }

    /// Q = T² with θ = dt₁, X_θ = ∂t₁ and H spanned by ∂t₂ (m = 1, g = 0).
    pub fn torus2() -> Self {
        let e = |i: usize| {
            let mut v = DVector::zeros(2);
            v[i] = 1.0;
            v
        };
        let mut samples = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                samples.push(DVector::from_vec(vec![i as f64 / 3.0, j as f64 / 3.0]));
            }
        }
        MorseBottSetup {
            name: "torus2".into(),
            m: 1,
            g: 0,
            theta: FormExpr::constant(e(0)),
            x_theta: FieldExpr::constant(e(0)),
            h_basis: vec![FieldExpr::constant(e(1))],
            g_basis: vec![],
            periods: vec![Some(1.0), Some(1.0)],
            samples,
        }
    }

    /// Heisenberg-type model on coordinates (t, ν_1..ν_m, x_1..x_g, y_1..y_g):
    /// θ = dt + ½Σ(x_i dy_i − y_i dx_i), X_θ = ∂t, H = span ∂ν_a and
    /// G_b = (horizontal lift of ∂w_b) + Σ_a shear[(a, b)] ∂ν_a, plus `slope·y_1 ∂ν_1`
    /// on G_{x_1}. A nonzero slope makes Θ_G non-closed in the base and the tube finite.
    pub fn heisenberg(m: usize, g: usize, shear: DMatrix<f64>, slope: f64) -> Self {
        assert_eq!(shear.shape(), (m, 2 * g), "shear must be m × 2g");
        assert!(slope == 0.0 || (m >= 1 && g >= 1), "slope needs m, g >= 1");
        let q = 1 + m + 2 * g;
        let unit = move |i: usize| {
            let mut v = DVector::zeros(q);
            v[i] = 1.0;
            v
        };
        let theta = FormExpr::new(q, move |p| {
            let mut a = DVector::zeros(q);
            a[0] = 1.0;
            for i in 0..g {
                let (xi, yi) = (1 + m + i, 1 + m + g + i);
                a[xi] = -0.5 * p[yi];
                a[yi] = 0.5 * p[xi];
            }
            a
        })
        .with_jacobian(move |_| {
            let mut j = DMatrix::zeros(q, q);
            for i in 0..g {
                let (xi, yi) = (1 + m + i, 1 + m + g + i);
                j[(xi, yi)] = -0.5;
                j[(yi, xi)] = 0.5;
            }
            j
        });
        let g_basis = (0..2 * g)
            .map(|b| {
                let shear = shear.clone();
                FieldExpr::new(q, move |p| {
                    let mut v = unit(1 + m + b);
                    if b < g {
                        v[0] = 0.5 * p[1 + m + g + b];
                    } else {
                        v[0] = -0.5 * p[1 + m + b - g];
                    }
                    for a in 0..m {
                        v[1 + a] += shear[(a, b)];
                    }
                    if b == 0 && slope != 0.0 {
                        v[1] += slope * p[1 + m + g];
                    }
                    v
                })
            })
            .collect();
        let mut samples = vec![DVector::zeros(q)];
        for s in [-0.5, 0.5] {
            samples.push(DVector::from_fn(q, |i, _| s * (1.0 + 0.3 * i as f64)));
        }
        MorseBottSetup {
            name: format!("heisenberg(m={m},g={g})"),
            m,
            g,
            theta,
            x_theta: FieldExpr::constant(unit(0)),
            h_basis: (0..m).map(|a| FieldExpr::constant(unit(1 + a))).collect(),
            g_basis,
            periods: vec![None; q],
            samples,
        }
    }

    /// m = g = 1 Heisenberg model with y-dependent shear `c`; the λ_F volume ratio is 1 + cμ.
    pub fn sheared(c: f64) -> Self {
        let mut s = Self::heisenberg(1, 1, DMatrix::zeros(1, 2), c);
        s.name = format!("sheared({c})");
        s
    }
}

/// True when `j` is a complex structure compatible with the antisymmetric form `omega`.
pub(crate) fn compatible_block(j: &DMatrix<f64>, omega: &DMatrix<f64>, tol: f64) -> Result<(), String> {
    let n = omega.nrows();
    if j.shape() != (n, n) {
        return Err(format!("expected {n}×{n}, got {}×{}", j.nrows(), j.ncols()));
    }
    if n == 0 {
        return Ok(());
    }
    let sq = (j * j + DMatrix::identity(n, n)).amax();
    if sq > tol {
        return Err(format!("J² + 1 = {sq:.3e}"));
    }
    let inv = (j.transpose() * omega * j - omega).amax();
    if inv > tol {
        return Err(format!("J does not preserve the form ({inv:.3e})"));
    }
    let metric = omega * j;
    let sym = (&metric + metric.transpose()) * 0.5;
    if sym.cholesky().is_none() {
        return Err("form(·, J·) is not positive".into());
    }
    Ok(())
}

/// Basis of {B : B·j_g = 0} for B with `rows` rows.
pub fn coupling_null_space(j_g: &DMatrix<f64>, rows: usize) -> Vec<DMatrix<f64>> {
    let c = j_g.nrows();
    if rows == 0 || c == 0 {
        return Vec::new();
    }
    // vec(B J) = (Jᵀ ⊗ I) vec(B) in column-major order.
    let op = j_g.transpose().kronecker(&DMatrix::identity(rows, rows));
    let ns = linalg::null_space(&op, 1e-12);
    (0..ns.ncols()).map(|i| DMatrix::from_column_slice(rows, c, ns.column(i).as_slice())).collect()
}

/// Standard symplectic form Σ dx_i ∧ dy_i on ℝ^{2k}.
pub fn standard_omega(k: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(2 * k, 2 * k);
    for i in 0..k {
        w[(2 * i, 2 * i + 1)] = 1.0;
        w[(2 * i + 1, 2 * i)] = -1.0;
    }
    w
}
