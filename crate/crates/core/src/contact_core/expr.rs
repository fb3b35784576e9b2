//! Coordinate expressions: scalar functions, one-forms and vector fields on a chart.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

pub type Point = DVector<f64>;

type ScalarFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&Point) -> DVector<f64> + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&Point) -> DMatrix<f64> + Send + Sync>;

/// Default finite-difference step.
pub const H_FD: f64 = 1e-4;

/// Fourth-order centered difference of a vector-valued map; column j is ∂_j f.
pub fn fd_jacobian<F>(f: F, x: &Point, out_dim: usize, h: f64) -> DMatrix<f64>
where
    F: Fn(&Point) -> DVector<f64>,
{
    let n = x.len();
    let mut jac = DMatrix::zeros(out_dim, n);
    let mut y = x.clone();
    for j in 0..n {
        let x0 = x[j];
        y[j] = x0 + 2.0 * h;
        let fp2 = f(&y);
        y[j] = x0 + h;
        let fp1 = f(&y);
        y[j] = x0 - h;
        let fm1 = f(&y);
        y[j] = x0 - 2.0 * h;
        let fm2 = f(&y);
        y[j] = x0;
        let col = (-fp2 + fp1 * 8.0 - fm1 * 8.0 + fm2) / (12.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// Fourth-order centered gradient of a scalar function.
pub fn fd_gradient<F>(f: F, x: &Point, h: f64) -> DVector<f64>
where
    F: Fn(&Point) -> f64,
{
    let jac = fd_jacobian(|p| DVector::from_element(1, f(p)), x, 1, h);
    jac.row(0).transpose()
}

/// Vector-valued expression with an optional analytic Jacobian.
#[derive(Clone)]
struct Jet {
    dim: usize,
    value: VectorFn,
    jacobian: Option<MatrixFn>,
    h: f64,
}

impl Jet {
    fn eval(&self, x: &Point) -> DVector<f64> {
        let v = (self.value)(x);
        debug_assert_eq!(v.len(), self.dim);
        v
    }

    fn jacobian(&self, x: &Point) -> DMatrix<f64> {
        match &self.jacobian {
            Some(j) => j(x),
            None => fd_jacobian(|p| (self.value)(p), x, self.dim, self.h),
        }
    }
}

/// A one-form α = Σ a_i dx^i given by its coefficient functions.
#[derive(Clone)]
pub struct FormExpr {
    jet: Jet,
}

impl FormExpr {
    pub fn new<F>(dim: usize, coeffs: F) -> Self
    where
        F: Fn(&Point) -> DVector<f64> + Send + Sync + 'static,
    {
        FormExpr {
            jet: Jet { dim, value: Arc::new(coeffs), jacobian: None, h: H_FD },
        }
    }

    /// Attach analytic derivatives: `jac(x)[(i, j)] = ∂_j a_i(x)`.
    pub fn with_jacobian<F>(mut self, jac: F) -> Self
    where
        F: Fn(&Point) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jet.jacobian = Some(Arc::new(jac));
        self
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.jet.h = h;
        self
    }

    pub fn constant(coeffs: DVector<f64>) -> Self {
        let n = coeffs.len();
        FormExpr::new(n, move |_| coeffs.clone()).with_jacobian(move |_| DMatrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.jet.dim
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.jet.jacobian.is_some()
    }

    pub fn eval(&self, x: &Point) -> DVector<f64> {
        self.jet.eval(x)
    }

    pub fn jacobian(&self, x: &Point) -> DMatrix<f64> {
        self.jet.jacobian(x)
    }

    /// α_x(v).
    pub fn apply(&self, x: &Point, v: &DVector<f64>) -> f64 {
        self.eval(x).dot(v)
    }

    /// Matrix W with W[(j, k)] = dα(e_j, e_k) = ∂_j a_k − ∂_k a_j.
    pub fn exterior_derivative(&self, x: &Point) -> DMatrix<f64> {
        let jac = self.jacobian(x);
        jac.transpose() - jac
    }
}

impl fmt::Debug for FormExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FormExpr(dim={}, analytic={})", self.dim(), self.has_analytic_derivative())
    }
}

/// A vector field given by its components.
#[derive(Clone)]
pub struct FieldExpr {
    jet: Jet,
}

impl FieldExpr {
    pub fn new<F>(dim: usize, comps: F) -> Self
    where
        F: Fn(&Point) -> DVector<f64> + Send + Sync + 'static,
    {
        FieldExpr {
            jet: Jet { dim, value: Arc::new(comps), jacobian: None, h: H_FD },
        }
    }

    pub fn with_jacobian<F>(mut self, jac: F) -> Self
    where
        F: Fn(&Point) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jet.jacobian = Some(Arc::new(jac));
        self
    }

    pub fn constant(comps: DVector<f64>) -> Self {
        let n = comps.len();
        FieldExpr::new(n, move |_| comps.clone()).with_jacobian(move |_| DMatrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.jet.dim
    }

    pub fn eval(&self, x: &Point) -> DVector<f64> {
        self.jet.eval(x)
    }

    /// DX with DX[(i, j)] = ∂_j X^i.
    pub fn jacobian(&self, x: &Point) -> DMatrix<f64> {
        self.jet.jacobian(x)
    }
}

impl fmt::Debug for FieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FieldExpr(dim={})", self.dim())
    }
}

/// Scalar function with optional analytic gradient.
#[derive(Clone)]
pub struct ScalarExpr {
    value: ScalarFn,
    gradient: Option<VectorFn>,
    h: f64,
}

impl ScalarExpr {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&Point) -> f64 + Send + Sync + 'static,
    {
        ScalarExpr { value: Arc::new(f), gradient: None, h: H_FD }
    }

    pub fn with_gradient<G>(mut self, g: G) -> Self
    where
        G: Fn(&Point) -> DVector<f64> + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn constant(c: f64, dim: usize) -> Self {
        ScalarExpr::new(move |_| c).with_gradient(move |_| DVector::zeros(dim))
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn value(&self, x: &Point) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &Point) -> DVector<f64> {
        match &self.gradient {
            Some(g) => g(x),
            None => fd_gradient(|p| (self.value)(p), x, self.h),
        }
    }

    /// Gradient by finite differences, ignoring any analytic gradient.
    pub fn fd_gradient(&self, x: &Point) -> DVector<f64> {
        fd_gradient(|p| (self.value)(p), x, self.h)
    }

    /// dh as a one-form of the given dimension.
    pub fn differential(&self, dim: usize) -> FormExpr {
        let this = self.clone();
        FormExpr::new(dim, move |x| this.gradient(x))
    }
}

impl fmt::Debug for ScalarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarExpr(analytic_gradient={})", self.has_analytic_gradient())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_matches_analytic_jacobian() {
        let f = |x: &Point| DVector::from_vec(vec![x[0].sin() * x[1], x[1].exp()]);
        let x = DVector::from_vec(vec![0.3, -0.4]);
        let jac = fd_jacobian(f, &x, 2, H_FD);
        let exact = DMatrix::from_row_slice(
            2,
            2,
            &[0.3f64.cos() * -0.4, 0.3f64.sin(), 0.0, (-0.4f64).exp()],
        );
        assert!((jac - exact).amax() < 1e-11);
    }

    #[test]
    fn exterior_derivative_of_standard_form() {
        // dz − p dq on (q, p, z): dλ = dq∧dp.
        let lam = FormExpr::new(3, |x| DVector::from_vec(vec![-x[1], 0.0, 1.0]));
        let w = lam.exterior_derivative(&DVector::from_vec(vec![0.1, 0.7, -2.0]));
        assert!((w[(0, 1)] - 1.0).abs() < 1e-12);
        assert!((w[(1, 0)] + 1.0).abs() < 1e-12);
        assert!(w[(0, 2)].abs() < 1e-12 && w[(1, 2)].abs() < 1e-12);
    }

    #[test]
    fn scalar_gradient_fallback() {
        let h = ScalarExpr::new(|x| x[0] * x[0] + 3.0 * x[1]);
        let g = h.gradient(&DVector::from_vec(vec![2.0, 5.0]));
        assert!((g[0] - 4.0).abs() < 1e-10 && (g[1] - 3.0).abs() < 1e-10);
    }
}
