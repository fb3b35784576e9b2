use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::expr::{FormExpr, Point};
use super::ContactError;
use crate::linalg;

type DomainFn = Arc<dyn Fn(&Point) -> bool + Send + Sync>;

/// A coordinate chart of dimension 2n+1 carrying a contact form.
#[derive(Clone)]
pub struct ContactChart {
    name: String,
    lambda: FormExpr,
    periods: Vec<Option<f64>>,
    domain: Option<DomainFn>,
}

impl ContactChart {
    pub fn new(name: impl Into<String>, lambda: FormExpr) -> Result<Self, ContactError> {
        let dim = lambda.dim();
        if dim.is_multiple_of(2) || dim < 3 {
            return Err(ContactError::BadDimension(dim));
        }
        Ok(ContactChart { name: name.into(), lambda, periods: vec![None; dim], domain: None })
    }

    /// Declare periodic coordinates (`Some(period)`); used for orbit closure.
    pub fn with_periods(mut self, periods: Vec<Option<f64>>) -> Self {
        assert_eq!(periods.len(), self.dim());
        self.periods = periods;
        self
    }

    /// Restrict the chart to the points where `inside` holds.
    pub fn with_domain<F>(mut self, inside: F) -> Self
    where
        F: Fn(&Point) -> bool + Send + Sync + 'static,
    {
        self.domain = Some(Arc::new(inside));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.lambda.dim()
    }

    /// n where the chart dimension is 2n+1.
    pub fn dim_n(&self) -> usize {
        (self.dim() - 1) / 2
    }

    pub fn lambda(&self) -> &FormExpr {
        &self.lambda
    }

    pub fn periods(&self) -> &[Option<f64>] {
        &self.periods
    }

    pub fn contains(&self, x: &Point) -> bool {
        x.iter().all(|v| v.is_finite()) && self.domain.as_ref().is_none_or(|d| d(x))
    }

    pub fn check_domain(&self, x: &Point) -> Result<(), ContactError> {
        if x.len() != self.dim() {
            return Err(ContactError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if self.contains(x) {
            Ok(())
        } else {
            Err(ContactError::LeftChartDomain(x.iter().copied().collect()))
        }
    }

    /// Coefficients of λ at x.
    pub fn lambda_at(&self, x: &Point) -> DVector<f64> {
        self.lambda.eval(x)
    }

    /// dλ at x as W[(j, k)] = dλ(e_j, e_k).
    pub fn dlambda_at(&self, x: &Point) -> DMatrix<f64> {
        self.lambda.exterior_derivative(x)
    }

    /// λ(v) at x.
    pub fn lambda_of(&self, x: &Point, v: &DVector<f64>) -> f64 {
        self.lambda.apply(x, v)
    }

    /// λ∧(dλ)^n evaluated on the coordinate frame, via the Pfaffian of [[0, aᵀ], [−a, W]].
    pub fn contact_volume(&self, x: &Point) -> f64 {
        let a = self.lambda_at(x);
        let w = self.dlambda_at(x);
        contact_volume_from(&a, &w)
    }

    /// Difference `a − b` with periodic coordinates reduced to the symmetric window.
    pub fn wrap_difference(&self, a: &Point, b: &Point) -> DVector<f64> {
        let mut d = a - b;
        for (i, p) in self.periods.iter().enumerate() {
            if let Some(p) = p {
                d[i] -= p * (d[i] / p).round();
            }
        }
        d
    }
}

pub(crate) fn contact_volume_from(a: &DVector<f64>, w: &DMatrix<f64>) -> f64 {
    let d = a.len();
    let n = (d - 1) / 2;
    let mut m = DMatrix::zeros(d + 1, d + 1);
    for i in 0..d {
        m[(0, i + 1)] = a[i];
        m[(i + 1, 0)] = -a[i];
    }
    m.view_mut((1, 1), (d, d)).copy_from(w);
    let factorial: f64 = (1..=n).map(|k| k as f64).product();
    factorial * linalg::pfaffian(&m)
}

impl fmt::Debug for ContactChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContactChart")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("periods", &self.periods)
            .finish()
    }
}
