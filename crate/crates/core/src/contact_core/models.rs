//! Built-in model charts.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::chart::ContactChart;
use super::expr::{FormExpr, ScalarExpr};

/// Standard form dz − Σ p_i dq_i in coordinates (q_1..q_n, p_1..p_n, z).
pub fn darboux(n: usize) -> ContactChart {
    let d = 2 * n + 1;
    let lam = FormExpr::new(d, move |x| {
        let mut a = DVector::zeros(d);
        for i in 0..n {
            a[i] = -x[n + i];
        }
        a[2 * n] = 1.0;
        a
    })
    .with_jacobian(move |_| {
        let mut j = DMatrix::zeros(d, d);
        for i in 0..n {
            j[(i, n + i)] = -1.0;
        }
        j
    });
    ContactChart::new(format!("darboux{n}"), lam).expect("odd dimension")
}

/// c·λ for a constant c > 0.
pub fn scaled(chart: &ContactChart, c: f64) -> ContactChart {
    let lam = chart.lambda().clone();
    let lam2 = lam.clone();
    let form = FormExpr::new(chart.dim(), move |x| lam.eval(x) * c).with_jacobian(move |x| lam2.jacobian(x) * c);
    rebuild(chart, format!("{}*{c}", chart.name()), form)
}

/// f·λ with Jacobian ∂_j(f a_i) = a_i ∂_j f + f ∂_j a_i.
pub fn conformal(chart: &ContactChart, f: &ScalarExpr) -> ContactChart {
    let lam = chart.lambda().clone();
    let lam2 = lam.clone();
    let f1 = f.clone();
    let f2 = f.clone();
    let form = FormExpr::new(chart.dim(), move |x| lam.eval(x) * f1.value(x)).with_jacobian(move |x| {
        let a = lam2.eval(x);
        let grad = f2.gradient(x);
        &a * grad.transpose() + lam2.jacobian(x) * f2.value(x)
    });
    rebuild(chart, format!("f*{}", chart.name()), form)
}

fn rebuild(chart: &ContactChart, name: String, form: FormExpr) -> ContactChart {
    let base = chart.clone();
    ContactChart::new(name, form)
        .expect("same dimension")
        .with_periods(chart.periods().to_vec())
        .with_domain(move |x| base.contains(x))
}

/// dt₁ + p dt₂ in coordinates (t₁, t₂, p) with t₁, t₂ of period 1.
pub fn torus() -> ContactChart {
    torus_form("torus").with_periods(vec![Some(1.0), Some(1.0), None])
}

/// The torus model lifted to the universal cover in t₁ (t₂ kept periodic).
pub fn torus_universal_cover() -> ContactChart {
    torus_form("torus_cover").with_periods(vec![None, Some(1.0), None])
}

fn torus_form(name: &str) -> ContactChart {
    let lam = FormExpr::new(3, |x| DVector::from_vec(vec![1.0, x[2], 0.0])).with_jacobian(|_| {
        let mut j = DMatrix::zeros(3, 3);
        j[(1, 2)] = 1.0;
        j
    });
    ContactChart::new(name, lam).expect("odd dimension")
}

/// Chart (φ, u, v) around the orbit {z₂ = 0} of the ellipsoid w_a|z₁|² + w_t|z₂|² = 2,
/// λ = ½ r²(u, v) dφ + ½(u dv − v du) with r² = (2 − w_t(u² + v²))/w_a.
///
/// The Reeb field is w_a ∂φ + w_t(u ∂v − v ∂u): the core orbit has period 2π/w_a and
/// transverse rotation angle 2π·w_t/w_a.
pub fn ellipsoid(w_axis: f64, w_trans: f64) -> ContactChart {
    assert!(w_axis > 0.0 && w_trans > 0.0, "weights must be positive");
    let lam = FormExpr::new(3, move |x| {
        let (u, v) = (x[1], x[2]);
        let r2 = (2.0 - w_trans * (u * u + v * v)) / w_axis;
        DVector::from_vec(vec![0.5 * r2, -0.5 * v, 0.5 * u])
    })
    .with_jacobian(move |x| {
        let (u, v) = (x[1], x[2]);
        let mut j = DMatrix::zeros(3, 3);
        j[(0, 1)] = -w_trans * u / w_axis;
        j[(0, 2)] = -w_trans * v / w_axis;
        j[(1, 2)] = -0.5;
        j[(2, 1)] = 0.5;
        j
    });
    // r² > 0 keeps the chart away from the other coordinate axis.
    ContactChart::new(format!("ellipsoid({w_axis},{w_trans})"), lam)
        .expect("odd dimension")
        .with_periods(vec![Some(2.0 * PI), None, None])
        .with_domain(move |x| w_trans * (x[1] * x[1] + x[2] * x[2]) < 1.9)
}

/// Closed-form Reeb flow of [`ellipsoid`].
pub fn ellipsoid_flow(w_axis: f64, w_trans: f64, x: &DVector<f64>, t: f64) -> DVector<f64> {
    let (c, s) = ((w_trans * t).cos(), (w_trans * t).sin());
    DVector::from_vec(vec![x[0] + w_axis * t, c * x[1] - s * x[2], s * x[1] + c * x[2]])
}

/// Closed-form ♭ of a constant-coefficient form α = α₀dz + Σ(a_i dq_i + b_i dp_i) in the
/// Darboux chart (q, p, z): v_z = α₀ + Σ b_i p_i, v_{q_i} = b_i, v_{p_i} = −(a_i + α₀ p_i).
pub fn darboux_flat(n: usize, alpha: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    let a0 = alpha[2 * n];
    let mut v = DVector::zeros(2 * n + 1);
    v[2 * n] = a0;
    for i in 0..n {
        let (a, b, p) = (alpha[i], alpha[n + i], x[n + i]);
        v[i] = b;
        v[n + i] = -(a + a0 * p);
        v[2 * n] += b * p;
    }
    v
}

/// Look up a built-in chart by name.
pub fn by_name(name: &str, params: &[f64]) -> Option<ContactChart> {
    match name {
        "darboux" => {
            let n = params.first().copied().unwrap_or(1.0);
            (n >= 1.0 && n.fract() == 0.0).then(|| darboux(n as usize))
        }
        "torus" => Some(torus()),
        "torus_cover" => Some(torus_universal_cover()),
        "ellipsoid" => match params {
            [a, b] if *a > 0.0 && *b > 0.0 => Some(ellipsoid(*a, *b)),
            _ => None,
        },
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn darboux_volume_is_factorial() {
        for n in 1..=3 {
            let c = darboux(n);
            let x = DVector::from_fn(2 * n + 1, |i, _| 0.1 * i as f64 - 0.2);
            let f: f64 = (1..=n).map(|k| k as f64).product();
            assert!((c.contact_volume(&x).abs() - f).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn ellipsoid_analytic_jacobian_matches_fd() {
        let c = ellipsoid(1.0, 1.3);
        let x = DVector::from_vec(vec![0.4, 0.2, -0.3]);
        let fd = FormExpr::new(3, {
            let l = c.lambda().clone();
            move |p| l.eval(p)
        });
        assert!((c.lambda().jacobian(&x) - fd.jacobian(&x)).amax() < 1e-10);
    }

    #[test]
    fn unknown_chart_name() {
        assert!(by_name("sphere", &[]).is_none());
        assert!(by_name("ellipsoid", &[1.0]).is_none());
    }
}
