use nalgebra::{DMatrix, DVector};

use super::setup::compatible_block;
use super::{NormalFormError, ThickeningChart};
use crate::contact_core::{self, Point};
use crate::linalg;

/// Model frame at a zero-section point: columns [X̃, G̃ (2g), H̃ (m), ∂μ (m), ∂e (2k)].
pub fn model_frame(tc: &ThickeningChart, y: &Point) -> DMatrix<f64> {
    let s = &tc.setup;
    let d = tc.dim();
    let q = s.q_dim();
    let mut cols = vec![tc.lift(&s.x_theta.eval(y))];
    cols.extend(s.g_basis.iter().map(|g| tc.lift(&g.eval(y))));
    cols.extend(s.h_basis.iter().map(|h| tc.lift(&h.eval(y))));
    for i in q..d {
        cols.push(DVector::from_fn(d, |k, _| if k == i { 1.0 } else { 0.0 }));
    }
    DMatrix::from_columns(&cols)
}

fn zero_point(tc: &ThickeningChart, y: &Point) -> Point {
    tc.point(y, &DVector::zeros(tc.setup.m), &DVector::zeros(tc.omega.nrows()))
}

/// Block-form CR structure on ξ_F along the zero section.
#[derive(Debug, Clone)]
pub struct AdaptedJ {
    pub j_g: DMatrix<f64>,
    pub j_e: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// J in chart coordinates at the base point.
    pub matrix: DMatrix<f64>,
    pub base: Point,
}

/// Assemble J = J_G ⊕ [[0, 1], [−1, 0]] ⊕ J_E (+ coupling B: G → E) in the model frame.
pub fn make_adapted_j(
    tc: &ThickeningChart,
    y: &Point,
    j_g: &DMatrix<f64>,
    j_e: &DMatrix<f64>,
    b: &DMatrix<f64>,
) -> Result<AdaptedJ, NormalFormError> {
    let (g2, m, k2) = (2 * tc.setup.g, tc.setup.m, tc.omega.nrows());
    compatible_block(j_g, &tc.setup.omega_g(y), 1e-10).map_err(|e| NormalFormError::BadBlocks(format!("J_G: {e}")))?;
    compatible_block(j_e, &tc.omega, 1e-10).map_err(|e| NormalFormError::BadBlocks(format!("J_E: {e}")))?;
    if b.shape() != (k2, g2) {
        return Err(NormalFormError::BadBlocks(format!("B must be {k2}×{g2}")));
    }
    if g2 > 0 && k2 > 0 {
        let bj = (b * j_g).amax();
        if bj > 1e-12 {
            return Err(NormalFormError::BadBlocks(format!("B·J_G = {bj:.3e} ≠ 0")));
        }
    }
    let d = tc.dim();
    let mut jb = DMatrix::zeros(d, d);
    let (og, oh, om, oe) = (1, 1 + g2, 1 + g2 + m, 1 + g2 + 2 * m);
    jb.view_mut((og, og), (g2, g2)).copy_from(j_g);
    jb.view_mut((oe, og), (k2, g2)).copy_from(b);
    for a in 0..m {
        jb[(om + a, oh + a)] = -1.0;
        jb[(oh + a, om + a)] = 1.0;
    }
    jb.view_mut((oe, oe), (k2, k2)).copy_from(j_e);
    let p = model_frame(tc, y);
    let pinv = p.clone().try_inverse().ok_or_else(|| NormalFormError::BadSetup("model frame is singular".into()))?;
    let matrix = &p * jb * pinv;
    let base = zero_point(tc, y);
    let aj = AdaptedJ { j_g: j_g.clone(), j_e: j_e.clone(), b: b.clone(), matrix, base };
    let rep = check_adapted(tc, &aj.matrix, y)?;
    if !(rep.containment && rep.splitting) {
        return Err(NormalFormError::BadBlocks("assembled J fails the adaptedness test".into()));
    }
    Ok(aj)
}

/// Standard complex structure [[0, −1], [1, 0]] per 2×2 block.
pub fn standard_j(k: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * k, 2 * k);
    for i in 0..k {
        j[(2 * i + 1, 2 * i)] = 1.0;
        j[(2 * i, 2 * i + 1)] = -1.0;
    }
    j
}

#[derive(Debug, Clone)]
pub struct AdaptedReport {
    /// J(TQ) ⊂ TQ + J·T𝒩 by rank count.
    pub containment: bool,
    /// TQ = (TQ ∩ J TQ) ⊕ T𝓕.
    pub splitting: bool,
    pub agree: bool,
    pub containment_rank: usize,
    pub expected_rank: usize,
    pub intersection_dim: usize,
    pub j_squared_error: f64,
}

/// Both adaptedness criteria at the zero-section point over y.
pub fn check_adapted(tc: &ThickeningChart, j: &DMatrix<f64>, y: &Point) -> Result<AdaptedReport, NormalFormError> {
    let s = &tc.setup;
    let x = zero_point(tc, y);
    let d = tc.dim();
    let xf = contact_core::reeb_field(&tc.chart, &x)?;
    let pi = DMatrix::identity(d, d) - &xf * tc.chart.lambda_at(&x).transpose();
    let j_squared_error = (j * j + &pi).amax();
    if j_squared_error > 1e-8 {
        return Err(NormalFormError::NotComplexStructure(j_squared_error));
    }
    let mut tq_cols = vec![tc.lift(&s.x_theta.eval(y))];
    tq_cols.extend(s.h_basis.iter().map(|h| tc.lift(&h.eval(y))));
    tq_cols.extend(s.g_basis.iter().map(|g| tc.lift(&g.eval(y))));
    let tq = DMatrix::from_columns(&tq_cols);
    let qd = tq.ncols();
    let jtq = j * &tq;
    let jtn = jtq.columns(1, s.m).into_owned();

    let stacked = hcat(&[&tq, &jtn, &jtq]);
    let containment_rank = linalg::rank(&stacked, 1e-8);
    let expected_rank = qd + s.m;
    let containment = containment_rank == expected_rank;

    let pair = hcat(&[&tq, &(-&jtq)]);
    let ns = linalg::null_space(&pair, 1e-9);
    let inter = &tq * ns.rows(0, qd);
    let intersection_dim = linalg::rank(&inter, 1e-8).min(qd);
    let tf = tq.columns(0, 1 + s.m).into_owned();
    let splitting = intersection_dim == qd - 1 - s.m && linalg::rank(&hcat(&[&inter, &tf]), 1e-8) == qd;

    Ok(AdaptedReport {
        containment,
        splitting,
        agree: containment == splitting,
        containment_rank,
        expected_rank,
        intersection_dim,
        j_squared_error,
    })
}

fn hcat(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts[0].nrows();
    let cols: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for p in parts {
        out.view_mut((0, c), (rows, p.ncols())).copy_from(p);
        c += p.ncols();
    }
    out
}

/// A J' = A J A⁻¹ where A = Cayley(ω⁻¹S) is a dλ-symplectic map of ξ (in the model frame).
/// `sym` is a symmetric matrix on the ξ-part of the frame (size dim − 1).
pub fn symplectic_conjugate(tc: &ThickeningChart, y: &Point, j: &DMatrix<f64>, sym: &DMatrix<f64>) -> DMatrix<f64> {
    let p = model_frame(tc, y);
    let x = zero_point(tc, y);
    let d = tc.dim();
    let pxi = p.columns(1, d - 1).into_owned();
    let omega = pxi.transpose() * tc.chart.dlambda_at(&x) * &pxi;
    let k = omega.clone().try_inverse().expect("dλ is non-degenerate on ξ") * sym;
    let id = DMatrix::identity(d - 1, d - 1);
    let a_xi = (&id - &k * 0.5).try_inverse().expect("Cayley transform") * (&id + &k * 0.5);
    let mut a = DMatrix::identity(d, d);
    a.view_mut((1, 1), (d - 1, d - 1)).copy_from(&a_xi);
    let pinv = p.clone().try_inverse().expect("model frame");
    let a_coord = &p * a * &pinv;
    let a_inv = a_coord.clone().try_inverse().expect("symplectic map");
    a_coord * j * a_inv
}

#[cfg(test)]
mod tests {
    use super::super::{build_thickening, standard_omega, MorseBottSetup, ThickeningOptions};
    use super::*;

    fn sheared_with_e() -> ThickeningChart {
        build_thickening(&MorseBottSetup::sheared(0.5), &standard_omega(1), &ThickeningOptions::default()).unwrap()
    }

    #[test]
    fn block_form_is_adapted() {
        let tc = sheared_with_e();
        let y = DVector::from_vec(vec![0.0, 0.1, 0.2, -0.3]);
        let aj = make_adapted_j(&tc, &y, &standard_j(1), &standard_j(1), &DMatrix::zeros(2, 2)).unwrap();
        contact_core::check_compatible(&tc.chart, &aj.matrix, &aj.base, 1e-10).unwrap();
        let rep = check_adapted(&tc, &aj.matrix, &y).unwrap();
        assert!(rep.containment && rep.splitting && rep.agree);
    }

    #[test]
    fn nonzero_coupling_rejected() {
        let tc = sheared_with_e();
        let y = DVector::zeros(4);
        let b = DMatrix::from_element(2, 2, 0.1);
        assert!(matches!(
            make_adapted_j(&tc, &y, &standard_j(1), &standard_j(1), &b),
            Err(NormalFormError::BadBlocks(_))
        ));
    }

    #[test]
    fn anticompatible_block_rejected() {
        let tc = sheared_with_e();
        let y = DVector::zeros(4);
        let r = make_adapted_j(&tc, &y, &standard_j(1), &(-standard_j(1)), &DMatrix::zeros(2, 2));
        assert!(matches!(r, Err(NormalFormError::BadBlocks(msg)) if msg.starts_with("J_E")));
    }

    #[test]
    fn mixing_normal_and_e_keeps_adaptedness() {
        // J·T𝒩 is on the right of J(TQ) ⊂ TQ + J·T𝒩, so rotating T𝒩 into E is harmless.
        let tc = sheared_with_e();
        let y = DVector::zeros(4);
        let aj = make_adapted_j(&tc, &y, &standard_j(1), &standard_j(1), &DMatrix::zeros(2, 2)).unwrap();
        // ξ-frame order: G (2), H (1), ∂μ (1), ∂e (2).
        let mut s = DMatrix::zeros(6, 6);
        s[(2, 4)] = 0.7;
        s[(4, 2)] = 0.7;
        let jr = symplectic_conjugate(&tc, &y, &aj.matrix, &s);
        let rep = check_adapted(&tc, &jr, &y).unwrap();
        assert!(rep.containment && rep.splitting);
    }

    #[test]
    fn mixing_g_and_e_breaks_adaptedness() {
        let tc = sheared_with_e();
        let y = DVector::zeros(4);
        let aj = make_adapted_j(&tc, &y, &standard_j(1), &standard_j(1), &DMatrix::zeros(2, 2)).unwrap();
        let mut s = DMatrix::zeros(6, 6);
        s[(0, 4)] = 0.7;
        s[(4, 0)] = 0.7;
        let jr = symplectic_conjugate(&tc, &y, &aj.matrix, &s);
        contact_core::check_compatible(&tc.chart, &jr, &aj.base, 1e-8).unwrap();
        let rep = check_adapted(&tc, &jr, &y).unwrap();
        assert!(!rep.containment && !rep.splitting);
        assert!(rep.containment_rank > rep.expected_rank);
    }

    #[test]
    fn nondegenerate_type_always_adapted() {
        let tc = build_thickening(&MorseBottSetup::circle(), &standard_omega(2), &ThickeningOptions::default()).unwrap();
        let y = DVector::from_vec(vec![0.3]);
        let x = tc.point(&y, &DVector::zeros(0), &DVector::zeros(4));
        let j = contact_core::compatible_j(&tc.chart, &x).unwrap();
        let mut s = DMatrix::from_fn(4, 4, |i, k| ((i + 2 * k) % 3) as f64 * 0.2);
        s = &s + s.transpose();
        let jr = symplectic_conjugate(&tc, &y, &j, &s);
        for jj in [j, jr] {
            let rep = check_adapted(&tc, &jj, &y).unwrap();
            assert!(rep.containment && rep.splitting);
        }
    }

    #[test]
    fn non_complex_structure_rejected() {
        let tc = sheared_with_e();
        let y = DVector::zeros(4);
        let j = DMatrix::identity(7, 7);
        assert!(matches!(check_adapted(&tc, &j, &y), Err(NormalFormError::NotComplexStructure(_))));
    }
}
