//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use rustfft::{num_complex::Complex64, FftPlanner};

/// Numerical rank from singular values, relative to the largest one.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// 2-norm condition number (infinite for singular input).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let smin = sv.min();
    if smin == 0.0 {
        f64::INFINITY
    } else {
        sv.max() / smin
    }
}

/// Orthonormal basis of the null space of `m`, via SVD.
pub fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // Pad to square so the full right-singular basis is available.
    let rows = m.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.max();
    let cut = if smax == 0.0 { 0.0 } else { rel_tol * smax };
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| smax == 0.0 || svd.singular_values[i] <= cut)
        .map(|i| vt.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Minimum-norm least-squares solve through a truncated SVD.
pub fn pinv_solve(m: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> DVector<f64> {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (rel_tol * smax).max(f64::MIN_POSITIVE);
    svd.solve(b, eps).unwrap_or_else(|_| DVector::zeros(m.ncols()))
}

/// Modified Gram-Schmidt in the given order; vectors whose remainder is below
/// `tol` (relative to their original norm) are skipped.
pub fn gram_schmidt(vectors: &[DVector<f64>], tol: f64) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for v in vectors {
        let scale = v.norm();
        if scale == 0.0 {
            continue;
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for u in &out {
                let c = u.dot(&w);
                w -= u * c;
            }
        }
        let n = w.norm();
        if n > tol * scale {
            out.push(w / n);
        }
    }
    out
}

/// Pfaffian of an antisymmetric matrix (Parlett-Reid style elimination with pivoting).
pub fn pfaffian(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "pfaffian needs a square matrix");
    if n % 2 == 1 {
        return 0.0;
    }
    let mut a = a.clone();
    let mut pf = 1.0;
    let mut k = 0;
    while k + 1 < n {
        let mut kp = k + 1;
        let mut best = a[(k + 1, k)].abs();
        for i in k + 2..n {
            if a[(i, k)].abs() > best {
                best = a[(i, k)].abs();
                kp = i;
            }
        }
        if kp != k + 1 {
            a.swap_rows(k + 1, kp);
            a.swap_columns(k + 1, kp);
            pf = -pf;
        }
        let piv = a[(k, k + 1)];
        if piv == 0.0 {
            return 0.0;
        }
        pf *= piv;
        if k + 2 < n {
            let tau: Vec<f64> = (k + 2..n).map(|j| a[(k, j)] / piv).collect();
            let col: Vec<f64> = (k + 2..n).map(|i| a[(i, k + 1)]).collect();
            for (ii, i) in (k + 2..n).enumerate() {
                for (jj, j) in (k + 2..n).enumerate() {
                    a[(i, j)] += tau[ii] * col[jj] - col[ii] * tau[jj];
                }
            }
        }
        k += 2;
    }
    pf
}

/// Largest entry of |a - b|.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Spectral derivative of uniformly sampled periodic data on a loop of length `period`.
/// `samples[j]` is the value at t_j = j·period/N.
pub fn periodic_derivative(samples: &[DVector<f64>], period: f64) -> Vec<DVector<f64>> {
    let n = samples.len();
    if n == 0 {
        return Vec::new();
    }
    let dim = samples[0].len();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut out = vec![DVector::zeros(dim); n];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for c in 0..dim {
        for (j, s) in samples.iter().enumerate() {
            buf[j] = Complex64::new(s[c], 0.0);
        }
        fwd.process(&mut buf);
        for (k, b) in buf.iter_mut().enumerate() {
            let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            if n.is_multiple_of(2) && k == n / 2 {
                *b = Complex64::new(0.0, 0.0);
                continue;
            }
            let w = 2.0 * std::f64::consts::PI * kk / period;
            *b *= Complex64::new(0.0, w);
        }
        inv.process(&mut buf);
        for (j, b) in buf.iter().enumerate() {
            out[j][c] = b.re / n as f64;
        }
    }
    out
}

/// Velocity of a sampled closed loop in a chart with periodic coordinates.
///
/// `diff(a, b)` is the chart difference a − b reduced by the periods. The loop is
/// unwrapped, its net drift removed, differentiated spectrally, and the drift added back.
pub fn loop_velocity<F>(samples: &[DVector<f64>], period: f64, diff: F) -> Vec<DVector<f64>>
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    let n = samples.len();
    if n == 0 {
        return Vec::new();
    }
    let mut unwrapped = vec![samples[0].clone()];
    for j in 1..n {
        let next = &unwrapped[j - 1] + diff(&samples[j], &samples[j - 1]);
        unwrapped.push(next);
    }
    let drift = &unwrapped[n - 1] + diff(&samples[0], &samples[n - 1]) - &unwrapped[0];
    let periodic: Vec<DVector<f64>> = unwrapped.iter().enumerate().map(|(j, u)| u - &drift * (j as f64 / n as f64)).collect();
    let rate = &drift / period;
    periodic_derivative(&periodic, period).into_iter().map(|d| d + &rate).collect()
}

/// Composite trapezoid on uniform periodic samples (sum times spacing).
pub fn periodic_mean(samples: &[DVector<f64>]) -> DVector<f64> {
    let n = samples.len();
    let mut acc = DVector::zeros(samples[0].len());
    for s in samples {
        acc += s;
    }
    acc / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfaffian_of_standard_blocks() {
        let mut a = DMatrix::zeros(4, 4);
        a[(0, 1)] = 2.0;
        a[(1, 0)] = -2.0;
        a[(2, 3)] = 3.0;
        a[(3, 2)] = -3.0;
        assert!((pfaffian(&a) - 6.0).abs() < 1e-14);
    }

    #[test]
    fn pfaffian_squared_is_determinant() {
        let b = DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * i as f64);
        let a = &b - b.transpose();
        let pf = pfaffian(&a);
        assert!((pf * pf - a.determinant()).abs() < 1e-9 * a.determinant().abs().max(1.0));
    }

    #[test]
    fn pfaffian_matches_explicit_four_by_four() {
        let (a01, a02, a03, a12, a13, a23) = (0.3, -1.2, 0.7, 2.0, 0.4, -0.9);
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.0, a01, a02, a03, -a01, 0.0, a12, a13, -a02, -a12, 0.0, a23, -a03, -a13, -a23, 0.0,
            ],
        );
        let expect = a01 * a23 - a02 * a13 + a03 * a12;
        assert!((pfaffian(&a) - expect).abs() < 1e-14);
    }

    #[test]
    fn null_space_of_rank_one() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let ns = null_space(&m, 1e-12);
        assert_eq!(ns.ncols(), 2);
        assert!((&m * &ns).amax() < 1e-14);
    }

    #[test]
    fn spectral_derivative_of_sine() {
        let n = 32;
        let samples: Vec<DVector<f64>> = (0..n)
            .map(|j| {
                let t = j as f64 / n as f64 * 2.0;
                DVector::from_vec(vec![(std::f64::consts::PI * t).sin()])
            })
            .collect();
        let d = periodic_derivative(&samples, 2.0);
        for (j, v) in d.iter().enumerate() {
            let t = j as f64 / n as f64 * 2.0;
            assert!((v[0] - std::f64::consts::PI * (std::f64::consts::PI * t).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn gram_schmidt_skips_dependent() {
        let v = vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![2.0, 0.0]),
            DVector::from_vec(vec![1.0, 1.0]),
        ];
        let q = gram_schmidt(&v, 1e-10);
        assert_eq!(q.len(), 2);
        assert!(q[0].dot(&q[1]).abs() < 1e-15);
    }
}
