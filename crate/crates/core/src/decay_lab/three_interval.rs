use rand::Rng;
use serde::Serialize;

use super::DecayError;

/// Relative slack for the hypothesis and bound comparisons.
pub const HYPOTHESIS_SLACK: f64 = 1e-12;

/// ξ = (1 + √(1 − 4γ²)) / (2γ).
pub fn growth_factor(gamma: f64) -> Result<f64, DecayError> {
    if !(gamma > 0.0 && gamma < 0.5) {
        return Err(DecayError::OutOfRange(format!("gamma must lie in (0, 1/2), got {gamma}")));
    }
    let disc = (1.0 - 2.0 * gamma) * (1.0 + 2.0 * gamma);
    Ok((1.0 + disc.sqrt()) / (2.0 * gamma))
}

/// γ(c) = 1 / (e^c + e^{−c}), so that ξ(γ(c)) = e^c.
pub fn gamma_of_c(c: f64) -> Result<f64, DecayError> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(DecayError::OutOfRange(format!("c must be positive, got {c}")));
    }
    Ok(1.0 / (c.exp() + (-c).exp()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalSeq {
    pub x: Vec<f64>,
    pub gamma: f64,
}

impl IntervalSeq {
    pub fn new(x: Vec<f64>, gamma: f64) -> Result<Self, DecayError> {
        if !(gamma > 0.0 && gamma < 0.5) {
            return Err(DecayError::OutOfRange(format!("gamma must lie in (0, 1/2), got {gamma}")));
        }
        if x.len() < 2 {
            return Err(DecayError::OutOfRange("need at least x_0 and x_N".into()));
        }
        if let Some((k, v)) = x.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(DecayError::OutOfRange(format!("x_{k} = {v} is not a nonnegative number")));
        }
        Ok(IntervalSeq { x, gamma })
    }

    pub fn n(&self) -> usize {
        self.x.len() - 1
    }

    /// Interior indices with x_k > γ(x_{k−1} + x_{k+1}).
    pub fn violations(&self) -> Vec<usize> {
        (1..self.n())
            .filter(|&k| {
                let rhs = self.gamma * (self.x[k - 1] + self.x[k + 1]);
                self.x[k] > rhs * (1.0 + HYPOTHESIS_SLACK)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ThreeIntervalReport {
    pub xi: f64,
    pub hypothesis_holds: bool,
    /// Interior indices violating the hypothesis.
    pub violations: Vec<usize>,
    /// x_0 ξ^{−k} + x_N ξ^{−(N−k)}; empty when the hypothesis fails.
    pub bounds: Vec<f64>,
    /// Indices where x_k exceeds its bound (empty when the lemma holds).
    pub bound_failures: Vec<usize>,
    pub bound_holds: bool,
}

pub fn three_interval_bound(seq: &IntervalSeq) -> ThreeIntervalReport {
    let xi = growth_factor(seq.gamma).expect("IntervalSeq holds a valid gamma");
    let violations = seq.violations();
    if !violations.is_empty() {
        return ThreeIntervalReport { xi, hypothesis_holds: false, violations, bounds: vec![], bound_failures: vec![], bound_holds: false };
    }
    let n = seq.n();
    let (x0, xn) = (seq.x[0], seq.x[n]);
    let slack = HYPOTHESIS_SLACK * x0.max(xn);
    let bounds: Vec<f64> = (0..=n).map(|k| x0 * xi.powi(-(k as i32)) + xn * xi.powi(-((n - k) as i32))).collect();
    let bound_failures: Vec<usize> = (0..=n).filter(|&k| seq.x[k] > bounds[k] * (1.0 + HYPOTHESIS_SLACK) + slack).collect();
    ThreeIntervalReport { xi, hypothesis_holds: true, violations, bound_holds: bound_failures.is_empty(), bounds, bound_failures }
}

/// Random sequence satisfying x_k ≤ γ(x_{k−1} + x_{k+1}) on 0..=n.
///
/// Writing the hypothesis as Lx ≤ 0 with L = tridiag(−γ, 1, −γ) on the interior, draws
/// x = h − s·g where h = Aξ^{−k} + Bξ^{k−n} solves Lh = 0, g = L⁻¹f for a random sparse
/// f ≥ 0 (so g ≥ 0, L being an M-matrix) and s ≤ min h/g keeps x ≥ 0. Half the draws also
/// add a geometric term r^k with r ≤ 1/ξ or r ≥ ξ, which lies in the cone.
pub fn random_hypothesis_sequence<R: Rng + ?Sized>(rng: &mut R, n: usize, gamma: f64) -> Result<IntervalSeq, DecayError> {
    let xi = growth_factor(gamma)?;
    let n = n.max(2);
    loop {
        let (a, b): (f64, f64) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let h: Vec<f64> = (0..=n).map(|k| a * xi.powi(-(k as i32)) + b * xi.powi(k as i32 - n as i32)).collect();
        let f: Vec<f64> = (1..n).map(|_| if rng.random_bool(0.3) { rng.random_range(0.0..1.0) } else { 0.0 }).collect();
        let g = solve_interior(gamma, &f);
        let cap = (1..n).filter(|&k| g[k - 1] > 0.0).map(|k| h[k] / g[k - 1]).fold(f64::INFINITY, f64::min);
        let s = if cap.is_finite() { cap * rng.random_range(0.0..=1.0) } else { 0.0 };
        let mut x = h;
        for k in 1..n {
            x[k] = (x[k] - s * g[k - 1]).max(0.0);
        }
        if rng.random_bool(0.5) {
            let w: f64 = rng.random_range(0.0..1.0);
            let r = if rng.random_bool(0.5) { rng.random_range(0.05..=1.0) / xi } else { xi * rng.random_range(1.0..1.3) };
            let peak = if r <= 1.0 { 1.0 } else { r.powi(n as i32) };
            for (k, xk) in x.iter_mut().enumerate() {
                *xk += w * r.powi(k as i32) / peak;
            }
        }
        let seq = IntervalSeq::new(x, gamma)?;
        if seq.violations().is_empty() {
            return Ok(seq);
        }
    }
}

/// Solve tridiag(−γ, 1, −γ) g = f with zero boundary values (Thomas algorithm).
fn solve_interior(gamma: f64, f: &[f64]) -> Vec<f64> {
    let m = f.len();
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    for i in 0..m {
        let denom = 1.0 - if i > 0 { -gamma * c[i - 1] } else { 0.0 };
        c[i] = -gamma / denom;
        d[i] = (f[i] + if i > 0 { gamma * d[i - 1] } else { 0.0 }) / denom;
    }
    let mut g = vec![0.0; m];
    for i in (0..m).rev() {
        g[i] = d[i] - if i + 1 < m { c[i] * g[i + 1] } else { 0.0 };
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn growth_factor_values() {
        assert!((growth_factor(0.4).unwrap() - 2.0).abs() < 1e-15);
        assert!((growth_factor(0.5 - 1e-12).unwrap() - 1.0).abs() < 1e-5);
        let c = 1.0;
        let g = gamma_of_c(c).unwrap();
        assert!((g - 1.0 / (c.exp() + (-c).exp())).abs() < 1e-16);
        assert!((growth_factor(g).unwrap() - c.exp()).abs() < 1e-12);
        assert!(matches!(growth_factor(0.5), Err(DecayError::OutOfRange(_))));
        assert!(matches!(growth_factor(0.0), Err(DecayError::OutOfRange(_))));
        assert!(matches!(gamma_of_c(0.0), Err(DecayError::OutOfRange(_))));
    }

    #[test]
    fn exponential_sequence_saturates_hypothesis() {
        let c = 0.8;
        let g = gamma_of_c(c).unwrap();
        let x: Vec<f64> = (0..30).map(|k| (-c * k as f64).exp()).collect();
        let rep = three_interval_bound(&IntervalSeq::new(x, g).unwrap());
        assert!(rep.hypothesis_holds && rep.bound_holds);
    }

    #[test]
    fn long_sequences_decay_like_x0_exp() {
        // A bounded solution on a long window: the x_N term is negligible in the interior.
        let c = 0.5;
        let g = gamma_of_c(c).unwrap();
        let n = 200;
        let x: Vec<f64> = (0..=n).map(|k| 2.0 * (-c * k as f64).exp() + 1e-3 * (-c * (n - k) as f64).exp()).collect();
        let rep = three_interval_bound(&IntervalSeq::new(x, g).unwrap());
        assert!(rep.bound_holds);
    }

    #[test]
    fn flat_sequence_violates() {
        let rep = three_interval_bound(&IntervalSeq::new(vec![1.0, 1.0, 1.0], 0.4).unwrap());
        assert!(!rep.hypothesis_holds);
        assert_eq!(rep.violations, vec![1]);
    }

    #[test]
    fn negative_entries_rejected() {
        assert!(IntervalSeq::new(vec![1.0, -0.1, 1.0], 0.3).is_err());
        assert!(IntervalSeq::new(vec![1.0, 0.1, 1.0], 0.6).is_err());
    }

    #[test]
    fn random_sequences_satisfy_hypothesis_and_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..500 {
            let g = rng.random_range(0.05..0.49);
            let seq = random_hypothesis_sequence(&mut rng, 2 + i % 49, g).unwrap();
            let rep = three_interval_bound(&seq);
            assert!(rep.hypothesis_holds && rep.bound_holds, "{:?}", rep.bound_failures);
        }
    }
}
