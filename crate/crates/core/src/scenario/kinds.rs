use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{sample_rng, ReportBuilder, Scenario, ScenarioError};
use crate::contact_core::{self, models, ContactChart, PerturbationData, ScalarExpr};
use crate::decay_lab::{self, CenterOfMassOptions, CylinderGrid, FlatTorus, Forcing, IntervalSeq, ReebLocusModel};
use crate::normal_form::{self, MorseBottSetup, ThickeningOptions};
use crate::reeb_dynamics::{self, OrbitClass, OrbitOptions};
use crate::spectral::{self, SpectralOperator, ZerothOrder};

fn num<E: std::fmt::Display>(e: E) -> ScenarioError {
    ScenarioError::Numerical(e.to_string())
}

fn config(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Config(msg.into())
}

fn parse<P: DeserializeOwned + Default>(v: &Value) -> Result<P, ScenarioError> {
    if v.is_null() {
        return Ok(P::default());
    }
    serde_json::from_value(v.clone()).map_err(|e| config(format!("params: {e}")))
}

pub(super) fn dispatch(s: &Scenario, b: &mut ReportBuilder) -> Result<Value, ScenarioError> {
    macro_rules! run {
        ($p:ty, $f:ident) => {{
            let p: $p = parse(&s.params)?;
            $f(&p, s.seed, b)?;
            Ok(serde_json::to_value(&p).expect("params serialize"))
        }};
    }
    match s.kind.as_str() {
        "dual_checks" => run!(DualParams, dual_checks),
        "perturbed_reeb" => run!(PerturbedParams, perturbed_reeb),
        "orbit" => run!(OrbitParams, orbit),
        "return_map" => run!(ReturnMapParams, return_map),
        "thickening" => run!(ThickeningParams, thickening),
        "spectrum" => run!(SpectrumParams, spectrum),
        "cylinder_decay" => run!(CylinderParams, cylinder_decay),
        "three_interval" => run!(ThreeIntervalParams, three_interval),
        "center_of_mass" => run!(CenterParams, center_of_mass),
        "action_charge" => run!(ActionParams, action_charge),
        other => Err(config(format!("unknown scenario kind '{other}'"))),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub name: String,
    #[serde(default)]
    pub params: Vec<f64>,
}

impl ChartSpec {
    fn build(&self) -> Result<ContactChart, ScenarioError> {
        models::by_name(&self.name, &self.params).ok_or_else(|| config(format!("unknown chart '{}' with params {:?}", self.name, self.params)))
    }
}

fn point(v: &[f64], chart: &ContactChart) -> Result<DVector<f64>, ScenarioError> {
    if v.len() != chart.dim() {
        return Err(config(format!("point has {} coordinates, chart has {}", v.len(), chart.dim())));
    }
    Ok(DVector::from_column_slice(v))
}

fn max_with_index(values: impl Iterator<Item = f64>) -> (f64, Option<usize>) {
    let mut best = (f64::NEG_INFINITY, None);
    for (i, v) in values.enumerate() {
        if v > best.0 || v.is_nan() {
            best = (v, Some(i));
            if v.is_nan() {
                break;
            }
        }
    }
    if best.1.is_none() {
        best.0 = 0.0;
    }
    best
}

// ---------------------------------------------------------------- dual_checks

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DualParams {
    pub samples: usize,
    pub dims: Vec<usize>,
    pub tol: f64,
    pub formula_tol: f64,
}

impl Default for DualParams {
    fn default() -> Self {
        DualParams { samples: 1000, dims: vec![1, 2, 3], tol: 1e-9, formula_tol: 1e-12 }
    }
}

fn dual_checks(p: &DualParams, seed: u64, b: &mut ReportBuilder) -> Result<(), ScenarioError> {
    if p.dims.is_empty() || p.dims.contains(&0) {
        return Err(config("dims must be a nonempty list of positive n"));
    }
    let charts: Vec<ContactChart> = p.dims.iter().map(|&n| models::darboux(n)).collect();
    let rows: Vec<Result<Vec<f64>, ScenarioError>> = (0..p.samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = sample_rng(seed, s as u64);
            let idx = s % p.dims.len();
            let (n, chart) = (p.dims[idx], &charts[idx]);
            let d = 2 * n + 1;
            let x = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
            let alpha = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let w = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let flat = contact_core::flat_dual_covector(chart, &alpha, &x).map_err(num)?;
            let e1 = (contact_core::sharp_dual(chart, &flat, &x) - &alpha).amax();
            let back = contact_core::flat_dual_covector(chart, &contact_core::sharp_dual(chart, &w, &x), &x).map_err(num)?;
            let e2 = (back - &w).amax();
            let e3 = (flat - models::darboux_flat(n, &alpha, &x)).amax();
            Ok(vec![s as f64, n as f64, e1, e2, e3])
        })
        .collect();
    let rows: Vec<Vec<f64>> = rows.into_iter().collect::<Result<_, _>>()?;
    let (m1, i1) = max_with_index(rows.iter().map(|r| r[2]));
    let (m2, i2) = max_with_index(rows.iter().map(|r| r[3]));
    let (m3, i3) = max_with_index(rows.iter().map(|r| r[4]));
    b.scalar("max_sharp_flat_error", m1);
    b.scalar("max_flat_sharp_error", m2);
    b.scalar("max_formula_error", m3);
    b.below("sharp_after_flat", m1, p.tol, i1);
    b.below("flat_after_sharp", m2, p.tol, i2);
    b.below("darboux_formula", m3, p.formula_tol, i3);
    b.table("samples", &["sample", "n", "sharp_flat_error", "flat_sharp_error", "formula_error"], rows);
    Ok(())
}

// ------------------------------------------------------------- perturbed_reeb

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbedParams {
    pub cases: usize,
    pub dims: Vec<usize>,
    /// Scale of the random quadratic exponent g with f = e^g.
    pub amplitude: f64,
    pub tol: f64,
}

impl Default for PerturbedParams {
    fn default() -> Self {
        PerturbedParams { cases: 200, dims: vec![1, 2, 3], amplitude: 0.5, tol: 1e-8 }
    }
}

/// f = exp(cᵀx + ½xᵀDx) with its exact gradient.
fn random_factor<R: Rng>(rng: &mut R, d: usize, amp: f64) -> ScalarExpr {
    let c = DVector::from_fn(d, |_, _| amp * rng.random_range(-1.0..1.0));
    let m = DMatrix::from_fn(d, d, |_, _| amp * rng.random_range(-1.0..1.0));
    let dm = (&m + m.transpose()) * 0.5;
    let (c2, d2) = (c.clone(), dm.clone());
    ScalarExpr::new(move |x: &DVector<f64>| (c.dot(x) + 0.5 * x.dot(&(&dm * x))).exp())
        .with_gradient(move |x: &DVector<f64>| (&c2 + &d2 * x) * (c2.dot(x) + 0.5 * x.dot(&(&d2 * x))).exp())
}

fn perturbed_reeb(p: &PerturbedParams, seed: u64, b: &mut ReportBuilder) -> Result<(), ScenarioError> {
    if p.dims.is_empty() || p.dims.contains(&0) {
        return Err(config("dims must be a nonempty list of positive n"));
    }
    let rows: Vec<Result<Vec<f64>, ScenarioError>> = (0..p.cases)
        .into_par_iter()
        .map(|s| {
            let mut rng = sample_rng(seed, s as u64);
            let n = p.dims[s % p.dims.len()];
            let chart = models::darboux(n);
            let d = 2 * n + 1;
            let f = random_factor(&mut rng, d, p.amplitude);
            let x = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            let pert = PerturbationData::new(f.clone());
            let formula = contact_core::perturbed_reeb(&chart, &pert, &x).map_err(num)?;
            let direct = contact_core::reeb_field(&models::conformal(&chart, &f), &x).map_err(num)?;
            Ok(vec![s as f64, n as f64, (formula - direct).amax()])
        })
        .collect();
    let rows: Vec<Vec<f64>> = rows.into_iter().collect::<Result<_, _>>()?;
    let (m, i) = max_with_index(rows.iter().map(|r| r[2]));
    b.scalar("max_gap", m);
    b.below("formula_matches_direct_solve", m, p.tol, i);
    b.table("cases", &["case", "n", "gap"], rows);
    Ok(())
}

// ---------------------------------------------------------------------- orbit

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrbitParams {
    pub chart: ChartSpec,
    pub guess: Vec<f64>,
    pub period_guess: f64,
    pub n_samples: usize,
    pub tol: f64,
    pub expected_period: Option<f64>,
    pub period_tol: f64,
}

impl Default for OrbitParams {
    fn default() -> Self {
        OrbitParams {
            chart: ChartSpec { name: "torus".into(), params: vec![] },
            guess: vec![0.0, 0.0, 0.3],
            period_guess: 1.0,
            n_samples: 64,
            tol: 1e-8,
            expected_period: None,
            period_tol: 1e-8,
        }
    }
}

fn orbit(p: &OrbitParams, _seed: u64, b: &mut ReportBuilder) -> Result<(), ScenarioError> {
    let chart = p.chart.build()?;
    let guess = point(&p.guess, &chart)?;
    let opts = OrbitOptions { n_samples: p.n_samples.max(4), tol: p.tol, ..OrbitOptions::default() };
    let orb = reeb_dynamics::find_closed_orbit(&chart, &guess, p.period_guess, &opts).map_err(num)?;
    b.scalar("period", orb.period);
    b.scalar("closure_residual", orb.closure_residual);
    b.scalar("iterations", orb.iterations as f64);
    b.scalar("action", reeb_dynamics::action(&chart, &orb));
    b.below("closure", orb.closure_residual, p.tol, None);
    if let Some(t) = p.expected_period {
        b.below("period", (orb.period - t).abs(), p.period_tol, None);
    }
    let rows = orb
        .samples
        .iter()
        .enumerate()
        .map(|(j, z)| std::iter::once(j as f64 / orb.samples.len() as f64).chain(z.iter().copied()).collect())
        .collect();
    let cols: Vec<String> = std::iter::once("t".to_string()).chain((0..chart.dim()).map(|i| format!("x{i}"))).collect();
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    b.table("samples", &cols, rows);
    Ok(())
}

// ----------------------------------------------------------------- return_map

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReturnMapParams {
    pub chart: ChartSpec,
    pub point: Vec<f64>,
    pub period: f64,
    pub n_samples: usize,
    /// |λ − 1| below this counts as a unit eigenvalue.
    pub unit_tol: f64,
    /// "nondegenerate" or "morse_bott".
    pub expected_class: Option<String>,
    pub expected_unit_dim: Option<usize>,
    /// Expected eigenvalues e^{±2πiρ}.
    pub expected_rotation: Option<f64>,
    pub eigen_tol: f64,
    /// When set, require |Ψ − I| below this.
    pub identity_tol: Option<f64>,
    pub symplectic_tol: f64,
}

impl Default for ReturnMapParams {
    fn default() -> Self {
        ReturnMapParams {
            chart: ChartSpec { name: "torus".into(), params: vec![] },
            point: vec![0.0, 0.0, 0.3],
            period: 1.0,
            n_samples: 16,
            unit_tol: 1e-6,
            expected_class: None,
            expected_unit_dim: None,
            expected_rotation: None,
            eigen_tol: 1e-6,
            identity_tol: None,
            symplectic_tol: 1e-8,
        }
    }
}

fn return_map(p: &ReturnMapParams, _seed: u64, b: &mut ReportBuilder) -> Result<(), ScenarioError> {
    let chart = p.chart.build()?;
    let x = point(&p.point, &chart)?;
    let opts = OrbitOptions { n_samples: p.n_samples.max(4), ..OrbitOptions::default() };
    let orb = reeb_dynamics::ReebOrbit::through(&chart, &x, p.period, &opts).map_err(num)?;
    let rm = reeb_dynamics::return_map(&chart, &orb).map_err(num)?;
    let class = reeb_dynamics::classify_orbit(&rm, p.unit_tol);
    let unit = match class {
        OrbitClass::Nondegenerate => 0,
        OrbitClass::MorseBottCandidate(k) => k,
    };
    b.scalar("closure_residual", orb.closure_residual);
    b.scalar("symplectic_defect", rm.symplectic_defect);
    b.scalar("unit_eigen_dim", unit as f64);
    b.below("symplectic", rm.symplectic_defect, p.symplectic_tol, None);
    if let Some(c) = &p.expected_class {
        let want_nd = match c.as_str() {
            "nondegenerate" => true,
            "morse_bott" => false,
            other => return Err(config(format!("expected_class must be nondegenerate or morse_bott, got '{other}'"))),
        };
        let ok = want_nd == matches!(class, OrbitClass::Nondegenerate);
        b.verdict("class", ok, unit as f64, 0.0, None);
    }
    if let Some(k) = p.expected_unit_dim {
        b.verdict("unit_eigen_dim", unit == k, unit as f64, k as f64, None);
    }
    if let Some(rho) = p.expected_rotation {
        let target = (2.0 * PI * rho).rem_euclid(2.0 * PI);
        let err = rm
            .eigenvalues
            .iter()
            .map(|z| {
                let (c1, c2) = (nalgebra::Complex::new(target.cos(), target.sin()), nalgebra::Complex::new(target.cos(), -target.sin()));
                (z - c1).norm().min((z - c2).norm())
            })
            .fold(0.0, f64::max);
        b.scalar("rotation_error", err);
        b.below("rotation", err, p.eigen_tol, None);
    }
    if let Some(tol) = p.identity_tol {
        let k = rm.matrix.nrows();
        let err = (&rm.matrix - DMatrix::<f64>::identity(k, k)).amax();
        b.scalar("identity_error", err);
        b.below("identity", err, tol, None);
    }
    let rows = rm.eigenvalues.iter().map(|z| vec![z.re, z.im, z.norm(), z.arg() / (2.0 * PI)]).collect();
    b.table("eigenvalues", &["re", "im", "modulus", "turns"], rows);
    Ok(())
}

// ----------------------------------------------------------------- thickening

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThickeningParams {
    /// circle, torus2, sheared or heisenberg.
    pub model: String,
    /// Complex rank k of the symplectic fiber E (Ω standard on ℝ^{2k}).
    pub e_rank: usize,
    /// Shear for the sheared model.
    pub c: f64,
    pub requested_radius: f64,
    pub test_points: usize,
    pub reeb_tol: f64,
    pub splitting_tol: f64,
    pub radial_c: f64,
    pub radial_tol: f64,
}

impl Default for ThickeningParams {
    fn default() -> Self {
        ThickeningParams {
            model: "circle".into(),
            e_rank: 1,
            c: 0.5,
            requested_radius: 0.5,
            test_points: 100,
            reeb_tol: 1e-8,
            splitting_tol: 1e-10,
            radial_c: 2.0,
            radial_tol: 1e-6,
        }
    }
}

fn thickening(p: &ThickeningParams, seed: u64, b: &mut ReportBuilder) -> Result<(), ScenarioError> {
    let setup = match p.model.as_str() {
        "circle" => MorseBottSetup::circle(),
        "torus2" => MorseBottSetup::torus2(),
        "sheared" => MorseBottSetup::sheared(p.c),
        "heisenberg" => MorseBottSetup::heisenberg(1, 1, DMatrix::zeros(1, 2), 0.0),
        other => return Err(config(format!("unknown set-up model '{other}'"))),
    };
    let omega = normal_form::standard_omega(p.e_rank);
    let opts = ThickeningOptions { requested_radius: p.requested_radius, ..ThickeningOptions::default() };
    let tc = normal_form::build_thickening(&setup, &omega, &opts).map_err(num)?;
    b.scalar("tube_radius", tc.tube_radius);
    b.verdict("tube_radius", tc.tube_radius >= p.requested_radius, tc.tube_radius, p.requested_radius, None);
    let mut gap = 0.0f64;
    for y in &tc.setup.samples {
        gap = gap.max(normal_form::reeb_of_thickening(&tc, y).map_err(num)?.gap);
    }
    b.scalar("zero_section_reeb_gap", gap);
    b.below("zero_section_reeb", gap, p.reeb_tol, None);
    let pts = normal_form::tube_points(&tc, p.requested_radius.min(tc.tube_radius), p.test_points, seed);
    let mut rows = Vec::new();
    let mut first_bad = None;
    let mut worst_lambda = 0.0f64;
    for (i, x) in pts.iter().enumerate() {
        let sp = normal_form::split_contact_distribution(&tc, x).map_err(num)?;
        let ok = sp.rank == tc.dim() - 1 && sp.max_lambda < p.splitting_tol;
        if !ok && first_bad.is_none() {
            first_bad = Some(i);
        }
        worst_lambda = worst_lambda.max(sp.max_lambda);
        rows.push(vec![i as f64, tc.fiber_norm(x), sp.rank as f64, sp.max_lambda]);
    }
    let bad = rows.iter().filter(|r| r[2] as usize != tc.dim() - 1 || r[3] >= p.splitting_tol).count();
    b.scalar("splitting_failures", bad as f64);
    b.verdict("splitting", bad == 0, worst_lambda, p.splitting_tol, first_bad);
    b.table("splitting", &["point", "fiber_norm", "rank", "max_lambda"], rows);
    let rep = normal_form::radial_identities(&tc, p.radial_c, &pts);
    b.scalar("radial_scaling_error", rep.scaling_error);
    b.scalar("radial_cartan_error", rep.cartan_error);
    b.below("radial_scaling", rep.scaling_error, p.radial_tol, None);
    b.below("radial_cartan", rep.cartan_error, p.radial_tol, None);
    Ok(())
}

// ------------------------------------------------------------------- spectrum

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumParams {
    /// Fiber rank is 2·rank_k.
    pub rank_k: usize,
    /// S = s_scalar·Id unless s_matrix is given.
    pub s_scalar: f64,
    pub s_matrix: Option<Vec<Vec<f64>>>,
    pub period: f64,
    pub n_modes: usize,
    pub k_max: usize,
    pub tol: f64,
    pub gap_trials: usize,
    pub expected_gap: Option<f64>,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        SpectrumParams {
            rank_k: 1,
            s_scalar: PI,
            s_matrix: None,
            period: 1.0,
            n_modes: 256,
            k_max: 20,
            tol: 1e-8,
            gap_trials: 1000,
            expected_gap: None,
        }
    }
}

fn zeroth_order(rank: usize, scalar: f64, matrix: &Option<Vec<Vec<f64>>>) -> Result<DMatrix<f64>, ScenarioError> {
    match matrix {
        None => Ok(DMatrix::identity(rank, rank) * scalar),
        Some(rows) => {
            if rows.len() != rank || rows.iter().any(|r| r.len() != rank) {
                return Err(config(format!("s_matrix must be {rank}×{rank}")));
            }
            Ok(DMatrix::from_fn(rank, rank, |i, j| rows[i][j]))
        }
    }
}

fn spectrum(p: &SpectrumParams, seed: u64, b: &mut ReportBuilder) -> Result<(), ScenarioError> {
    if p.rank_k == 0 || p.n_modes == 0 || p.k_max > p.n_modes {
        return Err(config("need rank_k ≥ 1 and 1 ≤ k_max ≤ n_modes"));
    }
    let rank = 2 * p.rank_k;
    let s = zeroth_order(rank, p.s_scalar, &p.s_matrix)?;
    let op = SpectralOperator::new(normal_form::standard_j(p.rank_k), ZerothOrder::Constant(s), p.period, p.n_modes).map_err(num)?;
    let sp = spectral::spectrum(&op);
    b.scalar("gap", sp.gap);
    b.scalar("kernel_dim", sp.kernel_dim as f64);
    b.scalar("dimension", op.dim() as f64);
    if p.s_matrix.is_none() {
        // Eigenvalues 2πk/T − a, each of multiplicity `rank`, ascending in k.
        let offset = (p.n_modes - p.k_max) * rank;
        let mut rows = Vec::new();
        let mut worst = (0.0f64, None);
        for (i, kk) in (-(p.k_max as i64)..=p.k_max as i64).flat_map(|k| std::iter::repeat_n(k, rank)).enumerate() {
            let want = 2.0 * PI * kk as f64 / p.period - p.s_scalar;
            let got = sp.eigenvalues[offset + i];
            let err = (got - want).abs();
            if !(err <= worst.0) {
                worst = (err, Some(i));
            }
            rows.push(vec![kk as f64, want, got, err]);
        }
        b.scalar("max_eigen_error", worst.0);
        b.below("model_spectrum", worst.0, p.tol, worst.1);
        b.table("eigenvalues", &["k", "expected", "computed", "error"], rows);
    } else {
        let rows = sp.by_magnitude().iter().take(4 * p.k_max * rank).map(|l| vec![*l]).collect();
        b.table("eigenvalues", &["eigenvalue"], rows);
    }
    if let Some(g) = p.expected_gap {
        b.below("expected_gap", (sp.gap - g).abs(), p.tol, None);
    }
    if p.gap_trials > 0 {
        let rep = spectral::gap_inequality_check(&op, &sp, p.gap_trials, seed);
        b.scalar("gap_min_quotient", rep.min_quotient);
        b.scalar("gap_delta_sq", rep.delta_sq);
        b.verdict("gap_inequality", rep.passed, rep.delta_sq - rep.min_quotient, rep.slack, rep.failures.first().copied());
    }
    Ok(())
}

// ------------------------------------------------------------- cylinder_decay

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CylinderParams {
    pub s_scalar: f64,
    pub rank_k: usize,
    pub n_modes: usize,
    pub period: f64,
    pub r: f64,
    pub n_tau: usize,
    pub n_t: usize,
    /// "lowest" seeds the eigenvector of the smallest positive eigenvalue λ₁; "kernel" adds a kernel vector.
    pub initial: String,
    pub forcing_delta0: Option<f64>,
    pub forcing_amplitude: f64,
    /// "eigen" or "crank_nicolson".
    pub solver: String,
    pub floor: f64,
    pub rate_tol: f64,
    pub control_tol: f64,
}

impl Default for CylinderParams {
    fn default() -> Self {
        CylinderParams {
            s_scalar: PI,
            rank_k: 1,
            n_modes: 32,
            period: 1.0,
            r: 20.0,
            n_tau: 512,
            n_t: 128,
            initial: "lowest".into(),
            forcing_delta0: None,
            forcing_amplitude: 1.0,
            solver: "eigen".into(),
            floor: decay_lab::DEFAULT_FLOOR,
            rate_tol: 0.02,
            control_tol: 0.01,
        }
    }
}

fn cylinder_decay(p: &CylinderParams, _seed: u64, b: &mut ReportBuilder) -> Result<(), ScenarioError> {
    if p.rank_k == 0 {
        return Err(config("rank_k must be positive"));
    }
    let rank = 2 * p.rank_k;
    let op = SpectralOperator::new(
        normal_form::standard_j(p.rank_k),
        ZerothOrder::Constant(DMatrix::identity(rank, rank) * p.s_scalar),
        p.period,
        p.n_modes,
    )
    .map_err(num)?;
    let sp = spectral::spectrum(&op);
    let pos: Vec<usize> = (0..sp.eigenvalues.len()).filter(|&i| sp.eigenvalues[i] > sp.kernel_tol).collect();
    let (&i1, &i2) = match (pos.first(), pos.get(rank)) {
        (Some(a), Some(c)) => (a, c),
        _ => return Err(num("operator has too few positive eigenvalues")),
    };
    let lambda1 = sp.eigenvalues[i1];
    let v1 = sp.eigenvectors.column(i1).into_owned();
    let v2 = sp.eigenvectors.column(i2).into_owned();
    let (zeta0, kernel_seeded) = match p.initial.as_str() {
        "lowest" => (v1.clone(), false),
        "kernel" => {
            if sp.kernel_dim == 0 {
                return Err(config("initial = kernel needs an operator with nontrivial kernel"));
            }
            (sp.kernel_basis().column(0).into_owned() + &v1, true)
        }
        other => return Err(config(format!("initial must be lowest or kernel, got '{other}'"))),
    };
    let forcing = match p.forcing_delta0 {
        None => Forcing::Zero,
        Some(d0) => Forcing::Exponential { profile: (&v1 + &v2) * (p.forcing_amplitude / 2f64.sqrt()), delta0: d0 },
    };
    let grid = CylinderGrid { n_tau: p.n_tau, n_t: p.n_t };
    let field = match p.solver.as_str() {
        "eigen" => decay_lab::solve_cylinder(&op, &forcing, &zeta0, p.r, grid),
        "crank_nicolson" => decay_lab::solve_cylinder_cn(&op, None, &forcing, &zeta0, p.r, grid),
        other => return Err(config(format!("solver must be eigen or crank_nicolson, got '{other}'"))),
    }
    .map_err(|e| match e {
        decay_lab::DecayError::ResolutionTooCoarse(_) | decay_lab::DecayError::ModeMismatch(_) | decay_lab::DecayError::OutOfRange(_) => config(e.to_string()),
        e => num(e),
    })?;
    let fit = decay_lab::decay_rate(&field, p.floor).map_err(num)?;
    b.scalar("lambda1", lambda1);
    b.scalar("delta_hat", fit.delta_hat);
    b.scalar("r_squared", fit.r_squared);
    b.scalar("fit_points", fit.points as f64);
    b.scalar("tail_fallback", if fit.tail_fallback { 1.0 } else { 0.0 });
    if let Some(d0) = p.forcing_delta0 {
        b.scalar("delta0", d0);
    }
    if kernel_seeded {
        b.scalar("expected_rate", 0.0);
        b.below("no_decay_control", fit.delta_hat.abs(), p.control_tol, None);
    } else {
        let expected = p.forcing_delta0.map_or(lambda1, |d| d.min(lambda1));
        let rel = (fit.delta_hat - expected).abs() / expected;
        b.scalar("expected_rate", expected);
        b.scalar("relative_rate_error", rel);
        b.below("decay_rate", rel, p.rate_tol, None);
    }
    let rows = field.tau.iter().zip(field.slice_norms.iter()).zip(fit.fitted.iter()).map(|((t, n), f)| vec![*t, *n, *f]).collect();
    b.table("decay", &["tau", "norm", "fitted"], rows);
    Ok(())
}

// ------------------------------------------------------------- three_interval

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThreeIntervalParams {
    /// Random hypothesis-satisfying sequences to test.
    pub sequences: usize,
    pub max_n: usize,
    /// Explicit data x with its gamma.
    pub x: Option<Vec<f64>>,
    pub gamma: Option<f64>,
    /// Explicit data x_k = e^{−ck}, k = 0..=n, with gamma = γ(c).
    pub c: Option<f64>,
    pub n: usize,
    pub c_min: f64,
    pub c_max: f64,
    pub c_points: usize,
    pub identity_tol: f64,
}

impl Default for ThreeIntervalParams {
    fn default() -> Self {
        ThreeIntervalParams {
            sequences: 10_000,
            max_n: 50,
            x: None,
            gamma: None,
            c: None,
            n: 20,
            c_min: 0.01,
            c_max: 5.0,
            c_points: 500,
            identity_tol: 1e-12,
        }
    }
}

fn three_interval(p: &ThreeIntervalParams, seed: u64, b: &mut ReportBuilder) -> Result<(), ScenarioError> {
    let explicit = match (&p.x, p.gamma, p.c) {
        (Some(x), Some(g), None) => Some(IntervalSeq::new(x.clone(), g).map_err(|e| config(e.to_string()))?),
        (None, None, Some(c)) => {
            let g = decay_lab::gamma_of_c(c).map_err(|e| config(e.to_string()))?;
            Some(IntervalSeq::new((0..=p.n).map(|k| (-c * k as f64).exp()).collect(), g).map_err(|e| config(e.to_string()))?)
        }
        (None, None, None) => None,
        _ => return Err(config("give either x with gamma, or c, or neither")),
    };
    if let Some(seq) = explicit {
        let rep = decay_lab::three_interval_bound(&seq);
        b.scalar("xi", rep.xi);
        b.verdict("hypothesis", rep.hypothesis_holds, rep.violations.len() as f64, 0.0, rep.violations.first().copied());
        if rep.hypothesis_holds {
            b.verdict("bound", rep.bound_holds, rep.bound_failures.len() as f64, 0.0, rep.bound_failures.first().copied());
            let rows = seq.x.iter().zip(rep.bounds.iter()).enumerate().map(|(k, (x, bd))| vec![k as f64, *x, *bd]).collect();
            b.table("bound", &["k", "x", "bound"], rows);
        }
    }
    if p.sequences > 0 {
        if p.max_n < 2 {
            return Err(config("max_n must be at least 2"));
        }
        let outcomes: Vec<Result<(bool, usize), ScenarioError>> = (0..p.sequences)
            .into_par_iter()
            .map(|i| {
                let mut rng = sample_rng(seed, i as u64);
                let g = rng.random_range(0.01..0.49);
                let n = rng.random_range(2..=p.max_n);
                let seq = decay_lab::random_hypothesis_sequence(&mut rng, n, g).map_err(num)?;
                Ok((decay_lab::three_interval_bound(&seq).bound_holds, n))
            })
            .collect();
        let outcomes: Vec<(bool, usize)> = outcomes.into_iter().collect::<Result<_, _>>()?;
        let failures = outcomes.iter().filter(|o| !o.0).count();
        b.scalar("random_sequences", p.sequences as f64);
        b.scalar("random_failures", failures as f64);
        b.verdict("random_bound", failures == 0, failures as f64, 0.0, outcomes.iter().position(|o| !o.0));
    }
    if p.c_points > 0 {
        let mut worst = (0.0f64, None);
        let mut rows = Vec::new();
        for i in 0..p.c_points {
            let c = if p.c_points == 1 { p.c_min } else { p.c_min + (p.c_max - p.c_min) * i as f64 / (p.c_points - 1) as f64 };
            let xi = decay_lab::growth_factor(decay_lab::gamma_of_c(c).map_err(|e| config(e.to_string()))?).map_err(num)?;
            let err = (xi - c.exp()).abs();
            if !(err <= worst.0) {
                worst = (err, Some(i));
            }
            rows.push(vec![c, xi, err]);
        }
        b.scalar("max_identity_error", worst.0);
        b.below("growth_identity", worst.0, p.identity_tol, worst.1);
        b.table("identity", &["c", "xi", "error"], rows);
    }
    Ok(())
}

// ------------------------------------------------------------- center_of_mass

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CenterParams {
    pub q_dim: usize,
    pub normal_dim: usize,
    pub tube_radius: f64,
    pub period: f64,
    pub n_samples: usize,
    pub loops: usize,
    /// Size of the random offsets (inside Q and in the fiber).
    pub amplitude: f64,
    pub tol: f64,
    pub orbit_tol: f64,
    pub max_iter: usize,
}

impl Default for CenterParams {
    fn default() -> Self {
        CenterParams {
            q_dim: 3,
            normal_dim: 2,
            tube_radius: 0.5,
            period: 1.0,
            n_samples: 64,
            loops: 20,
            amplitude: 0.01,
            tol: 1e-8,
            orbit_tol: 1e-12,
            max_iter: 12,
        }
    }
}

fn center_of_mass(p: &CenterParams, seed: u64, b: &mut ReportBuilder) -> Result<(), ScenarioError> {
    if p.q_dim == 0 || p.n_samples < 4 {
        return Err(config("need q_dim ≥ 1 and n_samples ≥ 4"));
    }
    let mut reeb = DVector::zeros(p.q_dim);
    reeb[0] = 1.0;
    let model = FlatTorus::new(reeb.clone(), p.normal_dim, p.tube_radius);
    let opts = CenterOfMassOptions { max_iter: p.max_iter, tol: 1e-13 };
    let n = p.n_samples;
    let dim = p.q_dim + p.normal_dim;
    let make_loop = |z0: &DVector<f64>, offset: &dyn Fn(f64) -> DVector<f64>| -> Vec<DVector<f64>> {
        (0..n)
            .map(|j| {
                let t = j as f64 / n as f64;
                let mut x = z0 + offset(t);
                for i in 0..p.q_dim {
                    x[i] += p.period * t * reeb[i];
                }
                x
            })
            .collect()
    };

    // Reeb orbit through a random base point.
    let mut rng = sample_rng(seed, 0);
    let mut z0 = DVector::from_fn(dim, |_, _| rng.random_range(0.0..1.0));
    z0.rows_mut(p.q_dim, p.normal_dim).fill(0.0);
    let orbit = make_loop(&z0, &|_| DVector::zeros(dim));
    let r = decay_lab::center_of_mass(&model, &orbit, p.period, &opts).map_err(num)?;
    let m_err = model.log(&z0.rows(0, p.q_dim).into_owned(), &DVector::from_vec(r.m.clone())).amax();
    let h_err = r.h.iter().enumerate().map(|(j, h)| (h - j as f64 / n as f64).abs()).fold(0.0, f64::max);
    b.scalar("orbit_residual", r.residual());
    b.scalar("orbit_center_error", m_err);
    b.scalar("orbit_h_error", h_err);
    b.below("orbit_residual", r.residual(), p.orbit_tol, None);
    b.below("orbit_center", m_err, p.orbit_tol, None);
    b.below("orbit_h_identity", h_err, 1e-10, None);

    let mut rows = Vec::new();
    for l in 0..p.loops {
        let mut rng = sample_rng(seed, 1 + l as u64);
        let mut z0 = DVector::from_fn(dim, |_, _| rng.random_range(0.0..1.0));
        z0.rows_mut(p.q_dim, p.normal_dim).fill(0.0);
        let a = p.amplitude;
        let consts = DVector::from_fn(dim, |_, _| a * rng.random_range(-1.0..1.0));
        let cos1 = DVector::from_fn(dim, |_, _| a * rng.random_range(-1.0..1.0));
        let sin2 = DVector::from_fn(dim, |_, _| a * rng.random_range(-1.0..1.0));
        let offset = move |t: f64| &consts + &cos1 * (2.0 * PI * t).cos() + &sin2 * (4.0 * PI * t).sin();
        let g = make_loop(&z0, &offset);
        let r = decay_lab::center_of_mass(&model, &g, p.period, &opts).map_err(num)?;
        let cf = model.closed_form_center(&g, p.period);
        let err = model.log(&cf, &DVector::from_vec(r.m.clone())).amax();
        rows.push(vec![l as f64, r.iterations as f64, r.residual(), err, r.tube_distance]);
    }
    let (max_err, i_err) = max_with_index(rows.iter().map(|r| r[3]));
    let (max_it, i_it) = max_with_index(rows.iter().map(|r| r[1]));
    b.scalar("max_closed_form_error", max_err);
    b.scalar("max_iterations", max_it);
    b.below("closed_form", max_err, p.tol, i_err);
    b.verdict("iterations", max_it <= p.max_iter as f64, max_it, p.max_iter as f64, i_it);
    b.table("loops", &["loop", "iterations", "residual", "closed_form_error", "tube_distance"], rows);
    Ok(())
}

// -------------------------------------------------------------- action_charge

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActionParams {
    pub chart: ChartSpec,
    pub base: Vec<f64>,
    /// Period T of the closed orbit through `base`.
    pub period: f64,
    /// w(τ, t) = φ^{cτ + m·T·t}(base).
    pub c: f64,
    pub multiple: u32,
    pub r: f64,
    pub n_tau: usize,
    pub n_t: usize,
    pub tol: f64,
}

impl Default for ActionParams {
    fn default() -> Self {
        ActionParams {
            chart: ChartSpec { name: "torus".into(), params: vec![] },
            base: vec![0.0, 0.25, 0.1],
            period: 1.0,
            c: 0.0,
            multiple: 1,
            r: 2.0,
            n_tau: 9,
            n_t: 32,
            tol: 1e-8,
        }
    }
}

fn action_charge(p: &ActionParams, _seed: u64, b: &mut ReportBuilder) -> Result<(), ScenarioError> {
    let chart = p.chart.build()?;
    let base = point(&p.base, &chart)?;
    if p.n_tau < 3 || p.n_t < 4 || p.multiple == 0 {
        return Err(config("need n_tau ≥ 3, n_t ≥ 4 and multiple ≥ 1"));
    }
    let total = p.n_tau * p.n_t;
    let pts: Vec<Result<DVector<f64>, ScenarioError>> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / p.n_t, idx % p.n_t);
            let tau = p.r * i as f64 / (p.n_tau - 1) as f64;
            let s = p.c * tau + p.multiple as f64 * p.period * j as f64 / p.n_t as f64;
            if s == 0.0 {
                return Ok(base.clone());
            }
            let tr = reeb_dynamics::flow(&chart, &base, s, 1).map_err(num)?;
            Ok(tr.points[1].clone())
        })
        .collect();
    let points: Vec<DVector<f64>> = pts.into_iter().collect::<Result<_, _>>()?;
    let map = decay_lab::CylinderMap { r: p.r, n_tau: p.n_tau, n_t: p.n_t, points };
    let ac = decay_lab::action_charge(&map, &chart).map_err(num)?;
    let (t_exp, q_exp) = (p.multiple as f64 * p.period, -p.c);
    b.scalar("action", ac.action);
    b.scalar("charge", ac.charge);
    b.scalar("pi_energy", ac.pi_energy);
    b.scalar("expected_action", t_exp);
    b.scalar("expected_charge", q_exp);
    b.below("action", (ac.action - t_exp).abs(), p.tol, None);
    b.below("charge", (ac.charge - q_exp).abs(), p.tol, None);
    b.below("pi_energy", ac.pi_energy.abs(), p.tol, None);
    Ok(())
}
