use std::collections::BTreeMap;
use std::f64::consts::PI;

use contactlab::contact_core::{self, models, ContactChart};
use contactlab::decay_lab::{self, CylinderGrid, FlatTorus, Forcing, IntervalSeq};
use contactlab::normal_form::standard_j;
use contactlab::scenario::{parse_report_scalars, report_json, Report};
use contactlab::spectral::{self, SpectralOperator, ZerothOrder};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vec_of(len: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, len)
}

fn check_reeb(chart: &ContactChart, x: &DVector<f64>) -> (f64, f64) {
    let r = contact_core::reeb_field(chart, x).unwrap();
    let w = chart.dlambda_at(x);
    ((chart.lambda_of(x, &r) - 1.0).abs(), (w.transpose() * &r).amax())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sharp_flat_round_trip(n in 1usize..=3, raw in vec_of(21, -2.0, 2.0)) {
        let d = 2 * n + 1;
        let chart = models::darboux(n);
        let x = DVector::from_column_slice(&raw[..d]);
        let alpha = DVector::from_column_slice(&raw[7..7 + d]);
        let v = contact_core::flat_dual_covector(&chart, &alpha, &x).unwrap();
        prop_assert!((contact_core::sharp_dual(&chart, &v, &x) - &alpha).amax() < 1e-10);
        prop_assert!((v - models::darboux_flat(n, &alpha, &x)).amax() < 1e-12);
    }

    #[test]
    fn reeb_field_normalised_and_in_kernel(raw in vec_of(3, -0.5, 0.5), wt in 0.5f64..2.0) {
        let chart = models::ellipsoid(1.0, wt);
        let x = DVector::from_column_slice(&raw);
        let (norm_err, kernel_err) = check_reeb(&chart, &x);
        prop_assert!(norm_err < 1e-10);
        prop_assert!(kernel_err < 1e-8);
    }

    #[test]
    fn reeb_of_scaled_form_scales_inversely(raw in vec_of(3, -1.0, 1.0), c in 0.2f64..5.0) {
        let chart = models::darboux(1);
        let x = DVector::from_column_slice(&raw);
        let r = contact_core::reeb_field(&chart, &x).unwrap();
        let rc = contact_core::reeb_field(&models::scaled(&chart, c), &x).unwrap();
        prop_assert!((rc * c - r).amax() < 1e-10);
    }

    #[test]
    fn three_interval_bound_holds_on_hypothesis_cone(seed in any::<u64>(), n in 2usize..60, gamma in 0.01f64..0.49) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = decay_lab::random_hypothesis_sequence(&mut rng, n, gamma).unwrap();
        prop_assert!(seq.violations().is_empty());
        let rep = decay_lab::three_interval_bound(&seq);
        prop_assert!(rep.bound_holds, "failures {:?}", rep.bound_failures);
    }

    #[test]
    fn geometric_data_has_growth_factor_e_c(c in 0.01f64..5.0, n in 2usize..40) {
        let g = decay_lab::gamma_of_c(c).unwrap();
        prop_assert!((decay_lab::growth_factor(g).unwrap() - c.exp()).abs() <= 1e-12 * c.exp());
        let seq = IntervalSeq::new((0..=n).map(|k| (-c * k as f64).exp()).collect(), g).unwrap();
        prop_assert!(decay_lab::three_interval_bound(&seq).bound_holds);
    }

    #[test]
    fn constant_spectrum_matches_model(a in -5.0f64..5.0, period in 0.3f64..3.0) {
        let n_modes = 12;
        let op = SpectralOperator::new(standard_j(1), ZerothOrder::Constant(DMatrix::identity(2, 2) * a), period, n_modes).unwrap();
        prop_assert!((&op.matrix - op.matrix.transpose()).amax() < 1e-12);
        let sp = spectral::spectrum(&op);
        let mut want: Vec<f64> = (-(n_modes as i64)..=n_modes as i64)
            .flat_map(|k| [2.0 * PI * k as f64 / period - a; 2])
            .collect();
        want.sort_by(f64::total_cmp);
        for (g, w) in sp.eigenvalues.iter().zip(&want) {
            prop_assert!((g - w).abs() < 1e-9);
        }
    }

    #[test]
    fn symmetric_zeroth_order_gives_real_spectrum_and_sign_flip(raw in vec_of(3, -2.0, 2.0)) {
        let s = DMatrix::from_row_slice(2, 2, &[raw[0], raw[1], raw[1], raw[2]]);
        let op = SpectralOperator::new(standard_j(1), ZerothOrder::Constant(s.clone()), 1.0, 8).unwrap();
        let flipped = SpectralOperator::new(-standard_j(1), ZerothOrder::Constant(-s), 1.0, 8).unwrap();
        let a = spectral::spectrum(&op).eigenvalues;
        let mut b: Vec<f64> = spectral::spectrum(&flipped).eigenvalues.iter().map(|x| -x).collect();
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn cylinder_slice_norms_are_recomputable_and_decay(a in 0.5f64..3.0, seed in any::<u64>()) {
        let op = SpectralOperator::new(standard_j(1), ZerothOrder::Constant(DMatrix::identity(2, 2) * a), 1.0, 4).unwrap();
        let sp = spectral::spectrum(&op);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let c = DVector::from_fn(op.dim(), |i, _| if sp.eigenvalues[i] > 0.0 { rng.random_range(-1.0..1.0) } else { 0.0 });
        let zeta0 = &sp.eigenvectors * c;
        let field = decay_lab::solve_cylinder(&op, &Forcing::Zero, &zeta0, 4.0, CylinderGrid { n_tau: 41, n_t: 16 }).unwrap();
        let again = field.recompute_slice_norms();
        for (x, y) in field.slice_norms.iter().zip(&again) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x));
        }
        for w in field.slice_norms.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn flat_torus_center_matches_closed_form(raw in vec_of(15, -0.01, 0.01)) {
        let reeb = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let model = FlatTorus::new(reeb.clone(), 2, 0.5);
        let n = 32;
        let gamma: Vec<DVector<f64>> = (0..n)
            .map(|j| {
                let t = j as f64 / n as f64;
                DVector::from_fn(5, |i, _| {
                    raw[i] + raw[5 + i] * (2.0 * PI * t).cos() + raw[10 + i] * (2.0 * PI * t).sin() + if i < 3 { reeb[i] * t } else { 0.0 }
                })
            })
            .collect();
        let r = decay_lab::center_of_mass(&model, &gamma, 1.0, &Default::default()).unwrap();
        let cf = model.closed_form_center(&gamma, 1.0);
        use contactlab::decay_lab::ReebLocusModel;
        prop_assert!(model.log(&cf, &DVector::from_vec(r.m.clone())).amax() < 1e-10);
        prop_assert!(r.iterations <= 12);
    }

    #[test]
    fn report_scalars_round_trip_exactly(vals in prop::collection::vec(any::<f64>(), 1..20)) {
        let scalars: BTreeMap<String, f64> = vals.iter().enumerate().map(|(i, v)| (format!("s{i:02}"), *v)).collect();
        let report = Report {
            name: "p".into(),
            kind: "spectrum".into(),
            seed: 0,
            params: serde_json::Value::Null,
            scalars: scalars.clone(),
            verdicts: vec![],
            tables: BTreeMap::new(),
            passed: true,
            wall_time: 0.0,
        };
        let back = parse_report_scalars(&report_json(&report)).unwrap();
        for (k, v) in &scalars {
            if v.is_finite() {
                prop_assert_eq!(back[k].to_bits(), v.to_bits());
            } else {
                prop_assert!(back[k].is_nan());
            }
        }
    }
}
