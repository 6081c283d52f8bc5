use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use semipar_pricing::Interval;
use semipar_pricing::links::{d_transform, h_transform, normal_cdf};
use semipar_pricing::rng::{Purpose, stream};
use semipar_pricing::shape::{
    ConcaveFit, codomain_bounds, fit_transformed_concave, project_concave, project_concave_bounded,
    project_concave_weighted, uniform_error, window_shrink,
};

/// Minimises `sum w (z - v)^2` subject to `A z <= b` by trying every active
/// set and keeping the best feasible candidate.
fn qp_oracle(v: &[f64], w: &[f64], a: &DMatrix<f64>, b: &DVector<f64>) -> Vec<f64> {
    let n = v.len();
    let m = a.nrows();
    let vv = DVector::from_row_slice(v);
    let winv = DMatrix::from_diagonal(&DVector::from_iterator(n, w.iter().map(|x| 1.0 / x)));
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|k| mask & (1 << k) != 0).collect();
        let z = if rows.is_empty() {
            vv.clone()
        } else {
            let a_s = a.select_rows(&rows);
            let b_s = DVector::from_iterator(rows.len(), rows.iter().map(|&r| b[r]));
            let gram = &a_s * &winv * a_s.transpose();
            let Some(lam) = gram.lu().solve(&(&a_s * &vv - b_s)) else { continue };
            &vv - &winv * a_s.transpose() * lam
        };
        let slack = a * &z - b;
        if slack.iter().all(|s| *s <= 1e-9) {
            let d: f64 = (0..n).map(|k| w[k] * (z[k] - v[k]).powi(2)).sum();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd - 1e-14) {
                best = Some((d, z));
            }
        }
    }
    best.unwrap().1.iter().copied().collect()
}

/// Rows `(z[k+2] - z[k+1]) / h1 - (z[k+1] - z[k]) / h0 <= 0`.
fn concavity_rows(x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    DMatrix::from_fn(n - 2, n, |r, c| {
        let (h0, h1) = (x[r + 1] - x[r], x[r + 2] - x[r + 1]);
        match c.wrapping_sub(r) {
            0 => 1.0 / h0,
            1 => -1.0 / h0 - 1.0 / h1,
            2 => 1.0 / h1,
            _ => 0.0,
        }
    })
}

fn objective(v: &[f64], w: &[f64], z: &[f64]) -> f64 {
    (0..v.len()).map(|k| w[k] * (z[k] - v[k]).powi(2)).sum()
}

fn knots_and_weights() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (3usize..=6).prop_flat_map(|n| {
        (
            prop::collection::vec(0.1f64..2.0, n - 1),
            prop::collection::vec(-2.0f64..2.0, n),
            prop::collection::vec(0.2f64..5.0, n),
        )
            .prop_map(|(gaps, v, w)| {
                let mut x = vec![0.0];
                for g in gaps {
                    x.push(x[x.len() - 1] + g);
                }
                (x, v, w)
            })
    })
}

#[test]
fn projection_examples() {
    assert_eq!(project_concave(&[0.0, 1.0, 0.0]), vec![0.0, 1.0, 0.0]);
    for z in project_concave(&[1.0, 0.0, 1.0]) {
        assert!((z - 2.0 / 3.0).abs() < 1e-12);
    }
    let affine: Vec<f64> = (0..9).map(|k| 0.5 - 0.25 * k as f64).collect();
    let z = project_concave(&affine);
    for (a, b) in z.iter().zip(&affine) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn codomain_examples() {
    let b = codomain_bounds(0.0, 0.1, 0.9).unwrap();
    assert!((b.lo + 2.302585).abs() < 1e-6 && (b.hi + 0.105361).abs() < 1e-6);
    let b = codomain_bounds(-1.0, 0.5, 2.0).unwrap();
    assert!((b.lo + 2.0).abs() < 1e-12 && (b.hi + 0.5).abs() < 1e-12);
    let b = codomain_bounds(1.0, 0.2, 3.0).unwrap();
    assert_eq!((b.lo, b.hi), (0.2, 3.0));
    assert!(codomain_bounds(0.0, 0.9, 0.1).is_err());
}

#[test]
fn noiseless_power_transforms_are_interpolated() {
    let w: Vec<f64> = (0..40).map(|k| 2.0 * k as f64 / 39.0).collect();
    let cases: [(f64, fn(f64) -> f64); 2] = [(0.5, |u| 1.0 + u - 0.3 * u * u), (-0.5, |u| -2.0 + 0.5 * u - 0.2 * u * u)];
    for (s, phi) in cases {
        let y: Vec<f64> = w.iter().map(|&u| h_transform(s, phi(u)).unwrap()).collect();
        let fit = fit_transformed_concave(&w, &y, s, None).unwrap();
        assert!(fit.converged);
        for (k, &u) in w.iter().enumerate() {
            assert!((fit.values[k] - d_transform(s, y[k]).unwrap()).abs() < 1e-6, "s = {s}, u = {u}");
        }
    }
}

#[test]
fn error_shrinks_with_sample_size() {
    let noise = Normal::new(0.0, 0.05).unwrap();
    let window = Interval::new(-2.0, 2.0).unwrap();
    let mean_error = |m: usize| {
        let mut total = 0.0;
        for seed in 0..10 {
            let mut rng = stream(seed, m as u64, 0, Purpose::Other(1));
            let w: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y: Vec<f64> = w.iter().map(|&u| normal_cdf(u) + noise.sample(&mut rng)).collect();
            let fit = fit_transformed_concave(&w, &y, 0.0, None).unwrap();
            total += uniform_error(&fit, normal_cdf, m, window, 0.5).sup_error;
        }
        total / 10.0
    };
    assert!(mean_error(1000) < mean_error(100));
}

#[test]
fn interpolating_fit_has_small_positive_error() {
    let w: Vec<f64> = Interval::new(-2.0, 2.0).unwrap().linspace(50);
    let y: Vec<f64> = w.iter().map(|&u| normal_cdf(u)).collect();
    let fit = fit_transformed_concave(&w, &y, 0.0, None).unwrap();
    let r = uniform_error(&fit, normal_cdf, 50, Interval::new(-2.0, 2.0).unwrap(), 0.5);
    assert!(!r.window_empty);
    assert!(r.sup_error > 0.0 && r.sup_error < 1e-2);
    assert!((r.delta - window_shrink(50, 0.5)).abs() < 1e-15);
    let m = 1000f64;
    assert!((window_shrink(1000, 1.0) - (m.ln() / m).powf(0.2)).abs() < 1e-15);
}

#[test]
fn saved_fit_reloads() {
    let fit = ConcaveFit::from_values(vec![0.0, 1.0, 3.0], vec![-1.0, 0.0, 0.5], 0.0, Interval::new(-5.0, 1.0).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fit.csv");
    fit.save(&path).unwrap();
    let back = ConcaveFit::load(&path).unwrap();
    assert_eq!(back.knots, fit.knots);
    assert_eq!(back.values, fit.values);
    assert_eq!(back.codomain, fit.codomain);
    for u in [-3.0, 0.5, 2.0, 10.0] {
        assert_eq!(back.eval(u), fit.eval(u));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weighted_projection_matches_qp_oracle((x, v, w) in knots_and_weights()) {
        let z = project_concave_weighted(&x, &v, &w).unwrap();
        let a = concavity_rows(&x);
        let oracle = qp_oracle(&v, &w, &a, &DVector::zeros(a.nrows()));
        let (fz, fo) = (objective(&v, &w, &z), objective(&v, &w, &oracle));
        prop_assert!(fz <= fo + 1e-9, "{fz} vs {fo}");
        for (p, q) in z.iter().zip(&oracle) {
            prop_assert!((p - q).abs() < 1e-6);
        }
    }

    #[test]
    fn bounded_projection_matches_qp_oracle((x, v, w) in knots_and_weights(), lower in -1.0f64..0.5) {
        let z = project_concave_bounded(&x, &v, &w, lower).unwrap();
        let n = x.len();
        let conc = concavity_rows(&x);
        let mut a = DMatrix::zeros(conc.nrows() + 2, n);
        a.view_mut((0, 0), (conc.nrows(), n)).copy_from(&conc);
        a[(conc.nrows(), 0)] = -1.0;
        a[(conc.nrows() + 1, n - 1)] = -1.0;
        let mut b = DVector::zeros(conc.nrows() + 2);
        b[conc.nrows()] = -lower;
        b[conc.nrows() + 1] = -lower;
        let oracle = qp_oracle(&v, &w, &a, &b);
        for (p, q) in z.iter().zip(&oracle) {
            prop_assert!((p - q).abs() < 1e-6, "{z:?} vs {oracle:?}");
        }
        prop_assert!(z.iter().all(|&t| t >= lower - 1e-9));
    }

    #[test]
    fn projection_is_idempotent(v in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        let z = project_concave(&v);
        let zz = project_concave(&z);
        for (a, b) in z.iter().zip(&zz) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        for k in 2..z.len() {
            prop_assert!(z[k] - 2.0 * z[k - 1] + z[k - 2] <= 1e-9);
        }
    }

    #[test]
    fn fit_descends_and_stays_feasible(
        seed in 0u64..10_000,
        n in 5usize..60,
        si in 0usize..4,
    ) {
        let s = [0.0, 0.5, -0.5, 1.0][si];
        let mut rng = stream(seed, 0, 0, Purpose::Other(2));
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
        let fit = fit_transformed_concave(&w, &y, s, None).unwrap();
        for pair in fit.objective_trace.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-12 * pair[0].abs().max(1.0));
        }
        prop_assert!(fit.is_concave(1e-8));
        let (lo, hi) = (fit.codomain.lo, fit.codomain.hi);
        prop_assert!(fit.values.iter().all(|v| *v >= lo - 1e-12 && *v <= hi + 1e-12));
        let (plo, phi) = (h_transform(s, lo).unwrap(), h_transform(s, hi).unwrap());
        for k in 0..=40 {
            let u = -6.0 + 0.3 * k as f64;
            let e = fit.eval(u);
            prop_assert!(e >= plo.min(phi) * (1.0 - 1e-12) && e <= plo.max(phi) * (1.0 + 1e-12));
        }
    }
}
