use super::*;
use crate::bspline::{BSplineBasis, FunctionalCurve};
use crate::design::lhd;
use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn basis(k: usize, m: usize) -> Arc<BSplineBasis> {
    Arc::new(BSplineBasis::new(k, m).unwrap())
}

fn random_points(
    n: usize,
    d_s: usize,
    d_f: usize,
    b: &Arc<BSplineBasis>,
    seed: u64,
) -> Vec<RunPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let scalars = (0..d_s).map(|_| rng.random()).collect();
            let curves = (0..d_f)
                .map(|_| {
                    let c: Vec<f64> = (0..b.num_basis()).map(|_| rng.random()).collect();
                    FunctionalCurve::new(b.clone(), c).unwrap()
                })
                .collect();
            RunPoint::new(scalars, curves).unwrap()
        })
        .collect()
}

fn toy_params(d_s: usize, d_f: usize) -> GpParams {
    GpParams {
        mu: 0.4,
        sigma2: 1.7,
        theta_s: vec![0.6; d_s],
        theta_f: vec![0.3; d_f],
        omega: None,
        nugget: 1e-8,
    }
}

#[test]
fn correlation_product_form() {
    let b = basis(7, 4);
    let points = random_points(6, 2, 2, &b, 3);
    let params = toy_params(2, 2);
    for kernel in [KernelFamily::Gaussian, KernelFamily::Matern52] {
        for p in &points {
            assert_abs_diff_eq!(
                correlation(p, p, &params, kernel).unwrap(),
                1.0,
                epsilon = 1e-14
            );
        }
        // Componentwise oracle: multiply per-input kernel values directly.
        for pair in points.windows(2) {
            let (a, c) = (&pair[0], &pair[1]);
            let mut expect = 1.0;
            for (idx, (x, y)) in a.scalars().iter().zip(c.scalars()).enumerate() {
                expect *=
                    kernel_eval(kernel, (x - y).abs(), params.theta_s[idx]).unwrap();
            }
            for (idx, (f, g)) in a.curves().iter().zip(c.curves()).enumerate() {
                let d = crate::metric::functional_dist(f, g).unwrap();
                expect *= kernel_eval(kernel, d, params.theta_f[idx]).unwrap();
            }
            assert_abs_diff_eq!(
                correlation(a, c, &params, kernel).unwrap(),
                expect,
                epsilon = 1e-12
            );
        }
    }

    // Both per-input correlations equal to 0.5 multiply to 0.25: scalar
    // and functional distances are 1, theta solves exp(-1/(2θ²)) = 1/2.
    let theta = 1.0 / (2.0 * (2f64).ln()).sqrt();
    let ones = FunctionalCurve::new(b.clone(), vec![1.0; 7]).unwrap();
    let zeros = FunctionalCurve::new(b.clone(), vec![0.0; 7]).unwrap();
    let a = RunPoint::new(vec![0.0], vec![zeros]).unwrap();
    let c = RunPoint::new(vec![1.0], vec![ones]).unwrap();
    let params = GpParams {
        theta_s: vec![theta],
        theta_f: vec![theta],
        ..toy_params(1, 1)
    };
    assert_abs_diff_eq!(
        correlation(&a, &c, &params, KernelFamily::Gaussian).unwrap(),
        0.25,
        epsilon = 1e-12
    );
}

#[test]
fn log_likelihood_matches_dense_inverse_oracle() {
    let b = basis(5, 3);
    for kernel in [KernelFamily::Gaussian, KernelFamily::Matern52] {
        for n in [4usize, 9, 20] {
            let points = random_points(n, 2, 1, &b, 17 + n as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(91 + n as u64);
            let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let params = GpParams {
                mu: 0.2,
                sigma2: 0.9,
                theta_s: vec![0.5, 1.1],
                theta_f: vec![0.4],
                omega: None,
                nugget: 1e-8,
            };
            let ll = log_likelihood(&points, &y, kernel, &params).unwrap();

            // Dense formula with an explicit inverse.
            let mut r = DMatrix::identity(n, n);
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        r[(i, j)] =
                            correlation(&points[i], &points[j], &params, kernel).unwrap();
                    }
                }
                r[(i, i)] += params.nugget;
            }
            let det: f64 = r.determinant();
            let rinv = r.try_inverse().unwrap();
            let resid = DVector::from_iterator(n, y.iter().map(|v| v - params.mu));
            let quad = (resid.transpose() * &rinv * &resid)[(0, 0)];
            let oracle = -0.5
                * (n as f64 * (2.0 * std::f64::consts::PI * params.sigma2).ln()
                    + det.ln()
                    + quad / params.sigma2);
            assert_abs_diff_eq!(ll, oracle, epsilon = 1e-8);
        }
    }
}

#[test]
fn log_likelihood_two_point_closed_form() {
    // Ranges so small the off-diagonal correlation underflows to zero:
    // the likelihood is a product of two independent normals with
    // variance sigma2 * (1 + nugget).
    let points = vec![
        RunPoint::new(vec![0.0], vec![]).unwrap(),
        RunPoint::new(vec![1.0], vec![]).unwrap(),
    ];
    let y = [0.3, -0.8];
    let params = GpParams {
        mu: 0.1,
        sigma2: 0.7,
        theta_s: vec![1e-3],
        theta_f: vec![],
        omega: None,
        nugget: 1e-8,
    };
    let ll = log_likelihood(&points, &y, KernelFamily::Gaussian, &params).unwrap();
    let var = params.sigma2 * (1.0 + params.nugget);
    let oracle: f64 = y
        .iter()
        .map(|v| {
            -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + (v - params.mu).powi(2) / var)
        })
        .sum();
    assert_abs_diff_eq!(ll, oracle, epsilon = 1e-10);
}

#[test]
fn fit_is_deterministic_and_output_scaling_behaves() {
    let b = basis(5, 2);
    let points = random_points(12, 1, 1, &b, 5);
    let y: Vec<f64> = points
        .iter()
        .map(|p| p.scalars()[0] + p.curves()[0].coeffs().iter().sum::<f64>())
        .collect();
    let cfg = FitConfig {
        multistart: 20,
        max_evals: 200,
        ..FitConfig::new(false, 7)
    };
    let m1 = fit(&points, &y, KernelFamily::Matern52, &cfg).unwrap();
    let m2 = fit(&points, &y, KernelFamily::Matern52, &cfg).unwrap();
    assert_eq!(m1.params(), m2.params());

    // Scaling y by c leaves the theta argmax untouched and scales the
    // concentrated variance by c^2.
    let c = 3.5;
    let y_scaled: Vec<f64> = y.iter().map(|v| c * v).collect();
    let m3 = fit(&points, &y_scaled, KernelFamily::Matern52, &cfg).unwrap();
    for (a, b) in m1.params().theta_s.iter().zip(&m3.params().theta_s) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-6);
    }
    for (a, b) in m1.params().theta_f.iter().zip(&m3.params().theta_f) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-6);
    }
    assert_abs_diff_eq!(
        m3.params().sigma2 / m1.params().sigma2,
        c * c,
        epsilon = 1e-6
    );
    assert_abs_diff_eq!(m3.params().mu, c * m1.params().mu, epsilon = 1e-6);
}

#[test]
fn fit_beats_dense_theta_grid_in_one_dimension() {
    // n = 5 scalar-only toy; the fitted likelihood must dominate a dense
    // grid over the single range parameter.
    let points: Vec<RunPoint> = lhd(5, 1, 3)
        .unwrap()
        .into_iter()
        .map(|row| RunPoint::new(row, vec![]).unwrap())
        .collect();
    let y = [0.1, 0.9, -0.4, 0.5, 0.2];
    let cfg = FitConfig::new(false, 11);
    let model = fit(&points, &y, KernelFamily::Gaussian, &cfg).unwrap();
    let ll_opt = model.diagnostics().log_likelihood;

    let lb = cfg.theta_lower.ln();
    let ub = (cfg.theta_upper_factor * 1.0f64).ln();
    let mut best_grid = f64::NEG_INFINITY;
    for g in 0..10_000 {
        let theta = (lb + (ub - lb) * g as f64 / 9_999.0).exp();
        let params = GpParams {
            theta_s: vec![theta],
            ..model.params().clone()
        };
        // Concentrate mu and sigma2 at this theta via a tiny refit of the
        // closed forms.
        let cache = PairCache::new(&points, false);
        let yv = DVector::from_column_slice(&y);
        let eval = concentrated_ll(
            &cache,
            &yv,
            KernelFamily::Gaussian,
            &params.theta_s,
            &[],
            None,
            cfg.nugget,
        )
        .unwrap();
        best_grid = best_grid.max(eval.ll);
    }
    assert!(
        ll_opt >= best_grid - 1e-8 * best_grid.abs().max(1.0),
        "optimum {ll_opt} below grid best {best_grid}"
    );
}

#[test]
fn predict_interpolates_and_reverts_to_prior() {
    let b = basis(6, 3);
    let points = random_points(15, 2, 1, &b, 23);
    let y: Vec<f64> = points
        .iter()
        .map(|p| (3.0 * p.scalars()[0]).sin() + p.curves()[0].coeffs()[0])
        .collect();
    let cfg = FitConfig {
        multistart: 25,
        ..FitConfig::new(false, 4)
    };
    let model = fit(&points, &y, KernelFamily::Matern52, &cfg).unwrap();

    let preds = model.predict(&points).unwrap();
    for (p, target) in preds.iter().zip(&y) {
        assert!(
            (p.mean - target).abs() <= 1e-6 * target.abs().max(1.0),
            "interpolation violated: {} vs {}",
            p.mean,
            target
        );
        assert!(p.variance <= 1e-6 * model.params().sigma2 + 1e-12);
    }

    // With minuscule ranges every correlation to a fresh point vanishes,
    // so the prediction reverts to the trend and prior variance.
    let tiny = GpParams {
        theta_s: vec![1e-3; 2],
        theta_f: vec![1e-3],
        ..model.params().clone()
    };
    let frozen = GpModel::from_params(points.clone(), y.clone(), KernelFamily::Gaussian, tiny)
        .unwrap();
    let fresh = random_points(1, 2, 1, &b, 999).remove(0);
    let p = frozen.predict(&[fresh]).unwrap()[0];
    let params = frozen.params();
    assert_abs_diff_eq!(p.mean, params.mu, epsilon = 1e-6);
    assert_abs_diff_eq!(
        p.variance,
        params.sigma2 * (1.0 + params.nugget),
        epsilon = 1e-6 * params.sigma2
    );
}

#[test]
fn predict_matches_dense_kriging_oracle_and_is_linear_in_y() {
    let b = basis(4, 2);
    let points = random_points(3, 1, 1, &b, 31);
    let y = vec![1.0, -0.5, 0.7];
    let params = toy_params(1, 1);
    let model =
        GpModel::from_params(points.clone(), y.clone(), KernelFamily::Gaussian, params.clone())
            .unwrap();
    let test = random_points(4, 1, 1, &b, 77);

    // Hand-assembled kriging equations through a dense inverse.
    let n = 3;
    let mut r = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                r[(i, j)] =
                    correlation(&points[i], &points[j], &params, KernelFamily::Gaussian).unwrap();
            }
        }
        r[(i, i)] += params.nugget;
    }
    let rinv = r.try_inverse().unwrap();
    let resid = DVector::from_iterator(n, y.iter().map(|v| v - params.mu));
    for t in &test {
        let rvec = DVector::from_iterator(
            n,
            points
                .iter()
                .map(|p| correlation(t, p, &params, KernelFamily::Gaussian).unwrap()),
        );
        let mean = params.mu + (rvec.transpose() * &rinv * &resid)[(0, 0)];
        let variance = params.sigma2
            * (1.0 + params.nugget - (rvec.transpose() * &rinv * &rvec)[(0, 0)]);
        let p = model.predict(std::slice::from_ref(t)).unwrap()[0];
        assert_abs_diff_eq!(p.mean, mean, epsilon = 1e-8);
        assert_abs_diff_eq!(p.variance, variance.max(0.0), epsilon = 1e-8);
    }

    // Mean is linear in the outputs for fixed ranges, provided the trend
    // is concentrated per output vector (μ̂ itself is linear in y).
    let concentrated_mu = |out: &[f64]| -> f64 {
        let ones = DVector::from_element(n, 1.0);
        let yv = DVector::from_column_slice(out);
        (ones.transpose() * &rinv * &yv)[(0, 0)] / (ones.transpose() * &rinv * &ones)[(0, 0)]
    };
    let with_mu = |out: Vec<f64>| -> GpModel {
        let p = GpParams {
            mu: concentrated_mu(&out),
            ..toy_params(1, 1)
        };
        GpModel::from_params(points.clone(), out, KernelFamily::Gaussian, p).unwrap()
    };
    let z = vec![0.3, 0.9, -1.1];
    let (a, c) = (0.7, -1.3);
    let combo: Vec<f64> = y.iter().zip(&z).map(|(yi, zi)| a * yi + c * zi).collect();
    let my = with_mu(y);
    let mz = with_mu(z);
    let mc = with_mu(combo);
    for t in &test {
        let py = my.predict(std::slice::from_ref(t)).unwrap()[0].mean;
        let pz = mz.predict(std::slice::from_ref(t)).unwrap()[0].mean;
        let pc = mc.predict(std::slice::from_ref(t)).unwrap()[0].mean;
        assert_abs_diff_eq!(pc, a * py + c * pz, epsilon = 1e-10);
    }
}

#[test]
fn loo_matches_literal_holdout_oracle() {
    let b = basis(5, 2);
    for n in [3usize, 7, 10] {
        let points = random_points(n, 1, 1, &b, 41 + n as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0).collect();
        let params = toy_params(1, 1);
        let model = GpModel::from_params(
            points.clone(),
            y.clone(),
            KernelFamily::Matern52,
            params.clone(),
        )
        .unwrap();
        let loo = model.loo().unwrap();

        for i in 0..n {
            // Literal hold-out with frozen parameters.
            let mut sub_points = points.clone();
            let mut sub_y = y.clone();
            sub_points.remove(i);
            sub_y.remove(i);
            let sub = GpModel::from_params(
                sub_points,
                sub_y,
                KernelFamily::Matern52,
                params.clone(),
            )
            .unwrap();
            let p = sub.predict(std::slice::from_ref(&points[i])).unwrap()[0];
            assert_abs_diff_eq!(loo[i].mean, p.mean, epsilon = 1e-8);
            assert_abs_diff_eq!(loo[i].variance, p.variance, epsilon = 1e-8);
            assert!(loo[i].mean.is_finite() && loo[i].variance.is_finite());
        }
    }
}

#[test]
fn loo_independence_limit() {
    let b = basis(4, 2);
    let points = random_points(6, 1, 1, &b, 13);
    let y = vec![0.1, 0.4, 0.3, 0.8, 0.5, 0.2];
    let params = GpParams {
        theta_s: vec![1e-3],
        theta_f: vec![1e-3],
        ..toy_params(1, 1)
    };
    let model =
        GpModel::from_params(points, y, KernelFamily::Gaussian, params.clone()).unwrap();
    for p in model.loo().unwrap() {
        assert_abs_diff_eq!(p.mean, params.mu, epsilon = 1e-9);
    }
}

#[test]
fn loo_requires_three_runs() {
    let points = vec![
        RunPoint::new(vec![0.0], vec![]).unwrap(),
        RunPoint::new(vec![1.0], vec![]).unwrap(),
    ];
    let model = GpModel::from_params(
        points,
        vec![0.0, 1.0],
        KernelFamily::Gaussian,
        GpParams {
            theta_f: vec![],
            ..toy_params(1, 0)
        },
    )
    .unwrap();
    assert!(model.loo().is_err());
}

#[test]
fn sensitivity_closed_forms_and_monotonicity() {
    let b = basis(4, 2);
    let points = random_points(5, 1, 1, &b, 2);
    let y = vec![0.0, 1.0, 0.5, 0.2, 0.8];
    let mk = |theta_s: f64, kernel| {
        GpModel::from_params(
            points.clone(),
            y.clone(),
            kernel,
            GpParams {
                theta_s: vec![theta_s],
                ..toy_params(1, 1)
            },
        )
        .unwrap()
    };
    let m = mk(1.0, KernelFamily::Gaussian);
    assert_abs_diff_eq!(
        m.sensitivity()[0],
        1.0 - (-0.5f64).exp(),
        epsilon = 1e-12
    );

    for kernel in [KernelFamily::Gaussian, KernelFamily::Matern52] {
        let mut prev = f64::INFINITY;
        for theta in [0.1, 0.3, 1.0, 3.0, 30.0, 3000.0] {
            let s = mk(theta, kernel).sensitivity()[0];
            assert!(s < prev, "{kernel:?} theta={theta}");
            // Mathematically in [0,1); tiny thetas round the kernel to 0.
            assert!((0.0..=1.0).contains(&s));
            prev = s;
        }
        // theta -> infinity drives the score to zero.
        assert!(mk(1e9, kernel).sensitivity()[0] < 1e-9);
    }
}

#[test]
fn weighting_reduction_reproduces_unweighted_correlations() {
    let b = basis(7, 4);
    let k = b.num_basis() as f64;
    let points = random_points(10, 2, 2, &b, 57);
    let y: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
    let base = GpParams {
        mu: 0.0,
        sigma2: 1.0,
        theta_s: vec![0.7, 1.3],
        theta_f: vec![0.4, 0.9],
        omega: None,
        nugget: 1e-8,
    };
    let unweighted = GpModel::from_params(
        points.clone(),
        y.clone(),
        KernelFamily::Matern52,
        base.clone(),
    )
    .unwrap();
    let reduced = GpParams {
        theta_f: base.theta_f.iter().map(|t| t / k).collect(),
        omega: Some(vec![(1.0, 1.0); 2]),
        ..base
    };
    let weighted =
        GpModel::from_params(points, y, KernelFamily::Matern52, reduced).unwrap();
    let ru = unweighted.correlation_matrix();
    let rw = weighted.correlation_matrix();
    for i in 0..10 {
        for j in 0..10 {
            assert_abs_diff_eq!(ru[(i, j)], rw[(i, j)], epsilon = 1e-12);
        }
    }
}

#[test]
fn weight_profile_shapes() {
    let b = basis(7, 4);
    let points = random_points(8, 1, 1, &b, 3);
    let y: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
    let mk = |omega: (f64, f64)| {
        GpModel::from_params(
            points.clone(),
            y.clone(),
            KernelFamily::Matern52,
            GpParams {
                omega: Some(vec![omega]),
                ..toy_params(1, 1)
            },
        )
        .unwrap()
    };

    // Uniform weighting gives the flat profile 1/K.
    let profile = mk((1.0, 1.0)).weight_profile(0, 51).unwrap();
    for v in &profile.values {
        assert_abs_diff_eq!(*v, 1.0 / 7.0, epsilon = 1e-12);
    }

    // alpha >> beta pushes the mass toward t = 1.
    let profile = mk((8.0, 1.0)).weight_profile(0, 101).unwrap();
    let mean_loc: f64 = {
        let m0 = b.moment_vector(0).unwrap();
        let m1 = b.moment_vector(1).unwrap();
        let num: f64 = profile.weights.iter().zip(m1).map(|(w, v)| w * v).sum();
        let den: f64 = profile.weights.iter().zip(m0).map(|(w, v)| w * v).sum();
        num / den
    };
    assert!(mean_loc > 0.7, "mean location {mean_loc}");

    // Profile integral equals the moment-weighted coefficient sum; check
    // against a brute-force quadrature of the sampled spline.
    let profile = mk((2.0, 3.0)).weight_profile(0, 100_001).unwrap();
    let mut integral = 0.0;
    for (i, v) in profile.values.iter().enumerate() {
        let w = if i == 0 || i == profile.values.len() - 1 {
            0.5
        } else {
            1.0
        };
        integral += w * v;
    }
    integral /= (profile.values.len() - 1) as f64;
    let m0 = b.moment_vector(0).unwrap();
    let expect: f64 = profile.weights.iter().zip(m0).map(|(w, v)| w * v).sum();
    assert_abs_diff_eq!(integral, expect, epsilon = 1e-10);

    // Weighting-disabled models reject the call.
    let plain = GpModel::from_params(
        points.clone(),
        y.clone(),
        KernelFamily::Matern52,
        toy_params(1, 1),
    )
    .unwrap();
    assert!(plain.weight_profile(0, 11).is_err());
}

#[test]
fn fit_rejects_degenerate_data() {
    let p = RunPoint::new(vec![0.5], vec![]).unwrap();
    let data = vec![p.clone(), p];
    let err = fit(&data, &[0.0, 1.0], KernelFamily::Gaussian, &FitConfig::new(false, 1));
    assert!(matches!(err, Err(Error::DegenerateDesign(_))));
}
