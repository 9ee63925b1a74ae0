use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scatter_core::forward::{
    add_noise, born_measure, lippmann_schwinger_residual, simulate_transmissions, solve_total_field, ForwardModel,
    MeasurementSet, SolverSettings,
};
use scatter_core::harness::phantom::phantom;
use scatter_core::inverse::{plain_snr, recon_snr, SNR_CAP_DB};
use scatter_core::scene::{potential_from_image, Potential, SceneConfig};

fn model(n: usize, k: usize) -> ForwardModel {
    let mut cfg = SceneConfig::desk(k);
    cfg.grid.n = n;
    cfg.grid.size_m = n as f64 * 0.045 / 32.0;
    cfg.receivers.count = 32;
    ForwardModel::new(&cfg.build().unwrap()).unwrap()
}

fn potential(m: &ForwardModel, f_max: f64, seed: u64) -> Potential {
    let img = phantom(m.scene.grid.n(), seed, 0);
    potential_from_image(&img, &m.scene.grid, f_max, &m.scene.medium).unwrap()
}

fn random_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..len)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn rel_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

#[test]
fn noise_is_white_and_calibrated() {
    let k = 10;
    let m = 10_000;
    let y = vec![Complex64::new(1.0, -1.0); k * m];
    let ms = MeasurementSet::new(k, m, y, "h".into()).unwrap();
    let noisy = add_noise(&ms, 10.0, 42).unwrap();
    let sigma2 = noisy.noise.sigma.powi(2);
    assert!((sigma2 - ms.energy() / (k as f64 * m as f64 * 10.0)).abs() < 1e-15);

    let e: Vec<Complex64> = noisy.y.iter().zip(&ms.y).map(|(a, b)| a - b).collect();
    let count = e.len() as f64;
    let var_re = e.iter().map(|z| z.re * z.re).sum::<f64>() / count;
    let var_im = e.iter().map(|z| z.im * z.im).sum::<f64>() / count;
    let cross = e.iter().map(|z| z.re * z.im).sum::<f64>() / count;
    assert!((var_re / (sigma2 / 2.0) - 1.0).abs() < 0.05, "{var_re}");
    assert!((var_im / (sigma2 / 2.0) - 1.0).abs() < 0.05, "{var_im}");
    assert!((cross / (sigma2 / 2.0)).abs() < 0.01, "{cross}");
    let mean = e.iter().sum::<Complex64>() / count;
    assert!(mean.norm() < 0.01 * sigma2.sqrt());
    let lag1 = e.windows(2).map(|w| (w[0].conj() * w[1]).re).sum::<f64>() / count;
    assert!((lag1 / sigma2).abs() < 0.01);

    // transmissions draw from separate streams
    assert_ne!(e[..m], e[m..2 * m]);
}

#[test]
fn born_error_shrinks_with_contrast() {
    let m = model(32, 4);
    let mut errors = Vec::new();
    for f_max in [1e-1, 1e-2, 1e-3, 1e-4] {
        let x = potential(&m, f_max, 3);
        let full = simulate_transmissions(&m, &x, &SolverSettings::default()).unwrap();
        let born = born_measure(&m, &x).unwrap();
        errors.push(rel_diff(&born.y, &full.measurements.y));
    }
    for w in errors.windows(2) {
        assert!(w[1] < w[0], "{errors:?}");
    }
    // relative Born error is first order in the contrast
    assert!(errors[3] < 0.05 * errors[1], "{errors:?}");
}

#[test]
fn solved_fields_satisfy_the_equation() {
    let m = model(24, 3);
    let x = potential(&m, 5e-2, 9);
    let settings = SolverSettings {
        tol: 1e-9,
        ..SolverSettings::default()
    };
    for u_in in &m.incident {
        let (u, report) = solve_total_field(&x, u_in, &m.domain, &settings).unwrap();
        assert!(report.converged);
        let r = lippmann_schwinger_residual(&x, u_in, &u, &m.domain).unwrap();
        assert!(r < 1e-8, "{r}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sensor_adjoint_identity(seed in any::<u64>(), n in 4usize..12) {
        let m = model(n, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_vec(n * n, &mut rng);
        let y = random_vec(m.sensor.rows(), &mut rng);
        let lhs = dot(&y, &m.sensor.apply(&v).unwrap());
        let rhs = dot(&m.sensor.apply_adjoint(&y).unwrap(), &v);
        prop_assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1e-30));
    }

    #[test]
    fn domain_operator_is_linear_and_adjoint(seed in any::<u64>(), n in 2usize..20) {
        let m = model(n, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_vec(n * n, &mut rng);
        let b = random_vec(n * n, &mut rng);
        let c = Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let combo: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| c * x + y).collect();
        let ga = m.domain.apply(&a).unwrap();
        let gb = m.domain.apply(&b).unwrap();
        let expected: Vec<Complex64> = ga.iter().zip(&gb).map(|(x, y)| c * x + y).collect();
        prop_assert!(rel_diff(&m.domain.apply(&combo).unwrap(), &expected) < 1e-12);
        let lhs = dot(&b, &ga);
        let rhs = dot(&m.domain.apply_adjoint(&b).unwrap(), &a);
        prop_assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1e-30));
    }

    #[test]
    fn born_measurements_scale_linearly(scale in 0.1f64..10.0, seed in 0u64..50) {
        let m = model(8, 2);
        let x = potential(&m, 1e-3, seed);
        let mut sx = x.clone();
        sx.values.iter_mut().for_each(|v| *v *= scale);
        let y = born_measure(&m, &x).unwrap();
        let ys = born_measure(&m, &sx).unwrap();
        let scaled: Vec<Complex64> = y.y.iter().map(|v| v * scale).collect();
        prop_assert!(rel_diff(&ys.y, &scaled) < 1e-12);
    }

    #[test]
    fn recon_snr_ignores_positive_scale(
        values in prop::collection::vec(-5.0f64..5.0, 4..40),
        scale in 1e-3f64..1e3,
        noise in prop::collection::vec(-0.1f64..0.1, 40),
    ) {
        prop_assume!(values.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        let est: Vec<f64> = values.iter().zip(&noise).map(|(v, e)| v + e).collect();
        let scaled: Vec<f64> = est.iter().map(|v| v * scale).collect();
        let a = recon_snr(&est, &values).unwrap();
        let b = recon_snr(&scaled, &values).unwrap();
        prop_assert!((a - b).abs() < 1e-6 * a.abs().max(1.0));
        prop_assert!(a >= plain_snr(&est, &values).unwrap() - 1e-9);
        prop_assert!(a <= SNR_CAP_DB);
    }
}
