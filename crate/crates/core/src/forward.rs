//! Forward model: total-field solve of `u = u_in + G (u . x)`, receiver
//! measurements `y = S (u . x)`, and calibrated measurement noise.

use crate::error::{Error, Result};
use crate::field::{check_finite, norm_sqr, ComplexField};
use crate::greens::{DomainOperator, SensorOperator};
use crate::krylov::{bicgstab, cgnr};
use crate::rng;
use crate::scene::{Potential, Scene};
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bicgstab,
    Cgnr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    /// Target relative residual.
    pub tol: f64,
    pub max_iter: usize,
    pub method: Method,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 1000,
            method: Method::Bicgstab,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Config(format!("solver tol must be in (0, 1), got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("solver max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
}

fn check_shapes(x: &Potential, u: &ComplexField, g: &DomainOperator) -> Result<()> {
    let n = g.grid().n();
    if x.grid.n() != n || u.n() != n {
        return Err(Error::Validation(format!(
            "grid mismatch: operator n = {n}, potential n = {}, field n = {}",
            x.grid.n(),
            u.n()
        )));
    }
    Ok(())
}

/// `(I - G diag(x)) u`.
fn apply_system(g: &DomainOperator, x: &[f64], u: &[Complex64]) -> Result<Vec<Complex64>> {
    let scattered: Vec<Complex64> = u.iter().zip(x).map(|(ui, xi)| ui * xi).collect();
    let gu = g.apply(&scattered)?;
    Ok(u.iter().zip(&gu).map(|(ui, gi)| ui - gi).collect())
}

/// `(I - diag(x) G^H) u`.
fn apply_system_adjoint(g: &DomainOperator, x: &[f64], u: &[Complex64]) -> Result<Vec<Complex64>> {
    let gu = g.apply_adjoint(u)?;
    Ok(u.iter().zip(&gu).zip(x).map(|((ui, gi), xi)| ui - gi * xi).collect())
}

/// Solves the discrete Lippmann-Schwinger system for the total field.
///
/// A solve that exhausts `max_iter` still returns its best iterate, with
/// `converged = false` in the report.
pub fn solve_total_field(
    x: &Potential,
    u_in: &ComplexField,
    g: &DomainOperator,
    settings: &SolverSettings,
) -> Result<(ComplexField, SolveReport)> {
    settings.validate()?;
    check_shapes(x, u_in, g)?;
    if x.is_zero() {
        return Ok((
            u_in.clone(),
            SolveReport {
                iterations: 0,
                final_residual: 0.0,
                converged: true,
            },
        ));
    }
    let xs = &x.values;
    let b = u_in.values();
    let outcome = match settings.method {
        Method::Bicgstab => bicgstab(
            |u| apply_system(g, xs, u),
            b,
            b.to_vec(),
            settings.tol,
            settings.max_iter,
        )?,
        Method::Cgnr => cgnr(
            |u| apply_system(g, xs, u),
            |u| apply_system_adjoint(g, xs, u),
            b,
            b.to_vec(),
            settings.tol,
            settings.max_iter,
        )?,
    };
    check_finite(&outcome.x, "total field")?;
    Ok((
        ComplexField::new(u_in.n(), outcome.x)?,
        SolveReport {
            iterations: outcome.iterations,
            final_residual: outcome.residual,
            converged: outcome.converged,
        },
    ))
}

/// `||u - u_in - G (u . x)|| / ||u_in||`, evaluated directly.
pub fn lippmann_schwinger_residual(
    x: &Potential,
    u_in: &ComplexField,
    u: &ComplexField,
    g: &DomainOperator,
) -> Result<f64> {
    check_shapes(x, u, g)?;
    let au = apply_system(g, &x.values, u.values())?;
    let diff: f64 = au.iter().zip(u_in.values()).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(diff.sqrt() / u_in.norm())
}

/// Noiseless receiver samples `S (u . x)`.
pub fn measure(u: &ComplexField, x: &Potential, s: &SensorOperator) -> Result<Vec<Complex64>> {
    if u.len() != x.values.len() || u.len() != s.cols() {
        return Err(Error::Validation(format!(
            "measure: field has {} pixels, potential {}, sensor operator {}",
            u.len(),
            x.values.len(),
            s.cols()
        )));
    }
    let contrast: Vec<Complex64> = u.values().iter().zip(&x.values).map(|(ui, xi)| ui * xi).collect();
    s.apply(&contrast)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseInfo {
    /// Requested input SNR in dB; `None` for noiseless data.
    pub snr_db: Option<f64>,
    /// Per-component standard deviation of the complex noise.
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseInfo {
    pub fn noiseless() -> Self {
        Self {
            snr_db: None,
            sigma: 0.0,
            seed: 0,
        }
    }
}

/// Scattered-field samples for `K` transmissions by `M` receivers.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    pub k_count: usize,
    pub m_count: usize,
    /// Row-major `K x M`, rows in transmitter order.
    pub y: Vec<Complex64>,
    pub noise: NoiseInfo,
    pub scene_hash: String,
}

impl MeasurementSet {
    pub fn new(k_count: usize, m_count: usize, y: Vec<Complex64>, scene_hash: String) -> Result<Self> {
        if y.len() != k_count * m_count {
            return Err(Error::Validation(format!(
                "measurement set {k_count} x {m_count} needs {} values, got {}",
                k_count * m_count,
                y.len()
            )));
        }
        check_finite(&y, "measurements")?;
        Ok(Self {
            k_count,
            m_count,
            y,
            noise: NoiseInfo::noiseless(),
            scene_hash,
        })
    }

    pub fn row(&self, k: usize) -> &[Complex64] {
        &self.y[k * self.m_count..(k + 1) * self.m_count]
    }

    /// `||y||_F^2`.
    pub fn energy(&self) -> f64 {
        norm_sqr(&self.y)
    }

    pub fn is_noisy(&self) -> bool {
        self.noise.sigma != 0.0 || self.noise.snr_db.is_some()
    }
}

/// Operators and illuminations of one scene, built once and shared by every
/// simulation on it.
#[derive(Debug)]
pub struct ForwardModel {
    pub scene: Scene,
    pub domain: DomainOperator,
    pub sensor: SensorOperator,
    pub incident: Vec<ComplexField>,
}

impl ForwardModel {
    pub fn new(scene: &Scene) -> Result<Self> {
        let domain = DomainOperator::build(&scene.grid, &scene.medium)?;
        let sensor = SensorOperator::build(&scene.grid, &scene.medium, &scene.receivers)?;
        let incident = scene.incident_fields()?;
        Ok(Self {
            scene: scene.clone(),
            domain,
            sensor,
            incident,
        })
    }

    fn check_potential(&self, x: &Potential) -> Result<()> {
        if x.grid != self.scene.grid {
            return Err(Error::Validation(format!(
                "potential grid ({} px, {} m) differs from the scene grid ({} px, {} m)",
                x.grid.n(),
                x.grid.size_m(),
                self.scene.grid.n(),
                self.scene.grid.size_m()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub measurements: MeasurementSet,
    pub reports: Vec<SolveReport>,
}

/// Runs every transmission through solve and measure. Transmissions are
/// independent and solved in parallel; rows come back in ring order.
///
/// Any non-converged transmission turns the whole call into
/// `Error::SolverFailed`; use [`simulate_transmissions_unchecked`] to inspect
/// the reports instead.
pub fn simulate_transmissions(model: &ForwardModel, x: &Potential, settings: &SolverSettings) -> Result<Simulation> {
    let sim = simulate_transmissions_unchecked(model, x, settings)?;
    let failed: Vec<usize> = sim
        .reports
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.converged)
        .map(|(k, _)| k)
        .collect();
    if failed.is_empty() {
        Ok(sim)
    } else {
        Err(Error::SolverFailed { failed })
    }
}

pub fn simulate_transmissions_unchecked(
    model: &ForwardModel,
    x: &Potential,
    settings: &SolverSettings,
) -> Result<Simulation> {
    model.check_potential(x)?;
    settings.validate()?;
    let rows: Vec<(Vec<Complex64>, SolveReport)> = model
        .incident
        .par_iter()
        .map(|u_in| {
            let (u, report) = solve_total_field(x, u_in, &model.domain, settings)?;
            Ok((measure(&u, x, &model.sensor)?, report))
        })
        .collect::<Result<_>>()?;
    let m_count = model.sensor.rows();
    let k_count = rows.len();
    let mut y = Vec::with_capacity(k_count * m_count);
    let mut reports = Vec::with_capacity(k_count);
    for (row, report) in rows {
        y.extend(row);
        reports.push(report);
    }
    Ok(Simulation {
        measurements: MeasurementSet::new(k_count, m_count, y, model.scene.hash())?,
        reports,
    })
}

/// First-order (Born) measurements `y_k = S (u_in,k . x)`, no solve.
pub fn born_measure(model: &ForwardModel, x: &Potential) -> Result<MeasurementSet> {
    model.check_potential(x)?;
    let rows: Vec<Vec<Complex64>> = model
        .incident
        .par_iter()
        .map(|u_in| measure(u_in, x, &model.sensor))
        .collect::<Result<_>>()?;
    let k_count = rows.len();
    MeasurementSet::new(k_count, model.sensor.rows(), rows.concat(), model.scene.hash())
}

/// Adds i.i.d. circular complex Gaussian noise at the requested input SNR,
/// `10 log10(||y||^2 / E||e||^2) = snr_db`, calibrated over the whole set.
/// Transmission `k` draws from its own stream derived from `(seed, k)`.
pub fn add_noise(ms: &MeasurementSet, snr_db: f64, seed: u64) -> Result<MeasurementSet> {
    if ms.is_noisy() {
        return Err(Error::Usage("measurement set already carries noise".into()));
    }
    if !snr_db.is_finite() {
        return Err(Error::Validation(format!("input SNR must be finite, got {snr_db}")));
    }
    let energy = ms.energy();
    if energy == 0.0 {
        return Err(Error::Usage(
            "cannot calibrate noise against an all-zero measurement set".into(),
        ));
    }
    let count = (ms.k_count * ms.m_count) as f64;
    let variance = energy / (count * 10f64.powf(snr_db / 10.0));
    let sigma = variance.sqrt();
    let component = sigma * std::f64::consts::FRAC_1_SQRT_2;

    let mut out = ms.clone();
    out.y
        .par_chunks_mut(ms.m_count.max(1))
        .enumerate()
        .for_each(|(k, row)| {
            let mut stream = rng::stream(seed, &[k as u64]);
            for value in row {
                let re: f64 = StandardNormal.sample(&mut stream);
                let im: f64 = StandardNormal.sample(&mut stream);
                *value += Complex64::new(component * re, component * im);
            }
        });
    out.noise = NoiseInfo {
        snr_db: Some(snr_db),
        sigma,
        seed,
    };
    Ok(out)
}

/// Realized input SNR `10 log10(||clean||^2 / ||noisy - clean||^2)`.
pub fn empirical_snr_db(clean: &MeasurementSet, noisy: &MeasurementSet) -> f64 {
    let noise: f64 = clean.y.iter().zip(&noisy.y).map(|(a, b)| (b - a).norm_sqr()).sum();
    10.0 * (clean.energy() / noise).log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Grid, Medium, SceneConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_model(n: usize, k: usize) -> ForwardModel {
        let mut cfg = SceneConfig::desk(k);
        cfg.grid.n = n;
        cfg.grid.size_m = n as f64 * 0.045 / 32.0;
        cfg.receivers.count = 24;
        ForwardModel::new(&cfg.build().unwrap()).unwrap()
    }

    fn random_potential(grid: &Grid, medium: &Medium, f_max: f64, seed: u64) -> Potential {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img: Vec<f64> = (0..grid.len()).map(|_| rng.random_range(0.0..1.0)).collect();
        crate::scene::potential_from_image(&img, grid, f_max, medium).unwrap()
    }

    #[test]
    fn zero_potential_returns_incident_field() {
        let model = small_model(8, 2);
        let x = Potential::zero(&model.scene.grid);
        let (u, report) =
            solve_total_field(&x, &model.incident[0], &model.domain, &SolverSettings::default()).unwrap();
        assert_eq!(&u, &model.incident[0]);
        assert_eq!(report.iterations, 0);
        assert!(report.converged);
        let y = measure(&u, &x, &model.sensor).unwrap();
        assert!(y.iter().all(|z| z.norm() == 0.0));
        let u0 = ComplexField::zeros(8);
        let x1 = random_potential(&model.scene.grid, &model.scene.medium, 1e-2, 1);
        assert!(measure(&u0, &x1, &model.sensor).unwrap().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn both_methods_satisfy_the_equation() {
        let model = small_model(12, 1);
        let x = random_potential(&model.scene.grid, &model.scene.medium, 5e-2, 3);
        for method in [Method::Bicgstab, Method::Cgnr] {
            let s = SolverSettings {
                tol: 1e-9,
                max_iter: 2000,
                method,
            };
            let (u, report) = solve_total_field(&x, &model.incident[0], &model.domain, &s).unwrap();
            assert!(report.converged, "{method:?}: {report:?}");
            let res = lippmann_schwinger_residual(&x, &model.incident[0], &u, &model.domain).unwrap();
            assert!(res <= 1e-9, "{method:?}: residual {res}");
            assert!((res - report.final_residual).abs() < 1e-12);
        }
    }

    #[test]
    fn exhausted_solver_flags_non_convergence() {
        let model = small_model(12, 2);
        let x = random_potential(&model.scene.grid, &model.scene.medium, 0.5, 3);
        let s = SolverSettings {
            tol: 1e-12,
            max_iter: 1,
            method: Method::Bicgstab,
        };
        let (_, report) = solve_total_field(&x, &model.incident[0], &model.domain, &s).unwrap();
        assert!(!report.converged);
        assert!(matches!(
            simulate_transmissions(&model, &x, &s),
            Err(Error::SolverFailed { failed }) if failed == vec![0, 1]
        ));
    }

    #[test]
    fn settings_validation() {
        let mut s = SolverSettings::default();
        s.tol = 1.0;
        assert!(s.validate().is_err());
        s.tol = 1e-6;
        s.max_iter = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn single_pixel_measurement() {
        let model = small_model(8, 1);
        let mut values = vec![0.0; 64];
        values[19] = 300.0;
        let x = Potential::from_values(&model.scene.grid, values, &model.scene.medium).unwrap();
        let u = &model.incident[0];
        let y = measure(u, &x, &model.sensor).unwrap();
        let c = model.scene.grid.center(19);
        for (m, r) in model.scene.receivers.positions.iter().enumerate() {
            let g = crate::greens::green2d([r[0] - c[0], r[1] - c[1]], &model.scene.medium).unwrap();
            let expected = g * model.scene.grid.pixel_area() * u.values()[19] * 300.0;
            assert!((y[m] - expected).norm() <= 1e-14 * expected.norm());
        }
    }

    #[test]
    fn single_transmission_pipeline_is_reproduced() {
        let model = small_model(10, 1);
        let x = random_potential(&model.scene.grid, &model.scene.medium, 1e-2, 8);
        let s = SolverSettings::default();
        let sim = simulate_transmissions(&model, &x, &s).unwrap();
        let (u, _) = solve_total_field(&x, &model.incident[0], &model.domain, &s).unwrap();
        let y = measure(&u, &x, &model.sensor).unwrap();
        assert_eq!(sim.measurements.y, y);
        assert_eq!(sim.measurements.k_count, 1);

        let zero = simulate_transmissions(&model, &Potential::zero(&model.scene.grid), &s).unwrap();
        assert!(zero.measurements.y.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn born_is_linear() {
        let model = small_model(8, 3);
        let x = random_potential(&model.scene.grid, &model.scene.medium, 1e-2, 2);
        let mut x2 = x.clone();
        for v in &mut x2.values {
            *v *= 3.5;
        }
        let a = born_measure(&model, &x).unwrap();
        let b = born_measure(&model, &x2).unwrap();
        for (p, q) in a.y.iter().zip(&b.y) {
            assert!((p * 3.5 - q).norm() <= 1e-12 * q.norm());
        }
        let z = born_measure(&model, &Potential::zero(&model.scene.grid)).unwrap();
        assert!(z.y.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn noise_contract() {
        let y: Vec<Complex64> = (0..100).map(|i| Complex64::new(1.0, 0.0) * if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let ms = MeasurementSet::new(4, 25, y, "h".into()).unwrap();
        assert_eq!(ms.energy(), 100.0);
        let noisy = add_noise(&ms, 20.0, 7).unwrap();
        // E||e||^2 = ||y||^2 / 10^(20/10) = 1  =>  sigma^2 = 1 / (K M)
        assert!((noisy.noise.sigma.powi(2) - 0.01).abs() < 1e-15);
        assert_eq!(noisy.noise.snr_db, Some(20.0));
        assert!(matches!(add_noise(&noisy, 20.0, 7), Err(Error::Usage(_))));
        assert_eq!(add_noise(&ms, 20.0, 7).unwrap(), noisy);
        assert_ne!(add_noise(&ms, 20.0, 8).unwrap().y, noisy.y);

        let quiet = add_noise(&ms, 300.0, 1).unwrap();
        for (a, b) in ms.y.iter().zip(&quiet.y) {
            assert!((a - b).norm() < 1e-14 * a.norm());
        }
        let zero = MeasurementSet::new(1, 2, vec![Complex64::new(0.0, 0.0); 2], "h".into()).unwrap();
        assert!(add_noise(&zero, 10.0, 1).is_err());
    }
}
