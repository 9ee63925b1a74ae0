//! Backprojection of measurements into the image domain, a linearized
//! (Born) least-squares reconstruction, and reconstruction quality metrics.

use crate::error::{Error, Result};
use crate::field::{pairwise_sum, ComplexField};
use crate::forward::{ForwardModel, MeasurementSet};
use crate::greens::SensorOperator;
use crate::scene::{Grid, Potential};
use num_complex::Complex64;
use rayon::prelude::*;

/// Reported SNR when the residual vanishes.
pub const SNR_CAP_DB: f64 = 300.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Backprojection {
    pub grid: Grid,
    pub w: Vec<Complex64>,
}

impl Backprojection {
    pub fn field(&self) -> ComplexField {
        ComplexField::new(self.grid.n(), self.w.clone()).expect("backprojection matches its grid")
    }
}

fn check_dims(ms: &MeasurementSet, incident: &[ComplexField], s: &SensorOperator) -> Result<()> {
    if ms.k_count != incident.len() {
        return Err(Error::Validation(format!(
            "{} measurement rows but {} incident fields",
            ms.k_count,
            incident.len()
        )));
    }
    if ms.m_count != s.rows() {
        return Err(Error::Validation(format!(
            "{} receivers in the measurements but {} in the sensor operator",
            ms.m_count,
            s.rows()
        )));
    }
    if let Some(u) = incident.iter().find(|u| u.len() != s.cols()) {
        return Err(Error::Validation(format!(
            "incident field has {} pixels, sensor operator {}",
            u.len(),
            s.cols()
        )));
    }
    Ok(())
}

/// `w = sum_k conj(u_in,k) . S^H y_k`. Per-transmission images are formed in
/// parallel and reduced in a fixed pairwise order.
pub fn backproject(ms: &MeasurementSet, incident: &[ComplexField], s: &SensorOperator) -> Result<Backprojection> {
    check_dims(ms, incident, s)?;
    let parts: Vec<Vec<Complex64>> = (0..ms.k_count)
        .into_par_iter()
        .map(|k| {
            let back = s.apply_adjoint(ms.row(k))?;
            Ok(incident[k]
                .values()
                .iter()
                .zip(back)
                .map(|(u, b)| u.conj() * b)
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(Backprojection {
        grid: s.grid().clone(),
        w: pairwise_sum(&parts, s.cols()),
    })
}

/// `Re sum_k conj(u_k) . S^H S (u_k . x)` for real `x`.
fn normal_apply(incident: &[ComplexField], s: &SensorOperator, x: &[f64]) -> Result<Vec<f64>> {
    let parts: Vec<Vec<Complex64>> = incident
        .par_iter()
        .map(|u| {
            let ux: Vec<Complex64> = u.values().iter().zip(x).map(|(a, b)| a * b).collect();
            let back = s.apply_adjoint(&s.apply(&ux)?)?;
            Ok(u.values().iter().zip(back).map(|(a, b)| a.conj() * b).collect())
        })
        .collect::<Result<_>>()?;
    Ok(pairwise_sum(&parts, s.cols()).into_iter().map(|z| z.re).collect())
}

fn dot_real(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Grids up to this many pixels get an assembled normal matrix.
pub const DENSE_NORMAL_MAX_PIXELS: usize = 4096;

/// The real normal operator `x -> Re sum_k conj(u_k) . S^H S (u_k . x)` of
/// the linearized problem.
pub struct NormalOperator<'a> {
    model: &'a ForwardModel,
    /// Row-major `N x N` entries `Re((S^H S)_ij sum_k conj(u_ki) u_kj)`.
    dense: Option<Vec<f64>>,
}

impl<'a> NormalOperator<'a> {
    /// Assembles the matrix on small grids; larger grids stay matrix-free.
    pub fn new(model: &'a ForwardModel) -> Self {
        let dense = (model.sensor.cols() <= DENSE_NORMAL_MAX_PIXELS).then(|| Self::assemble(model));
        Self { model, dense }
    }

    pub fn matrix_free(model: &'a ForwardModel) -> Self {
        Self { model, dense: None }
    }

    fn assemble(model: &ForwardModel) -> Vec<f64> {
        let s = &model.sensor;
        let (m, n) = (s.rows(), s.cols());
        let mut out = vec![0.0; n * n];
        out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            let mut gram = vec![Complex64::new(0.0, 0.0); n];
            for r in 0..m {
                let si = s.entry(r, i).conj();
                for (j, g) in gram.iter_mut().enumerate() {
                    *g += si * s.entry(r, j);
                }
            }
            let mut illum = vec![Complex64::new(0.0, 0.0); n];
            for u in &model.incident {
                let ui = u.values()[i].conj();
                for (c, uj) in illum.iter_mut().zip(u.values()) {
                    *c += ui * uj;
                }
            }
            for ((o, g), c) in row.iter_mut().zip(&gram).zip(&illum) {
                *o = (g * c).re;
            }
        });
        out
    }

    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.dense {
            Some(a) => {
                let n = x.len();
                Ok(a.par_chunks(n).map(|row| dot_real(row, x)).collect())
            }
            None => normal_apply(&self.model.incident, &self.model.sensor, x),
        }
    }

    /// Largest eigenvalue, by power iteration.
    pub fn norm_estimate(&self, iters: usize) -> Result<f64> {
        let n = self.model.sensor.cols();
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut lambda = 0.0;
        for _ in 0..iters.max(1) {
            let nv = self.apply(&v)?;
            let len = dot_real(&nv, &nv).sqrt();
            if len == 0.0 {
                return Ok(0.0);
            }
            lambda = dot_real(&v, &nv);
            v = nv.into_iter().map(|z| z / len).collect();
        }
        Ok(lambda)
    }
}

/// Largest eigenvalue of the real normal operator, by power iteration.
pub fn normal_operator_norm(model: &ForwardModel, iters: usize) -> Result<f64> {
    NormalOperator::new(model).norm_estimate(iters)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BornEstimate {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub iterations: usize,
    /// Final gradient norm relative to the data term `||Re w||`.
    pub gradient: f64,
}

/// Least squares `min_x sum_k ||y_k - S diag(u_in,k) x||^2 + tau ||x||^2` over
/// real `x`, by conjugate gradients on the real normal equations starting
/// from zero. Stops after `iters` steps or when the relative gradient drops
/// below 1e-8. With `tau = 0` on a rank-deficient system the iterates stay in
/// the range of the normal operator and approach the minimum-norm solution.
pub fn born_reconstruct(ms: &MeasurementSet, model: &ForwardModel, tau: f64, iters: usize) -> Result<BornEstimate> {
    born_reconstruct_with(ms, &NormalOperator::new(model), tau, iters)
}

/// [`born_reconstruct`] reusing an already built normal operator.
pub fn born_reconstruct_with(ms: &MeasurementSet, op: &NormalOperator, tau: f64, iters: usize) -> Result<BornEstimate> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::Validation(format!("tau must be finite and >= 0, got {tau}")));
    }
    let model = op.model;
    check_dims(ms, &model.incident, &model.sensor)?;
    let grid = model.scene.grid.clone();
    let n = grid.len();
    let apply = |x: &[f64]| -> Result<Vec<f64>> {
        let mut out = op.apply(x)?;
        for (o, xi) in out.iter_mut().zip(x) {
            *o += tau * xi;
        }
        Ok(out)
    };
    let b: Vec<f64> = backproject(ms, &model.incident, &model.sensor)?.w.iter().map(|z| z.re).collect();
    let b_norm = dot_real(&b, &b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(BornEstimate {
            grid,
            values: x,
            iterations: 0,
            gradient: 0.0,
        });
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = dot_real(&r, &r);
    let mut iterations = 0;
    while iterations < iters && rr.sqrt() > 1e-8 * b_norm {
        iterations += 1;
        let ap = apply(&p)?;
        let pap = dot_real(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += alpha * pi;
        }
        for (ri, api) in r.iter_mut().zip(&ap) {
            *ri -= alpha * api;
        }
        let rr_next = dot_real(&r, &r);
        let beta = rr_next / rr;
        rr = rr_next;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("Born reconstruction diverged".into()));
    }
    Ok(BornEstimate {
        grid,
        values: x,
        iterations,
        gradient: rr.sqrt() / b_norm,
    })
}

/// Objective `sum_k ||y_k - S diag(u_k) x||^2 + tau ||x||^2`.
pub fn born_objective(ms: &MeasurementSet, model: &ForwardModel, tau: f64, x: &[f64]) -> Result<f64> {
    check_dims(ms, &model.incident, &model.sensor)?;
    let data: Vec<f64> = model
        .incident
        .par_iter()
        .enumerate()
        .map(|(k, u)| {
            let ux: Vec<Complex64> = u.values().iter().zip(x).map(|(a, b)| a * b).collect();
            let pred = model.sensor.apply(&ux)?;
            Ok(pred.iter().zip(ms.row(k)).map(|(p, y)| (y - p).norm_sqr()).sum())
        })
        .collect::<Result<_>>()?;
    Ok(data.iter().sum::<f64>() + tau * dot_real(x, x))
}

impl BornEstimate {
    /// The estimate as a potential; negative values are kept.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_potential(self, f_max: f64) -> Potential {
        Potential {
            grid: self.grid,
            values: self.values,
            f_max,
        }
    }
}

fn check_pair(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::Validation(format!(
            "estimate has {} values, reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    let ref_energy = dot_real(reference, reference);
    if ref_energy == 0.0 {
        return Err(Error::Domain("SNR of an all-zero reference is undefined".into()));
    }
    if !ref_energy.is_finite() || estimate.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("SNR inputs must be finite".into()));
    }
    Ok(ref_energy)
}

fn snr_from(ref_energy: f64, residual: f64) -> f64 {
    if residual <= 0.0 {
        return SNR_CAP_DB;
    }
    (10.0 * (ref_energy / residual).log10()).min(SNR_CAP_DB)
}

/// `10 log10(||x||^2 / ||x - a xhat||^2)` with the least-squares scale
/// `a = <xhat, x> / ||xhat||^2` (zero for a zero estimate), capped at 300 dB.
pub fn recon_snr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    let ref_energy = check_pair(estimate, reference)?;
    let est_energy = dot_real(estimate, estimate);
    let a = if est_energy == 0.0 {
        0.0
    } else {
        dot_real(estimate, reference) / est_energy
    };
    let residual: f64 = reference.iter().zip(estimate).map(|(x, e)| (x - a * e).powi(2)).sum();
    Ok(snr_from(ref_energy, residual))
}

/// `10 log10(||x||^2 / ||x - xhat||^2)` without scale fitting, capped at 300 dB.
pub fn plain_snr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    let ref_energy = check_pair(estimate, reference)?;
    let residual: f64 = reference.iter().zip(estimate).map(|(x, e)| (x - e).powi(2)).sum();
    Ok(snr_from(ref_energy, residual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::relative_error;
    use crate::scene::SceneConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(n: usize, k: usize) -> ForwardModel {
        let mut cfg = SceneConfig::desk(k);
        cfg.grid.n = n;
        cfg.grid.size_m = 0.045 * n as f64 / 32.0;
        cfg.receivers.count = 24;
        ForwardModel::new(&cfg.build().unwrap()).unwrap()
    }

    fn random_ms(model: &ForwardModel, seed: u64) -> MeasurementSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = model.incident.len();
        let m = model.sensor.rows();
        let y = (0..k * m)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        MeasurementSet::new(k, m, y, model.scene.hash()).unwrap()
    }

    #[test]
    fn snr_examples() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() + 1.5).collect();
        assert_eq!(recon_snr(&x, &x).unwrap(), SNR_CAP_DB);
        let doubled: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert_eq!(recon_snr(&doubled, &x).unwrap(), SNR_CAP_DB);
        assert!(plain_snr(&doubled, &x).unwrap().abs() < 1e-12);
        assert_eq!(recon_snr(&vec![0.0; 50], &x).unwrap(), 0.0);
        assert!(matches!(recon_snr(&x, &vec![0.0; 50]), Err(Error::Domain(_))));
        assert!(matches!(recon_snr(&x[..3], &x), Err(Error::Validation(_))));
    }

    #[test]
    fn orthogonal_perturbation_gives_twenty_db() {
        let x: Vec<f64> = (0..64).map(|i| 1.0 + (i % 7) as f64).collect();
        let mut p: Vec<f64> = (0..64).map(|i| ((i * 13) % 5) as f64 - 2.0).collect();
        let proj = dot_real(&p, &x) / dot_real(&x, &x);
        p.iter_mut().zip(&x).for_each(|(pi, xi)| *pi -= proj * xi);
        let scale = 0.1 * dot_real(&x, &x).sqrt() / dot_real(&p, &p).sqrt();
        let est: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + scale * b).collect();
        // the optimal scale shrinks the estimate, so the fitted SNR exceeds the
        // plain one; plain SNR is exactly 20 dB here
        assert!((plain_snr(&est, &x).unwrap() - 20.0).abs() < 1e-6);
        let expected = 10.0 * (1.0f64 + 100.0).log10();
        assert!((recon_snr(&est, &x).unwrap() - expected).abs() < 1e-6);
    }

    #[test]
    fn backprojection_matches_dense_assembly() {
        for k in [1usize, 3] {
            let m = model(8, k);
            let ms = random_ms(&m, 11 + k as u64);
            let w = backproject(&ms, &m.incident, &m.sensor).unwrap().w;
            let n = m.sensor.cols();
            let mut dense = vec![Complex64::new(0.0, 0.0); n];
            for kk in 0..k {
                let u = m.incident[kk].values();
                for (i, d) in dense.iter_mut().enumerate() {
                    for (mm, y) in ms.row(kk).iter().enumerate() {
                        *d += u[i].conj() * m.sensor.entry(mm, i).conj() * y;
                    }
                }
            }
            assert!(relative_error(&w, &dense) < 1e-12);
        }
    }

    #[test]
    fn zero_data_reconstructs_zero() {
        let m = model(8, 2);
        let ms = MeasurementSet::new(2, 24, vec![Complex64::new(0.0, 0.0); 48], m.scene.hash()).unwrap();
        let est = born_reconstruct(&ms, &m, 1e-3, 20).unwrap();
        assert!(est.values.iter().all(|v| *v == 0.0));
        assert!(backproject(&ms, &m.incident, &m.sensor).unwrap().w.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = model(8, 2);
        let ms = random_ms(&model(8, 3), 1);
        assert!(matches!(backproject(&ms, &m.incident, &m.sensor), Err(Error::Validation(_))));
        assert!(born_reconstruct(&ms, &m, -1.0, 5).is_err());
    }

    #[test]
    fn dense_and_matrix_free_normal_agree() {
        let m = model(8, 3);
        let dense = NormalOperator::new(&m);
        let free = NormalOperator::matrix_free(&m);
        assert!(dense.is_dense() && !free.is_dense());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = dense.apply(&x).unwrap();
        let b = free.apply(&x).unwrap();
        let diff: f64 = a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!(diff < 1e-12 * dot_real(&b, &b).sqrt());
    }

    #[test]
    fn larger_tau_shrinks_the_estimate() {
        let m = model(8, 3);
        let ms = random_ms(&m, 5);
        let op = NormalOperator::new(&m);
        let scale = op.norm_estimate(50).unwrap();
        let norms: Vec<f64> = [1e-3, 1e-1, 1e1]
            .iter()
            .map(|t| {
                let est = born_reconstruct_with(&ms, &op, t * scale, 500).unwrap();
                dot_real(&est.values, &est.values).sqrt()
            })
            .collect();
        assert!(norms[0] > norms[1] && norms[1] > norms[2], "{norms:?}");
    }

    #[test]
    fn objective_decreases_along_cg() {
        let m = model(8, 3);
        let ms = random_ms(&m, 4);
        let tau = 1e-3 * normal_operator_norm(&m, 30).unwrap();
        let mut last = f64::INFINITY;
        for iters in 0..8 {
            let est = born_reconstruct(&ms, &m, tau, iters).unwrap();
            let obj = born_objective(&ms, &m, tau, &est.values).unwrap();
            assert!(obj <= last * (1.0 + 1e-12), "iteration {iters}: {obj} > {last}");
            last = obj;
        }
    }
}
