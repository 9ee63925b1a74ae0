//! Discretized Green's operators.
//!
//! `DomainOperator` maps pixel sources to fields at pixel centers (Omega to
//! Omega). It is Toeplitz-block-Toeplitz, so it is stored as a kernel on a
//! `2n x 2n` circulant embedding and applied with FFTs. `SensorOperator`
//! maps pixel sources to the receiver ring and is stored dense.
//!
//! Off-diagonal entries use the midpoint rule `g(r_i - r_j) h^2`. The
//! diagonal integrates `g` over the square pixel in polar coordinates: the
//! radial integral has the closed form
//! `int_0^R H0(k r) r dr = R H1(k R) / k + 2i / (pi k^2)`, leaving a smooth
//! angular integral for adaptive quadrature.

use crate::error::{Error, Result};
use crate::field::{check_finite, ComplexField};
use crate::quad;
use crate::scene::{Grid, Medium, ReceiverRing};
use crate::specfun::hankel1;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::{FRAC_PI_4, PI};
use std::sync::Arc;

const I_OVER_4: Complex64 = Complex64::new(0.0, 0.25);

/// Free-space 2D Green's function `(i/4) H0^(1)(k_b |r|)`.
pub fn green2d(r: [f64; 2], medium: &Medium) -> Result<Complex64> {
    let d = (r[0] * r[0] + r[1] * r[1]).sqrt();
    if d == 0.0 {
        return Err(Error::Singularity(
            "Green's function evaluated at zero separation".into(),
        ));
    }
    Ok(I_OVER_4 * hankel1(0, medium.k_b * d)?)
}

/// Integral of the Green's function over one square pixel centered on the
/// singularity.
pub fn pixel_self_term(pixel_m: f64, medium: &Medium) -> Result<Complex64> {
    let k = medium.k_b;
    let half = 0.5 * pixel_m;
    let tail = Complex64::new(0.0, 2.0 / (PI * k * k));
    // Evaluate once up front so domain errors surface as errors.
    hankel1(1, k * half)?;
    let radial = |theta: f64| {
        let r = half / theta.cos();
        let h1 = hankel1(1, k * r).expect("argument checked positive");
        I_OVER_4 * (h1 * (r / k) + tail)
    };
    let octant = quad::integrate(radial, 0.0, FRAC_PI_4, 1e-13 * pixel_m * pixel_m);
    Ok(octant * 8.0)
}

/// How well the grid resolves the background wavelength.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    /// Pixel below a quarter wavelength.
    Fine,
    /// Pixel between a quarter and half wavelength; usable with a warning.
    Marginal,
}

/// Rejects grids coarser than half a background wavelength.
pub fn check_sampling(grid: &Grid, medium: &Medium) -> Result<Sampling> {
    let lambda_b = medium.background_wavelength();
    let h = grid.pixel_m();
    if h > 0.5 * lambda_b {
        return Err(Error::Config(format!(
            "pixel {h:.3e} m exceeds half the background wavelength {lambda_b:.3e} m"
        )));
    }
    if h >= 0.25 * lambda_b {
        log::warn!(
            "pixel {h:.3e} m is coarser than a quarter background wavelength ({:.3e} m)",
            0.25 * lambda_b
        );
        return Ok(Sampling::Marginal);
    }
    Ok(Sampling::Fine)
}

/// The operator `G` on the pixel grid.
pub struct DomainOperator {
    grid: Grid,
    medium: Medium,
    self_term: Complex64,
    sampling: Sampling,
    /// `g(|lag| h) h^2` for non-negative lags, `n x n`, row = |dy|.
    lag_table: Vec<Complex64>,
    /// Spectrum of the circulant embedding, stored transposed.
    spectrum: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for DomainOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DomainOperator")
            .field("n", &self.grid.n())
            .field("self_term", &self.self_term)
            .field("sampling", &self.sampling)
            .finish()
    }
}

impl DomainOperator {
    pub fn build(grid: &Grid, medium: &Medium) -> Result<Self> {
        let sampling = check_sampling(grid, medium)?;
        let n = grid.n();
        let h = grid.pixel_m();
        let area = grid.pixel_area();
        let self_term = pixel_self_term(h, medium)?;

        // Entries depend on |lag| only; fill the upper triangle and mirror.
        let upper: Vec<(usize, usize, Complex64)> = (0..n)
            .into_par_iter()
            .flat_map_iter(|dy| {
                (dy..n).map(move |dx| {
                    let value = if dx == 0 && dy == 0 {
                        Ok(self_term)
                    } else {
                        green2d([dx as f64 * h, dy as f64 * h], medium).map(|g| g * area)
                    };
                    value.map(|v| (dy, dx, v))
                })
            })
            .collect::<Result<_>>()?;
        let mut lag_table = vec![Complex64::new(0.0, 0.0); n * n];
        for (dy, dx, v) in upper {
            lag_table[dy * n + dx] = v;
            lag_table[dx * n + dy] = v;
        }
        check_finite(&lag_table, "Green's kernel")?;

        let m = 2 * n;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);

        let mut op = Self {
            grid: grid.clone(),
            medium: medium.clone(),
            self_term,
            sampling,
            lag_table,
            spectrum: Vec::new(),
            forward,
            inverse,
        };
        let mut kernel = op.circulant_kernel();
        op.spectrum = op.forward_2d(&mut kernel);
        Ok(op)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn medium(&self) -> &Medium {
        &self.medium
    }

    pub fn self_term(&self) -> Complex64 {
        self.self_term
    }

    pub fn sampling(&self) -> Sampling {
        self.sampling
    }

    /// Matrix entry coupling two pixels whose column/row indices differ by
    /// `(dx, dy)`.
    pub fn kernel_value(&self, dx: isize, dy: isize) -> Complex64 {
        let n = self.grid.n();
        self.lag_table[dy.unsigned_abs() * n + dx.unsigned_abs()]
    }

    /// Kernel on the `2n x 2n` embedding lattice, row-major.
    pub fn circulant_kernel(&self) -> Vec<Complex64> {
        let n = self.grid.n() as isize;
        let m = 2 * n;
        let lag = |p: isize| -> Option<isize> {
            match p.cmp(&n) {
                std::cmp::Ordering::Less => Some(p),
                std::cmp::Ordering::Equal => None,
                std::cmp::Ordering::Greater => Some(p - m),
            }
        };
        let mut kernel = vec![Complex64::new(0.0, 0.0); (m * m) as usize];
        for q in 0..m {
            for p in 0..m {
                if let (Some(dx), Some(dy)) = (lag(p), lag(q)) {
                    kernel[(q * m + p) as usize] = self.kernel_value(dx, dy);
                }
            }
        }
        kernel
    }

    /// Dense `N x N` matrix, row-major, assembled entry by entry.
    pub fn dense_matrix(&self) -> Vec<Complex64> {
        let n = self.grid.n();
        let len = n * n;
        let mut g = vec![Complex64::new(0.0, 0.0); len * len];
        for i in 0..len {
            let (ri, ci) = ((i / n) as isize, (i % n) as isize);
            for j in 0..len {
                let (rj, cj) = ((j / n) as isize, (j % n) as isize);
                g[i * len + j] = self.kernel_value(ci - cj, ri - rj);
            }
        }
        g
    }

    /// Row FFTs over the full `m x m` buffer followed by column FFTs; the
    /// result is returned transposed.
    fn forward_2d(&self, buf: &mut [Complex64]) -> Vec<Complex64> {
        let m = 2 * self.grid.n();
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        self.forward.process_with_scratch(buf, &mut scratch);
        let mut t = transpose(buf, m);
        self.forward.process_with_scratch(&mut t, &mut scratch);
        t
    }

    /// `G v`.
    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.grid.n();
        if v.len() != n * n {
            return Err(Error::Validation(format!(
                "G expects {} values, got {}",
                n * n,
                v.len()
            )));
        }
        let m = 2 * n;
        let mut scratch = vec![
            Complex64::new(0.0, 0.0);
            self.forward
                .get_inplace_scratch_len()
                .max(self.inverse.get_inplace_scratch_len())
        ];
        let mut buf = vec![Complex64::new(0.0, 0.0); m * m];
        for row in 0..n {
            buf[row * m..row * m + n].copy_from_slice(&v[row * n..row * n + n]);
        }
        // rows >= n are zero and stay zero under the row transform
        self.forward.process_with_scratch(&mut buf[..n * m], &mut scratch);
        let mut t = transpose(&buf, m);
        self.forward.process_with_scratch(&mut t, &mut scratch);
        for (a, k) in t.iter_mut().zip(&self.spectrum) {
            *a *= k;
        }
        self.inverse.process_with_scratch(&mut t, &mut scratch);
        let mut back = transpose(&t, m);
        self.inverse.process_with_scratch(&mut back[..n * m], &mut scratch);

        let scale = 1.0 / (m * m) as f64;
        let mut out = Vec::with_capacity(n * n);
        for row in 0..n {
            out.extend(back[row * m..row * m + n].iter().map(|z| z * scale));
        }
        Ok(out)
    }

    /// `G^H v`. `G` is complex symmetric, so `G^H v = conj(G conj(v))`.
    pub fn apply_adjoint(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let conj: Vec<Complex64> = v.iter().map(|z| z.conj()).collect();
        Ok(self.apply(&conj)?.into_iter().map(|z| z.conj()).collect())
    }

    pub fn apply_field(&self, v: &ComplexField) -> Result<ComplexField> {
        ComplexField::new(self.grid.n(), self.apply(v.values())?)
    }
}

fn transpose(a: &[Complex64], m: usize) -> Vec<Complex64> {
    let mut t = vec![Complex64::new(0.0, 0.0); m * m];
    const BLOCK: usize = 32;
    for rb in (0..m).step_by(BLOCK) {
        for cb in (0..m).step_by(BLOCK) {
            for r in rb..(rb + BLOCK).min(m) {
                for c in cb..(cb + BLOCK).min(m) {
                    t[c * m + r] = a[r * m + c];
                }
            }
        }
    }
    t
}

/// The operator `S` from pixels to receivers, `M x N` dense.
#[derive(Clone, Debug)]
pub struct SensorOperator {
    grid: Grid,
    receivers: Vec<[f64; 2]>,
    entries: Vec<Complex64>,
}

impl SensorOperator {
    pub fn build(grid: &Grid, medium: &Medium, receivers: &ReceiverRing) -> Result<Self> {
        Self::from_points(grid, medium, &receivers.positions)
    }

    /// Sensor operator for arbitrary evaluation points outside the domain.
    pub fn from_points(grid: &Grid, medium: &Medium, points: &[[f64; 2]]) -> Result<Self> {
        let centers = grid.centers();
        let area = grid.pixel_area();
        let rows: Vec<Vec<Complex64>> = points
            .par_iter()
            .map(|p| {
                centers
                    .iter()
                    .map(|c| green2d([p[0] - c[0], p[1] - c[1]], medium).map(|g| g * area))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let entries: Vec<Complex64> = rows.into_iter().flatten().collect();
        check_finite(&entries, "sensor operator")?;
        Ok(Self {
            grid: grid.clone(),
            receivers: points.to_vec(),
            entries,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn rows(&self) -> usize {
        self.receivers.len()
    }

    pub fn cols(&self) -> usize {
        self.grid.len()
    }

    pub fn receivers(&self) -> &[[f64; 2]] {
        &self.receivers
    }

    pub fn entry(&self, m: usize, i: usize) -> Complex64 {
        self.entries[m * self.cols() + i]
    }

    /// `S v`, one value per receiver.
    pub fn apply(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        let cols = self.cols();
        if v.len() != cols {
            return Err(Error::Validation(format!(
                "S expects {cols} pixel values, got {}",
                v.len()
            )));
        }
        Ok(self
            .entries
            .par_chunks(cols)
            .map(|row| row.iter().zip(v).map(|(s, x)| s * x).sum())
            .collect())
    }

    /// `S^H y`, one value per pixel.
    pub fn apply_adjoint(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        let rows = self.rows();
        let cols = self.cols();
        if y.len() != rows {
            return Err(Error::Validation(format!(
                "S^H expects {rows} receiver values, got {}",
                y.len()
            )));
        }
        const CHUNK: usize = 256;
        let mut out = vec![Complex64::new(0.0, 0.0); cols];
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
            let start = c * CHUNK;
            for (m, ym) in y.iter().enumerate() {
                let row = &self.entries[m * cols + start..m * cols + start + chunk.len()];
                for (o, s) in chunk.iter_mut().zip(row) {
                    *o += s.conj() * ym;
                }
            }
        });
        Ok(out)
    }

    pub fn apply_field(&self, v: &ComplexField) -> Result<Vec<Complex64>> {
        self.apply(v.values())
    }

    pub fn apply_adjoint_field(&self, y: &[Complex64]) -> Result<ComplexField> {
        ComplexField::new(self.grid.n(), self.apply_adjoint(y)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{dot, relative_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn medium() -> Medium {
        Medium::new(1.0, 0.0084).unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<Complex64> {
        (0..len)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn green_values() {
        let m = medium();
        let g = green2d([1.0 / m.k_b, 0.0], &m).unwrap();
        assert!((g.re - -0.022_064_241_1).abs() < 1e-8);
        assert!((g.im - 0.191_299_421_7).abs() < 1e-8);

        let r = [0.0123, -0.0456];
        let a = green2d(r, &m).unwrap();
        let b = green2d([-r[0], -r[1]], &m).unwrap();
        assert_eq!(a, b);

        let far = green2d([100.0 / m.k_b, 0.0], &m).unwrap();
        let asym = 0.25 * (2.0 / (100.0 * PI)).sqrt();
        assert!((far.norm() - asym).abs() < 0.01 * asym);

        assert!(matches!(green2d([0.0, 0.0], &m), Err(Error::Singularity(_))));
    }

    /// Polar integration with a numeric radial rule (substitution r = R t^2
    /// tames the logarithm), independent of the closed-form antiderivative.
    fn self_term_by_brute_force(h: f64, m: &Medium) -> Complex64 {
        let half = 0.5 * h;
        let gl = |f: &dyn Fn(f64) -> Complex64, a: f64, b: f64, panels: usize| {
            // composite 2-point Gauss-Legendre
            let w = (b - a) / panels as f64;
            let off = 0.5 / 3f64.sqrt();
            (0..panels)
                .map(|p| {
                    let c = a + (p as f64 + 0.5) * w;
                    (f(c - off * w) + f(c + off * w)) * (0.5 * w)
                })
                .sum::<Complex64>()
        };
        let angular = |theta: f64| {
            let big_r = half / theta.cos();
            let radial = |t: f64| {
                let r = big_r * t * t;
                green2d([r, 0.0], m).unwrap() * r * 2.0 * big_r * t
            };
            gl(&radial, 0.0, 1.0, 400)
        };
        gl(&angular, 0.0, FRAC_PI_4, 200) * 8.0
    }

    #[test]
    fn self_term_matches_brute_force() {
        let m = medium();
        for h in [0.18 / 128.0, 0.045 / 32.0, 0.0021] {
            let fast = pixel_self_term(h, &m).unwrap();
            let slow = self_term_by_brute_force(h, &m);
            assert!(fast.re.is_finite() && fast.im.is_finite() && fast.norm() > 0.0);
            assert!((fast - slow).norm() < 1e-8 * h * h + 1e-7 * fast.norm(), "{fast} vs {slow}");
        }
    }

    #[test]
    fn self_term_close_to_equal_area_disk() {
        // Disk of equal area: (i/4)[2 pi a H1(k a)/k + 4i/k^2]
        let m = medium();
        let h = 0.0014;
        let a = h / PI.sqrt();
        let k = m.k_b;
        let disk = I_OVER_4
            * (hankel1(1, k * a).unwrap() * (2.0 * PI * a / k) + Complex64::new(0.0, 4.0 / (k * k)));
        let sq = pixel_self_term(h, &m).unwrap();
        assert!((sq - disk).norm() < 0.01 * disk.norm());
    }

    #[test]
    fn sampling_guard() {
        let m = medium();
        assert_eq!(check_sampling(&Grid::new(128, 0.18).unwrap(), &m).unwrap(), Sampling::Fine);
        assert_eq!(check_sampling(&Grid::new(64, 0.18).unwrap(), &m).unwrap(), Sampling::Marginal);
        assert!(matches!(
            DomainOperator::build(&Grid::new(32, 0.18).unwrap(), &m),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn kernel_symmetries() {
        let m = medium();
        let op = DomainOperator::build(&Grid::new(12, 0.0168).unwrap(), &m).unwrap();
        assert_eq!(op.kernel_value(0, 0), op.self_term());
        assert_eq!(op.kernel_value(1, 0), op.kernel_value(0, 1));
        for dx in -11..12isize {
            for dy in -11..12isize {
                assert_eq!(op.kernel_value(dx, dy), op.kernel_value(dy, dx));
                assert_eq!(op.kernel_value(dx, dy), op.kernel_value(-dx, dy));
            }
        }
        // radial: (3,4) and (5,0) share |lag| = 5
        let a = op.kernel_value(3, 4);
        let b = op.kernel_value(5, 0);
        assert!((a - b).norm() <= 1e-12 * b.norm());

        let k = op.circulant_kernel();
        assert_eq!(k[0], op.self_term());
    }

    #[test]
    fn fft_apply_matches_dense() {
        let m = medium();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let op = DomainOperator::build(&Grid::new(16, 0.0225).unwrap(), &m).unwrap();
        let dense = op.dense_matrix();
        let len = 256;
        for _ in 0..10 {
            let v = random_vec(&mut rng, len);
            let fast = op.apply(&v).unwrap();
            let slow: Vec<Complex64> = (0..len)
                .map(|i| (0..len).map(|j| dense[i * len + j] * v[j]).sum())
                .collect();
            assert!(relative_error(&fast, &slow) <= 1e-10);
        }
        // impulse reproduces a column
        let mut e = vec![Complex64::new(0.0, 0.0); len];
        e[37] = Complex64::new(1.0, 0.0);
        let col = op.apply(&e).unwrap();
        let expected: Vec<Complex64> = (0..len).map(|i| dense[i * len + 37]).collect();
        assert!(relative_error(&col, &expected) <= 1e-10);

        assert!(op.apply(&vec![Complex64::new(0.0, 0.0); len]).unwrap().iter().all(|z| z.norm() == 0.0));
        assert!(matches!(op.apply(&e[..10]), Err(Error::Validation(_))));
    }

    #[test]
    fn dense_g_is_complex_symmetric() {
        let op = DomainOperator::build(&Grid::new(8, 0.0112).unwrap(), &medium()).unwrap();
        let g = op.dense_matrix();
        for i in 0..64 {
            for j in 0..64 {
                assert!((g[i * 64 + j] - g[j * 64 + i]).norm() <= 1e-12 * g[i * 64 + j].norm());
            }
        }
    }

    #[test]
    fn g_adjoint_identity() {
        let op = DomainOperator::build(&Grid::new(10, 0.014).unwrap(), &medium()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = random_vec(&mut rng, 100);
        let w = random_vec(&mut rng, 100);
        let lhs = dot(&op.apply(&v).unwrap(), &w);
        let rhs = dot(&v, &op.apply_adjoint(&w).unwrap());
        assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1e-30) * 100.0);
    }

    #[test]
    fn sensor_single_pixel_single_receiver() {
        let m = medium();
        let grid = Grid::new(2, 0.002).unwrap();
        let s = SensorOperator::from_points(&grid, &m, &[[1.0, 0.5]]).unwrap();
        let mut v = vec![Complex64::new(0.0, 0.0); 4];
        v[3] = Complex64::new(2.0, -1.0);
        let y = s.apply(&v).unwrap();
        let c = grid.center(3);
        let expected = green2d([1.0 - c[0], 0.5 - c[1]], &m).unwrap() * grid.pixel_area() * v[3];
        assert!((y[0] - expected).norm() <= 1e-15 * expected.norm());
        assert!(s.apply(&[Complex64::new(0.0, 0.0); 4]).unwrap()[0].norm() == 0.0);
        assert!(s.apply(&v[..3]).is_err());
        assert!(s.apply_adjoint(&[Complex64::new(1.0, 0.0); 2]).is_err());
    }
}
