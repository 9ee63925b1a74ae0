//! Independent reference solutions: the analytic series for a homogeneous
//! circular cylinder under plane-wave incidence, and dense direct solves of
//! the discrete system on small grids.

use crate::error::{Error, Result};
use crate::field::{norm, relative_error, ComplexField};
use crate::forward::{simulate_transmissions_unchecked, ForwardModel, SolverSettings};
use crate::greens::DomainOperator;
use crate::scene::{
    potential_cylinder, GridConfig, Medium, MediumConfig, Potential, ReceiversConfig, SceneConfig, SourceMode,
    SourcesConfig, RECEIVER_COUNT, RING_RADIUS_M, WAVELENGTH_M,
};
use serde::{Deserialize, Serialize};
use crate::specfun::{bessel_j_orders, bessel_y_orders};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Largest grid side accepted by the dense solver.
pub const DENSE_MAX_N: usize = 32;

const COEFFICIENT_FLOOR: f64 = 1e-12;

/// Exterior expansion coefficients of a dielectric disk centered at the
/// origin. With incidence `exp(i k_b r cos(phi - phi_inc))` the scattered
/// field is `sum_n i^n a_n H_n(k_b rho) exp(i n (phi - phi_inc))`, and
/// `a_{-n} = a_n`.
#[derive(Clone, Debug)]
pub struct MieSolution {
    pub radius_m: f64,
    pub eps_c: f64,
    pub medium: Medium,
    pub n_max: u32,
    /// `a_0 ..= a_{n_max}`.
    pub coefficients: Vec<Complex64>,
}

impl MieSolution {
    /// Truncates at `ceil(k_b a) + 15`, extended until `|a_{n_max}|` falls
    /// below 1e-12.
    pub fn new(radius_m: f64, eps_c: f64, medium: &Medium) -> Result<Self> {
        if !(radius_m > 0.0) || !radius_m.is_finite() {
            return Err(Error::Domain(format!("cylinder radius must be positive, got {radius_m}")));
        }
        if !(eps_c > 0.0) || !eps_c.is_finite() {
            return Err(Error::Domain(format!("cylinder permittivity must be positive, got {eps_c}")));
        }
        let mut n_max = (medium.k_b * radius_m).ceil() as u32 + 15;
        loop {
            let coefficients = Self::coefficients(radius_m, eps_c, medium, n_max)?;
            if coefficients[n_max as usize].norm() < COEFFICIENT_FLOOR {
                return Ok(Self {
                    radius_m,
                    eps_c,
                    medium: medium.clone(),
                    n_max,
                    coefficients,
                });
            }
            n_max += 5;
        }
    }

    /// Solves the 2x2 interface system per order: continuity of the field
    ///   `J_n(k_b a) + a_n H_n(k_b a) = c_n J_n(k_c a)`
    /// and of its radial derivative
    ///   `k_b J_n'(k_b a) + a_n k_b H_n'(k_b a) = c_n k_c J_n'(k_c a)`.
    fn coefficients(radius_m: f64, eps_c: f64, medium: &Medium, n_max: u32) -> Result<Vec<Complex64>> {
        let len = n_max as usize + 1;
        if eps_c == medium.eps_b {
            return Ok(vec![Complex64::new(0.0, 0.0); len]);
        }
        let k_b = medium.k_b;
        let k_c = medium.k * eps_c.sqrt();
        let xb = k_b * radius_m;
        let xc = k_c * radius_m;
        let jb = bessel_j_orders(n_max + 1, xb)?;
        let yb = bessel_y_orders(n_max + 1, xb)?;
        let jc = bessel_j_orders(n_max + 1, xc)?;
        let derivative = |c: &[f64], n: usize| {
            if n == 0 {
                -c[1]
            } else {
                0.5 * (c[n - 1] - c[n + 1])
            }
        };
        Ok((0..len)
            .map(|n| {
                let hb = Complex64::new(jb[n], yb[n]);
                let hb_d = Complex64::new(derivative(&jb, n), derivative(&yb, n));
                let jb_d = derivative(&jb, n);
                let jc_d = derivative(&jc, n);
                let numerator = k_c * (jc_d * jb[n]) - k_b * (jc[n] * jb_d);
                let denominator = hb_d * (k_b * jc[n]) - hb * (k_c * jc_d);
                numerator / denominator
            })
            .collect())
    }

    /// Coefficient of signed order `n`.
    pub fn coefficient(&self, n: i64) -> Complex64 {
        self.coefficients[n.unsigned_abs() as usize]
    }

    /// Scattered field at `points`, all outside the cylinder, for a plane wave
    /// travelling along angle `incidence_angle`.
    pub fn scattered_field(&self, points: &[[f64; 2]], incidence_angle: f64) -> Result<Vec<Complex64>> {
        self.scattered_field_truncated(points, incidence_angle, self.n_max)
    }

    fn scattered_field_truncated(&self, points: &[[f64; 2]], incidence_angle: f64, n_max: u32) -> Result<Vec<Complex64>> {
        points
            .iter()
            .map(|p| {
                let rho = (p[0] * p[0] + p[1] * p[1]).sqrt();
                if rho <= self.radius_m {
                    return Err(Error::Domain(format!(
                        "point at radius {rho} m lies inside the {} m cylinder",
                        self.radius_m
                    )));
                }
                let phi = p[1].atan2(p[0]) - incidence_angle;
                let x = self.medium.k_b * rho;
                let j = bessel_j_orders(n_max, x)?;
                let y = bessel_y_orders(n_max, x)?;
                let mut sum = self.coefficients[0] * Complex64::new(j[0], y[0]);
                let mut i_pow = Complex64::new(1.0, 0.0);
                for n in 1..=n_max as usize {
                    i_pow *= Complex64::new(0.0, 1.0);
                    let h = Complex64::new(j[n], y[n]);
                    sum += i_pow * self.coefficients[n] * h * (2.0 * (n as f64 * phi).cos());
                }
                Ok(sum)
            })
            .collect()
    }

    /// Far-field amplitude `f(theta) = sum_n a_n exp(i n theta)`, with the
    /// scattered field `~ f(theta) sqrt(2 / (pi k rho)) exp(i (k rho - pi/4))`.
    pub fn far_field_amplitude(&self, theta: f64) -> Complex64 {
        self.coefficients[0]
            + self.coefficients[1..]
                .iter()
                .enumerate()
                .map(|(i, a)| a * (2.0 * ((i + 1) as f64 * theta).cos()))
                .sum::<Complex64>()
    }

    /// Extinction width from the forward amplitude, `-(4/k) Re f(0)`.
    pub fn extinction_width(&self) -> f64 {
        -4.0 / self.medium.k_b * self.far_field_amplitude(0.0).re
    }

    /// Scattering width by trapezoidal integration of `|f|^2` over `samples`
    /// angles, `(2 / (pi k)) int |f|^2 dtheta`.
    pub fn scattering_width(&self, samples: usize) -> f64 {
        let step = 2.0 * PI / samples as f64;
        let integral: f64 = (0..samples)
            .map(|s| self.far_field_amplitude(s as f64 * step).norm_sqr())
            .sum::<f64>()
            * step;
        2.0 / (PI * self.medium.k_b) * integral
    }
}

/// Convenience wrapper matching the operation signature used by callers.
pub fn mie_scattered_field(sol: &MieSolution, points: &[[f64; 2]], incidence_angle: f64) -> Result<Vec<Complex64>> {
    sol.scattered_field(points, incidence_angle)
}

/// In-place LU factorization with partial pivoting of a row-major `n x n`
/// matrix. Returns the pivot permutation.
fn lu_factor(a: &mut [Complex64], n: usize) -> Result<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].norm().total_cmp(&a[j * n + col].norm()))
            .expect("non-empty range");
        if a[pivot * n + col].norm() == 0.0 {
            return Err(Error::Numerical("singular matrix in dense LU".into()));
        }
        if pivot != col {
            for c in 0..n {
                a.swap(pivot * n + c, col * n + c);
            }
            perm.swap(pivot, col);
        }
        let diag = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / diag;
            a[row * n + col] = factor;
            if factor.norm() != 0.0 {
                for c in col + 1..n {
                    let upper = a[col * n + c];
                    a[row * n + c] -= factor * upper;
                }
            }
        }
    }
    Ok(perm)
}

fn lu_solve(lu: &[Complex64], perm: &[usize], n: usize, b: &[Complex64]) -> Vec<Complex64> {
    let mut x: Vec<Complex64> = perm.iter().map(|&p| b[p]).collect();
    for row in 0..n {
        let mut acc = x[row];
        for c in 0..row {
            acc -= lu[row * n + c] * x[c];
        }
        x[row] = acc;
    }
    for row in (0..n).rev() {
        let mut acc = x[row];
        for c in row + 1..n {
            acc -= lu[row * n + c] * x[c];
        }
        x[row] = acc / lu[row * n + row];
    }
    x
}

/// Dense solve of `A x = b` for a row-major square matrix.
pub fn dense_solve(mut a: Vec<Complex64>, b: &[Complex64]) -> Result<Vec<Complex64>> {
    let n = b.len();
    if a.len() != n * n {
        return Err(Error::Validation(format!("matrix has {} entries, expected {}", a.len(), n * n)));
    }
    let perm = lu_factor(&mut a, n)?;
    Ok(lu_solve(&a, &perm, n, b))
}

/// Dense `I - G diag(x)`, assembled from the operator's kernel values.
pub fn dense_system(x: &Potential, g: &DomainOperator) -> Result<Vec<Complex64>> {
    let n = g.grid().n();
    if n > DENSE_MAX_N {
        return Err(Error::Size(format!(
            "dense solve limited to n <= {DENSE_MAX_N}, got {n}"
        )));
    }
    if x.values.len() != n * n {
        return Err(Error::Validation("potential does not match the operator grid".into()));
    }
    let len = n * n;
    let mut a = g.dense_matrix();
    for i in 0..len {
        for j in 0..len {
            a[i * len + j] *= -x.values[j];
        }
        a[i * len + i] += 1.0;
    }
    Ok(a)
}

/// Total field by direct LU factorization of `I - G diag(x)`.
pub fn dense_total_field(x: &Potential, u_in: &ComplexField, g: &DomainOperator) -> Result<ComplexField> {
    let a = dense_system(x, g)?;
    if u_in.len() != x.values.len() {
        return Err(Error::Validation("incident field does not match the grid".into()));
    }
    ComplexField::new(u_in.n(), dense_solve(a, u_in.values())?)
}

/// Cylinder test case comparing the discrete solver against the series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderPreset {
    pub size_m: f64,
    pub radius_m: f64,
    pub eps_c: f64,
    pub eps_b: f64,
    pub lambda_m: f64,
    pub receivers: usize,
    pub receiver_radius_m: f64,
}

impl Default for CylinderPreset {
    fn default() -> Self {
        Self {
            size_m: CYLINDER_DOMAIN_M,
            radius_m: 0.03,
            eps_c: 1.02,
            eps_b: 1.0,
            lambda_m: WAVELENGTH_M,
            receivers: RECEIVER_COUNT,
            receiver_radius_m: RING_RADIUS_M,
        }
    }
}

/// Side of the square domain used by the default cylinder case.
pub const CYLINDER_DOMAIN_M: f64 = 0.072;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderResult {
    pub n: usize,
    /// Relative l2 error of the scattered field at the receivers; `None` when
    /// both fields vanish.
    pub error: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl CylinderPreset {
    /// Scene with one plane wave arriving from angle 0 (travelling along -x).
    pub fn scene(&self, n: usize) -> SceneConfig {
        SceneConfig {
            grid: GridConfig { n, size_m: self.size_m },
            medium: MediumConfig {
                eps_b: self.eps_b,
                lambda_m: self.lambda_m,
            },
            sources: SourcesConfig {
                count: 1,
                radius_m: self.receiver_radius_m,
                mode: SourceMode::PlaneWave,
            },
            receivers: ReceiversConfig {
                count: self.receivers,
                radius_m: self.receiver_radius_m,
            },
        }
    }

    /// Solves on an `n x n` grid and compares with the series at the receivers.
    pub fn run(&self, n: usize, settings: &SolverSettings) -> Result<CylinderResult> {
        let scene = self.scene(n).build()?;
        let model = ForwardModel::new(&scene)?;
        let x = potential_cylinder(&scene.grid, &scene.medium, self.radius_m, self.eps_c)?;
        let sim = simulate_transmissions_unchecked(&model, &x, settings)?;
        let report = &sim.reports[0];
        let mie = MieSolution::new(self.radius_m, self.eps_c, &scene.medium)?;
        let source = scene.sources.positions[0];
        let incidence = (-source[1]).atan2(-source[0]);
        let exact = mie.scattered_field(&scene.receivers.positions, incidence)?;
        let reference = norm(&exact);
        let error = if reference == 0.0 && norm(sim.measurements.row(0)) == 0.0 {
            None
        } else {
            Some(relative_error(sim.measurements.row(0), &exact))
        };
        Ok(CylinderResult {
            n,
            error,
            iterations: report.iterations,
            converged: report.converged,
        })
    }
}
