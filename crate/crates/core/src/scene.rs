//! Physical configuration: pixel grid, background medium, transmitter and
//! receiver rings, and construction of scattering potentials.

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::specfun::hankel1;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;

/// Square pixel lattice centered on the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    n: usize,
    size_m: f64,
    pixel_m: f64,
}

impl Grid {
    pub fn new(n: usize, size_m: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("grid needs n >= 2, got {n}")));
        }
        if !(size_m > 0.0) || !size_m.is_finite() {
            return Err(Error::Config(format!("grid size must be positive, got {size_m}")));
        }
        Ok(Self {
            n,
            size_m,
            pixel_m: size_m / n as f64,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of pixels, `n^2`.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn size_m(&self) -> f64 {
        self.size_m
    }

    pub fn pixel_m(&self) -> f64 {
        self.pixel_m
    }

    pub fn pixel_area(&self) -> f64 {
        self.pixel_m * self.pixel_m
    }

    /// Pixel-center coordinate along one axis. `(2j - n + 1) h / 2` is exactly
    /// antisymmetric under `j -> n - 1 - j`.
    pub fn coord(&self, j: usize) -> f64 {
        (2.0 * j as f64 - self.n as f64 + 1.0) * 0.5 * self.pixel_m
    }

    /// Center of pixel `i` (row-major) as `[x, y]` in meters.
    pub fn center(&self, i: usize) -> [f64; 2] {
        [self.coord(i % self.n), self.coord(i / self.n)]
    }

    pub fn centers(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|i| self.center(i)).collect()
    }

    /// True when `p` lies strictly outside the `[-size/2, size/2]^2` box.
    pub fn is_outside(&self, p: [f64; 2]) -> bool {
        p[0].abs().max(p[1].abs()) > 0.5 * self.size_m
    }
}

/// Homogeneous background medium and illumination wavelength.
#[derive(Clone, Debug, PartialEq)]
pub struct Medium {
    pub eps_b: f64,
    pub lambda_m: f64,
    /// Free-space wavenumber `2 pi / lambda`.
    pub k: f64,
    /// Background wavenumber `k sqrt(eps_b)`.
    pub k_b: f64,
}

impl Medium {
    pub fn new(eps_b: f64, lambda_m: f64) -> Result<Self> {
        if !(eps_b > 0.0) || !eps_b.is_finite() {
            return Err(Error::Config(format!("eps_b must be positive, got {eps_b}")));
        }
        if !(lambda_m > 0.0) || !lambda_m.is_finite() {
            return Err(Error::Config(format!("wavelength must be positive, got {lambda_m}")));
        }
        let k = 2.0 * PI / lambda_m;
        Ok(Self {
            eps_b,
            lambda_m,
            k,
            k_b: k * eps_b.sqrt(),
        })
    }

    /// Wavelength inside the background medium.
    pub fn background_wavelength(&self) -> f64 {
        self.lambda_m / self.eps_b.sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceMode {
    /// Unit-amplitude line source `(i/4) H0(k_b |r - r_s|)`.
    PointSource,
    /// `exp(i k_b d . r)` travelling from the source position toward the origin.
    PlaneWave,
}

/// `count` points uniformly on a circle, starting at angle 0, counter-clockwise.
pub fn ring_positions(count: usize, radius_m: f64) -> Vec<[f64; 2]> {
    (0..count)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / count as f64;
            [radius_m * theta.cos(), radius_m * theta.sin()]
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceRing {
    pub count: usize,
    pub radius_m: f64,
    pub mode: SourceMode,
    pub positions: Vec<[f64; 2]>,
}

impl SourceRing {
    pub fn new(count: usize, radius_m: f64, mode: SourceMode, grid: &Grid) -> Result<Self> {
        let positions = checked_ring(count, radius_m, grid, "source")?;
        Ok(Self {
            count,
            radius_m,
            mode,
            positions,
        })
    }

    /// Incident field of every transmitter, in ring order.
    pub fn incident_fields(&self, grid: &Grid, medium: &Medium) -> Result<Vec<ComplexField>> {
        self.positions
            .iter()
            .map(|&p| incident_field(p, self.mode, grid, medium))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReceiverRing {
    pub count: usize,
    pub radius_m: f64,
    pub positions: Vec<[f64; 2]>,
}

impl ReceiverRing {
    pub fn new(count: usize, radius_m: f64, grid: &Grid) -> Result<Self> {
        let positions = checked_ring(count, radius_m, grid, "receiver")?;
        Ok(Self {
            count,
            radius_m,
            positions,
        })
    }
}

fn checked_ring(count: usize, radius_m: f64, grid: &Grid, what: &str) -> Result<Vec<[f64; 2]>> {
    if count == 0 {
        return Err(Error::Config(format!("{what} ring needs at least one element")));
    }
    if !(radius_m > 0.0) || !radius_m.is_finite() {
        return Err(Error::Config(format!("{what} radius must be positive, got {radius_m}")));
    }
    let positions = ring_positions(count, radius_m);
    if let Some(p) = positions.iter().find(|p| !grid.is_outside(**p)) {
        return Err(Error::Config(format!(
            "{what} at ({:.4}, {:.4}) m is not outside the {} m imaging domain",
            p[0], p[1], grid.size_m
        )));
    }
    Ok(positions)
}

/// Real scattering potential `x = k^2 (eps - eps_b)` sampled on a grid (1/m^2).
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    pub grid: Grid,
    pub values: Vec<f64>,
    /// Permittivity contrast `(eps_max - eps_b) / eps_b`.
    pub f_max: f64,
}

impl Potential {
    pub fn zero(grid: &Grid) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
            f_max: 0.0,
        }
    }

    /// Wraps raw potential values, recovering the contrast from their maximum.
    pub fn from_values(grid: &Grid, values: Vec<f64>, medium: &Medium) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Validation(format!(
                "potential has {} values, grid has {} pixels",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Validation(
                "potential values must be finite and non-negative".into(),
            ));
        }
        let max = values.iter().cloned().fold(0.0, f64::max);
        Ok(Self {
            grid: grid.clone(),
            values,
            f_max: max / (medium.k * medium.k * medium.eps_b),
        })
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }
}

/// Maps a normalized image in `[0, 1]` to a potential whose permittivity is
/// `eps_b (1 + f_max img)`.
pub fn potential_from_image(img: &[f64], grid: &Grid, f_max: f64, medium: &Medium) -> Result<Potential> {
    if img.len() != grid.len() {
        return Err(Error::Validation(format!(
            "image has {} pixels, grid has {}",
            img.len(),
            grid.len()
        )));
    }
    if !(f_max > 0.0) || !f_max.is_finite() {
        return Err(Error::Validation(format!("f_max must be positive, got {f_max}")));
    }
    if let Some(bad) = img.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
        return Err(Error::Validation(format!("image value {bad} outside [0, 1]")));
    }
    let scale = medium.k * medium.k * medium.eps_b * f_max;
    Ok(Potential {
        grid: grid.clone(),
        values: img.iter().map(|v| scale * v).collect(),
        f_max,
    })
}

/// Homogeneous disk of permittivity `eps_c` centered on the origin,
/// rasterized by pixel-center membership.
pub fn potential_cylinder(grid: &Grid, medium: &Medium, radius_m: f64, eps_c: f64) -> Result<Potential> {
    if !(radius_m > 0.0) || radius_m >= 0.5 * grid.size_m() {
        return Err(Error::Validation(format!(
            "cylinder radius {radius_m} m must be in (0, {}) m",
            0.5 * grid.size_m()
        )));
    }
    if !(eps_c >= medium.eps_b) || !eps_c.is_finite() {
        return Err(Error::Validation(format!(
            "cylinder permittivity {eps_c} below background {}",
            medium.eps_b
        )));
    }
    let inside = medium.k * medium.k * (eps_c - medium.eps_b);
    let r2 = radius_m * radius_m;
    let values = grid
        .centers()
        .into_iter()
        .map(|[x, y]| if x * x + y * y <= r2 { inside } else { 0.0 })
        .collect();
    Ok(Potential {
        grid: grid.clone(),
        values,
        f_max: (eps_c - medium.eps_b) / medium.eps_b,
    })
}

/// Incident field of one transmitter at every pixel center.
pub fn incident_field(source: [f64; 2], mode: SourceMode, grid: &Grid, medium: &Medium) -> Result<ComplexField> {
    let centers = grid.centers();
    let values = match mode {
        SourceMode::PointSource => centers
            .iter()
            .map(|c| {
                let dx = c[0] - source[0];
                let dy = c[1] - source[1];
                let d = (dx * dx + dy * dy).sqrt();
                if d == 0.0 {
                    return Err(Error::Singularity(
                        "point source coincides with a pixel center".into(),
                    ));
                }
                Ok(Complex64::new(0.0, 0.25) * hankel1(0, medium.k_b * d)?)
            })
            .collect::<Result<Vec<_>>>()?,
        SourceMode::PlaneWave => {
            let r = (source[0] * source[0] + source[1] * source[1]).sqrt();
            if r == 0.0 {
                return Err(Error::Singularity("plane-wave source at the origin has no direction".into()));
            }
            let d = [-source[0] / r, -source[1] / r];
            centers
                .iter()
                .map(|c| Complex64::from_polar(1.0, medium.k_b * (d[0] * c[0] + d[1] * c[1])))
                .collect()
        }
    };
    ComplexField::new(grid.n(), values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub size_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumConfig {
    pub eps_b: f64,
    pub lambda_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcesConfig {
    pub count: usize,
    pub radius_m: f64,
    pub mode: SourceMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiversConfig {
    pub count: usize,
    pub radius_m: f64,
}

/// JSON scene description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub grid: GridConfig,
    pub medium: MediumConfig,
    pub sources: SourcesConfig,
    pub receivers: ReceiversConfig,
}

pub const RING_RADIUS_M: f64 = 1.6;
pub const RECEIVER_COUNT: usize = 360;
pub const WAVELENGTH_M: f64 = 0.0084;

impl SceneConfig {
    /// Full-size geometry: 128 x 128 pixels over 18 cm, 0.84 cm wavelength in
    /// air, transmitters and 360 receivers on a 1.6 m ring.
    pub fn full(transmissions: usize) -> Self {
        Self::with_grid(128, 0.18, transmissions)
    }

    /// Desk-scale geometry: same wavelength and pixel pitch, 32 x 32 pixels
    /// over 4.5 cm.
    pub fn desk(transmissions: usize) -> Self {
        Self::with_grid(32, 0.045, transmissions)
    }

    fn with_grid(n: usize, size_m: f64, transmissions: usize) -> Self {
        Self {
            grid: GridConfig { n, size_m },
            medium: MediumConfig {
                eps_b: 1.0,
                lambda_m: WAVELENGTH_M,
            },
            sources: SourcesConfig {
                count: transmissions,
                radius_m: RING_RADIUS_M,
                mode: SourceMode::PointSource,
            },
            receivers: ReceiversConfig {
                count: RECEIVER_COUNT,
                radius_m: RING_RADIUS_M,
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("scene config: {e}")))
    }

    pub fn build(&self) -> Result<Scene> {
        let grid = Grid::new(self.grid.n, self.grid.size_m)?;
        let medium = Medium::new(self.medium.eps_b, self.medium.lambda_m)?;
        let sources = SourceRing::new(self.sources.count, self.sources.radius_m, self.sources.mode, &grid)?;
        let receivers = ReceiverRing::new(self.receivers.count, self.receivers.radius_m, &grid)?;
        Ok(Scene {
            config: self.clone(),
            grid,
            medium,
            sources,
            receivers,
        })
    }

    /// SHA-256 of the canonical JSON serialization, hex encoded.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("scene config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Validated scene.
#[derive(Clone, Debug)]
pub struct Scene {
    pub config: SceneConfig,
    pub grid: Grid,
    pub medium: Medium,
    pub sources: SourceRing,
    pub receivers: ReceiverRing,
}

impl Scene {
    pub fn hash(&self) -> String {
        self.config.hash()
    }

    pub fn incident_fields(&self) -> Result<Vec<ComplexField>> {
        self.sources.incident_fields(&self.grid, &self.medium)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_medium() -> Medium {
        Medium::new(1.0, 0.0084).unwrap()
    }

    #[test]
    fn grid_is_symmetric() {
        for n in [2, 3, 16, 33, 128] {
            let g = Grid::new(n, 0.18).unwrap();
            let (sx, sy) = g
                .centers()
                .iter()
                .fold((0.0, 0.0), |(a, b), c| (a + c[0], b + c[1]));
            assert!(sx.abs() < 1e-12 && sy.abs() < 1e-12);
            for j in 0..n {
                assert_eq!(g.coord(j), -g.coord(n - 1 - j));
            }
        }
        let g = Grid::new(128, 0.18).unwrap();
        assert_eq!(g.pixel_m() * 128.0, 0.18);
        assert!(Grid::new(1, 0.1).is_err());
        assert!(Grid::new(4, 0.0).is_err());
    }

    #[test]
    fn medium_wavenumbers() {
        let m = Medium::new(2.25, 0.01).unwrap();
        assert_eq!(m.k, 2.0 * PI / 0.01);
        assert_eq!(m.k_b, m.k * 1.5);
        assert!(Medium::new(0.0, 0.01).is_err());
    }

    #[test]
    fn image_to_potential() {
        let grid = Grid::new(4, 0.01).unwrap();
        let m = full_medium();
        let zero = potential_from_image(&[0.0; 16], &grid, 1e-2, &m).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));

        let mut img = vec![0.25; 16];
        img[5] = 1.0;
        let p = potential_from_image(&img, &grid, 1e-2, &m).unwrap();
        let max = p.values.iter().cloned().fold(0.0, f64::max);
        let expected = (2.0 * PI / 0.0084f64).powi(2) * 1e-2;
        assert!((max - expected).abs() <= 4.0 * f64::EPSILON * expected);
        assert!((max - 5.595_01e3).abs() < 0.1);

        let half: Vec<f64> = img.iter().map(|v| 0.5 * v).collect();
        let q = potential_from_image(&half, &grid, 1e-2, &m).unwrap();
        for (a, b) in p.values.iter().zip(&q.values) {
            assert!((0.5 * a - b).abs() <= 1e-12 * a.abs());
        }

        img[0] = 1.5;
        assert!(matches!(
            potential_from_image(&img, &grid, 1e-2, &m),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn cylinder_raster() {
        let m = full_medium();
        let grid = Grid::new(64, 0.18).unwrap();
        let none = potential_cylinder(&grid, &m, 0.03, 1.0).unwrap();
        assert!(none.is_zero());
        assert!(potential_cylinder(&grid, &m, 0.18, 1.1).is_err());
        assert!(potential_cylinder(&grid, &m, 0.03, 0.9).is_err());

        let c = potential_cylinder(&grid, &m, 0.03, 1.02).unwrap();
        let count = c.values.iter().filter(|v| **v > 0.0).count();
        // exact enumeration of centers with x^2 + y^2 <= r^2
        let h = 0.18 / 64.0;
        let mut brute = 0;
        for row in 0..64 {
            for col in 0..64 {
                let x = (col as f64 + 0.5) * h - 0.09;
                let y = (row as f64 + 0.5) * h - 0.09;
                if x * x + y * y <= 0.03 * 0.03 {
                    brute += 1;
                }
            }
        }
        assert_eq!(count, brute);
        assert!((count as f64 - 357.0).abs() <= 40.0);
        assert!((c.f_max - 0.02).abs() < 1e-15);
    }

    #[test]
    fn incident_fields() {
        let m = full_medium();
        let grid = Grid::new(2, 0.01).unwrap();
        let pw = incident_field([1.6, 0.0], SourceMode::PlaneWave, &grid, &m).unwrap();
        assert!(pw.values().iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));

        let odd = Grid::new(3, 0.01).unwrap();
        let pw = incident_field([0.0, 1.6], SourceMode::PlaneWave, &odd, &m).unwrap();
        assert_eq!(pw.values()[4], Complex64::new(1.0, 0.0));

        // source placed so the pixel (3,3)-center of a 3x3 grid sits at k_b d = 1
        let d = 1.0 / m.k_b;
        let ps = incident_field([d, 0.0], SourceMode::PointSource, &odd, &m).unwrap();
        let z = ps.values()[4];
        assert!((z.re - -0.022_064_241_1).abs() < 1e-8);
        assert!((z.im - 0.191_299_421_7).abs() < 1e-8);

        let hit = incident_field([0.0, 0.0], SourceMode::PointSource, &odd, &m);
        assert!(matches!(hit, Err(Error::Singularity(_))));
    }

    #[test]
    fn rings_must_clear_the_domain() {
        let grid = Grid::new(16, 0.18).unwrap();
        assert!(SourceRing::new(8, 0.1, SourceMode::PointSource, &grid).is_err());
        assert!(ReceiverRing::new(0, 1.6, &grid).is_err());
        let r = ReceiverRing::new(360, 1.6, &grid).unwrap();
        assert_eq!(r.positions.len(), 360);
        assert_eq!(r.positions[0], [1.6, 0.0]);
    }

    #[test]
    fn plane_waves_rotate_with_the_ring() {
        // 4-fold ring on a grid that is symmetric under 90 degree rotation
        let m = full_medium();
        let grid = Grid::new(8, 0.02).unwrap();
        let ring = SourceRing::new(4, 1.6, SourceMode::PlaneWave, &grid).unwrap();
        let fields = ring.incident_fields(&grid, &m).unwrap();
        let n = grid.n();
        for k in 0..4 {
            let next = &fields[(k + 1) % 4];
            for row in 0..n {
                for col in 0..n {
                    // rotating (x, y) by +90 degrees maps (col, row) to (n-1-row, col)
                    let a = fields[k].values()[row * n + col];
                    let b = next.values()[col * n + (n - 1 - row)];
                    assert!((a - b).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn scene_json_round_trip_and_field_names() {
        let cfg = SceneConfig::desk(40);
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"grid\":{\"n\":32,\"size_m\":0.045}"));
        assert!(text.contains("\"mode\":\"point_source\""));
        assert_eq!(SceneConfig::from_json(&text).unwrap(), cfg);
        assert!(SceneConfig::from_json("{\"grid\":{}}").is_err());
        assert_eq!(cfg.hash().len(), 64);
        assert_ne!(cfg.hash(), SceneConfig::desk(20).hash());
        cfg.build().unwrap();
        SceneConfig::full(40).build().unwrap();
    }
}
