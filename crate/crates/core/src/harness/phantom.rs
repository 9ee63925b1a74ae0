//! Image sources: a built-in random phantom generator and a directory of
//! grayscale images.

use crate::error::{Error, Result};
use crate::rng;
use image::imageops::FilterType;
use rand::Rng;
use std::path::{Path, PathBuf};

/// Smooth random phantom on an `n x n` grid, values in `[0, 1]` with maximum
/// exactly 1. A sum of 2 to 5 bumps `(1 - rho^2)^2` on rotated ellipses, all
/// inside the inscribed disk.
pub fn phantom(n: usize, seed: u64, id: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, &[id]);
    let count = rng.random_range(2..=5);
    let bumps: Vec<[f64; 6]> = (0..count)
        .map(|_| {
            let a: f64 = rng.random_range(0.15..0.4);
            let b: f64 = rng.random_range(0.15..0.4);
            let reach = 0.85 - a.max(b);
            let r = reach * rng.random::<f64>().sqrt();
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let theta = rng.random_range(0.0..std::f64::consts::PI);
            let amp = rng.random_range(0.3..1.0);
            [r * phi.cos(), r * phi.sin(), a, b, theta, amp]
        })
        .collect();
    let coord = |j: usize| (2.0 * j as f64 + 1.0) / n as f64 - 1.0;
    let mut img: Vec<f64> = (0..n * n)
        .map(|i| {
            let (x, y) = (coord(i % n), coord(i / n));
            bumps
                .iter()
                .map(|&[cx, cy, a, b, theta, amp]| {
                    let (s, c) = theta.sin_cos();
                    let u = ((x - cx) * c + (y - cy) * s) / a;
                    let v = (-(x - cx) * s + (y - cy) * c) / b;
                    let rho2 = u * u + v * v;
                    if rho2 < 1.0 {
                        amp * (1.0 - rho2).powi(2)
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .collect();
    let max = img.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        img.iter_mut().for_each(|v| *v = (*v / max).min(1.0));
    }
    img
}

const EXTENSIONS: [&str; 4] = ["png", "pgm", "pnm", "ppm"];

/// Image files in `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Loads an image as luma, resamples to `n x n` when needed and scales 8-bit
/// values to `[0, 1]`.
pub fn load_image(path: &Path, n: usize) -> Result<Vec<f64>> {
    let img = image::open(path)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?
        .into_luma8();
    let img = if img.width() as usize == n && img.height() as usize == n {
        img
    } else {
        image::imageops::resize(&img, n as u32, n as u32, FilterType::Triangle)
    };
    Ok(img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect())
}
