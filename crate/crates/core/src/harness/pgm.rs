//! 8-bit binary PGM (P5) output.

use super::atomic_write;
use crate::error::{Error, Result};
use std::path::Path;

/// Linear min-max map to 0..=255, rounding to nearest. A constant array maps
/// to 128 everywhere.
pub fn to_gray(values: &[f64]) -> Result<Vec<u8>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("PGM input must be finite".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Ok(vec![128; values.len()]);
    }
    let scale = 255.0 / (hi - lo);
    Ok(values.iter().map(|v| ((v - lo) * scale).round().clamp(0.0, 255.0) as u8).collect())
}

pub fn encode_pgm(values: &[f64], width: usize, height: usize) -> Result<Vec<u8>> {
    if values.len() != width * height {
        return Err(Error::Validation(format!(
            "{width} x {height} image needs {} values, got {}",
            width * height,
            values.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(to_gray(values)?);
    Ok(out)
}

/// Row-major `values` of a `width x height` image.
pub fn render_pgm(values: &[f64], width: usize, height: usize, path: &Path) -> Result<()> {
    atomic_write(path, &encode_pgm(values, width, height)?)
}
