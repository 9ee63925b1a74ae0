//! Complex fields on the pixel grid and the vector kernels the solvers share.

use crate::error::{Error, Result};
use num_complex::Complex64;

/// Complex-valued field sampled at the pixel centers of an `n x n` grid,
/// row-major (row = y index, column = x index).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    n: usize,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(n: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Validation(format!(
                "field of side {n} needs {} values, got {}",
                n * n,
                values.len()
            )));
        }
        Ok(Self { n, values })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        norm(&self.values)
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.im).collect()
    }

    pub fn abs(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm()).collect()
    }
}

/// `sum conj(a_i) b_i`
pub fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm(a: &[Complex64]) -> f64 {
    norm_sqr(a).sqrt()
}

pub fn real_norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Relative l2 distance `||a - b|| / ||b||`.
pub fn relative_error(a: &[Complex64], b: &[Complex64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    diff.sqrt() / norm(b)
}

/// Sum of equally long vectors in a fixed pairwise tree, so the result does
/// not depend on how the inputs were produced.
pub fn pairwise_sum(parts: &[Vec<Complex64>], len: usize) -> Vec<Complex64> {
    match parts.len() {
        0 => vec![Complex64::new(0.0, 0.0); len],
        1 => parts[0].clone(),
        n => {
            let (left, right) = parts.split_at(n / 2);
            let mut acc = pairwise_sum(left, len);
            let rhs = pairwise_sum(right, len);
            for (a, b) in acc.iter_mut().zip(&rhs) {
                *a += b;
            }
            acc
        }
    }
}

pub(crate) fn check_finite(values: &[Complex64], what: &str) -> Result<()> {
    if values.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite value in {what}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length() {
        assert!(ComplexField::new(3, vec![Complex64::new(1.0, 0.0); 8]).is_err());
        assert_eq!(ComplexField::zeros(3).len(), 9);
    }

    #[test]
    fn dot_conjugates_left() {
        let a = [Complex64::new(0.0, 1.0)];
        let b = [Complex64::new(0.0, 1.0)];
        assert_eq!(dot(&a, &b), Complex64::new(1.0, 0.0));
    }

    #[test]
    fn pairwise_sum_of_nothing_is_zero() {
        let s = pairwise_sum(&[], 4);
        assert_eq!(s, vec![Complex64::new(0.0, 0.0); 4]);
        let parts: Vec<Vec<Complex64>> =
            (0..5).map(|k| vec![Complex64::new(k as f64, 0.0); 2]).collect();
        assert_eq!(pairwise_sum(&parts, 2)[1], Complex64::new(10.0, 0.0));
    }
}
