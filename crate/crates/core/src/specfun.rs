//! Bessel and Hankel functions of integer order and real argument.
//!
//! Orders 0 and 1 come from one of two routes, split at `x = 25`:
//!
//! * below the split, a normalized downward (Miller) recurrence produces the
//!   whole `J_k` sequence and `Y_0`, `Y_1` follow from their Neumann series
//!   in even/odd `J_k`;
//! * above it, the Hankel asymptotic expansion in phase-amplitude form is
//!   summed until its terms drop below double precision (they shrink until
//!   `k ~ 2x`, so at `x >= 25` the truncation error is far below 1e-16).
//!
//! Higher orders use upward recurrence for `Y_n` everywhere and for `J_n`
//! while `n <= x`; `J_n` with `n > x` is taken from the Miller sequence.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::f64::consts::{FRAC_2_PI, FRAC_PI_2, FRAC_PI_4, PI};

/// Complex value of a special function.
pub type ComplexScalar = Complex64;

/// Largest supported order.
pub const MAX_ORDER: u32 = 20_000;

const ASYMPTOTIC_SPLIT: f64 = 25.0;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const RESCALE_ABOVE: f64 = 1e200;

fn check_order(n: u32) -> Result<()> {
    if n > MAX_ORDER {
        return Err(Error::Domain(format!(
            "order {n} exceeds the supported maximum {MAX_ORDER}"
        )));
    }
    Ok(())
}

/// Bessel function of the first kind `J_n(x)`, `x >= 0`.
pub fn bessel_j(n: u32, x: f64) -> Result<f64> {
    check_order(n)?;
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("bessel_j requires finite x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    if x < ASYMPTOTIC_SPLIT {
        return Ok(miller_sequence(x, n as usize)[n as usize]);
    }
    match n {
        0 => Ok(asymptotic(0.0, x).0),
        1 => Ok(asymptotic(1.0, x).0),
        _ if f64::from(n) <= x => {
            let (j0, _) = asymptotic(0.0, x);
            let (j1, _) = asymptotic(1.0, x);
            Ok(upward(j0, j1, n, x))
        }
        _ => Ok(miller_sequence(x, n as usize)[n as usize]),
    }
}

/// Bessel function of the second kind `Y_n(x)`, `x > 0`.
pub fn bessel_y(n: u32, x: f64) -> Result<f64> {
    check_order(n)?;
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("bessel_y requires finite x > 0, got {x}")));
    }
    let [_, _, y0, y1] = low_orders(x);
    let y = match n {
        0 => y0,
        1 => y1,
        _ => upward(y0, y1, n, x),
    };
    if !y.is_finite() {
        return Err(Error::Domain(format!("Y_{n}({x}) overflows f64")));
    }
    Ok(y)
}

/// Hankel function of the first kind, `H_n^(1)(x) = J_n(x) + i Y_n(x)`.
pub fn hankel1(n: u32, x: f64) -> Result<ComplexScalar> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("hankel1 requires x > 0, got {x}")));
    }
    Ok(Complex64::new(bessel_j(n, x)?, bessel_y(n, x)?))
}

/// `J_0..=J_nmax` at a single argument.
pub fn bessel_j_orders(nmax: u32, x: f64) -> Result<Vec<f64>> {
    check_order(nmax)?;
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("bessel_j requires finite x >= 0, got {x}")));
    }
    let len = nmax as usize + 1;
    if x == 0.0 {
        let mut v = vec![0.0; len];
        v[0] = 1.0;
        return Ok(v);
    }
    if x < ASYMPTOTIC_SPLIT || f64::from(nmax) > x {
        let mut v = miller_sequence(x, nmax as usize);
        v.truncate(len);
        return Ok(v);
    }
    let (j0, _) = asymptotic(0.0, x);
    let (j1, _) = asymptotic(1.0, x);
    Ok(upward_sequence(j0, j1, nmax, x))
}

/// `Y_0..=Y_nmax` at a single argument.
pub fn bessel_y_orders(nmax: u32, x: f64) -> Result<Vec<f64>> {
    check_order(nmax)?;
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("bessel_y requires finite x > 0, got {x}")));
    }
    let [_, _, y0, y1] = low_orders(x);
    let v = upward_sequence(y0, y1, nmax, x);
    if v.iter().any(|y| !y.is_finite()) {
        return Err(Error::Domain(format!("Y_n({x}) overflows f64 below order {nmax}")));
    }
    Ok(v)
}

/// `[J0, J1, Y0, Y1]` at `x > 0`.
fn low_orders(x: f64) -> [f64; 4] {
    if x >= ASYMPTOTIC_SPLIT {
        let (j0, y0) = asymptotic(0.0, x);
        let (j1, y1) = asymptotic(1.0, x);
        return [j0, j1, y0, y1];
    }
    let j = miller_sequence(x, 1);
    let log_term = (0.5 * x).ln() + EULER_GAMMA;

    // Neumann series, truncated where the Miller sequence ends.
    let mut even_sum = 0.0;
    let mut odd_sum = 0.0;
    let mut k = 1;
    while 2 * k + 1 < j.len() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let kf = k as f64;
        even_sum += sign * j[2 * k] / kf;
        odd_sum += sign * (j[2 * k - 1] - j[2 * k + 1]) / kf;
        k += 1;
    }
    let y0 = FRAC_2_PI * (log_term * j[0] - 2.0 * even_sum);
    let y1 = FRAC_2_PI * (log_term * j[1] - j[0] / x + odd_sum);
    [j[0], j[1], y0, y1]
}

/// Normalized Miller recurrence. Returns `J_0..` up to at least `top`.
fn miller_sequence(x: f64, top: usize) -> Vec<f64> {
    let reach = (top as f64).max(x);
    let mut start = reach as usize + 30 + (50.0 * reach).sqrt() as usize;
    start += start % 2;

    let mut v = vec![0.0; start + 2];
    v[start] = 1e-30;
    let two_over_x = 2.0 / x;
    for k in (1..=start).rev() {
        let next = k as f64 * two_over_x * v[k] - v[k + 1];
        v[k - 1] = next;
        if next.abs() > RESCALE_ABOVE {
            for value in &mut v[k - 1..] {
                *value /= RESCALE_ABOVE;
            }
        }
    }

    // J_0 + 2 sum J_2k = 1
    let mut norm = v[0];
    let mut k = 2;
    while k <= start {
        norm += 2.0 * v[k];
        k += 2;
    }
    for value in &mut v {
        *value /= norm;
    }
    v.truncate(start + 1);
    v
}

/// Hankel asymptotic expansion; returns `(J_nu, Y_nu)` for `x >= 25`.
fn asymptotic(nu: f64, x: f64) -> (f64, f64) {
    let mu = 4.0 * nu * nu;
    let eight_x = 8.0 * x;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0_f64;
    let mut k = 1usize;
    loop {
        let odd = (2 * k - 1) as f64;
        let next = term * (mu - odd * odd) / (k as f64 * eight_x);
        if next.abs() >= term.abs() && k > 2 {
            break;
        }
        term = next;
        // t_k enters Q for odd k, P for even k, with alternating signs.
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term.abs() < 1e-17 {
            break;
        }
        k += 1;
    }

    // chi = x - (nu/2 + 1/4) pi, expanded to keep full precision for large x.
    let phase = FRAC_PI_2 * nu + FRAC_PI_4;
    let (sx, cx) = x.sin_cos();
    let (sp, cp) = phase.sin_cos();
    let cos_chi = cx * cp + sx * sp;
    let sin_chi = sx * cp - cx * sp;

    let amp = (2.0 / (PI * x)).sqrt();
    (
        amp * (p * cos_chi - q * sin_chi),
        amp * (p * sin_chi + q * cos_chi),
    )
}

fn upward(c0: f64, c1: f64, n: u32, x: f64) -> f64 {
    let (mut prev, mut cur) = (c0, c1);
    for k in 1..n {
        let next = 2.0 * f64::from(k) / x * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

fn upward_sequence(c0: f64, c1: f64, nmax: u32, x: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(nmax as usize + 1);
    v.push(c0);
    if nmax >= 1 {
        v.push(c1);
    }
    for k in 1..nmax as usize {
        let next = 2.0 * k as f64 / x * v[k] - v[k - 1];
        v.push(next);
    }
    v
}
