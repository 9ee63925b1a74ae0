//! Matrix-free Krylov solvers for complex, non-Hermitian systems `A x = b`.

use crate::error::{Error, Result};
use crate::field::{dot, norm, norm_sqr};
use num_complex::Complex64;

#[derive(Clone, Debug, PartialEq)]
pub struct KrylovOutcome {
    pub x: Vec<Complex64>,
    pub iterations: usize,
    /// True relative residual `||b - A x|| / ||b||` of the returned iterate.
    pub residual: f64,
    pub converged: bool,
}

fn true_residual<A>(apply: &A, b: &[Complex64], x: &[Complex64]) -> Result<Vec<Complex64>>
where
    A: Fn(&[Complex64]) -> Result<Vec<Complex64>>,
{
    let ax = apply(x)?;
    Ok(b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect())
}

fn finite(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// BiCGStab with true-residual confirmation: when the recursively updated
/// residual meets `tol`, the residual is recomputed from scratch and the
/// iteration restarts from it if the recursion had drifted. On exhaustion
/// the iterate with the smallest residual seen is returned.
pub fn bicgstab<A>(apply: A, b: &[Complex64], x0: Vec<Complex64>, tol: f64, max_iter: usize) -> Result<KrylovOutcome>
where
    A: Fn(&[Complex64]) -> Result<Vec<Complex64>>,
{
    let zero = Complex64::new(0.0, 0.0);
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(KrylovOutcome {
            x: vec![zero; b.len()],
            iterations: 0,
            residual: 0.0,
            converged: true,
        });
    }
    let target = tol * b_norm;

    let mut x = x0;
    let mut r = true_residual(&apply, b, &x)?;
    let mut r_norm = norm(&r);
    if !r_norm.is_finite() {
        return Err(Error::Numerical("initial residual is not finite".into()));
    }
    let mut best = (r_norm, x.clone());
    if r_norm <= target {
        return Ok(KrylovOutcome {
            x,
            iterations: 0,
            residual: r_norm / b_norm,
            converged: true,
        });
    }

    let mut shadow = r.clone();
    let mut rho = Complex64::new(1.0, 0.0);
    let mut alpha = Complex64::new(1.0, 0.0);
    let mut omega = Complex64::new(1.0, 0.0);
    let mut p = vec![zero; b.len()];
    let mut v = vec![zero; b.len()];

    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let rho_next = dot(&shadow, &r);
        if rho_next.norm() <= f64::EPSILON * norm(&shadow) * r_norm {
            // breakdown: restart with the current residual as shadow
            shadow = r.clone();
            rho = Complex64::new(1.0, 0.0);
            alpha = rho;
            omega = rho;
            p.fill(zero);
            v.fill(zero);
            iterations -= 1;
            if norm_sqr(&shadow) == 0.0 {
                break;
            }
            continue;
        }
        let beta = (rho_next / rho) * (alpha / omega);
        rho = rho_next;
        for ((pi, ri), vi) in p.iter_mut().zip(&r).zip(&v) {
            *pi = ri + beta * (*pi - omega * vi);
        }
        v = apply(&p)?;
        alpha = rho / dot(&shadow, &v);
        if !finite(alpha) {
            return Err(Error::Numerical("BiCGStab step length is not finite".into()));
        }
        let s: Vec<Complex64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        let s_norm = norm(&s);
        let converged_half = s_norm <= target;
        let t = if converged_half { Vec::new() } else { apply(&s)? };
        if converged_half {
            for (xi, pi) in x.iter_mut().zip(&p) {
                *xi += alpha * pi;
            }
            r = s;
        } else {
            let tt = norm_sqr(&t);
            omega = if tt == 0.0 { zero } else { dot(&t, &s) / tt };
            for ((xi, pi), si) in x.iter_mut().zip(&p).zip(&s) {
                *xi += alpha * pi + omega * si;
            }
            r = s.iter().zip(&t).map(|(si, ti)| si - omega * ti).collect();
        }
        r_norm = norm(&r);
        if !r_norm.is_finite() {
            return Err(Error::Numerical("BiCGStab residual is not finite".into()));
        }
        if r_norm < best.0 {
            best = (r_norm, x.clone());
        }
        if r_norm <= target || omega == zero {
            let exact = true_residual(&apply, b, &x)?;
            let exact_norm = norm(&exact);
            if exact_norm <= target {
                return Ok(KrylovOutcome {
                    x,
                    iterations,
                    residual: exact_norm / b_norm,
                    converged: true,
                });
            }
            // recursion drifted; restart from the true residual
            r = exact;
            r_norm = exact_norm;
            shadow = r.clone();
            rho = Complex64::new(1.0, 0.0);
            alpha = rho;
            omega = rho;
            p.fill(zero);
            v.fill(zero);
        }
    }

    let x = best.1;
    let residual = norm(&true_residual(&apply, b, &x)?) / b_norm;
    Ok(KrylovOutcome {
        x,
        iterations,
        converged: residual <= tol,
        residual,
    })
}

/// Conjugate gradient on the normal equations `A^H A x = A^H b`, stopping on
/// the residual of the original system.
pub fn cgnr<A, H>(apply: A, apply_adjoint: H, b: &[Complex64], x0: Vec<Complex64>, tol: f64, max_iter: usize) -> Result<KrylovOutcome>
where
    A: Fn(&[Complex64]) -> Result<Vec<Complex64>>,
    H: Fn(&[Complex64]) -> Result<Vec<Complex64>>,
{
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(KrylovOutcome {
            x: vec![Complex64::new(0.0, 0.0); b.len()],
            iterations: 0,
            residual: 0.0,
            converged: true,
        });
    }
    let target = tol * b_norm;
    let mut x = x0;
    let mut r = true_residual(&apply, b, &x)?;
    let mut z = apply_adjoint(&r)?;
    let mut p = z.clone();
    let mut zz = norm_sqr(&z);
    let mut iterations = 0;
    while norm(&r) > target && iterations < max_iter && zz > 0.0 {
        iterations += 1;
        let w = apply(&p)?;
        let ww = norm_sqr(&w);
        if ww == 0.0 {
            break;
        }
        let alpha = zz / ww;
        if !alpha.is_finite() {
            return Err(Error::Numerical("CGNR step length is not finite".into()));
        }
        for (xi, pi) in x.iter_mut().zip(&p) {
            *xi += pi * alpha;
        }
        for (ri, wi) in r.iter_mut().zip(&w) {
            *ri -= wi * alpha;
        }
        z = apply_adjoint(&r)?;
        let zz_next = norm_sqr(&z);
        let beta = zz_next / zz;
        zz = zz_next;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + *pi * beta;
        }
    }
    let residual = norm(&true_residual(&apply, b, &x)?) / b_norm;
    if !residual.is_finite() {
        return Err(Error::Numerical("CGNR residual is not finite".into()));
    }
    Ok(KrylovOutcome {
        x,
        iterations,
        converged: residual <= tol,
        residual,
    })
}
