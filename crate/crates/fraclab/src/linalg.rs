//! Matrix-free preconditioned conjugate gradient with order-invariant
//! reductions.
//!
//! Dot products sort their term multiset before summing, so the result does
//! not depend on site enumeration order. That makes the solver bit-exactly
//! equivariant under lattice translations of the data and bit-reproducible
//! across reruns.

use crate::{Error, Result};

/// Dot product with a canonical summation order (sorted by value).
pub fn stable_dot(a: &[f64], b: &[f64], scratch: &mut Vec<f64>) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    scratch.clear();
    scratch.extend(a.iter().zip(b.iter()).map(|(x, y)| x * y));
    scratch.sort_unstable_by(f64::total_cmp);
    scratch.iter().sum()
}

pub fn stable_norm(a: &[f64], scratch: &mut Vec<f64>) -> f64 {
    stable_dot(a, a, scratch).sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct CgOutcome {
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `A x = b` for symmetric positive (semi)definite `A` given as a
/// matrix-free apply; `x` holds the initial guess on entry.
///
/// `inv_diag`, when given, is the reciprocal diagonal used as a Jacobi
/// preconditioner. Convergence is `||r|| <= tol_rel * max(||b||, tiny)`.
pub fn cg_solve<F>(
    apply: F,
    b: &[f64],
    x: &mut [f64],
    inv_diag: Option<&[f64]>,
    tol_rel: f64,
    max_iter: usize,
) -> Result<CgOutcome>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut scratch = Vec::with_capacity(n);
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(ax.iter()).map(|(bi, ai)| bi - ai).collect();
    let bnorm = stable_norm(b, &mut scratch).max(1e-300);
    let target = tol_rel * bnorm;

    let precond = |r: &[f64], z: &mut [f64]| match inv_diag {
        Some(d) => {
            for i in 0..r.len() {
                z[i] = r[i] * d[i];
            }
        }
        None => z.copy_from_slice(r),
    };

    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = stable_dot(&r, &z, &mut scratch);
    let mut res = stable_norm(&r, &mut scratch);
    if res <= target {
        return Ok(CgOutcome {
            iterations: 0,
            residual: res,
        });
    }

    let mut ap = vec![0.0; n];
    for iter in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = stable_dot(&p, &ap, &mut scratch);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::SolverDiverged {
                iterations: iter,
                residual: res,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
        }
        for i in 0..n {
            r[i] -= alpha * ap[i];
        }
        res = stable_norm(&r, &mut scratch);
        if res <= target {
            return Ok(CgOutcome {
                iterations: iter,
                residual: res,
            });
        }
        precond(&r, &mut z);
        let rz_new = stable_dot(&r, &z, &mut scratch);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverDiverged {
        iterations: max_iter,
        residual: res,
    })
}
