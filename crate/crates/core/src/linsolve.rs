//! Sparse SPD linear algebra: Jacobi-preconditioned conjugate gradients and
//! a deterministic power iteration for the largest eigenvalue.
//!
//! Everything here is sequential with a fixed iteration order, so repeated
//! runs produce bit-identical results.

use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Field, Operator};
use crate::scalar::Scalar;

const POWER_ITERATIONS: usize = 200;
const POWER_SEED: u64 = 0x5EED1DE16;

/// Solve A x = b for SPD `a` with Jacobi-preconditioned CG from x = 0.
///
/// Returns x with ||A x - b||_2 <= tol * max(1, ||b||_2); the recurrence
/// residual is replaced by the true residual every 50 iterations and the
/// bound is verified on the true residual before returning. Fails with
/// [`Error::NonConvergence`] after 10 m iterations, which signals an
/// indefinite or badly scaled operator.
pub fn cg_solve<S: Scalar>(a: &Operator<S>, b: &[S], tol: S) -> Result<Vec<S>> {
    assert!(tol > S::zero(), "cg tolerance must be positive");
    let m = a.nrows();
    assert_eq!(b.len(), m, "right-hand side length mismatch");
    let dot = |x: &[S], y: &[S]| -> S { x.iter().zip(y).map(|(&p, &q)| p * q).sum() };
    let norm = |x: &[S]| -> S { dot(x, x).max(S::zero()).sqrt() };

    let b_norm = norm(b);
    let target = tol * S::one().max(b_norm);
    let mut x = vec![S::zero(); m];
    let mut r = b.to_vec();
    if norm(&r) <= target {
        return Ok(x);
    }

    let inv_diag: Vec<S> = a.diagonal().into_iter().map(|d| S::one() / d).collect();
    let mut z: Vec<S> = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let max_iters = 10 * m.max(1);
    let mut q = vec![S::zero(); m];
    for iter in 1..=max_iters {
        a.apply_slice(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= S::zero() {
            return Err(Error::NonConvergence {
                what: "conjugate gradients (operator not positive definite)",
                iterations: iter,
                residual: norm(&r).as_f64(),
            });
        }
        let alpha = rz / pq;
        for i in 0..m {
            x[i] = x[i] + alpha * p[i];
        }
        if iter % 50 == 0 {
            // refresh the recurrence residual with the true one
            a.apply_slice(&x, &mut r);
            for i in 0..m {
                r[i] = b[i] - r[i];
            }
        } else {
            for i in 0..m {
                r[i] = r[i] - alpha * q[i];
            }
        }
        if norm(&r) <= target {
            // certify on the true residual
            a.apply_slice(&x, &mut q);
            let true_res = {
                let mut acc = S::zero();
                for i in 0..m {
                    let d = b[i] - q[i];
                    acc = acc + d * d;
                }
                acc.max(S::zero()).sqrt()
            };
            if true_res <= target {
                return Ok(x);
            }
            a.apply_slice(&x, &mut r);
            for i in 0..m {
                r[i] = b[i] - r[i];
            }
        }
        for i in 0..m {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..m {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NonConvergence {
        what: "conjugate gradients",
        iterations: max_iters,
        residual: norm(&r).as_f64(),
    })
}

/// Field-level wrapper around [`cg_solve`].
pub fn cg_solve_field<S: Scalar>(a: &Operator<S>, b: &Field<S>, tol: S) -> Result<Field<S>> {
    if b.len() != a.nrows() {
        return Err(Error::GridMismatch);
    }
    let x = cg_solve(a, b.values(), tol)?;
    Field::from_values(b.grid(), x)
}

/// Largest-eigenvalue estimate by 200 power iterations from a fixed seeded
/// start vector; returns the final Rayleigh quotient.
pub fn lambda_max<S: Scalar>(a: &Operator<S>) -> S {
    let m = a.nrows();
    if m == 0 {
        return S::zero();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut v: Vec<S> = (0..m)
        .map(|_| S::lit(rng.random_range(-1.0..1.0)))
        .collect();
    let norm = |x: &[S]| -> S {
        x.iter()
            .map(|&p| p * p)
            .sum::<S>()
            .max(S::zero())
            .sqrt()
    };
    let mut n = norm(&v);
    if n == S::zero() {
        v[0] = S::one();
        n = S::one();
    }
    for vi in v.iter_mut() {
        *vi = *vi / n;
    }
    let mut w = vec![S::zero(); m];
    let mut rayleigh = S::zero();
    for _ in 0..POWER_ITERATIONS {
        a.apply_slice(&v, &mut w);
        rayleigh = v.iter().zip(&w).map(|(&a, &b)| a * b).sum();
        let wn = norm(&w);
        if wn == S::zero() {
            return S::zero();
        }
        for i in 0..m {
            v[i] = w[i] / wn;
        }
    }
    rayleigh
}

/// Gershgorin upper bound on the spectrum: max over rows of sum |a_ij|.
pub fn gershgorin_bound<S: Scalar>(a: &Operator<S>) -> S {
    (0..a.nrows())
        .map(|r| a.row(r).map(|(_, v)| v.abs()).sum::<S>())
        .fold(S::zero(), |acc, s| acc.max(s))
}
