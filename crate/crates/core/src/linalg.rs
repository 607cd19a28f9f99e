//! Matrix-free iterative solvers for the symmetric systems the lab
//! assembles: conjugate gradients for definite solves (capacitors,
//! shifted inverse iteration) and MINRES for the possibly indefinite
//! Newton corrections. All reductions run in a fixed order.

use crate::error::{Error, Result};

/// Symmetric linear operator given by its matrix-vector product.
pub trait LinearOp {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
}

impl<F: Fn(&[f64], &mut [f64])> LinearOp for (usize, F) {
    fn dim(&self) -> usize {
        self.0
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        (self.1)(x, out)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Preconditioned conjugate gradients with Jacobi scaling; `diag` may be
/// `None` for the unpreconditioned method. Requires a positive definite
/// operator.
pub fn conjugate_gradient(
    op: &dyn LinearOp,
    rhs: &[f64],
    x: &mut [f64],
    diag: Option<&[f64]>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    let n = op.dim();
    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    for i in 0..n {
        r[i] = rhs[i] - r[i];
    }
    let precond = |r: &[f64], z: &mut [f64]| match diag {
        Some(d) => {
            for i in 0..r.len() {
                z[i] = r[i] / d[i];
            }
        }
        None => z.copy_from_slice(r),
    };
    let rhs_norm = norm(rhs).max(1e-300);
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = norm(&r);
    if res / rhs_norm <= rel_tol {
        return Ok(SolveStats {
            iterations: 0,
            residual: res / rhs_norm,
        });
    }
    for it in 1..=max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) || !pap.is_finite() {
            return Err(Error::DegenerateLinearization);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm(&r);
        if res / rhs_norm <= rel_tol {
            return Ok(SolveStats {
                iterations: it,
                residual: res / rhs_norm,
            });
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolveStagnation {
        residual: res / rhs_norm,
        iterations: max_iter,
    })
}

/// MINRES for symmetric (possibly indefinite) systems.
pub fn minres(
    op: &dyn LinearOp,
    rhs: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    let n = op.dim();
    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    for i in 0..n {
        r[i] = rhs[i] - r[i];
    }
    let rhs_norm = norm(rhs).max(1e-300);
    let mut beta = norm(&r);
    if beta / rhs_norm <= rel_tol {
        return Ok(SolveStats {
            iterations: 0,
            residual: beta / rhs_norm,
        });
    }
    let beta0 = beta;
    let mut v_prev = vec![0.0; n];
    let mut v: Vec<f64> = r.iter().map(|&c| c / beta).collect();
    let mut w = vec![0.0; n];
    let mut w_prev = vec![0.0; n];
    let (mut c, mut s) = (1.0f64, 0.0f64);
    let (mut c_prev, mut s_prev) = (1.0f64, 0.0f64);
    let mut eta = beta;
    let mut av = vec![0.0; n];
    let mut rel = beta / rhs_norm;
    for it in 1..=max_iter {
        op.apply(&v, &mut av);
        let alpha = dot(&v, &av);
        for i in 0..n {
            av[i] -= alpha * v[i] + beta * v_prev[i];
        }
        let beta_new = norm(&av);

        // Apply previous rotations to the new tridiagonal column.
        let delta = c * alpha - c_prev * s * beta;
        let gamma1 = (delta * delta + beta_new * beta_new).sqrt();
        let epsilon = s_prev * beta;
        let delta2 = s * alpha + c_prev * c * beta;
        if gamma1 == 0.0 {
            return Err(Error::DegenerateLinearization);
        }
        let c_new = delta / gamma1;
        let s_new = beta_new / gamma1;

        for i in 0..n {
            let wi = (v[i] - delta2 * w[i] - epsilon * w_prev[i]) / gamma1;
            w_prev[i] = w[i];
            w[i] = wi;
            x[i] += c_new * eta * wi;
        }
        eta *= -s_new;

        (c_prev, s_prev) = (c, s);
        (c, s) = (c_new, s_new);
        if beta_new > 0.0 {
            for i in 0..n {
                let vi = av[i] / beta_new;
                v_prev[i] = v[i];
                v[i] = vi;
            }
        }
        beta = beta_new;
        rel = eta.abs() / rhs_norm.max(beta0);
        if rel <= rel_tol || beta_new == 0.0 {
            return Ok(SolveStats {
                iterations: it,
                residual: rel,
            });
        }
    }
    Err(Error::LinearSolveStagnation {
        residual: rel,
        iterations: max_iter,
    })
}

/// Tridiagonal solve (Thomas algorithm) for the profile Newton steps.
/// `lower`, `diag`, `upper` are the bands; `rhs` is overwritten with the
/// solution.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &mut [f64],
) -> Result<()> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom.abs() < 1e-300 {
        return Err(Error::DegenerateLinearization);
    }
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        if denom.abs() < 1e-300 {
            return Err(Error::DegenerateLinearization);
        }
        if i < n - 1 {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    rhs[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        rhs[i] = d[i] - c[i] * rhs[i + 1];
    }
    Ok(())
}
