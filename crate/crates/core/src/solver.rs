//! Krylov solvers with Jacobi preconditioning.

use crate::error::{Error, Result, SolveFailure};
use crate::scalar::{dot, norm2, ordered_sum, Real};
use crate::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Target for `|b - A x| / |b|`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 20_000 }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
    /// `<A x, x>`, scaled by the caller to a physical energy where relevant.
    pub energy: f64,
}

fn project_mean<T: Real>(v: &mut [T]) {
    let m = ordered_sum(v.iter().copied()) / T::from_count(v.len());
    for x in v.iter_mut() {
        *x -= m;
    }
}

fn residual<T: Real>(a: &CsrMatrix<T>, b: &[T], x: &[T], r: &mut [T]) {
    a.mul_vec_into(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = *bi - *ri;
    }
}

fn failure<T: Real>(iterations: usize, best: &[T], best_res: f64, history: Vec<f64>) -> Error {
    Error::NotConverged(Box::new(SolveFailure {
        iterations,
        relative_residual: best_res,
        best_iterate: best.iter().map(|v| v.as_f64()).collect(),
        residual_history: history,
    }))
}

fn inverse_diagonal<T: Real>(a: &CsrMatrix<T>) -> Vec<T> {
    a.diagonal().into_iter().map(|d| if d != T::zero() { T::one() / d } else { T::one() }).collect()
}

/// Preconditioned conjugate gradients for symmetric positive (semi-)definite
/// `A`. With `constant_mode` the constant vector is treated as the kernel:
/// `b` is made mean-free and every iterate is kept mean-free.
pub fn pcg<T: Real>(a: &CsrMatrix<T>, b: &[T], opts: &SolverOptions, constant_mode: bool) -> Result<(Vec<T>, SolveStats)> {
    let n = a.n();
    let mut b = b.to_vec();
    if constant_mode {
        let mean = ordered_sum(b.iter().copied()) / T::from_count(n);
        let scale = b.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if mean.abs() > T::lit(1e-12) * scale {
            log::info!("removing right-hand side mean {:.3e} for a singular periodic system", mean.as_f64());
        }
        project_mean(&mut b);
    }
    let bnorm = norm2(&b);
    let mut x = vec![T::zero(); n];
    if bnorm == T::zero() {
        return Ok((x, SolveStats::default()));
    }
    let tol = T::lit(opts.tol);
    let dinv = inverse_diagonal(a);
    let mut r = b.clone();
    let mut z = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut ap = vec![T::zero(); n];
    let mut history = Vec::new();
    let mut best = x.clone();
    let mut best_res = 1.0f64;
    let mut iterations = 0usize;

    'restart: loop {
        for i in 0..n {
            z[i] = dinv[i] * r[i];
        }
        if constant_mode {
            project_mean(&mut z);
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < opts.max_iter {
            a.mul_vec_into(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= T::zero() {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            let rel = (norm2(&r) / bnorm).as_f64();
            history.push(rel);
            if rel < best_res {
                best_res = rel;
                best.copy_from_slice(&x);
            }
            if rel <= opts.tol {
                residual(a, &b, &x, &mut r);
                if constant_mode {
                    project_mean(&mut r);
                }
                let true_rel = norm2(&r) / bnorm;
                if true_rel <= tol {
                    if constant_mode {
                        project_mean(&mut x);
                    }
                    a.mul_vec_into(&x, &mut ap);
                    let energy = dot(&x, &ap).as_f64();
                    log::debug!("pcg converged in {iterations} iterations");
                    return Ok((x, SolveStats { iterations, relative_residual: true_rel.as_f64(), energy }));
                }
                continue 'restart;
            }
            for i in 0..n {
                z[i] = dinv[i] * r[i];
            }
            if constant_mode {
                project_mean(&mut z);
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        return Err(failure(iterations, &best, best_res, history));
    }
}

/// Jacobi-preconditioned BiCGSTAB for non-symmetric systems.
pub fn bicgstab<T: Real>(a: &CsrMatrix<T>, b: &[T], opts: &SolverOptions, constant_mode: bool) -> Result<(Vec<T>, SolveStats)> {
    let n = a.n();
    let mut b = b.to_vec();
    if constant_mode {
        project_mean(&mut b);
    }
    let bnorm = norm2(&b);
    let mut x = vec![T::zero(); n];
    if bnorm == T::zero() {
        return Ok((x, SolveStats::default()));
    }
    let dinv = inverse_diagonal(a);
    let mut r = b.clone();
    let mut history = Vec::new();
    let mut best = x.clone();
    let mut best_res = 1.0f64;
    let mut iterations = 0usize;
    let mut p = vec![T::zero(); n];
    let mut v = vec![T::zero(); n];
    let mut y = vec![T::zero(); n];
    let mut s = vec![T::zero(); n];
    let mut zz = vec![T::zero(); n];
    let mut t = vec![T::zero(); n];

    'restart: loop {
        let started_at = iterations;
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (T::one(), T::one(), T::one());
        p.iter_mut().for_each(|e| *e = T::zero());
        v.iter_mut().for_each(|e| *e = T::zero());
        while iterations < opts.max_iter {
            let rho_new = dot(&r_hat, &r);
            if rho_new == T::zero() || omega == T::zero() {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
                y[i] = dinv[i] * p[i];
            }
            if constant_mode {
                project_mean(&mut y);
            }
            a.mul_vec_into(&y, &mut v);
            let denom = dot(&r_hat, &v);
            if denom == T::zero() {
                break;
            }
            alpha = rho / denom;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
                zz[i] = dinv[i] * s[i];
            }
            if constant_mode {
                project_mean(&mut zz);
            }
            a.mul_vec_into(&zz, &mut t);
            let tt = dot(&t, &t);
            omega = if tt > T::zero() { dot(&t, &s) / tt } else { T::zero() };
            for i in 0..n {
                x[i] += alpha * y[i] + omega * zz[i];
                r[i] = s[i] - omega * t[i];
            }
            iterations += 1;
            let rel = (norm2(&r) / bnorm).as_f64();
            history.push(rel);
            if rel < best_res {
                best_res = rel;
                best.copy_from_slice(&x);
            }
            if rel <= opts.tol {
                residual(a, &b, &x, &mut r);
                if constant_mode {
                    project_mean(&mut r);
                }
                let true_rel = (norm2(&r) / bnorm).as_f64();
                if true_rel <= opts.tol {
                    if constant_mode {
                        project_mean(&mut x);
                    }
                    let mut ax = vec![T::zero(); n];
                    a.mul_vec_into(&x, &mut ax);
                    let energy = dot(&x, &ax).as_f64();
                    return Ok((x, SolveStats { iterations, relative_residual: true_rel, energy }));
                }
                continue 'restart;
            }
        }
        if iterations < opts.max_iter && iterations > started_at {
            // breakdown: restart from the current iterate with a fresh shadow residual
            residual(a, &b, &x, &mut r);
            if constant_mode {
                project_mean(&mut r);
            }
            continue 'restart;
        }
        return Err(failure(iterations, &best, best_res, history));
    }
}
