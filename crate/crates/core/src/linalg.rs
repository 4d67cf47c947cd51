//! Small dense helpers for d x d matrices (row-major slices).

use crate::scalar::Real;

pub fn identity<T: Real>(d: usize) -> Vec<T> {
    let mut m = vec![T::zero(); d * d];
    for i in 0..d {
        m[i * d + i] = T::one();
    }
    m
}

pub fn mat_vec<T: Real>(m: &[T], x: &[T]) -> Vec<T> {
    let d = x.len();
    (0..d).map(|i| (0..d).map(|j| m[i * d + j] * x[j]).sum()).collect()
}

pub fn transpose<T: Real>(m: &[T], d: usize) -> Vec<T> {
    let mut t = vec![T::zero(); d * d];
    for i in 0..d {
        for j in 0..d {
            t[j * d + i] = m[i * d + j];
        }
    }
    t
}

pub fn is_diagonal<T: Real>(m: &[T], d: usize) -> bool {
    (0..d).all(|i| (0..d).all(|j| i == j || m[i * d + j] == T::zero()))
}

/// Eigenvalues (ascending) and eigenvectors (columns, row-major storage) of a
/// symmetric matrix by cyclic Jacobi rotations.
pub fn symmetric_eigen<T: Real>(m: &[T], n: usize) -> (Vec<T>, Vec<T>) {
    let mut a = m.to_vec();
    let mut v = identity::<T>(n);
    let eps = T::epsilon();
    for _sweep in 0..64 {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        let scale: T = (0..n).map(|i| a[i * n + i] * a[i * n + i]).sum::<T>() + off;
        if off <= eps * eps * scale || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].partial_cmp(&a[j * n + j]).unwrap());
    let vals = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vecs = vec![T::zero(); n * n];
    for (col, &i) in order.iter().enumerate() {
        for k in 0..n {
            vecs[k * n + col] = v[k * n + i];
        }
    }
    (vals, vecs)
}

/// Smallest eigenvalue of the symmetric part: `min_{|x|=1} x.Ax`.
pub fn min_rayleigh<T: Real>(m: &[T], d: usize) -> T {
    if is_diagonal(m, d) {
        return (0..d).map(|i| m[i * d + i]).fold(T::infinity(), T::min);
    }
    let half = T::lit(0.5);
    let sym: Vec<T> = (0..d * d).map(|idx| half * (m[idx] + m[(idx % d) * d + idx / d])).collect();
    symmetric_eigen(&sym, d).0[0]
}

/// Operator norm `max_{|x|=1} |Ax|`.
pub fn spectral_norm<T: Real>(m: &[T], d: usize) -> T {
    if is_diagonal(m, d) {
        return (0..d).map(|i| m[i * d + i].abs()).fold(T::zero(), T::max);
    }
    let mut ata = vec![T::zero(); d * d];
    for i in 0..d {
        for j in 0..d {
            ata[i * d + j] = (0..d).map(|k| m[k * d + i] * m[k * d + j]).sum();
        }
    }
    let vals = symmetric_eigen(&ata, d).0;
    vals[d - 1].max(T::zero()).sqrt()
}

/// Minimum-norm solution of `G x = r` for symmetric positive semi-definite
/// `G`. Eigenvalues below `rel_tol * max` are treated as zero. Returns the
/// solution and the condition number on the retained spectrum (infinite if
/// anything was dropped).
pub fn psd_min_norm_solve<T: Real>(g: &[T], r: &[T], rel_tol: T) -> (Vec<T>, T) {
    let n = r.len();
    if n == 0 {
        return (Vec::new(), T::one());
    }
    let (vals, vecs) = symmetric_eigen(g, n);
    let top = vals.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
    let mut x = vec![T::zero(); n];
    let mut dropped = false;
    let mut smallest = top;
    for (col, &lam) in vals.iter().enumerate() {
        if top == T::zero() || lam <= rel_tol * top {
            dropped = true;
            continue;
        }
        smallest = smallest.min(lam);
        let proj: T = (0..n).map(|k| vecs[k * n + col] * r[k]).sum();
        for k in 0..n {
            x[k] += vecs[k * n + col] * proj / lam;
        }
    }
    let cond = if dropped { T::infinity() } else { top / smallest };
    (x, cond)
}
