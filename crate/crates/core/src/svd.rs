//! Thin singular value decomposition by one-sided (Hestenes) Jacobi rotations.
//!
//! The rotation order is fixed (cyclic by column pairs), so the result is
//! bit-reproducible for identical input. Columns of `u` belonging to
//! numerically null singular values are completed to an orthonormal set, so
//! `u` always has orthonormal columns even for rank-deficient input.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `m = u · diag(sigma) · vt` with `k = min(rows, cols)` triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult<T: Scalar = f64> {
    /// `[rows, k]`, orthonormal columns.
    pub u: Tensor<T>,
    /// Non-increasing, non-negative.
    pub sigma: Vec<T>,
    /// `[k, cols]`, orthonormal rows.
    pub vt: Tensor<T>,
}

impl<T: Scalar> SvdResult<T> {
    /// `u · diag(sigma) · vt`.
    pub fn reconstruct(&self) -> Tensor<T> {
        let mut us = self.u.clone();
        let k = self.sigma.len();
        for row in us.data_mut().chunks_mut(k) {
            for (x, &s) in row.iter_mut().zip(&self.sigma) {
                *x *= s;
            }
        }
        us.matmul(&self.vt).expect("consistent svd factors")
    }
}

/// Thin SVD of a rank-2 tensor.
pub fn svd_thin<T: Scalar>(m: &Tensor<T>) -> Result<SvdResult<T>> {
    if !m.is_matrix() {
        return Err(Error::ShapeMismatch(format!("svd needs a matrix, got {:?}", m.shape())));
    }
    let (rows, cols) = (m.rows(), m.cols());
    let (tall, transposed) = if rows >= cols { (m.clone(), false) } else { (m.transpose()?, true) };
    let (left, sigma, right) = svd_tall(&tall)?;
    // left: [tall_rows, k] row-major, right: [k, k] with V's columns as rows of `right`^T
    let k = sigma.len();
    let (mut u, mut vt) = if transposed {
        // m^T = L S R^T  =>  m = R S L^T
        let u = right.transpose()?; // V as [cols_of_tall = rows, k]
        let vt = left.transpose()?; // [k, cols]
        (u, vt)
    } else {
        (left, right)
    };
    apply_sign_convention(&mut u, &mut vt, k);
    Ok(SvdResult { u, sigma, vt })
}

/// Largest-magnitude entry of every left vector positive, lowest index on ties.
fn apply_sign_convention<T: Scalar>(u: &mut Tensor<T>, vt: &mut Tensor<T>, k: usize) {
    let rows = u.rows();
    let cols = vt.cols();
    for j in 0..k {
        let mut best = 0;
        let mut best_abs = T::neg_infinity();
        for i in 0..rows {
            let a = u.data()[i * k + j].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if u.data()[best * k + j] < T::zero() {
            for i in 0..rows {
                let x = &mut u.data_mut()[i * k + j];
                *x = -*x;
            }
            for x in &mut vt.data_mut()[j * cols..(j + 1) * cols] {
                *x = -*x;
            }
        }
    }
}

/// Much taller than wide: rotate the `n x n` triangular factor of a QR
/// instead of the full matrix and map the left vectors back through `q`.
fn svd_tall<T: Scalar>(a: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>, Tensor<T>)> {
    let (m, n) = (a.rows(), a.cols());
    if n < 2 || m < 2 * n {
        return jacobi_tall(a);
    }
    let (q, r) = householder_qr(a)?;
    let (ur, sigma, vt) = jacobi_tall(&r)?;
    Ok((q.matmul(&ur)?, sigma, vt))
}

/// Householder QR of a tall matrix: `q [m, n]` with orthonormal columns
/// and upper triangular `r [n, n]`.
fn householder_qr<T: Scalar>(a: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let (m, n) = (a.rows(), a.cols());
    let mut w = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            w[j * m + i] = a.data()[i * n + j];
        }
    }
    let mut reflectors: Vec<Vec<T>> = Vec::with_capacity(n);
    let two = T::lit(2.0);
    for k in 0..n {
        let x = &w[k * m + k..(k + 1) * m];
        let norm = x.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt();
        let mut v = x.to_vec();
        let alpha = if x[0] > T::zero() { -norm } else { norm };
        v[0] -= alpha;
        let vv = v.iter().fold(T::zero(), |acc, &t| acc + t * t);
        if norm == T::zero() || vv == T::zero() {
            reflectors.push(Vec::new());
            continue;
        }
        for j in k..n {
            let col = &mut w[j * m + k..(j + 1) * m];
            let dot = v.iter().zip(col.iter()).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            let f = two * dot / vv;
            col.iter_mut().zip(&v).for_each(|(c, &t)| *c -= f * t);
        }
        reflectors.push(v);
    }
    let mut r = Tensor::zeros(vec![n, n])?;
    for i in 0..n {
        for j in i..n {
            r.data_mut()[i * n + j] = w[j * m + i];
        }
    }
    // q = H_0 .. H_{n-1} applied to the first n columns of the identity
    let mut qc = vec![T::zero(); m * n];
    for j in 0..n {
        qc[j * m + j] = T::one();
    }
    for (k, v) in reflectors.iter().enumerate().rev() {
        if v.is_empty() {
            continue;
        }
        let vv = v.iter().fold(T::zero(), |acc, &t| acc + t * t);
        for j in 0..n {
            let col = &mut qc[j * m + k..(j + 1) * m];
            let dot = v.iter().zip(col.iter()).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            if dot != T::zero() {
                let f = two * dot / vv;
                col.iter_mut().zip(v).for_each(|(c, &t)| *c -= f * t);
            }
        }
    }
    let mut q = Tensor::zeros(vec![m, n])?;
    for j in 0..n {
        for i in 0..m {
            q.data_mut()[i * n + j] = qc[j * m + i];
        }
    }
    Ok((q, r))
}

/// One-sided Jacobi on a matrix with `rows >= cols`.
///
/// Returns `(u [rows, n], sigma, vt [n, n])`, sorted by decreasing sigma.
fn jacobi_tall<T: Scalar>(a: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>, Tensor<T>)> {
    let (m, n) = (a.rows(), a.cols());
    // column-major working copies
    let mut w = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            w[j * m + i] = a.data()[i * n + j];
        }
    }
    let mut v = vec![T::zero(); n * n];
    for j in 0..n {
        v[j * n + j] = T::one();
    }

    let tol = T::epsilon() * T::lit(m as f64);
    let max_sweeps = 100 * n.max(1);
    let mut converged = n < 2;
    let mut sweep = 0;
    while !converged {
        if sweep >= max_sweeps {
            return Err(Error::SvdNoConvergence(max_sweeps));
        }
        sweep += 1;
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let (head, tail) = w.split_at_mut(q * m);
                let cp = &mut head[p * m..(p + 1) * m];
                let cq = &mut tail[..m];
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for (&x, &y) in cp.iter().zip(cq.iter()) {
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if alpha == T::zero() || beta == T::zero() {
                    continue;
                }
                if gamma.abs() <= tol * (alpha.sqrt() * beta.sqrt()) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
                let (vh, vtail) = v.split_at_mut(q * n);
                let vp = &mut vh[p * n..(p + 1) * n];
                let vq = &mut vtail[..n];
                for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        converged = !rotated;
    }

    let norms: Vec<T> = (0..n)
        .map(|j| w[j * m..(j + 1) * m].iter().map(|&x| x * x).sum::<T>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable: equal values keep index order
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap_or(std::cmp::Ordering::Equal));

    let sigma_max = order.first().map(|&j| norms[j]).unwrap_or(T::zero());
    let null_thresh = sigma_max * T::epsilon() * T::lit(m.max(n) as f64);

    let mut ucols: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut next_basis = 0usize;
    for &j in &order {
        let s = norms[j];
        let col = &w[j * m..(j + 1) * m];
        let mut vec_j: Option<Vec<T>> = None;
        if s > null_thresh && s > T::zero() {
            vec_j = Some(col.iter().map(|&x| x / s).collect());
        }
        let vec_j = match vec_j {
            Some(mut cand) => {
                if orthogonalize(&mut cand, &ucols, T::lit(0.5)) {
                    cand
                } else {
                    complete_basis(&ucols, m, &mut next_basis)
                }
            }
            None => complete_basis(&ucols, m, &mut next_basis),
        };
        ucols.push(vec_j);
        sigma.push(s);
    }

    let mut u = Tensor::zeros(vec![m, n])?;
    for (jj, col) in ucols.iter().enumerate() {
        for i in 0..m {
            u.data_mut()[i * n + jj] = col[i];
        }
    }
    let mut vt = Tensor::zeros(vec![n, n])?;
    for (jj, &j) in order.iter().enumerate() {
        vt.data_mut()[jj * n..(jj + 1) * n].copy_from_slice(&v[j * n..(j + 1) * n]);
    }
    Ok((u, sigma, vt))
}

/// Re-orthogonalizes `cand` against `basis` (two Gram-Schmidt passes).
/// Returns false when less than `keep` of the candidate's norm survives.
fn orthogonalize<T: Scalar>(cand: &mut [T], basis: &[Vec<T>], keep: T) -> bool {
    let initial: T = cand.iter().map(|&x| x * x).sum::<T>().sqrt();
    if initial == T::zero() {
        return false;
    }
    for _ in 0..2 {
        for b in basis {
            let dot: T = cand.iter().zip(b).map(|(&x, &y)| x * y).sum();
            if dot != T::zero() {
                for (x, &y) in cand.iter_mut().zip(b) {
                    *x -= dot * y;
                }
            }
        }
    }
    let norm: T = cand.iter().map(|&x| x * x).sum::<T>().sqrt();
    if norm <= keep * initial {
        return false;
    }
    cand.iter_mut().for_each(|x| *x /= norm);
    true
}

// With k < m orthonormal vectors, some canonical e_i keeps at least
// sqrt((m - k) / m) >= 1/sqrt(m) of its norm, so half of that always
// accepts one. Vectors skipped earlier only lose norm as the basis grows.
fn complete_basis<T: Scalar>(basis: &[Vec<T>], m: usize, next: &mut usize) -> Vec<T> {
    let keep = T::lit(0.5 / (m as f64).sqrt());
    while *next < m {
        let mut e = vec![T::zero(); m];
        e[*next] = T::one();
        *next += 1;
        if orthogonalize(&mut e, basis, keep) {
            return e;
        }
    }
    unreachable!("an orthonormal set of size < m can always be extended")
}
