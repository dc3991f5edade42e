//! Dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

/// Eigen-decomposition of a Hermitian matrix with eigenvalues ascending.
pub fn eigh(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = m.nrows();
    let mut sym = m.clone();
    sym += m.adjoint();
    sym *= C64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `V diag(f(λ)) V†` for a Hermitian matrix.
pub fn hermitian_function<F: Fn(f64) -> f64>(values: &[f64], vectors: &DMatrix<C64>, f: F) -> DMatrix<C64> {
    let mut scaled = vectors.clone();
    for (c, &v) in values.iter().enumerate() {
        let w = C64::new(f(v), 0.0);
        scaled.column_mut(c).iter_mut().for_each(|x| *x *= w);
    }
    scaled * vectors.adjoint()
}

/// Group ascending values into clusters separated by more than `tol`;
/// returns `(representative, start, len)` per cluster.
pub fn cluster_sorted(values: &[f64], tol: f64) -> Vec<(f64, usize, usize)> {
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        match out.last_mut() {
            Some((rep, start, len)) if (v - values[*start + *len - 1]).abs() <= tol => {
                *len += 1;
                *rep += (v - *rep) / *len as f64;
            }
            _ => out.push((v, i, 1)),
        }
    }
    out
}

pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Real symmetric tridiagonal eigenproblem (small, dense).
pub fn tridiagonal_eigh(alpha: &[f64], beta: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let k = alpha.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = t.symmetric_eigen();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(k, k, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn to_dvector(v: &[C64]) -> DVector<C64> {
    DVector::from_column_slice(v)
}
