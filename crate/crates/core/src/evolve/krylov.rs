use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock::{SparseOperator, StateVector};
use crate::linalg::{dot, tridiagonal_eigh, vec_norm};

/// Lanczos subspace size.
pub const KRYLOV_DIM: usize = 20;

/// `e^{-iHt} ψ` for static Hermitian `H` by Lanczos projection, with
/// substeps shrunk until the a-posteriori error estimate meets `tol`.
#[derive(Debug, Clone)]
pub struct KrylovPropagator {
    h: SparseOperator,
    pub m: usize,
    pub tol: f64,
}

impl KrylovPropagator {
    pub fn new(h: &SparseOperator) -> Result<Self> {
        if !h.hermitian_flag() {
            return Err(Error::Domain("Krylov propagation needs a Hermitian operator".into()));
        }
        Ok(Self {
            h: h.clone(),
            m: KRYLOV_DIM,
            tol: 1e-12,
        })
    }

    /// Orthonormal Lanczos basis and tridiagonal coefficients from `v0`.
    fn lanczos(&self, v0: &[C64]) -> (Vec<Vec<C64>>, Vec<f64>, Vec<f64>, f64) {
        let d = v0.len();
        let m = self.m.min(d);
        let mut basis = vec![v0.to_vec()];
        let mut alpha = Vec::with_capacity(m);
        let mut beta = Vec::with_capacity(m);
        let mut w = vec![C64::new(0.0, 0.0); d];
        loop {
            let j = basis.len() - 1;
            self.h.apply_into(&basis[j], &mut w);
            let a = dot(&basis[j], &w).re;
            alpha.push(a);
            // Full reorthogonalisation, twice.
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &w);
                    for (wi, qi) in w.iter_mut().zip(q) {
                        *wi -= c * qi;
                    }
                }
            }
            let b = vec_norm(&w);
            if basis.len() == m || b < 1e-14 {
                return (basis, alpha, beta, b);
            }
            beta.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }
    }

    fn step(&self, v: &[C64], norm: f64, t: f64) -> (Vec<C64>, f64) {
        let (q, alpha, beta, tail) = self.lanczos(v);
        let k = alpha.len();
        let (vals, vecs) = tridiagonal_eigh(&alpha, &beta);
        // c = exp(-i T t) e_1
        let c: Vec<C64> = (0..k)
            .map(|r| {
                (0..k)
                    .map(|s| C64::from_polar(vecs[(r, s)] * vecs[(0, s)], -vals[s] * t))
                    .sum()
            })
            .collect();
        let err = tail * c[k - 1].norm() * norm;
        let d = v.len();
        let mut out = vec![C64::new(0.0, 0.0); d];
        for (cj, qj) in c.iter().zip(&q) {
            for (o, x) in out.iter_mut().zip(qj) {
                *o += cj * x * norm;
            }
        }
        (out, err)
    }

    /// Propagate `psi` by time `t` (may be negative).
    pub fn propagate(&self, psi: &StateVector, t: f64) -> Result<StateVector> {
        if !psi.basis().same_space(self.h.domain()) {
            return Err(Error::Shape("state and Hamiltonian spaces differ".into()));
        }
        let mut v = psi.amplitudes().to_vec();
        let norm0 = vec_norm(&v);
        if norm0 == 0.0 || t == 0.0 {
            return Ok(psi.clone());
        }
        let bound = self.h.norm_bound().max(1e-12);
        let mut remaining = t.abs();
        let sign = t.signum();
        let mut sub = remaining.min(self.m as f64 / (2.0 * bound));
        let mut halvings = 0;
        while remaining > 0.0 {
            let h = sub.min(remaining);
            let norm = vec_norm(&v);
            let unit: Vec<C64> = v.iter().map(|x| x / norm).collect();
            let (next, err) = self.step(&unit, norm, sign * h);
            if err > self.tol * h / t.abs() && h > 1e-14 {
                sub = h * 0.5;
                halvings += 1;
                if halvings > 200 {
                    return Err(Error::Convergence {
                        iterations: halvings,
                        residual: err,
                    });
                }
                continue;
            }
            v = next;
            remaining -= h;
            if err < 0.01 * self.tol * h / t.abs() {
                sub = h * 1.5;
            }
        }
        StateVector::new(psi.basis().clone(), v)
    }

    /// States at each of `times`, propagating incrementally.
    pub fn evolve(&self, psi0: &StateVector, times: &[f64]) -> Result<Vec<StateVector>> {
        let mut out = Vec::with_capacity(times.len());
        let mut cur = psi0.clone();
        let mut t = 0.0;
        for &tk in times {
            cur = self.propagate(&cur, tk - t)?;
            t = tk;
            out.push(cur.clone());
        }
        Ok(out)
    }
}
