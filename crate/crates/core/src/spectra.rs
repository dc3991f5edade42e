//! Ground states and canonical thermal states within a sector.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fock::{DensityMatrix, SparseOperator, StateVector};
use crate::linalg::{dot, eigh, hermitian_function, tridiagonal_eigh, vec_norm};
use crate::rng::rng_from_seed;

/// Eigenvalue and normalized eigenvector.
#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    pub vector: StateVector,
    /// `‖H v - E v‖₂`
    pub residual: f64,
    /// Distance to the next distinct eigenvalue, when one was resolved.
    pub gap: Option<f64>,
    /// Set when `gap < 1e-8`; the returned vector is then one member of the
    /// ground space.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    /// Krylov dimension per restart.
    pub max_krylov: usize,
    pub max_restarts: usize,
    /// Residual target relative to `max(1, ‖H‖_max)`.
    pub tol: f64,
    pub seed: u64,
    /// Sectors up to this dimension are diagonalized densely.
    pub dense_threshold: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            max_krylov: 200,
            max_restarts: 20,
            tol: 1e-11,
            seed: 0x5EED,
            dense_threshold: 512,
        }
    }
}

const DEGENERACY_GAP: f64 = 1e-8;

fn check_hermitian(h: &SparseOperator) -> Result<()> {
    if !h.is_square() {
        return Err(Error::Domain("Hamiltonian must be square".into()));
    }
    if !h.hermitian_flag() {
        let err = h.hermiticity_error();
        if err >= 1e-12 {
            return Err(Error::Domain(format!("Hamiltonian is not Hermitian (max |H - H†| = {err:e})")));
        }
    }
    Ok(())
}

fn residual_of(h: &SparseOperator, e: f64, v: &[C64]) -> f64 {
    let mut hv = vec![C64::new(0.0, 0.0); v.len()];
    h.apply_into(v, &mut hv);
    hv.iter().zip(v).map(|(a, b)| (a - b * e).norm_sqr()).sum::<f64>().sqrt()
}

/// Lowest eigenpair with default options.
pub fn ground_state(h: &SparseOperator) -> Result<EigenPair> {
    ground_state_with(h, &LanczosOptions::default())
}

pub fn ground_state_with(h: &SparseOperator, opts: &LanczosOptions) -> Result<EigenPair> {
    check_hermitian(h)?;
    let n = h.dim_in();
    if n == 0 {
        return Err(Error::Domain("empty sector has no ground state".into()));
    }
    if n <= opts.dense_threshold {
        return dense_ground_state(h);
    }
    lanczos_ground_state(h, opts)
}

/// Dense reference diagonalization.
pub fn dense_ground_state(h: &SparseOperator) -> Result<EigenPair> {
    check_hermitian(h)?;
    let (vals, vecs) = eigh(&h.to_dense());
    let v: Vec<C64> = vecs.column(0).iter().copied().collect();
    let residual = residual_of(h, vals[0], &v);
    let gap = vals.get(1).map(|e1| e1 - vals[0]);
    Ok(EigenPair {
        value: vals[0],
        vector: StateVector::new(h.domain().clone(), v)?,
        residual,
        gap,
        degenerate: gap.is_some_and(|g| g < DEGENERACY_GAP),
    })
}

/// Full spectrum of a Hermitian operator, ascending.
pub fn dense_spectrum(h: &SparseOperator, dense_limit: usize) -> Result<(Vec<f64>, DMatrix<C64>)> {
    check_hermitian(h)?;
    if h.dim_in() > dense_limit {
        return Err(Error::Capacity {
            what: "dense diagonalization".into(),
            dim: h.dim_in(),
            limit: dense_limit,
        });
    }
    Ok(eigh(&h.to_dense()))
}

fn lanczos_ground_state(h: &SparseOperator, opts: &LanczosOptions) -> Result<EigenPair> {
    let n = h.dim_in();
    let scale = h.max_abs().max(1.0);
    let target = opts.tol * scale;
    let mut rng = rng_from_seed(opts.seed);
    let mut start: Vec<C64> = (0..n)
        .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let nrm = vec_norm(&start);
    start.iter_mut().for_each(|x| *x /= nrm);

    let mut last_residual = f64::INFINITY;
    let mut iterations = 0;
    for _restart in 0..=opts.max_restarts {
        let kmax = opts.max_krylov.min(n);
        let mut basis: Vec<Vec<C64>> = vec![start.clone()];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut w = vec![C64::new(0.0, 0.0); n];
        let mut best: Option<(f64, Vec<f64>, Option<f64>)> = None;
        for k in 0..kmax {
            iterations += 1;
            h.apply_into(&basis[k], &mut w);
            let a = dot(&basis[k], &w).re;
            alpha.push(a);
            // Full reorthogonalization (twice is enough).
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &w);
                    w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
                }
            }
            let b = vec_norm(&w);
            let (vals, vecs) = tridiagonal_eigh(&alpha, &beta);
            let y_last = vecs[(alpha.len() - 1, 0)];
            let ritz_res = b * y_last.abs();
            let gap = vals.get(1).map(|v| v - vals[0]);
            best = Some((vals[0], vecs.column(0).iter().copied().collect(), gap));
            let exhausted = b < 1e-14 * scale || k + 1 == n;
            if ritz_res < 0.1 * target || exhausted {
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }
        let (_, y, gap) = best.expect("at least one Lanczos step");
        let mut v = vec![C64::new(0.0, 0.0); n];
        for (q, &c) in basis.iter().zip(&y) {
            v.iter_mut().zip(q).for_each(|(x, qq)| *x += qq * c);
        }
        let nrm = vec_norm(&v);
        v.iter_mut().for_each(|x| *x /= nrm);
        // Rayleigh quotient of the normalized Ritz vector.
        let mut hv = vec![C64::new(0.0, 0.0); n];
        h.apply_into(&v, &mut hv);
        let e_rq = dot(&v, &hv).re;
        let residual = residual_of(h, e_rq, &v);
        last_residual = residual;
        if residual <= target {
            return Ok(EigenPair {
                value: e_rq,
                vector: StateVector::new(h.domain().clone(), v)?,
                residual,
                gap,
                degenerate: gap.is_some_and(|g| g < DEGENERACY_GAP),
            });
        }
        start = v;
    }
    Err(Error::Convergence {
        iterations,
        residual: last_residual,
    })
}

/// `ρ = exp(-βH) / Z` restricted to one sector.
#[derive(Debug, Clone)]
pub struct ThermalState {
    pub beta: f64,
    pub rho: DensityMatrix,
}

pub fn thermal_state(h: &SparseOperator, beta: f64, dense_limit: usize) -> Result<ThermalState> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::Domain(format!("inverse temperature must be non-negative, got {beta}")));
    }
    let (vals, vecs) = dense_spectrum(h, dense_limit)?;
    let e0 = vals[0];
    let weights: Vec<f64> = vals.iter().map(|e| (-beta * (e - e0)).exp()).collect();
    let z: f64 = weights.iter().sum();
    let matrix = hermitian_function(&vals, &vecs, |e| (-beta * (e - e0)).exp() / z);
    let mut rho = DensityMatrix::new(h.domain().clone(), matrix)?;
    rho.hermitize();
    Ok(ThermalState { beta, rho })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{Basis, Expectation};
    use crate::model::{build_hubbard, HubbardParams};

    fn hubbard(m: usize, nu: usize, nd: usize, u: f64) -> SparseOperator {
        let b = Basis::sector(m, nu, nd).unwrap();
        build_hubbard(&HubbardParams::new(m, 1.0, u).unwrap(), &b).unwrap()
    }

    #[test]
    fn small_ground_states() {
        let g = ground_state(&hubbard(2, 1, 1, 0.0)).unwrap();
        assert!((g.value + 2.0).abs() < 1e-12);
        let g = ground_state(&hubbard(2, 1, 1, 4.0)).unwrap();
        assert!((g.value - (2.0 - 2.0 * 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn lanczos_matches_dense() {
        let opts = LanczosOptions { dense_threshold: 0, ..Default::default() };
        for (m, nu, nd, u) in [(4, 2, 2, 4.0), (5, 2, 3, 1.0), (6, 3, 3, 2.5), (6, 2, 2, 0.5)] {
            let h = hubbard(m, nu, nd, u);
            let l = ground_state_with(&h, &opts).unwrap();
            let d = dense_ground_state(&h).unwrap();
            assert!((l.value - d.value).abs() < 1e-10, "{m} {nu} {nd}: {} vs {}", l.value, d.value);
            assert!(l.residual <= 1e-8 * h.max_abs());
            if !d.degenerate {
                assert!(l.vector.fidelity(&d.vector).unwrap() > 1.0 - 1e-9);
            }
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let b = Basis::sector(2, 1, 0).unwrap();
        let op = SparseOperator::from_triplets(b.clone(), b, vec![(0, 1, C64::new(1.0, 0.0))]);
        assert!(matches!(ground_state(&op), Err(Error::Domain(_))));
    }

    #[test]
    fn thermal_limits() {
        let h = hubbard(4, 2, 2, 4.0);
        let t0 = thermal_state(&h, 0.0, 5000).unwrap();
        let (vals, _) = eigh(t0.rho.matrix());
        assert!(vals.iter().all(|v| (v - 1.0 / 36.0).abs() < 1e-12));

        let cold = thermal_state(&h, 1e3, 5000).unwrap();
        let g = dense_ground_state(&h).unwrap();
        assert!(!g.degenerate);
        let f = DensityMatrix::pure(&g.vector);
        let overlap: f64 = (cold.rho.matrix() * f.matrix()).trace().re;
        assert!(overlap >= 1.0 - 1e-6);
        assert!(matches!(thermal_state(&h, 1.0, 10), Err(Error::Capacity { .. })));
    }

    #[test]
    fn thermal_energy_bounds_and_monotone() {
        let h = hubbard(6, 3, 3, 2.5);
        let t = thermal_state(&h, 0.8, 5000).unwrap();
        assert!((t.rho.trace().re - 1.0).abs() < 1e-10);
        assert!(t.rho.min_eigenvalue() >= -1e-10);
        let e = t.rho.expect(&h).unwrap().re;
        let (vals, _) = dense_spectrum(&h, 5000).unwrap();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!(vals[0] < e && e < mean);

        let h = hubbard(4, 2, 2, 2.5);
        let energies: Vec<f64> = [0.0, 0.1, 0.4, 0.8, 1.6, 3.2, 10.0]
            .iter()
            .map(|&b| thermal_state(&h, b, 5000).unwrap().rho.expect(&h).unwrap().re)
            .collect();
        assert!(energies.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
}
