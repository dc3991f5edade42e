use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::{Basis, FockState, SparseOperator};
use crate::error::{Error, Result};

/// Normalization tolerance for state vectors.
pub const NORM_TOL: f64 = 1e-10;

/// Complex amplitudes over a basis.
#[derive(Debug, Clone)]
pub struct StateVector {
    basis: Arc<Basis>,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(basis: Arc<Basis>, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != basis.dim() {
            return Err(Error::Shape(format!(
                "basis has dimension {}, got {} amplitudes",
                basis.dim(),
                amps.len()
            )));
        }
        Ok(Self { basis, amps })
    }

    pub fn zeros(basis: Arc<Basis>) -> Self {
        let amps = vec![C64::new(0.0, 0.0); basis.dim()];
        Self { basis, amps }
    }

    /// Unit vector on a single occupation state.
    pub fn basis_state(basis: Arc<Basis>, state: FockState) -> Result<Self> {
        let i = basis
            .index_of(&state)
            .ok_or_else(|| Error::Domain(format!("{state:?} is not in the basis")))?;
        let mut v = Self::zeros(basis);
        v.amps[i] = C64::new(1.0, 0.0);
        Ok(v)
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() <= NORM_TOL
    }

    /// Rescale to unit norm; errors on the zero vector.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Domain("cannot normalize a zero vector".into()));
        }
        self.amps.iter_mut().for_each(|a| *a /= n);
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if !self.basis.same_space(&other.basis) {
            return Err(Error::Shape("inner product across different spaces".into()));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `|<self|other>|^2`.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }
}

/// Exact sparse matrix-vector product; the result lives on `op`'s codomain.
pub fn apply(op: &SparseOperator, psi: &StateVector) -> Result<StateVector> {
    if !op.domain().same_space(psi.basis()) {
        return Err(Error::Shape(format!(
            "operator acts on {:?}, state lives in {:?}",
            op.domain().space(),
            psi.basis().space()
        )));
    }
    let amps = op.apply_vec(psi.amplitudes())?;
    Ok(StateVector {
        basis: op.codomain().clone(),
        amps,
    })
}

/// Density matrix over a basis.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    basis: Arc<Basis>,
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn new(basis: Arc<Basis>, matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != basis.dim() || matrix.ncols() != basis.dim() {
            return Err(Error::Shape(format!(
                "basis has dimension {}, matrix is {}x{}",
                basis.dim(),
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { basis, matrix })
    }

    /// `|psi><psi|` for a normalized `psi`.
    pub fn pure(psi: &StateVector) -> Self {
        let v = nalgebra::DVector::from_column_slice(psi.amplitudes());
        let matrix = &v * v.adjoint();
        Self {
            basis: psi.basis().clone(),
            matrix,
        }
    }

    /// `1 / d` on the whole basis.
    pub fn maximally_mixed(basis: Arc<Basis>) -> Self {
        let d = basis.dim();
        let matrix = DMatrix::from_diagonal_element(d, d, C64::new(1.0 / d as f64, 0.0));
        Self { basis, matrix }
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<C64> {
        &mut self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint())
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    /// `rho <- (rho + rho†) / 2`.
    pub fn hermitize(&mut self) {
        let adj = self.matrix.adjoint();
        self.matrix += adj;
        self.matrix *= C64::new(0.5, 0.0);
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let mut h = self.matrix.clone();
        h += self.matrix.adjoint();
        h *= C64::new(0.5, 0.0);
        h.symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest off-diagonal modulus in the occupation basis.
    pub fn max_off_diagonal(&self) -> f64 {
        let d = self.dim();
        let mut m = 0.0f64;
        for j in 0..d {
            for i in 0..d {
                if i != j {
                    m = m.max(self.matrix[(i, j)].norm());
                }
            }
        }
        m
    }
}

/// States on which operator expectation values can be taken.
pub trait Expectation {
    fn basis(&self) -> &Arc<Basis>;

    /// `<O>` for a square operator on this state's space.
    fn expect(&self, op: &SparseOperator) -> Result<C64>;
}

fn check_square_on(op: &SparseOperator, basis: &Basis) -> Result<()> {
    if !op.domain().same_space(basis) || !op.codomain().same_space(basis) {
        return Err(Error::Shape(
            "expectation value of an operator not acting within the state's space".into(),
        ));
    }
    Ok(())
}

impl Expectation for StateVector {
    fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    fn expect(&self, op: &SparseOperator) -> Result<C64> {
        check_square_on(op, &self.basis)?;
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..op.dim_out() {
            let mut row = C64::new(0.0, 0.0);
            for (c, v) in op.row(r) {
                row += v * self.amps[c];
            }
            acc += self.amps[r].conj() * row;
        }
        Ok(acc)
    }
}

impl Expectation for DensityMatrix {
    fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    fn expect(&self, op: &SparseOperator) -> Result<C64> {
        check_square_on(op, &self.basis)?;
        // Tr(rho O) = Σ_{r,c} O_rc rho_cr
        Ok(op.entries().map(|(r, c, v)| v * self.matrix[(c, r)]).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::Basis;

    #[test]
    fn identity_apply_is_noop() {
        let b = Basis::sector(3, 1, 1).unwrap();
        let amps: Vec<C64> = (0..b.dim()).map(|i| C64::new(i as f64, -(i as f64) * 0.5)).collect();
        let psi = StateVector::new(b.clone(), amps).unwrap().normalized().unwrap();
        let out = apply(&SparseOperator::identity(b), &psi).unwrap();
        assert_eq!(out.amplitudes(), psi.amplitudes());
    }

    #[test]
    fn pure_and_vector_expectations_agree() {
        let b = Basis::sector(3, 2, 1).unwrap();
        let amps: Vec<C64> = (0..b.dim()).map(|i| C64::new((i as f64).sin(), (i as f64).cos())).collect();
        let psi = StateVector::new(b.clone(), amps).unwrap().normalized().unwrap();
        let op = SparseOperator::diagonal_from(b, |s| C64::new(s.up as f64, 0.0));
        let rho = DensityMatrix::pure(&psi);
        assert!((psi.expect(&op).unwrap() - rho.expect(&op).unwrap()).norm() < 1e-12);
        assert!((rho.trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wrong_dimension() {
        let b = Basis::sector(2, 1, 1).unwrap();
        assert!(matches!(StateVector::new(b, vec![]), Err(Error::Shape(_))));
    }
}
