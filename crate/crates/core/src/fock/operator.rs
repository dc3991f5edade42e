use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::{Basis, FockState};
use crate::error::{Error, Result};

/// Tolerance for the Hermitian flag.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Complex sparse matrix mapping states of `domain` to states of `codomain`,
/// stored in compressed rows (rows index the codomain).
#[derive(Debug, Clone)]
pub struct SparseOperator {
    domain: Arc<Basis>,
    codomain: Arc<Basis>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
    hermitian: bool,
    empty_image: bool,
}

impl SparseOperator {
    /// Build from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(
        domain: Arc<Basis>,
        codomain: Arc<Basis>,
        mut triplets: Vec<(usize, usize, C64)>,
    ) -> Self {
        let rows = codomain.dim();
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut row_of = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            debug_assert!(r < rows && c < domain.dim());
            if let (Some(&lr), Some(&lc)) = (row_of.last(), cols.last()) {
                if lr == r && lc == c {
                    *vals.last_mut().unwrap() += v;
                    continue;
                }
            }
            row_of.push(r);
            cols.push(c);
            vals.push(v);
        }
        let mut keep_cols = Vec::with_capacity(cols.len());
        let mut keep_vals = Vec::with_capacity(vals.len());
        for ((r, c), v) in row_of.into_iter().zip(cols).zip(vals) {
            if v != C64::new(0.0, 0.0) {
                row_ptr[r + 1] += 1;
                keep_cols.push(c);
                keep_vals.push(v);
            }
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let empty_image = codomain.is_empty() && !domain.is_empty();
        Self {
            domain,
            codomain,
            row_ptr,
            cols: keep_cols,
            vals: keep_vals,
            hermitian: false,
            empty_image,
        }
    }

    /// Build by mapping each domain state to a list of `(image state, amplitude)`.
    /// Images outside `codomain` are an internal error and panic.
    pub fn from_map<F, I>(domain: Arc<Basis>, codomain: Arc<Basis>, f: F) -> Self
    where
        F: Fn(FockState) -> I,
        I: IntoIterator<Item = (FockState, C64)>,
    {
        let mut triplets = Vec::new();
        for (col, &s) in domain.states().iter().enumerate() {
            for (t, amp) in f(s) {
                let row = codomain
                    .index_of(&t)
                    .expect("operator image lies outside the codomain basis");
                triplets.push((row, col, amp));
            }
        }
        Self::from_triplets(domain, codomain, triplets)
    }

    pub fn diagonal_from<F>(basis: Arc<Basis>, f: F) -> Self
    where
        F: Fn(FockState) -> C64,
    {
        let triplets = basis
            .states()
            .iter()
            .enumerate()
            .map(|(i, &s)| (i, i, f(s)))
            .collect();
        Self::from_triplets(basis.clone(), basis, triplets)
    }

    pub fn identity(basis: Arc<Basis>) -> Self {
        let mut op = Self::diagonal_from(basis, |_| C64::new(1.0, 0.0));
        op.hermitian = true;
        op
    }

    pub fn zero(domain: Arc<Basis>, codomain: Arc<Basis>) -> Self {
        Self::from_triplets(domain, codomain, Vec::new())
    }

    pub fn domain(&self) -> &Arc<Basis> {
        &self.domain
    }

    pub fn codomain(&self) -> &Arc<Basis> {
        &self.codomain
    }

    pub fn dim_in(&self) -> usize {
        self.domain.dim()
    }

    pub fn dim_out(&self) -> usize {
        self.codomain.dim()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// True when the operator maps into an empty sector (it is identically zero).
    pub fn has_empty_image(&self) -> bool {
        self.empty_image
    }

    pub fn is_square(&self) -> bool {
        self.domain.same_space(&self.codomain)
    }

    pub fn hermitian_flag(&self) -> bool {
        self.hermitian
    }

    /// Row-major iterator over stored `(row, col, value)` entries.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim_out()).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.vals[k]))
        })
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `max |A - A†|` entrywise; infinite for non-square operators.
    pub fn hermiticity_error(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        self.sub(&self.adjoint())
            .map(|d| d.max_abs())
            .unwrap_or(f64::INFINITY)
    }

    /// Set the Hermitian flag after verifying it to [`HERMITIAN_TOL`].
    pub fn into_hermitian(mut self) -> Result<Self> {
        let err = self.hermiticity_error();
        if err >= HERMITIAN_TOL {
            return Err(Error::Domain(format!(
                "operator is not Hermitian (max |A - A†| = {err:e})"
            )));
        }
        self.hermitian = true;
        Ok(self)
    }

    /// Diagonal entries when the operator is square and purely diagonal.
    pub fn as_diagonal(&self) -> Option<Vec<C64>> {
        if !self.is_square() {
            return None;
        }
        let mut d = vec![C64::new(0.0, 0.0); self.dim_in()];
        for (r, c, v) in self.entries() {
            if r != c {
                return None;
            }
            d[r] = v;
        }
        Some(d)
    }

    pub fn adjoint(&self) -> Self {
        let triplets = self.entries().map(|(r, c, v)| (c, r, v.conj())).collect();
        let mut out = Self::from_triplets(self.codomain.clone(), self.domain.clone(), triplets);
        out.hermitian = self.hermitian;
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out.hermitian = self.hermitian && s.im == 0.0;
        out
    }

    fn check_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if !self.domain.same_space(&other.domain) || !self.codomain.same_space(&other.codomain) {
            return Err(Error::Shape(format!("{what}: operators act on different spaces")));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.axpy(C64::new(1.0, 0.0), other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(C64::new(-1.0, 0.0), other)
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: C64, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "sum")?;
        let triplets = self
            .entries()
            .chain(other.entries().map(|(r, c, v)| (r, c, a * v)))
            .collect();
        Ok(Self::from_triplets(
            self.domain.clone(),
            self.codomain.clone(),
            triplets,
        ))
    }

    /// Sum of operators sharing a shape. `ops` must be nonempty.
    pub fn sum<'a>(ops: impl IntoIterator<Item = &'a SparseOperator>) -> Result<Self> {
        let mut it = ops.into_iter();
        let first = it
            .next()
            .ok_or_else(|| Error::Shape("sum of zero operators".into()))?;
        let mut triplets: Vec<_> = first.entries().collect();
        for op in it {
            first.check_same_shape(op, "sum")?;
            triplets.extend(op.entries());
        }
        Ok(Self::from_triplets(
            first.domain.clone(),
            first.codomain.clone(),
            triplets,
        ))
    }

    /// Operator product `self * rhs` (apply `rhs` first).
    pub fn compose(&self, rhs: &Self) -> Result<Self> {
        if !self.domain.same_space(&rhs.codomain) {
            return Err(Error::Shape(format!(
                "compose: left operator expects {:?}, right operator produces {:?}",
                self.domain.space(),
                rhs.codomain.space()
            )));
        }
        // Column-oriented accumulation via the right operator's rows.
        let mut triplets = Vec::new();
        for r in 0..self.dim_out() {
            for (k, a) in self.row(r) {
                for (c, b) in rhs.row(k) {
                    triplets.push((r, c, a * b));
                }
            }
        }
        let mut out = Self::from_triplets(rhs.domain.clone(), self.codomain.clone(), triplets);
        out.empty_image = self.empty_image || rhs.empty_image;
        Ok(out)
    }

    /// `self * other - other * self` for square operators on one space.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.compose(other)?.sub(&other.compose(self)?)
    }

    /// `self * other + other * self`.
    pub fn anticommutator(&self, other: &Self) -> Result<Self> {
        self.compose(other)?.add(&other.compose(self)?)
    }

    /// `y = A x`.
    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.dim_in());
        debug_assert_eq!(y.len(), self.dim_out());
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yr = acc;
        }
    }

    /// `y += a * A x`.
    pub fn apply_add(&self, a: C64, x: &[C64], y: &mut [C64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yr += a * acc;
        }
    }

    pub fn apply_vec(&self, x: &[C64]) -> Result<Vec<C64>> {
        if x.len() != self.dim_in() {
            return Err(Error::Shape(format!(
                "operator expects dimension {}, vector has {}",
                self.dim_in(),
                x.len()
            )));
        }
        let mut y = vec![C64::new(0.0, 0.0); self.dim_out()];
        self.apply_into(x, &mut y);
        Ok(y)
    }

    /// `A X` for a dense `X` with `dim_in` rows.
    pub fn mul_dense(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.dim_out(), x.ncols());
        for c in 0..x.ncols() {
            let col = x.column(c);
            for r in 0..self.dim_out() {
                let mut acc = C64::new(0.0, 0.0);
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += self.vals[k] * col[self.cols[k]];
                }
                out[(r, c)] = acc;
            }
        }
        out
    }

    /// `X A` for a dense `X` with `dim_out` columns.
    pub fn dense_mul(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(x.nrows(), self.dim_in());
        for r in 0..self.dim_out() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let (c, v) = (self.cols[k], self.vals[k]);
                for i in 0..x.nrows() {
                    out[(i, c)] += x[(i, r)] * v;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim_out(), self.dim_in());
        for (r, c, v) in self.entries() {
            m[(r, c)] += v;
        }
        m
    }

    /// Largest stored entry count in any row.
    pub fn max_row_nnz(&self) -> usize {
        self.row_ptr.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    /// Crude norm bound `max_r Σ_c |A_rc|` (infinity norm).
    pub fn norm_bound(&self) -> f64 {
        (0..self.dim_out())
            .map(|r| self.row(r).map(|(_, v)| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::Basis;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn triplets_merge_and_drop_zero() {
        let b = Basis::sector(2, 1, 0).unwrap();
        let op = SparseOperator::from_triplets(
            b.clone(),
            b.clone(),
            vec![(0, 1, c(1.0)), (0, 1, c(2.0)), (1, 0, c(1.0)), (1, 0, c(-1.0))],
        );
        assert_eq!(op.nnz(), 1);
        assert_eq!(op.to_dense()[(0, 1)], c(3.0));
    }

    #[test]
    fn hermitian_flag_checks() {
        let b = Basis::sector(2, 1, 0).unwrap();
        let bad = SparseOperator::from_triplets(b.clone(), b.clone(), vec![(0, 1, c(1.0))]);
        assert!(bad.into_hermitian().is_err());
        let good = SparseOperator::from_triplets(
            b.clone(),
            b.clone(),
            vec![(0, 1, C64::new(0.0, 1.0)), (1, 0, C64::new(0.0, -1.0))],
        );
        assert!(good.into_hermitian().unwrap().hermitian_flag());
    }

    #[test]
    fn dense_products_match() {
        let b = Basis::sector(3, 1, 1).unwrap();
        let op = SparseOperator::from_map(b.clone(), b.clone(), |s| {
            let mut v = vec![(s, c(s.up as f64))];
            if let Some((t, sg)) = s.apply_product(&[(1, crate::fock::Spin::Up, true), (0, crate::fock::Spin::Up, false)]) {
                v.push((t, C64::new(0.5 * sg, 0.25)));
            }
            v
        });
        let x = DMatrix::from_fn(b.dim(), b.dim(), |i, j| C64::new(i as f64 - j as f64, (i * j) as f64 * 0.1));
        let dense = op.to_dense();
        assert!((op.mul_dense(&x) - &dense * &x).norm() < 1e-12);
        assert!((op.dense_mul(&x) - &x * &dense).norm() < 1e-12);
        let ad = op.adjoint().to_dense();
        assert!((ad - dense.adjoint()).norm() < 1e-14);
    }

    #[test]
    fn shape_mismatch() {
        let a = Basis::sector(2, 1, 0).unwrap();
        let b = Basis::sector(2, 1, 1).unwrap();
        let x = SparseOperator::identity(a);
        let y = SparseOperator::identity(b);
        assert!(matches!(x.compose(&y), Err(Error::Shape(_))));
        assert!(matches!(x.add(&y), Err(Error::Shape(_))));
        assert!(matches!(x.apply_vec(&[C64::new(1.0, 0.0)]), Err(Error::Shape(_))));
    }
}
