use std::sync::Arc;

use num_complex::Complex64 as C64;

use super::{bipartite_phase, Basis, SparseOperator, Spin};
use crate::error::{Error, Result};

fn check_site(basis: &Basis, site: usize) -> Result<()> {
    if site >= basis.sites() {
        return Err(Error::Domain(format!(
            "site {site} out of range for {} sites",
            basis.sites()
        )));
    }
    Ok(())
}

/// `c†_{spin,site}` (`dagger = true`) or `c_{spin,site}` acting on `basis_in`.
///
/// The image is the neighbouring sector; when that sector does not exist the
/// zero operator into an empty space is returned, see
/// [`SparseOperator::has_empty_image`].
pub fn build_fermion_op(
    basis_in: &Arc<Basis>,
    site: usize,
    spin: Spin,
    dagger: bool,
) -> Result<SparseOperator> {
    check_site(basis_in, site)?;
    let delta = if dagger { 1 } else { -1 };
    let image = match spin {
        Spin::Up => basis_in.shifted(delta, 0),
        Spin::Down => basis_in.shifted(0, delta),
    };
    if image.is_empty() {
        return Ok(SparseOperator::zero(basis_in.clone(), image));
    }
    Ok(SparseOperator::from_map(basis_in.clone(), image, |s| {
        s.apply_ladder(site, spin, dagger)
            .map(|(t, sign)| (t, C64::new(sign, 0.0)))
    }))
}

/// `n_{spin,site}`.
pub fn build_number_op(basis: &Arc<Basis>, site: usize, spin: Spin) -> Result<SparseOperator> {
    check_site(basis, site)?;
    SparseOperator::diagonal_from(basis.clone(), |s| {
        C64::new(s.occupied(site, spin) as u8 as f64, 0.0)
    })
    .into_hermitian()
}

/// Local and total η-pairing operators on one basis.
///
/// `plus[i]` maps `basis` to the sector with one more doublon, `minus[i]` to
/// the sector with one fewer. `pair` (`η⁺η⁻`) and the `z` operators are square.
#[derive(Debug, Clone)]
pub struct EtaOperators {
    pub plus: Vec<SparseOperator>,
    pub minus: Vec<SparseOperator>,
    pub z: Vec<SparseOperator>,
    pub total_plus: SparseOperator,
    pub total_minus: SparseOperator,
    pub total_z: SparseOperator,
    pub pair: SparseOperator,
}

/// η⁺_i = (-1)^i c†_{↑,i} c†_{↓,i}, its adjoint, η^z_i = (n_{↑,i} + n_{↓,i} - 1)/2,
/// and their sums.
pub fn build_eta_ops(basis: &Arc<Basis>) -> Result<EtaOperators> {
    let m = basis.sites();
    let mut plus = Vec::with_capacity(m);
    let mut minus = Vec::with_capacity(m);
    let mut z = Vec::with_capacity(m);
    for i in 0..m {
        let phase = C64::new(bipartite_phase(i), 0.0);
        let create_down = build_fermion_op(basis, i, Spin::Down, true)?;
        let create_up = build_fermion_op(create_down.codomain(), i, Spin::Up, true)?;
        plus.push(create_up.compose(&create_down)?.scale(phase));

        let kill_up = build_fermion_op(basis, i, Spin::Up, false)?;
        let kill_down = build_fermion_op(kill_up.codomain(), i, Spin::Down, false)?;
        minus.push(kill_down.compose(&kill_up)?.scale(phase));

        z.push(
            SparseOperator::diagonal_from(basis.clone(), |s| {
                let n = s.occupied(i, Spin::Up) as u8 + s.occupied(i, Spin::Down) as u8;
                C64::new(0.5 * (n as f64 - 1.0), 0.0)
            })
            .into_hermitian()?,
        );
    }
    let total_plus = SparseOperator::sum(&plus)?;
    let total_minus = SparseOperator::sum(&minus)?;
    let total_z = SparseOperator::sum(&z)?.into_hermitian()?;
    // η⁺ from the lower sector back into `basis`.
    let raise_back = total_minus.adjoint();
    let pair = raise_back.compose(&total_minus)?.into_hermitian()?;
    Ok(EtaOperators {
        plus,
        minus,
        z,
        total_plus,
        total_minus,
        total_z,
        pair,
    })
}

/// Per-site `s^z_i = n_{↑,i} - n_{↓,i}` and their sum.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub s_z: Vec<SparseOperator>,
    pub total: SparseOperator,
}

pub fn build_spin_ops(basis: &Arc<Basis>) -> Result<SpinOperators> {
    let s_z = (0..basis.sites())
        .map(|i| {
            SparseOperator::diagonal_from(basis.clone(), |s| C64::new(s.spin_z(i) as f64, 0.0))
                .into_hermitian()
        })
        .collect::<Result<Vec<_>>>()?;
    let total = SparseOperator::sum(&s_z)?.into_hermitian()?;
    Ok(SpinOperators { s_z, total })
}

/// Spin SU(2) generators normalised so that `[S⁺, S⁻] = 2 S^z`:
/// `S⁺ = Σ c†_{↑,i} c_{↓,i}`, `S^z = Σ s^z_i / 2`.
#[derive(Debug, Clone)]
pub struct SpinSu2 {
    pub plus: SparseOperator,
    pub minus: SparseOperator,
    pub z: SparseOperator,
}

pub fn build_spin_su2(basis: &Arc<Basis>) -> Result<SpinSu2> {
    let image = basis.shifted(1, -1);
    let mut terms = Vec::with_capacity(basis.sites());
    for i in 0..basis.sites() {
        let kill_down = build_fermion_op(basis, i, Spin::Down, false)?;
        let create_up = build_fermion_op(kill_down.codomain(), i, Spin::Up, true)?;
        terms.push(create_up.compose(&kill_down)?);
    }
    let plus = if image.is_empty() {
        SparseOperator::zero(basis.clone(), image)
    } else {
        SparseOperator::sum(&terms)?
    };
    let spins = build_spin_ops(basis)?;
    let z = spins.total.scale(C64::new(0.5, 0.0));
    let minus = plus.adjoint();
    Ok(SpinSu2 { plus, minus, z })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{apply, Basis, Expectation, FockState, StateVector};
    use nalgebra::DMatrix;

    fn max_abs(m: &DMatrix<C64>) -> f64 {
        m.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// All 2M fermion modes on the full space as dense matrices.
    fn dense_modes(m: usize) -> Vec<(DMatrix<C64>, DMatrix<C64>)> {
        let full = Basis::full(m).unwrap();
        let mut out = Vec::new();
        for site in 0..m {
            for spin in [Spin::Up, Spin::Down] {
                let c = build_fermion_op(&full, site, spin, false).unwrap().to_dense();
                let cd = build_fermion_op(&full, site, spin, true).unwrap().to_dense();
                out.push((c, cd));
            }
        }
        out
    }

    #[test]
    fn canonical_anticommutation() {
        for m in 1..=3 {
            let modes = dense_modes(m);
            let d = 1 << (2 * m);
            let id = DMatrix::<C64>::identity(d, d);
            for (a, (ca, cda)) in modes.iter().enumerate() {
                assert!((cda - ca.adjoint()).norm() < 1e-14);
                for (b, (cb, cdb)) in modes.iter().enumerate() {
                    let anti = ca * cdb + cdb * ca;
                    let expected = if a == b { id.clone() } else { DMatrix::zeros(d, d) };
                    assert!(max_abs(&(anti - expected)) < 1e-12, "{{c_{a}, c†_{b}}}");
                    assert!(max_abs(&(ca * cb + cb * ca)) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn creation_on_vacuum() {
        let vac = Basis::sector(2, 0, 0).unwrap();
        let op = build_fermion_op(&vac, 0, Spin::Up, true).unwrap();
        let psi = StateVector::basis_state(vac, FockState::VACUUM).unwrap();
        let out = apply(&op, &psi).unwrap();
        let i = out.basis().index_of(&FockState::new(1, 0)).unwrap();
        assert_eq!(out.amplitudes()[i], C64::new(1.0, 0.0));
    }

    #[test]
    fn sector_anticommutator_is_identity() {
        let b = Basis::sector(3, 1, 2).unwrap();
        let cd = build_fermion_op(&b, 0, Spin::Up, true).unwrap();
        let c_hi = build_fermion_op(cd.codomain(), 0, Spin::Up, false).unwrap();
        let c = build_fermion_op(&b, 0, Spin::Up, false).unwrap();
        let cd_lo = build_fermion_op(c.codomain(), 0, Spin::Up, true).unwrap();
        let sum = c_hi.compose(&cd).unwrap().add(&cd_lo.compose(&c).unwrap()).unwrap();
        let id = SparseOperator::identity(b);
        assert!(sum.sub(&id).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn cross_spin_creators_anticommute() {
        let full = Basis::full(2).unwrap();
        let a = build_fermion_op(&full, 0, Spin::Up, true).unwrap();
        let b = build_fermion_op(&full, 1, Spin::Down, true).unwrap();
        assert!(a.anticommutator(&b).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn annihilating_empty_sector_gives_flagged_zero() {
        let b = Basis::sector(3, 0, 1).unwrap();
        let c = build_fermion_op(&b, 1, Spin::Up, false).unwrap();
        assert!(c.has_empty_image());
        assert_eq!(c.nnz(), 0);
        assert!(build_fermion_op(&b, 3, Spin::Up, false).is_err());
    }

    #[test]
    fn eta_z_vanishes_at_half_filling() {
        let b = Basis::sector(4, 2, 2).unwrap();
        let eta = build_eta_ops(&b).unwrap();
        assert_eq!(eta.total_z.max_abs(), 0.0);
    }

    #[test]
    fn eta_pair_on_vacuum() {
        let b = Basis::sector(3, 0, 0).unwrap();
        let eta = build_eta_ops(&b).unwrap();
        let vac = StateVector::basis_state(b, FockState::VACUUM).unwrap();
        assert_eq!(vac.expect(&eta.pair).unwrap(), C64::new(0.0, 0.0));
        assert!(eta.total_minus.has_empty_image());
        let out = apply(&eta.total_minus, &vac).unwrap();
        assert_eq!(out.dim(), 0);
    }

    #[test]
    fn eta_su2_on_full_space() {
        let full = Basis::full(2).unwrap();
        let eta = build_eta_ops(&full).unwrap();
        let c = eta.total_plus.commutator(&eta.total_minus).unwrap();
        let two_z = eta.total_z.scale(C64::new(2.0, 0.0));
        assert!(c.sub(&two_z).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn spin_diagonals() {
        let b = Basis::sector(2, 1, 0).unwrap();
        let s = build_spin_ops(&b).unwrap();
        let psi = StateVector::basis_state(b, FockState::new(0b01, 0)).unwrap();
        assert_eq!(psi.expect(&s.s_z[0]).unwrap().re, 1.0);

        let b = Basis::sector(2, 1, 1).unwrap();
        let s = build_spin_ops(&b).unwrap();
        let d = StateVector::basis_state(b.clone(), FockState::new(0b01, 0b01)).unwrap();
        assert_eq!(d.expect(&s.s_z[0]).unwrap().re, 0.0);

        for (nu, nd) in [(3, 1), (2, 2), (0, 4), (1, 3)] {
            let b = Basis::sector(4, nu, nd).unwrap();
            let s = build_spin_ops(&b).unwrap();
            let scalar = (nu as f64) - (nd as f64);
            let id = SparseOperator::identity(b).scale(C64::new(scalar, 0.0));
            if scalar == 0.0 {
                assert_eq!(s.total.nnz(), 0);
            } else {
                assert!(s.total.sub(&id).unwrap().max_abs() < 1e-14);
            }
        }
    }
}
