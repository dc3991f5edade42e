use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::{check_grid, steps_to};
use crate::error::{Error, Result};
use crate::fock::{Basis, DensityMatrix, SparseOperator};
use crate::model::JumpSet;

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
enum Channel {
    /// All diagonal jumps folded into `ρ_rc ↦ K_rc ρ_rc`.
    Diagonal(DMatrix<f64>),
    General {
        rate: f64,
        op: SparseOperator,
        op_adj: SparseOperator,
        decay: SparseOperator,
    },
}

/// `ρ ↦ -i[H, ρ] + Σ γ (L ρ L† - ½{L†L, ρ})` with the jumps preprocessed.
#[derive(Debug, Clone)]
pub struct Lindbladian {
    basis: Arc<Basis>,
    h: SparseOperator,
    channels: Vec<Channel>,
}

impl Lindbladian {
    pub fn new(h: &SparseOperator, jumps: &[&JumpSet]) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::Shape("Hamiltonian must be square".into()));
        }
        let d = h.dim_in();
        let mut diag = DMatrix::<f64>::zeros(d, d);
        let mut any_diag = false;
        let mut channels = Vec::new();
        for set in jumps {
            if set.rate == 0.0 {
                continue;
            }
            for op in &set.operators {
                if !op.domain().same_space(h.domain()) || !op.is_square() {
                    return Err(Error::Shape("jump operators must act on the Hamiltonian's space".into()));
                }
                match op.as_diagonal() {
                    Some(l) => {
                        // γ (l_r l̄_c - ½|l_r|² - ½|l_c|²)
                        any_diag = true;
                        for c in 0..d {
                            for r in 0..d {
                                let v = l[r] * l[c].conj() - 0.5 * (l[r].norm_sqr() + l[c].norm_sqr());
                                diag[(r, c)] += set.rate * v.re;
                                if v.im.abs() > 1e-14 {
                                    return Err(Error::Domain(
                                        "diagonal jumps must have real eigenvalues".into(),
                                    ));
                                }
                            }
                        }
                    }
                    None => {
                        let op_adj = op.adjoint();
                        let decay = op_adj.compose(op)?;
                        channels.push(Channel::General {
                            rate: set.rate,
                            op: op.clone(),
                            op_adj,
                            decay,
                        });
                    }
                }
            }
        }
        if any_diag {
            channels.insert(0, Channel::Diagonal(diag));
        }
        Ok(Self {
            basis: h.domain().clone(),
            h: h.clone(),
            channels,
        })
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// `L(ρ)` on a raw matrix.
    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let i = C64::new(0.0, 1.0);
        let mut out = (self.h.mul_dense(rho) - self.h.dense_mul(rho)) * (-i);
        for ch in &self.channels {
            match ch {
                Channel::Diagonal(k) => {
                    out.zip_apply(&(rho.zip_map(k, |a, b| a * b)), |o, v| *o += v);
                }
                Channel::General {
                    rate,
                    op,
                    op_adj,
                    decay,
                } => {
                    let g = C64::new(*rate, 0.0);
                    let sandwich = op_adj.dense_mul(&op.mul_dense(rho));
                    let anti = decay.mul_dense(rho) + decay.dense_mul(rho);
                    out += (sandwich - anti * C64::new(0.5, 0.0)) * g;
                }
            }
        }
        out
    }

    fn rk4(&self, rho: &DMatrix<C64>, h: f64) -> DMatrix<C64> {
        let hh = C64::new(h, 0.0);
        let k1 = self.apply(rho);
        let k2 = self.apply(&(rho + &k1 * (hh * 0.5)));
        let k3 = self.apply(&(rho + &k2 * (hh * 0.5)));
        let k4 = self.apply(&(rho + &k3 * hh));
        rho + (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * (hh / 6.0)
    }
}

/// Exact right-hand side of the master equation.
pub fn lindblad_rhs(rho: &DensityMatrix, h: &SparseOperator, jumps: &[&JumpSet]) -> Result<DMatrix<C64>> {
    if !rho.basis().same_space(h.domain()) {
        return Err(Error::Shape("density matrix and Hamiltonian spaces differ".into()));
    }
    Ok(Lindbladian::new(h, jumps)?.apply(rho.matrix()))
}

#[derive(Debug, Clone, Copy)]
pub struct MasterOptions {
    pub dt: f64,
    /// Largest dimension accepted for the dense density matrix.
    pub max_dim: usize,
    /// Minimum eigenvalue checked at every output time.
    pub check_positivity: bool,
    pub positivity_tol: f64,
    pub trace_tol: f64,
}

impl Default for MasterOptions {
    fn default() -> Self {
        Self {
            dt: super::DEFAULT_DT_MASTER,
            max_dim: 1000,
            check_positivity: true,
            positivity_tol: 1e-6,
            trace_tol: 1e-8,
        }
    }
}

/// RK4 integration of the master equation, calling `observe` at each
/// requested output time.
pub fn integrate_master_with<F>(
    rho0: &DensityMatrix,
    lindbladian: &Lindbladian,
    t_final: f64,
    output_times: &[f64],
    opts: &MasterOptions,
    mut observe: F,
) -> Result<DensityMatrix>
where
    F: FnMut(f64, &DensityMatrix) -> Result<()>,
{
    check_grid(t_final, opts.dt, output_times)?;
    if !rho0.basis().same_space(lindbladian.basis()) {
        return Err(Error::Shape("initial state and generator spaces differ".into()));
    }
    if rho0.dim() > opts.max_dim {
        return Err(Error::Capacity {
            what: "density-matrix dimension".into(),
            dim: rho0.dim(),
            limit: opts.max_dim,
        });
    }
    let trace0 = rho0.trace().re;
    let mut rho = rho0.clone();
    let mut t = 0.0;
    let mut targets: Vec<f64> = output_times.to_vec();
    if targets.last().is_none_or(|&l| l < t_final) {
        targets.push(t_final);
    }
    let reported = output_times.len();
    for (k, &target) in targets.iter().enumerate() {
        for h in steps_to(t, target, opts.dt) {
            let next = lindbladian.rk4(rho.matrix(), h);
            *rho.matrix_mut() = next;
            rho.hermitize();
        }
        t = target;
        let drift = (rho.trace().re - trace0).abs();
        if drift > opts.trace_tol || !drift.is_finite() {
            return Err(Error::Instability(format!(
                "trace drifted by {drift:e} at t = {t}; reduce dt (currently {})",
                opts.dt
            )));
        }
        if k < reported {
            if opts.check_positivity {
                let min = rho.min_eigenvalue();
                if !(min >= -opts.positivity_tol) {
                    return Err(Error::Instability(format!(
                        "density matrix lost positivity (min eigenvalue {min:e}) at t = {t}; reduce dt (currently {})",
                        opts.dt
                    )));
                }
            }
            observe(t, &rho)?;
        }
    }
    Ok(rho)
}

/// RK4 integration returning the states at `output_times`.
pub fn integrate_master(
    rho0: &DensityMatrix,
    h: &SparseOperator,
    jumps: &[&JumpSet],
    t_final: f64,
    output_times: &[f64],
    opts: &MasterOptions,
) -> Result<Vec<(f64, DensityMatrix)>> {
    let l = Lindbladian::new(h, jumps)?;
    let mut out = Vec::with_capacity(output_times.len());
    integrate_master_with(rho0, &l, t_final, output_times, opts, |t, rho| {
        out.push((t, rho.clone()));
        Ok(())
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::KrylovPropagator;
    use crate::fock::{build_eta_ops, Expectation, StateVector};
    use crate::linalg::max_abs;
    use crate::model::{build_hubbard, build_jumps, HubbardParams, JumpKind};
    use crate::spectra::dense_ground_state;
    use crate::symmetry::yang_state;

    fn setup(m: usize, n: usize, u: f64) -> (Arc<Basis>, SparseOperator) {
        let b = Basis::sector(m, n, n).unwrap();
        let h = build_hubbard(&HubbardParams::new(m, 1.0, u).unwrap(), &b).unwrap();
        (b, h)
    }

    #[test]
    fn fixed_points_and_closed_limit() {
        let (b, h) = setup(3, 1, 2.0);
        let spin = build_jumps(JumpKind::Spin, &b, 1.5).unwrap();
        let mixed = DensityMatrix::maximally_mixed(b.clone());
        assert!(max_abs(&lindblad_rhs(&mixed, &h, &[&spin]).unwrap()) < 1e-14);

        let psi = StateVector::basis_state(b.clone(), b.state(2)).unwrap();
        let rho = DensityMatrix::pure(&psi);
        let closed = lindblad_rhs(&rho, &h, &[]).unwrap();
        let i = C64::new(0.0, 1.0);
        let expect = (h.mul_dense(rho.matrix()) - h.dense_mul(rho.matrix())) * (-i);
        assert!(max_abs(&(closed - expect)) < 1e-14);

        let y = yang_state(2, 1).unwrap();
        let h2 = build_hubbard(&HubbardParams::new(2, 1.0, 3.0).unwrap(), y.basis()).unwrap();
        let j2 = build_jumps(JumpKind::Spin, y.basis(), 2.0).unwrap();
        let r = lindblad_rhs(&DensityMatrix::pure(&y), &h2, &[&j2]).unwrap();
        assert!(max_abs(&r) < 1e-14);
    }

    #[test]
    fn rhs_preserves_hermiticity() {
        let (b, h) = setup(3, 2, 1.0);
        let j = build_jumps(JumpKind::Charge, &b, 0.3).unwrap();
        let psi = StateVector::new(b.clone(), (0..b.dim()).map(|k| C64::new(k as f64, 1.0 - k as f64)).collect())
            .unwrap()
            .normalized()
            .unwrap();
        let r = lindblad_rhs(&DensityMatrix::pure(&psi), &h, &[&j]).unwrap();
        assert!(max_abs(&(&r - r.adjoint())) < 1e-13);
        assert!(r.trace().norm() < 1e-13);
    }

    #[test]
    fn closed_evolution_matches_krylov() {
        let (b, h) = setup(4, 2, 1.0);
        let psi = StateVector::basis_state(b.clone(), b.state(0)).unwrap();
        let opts = MasterOptions {
            check_positivity: false,
            ..Default::default()
        };
        let out = integrate_master(&DensityMatrix::pure(&psi), &h, &[], 10.0, &[10.0], &opts).unwrap();
        let prop = KrylovPropagator::new(&h).unwrap();
        let phi = prop.propagate(&psi, 10.0).unwrap();
        let f = DensityMatrix::pure(&phi).matrix().component_mul(&out[0].1.matrix().conjugate()).sum().re;
        assert!((1.0 - f).abs() < 1e-8, "fidelity {f}");
    }

    #[test]
    fn dephasing_conserves_eta_pair() {
        let (b, h0) = setup(4, 2, 4.0);
        let g = dense_ground_state(&h0).unwrap();
        let h = build_hubbard(&HubbardParams::new(4, 1.0, 1.0).unwrap(), &b).unwrap();
        let spin = build_jumps(JumpKind::Spin, &b, 2.0).unwrap();
        let eta = build_eta_ops(&b).unwrap();
        let rho0 = DensityMatrix::pure(&g.vector);
        let e0 = rho0.expect(&eta.pair).unwrap().re;
        let grid: Vec<f64> = (0..=4).map(|k| 5.0 * k as f64).collect();
        let out = integrate_master(&rho0, &h, &[&spin], 20.0, &grid, &MasterOptions::default()).unwrap();
        for (_, rho) in &out {
            let e = rho.expect(&eta.pair).unwrap().re;
            assert!((e - e0).abs() <= 1e-6 * e0.abs().max(1e-12) || (e - e0).abs() < 1e-12);
        }
    }

    #[test]
    fn unital_fixed_point() {
        let (b, h) = setup(3, 1, 1.0);
        let spin = build_jumps(JumpKind::Spin, &b, 2.0).unwrap();
        let mixed = DensityMatrix::maximally_mixed(b.clone());
        let out = integrate_master(&mixed, &h, &[&spin], 10.0, &[10.0], &MasterOptions::default()).unwrap();
        assert!(max_abs(&(out[0].1.matrix() - mixed.matrix())) < 1e-8);
    }

    #[test]
    fn charge_jumps_dephase_fully() {
        let b = Basis::full(2).unwrap();
        let h = build_hubbard(&HubbardParams::new(2, 1.0, 2.0).unwrap(), &b).unwrap();
        let spin = build_jumps(JumpKind::Spin, &b, 2.0).unwrap();
        let charge = build_jumps(JumpKind::Charge, &b, 0.5).unwrap();
        let y = yang_state(2, 1).unwrap();
        let mut m = DMatrix::<C64>::zeros(16, 16);
        let idx: Vec<usize> = y.basis().states().iter().map(|s| b.index_of(s).unwrap()).collect();
        for (a, &ia) in idx.iter().enumerate() {
            for (c, &ic) in idx.iter().enumerate() {
                m[(ia, ic)] = y.amplitudes()[a] * y.amplitudes()[c].conj();
            }
        }
        let rho0 = DensityMatrix::new(b.clone(), m).unwrap();
        let out = integrate_master(&rho0, &h, &[&spin, &charge], 500.0, &[500.0], &MasterOptions::default()).unwrap();
        assert!(out[0].1.max_off_diagonal() < 1e-6);
    }

    #[test]
    fn instability_is_reported() {
        let (b, h) = setup(2, 1, 1.0);
        let spin = build_jumps(JumpKind::Spin, &b, 200.0).unwrap();
        let psi = StateVector::basis_state(b.clone(), b.state(0)).unwrap();
        let opts = MasterOptions {
            dt: 0.5,
            ..Default::default()
        };
        let r = integrate_master(&DensityMatrix::pure(&psi), &h, &[&spin], 5.0, &[5.0], &opts);
        assert!(matches!(r, Err(Error::Instability(_))));
    }
}
