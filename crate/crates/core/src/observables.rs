//! η-pair correlations, conserved charges, the doublon structure factor,
//! and spin/doublon projections of a density matrix.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{
    build_eta_ops, build_number_op, build_spin_ops, Basis, DensityMatrix, Expectation,
    SparseOperator, Spin,
};

/// `C_ij = <η⁺_i η⁻_j>`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaCorrMatrix {
    pub entries: DMatrix<C64>,
}

impl EtaCorrMatrix {
    pub fn sites(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.entries[(i, j)]
    }

    /// `Σ_ij C_ij`, equal to `<η⁺η⁻>`.
    pub fn total(&self) -> C64 {
        self.entries.iter().sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        crate::linalg::max_abs(&(&self.entries - self.entries.adjoint()))
    }

    /// Mean of `C_{i,i+j}` over all valid `i`.
    pub fn distance_average(&self, j: usize) -> Result<C64> {
        distance_averaged_corr(self, j)
    }

    /// `max |C_ij| - min |C_ij|` over off-diagonal pairs.
    pub fn off_diagonal_spread(&self) -> f64 {
        let m = self.sites();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    let a = self.entries[(i, j)].norm();
                    lo = lo.min(a);
                    hi = hi.max(a);
                }
            }
        }
        if m < 2 {
            0.0
        } else {
            hi - lo
        }
    }

    /// Mean off-diagonal entry.
    pub fn off_diagonal_mean(&self) -> C64 {
        let m = self.sites();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    acc += self.entries[(i, j)];
                }
            }
        }
        acc / (m * (m - 1)) as f64
    }
}

pub fn distance_averaged_corr(c: &EtaCorrMatrix, j: usize) -> Result<C64> {
    let m = c.sites();
    if j >= m {
        return Err(Error::Domain(format!("distance {j} out of range for {m} sites")));
    }
    let sum: C64 = (0..m - j).map(|i| c.entries[(i, i + j)]).sum();
    Ok(sum / (m - j) as f64)
}

/// `D(q_n)` for `q_n a = 2πn/L`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureFactor {
    pub values: Vec<f64>,
}

impl StructureFactor {
    pub fn momentum(&self, n: usize) -> f64 {
        2.0 * PI * n as f64 / self.values.len() as f64
    }

    /// Value at `qa = π` (requires even `L`).
    pub fn at_pi(&self) -> Option<f64> {
        let l = self.values.len();
        l.is_multiple_of(2).then(|| self.values[l / 2])
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservedSet {
    pub eta_pair: f64,
    pub eta_z: f64,
    /// `<Σ_i s^z_i> = <N↑> - <N↓>`
    pub s_z: f64,
    pub n_up: f64,
    pub n_down: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionKind {
    /// Every site singly occupied.
    Spin,
    /// No singly occupied site.
    Doublon,
}

/// Renormalised `P ρ P` with basis labels.
#[derive(Debug, Clone)]
pub struct ProjectedBlock {
    pub kind: ProjectionKind,
    /// Binary strings, site 0 leftmost: `1` = ↑ (spin) or ↑↓ (doublon).
    pub labels: Vec<String>,
    pub matrix: DMatrix<C64>,
    /// `Tr(P ρ P)` before renormalisation.
    pub trace_before: f64,
}

/// Operators needed for every observable on one basis, built once.
#[derive(Debug, Clone)]
pub struct ObservableSet {
    basis: Arc<Basis>,
    /// `η⁺_i η⁻_j` for `i <= j`, indexed `[i][j - i]`.
    corr: Vec<Vec<SparseOperator>>,
    /// `c†_{↑,j} c†_{↓,j} c_{↓,k} c_{↑,k}` for `j <= k`, indexed `[j][k - j]`.
    doublon_hop: Vec<Vec<SparseOperator>>,
    eta_pair: SparseOperator,
    eta_z: SparseOperator,
    s_z: SparseOperator,
    n_up: SparseOperator,
    n_down: SparseOperator,
}

impl ObservableSet {
    pub fn new(basis: &Arc<Basis>) -> Result<Self> {
        let m = basis.sites();
        let eta = build_eta_ops(basis)?;
        let raise: Vec<SparseOperator> = eta.minus.iter().map(|op| op.adjoint()).collect();
        let mut corr = Vec::with_capacity(m);
        let mut doublon_hop = Vec::with_capacity(m);
        for i in 0..m {
            let mut row = Vec::with_capacity(m - i);
            let mut hop = Vec::with_capacity(m - i);
            for j in i..m {
                row.push(raise[i].compose(&eta.minus[j])?);
                hop.push(SparseOperator::from_map(basis.clone(), basis.clone(), |s| {
                    s.apply_product(&[
                        (i, Spin::Up, true),
                        (i, Spin::Down, true),
                        (j, Spin::Down, false),
                        (j, Spin::Up, false),
                    ])
                    .map(|(t, sg)| (t, C64::new(sg, 0.0)))
                }));
            }
            corr.push(row);
            doublon_hop.push(hop);
        }
        let spins = build_spin_ops(basis)?;
        let n_up = SparseOperator::sum(
            &(0..m)
                .map(|i| build_number_op(basis, i, Spin::Up))
                .collect::<Result<Vec<_>>>()?,
        )?;
        let n_down = SparseOperator::sum(
            &(0..m)
                .map(|i| build_number_op(basis, i, Spin::Down))
                .collect::<Result<Vec<_>>>()?,
        )?;
        Ok(Self {
            basis: basis.clone(),
            corr,
            doublon_hop,
            eta_pair: eta.pair,
            eta_z: eta.total_z,
            s_z: spins.total,
            n_up,
            n_down,
        })
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn eta_pair_op(&self) -> &SparseOperator {
        &self.eta_pair
    }

    /// `η⁺_i η⁻_j` for `i <= j`.
    pub fn corr_op(&self, i: usize, j: usize) -> &SparseOperator {
        &self.corr[i][j - i]
    }

    fn check<S: Expectation>(&self, state: &S) -> Result<()> {
        if !state.basis().same_space(&self.basis) {
            return Err(Error::Shape("state and observables live on different spaces".into()));
        }
        Ok(())
    }

    pub fn eta_correlation_matrix<S: Expectation>(&self, state: &S) -> Result<EtaCorrMatrix> {
        self.check(state)?;
        let m = self.basis.sites();
        let mut entries = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let v = state.expect(&self.corr[i][j - i])?;
                if i == j {
                    entries[(i, i)] = C64::new(v.re, 0.0);
                } else {
                    entries[(i, j)] = v;
                    entries[(j, i)] = v.conj();
                }
            }
        }
        Ok(EtaCorrMatrix { entries })
    }

    /// `T_jk = <c†_{↑,j} c†_{↓,j} c_{↓,k} c_{↑,k}>`.
    pub fn doublon_two_point<S: Expectation>(&self, state: &S) -> Result<DMatrix<C64>> {
        self.check(state)?;
        let m = self.basis.sites();
        let mut t = DMatrix::zeros(m, m);
        for j in 0..m {
            for k in j..m {
                let v = state.expect(&self.doublon_hop[j][k - j])?;
                t[(j, k)] = v;
                t[(k, j)] = v.conj();
            }
        }
        Ok(t)
    }

    pub fn structure_factor<S: Expectation>(&self, state: &S) -> Result<StructureFactor> {
        let t = self.doublon_two_point(state)?;
        Ok(structure_factor_from_two_point(&t))
    }

    pub fn conserved_set<S: Expectation>(&self, state: &S) -> Result<ConservedSet> {
        self.check(state)?;
        let out = ConservedSet {
            eta_pair: state.expect(&self.eta_pair)?.re,
            eta_z: state.expect(&self.eta_z)?.re,
            s_z: state.expect(&self.s_z)?.re,
            n_up: state.expect(&self.n_up)?.re,
            n_down: state.expect(&self.n_down)?.re,
        };
        let m = self.basis.sites() as f64;
        let implied = 0.5 * (out.n_up + out.n_down - m);
        debug_assert!((implied - out.eta_z).abs() < 1e-9, "η^z inconsistent with N↑ + N↓");
        Ok(out)
    }

    /// `<n_{↑,i} n_{↓,i}>` per site.
    pub fn double_occupancy<S: Expectation>(&self, state: &S) -> Result<Vec<f64>> {
        self.check(state)?;
        let m = self.basis.sites();
        let d = (0..m)
            .map(|i| {
                // η⁺_i η⁻_i = n_{↑,i} n_{↓,i}
                state.expect(&self.corr[i][0]).map(|v| v.re)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(d)
    }
}

/// `D(q) = (1/L) Σ_{j,k} T_jk e^{i(k-j)q}` at `q_n = 2πn/L`.
pub fn structure_factor_from_two_point(t: &DMatrix<C64>) -> StructureFactor {
    let l = t.nrows();
    let values = (0..l)
        .map(|n| {
            let q = 2.0 * PI * n as f64 / l as f64;
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..l {
                for k in 0..l {
                    acc += t[(j, k)] * C64::from_polar(1.0, (k as f64 - j as f64) * q);
                }
            }
            acc.re / l as f64
        })
        .collect();
    StructureFactor { values }
}

pub fn eta_correlation_matrix<S: Expectation>(state: &S) -> Result<EtaCorrMatrix> {
    ObservableSet::new(state.basis())?.eta_correlation_matrix(state)
}

pub fn conserved_set<S: Expectation>(state: &S) -> Result<ConservedSet> {
    ObservableSet::new(state.basis())?.conserved_set(state)
}

pub fn structure_factor<S: Expectation>(state: &S) -> Result<StructureFactor> {
    ObservableSet::new(state.basis())?.structure_factor(state)
}

pub fn double_occupancy<S: Expectation>(state: &S) -> Result<Vec<f64>> {
    ObservableSet::new(state.basis())?.double_occupancy(state)
}

/// Keep only spin-only or doublon/holon-only basis states, renormalise the
/// trace to one, and order rows by the descending binary label so that the
/// all-`1`-first string (e.g. `111000`) is row 0.
pub fn project_sector_matrix(rho: &DensityMatrix, kind: ProjectionKind) -> Result<ProjectedBlock> {
    let basis = rho.basis();
    let m = basis.sites();
    let mut kept: Vec<(String, usize)> = basis
        .states()
        .iter()
        .enumerate()
        .filter(|(_, s)| match kind {
            ProjectionKind::Spin => (0..m).all(|i| s.is_singlon(i)),
            ProjectionKind::Doublon => (0..m).all(|i| !s.is_singlon(i)),
        })
        .map(|(idx, s)| {
            let label: String = (0..m)
                .map(|i| {
                    let one = match kind {
                        ProjectionKind::Spin => s.occupied(i, Spin::Up),
                        ProjectionKind::Doublon => s.is_doublon(i),
                    };
                    if one {
                        '1'
                    } else {
                        '0'
                    }
                })
                .collect();
            (label, idx)
        })
        .collect();
    kept.sort_by(|a, b| b.0.cmp(&a.0));
    let n = kept.len();
    let mut matrix = DMatrix::from_fn(n, n, |r, c| rho.matrix()[(kept[r].1, kept[c].1)]);
    let trace_before = matrix.trace().re;
    if !(trace_before.abs() >= 1e-12) {
        return Err(Error::DegenerateProjection { trace: trace_before });
    }
    matrix /= C64::new(trace_before, 0.0);
    Ok(ProjectedBlock {
        kind,
        labels: kept.into_iter().map(|(l, _)| l).collect(),
        matrix,
        trace_before,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{FockState, StateVector};
    use crate::symmetry::yang_state;
    use proptest::prelude::*;

    fn vacuum(m: usize) -> StateVector {
        StateVector::basis_state(Basis::sector(m, 0, 0).unwrap(), FockState::VACUUM).unwrap()
    }

    fn random_state(basis: &Arc<Basis>, seed: u64) -> StateVector {
        use rand::Rng;
        let mut rng = crate::rng::rng_from_seed(seed);
        let amps = (0..basis.dim())
            .map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        StateVector::new(basis.clone(), amps).unwrap().normalized().unwrap()
    }

    #[test]
    fn vacuum_is_empty() {
        let v = vacuum(4);
        let c = eta_correlation_matrix(&v).unwrap();
        assert_eq!(crate::linalg::max_abs(&c.entries), 0.0);
        assert!(structure_factor(&v).unwrap().values.iter().all(|&x| x == 0.0));
        assert!(double_occupancy(&v).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_pair_yang_is_uniform() {
        for m in [2, 3, 5] {
            let y = yang_state(m, 1).unwrap();
            let c = eta_correlation_matrix(&y).unwrap();
            for i in 0..m {
                for j in 0..m {
                    assert!((c.get(i, j) - C64::new(1.0 / m as f64, 0.0)).norm() < 1e-12);
                }
            }
            assert!((distance_averaged_corr(&c, 0).unwrap().re - 1.0 / m as f64).abs() < 1e-12);
            let d = double_occupancy(&y).unwrap();
            assert!(d.iter().all(|x| (x - 1.0 / m as f64).abs() < 1e-12));
        }
    }

    #[test]
    fn yang_sum_rules() {
        let y = yang_state(4, 2).unwrap();
        assert!((eta_correlation_matrix(&y).unwrap().total().re - 6.0).abs() < 1e-10);
        let y = yang_state(6, 3).unwrap();
        assert!((conserved_set(&y).unwrap().eta_pair - 12.0).abs() < 1e-10);
        let y = yang_state(6, 2).unwrap();
        let d = structure_factor(&y).unwrap();
        assert!((d.at_pi().unwrap() - 10.0 / 6.0).abs() < 1e-10);
    }

    #[test]
    fn half_filling_eta_z_zero() {
        let b = Basis::sector(4, 2, 2).unwrap();
        let s = random_state(&b, 3);
        let c = conserved_set(&s).unwrap();
        assert!(c.eta_z.abs() < 1e-14);
        assert!((c.n_up - 2.0).abs() < 1e-12);
        assert!(c.s_z.abs() < 1e-12);
    }

    #[test]
    fn distance_average_definition() {
        let entries = DMatrix::from_fn(3, 3, |i, j| {
            if i <= j {
                C64::new((i + 2 * j) as f64, (j as f64) - (i as f64))
            } else {
                C64::new((j + 2 * i) as f64, (j as f64) - (i as f64))
            }
        });
        let c = EtaCorrMatrix { entries };
        let expect = (c.get(0, 1) + c.get(1, 2)) / 2.0;
        assert_eq!(distance_averaged_corr(&c, 1).unwrap(), expect);
        assert!(distance_averaged_corr(&c, 3).is_err());
        let uniform = EtaCorrMatrix { entries: DMatrix::from_element(4, 4, C64::new(0.3, -0.1)) };
        for j in 1..4 {
            assert!((distance_averaged_corr(&uniform, j).unwrap() - C64::new(0.3, -0.1)).norm() < 1e-15);
        }
    }

    #[test]
    fn structure_factor_identities_on_random_states() {
        for m in [4usize, 5] {
            for (nu, nd) in [(2, 2), (1, 3), (2, 1)] {
                let b = Basis::sector(m, nu, nd).unwrap();
                let obs = ObservableSet::new(&b).unwrap();
                for seed in 0..10 {
                    let s = random_state(&b, seed);
                    let d = obs.structure_factor(&s).unwrap();
                    let c = obs.conserved_set(&s).unwrap();
                    let docc: f64 = obs.double_occupancy(&s).unwrap().iter().sum();
                    if let Some(dpi) = d.at_pi() {
                        assert!((dpi * m as f64 - c.eta_pair).abs() < 1e-10);
                    }
                    assert!((d.total() - docc).abs() < 1e-10);
                    assert!(d.values.iter().all(|&v| v >= -1e-10));
                    let corr = obs.eta_correlation_matrix(&s).unwrap();
                    assert!((corr.total().re - c.eta_pair).abs() < 1e-10);
                    for i in 0..m {
                        assert!((corr.get(i, i).re - obs.double_occupancy(&s).unwrap()[i]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn projections() {
        let y = yang_state(4, 2).unwrap();
        let rho = DensityMatrix::pure(&y);
        assert!(matches!(
            project_sector_matrix(&rho, ProjectionKind::Spin),
            Err(Error::DegenerateProjection { .. })
        ));
        let y = yang_state(2, 1).unwrap();
        let p = project_sector_matrix(&DensityMatrix::pure(&y), ProjectionKind::Doublon).unwrap();
        assert_eq!(p.labels, vec!["10".to_string(), "01".to_string()]);
        assert!(p.matrix.iter().all(|v| (v.norm() - 0.5).abs() < 1e-12));

        let b = Basis::sector(6, 3, 3).unwrap();
        let mixed = DensityMatrix::maximally_mixed(b);
        let s = project_sector_matrix(&mixed, ProjectionKind::Spin).unwrap();
        assert_eq!(s.labels.len(), 20);
        assert_eq!(s.labels[0], "111000");
        assert_eq!(s.labels[19], "000111");
        assert!((s.matrix[(0, 0)].re - 0.05).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn corr_matrix_is_hermitian_and_sums(seed in any::<u64>()) {
            let b = Basis::sector(4, 2, 2).unwrap();
            let s = random_state(&b, seed);
            let rho = DensityMatrix::pure(&s);
            let obs = ObservableSet::new(&b).unwrap();
            let c_vec = obs.eta_correlation_matrix(&s).unwrap();
            let c_rho = obs.eta_correlation_matrix(&rho).unwrap();
            prop_assert!(crate::linalg::max_abs(&(&c_vec.entries - &c_rho.entries)) < 1e-12);
            prop_assert!(c_vec.hermiticity_error() == 0.0);
            let pair = obs.conserved_set(&rho).unwrap().eta_pair;
            prop_assert!((c_rho.total().re - pair).abs() < 1e-10);
            prop_assert!(c_rho.total().im.abs() < 1e-10);
        }
    }
}
