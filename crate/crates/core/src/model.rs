//! Hubbard Hamiltonian, the inhomogeneous drive field, and jump-operator sets.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{bipartite_phase, build_number_op, build_spin_ops, Basis, SparseOperator, Spin};
use crate::rng::rng_from_seed;

/// Open chain of `sites` sites with hopping `tau` and on-site repulsion `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HubbardParams {
    pub sites: usize,
    pub tau: f64,
    pub u: f64,
}

impl HubbardParams {
    pub fn new(sites: usize, tau: f64, u: f64) -> Result<Self> {
        let p = Self { sites, tau, u };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites < 2 {
            return Err(Error::Domain(format!("need at least 2 sites, got {}", self.sites)));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Domain(format!("hopping must be positive, got {}", self.tau)));
        }
        if !self.u.is_finite() {
            return Err(Error::Domain("interaction must be finite".into()));
        }
        Ok(())
    }

    pub fn with_u(&self, u: f64) -> Self {
        Self { u, ..*self }
    }
}

/// `H = -τ Σ_{<ij>,σ} (c†_{σ,i} c_{σ,j} + h.c.) + U Σ_i n_{↑,i} n_{↓,i}` with open boundaries.
pub fn build_hubbard(p: &HubbardParams, basis: &Arc<Basis>) -> Result<SparseOperator> {
    p.validate()?;
    if basis.sites() != p.sites {
        return Err(Error::Shape(format!(
            "parameters describe {} sites, basis has {}",
            p.sites,
            basis.sites()
        )));
    }
    let m = p.sites;
    let (tau, u) = (p.tau, p.u);
    SparseOperator::from_map(basis.clone(), basis.clone(), move |s| {
        let mut out = Vec::with_capacity(4 * m + 1);
        let doublons = s.doublons().count_ones() as f64;
        out.push((s, C64::new(u * doublons, 0.0)));
        for i in 0..m - 1 {
            for spin in [Spin::Up, Spin::Down] {
                for (a, b) in [(i, i + 1), (i + 1, i)] {
                    if let Some((t, sign)) = s.apply_product(&[(a, spin, true), (b, spin, false)]) {
                        out.push((t, C64::new(-tau * sign, 0.0)));
                    }
                }
            }
        }
        out
    })
    .into_hermitian()
}

/// Site dependence `f(i)` of the drive field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriveProfile {
    /// `f(i) = i`
    Linear,
    /// `f(i) = (-1)^i`
    Staggered,
    /// `f(i)` drawn uniformly from `[0, 2)` with ChaCha8 seeded by `seed`.
    Random { seed: u64 },
    Custom { values: Vec<f64> },
}

impl DriveProfile {
    /// Concrete `f(0), ..., f(M-1)`.
    pub fn resolve(&self, sites: usize) -> Result<Vec<f64>> {
        Ok(match self {
            DriveProfile::Linear => (0..sites).map(|i| i as f64).collect(),
            DriveProfile::Staggered => (0..sites).map(bipartite_phase).collect(),
            DriveProfile::Random { seed } => {
                let mut rng = rng_from_seed(*seed);
                (0..sites).map(|_| rng.random_range(0.0..2.0)).collect()
            }
            DriveProfile::Custom { values } => {
                if values.len() != sites {
                    return Err(Error::Domain(format!(
                        "custom profile has {} values for {} sites",
                        values.len(),
                        sites
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Domain("custom profile contains non-finite values".into()));
                }
                values.clone()
            }
        })
    }
}

/// `B(t) = V cos(Ω t)` applied through `Σ_i f(i) s^z_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    pub amplitude: f64,
    pub omega: f64,
    pub profile: DriveProfile,
}

impl DriveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return Err(Error::Domain(format!("drive frequency must be positive, got {}", self.omega)));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::Domain("drive amplitude must be finite".into()));
        }
        Ok(())
    }

    pub fn field(&self, t: f64) -> f64 {
        self.amplitude * (self.omega * t).cos()
    }
}

/// Diagonal `F = Σ_i f(i) s^z_i`; the driven Hamiltonian is `H + V cos(Ωt) F`.
pub fn build_field_op(p: &DriveParams, basis: &Arc<Basis>) -> Result<SparseOperator> {
    p.validate()?;
    let f = p.profile.resolve(basis.sites())?;
    SparseOperator::diagonal_from(basis.clone(), |s| {
        let v: f64 = f.iter().enumerate().map(|(i, fi)| fi * s.spin_z(i) as f64).sum();
        C64::new(v, 0.0)
    })
    .into_hermitian()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpKind {
    /// `L_j = s^z_j = n_{↑,j} - n_{↓,j}`
    Spin,
    /// `L_m = n_{↑,m} + n_{↓,m}`
    Charge,
}

/// One Lindblad channel per site, all with the same rate.
#[derive(Debug, Clone)]
pub struct JumpSet {
    pub kind: JumpKind,
    pub operators: Vec<SparseOperator>,
    pub rate: f64,
}

impl JumpSet {
    /// `Σ_k [L_k, L_k†]`, zero for Hermitian jumps.
    pub fn unitality_defect(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        if let Some(first) = self.operators.first() {
            let mut acc = SparseOperator::zero(first.domain().clone(), first.codomain().clone());
            for l in &self.operators {
                acc = acc.add(&l.commutator(&l.adjoint())?)?;
            }
            worst = acc.max_abs();
        }
        Ok(worst)
    }
}

pub fn build_jumps(kind: JumpKind, basis: &Arc<Basis>, gamma: f64) -> Result<JumpSet> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("jump rate must be non-negative, got {gamma}")));
    }
    let operators = match kind {
        JumpKind::Spin => build_spin_ops(basis)?.s_z,
        JumpKind::Charge => (0..basis.sites())
            .map(|i| {
                build_number_op(basis, i, Spin::Up)?
                    .add(&build_number_op(basis, i, Spin::Down)?)?
                    .into_hermitian()
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(JumpSet {
        kind,
        operators,
        rate: gamma,
    })
}
