//! Occupation-number bases for spinful fermions on an `M`-site chain.
//!
//! A basis state stores one bitmask per spin species. Fermionic modes are
//! ordered as `2 * site + spin` (up = 0, down = 1) and every ladder operator
//! carries the Jordan-Wigner sign of the occupied modes below it.

mod builders;
mod operator;
mod state;

pub use builders::{
    build_eta_ops, build_fermion_op, build_number_op, build_spin_ops, build_spin_su2,
    EtaOperators, SpinOperators, SpinSu2,
};
pub use operator::SparseOperator;
pub use state::{apply, DensityMatrix, Expectation, StateVector};

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = num_complex::Complex64;

/// Largest chain the bitmask encoding supports.
pub const MAX_SITES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Spin {
    Up,
    Down,
}

/// Occupation configuration: bit `i` of `up` (`down`) is set when site `i`
/// holds a spin-up (spin-down) fermion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FockState {
    pub up: u32,
    pub down: u32,
}

impl FockState {
    pub const VACUUM: FockState = FockState { up: 0, down: 0 };

    pub fn new(up: u32, down: u32) -> Self {
        Self { up, down }
    }

    pub fn n_up(&self) -> usize {
        self.up.count_ones() as usize
    }

    pub fn n_down(&self) -> usize {
        self.down.count_ones() as usize
    }

    fn mask(&self, spin: Spin) -> u32 {
        match spin {
            Spin::Up => self.up,
            Spin::Down => self.down,
        }
    }

    pub fn occupied(&self, site: usize, spin: Spin) -> bool {
        self.mask(spin) >> site & 1 == 1
    }

    pub fn is_doublon(&self, site: usize) -> bool {
        self.occupied(site, Spin::Up) && self.occupied(site, Spin::Down)
    }

    pub fn is_singlon(&self, site: usize) -> bool {
        self.occupied(site, Spin::Up) != self.occupied(site, Spin::Down)
    }

    /// `n_up - n_down` on one site.
    pub fn spin_z(&self, site: usize) -> i32 {
        self.occupied(site, Spin::Up) as i32 - self.occupied(site, Spin::Down) as i32
    }

    pub fn doublons(&self) -> u32 {
        self.up & self.down
    }

    /// Jordan-Wigner parity of the occupied modes strictly below `(site, spin)`.
    fn sign_below(&self, site: usize, spin: Spin) -> f64 {
        let below = (1u32 << site) - 1;
        let mut count = (self.up & below).count_ones() + (self.down & below).count_ones();
        if spin == Spin::Down && self.occupied(site, Spin::Up) {
            count += 1;
        }
        if count.is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }

    /// Apply `c†_{spin,site}` (`dagger`) or `c_{spin,site}`; `None` when the
    /// result vanishes.
    pub fn apply_ladder(self, site: usize, spin: Spin, dagger: bool) -> Option<(FockState, f64)> {
        let occupied = self.occupied(site, spin);
        if occupied == dagger {
            return None;
        }
        let sign = self.sign_below(site, spin);
        let bit = 1u32 << site;
        let mut out = self;
        match spin {
            Spin::Up => out.up ^= bit,
            Spin::Down => out.down ^= bit,
        }
        Some((out, sign))
    }

    /// Apply a product of ladder operators, rightmost first.
    pub fn apply_product(self, ops: &[(usize, Spin, bool)]) -> Option<(FockState, f64)> {
        let mut state = self;
        let mut sign = 1.0;
        for &(site, spin, dagger) in ops.iter().rev() {
            let (next, s) = state.apply_ladder(site, spin, dagger)?;
            state = next;
            sign *= s;
        }
        Some((state, sign))
    }
}

/// Which Hilbert space a [`Basis`] spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Space {
    /// Fixed `(N_up, N_down)` sector.
    Sector { n_up: usize, n_down: usize },
    /// All `4^M` occupation states.
    Full,
    /// The zero-dimensional image of an operator leaving the valid sectors.
    Empty,
}

/// Ordered list of occupation states with its inverse lookup.
///
/// States are sorted ascending by `(up, down)` as unsigned integers.
#[derive(Debug, Clone)]
pub struct Basis {
    sites: usize,
    space: Space,
    states: Vec<FockState>,
    index: HashMap<FockState, usize>,
}

/// Basis of a fixed `(n_up, n_down)` sector; alias kept for readability at
/// call sites that only ever deal with sectors.
pub type SectorBasis = Basis;

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// All `sites`-bit masks with `count` bits set, ascending.
fn masks_with_popcount(sites: usize, count: usize) -> Vec<u32> {
    if count == 0 {
        return vec![0];
    }
    let mut out = Vec::with_capacity(binomial(sites, count));
    let limit = 1u64 << sites;
    let mut v: u64 = (1u64 << count) - 1;
    while v < limit {
        out.push(v as u32);
        // Gosper's hack: next integer with the same popcount.
        let c = v & v.wrapping_neg();
        let r = v + c;
        v = (((r ^ v) >> 2) / c) | r;
    }
    out
}

fn check_sites(sites: usize) -> Result<()> {
    if sites == 0 || sites > MAX_SITES {
        return Err(Error::Domain(format!(
            "site count {sites} outside 1..={MAX_SITES}"
        )));
    }
    Ok(())
}

impl Basis {
    fn from_states(sites: usize, space: Space, states: Vec<FockState>) -> Self {
        let index = states.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        Self {
            sites,
            space,
            states,
            index,
        }
    }

    /// Enumerate the `(n_up, n_down)` sector of an `sites`-site chain.
    pub fn sector(sites: usize, n_up: usize, n_down: usize) -> Result<Arc<Self>> {
        check_sites(sites)?;
        if n_up > sites || n_down > sites {
            return Err(Error::Domain(format!(
                "particle numbers ({n_up}, {n_down}) outside 0..={sites}"
            )));
        }
        let ups = masks_with_popcount(sites, n_up);
        let downs = masks_with_popcount(sites, n_down);
        let states = ups
            .iter()
            .flat_map(|&u| downs.iter().map(move |&d| FockState::new(u, d)))
            .collect();
        Ok(Arc::new(Self::from_states(
            sites,
            Space::Sector { n_up, n_down },
            states,
        )))
    }

    /// The complete `4^sites` Fock space.
    pub fn full(sites: usize) -> Result<Arc<Self>> {
        check_sites(sites)?;
        if sites > 8 {
            return Err(Error::Capacity {
                what: "full Fock space".into(),
                dim: 1usize << (2 * sites),
                limit: 1 << 16,
            });
        }
        let n = 1u32 << sites;
        let states = (0..n)
            .flat_map(|u| (0..n).map(move |d| FockState::new(u, d)))
            .collect();
        Ok(Arc::new(Self::from_states(sites, Space::Full, states)))
    }

    pub(crate) fn empty(sites: usize) -> Arc<Self> {
        Arc::new(Self::from_states(sites, Space::Empty, Vec::new()))
    }

    /// Sector reached by adding `d_up`, `d_down` particles, or the empty space.
    pub fn shifted(&self, d_up: isize, d_down: isize) -> Arc<Self> {
        match self.space {
            Space::Full => Arc::new(self.clone()),
            Space::Empty => Basis::empty(self.sites),
            Space::Sector { n_up, n_down } => {
                let up = n_up as isize + d_up;
                let down = n_down as isize + d_down;
                if up < 0 || down < 0 || up as usize > self.sites || down as usize > self.sites {
                    Basis::empty(self.sites)
                } else {
                    Basis::sector(self.sites, up as usize, down as usize)
                        .expect("shifted sector is in range")
                }
            }
        }
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[FockState] {
        &self.states
    }

    pub fn state(&self, i: usize) -> FockState {
        self.states[i]
    }

    pub fn index_of(&self, s: &FockState) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// Two bases describe the same space (same chain, same sector).
    pub fn same_space(&self, other: &Basis) -> bool {
        self.sites == other.sites && self.space == other.space
    }

    /// Sectors present in the full space, in `(n_up, n_down)` order.
    pub fn all_sectors(sites: usize) -> Result<Vec<Arc<Basis>>> {
        check_sites(sites)?;
        let mut out = Vec::new();
        for n_up in 0..=sites {
            for n_down in 0..=sites {
                out.push(Basis::sector(sites, n_up, n_down)?);
            }
        }
        Ok(out)
    }
}

/// Enumerate a symmetry sector. Equivalent to [`Basis::sector`].
pub fn enumerate_sector(sites: usize, n_up: usize, n_down: usize) -> Result<Arc<SectorBasis>> {
    Basis::sector(sites, n_up, n_down)
}

/// Staggered phase `(-1)^i`, +1 on site 0.
pub fn bipartite_phase(site: usize) -> f64 {
    if site.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sector_sizes() {
        assert_eq!(enumerate_sector(2, 1, 1).unwrap().dim(), 4);
        assert_eq!(enumerate_sector(4, 2, 2).unwrap().dim(), 36);
        assert_eq!(enumerate_sector(8, 4, 4).unwrap().dim(), 4900);
        assert_eq!(enumerate_sector(5, 0, 5).unwrap().dim(), 1);
    }

    #[test]
    fn sector_out_of_range() {
        assert!(matches!(enumerate_sector(3, 4, 0), Err(Error::Domain(_))));
        assert!(matches!(enumerate_sector(0, 0, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn ordering_and_index() {
        let b = enumerate_sector(4, 2, 1).unwrap();
        for w in b.states().windows(2) {
            assert!((w[0].up, w[0].down) < (w[1].up, w[1].down));
        }
        for (i, s) in b.states().iter().enumerate() {
            assert_eq!(b.index_of(s), Some(i));
            assert_eq!(s.n_up(), 2);
            assert_eq!(s.n_down(), 1);
        }
    }

    #[test]
    fn full_space_is_union_of_sectors() {
        let full = Basis::full(3).unwrap();
        let total: usize = Basis::all_sectors(3).unwrap().iter().map(|b| b.dim()).sum();
        assert_eq!(full.dim(), 64);
        assert_eq!(total, 64);
    }

    #[test]
    fn jordan_wigner_signs() {
        // c†_{down,0} passes the up fermion on site 0.
        let s = FockState::new(0b01, 0b00);
        let (t, sign) = s.apply_ladder(0, Spin::Down, true).unwrap();
        assert_eq!(t, FockState::new(0b01, 0b01));
        assert_eq!(sign, -1.0);
        // c†_{up,1} passes both fermions on site 0.
        let (_, sign) = t.apply_ladder(1, Spin::Up, true).unwrap();
        assert_eq!(sign, 1.0);
        assert!(s.apply_ladder(0, Spin::Up, true).is_none());
        assert!(s.apply_ladder(1, Spin::Up, false).is_none());
    }
}
