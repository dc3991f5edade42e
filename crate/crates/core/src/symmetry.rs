//! Constructive checks of the η-pairing symmetry: Yang states, commutator
//! relations, and the dense Liouvillian with its kernel and imaginary ladder.
//!
//! Superoperators use column stacking, `vec(ρ)[r + c·d] = ρ[r, c]`, so that
//! `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fock::{
    apply, build_eta_ops, build_spin_ops, build_spin_su2, Basis, FockState, SparseOperator,
    StateVector,
};
use crate::gce::{etapair_spectrum, GceMode};
use crate::model::{build_hubbard, build_jumps, HubbardParams, JumpSet};

/// Largest superoperator side accepted by [`liouvillian_dense`].
pub const MAX_LIOUVILLIAN_DIM: usize = 4096;

/// Normalised `(η⁺)^N |vac⟩` on `M` sites, living in sector `(N, N)`.
pub fn yang_state(sites: usize, n: usize) -> Result<StateVector> {
    if n > sites {
        return Err(Error::Domain(format!("Yang state needs N <= M, got N={n}, M={sites}")));
    }
    let vac = Basis::sector(sites, 0, 0)?;
    let mut psi = StateVector::basis_state(vac, FockState::VACUUM)?;
    for _ in 0..n {
        let eta = build_eta_ops(psi.basis())?;
        psi = apply(&eta.total_plus, &psi)?;
        psi.normalize()?;
    }
    Ok(psi)
}

#[derive(Debug, Clone, Serialize)]
pub struct CommutatorEntry {
    pub relation: String,
    /// Largest entry of the difference between both sides.
    pub deviation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CommutatorReport {
    pub tol: f64,
    pub entries: Vec<CommutatorEntry>,
    /// Measured `μ` in `[H, η⁺] = μ η⁺`, when `H` took part.
    pub ladder_constant: Option<f64>,
}

impl CommutatorReport {
    fn new(tol: f64) -> Self {
        Self {
            tol,
            entries: Vec::new(),
            ladder_constant: None,
        }
    }

    fn push(&mut self, relation: impl Into<String>, deviation: f64) {
        self.entries.push(CommutatorEntry {
            relation: relation.into(),
            deviation,
            pass: deviation <= self.tol,
        });
    }

    fn vanishes(&mut self, relation: &str, a: &SparseOperator, b: &SparseOperator) -> Result<()> {
        let d = a.commutator(b)?.max_abs();
        self.push(relation, d);
        Ok(())
    }

    fn equals(&mut self, relation: &str, lhs: &SparseOperator, rhs: &SparseOperator) -> Result<()> {
        let d = lhs.sub(rhs)?.max_abs();
        self.push(relation, d);
        Ok(())
    }

    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn get(&self, relation: &str) -> Option<&CommutatorEntry> {
        self.entries.iter().find(|e| e.relation == relation)
    }
}

fn frobenius_inner(a: &SparseOperator, b: &SparseOperator) -> C64 {
    let bd = b.to_dense();
    a.entries().map(|(r, c, v)| v.conj() * bd[(r, c)]).sum()
}

/// Least-squares `μ` with `[H, η⁺] ≈ μ η⁺` and the remaining residual.
fn fit_ladder(comm: &SparseOperator, eta_plus: &SparseOperator) -> Result<(f64, f64)> {
    let norm = frobenius_inner(eta_plus, eta_plus).re;
    if norm == 0.0 {
        return Err(Error::Domain("η⁺ vanishes on this space".into()));
    }
    let mu = frobenius_inner(eta_plus, comm).re / norm;
    let residual = comm.axpy(C64::new(-mu, 0.0), eta_plus)?.max_abs();
    Ok((mu, residual))
}

/// SU(2) algebra of both families, their mutual commutation, the
/// conservation laws of `H` and the ladder constant, on the full Fock space.
pub fn algebra_check(sites: usize, tau: f64, u: f64, tol: f64) -> Result<CommutatorReport> {
    if sites > 3 {
        return Err(Error::Capacity {
            what: "dense algebra check (sites)".into(),
            dim: sites,
            limit: 3,
        });
    }
    let full = Basis::full(sites)?;
    let eta = build_eta_ops(&full)?;
    let spin = build_spin_su2(&full)?;
    let h = build_hubbard(&HubbardParams::new(sites, tau, u)?, &full)?;
    let two = C64::new(2.0, 0.0);
    let mut rep = CommutatorReport::new(tol);

    for i in 0..sites {
        for k in 0..sites {
            let lhs = eta.plus[i].commutator(&eta.minus[k])?;
            let rhs = if i == k {
                eta.z[i].scale(two)
            } else {
                SparseOperator::zero(full.clone(), full.clone())
            };
            rep.equals(&format!("[η⁺_{i}, η⁻_{k}] = 2δ η^z_{i}"), &lhs, &rhs)?;
        }
    }
    rep.equals(
        "[η⁺, η⁻] = 2η^z",
        &eta.total_plus.commutator(&eta.total_minus)?,
        &eta.total_z.scale(two),
    )?;
    rep.equals("[η^z, η⁺] = η⁺", &eta.total_z.commutator(&eta.total_plus)?, &eta.total_plus)?;
    rep.equals(
        "[η^z, η⁻] = -η⁻",
        &eta.total_z.commutator(&eta.total_minus)?,
        &eta.total_minus.scale(C64::new(-1.0, 0.0)),
    )?;
    rep.equals("[S⁺, S⁻] = 2S^z", &spin.plus.commutator(&spin.minus)?, &spin.z.scale(two))?;
    rep.equals("[S^z, S⁺] = S⁺", &spin.z.commutator(&spin.plus)?, &spin.plus)?;
    rep.equals(
        "[S^z, S⁻] = -S⁻",
        &spin.z.commutator(&spin.minus)?,
        &spin.minus.scale(C64::new(-1.0, 0.0)),
    )?;

    let etas = [("η⁺", &eta.total_plus), ("η⁻", &eta.total_minus), ("η^z", &eta.total_z)];
    let spins = [("S⁺", &spin.plus), ("S⁻", &spin.minus), ("S^z", &spin.z)];
    for (a, ea) in etas {
        for (b, sb) in spins {
            rep.vanishes(&format!("[{a}, {b}] = 0"), ea, sb)?;
        }
    }

    // η⁺η⁻ on the full space: η⁻ maps Full to Full, so compose directly.
    let pair = eta.total_plus.compose(&eta.total_minus)?;
    rep.vanishes("[H, η⁺η⁻] = 0", &h, &pair)?;
    rep.vanishes("[H, η^z] = 0", &h, &eta.total_z)?;
    rep.vanishes("[H, S^z] = 0", &h, &spin.z)?;
    rep.vanishes("[H, S⁺] = 0", &h, &spin.plus)?;

    let (mu, residual) = fit_ladder(&h.commutator(&eta.total_plus)?, &eta.total_plus)?;
    rep.push("[H, η⁺] = μη⁺", residual);
    rep.ladder_constant = Some(mu);
    Ok(rep)
}

/// Measured `μ` from `H_{N+1} η⁺ - η⁺ H_N` between sectors `(n, n)` and
/// `(n+1, n+1)`, with the residual of the fit.
pub fn ladder_constant(params: &HubbardParams, n: usize) -> Result<(f64, f64)> {
    let low = Basis::sector(params.sites, n, n)?;
    let eta = build_eta_ops(&low)?;
    let high = eta.total_plus.codomain().clone();
    if high.is_empty() {
        return Err(Error::Domain(format!("no sector above ({n}, {n}) on {} sites", params.sites)));
    }
    let h_low = build_hubbard(params, &low)?;
    let h_high = build_hubbard(params, &high)?;
    let comm = h_high.compose(&eta.total_plus)?.sub(&eta.total_plus.compose(&h_low)?)?;
    fit_ladder(&comm, &eta.total_plus)
}

/// Commutators of every jump with the η generators and `S^z`, and with `H`
/// when given. Evaluated on the full Fock space so that the raising
/// operators have a home.
pub fn jump_symmetry_check(
    jumps: &JumpSet,
    h_params: Option<&HubbardParams>,
    tol: f64,
) -> Result<CommutatorReport> {
    let sites = jumps
        .operators
        .first()
        .map(|l| l.domain().sites())
        .ok_or_else(|| Error::Domain("empty jump set".into()))?;
    let full = Basis::full(sites)?;
    let full_jumps = build_jumps(jumps.kind, &full, jumps.rate)?;
    let eta = build_eta_ops(&full)?;
    let s_z = build_spin_ops(&full)?.total;
    let h = h_params.map(|p| build_hubbard(p, &full)).transpose()?;
    let mut rep = CommutatorReport::new(tol);
    let targets = [
        ("η⁺", &eta.total_plus),
        ("η⁻", &eta.total_minus),
        ("η^z", &eta.total_z),
        ("S^z", &s_z),
    ];
    for (j, l) in full_jumps.operators.iter().enumerate() {
        let ld = l.adjoint();
        for (name, g) in targets {
            let d = l.commutator(g)?.max_abs().max(ld.commutator(g)?.max_abs());
            rep.push(format!("[L_{j}, {name}] = 0"), d);
        }
        if let Some(h) = &h {
            rep.vanishes(&format!("[L_{j}, H] = 0"), l, h)?;
        }
    }
    Ok(rep)
}

/// Dense generator of `ρ̇ = -i[H, ρ] + γ Σ (L ρ L† - ½{L†L, ρ})`.
pub fn liouvillian_dense(h: &SparseOperator, jumps: &[&JumpSet]) -> Result<DMatrix<C64>> {
    let d = h.dim_in();
    if !h.is_square() {
        return Err(Error::Shape("Hamiltonian must be square".into()));
    }
    if d * d > MAX_LIOUVILLIAN_DIM {
        return Err(Error::Capacity {
            what: "dense Liouvillian side d²".into(),
            dim: d * d,
            limit: MAX_LIOUVILLIAN_DIM,
        });
    }
    let id = DMatrix::<C64>::identity(d, d);
    let hd = h.to_dense();
    let i = C64::new(0.0, 1.0);
    let mut l = (id.kronecker(&hd) - hd.transpose().kronecker(&id)) * (-i);
    for set in jumps {
        let g = C64::new(set.rate, 0.0);
        for op in &set.operators {
            if !op.domain().same_space(h.domain()) || !op.is_square() {
                return Err(Error::Shape("jump and Hamiltonian spaces differ".into()));
            }
            let ld = op.to_dense();
            let ldl = ld.adjoint() * &ld;
            let half = C64::new(0.5, 0.0);
            l += (ld.conjugate().kronecker(&ld)
                - id.kronecker(&ldl) * half
                - ldl.transpose().kronecker(&id) * half)
                * g;
        }
    }
    Ok(l)
}

/// Column-stacked `vec(ρ)`.
pub fn vectorize(rho: &DMatrix<C64>) -> DMatrix<C64> {
    let d = rho.nrows();
    DMatrix::from_column_slice(d * d, 1, rho.as_slice())
}

/// Inverse of [`vectorize`].
pub fn unvectorize(v: &[C64], d: usize) -> Result<DMatrix<C64>> {
    if v.len() != d * d {
        return Err(Error::Shape(format!("vector of length {} is not {d}²", v.len())));
    }
    Ok(DMatrix::from_column_slice(d, d, v))
}

/// `L(ρ)` for a dense superoperator.
pub fn apply_superoperator(l: &DMatrix<C64>, rho: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let d = rho.nrows();
    if l.nrows() != d * d {
        return Err(Error::Shape("superoperator and state dimensions differ".into()));
    }
    let out = l * vectorize(rho);
    unvectorize(out.as_slice(), d)
}

#[derive(Debug, Clone, Serialize)]
pub struct LiouvillianSpectrum {
    pub eigenvalues: Vec<C64>,
    /// Eigenvalues with `|λ| < 1e-9`.
    pub kernel_dim: usize,
    /// Singular values below `1e-9` times the largest.
    pub kernel_dim_svd: usize,
    /// Nonzero eigenvalues with `|Re λ| < 1e-10`.
    pub imaginary: Vec<C64>,
    /// Smallest positive `|Im λ|` among [`Self::imaginary`].
    pub ladder_spacing: Option<f64>,
    /// Largest distance of `Im λ / spacing` from an integer.
    pub ladder_defect: f64,
    /// Ratio of the spacing to the supplied reference constant.
    pub spacing_ratio: Option<f64>,
    pub max_re: f64,
}

const KERNEL_TOL: f64 = 1e-9;
const IMAG_TOL: f64 = 1e-10;

/// Eigenvalues from the complex Schur form. The QR iteration can cycle on
/// highly symmetric blocks; a fixed unitary similarity breaks the symmetry
/// without changing the spectrum.
fn schur_eigenvalues(a: &DMatrix<C64>) -> Result<Vec<C64>> {
    const MAX_ITER: usize = 10_000;
    let from = |s: nalgebra::Schur<C64, nalgebra::Dyn>| {
        s.eigenvalues()
            .map(|v| v.iter().copied().collect::<Vec<_>>())
            .ok_or_else(|| Error::Instability("Schur form is not triangular".into()))
    };
    if let Some(s) = a.clone().try_schur(f64::EPSILON, MAX_ITER) {
        return from(s);
    }
    let n = a.nrows();
    let g = DMatrix::from_fn(n, n, |r, c| {
        C64::new(((r * 31 + c * 17) as f64 * 0.7).sin(), ((r * 13 + c * 7) as f64 * 1.3).cos())
    });
    let q = g.qr().q();
    let rotated = q.adjoint() * a * &q;
    match rotated.try_schur(f64::EPSILON, MAX_ITER) {
        Some(s) => from(s),
        None => Err(Error::Convergence {
            iterations: MAX_ITER,
            residual: f64::NAN,
        }),
    }
}

/// Index sets of the connected components of the coupling graph of `l`.
/// The matrix is block diagonal after permuting to these sets, so its
/// spectrum is the union of the blocks' spectra.
fn coupled_blocks(l: &DMatrix<C64>) -> Vec<Vec<usize>> {
    let n = l.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for c in 0..n {
        for r in 0..n {
            if r != c && l[(r, c)] != C64::new(0.0, 0.0) {
                let (a, b) = (root(&mut parent, r), root(&mut parent, c));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for x in 0..n {
        let r = root(&mut parent, x);
        groups.entry(r).or_default().push(x);
    }
    groups.into_values().collect()
}

/// Eigen- and singular-value analysis of a dense Liouvillian. `reference`
/// is the ladder constant the spacing is compared against.
pub fn steady_space_analysis(l: &DMatrix<C64>, reference: Option<f64>) -> Result<LiouvillianSpectrum> {
    if !l.is_square() {
        return Err(Error::Shape("Liouvillian must be square".into()));
    }
    let mut eigenvalues = Vec::with_capacity(l.nrows());
    let mut sv = Vec::with_capacity(l.nrows());
    for block in coupled_blocks(l) {
        let sub = DMatrix::from_fn(block.len(), block.len(), |r, c| l[(block[r], block[c])]);
        let vals = schur_eigenvalues(&sub)?;
        eigenvalues.extend(vals.iter().copied());
        sv.extend(sub.singular_values().iter().copied());
    }
    let kernel_dim = eigenvalues.iter().filter(|z| z.norm() < KERNEL_TOL).count();
    let top = sv.iter().copied().fold(0.0f64, f64::max);
    let kernel_dim_svd = sv.iter().filter(|&&s| s <= KERNEL_TOL * top.max(f64::MIN_POSITIVE)).count();
    let imaginary: Vec<C64> = eigenvalues
        .iter()
        .copied()
        .filter(|z| z.re.abs() < IMAG_TOL && z.norm() >= KERNEL_TOL)
        .collect();
    let ladder_spacing = imaginary
        .iter()
        .map(|z| z.im.abs())
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.min(x))));
    let ladder_defect = ladder_spacing.map_or(0.0, |s| {
        imaginary
            .iter()
            .map(|z| {
                let q = z.im / s;
                (q - q.round()).abs()
            })
            .fold(0.0, f64::max)
    });
    let max_re = eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    Ok(LiouvillianSpectrum {
        kernel_dim,
        kernel_dim_svd,
        spacing_ratio: ladder_spacing.zip(reference).map(|(s, r)| s / r),
        ladder_spacing,
        ladder_defect,
        imaginary,
        max_re,
        eigenvalues,
    })
}

/// Embed a sector block into the full Fock space.
pub fn embed_in_full(full: &Basis, sector: &Basis, block: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let d = full.dim();
    let mut out = DMatrix::<C64>::zeros(d, d);
    let idx = sector
        .states()
        .iter()
        .map(|s| full.index_of(s).ok_or_else(|| Error::Shape("sector state missing from full basis".into())))
        .collect::<Result<Vec<_>>>()?;
    for (a, &ia) in idx.iter().enumerate() {
        for (b, &ib) in idx.iter().enumerate() {
            out[(ia, ib)] = block[(a, b)];
        }
    }
    Ok(out)
}

/// Projectors onto the joint eigenspaces of `(η⁺η⁻, N↑, N↓)` on the full
/// Fock space of `sites` sites.
pub fn joint_projectors(sites: usize, exec: Execution) -> Result<(Arc<Basis>, Vec<DMatrix<C64>>)> {
    let full = Basis::full(sites)?;
    let spec = etapair_spectrum(sites, GceMode::FullSpace, full.dim().max(1), exec)?;
    let mut out = Vec::with_capacity(spec.joint_label_count());
    for s in &spec.sectors {
        for e in &s.spaces {
            out.push(embed_in_full(&full, &s.basis, &e.projector())?);
        }
    }
    Ok((full, out))
}
