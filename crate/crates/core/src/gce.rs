//! Generalised grand-canonical states `ρ ∝ exp(μ₁ η⁺η⁻ + μ₂ N↑ + μ₃ N↓)`.
//!
//! `η⁺η⁻`, `N↑` and `N↓` commute, so the state is diagonal in the joint
//! eigenbasis: each `(N↑, N↓)` sector is split into the eigenspaces of
//! `η⁺η⁻`, and the multipliers only set the weight of each eigenspace.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Charge, Error, Result};
use crate::exec::Execution;
use crate::fock::{build_eta_ops, Basis, DensityMatrix};
use crate::linalg::{cluster_sorted, eigh};
use crate::observables::{EtaCorrMatrix, ObservableSet, StructureFactor};

/// Eigenvalues of `η⁺η⁻` closer than this are treated as one eigenspace.
pub const EIGEN_CLUSTER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GceMode {
    /// All sectors; all three multipliers are solved.
    FullSpace,
    /// One `(N↑, N↓)` sector; only `μ₁` is solved.
    FixedSector { n_up: usize, n_down: usize },
}

/// One `η⁺η⁻` eigenspace inside a sector.
#[derive(Debug, Clone)]
pub struct EigenSpace {
    pub eta_pair: f64,
    pub multiplicity: usize,
    /// Orthonormal columns spanning the eigenspace.
    pub vectors: DMatrix<C64>,
}

impl EigenSpace {
    pub fn projector(&self) -> DMatrix<C64> {
        &self.vectors * self.vectors.adjoint()
    }
}

#[derive(Debug, Clone)]
pub struct SectorSpectrum {
    pub basis: Arc<Basis>,
    pub n_up: usize,
    pub n_down: usize,
    /// All eigenvalues, ascending.
    pub values: Vec<f64>,
    pub spaces: Vec<EigenSpace>,
}

/// Block-diagonal spectrum of `η⁺η⁻` over the requested sectors.
#[derive(Debug, Clone)]
pub struct EtaPairSpectrum {
    pub sites: usize,
    pub mode: GceMode,
    pub sectors: Vec<SectorSpectrum>,
}

impl EtaPairSpectrum {
    /// Number of distinct joint eigenvalue labels `(η⁺η⁻, N↑, N↓)`.
    pub fn joint_label_count(&self) -> usize {
        self.sectors.iter().map(|s| s.spaces.len()).sum()
    }
}

/// `η⁺η⁻` only moves doublons into empty sites, so it is block diagonal in
/// the configuration of singly occupied sites; each block is diagonalized
/// on its own.
fn sector_spectrum(basis: Arc<Basis>, n_up: usize, n_down: usize) -> Result<SectorSpectrum> {
    let eta = build_eta_ops(&basis)?;
    let d = basis.dim();
    let mut blocks: std::collections::BTreeMap<(u32, u32), Vec<usize>> = Default::default();
    for (k, s) in basis.states().iter().enumerate() {
        blocks.entry((s.up & !s.down, s.down & !s.up)).or_default().push(k);
    }
    let mut dense = DMatrix::<C64>::zeros(d, d);
    for (r, c, v) in eta.pair.entries() {
        dense[(r, c)] = v;
    }
    let mut pairs: Vec<(f64, Vec<(usize, C64)>)> = Vec::with_capacity(d);
    for idx in blocks.values() {
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |r, c| dense[(idx[r], idx[c])]);
        let (vals, vecs) = eigh(&sub);
        for (j, v) in vals.into_iter().enumerate() {
            pairs.push((v, idx.iter().enumerate().map(|(r, &g)| (g, vecs[(r, j)])).collect()));
        }
    }
    drop(dense);
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let spaces = cluster_sorted(&values, EIGEN_CLUSTER_TOL)
        .into_iter()
        .map(|(value, start, len)| {
            let mut vectors = DMatrix::<C64>::zeros(d, len);
            for (col, (_, entries)) in pairs[start..start + len].iter().enumerate() {
                for &(g, a) in entries {
                    vectors[(g, col)] = a;
                }
            }
            EigenSpace {
                // Snap to the exact integer spectrum when within tolerance.
                eta_pair: if (value - value.round()).abs() < EIGEN_CLUSTER_TOL {
                    value.round()
                } else {
                    value
                },
                multiplicity: len,
                vectors,
            }
        })
        .collect();
    Ok(SectorSpectrum {
        basis,
        n_up,
        n_down,
        values,
        spaces,
    })
}

/// Diagonalize `η⁺η⁻` sector by sector.
pub fn etapair_spectrum(
    sites: usize,
    mode: GceMode,
    dense_limit: usize,
    exec: Execution,
) -> Result<EtaPairSpectrum> {
    let bases = match mode {
        GceMode::FullSpace => Basis::all_sectors(sites)?,
        GceMode::FixedSector { n_up, n_down } => vec![Basis::sector(sites, n_up, n_down)?],
    };
    if let Some(big) = bases.iter().find(|b| b.dim() > dense_limit) {
        return Err(Error::Capacity {
            what: "η⁺η⁻ sector diagonalization".into(),
            dim: big.dim(),
            limit: dense_limit,
        });
    }
    let sectors = exec
        .map_indexed(bases.len(), |k| {
            let b = bases[k].clone();
            match b.space() {
                crate::fock::Space::Sector { n_up, n_down } => sector_spectrum(b, n_up, n_down),
                _ => unreachable!("sector bases only"),
            }
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(EtaPairSpectrum {
        sites,
        mode,
        sectors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GceTargets {
    pub sites: usize,
    pub eta_pair: f64,
    pub n_up: f64,
    pub n_down: f64,
    pub mode: GceMode,
}

/// What to do with a target sitting on the edge of its achievable range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Saturation {
    /// Report [`Error::Boundary`].
    #[default]
    Reject,
    /// Return the limiting state (`μ = ±∞`) supported on the extremal
    /// eigenspaces and solve the remaining multipliers there.
    Limit,
}

#[derive(Debug, Clone, Copy)]
pub struct GceOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub saturation: Saturation,
    pub dense_limit: usize,
    pub exec: Execution,
}

impl Default for GceOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            saturation: Saturation::Reject,
            dense_limit: crate::DEFAULT_DENSE_LIMIT,
            exec: Execution::Parallel,
        }
    }
}

/// Weighted eigenspace reference: `(sector index, space index)`.
#[derive(Debug, Clone, Copy)]
struct Label {
    sector: usize,
    space: usize,
    charges: [f64; 3],
    multiplicity: f64,
}

#[derive(Debug, Clone)]
pub struct GceSolution {
    pub mode: GceMode,
    /// `[μ₁, μ₂, μ₃]`; in fixed-sector mode `μ₂ = μ₃ = 0`. Saturated
    /// multipliers are `±∞`.
    pub mu: [f64; 3],
    pub saturated: Option<Charge>,
    pub iterations: usize,
    /// Largest absolute moment mismatch on the solved charges.
    pub residual: f64,
    /// Achieved `[<η⁺η⁻>, <N↑>, <N↓>]`.
    pub achieved: [f64; 3],
    pub spectrum: EtaPairSpectrum,
    /// Probability of each eigenspace, `[sector][space]`.
    pub weights: Vec<Vec<f64>>,
}

/// Expectations predicted by a solved GCE state.
#[derive(Debug, Clone)]
pub struct GcePrediction {
    pub corr: EtaCorrMatrix,
    /// Common value of every `C_ij`, `i != j`.
    pub uniform_offdiag: C64,
    pub double_occupancy: Vec<f64>,
    pub structure_factor: StructureFactor,
    pub eta_pair: f64,
}

fn labels_of(spec: &EtaPairSpectrum) -> Vec<Label> {
    let mut out = Vec::new();
    for (si, s) in spec.sectors.iter().enumerate() {
        for (ei, e) in s.spaces.iter().enumerate() {
            out.push(Label {
                sector: si,
                space: ei,
                charges: [e.eta_pair, s.n_up as f64, s.n_down as f64],
                multiplicity: e.multiplicity as f64,
            });
        }
    }
    out
}

/// Probabilities and first two moments for multipliers `mu` over `labels`
/// restricted to the charges in `active`.
fn moments(labels: &[Label], mu: &[f64; 3], active: &[usize]) -> (Vec<f64>, [f64; 3], [[f64; 3]; 3]) {
    let exps: Vec<f64> = labels
        .iter()
        .map(|l| active.iter().map(|&a| mu[a] * l.charges[a]).sum::<f64>() + l.multiplicity.ln())
        .collect();
    let top = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = exps.iter().map(|e| (e - top).exp()).collect();
    let z: f64 = raw.iter().sum();
    let p: Vec<f64> = raw.iter().map(|r| r / z).collect();
    let mut mean = [0.0; 3];
    for (l, &pi) in labels.iter().zip(&p) {
        for a in 0..3 {
            mean[a] += pi * l.charges[a];
        }
    }
    let mut cov = [[0.0; 3]; 3];
    for (l, &pi) in labels.iter().zip(&p) {
        for a in 0..3 {
            for b in 0..3 {
                cov[a][b] += pi * (l.charges[a] - mean[a]) * (l.charges[b] - mean[b]);
            }
        }
    }
    (p, mean, cov)
}

fn solve_small(a: &[[f64; 3]; 3], b: &[f64; 3], active: &[usize]) -> Option<[f64; 3]> {
    let n = active.len();
    let m = DMatrix::from_fn(n, n, |i, j| a[active[i]][active[j]]);
    let rhs = nalgebra::DVector::from_fn(n, |i, _| b[active[i]]);
    let x = m.lu().solve(&rhs)?;
    let mut out = [0.0; 3];
    for (i, &k) in active.iter().enumerate() {
        out[k] = x[i];
    }
    Some(out)
}

fn residual_norm(mean: &[f64; 3], target: &[f64; 3], active: &[usize]) -> f64 {
    active
        .iter()
        .map(|&a| (mean[a] - target[a]).abs())
        .fold(0.0, f64::max)
}

/// Solve for the multipliers reproducing `targets`.
///
/// Newton iteration from `μ = 0` on the moment equations with the exact
/// Jacobian (the covariance of the charges), halving steps until the
/// residual decreases. In fixed-sector mode a bisection on `μ₁` takes over
/// if the damped Newton iteration stalls.
pub fn solve_multipliers(targets: &GceTargets, opts: &GceOptions) -> Result<GceSolution> {
    let spectrum = etapair_spectrum(targets.sites, targets.mode, opts.dense_limit, opts.exec)?;
    solve_on_spectrum(spectrum, targets, opts)
}

/// As [`solve_multipliers`] on a precomputed spectrum.
pub fn solve_on_spectrum(
    spectrum: EtaPairSpectrum,
    targets: &GceTargets,
    opts: &GceOptions,
) -> Result<GceSolution> {
    if spectrum.mode != targets.mode {
        return Err(Error::Domain("spectrum and targets use different GCE modes".into()));
    }
    let target = [targets.eta_pair, targets.n_up, targets.n_down];
    if target.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain("GCE targets must be finite".into()));
    }
    let mut labels = labels_of(&spectrum);
    let mut active: Vec<usize> = match targets.mode {
        GceMode::FixedSector { n_up, n_down } => {
            if (targets.n_up - n_up as f64).abs() > opts.tol || (targets.n_down - n_down as f64).abs() > opts.tol {
                return Err(Error::Domain(format!(
                    "fixed sector ({n_up}, {n_down}) cannot reach <N↑> = {}, <N↓> = {}",
                    targets.n_up, targets.n_down
                )));
            }
            vec![0]
        }
        GceMode::FullSpace => vec![0, 1, 2],
    };

    let mut mu = [0.0f64; 3];
    let mut saturated = None;
    let charges = [Charge::EtaPair, Charge::NumberUp, Charge::NumberDown];
    // Boundary handling, number charges first so the η range is evaluated
    // on the reachable sectors.
    for &a in [1usize, 2, 0].iter() {
        if !active.contains(&a) {
            continue;
        }
        let lo = labels.iter().map(|l| l.charges[a]).fold(f64::INFINITY, f64::min);
        let hi = labels.iter().map(|l| l.charges[a]).fold(f64::NEG_INFINITY, f64::max);
        let margin = opts.tol * hi.abs().max(lo.abs()).max(1.0);
        let at_lo = target[a] <= lo + margin;
        let at_hi = target[a] >= hi - margin;
        let outside = target[a] < lo - margin || target[a] > hi + margin;
        if !(at_lo || at_hi) {
            continue;
        }
        if outside || opts.saturation == Saturation::Reject || saturated.is_some() {
            return Err(Error::Boundary {
                charge: charges[a],
                target: target[a],
                min: lo,
                max: hi,
            });
        }
        let edge = if at_lo { lo } else { hi };
        labels.retain(|l| (l.charges[a] - edge).abs() <= margin);
        mu[a] = if at_lo { f64::NEG_INFINITY } else { f64::INFINITY };
        active.retain(|&x| x != a);
        saturated = Some(charges[a]);
    }

    let finite_mu = |mu: &[f64; 3]| {
        let mut m = *mu;
        m.iter_mut().for_each(|v| {
            if !v.is_finite() {
                *v = 0.0
            }
        });
        m
    };

    let mut iterations = 0;
    let (mut p, mut mean, mut cov) = moments(&labels, &finite_mu(&mu), &active);
    let mut res = residual_norm(&mean, &target, &active);
    while res > opts.tol && iterations < opts.max_iter && !active.is_empty() {
        iterations += 1;
        let diff = [target[0] - mean[0], target[1] - mean[1], target[2] - mean[2]];
        let Some(step) = solve_small(&cov, &diff, &active) else {
            break;
        };
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..=60 {
            let mut trial = mu;
            for &a in &active {
                trial[a] += scale * step[a];
            }
            let (tp, tm, tc) = moments(&labels, &finite_mu(&trial), &active);
            let tr = residual_norm(&tm, &target, &active);
            if tr < res {
                mu = trial;
                p = tp;
                mean = tm;
                cov = tc;
                res = tr;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
    }

    if res > opts.tol && active == [0] {
        // Monotone one-dimensional fallback: <η⁺η⁻>(μ₁) is increasing.
        let f = |m1: f64| {
            let mut t = mu;
            t[0] = m1;
            moments(&labels, &finite_mu(&t), &active).1[0] - target[0]
        };
        let (mut lo, mut hi) = (-1.0, 1.0);
        while f(lo) > 0.0 && lo > -1e6 {
            lo *= 2.0;
        }
        while f(hi) < 0.0 && hi < 1e6 {
            hi *= 2.0;
        }
        for _ in 0..400 {
            iterations += 1;
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 * hi.abs().max(1.0) {
                break;
            }
        }
        mu[0] = 0.5 * (lo + hi);
        let (tp, tm, _) = moments(&labels, &finite_mu(&mu), &active);
        p = tp;
        mean = tm;
        res = residual_norm(&mean, &target, &active);
    }

    if res > opts.tol {
        return Err(Error::Solver {
            iterations,
            residual: res,
            last: mu,
        });
    }

    let mut weights: Vec<Vec<f64>> = spectrum
        .sectors
        .iter()
        .map(|s| vec![0.0; s.spaces.len()])
        .collect();
    for (l, &pi) in labels.iter().zip(&p) {
        weights[l.sector][l.space] = pi;
    }
    Ok(GceSolution {
        mode: targets.mode,
        mu,
        saturated,
        iterations,
        residual: res,
        achieved: mean,
        spectrum,
        weights,
    })
}

impl GceSolution {
    /// Sector blocks of the state, `Σ_α w_α P_α / dim P_α` per sector.
    pub fn sector_states(&self) -> Result<Vec<DensityMatrix>> {
        self.spectrum
            .sectors
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| {
                let d = s.basis.dim();
                let mut m = DMatrix::<C64>::zeros(d, d);
                for (e, &wi) in s.spaces.iter().zip(w) {
                    if wi > 0.0 {
                        m += e.projector() * C64::new(wi / e.multiplicity as f64, 0.0);
                    }
                }
                DensityMatrix::new(s.basis.clone(), m)
            })
            .collect()
    }

    /// The state as one density matrix; only meaningful in fixed-sector mode.
    pub fn sector_state(&self) -> Result<DensityMatrix> {
        match self.mode {
            GceMode::FixedSector { .. } => Ok(self.sector_states()?.remove(0)),
            GceMode::FullSpace => Err(Error::Domain(
                "full-space GCE state is block diagonal; use sector_states".into(),
            )),
        }
    }
}

/// Predicted η correlations, double occupancy and structure factor.
pub fn gce_expectations(sol: &GceSolution) -> Result<GcePrediction> {
    let m = sol.spectrum.sites;
    let mut corr = DMatrix::<C64>::zeros(m, m);
    let mut t = DMatrix::<C64>::zeros(m, m);
    let mut eta_pair = 0.0;
    for rho in sol.sector_states()? {
        if rho.trace().re == 0.0 {
            continue;
        }
        let obs = ObservableSet::new(rho.basis())?;
        corr += obs.eta_correlation_matrix(&rho)?.entries;
        t += obs.doublon_two_point(&rho)?;
        eta_pair += crate::fock::Expectation::expect(&rho, obs.eta_pair_op())?.re;
    }
    let corr = EtaCorrMatrix { entries: corr };
    let spread = corr.off_diagonal_spread();
    if spread > 1e-9 {
        return Err(Error::Instability(format!(
            "GCE off-diagonal correlations are not uniform (spread {spread:e})"
        )));
    }
    let double_occupancy = (0..m).map(|i| corr.get(i, i).re).collect();
    let uniform_offdiag = if m > 1 { corr.off_diagonal_mean() } else { C64::new(0.0, 0.0) };
    Ok(GcePrediction {
        structure_factor: crate::observables::structure_factor_from_two_point(&t),
        corr,
        uniform_offdiag,
        double_occupancy,
        eta_pair,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::Expectation;
    use crate::model::{build_hubbard, HubbardParams};
    use crate::spectra::dense_ground_state;

    fn fixed(m: usize, n: usize, eta_pair: f64) -> GceTargets {
        GceTargets {
            sites: m,
            eta_pair,
            n_up: n as f64,
            n_down: n as f64,
            mode: GceMode::FixedSector { n_up: n, n_down: n },
        }
    }

    #[test]
    fn two_site_spectrum() {
        let s = etapair_spectrum(2, GceMode::FixedSector { n_up: 1, n_down: 1 }, 5000, Execution::Sequential).unwrap();
        let v = &s.sectors[0].values;
        let expected = [0.0, 0.0, 0.0, 2.0];
        for (a, b) in v.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(s.joint_label_count(), 2);
    }

    #[test]
    fn tower_maximum() {
        for m in [2usize, 3, 4, 5, 6] {
            for n in 0..=m {
                let s = etapair_spectrum(m, GceMode::FixedSector { n_up: n, n_down: n }, 5000, Execution::Parallel).unwrap();
                let vals = &s.sectors[0].values;
                let top = *vals.last().unwrap();
                assert!((top - (n * (m - n + 1)) as f64).abs() < 1e-9, "M={m} N={n}");
                assert!(vals[0] >= -1e-10);
            }
        }
    }

    #[test]
    fn mixed_state_target_gives_zero_multiplier() {
        let spec = etapair_spectrum(4, GceMode::FixedSector { n_up: 2, n_down: 2 }, 5000, Execution::Sequential).unwrap();
        let mean = spec.sectors[0].values.iter().sum::<f64>() / 36.0;
        let sol = solve_multipliers(&fixed(4, 2, mean), &GceOptions::default()).unwrap();
        assert!(sol.mu[0].abs() < 1e-9);
        let pred = gce_expectations(&sol).unwrap();
        assert!(pred.uniform_offdiag.norm() < 1e-12);
    }

    #[test]
    fn reproduces_ground_state_target() {
        let b = Basis::sector(4, 2, 2).unwrap();
        let h = build_hubbard(&HubbardParams::new(4, 1.0, 1.0).unwrap(), &b).unwrap();
        let g = dense_ground_state(&h).unwrap();
        let eta = build_eta_ops(&b).unwrap();
        let target = g.vector.expect(&eta.pair).unwrap().re;
        let opts = GceOptions { saturation: Saturation::Limit, ..Default::default() };
        let sol = solve_multipliers(&fixed(4, 2, target), &opts).unwrap();
        assert!((sol.achieved[0] - target).abs() <= 1e-10);
        let pred = gce_expectations(&sol).unwrap();
        assert!((pred.eta_pair - target).abs() <= 1e-10);
    }

    #[test]
    fn interior_targets_converge() {
        for target in [0.3, 1.0, 2.5, 4.0, 5.9] {
            let sol = solve_multipliers(&fixed(4, 2, target), &GceOptions::default()).unwrap();
            assert!(sol.residual <= 1e-10);
            assert!(sol.mu[0].is_finite());
            let rho = sol.sector_state().unwrap();
            let eta = build_eta_ops(rho.basis()).unwrap();
            assert!((rho.expect(&eta.pair).unwrap().re - target).abs() < 1e-9);
        }
    }

    #[test]
    fn yang_limit_is_a_boundary() {
        let err = solve_multipliers(&fixed(4, 2, 6.0), &GceOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Boundary { charge: Charge::EtaPair, .. }));
        let err = solve_multipliers(&fixed(4, 2, 7.0), &GceOptions { saturation: Saturation::Limit, ..Default::default() }).unwrap_err();
        assert!(matches!(err, Error::Boundary { .. }));
    }

    #[test]
    fn saturated_limit_is_the_extremal_projector() {
        let opts = GceOptions { saturation: Saturation::Limit, ..Default::default() };
        let sol = solve_multipliers(&fixed(4, 2, 6.0), &opts).unwrap();
        assert_eq!(sol.saturated, Some(Charge::EtaPair));
        assert_eq!(sol.mu[0], f64::INFINITY);
        let rho = sol.sector_state().unwrap();
        let y = crate::symmetry::yang_state(4, 2).unwrap();
        // ρ = |Y><Y|
        let diff = rho.matrix() - DensityMatrix::pure(&y).matrix();
        assert!(crate::linalg::max_abs(&diff) < 1e-10);
    }

    #[test]
    fn sum_rule_consistency() {
        for mu1 in [-1.0f64, 0.5, 2.0] {
            // Build the target from μ₁ directly, then solve back.
            let spec = etapair_spectrum(4, GceMode::FixedSector { n_up: 2, n_down: 2 }, 5000, Execution::Sequential).unwrap();
            let s = &spec.sectors[0];
            let z: f64 = s.spaces.iter().map(|e| e.multiplicity as f64 * (mu1 * e.eta_pair).exp()).sum();
            let target: f64 = s.spaces.iter().map(|e| e.eta_pair * e.multiplicity as f64 * (mu1 * e.eta_pair).exp()).sum::<f64>() / z;
            let sol = solve_multipliers(&fixed(4, 2, target), &GceOptions::default()).unwrap();
            assert!((sol.mu[0] - mu1).abs() < 1e-8);
            let pred = gce_expectations(&sol).unwrap();
            let diag: f64 = pred.double_occupancy.iter().sum();
            let implied = (pred.eta_pair - diag) / 12.0;
            assert!((pred.uniform_offdiag.re - implied).abs() < 1e-12);
            assert!(pred.uniform_offdiag.im.abs() < 1e-12);
        }
    }

    #[test]
    fn full_space_mode() {
        let targets = GceTargets { sites: 3, eta_pair: 1.2, n_up: 1.4, n_down: 1.7, mode: GceMode::FullSpace };
        let sol = solve_multipliers(&targets, &GceOptions::default()).unwrap();
        assert!(sol.residual <= 1e-10);
        for (a, t) in sol.achieved.iter().zip([1.2, 1.4, 1.7]) {
            assert!((a - t).abs() <= 1e-10);
        }
        let pred = gce_expectations(&sol).unwrap();
        assert!((pred.eta_pair - 1.2).abs() < 1e-9);
        let bad = GceTargets { n_up: 3.0, ..targets };
        assert!(matches!(
            solve_multipliers(&bad, &GceOptions::default()),
            Err(Error::Boundary { charge: Charge::NumberUp, .. })
        ));
    }

    #[test]
    fn gce_commutes_with_hubbard() {
        let sol = solve_multipliers(&fixed(4, 2, 1.7), &GceOptions::default()).unwrap();
        let rho = sol.sector_state().unwrap();
        let h = build_hubbard(&HubbardParams::new(4, 1.0, 2.0).unwrap(), rho.basis()).unwrap();
        let comm = h.mul_dense(rho.matrix()) - h.dense_mul(rho.matrix());
        assert!(crate::linalg::max_abs(&comm) < 1e-10);
    }
}
