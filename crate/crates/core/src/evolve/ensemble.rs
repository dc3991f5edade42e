use num_complex::Complex64 as C64;
use serde::Serialize;

use super::{Sampler, TrajectoryRecord, Unraveling};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fock::StateVector;
use crate::rng::trajectory_seed;

/// Trajectory average with standard errors (`sample std / √N`).
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleEstimate {
    pub n: usize,
    pub times: Vec<f64>,
    /// `mean[k][o]`: observable `o` at `times[k]`.
    pub mean: Vec<Vec<C64>>,
    pub stderr_re: Vec<Vec<f64>>,
    pub stderr_im: Vec<Vec<f64>>,
    /// Standard error of `|mean|` from the samples projected onto the
    /// direction of the mean.
    pub stderr_abs: Vec<Vec<f64>>,
    pub jump_count: usize,
}

impl EnsembleEstimate {
    fn from_records(records: &[TrajectoryRecord]) -> Result<Self> {
        let n = records.len();
        if n < 2 {
            return Err(Error::Domain(format!("an ensemble needs at least 2 trajectories, got {n}")));
        }
        let times = records[0].times.clone();
        let nt = times.len();
        let nf = n as f64;
        let mut mean = Vec::with_capacity(nt);
        let mut stderr_re = Vec::with_capacity(nt);
        let mut stderr_im = Vec::with_capacity(nt);
        let mut stderr_abs = Vec::with_capacity(nt);
        for k in 0..nt {
            let no = records[0].samples[k].len();
            // Sums of deviations from the first sample, so identical samples
            // give exactly zero variance.
            let shift = records[0].samples[k].clone();
            let mut dm = vec![C64::new(0.0, 0.0); no];
            for rec in records {
                for (o, v) in rec.samples[k].iter().enumerate() {
                    dm[o] += v - shift[o];
                }
            }
            dm.iter_mut().for_each(|v| *v /= nf);
            let m: Vec<C64> = shift.iter().zip(&dm).map(|(s, d)| s + d).collect();
            let mut var_re = vec![0.0; no];
            let mut var_im = vec![0.0; no];
            let mut var_abs = vec![0.0; no];
            for rec in records {
                for (o, v) in rec.samples[k].iter().enumerate() {
                    let dv = (v - shift[o]) - dm[o];
                    var_re[o] += dv.re * dv.re;
                    var_im[o] += dv.im * dv.im;
                    let dir = if m[o].norm() > 0.0 { m[o] / m[o].norm() } else { C64::new(1.0, 0.0) };
                    let proj = (dir.conj() * dv).re;
                    var_abs[o] += proj * proj;
                }
            }
            let se = |v: Vec<f64>| v.into_iter().map(|s| (s / (nf - 1.0)).sqrt() / nf.sqrt()).collect::<Vec<_>>();
            mean.push(m);
            stderr_re.push(se(var_re));
            stderr_im.push(se(var_im));
            stderr_abs.push(se(var_abs));
        }
        Ok(Self {
            n,
            times,
            mean,
            stderr_re,
            stderr_im,
            stderr_abs,
            jump_count: records.iter().map(|r| r.jumps.len()).sum(),
        })
    }
}

/// Average over trajectories with explicit seeds, merged in seed order.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_from_seeds(
    unraveling: &Unraveling,
    psi0: &StateVector,
    t_final: f64,
    dt: f64,
    output_times: &[f64],
    seeds: &[u64],
    sampler: &Sampler<'_>,
    exec: Execution,
) -> Result<EnsembleEstimate> {
    if seeds.len() < 2 {
        return Err(Error::Domain(format!("an ensemble needs at least 2 trajectories, got {}", seeds.len())));
    }
    let records = exec
        .map_indexed(seeds.len(), |k| unraveling.run(psi0, t_final, dt, output_times, seeds[k], sampler))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    EnsembleEstimate::from_records(&records)
}

/// `n` trajectories seeded by [`trajectory_seed`]`(master_seed, k)`. The
/// result depends only on the inputs, not on scheduling.
#[allow(clippy::too_many_arguments)]
pub fn ensemble_average(
    unraveling: &Unraveling,
    psi0: &StateVector,
    t_final: f64,
    dt: f64,
    output_times: &[f64],
    n: usize,
    master_seed: u64,
    sampler: &Sampler<'_>,
    exec: Execution,
) -> Result<EnsembleEstimate> {
    let seeds: Vec<u64> = (0..n as u64).map(|k| trajectory_seed(master_seed, k)).collect();
    ensemble_from_seeds(unraveling, psi0, t_final, dt, output_times, &seeds, sampler, exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::{integrate_master, MasterOptions};
    use crate::fock::{Basis, DensityMatrix, Expectation, SparseOperator};
    use crate::model::{build_hubbard, build_jumps, HubbardParams, JumpKind};

    fn populations(b: &std::sync::Arc<Basis>) -> Vec<SparseOperator> {
        (0..b.dim())
            .map(|k| SparseOperator::diagonal_from(b.clone(), |s| C64::new((s == b.state(k)) as u8 as f64, 0.0)))
            .collect()
    }

    #[test]
    fn identical_seeds_have_zero_error() {
        let b = Basis::sector(3, 1, 1).unwrap();
        let h = build_hubbard(&HubbardParams::new(3, 1.0, 1.0).unwrap(), &b).unwrap();
        let spin = build_jumps(JumpKind::Spin, &b, 2.0).unwrap();
        let u = Unraveling::new(&h, &[&spin]).unwrap();
        let psi = StateVector::basis_state(b.clone(), b.state(0)).unwrap();
        let sampler = |s: &StateVector| Ok(s.amplitudes().to_vec());
        let est = ensemble_from_seeds(&u, &psi, 3.0, 0.01, &[1.0, 3.0], &[5, 5], &sampler, Execution::Sequential).unwrap();
        assert!(est.stderr_re.iter().flatten().all(|&s| s == 0.0));
        assert!(ensemble_from_seeds(&u, &psi, 3.0, 0.01, &[1.0], &[5], &sampler, Execution::Sequential).is_err());
    }

    #[test]
    fn closed_ensemble_has_no_variance() {
        let b = Basis::sector(3, 1, 1).unwrap();
        let h = build_hubbard(&HubbardParams::new(3, 1.0, 1.0).unwrap(), &b).unwrap();
        let u = Unraveling::new(&h, &[]).unwrap();
        let psi = StateVector::basis_state(b.clone(), b.state(0)).unwrap();
        let sampler = |s: &StateVector| Ok(s.amplitudes().to_vec());
        let est = ensemble_average(&u, &psi, 2.0, 0.01, &[2.0], 8, 1, &sampler, Execution::Parallel).unwrap();
        assert!(est.stderr_re.iter().flatten().all(|&s| s == 0.0));
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let b = Basis::sector(3, 1, 1).unwrap();
        let h = build_hubbard(&HubbardParams::new(3, 1.0, 2.0).unwrap(), &b).unwrap();
        let spin = build_jumps(JumpKind::Spin, &b, 2.0).unwrap();
        let u = Unraveling::new(&h, &[&spin]).unwrap();
        let psi = StateVector::basis_state(b.clone(), b.state(2)).unwrap();
        let sampler = |s: &StateVector| Ok(s.amplitudes().to_vec());
        let a = ensemble_average(&u, &psi, 4.0, 0.01, &[2.0, 4.0], 16, 9, &sampler, Execution::Sequential).unwrap();
        let p = ensemble_average(&u, &psi, 4.0, 0.01, &[2.0, 4.0], 16, 9, &sampler, Execution::Parallel).unwrap();
        assert_eq!(a.mean, p.mean);
        assert_eq!(a.stderr_abs, p.stderr_abs);
    }

    #[test]
    fn populations_match_master_equation() {
        let b = Basis::sector(2, 1, 1).unwrap();
        let h = build_hubbard(&HubbardParams::new(2, 1.0, 1.0).unwrap(), &b).unwrap();
        let spin = build_jumps(JumpKind::Spin, &b, 2.0).unwrap();
        let psi = StateVector::basis_state(b.clone(), b.state(0)).unwrap();
        let pops = populations(&b);
        let times = [0.5, 1.0, 2.0];
        let me = integrate_master(&DensityMatrix::pure(&psi), &h, &[&spin], 2.0, &times, &MasterOptions::default()).unwrap();
        let ops = pops.clone();
        let sampler = move |s: &StateVector| ops.iter().map(|o| s.expect(o)).collect::<Result<Vec<_>>>();
        let u = Unraveling::new(&h, &[&spin]).unwrap();
        let est = ensemble_average(&u, &psi, 2.0, 0.01, &times, 2000, 42, &sampler, Execution::Parallel).unwrap();
        for (k, (_, rho)) in me.iter().enumerate() {
            for (o, op) in pops.iter().enumerate() {
                let exact = rho.expect(op).unwrap().re;
                let diff = (est.mean[k][o].re - exact).abs();
                assert!(diff <= 3.0 * est.stderr_re[k][o] + 1e-12, "t={} o={o}: {diff} vs se {}", times[k], est.stderr_re[k][o]);
            }
        }
    }
}
