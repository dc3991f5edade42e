//! Time evolution: Lindblad density-matrix integration, quantum-trajectory
//! unravelling, periodically driven Schrödinger dynamics and a Krylov
//! propagator for static closed evolution.
//!
//! All integrators are fixed-step RK4. Steps are shortened only to land
//! exactly on requested output times, so results depend on `dt` and the
//! output grid alone.

mod ensemble;
mod floquet;
mod krylov;
mod master;
mod trajectory;

pub use crate::fock::DensityMatrix;
pub use ensemble::{ensemble_average, ensemble_from_seeds, EnsembleEstimate};
pub use floquet::{integrate_schrodinger_td, integrate_schrodinger_td_with, DrivenSystem};
pub use krylov::{KrylovPropagator, KRYLOV_DIM};
pub use master::{integrate_master, integrate_master_with, lindblad_rhs, Lindbladian, MasterOptions};
pub use trajectory::{run_trajectory, JumpEvent, TrajectoryRecord, Unraveling};

use crate::error::{Error, Result};

/// Default step for dissipative evolution (`1/τ` units).
pub const DEFAULT_DT_MASTER: f64 = 0.01;
/// Default step for driven evolution.
pub const DEFAULT_DT_DRIVEN: f64 = 0.005;

/// Observable extractor applied to the normalised state at output times.
pub type Sampler<'a> = dyn Fn(&crate::fock::StateVector) -> Result<Vec<num_complex::Complex64>> + Sync + 'a;

fn check_grid(t_final: f64, dt: f64, times: &[f64]) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::Domain(format!("final time must be non-negative, got {t_final}")));
    }
    let mut prev = f64::NEG_INFINITY;
    for &t in times {
        if !(t >= 0.0 && t <= t_final * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!("output time {t} outside [0, {t_final}]")));
        }
        if t <= prev {
            return Err(Error::Domain("output times must be strictly increasing".into()));
        }
        prev = t;
    }
    Ok(())
}

/// Step sizes from `t` to `target`: full `dt` steps and one shortened last
/// step. A remainder below `1e-9 dt` is absorbed into the previous step.
fn steps_to(t: f64, target: f64, dt: f64) -> impl Iterator<Item = f64> {
    let span = (target - t).max(0.0);
    let mut n = (span / dt).floor() as usize;
    let mut rest = span - n as f64 * dt;
    if rest < 1e-9 * dt && n > 0 {
        rest += dt;
        n -= 1;
    } else if rest < 1e-9 * dt {
        rest = 0.0;
    }
    std::iter::repeat_n(dt, n).chain((rest > 0.0).then_some(rest))
}

/// Uniform grid `0, every, 2·every, …` up to and including `t_final`.
pub fn uniform_grid(t_final: f64, every: f64) -> Vec<f64> {
    if !(every > 0.0) {
        return vec![0.0];
    }
    let n = (t_final / every + 1e-9).floor() as usize;
    (0..=n).map(|k| k as f64 * every).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_cover_span() {
        let s: Vec<f64> = steps_to(0.0, 1.0, 0.3).collect();
        assert_eq!(s.len(), 4);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let s: Vec<f64> = steps_to(0.0, 0.3, 0.1).collect();
        assert_eq!(s.len(), 3);
        assert_eq!(steps_to(2.0, 2.0, 0.1).count(), 0);
    }

    #[test]
    fn grid_checks() {
        assert!(check_grid(1.0, 0.0, &[]).is_err());
        assert!(check_grid(1.0, 0.1, &[0.5, 0.5]).is_err());
        assert!(check_grid(1.0, 0.1, &[2.0]).is_err());
        assert!(check_grid(1.0, 0.1, &[0.0, 1.0]).is_ok());
        assert_eq!(uniform_grid(1.0, 0.25).len(), 5);
    }
}
