use num_complex::Complex64 as C64;
use rand::Rng;
use serde::Serialize;

use super::{check_grid, steps_to, KrylovPropagator, Sampler};
use crate::error::{Error, Result};
use crate::fock::{SparseOperator, StateVector};
use crate::model::JumpSet;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpEvent {
    pub time: f64,
    /// Index of the jump set in the unravelling.
    pub set: usize,
    /// Operator within the set, i.e. the site.
    pub site: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub jumps: Vec<JumpEvent>,
    pub times: Vec<f64>,
    /// `samples[k]` holds the sampler output at `times[k]`.
    pub samples: Vec<Vec<C64>>,
}

#[derive(Debug, Clone)]
struct Channel {
    set: usize,
    site: usize,
    rate: f64,
    op: SparseOperator,
}

/// Waiting-time unravelling of a Lindblad equation with
/// `H_eff = H - (i/2) Σ γ L†L`.
#[derive(Debug, Clone)]
pub struct Unraveling {
    h_eff: SparseOperator,
    channels: Vec<Channel>,
    /// Exact propagator used when no channel is active.
    closed: Option<KrylovPropagator>,
}

impl Unraveling {
    pub fn new(h: &SparseOperator, jumps: &[&JumpSet]) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::Shape("Hamiltonian must be square".into()));
        }
        let mut h_eff = h.clone();
        let mut channels = Vec::new();
        for (set, js) in jumps.iter().enumerate() {
            if js.rate == 0.0 {
                continue;
            }
            for (site, op) in js.operators.iter().enumerate() {
                if !op.domain().same_space(h.domain()) || !op.is_square() {
                    return Err(Error::Shape("jump operators must act on the Hamiltonian's space".into()));
                }
                let decay = op.adjoint().compose(op)?;
                h_eff = h_eff.axpy(C64::new(0.0, -0.5 * js.rate), &decay)?;
                channels.push(Channel {
                    set,
                    site,
                    rate: js.rate,
                    op: op.clone(),
                });
            }
        }
        let closed = if channels.is_empty() {
            Some(KrylovPropagator::new(h)?)
        } else {
            None
        };
        Ok(Self {
            h_eff,
            channels,
            closed,
        })
    }

    /// `ψ ↦ -i H_eff ψ` stepped by RK4.
    fn rk4(&self, psi: &[C64], h: f64, k: &mut [Vec<C64>; 5]) -> Vec<C64> {
        let d = psi.len();
        let mi = C64::new(0.0, -1.0);
        let [k1, k2, k3, k4, tmp] = k;
        let deriv = |x: &[C64], out: &mut Vec<C64>| {
            self.h_eff.apply_into(x, out);
            out.iter_mut().for_each(|v| *v *= mi);
        };
        deriv(psi, k1);
        for i in 0..d {
            tmp[i] = psi[i] + k1[i] * (0.5 * h);
        }
        deriv(tmp, k2);
        for i in 0..d {
            tmp[i] = psi[i] + k2[i] * (0.5 * h);
        }
        deriv(tmp, k3);
        for i in 0..d {
            tmp[i] = psi[i] + k3[i] * h;
        }
        deriv(tmp, k4);
        (0..d)
            .map(|i| psi[i] + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0))
            .collect()
    }

    /// One trajectory from `psi0`, sampled at `output_times`.
    pub fn run(
        &self,
        psi0: &StateVector,
        t_final: f64,
        dt: f64,
        output_times: &[f64],
        seed: u64,
        sampler: &Sampler<'_>,
    ) -> Result<TrajectoryRecord> {
        check_grid(t_final, dt, output_times)?;
        if !psi0.basis().same_space(self.h_eff.domain()) {
            return Err(Error::Shape("initial state and Hamiltonian spaces differ".into()));
        }
        if !psi0.is_normalized() {
            return Err(Error::Domain("initial state must be normalised".into()));
        }
        if let Some(prop) = &self.closed {
            let states = prop.evolve(psi0, output_times)?;
            let samples = states.iter().map(sampler).collect::<Result<Vec<_>>>()?;
            return Ok(TrajectoryRecord {
                seed,
                jumps: Vec::new(),
                times: output_times.to_vec(),
                samples,
            });
        }
        let d = psi0.dim();
        let mut rng = rng_from_seed(seed);
        let mut work: [Vec<C64>; 5] = std::array::from_fn(|_| vec![C64::new(0.0, 0.0); d]);
        let mut psi: Vec<C64> = psi0.amplitudes().to_vec();
        let mut r: f64 = rng.random();
        let mut t = 0.0;
        let mut jumps = Vec::new();
        let mut samples = Vec::with_capacity(output_times.len());
        let basis = psi0.basis().clone();

        for &target in output_times {
            let mut steps: Vec<f64> = steps_to(t, target, dt).collect();
            let mut s = 0;
            while s < steps.len() {
                let h = steps[s];
                let next = self.rk4(&psi, h, &mut work);
                let p_old = norm_sqr(&psi);
                let p_new = norm_sqr(&next);
                if p_new > r {
                    psi = next;
                    t += h;
                    s += 1;
                    continue;
                }
                // Crossing inside the step: interpolate ‖ψ‖² linearly.
                let theta = ((p_old - r) / (p_old - p_new)).clamp(1e-12, 1.0);
                let tj = theta * h;
                let at_jump = self.rk4(&psi, tj, &mut work);
                let weights: Vec<f64> = self
                    .channels
                    .iter()
                    .map(|c| {
                        let mut out = vec![C64::new(0.0, 0.0); d];
                        c.op.apply_into(&at_jump, &mut out);
                        c.rate * norm_sqr(&out)
                    })
                    .collect();
                let total: f64 = weights.iter().sum();
                if !(total > 0.0) {
                    return Err(Error::NoJumpChannel {
                        time: t + tj,
                        norm: norm_sqr(&at_jump).sqrt(),
                    });
                }
                let pick = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut chosen = weights.len() - 1;
                for (k, w) in weights.iter().enumerate() {
                    acc += w;
                    if pick < acc {
                        chosen = k;
                        break;
                    }
                }
                let ch = &self.channels[chosen];
                let mut jumped = vec![C64::new(0.0, 0.0); d];
                ch.op.apply_into(&at_jump, &mut jumped);
                let n = norm_sqr(&jumped).sqrt();
                jumped.iter_mut().for_each(|v| *v /= n);
                psi = jumped;
                t += tj;
                jumps.push(JumpEvent {
                    time: t,
                    set: ch.set,
                    site: ch.site,
                });
                r = rng.random();
                // Finish the interrupted step before resuming full steps.
                steps[s] = h - tj;
                if steps[s] <= 1e-12 * dt {
                    s += 1;
                }
            }
            t = target;
            let norm = norm_sqr(&psi).sqrt();
            if !norm.is_finite() || norm == 0.0 {
                return Err(Error::Instability(format!("trajectory norm {norm} at t = {t}")));
            }
            let state = StateVector::new(basis.clone(), psi.iter().map(|v| v / norm).collect())?;
            samples.push(sampler(&state)?);
        }
        Ok(TrajectoryRecord {
            seed,
            jumps,
            times: output_times.to_vec(),
            samples,
        })
    }
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Single trajectory; see [`Unraveling::run`].
#[allow(clippy::too_many_arguments)]
pub fn run_trajectory(
    psi0: &StateVector,
    h: &SparseOperator,
    jumps: &[&JumpSet],
    t_final: f64,
    dt: f64,
    output_times: &[f64],
    seed: u64,
    sampler: &Sampler<'_>,
) -> Result<TrajectoryRecord> {
    Unraveling::new(h, jumps)?.run(psi0, t_final, dt, output_times, seed, sampler)
}
