use num_complex::Complex64 as C64;

use super::{check_grid, steps_to};
use crate::error::{Error, Result};
use crate::fock::{SparseOperator, StateVector};
use crate::model::DriveParams;

/// `H(t) = H + B(t) F` with a diagonal field operator `F`.
#[derive(Debug, Clone)]
pub struct DrivenSystem {
    h: SparseOperator,
    field: Vec<f64>,
    drive: DriveParams,
}

impl DrivenSystem {
    pub fn new(h: &SparseOperator, field: &SparseOperator, drive: &DriveParams) -> Result<Self> {
        drive.validate()?;
        if !h.is_square() || !field.domain().same_space(h.domain()) {
            return Err(Error::Shape("field and Hamiltonian spaces differ".into()));
        }
        let diag = field
            .as_diagonal()
            .ok_or_else(|| Error::Domain("field operator must be diagonal".into()))?;
        if diag.iter().any(|v| v.im != 0.0) {
            return Err(Error::Domain("field operator must be real".into()));
        }
        Ok(Self {
            h: h.clone(),
            field: diag.iter().map(|v| v.re).collect(),
            drive: drive.clone(),
        })
    }

    /// `out = -i H(t) x`.
    fn deriv(&self, t: f64, x: &[C64], out: &mut [C64]) {
        self.h.apply_into(x, out);
        let b = self.drive.field(t);
        for ((o, xi), f) in out.iter_mut().zip(x).zip(&self.field) {
            *o = C64::new(0.0, -1.0) * (*o + xi * (b * f));
        }
    }

    fn rk4(&self, t: f64, psi: &mut [C64], h: f64, k: &mut [Vec<C64>; 5]) {
        let [k1, k2, k3, k4, tmp] = k;
        self.deriv(t, psi, k1);
        for (i, v) in tmp.iter_mut().enumerate() {
            *v = psi[i] + k1[i] * (0.5 * h);
        }
        self.deriv(t + 0.5 * h, tmp, k2);
        for (i, v) in tmp.iter_mut().enumerate() {
            *v = psi[i] + k2[i] * (0.5 * h);
        }
        self.deriv(t + 0.5 * h, tmp, k3);
        for (i, v) in tmp.iter_mut().enumerate() {
            *v = psi[i] + k3[i] * h;
        }
        self.deriv(t + h, tmp, k4);
        for (i, p) in psi.iter_mut().enumerate() {
            *p += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
        }
    }
}

/// RK4 for `i ∂ψ/∂t = H(t) ψ`, calling `observe` at each output time.
/// Fails with a step-size error once `|‖ψ‖² - 1|` exceeds `norm_tol`.
pub fn integrate_schrodinger_td_with<F>(
    psi0: &StateVector,
    system: &DrivenSystem,
    t_final: f64,
    dt: f64,
    output_times: &[f64],
    norm_tol: f64,
    mut observe: F,
) -> Result<StateVector>
where
    F: FnMut(f64, &StateVector) -> Result<()>,
{
    check_grid(t_final, dt, output_times)?;
    if !psi0.basis().same_space(system.h.domain()) {
        return Err(Error::Shape("initial state and Hamiltonian spaces differ".into()));
    }
    if !psi0.is_normalized() {
        return Err(Error::Domain("initial state must be normalised".into()));
    }
    let d = psi0.dim();
    let mut work: [Vec<C64>; 5] = std::array::from_fn(|_| vec![C64::new(0.0, 0.0); d]);
    let mut psi = psi0.amplitudes().to_vec();
    let mut t = 0.0;
    let mut targets = output_times.to_vec();
    if targets.last().is_none_or(|&l| l < t_final) {
        targets.push(t_final);
    }
    for (k, &target) in targets.iter().enumerate() {
        for h in steps_to(t, target, dt) {
            system.rk4(t, &mut psi, h, &mut work);
            t += h;
        }
        t = target;
        let drift = (psi.iter().map(|z| z.norm_sqr()).sum::<f64>() - 1.0).abs();
        if !(drift <= norm_tol) {
            return Err(Error::StepSize(format!(
                "norm drifted by {drift:e} by t = {t} with dt = {dt}; reduce the step"
            )));
        }
        if k < output_times.len() {
            observe(t, &StateVector::new(psi0.basis().clone(), psi.clone())?)?;
        }
    }
    StateVector::new(psi0.basis().clone(), psi)
}

/// Driven evolution returning the states at `output_times`, with the
/// default norm tolerance `1e-8`.
pub fn integrate_schrodinger_td(
    psi0: &StateVector,
    h: &SparseOperator,
    field: &SparseOperator,
    drive: &DriveParams,
    t_final: f64,
    dt: f64,
    output_times: &[f64],
) -> Result<Vec<(f64, StateVector)>> {
    let system = DrivenSystem::new(h, field, drive)?;
    let mut out = Vec::with_capacity(output_times.len());
    integrate_schrodinger_td_with(psi0, &system, t_final, dt, output_times, 1e-8, |t, s| {
        out.push((t, s.clone()));
        Ok(())
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolve::KrylovPropagator;
    use crate::fock::{build_eta_ops, build_spin_ops, Basis, Expectation};
    use crate::model::{build_field_op, build_hubbard, DriveProfile, HubbardParams};
    use crate::spectra::dense_ground_state;

    fn drive(v: f64, profile: DriveProfile) -> DriveParams {
        DriveParams {
            amplitude: v,
            omega: 1.0,
            profile,
        }
    }

    #[test]
    fn undriven_matches_krylov() {
        let b = Basis::sector(4, 2, 2).unwrap();
        let h = build_hubbard(&HubbardParams::new(4, 1.0, 2.0).unwrap(), &b).unwrap();
        let d = drive(0.0, DriveProfile::Linear);
        let f = build_field_op(&d, &b).unwrap();
        let psi = StateVector::basis_state(b.clone(), b.state(5)).unwrap();
        let out = integrate_schrodinger_td(&psi, &h, &f, &d, 10.0, 0.005, &[10.0]).unwrap();
        let phi = KrylovPropagator::new(&h).unwrap().propagate(&psi, 10.0).unwrap();
        assert!(out[0].1.fidelity(&phi).unwrap() >= 1.0 - 1e-8);
    }

    #[test]
    fn drive_conserves_eta_pair_and_spin() {
        let b = Basis::sector(4, 2, 2).unwrap();
        let h0 = build_hubbard(&HubbardParams::new(4, 1.0, 4.0).unwrap(), &b).unwrap();
        let g = dense_ground_state(&h0).unwrap();
        let h = build_hubbard(&HubbardParams::new(4, 1.0, 6.0).unwrap(), &b).unwrap();
        let eta = build_eta_ops(&b).unwrap();
        let sz = build_spin_ops(&b).unwrap().total;
        for profile in [DriveProfile::Linear, DriveProfile::Staggered, DriveProfile::Random { seed: 3 }] {
            let d = drive(4.0, profile);
            let f = build_field_op(&d, &b).unwrap();
            let e0 = g.vector.expect(&eta.pair).unwrap().re;
            let out = integrate_schrodinger_td(&g.vector, &h, &f, &d, 5.0, 0.001, &[1.0, 5.0]).unwrap();
            for (_, s) in &out {
                assert!((s.expect(&eta.pair).unwrap().re - e0).abs() < 1e-6 * e0.abs().max(1.0));
                assert!(s.expect(&sz).unwrap().norm() < 1e-6);
            }
        }
    }

    #[test]
    fn coarse_steps_are_rejected() {
        let b = Basis::sector(4, 2, 2).unwrap();
        let h = build_hubbard(&HubbardParams::new(4, 1.0, 6.0).unwrap(), &b).unwrap();
        let d = drive(12.0, DriveProfile::Linear);
        let f = build_field_op(&d, &b).unwrap();
        let psi = StateVector::basis_state(b.clone(), b.state(0)).unwrap();
        let r = integrate_schrodinger_td(&psi, &h, &f, &d, 20.0, 0.05, &[20.0]);
        assert!(matches!(r, Err(Error::StepSize(_))));
    }
}
