use etalab_core::evolve::{ensemble_average, integrate_master, KrylovPropagator, MasterOptions, Unraveling};
use etalab_core::exec::Execution;
use etalab_core::gce::{gce_expectations, solve_multipliers, GceMode, GceOptions, GceTargets, Saturation};
use etalab_core::model::{build_hubbard, build_jumps, HubbardParams, JumpKind};
use etalab_core::observables::ObservableSet;
use etalab_core::spectra::ground_state;
use etalab_core::symmetry::yang_state;
use etalab_core::{apply, Basis, DensityMatrix, Expectation, StateVector, C64};
use nalgebra::{DMatrix, DVector};

fn hubbard(m: usize, u: f64, basis: &std::sync::Arc<Basis>) -> etalab_core::SparseOperator {
    build_hubbard(&HubbardParams::new(m, 1.0, u).unwrap(), basis).unwrap()
}

#[test]
fn yang_states_are_eigenstates_with_known_pairing() {
    let u = 2.5;
    for m in [2, 3, 4] {
        for n in 0..=m {
            let psi = yang_state(m, n).unwrap();
            let h = hubbard(m, u, psi.basis());
            let hpsi = apply(&h, &psi).unwrap();
            let residual: f64 = hpsi
                .amplitudes()
                .iter()
                .zip(psi.amplitudes())
                .map(|(a, b)| (a - b * (n as f64 * u)).norm_sqr())
                .sum::<f64>()
                .sqrt();
            assert!(residual < 1e-12, "M={m} N={n}: {residual}");
            let obs = ObservableSet::new(psi.basis()).unwrap();
            let pair = obs.conserved_set(&psi).unwrap().eta_pair;
            assert!((pair - (n * (m - n + 1)) as f64).abs() < 1e-12, "M={m} N={n}: {pair}");
        }
    }
}

#[test]
fn krylov_matches_dense_exponential() {
    let basis = Basis::sector(4, 2, 1).unwrap();
    let h = hubbard(4, 3.0, &basis);
    let d = basis.dim();
    let amps: Vec<C64> = (0..d).map(|k| C64::new((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos())).collect();
    let psi = StateVector::new(basis.clone(), amps).unwrap().normalized().unwrap();

    let eig = h.to_dense().symmetric_eigen();
    let t = 2.3;
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| C64::from_polar(1.0, -e * t)));
    let u = &eig.eigenvectors * phases * eig.eigenvectors.adjoint();
    let want = u * DVector::from_column_slice(psi.amplitudes());

    let got = KrylovPropagator::new(&h).unwrap().propagate(&psi, t).unwrap();
    let err = got.amplitudes().iter().zip(want.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(err < 1e-10, "{err}");
}

#[test]
fn spin_dephasing_relaxes_to_the_grand_canonical_limit() {
    let basis = Basis::sector(2, 1, 1).unwrap();
    let g = ground_state(&hubbard(2, 4.0, &basis)).unwrap().vector;
    let rho0 = DensityMatrix::pure(&g);
    let obs = ObservableSet::new(&basis).unwrap();
    let pair0 = obs.conserved_set(&rho0).unwrap().eta_pair;
    assert!(pair0.abs() < 1e-12, "repulsive ground state should be an η-singlet");

    let h = hubbard(2, 1.0, &basis);
    let jumps = build_jumps(JumpKind::Spin, &basis, 2.0).unwrap();
    let out = integrate_master(&rho0, &h, &[&jumps], 60.0, &[60.0], &MasterOptions::default()).unwrap();
    let rho = &out[0].1;
    assert!((obs.conserved_set(rho).unwrap().eta_pair - pair0).abs() < 1e-10);

    let targets = GceTargets {
        sites: 2,
        eta_pair: pair0,
        n_up: 1.0,
        n_down: 1.0,
        mode: GceMode::FixedSector { n_up: 1, n_down: 1 },
    };
    let opts = GceOptions {
        saturation: Saturation::Limit,
        ..GceOptions::default()
    };
    let pred = gce_expectations(&solve_multipliers(&targets, &opts).unwrap()).unwrap();
    let corr = obs.eta_correlation_matrix(rho).unwrap();
    let err = (&corr.entries - &pred.corr.entries).iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn ensembles_do_not_depend_on_scheduling() {
    let basis = Basis::sector(4, 2, 2).unwrap();
    let psi0 = ground_state(&hubbard(4, 4.0, &basis)).unwrap().vector;
    let h = hubbard(4, 1.0, &basis);
    let jumps = build_jumps(JumpKind::Spin, &basis, 2.0).unwrap();
    let unr = Unraveling::new(&h, &[&jumps]).unwrap();
    let obs = ObservableSet::new(&basis).unwrap();
    let sampler = |s: &StateVector| Ok(vec![s.expect(obs.eta_pair_op())?, s.expect(obs.corr_op(0, 3))?]);
    let times = [0.5, 1.0, 2.0];
    let run = |exec| ensemble_average(&unr, &psi0, 2.0, 0.01, &times, 24, 7, &sampler, exec).unwrap();
    let a = run(Execution::Sequential);
    let b = run(Execution::Parallel);
    assert_eq!(a.mean, b.mean);
    assert_eq!(a.stderr_abs, b.stderr_abs);
    assert_eq!(a.jump_count, b.jump_count);
    // ⟨η⁺η⁻⟩ is conserved along every trajectory, so it has no spread.
    for (m, se) in a.mean.iter().zip(&a.stderr_abs) {
        assert!((m[0].re - a.mean[0][0].re).abs() < 1e-9);
        assert!(se[0] < 1e-9);
    }
}
