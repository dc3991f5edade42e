use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use etalab_core::evolve::{ensemble_average, Unraveling};
use etalab_core::exec::Execution;
use etalab_core::fock::Basis;
use etalab_core::model::{build_hubbard, build_jumps, HubbardParams, JumpKind};
use etalab_core::observables::ObservableSet;
use etalab_core::spectra::ground_state;
use etalab_core::StateVector;

fn quench_ensemble(c: &mut Criterion) {
    let basis = Basis::sector(4, 2, 2).unwrap();
    let h0 = build_hubbard(&HubbardParams::new(4, 1.0, 4.0).unwrap(), &basis).unwrap();
    let h = build_hubbard(&HubbardParams::new(4, 1.0, 1.0).unwrap(), &basis).unwrap();
    let psi0 = ground_state(&h0).unwrap().vector;
    let jumps = build_jumps(JumpKind::Spin, &basis, 2.0).unwrap();
    let unraveling = Unraveling::new(&h, &[&jumps]).unwrap();
    let obs = ObservableSet::new(&basis).unwrap();
    let sampler = |s: &StateVector| Ok(obs.eta_correlation_matrix(s)?.entries.iter().copied().collect());
    let times = [1.0, 2.0, 5.0];

    let mut group = c.benchmark_group("quench_ensemble_m4");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::new(name, 64), &exec, |b, &exec| {
            b.iter(|| ensemble_average(&unraveling, &psi0, 5.0, 0.01, &times, 64, 1, &sampler, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, quench_ensemble);
criterion_main!(benches);
