//! Experiment runners. Each kind writes its tables into the run directory
//! and returns the derived values recorded in the manifest.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use etalab_core::evolve::{
    ensemble_average, integrate_master_with, integrate_schrodinger_td_with, uniform_grid, DrivenSystem, Lindbladian,
    MasterOptions, Unraveling, DEFAULT_DT_MASTER,
};
use etalab_core::exec::{with_threads, Execution};
use etalab_core::fock::{apply, build_eta_ops, Expectation};
use etalab_core::gce::{
    etapair_spectrum, gce_expectations, solve_multipliers, GceMode, GceOptions, GcePrediction, GceSolution,
    GceTargets, Saturation,
};
use etalab_core::model::{build_field_op, build_hubbard, build_jumps, JumpKind, JumpSet};
use etalab_core::observables::{
    project_sector_matrix, structure_factor_from_two_point, ConservedSet, EtaCorrMatrix, ObservableSet,
    ProjectedBlock, ProjectionKind, StructureFactor,
};
use etalab_core::spectra::{ground_state, thermal_state};
use etalab_core::symmetry::{joint_projectors, ladder_constant, liouvillian_dense, steady_space_analysis, yang_state};
use etalab_core::{Basis, DensityMatrix, SparseOperator, StateVector, C64};
use nalgebra::DMatrix;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::config::{dense_limit_from_env, ExperimentConfig, ExperimentKind, GceModeConfig, InitialState, Method, MASTER_DIM_LIMIT};
use crate::error::{HarnessError, Result};
use crate::output::{self, json_f64, OutputDir, Table};
use crate::window::measure_window;

/// Largest violation tolerated by the structure-factor sum rules.
pub const SUM_RULE_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Worker threads for trajectory ensembles; `None` uses the global pool.
    pub threads: Option<usize>,
    pub dense_limit: usize,
    pub exec: Execution,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            threads: None,
            dense_limit: etalab_core::DEFAULT_DENSE_LIMIT,
            exec: Execution::Parallel,
        }
    }

    /// Dense limit taken from `ETALAB_DENSE_LIMIT` when set.
    pub fn from_env(out_dir: impl Into<PathBuf>) -> Result<Self> {
        Ok(Self {
            dense_limit: dense_limit_from_env()?,
            ..Self::new(out_dir)
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub manifest: Value,
}

impl RunSummary {
    pub fn derived(&self) -> &Value {
        &self.manifest["derived"]
    }
}

/// Validate, run, and write the CSV tables plus `manifest.json`.
pub fn run(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    config.validate(opts.dense_limit)?;
    let mut out = OutputDir::create(&opts.out_dir)?;
    let start = Instant::now();
    let derived = with_threads(opts.threads, || dispatch(config, opts, &mut out))?;
    let manifest = json!({
        "kind": config.kind.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "wall_time_s": start.elapsed().as_secs_f64(),
        "files": out.files(),
        "derived": Value::Object(derived),
    });
    out.write_manifest(&manifest)?;
    Ok(RunSummary {
        dir: opts.out_dir.clone(),
        manifest,
    })
}

fn dispatch(cfg: &ExperimentConfig, opts: &RunOptions, out: &mut OutputDir) -> Result<Map<String, Value>> {
    use ExperimentKind::*;
    match cfg.kind {
        QuenchDephasing | StructureFactor | PerturbationWindow => run_quench(cfg, opts, out),
        ThermalProjections => run_thermal_projections(cfg, opts, out),
        FloquetVsDephasing => run_floquet_vs_dephasing(cfg, opts, out),
        LiouvillianSpectrum => run_liouvillian(cfg, opts, out),
        GcePredict => run_gce_predict(cfg, opts, out),
    }
}

struct Model {
    basis: Arc<Basis>,
    /// Hamiltonian defining the initial state.
    h0: SparseOperator,
    /// Hamiltonian after the quench.
    h: SparseOperator,
    obs: ObservableSet,
}

fn model(cfg: &ExperimentConfig) -> Result<Model> {
    let s = cfg.sector();
    let basis = Basis::sector(cfg.model.sites, s.n_up, s.n_down)?;
    let p0 = cfg.hubbard();
    p0.validate()?;
    Ok(Model {
        h0: build_hubbard(&p0, &basis)?,
        h: build_hubbard(&cfg.evolution_hubbard(), &basis)?,
        obs: ObservableSet::new(&basis)?,
        basis,
    })
}

enum Initial {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

impl Initial {
    fn density(&self) -> DensityMatrix {
        match self {
            Initial::Pure(psi) => DensityMatrix::pure(psi),
            Initial::Mixed(rho) => rho.clone(),
        }
    }

    fn pure(&self, purpose: &str) -> Result<&StateVector> {
        match self {
            Initial::Pure(psi) => Ok(psi),
            Initial::Mixed(_) => Err(HarnessError::validation(
                "initial",
                format!("{purpose} needs a pure initial state"),
            )),
        }
    }

    fn conserved(&self, obs: &ObservableSet) -> Result<ConservedSet> {
        Ok(match self {
            Initial::Pure(psi) => obs.conserved_set(psi)?,
            Initial::Mixed(rho) => obs.conserved_set(rho)?,
        })
    }
}

#[derive(Deserialize)]
struct AmplitudeFile {
    re: Vec<f64>,
    im: Vec<f64>,
}

/// Move a state onto `basis` (same sector, same enumeration).
fn rebase(psi: StateVector, basis: &Arc<Basis>) -> Result<StateVector> {
    if !psi.basis().same_space(basis) {
        return Err(HarnessError::validation("initial", "state lives outside the run's sector"));
    }
    Ok(StateVector::new(basis.clone(), psi.into_amplitudes())?)
}

fn prepare_initial(cfg: &ExperimentConfig, m: &Model, dense_limit: usize, info: &mut Map<String, Value>) -> Result<Initial> {
    let initial = match &cfg.initial {
        InitialState::Ground => {
            let g = ground_state(&m.h0)?;
            info.insert(
                "initial".into(),
                json!({"kind": "ground", "energy": g.value, "residual": g.residual, "degenerate": g.degenerate}),
            );
            Initial::Pure(g.vector)
        }
        InitialState::Thermal { beta } => {
            let th = thermal_state(&m.h0, *beta, dense_limit)?;
            info.insert("initial".into(), json!({"kind": "thermal", "beta": beta}));
            Initial::Mixed(th.rho)
        }
        InitialState::Yang { n } => {
            info.insert("initial".into(), json!({"kind": "yang", "n": n}));
            Initial::Pure(rebase(yang_state(cfg.model.sites, *n)?, &m.basis)?)
        }
        InitialState::EtaDressed { pairs } => {
            let s = cfg.sector();
            let lower = Basis::sector(cfg.model.sites, s.n_up - pairs, s.n_down - pairs)?;
            let g = ground_state(&build_hubbard(&cfg.hubbard(), &lower)?)?;
            let mut psi = g.vector;
            for _ in 0..*pairs {
                let eta = build_eta_ops(psi.basis())?;
                psi = apply(&eta.total_plus, &psi)?;
                psi.normalize()?;
            }
            info.insert(
                "initial".into(),
                json!({"kind": "eta_dressed", "pairs": pairs, "seed_energy": g.value, "degenerate": g.degenerate}),
            );
            Initial::Pure(rebase(psi, &m.basis)?)
        }
        InitialState::File { path } => {
            let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            let amps: AmplitudeFile = serde_json::from_str(&text)?;
            let d = m.basis.dim();
            if amps.re.len() != d || amps.im.len() != d {
                return Err(HarnessError::validation(
                    "initial.path",
                    format!("expected {d} amplitudes, got {} real and {} imaginary parts", amps.re.len(), amps.im.len()),
                ));
            }
            let v = amps.re.iter().zip(&amps.im).map(|(&r, &i)| C64::new(r, i)).collect();
            let psi = StateVector::new(m.basis.clone(), v)?;
            if !psi.is_normalized() {
                return Err(HarnessError::validation(
                    "initial.path",
                    format!("state is not normalised (norm {})", psi.norm()),
                ));
            }
            info.insert("initial".into(), json!({"kind": "file", "path": path}));
            Initial::Pure(psi)
        }
    };
    Ok(initial)
}

/// Observables at one output time.
struct Frame {
    t: f64,
    corr: EtaCorrMatrix,
    two_point: DMatrix<C64>,
    conserved: ConservedSet,
    /// Standard error of each `|C̄_j|`; zero for exact evolution.
    dist_se: Vec<f64>,
}

fn exact_frame<S: Expectation>(obs: &ObservableSet, t: f64, state: &S) -> Result<Frame> {
    let corr = obs.eta_correlation_matrix(state)?;
    Ok(Frame {
        t,
        dist_se: vec![0.0; corr.sites()],
        two_point: obs.doublon_two_point(state)?,
        conserved: obs.conserved_set(state)?,
        corr,
    })
}

/// `[C (column-major), T (column-major), η⁺η⁻, N↑, N↓, S^z, C̄_0..C̄_{M-1}]`
fn trajectory_sample(obs: &ObservableSet, psi: &StateVector) -> etalab_core::Result<Vec<C64>> {
    let c = obs.eta_correlation_matrix(psi)?;
    let t = obs.doublon_two_point(psi)?;
    let k = obs.conserved_set(psi)?;
    let m = c.sites();
    let mut v = Vec::with_capacity(2 * m * m + 4 + m);
    v.extend(c.entries.iter().copied());
    v.extend(t.iter().copied());
    v.extend([k.eta_pair, k.n_up, k.n_down, k.s_z].map(|x| C64::new(x, 0.0)));
    for j in 0..m {
        v.push(c.distance_average(j)?);
    }
    Ok(v)
}

fn frame_from_sample(m: usize, t: f64, mean: &[C64], se_abs: &[f64]) -> Frame {
    let mm = m * m;
    let re = |x: C64| x.re;
    Frame {
        t,
        corr: EtaCorrMatrix {
            entries: DMatrix::from_column_slice(m, m, &mean[..mm]),
        },
        two_point: DMatrix::from_column_slice(m, m, &mean[mm..2 * mm]),
        conserved: ConservedSet {
            eta_pair: re(mean[2 * mm]),
            n_up: re(mean[2 * mm + 1]),
            n_down: re(mean[2 * mm + 2]),
            s_z: re(mean[2 * mm + 3]),
            eta_z: 0.5 * (re(mean[2 * mm + 1]) + re(mean[2 * mm + 2]) - m as f64),
        },
        dist_se: se_abs[2 * mm + 4..].to_vec(),
    }
}

/// Structure-factor and correlation sum rules; fails the run on violation.
fn check_sum_rules(f: &Frame) -> Result<(StructureFactor, f64)> {
    let m = f.corr.sites();
    let sf = structure_factor_from_two_point(&f.two_point);
    let eta_pair = f.conserved.eta_pair;
    let staggered = match sf.at_pi() {
        Some(d) => d * m as f64,
        None => {
            let mut acc = 0.0;
            for i in 0..m {
                for j in 0..m {
                    let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    acc += sign * f.two_point[(i, j)].re;
                }
            }
            acc
        }
    };
    let double_occ: f64 = (0..m).map(|i| f.corr.get(i, i).re).sum();
    let checks: [(&'static str, f64); 3] = [
        ("D(π)·L = <η⁺η⁻>", (staggered - eta_pair).abs()),
        ("Σ_q D(q) = Σ_i <n↑n↓>_i", (sf.total() - double_occ).abs()),
        ("Σ_ij C_ij = <η⁺η⁻>", (f.corr.total() - C64::new(eta_pair, 0.0)).norm()),
    ];
    let mut worst: f64 = 0.0;
    for (rule, error) in checks {
        if !(error < SUM_RULE_TOL) {
            return Err(HarnessError::SumRule { t: f.t, rule, error });
        }
        worst = worst.max(error);
    }
    Ok((sf, worst))
}

/// Per-frame history kept for derived values.
#[derive(Default)]
struct History {
    t: Vec<f64>,
    dist_abs: Vec<Vec<f64>>,
    corr_abs: Vec<DMatrix<f64>>,
    conserved: Vec<ConservedSet>,
    sum_rule_worst: f64,
    last_corr: Option<EtaCorrMatrix>,
}

/// The four per-frame tables of one evolution, under an optional prefix.
struct FrameWriter {
    timeseries: Table,
    matrix: Table,
    structure: Table,
    conserved: Table,
    history: History,
}

impl FrameWriter {
    fn new(out: &mut OutputDir, prefix: &str) -> Result<Self> {
        Ok(Self {
            timeseries: out.table(&format!("{prefix}corr_timeseries.csv"), &output::CORR_TIMESERIES)?,
            matrix: out.table(&format!("{prefix}corr_matrix.csv"), &output::CORR_MATRIX)?,
            structure: out.table(&format!("{prefix}structure_factor.csv"), &output::STRUCTURE_FACTOR)?,
            conserved: out.table(&format!("{prefix}conserved.csv"), &output::CONSERVED)?,
            history: History::default(),
        })
    }

    fn write(&mut self, f: Frame) -> Result<()> {
        let (sf, worst) = check_sum_rules(&f)?;
        let m = f.corr.sites();
        let t = f.t;
        let mut dist_abs = Vec::with_capacity(m);
        for j in 0..m {
            let c = f.corr.distance_average(j)?;
            dist_abs.push(c.norm());
            self.timeseries.row((t, j, c.re, c.im, c.norm(), f.dist_se[j]))?;
        }
        for i in 0..m {
            for j in 0..m {
                let c = f.corr.get(i, j);
                self.matrix.row((t, i, j, c.re, c.im, c.norm()))?;
            }
        }
        for (n, &v) in sf.values.iter().enumerate() {
            self.structure.row((t, n, sf.momentum(n), v))?;
        }
        let k = f.conserved;
        self.conserved.row((t, k.eta_pair, k.n_up, k.n_down, k.s_z))?;

        let h = &mut self.history;
        h.t.push(t);
        h.dist_abs.push(dist_abs);
        h.corr_abs.push(f.corr.entries.map(|z| z.norm()));
        h.conserved.push(k);
        h.sum_rule_worst = h.sum_rule_worst.max(worst);
        h.last_corr = Some(f.corr);
        Ok(())
    }

    fn finish(self) -> Result<History> {
        self.timeseries.finish()?;
        self.matrix.finish()?;
        self.structure.finish()?;
        self.conserved.finish()?;
        Ok(self.history)
    }
}

fn jump_sets(cfg: &ExperimentConfig, basis: &Arc<Basis>) -> Result<Vec<JumpSet>> {
    let mut sets = Vec::new();
    if cfg.gamma_spin > 0.0 {
        sets.push(build_jumps(JumpKind::Spin, basis, cfg.gamma_spin)?);
    }
    if cfg.gamma_charge > 0.0 {
        sets.push(build_jumps(JumpKind::Charge, basis, cfg.gamma_charge)?);
    }
    Ok(sets)
}

fn master_options(dt: f64, dense_limit: usize) -> MasterOptions {
    MasterOptions {
        dt,
        max_dim: MASTER_DIM_LIMIT.min(dense_limit),
        ..MasterOptions::default()
    }
}

/// Dissipative evolution by the configured method. Returns the final
/// density matrix for the master-equation method.
#[allow(clippy::too_many_arguments)]
fn evolve_dissipative(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    m: &Model,
    h: &SparseOperator,
    initial: &Initial,
    dt: f64,
    writer: &mut FrameWriter,
    info: &mut Map<String, Value>,
) -> Result<Option<DensityMatrix>> {
    let jumps = jump_sets(cfg, &m.basis)?;
    let refs: Vec<&JumpSet> = jumps.iter().collect();
    let times = uniform_grid(cfg.t_final, cfg.output_every);
    match cfg.method {
        Method::Master => {
            let l = Lindbladian::new(h, &refs)?;
            let rho0 = initial.density();
            let obs = &m.obs;
            let mut deferred = Deferred::default();
            let r = integrate_master_with(&rho0, &l, cfg.t_final, &times, &master_options(dt, opts.dense_limit), |t, rho| {
                deferred.pass(exact_frame(obs, t, rho).and_then(|f| writer.write(f)))
            });
            Ok(Some(deferred.finish(r)?))
        }
        Method::Trajectories => {
            let psi0 = initial.pure("the trajectory method")?;
            let unraveling = Unraveling::new(h, &refs)?;
            let obs = &m.obs;
            let sampler = move |s: &StateVector| trajectory_sample(obs, s);
            let est = ensemble_average(
                &unraveling,
                psi0,
                cfg.t_final,
                dt,
                &times,
                cfg.trajectories,
                cfg.seed,
                &sampler,
                opts.exec,
            )?;
            let sites = cfg.model.sites;
            for (k, &t) in est.times.iter().enumerate() {
                writer.write(frame_from_sample(sites, t, &est.mean[k], &est.stderr_abs[k]))?;
            }
            info.insert(
                "trajectories".into(),
                json!({"n": est.n, "master_seed": cfg.seed, "jumps": est.jump_count}),
            );
            Ok(None)
        }
    }
}

/// Holds a harness error raised inside a core callback, which can only
/// return core errors.
#[derive(Default)]
struct Deferred(Option<HarnessError>);

impl Deferred {
    fn pass(&mut self, r: Result<()>) -> etalab_core::Result<()> {
        match r {
            Ok(()) => Ok(()),
            Err(HarnessError::Core(e)) => Err(e),
            Err(e) => {
                let msg = e.to_string();
                self.0 = Some(e);
                Err(etalab_core::Error::Instability(msg))
            }
        }
    }

    fn finish<T>(self, r: etalab_core::Result<T>) -> Result<T> {
        match self.0 {
            Some(e) => Err(e),
            None => Ok(r?),
        }
    }
}

fn gce_options(opts: &RunOptions) -> GceOptions {
    GceOptions {
        saturation: Saturation::Limit,
        dense_limit: opts.dense_limit,
        exec: opts.exec,
        ..GceOptions::default()
    }
}

fn gce_mode(cfg: &ExperimentConfig) -> GceMode {
    let s = cfg.sector();
    match cfg.gce_mode {
        GceModeConfig::FixedSector => GceMode::FixedSector {
            n_up: s.n_up,
            n_down: s.n_down,
        },
        GceModeConfig::FullSpace => GceMode::FullSpace,
    }
}

/// Solve the GCE for the given targets and evaluate its predictions.
pub fn gce_predict(targets: &GceTargets, opts: &GceOptions) -> Result<(GceSolution, GcePrediction)> {
    let sol = solve_multipliers(targets, opts)?;
    let pred = gce_expectations(&sol)?;
    Ok((sol, pred))
}

pub fn gce_json(sol: &GceSolution, pred: &GcePrediction) -> Value {
    let c = pred.uniform_offdiag;
    json!({
        "mode": sol.mode,
        "mu": sol.mu.map(json_f64),
        "saturated": sol.saturated.map(|ch| ch.to_string()),
        "iterations": sol.iterations,
        "residual": sol.residual,
        "achieved": sol.achieved,
        "eta_pair": pred.eta_pair,
        "uniform_offdiag": {"re": c.re, "im": c.im, "abs": c.norm()},
        "double_occupancy": pred.double_occupancy,
        "structure_factor": pred.structure_factor.values,
    })
}

fn initial_gce(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    k0: &ConservedSet,
) -> Result<Option<(GceSolution, GcePrediction)>> {
    let mode = gce_mode(cfg);
    let too_big = match mode {
        GceMode::FixedSector { .. } => cfg.sector_dim() > opts.dense_limit,
        GceMode::FullSpace => Basis::full(cfg.model.sites).map(|b| b.dim() > opts.dense_limit).unwrap_or(true),
    };
    if too_big {
        return Ok(None);
    }
    let targets = GceTargets {
        sites: cfg.model.sites,
        eta_pair: cfg.target_eta_pair.unwrap_or(k0.eta_pair),
        n_up: k0.n_up,
        n_down: k0.n_down,
        mode,
    };
    Ok(Some(gce_predict(&targets, &gce_options(opts))?))
}

fn measured_mu(cfg: &ExperimentConfig) -> Value {
    let s = cfg.sector();
    let p = cfg.evolution_hubbard();
    let n = if s.n_up == s.n_down && s.n_up < cfg.model.sites { s.n_up } else { 0 };
    match ladder_constant(&p, n) {
        Ok((mu, residual)) => json!({"value": mu, "residual": residual, "from_sector": [n, n]}),
        Err(_) => Value::Null,
    }
}

/// Largest change of each conserved quantity relative to its initial
/// value (absolute when the initial value vanishes).
fn conservation_drift(h: &History) -> Value {
    let Some(first) = h.conserved.first() else {
        return Value::Null;
    };
    let rel = |get: fn(&ConservedSet) -> f64| {
        let x0 = get(first);
        let scale = if x0.abs() > 1e-12 { x0.abs() } else { 1.0 };
        h.conserved.iter().map(|k| (get(k) - x0).abs() / scale).fold(0.0, f64::max)
    };
    json!({
        "eta_pair": rel(|k| k.eta_pair),
        "n_up": rel(|k| k.n_up),
        "n_down": rel(|k| k.n_down),
        "s_z": rel(|k| k.s_z),
    })
}

fn final_corr_json(h: &History) -> Value {
    match (&h.last_corr, h.t.last()) {
        (Some(c), Some(t)) => json!({
            "t": t,
            "offdiag_spread": c.off_diagonal_spread(),
            "offdiag_mean_abs": c.off_diagonal_mean().norm(),
        }),
        _ => Value::Null,
    }
}

/// `mean_{j≥1} |C̄_j(t)|`
fn window_series(h: &History) -> Vec<f64> {
    h.dist_abs
        .iter()
        .map(|d| d[1..].iter().sum::<f64>() / (d.len() - 1) as f64)
        .collect()
}

fn run_quench(cfg: &ExperimentConfig, opts: &RunOptions, out: &mut OutputDir) -> Result<Map<String, Value>> {
    let m = model(cfg)?;
    let mut info = Map::new();
    let initial = prepare_initial(cfg, &m, opts.dense_limit, &mut info)?;
    let k0 = initial.conserved(&m.obs)?;
    if let Some((sol, pred)) = initial_gce(cfg, opts, &k0)? {
        info.insert("gce".into(), gce_json(&sol, &pred));
    } else {
        info.insert("gce".into(), Value::Null);
    }
    info.insert("measured_mu".into(), measured_mu(cfg));

    let mut writer = FrameWriter::new(out, "")?;
    evolve_dissipative(cfg, opts, &m, &m.h, &initial, cfg.dt(), &mut writer, &mut info)?;
    let history = writer.finish()?;

    info.insert("conservation_drift".into(), conservation_drift(&history));
    info.insert("final".into(), final_corr_json(&history));
    info.insert("sum_rule_max_error".into(), json!(history.sum_rule_worst));
    if cfg.kind == ExperimentKind::PerturbationWindow {
        let series = window_series(&history);
        let w = measure_window(&history.t, &series, cfg.t_ref)?;
        info.insert("window".into(), serde_json::to_value(w)?);
        info.insert("window_series".into(), json!("mean over j >= 1 of |distance-averaged C_j|"));
    }
    Ok(info)
}

fn block_json(b: &ProjectedBlock) -> Value {
    let n = b.matrix.nrows();
    let mut max_off: f64 = 0.0;
    let (mut off_lo, mut off_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut d_lo, mut d_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    // Off-diagonal magnitude range grouped by how many sites differ between
    // the two configurations.
    let mut by_class: std::collections::BTreeMap<usize, (f64, f64)> = Default::default();
    for r in 0..n {
        for c in 0..n {
            let v = b.matrix[(r, c)];
            if r == c {
                d_lo = d_lo.min(v.re);
                d_hi = d_hi.max(v.re);
                continue;
            }
            let a = v.norm();
            max_off = max_off.max(a);
            off_lo = off_lo.min(a);
            off_hi = off_hi.max(a);
            let class = b.labels[r].chars().zip(b.labels[c].chars()).filter(|(x, y)| x != y).count();
            let e = by_class.entry(class).or_insert((f64::INFINITY, f64::NEG_INFINITY));
            e.0 = e.0.min(a);
            e.1 = e.1.max(a);
        }
    }
    let classes: Vec<Value> = by_class
        .iter()
        .map(|(k, (lo, hi))| json!({"differing_sites": k, "min_abs": lo, "max_abs": hi, "spread": hi - lo}))
        .collect();
    json!({
        "kind": b.kind,
        "dim": n,
        "labels": b.labels,
        "trace_before": b.trace_before,
        "max_offdiag_abs": max_off,
        "offdiag_abs_spread": if n > 1 { off_hi - off_lo } else { 0.0 },
        "diag_spread": d_hi - d_lo,
        "offdiag_classes": classes,
    })
}

fn write_block(table: &mut Table, name: &str, b: &ProjectedBlock) -> Result<()> {
    let n = b.matrix.nrows();
    for i in 0..n {
        for j in 0..n {
            let v = b.matrix[(i, j)];
            table.row((name, i, j, v.re, v.im, v.norm()))?;
        }
    }
    Ok(())
}

fn run_thermal_projections(cfg: &ExperimentConfig, opts: &RunOptions, out: &mut OutputDir) -> Result<Map<String, Value>> {
    let m = model(cfg)?;
    let mut info = Map::new();
    let initial = prepare_initial(cfg, &m, opts.dense_limit, &mut info)?;
    let rho0 = initial.density();
    let k0 = initial.conserved(&m.obs)?;
    if let Some((sol, pred)) = initial_gce(cfg, opts, &k0)? {
        info.insert("gce".into(), gce_json(&sol, &pred));
    }

    let mut writer = FrameWriter::new(out, "")?;
    let master_only = ExperimentConfig {
        method: Method::Master,
        ..cfg.clone()
    };
    let rho = evolve_dissipative(&master_only, opts, &m, &m.h, &initial, cfg.dt(), &mut writer, &mut info)?
        .expect("master method returns the final state");
    let history = writer.finish()?;
    info.insert("conservation_drift".into(), conservation_drift(&history));
    info.insert("final".into(), final_corr_json(&history));

    let mut table = out.table("projection.csv", &output::PROJECTION)?;
    let mut blocks = Map::new();
    for (stage, state) in [("initial", &rho0), ("final", &rho)] {
        for (kind, tag) in [(ProjectionKind::Spin, "spin"), (ProjectionKind::Doublon, "doublon")] {
            let name = format!("{stage}-{tag}");
            let b = project_sector_matrix(state, kind)?;
            write_block(&mut table, &name, &b)?;
            blocks.insert(name, block_json(&b));
        }
    }
    table.finish()?;
    info.insert("projections".into(), Value::Object(blocks));
    Ok(info)
}

fn late_average(h: &History, t_final: f64, fraction: f64) -> (f64, DMatrix<f64>) {
    let start = t_final * (1.0 - fraction);
    let picked: Vec<&DMatrix<f64>> = h
        .t
        .iter()
        .zip(&h.corr_abs)
        .filter(|(t, _)| **t >= start - 1e-9)
        .map(|(_, c)| c)
        .collect();
    let m = h.corr_abs[0].nrows();
    let mut acc = DMatrix::<f64>::zeros(m, m);
    for c in &picked {
        acc += *c;
    }
    (start, acc / picked.len().max(1) as f64)
}

fn late_json(h: &History, cfg: &ExperimentConfig, gce_abs: Option<f64>) -> Value {
    let (start, avg) = late_average(h, cfg.t_final, cfg.late_fraction);
    let m = avg.nrows();
    let mut max_dev: f64 = 0.0;
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        rows.push((0..m).map(|j| avg[(i, j)]).collect::<Vec<_>>());
        if let Some(g) = gce_abs {
            for j in 0..m {
                if i != j {
                    max_dev = max_dev.max((avg[(i, j)] - g).abs() / g);
                }
            }
        }
    }
    json!({
        "window": [start, cfg.t_final],
        "mean_abs_corr": rows,
        "max_relative_deviation_from_gce": gce_abs.map(|_| max_dev),
        "final": final_corr_json(h),
        "conservation_drift": conservation_drift(h),
        "sum_rule_max_error": h.sum_rule_worst,
    })
}

fn run_floquet_vs_dephasing(cfg: &ExperimentConfig, opts: &RunOptions, out: &mut OutputDir) -> Result<Map<String, Value>> {
    let drive = cfg.drive.as_ref().expect("validated: drive present");
    let m = model(cfg)?;
    let mut info = Map::new();
    let initial = prepare_initial(cfg, &m, opts.dense_limit, &mut info)?;
    let psi0 = initial.pure("floquet-vs-dephasing")?.clone();
    let k0 = initial.conserved(&m.obs)?;
    let gce = initial_gce(cfg, opts, &k0)?;
    let gce_abs = gce.as_ref().map(|(_, p)| p.uniform_offdiag.norm());
    info.insert("gce".into(), gce.as_ref().map(|(s, p)| gce_json(s, p)).unwrap_or(Value::Null));
    info.insert("profile".into(), json!(drive.profile.resolve(cfg.model.sites)?));

    // Driven arm: closed evolution under H(U') + B(t) Σ f(i) s^z_i.
    let field = build_field_op(drive, &m.basis)?;
    let system = DrivenSystem::new(&m.h, &field, drive)?;
    let times = uniform_grid(cfg.t_final, cfg.output_every);
    let mut writer = FrameWriter::new(out, "floquet/")?;
    let obs = &m.obs;
    let w = &mut writer;
    let mut deferred = Deferred::default();
    let r = integrate_schrodinger_td_with(&psi0, &system, cfg.t_final, cfg.dt(), &times, 1e-8, |t, s| {
        deferred.pass(exact_frame(obs, t, s).and_then(|f| w.write(f)))
    });
    let final_psi = deferred.finish(r)?;
    let floquet = writer.finish()?;
    let mut arm = late_json(&floquet, cfg, gce_abs);
    arm["dt"] = json!(cfg.dt());
    arm["norm_drift"] = json!((final_psi.norm_sqr() - 1.0).abs());
    info.insert("floquet".into(), arm);

    // Dephasing arm: undriven H(U) with the configured jumps.
    if cfg.gamma_spin > 0.0 || cfg.gamma_charge > 0.0 {
        let mut writer = FrameWriter::new(out, "dephasing/")?;
        let dt = DEFAULT_DT_MASTER;
        evolve_dissipative(cfg, opts, &m, &m.h0, &initial, dt, &mut writer, &mut info)?;
        let dephasing = writer.finish()?;
        let mut arm = late_json(&dephasing, cfg, gce_abs);
        arm["dt"] = json!(dt);
        info.insert("dephasing".into(), arm);
    } else {
        info.insert("dephasing".into(), Value::Null);
    }
    Ok(info)
}

fn run_liouvillian(cfg: &ExperimentConfig, opts: &RunOptions, out: &mut OutputDir) -> Result<Map<String, Value>> {
    let m_sites = cfg.model.sites;
    let basis = if cfg.full_space {
        Basis::full(m_sites)?
    } else {
        let s = cfg.sector();
        Basis::sector(m_sites, s.n_up, s.n_down)?
    };
    let p = cfg.evolution_hubbard();
    let h = build_hubbard(&p, &basis)?;
    let jumps = jump_sets(cfg, &basis)?;
    let refs: Vec<&JumpSet> = jumps.iter().collect();
    let (mu, mu_residual) = ladder_constant(&p, 0)?;
    let l = liouvillian_dense(&h, &refs)?;
    let spec = steady_space_analysis(&l, Some(mu))?;

    let mut eigs = spec.eigenvalues.clone();
    eigs.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
    let mut table = out.table("spectrum.csv", &output::SPECTRUM)?;
    for z in &eigs {
        table.row((z.re, z.im))?;
    }
    table.finish()?;

    let projectors = if cfg.full_space {
        joint_projectors(m_sites, opts.exec)?.1.len()
    } else {
        let s = cfg.sector();
        etapair_spectrum(m_sites, GceMode::FixedSector { n_up: s.n_up, n_down: s.n_down }, opts.dense_limit, opts.exec)?
            .joint_label_count()
    };
    // Distance of each purely imaginary eigenvalue from the nearest
    // multiple of the measured ladder constant.
    let ladder_residual = spec
        .imaginary
        .iter()
        .map(|z| (z.im - (z.im / mu).round() * mu).abs())
        .fold(0.0, f64::max);
    let multiples: std::collections::BTreeSet<i64> =
        spec.imaginary.iter().map(|z| (z.im / mu).round() as i64).collect();

    let mut info = Map::new();
    info.insert("dim".into(), json!(basis.dim()));
    info.insert("measured_mu".into(), json!({"value": mu, "residual": mu_residual}));
    info.insert("max_re".into(), json!(spec.max_re));
    info.insert("kernel_dim".into(), json!(spec.kernel_dim));
    info.insert("kernel_dim_svd".into(), json!(spec.kernel_dim_svd));
    info.insert("joint_projectors".into(), json!(projectors));
    info.insert("imaginary_count".into(), json!(spec.imaginary.len()));
    info.insert("ladder_spacing".into(), json!(spec.ladder_spacing));
    info.insert("ladder_multiples".into(), json!(multiples));
    info.insert("ladder_fit_residual".into(), json!(ladder_residual));
    info.insert("spacing_ratio".into(), json!(spec.spacing_ratio));
    Ok(info)
}

fn run_gce_predict(cfg: &ExperimentConfig, opts: &RunOptions, out: &mut OutputDir) -> Result<Map<String, Value>> {
    let mut info = Map::new();
    let k0 = if cfg.target_eta_pair.is_some() && cfg.gce_mode == GceModeConfig::FixedSector {
        let s = cfg.sector();
        ConservedSet {
            eta_pair: 0.0,
            eta_z: 0.5 * ((s.n_up + s.n_down) as f64 - cfg.model.sites as f64),
            s_z: s.n_up as f64 - s.n_down as f64,
            n_up: s.n_up as f64,
            n_down: s.n_down as f64,
        }
    } else {
        let m = model(cfg)?;
        prepare_initial(cfg, &m, opts.dense_limit, &mut info)?.conserved(&m.obs)?
    };
    let (sol, pred) = initial_gce(cfg, opts, &k0)?.ok_or_else(|| {
        HarnessError::Core(etalab_core::Error::Capacity {
            what: "sector dimension (dense)".into(),
            dim: cfg.sector_dim(),
            limit: opts.dense_limit,
        })
    })?;
    let m = cfg.model.sites;
    let mut matrix = out.table("corr_matrix.csv", &output::CORR_MATRIX)?;
    for i in 0..m {
        for j in 0..m {
            let c = pred.corr.get(i, j);
            matrix.row((0.0, i, j, c.re, c.im, c.norm()))?;
        }
    }
    matrix.finish()?;
    let mut sf = out.table("structure_factor.csv", &output::STRUCTURE_FACTOR)?;
    for (n, &v) in pred.structure_factor.values.iter().enumerate() {
        sf.row((0.0, n, pred.structure_factor.momentum(n), v))?;
    }
    sf.finish()?;
    info.insert("gce".into(), gce_json(&sol, &pred));
    Ok(info)
}
