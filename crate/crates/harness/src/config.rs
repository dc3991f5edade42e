//! Experiment configuration: one JSON object per run, all quantities in
//! units of the hopping `τ`.

use std::path::{Path, PathBuf};

use etalab_core::model::{DriveParams, HubbardParams};
use etalab_core::symmetry::MAX_LIOUVILLIAN_DIM;
use etalab_core::{Basis, Error as CoreError};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    QuenchDephasing,
    ThermalProjections,
    FloquetVsDephasing,
    PerturbationWindow,
    StructureFactor,
    LiouvillianSpectrum,
    GcePredict,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::QuenchDephasing => "quench-dephasing",
            Self::ThermalProjections => "thermal-projections",
            Self::FloquetVsDephasing => "floquet-vs-dephasing",
            Self::PerturbationWindow => "perturbation-window",
            Self::StructureFactor => "structure-factor",
            Self::LiouvillianSpectrum => "liouvillian-spectrum",
            Self::GcePredict => "gce-predict",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub sites: usize,
    #[serde(default = "one")]
    pub tau: f64,
    pub u: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectorConfig {
    pub n_up: usize,
    pub n_down: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// Ground state of the initial Hamiltonian in the run's sector.
    #[default]
    Ground,
    /// `exp(-βH)/Z` of the initial Hamiltonian restricted to the sector.
    Thermal { beta: f64 },
    /// `(η⁺)^n |vac⟩`; the sector must be `(n, n)`.
    Yang { n: usize },
    /// `(η⁺)^pairs |g⟩` with `|g⟩` the ground state `pairs` pairs below the
    /// run's sector.
    EtaDressed { pairs: usize },
    /// JSON file `{"re": [...], "im": [...]}` of amplitudes in the sector
    /// basis order.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Master,
    Trajectories,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GceModeConfig {
    #[default]
    FixedSector,
    FullSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub model: ModelConfig,
    /// Defaults to symmetric half filling `(M/2, M/2)`.
    #[serde(default)]
    pub sector: Option<SectorConfig>,
    /// Use the whole Fock space (Liouvillian spectra only).
    #[serde(default)]
    pub full_space: bool,
    #[serde(default)]
    pub initial: InitialState,
    /// Interaction after the quench; defaults to `model.u`.
    #[serde(default)]
    pub quench_u: Option<f64>,
    #[serde(default)]
    pub gamma_spin: f64,
    #[serde(default)]
    pub gamma_charge: f64,
    #[serde(default)]
    pub drive: Option<DriveParams>,
    #[serde(default)]
    pub t_final: f64,
    /// Defaults to 0.01 (dissipative) or 0.005 (driven).
    #[serde(default)]
    pub dt: Option<f64>,
    /// Spacing of the output grid `0, Δ, 2Δ, …, t_final`.
    #[serde(default = "one")]
    pub output_every: f64,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub trajectories: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub gce_mode: GceModeConfig,
    /// Explicit `<η⁺η⁻>` target for `gce-predict`; otherwise taken from the
    /// initial state.
    #[serde(default)]
    pub target_eta_pair: Option<f64>,
    /// Reference time for `perturbation-window`.
    #[serde(default = "default_t_ref")]
    pub t_ref: f64,
    /// Fraction of the run averaged for late-time comparisons.
    #[serde(default = "default_late_fraction")]
    pub late_fraction: f64,
}

fn default_t_ref() -> f64 {
    8.0
}

fn default_late_fraction() -> f64 {
    0.2
}

/// Cap on sector dimensions handled densely; `ETALAB_DENSE_LIMIT`
/// overrides the default.
pub fn dense_limit_from_env() -> Result<usize> {
    match std::env::var("ETALAB_DENSE_LIMIT") {
        Ok(v) => v.trim().parse().map_err(|_| {
            HarnessError::validation("ETALAB_DENSE_LIMIT", format!("not a positive integer: {v:?}"))
        }),
        Err(_) => Ok(etalab_core::DEFAULT_DENSE_LIMIT),
    }
}

/// Largest density matrix the master-equation path accepts.
pub const MASTER_DIM_LIMIT: usize = 1000;

fn dim(sites: usize, n: usize) -> usize {
    let mut c: usize = 1;
    for k in 0..n {
        c = c * (sites - k) / (k + 1);
    }
    c
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn hubbard(&self) -> HubbardParams {
        HubbardParams {
            sites: self.model.sites,
            tau: self.model.tau,
            u: self.model.u,
        }
    }

    pub fn evolution_hubbard(&self) -> HubbardParams {
        self.hubbard().with_u(self.quench_u.unwrap_or(self.model.u))
    }

    pub fn sector(&self) -> SectorConfig {
        self.sector.unwrap_or(SectorConfig {
            n_up: self.model.sites / 2,
            n_down: self.model.sites / 2,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(if self.drive.is_some() {
            etalab_core::evolve::DEFAULT_DT_DRIVEN
        } else {
            etalab_core::evolve::DEFAULT_DT_MASTER
        })
    }

    pub fn sector_dim(&self) -> usize {
        let s = self.sector();
        dim(self.model.sites, s.n_up) * dim(self.model.sites, s.n_down)
    }

    /// Field-by-field checks, then capacity checks against `dense_limit`.
    pub fn validate(&self, dense_limit: usize) -> Result<()> {
        let m = self.model.sites;
        if !(2..=etalab_core::fock::MAX_SITES).contains(&m) {
            return Err(HarnessError::validation(
                "model.sites",
                format!("must be in 2..={}, got {m}", etalab_core::fock::MAX_SITES),
            ));
        }
        if !(self.model.tau > 0.0) || !self.model.tau.is_finite() {
            return Err(HarnessError::validation("model.tau", "must be positive and finite"));
        }
        if !self.model.u.is_finite() {
            return Err(HarnessError::validation("model.u", "must be finite"));
        }
        if let Some(u) = self.quench_u {
            if !u.is_finite() {
                return Err(HarnessError::validation("quench_u", "must be finite"));
            }
        }
        match self.sector {
            None if !m.is_multiple_of(2) && !self.full_space => {
                return Err(HarnessError::validation(
                    "sector",
                    format!("symmetric half filling needs an even number of sites, got {m}; give the sector explicitly"),
                ))
            }
            Some(s) if s.n_up > m || s.n_down > m => {
                return Err(HarnessError::validation(
                    "sector",
                    format!("({}, {}) exceeds {m} sites", s.n_up, s.n_down),
                ))
            }
            _ => {}
        }
        for (field, g) in [("gamma_spin", self.gamma_spin), ("gamma_charge", self.gamma_charge)] {
            if !(g >= 0.0) || !g.is_finite() {
                return Err(HarnessError::validation(field, format!("must be non-negative, got {g}")));
            }
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(HarnessError::validation("t_final", "must be non-negative and finite"));
        }
        let dt = self.dt();
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(HarnessError::validation("dt", format!("must be positive, got {dt}")));
        }
        if !(self.output_every > 0.0) || !self.output_every.is_finite() {
            return Err(HarnessError::validation("output_every", "must be positive"));
        }
        if !(self.late_fraction > 0.0 && self.late_fraction <= 1.0) {
            return Err(HarnessError::validation("late_fraction", "must be in (0, 1]"));
        }
        if let Some(d) = &self.drive {
            d.validate().map_err(|e| HarnessError::validation("drive", e.to_string()))?;
            d.profile
                .resolve(m)
                .map_err(|e| HarnessError::validation("drive.profile", e.to_string()))?;
        }
        match &self.initial {
            InitialState::Thermal { beta } if !(*beta >= 0.0) || !beta.is_finite() => {
                return Err(HarnessError::validation("initial.beta", "must be non-negative and finite"));
            }
            InitialState::Yang { n } => {
                let s = self.sector();
                if s.n_up != *n || s.n_down != *n {
                    return Err(HarnessError::validation(
                        "initial.n",
                        format!("Yang state with {n} pairs lives in sector ({n}, {n}), not ({}, {})", s.n_up, s.n_down),
                    ));
                }
            }
            InitialState::EtaDressed { pairs } => {
                let s = self.sector();
                if *pairs > s.n_up.min(s.n_down) {
                    return Err(HarnessError::validation(
                        "initial.pairs",
                        format!("cannot remove {pairs} pairs from sector ({}, {})", s.n_up, s.n_down),
                    ));
                }
            }
            _ => {}
        }
        if self.method == Method::Trajectories && self.trajectories < 2 {
            return Err(HarnessError::validation("trajectories", "need at least 2 for the trajectory method"));
        }
        if let Some(t) = self.target_eta_pair {
            if !t.is_finite() {
                return Err(HarnessError::validation("target_eta_pair", "must be finite"));
            }
        }

        use ExperimentKind::*;
        match self.kind {
            FloquetVsDephasing if self.drive.is_none() => {
                return Err(HarnessError::validation("drive", "floquet-vs-dephasing needs a drive"));
            }
            PerturbationWindow if self.t_final <= self.t_ref => {
                return Err(HarnessError::validation("t_final", "must exceed t_ref"));
            }
            ThermalProjections if !matches!(self.initial, InitialState::Thermal { .. }) => {
                return Err(HarnessError::validation("initial", "thermal-projections needs a thermal initial state"));
            }
            _ => {}
        }
        if self.full_space && self.kind != LiouvillianSpectrum {
            return Err(HarnessError::validation("full_space", "only supported for liouvillian-spectrum"));
        }
        if self.full_space && m > 8 {
            return Err(HarnessError::validation("full_space", format!("full Fock space limited to 8 sites, got {m}")));
        }

        // Capacity.
        let d = if self.full_space { 1usize << (2 * m) } else { self.sector_dim() };
        let capacity = |what: &str, limit: usize| -> Result<()> {
            if d > limit {
                Err(CoreError::Capacity {
                    what: what.into(),
                    dim: d,
                    limit,
                }
                .into())
            } else {
                Ok(())
            }
        };
        let dense_initial = matches!(self.initial, InitialState::Thermal { .. });
        if dense_initial || matches!(self.kind, GcePredict | ThermalProjections) {
            capacity("sector dimension (dense)", dense_limit)?;
        }
        let dissipative = matches!(self.kind, QuenchDephasing | StructureFactor | PerturbationWindow | ThermalProjections | FloquetVsDephasing);
        if dissipative && self.method == Method::Master {
            capacity("sector dimension (density matrix)", MASTER_DIM_LIMIT.min(dense_limit))?;
        }
        if self.kind == LiouvillianSpectrum && d * d > MAX_LIOUVILLIAN_DIM {
            return Err(CoreError::Capacity {
                what: "Liouvillian side d²".into(),
                dim: d * d,
                limit: MAX_LIOUVILLIAN_DIM,
            }
            .into());
        }
        // The grid and sector themselves.
        if !self.full_space {
            let s = self.sector();
            Basis::sector(m, s.n_up, s.n_down)?;
        }
        Ok(())
    }
}
