//! Experiment configuration: one JSON document with a schema version.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use wavephase::noise::NoiseSpec;
use wavephase::ring::RingModelParams;
use wavephase::sim::SimConfig;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Atlas,
    PhaseCompare,
    ExitScan,
    Occupation,
    Drift,
    FpSolve,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Atlas => "atlas",
            ExperimentKind::PhaseCompare => "phase-compare",
            ExperimentKind::ExitScan => "exit-scan",
            ExperimentKind::Occupation => "occupation",
            ExperimentKind::Drift => "drift",
            ExperimentKind::FpSolve => "fp-solve",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitScanConfig {
    /// `(epsilon, kappa)` cells.
    pub grid: Vec<[f64; 2]>,
    pub t_end: f64,
    pub n_trials: usize,
    #[serde(default = "default_exit_dt")]
    pub dt: f64,
}

fn default_exit_dt() -> f64 {
    1e-2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_trajectories")]
    pub n_trajectories: usize,
    #[serde(default = "default_bins")]
    pub n_bins: usize,
    /// Phase sampling interval in steps.
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
}

fn default_trajectories() -> usize {
    100
}

fn default_bins() -> usize {
    32
}

fn default_sample_every() -> usize {
    10
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            n_trajectories: default_trajectories(),
            n_bins: default_bins(),
            sample_every: default_sample_every(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpConfig {
    /// Initial phase of the transition density.
    #[serde(default)]
    pub xi: f64,
    /// Times in units of rescaled phase time.
    #[serde(default = "default_fp_times")]
    pub times: Vec<f64>,
}

fn default_fp_times() -> Vec<f64> {
    vec![0.1, 1.0, 10.0]
}

impl Default for FpConfig {
    fn default() -> Self {
        FpConfig { xi: 0.0, times: default_fp_times() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    #[serde(default = "default_points")]
    pub n_points: usize,
    #[serde(default)]
    pub model: RingModelParams,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub sim: SimConfig,
    /// Overrides `noise.seed` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_phase_grid")]
    pub phase_grid_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_scan: Option<ExitScanConfig>,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub fp: FpConfig,
}

fn default_points() -> usize {
    128
}

fn default_phase_grid() -> usize {
    64
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            kind,
            n_points: default_points(),
            model: RingModelParams::default(),
            noise: NoiseSpec::default(),
            sim: SimConfig::default(),
            seed: None,
            output_dir: None,
            phase_grid_size: default_phase_grid(),
            exit_scan: None,
            ensemble: EnsembleConfig::default(),
            fp: FpConfig::default(),
        }
    }

    /// Noise spec with the seed override applied.
    pub fn noise_spec(&self) -> NoiseSpec {
        let mut spec = self.noise.clone();
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        spec
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |m: String| Err(CliError::Validation(m));
        if self.schema_version != SCHEMA_VERSION {
            return invalid(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.n_points < 16 || self.n_points % 2 != 0 || self.n_points > 1 << 16 {
            return invalid(format!("n_points must be even and in [16, 65536], got {}", self.n_points));
        }
        if self.phase_grid_size < 8 || self.phase_grid_size > 4096 {
            return invalid(format!("phase_grid_size must lie in [8, 4096], got {}", self.phase_grid_size));
        }
        self.model.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        self.noise.validate(self.n_points).map_err(|e| CliError::Validation(e.to_string()))?;
        if matches!(self.kind, ExperimentKind::PhaseCompare | ExperimentKind::Occupation | ExperimentKind::Drift) {
            self.sim.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        }
        if matches!(self.kind, ExperimentKind::Occupation | ExperimentKind::Drift) {
            let e = &self.ensemble;
            if e.n_trajectories == 0 || e.n_bins == 0 || e.sample_every == 0 {
                return invalid("ensemble sizes must be positive".into());
            }
        }
        if self.kind == ExperimentKind::ExitScan {
            let Some(x) = &self.exit_scan else {
                return invalid("exit-scan requires an \"exit_scan\" section".into());
            };
            if x.grid.is_empty() || x.n_trials == 0 {
                return invalid("exit_scan grid and n_trials must be non-empty".into());
            }
            if x.grid.iter().flatten().any(|v| !(v.is_finite() && *v > 0.0)) {
                return invalid("exit_scan cells must be positive".into());
            }
            if !(x.t_end > 0.0 && x.t_end.is_finite() && x.dt > 0.0 && x.dt <= 0.1 && x.t_end >= x.dt) {
                return invalid("exit_scan needs 0 < dt <= 0.1 and t_end >= dt".into());
            }
        }
        if self.kind == ExperimentKind::FpSolve && self.fp.times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return invalid("fp.times must be positive".into());
        }
        Ok(())
    }
}

/// Parses and validates a configuration, reporting line and column on syntax errors.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig = serde_json::from_str(text)
        .map_err(|e| CliError::Config { line: e.line(), column: e.column(), message: e.to_string() })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn to_json(cfg: &ExperimentConfig) -> String {
    serde_json::to_string_pretty(cfg).expect("serializable config")
}
