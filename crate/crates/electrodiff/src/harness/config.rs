//! Experiment configuration: a flat key-value TOML file with array literals.
//!
//! ```toml
//! dim = 2
//! n = 64
//! mu = 1.0
//! lambdas = [0.2, 0.1, 0.05, 0.025]
//! t_final = 0.5
//! snapshots = 100
//!
//! doping.offset = 0.0
//! doping.modes = [{ k = [1, 0], amp = 0.1, phase = "cos" }]
//!
//! initial.z_offset = 2.0
//! initial.vx_modes = [{ k = [0, 1], amp = 0.05, phase = "sin" }]
//! initial.vy_modes = [{ k = [1, 0], amp = 0.05, phase = "sin" }]
//! ```
//!
//! The only environment override is the output directory
//! (`EDLAB_OUT_DIR`), honored by the CLI.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{
    build_profile, DensityGuards, DopingProfile, LimitState, ModeSpec, Params, Phase,
};
use crate::npns::StepControl;
use crate::spectral::{leray_project, Grid, ScalarField, VectorField};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub n: usize,
    pub mu: f64,
    /// Strictly decreasing Debye lengths, all in (0, 0.5].
    pub lambdas: Vec<f64>,
    #[serde(default = "default_kappa0")]
    pub kappa0: f64,
    pub t_final: f64,
    /// Number of snapshot intervals; times are `j · t_final / snapshots`.
    pub snapshots: usize,
    #[serde(default)]
    pub dt_policy: DtPolicy,
    /// Step cap under the `auto` policy; the exact step under `fixed`.
    #[serde(default)]
    pub dt_max: Option<f64>,
    #[serde(default = "default_cfl_advect")]
    pub cfl_advect: f64,
    #[serde(default = "default_cfl_relax")]
    pub cfl_relax: f64,
    #[serde(default = "default_true")]
    pub dealias: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default)]
    pub write_fields: bool,
    #[serde(default)]
    pub doping: ProfileSpec,
    pub initial: InitialSpec,
    #[serde(default)]
    pub mms: MmsSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DtPolicy {
    #[default]
    Auto,
    Fixed,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub modes: Vec<ModeEntry>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModeEntry {
    pub k: Vec<i64>,
    pub amp: f64,
    pub phase: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub z_offset: f64,
    #[serde(default)]
    pub z_modes: Vec<ModeEntry>,
    #[serde(default)]
    pub vx_modes: Vec<ModeEntry>,
    #[serde(default)]
    pub vy_modes: Vec<ModeEntry>,
    #[serde(default)]
    pub vz_modes: Vec<ModeEntry>,
    /// Leray-project the assembled velocity so the mode list need not be
    /// solenoidal.
    #[serde(default = "default_true")]
    pub project_velocity: bool,
}

/// Settings for manufactured-solution studies.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MmsSpec {
    /// "npns", "limit", or "both".
    #[serde(default = "default_systems")]
    pub systems: String,
    #[serde(default = "default_dt_list")]
    pub dt_list: Vec<f64>,
    #[serde(default = "default_n_temporal")]
    pub n_temporal: usize,
    #[serde(default = "default_mms_t_final")]
    pub t_final: f64,
    #[serde(default = "default_n_list")]
    pub n_list: Vec<usize>,
    #[serde(default = "default_dt_spatial")]
    pub dt_spatial: f64,
    #[serde(default = "default_t_final_spatial")]
    pub t_final_spatial: f64,
    #[serde(default = "default_mms_lambda")]
    pub lambda: f64,
}

impl Default for MmsSpec {
    fn default() -> Self {
        MmsSpec {
            systems: default_systems(),
            dt_list: default_dt_list(),
            n_temporal: default_n_temporal(),
            t_final: default_mms_t_final(),
            n_list: default_n_list(),
            dt_spatial: default_dt_spatial(),
            t_final_spatial: default_t_final_spatial(),
            lambda: default_mms_lambda(),
        }
    }
}

fn default_kappa0() -> f64 {
    0.5
}
fn default_cfl_advect() -> f64 {
    0.4
}
fn default_cfl_relax() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}
fn default_out_dir() -> String {
    "out".to_string()
}
fn default_systems() -> String {
    "both".to_string()
}
fn default_dt_list() -> Vec<f64> {
    vec![2e-3, 1e-3, 5e-4]
}
fn default_n_temporal() -> usize {
    32
}
fn default_mms_t_final() -> f64 {
    0.5
}
fn default_n_list() -> Vec<usize> {
    vec![8, 16, 32, 64]
}
fn default_dt_spatial() -> f64 {
    5e-6
}
fn default_t_final_spatial() -> f64 {
    0.01
}
fn default_mms_lambda() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if !(self.dim == 2 || self.dim == 3) {
            return fail(format!("dim must be 2 or 3, got {}", self.dim));
        }
        if self.n < 8 || !self.n.is_power_of_two() {
            return fail(format!("n must be a power of two >= 8, got {}", self.n));
        }
        if !self.mu.is_finite() || self.mu <= 0.0 {
            return fail(format!("mu must be positive, got {}", self.mu));
        }
        if self.lambdas.is_empty() {
            return fail("lambdas must not be empty".to_string());
        }
        for w in self.lambdas.windows(2) {
            if w[1] >= w[0] {
                return fail("lambdas must be strictly decreasing".to_string());
            }
        }
        if self.lambdas.iter().any(|&l| l <= 0.0 || l > 0.5) {
            return fail("every lambda must lie in (0, 0.5]".to_string());
        }
        if self.snapshots < 5 {
            return fail(format!("snapshots must be >= 5, got {}", self.snapshots));
        }
        if self.t_final < 0.0 {
            return fail("t_final must be nonnegative".to_string());
        }
        if !self.kappa0.is_finite() || self.kappa0 <= 0.0 {
            return fail("kappa0 must be positive".to_string());
        }
        if self.dt_policy == DtPolicy::Fixed && self.dt_max.is_none_or(|d| d <= 0.0) {
            return fail("fixed dt policy requires a positive dt_max".to_string());
        }
        if let Some(dt) = self.dt_max {
            if dt <= 0.0 {
                return fail("dt_max must be positive".to_string());
            }
        }
        let check_modes = |name: &str, modes: &[ModeEntry]| -> Result<(), ConfigError> {
            for m in modes {
                if m.k.len() != self.dim {
                    return Err(ConfigError::Invalid(format!(
                        "{name} mode {:?} must have {} components",
                        m.k, self.dim
                    )));
                }
                if m.phase != "cos" && m.phase != "sin" {
                    return Err(ConfigError::Invalid(format!(
                        "{name} phase must be \"cos\" or \"sin\", got {:?}",
                        m.phase
                    )));
                }
            }
            Ok(())
        };
        check_modes("doping", &self.doping.modes)?;
        check_modes("initial.z", &self.initial.z_modes)?;
        check_modes("initial.vx", &self.initial.vx_modes)?;
        check_modes("initial.vy", &self.initial.vy_modes)?;
        check_modes("initial.vz", &self.initial.vz_modes)?;
        if self.dim == 2 && !self.initial.vz_modes.is_empty() {
            return fail("vz_modes given on a 2-d grid".to_string());
        }
        match self.mms.systems.as_str() {
            "npns" | "limit" | "both" => {}
            other => {
                return fail(format!(
                    "mms.systems must be npns|limit|both, got {other:?}"
                ))
            }
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Arc<Grid>, ConfigError> {
        Grid::new(self.dim, self.n).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn build_doping(&self, grid: &Arc<Grid>) -> Result<DopingProfile, ConfigError> {
        let field = build_profile(grid, self.doping.offset, &to_mode_specs(&self.doping.modes))
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        DopingProfile::new(field).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Limit initial data `(Z₀, v₀)` on the given grid.
    pub fn build_limit_initial(&self, grid: &Arc<Grid>) -> Result<LimitState, ConfigError> {
        let z0 = build_profile(
            grid,
            self.initial.z_offset,
            &to_mode_specs(&self.initial.z_modes),
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let mut comps: Vec<ScalarField> = Vec::new();
        let per_axis = [
            &self.initial.vx_modes,
            &self.initial.vy_modes,
            &self.initial.vz_modes,
        ];
        for modes in per_axis.iter().take(self.dim) {
            comps.push(
                build_profile(grid, 0.0, &to_mode_specs(modes))
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?,
            );
        }
        let mut v0 = VectorField::new(comps);
        if self.initial.project_velocity {
            v0 = leray_project(&v0);
        }
        LimitState::new(0.0, z0, v0, self.kappa0).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn params(&self, lambda: f64) -> Result<Params, ConfigError> {
        Params::new(lambda, self.mu, self.dim).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn guards(&self) -> DensityGuards {
        DensityGuards {
            kappa0: self.kappa0,
            ..DensityGuards::default()
        }
    }

    pub fn step_control(&self) -> StepControl {
        match self.dt_policy {
            DtPolicy::Auto => StepControl {
                dt: self.dt_max.unwrap_or(StepControl::default().dt),
                cfl_advect: self.cfl_advect,
                cfl_relax: self.cfl_relax,
                dealias: self.dealias,
            },
            // Infinite Courant factors disable the stability bounds so the
            // user step is taken verbatim.
            DtPolicy::Fixed => StepControl {
                dt: self.dt_max.expect("validated"),
                cfl_advect: f64::INFINITY,
                cfl_relax: f64::INFINITY,
                dealias: self.dealias,
            },
        }
    }

    /// Snapshot times `j · t_final / snapshots`, `j = 0..=snapshots`.
    pub fn snapshot_times(&self) -> Vec<f64> {
        if self.t_final == 0.0 {
            return vec![0.0];
        }
        (0..=self.snapshots)
            .map(|j| j as f64 * self.t_final / self.snapshots as f64)
            .collect()
    }
}

fn to_mode_specs(entries: &[ModeEntry]) -> Vec<ModeSpec> {
    entries
        .iter()
        .map(|e| ModeSpec {
            k: e.k.clone(),
            amplitude: e.amp,
            phase: if e.phase == "cos" {
                Phase::Cos
            } else {
                Phase::Sin
            },
        })
        .collect()
}

/// The checked-in acceptance scenario: 2-d, N = 64, μ = 1, Z₀ = 2,
/// v₀ = 0.05·(sin x₂, sin x₁) projected, D = 0.1(cos x₁ + cos x₂), T = 0.5,
/// λ ∈ {0.2, 0.1, 0.05, 0.025}.
pub const ACCEPTANCE_CONFIG: &str = include_str!("../../configs/acceptance.toml");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acceptance_config_parses_and_validates() {
        let cfg = ExperimentConfig::from_toml(ACCEPTANCE_CONFIG).unwrap();
        assert_eq!(cfg.dim, 2);
        assert_eq!(cfg.n, 64);
        assert_eq!(cfg.lambdas, vec![0.2, 0.1, 0.05, 0.025]);
        assert_eq!(cfg.snapshots, 100);
        assert_eq!(cfg.doping.modes.len(), 2);
        let times = cfg.snapshot_times();
        assert_eq!(times.len(), 101);
        assert!((times[100] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_lambda_lists() {
        for lambdas in [
            "lambdas = [0.1, 0.2, 0.05]",
            "lambdas = [0.7, 0.2, 0.1]",
            "lambdas = []",
        ] {
            let text = ACCEPTANCE_CONFIG.replace("lambdas = [0.2, 0.1, 0.05, 0.025]", lambdas);
            assert!(ExperimentConfig::from_toml(&text).is_err(), "{lambdas}");
        }
    }

    #[test]
    fn rejects_small_snapshot_counts_and_bad_phases() {
        let text = ACCEPTANCE_CONFIG.replace("snapshots = 100", "snapshots = 3");
        assert!(ExperimentConfig::from_toml(&text).is_err());
        let text = ACCEPTANCE_CONFIG.replace("phase = \"sin\"", "phase = \"tan\"");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn builds_scenario_objects() {
        let cfg = ExperimentConfig::from_toml(ACCEPTANCE_CONFIG).unwrap();
        let grid = cfg.build_grid().unwrap();
        let doping = cfg.build_doping(&grid).unwrap();
        assert!((doping.field().max_value() - 0.2).abs() < 1e-12);
        let limit0 = cfg.build_limit_initial(&grid).unwrap();
        assert!((limit0.z().mean() - 2.0).abs() < 1e-15);
        assert!(limit0.v().max_abs() > 0.0);
        // (sin x₂, sin x₁) is already solenoidal, so projection is a no-op.
        assert!((limit0.v().max_abs() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn fixed_policy_requires_dt() {
        let text = ACCEPTANCE_CONFIG
            .replace("dt_policy = \"auto\"", "dt_policy = \"fixed\"")
            .replace("dt_max = 1e-3", "");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }
}
