//! Run configuration: a TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use space_split::baselines::{EnsembleConfig, FdConfig, UlamConfig};
use space_split::dynamics::objectives::{GridAxis, Objective, ObjectiveSet};
use space_split::dynamics::{model_by_id, MapModel, MODEL_IDS};
use space_split::s3::S3Config;

use crate::error::{CliError, CliResult};

/// A named objective in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedObjective {
    pub id: String,
    pub objective: Objective,
}

/// Objectives to evaluate; all given groups are concatenated in the order
/// `functions`, `nodal`, `nodal_2d`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub functions: Vec<NamedObjective>,
    pub nodal: Option<GridAxis>,
    pub nodal_2d: Option<[GridAxis; 2]>,
}

impl ObjectiveSpec {
    /// One coordinate objective per state component when nothing is given.
    pub fn build(&self, dim: usize) -> ObjectiveSet {
        let mut set = ObjectiveSet::new();
        for f in &self.functions {
            set.push(f.id.clone(), f.objective.clone());
        }
        if let Some(axis) = &self.nodal {
            set.extend(ObjectiveSet::nodal(axis.clone()));
        }
        if let Some([a, b]) = &self.nodal_2d {
            set.extend(ObjectiveSet::nodal_2d(a.clone(), b.clone()));
        }
        if set.is_empty() {
            for c in 0..dim {
                set.push(format!("u{c}"), Objective::Coordinate { coord: c });
            }
        }
        set
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: String,
    /// Model defaults when absent.
    pub params: Option<Vec<f64>>,
    pub param_index: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub objectives: ObjectiveSpec,

    pub steps: usize,
    pub psi_warm_up: usize,
    pub lags: usize,
    pub burn_in: usize,
    pub fd_step: f64,
    pub frame_warm_up: usize,
    pub reconverge_steps: usize,
    pub unstable_dim: Option<usize>,
    pub exponent_tol: f64,
    pub replicates: usize,

    pub delta: f64,
    pub samples: usize,
    /// Burn-in of each sampled orbit in the Monte Carlo estimators.
    pub sample_burn_in: usize,
    pub horizon: usize,

    pub truncation: usize,
    pub n_cells: usize,
    pub z_threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s3 = S3Config::default();
        let fd = FdConfig::default();
        RunConfig {
            model: "solenoid".into(),
            params: None,
            param_index: 0,
            seed: 0,
            out: None,
            objectives: ObjectiveSpec::default(),
            steps: s3.steps,
            psi_warm_up: s3.psi_warm_up,
            lags: s3.lags,
            burn_in: s3.burn_in,
            fd_step: s3.fd_step,
            frame_warm_up: s3.frame_warm_up,
            reconverge_steps: s3.reconverge_steps,
            unstable_dim: None,
            exponent_tol: s3.exponent_tol,
            replicates: 1,
            delta: fd.delta,
            samples: fd.samples,
            sample_burn_in: fd.burn_in,
            horizon: fd.horizon,
            truncation: EnsembleConfig::default().truncation,
            n_cells: UlamConfig::default().n_cells,
            z_threshold: 3.0,
        }
    }
}

fn positive(name: &str, value: usize) -> CliResult<()> {
    if value == 0 {
        Err(CliError::Config(format!("{name} must be positive")))
    } else {
        Ok(())
    }
}

fn positive_f(name: &str, value: f64) -> CliResult<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {value}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<RunConfig> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn model(&self) -> CliResult<Box<dyn MapModel>> {
        model_by_id(&self.model).ok_or_else(|| {
            CliError::Config(format!(
                "unknown model '{}', expected one of {}",
                self.model,
                MODEL_IDS.join(", ")
            ))
        })
    }

    pub fn resolved_params(&self, model: &dyn MapModel) -> Vec<f64> {
        self.params.clone().unwrap_or_else(|| model.default_params())
    }

    /// Fills defaults that depend on the model so the echoed header is
    /// complete.
    pub fn resolve(mut self) -> CliResult<RunConfig> {
        let model = self.model()?;
        if self.params.is_none() {
            self.params = Some(model.default_params());
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> CliResult<()> {
        let model = self.model()?;
        let params = self.resolved_params(model.as_ref());
        if params.len() != model.n_params() {
            return Err(CliError::Config(format!(
                "model {} takes {} parameters, got {}",
                model.id(),
                model.n_params(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(CliError::Config("parameters must be finite".into()));
        }
        if self.param_index >= model.n_params() {
            return Err(CliError::Config(format!(
                "param_index {} out of range for {} parameters",
                self.param_index,
                model.n_params()
            )));
        }
        positive("steps", self.steps)?;
        positive("lags", self.lags)?;
        positive("reconverge_steps", self.reconverge_steps)?;
        positive("replicates", self.replicates)?;
        positive("samples", self.samples)?;
        positive("horizon", self.horizon)?;
        positive("truncation", self.truncation)?;
        positive("n_cells", self.n_cells)?;
        positive_f("fd_step", self.fd_step)?;
        positive_f("delta", self.delta)?;
        positive_f("exponent_tol", self.exponent_tol)?;
        positive_f("z_threshold", self.z_threshold)?;
        if self.psi_warm_up + self.lags >= self.steps {
            return Err(CliError::Config(format!(
                "psi_warm_up + lags ({}) must be below steps ({})",
                self.psi_warm_up + self.lags,
                self.steps
            )));
        }
        if let Some(m) = self.unstable_dim {
            if m > model.dim() {
                return Err(CliError::Config(format!(
                    "unstable_dim {m} exceeds the state dimension {}",
                    model.dim()
                )));
            }
        }
        self.objectives
            .build(model.dim())
            .validate(model.dim())
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn s3_config(&self) -> S3Config {
        S3Config {
            steps: self.steps,
            psi_warm_up: self.psi_warm_up,
            lags: self.lags,
            fd_step: self.fd_step,
            frame_warm_up: self.frame_warm_up,
            reconverge_steps: self.reconverge_steps,
            burn_in: self.burn_in,
            seed: self.seed,
            param_index: self.param_index,
            unstable_dim: self.unstable_dim,
            exponent_tol: self.exponent_tol,
            replicates: self.replicates,
        }
    }

    pub fn fd_config(&self) -> FdConfig {
        FdConfig {
            samples: self.samples,
            delta: self.delta,
            burn_in: self.sample_burn_in,
            horizon: self.horizon,
            seed: self.seed,
            param_index: self.param_index,
        }
    }

    pub fn ensemble_config(&self) -> EnsembleConfig {
        EnsembleConfig {
            truncation: self.truncation,
            samples: self.samples,
            burn_in: self.sample_burn_in,
            seed: self.seed,
            param_index: self.param_index,
        }
    }

    pub fn ulam_config(&self) -> UlamConfig {
        UlamConfig {
            n_cells: self.n_cells,
            delta: self.delta,
            param_index: self.param_index,
            ..UlamConfig::default()
        }
    }
}
