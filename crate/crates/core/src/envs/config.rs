use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BoxSet, ProcessModel};
use crate::numerics::{Matrix, Tolerances, Vector};
use crate::{Error, Result};

/// Environment configuration file (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub name: String,
    pub model: ProcessModel,
    /// Sample time.
    pub dt: f64,
    /// Episode duration.
    pub duration: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    pub state_box: BoxConfig,
    pub input_box: BoxConfig,
    pub reset_box: BoxConfig,
    pub setpoint: SetpointConfig,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default)]
    pub infeasibility_margin: f64,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub tracked_states: Option<Vec<usize>>,
    #[serde(default)]
    pub mpc: MpcSettings,
    #[serde(default)]
    pub nmpc: NmpcSettings,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_substeps() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxConfig {
    pub fn to_box(&self, dim: usize, what: &str) -> Result<BoxSet> {
        if self.lower.len() != dim || self.upper.len() != dim {
            return Err(Error::Config(format!("{what} must have {dim} entries")));
        }
        BoxSet::new(Vector::from_vec(self.lower.clone()), Vector::from_vec(self.upper.clone()))
    }
}

/// Setpoint specification. Entries listed as free are root-solved from
/// `f(x, u) = 0`, using the given values as the initial guess; the rest are
/// fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetpointConfig {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    #[serde(default)]
    pub free_states: Vec<usize>,
    #[serde(default)]
    pub free_inputs: Vec<usize>,
    #[serde(default = "default_root_tol")]
    pub tolerance: f64,
}

fn default_root_tol() -> f64 {
    1e-11
}

/// Diagonal stage-cost weights on normalized deviations; identity when
/// omitted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub q_diag: Option<Vec<f64>>,
    pub r_diag: Option<Vec<f64>>,
}

impl CostConfig {
    fn diag(values: &Option<Vec<f64>>, dim: usize, what: &str) -> Result<Matrix> {
        match values {
            None => Ok(Matrix::identity(dim, dim)),
            Some(v) if v.len() == dim && v.iter().all(|&d| d >= 0.0) => {
                Ok(Matrix::from_diagonal(&Vector::from_vec(v.clone())))
            }
            Some(_) => Err(Error::Config(format!("{what} needs {dim} nonnegative entries"))),
        }
    }

    pub fn state_weight(&self, n: usize) -> Result<Matrix> {
        Self::diag(&self.q_diag, n, "cost.q_diag")
    }

    pub fn input_weight(&self, m: usize) -> Result<Matrix> {
        let r = Self::diag(&self.r_diag, m, "cost.r_diag")?;
        if r.diagonal().iter().any(|&d| d <= 0.0) {
            return Err(Error::Config("cost.r_diag must be positive".into()));
        }
        Ok(r)
    }
}

/// Linear MPC formulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcSettings {
    pub horizon: usize,
    pub gamma: f64,
    /// Impose the state box on predicted states 1..N-1.
    pub state_constraints: bool,
    /// Impose the state box on the terminal state.
    pub terminal_set: bool,
}

impl Default for MpcSettings {
    fn default() -> Self {
        Self { horizon: 3, gamma: 0.99, state_constraints: false, terminal_set: false }
    }
}

/// SQP settings for the nonlinear MPC reference controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmpcSettings {
    /// Horizon; the MPC horizon when absent.
    pub horizon: Option<usize>,
    pub max_iter: usize,
    /// Stop once ‖ΔU‖∞ (normalized units) falls below this.
    pub tolerance: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl Default for NmpcSettings {
    fn default() -> Self {
        Self { horizon: None, max_iter: 20, tolerance: 1e-6, shrink: 0.5, max_backtracks: 20 }
    }
}

impl EnvConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}
