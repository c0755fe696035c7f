//! YANN actor and critic: an exact part taken from the explicit MPC
//! solution plus a trainable residual network whose final layer starts at
//! zero, so both are exact at construction.
//!
//! Inputs and outputs are normalized deviations `z`, `v`.

mod actor;
mod critic;

pub use actor::{project_clamp_cotangent, YannActor, YannActorCheckpoint};
pub use critic::{build_yann_critic, critic_matrix, YannCritic, YannCriticCheckpoint};

use serde::{Deserialize, Serialize};

use crate::nets::{Activation, MlpSpec};

/// Hidden architecture of a residual network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for ResidualSpec {
    fn default() -> Self {
        Self { hidden: vec![64, 64], activation: Activation::Tanh, seed: 0 }
    }
}

impl ResidualSpec {
    pub(crate) fn mlp_spec(&self, input: usize, output: usize) -> MlpSpec {
        MlpSpec::new(input, &self.hidden, output).hidden_activation(self.activation).zero_output()
    }
}
