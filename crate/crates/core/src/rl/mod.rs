//! DDPG with the cost-minimizing convention: the critic estimates
//! discounted cost-to-go and the actor descends it. Two modes share one
//! loop: vanilla (random networks, Gaussian exploration) and YANN (networks
//! initialized from the explicit MPC solution, no exploration).

mod buffer;
mod ddpg;
mod models;

pub use buffer::{ReplayBuffer, Transition};
pub use ddpg::{
    actor_update, critic_update, evaluate_policy, soft_update, train_ddpg, EpisodeLog, TrainConfig, TrainMode, TrainOutcome,
};
pub use models::{yann_models, ActorModel, CriticModel, VanillaActor, VanillaCritic};
