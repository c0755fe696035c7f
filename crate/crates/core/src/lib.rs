//! Explicit-MPC initialized actor-critic control of nonlinear process models.
//!
//! The crate builds, bottom-up: a dense numerics kernel, three nonlinear
//! process environments, an explicit (multiparametric) MPC solver, a small
//! MLP engine, actor/critic networks whose initial behaviour equals the
//! explicit MPC law and its quadratic Q-function, DDPG training, an SQP
//! based NMPC reference controller, and an experiment harness.

pub mod error;
pub mod bench;
pub mod envs;
pub mod explicit_mpc;
pub mod nets;
pub mod nmpc;
pub mod numerics;
pub mod rl;
pub mod yann;

pub use error::{Error, Result};
