#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use yann_core::envs::{EnvConfig, ProcessEnv};
use yann_core::explicit_mpc::{condense, solve_mpqp, CondensedQp, MpcFormulation, PwaControlLaw};
use yann_core::numerics::{Matrix, Qp, Vector};

pub const ENVS: [&str; 3] = ["cstr", "four_tank", "extraction"];

pub fn config_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(rel)
}

pub fn load_env(name: &str) -> ProcessEnv {
    ProcessEnv::load(config_path(&format!("{name}.toml"))).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Formulation, condensed QP, and explicit law of an environment.
pub fn explicit_setup(env: &ProcessEnv) -> (MpcFormulation, CondensedQp, PwaControlLaw) {
    let form = MpcFormulation::from_env(env).unwrap();
    let cqp = condense(&form).unwrap();
    let law = solve_mpqp(&cqp, &form.domain.0, &form.domain.1).unwrap();
    (form, cqp, law)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

/// `MMᵀ + shift·I`, symmetric positive definite.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Matrix {
    let m = random_matrix(rng, n, n, 1.0);
    &m * m.transpose() + Matrix::identity(n, n) * shift
}

/// Feasible QP with a random strictly interior point.
pub fn random_qp(rng: &mut ChaCha8Rng) -> Qp {
    let n = rng.random_range(1..=5);
    let rows = rng.random_range(0..=10);
    let h = random_spd(rng, n, 0.1);
    let f = random_vector(rng, n, 3.0);
    let g = random_matrix(rng, rows, n, 1.0);
    let interior = random_vector(rng, n, 1.0);
    let w = &g * &interior + Vector::from_fn(rows, |_, _| rng.random_range(0.05..1.0));
    Qp::new(h, f, g, w).unwrap()
}

/// Two-state linear plant with one input used by reduction tests.
pub fn linear_env() -> ProcessEnv {
    let cfg = EnvConfig::parse(
        r#"
        name = "linear"
        dt = 0.5
        duration = 10.0
        [model]
        kind = "linear"
        a = [[-0.2, 1.0], [-0.5, -0.3]]
        b = [[0.0], [1.0]]
        [state_box]
        lower = [-2.0, -2.0]
        upper = [2.0, 2.0]
        [input_box]
        lower = [-0.5]
        upper = [0.5]
        [reset_box]
        lower = [-1.5, -1.5]
        upper = [1.5, 1.5]
        [setpoint]
        x = [0.0, 0.0]
        u = [0.0]
        [mpc]
        horizon = 4
        gamma = 0.95
        [nmpc]
        tolerance = 1e-9
        "#,
    )
    .unwrap();
    ProcessEnv::from_config(cfg).unwrap()
}

/// Relative error with a floor so that vanishing gradients compare
/// absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}
