//! Python bindings: environments, explicit MPC laws, NMPC rollouts and
//! experiment runs. Vectors cross the boundary as lists of floats.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use yann_core::bench::{closed_loop, run_experiment as run_core_experiment, ExperimentConfig, Metrics, Trajectory};
use yann_core::envs::ProcessEnv;
use yann_core::explicit_mpc::{condense, evaluate_pwa, online_mpc, solve_mpqp, ExplicitController, MpcFormulation, PwaControlLaw};
use yann_core::nmpc::{nmpc_rollout, NmpcConfig};
use yann_core::numerics::Vector;

fn err(e: yann_core::Error) -> PyErr {
    match e {
        yann_core::Error::Config(_) | yann_core::Error::Dimension(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn vector(values: Vec<f64>, len: usize, what: &str) -> PyResult<Vector> {
    if values.len() != len {
        return Err(PyValueError::new_err(format!("{what} has length {}, expected {len}", values.len())));
    }
    Ok(Vector::from_vec(values))
}

fn list(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

fn metrics_dict<'py>(py: Python<'py>, m: &Metrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("ise", m.ise)?;
    d.set_item("itae", m.itae)?;
    d.set_item("ess", m.ess)?;
    d.set_item("cum_cost", m.cum_cost)?;
    Ok(d)
}

fn trajectory_dict<'py>(py: Python<'py>, env: &ProcessEnv, t: &Trajectory) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t", t.times())?;
    d.set_item("states", t.states.iter().map(list).collect::<Vec<_>>())?;
    d.set_item("inputs", t.inputs.iter().map(list).collect::<Vec<_>>())?;
    d.set_item("costs", t.costs.clone())?;
    d.set_item("infeasible", t.infeasible)?;
    d.set_item("metrics", metrics_dict(py, &t.metrics(env))?)?;
    Ok(d)
}

/// Process environment loaded from a TOML file.
#[pyclass(name = "Env", module = "yann_rl")]
struct PyEnv {
    inner: ProcessEnv,
}

#[pymethods]
impl PyEnv {
    #[new]
    fn new(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: ProcessEnv::load(&path).map_err(err)? })
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    #[getter]
    fn n_inputs(&self) -> usize {
        self.inner.n_inputs()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn setpoint(&self) -> Vec<f64> {
        list(&self.inner.x_sp)
    }

    #[getter]
    fn steady_input(&self) -> Vec<f64> {
        list(&self.inner.u_ss)
    }

    /// Normalized deviation coordinates of a physical state.
    fn normalize_state(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        let x = vector(x, self.inner.n_states(), "state")?;
        Ok(list(&self.inner.scaling().state_to_normalized(&x)))
    }

    fn reset(&self, seed: u64) -> Vec<f64> {
        list(&self.inner.reset(seed))
    }

    /// Noise-free sample-time step from physical `(x, u)`.
    fn step(&self, x: Vec<f64>, u: Vec<f64>) -> PyResult<Vec<f64>> {
        let x = vector(x, self.inner.n_states(), "state")?;
        let u = vector(u, self.inner.n_inputs(), "input")?;
        Ok(list(&self.inner.step(&x, &u).map_err(err)?))
    }

    fn stage_cost(&self, x: Vec<f64>, u: Vec<f64>) -> PyResult<f64> {
        let x = vector(x, self.inner.n_states(), "state")?;
        let u = vector(u, self.inner.n_inputs(), "input")?;
        Ok(self.inner.stage_cost(&x, &u))
    }

    /// NMPC closed loop from `x0`.
    fn nmpc_rollout<'py>(&self, py: Python<'py>, x0: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let x0 = vector(x0, self.inner.n_states(), "state")?;
        let cfg = NmpcConfig::from_env(&self.inner).map_err(err)?;
        let (traj, _) = nmpc_rollout(&self.inner, &cfg, &x0).map_err(err)?;
        trajectory_dict(py, &self.inner, &traj)
    }
}

/// Explicit MPC law of an environment, in normalized coordinates.
#[pyclass(name = "ExplicitLaw", module = "yann_rl")]
struct PyExplicitLaw {
    law: PwaControlLaw,
    env: ProcessEnv,
}

#[pymethods]
impl PyExplicitLaw {
    /// Solves the multiparametric QP of the environment's MPC problem.
    #[staticmethod]
    fn solve(env: &PyEnv) -> PyResult<Self> {
        let form = MpcFormulation::from_env(&env.inner).map_err(err)?;
        let cqp = condense(&form).map_err(err)?;
        let law = solve_mpqp(&cqp, &form.domain.0, &form.domain.1).map_err(err)?;
        Ok(Self { law, env: env.inner.clone() })
    }

    #[staticmethod]
    fn load(path: PathBuf, env: &PyEnv) -> PyResult<Self> {
        Ok(Self { law: PwaControlLaw::load(&path).map_err(err)?, env: env.inner.clone() })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.law.save(&path).map_err(err)
    }

    #[getter]
    fn n_regions(&self) -> usize {
        self.law.regions.len()
    }

    /// Law value at a normalized state.
    fn evaluate(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        let z = vector(z, self.env.n_states(), "state")?;
        Ok(list(&evaluate_pwa(&self.law, &z).map_err(err)?))
    }

    /// Online QP solution at a normalized state, for comparison.
    fn online(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        let z = vector(z, self.env.n_states(), "state")?;
        let form = MpcFormulation::from_env(&self.env).map_err(err)?;
        let cqp = condense(&form).map_err(err)?;
        Ok(list(&online_mpc(&cqp, &z).map_err(err)?))
    }

    /// Closed loop of the saturated law from physical `x0`.
    fn rollout<'py>(&self, py: Python<'py>, x0: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let x0 = vector(x0, self.env.n_states(), "state")?;
        let controller = ExplicitController::new(&self.env, self.law.clone());
        let traj = closed_loop(&self.env, &x0, |x, _| Ok(controller.input(x))).map_err(err)?;
        trajectory_dict(py, &self.env, &traj)
    }
}

/// Runs an experiment config and returns its report rows. Output files are
/// written to `out_dir` when given.
#[pyfunction]
#[pyo3(signature = (config, out_dir=None, episodes=None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config: PathBuf,
    out_dir: Option<PathBuf>,
    episodes: Option<usize>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut cfg = ExperimentConfig::load(&config).map_err(err)?;
    if let Some(n) = episodes {
        cfg.set_episodes(n);
    }
    let report = py.detach(|| run_core_experiment(&cfg, out_dir.as_deref())).map_err(err)?;
    report
        .rows
        .iter()
        .map(|r| {
            let d = metrics_dict(py, &r.metrics)?;
            d.set_item("env", &r.env)?;
            d.set_item("controller", r.controller.name())?;
            d.set_item("seed", r.seed)?;
            d.set_item("train_episodes", r.train_episodes)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn yann_rl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEnv>()?;
    m.add_class::<PyExplicitLaw>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
