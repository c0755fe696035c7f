//! Nonlinear process environments behind one contract.
//!
//! An environment is immutable: [`ProcessEnv::step`] maps `(x, u)` to the
//! next sampled state, so rollouts own their state and many rollouts can
//! share one environment.

mod config;
mod cstr;
mod extraction;
mod four_tank;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::numerics::{jacobian_fd, rk4_step, solve_nonlinear, Matrix, Vector};
use crate::{Error, Result};

pub use config::{BoxConfig, CostConfig, EnvConfig, MpcSettings, NmpcSettings, SetpointConfig};
pub use cstr::{cstr_dynamics, CstrParams};
pub use extraction::{boundary_flux, extraction_dynamics, ExtractionParams, STAGES};
pub use four_tank::{fourtank_dynamics, FourTankParams};

/// Axis-aligned box `lower ≤ v ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    pub lower: Vector,
    pub upper: Vector,
}

impl BoxSet {
    pub fn new(lower: Vector, upper: Vector) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::dim("box bounds differ in length"));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l < u)) {
            return Err(Error::Config(format!("empty box: {lower:?} .. {upper:?}")));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self) -> Vector {
        &self.upper - &self.lower
    }

    pub fn center(&self) -> Vector {
        (&self.upper + &self.lower) * 0.5
    }

    pub fn contains(&self, v: &Vector) -> bool {
        v.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(x, (l, u))| *l <= *x && *x <= *u)
    }

    pub fn clamp(&self, v: &Vector) -> Vector {
        Vector::from_fn(v.len(), |i, _| v[i].clamp(self.lower[i], self.upper[i]))
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vector {
        Vector::from_fn(self.dim(), |i, _| rng.random_range(self.lower[i]..self.upper[i]))
    }

    /// Halfspace form `[I; -I] v ≤ [upper; -lower]`.
    pub fn halfspaces(&self) -> (Matrix, Vector) {
        let n = self.dim();
        let mut g = Matrix::zeros(2 * n, n);
        let mut w = Vector::zeros(2 * n);
        for i in 0..n {
            g[(i, i)] = 1.0;
            g[(n + i, i)] = -1.0;
            w[i] = self.upper[i];
            w[n + i] = -self.lower[i];
        }
        (g, w)
    }
}

/// The right-hand side of an environment ODE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessModel {
    Cstr(CstrParams),
    FourTank(FourTankParams),
    Extraction(ExtractionParams),
    /// `ẋ = A x + B u`, used for verification.
    Linear { a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
}

impl ProcessModel {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            ProcessModel::Cstr(_) => (2, 1),
            ProcessModel::FourTank(_) => (4, 2),
            ProcessModel::Extraction(_) => (2 * STAGES, 2),
            ProcessModel::Linear { a, b } => (a.len(), b.first().map_or(0, Vec::len)),
        }
    }

    /// `dx/dt` in environment time units.
    pub fn derivative(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        match self {
            ProcessModel::Cstr(p) => cstr_dynamics(x, u, p),
            ProcessModel::FourTank(p) => Ok(fourtank_dynamics(x, u, p) * p.time_scale),
            ProcessModel::Extraction(p) => extraction_dynamics(x, u, p),
            ProcessModel::Linear { a, b } => {
                let mut d = Vector::zeros(a.len());
                for (i, row) in a.iter().enumerate() {
                    d[i] = row.iter().zip(x.iter()).map(|(c, v)| c * v).sum::<f64>()
                        + b[i].iter().zip(u.iter()).map(|(c, v)| c * v).sum::<f64>();
                }
                Ok(d)
            }
        }
    }

    /// Physical projection after each integration step.
    fn project(&self, x: &mut Vector) {
        if let ProcessModel::FourTank(_) = self {
            x.iter_mut().for_each(|h| *h = h.max(0.0));
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ProcessModel::Cstr(p) => p.validate(),
            ProcessModel::FourTank(p) => p.validate(),
            ProcessModel::Extraction(p) => p.validate(),
            ProcessModel::Linear { a, b } => {
                let n = a.len();
                let m = b.first().map_or(0, Vec::len);
                if a.iter().any(|r| r.len() != n) || b.len() != n || b.iter().any(|r| r.len() != m) {
                    return Err(Error::Config("linear model matrices have inconsistent shapes".into()));
                }
                Ok(())
            }
        }
    }
}

/// Affine map between physical coordinates and normalized deviations
/// `z = (x − x_sp) / width_x`, `v = (u − u_ss) / width_u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub x_ref: Vector,
    pub x_width: Vector,
    pub u_ref: Vector,
    pub u_width: Vector,
}

impl Scaling {
    pub fn state_to_normalized(&self, x: &Vector) -> Vector {
        (x - &self.x_ref).component_div(&self.x_width)
    }

    pub fn state_from_normalized(&self, z: &Vector) -> Vector {
        z.component_mul(&self.x_width) + &self.x_ref
    }

    pub fn input_to_normalized(&self, u: &Vector) -> Vector {
        (u - &self.u_ref).component_div(&self.u_width)
    }

    pub fn input_from_normalized(&self, v: &Vector) -> Vector {
        v.component_mul(&self.u_width) + &self.u_ref
    }

    /// Box mapped into normalized state coordinates.
    pub fn state_box(&self, b: &BoxSet) -> BoxSet {
        BoxSet {
            lower: self.state_to_normalized(&b.lower),
            upper: self.state_to_normalized(&b.upper),
        }
    }

    pub fn input_box(&self, b: &BoxSet) -> BoxSet {
        BoxSet {
            lower: self.input_to_normalized(&b.lower),
            upper: self.input_to_normalized(&b.upper),
        }
    }
}

/// A configured process environment: model, boxes, setpoint, and cost.
#[derive(Debug, Clone)]
pub struct ProcessEnv {
    pub name: String,
    pub model: ProcessModel,
    /// Sample time (environment time units, minutes for the shipped models).
    pub dt: f64,
    /// Episode duration.
    pub duration: f64,
    pub substeps: usize,
    pub state_box: BoxSet,
    pub input_box: BoxSet,
    pub reset_box: BoxSet,
    pub x_sp: Vector,
    pub u_ss: Vector,
    pub q_w: Matrix,
    pub r: Matrix,
    /// Allowed excursion outside the state box, as a fraction of its width.
    pub infeasibility_margin: f64,
    /// Standard deviation of additive state noise, as a fraction of box width.
    pub noise_std: f64,
    /// State indices whose error enters the tracking metrics.
    pub tracked: Vec<usize>,
    pub config: EnvConfig,
}

impl ProcessEnv {
    pub fn n_states(&self) -> usize {
        self.x_sp.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.u_ss.len()
    }

    /// Number of control steps in one episode.
    pub fn episode_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn scaling(&self) -> Scaling {
        Scaling {
            x_ref: self.x_sp.clone(),
            x_width: self.state_box.width(),
            u_ref: self.u_ss.clone(),
            u_width: self.input_box.width(),
        }
    }

    pub fn derivative(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        self.model.derivative(x, u)
    }

    /// Noiseless transition over one sample time. The input is clamped to
    /// the input box; leaving the state box by more than the margin is an
    /// [`Error::InfeasibleOperatingPoint`].
    pub fn step(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        let next = self.integrate_checked(x, &self.input_box.clamp(u))?;
        self.check_feasible(&next)?;
        Ok(next)
    }

    /// [`ProcessEnv::step`] with additive Gaussian state noise when
    /// `noise_std > 0`.
    pub fn step_noisy<R: Rng>(&self, x: &Vector, u: &Vector, rng: &mut R) -> Result<Vector> {
        let mut next = self.integrate_checked(x, &self.input_box.clamp(u))?;
        if self.noise_std > 0.0 {
            let width = self.state_box.width();
            let normal = Normal::new(0.0, self.noise_std).map_err(|e| Error::Config(e.to_string()))?;
            for i in 0..next.len() {
                next[i] += normal.sample(rng) * width[i];
            }
            self.model.project(&mut next);
        }
        self.check_feasible(&next)?;
        Ok(next)
    }

    // A model-domain failure inside the step (runaway, negative
    // concentration) is an infeasibility event reported at the start state.
    fn integrate_checked(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        match self.integrate(x, u) {
            Err(Error::Domain(_) | Error::NonFinite { .. }) => Err(Error::InfeasibleOperatingPoint { state: x.as_slice().to_vec() }),
            other => other,
        }
    }

    /// Integrates the ODE over one sample time without clamping or checks.
    pub fn integrate(&self, x: &Vector, u: &Vector) -> Result<Vector> {
        let h = self.dt / self.substeps as f64;
        let mut state = x.clone();
        for _ in 0..self.substeps {
            state = rk4_step(|x, u| self.model.derivative(x, u), &state, u, h)?;
            self.model.project(&mut state);
        }
        Ok(state)
    }

    pub fn is_feasible(&self, x: &Vector) -> bool {
        let width = self.state_box.width();
        (0..x.len()).all(|i| {
            let slack = self.infeasibility_margin * width[i];
            x[i] >= self.state_box.lower[i] - slack && x[i] <= self.state_box.upper[i] + slack
        })
    }

    fn check_feasible(&self, x: &Vector) -> Result<()> {
        if self.is_feasible(x) {
            Ok(())
        } else {
            Err(Error::InfeasibleOperatingPoint { state: x.iter().copied().collect() })
        }
    }

    /// Quadratic stage cost on normalized deviations.
    pub fn stage_cost(&self, x: &Vector, u: &Vector) -> f64 {
        let s = self.scaling();
        let z = s.state_to_normalized(x);
        let v = s.input_to_normalized(u);
        z.dot(&(&self.q_w * &z)) + v.dot(&(&self.r * &v))
    }

    /// Uniform sample from the reset box, deterministic in `seed`.
    pub fn reset(&self, seed: u64) -> Vector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.reset_box.sample(&mut rng)
    }

    /// Continuous-time Jacobians in normalized deviation coordinates at the
    /// setpoint.
    pub fn linearize_continuous(&self) -> Result<(Matrix, Matrix)> {
        let s = self.scaling();
        let f = |z: &Vector, v: &Vector| -> Result<Vector> {
            let x = s.state_from_normalized(z);
            let u = s.input_from_normalized(v);
            Ok(self.model.derivative(&x, &u)?.component_div(&s.x_width))
        };
        jacobian_fd(f, &Vector::zeros(self.n_states()), &Vector::zeros(self.n_inputs()), 1e-6)
    }

    pub fn from_config(config: EnvConfig) -> Result<Self> {
        config.model.validate()?;
        let (n, m) = config.model.dims();
        let state_box = config.state_box.to_box(n, "state_box")?;
        let input_box = config.input_box.to_box(m, "input_box")?;
        let reset_box = config.reset_box.to_box(n, "reset_box")?;
        let (x_sp, u_ss) = solve_setpoint(&config.model, &config.setpoint, n, m)?;
        if !state_box.contains(&x_sp) {
            return Err(Error::Config(format!("setpoint {x_sp:?} lies outside the state box")));
        }
        if !input_box.contains(&u_ss) {
            return Err(Error::Config(format!("steady input {u_ss:?} lies outside the input box")));
        }
        let q_w = config.cost.state_weight(n)?;
        let r = config.cost.input_weight(m)?;
        if !(config.dt > 0.0) || config.duration < config.dt || config.substeps == 0 {
            return Err(Error::Config("need dt > 0, duration ≥ dt, substeps ≥ 1".into()));
        }
        let tracked = config.tracked_states.clone().unwrap_or_else(|| (0..n).collect());
        if tracked.iter().any(|&i| i >= n) {
            return Err(Error::Config("tracked state index out of range".into()));
        }
        Ok(Self {
            name: config.name.clone(),
            model: config.model.clone(),
            dt: config.dt,
            duration: config.duration,
            substeps: config.substeps,
            state_box,
            input_box,
            reset_box,
            x_sp,
            u_ss,
            q_w,
            r,
            infeasibility_margin: config.infeasibility_margin,
            noise_std: config.noise_std,
            tracked,
            config,
        })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_config(EnvConfig::load(path)?)
    }
}

/// Root-solve `f(x, u) = 0` for the free setpoint components.
fn solve_setpoint(model: &ProcessModel, sp: &SetpointConfig, n: usize, m: usize) -> Result<(Vector, Vector)> {
    if sp.x.len() != n || sp.u.len() != m {
        return Err(Error::Config(format!("setpoint needs {n} states and {m} inputs")));
    }
    let x0 = DVector::from_vec(sp.x.clone());
    let u0 = DVector::from_vec(sp.u.clone());
    if sp.free_states.iter().any(|&i| i >= n) || sp.free_inputs.iter().any(|&i| i >= m) {
        return Err(Error::Config("free setpoint index out of range".into()));
    }
    let assemble = |z: &Vector| {
        let mut x = x0.clone();
        let mut u = u0.clone();
        for (k, &i) in sp.free_states.iter().enumerate() {
            x[i] = z[k];
        }
        for (k, &j) in sp.free_inputs.iter().enumerate() {
            u[j] = z[sp.free_states.len() + k];
        }
        (x, u)
    };
    let z0 = Vector::from_iterator(
        sp.free_states.len() + sp.free_inputs.len(),
        sp.free_states.iter().map(|&i| x0[i]).chain(sp.free_inputs.iter().map(|&j| u0[j])),
    );
    if z0.is_empty() {
        return Ok((x0, u0));
    }
    let z = solve_nonlinear(
        |z| {
            let (x, u) = assemble(z);
            model.derivative(&x, &u)
        },
        &z0,
        sp.tolerance,
        200,
    )?;
    Ok(assemble(&z))
}
