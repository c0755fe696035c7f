//! Constrained linear-quadratic MPC: condensation into a parametric QP,
//! multiparametric solution by active-set enumeration, and the online QP
//! oracle used to validate it.
//!
//! All quantities live in normalized deviation coordinates (see
//! [`crate::envs::Scaling`]): the origin is the operating point.

mod condense;
mod mpqp;

pub use self::condense::{condense, online_mpc, online_mpc_sequence, CondensedQp};
pub use mpqp::{evaluate_nearest, evaluate_pwa, max_law_error, problem_hash, solve_mpqp, solve_mpqp_with, CriticalRegion, MpqpDiagnostics, PwaControlLaw};

use crate::envs::{BoxSet, ProcessEnv, Scaling};
use crate::numerics::{discretize_zoh, jacobian_fd, solve_dare_with, Fingerprint, Matrix, Tolerances, Vector};
use crate::{Error, Result};

/// Explicit law applied to physical states of an environment.
#[derive(Debug, Clone)]
pub struct ExplicitController {
    pub law: PwaControlLaw,
    pub scaling: Scaling,
    /// Normalized input box.
    pub input_box: BoxSet,
}

impl ExplicitController {
    pub fn new(env: &ProcessEnv, law: PwaControlLaw) -> Self {
        let scaling = env.scaling();
        let input_box = scaling.input_box(&env.input_box);
        Self { law, scaling, input_box }
    }

    /// Physical input: the nearest-region law at the normalized state,
    /// saturated to the normalized input box to remove round-off.
    pub fn input(&self, x: &Vector) -> Vector {
        let v = evaluate_nearest(&self.law, &self.scaling.state_to_normalized(x));
        self.scaling.input_from_normalized(&self.input_box.clamp(&v))
    }
}

/// Discrete-time model `z⁺ = A z + B v` in normalized deviation coordinates
/// around a physical operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a: Matrix,
    pub b: Matrix,
    pub x_op: Vector,
    pub u_op: Vector,
    pub dt: f64,
}

impl LinearSystem {
    pub fn new(a: Matrix, b: Matrix, x_op: Vector, u_op: Vector, dt: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || x_op.len() != n || u_op.len() != b.ncols() {
            return Err(Error::dim("inconsistent linear system"));
        }
        Ok(Self { a, b, x_op, u_op, dt })
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    /// Jacobian linearization at the setpoint followed by exact ZOH
    /// discretization.
    pub fn from_env(env: &ProcessEnv) -> Result<Self> {
        let (ac, bc) = env.linearize_continuous()?;
        let (a, b) = discretize_zoh(&ac, &bc, env.dt)?;
        Self::new(a, b, env.x_sp.clone(), env.u_ss.clone(), env.dt)
    }

    /// Jacobian of the simulator's sampled map at the setpoint. Coincides
    /// with [`LinearSystem::from_env`] up to integration error.
    pub fn sampled(env: &ProcessEnv) -> Result<Self> {
        let (a, b) = sampled_jacobian(env, &env.x_sp, &env.u_ss)?;
        Self::new(a, b, env.x_sp.clone(), env.u_ss.clone(), env.dt)
    }

    pub fn step(&self, z: &Vector, v: &Vector) -> Vector {
        &self.a * z + &self.b * v
    }
}

/// Jacobians of one sample-time integration at physical `(x, u)`, expressed
/// in normalized coordinates.
pub fn sampled_jacobian(env: &ProcessEnv, x: &Vector, u: &Vector) -> Result<(Matrix, Matrix)> {
    let s = env.scaling();
    let z0 = s.state_to_normalized(x);
    let v0 = s.input_to_normalized(u);
    let map = |z: &Vector, v: &Vector| -> Result<Vector> {
        let next = env.integrate(&s.state_from_normalized(z), &s.input_from_normalized(v))?;
        Ok(s.state_to_normalized(&next))
    };
    jacobian_fd(map, &z0, &v0, 1e-6)
}

/// Discounted constrained LQ regulation problem over horizon `N`:
///
/// `min Σ_{t<N} γᵗ (zₜᵀQzₜ + vₜᵀRvₜ) + γᴺ z_NᵀP z_N`
/// subject to the model, `vₜ ∈ input_box`, optional `zₜ ∈ state_box` for
/// `1 ≤ t < N`, and optional `H_f z_N ≤ h_f`.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcFormulation {
    pub horizon: usize,
    pub system: LinearSystem,
    pub q_w: Matrix,
    pub r: Matrix,
    /// Terminal weight, the discounted DARE solution.
    pub p: Matrix,
    pub gamma: f64,
    pub input_box: BoxSet,
    pub state_box: Option<BoxSet>,
    pub terminal_set: Option<(Matrix, Vector)>,
    /// Parameter polytope `D z ≤ d` over which the law is computed.
    pub domain: (Matrix, Vector),
    pub tolerances: Tolerances,
}

impl MpcFormulation {
    /// Formulation with input constraints only and the terminal weight from
    /// the discounted DARE. The domain defaults to the box `|zᵢ| ≤ 1`.
    pub fn new(system: LinearSystem, q_w: Matrix, r: Matrix, gamma: f64, horizon: usize, input_box: BoxSet) -> Result<Self> {
        Self::with_tolerances(system, q_w, r, gamma, horizon, input_box, Tolerances::default())
    }

    pub fn with_tolerances(
        system: LinearSystem,
        q_w: Matrix,
        r: Matrix,
        gamma: f64,
        horizon: usize,
        input_box: BoxSet,
        tolerances: Tolerances,
    ) -> Result<Self> {
        let (n, m) = (system.n_states(), system.n_inputs());
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if q_w.shape() != (n, n) || r.shape() != (m, m) || input_box.dim() != m {
            return Err(Error::dim("weights or input box do not match the system"));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Config(format!("discount {gamma} outside [0, 1]")));
        }
        let p = solve_dare_with(&system.a, &system.b, &q_w, &r, gamma, &tolerances)?;
        let domain = BoxSet::new(Vector::from_element(n, -1.0), Vector::from_element(n, 1.0))?.halfspaces();
        Ok(Self { horizon, system, q_w, r, p, gamma, input_box, state_box: None, terminal_set: None, domain, tolerances })
    }

    /// Formulation configured by the environment's `[mpc]` table, with the
    /// normalized state box as the parameter domain.
    pub fn from_env(env: &ProcessEnv) -> Result<Self> {
        Self::from_env_system(env, LinearSystem::from_env(env)?)
    }

    pub fn from_env_system(env: &ProcessEnv, system: LinearSystem) -> Result<Self> {
        let settings = &env.config.mpc;
        let scaling = env.scaling();
        let input_box = scaling.input_box(&env.input_box);
        let state_box = scaling.state_box(&env.state_box);
        let mut f = Self::with_tolerances(
            system,
            env.q_w.clone(),
            env.r.clone(),
            settings.gamma,
            settings.horizon,
            input_box,
            env.config.tolerances,
        )?;
        f.domain = state_box.halfspaces();
        if settings.state_constraints {
            f.state_box = Some(state_box.clone());
        }
        if settings.terminal_set {
            f.terminal_set = Some(state_box.halfspaces());
        }
        Ok(f)
    }

    pub fn n_states(&self) -> usize {
        self.system.n_states()
    }

    pub fn n_inputs(&self) -> usize {
        self.system.n_inputs()
    }

    /// Discounted LQR gain `K = −(R + γBᵀPB)⁻¹ γBᵀPA`.
    pub fn lqr_gain(&self) -> Result<Matrix> {
        let (a, b, p, g) = (&self.system.a, &self.system.b, &self.p, self.gamma);
        let lhs = &self.r + b.transpose() * p * b * g;
        let rhs = b.transpose() * p * a * g;
        lhs.lu().solve(&rhs).map(|k| -k).ok_or_else(|| Error::dim("singular LQR system"))
    }

    /// Stable fingerprint of every numeric input of the formulation.
    pub fn hash(&self) -> String {
        let mut h = Fingerprint::default();
        h.usize(self.horizon)
            .matrix(&self.system.a)
            .matrix(&self.system.b)
            .matrix(&self.q_w)
            .matrix(&self.r)
            .matrix(&self.p)
            .f64s([self.gamma].iter())
            .f64s(self.input_box.lower.iter())
            .f64s(self.input_box.upper.iter())
            .matrix(&self.domain.0)
            .f64s(self.domain.1.iter());
        if let Some(b) = &self.state_box {
            h.bytes(b"state").f64s(b.lower.iter()).f64s(b.upper.iter());
        }
        if let Some((g, w)) = &self.terminal_set {
            h.bytes(b"terminal").matrix(g).f64s(w.iter());
        }
        h.hex()
    }

    /// Objective evaluated by forward simulation, for cross-checking the
    /// condensed form.
    pub fn stage_summed_cost(&self, z0: &Vector, inputs: &Vector) -> f64 {
        let (n, m) = (self.n_states(), self.n_inputs());
        let mut z = z0.clone();
        let mut total = 0.0;
        let mut discount = 1.0;
        for t in 0..self.horizon {
            let v = inputs.rows(t * m, m).into_owned();
            total += discount * (z.dot(&(&self.q_w * &z)) + v.dot(&(&self.r * &v)));
            z = self.system.step(&z, &v);
            discount *= self.gamma;
        }
        debug_assert_eq!(z.len(), n);
        total + discount * z.dot(&(&self.p * &z))
    }
}
