//! Nonlinear MPC reference controller: Gauss-Newton SQP over the true
//! sampled dynamics with input boxes, condensed time-varying QP subproblems,
//! and a backtracking line search on the true horizon cost.

use crate::bench::{closed_loop, Trajectory};
use crate::envs::ProcessEnv;
use crate::explicit_mpc::{sampled_jacobian, LinearSystem};
use crate::numerics::{qp_solve_with, solve_dare_with, symmetrize, Matrix, Qp, Tolerances, Vector};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NmpcConfig {
    pub horizon: usize,
    pub gamma: f64,
    pub q_w: Matrix,
    pub r: Matrix,
    /// Terminal weight: discounted DARE of the setpoint linearization.
    pub p: Matrix,
    pub max_iter: usize,
    /// Convergence threshold on `‖ΔU‖∞` in normalized units.
    pub tolerance: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
    pub tolerances: Tolerances,
}

impl NmpcConfig {
    /// Settings from the environment's `[nmpc]` and `[mpc]` tables.
    pub fn from_env(env: &ProcessEnv) -> Result<Self> {
        let s = &env.config.nmpc;
        let gamma = env.config.mpc.gamma;
        let sys = LinearSystem::sampled(env)?;
        let p = solve_dare_with(&sys.a, &sys.b, &env.q_w, &env.r, gamma, &env.config.tolerances)?;
        let cfg = Self {
            horizon: s.horizon.unwrap_or(env.config.mpc.horizon),
            gamma,
            q_w: env.q_w.clone(),
            r: env.r.clone(),
            p,
            max_iter: s.max_iter,
            tolerance: s.tolerance,
            shrink: s.shrink,
            max_backtracks: s.max_backtracks,
            tolerances: env.config.tolerances,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.horizon == 0 || !(self.tolerance > 0.0) || !(0.0 < self.shrink && self.shrink < 1.0) {
            return Err(Error::Config("NMPC needs horizon ≥ 1, tolerance > 0, shrink in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmpcSolution {
    /// First move in physical units.
    pub u0: Vector,
    /// Optimized sequence in normalized deviations, stage-major.
    pub sequence: Vector,
    pub cost: f64,
    /// Accepted SQP steps.
    pub iterations: usize,
    pub converged: bool,
    /// The line search found no decrease; the best iterate is returned.
    pub stalled: bool,
    /// True cost after each accepted step, starting with the warm start.
    pub cost_history: Vec<f64>,
}

/// Normalized states `z₁..z_N` under `seq`, or `None` if the model fails.
fn simulate(env: &ProcessEnv, x0: &Vector, seq: &Vector, n_inputs: usize, horizon: usize) -> Option<Vec<Vector>> {
    let s = env.scaling();
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let u = s.input_from_normalized(&seq.rows(t * n_inputs, n_inputs).into_owned());
        x = env.integrate(&x, &u).ok()?;
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        out.push(s.state_to_normalized(&x));
    }
    Some(out)
}

fn horizon_cost(cfg: &NmpcConfig, z0: &Vector, zs: &[Vector], seq: &Vector, m: usize) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    let mut z = z0;
    for t in 0..cfg.horizon {
        let v = seq.rows(t * m, m);
        total += discount * (z.dot(&(&cfg.q_w * z)) + v.dot(&(&cfg.r * v)));
        discount *= cfg.gamma;
        z = &zs[t];
    }
    total + discount * z.dot(&(&cfg.p * z))
}

fn true_cost(env: &ProcessEnv, cfg: &NmpcConfig, x0: &Vector, seq: &Vector) -> f64 {
    let m = env.n_inputs();
    match simulate(env, x0, seq, m, cfg.horizon) {
        Some(zs) => horizon_cost(cfg, &env.scaling().state_to_normalized(x0), &zs, seq, m),
        None => f64::INFINITY,
    }
}

/// One receding-horizon solve from physical state `x0`. `warm_start` is a
/// normalized input sequence of length `N·m`.
pub fn nmpc_solve(env: &ProcessEnv, cfg: &NmpcConfig, x0: &Vector, warm_start: &Vector) -> Result<NmpcSolution> {
    let (n, m, horizon) = (env.n_states(), env.n_inputs(), cfg.horizon);
    if warm_start.len() != m * horizon {
        return Err(Error::dim(format!("warm start has length {}, expected {}", warm_start.len(), m * horizon)));
    }
    let scaling = env.scaling();
    let vbox = scaling.input_box(&env.input_box);

    // Project the warm start into the box so every iterate is feasible.
    let mut seq = Vector::from_fn(m * horizon, |k, _| warm_start[k].clamp(vbox.lower[k % m], vbox.upper[k % m]));
    let mut cost = true_cost(env, cfg, x0, &seq);
    if !cost.is_finite() {
        return Err(Error::NonFinite { context: "NMPC warm-start rollout", index: 0 });
    }
    let mut history = vec![cost];
    let mut iterations = 0;
    let mut converged = false;
    let mut stalled = false;

    // Stage weights: R̄ = diag(γᵗR), Q̄ = diag(γᵗ⁺¹Q, …, γᴺP).
    let mut q_bar = Matrix::zeros(n * horizon, n * horizon);
    let mut r_bar = Matrix::zeros(m * horizon, m * horizon);
    let mut discount = 1.0;
    for t in 0..horizon {
        r_bar.view_mut((t * m, t * m), (m, m)).copy_from(&(&cfg.r * discount));
        discount *= cfg.gamma;
        let w = if t + 1 == horizon { &cfg.p } else { &cfg.q_w };
        q_bar.view_mut((t * n, t * n), (n, n)).copy_from(&(w * discount));
    }

    for _ in 0..cfg.max_iter {
        let zs = simulate(env, x0, &seq, m, horizon).ok_or(Error::NonFinite { context: "NMPC rollout", index: 0 })?;
        // Knot linearizations along the nominal trajectory.
        let mut jac = Vec::with_capacity(horizon);
        let mut x = x0.clone();
        for t in 0..horizon {
            let u = scaling.input_from_normalized(&seq.rows(t * m, m).into_owned());
            jac.push(sampled_jacobian(env, &x, &u)?);
            x = scaling.state_from_normalized(&zs[t]);
        }
        // δz_{t+1} = A_t δz_t + B_t δv_t with δz_0 = 0.
        let mut gam = Matrix::zeros(n * horizon, m * horizon);
        for t in 0..horizon {
            let (a_t, b_t) = &jac[t];
            if t > 0 {
                let prev = gam.view(((t - 1) * n, 0), (n, m * t)).into_owned();
                gam.view_mut((t * n, 0), (n, m * t)).copy_from(&(a_t * prev));
            }
            gam.view_mut((t * n, t * m), (n, m)).copy_from(b_t);
        }
        let z_bar = Vector::from_iterator(n * horizon, zs.iter().flat_map(|z| z.iter().copied()));
        let h = symmetrize(&((gam.transpose() * &q_bar * &gam + &r_bar) * 2.0));
        let f = (gam.transpose() * (&q_bar * &z_bar) + &r_bar * &seq) * 2.0;
        let mut g = Matrix::zeros(2 * m * horizon, m * horizon);
        let mut w = Vector::zeros(2 * m * horizon);
        for k in 0..m * horizon {
            g[(2 * k, k)] = 1.0;
            w[2 * k] = vbox.upper[k % m] - seq[k];
            g[(2 * k + 1, k)] = -1.0;
            w[2 * k + 1] = seq[k] - vbox.lower[k % m];
        }
        let step = qp_solve_with(&Qp::new(h, f, g, w)?, &cfg.tolerances)?.u;
        if step.amax() < cfg.tolerance {
            converged = true;
            break;
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=cfg.max_backtracks {
            let trial = &seq + &step * alpha;
            let c = true_cost(env, cfg, x0, &trial);
            if c <= cost {
                seq = trial;
                cost = c;
                accepted = true;
                break;
            }
            alpha *= cfg.shrink;
        }
        if !accepted {
            stalled = true;
            break;
        }
        iterations += 1;
        history.push(cost);
        if (&step * alpha).amax() < cfg.tolerance {
            converged = true;
            break;
        }
    }
    let u0 = scaling.input_from_normalized(&seq.rows(0, m).into_owned());
    Ok(NmpcSolution { u0, sequence: seq, cost, iterations, converged, stalled, cost_history: history })
}

/// Closed-loop receding-horizon rollout with shift-and-hold warm starts.
/// Returns the trajectory and the SQP iteration count of every step.
pub fn nmpc_rollout(env: &ProcessEnv, cfg: &NmpcConfig, x0: &Vector) -> Result<(Trajectory, Vec<usize>)> {
    let m = env.n_inputs();
    let len = m * cfg.horizon;
    let mut warm = Vector::zeros(len);
    let mut iterations = Vec::new();
    let traj = closed_loop(env, x0, |x, _| {
        let sol = nmpc_solve(env, cfg, x, &warm)?;
        iterations.push(sol.iterations);
        warm.rows_mut(0, len - m).copy_from(&sol.sequence.rows(m, len - m));
        let last = sol.sequence.rows(len - m, m).into_owned();
        warm.rows_mut(len - m, m).copy_from(&last);
        Ok(sol.u0)
    })?;
    Ok((traj, iterations))
}
