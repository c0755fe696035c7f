use serde::{Deserialize, Serialize};

use crate::envs::ProcessEnv;
use crate::numerics::Vector;
use crate::{Error, Result};

/// Tracking and cost metrics of one closed-loop episode.
///
/// With samples at `t_k = k·dt`, `k = 0..K−1`, and `e_k` the tracked-state
/// error in physical units:
/// `ISE = Σ ‖e_k‖² dt`, `ITAE = Σ t_k ‖e_k‖₁ dt`, `e_SS` = mean `‖e_k‖₁` over
/// the last `⌈K/10⌉` samples, cumulative cost = `Σ C(x_k, u_k)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ise: f64,
    pub itae: f64,
    pub ess: f64,
    pub cum_cost: f64,
}

pub fn compute_metrics(states: &[Vector], x_sp: &Vector, tracked: &[usize], dt: f64, costs: &[f64]) -> Metrics {
    let k = states.len();
    let mut m = Metrics { cum_cost: costs.iter().sum(), ..Default::default() };
    if k == 0 {
        return m;
    }
    let tail = k.div_ceil(10);
    let mut tail_sum = 0.0;
    for (step, x) in states.iter().enumerate() {
        let mut sq = 0.0;
        let mut abs = 0.0;
        for &i in tracked {
            let e = x[i] - x_sp[i];
            sq += e * e;
            abs += e.abs();
        }
        m.ise += sq * dt;
        m.itae += step as f64 * dt * abs * dt;
        if step >= k - tail {
            tail_sum += abs;
        }
    }
    m.ess = tail_sum / tail as f64;
    m
}

/// Closed-loop samples `(x_k, u_k, C(x_k, u_k))` in physical units.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
    pub costs: Vec<f64>,
    /// The episode ended early because the state left the feasible box.
    pub infeasible: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| k as f64 * self.dt).collect()
    }

    pub fn metrics(&self, env: &ProcessEnv) -> Metrics {
        compute_metrics(&self.states, &env.x_sp, &env.tracked, self.dt, &self.costs)
    }

    /// Inverse of [`Trajectory::to_csv`]; `dt` is read from the second
    /// sample time. The infeasibility flag is not stored and reads as false.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
        let n = header.iter().filter(|h| h.starts_with('x')).count();
        let m = header.iter().filter(|h| h.starts_with('u')).count();
        if header.len() != n + m + 2 || header[0] != "t" || header[header.len() - 1] != "cost" {
            return Err(Error::Config(format!("unexpected trajectory header {header:?}")));
        }
        let mut traj = Trajectory::default();
        for (k, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let values = line
                .split(',')
                .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Config(format!("{f:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != header.len() {
                return Err(Error::Config(format!("row {k} has {} fields", values.len())));
            }
            if k == 1 {
                traj.dt = values[0];
            }
            traj.states.push(Vector::from_column_slice(&values[1..=n]));
            traj.inputs.push(Vector::from_column_slice(&values[n + 1..=n + m]));
            traj.costs.push(values[n + m + 1]);
        }
        Ok(traj)
    }

    /// CSV with header `t,x1..xn,u1..um,cost`.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |x| x.len());
        let m = self.inputs.first().map_or(0, |u| u.len());
        let mut out = String::from("t");
        (1..=n).for_each(|i| out.push_str(&format!(",x{i}")));
        (1..=m).for_each(|j| out.push_str(&format!(",u{j}")));
        out.push_str(",cost\n");
        for k in 0..self.len() {
            out.push_str(&format!("{}", k as f64 * self.dt));
            self.states[k].iter().chain(self.inputs[k].iter()).for_each(|v| out.push_str(&format!(",{v}")));
            out.push_str(&format!(",{}\n", self.costs[k]));
        }
        out
    }
}

/// Runs `policy` in closed loop from `x0` for the environment's episode
/// length. An infeasibility event ends the rollout with the flag set; other
/// errors propagate.
pub fn closed_loop<P>(env: &ProcessEnv, x0: &Vector, mut policy: P) -> Result<Trajectory>
where
    P: FnMut(&Vector, usize) -> Result<Vector>,
{
    let steps = env.episode_steps();
    let mut traj = Trajectory { dt: env.dt, ..Default::default() };
    let mut x = x0.clone();
    for k in 0..steps {
        let u = env.input_box.clamp(&policy(&x, k)?);
        traj.costs.push(env.stage_cost(&x, &u));
        traj.states.push(x.clone());
        traj.inputs.push(u.clone());
        if k + 1 == steps {
            break;
        }
        match env.step(&x, &u) {
            Ok(next) => x = next,
            Err(Error::InfeasibleOperatingPoint { .. }) => {
                traj.infeasible = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn constant_unit_error_arithmetic() {
        let states: Vec<Vector> = (0..4).map(|_| dvector![1.0]).collect();
        let m = compute_metrics(&states, &dvector![0.0], &[0], 1.0, &[0.5; 4]);
        assert_eq!(m.ise, 4.0);
        assert_eq!(m.itae, 6.0);
        assert_eq!(m.ess, 1.0);
        assert_eq!(m.cum_cost, 2.0);
    }

    #[test]
    fn zero_error_leaves_only_cost() {
        let states: Vec<Vector> = (0..10).map(|_| dvector![2.0, 3.0]).collect();
        let m = compute_metrics(&states, &dvector![2.0, 3.0], &[0, 1], 0.1, &[0.25; 10]);
        assert_eq!((m.ise, m.itae, m.ess), (0.0, 0.0, 0.0));
        assert_eq!(m.cum_cost, 2.5);
    }

    #[test]
    fn untracked_states_do_not_count() {
        let states = vec![dvector![0.0, 5.0]];
        let m = compute_metrics(&states, &dvector![0.0, 0.0], &[0], 1.0, &[0.0]);
        assert_eq!(m.ise, 0.0);
    }

    #[test]
    fn appending_settled_steps() {
        let mut states: Vec<Vector> = (0..20).map(|k| dvector![1.0 / (1.0 + k as f64)]).collect();
        let before = compute_metrics(&states, &dvector![0.0], &[0], 0.5, &[]);
        states.extend((0..20).map(|_| dvector![0.0]));
        let after = compute_metrics(&states, &dvector![0.0], &[0], 0.5, &[]);
        assert_eq!(after.ise, before.ise);
        assert_eq!(after.itae, before.itae);
        assert!(after.ess <= before.ess);
    }

    #[test]
    fn csv_header_and_rows() {
        let t = Trajectory {
            dt: 0.5,
            states: vec![dvector![1.0, 2.0], dvector![3.0, 4.0]],
            inputs: vec![dvector![5.0], dvector![6.0]],
            costs: vec![0.1, 0.2],
            infeasible: false,
        };
        assert_eq!(t.to_csv(), "t,x1,x2,u1,cost\n0,1,2,5,0.1\n0.5,3,4,6,0.2\n");
    }
}
