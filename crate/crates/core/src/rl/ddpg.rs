use std::path::PathBuf;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ActorModel, CriticModel, ReplayBuffer, Transition};
use crate::bench::{closed_loop, Metrics, Trajectory};
use crate::envs::ProcessEnv;
use crate::nets::{Adam, AdamConfig, Gradients, Mlp};
use crate::numerics::Vector;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Gaussian exploration noise on every action.
    Vanilla,
    /// Deterministic actions, no exploration.
    Yann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub episodes: usize,
    /// Exploration standard deviation as a fraction of each input range
    /// (vanilla mode only).
    pub exploration_sigma: f64,
    pub updates_per_step: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
    /// Record wall-clock time in episode logs; zero otherwise so that logs
    /// stay bit-reproducible.
    pub record_timing: bool,
    /// Write actor and critic checkpoints every this many episodes (0: never).
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            batch_size: 64,
            buffer_capacity: 100_000,
            episodes: 25,
            exploration_sigma: 0.1,
            updates_per_step: 1,
            hidden: vec![64, 64],
            seed: 0,
            record_timing: false,
            checkpoint_every: 0,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.gamma
            && self.gamma <= 1.0
            && 0.0 < self.tau
            && self.tau <= 1.0
            && self.actor_lr >= 0.0
            && self.critic_lr >= 0.0
            && self.batch_size > 0
            && self.buffer_capacity > 0
            && self.exploration_sigma >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training configuration: {self:?}")))
        }
    }

    /// Reset seeds of the training episodes, from a stream independent of
    /// evaluation seeds.
    pub fn episode_seeds(&self) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        (0..self.episodes).map(|_| rng.next_u64()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: usize,
    pub reset_seed: u64,
    pub cum_cost: f64,
    pub ise: f64,
    pub itae: f64,
    pub ess: f64,
    pub infeasible: bool,
    pub wall_ms: u64,
}

impl EpisodeLog {
    pub const CSV_HEADER: &'static str = "episode,cum_cost,ise,itae,ess,infeasible,wall_ms";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.episode, self.cum_cost, self.ise, self.itae, self.ess, self.infeasible as u8, self.wall_ms
        )
    }

    pub fn to_csv(logs: &[EpisodeLog]) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for l in logs {
            out.push_str(&l.csv_row());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<A, C> {
    pub actor: A,
    pub critic: C,
    pub log: Vec<EpisodeLog>,
    /// Training episode trajectories in order.
    pub trajectories: Vec<Trajectory>,
    pub updates: usize,
}

/// `θ_target ← τ θ + (1 − τ) θ_target`.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) {
    target.soft_update_from(online, tau);
}

/// One Adam step on the mean squared TD error. Returns the loss before the
/// step.
pub fn critic_update<A: ActorModel, C: CriticModel>(
    critic: &mut C,
    optimizer: &mut Adam,
    target_actor: &A,
    target_critic: &C,
    batch: &[Transition],
    gamma: f64,
) -> f64 {
    let scale = 1.0 / batch.len() as f64;
    let mut grads = Gradients::zeros_like(critic.net());
    let mut loss = 0.0;
    for t in batch {
        let bootstrap = if t.terminal { 0.0 } else { target_critic.value(&t.z_next, &target_actor.act(&t.z_next)) };
        let y = t.cost + gamma * bootstrap;
        let err = critic.value(&t.z, &t.v) - y;
        loss += err * err * scale;
        grads.add_assign(&critic.gradients(&t.z, &t.v, 2.0 * err * scale).0);
    }
    optimizer.step(critic.net_mut(), &grads);
    loss
}

/// One Adam step descending the mean of `Q(z, π(z))` through `∂Q/∂v`, with
/// the critic held fixed. Returns the objective before the step.
pub fn actor_update<A: ActorModel, C: CriticModel>(actor: &mut A, optimizer: &mut Adam, critic: &C, batch: &[Transition]) -> f64 {
    let scale = 1.0 / batch.len() as f64;
    let mut grads = Gradients::zeros_like(actor.net());
    let mut objective = 0.0;
    for t in batch {
        let v = actor.act(&t.z);
        objective += critic.value(&t.z, &v) * scale;
        let (_, dv) = critic.gradients(&t.z, &v, scale);
        grads.add_assign(&actor.param_gradient(&t.z, &dv));
    }
    optimizer.step(actor.net_mut(), &grads);
    objective
}

/// Noiseless closed-loop rollout of `actor` from physical state `x0`.
pub fn evaluate_policy<A: ActorModel>(env: &ProcessEnv, actor: &A, x0: &Vector) -> Result<(Trajectory, Metrics)> {
    let s = env.scaling();
    let traj = closed_loop(env, x0, |x, _| Ok(s.input_from_normalized(&actor.act(&s.state_to_normalized(x)))))?;
    let metrics = traj.metrics(env);
    Ok((traj, metrics))
}

/// DDPG training loop. Each episode starts from `env.reset` of the next
/// derived episode seed. After every step with at least a batch in the
/// buffer, `updates_per_step` critic, actor, and target updates run.
/// Infeasibility events end the episode with a terminal transition.
pub fn train_ddpg<A: ActorModel, C: CriticModel>(
    env: &ProcessEnv,
    actor: A,
    critic: C,
    cfg: &TrainConfig,
    mode: TrainMode,
) -> Result<TrainOutcome<A, C>> {
    cfg.validate()?;
    let scaling = env.scaling();
    let vbox = scaling.input_box(&env.input_box);
    let mut streams = ChaCha8Rng::seed_from_u64(cfg.seed);
    streams.set_stream(2);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(streams.next_u64());
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, streams.next_u64());
    let sigma = cfg.exploration_sigma;
    let noise = Normal::new(0.0, 1.0).map_err(|e| Error::Config(e.to_string()))?;

    let mut actor = actor;
    let mut critic = critic;
    let mut target_actor = actor.clone();
    let mut target_critic = critic.clone();
    let mut actor_opt = Adam::for_mlp(AdamConfig::with_lr(cfg.actor_lr), actor.net());
    let mut critic_opt = Adam::for_mlp(AdamConfig::with_lr(cfg.critic_lr), critic.net());
    let steps = env.episode_steps();
    let mut log = Vec::with_capacity(cfg.episodes);
    let mut trajectories = Vec::with_capacity(cfg.episodes);
    let mut updates = 0;

    for (episode, reset_seed) in cfg.episode_seeds().into_iter().enumerate() {
        let started = Instant::now();
        let mut x = env.reset(reset_seed);
        let mut traj = Trajectory { dt: env.dt, ..Default::default() };
        for k in 0..steps {
            let z = scaling.state_to_normalized(&x);
            let mut v = actor.act(&z);
            if mode == TrainMode::Vanilla && sigma > 0.0 {
                for j in 0..v.len() {
                    v[j] += sigma * (vbox.upper[j] - vbox.lower[j]) * noise.sample(&mut noise_rng);
                }
                v = vbox.clamp(&v);
            }
            let u = env.input_box.clamp(&scaling.input_from_normalized(&v));
            let cost = env.stage_cost(&x, &u);
            traj.states.push(x.clone());
            traj.inputs.push(u.clone());
            traj.costs.push(cost);
            if k + 1 == steps {
                break;
            }
            let (next, terminal) = match env.step(&x, &u) {
                Ok(next) => (next, false),
                Err(Error::InfeasibleOperatingPoint { state }) => (Vector::from_vec(state), true),
                Err(e) => return Err(e),
            };
            buffer.push(Transition { z, v: scaling.input_to_normalized(&u), cost, z_next: scaling.state_to_normalized(&next), terminal });
            if buffer.len() >= cfg.batch_size {
                for _ in 0..cfg.updates_per_step {
                    let batch = buffer.sample(cfg.batch_size);
                    critic_update(&mut critic, &mut critic_opt, &target_actor, &target_critic, &batch, cfg.gamma);
                    actor_update(&mut actor, &mut actor_opt, &critic, &batch);
                    soft_update(target_critic.net_mut(), critic.net(), cfg.tau);
                    soft_update(target_actor.net_mut(), actor.net(), cfg.tau);
                    updates += 1;
                }
            }
            if terminal {
                traj.infeasible = true;
                break;
            }
            x = next;
        }
        let m = traj.metrics(env);
        log.push(EpisodeLog {
            episode,
            reset_seed,
            cum_cost: m.cum_cost,
            ise: m.ise,
            itae: m.itae,
            ess: m.ess,
            infeasible: traj.infeasible,
            wall_ms: if cfg.record_timing { started.elapsed().as_millis() as u64 } else { 0 },
        });
        trajectories.push(traj);
        if cfg.checkpoint_every > 0 && (episode + 1) % cfg.checkpoint_every == 0 {
            if let Some(dir) = &cfg.checkpoint_dir {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                for (name, json) in [("actor", actor.checkpoint_json()?), ("critic", critic.checkpoint_json()?)] {
                    let path = dir.join(format!("{name}_ep{:04}.json", episode + 1));
                    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
                }
            }
        }
    }
    Ok(TrainOutcome { actor, critic, log, trajectories, updates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::BoxSet;
    use crate::nets::MlpSpec;
    use crate::rl::{VanillaActor, VanillaCritic};
    use nalgebra::dvector;

    fn transition(cost: f64, terminal: bool) -> Transition {
        Transition { z: dvector![0.5, -0.25], v: dvector![0.1], cost, z_next: dvector![0.2, 0.3], terminal }
    }

    fn unit_box() -> BoxSet {
        BoxSet::new(dvector![-1.0], dvector![1.0]).unwrap()
    }

    /// Identity-output actor `v = W z + b` without saturation.
    #[derive(Clone)]
    struct LinearActor(Mlp);

    impl ActorModel for LinearActor {
        fn act(&self, z: &Vector) -> Vector {
            self.0.forward(z)
        }
        fn param_gradient(&self, z: &Vector, c: &Vector) -> Gradients {
            self.0.backward(z, c).0
        }
        fn net(&self) -> &Mlp {
            &self.0
        }
        fn net_mut(&mut self) -> &mut Mlp {
            &mut self.0
        }
        fn checkpoint_json(&self) -> Result<String> {
            Ok(String::new())
        }
    }

    /// Fixed critic `(v − target)²` with an inert parameter set.
    #[derive(Clone)]
    struct QuadraticCritic {
        target: f64,
        inert: Mlp,
    }

    impl CriticModel for QuadraticCritic {
        fn value(&self, _z: &Vector, v: &Vector) -> f64 {
            (v[0] - self.target).powi(2)
        }
        fn gradients(&self, _z: &Vector, v: &Vector, w: f64) -> (Gradients, Vector) {
            (Gradients::zeros_like(&self.inert), dvector![2.0 * (v[0] - self.target) * w])
        }
        fn net(&self) -> &Mlp {
            &self.inert
        }
        fn net_mut(&mut self) -> &mut Mlp {
            &mut self.inert
        }
        fn checkpoint_json(&self) -> Result<String> {
            Ok(String::new())
        }
    }

    #[test]
    fn terminal_target_ignores_bootstrap() {
        let actor = VanillaActor::new(2, &[4], unit_box(), 1);
        let mut critic = VanillaCritic::new(2, 1, &[], 2);
        let target = critic.clone();
        let batch = [transition(2.0, true)];
        let q = critic.value(&batch[0].z, &batch[0].v);
        let mut opt = Adam::for_mlp(AdamConfig::with_lr(0.0), critic.net());
        let loss = critic_update(&mut critic, &mut opt, &actor, &target, &batch, 0.99);
        assert!((loss - (q - 2.0).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn single_transition_adam_step_by_hand() {
        let actor = VanillaActor::new(2, &[4], unit_box(), 1);
        let mut critic = VanillaCritic::new(2, 1, &[], 3);
        let target = critic.clone();
        let t = transition(1.5, true);
        let s = dvector![0.5, -0.25, 0.1];
        let err = critic.value(&t.z, &t.v) - 1.5;
        let before = critic.mlp.params();
        let lr = 1e-3;
        let mut opt = Adam::for_mlp(AdamConfig::with_lr(lr), critic.net());
        critic_update(&mut critic, &mut opt, &actor, &target, &[t], 0.9);
        let after = critic.mlp.params();
        // Parameters: weights (w₁, w₂, w₃) then bias; gradient 2·err·[s; 1].
        let eps = 1e-8;
        for (k, input) in s.iter().copied().chain([1.0]).enumerate() {
            let g: f64 = 2.0 * err * input;
            let expected = before[k] - lr * g / (g.abs() + eps);
            assert!((after[k] - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_td_error_leaves_critic_unchanged() {
        let actor = VanillaActor::new(2, &[4], unit_box(), 1);
        let mut critic = VanillaCritic::new(2, 1, &[5], 4);
        let target = critic.clone();
        let mut t = transition(0.0, false);
        t.cost = critic.value(&t.z, &t.v) - 0.9 * target.value(&t.z_next, &actor.act(&t.z_next));
        let before = critic.clone();
        let mut opt = Adam::for_mlp(AdamConfig::with_lr(0.1), critic.net());
        let loss = critic_update(&mut critic, &mut opt, &actor, &target, &[t], 0.9);
        assert!(loss < 1e-28);
        assert!(critic.mlp.params().iter().zip(before.mlp.params()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn constant_critic_gives_no_actor_update() {
        let mut actor = VanillaActor::new(2, &[4], unit_box(), 1);
        let mut critic = VanillaCritic::new(2, 1, &[3], 5);
        let mut p = critic.mlp.params();
        let n = p.len();
        p.iter_mut().take(n - 1).for_each(|w| *w = 0.0);
        critic.mlp.set_params(&p).unwrap();
        let before = actor.clone();
        let mut opt = Adam::for_mlp(AdamConfig::with_lr(0.1), actor.net());
        actor_update(&mut actor, &mut opt, &critic, &[transition(0.0, false)]);
        assert_eq!(actor, before);
    }

    #[test]
    fn actor_converges_to_quadratic_critic_minimizer() {
        let mut actor = LinearActor(Mlp::new(MlpSpec::new(2, &[], 1), 6));
        let critic = QuadraticCritic { target: 0.7, inert: Mlp::new(MlpSpec::new(1, &[], 1), 0) };
        let batch = [transition(0.0, false)];
        let mut opt = Adam::for_mlp(AdamConfig::with_lr(1e-2), actor.net());
        let dist = |a: &LinearActor| (a.act(&batch[0].z)[0] - 0.7).abs();
        let initial = dist(&actor);
        for _ in 0..2000 {
            actor_update(&mut actor, &mut opt, &critic, &batch);
        }
        assert!(dist(&actor) < 1e-3 * initial.max(1.0), "{initial} -> {}", dist(&actor));
    }

    #[test]
    fn episode_seeds_are_deterministic_and_distinct() {
        let cfg = TrainConfig { episodes: 50, seed: 3, ..Default::default() };
        let seeds = cfg.episode_seeds();
        assert_eq!(seeds, cfg.episode_seeds());
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 50);
    }

    #[test]
    fn log_csv_layout() {
        let l = EpisodeLog { episode: 0, reset_seed: 1, cum_cost: 2.5, ise: 0.5, itae: 1.0, ess: 0.1, infeasible: true, wall_ms: 0 };
        assert_eq!(EpisodeLog::to_csv(&[l]), "episode,cum_cost,ise,itae,ess,infeasible,wall_ms\n0,2.5,0.5,1,0.1,1,0\n");
    }
}
