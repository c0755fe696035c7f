use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{emit_svg_timeseries, Metrics, Trajectory};
use crate::envs::ProcessEnv;
use crate::explicit_mpc::{condense, solve_mpqp, ExplicitController, MpcFormulation, PwaControlLaw};
use crate::nets::Activation;
use crate::nmpc::{nmpc_rollout, NmpcConfig};
use crate::rl::{evaluate_policy, train_ddpg, yann_models, ActorModel, CriticModel, EpisodeLog, TrainConfig, TrainMode, VanillaActor, VanillaCritic};
use crate::yann::ResidualSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    YannDdpg,
    VanillaDdpg,
    NmpcOracle,
    ExplicitMpc,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::YannDdpg => "yann_ddpg",
            ControllerKind::VanillaDdpg => "vanilla_ddpg",
            ControllerKind::NmpcOracle => "nmpc_oracle",
            ControllerKind::ExplicitMpc => "explicit_mpc",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        [Self::YannDdpg, Self::VanillaDdpg, Self::NmpcOracle, Self::ExplicitMpc]
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown controller {name:?}")))
    }
}

/// Controller-versus-controller study on one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Environment file, relative to the experiment file.
    pub env: PathBuf,
    pub controllers: Vec<ControllerKind>,
    /// Evaluation reset seeds. Run `k` of every controller starts from
    /// `env.reset(eval_seeds[k])`; RL agents in run `k` train with seed
    /// `train.seed + k`.
    pub eval_seeds: Vec<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_true")]
    pub plots: bool,
    /// Record wall-clock milliseconds in the report; zero otherwise so that
    /// reports are bit-reproducible.
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub yann_ddpg: TrainConfig,
    #[serde(default)]
    pub vanilla_ddpg: TrainConfig,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
    /// Original file text, copied into the run directory.
    #[serde(skip)]
    pub source: String,
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.source = text.to_string();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.controllers.is_empty() {
            return Err(Error::Config("experiment needs at least one controller".into()));
        }
        if self.eval_seeds.is_empty() || self.eval_seeds.iter().collect::<BTreeSet<_>>().len() != self.eval_seeds.len() {
            return Err(Error::Config("evaluation seeds must be nonempty and distinct".into()));
        }
        if self.controllers.iter().collect::<BTreeSet<_>>().len() != self.controllers.len() {
            return Err(Error::Config("controllers must be distinct".into()));
        }
        self.yann_ddpg.validate()?;
        self.vanilla_ddpg.validate()
    }

    pub fn env_path(&self) -> PathBuf {
        self.base_dir.join(&self.env)
    }

    pub fn load_env(&self) -> Result<ProcessEnv> {
        ProcessEnv::load(self.env_path())
    }

    /// Overrides the training seed base of both agents.
    pub fn set_seed(&mut self, seed: u64) {
        self.yann_ddpg.seed = seed;
        self.vanilla_ddpg.seed = seed;
    }

    /// Overrides the episode budget of both agents.
    pub fn set_episodes(&mut self, episodes: usize) {
        self.yann_ddpg.episodes = episodes;
        self.vanilla_ddpg.episodes = episodes;
    }

    fn train_config(&self, kind: ControllerKind) -> Option<&TrainConfig> {
        match kind {
            ControllerKind::YannDdpg => Some(&self.yann_ddpg),
            ControllerKind::VanillaDdpg => Some(&self.vanilla_ddpg),
            _ => None,
        }
    }
}

/// One evaluation run of one controller.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub env: String,
    pub controller: ControllerKind,
    pub seed: u64,
    pub metrics: Metrics,
    pub train_episodes: usize,
    pub wall_ms: u64,
}

impl ReportRow {
    pub const CSV_HEADER: &'static str = "env,controller,seed,ise,itae,ess,cum_cost,train_episodes,wall_ms";

    pub fn csv_row(&self) -> String {
        let m = &self.metrics;
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.env,
            self.controller.name(),
            self.seed,
            m.ise,
            m.itae,
            m.ess,
            m.cum_cost,
            self.train_episodes,
            self.wall_ms
        )
    }

    pub fn parse_csv_row(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Config(format!("report row needs 9 fields: {line:?}")));
        }
        let float = |s: &str| s.parse::<f64>().map_err(|e| Error::Config(format!("{s:?}: {e}")));
        let int = |s: &str| s.parse::<u64>().map_err(|e| Error::Config(format!("{s:?}: {e}")));
        Ok(Self {
            env: fields[0].to_string(),
            controller: ControllerKind::parse(fields[1])?,
            seed: int(fields[2])?,
            metrics: Metrics { ise: float(fields[3])?, itae: float(fields[4])?, ess: float(fields[5])?, cum_cost: float(fields[6])? },
            train_episodes: int(fields[7])? as usize,
            wall_ms: int(fields[8])?,
        })
    }
}

/// Per-controller means over the evaluation seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub controller: ControllerKind,
    pub runs: usize,
    pub mean: Metrics,
    pub train_episodes: usize,
    /// Evaluation rollouts that ended in an infeasibility event.
    pub eval_infeasible: usize,
    /// Training episodes, summed over runs, that ended in one.
    pub train_infeasible: usize,
}

/// Per-controller means in first-appearance order.
pub fn summarize(rows: &[ReportRow]) -> Vec<SummaryRow> {
    let mut order: Vec<ControllerKind> = Vec::new();
    for r in rows {
        if !order.contains(&r.controller) {
            order.push(r.controller);
        }
    }
    order
        .into_iter()
        .map(|c| {
            let mine: Vec<&ReportRow> = rows.iter().filter(|r| r.controller == c).collect();
            let n = mine.len() as f64;
            let mut mean = Metrics::default();
            for r in &mine {
                mean.ise += r.metrics.ise;
                mean.itae += r.metrics.itae;
                mean.ess += r.metrics.ess;
                mean.cum_cost += r.metrics.cum_cost;
            }
            mean.ise /= n;
            mean.itae /= n;
            mean.ess /= n;
            mean.cum_cost /= n;
            SummaryRow { controller: c, runs: mine.len(), mean, train_episodes: mine[0].train_episodes, eval_infeasible: 0, train_infeasible: 0 }
        })
        .collect()
}

/// Markdown table with one row per controller.
pub fn summary_markdown(env: &str, summary: &[SummaryRow]) -> String {
    let mut s = format!("## {env}\n\n| Controller | ISE | ITAE | e_SS | Cumulative cost | Train episodes |\n|---|---|---|---|---|---|\n");
    for r in summary {
        let m = &r.mean;
        let _ = writeln!(s, "| {} | {:.4e} | {:.4e} | {:.4e} | {:.4e} | {} |", r.controller.name(), m.ise, m.itae, m.ess, m.cum_cost, r.train_episodes);
    }
    s
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub controller: ControllerKind,
    pub seed: u64,
    pub trajectory: Trajectory,
    pub training: Vec<EpisodeLog>,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub env: String,
    pub rows: Vec<ReportRow>,
    pub summary: Vec<SummaryRow>,
    pub runs: Vec<RunRecord>,
    pub law: Option<PwaControlLaw>,
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", ReportRow::CSV_HEADER);
        for r in &self.rows {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("env,controller,runs,ise,itae,ess,cum_cost,train_episodes,eval_infeasible,train_infeasible\n");
        for r in &self.summary {
            let m = &r.mean;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                self.env,
                r.controller.name(),
                r.runs,
                m.ise,
                m.itae,
                m.ess,
                m.cum_cost,
                r.train_episodes,
                r.eval_infeasible,
                r.train_infeasible
            );
        }
        out
    }

    pub fn summary_for(&self, kind: ControllerKind) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.controller == kind)
    }

    /// Writes the report, summaries, per-run trajectories, training logs,
    /// plots, and the configuration files into `dir`.
    pub fn write(&self, cfg: &ExperimentConfig, env: &ProcessEnv, dir: &Path) -> Result<()> {
        let write = |rel: &str, text: &str| -> Result<()> {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
        };
        write("report.csv", &self.to_csv())?;
        write("summary.csv", &self.summary_csv())?;
        write("summary.md", &summary_markdown(&self.env, &self.summary))?;
        write("experiment.toml", &cfg.source)?;
        let env_path = cfg.env_path();
        write("env.toml", &std::fs::read_to_string(&env_path).map_err(|e| Error::io(&env_path, e))?)?;
        if let Some(law) = &self.law {
            write("law.json", &law.to_json()?)?;
        }
        for run in &self.runs {
            let stem = format!("{}_seed{}", run.controller.name(), run.seed);
            write(&format!("trajectories/{stem}.csv"), &run.trajectory.to_csv())?;
            if !run.training.is_empty() {
                write(&format!("training/{stem}.csv"), &EpisodeLog::to_csv(&run.training))?;
            }
            if cfg.plots {
                let plots = dir.join("plots");
                std::fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
                let title = format!("{} {} seed {}", self.env, run.controller.name(), run.seed);
                emit_svg_timeseries(&run.trajectory, &env.x_sp, &env.input_box, &title, plots.join(format!("{stem}.svg")))?;
            }
        }
        Ok(())
    }
}

/// Network initialization seeds derived from a run's training seed.
fn net_seeds(train_seed: u64) -> (u64, u64) {
    (train_seed.wrapping_mul(2), train_seed.wrapping_mul(2).wrapping_add(1))
}

fn train_and_evaluate<A: ActorModel, C: CriticModel>(
    env: &ProcessEnv,
    actor: A,
    critic: C,
    cfg: &TrainConfig,
    mode: TrainMode,
    x0: &crate::numerics::Vector,
) -> Result<(Trajectory, Vec<EpisodeLog>)> {
    let outcome = train_ddpg(env, actor, critic, cfg, mode)?;
    let (traj, _) = evaluate_policy(env, &outcome.actor, x0)?;
    Ok((traj, outcome.log))
}

/// Builds, trains, and evaluates every controller on every paired seed.
/// Writes outputs when `out` is given.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<Report> {
    cfg.validate()?;
    let env = cfg.load_env()?;
    let needs_law = cfg.controllers.iter().any(|c| matches!(c, ControllerKind::ExplicitMpc | ControllerKind::YannDdpg));
    let form = MpcFormulation::from_env(&env)?;
    let law = if needs_law { Some(solve_mpqp(&condense(&form)?, &form.domain.0, &form.domain.1)?) } else { None };
    let nmpc_cfg = NmpcConfig::from_env(&env)?;
    let (n, m) = (env.n_states(), env.n_inputs());

    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let mut infeasible = Vec::new();
    for &kind in &cfg.controllers {
        for (k, &seed) in cfg.eval_seeds.iter().enumerate() {
            let started = Instant::now();
            let x0 = env.reset(seed);
            let train_cfg = cfg.train_config(kind).map(|t| TrainConfig { seed: t.seed.wrapping_add(k as u64), ..t.clone() });
            let (trajectory, training) = match kind {
                ControllerKind::ExplicitMpc => {
                    let controller = ExplicitController::new(&env, law.clone().expect("law computed for explicit MPC"));
                    let traj = super::closed_loop(&env, &x0, |x, _| Ok(controller.input(x)))?;
                    (traj, Vec::new())
                }
                ControllerKind::NmpcOracle => (nmpc_rollout(&env, &nmpc_cfg, &x0)?.0, Vec::new()),
                ControllerKind::YannDdpg => {
                    let t = train_cfg.as_ref().expect("training config");
                    let (sa, sc) = net_seeds(t.seed);
                    let spec = |seed| ResidualSpec { hidden: t.hidden.clone(), activation: Activation::Tanh, seed };
                    let law = law.clone().expect("law computed for YANN");
                    let (actor, critic) = yann_models(&form, law, &spec(sa), &spec(sc))?;
                    train_and_evaluate(&env, actor, critic, t, TrainMode::Yann, &x0)?
                }
                ControllerKind::VanillaDdpg => {
                    let t = train_cfg.as_ref().expect("training config");
                    let (sa, sc) = net_seeds(t.seed);
                    let actor = VanillaActor::new(n, &t.hidden, form.input_box.clone(), sa);
                    let critic = VanillaCritic::new(n, m, &t.hidden, sc);
                    train_and_evaluate(&env, actor, critic, t, TrainMode::Vanilla, &x0)?
                }
            };
            let wall_ms = if cfg.record_timing { started.elapsed().as_millis() as u64 } else { 0 };
            rows.push(ReportRow {
                env: env.name.clone(),
                controller: kind,
                seed,
                metrics: trajectory.metrics(&env),
                train_episodes: train_cfg.map_or(0, |t| t.episodes),
                wall_ms,
            });
            infeasible.push((kind, trajectory.infeasible as usize, training.iter().filter(|l| l.infeasible).count()));
            runs.push(RunRecord { controller: kind, seed, trajectory, training });
        }
    }
    let mut summary = summarize(&rows);
    for s in &mut summary {
        for (kind, eval, train) in &infeasible {
            if *kind == s.controller {
                s.eval_infeasible += eval;
                s.train_infeasible += train;
            }
        }
    }
    let report = Report { env: env.name.clone(), rows, summary, runs, law };
    if let Some(dir) = out {
        report.write(cfg, &env, dir)?;
    }
    Ok(report)
}

/// Reads `report.csv` from a run directory.
pub fn read_report(dir: &Path) -> Result<Vec<ReportRow>> {
    let path = dir.join("report.csv");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(ReportRow::CSV_HEADER) {
        return Err(Error::Config(format!("{} lacks the report header", path.display())));
    }
    lines.filter(|l| !l.trim().is_empty()).map(ReportRow::parse_csv_row).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(controller: ControllerKind, seed: u64, ise: f64) -> ReportRow {
        ReportRow {
            env: "e".into(),
            controller,
            seed,
            metrics: Metrics { ise, itae: 2.0 * ise, ess: 0.5, cum_cost: ise + 1.0 },
            train_episodes: 3,
            wall_ms: 0,
        }
    }

    #[test]
    fn summary_means_match_hand_computation() {
        let rows = vec![
            row(ControllerKind::NmpcOracle, 1, 1.0),
            row(ControllerKind::NmpcOracle, 2, 3.0),
            row(ControllerKind::ExplicitMpc, 1, 0.5),
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].controller, ControllerKind::NmpcOracle);
        assert_eq!(s[0].mean.ise, 2.0);
        assert_eq!(s[0].mean.itae, 4.0);
        assert_eq!(s[0].mean.cum_cost, 3.0);
        assert_eq!(s[1].mean.ise, 0.5);
    }

    #[test]
    fn csv_rows_round_trip() {
        let r = ReportRow { metrics: Metrics { ise: 0.1 + 0.2, itae: 1e-300, ess: 0.0, cum_cost: 12345.678 }, ..row(ControllerKind::YannDdpg, 7, 0.0) };
        assert_eq!(ReportRow::parse_csv_row(&r.csv_row()).unwrap(), r);
    }

    #[test]
    fn config_validation() {
        let base = "env = \"cstr.toml\"\ncontrollers = [\"nmpc_oracle\"]\n";
        assert!(ExperimentConfig::parse(&format!("{base}eval_seeds = [1, 2]")).is_ok());
        assert!(ExperimentConfig::parse(&format!("{base}eval_seeds = [1, 1]")).is_err());
        assert!(ExperimentConfig::parse(&format!("{base}eval_seeds = []")).is_err());
        assert!(ExperimentConfig::parse("env = \"x\"\ncontrollers = []\neval_seeds = [1]").is_err());
        assert!(ExperimentConfig::parse(&format!("{base}eval_seeds = [1]\nbogus = 1")).is_err());
        let cfg = ExperimentConfig::parse(&format!("{base}eval_seeds = [1]\n[yann_ddpg]\nepisodes = 4\nactor_lr = 1e-6")).unwrap();
        assert_eq!(cfg.yann_ddpg.episodes, 4);
        assert_eq!(cfg.vanilla_ddpg, TrainConfig::default());
    }

    #[test]
    fn controller_names_round_trip() {
        for k in [ControllerKind::YannDdpg, ControllerKind::VanillaDdpg, ControllerKind::NmpcOracle, ControllerKind::ExplicitMpc] {
            assert_eq!(ControllerKind::parse(k.name()).unwrap(), k);
        }
        assert!(ControllerKind::parse("td3").is_err());
    }
}
