use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use yann_core::bench::{read_report, run_experiment, summarize, summary_markdown, ExperimentConfig};
use yann_core::envs::ProcessEnv;
use yann_core::explicit_mpc::{condense, max_law_error, problem_hash, solve_mpqp, MpcFormulation, PwaControlLaw};
use yann_core::numerics::Vector;

/// Explicit-MPC initialized RL benchmarks.
#[derive(Parser)]
#[command(name = "bench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment file and write its run directory.
    Run {
        config: PathBuf,
        /// Training seed base for both RL agents.
        #[arg(long)]
        seed: Option<u64>,
        /// Training episodes for both RL agents.
        #[arg(long)]
        episodes: Option<usize>,
        /// Run directory (default: the file's out_dir, else runs/<env>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record wall-clock times in the report.
        #[arg(long)]
        timing: bool,
    },
    /// Solve the explicit MPC law of an environment and save it as JSON.
    Mpqp {
        env: PathBuf,
        #[arg(short = 'o', long = "out", default_value = "law.json")]
        out: PathBuf,
    },
    /// Check a saved law against its environment and the online QP.
    Validate {
        law: PathBuf,
        env: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
    /// Print the summary table of a run directory.
    Report { dir: PathBuf },
}

/// Exit codes: 0 success, 1 invalid configuration or failed validation, 2
/// usage or runtime error.
fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, yann_core::Error::Config(_)) { 1 } else { 2 })
        }
    }
}

fn dispatch(command: Command) -> yann_core::Result<bool> {
    match command {
        Command::Run { config, seed, episodes, out, timing } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.set_seed(seed);
            }
            if let Some(episodes) = episodes {
                cfg.set_episodes(episodes);
            }
            cfg.record_timing |= timing;
            let env_name = cfg.load_env()?.name;
            let dir = out.or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| Path::new("runs").join(env_name));
            let report = run_experiment(&cfg, Some(&dir))?;
            print!("{}", summary_markdown(&report.env, &report.summary));
            for s in &report.summary {
                if s.train_infeasible + s.eval_infeasible > 0 {
                    println!("{}: {} infeasible training episodes, {} infeasible evaluations", s.controller.name(), s.train_infeasible, s.eval_infeasible);
                }
            }
            println!("wrote {}", dir.display());
            Ok(true)
        }
        Command::Mpqp { env, out } => {
            let env = ProcessEnv::load(&env)?;
            let form = MpcFormulation::from_env(&env)?;
            let law = solve_mpqp(&condense(&form)?, &form.domain.0, &form.domain.1)?;
            law.save(&out)?;
            println!("{}: {} regions, hash {}, wrote {}", env.name, law.regions.len(), law.source_hash, out.display());
            Ok(true)
        }
        Command::Validate { law, env, samples, seed, tolerance } => {
            let law = PwaControlLaw::load(&law)?;
            let env = ProcessEnv::load(&env)?;
            let form = MpcFormulation::from_env(&env)?;
            let cqp = condense(&form)?;
            let expected = problem_hash(&cqp, &form.domain.0, &form.domain.1);
            if law.source_hash != expected {
                println!("FAIL: law hash {} does not match environment hash {expected}", law.source_hash);
                return Ok(false);
            }
            let zbox = env.scaling().state_box(&env.state_box);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let points: Vec<Vector> = (0..samples).map(|_| zbox.sample(&mut rng)).collect();
            match max_law_error(&law, &cqp, &points) {
                Ok(err) if err <= tolerance => {
                    println!("PASS: max |pwa - online| = {err:.3e} over {samples} samples");
                    Ok(true)
                }
                Ok(err) => {
                    println!("FAIL: max |pwa - online| = {err:.3e} exceeds {tolerance:e}");
                    Ok(false)
                }
                Err(e) => {
                    println!("FAIL: {e}");
                    Ok(false)
                }
            }
        }
        Command::Report { dir } => {
            let rows = read_report(&dir)?;
            let env = rows.first().map_or_else(String::new, |r| r.env.clone());
            print!("{}", summary_markdown(&env, &summarize(&rows)));
            Ok(true)
        }
    }
}
