use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use adviser_ddpg::adviser::{AdviserKind, EpsilonRule};
use adviser_ddpg::agent::UpdateMode;
use adviser_ddpg::convergence::run_suite;
use adviser_ddpg::envs::EnvKind;
use adviser_ddpg::harness::{self, RunConfig, OUT_DIR_ENV};
use adviser_ddpg::snapshot;
use adviser_ddpg::Result;

#[derive(Parser)]
#[command(name = "adviser-ddpg", version, about = "Adapted DDPG with domain-knowledge advisers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and write its per-episode CSV and summary.
    Train(TrainArgs),
    /// Evaluate a saved agent without exploration noise.
    Eval {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, value_parser = parse_env)]
        env: EnvKind,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check monotone improvement of gradient steps on analytic concave Q.
    VerifyConvergence {
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        /// Directory for report.txt and traces.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat `train` over several seeds and average the curves.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination; defaults to `<out dir>/<env>_<mode>_seed<seed>.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also save the trained agent here.
    #[arg(long)]
    snapshot_out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_parser = parse_env)]
    env: EnvKind,
    #[arg(long, value_parser = parse_mode)]
    mode: UpdateMode,
    /// Adviser name or `none`; defaults to the environment's adviser in
    /// adapted_adviser mode and to none otherwise.
    #[arg(long, value_parser = check_adviser)]
    adviser: Option<String>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    actor_lr: Option<f64>,
    #[arg(long)]
    critic_lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long, value_parser = parse_rule)]
    epsilon_rule: Option<EpsilonRule>,
    #[arg(long)]
    ou_theta: Option<f64>,
    #[arg(long)]
    ou_sigma: Option<f64>,
    #[arg(long)]
    ou_dt: Option<f64>,
    #[arg(long)]
    buffer_capacity: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    /// Record wall-clock time per episode (makes CSVs run-dependent).
    #[arg(long)]
    timing: bool,
}

fn parse_env(s: &str) -> std::result::Result<EnvKind, String> {
    s.parse().map_err(|e: adviser_ddpg::Error| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<UpdateMode, String> {
    s.parse().map_err(|e: adviser_ddpg::Error| e.to_string())
}

fn check_adviser(s: &str) -> std::result::Result<String, String> {
    AdviserKind::parse_optional(s)
        .map(|_| s.to_string())
        .map_err(|e| e.to_string())
}

fn parse_rule(s: &str) -> std::result::Result<EpsilonRule, String> {
    s.parse().map_err(|e: adviser_ddpg::Error| e.to_string())
}

impl RunArgs {
    fn config(&self, seed: u64) -> RunConfig {
        let mut cfg = RunConfig::new(self.env, self.mode, seed);
        if let Some(name) = &self.adviser {
            cfg.adviser = AdviserKind::parse_optional(name).expect("validated by clap");
        }
        macro_rules! set {
            ($($field:ident => $($target:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { cfg.$($target).+ = v; })*
            };
        }
        set!(
            episodes => episodes,
            eval_episodes => eval_episodes,
            gamma => hp.gamma,
            tau => hp.tau,
            beta => hp.beta,
            actor_lr => hp.actor_lr,
            critic_lr => hp.critic_lr,
            batch_size => hp.batch_size,
            hidden => hp.hidden,
            lambda => mixing.lambda,
            temperature => mixing.temperature,
            epsilon_rule => mixing.rule,
            ou_theta => ou.theta,
            ou_sigma => ou.sigma,
            ou_dt => ou.dt,
            buffer_capacity => buffer_capacity,
        );
        cfg.warmup = self.warmup;
        cfg.record_timing = self.timing;
        cfg
    }
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| adviser_ddpg::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).map_err(|e| adviser_ddpg::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn train(args: TrainArgs) -> Result<ExitCode> {
    let cfg = args.run.config(args.seed);
    let out = args.out.unwrap_or_else(|| {
        default_out_dir().join(format!("{}_{}_seed{}.csv", cfg.env, cfg.mode, cfg.seed))
    });
    let outcome = harness::run(&cfg)?;
    ensure_parent(&out)?;
    harness::write_csv(&outcome.train.records, &out)?;
    write_text(&out.with_extension("json"), &outcome.summary.to_json())?;
    if let Some(path) = args.snapshot_out {
        ensure_parent(&path)?;
        snapshot::save_agent(&outcome.train.agent, &path)?;
    }
    let last = outcome.train.records.last().expect("at least one episode");
    println!(
        "trained {} episodes; last training score {:.2}; evaluation score {:.2} over {} episodes",
        outcome.train.records.len(),
        last.total_score,
        outcome.summary.avg_total_score,
        outcome.eval.len()
    );
    println!("wrote {}", out.display());
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(args) => train(args),
        Command::Eval {
            snapshot,
            env,
            episodes,
            seed,
        } => {
            let agent = snapshot::load_agent(&snapshot)?;
            let score = harness::evaluate(&agent, env, episodes, seed)?;
            println!("average total episode score over {episodes} episodes: {score}");
            Ok(ExitCode::SUCCESS)
        }
        Command::VerifyConvergence { steps, out } => {
            let report = run_suite(steps)?;
            let text = report.summary();
            print!("{text}");
            if let Some(dir) = out {
                write_text(&dir.join("report.txt"), &text)?;
                report.write_traces_csv(&dir.join("traces.csv"))?;
            }
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Sweep { run, seeds, out_dir } => {
            let cfg = run.config(0);
            let dir = out_dir.unwrap_or_else(|| {
                default_out_dir().join(format!("sweep_{}_{}", cfg.env, cfg.mode))
            });
            let out = harness::sweep(&cfg, &seeds, &dir)?;
            for (seed, summary) in out.seeds.iter().zip(&out.summaries) {
                println!("seed {seed}: evaluation score {:.2}", summary.avg_total_score);
            }
            println!("wrote {}", out.aggregate_csv.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
