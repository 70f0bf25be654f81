//! Training runs, evaluation, per-episode metrics and CSV export.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adviser::{select_action, Adviser, AdviserKind, MixerState, MixingConfig};
use crate::agent::{ActorCriticAgent, Hyperparams, UpdateMode};
use crate::envs::EnvKind;
use crate::error::{Error, Result};
use crate::exploration::{OuParams, OuProcess};
use crate::replay::{ReplayBuffer, Transition, DEFAULT_CAPACITY};
use crate::seed::{derive_seed, stream};

/// Environment variable naming the default output directory of the CLI.
pub const OUT_DIR_ENV: &str = "ADVISER_DDPG_OUT";

pub const CSV_HEADER: &str = "episode,total_score,steps,reward_per_step,wall_ms";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub env: EnvKind,
    pub mode: UpdateMode,
    /// Adviser consulted during data collection, and during policy updates
    /// in `adapted_adviser` mode.
    pub adviser: Option<AdviserKind>,
    pub seed: u64,
    pub episodes: usize,
    pub eval_episodes: usize,
    pub hp: Hyperparams,
    pub mixing: MixingConfig,
    pub ou: OuParams,
    pub buffer_capacity: usize,
    /// Learning starts once the buffer holds this many transitions.
    /// `None` means five batches.
    pub warmup: Option<usize>,
    /// Record wall-clock milliseconds per episode. Off by default so that
    /// output files depend only on the configuration.
    pub record_timing: bool,
}

impl RunConfig {
    /// Desk-scale defaults: 200 training episodes on Pendulum, 300 on
    /// MountainCar, 50 evaluation episodes. `adapted_adviser` picks the
    /// environment's adviser; the other modes run without one.
    pub fn new(env: EnvKind, mode: UpdateMode, seed: u64) -> Self {
        RunConfig {
            env,
            mode,
            adviser: (mode == UpdateMode::AdaptedAdviser).then(|| AdviserKind::for_env(env)),
            seed,
            episodes: match env {
                EnvKind::Pendulum => 200,
                EnvKind::MountainCar => 300,
            },
            eval_episodes: 50,
            hp: Hyperparams::default(),
            mixing: MixingConfig::default(),
            ou: OuParams::default(),
            buffer_capacity: DEFAULT_CAPACITY,
            warmup: None,
            record_timing: false,
        }
    }

    pub fn warmup_size(&self) -> usize {
        self.warmup.unwrap_or(5 * self.hp.batch_size).max(self.hp.batch_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::InvalidParameter("episodes must be at least 1".into()));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::InvalidParameter("buffer capacity must be positive".into()));
        }
        if self.mode == UpdateMode::AdaptedAdviser && self.adviser.is_none() {
            return Err(Error::InvalidParameter(
                "adapted_adviser mode requires an adviser".into(),
            ));
        }
        if let Some(adv) = self.adviser {
            if adv.env() != self.env {
                return Err(Error::InvalidParameter(format!(
                    "adviser {adv} does not apply to environment {}",
                    self.env
                )));
            }
        }
        self.hp.validate()?;
        self.mixing.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub total_score: f64,
    pub steps: usize,
    pub reward_per_step: f64,
    pub wall_ms: u64,
}

impl EpisodeRecord {
    pub fn new(episode: usize, total_score: f64, steps: usize, wall_ms: u64) -> Self {
        EpisodeRecord {
            episode,
            total_score,
            steps,
            reward_per_step: total_score / steps as f64,
            wall_ms,
        }
    }
}

pub struct TrainOutcome {
    pub records: Vec<EpisodeRecord>,
    pub agent: ActorCriticAgent,
    /// Adviser episode counter `N` in force during each training episode.
    pub mixer_counts: Vec<u64>,
    /// Fraction of executed actions that came from the adviser, per episode.
    pub adviser_share: Vec<f64>,
}

fn wrap(episode: usize, step: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Run {
        episode,
        step,
        source: Box::new(e),
    }
}

pub fn train_run(cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let spec = cfg.env.spec();
    let mut env = cfg.env.make();
    let mut agent = ActorCriticAgent::new(&spec, cfg.hp.clone(), cfg.seed)?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, spec.state_dim, spec.action_dim)?;
    let mut noise = OuProcess::new(spec.action_dim, cfg.ou)?;
    let mut replay_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, stream::REPLAY));
    let mut explore_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, stream::NOISE));
    let reset_base = derive_seed(cfg.seed, stream::TRAIN_RESET);
    let adviser: Option<Box<dyn Adviser>> = cfg.adviser.map(AdviserKind::build);
    let update_adviser = match cfg.mode {
        UpdateMode::AdaptedAdviser => adviser.as_deref(),
        _ => None,
    };
    let warmup = cfg.warmup_size();

    let mut mixer = MixerState::new();
    let mut records = Vec::with_capacity(cfg.episodes);
    let mut mixer_counts = Vec::with_capacity(cfg.episodes);
    let mut adviser_share = Vec::with_capacity(cfg.episodes);

    for episode in 0..cfg.episodes {
        let started = Instant::now();
        mixer_counts.push(mixer.begin_episode());
        noise.reset();
        let mut state = env.reset(derive_seed(reset_base, episode as u64));
        let mut total = 0.0;
        let mut steps = 0;
        let mut advised = 0usize;
        loop {
            let err = wrap(episode, steps);
            let action = match adviser.as_deref() {
                Some(adv) => {
                    let sel = select_action(
                        &state,
                        &agent,
                        adv,
                        &cfg.mixing,
                        &mixer,
                        &mut noise,
                        &mut explore_rng,
                    )
                    .map_err(&err)?;
                    advised += sel.used_adviser as usize;
                    sel.action
                }
                None => {
                    let mut a = agent.act(&state).map_err(&err)?;
                    for (ai, n) in a.iter_mut().zip(noise.sample(&mut explore_rng)) {
                        *ai += n;
                    }
                    spec.clamp_action(&mut a);
                    a
                }
            };
            let out = env.step(&action).map_err(&err)?;
            total += out.reward;
            steps += 1;
            buffer
                .push(Transition {
                    state: std::mem::take(&mut state),
                    action,
                    reward: out.reward,
                    next_state: out.next_state.clone(),
                    done: out.done,
                })
                .map_err(&err)?;
            if buffer.len() >= warmup {
                agent
                    .train_step(&buffer, cfg.mode, update_adviser, &mut replay_rng)
                    .map_err(&err)?;
            }
            state = out.next_state;
            if out.done || out.truncated {
                break;
            }
        }
        let wall_ms = if cfg.record_timing {
            started.elapsed().as_millis() as u64
        } else {
            0
        };
        records.push(EpisodeRecord::new(episode, total, steps, wall_ms));
        adviser_share.push(advised as f64 / steps as f64);
    }
    Ok(TrainOutcome {
        records,
        agent,
        mixer_counts,
        adviser_share,
    })
}

/// Runs `policy` without noise for `episodes` episodes from reset seeds
/// disjoint from the training stream, returning one record per episode.
pub fn evaluate_policy(
    policy: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    env_kind: EnvKind,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeRecord>> {
    if episodes == 0 {
        return Err(Error::InvalidParameter("evaluation needs at least one episode".into()));
    }
    let mut env = env_kind.make();
    let spec = env.spec().clone();
    let base = derive_seed(seed, stream::EVAL_RESET);
    let mut records = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let mut state = env.reset(derive_seed(base, episode as u64));
        let mut total = 0.0;
        let mut steps = 0;
        loop {
            let err = wrap(episode, steps);
            let mut action = policy(&state).map_err(&err)?;
            spec.clamp_action(&mut action);
            let out = env.step(&action).map_err(&err)?;
            total += out.reward;
            steps += 1;
            state = out.next_state;
            if out.done || out.truncated {
                break;
            }
        }
        records.push(EpisodeRecord::new(episode, total, steps, 0));
    }
    Ok(records)
}

pub fn evaluate_episodes(
    agent: &ActorCriticAgent,
    env_kind: EnvKind,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeRecord>> {
    evaluate_policy(&|s| agent.act(s), env_kind, episodes, seed)
}

/// Average total episode score of the deterministic actor.
pub fn evaluate(agent: &ActorCriticAgent, env_kind: EnvKind, episodes: usize, seed: u64) -> Result<f64> {
    Ok(mean_score(&evaluate_episodes(agent, env_kind, episodes, seed)?))
}

pub fn mean_score(records: &[EpisodeRecord]) -> f64 {
    records.iter().map(|r| r.total_score).sum::<f64>() / records.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: String,
    pub config: RunConfig,
    pub avg_total_score: f64,
    pub eval_scores: Vec<f64>,
    pub training: Vec<EpisodeRecord>,
}

impl RunSummary {
    /// Checks that stored averages and per-step rewards agree with the
    /// records they were computed from.
    pub fn is_consistent(&self) -> bool {
        let recomputed = if self.eval_scores.is_empty() {
            f64::NAN
        } else {
            self.eval_scores.iter().sum::<f64>() / self.eval_scores.len() as f64
        };
        let avg_ok = recomputed == self.avg_total_score
            || (recomputed.is_nan() && self.avg_total_score.is_nan());
        avg_ok
            && self
                .training
                .iter()
                .all(|r| r.reward_per_step == r.total_score / r.steps as f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

pub struct RunOutcome {
    pub train: TrainOutcome,
    pub eval: Vec<EpisodeRecord>,
    pub summary: RunSummary,
}

/// Train, then evaluate with `eval_episodes` noise-free episodes.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let train = train_run(cfg)?;
    let eval = if cfg.eval_episodes > 0 {
        evaluate_episodes(&train.agent, cfg.env, cfg.eval_episodes, cfg.seed)?
    } else {
        Vec::new()
    };
    let eval_scores: Vec<f64> = eval.iter().map(|r| r.total_score).collect();
    let avg_total_score = if eval.is_empty() {
        f64::NAN
    } else {
        mean_score(&eval)
    };
    let summary = RunSummary {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        avg_total_score,
        eval_scores,
        training: train.records.clone(),
    };
    Ok(RunOutcome { train, eval, summary })
}

pub fn write_csv(records: &[EpisodeRecord], path: &Path) -> Result<()> {
    let mut out = String::with_capacity(CSV_HEADER.len() + 48 * records.len());
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.episode, r.total_score, r.steps, r.reward_per_step, r.wall_ms
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(Error::InvalidParameter(format!(
            "{}: unexpected header",
            path.display()
        )));
    }
    reader
        .deserialize()
        .map(|row| row.map_err(|e| csv_error(path, e)))
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::InvalidParameter(format!("{}: {e}", path.display()))
}

/// Index of the first episode at which the trailing `window`-episode mean
/// of reward per step exceeds `threshold`. Only full windows count.
pub fn first_crossing(records: &[EpisodeRecord], window: usize, threshold: f64) -> Option<usize> {
    if window == 0 || records.len() < window {
        return None;
    }
    records.windows(window).position(|w| {
        w.iter().map(|r| r.reward_per_step).sum::<f64>() / window as f64 > threshold
    })
    .map(|i| i + window - 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub episode: usize,
    pub mean_total_score: f64,
    pub mean_steps: f64,
    pub mean_reward_per_step: f64,
    pub seeds: usize,
}

/// Per-episode arithmetic means across runs. Episodes missing from some
/// runs are averaged over the runs that have them.
pub fn aggregate(runs: &[Vec<EpisodeRecord>]) -> Vec<AggregateRow> {
    let longest = runs.iter().map(Vec::len).max().unwrap_or(0);
    (0..longest)
        .map(|i| {
            let rows: Vec<&EpisodeRecord> = runs.iter().filter_map(|r| r.get(i)).collect();
            let n = rows.len() as f64;
            AggregateRow {
                episode: i,
                mean_total_score: rows.iter().map(|r| r.total_score).sum::<f64>() / n,
                mean_steps: rows.iter().map(|r| r.steps as f64).sum::<f64>() / n,
                mean_reward_per_step: rows.iter().map(|r| r.reward_per_step).sum::<f64>() / n,
                seeds: rows.len(),
            }
        })
        .collect()
}

pub fn write_aggregate_csv(rows: &[AggregateRow], path: &Path) -> Result<()> {
    let mut out = String::from("episode,mean_total_score,mean_steps,mean_reward_per_step,seeds\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.episode, r.mean_total_score, r.mean_steps, r.mean_reward_per_step, r.seeds
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| csv_error(path, e)))
        .collect()
}

pub struct SweepOutput {
    pub seeds: Vec<u64>,
    pub summaries: Vec<RunSummary>,
    pub seed_csvs: Vec<PathBuf>,
    pub aggregate_csv: PathBuf,
}

/// Repeats `base` once per seed (in parallel), writing
/// `seed_<s>.csv` and `seed_<s>_summary.json` per seed and `aggregate.csv`.
pub fn sweep(base: &RunConfig, seeds: &[u64], out_dir: &Path) -> Result<SweepOutput> {
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one seed".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let outcomes: Vec<RunOutcome> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = RunConfig {
                seed,
                ..base.clone()
            };
            run(&cfg)
        })
        .collect::<Result<_>>()?;
    let mut seed_csvs = Vec::with_capacity(seeds.len());
    let mut summaries = Vec::with_capacity(seeds.len());
    for (seed, outcome) in seeds.iter().zip(&outcomes) {
        let csv = out_dir.join(format!("seed_{seed}.csv"));
        write_csv(&outcome.train.records, &csv)?;
        let json = out_dir.join(format!("seed_{seed}_summary.json"));
        std::fs::write(&json, outcome.summary.to_json()).map_err(|e| Error::io(&json, e))?;
        seed_csvs.push(csv);
        summaries.push(outcome.summary.clone());
    }
    let runs: Vec<Vec<EpisodeRecord>> = outcomes.into_iter().map(|o| o.train.records).collect();
    let aggregate_csv = out_dir.join("aggregate.csv");
    write_aggregate_csv(&aggregate(&runs), &aggregate_csv)?;
    Ok(SweepOutput {
        seeds: seeds.to_vec(),
        summaries,
        seed_csvs,
        aggregate_csv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{pendulum_step, PendulumState};

    fn tiny(env: EnvKind, mode: UpdateMode, episodes: usize) -> RunConfig {
        let mut cfg = RunConfig::new(env, mode, 3);
        cfg.episodes = episodes;
        cfg.eval_episodes = 2;
        cfg.hp.hidden = vec![8, 8];
        cfg.hp.batch_size = 16;
        cfg
    }

    #[test]
    fn one_pendulum_episode_has_200_steps() {
        let out = train_run(&tiny(EnvKind::Pendulum, UpdateMode::Adapted, 1)).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].steps, 200);
    }

    #[test]
    fn training_is_deterministic() {
        for mode in UpdateMode::ALL {
            let cfg = tiny(EnvKind::Pendulum, mode, 2);
            let a = train_run(&cfg).unwrap();
            let b = train_run(&cfg).unwrap();
            assert_eq!(a.records, b.records);
            assert_eq!(a.agent.actor, b.agent.actor);
        }
    }

    #[test]
    fn mixer_counter_tracks_episode_index() {
        let out = train_run(&tiny(EnvKind::Pendulum, UpdateMode::AdaptedAdviser, 3)).unwrap();
        assert_eq!(out.mixer_counts, vec![0, 1, 2]);
    }

    #[test]
    fn reward_per_step_is_exact() {
        let out = train_run(&tiny(EnvKind::MountainCar, UpdateMode::Ddpg, 1)).unwrap();
        for r in &out.records {
            assert_eq!(r.reward_per_step, r.total_score / r.steps as f64);
        }
    }

    #[test]
    fn zero_torque_evaluation_matches_simulation() {
        let recs = evaluate_policy(&|_| Ok(vec![0.0]), EnvKind::Pendulum, 3, 8).unwrap();
        // replay the same start states with the raw dynamics
        let mut env = EnvKind::Pendulum.make();
        let base = derive_seed(8, stream::EVAL_RESET);
        for (ep, rec) in recs.iter().enumerate() {
            let obs = env.reset(derive_seed(base, ep as u64));
            let mut s = PendulumState::from_observation(&obs);
            let mut total = 0.0;
            for _ in 0..200 {
                let (next, r) = pendulum_step(&s, 0.0).unwrap();
                total += r;
                s = next;
            }
            assert!((rec.total_score - total).abs() < 1e-9);
        }
    }

    #[test]
    fn single_episode_average_is_that_episode() {
        let agent =
            ActorCriticAgent::new(&EnvKind::Pendulum.spec(), Hyperparams::default(), 1).unwrap();
        let before = agent.clone();
        let recs = evaluate_episodes(&agent, EnvKind::Pendulum, 1, 4).unwrap();
        let avg = evaluate(&agent, EnvKind::Pendulum, 1, 4).unwrap();
        assert_eq!(avg, recs[0].total_score);
        assert_eq!(agent, before);
    }

    #[test]
    fn csv_round_trip_and_counts() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.csv");
        write_csv(&[], &empty).unwrap();
        assert_eq!(std::fs::read_to_string(&empty).unwrap(), format!("{CSV_HEADER}\n"));
        assert!(read_csv(&empty).unwrap().is_empty());

        let recs: Vec<EpisodeRecord> = (0..500)
            .map(|i| EpisodeRecord::new(i, -(i as f64) / 7.0 - 1e-9, 1 + i % 200, i as u64))
            .collect();
        let path = dir.path().join("r.csv");
        write_csv(&recs, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 501);
        assert!(text.ends_with('\n'));
        assert_eq!(read_csv(&path).unwrap(), recs);
    }

    #[test]
    fn csv_write_error_names_path() {
        let err = write_csv(&[], Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x.csv"));
    }

    #[test]
    fn crossing_index() {
        let recs: Vec<EpisodeRecord> = (0..30)
            .map(|i| EpisodeRecord::new(i, if i < 15 { -600.0 } else { -100.0 }, 200, 0))
            .collect();
        // per-step rewards are -3 then -0.5; a window holding k late episodes
        // has mean -3 + 0.25 k, which first exceeds -1 at k = 9, i.e. index 23
        assert_eq!(first_crossing(&recs, 10, -1.0), Some(23));
        assert_eq!(first_crossing(&recs[..5], 10, -1.0), None);
    }

    #[test]
    fn aggregate_is_mean() {
        let a = vec![EpisodeRecord::new(0, -1.0, 2, 0), EpisodeRecord::new(1, -3.0, 3, 0)];
        let b = vec![EpisodeRecord::new(0, -2.0, 4, 0), EpisodeRecord::new(1, -5.0, 5, 0)];
        let rows = aggregate(&[a, b]);
        assert_eq!(rows[0].mean_total_score, -1.5);
        assert_eq!(rows[1].mean_steps, 4.0);
        assert_eq!(rows[1].mean_reward_per_step, (-1.0 + -1.0) / 2.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = RunConfig::new(EnvKind::Pendulum, UpdateMode::AdaptedAdviser, 0);
        assert!(cfg.validate().is_ok());
        cfg.adviser = Some(AdviserKind::MountainCarBangBang);
        assert!(cfg.validate().is_err());
        cfg.adviser = None;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::new(EnvKind::Pendulum, UpdateMode::Ddpg, 0);
        cfg.episodes = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn summary_consistency() {
        let out = run(&tiny(EnvKind::Pendulum, UpdateMode::Ddpg, 1)).unwrap();
        assert!(out.summary.is_consistent());
        let json = out.summary.to_json();
        let back: RunSummary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, out.summary);
    }
}
