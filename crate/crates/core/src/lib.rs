//! Adapted deep deterministic policy gradient with domain-knowledge advisers.
//!
//! The actor is trained with a two-fold update: first form target actions
//! `Â = π(s) + β ∇_a Q(s, π(s))`, then regress the actor onto them. An
//! adviser can steer data collection (by mixing its action with the actor's
//! under a confidence schedule) and policy updates (by replacing targets the
//! critic scores lower than the adviser's suggestion).
//!
//! ```
//! use adviser_ddpg::{ActorCriticAgent, EnvKind, Hyperparams};
//!
//! let agent = ActorCriticAgent::new(&EnvKind::Pendulum.spec(), Hyperparams::default(), 7).unwrap();
//! let action = agent.act(&[1.0, 0.0, 0.0]).unwrap();
//! assert!(action[0].abs() <= 2.0);
//! ```

pub mod adviser;
pub mod agent;
pub mod convergence;
pub mod envs;
pub mod error;
pub mod exploration;
pub mod harness;
pub mod nn;
pub mod replay;
pub mod seed;
pub mod snapshot;

pub use adviser::{
    advise_policy_targets, confidence, mix_probability, mix_probability_with, select_action,
    Adviser, AdviserKind, EpsilonRule, MixerState, MixingConfig, MountainCarBangBang,
    PendulumEnergyAdviser,
};
pub use agent::{ActionValue, ActorCriticAgent, Hyperparams, NetworkCritic, UpdateMode};
pub use convergence::{iterate_policy, make_quadratic_q, verify_monotone, AnalyticQ, IterationTrace};
pub use envs::{EnvKind, EnvSpec, Environment, MountainCar, Pendulum, StepResult};
pub use error::{Error, Result};
pub use exploration::{OuParams, OuProcess};
pub use harness::{evaluate, train_run, write_csv, EpisodeRecord, RunConfig, RunSummary};
pub use nn::{DenseNetwork, GradientSet, OptimizerState, OutputKind};
pub use replay::{ReplayBuffer, Transition};
