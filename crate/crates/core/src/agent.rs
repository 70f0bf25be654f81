//! Actor-critic learner.
//!
//! The critic is trained on TD targets `r + gamma * Q'(s', pi'(s'))`. The
//! actor can be trained two ways:
//!
//! * **adapted** (two-fold): form targets `a_hat = pi(s) + beta * grad_a Q(s, pi(s))`
//!   with [`policy_targets`], optionally let an adviser overwrite some of them,
//!   then regress the actor onto the targets with [`actor_regress`].
//! * **ddpg**: chain the critic's action gradient through the actor
//!   parameters and ascend `mean Q(s, pi(s))` directly ([`ddpg_actor_step`]).
//!
//! Both update rules are free functions over an [`ActionValue`] so they can
//! be driven by an analytic critic in tests as well as by the network critic.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adviser::{advise_policy_targets, Adviser, Clamped};
use crate::envs::EnvSpec;
use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::nn::{DenseNetwork, GradientSet, OptimizerState, OutputKind};
use crate::replay::{ReplayBuffer, Transition};
use crate::seed::{derive_seed, stream};

/// Anything that scores `(state, action)` pairs and exposes `grad_a Q`.
pub trait ActionValue {
    fn q_value(&self, state: &[f64], action: &[f64]) -> Result<f64>;
    fn action_gradient(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>>;
}

/// A critic network over the concatenated input `[state, action]`.
#[derive(Clone, Copy, Debug)]
pub struct NetworkCritic<'a> {
    pub net: &'a DenseNetwork,
    pub state_dim: usize,
}

impl NetworkCritic<'_> {
    fn input(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        ensure_len("critic state", self.state_dim, state.len())?;
        ensure_len(
            "critic action",
            self.net.input_dim() - self.state_dim,
            action.len(),
        )?;
        let mut x = Vec::with_capacity(state.len() + action.len());
        x.extend_from_slice(state);
        x.extend_from_slice(action);
        Ok(x)
    }
}

impl ActionValue for NetworkCritic<'_> {
    fn q_value(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        Ok(self.net.forward(&self.input(state, action)?)?[0])
    }

    fn action_gradient(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        let trace = self.net.forward_trace(&self.input(state, action)?)?;
        let mut grad = self.net.backward_trace(&trace, &[1.0], None)?;
        Ok(grad.split_off(self.state_dim))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    Ddpg,
    Adapted,
    AdaptedAdviser,
}

impl UpdateMode {
    pub const ALL: [UpdateMode; 3] = [UpdateMode::Ddpg, UpdateMode::Adapted, UpdateMode::AdaptedAdviser];

    pub fn name(self) -> &'static str {
        match self {
            UpdateMode::Ddpg => "ddpg",
            UpdateMode::Adapted => "adapted",
            UpdateMode::AdaptedAdviser => "adapted_adviser",
        }
    }
}

impl fmt::Display for UpdateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UpdateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ddpg" => Ok(UpdateMode::Ddpg),
            "adapted" => Ok(UpdateMode::Adapted),
            "adapted_adviser" | "adapted_with_adviser" => Ok(UpdateMode::AdaptedAdviser),
            _ => Err(Error::UnknownName {
                kind: "mode",
                name: s.to_string(),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub gamma: f64,
    pub tau: f64,
    /// Policy updating rate of the two-fold update.
    pub beta: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            gamma: 0.99,
            tau: 0.005,
            beta: 0.01,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            batch_size: 64,
            hidden: vec![64, 64],
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive".into());
        }
        Ok(())
    }
}

/// `a_hat = pi(s) + beta * grad_a Q(s, pi(s))` for every state. The targets
/// are not clamped to the action range.
pub fn policy_targets<S: AsRef<[f64]>>(
    actor: &DenseNetwork,
    critic: &dyn ActionValue,
    states: &[S],
    beta: f64,
) -> Result<Vec<Vec<f64>>> {
    states
        .iter()
        .map(|s| {
            let s = s.as_ref();
            let mut a = actor.forward(s)?;
            let g = critic.action_gradient(s, &a)?;
            ensure_finite("critic action gradient", &g)?;
            ensure_len("critic action gradient", a.len(), g.len())?;
            for (ai, gi) in a.iter_mut().zip(&g) {
                *ai += beta * gi;
            }
            Ok(a)
        })
        .collect()
}

/// One optimizer step on `(1/n) sum ||target - pi(s)||^2`. Returns the loss
/// before the step.
pub fn actor_regress<S: AsRef<[f64]>, T: AsRef<[f64]>>(
    actor: &mut DenseNetwork,
    opt: &mut OptimizerState,
    states: &[S],
    targets: &[T],
) -> Result<f64> {
    ensure_len("regression targets", states.len(), targets.len())?;
    if states.is_empty() {
        return Err(Error::InvalidParameter("empty regression batch".into()));
    }
    let n = states.len() as f64;
    let mut grads = GradientSet::zeros_like(actor);
    let mut loss = 0.0;
    for (s, t) in states.iter().zip(targets) {
        let t = t.as_ref();
        ensure_len("regression target", actor.output_dim(), t.len())?;
        let trace = actor.forward_trace(s.as_ref())?;
        let diff: Vec<f64> = trace.output().iter().zip(t).map(|(p, y)| p - y).collect();
        loss += diff.iter().map(|d| d * d).sum::<f64>();
        let out_grad: Vec<f64> = diff.iter().map(|d| 2.0 * d / n).collect();
        actor.backward_trace(&trace, &out_grad, Some(&mut grads))?;
    }
    actor.apply_gradients(&grads, opt)?;
    Ok(loss / n)
}

/// One ascent step on `mean Q(s, pi(s))` through the chain rule. Returns the
/// mean Q before the step.
pub fn ddpg_actor_step<S: AsRef<[f64]>>(
    actor: &mut DenseNetwork,
    opt: &mut OptimizerState,
    critic: &dyn ActionValue,
    states: &[S],
) -> Result<f64> {
    if states.is_empty() {
        return Err(Error::InvalidParameter("empty actor batch".into()));
    }
    let n = states.len() as f64;
    let mut grads = GradientSet::zeros_like(actor);
    let mut mean_q = 0.0;
    for s in states {
        let s = s.as_ref();
        let trace = actor.forward_trace(s)?;
        let a = trace.output();
        mean_q += critic.q_value(s, a)? / n;
        let g = critic.action_gradient(s, a)?;
        ensure_finite("critic action gradient", &g)?;
        // loss = -mean Q, so dL/da = -g / n
        let out_grad: Vec<f64> = g.iter().map(|gi| -gi / n).collect();
        actor.backward_trace(&trace, &out_grad, Some(&mut grads))?;
    }
    actor.apply_gradients(&grads, opt)?;
    Ok(mean_q)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepMetrics {
    pub critic_loss: f64,
    /// Regression loss for the adapted modes, `-mean Q` for ddpg.
    pub actor_loss: f64,
    /// Targets replaced by the adviser (adapted_adviser only).
    pub adviser_replacements: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActorCriticAgent {
    pub actor: DenseNetwork,
    pub critic: DenseNetwork,
    pub target_actor: DenseNetwork,
    pub target_critic: DenseNetwork,
    pub actor_opt: OptimizerState,
    pub critic_opt: OptimizerState,
    hp: Hyperparams,
    state_dim: usize,
    action_low: Vec<f64>,
    action_high: Vec<f64>,
}

impl ActorCriticAgent {
    /// Actor `[state, hidden.., action]` with output squashed into the action
    /// box, critic `[state + action, hidden.., 1]` with identity output.
    pub fn new(spec: &EnvSpec, hp: Hyperparams, seed: u64) -> Result<Self> {
        hp.validate()?;
        let mut actor_sizes = vec![spec.state_dim];
        actor_sizes.extend(&hp.hidden);
        actor_sizes.push(spec.action_dim);
        let mut critic_sizes = vec![spec.state_dim + spec.action_dim];
        critic_sizes.extend(&hp.hidden);
        critic_sizes.push(1);

        let actor = DenseNetwork::new(
            &actor_sizes,
            derive_seed(seed, stream::ACTOR_INIT),
            OutputKind::Bounded {
                low: spec.action_low.clone(),
                high: spec.action_high.clone(),
            },
        )?;
        let critic = DenseNetwork::new(
            &critic_sizes,
            derive_seed(seed, stream::CRITIC_INIT),
            OutputKind::Identity,
        )?;
        Self::from_networks(actor, critic, hp)
    }

    /// Wraps existing networks; targets start as exact copies.
    pub fn from_networks(actor: DenseNetwork, critic: DenseNetwork, hp: Hyperparams) -> Result<Self> {
        hp.validate()?;
        let (action_low, action_high) = match actor.output_kind() {
            OutputKind::Bounded { low, high } => (low.clone(), high.clone()),
            OutputKind::Identity => (
                vec![f64::NEG_INFINITY; actor.output_dim()],
                vec![f64::INFINITY; actor.output_dim()],
            ),
        };
        let state_dim = actor.input_dim();
        ensure_len(
            "critic input",
            state_dim + actor.output_dim(),
            critic.input_dim(),
        )?;
        ensure_len("critic output", 1, critic.output_dim())?;
        Ok(ActorCriticAgent {
            actor_opt: OptimizerState::new(&actor, hp.actor_lr)?,
            critic_opt: OptimizerState::new(&critic, hp.critic_lr)?,
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            hp,
            state_dim,
            action_low,
            action_high,
        })
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn action_bounds(&self) -> (&[f64], &[f64]) {
        (&self.action_low, &self.action_high)
    }

    pub fn clamp_action(&self, action: &mut [f64]) {
        for ((a, lo), hi) in action.iter_mut().zip(&self.action_low).zip(&self.action_high) {
            *a = a.clamp(*lo, *hi);
        }
    }

    pub fn critic_view(&self) -> NetworkCritic<'_> {
        NetworkCritic {
            net: &self.critic,
            state_dim: self.state_dim,
        }
    }

    fn target_critic_view(&self) -> NetworkCritic<'_> {
        NetworkCritic {
            net: &self.target_critic,
            state_dim: self.state_dim,
        }
    }

    /// Deterministic policy output.
    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        ensure_len("agent state", self.state_dim, state.len())?;
        self.actor.forward(state)
    }

    pub fn q_value(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        self.critic_view().q_value(state, action)
    }

    /// `r` on terminal transitions, `r + gamma Q'(s', pi'(s'))` otherwise.
    /// The next state of a terminal transition is never read.
    pub fn td_target(&self, t: &Transition) -> Result<f64> {
        let y = if t.done {
            t.reward
        } else {
            let next_action = self.target_actor.forward(&t.next_state)?;
            let bootstrap = self.target_critic_view().q_value(&t.next_state, &next_action)?;
            t.reward + self.hp.gamma * bootstrap
        };
        if !y.is_finite() {
            return Err(Error::NonFinite("critic TD target".into()));
        }
        Ok(y)
    }

    /// One optimizer step on the mean squared TD error. Returns the loss
    /// before the step.
    pub fn critic_update(&mut self, batch: &[Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidParameter("empty critic batch".into()));
        }
        let targets = batch
            .iter()
            .map(|t| self.td_target(t))
            .collect::<Result<Vec<_>>>()?;
        let n = batch.len() as f64;
        let mut grads = GradientSet::zeros_like(&self.critic);
        let mut loss = 0.0;
        for (t, y) in batch.iter().zip(&targets) {
            let input = self.critic_view().input(&t.state, &t.action)?;
            let trace = self.critic.forward_trace(&input)?;
            let err = trace.output()[0] - y;
            loss += err * err;
            self.critic
                .backward_trace(&trace, &[2.0 * err / n], Some(&mut grads))?;
        }
        self.critic.apply_gradients(&grads, &mut self.critic_opt)?;
        Ok(loss / n)
    }

    pub fn policy_targets<S: AsRef<[f64]>>(&self, states: &[S]) -> Result<Vec<Vec<f64>>> {
        policy_targets(&self.actor, &self.critic_view(), states, self.hp.beta)
    }

    pub fn actor_regress<S: AsRef<[f64]>, T: AsRef<[f64]>>(
        &mut self,
        states: &[S],
        targets: &[T],
    ) -> Result<f64> {
        actor_regress(&mut self.actor, &mut self.actor_opt, states, targets)
    }

    pub fn ddpg_actor_update<S: AsRef<[f64]>>(&mut self, states: &[S]) -> Result<f64> {
        let critic = NetworkCritic {
            net: &self.critic,
            state_dim: self.state_dim,
        };
        ddpg_actor_step(&mut self.actor, &mut self.actor_opt, &critic, states)
    }

    pub fn update_targets(&mut self) -> Result<()> {
        self.target_critic.soft_update(&self.critic, self.hp.tau)?;
        self.target_actor.soft_update(&self.actor, self.hp.tau)
    }

    /// One full update: sample, critic step, mode-dependent actor step,
    /// soft target update.
    pub fn train_step<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        mode: UpdateMode,
        adviser: Option<&dyn Adviser>,
        rng: &mut R,
    ) -> Result<StepMetrics> {
        if mode == UpdateMode::AdaptedAdviser && adviser.is_none() {
            return Err(Error::InvalidParameter(
                "adapted_adviser mode requires an adviser".into(),
            ));
        }
        let batch = buffer.sample_batch(self.hp.batch_size, rng)?;
        self.train_on_batch(&batch, mode, adviser)
    }

    pub fn train_on_batch(
        &mut self,
        batch: &[Transition],
        mode: UpdateMode,
        adviser: Option<&dyn Adviser>,
    ) -> Result<StepMetrics> {
        let critic_loss = self.critic_update(batch)?;
        let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
        let mut replacements = 0;
        let actor_loss = match mode {
            UpdateMode::Ddpg => -self.ddpg_actor_update(&states)?,
            UpdateMode::Adapted => {
                let targets = self.policy_targets(&states)?;
                self.actor_regress(&states, &targets)?
            }
            UpdateMode::AdaptedAdviser => {
                let adviser = adviser.ok_or_else(|| {
                    Error::InvalidParameter("adapted_adviser mode requires an adviser".into())
                })?;
                let targets = self.policy_targets(&states)?;
                let clamped = Clamped {
                    inner: adviser,
                    low: &self.action_low,
                    high: &self.action_high,
                };
                let advised =
                    advise_policy_targets(&states, targets, &clamped, &self.critic_view())?;
                replacements = advised.replaced;
                self.actor_regress(&states, &advised.targets)?
            }
        };
        self.update_targets()?;
        Ok(StepMetrics {
            critic_loss,
            actor_loss,
            adviser_replacements: replacements,
        })
    }
}
