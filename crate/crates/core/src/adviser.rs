//! Domain-knowledge advisers and the two ways they feed the learner.
//!
//! During data collection, [`select_action`] executes the adviser's action
//! with probability `epsilon` from [`mix_probability`], where the actor's
//! critic score is discounted by the confidence `C = 1 - exp(-lambda N)`.
//! During policy updates, [`advise_policy_targets`] swaps a regression target
//! for the adviser's action whenever the critic scores the adviser strictly
//! higher.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{ActionValue, ActorCriticAgent};
use crate::envs::{pendulum, wrap_angle, EnvKind, PendulumState};
use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::exploration::OuProcess;

/// A state → action mapping encoding prior knowledge about a task.
pub trait Adviser: Send + Sync {
    fn name(&self) -> &str;
    fn advise(&self, state: &[f64]) -> Vec<f64>;
}

impl<F> Adviser for F
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn name(&self) -> &str {
        "closure"
    }

    fn advise(&self, state: &[f64]) -> Vec<f64> {
        self(state)
    }
}

/// Clamps another adviser's output into an action box.
pub struct Clamped<'a> {
    pub inner: &'a dyn Adviser,
    pub low: &'a [f64],
    pub high: &'a [f64],
}

impl Adviser for Clamped<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn advise(&self, state: &[f64]) -> Vec<f64> {
        let mut a = self.inner.advise(state);
        for ((ai, lo), hi) in a.iter_mut().zip(self.low).zip(self.high) {
            *ai = ai.clamp(*lo, *hi);
        }
        a
    }
}

/// Energy-shaping swing-up with a PD catch near the top.
///
/// Outside the catch region the controller pumps at full torque in the
/// direction of motion while the energy is below the upright level, and
/// bleeds off surplus energy proportionally once above it.
#[derive(Clone, Debug, PartialEq)]
pub struct PendulumEnergyAdviser {
    pub catch_angle: f64,
    pub kp: f64,
    pub kd: f64,
    pub brake_gain: f64,
}

impl Default for PendulumEnergyAdviser {
    fn default() -> Self {
        PendulumEnergyAdviser {
            catch_angle: 0.3,
            kp: 16.0,
            kd: 2.0,
            brake_gain: 1.0,
        }
    }
}

fn sign_or_positive(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

impl PendulumEnergyAdviser {
    pub fn torque(&self, state: &PendulumState) -> f64 {
        use pendulum::{GRAVITY, LENGTH, MAX_TORQUE};
        let theta = wrap_angle(state.theta);
        let omega = state.theta_dot;
        if theta.abs() < self.catch_angle {
            return (-self.kp * theta - self.kd * omega).clamp(-MAX_TORQUE, MAX_TORQUE);
        }
        let upright = 1.5 * GRAVITY / LENGTH;
        let surplus = state.energy() - upright;
        if surplus < 0.0 {
            // dE/dt = 3 u theta_dot, so pushing along theta_dot adds energy
            MAX_TORQUE * sign_or_positive(omega)
        } else {
            (-self.brake_gain * surplus * omega).clamp(-MAX_TORQUE, MAX_TORQUE)
        }
    }
}

impl Adviser for PendulumEnergyAdviser {
    fn name(&self) -> &str {
        "pendulum_energy"
    }

    fn advise(&self, state: &[f64]) -> Vec<f64> {
        vec![self.torque(&PendulumState::from_observation(state))]
    }
}

/// Push in the direction of travel: `a = sign(velocity)`, `+1` at rest.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MountainCarBangBang;

impl Adviser for MountainCarBangBang {
    fn name(&self) -> &str {
        "mountaincar_bangbang"
    }

    fn advise(&self, state: &[f64]) -> Vec<f64> {
        vec![sign_or_positive(state[1])]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdviserKind {
    PendulumEnergy,
    MountainCarBangBang,
}

impl AdviserKind {
    pub fn name(self) -> &'static str {
        match self {
            AdviserKind::PendulumEnergy => "pendulum_energy",
            AdviserKind::MountainCarBangBang => "mountaincar_bangbang",
        }
    }

    pub fn env(self) -> EnvKind {
        match self {
            AdviserKind::PendulumEnergy => EnvKind::Pendulum,
            AdviserKind::MountainCarBangBang => EnvKind::MountainCar,
        }
    }

    pub fn for_env(env: EnvKind) -> Self {
        match env {
            EnvKind::Pendulum => AdviserKind::PendulumEnergy,
            EnvKind::MountainCar => AdviserKind::MountainCarBangBang,
        }
    }

    pub fn build(self) -> Box<dyn Adviser> {
        match self {
            AdviserKind::PendulumEnergy => Box::new(PendulumEnergyAdviser::default()),
            AdviserKind::MountainCarBangBang => Box::new(MountainCarBangBang),
        }
    }

    /// Parses an adviser name; `"none"` yields `None`.
    pub fn parse_optional(name: &str) -> Result<Option<Self>> {
        if name.eq_ignore_ascii_case("none") {
            Ok(None)
        } else {
            name.parse().map(Some)
        }
    }
}

impl fmt::Display for AdviserKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdviserKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "pendulum_energy" | "pendulum" => Ok(AdviserKind::PendulumEnergy),
            "mountaincar_bangbang" | "mountaincar" => Ok(AdviserKind::MountainCarBangBang),
            _ => Err(Error::UnknownName {
                kind: "adviser",
                name: s.to_string(),
            }),
        }
    }
}

/// `C = 1 - exp(-lambda N)`.
pub fn confidence(episodes: i64, lambda: f64) -> Result<f64> {
    if episodes < 0 {
        return Err(Error::InvalidParameter(format!(
            "episode count must be non-negative, got {episodes}"
        )));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "decay constant must be positive, got {lambda}"
        )));
    }
    Ok(-(-lambda * episodes as f64).exp_m1())
}

/// Which way the critic scores enter the softmax.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonRule {
    /// `exp(-q_adv/T) / (exp(-q_adv/T) + exp(-C q_act/T))`.
    #[default]
    Verbatim,
    /// `exp(q_adv/T) / (exp(q_adv/T) + exp(C q_act/T))`: a higher adviser
    /// score raises the adviser's probability.
    SignFlipped,
}

impl FromStr for EpsilonRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "verbatim" => Ok(EpsilonRule::Verbatim),
            "sign_flipped" | "flipped" => Ok(EpsilonRule::SignFlipped),
            _ => Err(Error::UnknownName {
                kind: "epsilon rule",
                name: s.to_string(),
            }),
        }
    }
}

/// Probability of executing the adviser's action.
pub fn mix_probability(q_adv: f64, q_act: f64, confidence: f64, temperature: f64) -> Result<f64> {
    mix_probability_with(EpsilonRule::Verbatim, q_adv, q_act, confidence, temperature)
}

pub fn mix_probability_with(
    rule: EpsilonRule,
    q_adv: f64,
    q_act: f64,
    confidence: f64,
    temperature: f64,
) -> Result<f64> {
    ensure_finite("mixing inputs", &[q_adv, q_act, confidence, temperature])?;
    if !(temperature > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if !(0.0..=1.0).contains(&confidence) {
        return Err(Error::InvalidParameter(format!(
            "confidence must lie in [0, 1], got {confidence}"
        )));
    }
    let sign = match rule {
        EpsilonRule::Verbatim => -1.0,
        EpsilonRule::SignFlipped => 1.0,
    };
    let x_adv = sign * q_adv / temperature;
    let x_act = sign * confidence * q_act / temperature;
    // log-sum-exp normalization
    let m = x_adv.max(x_act);
    let e_adv = (x_adv - m).exp();
    let e_act = (x_act - m).exp();
    Ok(e_adv / (e_adv + e_act))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingConfig {
    /// Confidence decay constant, per episode.
    pub lambda: f64,
    pub temperature: f64,
    pub rule: EpsilonRule,
}

impl Default for MixingConfig {
    fn default() -> Self {
        MixingConfig {
            lambda: 0.005,
            temperature: 1.0,
            rule: EpsilonRule::Verbatim,
        }
    }
}

impl MixingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Episode counter `N`. During the `k`-th episode (0-based) `N = k`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MixerState {
    started: u64,
}

impl MixerState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers the start of an episode and returns `N` for it.
    pub fn begin_episode(&mut self) -> u64 {
        self.started += 1;
        self.episodes_elapsed()
    }

    pub fn episodes_elapsed(&self) -> u64 {
        self.started.saturating_sub(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    /// Executed action: chosen suggestion plus noise, clamped to bounds.
    pub action: Vec<f64>,
    pub used_adviser: bool,
    pub epsilon: f64,
}

/// Bernoulli choice between two suggestions followed by noise and clamping.
pub fn choose_action<R: Rng + ?Sized>(
    epsilon: f64,
    adviser_action: &[f64],
    actor_action: &[f64],
    noise: &mut OuProcess,
    bounds: (&[f64], &[f64]),
    rng: &mut R,
) -> Selection {
    let used_adviser = rng.random::<f64>() < epsilon;
    let base = if used_adviser {
        adviser_action
    } else {
        actor_action
    };
    let n = noise.sample(rng);
    let action = base
        .iter()
        .zip(&n)
        .zip(bounds.0.iter().zip(bounds.1))
        .map(|((a, e), (lo, hi))| (a + e).clamp(*lo, *hi))
        .collect();
    Selection {
        action,
        used_adviser,
        epsilon,
    }
}

/// Data collection with an adviser: score both suggestions with the online
/// critic, mix, add exploration noise, clamp.
#[allow(clippy::too_many_arguments)]
pub fn select_action<R: Rng + ?Sized>(
    state: &[f64],
    agent: &ActorCriticAgent,
    adviser: &dyn Adviser,
    cfg: &MixingConfig,
    mixer: &MixerState,
    noise: &mut OuProcess,
    rng: &mut R,
) -> Result<Selection> {
    let (low, high) = agent.action_bounds();
    let adviser_action = Clamped {
        inner: adviser,
        low,
        high,
    }
    .advise(state);
    ensure_len("adviser action", agent.action_dim(), adviser_action.len())?;
    let actor_action = agent.act(state)?;
    let c = confidence(mixer.episodes_elapsed() as i64, cfg.lambda)?;
    let q_adv = agent.q_value(state, &adviser_action)?;
    let q_act = agent.q_value(state, &actor_action)?;
    let epsilon = mix_probability_with(cfg.rule, q_adv, q_act, c, cfg.temperature)?;
    Ok(choose_action(
        epsilon,
        &adviser_action,
        &actor_action,
        noise,
        (low, high),
        rng,
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdvisedTargets {
    pub targets: Vec<Vec<f64>>,
    pub replaced: usize,
}

/// Replaces `targets[i]` by the adviser's action exactly when
/// `Q(s_i, adviser(s_i)) > Q(s_i, targets[i])`; ties keep the target.
pub fn advise_policy_targets<S: AsRef<[f64]>>(
    states: &[S],
    mut targets: Vec<Vec<f64>>,
    adviser: &dyn Adviser,
    critic: &dyn ActionValue,
) -> Result<AdvisedTargets> {
    ensure_len("adviser targets", states.len(), targets.len())?;
    let mut replaced = 0;
    for (s, target) in states.iter().zip(targets.iter_mut()) {
        let s = s.as_ref();
        let suggestion = adviser.advise(s);
        ensure_len("adviser action", target.len(), suggestion.len())?;
        if critic.q_value(s, &suggestion)? > critic.q_value(s, target)? {
            *target = suggestion;
            replaced += 1;
        }
    }
    Ok(AdvisedTargets { targets, replaced })
}
