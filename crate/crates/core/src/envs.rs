//! Seedable Pendulum swing-up and continuous Mountain Car.
//!
//! Both follow the constants of the public Gym tasks (`Pendulum-v0`,
//! `MountainCarContinuous-v0`). The pure transition functions
//! [`pendulum_step`] and [`mountaincar_step`] are exposed separately from the
//! episodic wrappers so they can be tested and reused by advisers.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_len, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub name: &'static str,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub max_episode_steps: usize,
}

impl EnvSpec {
    pub fn clamp_action(&self, action: &mut [f64]) {
        for ((a, lo), hi) in action.iter_mut().zip(&self.action_low).zip(&self.action_high) {
            *a = a.clamp(*lo, *hi);
        }
    }

    pub fn contains_action(&self, action: &[f64]) -> bool {
        action.len() == self.action_dim
            && action
                .iter()
                .zip(&self.action_low)
                .zip(&self.action_high)
                .all(|((a, lo), hi)| *lo <= *a && *a <= *hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    /// The task reached a terminal state.
    pub done: bool,
    /// The episode hit its time limit.
    pub truncated: bool,
}

/// Episodic environment contract used by the training harness.
pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
    fn observation(&self) -> Vec<f64>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Pendulum,
    MountainCar,
}

impl EnvKind {
    pub const ALL: [EnvKind; 2] = [EnvKind::Pendulum, EnvKind::MountainCar];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Pendulum => "pendulum",
            EnvKind::MountainCar => "mountaincar",
        }
    }

    pub fn spec(self) -> EnvSpec {
        match self {
            EnvKind::Pendulum => Pendulum::spec_static(),
            EnvKind::MountainCar => MountainCar::spec_static(),
        }
    }

    pub fn make(self) -> Box<dyn Environment> {
        match self {
            EnvKind::Pendulum => Box::new(Pendulum::new()),
            EnvKind::MountainCar => Box::new(MountainCar::new()),
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pendulum" | "pendulum-v0" => Ok(EnvKind::Pendulum),
            "mountaincar" | "mountain_car" | "mountaincarcontinuous" | "mountaincarcontinuous-v0" => {
                Ok(EnvKind::MountainCar)
            }
            _ => Err(Error::UnknownName {
                kind: "environment",
                name: s.to_string(),
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// Pendulum
// ---------------------------------------------------------------------------

pub mod pendulum {
    pub const GRAVITY: f64 = 10.0;
    pub const MASS: f64 = 1.0;
    pub const LENGTH: f64 = 1.0;
    pub const DT: f64 = 0.05;
    pub const MAX_SPEED: f64 = 8.0;
    pub const MAX_TORQUE: f64 = 2.0;
    pub const MAX_STEPS: usize = 200;
}

/// Maps an angle into `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

/// `theta = 0` is upright.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PendulumState {
    pub theta: f64,
    pub theta_dot: f64,
}

impl PendulumState {
    pub fn from_observation(obs: &[f64]) -> Self {
        PendulumState {
            theta: obs[1].atan2(obs[0]),
            theta_dot: obs[2],
        }
    }

    pub fn observation(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }

    /// Mechanical energy per unit `m l^2 / 3`: `theta_dot^2 / 2 + (3g / 2l) cos(theta)`.
    /// Upright at rest equals `3g / 2l`.
    pub fn energy(&self) -> f64 {
        use pendulum::*;
        0.5 * self.theta_dot * self.theta_dot + 1.5 * GRAVITY / LENGTH * self.theta.cos()
    }
}

/// One semi-implicit Euler step. Returns the next state and the reward of
/// the current state/action pair.
pub fn pendulum_step(state: &PendulumState, action: f64) -> Result<(PendulumState, f64)> {
    use pendulum::*;
    ensure_finite("pendulum state", &[state.theta, state.theta_dot])?;
    ensure_finite("pendulum action", &[action])?;
    let u = action.clamp(-MAX_TORQUE, MAX_TORQUE);
    let th = wrap_angle(state.theta);
    let cost = th * th + 0.1 * state.theta_dot * state.theta_dot + 0.001 * u * u;

    let accel = 3.0 * GRAVITY / (2.0 * LENGTH) * th.sin() + 3.0 / (MASS * LENGTH * LENGTH) * u;
    let new_theta_dot = state.theta_dot + accel * DT;
    let new_theta = th + new_theta_dot * DT;
    Ok((
        PendulumState {
            theta: wrap_angle(new_theta),
            theta_dot: new_theta_dot.clamp(-MAX_SPEED, MAX_SPEED),
        },
        -cost,
    ))
}

#[derive(Clone, Debug)]
pub struct Pendulum {
    spec: EnvSpec,
    pub state: PendulumState,
    steps: usize,
}

impl Pendulum {
    fn spec_static() -> EnvSpec {
        EnvSpec {
            name: "pendulum",
            state_dim: 3,
            action_dim: 1,
            action_low: vec![-pendulum::MAX_TORQUE],
            action_high: vec![pendulum::MAX_TORQUE],
            max_episode_steps: pendulum::MAX_STEPS,
        }
    }

    pub fn new() -> Self {
        Pendulum {
            spec: Self::spec_static(),
            state: PendulumState {
                theta: PI,
                theta_dot: 0.0,
            },
            steps: 0,
        }
    }

    /// Starts an episode from an explicit state.
    pub fn reset_to(&mut self, state: PendulumState) -> Vec<f64> {
        self.state = state;
        self.steps = 0;
        self.observation()
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = rng.random_range(-PI..PI);
        let theta_dot = rng.random_range(-1.0..1.0);
        self.reset_to(PendulumState { theta, theta_dot })
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        ensure_len("pendulum action", 1, action.len())?;
        let (next, reward) = pendulum_step(&self.state, action[0])?;
        self.state = next;
        self.steps += 1;
        Ok(StepResult {
            next_state: self.observation(),
            reward,
            done: false,
            truncated: self.steps >= self.spec.max_episode_steps,
        })
    }

    fn observation(&self) -> Vec<f64> {
        self.state.observation()
    }
}

// ---------------------------------------------------------------------------
// Mountain Car
// ---------------------------------------------------------------------------

pub mod mountaincar {
    pub const MIN_POSITION: f64 = -1.2;
    pub const MAX_POSITION: f64 = 0.6;
    pub const MAX_SPEED: f64 = 0.07;
    pub const GOAL_POSITION: f64 = 0.45;
    pub const POWER: f64 = 0.0015;
    pub const MAX_STEPS: usize = 999;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MountainCarState {
    pub position: f64,
    pub velocity: f64,
}

impl MountainCarState {
    pub fn observation(&self) -> Vec<f64> {
        vec![self.position, self.velocity]
    }
}

/// Returns `(next_state, reward, reached_goal)`.
pub fn mountaincar_step(
    state: &MountainCarState,
    action: f64,
) -> Result<(MountainCarState, f64, bool)> {
    use mountaincar::*;
    ensure_finite("mountain car state", &[state.position, state.velocity])?;
    ensure_finite("mountain car action", &[action])?;
    let force = action.clamp(-1.0, 1.0);
    let mut velocity = state.velocity + force * POWER - 0.0025 * (3.0 * state.position).cos();
    velocity = velocity.clamp(-MAX_SPEED, MAX_SPEED);
    let mut position = (state.position + velocity).clamp(MIN_POSITION, MAX_POSITION);
    if position <= MIN_POSITION && velocity < 0.0 {
        position = MIN_POSITION;
        velocity = 0.0;
    }
    let done = position >= GOAL_POSITION;
    let mut reward = -0.1 * force * force;
    if done {
        reward += 100.0;
    }
    Ok((MountainCarState { position, velocity }, reward, done))
}

#[derive(Clone, Debug)]
pub struct MountainCar {
    spec: EnvSpec,
    pub state: MountainCarState,
    steps: usize,
}

impl MountainCar {
    fn spec_static() -> EnvSpec {
        EnvSpec {
            name: "mountaincar",
            state_dim: 2,
            action_dim: 1,
            action_low: vec![-1.0],
            action_high: vec![1.0],
            max_episode_steps: mountaincar::MAX_STEPS,
        }
    }

    pub fn new() -> Self {
        MountainCar {
            spec: Self::spec_static(),
            state: MountainCarState {
                position: -0.5,
                velocity: 0.0,
            },
            steps: 0,
        }
    }

    pub fn reset_to(&mut self, state: MountainCarState) -> Vec<f64> {
        self.state = state;
        self.steps = 0;
        self.observation()
    }
}

impl Default for MountainCar {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for MountainCar {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let position = rng.random_range(-0.6..-0.4);
        self.reset_to(MountainCarState {
            position,
            velocity: 0.0,
        })
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        ensure_len("mountain car action", 1, action.len())?;
        let (next, reward, done) = mountaincar_step(&self.state, action[0])?;
        self.state = next;
        self.steps += 1;
        Ok(StepResult {
            next_state: self.observation(),
            reward,
            done,
            truncated: !done && self.steps >= self.spec.max_episode_steps,
        })
    }

    fn observation(&self) -> Vec<f64> {
        self.state.observation()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_deterministic() {
        for kind in EnvKind::ALL {
            let mut a = kind.make();
            let mut b = kind.make();
            assert_eq!(a.reset(42), b.reset(42));
            assert_ne!(a.reset(1), b.reset(2));
        }
    }

    #[test]
    fn mountaincar_reset_has_zero_velocity() {
        let mut env = MountainCar::new();
        for seed in 0..100 {
            let obs = env.reset(seed);
            assert_eq!(obs[1], 0.0);
            assert!((-0.6..-0.4).contains(&obs[0]));
        }
    }

    #[test]
    fn pendulum_reset_observation_on_unit_circle() {
        let mut env = Pendulum::new();
        for seed in 0..100 {
            let obs = env.reset(seed);
            assert!((obs[0].hypot(obs[1]) - 1.0).abs() < 1e-12);
            assert!(obs[2].abs() <= 1.0);
        }
    }

    #[test]
    fn pendulum_upright_equilibrium() {
        let s = PendulumState {
            theta: 0.0,
            theta_dot: 0.0,
        };
        let (next, r) = pendulum_step(&s, 0.0).unwrap();
        assert_eq!(next, s);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn pendulum_hanging_reward() {
        let s = PendulumState {
            theta: PI,
            theta_dot: 0.0,
        };
        let (next, r) = pendulum_step(&s, 0.0).unwrap();
        assert!(next.theta_dot.abs() < 1e-12);
        assert!((r + PI * PI).abs() < 1e-12);
        assert!((r + 9.8696).abs() < 1e-4);
    }

    #[test]
    fn pendulum_torque_saturates() {
        let s = PendulumState {
            theta: 1.0,
            theta_dot: -0.5,
        };
        let a = pendulum_step(&s, 5.0).unwrap();
        let b = pendulum_step(&s, 2.0).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn pendulum_truncates_at_200() {
        let mut env = Pendulum::new();
        env.reset(0);
        for i in 1..=200 {
            let r = env.step(&[0.0]).unwrap();
            assert!(!r.done);
            assert_eq!(r.truncated, i == 200);
        }
    }

    #[test]
    fn non_finite_inputs_rejected() {
        let s = PendulumState {
            theta: 0.0,
            theta_dot: 0.0,
        };
        assert!(pendulum_step(&s, f64::NAN).is_err());
        let s = PendulumState {
            theta: f64::INFINITY,
            theta_dot: 0.0,
        };
        assert!(pendulum_step(&s, 0.0).is_err());
        let m = MountainCarState {
            position: -0.5,
            velocity: f64::NAN,
        };
        assert!(mountaincar_step(&m, 0.0).is_err());
    }

    #[test]
    fn mountaincar_passive_update() {
        let s = MountainCarState {
            position: -0.5,
            velocity: 0.0,
        };
        let (next, r, done) = mountaincar_step(&s, 0.0).unwrap();
        let expected = -0.0025 * 1.5f64.cos();
        assert!((next.velocity - expected).abs() < 1e-15);
        assert!((next.velocity + 0.000177).abs() < 1e-6);
        assert_eq!(r, 0.0);
        assert!(!done);
    }

    #[test]
    fn mountaincar_goal_gives_bonus() {
        let s = MountainCarState {
            position: 0.44,
            velocity: 0.05,
        };
        let (next, r, done) = mountaincar_step(&s, 1.0).unwrap();
        assert!(next.position >= 0.45);
        assert!(done);
        assert!((r - 99.9).abs() < 1e-12);
    }

    #[test]
    fn mountaincar_passive_never_reaches_goal() {
        let mut env = MountainCar::new();
        env.reset_to(MountainCarState {
            position: -PI / 6.0,
            velocity: 0.0,
        });
        for i in 1..=999 {
            let r = env.step(&[0.0]).unwrap();
            assert!(!r.done);
            assert_eq!(r.truncated, i == 999);
        }
    }

    #[test]
    fn mountaincar_left_wall_stops_car() {
        let s = MountainCarState {
            position: -1.19,
            velocity: -0.07,
        };
        let (next, _, _) = mountaincar_step(&s, -1.0).unwrap();
        assert_eq!(next.position, -1.2);
        assert_eq!(next.velocity, 0.0);
    }

    #[test]
    fn env_names_parse() {
        assert_eq!("pendulum".parse::<EnvKind>().unwrap(), EnvKind::Pendulum);
        assert_eq!("MountainCar".parse::<EnvKind>().unwrap(), EnvKind::MountainCar);
        assert!("lunarlander".parse::<EnvKind>().is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }
}
