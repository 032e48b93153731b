//! Desk-scale continuous-control environments.
//!
//! All environments take actions in `[-1, 1]^|A|`; out-of-box actions are
//! clamped and counted. Integration is semi-implicit Euler. `done` marks a
//! failure (none of the built-ins can fail), `truncated` marks the time limit.

mod attack;
mod impedance;
mod pendulum;
mod point_mass;

pub use attack::{AttackConfig, AttackWrapper, ATTACK_AMPLITUDE};
pub use impedance::{
    impedance_apply_action, impedance_reward, impedance_target, ImpedanceParams, ImpedanceState,
    ImpedanceTrack, TrajectoryPhase,
};
pub use pendulum::{Pendulum, PendulumParams};
pub use point_mass::{PointMass, PointMassParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub episode_length: usize,
    /// Control period in seconds.
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub truncated: bool,
}

pub trait Env: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode; the initial state is a pure function of `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    fn step(&mut self, action: &[f64]) -> Result<StepResult>;

    /// Number of action components clamped into the box so far.
    fn clamped_actions(&self) -> u64;
}

/// Clamps into `[-1, 1]`, rejecting non-finite entries; returns the number clamped.
pub(crate) fn clamp_action(action: &[f64], dim: usize) -> Result<(Vec<f64>, u64)> {
    if action.len() != dim {
        return Err(Error::Config(format!(
            "action has {} entries, environment expects {dim}",
            action.len()
        )));
    }
    if action.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite(
            "action contains a non-finite value".into(),
        ));
    }
    let mut clamped = 0;
    let out = action
        .iter()
        .map(|&a| {
            if a.abs() > 1.0 {
                clamped += 1;
            }
            a.clamp(-1.0, 1.0)
        })
        .collect();
    Ok((out, clamped))
}

/// Environment selection as it appears in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub name: String,
    /// Overrides the environment's default episode length.
    #[serde(default)]
    pub episode_length: Option<usize>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            name: "point_mass".into(),
            episode_length: None,
        }
    }
}

pub const ENV_NAMES: [&str; 3] = ["point_mass", "pendulum", "impedance_track"];

pub fn make_env(config: &EnvConfig) -> Result<Box<dyn Env>> {
    let env: Box<dyn Env> = match config.name.as_str() {
        "point_mass" => {
            let mut p = PointMassParams::default();
            if let Some(n) = config.episode_length {
                p.episode_length = n;
            }
            Box::new(PointMass::new(p)?)
        }
        "pendulum" => {
            let mut p = PendulumParams::default();
            if let Some(n) = config.episode_length {
                p.episode_length = n;
            }
            Box::new(Pendulum::new(p)?)
        }
        "impedance_track" => {
            let mut p = ImpedanceParams::default();
            if let Some(n) = config.episode_length {
                p.episode_length = n;
            }
            Box::new(ImpedanceTrack::new(p)?)
        }
        other => {
            return Err(Error::Config(format!(
                "unknown environment `{other}` (known: {})",
                ENV_NAMES.join(", ")
            )))
        }
    };
    Ok(env)
}

pub(crate) fn check_common(episode_length: usize, dt: f64) -> Result<()> {
    if episode_length == 0 || !(dt > 0.0) {
        return Err(Error::Config(format!(
            "episode_length must be >= 1 and dt > 0 (got {episode_length}, {dt})"
        )));
    }
    Ok(())
}
