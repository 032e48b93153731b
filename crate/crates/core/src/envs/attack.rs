use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Env, EnvSpec, StepResult};
use crate::error::{Error, Result};
use crate::policy::squash;

pub const ATTACK_AMPLITUDE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub probability: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_amplitude() -> f64 {
    ATTACK_AMPLITUDE
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self::none()
    }
}

impl AttackConfig {
    pub fn none() -> Self {
        Self::with_probability(0.0)
    }

    pub fn with_probability(probability: f64) -> Self {
        Self {
            probability,
            amplitude: ATTACK_AMPLITUDE,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::Config(format!(
                "attack probability {} outside [0, 1]",
                self.probability
            )));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::Config("attack amplitude must be positive".into()));
        }
        Ok(())
    }
}

/// Replaces the whole action vector, with probability `p` per step, by
/// `amplitude * squash(z)` with `z` standard normal per component.
pub struct AttackWrapper {
    inner: Box<dyn Env>,
    config: AttackConfig,
    rng: ChaCha8Rng,
    attacks: u64,
    last_applied: Vec<f64>,
}

impl AttackWrapper {
    pub fn new(inner: Box<dyn Env>, config: AttackConfig) -> Result<Self> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        Ok(Self {
            inner,
            config,
            rng,
            attacks: 0,
            last_applied: Vec::new(),
        })
    }

    pub fn config(&self) -> &AttackConfig {
        &self.config
    }

    /// Attacks since construction.
    pub fn attack_count(&self) -> u64 {
        self.attacks
    }

    /// The action actually sent to the wrapped environment on the last step.
    pub fn last_applied_action(&self) -> &[f64] {
        &self.last_applied
    }

    pub fn inner(&self) -> &dyn Env {
        self.inner.as_ref()
    }

    pub fn attack_step(&mut self, action: &[f64]) -> Result<(StepResult, bool)> {
        let attacked =
            self.config.probability > 0.0 && self.rng.gen::<f64>() < self.config.probability;
        let applied: Vec<f64> = if attacked {
            self.attacks += 1;
            (0..action.len())
                .map(|_| {
                    let z: f64 = self.rng.sample(StandardNormal);
                    self.config.amplitude * squash(z)
                })
                .collect()
        } else {
            action.to_vec()
        };
        let result = self.inner.step(&applied)?;
        self.last_applied = applied;
        Ok((result, attacked))
    }
}

impl Env for AttackWrapper {
    fn spec(&self) -> &EnvSpec {
        self.inner.spec()
    }

    /// The attack stream is reseeded from `(rng_seed, seed)`, so an episode is
    /// reproducible on its own.
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(crate::seed::derive(self.config.rng_seed, seed));
        self.inner.reset(seed)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        self.attack_step(action).map(|(r, _)| r)
    }

    fn clamped_actions(&self) -> u64 {
        self.inner.clamped_actions()
    }
}
