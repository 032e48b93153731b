//! Adam with bias correction.

use super::mlp::{GradBuffer, MlpParams};
use crate::checkpoint::Container;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub decay_1: f64,
    pub decay_2: f64,
    pub epsilon_opt: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            decay_1: 0.9,
            decay_2: 0.999,
            epsilon_opt: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.decay_1)
            && self.decay_1 > 0.0
            && (0.0..1.0).contains(&self.decay_2)
            && self.decay_2 > 0.0
            && self.epsilon_opt > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid optimizer settings {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step_count: u64,
    pub first_moment: GradBuffer,
    pub second_moment: GradBuffer,
    pub config: AdamConfig,
    /// Number of tensors whose update was skipped because of a non-finite gradient.
    pub skipped_tensors: u64,
}

impl OptimizerState {
    pub fn new(params: &MlpParams, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            step_count: 0,
            first_moment: params.grad_buffer(),
            second_moment: params.grad_buffer(),
            config,
            skipped_tensors: 0,
        })
    }

    pub fn step(&mut self, params: &mut MlpParams, grads: &GradBuffer) -> Result<()> {
        if !params.same_shape(&grads.layers) || !params.same_shape(&self.first_moment.layers) {
            return Err(Error::Config(
                "optimizer: parameter/gradient shape mismatch".into(),
            ));
        }
        self.step_count += 1;
        let AdamConfig {
            learning_rate: lr,
            decay_1: b1,
            decay_2: b2,
            epsilon_opt: eps,
        } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (li, layer) in params.layers.iter_mut().enumerate() {
            let g_layer = grads.layers[li].tensors();
            let m_layer = self.first_moment.layers[li].tensors_mut();
            let v_layer = self.second_moment.layers[li].tensors_mut();
            for (((p, g), m), v) in layer
                .tensors_mut()
                .into_iter()
                .zip(g_layer)
                .zip(m_layer)
                .zip(v_layer)
            {
                if !g.iter().all(|x| x.is_finite()) {
                    self.skipped_tensors += 1;
                    continue;
                }
                for i in 0..p.len() {
                    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }

    pub fn export(&self, prefix: &str, out: &mut Container) {
        out.insert(
            format!("{prefix}.meta"),
            vec![
                self.step_count as f64,
                self.config.learning_rate,
                self.config.decay_1,
                self.config.decay_2,
                self.config.epsilon_opt,
                self.skipped_tensors as f64,
            ],
        );
        for (name, buf) in [("m", &self.first_moment), ("v", &self.second_moment)] {
            for (i, l) in buf.layers.iter().enumerate() {
                out.insert(format!("{prefix}.{name}.{i}.weight"), l.weight.clone());
                out.insert(format!("{prefix}.{name}.{i}.bias"), l.bias.clone());
                out.insert(format!("{prefix}.{name}.{i}.gain"), l.gain.clone());
            }
        }
    }

    pub fn import(prefix: &str, src: &Container, params: &MlpParams) -> Result<Self> {
        let meta = src.get_len(&format!("{prefix}.meta"), 6)?;
        let config = AdamConfig {
            learning_rate: meta[1],
            decay_1: meta[2],
            decay_2: meta[3],
            epsilon_opt: meta[4],
        };
        let mut state = Self::new(params, config)?;
        state.step_count = meta[0] as u64;
        state.skipped_tensors = meta[5] as u64;
        for (name, buf) in [
            ("m", &mut state.first_moment),
            ("v", &mut state.second_moment),
        ] {
            for (i, l) in buf.layers.iter_mut().enumerate() {
                l.weight = src
                    .get_len(&format!("{prefix}.{name}.{i}.weight"), l.weight.len())?
                    .to_vec();
                l.bias = src
                    .get_len(&format!("{prefix}.{name}.{i}.bias"), l.bias.len())?
                    .to_vec();
                l.gain = src
                    .get_len(&format!("{prefix}.{name}.{i}.gain"), l.gain.len())?
                    .to_vec();
            }
        }
        Ok(state)
    }
}
