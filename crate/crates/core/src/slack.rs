//! State-dependent slack variable for the entropy lower bound.
//!
//! The inequality `H(pi(.|s)) >= H*` is rewritten as the equality
//! `H(pi(.|s)) = H* + Delta(s)` with `Delta(s) in [0, Delta_bar]`. A network
//! emits a raw value `d(s)`, mapped by `Delta = Delta_bar * squareplus_sigmoid(d)`.
//!
//! `Delta` is trained with a switching, epsilon-insensitive loss on the
//! residual `e = ln pi(a|s) + H* + Delta(s)`:
//!
//! * `|e| > eps`: drive `|e|` down (satisfy the equality);
//! * `|e| <= eps`: shrink `alpha * Delta` (probe the lower bound).
//!
//! The mirror form applies the gradient taken with respect to `Delta`
//! directly to `d`, sidestepping the flat tails of the sigmoid. With a
//! stationary `ln pi` the dynamics settle at `e = -eps`.

use crate::error::{Error, Result};
use crate::nn::{squareplus_sigmoid, AdamConfig, GradBuffer, MlpParams, OptimizerState, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSpaceKind {
    Continuous,
    Discrete,
}

/// Maximal slack: entropy of the uniform policy minus the lower bound.
/// `|A| ln 2 - H*` on the box `[-1, 1]^|A|`, `ln |A| - H*` for `|A|` discrete actions.
pub fn delta_upper_bound(kind: ActionSpaceKind, size: usize, h_star: f64) -> Result<f64> {
    if size == 0 {
        return Err(Error::Config("action space size must be at least 1".into()));
    }
    let max_entropy = match kind {
        ActionSpaceKind::Continuous => size as f64 * std::f64::consts::LN_2,
        ActionSpaceKind::Discrete => (size as f64).ln(),
    };
    let bound = max_entropy - h_star;
    if bound < 0.0 || !bound.is_finite() {
        return Err(Error::Config(format!(
            "entropy lower bound {h_star} exceeds the maximal entropy {max_entropy}; \
             it must leave a non-negative slack range"
        )));
    }
    Ok(bound)
}

#[inline]
pub fn map_to_delta(d: f64, delta_bar: f64) -> f64 {
    delta_bar * squareplus_sigmoid(d)
}

#[inline]
pub fn constraint_residual(log_pi: f64, h_star: f64, delta: f64) -> f64 {
    log_pi + h_star + delta
}

/// Which half of the switching loss is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlackBranch {
    /// `|e| > eps`: equality is violated.
    Equality,
    /// `|e| <= eps`: equality holds, shrink the slack.
    Shrink,
}

#[inline]
pub fn branch(residual: f64, epsilon: f64) -> SlackBranch {
    if residual.abs() > epsilon {
        SlackBranch::Equality
    } else {
        SlackBranch::Shrink
    }
}

/// Switching loss in terms of `Delta`: `|e|` or `alpha * Delta`.
pub fn slack_loss_direct(log_pi: f64, h_star: f64, delta: f64, alpha: f64, epsilon: f64) -> f64 {
    let e = constraint_residual(log_pi, h_star, delta);
    match branch(e, epsilon) {
        SlackBranch::Equality => e.abs(),
        SlackBranch::Shrink => alpha * delta,
    }
}

/// Mirror-descent surrogate: `sign(e) * d` or `alpha * d`.
///
/// Returns `(loss, dloss/dd)`; `log_pi` and `alpha` are constants here.
pub fn slack_loss_mirror(
    log_pi: f64,
    h_star: f64,
    delta: f64,
    alpha: f64,
    epsilon: f64,
    d: f64,
) -> (f64, f64) {
    let e = constraint_residual(log_pi, h_star, delta);
    let g = match branch(e, epsilon) {
        SlackBranch::Equality => e.signum(),
        SlackBranch::Shrink => alpha,
    };
    (g * d, g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlackConfig {
    pub action_space_kind: ActionSpaceKind,
    pub action_dim_or_count: usize,
    pub h_star: f64,
    pub epsilon: f64,
    pub delta_bar: f64,
}

impl SlackConfig {
    /// `epsilon` defaults to `0.1 |A|`.
    pub fn new(
        kind: ActionSpaceKind,
        size: usize,
        h_star: f64,
        epsilon: Option<f64>,
    ) -> Result<Self> {
        let delta_bar = delta_upper_bound(kind, size, h_star)?;
        let epsilon = epsilon.unwrap_or(0.1 * size as f64);
        if !(epsilon >= 0.0) {
            return Err(Error::Config(format!(
                "slack epsilon must be >= 0, got {epsilon}"
            )));
        }
        Ok(Self {
            action_space_kind: kind,
            action_dim_or_count: size,
            h_star,
            epsilon,
            delta_bar,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SlackUpdateStats {
    pub mean_delta: f64,
    pub mean_residual: f64,
    /// Fraction of samples in the equality branch.
    pub equality_fraction: f64,
}

/// State -> raw slack output `d`, with its optimizer.
#[derive(Debug, Clone)]
pub struct SlackNet {
    pub params: MlpParams,
    pub optimizer: OptimizerState,
    tape: Tape,
}

impl SlackNet {
    /// The output layer starts at zero, so `Delta = Delta_bar / 2` everywhere.
    pub fn new(state_dim: usize, hidden: &[usize], seed: u64, adam: AdamConfig) -> Result<Self> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut params = MlpParams::new(&sizes, seed)?;
        params.zero_output_layer();
        Self::from_params(params, adam)
    }

    pub fn from_params(params: MlpParams, adam: AdamConfig) -> Result<Self> {
        if params.output_dim() != 1 {
            return Err(Error::Config(
                "slack network must have a scalar output".into(),
            ));
        }
        let optimizer = OptimizerState::new(&params, adam)?;
        Ok(Self {
            params,
            optimizer,
            tape: Tape::default(),
        })
    }

    pub fn raw(&mut self, state: &[f64]) -> Result<f64> {
        Ok(self.params.forward(state, &mut self.tape)?[0])
    }

    pub fn delta(&mut self, state: &[f64], delta_bar: f64) -> Result<f64> {
        Ok(map_to_delta(self.raw(state)?, delta_bar))
    }

    /// Batch mean of the mirror surrogate `g_i * d(s_i)` (with `g_i` from the
    /// switching rule, held constant) and its parameter gradient.
    pub fn surrogate_gradient(
        &mut self,
        states: &[&[f64]],
        log_pis: &[f64],
        alpha: f64,
        config: &SlackConfig,
    ) -> Result<(f64, GradBuffer, SlackUpdateStats)> {
        if states.len() != log_pis.len() {
            return Err(Error::Config(
                "slack update: states/log_pis length mismatch".into(),
            ));
        }
        let mut grads = self.params.grad_buffer();
        let mut stats = SlackUpdateStats::default();
        let mut loss = 0.0;
        if states.is_empty() {
            return Ok((loss, grads, stats));
        }
        let n = states.len() as f64;
        for (s, &lp) in states.iter().zip(log_pis) {
            let d = self.params.forward(s, &mut self.tape)?[0];
            let delta = map_to_delta(d, config.delta_bar);
            let e = constraint_residual(lp, config.h_star, delta);
            let (l, g) = slack_loss_mirror(lp, config.h_star, delta, alpha, config.epsilon, d);
            loss += l / n;
            stats.mean_delta += delta / n;
            stats.mean_residual += e / n;
            if branch(e, config.epsilon) == SlackBranch::Equality {
                stats.equality_fraction += 1.0 / n;
            }
            if g != 0.0 {
                self.params
                    .backward(&self.tape, &[g / n], Some(&mut grads), None)?;
            }
        }
        Ok((loss, grads, stats))
    }

    /// One mirror-descent step on the batch mean of the switching loss.
    ///
    /// `log_pis` must be detached samples from the current policy at `states`.
    /// An empty batch is a no-op.
    pub fn update(
        &mut self,
        states: &[&[f64]],
        log_pis: &[f64],
        alpha: f64,
        config: &SlackConfig,
    ) -> Result<SlackUpdateStats> {
        if states.is_empty() && log_pis.is_empty() {
            return Ok(SlackUpdateStats::default());
        }
        let (_, grads, stats) = self.surrogate_gradient(states, log_pis, alpha, config)?;
        self.optimizer.step(&mut self.params, &grads)?;
        Ok(stats)
    }
}

/// A single slack value `Delta = Delta_bar * squareplus_sigmoid(d)` trained
/// with plain mirror steps `d -= lr * g`; the state-free analogue of
/// [`SlackNet`], handy for studying the switching dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarSlack {
    pub d: f64,
    pub learning_rate: f64,
}

impl ScalarSlack {
    pub fn new(d: f64, learning_rate: f64) -> Self {
        Self { d, learning_rate }
    }

    pub fn delta(&self, config: &SlackConfig) -> f64 {
        map_to_delta(self.d, config.delta_bar)
    }

    /// One step against a fixed `ln pi`; returns the residual before the step.
    pub fn step(&mut self, log_pi: f64, alpha: f64, config: &SlackConfig) -> f64 {
        let delta = self.delta(config);
        let e = constraint_residual(log_pi, config.h_star, delta);
        let (_, g) = slack_loss_mirror(log_pi, config.h_star, delta, alpha, config.epsilon, self.d);
        self.d -= self.learning_rate * g;
        e
    }
}
