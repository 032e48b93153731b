//! Soft actor-critic with twin critics, Polyak targets and an auto-tuned
//! temperature, optionally with a learned slack on the entropy lower bound.
//!
//! Each mini-batch runs, in order: critic step, actor step, temperature step,
//! slack step (slack mode only), target update. The temperature is kept as
//! `alpha = exp(alpha_tilde)` and the gradient with respect to `alpha` is
//! applied to `alpha_tilde` directly (mirror descent).

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Container;
use crate::error::{Error, Result};
use crate::nn::{soft_update, AdamConfig, GradBuffer, MlpParams, OptimizerState, Tape};
use crate::policy::{Noise, PolicyHead, PolicyKind, PolicyNet};
use crate::replay::{ReplayBuffer, Transition};
use crate::seed;
use crate::slack::{ActionSpaceKind, SlackConfig, SlackNet, SlackUpdateStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMode {
    /// Equality target `H(pi) = H*`.
    #[default]
    Conventional,
    /// Target `H(pi) = H* + Delta(s)` with a learned slack.
    Slack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub tau: f64,
    pub batch_max: usize,
    pub buffer_max: usize,
    pub entropy_mode: EntropyMode,
    /// Entropy lower bound; `-|A|` when unset.
    pub h_star: Option<f64>,
    /// Slack insensitivity; `0.1 |A|` when unset.
    pub epsilon: Option<f64>,
    pub hidden: Vec<usize>,
    pub policy_kind: PolicyKind,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub slack_lr: f64,
    pub alpha_lr: f64,
    pub alpha_init: f64,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 5e-3,
            batch_max: 256,
            buffer_max: 102_400,
            entropy_mode: EntropyMode::Conventional,
            h_star: None,
            epsilon: None,
            hidden: vec![100, 100],
            policy_kind: PolicyKind::StudentT,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            slack_lr: 3e-4,
            alpha_lr: 3e-4,
            alpha_init: 1.0,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must be in [0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must be in (0, 1]");
        }
        if self.batch_max == 0 || self.buffer_max == 0 {
            return bad("batch_max and buffer_max must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive");
        }
        for lr in [self.actor_lr, self.critic_lr, self.slack_lr, self.alpha_lr] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad("learning rates must be positive and finite");
            }
        }
        if !(self.alpha_init > 0.0 && self.alpha_init.is_finite()) {
            return bad("alpha_init must be positive");
        }
        if let Some(h) = self.h_star {
            if !h.is_finite() {
                return bad("h_star must be finite");
            }
        }
        Ok(())
    }

    pub fn resolved_h_star(&self, action_dim: usize) -> f64 {
        self.h_star.unwrap_or(-(action_dim as f64))
    }
}

/// Myopic soft Bellman target:
/// `r + (1 - done) gamma (min(Q1', Q2') - alpha ln pi(a'|s'))`.
pub fn td_target(
    reward: f64,
    done: bool,
    gamma: f64,
    q1_next: f64,
    q2_next: f64,
    alpha: f64,
    log_pi_next: f64,
) -> f64 {
    if done {
        reward
    } else {
        reward + gamma * (q1_next.min(q2_next) - alpha * log_pi_next)
    }
}

/// `mean(-(ln pi + H* + Delta))`; the derivative of the temperature loss with
/// respect to `alpha`.
pub fn alpha_gradient(log_pis: &[f64], h_star: f64, deltas: &[f64]) -> f64 {
    if log_pis.is_empty() {
        return 0.0;
    }
    let sum: f64 = log_pis
        .iter()
        .enumerate()
        .map(|(i, &lp)| -(lp + h_star + deltas.get(i).copied().unwrap_or(0.0)))
        .sum();
    sum / log_pis.len() as f64
}

pub const ALPHA_TILDE_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureState {
    pub alpha_tilde: f64,
    pub alpha: f64,
    pub learning_rate: f64,
}

impl TemperatureState {
    pub fn new(alpha: f64, learning_rate: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!(
                "initial alpha must be positive, got {alpha}"
            )));
        }
        Ok(Self {
            alpha_tilde: alpha.ln(),
            alpha,
            learning_rate,
        })
    }

    /// `alpha_tilde -= lr * g`, `alpha = exp(alpha_tilde)`. `alpha_tilde` is
    /// kept within `+-ALPHA_TILDE_LIMIT` so `alpha` stays a positive, finite f64.
    pub fn update(&mut self, g: f64) -> Result<()> {
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("temperature gradient {g}")));
        }
        self.alpha_tilde = (self.alpha_tilde - self.learning_rate * g)
            .clamp(-ALPHA_TILDE_LIMIT, ALPHA_TILDE_LIMIT);
        self.alpha = self.alpha_tilde.exp();
        Ok(())
    }
}

/// Twin online critics, their targets and optimizers. Input is `s ++ a`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticPair {
    pub q1: MlpParams,
    pub q2: MlpParams,
    pub q1_target: MlpParams,
    pub q2_target: MlpParams,
    pub opt1: OptimizerState,
    pub opt2: OptimizerState,
}

impl CriticPair {
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        seeds: (u64, u64),
        adam: AdamConfig,
    ) -> Result<Self> {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let q1 = MlpParams::new(&sizes, seeds.0)?;
        let q2 = MlpParams::new(&sizes, seeds.1)?;
        Ok(Self {
            opt1: OptimizerState::new(&q1, adam)?,
            opt2: OptimizerState::new(&q2, adam)?,
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            q1,
            q2,
        })
    }

    pub fn soft_update(&mut self, tau: f64) {
        soft_update(&mut self.q1_target, &self.q1, tau);
        soft_update(&mut self.q2_target, &self.q2, tau);
    }
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

/// `mean(0.5 (y - Q1)^2 + 0.5 (y - Q2)^2)` and its gradients for both online
/// critics. `inputs[i]` is `s ++ a`; the targets are constants.
pub fn critic_loss(
    critics: &CriticPair,
    inputs: &[Vec<f64>],
    targets: &[f64],
) -> Result<(f64, GradBuffer, GradBuffer)> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::Config(
            "critic loss needs a non-empty, aligned batch".into(),
        ));
    }
    let n = inputs.len() as f64;
    let mut g1 = critics.q1.grad_buffer();
    let mut g2 = critics.q2.grad_buffer();
    let mut tape = Tape::default();
    let mut loss = 0.0;
    for (x, &y) in inputs.iter().zip(targets) {
        for (q, g) in [(&critics.q1, &mut g1), (&critics.q2, &mut g2)] {
            let v = q.forward(x, &mut tape)?[0];
            loss += 0.5 * (y - v) * (y - v) / n;
            q.backward(&tape, &[(v - y) / n], Some(g), None)?;
        }
    }
    Ok((loss, g1, g2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorLoss {
    pub loss: f64,
    pub grads: GradBuffer,
    /// Detached log-densities of the sampled actions.
    pub log_pis: Vec<f64>,
}

/// `mean(-min(Q1(s, a), Q2(s, a)) + alpha ln pi(a|s))` with `a`
/// reparameterized from `noise_for(i, head_i)`, and its gradient for the
/// policy only.
pub fn actor_loss<F>(
    policy: &PolicyNet,
    critics: &CriticPair,
    states: &[&[f64]],
    alpha: f64,
    mut noise_for: F,
) -> Result<ActorLoss>
where
    F: FnMut(usize, &PolicyHead) -> Noise,
{
    if states.is_empty() {
        return Err(Error::Config("actor loss needs a non-empty batch".into()));
    }
    let n = states.len() as f64;
    let mut grads = policy.params.grad_buffer();
    let mut tape_pi = Tape::default();
    let mut tape_q1 = Tape::default();
    let mut tape_q2 = Tape::default();
    let mut input_grad = Vec::new();
    let mut x = Vec::new();
    let mut loss = 0.0;
    let mut log_pis = Vec::with_capacity(states.len());
    for (i, s) in states.iter().enumerate() {
        let (raw, head) = policy.head_with_tape(s, &mut tape_pi)?;
        let noise = noise_for(i, &head);
        let xi = PolicyHead::noise_multiplier(&noise)?;
        let sample = head.sample_reparam(&noise)?;
        x.clear();
        x.extend_from_slice(s);
        x.extend_from_slice(&sample.action);
        let v1 = critics.q1.forward(&x, &mut tape_q1)?[0];
        let v2 = critics.q2.forward(&x, &mut tape_q2)?[0];
        // Ties go to Q1.
        let (q, tape, v) = if v1 <= v2 {
            (&critics.q1, &tape_q1, v1)
        } else {
            (&critics.q2, &tape_q2, v2)
        };
        q.backward(tape, &[1.0], None, Some(&mut input_grad))?;
        let d_action: Vec<f64> = input_grad[s.len()..].iter().map(|g| -g).collect();
        let hg = head.sample_backward(&sample, &xi, &d_action, alpha);
        let mut rg = PolicyHead::raw_grad(&raw, policy.kind, &hg);
        for g in &mut rg {
            *g /= n;
        }
        policy
            .params
            .backward(&tape_pi, &rg, Some(&mut grads), None)?;
        loss += (-v + alpha * sample.log_prob) / n;
        log_pis.push(sample.log_prob);
    }
    Ok(ActorLoss {
        loss,
        grads,
        log_pis,
    })
}

/// Per-batch means reported by [`Agent::train_on_episode_end`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrainStats {
    pub batches: usize,
    pub samples: usize,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mean_log_pi: f64,
    pub alpha: f64,
    pub mean_delta: f64,
    /// Fraction of slack samples in the equality branch.
    pub equality_fraction: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mean_log_pi: f64,
    pub alpha: f64,
    pub mean_delta: f64,
    pub slack: SlackUpdateStats,
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub config: AgentConfig,
    pub state_dim: usize,
    pub action_dim: usize,
    pub h_star: f64,
    pub policy: PolicyNet,
    pub policy_opt: OptimizerState,
    pub critics: CriticPair,
    pub temperature: TemperatureState,
    pub slack: Option<(SlackNet, SlackConfig)>,
    /// Calls to `train_on_episode_end` that found nothing to replay.
    pub empty_updates: u64,
    rng: ChaCha8Rng,
}

impl Agent {
    pub fn new(config: AgentConfig, state_dim: usize, action_dim: usize) -> Result<Self> {
        config.validate()?;
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::Config(
                "state and action dimensions must be positive".into(),
            ));
        }
        let seed = config.seed;
        let h_star = config.resolved_h_star(action_dim);
        let policy = PolicyNet::new(
            state_dim,
            action_dim,
            &config.hidden,
            config.policy_kind,
            seed::derive(seed, 1),
        )?;
        let policy_opt = OptimizerState::new(&policy.params, AdamConfig::with_lr(config.actor_lr))?;
        let critics = CriticPair::new(
            state_dim + action_dim,
            &config.hidden,
            (seed::derive(seed, 2), seed::derive(seed, 3)),
            AdamConfig::with_lr(config.critic_lr),
        )?;
        let temperature = TemperatureState::new(config.alpha_init, config.alpha_lr)?;
        let slack_config = SlackConfig::new(
            ActionSpaceKind::Continuous,
            action_dim,
            h_star,
            config.epsilon,
        )?;
        let slack = match config.entropy_mode {
            EntropyMode::Conventional => None,
            EntropyMode::Slack => Some((
                SlackNet::new(
                    state_dim,
                    &config.hidden,
                    seed::derive(seed, 4),
                    AdamConfig::with_lr(config.slack_lr),
                )?,
                slack_config,
            )),
        };
        Ok(Self {
            state_dim,
            action_dim,
            h_star,
            policy,
            policy_opt,
            critics,
            temperature,
            slack,
            empty_updates: 0,
            rng: ChaCha8Rng::seed_from_u64(seed::derive(seed, 5)),
            config,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.temperature.alpha
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Intended action and its log-density (the mode when `deterministic`).
    pub fn act(&mut self, state: &[f64], deterministic: bool) -> Result<(Vec<f64>, f64)> {
        self.policy.act(state, &mut self.rng, deterministic)
    }

    /// Current slack at `state`; zero in conventional mode.
    pub fn delta(&mut self, state: &[f64]) -> Result<f64> {
        match &mut self.slack {
            Some((net, cfg)) => net.delta(state, cfg.delta_bar),
            None => Ok(0.0),
        }
    }

    /// Soft Bellman targets with one fresh next-action sample per transition.
    pub fn td_targets(&mut self, batch: &[&Transition]) -> Result<Vec<f64>> {
        let mut tape_pi = Tape::default();
        let mut tape_q = Tape::default();
        let mut x = Vec::new();
        let alpha = self.temperature.alpha;
        let gamma = self.config.gamma;
        let mut out = Vec::with_capacity(batch.len());
        for t in batch {
            let (_, head) = self.policy.head_with_tape(&t.next_state, &mut tape_pi)?;
            let sample = head.sample_reparam(&head.draw_noise(&mut self.rng))?;
            x.clear();
            x.extend_from_slice(&t.next_state);
            x.extend_from_slice(&sample.action);
            let q1 = self.critics.q1_target.forward(&x, &mut tape_q)?[0];
            let q2 = self.critics.q2_target.forward(&x, &mut tape_q)?[0];
            out.push(td_target(
                t.reward,
                t.done,
                gamma,
                q1,
                q2,
                alpha,
                sample.log_prob,
            ));
        }
        Ok(out)
    }

    /// Moves the online critics only.
    pub fn critic_step(&mut self, batch: &[&Transition]) -> Result<f64> {
        let ys = self.td_targets(batch)?;
        let inputs: Vec<Vec<f64>> = batch.iter().map(|t| concat(&t.state, &t.action)).collect();
        let (loss, g1, g2) = critic_loss(&self.critics, &inputs, &ys)?;
        let c = &mut self.critics;
        c.opt1.step(&mut c.q1, &g1)?;
        c.opt2.step(&mut c.q2, &g2)?;
        Ok(loss)
    }

    /// Moves the policy only; returns the loss and detached `ln pi` per state.
    pub fn actor_step(&mut self, states: &[&[f64]]) -> Result<(f64, Vec<f64>)> {
        let rng = &mut self.rng;
        let out = actor_loss(
            &self.policy,
            &self.critics,
            states,
            self.temperature.alpha,
            |_, h| h.draw_noise(rng),
        )?;
        self.policy_opt.step(&mut self.policy.params, &out.grads)?;
        Ok((out.loss, out.log_pis))
    }

    /// Moves `alpha_tilde` only; returns the slack values used (detached).
    pub fn alpha_step(&mut self, states: &[&[f64]], log_pis: &[f64]) -> Result<Vec<f64>> {
        let deltas = states
            .iter()
            .map(|s| self.delta(s))
            .collect::<Result<Vec<f64>>>()?;
        let g = alpha_gradient(log_pis, self.h_star, &deltas);
        self.temperature.update(g)?;
        Ok(deltas)
    }

    /// Moves the slack network only; a no-op in conventional mode.
    pub fn slack_step(&mut self, states: &[&[f64]], log_pis: &[f64]) -> Result<SlackUpdateStats> {
        let alpha = self.temperature.alpha;
        match &mut self.slack {
            Some((net, cfg)) => net.update(states, log_pis, alpha, cfg),
            None => Ok(SlackUpdateStats::default()),
        }
    }

    pub fn target_step(&mut self) {
        self.critics.soft_update(self.config.tau);
    }

    pub fn update_batch(&mut self, batch: &[&Transition]) -> Result<BatchStats> {
        let critic_loss = self.critic_step(batch)?;
        let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
        let (actor_loss, log_pis) = self.actor_step(&states)?;
        let deltas = self.alpha_step(&states, &log_pis)?;
        let slack = self.slack_step(&states, &log_pis)?;
        self.target_step();
        let n = batch.len() as f64;
        Ok(BatchStats {
            critic_loss,
            actor_loss,
            mean_log_pi: log_pis.iter().sum::<f64>() / n,
            alpha: self.temperature.alpha,
            mean_delta: deltas.iter().sum::<f64>() / n,
            slack,
        })
    }

    /// Replays one epoch (half the buffer, uniformly without replacement).
    pub fn train_on_episode_end(&mut self, buffer: &ReplayBuffer) -> Result<TrainStats> {
        let batches = buffer.sample_epoch(self.config.batch_max, &mut self.rng);
        if batches.is_empty() {
            self.empty_updates += 1;
            return Ok(TrainStats {
                alpha: self.temperature.alpha,
                ..TrainStats::default()
            });
        }
        let mut stats = TrainStats::default();
        let k = batches.len() as f64;
        for idx in &batches {
            let batch: Vec<&Transition> = idx.iter().map(|&i| buffer.get(i)).collect();
            let b = self.update_batch(&batch)?;
            stats.samples += batch.len();
            stats.critic_loss += b.critic_loss / k;
            stats.actor_loss += b.actor_loss / k;
            stats.mean_log_pi += b.mean_log_pi / k;
            stats.alpha += b.alpha / k;
            stats.mean_delta += b.mean_delta / k;
            stats.equality_fraction += b.slack.equality_fraction / k;
        }
        stats.batches = batches.len();
        if !(self.policy.params.is_finite()
            && self.critics.q1.is_finite()
            && self.critics.q2.is_finite())
        {
            return Err(Error::NonFinite("network parameters diverged".into()));
        }
        Ok(stats)
    }

    /// Everything needed for a bit-identical resume, except the replay buffer.
    pub fn export(&self, out: &mut Container) -> Result<()> {
        out.set_meta("agent.config", serde_json::to_string(&self.config)?);
        out.set_meta("agent.state_dim", self.state_dim.to_string());
        out.set_meta("agent.action_dim", self.action_dim.to_string());
        let seed: String = self
            .rng
            .get_seed()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        out.set_meta("agent.rng.seed", seed);
        out.set_meta("agent.rng.stream", self.rng.get_stream().to_string());
        out.set_meta("agent.rng.word_pos", self.rng.get_word_pos().to_string());
        out.set_meta("agent.empty_updates", self.empty_updates.to_string());
        self.policy.params.export("policy", out);
        self.policy_opt.export("policy_opt", out);
        let c = &self.critics;
        c.q1.export("q1", out);
        c.q2.export("q2", out);
        c.q1_target.export("q1_target", out);
        c.q2_target.export("q2_target", out);
        c.opt1.export("q1_opt", out);
        c.opt2.export("q2_opt", out);
        out.insert(
            "temperature",
            vec![self.temperature.alpha_tilde, self.temperature.learning_rate],
        );
        if let Some((net, _)) = &self.slack {
            net.params.export("slack", out);
            net.optimizer.export("slack_opt", out);
        }
        Ok(())
    }

    pub fn import(src: &Container) -> Result<Self> {
        let parse = |key: &str| -> Result<u128> {
            src.meta(key)?
                .parse::<u128>()
                .map_err(|e| Error::Checkpoint(format!("{key}: {e}")))
        };
        let config: AgentConfig = serde_json::from_str(src.meta("agent.config")?)?;
        let state_dim = parse("agent.state_dim")? as usize;
        let action_dim = parse("agent.action_dim")? as usize;
        let mut agent = Agent::new(config, state_dim, action_dim)?;
        agent.policy =
            PolicyNet::from_params(MlpParams::import("policy", src)?, agent.config.policy_kind)?;
        agent.policy_opt = OptimizerState::import("policy_opt", src, &agent.policy.params)?;
        let q1 = MlpParams::import("q1", src)?;
        let q2 = MlpParams::import("q2", src)?;
        agent.critics = CriticPair {
            q1_target: MlpParams::import("q1_target", src)?,
            q2_target: MlpParams::import("q2_target", src)?,
            opt1: OptimizerState::import("q1_opt", src, &q1)?,
            opt2: OptimizerState::import("q2_opt", src, &q2)?,
            q1,
            q2,
        };
        let temp = src.get_len("temperature", 2)?;
        agent.temperature = TemperatureState {
            alpha_tilde: temp[0],
            alpha: temp[0].exp(),
            learning_rate: temp[1],
        };
        if let Some((net, _)) = &mut agent.slack {
            let params = MlpParams::import("slack", src)?;
            net.optimizer = OptimizerState::import("slack_opt", src, &params)?;
            net.params = params;
        }
        let hex = src.meta("agent.rng.seed")?;
        if hex.len() != 64 {
            return Err(Error::Checkpoint("rng seed must be 32 hex bytes".into()));
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16)
                .map_err(|e| Error::Checkpoint(format!("rng seed: {e}")))?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(parse("agent.rng.stream")? as u64);
        rng.set_word_pos(parse("agent.rng.word_pos")?);
        agent.rng = rng;
        agent.empty_updates = parse("agent.empty_updates")? as u64;
        Ok(agent)
    }

    /// Draws a raw `u64` from the agent stream (for deriving episode seeds).
    pub fn next_seed(&mut self) -> u64 {
        self.rng.next_u64()
    }
}
