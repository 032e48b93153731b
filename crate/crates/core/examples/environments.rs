//! Rolls out the zero action and a fixed bang-bang action in every built-in
//! environment, with and without the action-replacement attack.
//!
//! ```bash
//! cargo run --example environments
//! ```

use slack_sac::envs::{make_env, AttackConfig, AttackWrapper, EnvConfig, ENV_NAMES};

fn rollout(name: &str, action: f64, attack: AttackConfig) -> slack_sac::Result<(f64, u64)> {
    let env = make_env(&EnvConfig {
        name: name.into(),
        episode_length: None,
    })?;
    let dim = env.spec().action_dim;
    let mut env = AttackWrapper::new(env, attack)?;
    use slack_sac::envs::Env;
    env.reset(1);
    let mut ret = 0.0;
    loop {
        let (step, _) = env.attack_step(&vec![action; dim])?;
        ret += step.reward;
        if step.done || step.truncated {
            return Ok((ret, env.attack_count()));
        }
    }
}

pub fn run_example() -> slack_sac::Result<()> {
    println!(
        "{:<16} {:>5} {:>5} {:>6}  {:>12} {:>12} {:>12}",
        "env", "|S|", "|A|", "steps", "zero", "a = +0.5", "zero, p=0.2"
    );
    for name in ENV_NAMES {
        let env = make_env(&EnvConfig {
            name: name.into(),
            episode_length: None,
        })?;
        let spec = env.spec().clone();
        let (zero, _) = rollout(name, 0.0, AttackConfig::none())?;
        let (push, _) = rollout(name, 0.5, AttackConfig::none())?;
        let (attacked, hits) = rollout(name, 0.0, AttackConfig::with_probability(0.2))?;
        println!(
            "{name:<16} {:>5} {:>5} {:>6}  {zero:>12.3} {push:>12.3} {attacked:>12.3}  ({hits} attacks)",
            spec.state_dim, spec.action_dim, spec.episode_length
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> slack_sac::Result<()> {
    run_example()
}
