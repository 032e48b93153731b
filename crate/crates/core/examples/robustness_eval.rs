//! Trains a conventional and a slack policy, evaluates both with and without
//! the 20 % action-replacement attack and compares the intended action norms.
//!
//! ```bash
//! cargo run --release --example robustness_eval -- 150 4
//! ```

use slack_sac::envs::AttackConfig;
use slack_sac::eval::{mann_whitney_u, Alternative};
use slack_sac::run::{
    degradation_ratio, evaluate_state, train_seed, Condition, RunConfig, TrainOptions, TrainState,
};

pub fn run_with(episodes: usize, seeds: u64) -> slack_sac::Result<()> {
    let base = RunConfig {
        episodes,
        seeds: (0..seeds).collect(),
        checkpoint_every: 0,
        output_dir: Some(std::env::temp_dir().join("slack-sac-example-robust")),
        ..RunConfig::default()
    };
    let opts = TrainOptions {
        resume: false,
        quiet: true,
    };
    let mut norms = Vec::new();
    for condition in [Condition::Conventional, Condition::SlackHstarNegA] {
        let cfg = RunConfig {
            condition,
            ..base.clone()
        };
        let mut per_seed = Vec::new();
        for &seed in &cfg.seeds {
            let run = train_seed(&cfg, seed, &opts)?;
            let state = TrainState::load(&run.dir.join("checkpoint.ckpt"))?;
            let attack = AttackConfig {
                rng_seed: seed,
                ..cfg.attack
            };
            let clean = evaluate_state(
                &state,
                AttackConfig::none(),
                20,
                true,
                condition.tag(),
                None,
            )?;
            let hit = evaluate_state(&state, attack, 20, true, condition.tag(), None)?;
            let mean = |v: &[slack_sac::eval::EvalRecord],
                        f: fn(&slack_sac::eval::EvalRecord) -> f64| {
                v.iter().map(f).sum::<f64>() / v.len() as f64
            };
            let (rc, ra) = (
                mean(&clean, |r| r.episode_return),
                mean(&hit, |r| r.episode_return),
            );
            let norm = mean(&hit, |r| r.mean_action_l2);
            println!(
                "{condition:<18} seed {seed}  clean {rc:9.2}  attacked {ra:9.2}  ratio {:.3}  |a| {norm:.4}",
                degradation_ratio(rc, ra)
            );
            per_seed.push(norm);
        }
        norms.push(per_seed);
    }
    let r = mann_whitney_u(&norms[1], &norms[0], Alternative::Less)?;
    println!(
        "\nslack |a| < conventional |a|: U = {}, p = {:.4} ({:?})",
        r.u_statistic, r.p_value, r.method
    );
    Ok(())
}

pub fn run_example() -> slack_sac::Result<()> {
    run_with(3, 2)
}

#[allow(dead_code)]
fn main() -> slack_sac::Result<()> {
    let mut args = std::env::args().skip(1);
    let episodes = args.next().and_then(|a| a.parse().ok()).unwrap_or(150);
    let seeds = args.next().and_then(|a| a.parse().ok()).unwrap_or(4);
    run_with(episodes, seeds)
}
