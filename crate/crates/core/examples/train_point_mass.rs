//! Trains one seed of the conventional and the first slack condition on the
//! point-mass task and prints the learning curves side by side.
//!
//! ```bash
//! cargo run --release --example train_point_mass -- 150
//! ```

use slack_sac::run::{train_seed, Condition, RunConfig, TrainOptions};

pub fn run_with(episodes: usize) -> slack_sac::Result<()> {
    let out = std::env::temp_dir().join("slack-sac-example-train");
    let base = RunConfig {
        episodes,
        seeds: vec![0],
        checkpoint_every: 0,
        output_dir: Some(out),
        ..RunConfig::default()
    };
    let opts = TrainOptions {
        resume: false,
        quiet: true,
    };
    let mut curves = Vec::new();
    for condition in [Condition::Conventional, Condition::SlackHstarNegA] {
        let cfg = RunConfig {
            condition,
            ..base.clone()
        };
        let run = train_seed(&cfg, 0, &opts)?;
        println!("{condition}: artifacts in {}", run.dir.display());
        curves.push(run.rows);
    }
    println!(
        "\n{:>7} | {:>9} {:>8} {:>7} | {:>9} {:>8} {:>7} {:>7}",
        "episode", "return", "-ln pi", "alpha", "return", "-ln pi", "alpha", "delta"
    );
    let step = (episodes / 10).max(1);
    for i in (0..episodes).step_by(step).chain([episodes - 1]) {
        let (c, s) = (&curves[0][i], &curves[1][i]);
        println!(
            "{:>7} | {:>9.2} {:>8.3} {:>7.4} | {:>9.2} {:>8.3} {:>7.4} {:>7.3}",
            i + 1,
            c.episode_return,
            -c.mean_log_pi,
            c.alpha,
            s.episode_return,
            -s.mean_log_pi,
            s.alpha,
            s.mean_delta
        );
    }
    println!("\nconventional H* = -2; the slack run keeps -ln pi above it instead of on it.");
    Ok(())
}

pub fn run_example() -> slack_sac::Result<()> {
    run_with(4)
}

#[allow(dead_code)]
fn main() -> slack_sac::Result<()> {
    let episodes = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(150);
    run_with(episodes)
}
