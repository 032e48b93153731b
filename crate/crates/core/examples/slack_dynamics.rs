//! Slack bounds for the three preset conditions and the switching dynamics
//! of a single slack value against a fixed log-density.
//!
//! ```bash
//! cargo run --example slack_dynamics
//! ```

use slack_sac::slack::{delta_upper_bound, ActionSpaceKind, ScalarSlack, SlackConfig};

pub fn run_example() -> slack_sac::Result<()> {
    let a = 6usize;
    let ln2 = std::f64::consts::LN_2;
    println!("|A| = {a}");
    for (name, h_star) in [
        ("H* = -|A|", -(a as f64)),
        ("H* = |A|(ln 2 - 2)", a as f64 * (ln2 - 2.0)),
    ] {
        let bar = delta_upper_bound(ActionSpaceKind::Continuous, a, h_star)?;
        println!("  {name:<20} Delta_bar = {bar:.6}");
    }
    let discrete = delta_upper_bound(ActionSpaceKind::Discrete, 4, 0.98 * 4f64.ln())?;
    println!("  4 discrete actions, H* = 0.98 ln 4: Delta_bar = {discrete:.6}");

    let cfg = SlackConfig::new(ActionSpaceKind::Continuous, 2, -2.0, None)?;
    let log_pi = 0.5;
    let alpha = 0.2;
    let mut slack = ScalarSlack::new(3.0, 1e-3);
    println!(
        "\nfixed ln pi = {log_pi}, H* = {}, eps = {}",
        cfg.h_star, cfg.epsilon
    );
    println!("  step     Delta      e = ln pi + H* + Delta");
    for k in 0..=20_000 {
        let e = slack.step(log_pi, alpha, &cfg);
        if k % 2_000 == 0 {
            println!("  {k:>5}  {:8.5}  {e:+.5}", slack.delta(&cfg));
        }
    }
    println!("  equilibrium e = -eps = {:+.5}", -cfg.epsilon);
    Ok(())
}

#[allow(dead_code)]
fn main() -> slack_sac::Result<()> {
    run_example()
}
