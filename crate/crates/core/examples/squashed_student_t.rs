//! Samples a squashed Student-t and a squashed Gaussian head and compares a
//! histogram of the actions with the reported density integrated per bin.
//!
//! ```bash
//! cargo run --example squashed_student_t
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slack_sac::policy::{unsquash, PolicyHead};

pub fn run_example() -> slack_sac::Result<()> {
    let heads = [
        (
            "student-t nu=3",
            PolicyHead {
                location: vec![0.5],
                scale: vec![0.8],
                dof: vec![3.0],
            },
        ),
        (
            "gaussian     ",
            PolicyHead {
                location: vec![0.5],
                scale: vec![0.8],
                dof: vec![f64::INFINITY],
            },
        ),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let bins = 8;
    for (name, head) in &heads {
        head.validate()?;
        let n = 200_000;
        let mut counts = vec![0usize; bins];
        let mut entropy = 0.0;
        for _ in 0..n {
            let s = head.sample_reparam(&head.draw_noise(&mut rng))?;
            let a = s.action[0];
            counts[(((a + 1.0) / 2.0 * bins as f64) as usize).min(bins - 1)] += 1;
            entropy -= s.log_prob / n as f64;
        }
        println!(
            "{name}  mode action {:+.4}  entropy estimate {entropy:.4}",
            head.mode_action()[0]
        );
        println!("  bin            empirical   integrated density");
        let width = 2.0 / bins as f64;
        for (b, c) in counts.iter().enumerate() {
            let lo = -1.0 + b as f64 * width;
            // Midpoint rule over the bin, in action space.
            let sub = 400;
            let mass: f64 = (0..sub)
                .map(|k| {
                    let a = lo + (k as f64 + 0.5) * width / sub as f64;
                    let u = unsquash(a);
                    head.log_prob(&[u]).exp() * width / sub as f64
                })
                .sum();
            println!(
                "  [{lo:+.2},{:+.2})  {:9.4}   {mass:9.4}",
                lo + width,
                *c as f64 / n as f64
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> slack_sac::Result<()> {
    run_example()
}
