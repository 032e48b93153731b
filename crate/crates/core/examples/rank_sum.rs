//! One-sided Mann-Whitney tests: exact enumeration for small tie-free
//! samples, the normal approximation otherwise.
//!
//! ```bash
//! cargo run --example rank_sum
//! ```

use slack_sac::eval::{describe, mann_whitney_u, Alternative};

pub fn run_example() -> slack_sac::Result<()> {
    let cases: [(&str, Vec<f64>, Vec<f64>); 4] = [
        ("disjoint, small", vec![1.0, 2.0], vec![3.0, 4.0]),
        (
            "overlapping",
            vec![0.61, 0.72, 0.55, 0.80, 0.67, 0.58],
            vec![0.75, 0.83, 0.69, 0.91, 0.88, 0.79],
        ),
        (
            "with ties",
            vec![1.0, 2.0, 2.0, 3.0, 3.0, 3.0, 4.0],
            vec![2.0, 3.0, 4.0, 4.0, 5.0, 5.0, 6.0],
        ),
        ("identical", vec![7.0; 4], vec![7.0; 5]),
    ];
    for (name, x, y) in &cases {
        let r = mann_whitney_u(x, y, Alternative::Less)?;
        println!(
            "{name:<16} n=({},{})  U={:<5} p(less)={:.6}  {:?}{}  medians {:.3} vs {:.3}",
            r.n_x,
            r.n_y,
            r.u_statistic,
            r.p_value,
            r.method,
            if r.degenerate { " (degenerate)" } else { "" },
            describe(x)?.median,
            describe(y)?.median,
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> slack_sac::Result<()> {
    run_example()
}
