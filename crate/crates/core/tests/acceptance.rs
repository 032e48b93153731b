//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 4 to 6 train the full desk-scale sweep (3 conditions x 8 seeds x
//! 300 episodes on point_mass, plus shorter runs on pendulum and
//! impedance_track), which takes tens of minutes on one core.
//!
//! * `ACCEPTANCE_JOBS`: concurrent training runs (default: available cores).
//! * `ACCEPTANCE_OUT`: output root to keep (and resume) the runs; a temporary
//!   directory otherwise.
//! * `ACCEPTANCE_CRITERIA`: comma-separated subset to run (default: all).

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use slack_sac::envs::{make_env, AttackConfig, AttackWrapper, Env, EnvConfig};
use slack_sac::eval::{mann_whitney_u, Alternative, PValueMethod};
use slack_sac::nn::{AdamConfig, MlpParams};
use slack_sac::policy::{base_log_density, unsquash, Noise, PolicyHead, PolicyKind, PolicyNet};
use slack_sac::replay::{ReplayBuffer, Transition};
use slack_sac::run::{
    cmd_sweep, degradation_ratio, train_seed, Condition, RunConfig, SweepReport, TrainOptions,
};
use slack_sac::sac::{actor_loss, alpha_gradient, critic_loss, CriticPair};
use slack_sac::slack::{
    delta_upper_bound, map_to_delta, slack_loss_direct, ActionSpaceKind, ScalarSlack, SlackConfig,
    SlackNet,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- gradients

fn addresses(p: &MlpParams) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (l, layer) in p.layers.iter().enumerate() {
        for (t, tensor) in layer.tensors().iter().enumerate() {
            out.extend((0..tensor.len()).map(|i| (l, t, i)));
        }
    }
    out
}

fn nudged(p: &MlpParams, (l, t, i): (usize, usize, usize), h: f64) -> MlpParams {
    let mut q = p.clone();
    q.layers[l].tensors_mut()[t][i] += h;
    q
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1e-6 + a.abs().max(b.abs()))
}

fn random_batch(n: usize, sd: usize, ad: usize, seed: u64) -> Vec<Transition> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Transition {
            state: (0..sd).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            action: (0..ad).map(|_| rng.gen_range(-0.9..0.9)).collect(),
            next_state: (0..sd).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            reward: rng.gen_range(-1.0..1.0),
            done: false,
            truncated: false,
        })
        .collect()
}

fn criterion_gradients() -> Outcome {
    let h = 1e-6;
    let hidden = [16, 16, 16];
    let (sd, ad) = (3, 2);
    let batch = random_batch(6, sd, ad, 1);
    let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
    let mut worst: Vec<(&str, f64)> = Vec::new();

    // Critic regression.
    let critics = CriticPair::new(sd + ad, &hidden, (2, 3), AdamConfig::default()).unwrap();
    let inputs: Vec<Vec<f64>> = batch
        .iter()
        .map(|t| t.state.iter().chain(&t.action).copied().collect())
        .collect();
    let ys: Vec<f64> = batch.iter().map(|t| 3.0 * t.reward).collect();
    let (_, g1, _) = critic_loss(&critics, &inputs, &ys).unwrap();
    let mut w = 0.0f64;
    for addr in addresses(&critics.q1) {
        let loss = |q1: MlpParams| {
            let c = CriticPair {
                q1,
                ..critics.clone()
            };
            critic_loss(&c, &inputs, &ys).unwrap().0
        };
        let fd =
            (loss(nudged(&critics.q1, addr, h)) - loss(nudged(&critics.q1, addr, -h))) / (2.0 * h);
        w = w.max(rel_err(g1.layers[addr.0].tensors()[addr.1][addr.2], fd));
    }
    worst.push(("critic", w));

    // Actor with common random noise.
    let policy = PolicyNet::new(sd, ad, &hidden, PolicyKind::StudentT, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let head = policy.head(states[0]).unwrap();
    let noises: Vec<Noise> = (0..states.len())
        .map(|_| head.draw_noise(&mut rng))
        .collect();
    let actor =
        |p: &PolicyNet| actor_loss(p, &critics, &states, 0.3, |i, _| noises[i].clone()).unwrap();
    let base = actor(&policy);
    let mut w = 0.0f64;
    for addr in addresses(&policy.params) {
        let at =
            |dh| PolicyNet::from_params(nudged(&policy.params, addr, dh), policy.kind).unwrap();
        let fd = (actor(&at(h)).loss - actor(&at(-h)).loss) / (2.0 * h);
        w = w.max(rel_err(
            base.grads.layers[addr.0].tensors()[addr.1][addr.2],
            fd,
        ));
    }
    worst.push(("actor", w));

    // Temperature: J(alpha) = alpha * mean(-(ln pi + H* + Delta)).
    let log_pis = [0.4, -1.3, 2.2, 0.9];
    let deltas = [0.1, 0.7, 0.0, 1.9];
    let j = |a: f64| a * alpha_gradient(&log_pis, -2.0, &deltas);
    let fd = (j(0.7 + h) - j(0.7 - h)) / (2.0 * h);
    worst.push((
        "temperature",
        rel_err(alpha_gradient(&log_pis, -2.0, &deltas), fd),
    ));

    // Slack: the switching loss in Delta, and the mirror surrogate in the net parameters.
    let cfg = SlackConfig::new(ActionSpaceKind::Continuous, ad, -2.0, None).unwrap();
    let mut w = 0.0f64;
    for (lp, delta) in [(1.0, 0.3), (-0.5, 2.0), (0.2, 1.75)] {
        let analytic = {
            let e = lp + cfg.h_star + delta;
            if e.abs() > cfg.epsilon {
                e.signum()
            } else {
                0.5
            }
        };
        let fd = (slack_loss_direct(lp, cfg.h_star, delta + h, 0.5, cfg.epsilon)
            - slack_loss_direct(lp, cfg.h_star, delta - h, 0.5, cfg.epsilon))
            / (2.0 * h);
        w = w.max(rel_err(analytic, fd));
    }
    let mut net = SlackNet::new(sd, &hidden, 6, AdamConfig::default()).unwrap();
    for l in &mut net.params.layers {
        for v in &mut l.weight {
            *v *= 3.0;
        }
    }
    let slack_lp: Vec<f64> = (0..states.len()).map(|i| 1.5 - 0.6 * i as f64).collect();
    let (_, grads, _) = net
        .surrogate_gradient(&states, &slack_lp, 0.5, &cfg)
        .unwrap();
    // Branch weights g_i are constants of the surrogate.
    let weights: Vec<f64> = states
        .iter()
        .zip(&slack_lp)
        .map(|(s, &lp)| {
            let d = net.params.predict(s).unwrap()[0];
            let e = lp + cfg.h_star + map_to_delta(d, cfg.delta_bar);
            if e.abs() > cfg.epsilon {
                e.signum()
            } else {
                0.5
            }
        })
        .collect();
    let surrogate = |p: &MlpParams| {
        states
            .iter()
            .zip(&weights)
            .map(|(s, g)| g * p.predict(s).unwrap()[0])
            .sum::<f64>()
            / states.len() as f64
    };
    for addr in addresses(&net.params) {
        let fd = (surrogate(&nudged(&net.params, addr, h))
            - surrogate(&nudged(&net.params, addr, -h)))
            / (2.0 * h);
        w = w.max(rel_err(grads.layers[addr.0].tensors()[addr.1][addr.2], fd));
    }
    worst.push(("slack", w));

    let pass = worst.iter().all(|(_, e)| *e < 1e-4);
    let detail = worst
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(pass, format!("max relative error on 3x16 nets: {detail}"))
}

// ------------------------------------------------------------ distributions

/// `int_{-1}^{1} p(a) da` with `a = sin(phi)` and composite Simpson in `phi`.
fn action_mass(head: &PolicyHead) -> f64 {
    let n = 400_000;
    let (lo, hi) = (-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2);
    let step = (hi - lo) / n as f64;
    let f = |phi: f64| {
        let a = phi.sin();
        if a.abs() >= 1.0 {
            return 0.0;
        }
        head.log_prob(&[unsquash(a)]).exp() * phi.cos()
    };
    let mut sum = f(lo) + f(hi);
    for k in 1..n {
        sum += f(lo + k as f64 * step) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * step / 3.0
}

fn criterion_distributions() -> Outcome {
    let mut worst_mass = 0.0f64;
    for (mu, sigma, nu) in [
        (0.0, 1.0, 3.0),
        (0.8, 0.4, 5.0),
        (-1.5, 2.0, 10.0),
        (0.3, 0.7, 40.0),
    ] {
        let head = PolicyHead {
            location: vec![mu],
            scale: vec![sigma],
            dof: vec![nu],
        };
        worst_mass = worst_mass.max((action_mass(&head) - 1.0).abs());
    }
    let mut worst_limit = 0.0f64;
    for z in [-4.0, -2.5, -1.0, 0.0, 0.5, 1.7, 3.0, 4.0] {
        let (mu, sigma) = (0.2, 0.9);
        let u = mu + sigma * z;
        let t = base_log_density(mu, sigma, 1e6, u);
        let g = base_log_density(mu, sigma, f64::INFINITY, u);
        worst_limit = worst_limit.max((t - g).abs());
    }
    outcome(
        worst_mass < 1e-6 && worst_limit < 1e-4,
        format!(
            "max |mass - 1| = {worst_mass:.1e} (quadrature over (-1,1)); \
             max |ln p_t(nu=1e6) - ln p_gauss| = {worst_limit:.1e} for |z| <= 4"
        ),
    )
}

// -------------------------------------------------------------------- slack

fn criterion_slack() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut in_range = true;
    for _ in 0..1_000_000 {
        let d: f64 = rng.gen_range(-1e6..1e6) * rng.gen::<f64>().powi(8);
        let bar: f64 = rng.gen_range(0.0..100.0);
        let v = map_to_delta(d, bar);
        in_range &= (0.0..=bar).contains(&v);
    }
    let ln2 = std::f64::consts::LN_2;
    let c = ActionSpaceKind::Continuous;
    let presets = [
        delta_upper_bound(c, 6, -6.0).unwrap(),
        delta_upper_bound(c, 6, 6.0 * (ln2 - 2.0)).unwrap(),
        delta_upper_bound(ActionSpaceKind::Discrete, 4, 0.98 * 4f64.ln()).unwrap(),
    ];
    let closed = [6.0 * ln2 + 6.0, 12.0, 0.02 * 4f64.ln()];
    let tabulated = [10.158883, 12.0, 0.027726];
    let bounds_ok = presets
        .iter()
        .zip(&closed)
        .zip(&tabulated)
        .all(|((v, c), t)| (v - c).abs() <= 1e-12 * c.abs().max(1.0) && (v - t).abs() < 1e-6);

    let cfg = SlackConfig::new(c, 2, -2.0, None).unwrap();
    let mut worst = 0.0f64;
    for (d0, lp) in [(-3.0, 0.5), (4.0, 0.5), (0.0, 1.2), (2.0, -0.9)] {
        let mut s = ScalarSlack::new(d0, 1e-4);
        let mut tail = 0.0;
        let (steps, keep) = (200_000, 50_000);
        for k in 0..steps {
            let e = s.step(lp, 0.2, &cfg);
            if k >= steps - keep {
                tail += e / keep as f64;
            }
        }
        worst = worst.max((tail + cfg.epsilon).abs());
    }
    outcome(
        in_range && bounds_ok && worst < 1e-3,
        format!(
            "Delta in [0, Delta_bar] on 1e6 draws: {in_range}; Delta_bar = {:.6}, {:.6}, {:.6}; \
             scalar dynamics |mean e + eps| <= {worst:.1e}",
            presets[0], presets[1], presets[2]
        ),
    )
}

// ----------------------------------------------------------------- rank sum

/// `P(U_x <= u)` by listing every way to give `n_x` of the ranks `1..=n` to `x`.
fn enumerated_p_less(ranks_x: &[usize], n: usize) -> f64 {
    let n_x = ranks_x.len();
    let u_of = |set: &[usize]| set.iter().sum::<usize>() as f64 - (n_x * (n_x + 1)) as f64 / 2.0;
    let u_obs = u_of(ranks_x);
    let (mut hit, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n_x {
            continue;
        }
        let set: Vec<usize> = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| i + 1)
            .collect();
        total += 1;
        if u_of(&set) <= u_obs {
            hit += 1;
        }
    }
    hit as f64 / total as f64
}

fn criterion_rank_sum() -> Outcome {
    let mut cases = 0;
    let mut worst = 0.0f64;
    let mut exact = true;
    for n in 2..=8usize {
        for n_x in 1..n {
            for mask in 0u32..(1 << n) {
                if mask.count_ones() as usize != n_x {
                    continue;
                }
                let x: Vec<f64> = (0..n)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(|i| (i + 1) as f64)
                    .collect();
                let y: Vec<f64> = (0..n)
                    .filter(|i| mask & (1 << i) == 0)
                    .map(|i| (i + 1) as f64)
                    .collect();
                let ranks: Vec<usize> = x.iter().map(|&v| v as usize).collect();
                let r = mann_whitney_u(&x, &y, Alternative::Less).unwrap();
                exact &= r.method == PValueMethod::Exact;
                worst = worst.max((r.p_value - enumerated_p_less(&ranks, n)).abs());
                cases += 1;
            }
        }
    }
    outcome(
        exact && worst <= 1e-12,
        format!("{cases} partitions with n_x + n_y <= 8, max |p - p_enumerated| = {worst:.1e}"),
    )
}

// ---------------------------------------------------------- replay / attack

fn criterion_replay_attack() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut sizes_ok = true;
    for _ in 0..100 {
        let len = rng.gen_range(0..3000usize);
        let batch_max = 256;
        let mut buf = ReplayBuffer::new(4096).unwrap();
        for i in 0..len {
            buf.push(Transition {
                state: vec![i as f64],
                action: vec![0.0],
                next_state: vec![0.0],
                reward: 0.0,
                done: false,
                truncated: false,
            })
            .unwrap();
        }
        let epoch = buf.sample_epoch(batch_max, &mut rng);
        let k = len / 2;
        let expected: Vec<usize> = (0..k.div_ceil(batch_max))
            .map(|b| (k - b * batch_max).min(batch_max))
            .collect();
        let got: Vec<usize> = epoch.iter().map(Vec::len).collect();
        let mut all: Vec<usize> = epoch.concat();
        all.sort_unstable();
        all.dedup();
        sizes_ok &= got == expected && all.len() == k && all.iter().all(|&i| i < len);
    }
    let mut rates = Vec::new();
    let mut rates_ok = true;
    for p in [0.05, 0.2] {
        let env = make_env(&EnvConfig::default()).unwrap();
        let len = env.spec().episode_length;
        let mut w = AttackWrapper::new(
            env,
            AttackConfig {
                rng_seed: 3,
                ..AttackConfig::with_probability(p)
            },
        )
        .unwrap();
        let n = 100_000;
        let mut hits = 0u64;
        for i in 0..n {
            if i % len == 0 {
                w.reset((i / len) as u64);
            }
            hits += w.attack_step(&[0.1, -0.1]).unwrap().1 as u64;
        }
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let z = (hits as f64 - n as f64 * p) / sigma;
        rates_ok &= z.abs() <= 3.0;
        rates.push(format!("p={p}: {hits} attacks (z = {z:+.2})"));
    }
    outcome(
        sizes_ok && rates_ok,
        format!(
            "epoch sizes exact on 100 buffers: {sizes_ok}; {}",
            rates.join(", ")
        ),
    )
}

// ---------------------------------------------------------- reproducibility

fn criterion_reproducibility(root: &Path) -> Outcome {
    let cfg = |dir: &str| RunConfig {
        episodes: 20,
        seeds: vec![3],
        checkpoint_every: 0,
        output_dir: Some(root.join(dir)),
        condition: Condition::SlackHstarNegA,
        ..RunConfig::default()
    };
    let quiet = TrainOptions {
        resume: false,
        quiet: true,
    };
    let a = train_seed(&cfg("repro_a"), 3, &quiet).unwrap();
    let b = train_seed(&cfg("repro_b"), 3, &quiet).unwrap();
    let ma = std::fs::read(a.dir.join("metrics.csv")).unwrap();
    let mb = std::fs::read(b.dir.join("metrics.csv")).unwrap();
    outcome(
        ma == mb,
        format!(
            "two 20-episode runs, seed 3: metrics.csv {} bytes, identical = {}",
            ma.len(),
            ma == mb
        ),
    )
}

// ---------------------------------------------------------------- training

fn entropy_band(report: &SweepReport, c: Condition) -> (f64, Vec<f64>) {
    let h_star = report.h_star.iter().find(|(k, _)| *k == c).unwrap().1;
    (h_star, report.values(c, |r| r.final_entropy))
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.2}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn conventional_minutes(root: &Path, env: &str, seeds: &[u64]) -> f64 {
    seeds
        .iter()
        .map(|s| {
            let path = root
                .join(env)
                .join("conventional")
                .join(format!("seed_{s}"))
                .join("timing.csv");
            std::fs::read_to_string(path)
                .unwrap()
                .lines()
                .skip(1)
                .filter_map(|l| l.split(',').nth(1)?.parse::<f64>().ok())
                .sum::<f64>()
        })
        .sum::<f64>()
        / 60.0
}

fn criterion_pinning(report: &SweepReport, root: &Path, jobs: usize) -> Outcome {
    let a = 2.0;
    let (h_star, ent) = entropy_band(report, Condition::Conventional);
    let inside = ent
        .iter()
        .filter(|e| (*e - h_star).abs() <= 0.3 * a)
        .count();
    let minutes = conventional_minutes(root, &report.env, &report.seeds);
    // Summed per-run wall time; divided by the workers used.
    let wall = minutes / jobs.min(report.seeds.len()) as f64;
    outcome(
        inside >= 6 && wall < 15.0,
        format!(
            "H* = {h_star:.2}, final-50 -ln pi per seed [{}], {inside}/8 within +-{:.1}; \
             conventional training {wall:.1} min",
            fmt_list(&ent),
            0.3 * a
        ),
    )
}

fn criterion_inequality(report: &SweepReport) -> Outcome {
    let a = 2.0;
    let (_, conv) = entropy_band(report, Condition::Conventional);
    let mut pass = true;
    let mut parts = Vec::new();
    for c in [Condition::SlackHstarNegA, Condition::SlackHstarHbarMinus2A] {
        let (h_star, ent) = entropy_band(report, c);
        let above = ent.iter().filter(|e| **e >= h_star - 0.1 * a).count();
        let test = mann_whitney_u(&ent, &conv, Alternative::Greater).unwrap();
        pass &= above >= 6 && test.p_value < 0.05;
        parts.push(format!(
            "{c}: H* = {h_star:.2}, [{}], {above}/8 >= H* - {:.1}, vs conventional p = {:.2e}",
            fmt_list(&ent),
            0.1 * a,
            test.p_value
        ));
    }
    outcome(pass, parts.join("; "))
}

fn mean_ratio(report: &SweepReport, c: Condition) -> f64 {
    let clean = report.values(c, |r| r.clean_return);
    let hit = report.values(c, |r| r.attacked_return);
    let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    degradation_ratio(m(&clean), m(&hit))
}

fn criterion_action_norm(reports: &[SweepReport]) -> Outcome {
    let pm = &reports[0];
    let slack = pm.values(Condition::SlackHstarNegA, |r| r.attacked_action_l2);
    let conv = pm.values(Condition::Conventional, |r| r.attacked_action_l2);
    let test = mann_whitney_u(&slack, &conv, Alternative::Less).unwrap();
    let norm_ok = test.p_value < 0.1;
    let mut wins = 0;
    let mut parts = Vec::new();
    for r in reports {
        let (s, c) = (
            mean_ratio(r, Condition::SlackHstarNegA),
            mean_ratio(r, Condition::Conventional),
        );
        wins += (s >= c) as usize;
        parts.push(format!("{} {s:.3} vs {c:.3}", r.env));
    }
    outcome(
        norm_ok && wins >= 2,
        format!(
            "point_mass attacked |a|: slack [{}] vs conventional [{}], p = {:.3}; \
             attacked/clean return ratio slack vs conventional: {} ({wins}/3 envs)",
            fmt_list(&slack),
            fmt_list(&conv),
            test.p_value,
            parts.join(", ")
        ),
    )
}

type Check = (u32, &'static str, fn() -> Outcome);
type Record<'a> = dyn FnMut(u32, &str, Instant, Outcome) + 'a;

fn training_criteria(
    root: &Path,
    opts: &TrainOptions,
    jobs: usize,
    wanted: &dyn Fn(u32) -> bool,
    record: &mut Record,
) {
    let t = Instant::now();
    let point_mass = RunConfig {
        output_dir: Some(root.to_path_buf()),
        ..RunConfig::default()
    };
    let pm = cmd_sweep(&point_mass, &Condition::PRESETS, opts, jobs).unwrap();
    if wanted(4) {
        record(4, "entropy pinning", t, criterion_pinning(&pm, root, jobs));
    }
    if wanted(5) {
        record(5, "inequality satisfaction", t, criterion_inequality(&pm));
    }
    if !wanted(6) {
        return;
    }
    let t = Instant::now();
    let pair = [Condition::Conventional, Condition::SlackHstarNegA];
    let mut reports = vec![pm];
    for (env, episodes) in [("pendulum", 150), ("impedance_track", 100)] {
        let cfg = RunConfig {
            episodes,
            seeds: (0..4).collect(),
            eval_episodes: 50,
            env: EnvConfig {
                name: env.into(),
                episode_length: None,
            },
            output_dir: Some(root.to_path_buf()),
            ..RunConfig::default()
        };
        reports.push(cmd_sweep(&cfg, &pair, opts, jobs).unwrap());
    }
    record(
        6,
        "action-norm regularization",
        t,
        criterion_action_norm(&reports),
    );
}

fn main() {
    let jobs = std::env::var("ACCEPTANCE_JOBS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let keep = std::env::var_os("ACCEPTANCE_OUT").map(PathBuf::from);
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_CRITERIA")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |id: u32| only.as_ref().is_none_or(|o| o.contains(&id));
    let tmp = tempfile::tempdir().unwrap();
    let root = keep.clone().unwrap_or_else(|| tmp.path().to_path_buf());
    let opts = TrainOptions {
        resume: keep.is_some(),
        quiet: true,
    };

    let mut lines: Vec<(bool, String)> = Vec::new();
    let mut record = |id: u32, name: &str, start: Instant, o: Outcome| {
        let line = format!(
            "criterion {id} {}: {name} ({:.1} s): {}",
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
        println!("{line}");
        lines.push((o.pass, line));
    };

    let quick: [Check; 3] = [
        (1, "gradient suite", criterion_gradients),
        (2, "distribution suite", criterion_distributions),
        (3, "slack mechanics", criterion_slack),
    ];
    for (id, name, f) in quick {
        if wanted(id) {
            let t = Instant::now();
            record(id, name, t, f());
        }
    }
    if wanted(4) || wanted(5) || wanted(6) {
        training_criteria(&root, &opts, jobs, &wanted, &mut record);
    }
    let quick: [Check; 2] = [
        (7, "rank-sum correctness", criterion_rank_sum),
        (8, "replay and attack statistics", criterion_replay_attack),
    ];
    for (id, name, f) in quick {
        if wanted(id) {
            let t = Instant::now();
            record(id, name, t, f());
        }
    }
    if wanted(9) {
        let t = Instant::now();
        record(9, "reproducibility", t, criterion_reproducibility(&root));
    }

    let failed = lines.iter().filter(|(p, _)| !p).count();
    println!(
        "acceptance: {}/{} criteria passed",
        lines.len() - failed,
        lines.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
