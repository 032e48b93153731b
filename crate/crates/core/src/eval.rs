//! Test episodes under action-replacement attacks, summary statistics and the
//! one-sided Mann-Whitney rank-sum test.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::envs::{AttackConfig, AttackWrapper, Env};
use crate::error::{Error, Result};
use crate::policy::PolicyNet;
use crate::seed;

pub const EVAL_SCHEMA: &str = "eval.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub episode_index: usize,
    pub condition_tag: String,
    pub episode_return: f64,
    /// Mean per-step L2 norm of the policy's intended (pre-attack) action.
    pub mean_action_l2: f64,
    pub mean_log_pi: f64,
    pub attack_count: u64,
}

/// Options for [`run_eval`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub n_episodes: usize,
    pub deterministic: bool,
    /// Episode `i` resets the environment with `derive(base_seed, i)`.
    pub base_seed: u64,
    pub condition_tag: String,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            n_episodes: 100,
            deterministic: true,
            base_seed: 0,
            condition_tag: String::new(),
        }
    }
}

/// Runs test episodes; the policy is only read. When `trace` is given, one
/// CSV row per step is written: `episode,t,state..,action..,reward,attacked`.
pub fn run_eval(
    policy: &PolicyNet,
    env: Box<dyn Env>,
    attack: AttackConfig,
    opts: &EvalOptions,
    mut trace: Option<&mut dyn Write>,
) -> Result<Vec<EvalRecord>> {
    let mut env = AttackWrapper::new(env, attack)?;
    let state_dim = env.spec().state_dim;
    if let Some(w) = trace.as_deref_mut() {
        let mut cols = vec!["episode".to_string(), "t".to_string()];
        cols.extend((0..state_dim).map(|i| format!("s{i}")));
        cols.extend((0..policy.action_dim).map(|i| format!("a{i}")));
        cols.extend(["reward".to_string(), "attacked".to_string()]);
        writeln!(w, "{}", cols.join(","))?;
    }
    let mut out = Vec::with_capacity(opts.n_episodes);
    for i in 0..opts.n_episodes {
        let ep_seed = seed::derive(opts.base_seed, i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(ep_seed, 1));
        let mut state = env.reset(ep_seed);
        let (mut ret, mut norm, mut lp, mut attacks, mut steps) = (0.0, 0.0, 0.0, 0u64, 0usize);
        loop {
            let (action, log_pi) = policy.act(&state, &mut rng, opts.deterministic)?;
            let (step, attacked) = env.attack_step(&action)?;
            if let Some(w) = trace.as_deref_mut() {
                let mut row = vec![i.to_string(), steps.to_string()];
                row.extend(state.iter().chain(&action).map(|v| v.to_string()));
                row.push(step.reward.to_string());
                row.push((attacked as u8).to_string());
                writeln!(w, "{}", row.join(","))?;
            }
            ret += step.reward;
            norm += action.iter().map(|a| a * a).sum::<f64>().sqrt();
            lp += log_pi;
            attacks += attacked as u64;
            steps += 1;
            state = step.next_state;
            if step.done || step.truncated {
                break;
            }
        }
        let n = steps as f64;
        let rec = EvalRecord {
            episode_index: i,
            condition_tag: opts.condition_tag.clone(),
            episode_return: ret,
            mean_action_l2: norm / n,
            mean_log_pi: lp / n,
            attack_count: attacks,
        };
        if !(rec.episode_return.is_finite()
            && rec.mean_action_l2.is_finite()
            && rec.mean_log_pi.is_finite())
        {
            return Err(Error::NonFinite(format!(
                "evaluation episode {i} produced non-finite metrics"
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_eval_csv(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "# schema={EVAL_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(file);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_eval_csv(path: &Path) -> Result<Vec<EvalRecord>> {
    let text = std::fs::read_to_string(path)?;
    let first = text.lines().next().unwrap_or_default();
    if first.trim() != format!("# schema={EVAL_SCHEMA}") {
        return Err(Error::Schema(format!(
            "{}: expected `# schema={EVAL_SCHEMA}` header, found `{first}`",
            path.display()
        )));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let records = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<EvalRecord>, _>>()
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`).
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn describe(values: &[f64]) -> Result<Stats> {
    if values.is_empty() {
        return Err(Error::Empty("no values to summarize".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Stats {
        n: values.len(),
        mean,
        sd: var.sqrt(),
        median: quantile_sorted(&sorted, 0.5),
        q1: quantile_sorted(&sorted, 0.25),
        q3: quantile_sorted(&sorted, 0.75),
    })
}

pub const METRICS: [&str; 4] = [
    "episode_return",
    "mean_action_l2",
    "mean_log_pi",
    "attack_count",
];

pub fn metric_value(r: &EvalRecord, metric: &str) -> Result<f64> {
    Ok(match metric {
        "episode_return" => r.episode_return,
        "mean_action_l2" => r.mean_action_l2,
        "mean_log_pi" => r.mean_log_pi,
        "attack_count" => r.attack_count as f64,
        other => {
            return Err(Error::Schema(format!(
                "unknown metric `{other}` (known: {})",
                METRICS.join(", ")
            )))
        }
    })
}

/// Per condition, per metric statistics.
pub type Summary = BTreeMap<String, BTreeMap<String, Stats>>;

pub fn summarize(records: &[EvalRecord]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::Empty("no evaluation records".into()));
    }
    let mut by_tag: BTreeMap<String, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        by_tag.entry(r.condition_tag.clone()).or_default().push(r);
    }
    let mut out = Summary::new();
    for (tag, recs) in by_tag {
        let mut per = BTreeMap::new();
        for m in METRICS {
            let vals = recs
                .iter()
                .map(|r| metric_value(r, m))
                .collect::<Result<Vec<_>>>()?;
            per.insert(m.to_string(), describe(&vals)?);
        }
        out.insert(tag, per);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// `x` tends to be smaller than `y`.
    Less,
    /// `x` tends to be larger than `y`.
    Greater,
}

impl std::str::FromStr for Alternative {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "less" => Ok(Self::Less),
            "greater" => Ok(Self::Greater),
            other => Err(Error::Config(format!(
                "alternative must be less or greater, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSumResult {
    /// `U_x`: pairs with `x > y`, ties counting one half.
    pub u_statistic: f64,
    pub p_value: f64,
    pub alternative: Alternative,
    pub n_x: usize,
    pub n_y: usize,
    pub method: PValueMethod,
    /// Every observation identical; `p = 1` by convention.
    pub degenerate: bool,
}

/// Midranks (1-based) of the pooled sample and the tie-group sizes.
fn midranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + (j + 1)) as f64;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

/// Number of arrangements of `m` x's and `n` y's with each `U_x = u`, for
/// `u = 0..=m*n`.
fn u_distribution(m: usize, n: usize) -> Vec<f64> {
    // table[j][u] for the current i, built up over i = 0..=m
    let max_u = m * n;
    let mut prev: Vec<Vec<f64>> = (0..=n)
        .map(|_| {
            let mut v = vec![0.0; max_u + 1];
            v[0] = 1.0;
            v
        })
        .collect();
    for i in 1..=m {
        let mut cur: Vec<Vec<f64>> = vec![vec![0.0; max_u + 1]; n + 1];
        cur[0][0] = 1.0;
        for j in 1..=n {
            for u in 0..=i * j {
                // Largest element is an x (beats all j y's) or a y.
                let from_x = if u >= j { prev[j][u - j] } else { 0.0 };
                cur[j][u] = from_x + cur[j - 1][u];
            }
        }
        prev = cur;
    }
    prev[n].clone()
}

/// Exact one-sided p-value of `U_x = u` assuming no ties.
pub fn rank_sum_exact_p(u: f64, n_x: usize, n_y: usize, alternative: Alternative) -> f64 {
    let dist = u_distribution(n_x, n_y);
    let total: f64 = dist.iter().sum();
    let count: f64 = dist
        .iter()
        .enumerate()
        .filter(|(k, _)| match alternative {
            Alternative::Less => (*k as f64) <= u + 1e-9,
            Alternative::Greater => (*k as f64) >= u - 1e-9,
        })
        .map(|(_, c)| c)
        .sum();
    (count / total).clamp(0.0, 1.0)
}

/// Normal approximation with continuity and tie correction.
pub fn rank_sum_normal_p(
    u: f64,
    n_x: usize,
    n_y: usize,
    tie_sizes: &[usize],
    alternative: Alternative,
) -> f64 {
    let (m, n) = (n_x as f64, n_y as f64);
    let total = m + n;
    let tie_term: f64 = tie_sizes
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let var = m * n / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    if !(var > 0.0) {
        return 1.0;
    }
    let sd = var.sqrt();
    let mean = 0.5 * m * n;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let p = match alternative {
        Alternative::Less => std_normal.cdf((u - mean + 0.5) / sd),
        Alternative::Greater => 1.0 - std_normal.cdf((u - mean - 0.5) / sd),
    };
    p.clamp(0.0, 1.0)
}

/// One-sided Mann-Whitney test of `x` against `y`. Exact enumeration when
/// `n_x + n_y <= 12` and there are no ties, normal approximation otherwise.
pub fn mann_whitney_u(x: &[f64], y: &[f64], alternative: Alternative) -> Result<RankSumResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Empty(
            "rank-sum test needs two non-empty samples".into(),
        ));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(
            "rank-sum input contains a non-finite value".into(),
        ));
    }
    let (n_x, n_y) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let r_x: f64 = ranks[..n_x].iter().sum();
    let u = r_x - (n_x * (n_x + 1)) as f64 / 2.0;
    let base = RankSumResult {
        u_statistic: u,
        p_value: 1.0,
        alternative,
        n_x,
        n_y,
        method: PValueMethod::Exact,
        degenerate: false,
    };
    if ties.len() == 1 {
        return Ok(RankSumResult {
            degenerate: true,
            ..base
        });
    }
    let tie_free = ties.iter().all(|&t| t == 1);
    if tie_free && n_x + n_y <= 12 {
        Ok(RankSumResult {
            p_value: rank_sum_exact_p(u, n_x, n_y, alternative),
            ..base
        })
    } else {
        Ok(RankSumResult {
            p_value: rank_sum_normal_p(u, n_x, n_y, &ties, alternative),
            method: PValueMethod::Normal,
            ..base
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{make_env, EnvConfig};
    use crate::policy::PolicyKind;

    #[test]
    fn rank_sum_examples() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0], Alternative::Less).unwrap();
        assert_eq!(r.u_statistic, 0.0);
        assert!((r.p_value - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(r.method, PValueMethod::Exact);
        let r = mann_whitney_u(&[10.0, 11.0, 12.0], &[1.0, 2.0, 3.0], Alternative::Less).unwrap();
        assert!(r.p_value >= 0.95);
        let r =
            mann_whitney_u(&[10.0, 11.0, 12.0], &[1.0, 2.0, 3.0], Alternative::Greater).unwrap();
        assert!((r.p_value - 1.0 / 20.0).abs() < 1e-15);
        let same = [0.3, 1.2, 5.0, 2.2];
        let r = mann_whitney_u(&same, &same, Alternative::Less).unwrap();
        assert!(r.p_value >= 0.5);
    }

    #[test]
    fn degenerate_all_equal() {
        let r = mann_whitney_u(&[2.0, 2.0], &[2.0, 2.0, 2.0], Alternative::Greater).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_value, 1.0);
        assert!(mann_whitney_u(&[], &[1.0], Alternative::Less).is_err());
    }

    #[test]
    fn u_distribution_counts_sum_to_binomial() {
        let d = u_distribution(4, 5);
        assert_eq!(d.iter().sum::<f64>(), 126.0);
        // symmetric about m n / 2
        for u in 0..=20 {
            assert_eq!(d[u], d[20 - u]);
        }
    }

    #[test]
    fn ties_use_midranks_and_normal_method() {
        let r = mann_whitney_u(&[1.0, 2.0, 2.0], &[2.0, 3.0], Alternative::Less).unwrap();
        // x: 1 beats none; each 2 ties with the y 2 (0.5) -> U = 1.0
        assert_eq!(r.u_statistic, 1.0);
        assert_eq!(r.method, PValueMethod::Normal);
    }

    #[test]
    fn describe_values() {
        let s = describe(&[4.0]).unwrap();
        assert_eq!((s.mean, s.sd, s.median), (4.0, 0.0, 4.0));
        let s = describe(&[0.0, 1.0]).unwrap();
        assert_eq!((s.mean, s.sd), (0.5, 0.5));
        let s = describe(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (2.0, 3.0, 4.0));
        assert!(describe(&[]).is_err());
    }

    fn zero_policy(sd: usize, ad: usize) -> PolicyNet {
        let mut p = PolicyNet::new(sd, ad, &[8], PolicyKind::StudentT, 1).unwrap();
        p.params.zero_output_layer();
        p
    }

    #[test]
    fn eval_zero_policy_and_determinism() {
        let policy = zero_policy(4, 2);
        let opts = EvalOptions {
            n_episodes: 3,
            condition_tag: "z".into(),
            ..EvalOptions::default()
        };
        let env = || make_env(&EnvConfig::default()).unwrap();
        let a = run_eval(&policy, env(), AttackConfig::none(), &opts, None).unwrap();
        let b = run_eval(&policy, env(), AttackConfig::none(), &opts, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        for r in &a {
            assert_eq!(r.mean_action_l2, 0.0);
            assert_eq!(r.attack_count, 0);
        }
        let none = EvalOptions {
            n_episodes: 0,
            ..opts
        };
        assert!(run_eval(&policy, env(), AttackConfig::none(), &none, None)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn eval_never_touches_policy_and_traces() {
        let policy = zero_policy(4, 2);
        let before = policy.clone();
        let opts = EvalOptions {
            n_episodes: 1,
            deterministic: false,
            ..EvalOptions::default()
        };
        let mut trace = Vec::new();
        let recs = run_eval(
            &policy,
            make_env(&EnvConfig::default()).unwrap(),
            AttackConfig::with_probability(0.5),
            &opts,
            Some(&mut trace),
        )
        .unwrap();
        assert_eq!(policy, before);
        let text = String::from_utf8(trace).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "episode,t,s0,s1,s2,s3,a0,a1,reward,attacked");
        assert_eq!(lines.len(), 201);
        let attacked: u64 = lines[1..]
            .iter()
            .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
            .sum();
        assert_eq!(attacked, recs[0].attack_count);
    }

    #[test]
    fn eval_csv_roundtrip_and_schema_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("eval.csv");
        let recs = vec![EvalRecord {
            episode_index: 0,
            condition_tag: "c".into(),
            episode_return: -1.5,
            mean_action_l2: 0.25,
            mean_log_pi: 0.1,
            attack_count: 7,
        }];
        write_eval_csv(&path, &recs).unwrap();
        assert_eq!(read_eval_csv(&path).unwrap(), recs);
        std::fs::write(&path, "episode_index,foo\n0,1\n").unwrap();
        assert!(matches!(read_eval_csv(&path), Err(Error::Schema(_))));
    }
}
