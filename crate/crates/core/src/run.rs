//! Run configuration, the training loop and the `train` / `eval` / `compare` /
//! `sweep` commands.
//!
//! A run directory holds everything needed to reproduce it:
//!
//! ```text
//! <out>/<env>/<condition>/seed_<k>/
//!   config.toml          resolved configuration for this seed
//!   seeds.json           every derived seed used by the run
//!   metrics.csv          one row per training episode
//!   timing.csv           wall time per episode (kept out of metrics.csv)
//!   checkpoints/ep_NNNNNN.ckpt
//!   checkpoint.ckpt      final agent, replay buffer and episode counter
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Container;
use crate::envs::{make_env, AttackConfig, EnvConfig};
use crate::error::{Error, Result};
use crate::eval::{
    describe, mann_whitney_u, metric_value, read_eval_csv, run_eval, summarize, write_eval_csv,
    Alternative, EvalOptions, EvalRecord, PValueMethod, Summary,
};
use crate::replay::{ReplayBuffer, Transition};
use crate::sac::{Agent, AgentConfig, EntropyMode};
use crate::seed;

pub const METRICS_SCHEMA: &str = "metrics.v1";
/// Default output root when neither the config nor a flag names one.
pub const OUTPUT_ROOT_VAR: &str = "SLACK_SAC_OUT";

const ENV_SEED_TAG: u64 = 100;
const EVAL_SEED_TAG: u64 = 200;
const ATTACK_SEED_TAG: u64 = 300;

/// Entropy-bound setting of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Condition {
    /// `H* = -|A|`, no slack.
    #[serde(rename = "conventional")]
    Conventional,
    /// `H* = -|A|`, `Delta in [0, |A|(1 + ln 2)]`.
    #[serde(rename = "slack_hstar_negA")]
    SlackHstarNegA,
    /// `H* = |A|(ln 2 - 2)`, `Delta in [0, 2|A|]`.
    #[serde(rename = "slack_hstar_Hbar_minus_2A")]
    SlackHstarHbarMinus2A,
    /// `entropy_mode` and `h_star` taken from the `[agent]` section.
    #[serde(rename = "custom")]
    Custom,
}

impl Condition {
    pub const PRESETS: [Condition; 3] = [
        Condition::Conventional,
        Condition::SlackHstarNegA,
        Condition::SlackHstarHbarMinus2A,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Condition::Conventional => "conventional",
            Condition::SlackHstarNegA => "slack_hstar_negA",
            Condition::SlackHstarHbarMinus2A => "slack_hstar_Hbar_minus_2A",
            Condition::Custom => "custom",
        }
    }

    /// `(entropy_mode, h_star)` of a preset; `None` for `Custom`.
    pub fn preset(self, action_dim: usize) -> Option<(EntropyMode, f64)> {
        let a = action_dim as f64;
        match self {
            Condition::Conventional => Some((EntropyMode::Conventional, -a)),
            Condition::SlackHstarNegA => Some((EntropyMode::Slack, -a)),
            Condition::SlackHstarHbarMinus2A => {
                Some((EntropyMode::Slack, a * (std::f64::consts::LN_2 - 2.0)))
            }
            Condition::Custom => None,
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [Condition::Custom]
            .into_iter()
            .chain(Condition::PRESETS)
            .find(|c| c.tag() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown condition `{s}` (known: conventional, slack_hstar_negA, \
                     slack_hstar_Hbar_minus_2A, custom)"
                ))
            })
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub condition: Condition,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    /// Intermediate checkpoint period in episodes; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Test episodes per evaluation.
    pub eval_episodes: usize,
    /// Episodes averaged for the end-of-training entropy and return.
    pub final_window: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub env: EnvConfig,
    /// Attack used by evaluations that ask for one.
    pub attack: AttackConfig,
    pub agent: AgentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            condition: Condition::Conventional,
            episodes: 300,
            seeds: (0..8).collect(),
            checkpoint_every: 100,
            eval_episodes: 100,
            final_window: 50,
            output_dir: None,
            env: EnvConfig::default(),
            attack: AttackConfig::with_probability(0.2),
            agent: AgentConfig {
                hidden: vec![16, 16],
                ..AgentConfig::default()
            },
        }
    }
}

/// Recursively overlays `over` onto `base` (tables merge, everything else replaces).
fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// Parses a TOML document; keys that are absent keep their defaults, so a
    /// partial `[agent]` table does not reset the other agent settings.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let over: toml::Value = text.parse().map_err(|e: toml::de::Error| {
            Error::Config(format!("config is not valid TOML: {e}"))
        })?;
        Self::from_overrides(over)
    }

    /// Applies a TOML value (a table) on top of the defaults.
    pub fn from_overrides(over: toml::Value) -> Result<Self> {
        let mut base = toml::Value::try_from(RunConfig::default())
            .map_err(|e| Error::Config(format!("cannot encode defaults: {e}")))?;
        merge(&mut base, over);
        let cfg: RunConfig = base
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("config schema: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot encode config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.final_window == 0 {
            return Err(Error::Config("final_window must be >= 1".into()));
        }
        self.attack.validate()?;
        self.agent.validate()?;
        make_env(&self.env)?;
        Ok(())
    }

    /// Output root: the config value, else `$SLACK_SAC_OUT`, else `runs`.
    pub fn output_root(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
    }

    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.output_root()
            .join(&self.env.name)
            .join(self.condition.tag())
            .join(format!("seed_{seed}"))
    }

    /// Agent settings for one seed with the condition applied.
    pub fn agent_config(&self, seed: u64, action_dim: usize) -> Result<AgentConfig> {
        let mut agent = self.agent.clone();
        agent.seed = seed;
        if let Some((mode, h_star)) = self.condition.preset(action_dim) {
            if let Some(h) = agent.h_star {
                if h != h_star {
                    return Err(Error::Config(format!(
                        "agent.h_star = {h} conflicts with condition `{}` (H* = {h_star}); \
                         use condition = \"custom\" to set it freely",
                        self.condition
                    )));
                }
            }
            agent.entropy_mode = mode;
            agent.h_star = Some(h_star);
        }
        agent.validate()?;
        Ok(agent)
    }
}

/// One training episode as written to `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: usize,
    #[serde(rename = "return")]
    pub episode_return: f64,
    /// Mean `ln pi` over the replayed update batches after this episode.
    pub mean_log_pi: f64,
    /// Mean `ln pi` of the sampled actions during the rollout.
    pub rollout_log_pi: f64,
    pub alpha: f64,
    pub mean_delta: f64,
    /// Fraction of slack samples in the equality branch (`|e| > eps`).
    pub branch1_fraction: f64,
    /// Mean per-step L2 norm of the sampled rollout actions.
    pub mean_action_l2: f64,
    pub replay_batches: usize,
}

fn write_schema_line(w: &mut impl Write, schema: &str) -> Result<()> {
    writeln!(w, "# schema={schema}")?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path)?;
    let first = text.lines().next().unwrap_or_default();
    if first.trim() != format!("# schema={METRICS_SCHEMA}") {
        return Err(Error::Schema(format!(
            "{}: expected `# schema={METRICS_SCHEMA}`, found `{first}`",
            path.display()
        )));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    rdr.deserialize()
        .collect::<std::result::Result<Vec<MetricsRow>, _>>()
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

const METRICS_HEADER: &str = "episode,return,mean_log_pi,rollout_log_pi,alpha,mean_delta,\
branch1_fraction,mean_action_l2,replay_batches";

/// Writes the schema line, header and `rows`; returns a writer for appending.
fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<csv::Writer<fs::File>> {
    let mut file = fs::File::create(path)?;
    write_schema_line(&mut file, METRICS_SCHEMA)?;
    writeln!(file, "{METRICS_HEADER}")?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(w)
}

/// Seeds derived for one run, written to `seeds.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub seed: u64,
    /// Episode `i` resets the environment with `derive(env_base, i)`.
    pub env_base: u64,
    pub eval_base: u64,
    pub attack_seed: u64,
}

impl RunSeeds {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            env_base: seed::derive(seed, ENV_SEED_TAG),
            eval_base: seed::derive(seed, EVAL_SEED_TAG),
            attack_seed: seed::derive(seed, ATTACK_SEED_TAG),
        }
    }
}

/// Agent, replay buffer and progress of a run; what a checkpoint holds.
pub struct TrainState {
    pub config: RunConfig,
    pub seed: u64,
    pub agent: Agent,
    pub buffer: ReplayBuffer,
    pub episodes_done: usize,
}

impl TrainState {
    pub fn new(config: &RunConfig, seed: u64) -> Result<Self> {
        let env = make_env(&config.env)?;
        let spec = env.spec();
        let agent_cfg = config.agent_config(seed, spec.action_dim)?;
        let buffer = ReplayBuffer::new(agent_cfg.buffer_max)?;
        let agent = Agent::new(agent_cfg, spec.state_dim, spec.action_dim)?;
        Ok(Self {
            config: config.clone(),
            seed,
            agent,
            buffer,
            episodes_done: 0,
        })
    }

    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new();
        c.set_meta("run.config", serde_json::to_string(&self.config)?);
        c.set_meta("run.seed", self.seed.to_string());
        c.set_meta("run.episodes_done", self.episodes_done.to_string());
        self.agent.export(&mut c)?;
        self.buffer.export("replay", &mut c);
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let parse = |key: &str| -> Result<u64> {
            c.meta(key)?
                .parse()
                .map_err(|e| Error::Checkpoint(format!("{key}: {e}")))
        };
        Ok(Self {
            config: serde_json::from_str(c.meta("run.config")?)?,
            seed: parse("run.seed")?,
            episodes_done: parse("run.episodes_done")? as usize,
            agent: Agent::import(c)?,
            buffer: ReplayBuffer::import("replay", c)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }

    /// Rolls out one episode with sampled actions, stores it and replays.
    pub fn run_episode(&mut self) -> Result<MetricsRow> {
        let seeds = RunSeeds::new(self.seed);
        let mut env = make_env(&self.config.env)?;
        let mut state = env.reset(seed::derive(seeds.env_base, self.episodes_done as u64));
        let (mut ret, mut log_pi, mut norm, mut steps) = (0.0, 0.0, 0.0, 0usize);
        loop {
            let (action, lp) = self.agent.act(&state, false)?;
            let step = env.step(&action)?;
            ret += step.reward;
            log_pi += lp;
            norm += action.iter().map(|a| a * a).sum::<f64>().sqrt();
            steps += 1;
            let end = step.done || step.truncated;
            self.buffer.push(Transition {
                state,
                action,
                next_state: step.next_state.clone(),
                reward: step.reward,
                done: step.done,
                truncated: step.truncated,
            })?;
            state = step.next_state;
            if end {
                break;
            }
        }
        let stats = self.agent.train_on_episode_end(&self.buffer)?;
        let n = steps as f64;
        let row = MetricsRow {
            episode: self.episodes_done,
            episode_return: ret,
            mean_log_pi: stats.mean_log_pi,
            rollout_log_pi: log_pi / n,
            alpha: stats.alpha,
            mean_delta: stats.mean_delta,
            branch1_fraction: stats.equality_fraction,
            mean_action_l2: norm / n,
            replay_batches: stats.batches,
        };
        self.episodes_done += 1;
        Ok(row)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainOptions {
    /// Continue from the newest checkpoint in the run directory, if any.
    pub resume: bool,
    /// Suppress per-episode progress on stderr.
    pub quiet: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
}

fn checkpoint_dir(dir: &Path) -> PathBuf {
    dir.join("checkpoints")
}

/// The final checkpoint if present, else the newest intermediate one.
fn latest_checkpoint(dir: &Path) -> Result<Option<PathBuf>> {
    let last = dir.join("checkpoint.ckpt");
    if last.is_file() {
        return Ok(Some(last));
    }
    let cdir = checkpoint_dir(dir);
    if !cdir.is_dir() {
        return Ok(None);
    }
    let mut found: Vec<PathBuf> = fs::read_dir(&cdir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
        .collect();
    found.sort();
    Ok(found.pop())
}

/// Trains one seed into its run directory.
pub fn train_seed(config: &RunConfig, seed: u64, opts: &TrainOptions) -> Result<TrainOutcome> {
    config.validate()?;
    let dir = config.run_dir(seed);
    if !opts.resume && checkpoint_dir(&dir).is_dir() {
        fs::remove_dir_all(checkpoint_dir(&dir))?;
    }
    fs::create_dir_all(checkpoint_dir(&dir))?;
    let mut seeded = config.clone();
    seeded.seeds = vec![seed];
    fs::write(dir.join("config.toml"), seeded.to_toml()?)?;
    fs::write(
        dir.join("seeds.json"),
        serde_json::to_string_pretty(&RunSeeds::new(seed))? + "\n",
    )?;

    let mut state = TrainState::new(&seeded, seed)?;
    let mut rows = Vec::new();
    let mut timings: Vec<(usize, f64)> = Vec::new();
    if opts.resume {
        if let Some(path) = latest_checkpoint(&dir)? {
            let mut loaded = TrainState::load(&path)?;
            // Only the episode budget may change between resumes.
            let mut same = loaded.config.clone();
            same.episodes = seeded.episodes;
            if same != seeded || loaded.episodes_done > seeded.episodes {
                return Err(Error::Config(format!(
                    "{} was written with a different configuration",
                    path.display()
                )));
            }
            loaded.config = seeded.clone();
            state = loaded;
            rows = read_metrics_csv(&dir.join("metrics.csv"))?;
            rows.truncate(state.episodes_done);
            if rows.len() != state.episodes_done {
                return Err(Error::Checkpoint(format!(
                    "metrics.csv has {} rows, checkpoint is at episode {}",
                    rows.len(),
                    state.episodes_done
                )));
            }
            timings = read_timing(&dir.join("timing.csv")).unwrap_or_default();
            timings.truncate(state.episodes_done);
        }
    }

    let mut metrics = write_metrics_csv(&dir.join("metrics.csv"), &rows)?;
    let mut timing = fs::File::create(dir.join("timing.csv"))?;
    writeln!(timing, "episode,wall_time_s")?;
    for (ep, t) in &timings {
        writeln!(timing, "{ep},{t}")?;
    }

    while state.episodes_done < config.episodes {
        let start = Instant::now();
        let row = state.run_episode()?;
        let elapsed = start.elapsed().as_secs_f64();
        metrics.serialize(&row)?;
        metrics.flush()?;
        writeln!(timing, "{},{elapsed:.6}", row.episode)?;
        if !opts.quiet && (row.episode + 1) % 25 == 0 {
            eprintln!(
                "[{} seed {seed}] episode {:>5}  return {:>10.3}  ln pi {:>7.3}  alpha {:.4}  delta {:.3}",
                config.condition, row.episode + 1, row.episode_return, row.mean_log_pi, row.alpha, row.mean_delta
            );
        }
        rows.push(row);
        let k = config.checkpoint_every;
        if k > 0 && state.episodes_done % k == 0 && state.episodes_done < config.episodes {
            state
                .save(&checkpoint_dir(&dir).join(format!("ep_{:06}.ckpt", state.episodes_done)))?;
        }
    }
    state.save(&dir.join("checkpoint.ckpt"))?;
    Ok(TrainOutcome { dir, seed, rows })
}

fn read_timing(path: &Path) -> Result<Vec<(usize, f64)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize()
        .collect::<std::result::Result<Vec<(usize, f64)>, _>>()
        .map_err(Error::from)
}

/// Trains every configured seed, `jobs` at a time.
pub fn cmd_train(
    config: &RunConfig,
    opts: &TrainOptions,
    jobs: usize,
) -> Result<Vec<TrainOutcome>> {
    config.validate()?;
    let seeds = config.seeds.clone();
    parallel_map(&seeds, jobs, |&s| train_seed(config, s, opts))
}

/// Runs `f` over `items` on up to `jobs` threads, keeping input order.
fn parallel_map<T: Sync, R: Send>(
    items: &[T],
    jobs: usize,
    f: impl Fn(&T) -> Result<R> + Sync,
) -> Result<Vec<R>> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<R>>>> =
        Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, items.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

/// Options of [`cmd_eval`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRequest {
    pub checkpoint: PathBuf,
    pub attack_probability: f64,
    pub episodes: usize,
    pub deterministic: bool,
    /// Where `eval.csv` and `summary.json` go; defaults to the checkpoint's directory.
    pub out_dir: Option<PathBuf>,
    pub condition_tag: Option<String>,
    /// Optional per-step trace CSV.
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint: PathBuf,
    pub attack: AttackConfig,
    pub deterministic: bool,
    pub summary: Summary,
}

/// Loads the agent of a checkpoint and runs test episodes.
pub fn evaluate_state(
    state: &TrainState,
    attack: AttackConfig,
    episodes: usize,
    deterministic: bool,
    tag: &str,
    trace: Option<&mut dyn Write>,
) -> Result<Vec<EvalRecord>> {
    let seeds = RunSeeds::new(state.seed);
    let opts = EvalOptions {
        n_episodes: episodes,
        deterministic,
        base_seed: seeds.eval_base,
        condition_tag: tag.to_string(),
    };
    run_eval(
        &state.agent.policy,
        make_env(&state.config.env)?,
        attack,
        &opts,
        trace,
    )
}

pub fn cmd_eval(req: &EvalRequest) -> Result<(Vec<EvalRecord>, EvalReport)> {
    let state = TrainState::load(&req.checkpoint)?;
    let attack = AttackConfig {
        probability: req.attack_probability,
        rng_seed: RunSeeds::new(state.seed).attack_seed,
        ..state.config.attack
    };
    attack.validate()?;
    let tag = req.condition_tag.clone().unwrap_or_else(|| {
        format!(
            "{}/seed_{}/p{}",
            state.config.condition, state.seed, attack.probability
        )
    });
    let mut trace_file = req.trace.as_ref().map(fs::File::create).transpose()?;
    let records = evaluate_state(
        &state,
        attack,
        req.episodes,
        req.deterministic,
        &tag,
        trace_file.as_mut().map(|f| f as &mut dyn Write),
    )?;
    let out = req
        .out_dir
        .clone()
        .or_else(|| req.checkpoint.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    fs::create_dir_all(&out)?;
    write_eval_csv(&out.join("eval.csv"), &records)?;
    let summary = if records.is_empty() {
        Summary::new()
    } else {
        summarize(&records)?
    };
    let report = EvalReport {
        checkpoint: req.checkpoint.clone(),
        attack,
        deterministic: req.deterministic,
        summary,
    };
    fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    Ok((records, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub metric: String,
    pub alternative: Alternative,
    pub n_x: usize,
    pub n_y: usize,
    pub u_statistic: f64,
    pub p_value: f64,
    pub method: PValueMethod,
    pub degenerate: bool,
    pub median_x: f64,
    pub median_y: f64,
    pub mean_x: f64,
    pub mean_y: f64,
}

/// Rank-sum comparison of two samples of one metric.
pub fn compare_values(
    x: &[f64],
    y: &[f64],
    metric: &str,
    alternative: Alternative,
) -> Result<CompareReport> {
    let r = mann_whitney_u(x, y, alternative)?;
    let (sx, sy) = (describe(x)?, describe(y)?);
    Ok(CompareReport {
        metric: metric.to_string(),
        alternative,
        n_x: r.n_x,
        n_y: r.n_y,
        u_statistic: r.u_statistic,
        p_value: r.p_value,
        method: r.method,
        degenerate: r.degenerate,
        median_x: sx.median,
        median_y: sy.median,
        mean_x: sx.mean,
        mean_y: sy.mean,
    })
}

/// `path` may be an `eval.csv` file or a directory containing one.
fn eval_csv_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join("eval.csv")
    } else {
        path.to_path_buf()
    }
}

/// Compares one metric of two evaluations; `alternative = less` asks whether
/// the first tends to be smaller.
pub fn cmd_compare(
    a: &Path,
    b: &Path,
    metric: &str,
    alternative: Alternative,
) -> Result<CompareReport> {
    let load = |p: &Path| -> Result<Vec<f64>> {
        read_eval_csv(&eval_csv_path(p))?
            .iter()
            .map(|r| metric_value(r, metric))
            .collect()
    };
    compare_values(&load(a)?, &load(b)?, metric, alternative)
}

/// Attacked return relative to the clean return: `1 + (R_att - R_clean) / |R_clean|`.
/// Equals `R_att / R_clean` for positive returns; below 1 means the attack hurt.
pub fn degradation_ratio(clean: f64, attacked: f64) -> f64 {
    1.0 + (attacked - clean) / clean.abs()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub condition: Condition,
    pub seed: u64,
    /// Mean of `-mean_log_pi` over the final window of training.
    pub final_entropy: f64,
    pub final_rollout_entropy: f64,
    pub final_return: f64,
    pub clean_return: f64,
    pub attacked_return: f64,
    /// Mean intended-action L2 norm under attack.
    pub attacked_action_l2: f64,
    pub clean_action_l2: f64,
    pub degradation_ratio: f64,
}

fn window_mean(rows: &[MetricsRow], window: usize, f: impl Fn(&MetricsRow) -> f64) -> f64 {
    let tail = &rows[rows.len().saturating_sub(window)..];
    tail.iter().map(f).sum::<f64>() / tail.len() as f64
}

/// Trains (unless already complete), then evaluates clean and attacked.
pub fn run_seed(config: &RunConfig, seed: u64, opts: &TrainOptions) -> Result<SeedResult> {
    let outcome = train_seed(config, seed, opts)?;
    let state = TrainState::load(&outcome.dir.join("checkpoint.ckpt"))?;
    let seeds = RunSeeds::new(seed);
    let attack = AttackConfig {
        rng_seed: seeds.attack_seed,
        ..config.attack
    };
    let tag = format!("{}/seed_{seed}", config.condition);
    let clean = evaluate_state(
        &state,
        AttackConfig::none(),
        config.eval_episodes,
        true,
        &tag,
        None,
    )?;
    let attacked = evaluate_state(&state, attack, config.eval_episodes, true, &tag, None)?;
    write_eval_csv(&outcome.dir.join("eval_clean.csv"), &clean)?;
    write_eval_csv(&outcome.dir.join("eval_attack.csv"), &attacked)?;
    let mean = |recs: &[EvalRecord], f: fn(&EvalRecord) -> f64| {
        recs.iter().map(f).sum::<f64>() / recs.len().max(1) as f64
    };
    let clean_return = mean(&clean, |r| r.episode_return);
    let attacked_return = mean(&attacked, |r| r.episode_return);
    let w = config.final_window;
    Ok(SeedResult {
        condition: config.condition,
        seed,
        final_entropy: window_mean(&outcome.rows, w, |r| -r.mean_log_pi),
        final_rollout_entropy: window_mean(&outcome.rows, w, |r| -r.rollout_log_pi),
        final_return: window_mean(&outcome.rows, w, |r| r.episode_return),
        clean_return,
        attacked_return,
        attacked_action_l2: mean(&attacked, |r| r.mean_action_l2),
        clean_action_l2: mean(&clean, |r| r.mean_action_l2),
        degradation_ratio: degradation_ratio(clean_return, attacked_return),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub env: String,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub h_star: Vec<(Condition, f64)>,
    pub results: Vec<SeedResult>,
    /// Each slack condition against the conventional one.
    pub comparisons: Vec<(Condition, Vec<CompareReport>)>,
}

impl SweepReport {
    pub fn of(&self, condition: Condition) -> Vec<&SeedResult> {
        self.results
            .iter()
            .filter(|r| r.condition == condition)
            .collect()
    }

    pub fn values(&self, condition: Condition, f: impl Fn(&SeedResult) -> f64) -> Vec<f64> {
        self.of(condition).into_iter().map(f).collect()
    }
}

type SeedTest = (&'static str, Alternative, fn(&SeedResult) -> f64);

/// Trains and evaluates every `(condition, seed)` pair and compares each
/// condition with the conventional one across seeds.
pub fn cmd_sweep(
    base: &RunConfig,
    conditions: &[Condition],
    opts: &TrainOptions,
    jobs: usize,
) -> Result<SweepReport> {
    base.validate()?;
    let action_dim = make_env(&base.env)?.spec().action_dim;
    let mut pairs = Vec::new();
    let mut h_star = Vec::new();
    for &c in conditions {
        let cfg = RunConfig {
            condition: c,
            ..base.clone()
        };
        h_star.push((
            c,
            cfg.agent_config(0, action_dim)?.resolved_h_star(action_dim),
        ));
        for &s in &base.seeds {
            pairs.push((cfg.clone(), s));
        }
    }
    let results = parallel_map(&pairs, jobs, |(cfg, s)| run_seed(cfg, *s, opts))?;
    let mut report = SweepReport {
        env: base.env.name.clone(),
        episodes: base.episodes,
        seeds: base.seeds.clone(),
        h_star,
        results,
        comparisons: Vec::new(),
    };
    if conditions.contains(&Condition::Conventional) {
        let conv = Condition::Conventional;
        for &c in conditions.iter().filter(|&&c| c != conv) {
            let tests: [SeedTest; 4] = [
                ("final_entropy", Alternative::Greater, |r| r.final_entropy),
                ("attacked_action_l2", Alternative::Less, |r| {
                    r.attacked_action_l2
                }),
                ("attacked_return", Alternative::Greater, |r| {
                    r.attacked_return
                }),
                ("degradation_ratio", Alternative::Greater, |r| {
                    r.degradation_ratio
                }),
            ];
            let reports = tests
                .iter()
                .map(|(name, alt, f)| {
                    compare_values(&report.values(c, f), &report.values(conv, f), name, *alt)
                })
                .collect::<Result<Vec<_>>>()?;
            report.comparisons.push((c, reports));
        }
    }
    let dir = base.output_root().join(&base.env.name);
    fs::create_dir_all(&dir)?;
    fs::write(
        dir.join("sweep.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    Ok(report)
}
