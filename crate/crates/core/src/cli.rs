//! Command-line front end. Flags override values from `--config`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::eval::Alternative;
use crate::run::{
    cmd_compare, cmd_eval, cmd_sweep, cmd_train, Condition, EvalRequest, RunConfig, TrainOptions,
};

#[derive(Debug, Parser)]
#[command(
    name = "slack-sac",
    version,
    about = "SAC with a learned slack on the entropy lower bound"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train every configured seed of one condition.
    Train(RunArgs),
    /// Run test episodes from a checkpoint.
    Eval(EvalArgs),
    /// One-sided rank-sum test between two evaluations.
    Compare(CompareArgs),
    /// Train and evaluate several conditions over all seeds and compare them.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// conventional | slack_hstar_negA | slack_hstar_Hbar_minus_2A | custom
    #[arg(long)]
    pub condition: Option<Condition>,
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Output root (default: config, then $SLACK_SAC_OUT, then ./runs).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Extra `key=value` overrides with dotted keys, e.g. `agent.gamma=0.98`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Continue from the newest checkpoint of each run.
    #[arg(long)]
    pub resume: bool,
    /// Concurrent runs.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Per-step probability of replacing the action.
    #[arg(long, default_value_t = 0.0)]
    pub attack: f64,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Sample actions instead of using the mode.
    #[arg(long)]
    pub stochastic: bool,
    /// Output directory (default: the checkpoint's directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub tag: Option<String>,
    /// Per-step trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// First eval.csv (or directory containing one).
    pub a: PathBuf,
    /// Second eval.csv (or directory containing one).
    pub b: PathBuf,
    #[arg(long, default_value = "mean_action_l2")]
    pub metric: String,
    /// less: A tends to be smaller than B; greater: larger.
    #[arg(long, default_value = "less")]
    pub alternative: Alternative,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated conditions (default: the three presets).
    #[arg(long, value_delimiter = ',')]
    pub conditions: Option<Vec<Condition>>,
}

/// Parses `value` as a TOML literal, falling back to a bare string.
fn literal(value: &str) -> toml::Value {
    format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts = key.split('.').peekable();
    let mut cur = table;
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            cur.insert(part.to_string(), value);
            return Ok(());
        }
        let slot = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = slot
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{part}` in `{key}` is not a table")))?;
    }
    Err(Error::Config(format!("empty override key `{key}`")))
}

impl RunArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut table: toml::Table = match &self.config {
            Some(path) => std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?
                .parse()
                .map_err(|e: toml::de::Error| {
                    Error::Config(format!("{} is not valid TOML: {e}", path.display()))
                })?,
            None => toml::Table::new(),
        };
        if let Some(c) = self.condition {
            set_path(&mut table, "condition", toml::Value::String(c.tag().into()))?;
        }
        if let Some(env) = &self.env {
            set_path(&mut table, "env.name", toml::Value::String(env.clone()))?;
        }
        if let Some(n) = self.episodes {
            set_path(&mut table, "episodes", toml::Value::Integer(n as i64))?;
        }
        if let Some(seeds) = &self.seeds {
            let list = seeds
                .iter()
                .map(|&s| toml::Value::Integer(s as i64))
                .collect();
            set_path(&mut table, "seeds", toml::Value::Array(list))?;
        }
        if let Some(out) = &self.out {
            set_path(
                &mut table,
                "output_dir",
                toml::Value::String(out.display().to_string()),
            )?;
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{kv}` is not KEY=VALUE")))?;
            set_path(&mut table, k.trim(), literal(v.trim()))?;
        }
        RunConfig::from_overrides(toml::Value::Table(table))
    }

    fn options(&self) -> TrainOptions {
        TrainOptions {
            resume: self.resume,
            quiet: self.quiet,
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.resolve()?;
            for o in cmd_train(&cfg, &args.options(), args.jobs)? {
                let last = o.rows.last().expect("episodes >= 1");
                println!(
                    "{}  episodes {}  final return {:.3}  final ln pi {:.3}",
                    o.dir.display(),
                    o.rows.len(),
                    last.episode_return,
                    last.mean_log_pi
                );
            }
        }
        Command::Eval(args) => {
            let (_, report) = cmd_eval(&EvalRequest {
                checkpoint: args.checkpoint,
                attack_probability: args.attack,
                episodes: args.episodes,
                deterministic: !args.stochastic,
                out_dir: args.out,
                condition_tag: args.tag,
                trace: args.trace,
            })?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Compare(args) => {
            let report = cmd_compare(&args.a, &args.b, &args.metric, args.alternative)?;
            let text = serde_json::to_string_pretty(&report)?;
            if let Some(path) = &args.out {
                std::fs::write(path, format!("{text}\n"))?;
            }
            println!("{text}");
        }
        Command::Sweep(args) => {
            let cfg = args.run.resolve()?;
            let conditions = args
                .conditions
                .unwrap_or_else(|| Condition::PRESETS.to_vec());
            let report = cmd_sweep(&cfg, &conditions, &args.run.options(), args.run.jobs)?;
            println!("{}", serde_json::to_string_pretty(&report.comparisons)?);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("slack-sac").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_file_and_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "episodes = 40\n[agent]\nalpha_lr = 1e-3\n").unwrap();
        let p = path.to_str().unwrap();
        let cli = parse(&[
            "train",
            "--config",
            p,
            "--episodes",
            "7",
            "--seeds",
            "1,2",
            "--condition",
            "slack_hstar_negA",
            "--set",
            "agent.gamma=0.95",
            "--set",
            "env.name=pendulum",
        ]);
        let Command::Train(args) = cli.command else {
            panic!()
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.episodes, 7);
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.condition, Condition::SlackHstarNegA);
        assert_eq!(cfg.agent.alpha_lr, 1e-3);
        assert_eq!(cfg.agent.gamma, 0.95);
        assert_eq!(cfg.agent.hidden, vec![16, 16]);
        assert_eq!(cfg.env.name, "pendulum");
    }

    #[test]
    fn bad_inputs_are_config_errors() {
        let Command::Train(args) = parse(&["train", "--set", "agent.nonsense=1"]).command else {
            panic!()
        };
        assert_eq!(args.resolve().unwrap_err().exit_code(), 2);
        assert!(Cli::try_parse_from(["slack-sac", "train", "--condition", "greedy"]).is_err());
        assert!(
            Cli::try_parse_from(["slack-sac", "compare", "a", "b", "--alternative", "two"])
                .is_err()
        );
        let Command::Sweep(args) =
            parse(&["sweep", "--conditions", "conventional,slack_hstar_negA"]).command
        else {
            panic!()
        };
        assert_eq!(args.conditions.unwrap().len(), 2);
    }
}
