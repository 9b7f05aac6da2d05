use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use omd_bandit::harness::{
    game_csv, oracle::fixtures_report, parse_config, regret_csv, run_experiment, run_game, sweep, sweep_csv,
    write_experiment, write_game, write_text, ExperimentConfig, SweepParam,
};

/// Bandit experiments with log-barrier online mirror descent.
#[derive(Parser, Debug)]
#[command(name = "omd-bandit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one algorithm against one environment over every seed.
    Run(Overrides),
    /// Self-play on a two-player zero-sum matrix game.
    Game(Overrides),
    /// Repeat `run` for each value of one parameter.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// eta, gap or switches.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Recompute the reference fixtures and print them.
    Oracle,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// Config file (`key = value` lines plus an `[environment]` section).
    #[arg(long)]
    config: Option<PathBuf>,
    /// variance, path_plus, path_sum, best_of_both or exp3.
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    arms: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// A number, `default`, `auto` or `oracle`.
    #[arg(long)]
    eta: Option<String>,
    /// Comma-separated list, or a half-open range `a..b`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    master_seed: Option<u64>,
    /// Comma-separated rounds.
    #[arg(long)]
    checkpoints: Option<String>,
    /// Fail on the first violated invariant.
    #[arg(long, conflicts_with = "permissive")]
    strict: bool,
    /// Record violations instead of failing.
    #[arg(long)]
    permissive: bool,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Environment kind; replaces the file's environment section.
    #[arg(long = "env")]
    env_kind: Option<String>,
    /// Environment parameter as `key=value`, repeatable.
    #[arg(long = "env-param", requires = "env_kind")]
    env_params: Vec<String>,
}

impl Overrides {
    fn top_level(&self) -> Result<Vec<(&'static str, String)>> {
        let mut out = Vec::new();
        if let Some(v) = &self.algorithm {
            out.push(("algorithm", v.clone()));
        }
        if let Some(v) = self.arms {
            out.push(("arms", v.to_string()));
        }
        if let Some(v) = self.horizon {
            out.push(("horizon", v.to_string()));
        }
        if let Some(v) = &self.eta {
            out.push(("eta", v.clone()));
        }
        if let Some(v) = &self.seeds {
            out.push(("seeds", expand_seeds(v)?));
        }
        if let Some(v) = self.master_seed {
            out.push(("master_seed", v.to_string()));
        }
        if let Some(v) = &self.checkpoints {
            out.push(("checkpoints", v.clone()));
        }
        if self.strict {
            out.push(("strict", "true".into()));
        }
        if self.permissive {
            out.push(("strict", "false".into()));
        }
        if let Some(v) = &self.output {
            out.push(("output", v.display().to_string()));
        }
        Ok(out)
    }

    fn load(&self) -> Result<ExperimentConfig> {
        let base = match &self.config {
            Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            None => String::new(),
        };
        let text = merge(&base, &self.top_level()?, self.env_section()?.as_deref());
        Ok(parse_config(&text)?)
    }

    fn env_section(&self) -> Result<Option<String>> {
        let Some(kind) = &self.env_kind else { return Ok(None) };
        let mut s = format!("[environment]\nkind = {kind}\n");
        for p in &self.env_params {
            let Some((k, v)) = p.split_once('=') else {
                bail!("--env-param expects key=value, got `{p}`");
            };
            s.push_str(&format!("{} = {}\n", k.trim(), v.trim()));
        }
        Ok(Some(s))
    }
}

fn expand_seeds(v: &str) -> Result<String> {
    match v.split_once("..") {
        Some((a, b)) => {
            let a: u64 = a.trim().parse().with_context(|| format!("seeds: bad range start in `{v}`"))?;
            let b: u64 = b.trim().parse().with_context(|| format!("seeds: bad range end in `{v}`"))?;
            if a >= b {
                bail!("seeds: empty range `{v}`");
            }
            Ok((a..b).map(|s| s.to_string()).collect::<Vec<_>>().join(","))
        }
        None => Ok(v.to_string()),
    }
}

/// Rebuilds the config text with flag values replacing file values.
fn merge(base: &str, top: &[(&str, String)], env: Option<&str>) -> String {
    let mut head = String::new();
    let mut file_env = String::new();
    let mut in_env = false;
    for line in base.lines() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.starts_with('[') {
            in_env = true;
        }
        if in_env {
            file_env.push_str(line);
            file_env.push('\n');
            continue;
        }
        let key = body.split_once('=').map(|(k, _)| k.trim());
        if key.is_some_and(|k| top.iter().any(|(o, _)| *o == k)) {
            continue;
        }
        head.push_str(line);
        head.push('\n');
    }
    let mut seen = Vec::new();
    for (k, v) in top {
        // The last occurrence of a repeated flag wins.
        if seen.contains(k) {
            continue;
        }
        seen.push(*k);
        let v = top.iter().rev().find(|(o, _)| o == k).map(|(_, v)| v).unwrap_or(v);
        head.push_str(&format!("{k} = {v}\n"));
    }
    head.push_str(env.unwrap_or(&file_env));
    head
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(o) => {
            let cfg = o.load()?;
            if cfg.is_game() {
                bail!("the environment is a game; use the `game` subcommand");
            }
            let result = run_experiment(&cfg)?;
            write_experiment(&cfg, &result)?;
            if cfg.output.is_none() {
                print!("{}", regret_csv(&result.rows));
            }
            let restarts: u32 = result.replications.iter().map(|r| r.restarts).sum();
            let flagged: usize = result.replications.iter().map(|r| r.violation_rounds).sum();
            eprintln!(
                "{} seeds, {} rounds, final mean regret {:.4}, restarts {restarts}, rounds with violations {flagged}",
                cfg.seeds.len(),
                cfg.horizon,
                result.rows.last().map_or(f64::NAN, |r| r.mean_regret),
            );
        }
        Command::Game(o) => {
            let cfg = o.load()?;
            if !cfg.is_game() {
                bail!("the `game` subcommand needs a game environment (--env game)");
            }
            let result = run_game(&cfg)?;
            write_game(&cfg, &result)?;
            if cfg.output.is_none() {
                print!("{}", game_csv(&result.rows));
            }
        }
        Command::Sweep { overrides, param, values } => {
            let cfg = overrides.load()?;
            let param: SweepParam = param.parse()?;
            let text = sweep_csv(&sweep(&cfg, param, &values)?);
            match &cfg.output {
                Some(p) => write_text(p, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Oracle => print!("{}", fixtures_report()?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
