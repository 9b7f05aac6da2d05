//! Seeded replications, aggregation and CSV output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{Algorithm, EnvironmentSpec, EtaSetting, ExperimentConfig, GameSource};
use super::rng::{substream, Stream};
use crate::algorithm::{configure, game_player, BroadOmd, EtaChoice, Learner, RoundRecord, TableRow, BOOSTED_RATE_CAP};
use crate::baselines::{best_arm, path_length, variance_stat, Exp3, RegretAccumulator, RegretTrace};
use crate::barrier::FIXED_RATE_CAP;
use crate::env::{self, GameMatrix, GapEnvironment, LossMatrix, LossSource};
use crate::error::{Error, Result};
use crate::estimators::CheckMode;

/// One seed's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub seed: u64,
    pub trace: RegretTrace,
    pub restarts: u32,
    pub exploration_rounds: usize,
    /// Rounds with a logged violation (permissive mode only).
    pub violation_rounds: usize,
    /// Largest learning rate seen in any round (0 for Exp3).
    pub peak_rate: f64,
    pub diagnostics: Vec<DiagnosticRow>,
}

/// Per-round stability diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub t: usize,
    pub arm: usize,
    pub loss: f64,
    pub explored: bool,
    pub epoch: u32,
    pub max_rate: f64,
    pub weighted_error: f64,
    pub second_moment: f64,
    pub sandwich_min: f64,
    pub sandwich_max: f64,
}

impl DiagnosticRow {
    fn from_record(r: &RoundRecord) -> Self {
        let (max_rate, weighted_error, second_moment) = r
            .conditions
            .map_or((f64::NAN, f64::NAN, f64::NAN), |c| (c.max_rate, c.weighted_error, c.second_moment));
        let (sandwich_min, sandwich_max) = r.sandwich.unwrap_or((f64::NAN, f64::NAN));
        DiagnosticRow {
            t: r.t,
            arm: r.arm,
            loss: r.loss,
            explored: r.explored,
            epoch: r.epoch,
            max_rate,
            weighted_error,
            second_moment,
            sandwich_min,
            sandwich_max,
        }
    }
}

/// Sample mean and unbiased standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

/// Summarizes one value per seed; the result does not depend on seed order.
pub fn summarize(values: &[f64]) -> Summary {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() < 2 {
        0.0
    } else {
        let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
        dev.sort_by(f64::total_cmp);
        (dev.iter().sum::<f64>() / (n - 1.0)).sqrt()
    };
    Summary { mean, std }
}

/// Per-checkpoint summaries of per-seed series (all of equal length).
pub fn aggregate(per_seed: &[Vec<f64>]) -> Vec<Summary> {
    let len = per_seed.first().map_or(0, Vec::len);
    (0..len)
        .map(|c| summarize(&per_seed.iter().map(|s| s[c]).collect::<Vec<_>>()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretRow {
    pub checkpoint: usize,
    pub mean_regret: f64,
    pub std_regret: f64,
    pub mean_regret_prefix_best: f64,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub replications: Vec<Replication>,
    pub rows: Vec<RegretRow>,
}

impl ExperimentResult {
    pub fn row_at(&self, checkpoint: usize) -> Option<&RegretRow> {
        self.rows.iter().find(|r| r.checkpoint == checkpoint)
    }
}

/// Statistics of a loss matrix used for oracle tuning.
fn oracle_eta(row: TableRow, m: &LossMatrix) -> Result<f64> {
    let k = m.arms() as f64;
    let ln_t = (m.horizon() as f64).ln();
    let best = best_arm(&m.cumulative());
    let eta = match row {
        TableRow::Variance => {
            let q = variance_stat(m, best);
            if q > 0.0 { FIXED_RATE_CAP.min((k * ln_t / q).sqrt()) } else { FIXED_RATE_CAP }
        }
        TableRow::PathPlus => {
            let v = path_length(m, best);
            if v > 0.0 { BOOSTED_RATE_CAP.min(1.0 / (60.0 * (v * ln_t).sqrt())) } else { BOOSTED_RATE_CAP }
        }
        TableRow::PathSum => {
            let v: f64 = (0..m.arms()).map(|i| path_length(m, i)).sum();
            if v > 0.0 { FIXED_RATE_CAP.min((k * ln_t / (6.0 * v)).sqrt()) } else { FIXED_RATE_CAP }
        }
        TableRow::BestOfBoth => {
            return Err(Error::config("eta: oracle tuning is not defined for best_of_both"))
        }
    };
    Ok(eta)
}

fn mode(cfg: &ExperimentConfig) -> CheckMode {
    if cfg.strict { CheckMode::Strict } else { CheckMode::Permissive }
}

/// Materializes a matrix-backed environment for one seed.
fn build_matrix(cfg: &ExperimentConfig, seed: u64, playback: Option<&LossMatrix>) -> Result<Option<LossMatrix>> {
    let mut rng = substream(cfg.master_seed, seed, Stream::Environment);
    let (k, t) = (cfg.arms, cfg.horizon);
    Ok(Some(match &cfg.environment {
        EnvironmentSpec::Playback { .. } => playback.expect("playback matrix loaded").clone(),
        EnvironmentSpec::Switching { switches } => env::env_switching(k, t, *switches, &mut rng)?.matrix,
        EnvironmentSpec::SmallLoss { best } => env::small_loss(k, t, *best, &mut rng)?,
        EnvironmentSpec::Constant { values } => env::constant(values, t)?,
        EnvironmentSpec::Uniform { lo, hi } => env::uniform(k, t, *lo, *hi, &mut rng)?,
        EnvironmentSpec::Gap { .. } => return Ok(None),
        EnvironmentSpec::Game { .. } => {
            return Err(Error::config("environment: games run through the game command"))
        }
    }))
}

fn build_learner(cfg: &ExperimentConfig, seed: u64, matrix: Option<&LossMatrix>) -> Result<Box<dyn Learner + Send>> {
    let rng = substream(cfg.master_seed, seed, Stream::Learner);
    let row = match cfg.algorithm {
        Algorithm::Exp3 => {
            let eta = match cfg.eta {
                EtaSetting::Fixed(e) => e,
                _ => Exp3::<rand_chacha::ChaCha20Rng>::default_rate(cfg.arms, cfg.horizon),
            };
            return Ok(Box::new(Exp3::new(cfg.arms, cfg.horizon, eta, rng)?));
        }
        Algorithm::Row(r) => r,
    };
    let eta = match cfg.eta {
        EtaSetting::Default => EtaChoice::Default,
        EtaSetting::Fixed(e) => EtaChoice::Fixed(e),
        EtaSetting::Auto => EtaChoice::Auto,
        EtaSetting::Oracle => {
            let m = matrix.ok_or_else(|| Error::config("eta: oracle tuning needs a loss matrix"))?;
            EtaChoice::Fixed(oracle_eta(row, m)?)
        }
    };
    let settings = configure(row, cfg.arms, cfg.horizon, eta, mode(cfg))?;
    Ok(Box::new(BroadOmd::new(settings, rng)?))
}

fn with_seed(seed: u64, e: Error) -> Error {
    match e {
        Error::Invariant { round, detail } => Error::Invariant { round, detail: format!("seed {seed}: {detail}") },
        other => other,
    }
}

/// Runs one seed of a bandit experiment.
pub fn run_replication(cfg: &ExperimentConfig, seed: u64, playback: Option<&LossMatrix>) -> Result<Replication> {
    let matrix = build_matrix(cfg, seed, playback)?;
    let mut learner = build_learner(cfg, seed, matrix.as_ref())?;
    let mut source: Box<dyn LossSource> = match (&cfg.environment, matrix) {
        (_, Some(m)) => Box::new(m),
        (EnvironmentSpec::Gap { gap, base, best, family }, None) => Box::new(GapEnvironment::new(
            cfg.arms,
            *best,
            *gap,
            *base,
            *family,
            substream(cfg.master_seed, seed, Stream::Environment),
        )?),
        _ => unreachable!("non-matrix environments are gap environments"),
    };
    if source.arms() != cfg.arms {
        return Err(Error::config(format!(
            "arms: config says {}, environment has {}",
            cfg.arms,
            source.arms()
        )));
    }
    let keep_diagnostics = cfg.strict && cfg.output.is_some();
    let mut acc = RegretAccumulator::new(cfg.arms, &cfg.checkpoints);
    let mut rep = Replication {
        seed,
        trace: RegretTrace { checkpoints: vec![], regret: vec![], regret_prefix_best: vec![] },
        restarts: 0,
        exploration_rounds: 0,
        violation_rounds: 0,
        peak_rate: 0.0,
        diagnostics: vec![],
    };
    for t in 1..=cfg.horizon {
        let losses = source.next_losses(t)?;
        let arm = learner.select().map_err(|e| with_seed(seed, e))?;
        let record = learner.observe(losses[arm]).map_err(|e| with_seed(seed, e))?;
        acc.push(arm, &losses);
        rep.restarts += record.restarted as u32;
        rep.exploration_rounds += record.explored as usize;
        rep.violation_rounds += (!record.violations.is_empty()) as usize;
        if let Some(c) = &record.conditions {
            rep.peak_rate = rep.peak_rate.max(c.max_rate);
        }
        if keep_diagnostics {
            rep.diagnostics.push(DiagnosticRow::from_record(&record));
        }
    }
    rep.trace = acc.finish();
    Ok(rep)
}

/// Runs every seed (in parallel) and aggregates per checkpoint.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    if cfg.is_game() {
        return Err(Error::config("environment: games run through run_game"));
    }
    let playback = match &cfg.environment {
        EnvironmentSpec::Playback { path } => {
            let m = LossMatrix::read_csv(path)?;
            if m.horizon() != cfg.horizon {
                return Err(Error::config(format!(
                    "horizon: config says {}, {} has {} rounds",
                    cfg.horizon,
                    path.display(),
                    m.horizon()
                )));
            }
            Some(m)
        }
        _ => None,
    };
    let replications = cfg
        .seeds
        .par_iter()
        .map(|seed| run_replication(cfg, *seed, playback.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let regret: Vec<Vec<f64>> = replications.iter().map(|r| r.trace.regret.clone()).collect();
    let prefix: Vec<Vec<f64>> = replications.iter().map(|r| r.trace.regret_prefix_best.clone()).collect();
    let rows = aggregate(&regret)
        .into_iter()
        .zip(aggregate(&prefix))
        .zip(&cfg.checkpoints)
        .map(|((s, p), c)| RegretRow {
            checkpoint: *c,
            mean_regret: s.mean,
            std_regret: s.std,
            mean_regret_prefix_best: p.mean,
            seeds: cfg.seeds.len(),
        })
        .collect();
    Ok(ExperimentResult { replications, rows })
}

pub const REGRET_HEADER: &str = "checkpoint,mean_regret,std_regret,mean_regret_prefix_best,seeds";
pub const GAME_HEADER: &str = "checkpoint,mean_gap,std_gap";
pub const DIAGNOSTICS_HEADER: &str =
    "seed,t,arm,loss,explored,epoch,max_rate,weighted_error,second_moment,sandwich_min,sandwich_max";

pub fn regret_csv(rows: &[RegretRow]) -> String {
    let mut out = format!("{REGRET_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.checkpoint, r.mean_regret, r.std_regret, r.mean_regret_prefix_best, r.seeds
        );
    }
    out
}

fn data_records(text: &str, header: &str) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let found = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if found != header {
        return Err(Error::Parse { line: 1, message: format!("expected header `{header}`, got `{found}`") });
    }
    reader
        .records()
        .map(|r| {
            let r = r.map_err(|e| Error::Parse { line: 0, message: e.to_string() })?;
            let line = r.position().map_or(0, |p| p.line() as usize);
            Ok((line, r))
        })
        .collect()
}

fn field<T: std::str::FromStr>(r: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    r.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse { line, message: format!("bad or missing column {}", i + 1) })
}

pub fn parse_regret_csv(text: &str) -> Result<Vec<RegretRow>> {
    data_records(text, REGRET_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            Ok(RegretRow {
                checkpoint: field(&r, 0, line)?,
                mean_regret: field(&r, 1, line)?,
                std_regret: field(&r, 2, line)?,
                mean_regret_prefix_best: field(&r, 3, line)?,
                seeds: field(&r, 4, line)?,
            })
        })
        .collect()
}

pub fn diagnostics_csv(replications: &[Replication]) -> String {
    let mut out = format!("{DIAGNOSTICS_HEADER}\n");
    for rep in replications {
        for d in &rep.diagnostics {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                rep.seed,
                d.t,
                d.arm + 1,
                d.loss,
                d.explored,
                d.epoch,
                d.max_rate,
                d.weighted_error,
                d.second_moment,
                d.sandwich_min,
                d.sandwich_max
            );
        }
    }
    out
}

/// `results/regret.csv` -> `results/regret_diagnostics.csv`.
pub fn diagnostics_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    output.with_file_name(format!("{stem}_diagnostics.csv"))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Writes the regret CSV (and, in strict mode, the diagnostics CSV).
pub fn write_experiment(cfg: &ExperimentConfig, result: &ExperimentResult) -> Result<()> {
    if let Some(path) = &cfg.output {
        write_file(path, &regret_csv(&result.rows))?;
        if cfg.strict {
            write_file(&diagnostics_path(path), &diagnostics_csv(&result.replications))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameRow {
    pub checkpoint: usize,
    pub mean_gap: f64,
    pub std_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameResult {
    /// Gap per seed, per checkpoint.
    pub gaps: Vec<Vec<f64>>,
    pub rows: Vec<GameRow>,
}

pub fn load_game(source: &GameSource) -> Result<GameMatrix> {
    Ok(match source {
        GameSource::MatchingPennies => GameMatrix::matching_pennies(),
        GameSource::MatchingPenniesUnit => GameMatrix::matching_pennies_unit(),
        GameSource::File(p) => GameMatrix::from_csv(&std::fs::read_to_string(p)?)?,
    })
}

fn game_seat(
    cfg: &ExperimentConfig,
    arms: usize,
    opponent_arms: usize,
    rng: rand_chacha::ChaCha20Rng,
) -> Result<Box<dyn Learner + Send>> {
    match cfg.algorithm {
        Algorithm::Exp3 => {
            let eta = match cfg.eta {
                EtaSetting::Fixed(e) => e,
                _ => Exp3::<rand_chacha::ChaCha20Rng>::default_rate(arms, cfg.horizon),
            };
            Ok(Box::new(Exp3::new(arms, cfg.horizon, eta, rng)?))
        }
        Algorithm::Row(_) => {
            let mut s = game_player(arms, opponent_arms, cfg.horizon, mode(cfg))?;
            if let EtaSetting::Fixed(e) = cfg.eta {
                s.eta = e;
            }
            Ok(Box::new(BroadOmd::new(s, rng)?))
        }
    }
}

impl Learner for Box<dyn Learner + Send> {
    fn arms(&self) -> usize {
        (**self).arms()
    }

    fn select(&mut self) -> Result<usize> {
        (**self).select()
    }

    fn distribution(&self) -> &[f64] {
        (**self).distribution()
    }

    fn observe(&mut self, loss: f64) -> Result<RoundRecord> {
        (**self).observe(loss)
    }
}

/// Self-play over every seed; duality gap of the average strategies at each checkpoint.
pub fn run_game(cfg: &ExperimentConfig) -> Result<GameResult> {
    cfg.validate()?;
    let EnvironmentSpec::Game { matrix } = &cfg.environment else {
        return Err(Error::config("environment: the game command needs kind = game"));
    };
    let g = load_game(matrix)?;
    let gaps = cfg
        .seeds
        .par_iter()
        .map(|seed| {
            let mut row = game_seat(cfg, g.rows(), g.cols(), substream(cfg.master_seed, *seed, Stream::Learner))?;
            let mut col = game_seat(cfg, g.cols(), g.rows(), substream(cfg.master_seed, *seed, Stream::Opponent))?;
            let out = env::self_play(&g, &mut row, &mut col, cfg.horizon, &cfg.checkpoints, false)
                .map_err(|e| with_seed(*seed, e))?;
            Ok(out.checkpoint_gaps.into_iter().map(|(_, gap)| gap).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = aggregate(&gaps)
        .into_iter()
        .zip(&cfg.checkpoints)
        .map(|(s, c)| GameRow { checkpoint: *c, mean_gap: s.mean, std_gap: s.std })
        .collect();
    Ok(GameResult { gaps, rows })
}

pub fn game_csv(rows: &[GameRow]) -> String {
    let mut out = format!("{GAME_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.checkpoint, r.mean_gap, r.std_gap);
    }
    out
}

pub fn parse_game_csv(text: &str) -> Result<Vec<GameRow>> {
    data_records(text, GAME_HEADER)?
        .into_iter()
        .map(|(line, r)| {
            Ok(GameRow {
                checkpoint: field(&r, 0, line)?,
                mean_gap: field(&r, 1, line)?,
                std_gap: field(&r, 2, line)?,
            })
        })
        .collect()
}

pub fn write_game(cfg: &ExperimentConfig, result: &GameResult) -> Result<()> {
    if let Some(path) = &cfg.output {
        write_file(path, &game_csv(&result.rows))?;
    }
    Ok(())
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Eta,
    Gap,
    Switches,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eta" => Ok(SweepParam::Eta),
            "gap" => Ok(SweepParam::Gap),
            "switches" => Ok(SweepParam::Switches),
            _ => Err(Error::config(format!("sweep: unknown parameter `{s}` (eta, gap, switches)"))),
        }
    }
}

/// Applies `value` to a copy of the config.
pub fn with_param(cfg: &ExperimentConfig, param: SweepParam, value: f64) -> Result<ExperimentConfig> {
    let mut c = cfg.clone();
    match (param, &mut c.environment) {
        (SweepParam::Eta, _) => c.eta = EtaSetting::Fixed(value),
        (SweepParam::Gap, EnvironmentSpec::Gap { gap, .. }) => *gap = value,
        (SweepParam::Switches, EnvironmentSpec::Switching { switches }) => {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(Error::config(format!("sweep: switches must be an integer, got {value}")));
            }
            *switches = value as usize;
        }
        (p, env) => {
            return Err(Error::config(format!("sweep: {p:?} does not apply to a {} environment", env.kind())))
        }
    }
    c.validate()?;
    Ok(c)
}

/// One experiment per value; rows tagged with the value.
pub fn sweep(cfg: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<Vec<(f64, Vec<RegretRow>)>> {
    values
        .iter()
        .map(|v| Ok((*v, run_experiment(&with_param(cfg, param, *v)?)?.rows)))
        .collect()
}

pub fn sweep_csv(results: &[(f64, Vec<RegretRow>)]) -> String {
    let mut out = format!("value,{REGRET_HEADER}\n");
    for (v, rows) in results {
        for r in rows {
            let _ = writeln!(
                out,
                "{v},{},{},{},{},{}",
                r.checkpoint, r.mean_regret, r.std_regret, r.mean_regret_prefix_best, r.seeds
            );
        }
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text)
}
