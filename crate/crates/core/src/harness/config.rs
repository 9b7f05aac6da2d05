//! Experiment configuration in a flat `key = value` format.
//!
//! ```text
//! algorithm = best_of_both
//! arms = 8
//! horizon = 100000
//! eta = auto
//! seeds = 1, 2, 3
//! checkpoints = 10000, 100000
//! strict = true
//! output = results/regret.csv
//!
//! [environment]
//! kind = gap
//! gap = 0.2
//! ```
//!
//! Blank lines and `#` comments are ignored. Arm indices are 1-based.

use std::path::PathBuf;
use std::str::FromStr;

use crate::algorithm::TableRow;
use crate::env::GapFamily;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Row(TableRow),
    Exp3,
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "exp3" {
            Ok(Algorithm::Exp3)
        } else {
            s.parse().map(Algorithm::Row)
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Algorithm::Row(r) => write!(f, "{r}"),
            Algorithm::Exp3 => f.write_str("exp3"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaSetting {
    Default,
    Fixed(f64),
    /// Doubling wrapper.
    Auto,
    /// Tuned from statistics of the generated loss matrix.
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GameSource {
    MatchingPennies,
    /// `[[0, 1], [1, 0]]`.
    MatchingPenniesUnit,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvironmentSpec {
    Playback { path: PathBuf },
    Gap { gap: f64, base: f64, best: usize, family: GapFamily },
    Switching { switches: usize },
    /// Best arm loses nothing, the others draw Bernoulli(1/2).
    SmallLoss { best: usize },
    Constant { values: Vec<f64> },
    Uniform { lo: f64, hi: f64 },
    Game { matrix: GameSource },
}

impl EnvironmentSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            EnvironmentSpec::Playback { .. } => "playback",
            EnvironmentSpec::Gap { .. } => "gap",
            EnvironmentSpec::Switching { .. } => "switching",
            EnvironmentSpec::SmallLoss { .. } => "small_loss",
            EnvironmentSpec::Constant { .. } => "constant",
            EnvironmentSpec::Uniform { .. } => "uniform",
            EnvironmentSpec::Game { .. } => "game",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub arms: usize,
    pub horizon: usize,
    pub eta: EtaSetting,
    pub environment: EnvironmentSpec,
    pub seeds: Vec<u64>,
    /// Key shared by every seed's random streams.
    pub master_seed: u64,
    pub checkpoints: Vec<usize>,
    pub strict: bool,
    pub output: Option<PathBuf>,
}

/// About 20 logarithmically spaced rounds ending at `horizon`.
pub fn default_checkpoints(horizon: usize) -> Vec<usize> {
    let ln_t = (horizon as f64).ln();
    let mut out: Vec<usize> = (0..20)
        .map(|k| ((ln_t * k as f64 / 19.0).exp().round() as usize).clamp(1, horizon))
        .collect();
    out.push(horizon);
    out.sort_unstable();
    out.dedup();
    out
}

impl ExperimentConfig {
    /// A config with defaults for everything but the essentials.
    pub fn new(algorithm: Algorithm, arms: usize, horizon: usize, environment: EnvironmentSpec) -> Self {
        ExperimentConfig {
            algorithm,
            arms,
            horizon,
            eta: EtaSetting::Default,
            environment,
            seeds: vec![0],
            master_seed: 0,
            checkpoints: default_checkpoints(horizon),
            strict: true,
            output: None,
        }
    }

    pub fn is_game(&self) -> bool {
        matches!(self.environment, EnvironmentSpec::Game { .. })
    }

    /// Every violated constraint, each naming its field.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.horizon < 3 {
            v.push(format!("horizon: must be at least 3, got {}", self.horizon));
        }
        if !self.is_game() && self.arms < 2 {
            v.push(format!("arms: must be at least 2, got {}", self.arms));
        }
        if self.seeds.is_empty() {
            v.push("seeds: at least one seed is required".into());
        }
        let mut sorted_seeds = self.seeds.clone();
        sorted_seeds.sort_unstable();
        if sorted_seeds.windows(2).any(|w| w[0] == w[1]) {
            v.push("seeds: duplicates are not allowed".into());
        }
        if self.checkpoints.is_empty() {
            v.push("checkpoints: at least one checkpoint is required".into());
        }
        if self.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            v.push("checkpoints: must be strictly increasing".into());
        }
        if self.checkpoints.iter().any(|c| *c == 0 || *c > self.horizon) {
            v.push(format!("checkpoints: must lie in 1..={}", self.horizon));
        }
        match (self.eta, self.algorithm) {
            (EtaSetting::Fixed(e), _) if !(e > 0.0 && e.is_finite()) => {
                v.push(format!("eta: must be positive, got {e}"))
            }
            (EtaSetting::Auto, Algorithm::Row(r)) if !r.supports_auto() => {
                v.push(format!("eta: auto is only valid for path_sum and best_of_both, not {r}"))
            }
            (EtaSetting::Auto | EtaSetting::Oracle, Algorithm::Exp3) => {
                v.push("eta: exp3 takes a number or the default".into())
            }
            (EtaSetting::Oracle, Algorithm::Row(TableRow::BestOfBoth)) => {
                v.push("eta: oracle tuning is not defined for best_of_both; use auto".into())
            }
            (EtaSetting::Oracle, _) if matches!(self.environment, EnvironmentSpec::Gap { .. }) => {
                v.push("eta: oracle tuning needs a materialized loss matrix, not a gap environment".into())
            }
            _ => {}
        }
        if self.is_game() {
            if !matches!(self.algorithm, Algorithm::Exp3 | Algorithm::Row(TableRow::PathSum)) {
                v.push(format!("algorithm: games use path_sum or exp3, not {}", self.algorithm));
            }
            if matches!(self.eta, EtaSetting::Auto | EtaSetting::Oracle) {
                v.push("eta: games use the default rate or a number".into());
            }
        }
        match &self.environment {
            EnvironmentSpec::Gap { gap, base, best, family } => {
                if !(*gap > 0.0 && *gap <= 1.0) {
                    v.push(format!("environment.gap: must lie in (0, 1], got {gap}"));
                }
                if !(0.0..=1.0).contains(base) || base - gap < 0.0 {
                    v.push(format!("environment.base: need 0 <= base - gap and base <= 1, got base {base}"));
                }
                if *best >= self.arms {
                    v.push(format!("environment.best: must lie in 1..={}", self.arms));
                }
                if let GapFamily::Markov { stay } = family {
                    if !(0.0..=1.0).contains(stay) {
                        v.push(format!("environment.stay: must lie in [0, 1], got {stay}"));
                    }
                }
            }
            EnvironmentSpec::Switching { switches } if *switches >= self.horizon => {
                v.push(format!("environment.switches: must be below the horizon, got {switches}"));
            }
            EnvironmentSpec::SmallLoss { best } if *best >= self.arms => {
                v.push(format!("environment.best: must lie in 1..={}", self.arms));
            }
            EnvironmentSpec::Constant { values } => {
                if values.len() != self.arms {
                    v.push(format!("environment.values: expected {} values, got {}", self.arms, values.len()));
                }
                if values.iter().any(|x| !(-1.0..=1.0).contains(x)) {
                    v.push("environment.values: losses must lie in [-1, 1]".into());
                }
            }
            EnvironmentSpec::Uniform { lo, hi } if !(-1.0 <= *lo && lo <= hi && *hi <= 1.0) => {
                v.push(format!("environment.lo/hi: [{lo}, {hi}] must be a range inside [-1, 1]"));
            }
            _ => {}
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str, errors: &mut Vec<String>) -> Vec<T> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.parse() {
            Ok(x) => out.push(x),
            Err(_) => errors.push(format!("{key}: cannot parse `{item}`")),
        }
    }
    out
}

fn parse_one<T: FromStr>(key: &str, value: &str, errors: &mut Vec<String>) -> Option<T> {
    match value.parse() {
        Ok(x) => Some(x),
        Err(_) => {
            errors.push(format!("{key}: cannot parse `{value}`"));
            None
        }
    }
}

/// Parses and validates a configuration, reporting every problem at once.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut errors = Vec::new();
    let mut top: Vec<(String, String)> = Vec::new();
    let mut env: Vec<(String, String)> = Vec::new();
    let mut in_env = false;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if line == "[environment]" {
                in_env = true;
            } else {
                errors.push(format!("line {}: unknown section {line}", n + 1));
            }
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            errors.push(format!("line {}: expected `key = value`", n + 1));
            continue;
        };
        let entry = (k.trim().to_string(), v.trim().to_string());
        let target = if in_env { &mut env } else { &mut top };
        if target.iter().any(|(key, _)| *key == entry.0) {
            errors.push(format!("line {}: duplicate key `{}`", n + 1, entry.0));
        }
        target.push(entry);
    }

    let get = |list: &[(String, String)], key: &str| {
        list.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone())
    };

    for (k, _) in &top {
        if !["algorithm", "arms", "horizon", "eta", "seeds", "master_seed", "checkpoints", "strict", "output"]
            .contains(&k.as_str())
        {
            errors.push(format!("{k}: unknown key"));
        }
    }

    let algorithm = match get(&top, "algorithm") {
        Some(a) => match a.parse::<Algorithm>() {
            Ok(a) => Some(a),
            Err(_) => {
                errors.push(format!("algorithm: unknown value `{a}`"));
                None
            }
        },
        None => None,
    };
    let arms = get(&top, "arms").and_then(|v| parse_one::<usize>("arms", &v, &mut errors));
    let horizon = get(&top, "horizon").and_then(|v| parse_one::<usize>("horizon", &v, &mut errors));
    if horizon.is_none() && get(&top, "horizon").is_none() {
        errors.push("horizon: missing".into());
    }
    let eta = match get(&top, "eta").as_deref() {
        None | Some("default") => EtaSetting::Default,
        Some("auto") => EtaSetting::Auto,
        Some("oracle") => EtaSetting::Oracle,
        Some(v) => parse_one::<f64>("eta", v, &mut errors).map_or(EtaSetting::Default, EtaSetting::Fixed),
    };
    let seeds = get(&top, "seeds").map_or(vec![0], |v| parse_list("seeds", &v, &mut errors));
    let master_seed = get(&top, "master_seed")
        .and_then(|v| parse_one("master_seed", &v, &mut errors))
        .unwrap_or(0);
    let strict = match get(&top, "strict").as_deref() {
        None | Some("true") => true,
        Some("false") => false,
        Some(v) => {
            errors.push(format!("strict: expected true or false, got `{v}`"));
            true
        }
    };
    let output = get(&top, "output").map(PathBuf::from);

    let environment = parse_environment(&env, &mut errors);
    let algorithm = algorithm.or_else(|| match environment {
        Some(EnvironmentSpec::Game { .. }) => Some(Algorithm::Row(TableRow::PathSum)),
        _ => {
            errors.push("algorithm: missing".into());
            None
        }
    });
    let arms = arms.or_else(|| match &environment {
        Some(EnvironmentSpec::Game { .. }) => Some(0),
        Some(EnvironmentSpec::Constant { values }) => Some(values.len()),
        _ => {
            errors.push("arms: missing".into());
            None
        }
    });

    let (Some(algorithm), Some(arms), Some(horizon), Some(environment)) = (algorithm, arms, horizon, environment)
    else {
        return Err(Error::Config(errors));
    };
    let checkpoints = get(&top, "checkpoints").map_or_else(
        || default_checkpoints(horizon),
        |v| parse_list("checkpoints", &v, &mut errors),
    );
    let cfg = ExperimentConfig {
        algorithm,
        arms,
        horizon,
        eta,
        environment,
        seeds,
        master_seed,
        checkpoints,
        strict,
        output,
    };
    errors.extend(cfg.violations());
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errors))
    }
}

fn parse_environment(env: &[(String, String)], errors: &mut Vec<String>) -> Option<EnvironmentSpec> {
    let get = |key: &str| env.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
    let allowed: &[&str] = match get("kind") {
        Some("playback") => &["kind", "path"],
        Some("gap") => &["kind", "gap", "base", "best", "family", "stay"],
        Some("switching") => &["kind", "switches"],
        Some("small_loss") => &["kind", "best"],
        Some("constant") => &["kind", "values"],
        Some("uniform") => &["kind", "lo", "hi"],
        Some("game") => &["kind", "matrix"],
        Some(k) => {
            errors.push(format!("environment.kind: unknown value `{k}`"));
            return None;
        }
        None => {
            errors.push("environment.kind: missing".into());
            return None;
        }
    };
    for (k, _) in env {
        if !allowed.contains(&k.as_str()) {
            errors.push(format!("environment.{k}: unknown key for this kind"));
        }
    }
    let mut number = |key: &str, default: Option<f64>| -> Option<f64> {
        match get(key) {
            Some(v) => parse_one(&format!("environment.{key}"), v, errors),
            None if default.is_some() => default,
            None => {
                errors.push(format!("environment.{key}: missing"));
                None
            }
        }
    };
    let best_arm = |v: Option<f64>, errors: &mut Vec<String>| -> Option<usize> {
        let b = v?;
        if b < 1.0 || b.fract() != 0.0 {
            errors.push(format!("environment.best: expected a 1-based arm index, got {b}"));
            return None;
        }
        Some(b as usize - 1)
    };
    match get("kind")? {
        "playback" => match get("path") {
            Some(p) => Some(EnvironmentSpec::Playback { path: PathBuf::from(p) }),
            None => {
                errors.push("environment.path: missing".into());
                None
            }
        },
        "gap" => {
            let gap = number("gap", None);
            let base = number("base", Some(0.5));
            let best = number("best", Some(1.0));
            let family = match get("family") {
                None | Some("bernoulli") => Some(GapFamily::Bernoulli),
                Some("markov") => number("stay", Some(0.9)).map(|stay| GapFamily::Markov { stay }),
                Some(f) => {
                    errors.push(format!("environment.family: unknown value `{f}`"));
                    None
                }
            };
            let best = best_arm(best, errors);
            Some(EnvironmentSpec::Gap { gap: gap?, base: base?, best: best?, family: family? })
        }
        "switching" => {
            let s = number("switches", None)?;
            if s < 0.0 || s.fract() != 0.0 {
                errors.push(format!("environment.switches: expected a non-negative integer, got {s}"));
                return None;
            }
            Some(EnvironmentSpec::Switching { switches: s as usize })
        }
        "small_loss" => {
            let best = number("best", Some(1.0));
            Some(EnvironmentSpec::SmallLoss { best: best_arm(best, errors)? })
        }
        "constant" => match get("values") {
            Some(v) => Some(EnvironmentSpec::Constant { values: parse_list("environment.values", v, errors) }),
            None => {
                errors.push("environment.values: missing".into());
                None
            }
        },
        "uniform" => {
            let lo = number("lo", Some(-1.0));
            let hi = number("hi", Some(1.0));
            Some(EnvironmentSpec::Uniform { lo: lo?, hi: hi? })
        }
        "game" => {
            let matrix = match get("matrix") {
                None | Some("matching_pennies_unit") => GameSource::MatchingPenniesUnit,
                Some("matching_pennies") => GameSource::MatchingPennies,
                Some(path) => GameSource::File(PathBuf::from(path)),
            };
            Some(EnvironmentSpec::Game { matrix })
        }
        _ => None,
    }
}
