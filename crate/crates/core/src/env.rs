//! Loss-generating environments and zero-sum self-play.

use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;

use crate::algorithm::Learner;
use crate::error::{Error, Result};

/// Per-round loss vectors fixed ahead of time, entries in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix {
    arms: usize,
    entries: Vec<f64>,
}

impl LossMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let arms = rows.first().map_or(0, Vec::len);
        if arms == 0 {
            return Err(Error::Domain("loss matrix needs at least one row and column".into()));
        }
        let mut entries = Vec::with_capacity(arms * rows.len());
        for (t, row) in rows.into_iter().enumerate() {
            if row.len() != arms {
                return Err(Error::Dimension { expected: arms, got: row.len() });
            }
            if let Some(v) = row.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
                return Err(Error::Domain(format!("loss {v} at round {} outside [-1, 1]", t + 1)));
            }
            entries.extend(row);
        }
        Ok(LossMatrix { arms, entries })
    }

    /// Builds a matrix from a per-round generator.
    pub fn generate(horizon: usize, mut row: impl FnMut(usize) -> Vec<f64>) -> Result<Self> {
        LossMatrix::new((1..=horizon).map(&mut row).collect())
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn horizon(&self) -> usize {
        self.entries.len() / self.arms
    }

    /// Loss vector of round `t` (1-based).
    pub fn row(&self, t: usize) -> Result<&[f64]> {
        if t == 0 || t > self.horizon() {
            return Err(Error::RoundOutOfRange { round: t, horizon: self.horizon() });
        }
        Ok(&self.entries[(t - 1) * self.arms..t * self.arms])
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks(self.arms)
    }

    pub fn column(&self, arm: usize) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().skip(arm).step_by(self.arms).copied()
    }

    pub fn cumulative(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.arms];
        for row in self.rows() {
            for (acc, v) in total.iter_mut().zip(row) {
                *acc += v;
            }
        }
        total
    }

    /// Parses CSV text: one row per round, `K` columns, with an optional
    /// `round,arm_1,...,arm_K` header (rows then carry a leading round column).
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut rows = Vec::new();
        let mut with_round = false;
        for (idx, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Parse { line: idx + 1, message: e.to_string() })?;
            let line = record.position().map_or(idx + 1, |p| p.line() as usize);
            if idx == 0 && record.get(0) == Some("round") {
                with_round = true;
                continue;
            }
            let fields: Vec<&str> = record.iter().collect();
            let values = if with_round {
                let round: usize = fields[0]
                    .parse()
                    .map_err(|_| Error::Parse { line, message: format!("bad round `{}`", fields[0]) })?;
                if round != rows.len() + 1 {
                    return Err(Error::Parse { line, message: format!("expected round {}, got {round}", rows.len() + 1) });
                }
                &fields[1..]
            } else {
                &fields[..]
            };
            let row = values
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Parse { line, message: format!("bad number `{s}`") })
                })
                .collect::<Result<Vec<f64>>>()?;
            if let Some(v) = row.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
                return Err(Error::Parse { line, message: format!("loss {v} outside [-1, 1]") });
            }
            rows.push(row);
        }
        LossMatrix::new(rows).map_err(|e| match e {
            Error::Dimension { expected, got } => Error::Parse {
                line: 0,
                message: format!("ragged rows: expected {expected} columns, got {got}"),
            },
            other => other,
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    /// CSV text with a header and round column; floats round-trip exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round");
        for i in 1..=self.arms {
            out.push_str(&format!(",arm_{i}"));
        }
        out.push('\n');
        for (t, row) in self.rows().enumerate() {
            out.push_str(&(t + 1).to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Source of full loss vectors, one per round, in order.
pub trait LossSource {
    fn arms(&self) -> usize;
    fn next_losses(&mut self, t: usize) -> Result<Vec<f64>>;
}

impl LossSource for LossMatrix {
    fn arms(&self) -> usize {
        self.arms
    }

    fn next_losses(&mut self, t: usize) -> Result<Vec<f64>> {
        Ok(self.row(t)?.to_vec())
    }
}

/// Distribution family of a stochastic environment with a gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GapFamily {
    /// Independent Bernoulli losses, fixed means.
    Bernoulli,
    /// Bernoulli losses whose means all shift together with a two-state
    /// Markov chain that keeps its state with probability `stay`.
    Markov { stay: f64 },
}

/// Stochastic losses in `{0, 1}` where one arm's conditional mean is lower
/// than every other arm's by `gap`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapEnvironment<R> {
    arms: usize,
    best: usize,
    gap: f64,
    base: f64,
    family: GapFamily,
    high: bool,
    rng: R,
}

impl<R: Rng> GapEnvironment<R> {
    pub fn new(arms: usize, best: usize, gap: f64, base: f64, family: GapFamily, rng: R) -> Result<Self> {
        let mut problems = Vec::new();
        if best >= arms {
            problems.push(format!("best arm {} outside 1..={arms}", best + 1));
        }
        if !(gap > 0.0 && gap <= 1.0) {
            problems.push(format!("gap must lie in (0, 1], got {gap}"));
        }
        if !(0.0..=1.0).contains(&base) {
            problems.push(format!("base mean must lie in [0, 1], got {base}"));
        } else if base - gap < 0.0 {
            problems.push(format!("base - gap must be non-negative, got {}", base - gap));
        }
        if let GapFamily::Markov { stay } = family {
            if !(0.0..=1.0).contains(&stay) {
                problems.push(format!("stay probability must lie in [0, 1], got {stay}"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        Ok(GapEnvironment { arms, best, gap, base, family, high: false, rng })
    }

    pub fn best(&self) -> usize {
        self.best
    }

    /// Shift applied to every mean in the high state.
    fn swing(&self) -> f64 {
        match self.family {
            GapFamily::Bernoulli => 0.0,
            GapFamily::Markov { .. } => (self.base - self.gap).min(1.0 - self.base),
        }
    }

    /// Conditional means for the next draw given the current hidden state.
    pub fn means(&self) -> Vec<f64> {
        let shift = if self.high { self.swing() } else { -self.swing() };
        (0..self.arms)
            .map(|i| if i == self.best { self.base - self.gap + shift } else { self.base + shift })
            .collect()
    }

    pub fn sample(&mut self) -> Vec<f64> {
        if let GapFamily::Markov { stay } = self.family {
            if self.rng.gen::<f64>() >= stay {
                self.high = !self.high;
            }
        }
        self.means()
            .into_iter()
            .map(|p| if self.rng.gen::<f64>() < p { 1.0 } else { 0.0 })
            .collect()
    }
}

impl<R: Rng> LossSource for GapEnvironment<R> {
    fn arms(&self) -> usize {
        self.arms
    }

    fn next_losses(&mut self, _t: usize) -> Result<Vec<f64>> {
        Ok(self.sample())
    }
}

/// Piecewise-constant losses with the generator's own path-length tally.
#[derive(Debug, Clone, PartialEq)]
pub struct Switching {
    pub matrix: LossMatrix,
    /// Rounds at which every arm draws a fresh value.
    pub change_points: Vec<usize>,
    /// Path length of each arm, including the step from the zero loss.
    pub path_lengths: Vec<f64>,
}

/// Losses constant between `switches` change points placed uniformly over
/// rounds `2..=T`; each segment draws every arm's value from `U[0, 1]`.
pub fn env_switching<R: Rng>(arms: usize, horizon: usize, switches: usize, rng: &mut R) -> Result<Switching> {
    if switches >= horizon {
        return Err(Error::config(format!("switches must be below the horizon, got {switches}")));
    }
    let mut change_points: Vec<usize> = sample(rng, horizon - 1, switches)
        .into_iter()
        .map(|i| i + 2)
        .collect();
    change_points.sort_unstable();
    let mut current: Vec<f64> = (0..arms).map(|_| rng.gen()).collect();
    let mut path_lengths: Vec<f64> = current.iter().map(|v: &f64| v.abs()).collect();
    let mut rows = Vec::with_capacity(horizon);
    let mut next_change = change_points.iter().peekable();
    for t in 1..=horizon {
        if next_change.peek() == Some(&&t) {
            next_change.next();
            let fresh: Vec<f64> = (0..arms).map(|_| rng.gen()).collect();
            for i in 0..arms {
                path_lengths[i] += (fresh[i] - current[i]).abs();
            }
            current = fresh;
        }
        rows.push(current.clone());
    }
    Ok(Switching { matrix: LossMatrix::new(rows)?, change_points, path_lengths })
}

/// The best arm always loses 0; every other arm draws Bernoulli(1/2).
pub fn small_loss<R: Rng>(arms: usize, horizon: usize, best: usize, rng: &mut R) -> Result<LossMatrix> {
    if best >= arms {
        return Err(Error::config(format!("best arm {} outside 1..={arms}", best + 1)));
    }
    LossMatrix::generate(horizon, |_| {
        (0..arms)
            .map(|i| if i != best && rng.gen::<bool>() { 1.0 } else { 0.0 })
            .collect()
    })
}

/// Every arm repeats its own constant loss.
pub fn constant(values: &[f64], horizon: usize) -> Result<LossMatrix> {
    LossMatrix::generate(horizon, |_| values.to_vec())
}

/// I.i.d. uniform losses on `[lo, hi]`.
pub fn uniform<R: Rng>(arms: usize, horizon: usize, lo: f64, hi: f64, rng: &mut R) -> Result<LossMatrix> {
    if !(-1.0 <= lo && lo <= hi && hi <= 1.0) {
        return Err(Error::config(format!("uniform range [{lo}, {hi}] not inside [-1, 1]")));
    }
    LossMatrix::generate(horizon, |_| (0..arms).map(|_| rng.gen_range(lo..=hi)).collect())
}

/// Payoff matrix of a two-player zero-sum game: row player pays `G(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GameMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl GameMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = LossMatrix::new(rows)?;
        Ok(GameMatrix { rows: m.horizon(), cols: m.arms(), entries: m.entries })
    }

    /// `[[1, -1], [-1, 1]]`.
    pub fn matching_pennies() -> Self {
        GameMatrix { rows: 2, cols: 2, entries: vec![1.0, -1.0, -1.0, 1.0] }
    }

    /// `[[0, 1], [1, 0]]`: matching pennies rescaled to losses in `[0, 1]`.
    pub fn matching_pennies_unit() -> Self {
        GameMatrix { rows: 2, cols: 2, entries: vec![0.0, 1.0, 1.0, 0.0] }
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let m = LossMatrix::from_csv(text)?;
        Ok(GameMatrix { rows: m.horizon(), cols: m.arms(), entries: m.entries })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    /// `G y`.
    pub fn row_values(&self, y: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * y[j]).sum())
            .collect()
    }

    /// `x^T G`.
    pub fn col_values(&self, x: &[f64]) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| x[i] * self.get(i, j)).sum())
            .collect()
    }

    /// `-G^T`: the same game seen from the other seat.
    pub fn mirrored(&self) -> Self {
        let mut entries = Vec::with_capacity(self.entries.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                entries.push(-self.get(i, j));
            }
        }
        GameMatrix { rows: self.cols, cols: self.rows, entries }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityGap {
    /// `max_j (x^T G)_j`.
    pub upper: f64,
    /// `min_i (G y)_i`.
    pub lower: f64,
    pub gap: f64,
}

pub fn duality_gap(x: &[f64], y: &[f64], g: &GameMatrix) -> Result<DualityGap> {
    if x.len() != g.rows() {
        return Err(Error::Dimension { expected: g.rows(), got: x.len() });
    }
    if y.len() != g.cols() {
        return Err(Error::Dimension { expected: g.cols(), got: y.len() });
    }
    let upper = g.col_values(x).into_iter().fold(f64::NEG_INFINITY, f64::max);
    let lower = g.row_values(y).into_iter().fold(f64::INFINITY, f64::min);
    Ok(DualityGap { upper, lower, gap: upper - lower })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameRound {
    pub row_strategy: Vec<f64>,
    pub row_action: usize,
    pub col_strategy: Vec<f64>,
    pub col_action: usize,
    pub row_loss: f64,
    pub col_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfPlay {
    /// Per-round trace; empty unless requested.
    pub rounds: Vec<GameRound>,
    pub avg_row: Vec<f64>,
    pub avg_col: Vec<f64>,
    /// Duality gap of the running averages at each checkpoint.
    pub checkpoint_gaps: Vec<(usize, f64)>,
}

/// Runs `horizon` rounds of self-play. The row player's loss is `(G y_t)_{i_t}`
/// and the column player's loss is `-(x_t^T G)_{j_t}`.
pub fn self_play<A: Learner, B: Learner>(
    g: &GameMatrix,
    row: &mut A,
    col: &mut B,
    horizon: usize,
    checkpoints: &[usize],
    keep_trace: bool,
) -> Result<SelfPlay> {
    if row.arms() != g.rows() {
        return Err(Error::Dimension { expected: g.rows(), got: row.arms() });
    }
    if col.arms() != g.cols() {
        return Err(Error::Dimension { expected: g.cols(), got: col.arms() });
    }
    let mut sum_x = vec![0.0; g.rows()];
    let mut sum_y = vec![0.0; g.cols()];
    let mut rounds = Vec::new();
    let mut checkpoint_gaps = Vec::new();
    let mut next = checkpoints.iter().peekable();
    for t in 1..=horizon {
        let i = row.select()?;
        let j = col.select()?;
        let x = row.distribution().to_vec();
        let y = col.distribution().to_vec();
        let row_loss = g.row_values(&y)[i];
        let col_loss = -g.col_values(&x)[j];
        row.observe(row_loss)?;
        col.observe(col_loss)?;
        for (s, v) in sum_x.iter_mut().zip(&x) {
            *s += v;
        }
        for (s, v) in sum_y.iter_mut().zip(&y) {
            *s += v;
        }
        while next.peek().is_some_and(|c| **c == t) {
            next.next();
            let ax: Vec<f64> = sum_x.iter().map(|s| s / t as f64).collect();
            let ay: Vec<f64> = sum_y.iter().map(|s| s / t as f64).collect();
            checkpoint_gaps.push((t, duality_gap(&ax, &ay, g)?.gap));
        }
        if keep_trace {
            rounds.push(GameRound {
                row_strategy: x,
                row_action: i,
                col_strategy: y,
                col_action: j,
                row_loss,
                col_loss,
            });
        }
    }
    let avg_row = sum_x.iter().map(|s| s / horizon as f64).collect();
    let avg_col = sum_y.iter().map(|s| s / horizon as f64).collect();
    Ok(SelfPlay { rounds, avg_row, avg_col, checkpoint_gaps })
}
