//! Brute-force oracles, the Exp3 baseline, and regret bookkeeping.

use rand::{Rng, RngCore};
use rand_chacha::ChaCha20Rng;

use crate::algorithm::{sample_index, Learner, RoundRecord};
use crate::barrier::{BarrierObjective, LearningRates, SimplexPoint};
use crate::env::LossMatrix;
use crate::error::{Error, Result};

/// Regular grid on the simplex with spacing `resolution`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    steps: u64,
}

impl GridSpec {
    pub fn new(resolution: f64) -> Result<Self> {
        if !(resolution > 0.0 && resolution <= 0.5) {
            return Err(Error::Domain(format!("grid resolution must lie in (0, 0.5], got {resolution}")));
        }
        let steps = (1.0 / resolution).round();
        if ((steps * resolution) - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("1/resolution must be an integer, got {}", 1.0 / resolution)));
        }
        Ok(GridSpec { steps: steps as u64 })
    }

    pub fn resolution(&self) -> f64 {
        1.0 / self.steps as f64
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }
}

/// Minimizes `<w, x> + D(w, w')` over the interior grid points (every
/// coordinate at least one grid step).
///
/// Two arms are scanned exhaustively. For three arms every first coordinate
/// is scanned; along each such line the objective is convex in the second
/// coordinate, so its grid minimum is located exactly by bisection on the sign
/// of the forward difference.
pub fn grid_search_omd(prev: &SimplexPoint, x: &[f64], rates: &LearningRates, grid: GridSpec) -> Result<SimplexPoint> {
    let obj = BarrierObjective::new(prev, x, rates)?;
    let n = grid.steps();
    let step = grid.resolution();
    match prev.len() {
        1 => Ok(SimplexPoint::uniform(1)),
        2 => {
            let mut best = (f64::INFINITY, 1);
            for i in 1..n {
                let a = i as f64 * step;
                let v = obj.value(&[a, 1.0 - a]);
                if v < best.0 {
                    best = (v, i);
                }
            }
            let a = best.1 as f64 * step;
            SimplexPoint::new(vec![a, 1.0 - a])
        }
        3 => {
            let point = |i: u64, j: u64| {
                let a = i as f64 * step;
                let b = j as f64 * step;
                [a, b, 1.0 - a - b]
            };
            let mut best = (f64::INFINITY, [0.0; 3]);
            for i in 1..n.saturating_sub(1) {
                // Feasible second coordinates: 1 ..= n - i - 1.
                let (mut lo, mut hi) = (1, n - i - 1);
                while lo < hi {
                    let mid = lo + (hi - lo) / 2;
                    if obj.value(&point(i, mid + 1)) - obj.value(&point(i, mid)) >= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid + 1;
                    }
                }
                let p = point(i, lo);
                let v = obj.value(&p);
                if v < best.0 {
                    best = (v, p);
                }
            }
            let [a, b, _] = best.1;
            SimplexPoint::new(vec![a, b, 1.0 - a - b])
        }
        k => Err(Error::Unsupported(format!("grid search supports at most 3 arms, got {k}"))),
    }
}

/// Exponential weights on plain importance-weighted estimates.
#[derive(Debug, Clone)]
pub struct Exp3<R: RngCore = ChaCha20Rng> {
    eta: f64,
    horizon: usize,
    round: usize,
    log_weights: Vec<f64>,
    probs: Vec<f64>,
    pending: Option<usize>,
    rng: R,
}

impl<R: RngCore> Exp3<R> {
    /// `sqrt(ln K / (T K))`.
    pub fn default_rate(arms: usize, horizon: usize) -> f64 {
        ((arms as f64).ln() / (horizon as f64 * arms as f64)).sqrt()
    }

    pub fn new(arms: usize, horizon: usize, eta: f64, rng: R) -> Result<Self> {
        if arms < 1 || !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::config(format!("Exp3 needs arms >= 1 and eta > 0, got {arms} and {eta}")));
        }
        Ok(Exp3 {
            eta,
            horizon,
            round: 0,
            log_weights: vec![0.0; arms],
            probs: vec![1.0 / arms as f64; arms],
            pending: None,
            rng,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    fn normalize(&mut self) {
        let top = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = self.log_weights.iter().map(|l| (l - top).exp()).collect();
        let z: f64 = exp.iter().sum();
        self.probs = exp.into_iter().map(|e| e / z).collect();
    }
}

impl<R: RngCore> Learner for Exp3<R> {
    fn arms(&self) -> usize {
        self.probs.len()
    }

    fn select(&mut self) -> Result<usize> {
        if self.pending.is_some() {
            return Err(Error::Invariant { round: self.round, detail: "select called twice".into() });
        }
        if self.round >= self.horizon {
            return Err(Error::RoundOutOfRange { round: self.round + 1, horizon: self.horizon });
        }
        self.round += 1;
        let u: f64 = self.rng.gen();
        let arm = sample_index(&self.probs, u);
        self.pending = Some(arm);
        Ok(arm)
    }

    fn distribution(&self) -> &[f64] {
        &self.probs
    }

    fn observe(&mut self, loss: f64) -> Result<RoundRecord> {
        let arm = self.pending.take().ok_or_else(|| Error::Invariant {
            round: self.round,
            detail: "feedback without a pending selection".into(),
        })?;
        if !(-1.0..=1.0).contains(&loss) {
            return Err(Error::Domain(format!("loss {loss} outside [-1, 1]")));
        }
        self.log_weights[arm] -= self.eta * loss / self.probs[arm];
        self.normalize();
        Ok(RoundRecord {
            t: self.round,
            arm,
            loss,
            explored: false,
            epoch: 0,
            restarted: false,
            conditions: None,
            sandwich: None,
            drift: None,
            second_order: 0.0,
            raised_arms: Vec::new(),
            violations: Vec::new(),
        })
    }
}

/// Index of the smallest cumulative loss; ties go to the lowest index.
pub fn best_arm(cumulative: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in cumulative.iter().enumerate() {
        if *v < cumulative[best] {
            best = i;
        }
    }
    best
}

/// Regret at each checkpoint, against the full-horizon best arm and against
/// the best arm of the prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub checkpoints: Vec<usize>,
    pub regret: Vec<f64>,
    pub regret_prefix_best: Vec<f64>,
}

/// Streams rounds and snapshots cumulative losses at checkpoints.
#[derive(Debug, Clone)]
pub struct RegretAccumulator {
    checkpoints: Vec<usize>,
    learner_total: f64,
    arm_totals: Vec<f64>,
    snapshots: Vec<(f64, Vec<f64>)>,
    round: usize,
}

impl RegretAccumulator {
    pub fn new(arms: usize, checkpoints: &[usize]) -> Self {
        RegretAccumulator {
            checkpoints: checkpoints.to_vec(),
            learner_total: 0.0,
            arm_totals: vec![0.0; arms],
            snapshots: Vec::with_capacity(checkpoints.len()),
            round: 0,
        }
    }

    pub fn push(&mut self, chosen: usize, losses: &[f64]) {
        self.round += 1;
        self.learner_total += losses[chosen];
        for (acc, v) in self.arm_totals.iter_mut().zip(losses) {
            *acc += v;
        }
        while self.snapshots.len() < self.checkpoints.len() && self.checkpoints[self.snapshots.len()] == self.round {
            self.snapshots.push((self.learner_total, self.arm_totals.clone()));
        }
    }

    pub fn arm_totals(&self) -> &[f64] {
        &self.arm_totals
    }

    pub fn learner_total(&self) -> f64 {
        self.learner_total
    }

    pub fn finish(self) -> RegretTrace {
        let best = best_arm(&self.arm_totals);
        let regret = self.snapshots.iter().map(|(l, a)| l - a[best]).collect();
        let regret_prefix_best = self
            .snapshots
            .iter()
            .map(|(l, a)| l - a[best_arm(a)])
            .collect();
        RegretTrace {
            checkpoints: self.checkpoints[..self.snapshots.len()].to_vec(),
            regret,
            regret_prefix_best,
        }
    }
}

pub fn regret_of_trace(chosen: &[usize], matrix: &LossMatrix, checkpoints: &[usize]) -> Result<RegretTrace> {
    if chosen.len() != matrix.horizon() {
        return Err(Error::Dimension { expected: matrix.horizon(), got: chosen.len() });
    }
    let mut acc = RegretAccumulator::new(matrix.arms(), checkpoints);
    for (row, arm) in matrix.rows().zip(chosen) {
        acc.push(*arm, row);
    }
    Ok(acc.finish())
}

/// Regret of the rounds in `chosen` (starting at round `first`) against a
/// fixed comparator arm.
pub fn regret_against(chosen: &[usize], matrix: &LossMatrix, first: usize, comparator: usize) -> Result<f64> {
    let mut total = 0.0;
    for (offset, arm) in chosen.iter().enumerate() {
        let row = matrix.row(first + offset)?;
        total += row[*arm] - row[comparator];
    }
    Ok(total)
}

/// `sum_t |l_t - l_{t-1}|` with `l_0 = 0`.
pub fn path_length(matrix: &LossMatrix, arm: usize) -> f64 {
    let mut prev = 0.0;
    let mut total = 0.0;
    for v in matrix.column(arm) {
        total += (v - prev).abs();
        prev = v;
    }
    total
}

/// `sum_t (l_t - mean)^2` over the full horizon, two passes.
pub fn variance_stat(matrix: &LossMatrix, arm: usize) -> f64 {
    let n = matrix.horizon() as f64;
    let mean = matrix.column(arm).sum::<f64>() / n;
    matrix.column(arm).map(|v| (v - mean) * (v - mean)).sum()
}

/// Single-pass (Welford) mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StreamingStats {
    count: u64,
    mean: f64,
    sq_dev: f64,
}

impl StreamingStats {
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        let delta = v - self.mean;
        self.mean += delta / self.count as f64;
        self.sq_dev += delta * (v - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unnormalized variance `sum (v - mean)^2`.
    pub fn sum_sq_dev(&self) -> f64 {
        self.sq_dev
    }
}
