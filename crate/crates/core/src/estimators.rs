//! Loss estimators from one-arm feedback, optimistic predictions, the
//! correction term, and the per-round stability conditions.

use rand::Rng;

use crate::barrier::{LearningRates, SimplexPoint};
use crate::error::{Error, Result};

/// Bound on `max_i w_i |est_i - m_i|` (condition (ii)).
pub const WEIGHTED_ERROR_BOUND: f64 = 3.0;

/// Bound on `sum_i eta_i w_i^2 (est_i - m_i)^2` (condition (iii)).
pub const SECOND_MOMENT_BOUND: f64 = 1.0 / 18.0;

/// Estimated loss vector for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEstimate {
    pub values: Vec<f64>,
    pub chosen: usize,
}

/// Optimistic prediction of the upcoming loss vector; coordinates in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction(Vec<f64>);

impl Prediction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("prediction {v} outside [-1, 1]")));
        }
        Ok(Prediction(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Non-negative correction added to the estimate in the auxiliary update.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction(Vec<f64>);

impl Correction {
    pub fn zero(arms: usize) -> Self {
        Correction(vec![0.0; arms])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

fn check_loss(loss: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&loss) {
        return Err(Error::Domain(format!("observed loss {loss} outside [-1, 1]")));
    }
    Ok(())
}

/// Variance-reduced importance weighting: `(loss - m_i)/w_i + m_i` on the
/// chosen arm and `m_i` elsewhere.
pub fn estimate_vr(loss: f64, chosen: usize, w: &SimplexPoint, m: &Prediction) -> Result<LossEstimate> {
    check_loss(loss)?;
    if m.len() != w.len() {
        return Err(Error::Dimension { expected: w.len(), got: m.len() });
    }
    let mut values = m.values().to_vec();
    values[chosen] = (loss - m.values()[chosen]) / w[chosen] + m.values()[chosen];
    Ok(LossEstimate { values, chosen })
}

/// Plain importance weighting: `loss / w_i` on the chosen arm, zero elsewhere.
pub fn estimate_plain(loss: f64, chosen: usize, w: &SimplexPoint) -> Result<LossEstimate> {
    check_loss(loss)?;
    let mut values = vec![0.0; w.len()];
    values[chosen] = loss / w[chosen];
    Ok(LossEstimate { values, chosen })
}

/// `a_i = 6 eta_i w_i (est_i - m_i)^2`.
pub fn correction_option_i(
    rates: &LearningRates,
    w: &SimplexPoint,
    est: &LossEstimate,
    m: &Prediction,
) -> Correction {
    Correction(
        (0..w.len())
            .map(|i| {
                let d = est.values[i] - m.values()[i];
                6.0 * rates.rates()[i] * w[i] * d * d
            })
            .collect(),
    )
}

/// Values and verdicts of the three per-round stability conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionReport {
    /// `max_i eta_i`.
    pub max_rate: f64,
    /// `max_i w_i |est_i - m_i|`.
    pub weighted_error: f64,
    /// `sum_i eta_i w_i^2 (est_i - m_i)^2`.
    pub second_moment: f64,
    pub rate_ok: bool,
    pub weighted_error_ok: bool,
    pub second_moment_ok: bool,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.rate_ok && self.weighted_error_ok && self.second_moment_ok
    }
}

/// Evaluates the stability conditions at the playing point `w`.
///
/// `rate_cap` is the bound used for condition (i); `None` skips it (the
/// verdict is then always true and only the attained value is reported).
pub fn check_conditions(
    rates: &LearningRates,
    w: &SimplexPoint,
    est: &LossEstimate,
    m: &Prediction,
    rate_cap: Option<f64>,
) -> ConditionReport {
    let mut weighted_error = 0.0f64;
    let mut second_moment = 0.0;
    for i in 0..w.len() {
        let d = est.values[i] - m.values()[i];
        weighted_error = weighted_error.max(w[i] * d.abs());
        second_moment += rates.rates()[i] * w[i] * w[i] * d * d;
    }
    let max_rate = rates.max_rate();
    // Relative slack of a few ulps: the bounds are attained with equality in
    // some configurations (e.g. mixing with T = 3).
    let slack = 1.0 + 1e-12;
    ConditionReport {
        max_rate,
        weighted_error,
        second_moment,
        rate_ok: rate_cap.is_none_or(|cap| max_rate <= cap * slack),
        weighted_error_ok: weighted_error <= WEIGHTED_ERROR_BOUND * slack,
        second_moment_ok: second_moment <= SECOND_MOMENT_BOUND * slack,
    }
}

/// How invariant violations are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CheckMode {
    /// Abort the run on the first violation.
    #[default]
    Strict,
    /// Record violations in the round record and continue.
    Permissive,
}

pub fn predictor_zero(arms: usize) -> Prediction {
    Prediction(vec![0.0; arms])
}

/// `m_i = loss` for every arm; only valid after the draw.
pub fn predictor_realized(loss: f64, arms: usize) -> Result<Prediction> {
    check_loss(loss)?;
    Ok(Prediction(vec![loss; arms]))
}

/// Most recent observed loss of every arm, with the round it was observed.
#[derive(Debug, Clone, PartialEq)]
pub struct LastObserved {
    last: Vec<f64>,
    last_round: Vec<usize>,
}

impl LastObserved {
    pub fn new(arms: usize) -> Self {
        LastObserved { last: vec![0.0; arms], last_round: vec![0; arms] }
    }

    /// Records that `arm` was played at round `t` and suffered `loss`.
    pub fn feed(&mut self, t: usize, arm: usize, loss: f64) -> Result<()> {
        check_loss(loss)?;
        if t <= self.last_round[arm] {
            return Err(Error::Domain(format!(
                "observation for arm {arm} at round {t} is not after round {}",
                self.last_round[arm]
            )));
        }
        self.last[arm] = loss;
        self.last_round[arm] = t;
        Ok(())
    }

    pub fn predict(&self) -> Prediction {
        Prediction(self.last.clone())
    }

    /// Round of the most recent pick of `arm` (0 if never picked).
    pub fn last_round(&self, arm: usize) -> usize {
        self.last_round[arm]
    }

    pub fn reset(&mut self) {
        self.last.iter_mut().for_each(|v| *v = 0.0);
        self.last_round.iter_mut().for_each(|v| *v = 0);
    }
}

/// Per-arm size-`M` reservoirs fed by uniform exploration rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Reservoir {
    capacity: usize,
    buffers: Vec<Vec<f64>>,
    counts: Vec<u64>,
}

impl Reservoir {
    pub fn new(arms: usize, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Domain("reservoir capacity must be positive".into()));
        }
        Ok(Reservoir {
            capacity,
            buffers: vec![Vec::with_capacity(capacity); arms],
            counts: vec![0; arms],
        })
    }

    /// `max(1, ceil(ln T))`.
    pub fn capacity_for_horizon(horizon: usize) -> usize {
        ((horizon as f64).ln().ceil() as usize).max(1)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn arms(&self) -> usize {
        self.buffers.len()
    }

    pub fn buffer(&self, arm: usize) -> &[f64] {
        &self.buffers[arm]
    }

    /// Number of observations streamed into `arm`'s reservoir.
    pub fn stream_count(&self, arm: usize) -> u64 {
        self.counts[arm]
    }

    /// Probability `min(1, M K / t)` of exploring at round `t`.
    pub fn exploration_probability(&self, t: usize) -> f64 {
        (self.capacity as f64 * self.arms() as f64 / t as f64).min(1.0)
    }

    /// Decides whether round `t` explores, and if so which arm.
    pub fn schedule<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> Option<usize> {
        let p = self.exploration_probability(t);
        if p >= 1.0 || rng.gen::<f64>() < p {
            Some(rng.gen_range(0..self.arms()))
        } else {
            None
        }
    }

    /// Streams an observation into `arm`'s reservoir; returns whether it was kept.
    pub fn insert<R: Rng + ?Sized>(&mut self, arm: usize, loss: f64, rng: &mut R) -> Result<bool> {
        check_loss(loss)?;
        self.counts[arm] += 1;
        let n = self.counts[arm];
        let buf = &mut self.buffers[arm];
        if buf.len() < self.capacity {
            buf.push(loss);
            return Ok(true);
        }
        // Keep with probability M/n, replacing a uniformly chosen slot.
        let slot = rng.gen_range(0..n);
        if (slot as usize) < self.capacity {
            buf[slot as usize] = loss;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Mean of each arm's buffer (0 when empty), clamped to `[-1, 1]`.
    pub fn predict(&self) -> Prediction {
        Prediction(
            self.buffers
                .iter()
                .map(|b| {
                    if b.is_empty() {
                        0.0
                    } else {
                        (b.iter().sum::<f64>() / b.len() as f64).clamp(-1.0, 1.0)
                    }
                })
                .collect(),
        )
    }
}
