//! Round-by-round learners: optimistic log-barrier mirror descent in all its
//! configurations, behind a common [`Learner`] interface.

mod config;
mod doubling;
mod schedule;

pub use config::{configure, game_player, game_rate, EtaChoice, TableRow, BOOSTED_RATE_CAP};
pub use doubling::{restart_threshold, EpochState};
pub use schedule::RateSchedule;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha20Rng;

use crate::barrier::{init_point, mix_uniform, omd_step, BarrierObjective, LearningRates, SimplexPoint};
use crate::error::{Error, Result};
use crate::estimators::{
    check_conditions, correction_option_i, estimate_plain, estimate_vr, predictor_realized,
    predictor_zero, CheckMode, ConditionReport, Correction, LastObserved, LossEstimate, Prediction,
    Reservoir,
};

/// A bandit learner driven one round at a time.
pub trait Learner {
    fn arms(&self) -> usize;

    /// Commits to this round's sampling distribution and draws an arm.
    fn select(&mut self) -> Result<usize>;

    /// Distribution the current (or most recent) arm was drawn from.
    fn distribution(&self) -> &[f64];

    /// Feeds back the loss of the arm returned by the last [`select`](Learner::select).
    fn observe(&mut self, loss: f64) -> Result<RoundRecord>;
}

/// Draws an index from `weights` by inverse CDF on one uniform number; a
/// draw landing exactly on a boundary goes to the lower index.
pub fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut cumulative = 0.0;
    for (i, w) in weights.iter().enumerate() {
        cumulative += w;
        if u < cumulative {
            return i;
        }
    }
    // Rounding left the cumulative sum a hair below one.
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Whether the auxiliary update carries the second-order correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxUpdate {
    Corrected,
    Uncorrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    Zero,
    LastObserved,
    Reservoir,
    /// The realized loss copied to every arm; only known after the draw.
    Realized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    VarianceReduced,
    Plain,
}

/// Full wiring of one learner.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub arms: usize,
    pub horizon: usize,
    pub update: AuxUpdate,
    pub predictor: PredictorKind,
    pub estimator: EstimatorKind,
    /// Sample from `(1 - 1/T) w + 1/(KT)` instead of `w`.
    pub mixing: bool,
    pub increasing_rates: bool,
    /// Initial (or fixed) learning rate.
    pub eta: f64,
    pub doubling: bool,
    /// Cap for condition (i); `None` evaluates the other conditions only.
    pub rate_cap: Option<f64>,
    pub mode: CheckMode,
}

/// Everything observable about one completed round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub arm: usize,
    pub loss: f64,
    /// Uniform exploration round of the reservoir variant; the state was frozen.
    pub explored: bool,
    pub epoch: u32,
    pub restarted: bool,
    pub conditions: Option<ConditionReport>,
    /// Smallest and largest `w'_{t+1,i} / w_{t,i}`.
    pub sandwich: Option<(f64, f64)>,
    /// `<w_t - w'_{t+1}, est - m + a>` and `<w_t, a>` on corrected rounds.
    pub drift: Option<(f64, f64)>,
    /// `sum_i w_i^2 (est_i - m_i)^2`.
    pub second_order: f64,
    pub raised_arms: Vec<usize>,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    arm: usize,
    explored: bool,
}

/// Optimistic log-barrier OMD for the K-armed bandit.
#[derive(Debug, Clone)]
pub struct BroadOmd<R: RngCore = ChaCha20Rng> {
    settings: Settings,
    rates: LearningRates,
    aux: SimplexPoint,
    play: SimplexPoint,
    sampling: SimplexPoint,
    prediction: Prediction,
    round: usize,
    last: LastObserved,
    reservoir: Option<Reservoir>,
    schedule: Option<RateSchedule>,
    epoch: Option<EpochState>,
    pending: Option<Pending>,
    uniform: SimplexPoint,
    rng: R,
}

const SANDWICH_LOW: f64 = 0.5;
const SANDWICH_HIGH: f64 = 1.5;
const DRIFT_TOLERANCE: f64 = 1e-8;

impl<R: RngCore> BroadOmd<R> {
    pub fn new(settings: Settings, rng: R) -> Result<Self> {
        let mut problems = Vec::new();
        if settings.arms < 2 {
            problems.push(format!("arms must be at least 2, got {}", settings.arms));
        }
        if settings.horizon < 3 {
            problems.push(format!("horizon must be at least 3, got {}", settings.horizon));
        }
        if !(settings.eta.is_finite() && settings.eta > 0.0) {
            problems.push(format!("eta must be positive, got {}", settings.eta));
        }
        if settings.predictor == PredictorKind::Realized && settings.update == AuxUpdate::Corrected {
            problems.push("the realized predictor requires the uncorrected update".into());
        }
        if settings.predictor == PredictorKind::Reservoir && settings.doubling {
            problems.push("the reservoir predictor is not combined with the doubling wrapper".into());
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        if settings.mode == CheckMode::Strict {
            if let Some(cap) = settings.rate_cap {
                if settings.eta > cap {
                    return Err(Error::config(format!(
                        "eta = {} exceeds the strict-mode cap {cap}",
                        settings.eta
                    )));
                }
            }
        }

        let k = settings.arms;
        let rates = LearningRates::uniform(k, settings.eta, settings.rate_cap.unwrap_or(f64::MAX))?;
        let aux = init_point(&rates);
        let reservoir = match settings.predictor {
            PredictorKind::Reservoir => {
                Some(Reservoir::new(k, Reservoir::capacity_for_horizon(settings.horizon))?)
            }
            _ => None,
        };
        Ok(BroadOmd {
            schedule: settings.increasing_rates.then(|| RateSchedule::new(k, settings.horizon)),
            epoch: settings.doubling.then(|| EpochState::new(settings.eta)),
            play: aux.clone(),
            sampling: aux.clone(),
            prediction: predictor_zero(k),
            uniform: SimplexPoint::uniform(k),
            aux,
            rates,
            round: 0,
            last: LastObserved::new(k),
            reservoir,
            pending: None,
            rng,
            settings,
        })
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    /// Rounds completed or in progress.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn rates(&self) -> &LearningRates {
        &self.rates
    }

    /// Auxiliary point `w'` for the upcoming update.
    pub fn aux_point(&self) -> &SimplexPoint {
        &self.aux
    }

    /// Playing point `w_t` of the current round.
    pub fn play_point(&self) -> &SimplexPoint {
        &self.play
    }

    pub fn schedule(&self) -> Option<&RateSchedule> {
        self.schedule.as_ref()
    }

    pub fn epoch_state(&self) -> Option<&EpochState> {
        self.epoch.as_ref()
    }

    pub fn reservoir(&self) -> Option<&Reservoir> {
        self.reservoir.as_ref()
    }

    fn current_prediction(&self) -> Prediction {
        match self.settings.predictor {
            PredictorKind::Zero | PredictorKind::Realized => predictor_zero(self.settings.arms),
            PredictorKind::LastObserved => self.last.predict(),
            PredictorKind::Reservoir => self.reservoir.as_ref().expect("reservoir").predict(),
        }
    }

    fn fail(&self, detail: String) -> Error {
        Error::Invariant { round: self.round, detail }
    }
}

impl<R: RngCore> Learner for BroadOmd<R> {
    fn arms(&self) -> usize {
        self.settings.arms
    }

    fn select(&mut self) -> Result<usize> {
        if self.pending.is_some() {
            return Err(self.fail("select called twice without feedback".into()));
        }
        if self.round >= self.settings.horizon {
            return Err(Error::RoundOutOfRange { round: self.round + 1, horizon: self.settings.horizon });
        }
        self.round += 1;
        let t = self.round;

        if let Some(res) = &self.reservoir {
            if let Some(arm) = res.schedule(t, &mut self.rng) {
                self.pending = Some(Pending { arm, explored: true });
                return Ok(arm);
            }
        }

        self.prediction = self.current_prediction();
        self.play = if self.settings.predictor == PredictorKind::Realized {
            self.aux.clone()
        } else {
            omd_step(&BarrierObjective::new(&self.aux, self.prediction.values(), &self.rates)?)?
        };
        self.sampling = if self.settings.mixing {
            mix_uniform(&self.play, self.settings.horizon)?
        } else {
            self.play.clone()
        };
        let u: f64 = self.rng.gen();
        let arm = sample_index(self.sampling.weights(), u);
        self.pending = Some(Pending { arm, explored: false });
        Ok(arm)
    }

    fn distribution(&self) -> &[f64] {
        match self.pending {
            Some(Pending { explored: true, .. }) => self.uniform.weights(),
            _ => self.sampling.weights(),
        }
    }

    fn observe(&mut self, loss: f64) -> Result<RoundRecord> {
        let Pending { arm, explored } = self
            .pending
            .ok_or_else(|| self.fail("feedback without a pending selection".into()))?;
        if !(-1.0..=1.0).contains(&loss) {
            return Err(Error::Domain(format!("loss {loss} outside [-1, 1]")));
        }
        let t = self.round;
        let k = self.settings.arms;
        let epoch_index = self.epoch.as_ref().map_or(0, |e| e.epoch());
        let mut record = RoundRecord {
            t,
            arm,
            loss,
            explored,
            epoch: epoch_index,
            restarted: false,
            conditions: None,
            sandwich: None,
            drift: None,
            second_order: 0.0,
            raised_arms: Vec::new(),
            violations: Vec::new(),
        };

        if explored {
            self.reservoir
                .as_mut()
                .expect("reservoir")
                .insert(arm, loss, &mut self.rng)?;
            self.pending = None;
            return Ok(record);
        }

        if self.settings.predictor == PredictorKind::Realized {
            self.prediction = predictor_realized(loss, k)?;
        }
        let m = &self.prediction;
        let est: LossEstimate = match self.settings.estimator {
            EstimatorKind::VarianceReduced => estimate_vr(loss, arm, &self.sampling, m)?,
            EstimatorKind::Plain => estimate_plain(loss, arm, &self.sampling)?,
        };
        let correction = match self.settings.update {
            AuxUpdate::Corrected => correction_option_i(&self.rates, &self.play, &est, m),
            AuxUpdate::Uncorrected => Correction::zero(k),
        };
        let report = check_conditions(&self.rates, &self.play, &est, m, self.settings.rate_cap);

        let linear: Vec<f64> = est
            .values
            .iter()
            .zip(correction.values())
            .map(|(e, a)| e + a)
            .collect();
        let next = omd_step(&BarrierObjective::new(&self.aux, &linear, &self.rates)?)?;

        let (lo, hi) = next
            .weights()
            .iter()
            .zip(self.play.weights())
            .map(|(n, w)| n / w)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
        record.sandwich = Some((lo, hi));

        let mut second_order = 0.0;
        for i in 0..k {
            let d = est.values[i] - m.values()[i];
            second_order += self.play[i] * self.play[i] * d * d;
        }
        record.second_order = second_order;

        let mut violations = Vec::new();
        if !report.rate_ok {
            violations.push(format!("learning rate {} above cap", report.max_rate));
        }
        if !report.weighted_error_ok {
            violations.push(format!("weighted estimation error {} above 3", report.weighted_error));
        }
        if !report.second_moment_ok {
            violations.push(format!("second moment {} above 1/18", report.second_moment));
        }
        let slack = 1e-12;
        if lo < SANDWICH_LOW - slack || hi > SANDWICH_HIGH + slack {
            violations.push(format!("auxiliary/playing ratio outside [0.5, 1.5]: [{lo}, {hi}]"));
        }

        if self.settings.update == AuxUpdate::Corrected {
            let mut lhs = 0.0;
            let mut rhs = 0.0;
            let mut scale = 0.0;
            for i in 0..k {
                let g = est.values[i] - m.values()[i] + correction.values()[i];
                lhs += (self.play[i] - next[i]) * g;
                rhs += self.play[i] * correction.values()[i];
                scale += (self.play[i] + next[i]) * g.abs();
            }
            record.drift = Some((lhs, rhs));
            if lhs > rhs + DRIFT_TOLERANCE * scale.max(1.0) {
                violations.push(format!("drift inequality failed: {lhs} > {rhs}"));
            }
        }
        record.conditions = Some(report);
        self.aux = next;

        if let Some(schedule) = &mut self.schedule {
            record.raised_arms = schedule.update(&mut self.rates, &self.sampling);
            let limit = RateSchedule::max_increases(self.settings.horizon);
            if let Some(n) = schedule.increases().iter().find(|n| **n > limit) {
                violations.push(format!("{n} rate increases exceed floor(log2 T) = {limit}"));
            }
            let bound = 5.0 * self.settings.eta * (1.0 + 1e-12);
            if self.rates.max_rate() > bound {
                violations.push(format!(
                    "learning rate {} exceeds five times the initial rate",
                    self.rates.max_rate()
                ));
            }
        }

        self.last.feed(t, arm, loss)?;

        if let Some(epoch) = &mut self.epoch {
            if epoch.step(second_order, k, self.settings.horizon, t) {
                self.rates.reset_all(epoch.eta());
                self.aux = init_point(&self.rates);
                self.last.reset();
                record.restarted = true;
            }
        }

        self.pending = None;
        if !violations.is_empty() && self.settings.mode == CheckMode::Strict {
            return Err(Error::Invariant {
                round: t,
                detail: format!(
                    "{} (arm {arm}, loss {loss}, w = {:?}, eta = {:?})",
                    violations.join("; "),
                    self.play.weights(),
                    self.rates.rates()
                ),
            });
        }
        record.violations = violations;
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::{kkt_residual, FIXED_RATE_CAP};
    use rand::SeedableRng;

    fn settings(update: AuxUpdate, predictor: PredictorKind) -> Settings {
        Settings {
            arms: 2,
            horizon: 1000,
            update,
            predictor,
            estimator: EstimatorKind::VarianceReduced,
            mixing: false,
            increasing_rates: false,
            eta: FIXED_RATE_CAP,
            doubling: false,
            rate_cap: Some(FIXED_RATE_CAP),
            mode: CheckMode::Strict,
        }
    }

    #[test]
    fn inverse_cdf_sampling() {
        let w = [0.2, 0.3, 0.5];
        assert_eq!(sample_index(&w, 0.0), 0);
        assert_eq!(sample_index(&w, 0.1999), 0);
        assert_eq!(sample_index(&w, 0.2), 1);
        assert_eq!(sample_index(&w, 0.49), 1);
        assert_eq!(sample_index(&w, 0.999_999), 2);
        assert_eq!(sample_index(&[0.5, 0.5], 1.0), 1);
    }

    #[test]
    fn constant_losses_keep_normalization_and_kkt() {
        let rng = ChaCha20Rng::seed_from_u64(5);
        let mut alg = BroadOmd::new(settings(AuxUpdate::Uncorrected, PredictorKind::Zero), rng).unwrap();
        for _ in 0..200 {
            let arm = alg.select().unwrap();
            let sum: f64 = alg.play_point().weights().iter().sum();
            assert!((sum - 1.0).abs() <= 1e-9);
            let prev = alg.aux_point().clone();
            let rec = alg.observe(0.3).unwrap();
            assert_eq!(rec.arm, arm);
            // The step just taken solved its own objective.
            let w = alg.play_point().clone();
            let rates = alg.rates().clone();
            let m = predictor_zero(2);
            let obj = BarrierObjective::new(&prev, m.values(), &rates).unwrap();
            assert!(kkt_residual(w.weights(), &obj) <= 1e-6);
        }
    }

    #[test]
    fn perfect_predictions_leave_aux_at_play_point() {
        // Last-observed predictions on a constant stream are exact after one
        // visit to each arm, so the correction vanishes and both updates agree.
        let rng = ChaCha20Rng::seed_from_u64(9);
        let mut alg =
            BroadOmd::new(settings(AuxUpdate::Corrected, PredictorKind::LastObserved), rng).unwrap();
        let losses = [0.4, -0.2];
        let mut seen = [false; 2];
        for _ in 0..300 {
            let arm = alg.select().unwrap();
            let exact = seen[arm];
            let w = alg.play_point().clone();
            alg.observe(losses[arm]).unwrap();
            seen[arm] = true;
            if exact {
                for i in 0..2 {
                    assert!((alg.aux_point()[i] - w[i]).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn realized_predictor_plays_aux_point_exactly() {
        let rng = ChaCha20Rng::seed_from_u64(2);
        let mut s = settings(AuxUpdate::Uncorrected, PredictorKind::Realized);
        s.estimator = EstimatorKind::Plain;
        let mut alg = BroadOmd::new(s, rng).unwrap();
        for t in 0..100 {
            let aux = alg.aux_point().clone();
            let arm = alg.select().unwrap();
            assert_eq!(alg.play_point(), &aux);
            alg.observe(if arm == 0 { 0.9 } else { (t % 3) as f64 / 3.0 }).unwrap();
        }
    }

    #[test]
    fn protocol_errors() {
        let rng = ChaCha20Rng::seed_from_u64(1);
        let mut s = settings(AuxUpdate::Uncorrected, PredictorKind::Zero);
        s.horizon = 3;
        let mut alg = BroadOmd::new(s, rng).unwrap();
        assert!(alg.observe(0.0).is_err());
        alg.select().unwrap();
        assert!(alg.select().is_err());
        assert!(alg.observe(2.0).is_err());
        alg.observe(0.0).unwrap();
        for _ in 0..2 {
            alg.select().unwrap();
            alg.observe(0.0).unwrap();
        }
        assert!(matches!(alg.select(), Err(Error::RoundOutOfRange { .. })));
    }

    #[test]
    fn strict_mode_rejects_rate_above_cap() {
        let rng = ChaCha20Rng::seed_from_u64(1);
        let mut s = settings(AuxUpdate::Uncorrected, PredictorKind::Zero);
        s.eta = 0.05;
        assert!(BroadOmd::new(s.clone(), rng.clone()).is_err());
        s.mode = CheckMode::Permissive;
        let mut alg = BroadOmd::new(s, rng).unwrap();
        alg.select().unwrap();
        let rec = alg.observe(1.0).unwrap();
        assert!(!rec.conditions.unwrap().rate_ok);
        assert!(!rec.violations.is_empty());
    }
}
