//! Independent reference computations: a grid-solved replay of the round
//! loop, a scripted random source, and the fixture report behind the
//! `oracle` command.

use std::fmt::Write as _;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::algorithm::{sample_index, AuxUpdate, EstimatorKind, Learner, PredictorKind, RateSchedule, Settings};
use crate::baselines::{grid_search_omd, path_length, variance_stat, Exp3, GridSpec, RegretAccumulator, StreamingStats};
use crate::barrier::{kkt_residual, mix_uniform, BarrierObjective, LearningRates, SimplexPoint, FIXED_RATE_CAP};
use crate::env::{env_switching, GapEnvironment, GapFamily, LossMatrix};
use crate::error::{Error, Result};
use crate::estimators::{Reservoir};

/// Replays a fixed list of uniform numbers through `Rng::gen::<f64>()`.
#[derive(Debug, Clone)]
pub struct ScriptedRng {
    draws: Vec<f64>,
    next: usize,
}

impl ScriptedRng {
    pub fn new(draws: &[f64]) -> Self {
        ScriptedRng { draws: draws.to_vec(), next: 0 }
    }
}

impl RngCore for ScriptedRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let u = self.draws[self.next % self.draws.len()];
        self.next += 1;
        // `gen::<f64>()` keeps the top 53 bits and scales by 2^-53.
        ((u * (1u64 << 53) as f64) as u64) << 11
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for chunk in dest.chunks_mut(8) {
            let v = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&v[..chunk.len()]);
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}

/// One round of a reference replay.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub play: Vec<f64>,
    pub arm: usize,
    pub estimate: Vec<f64>,
    pub next_aux: Vec<f64>,
}

/// Replays the round loop with every mirror step solved by grid search.
/// Supports the zero and last-observed predictors.
pub fn grid_replay(settings: &Settings, draws: &[f64], losses: &LossMatrix, grid: GridSpec) -> Result<Vec<TraceStep>> {
    let k = settings.arms;
    if !matches!(settings.predictor, PredictorKind::Zero | PredictorKind::LastObserved) || settings.doubling {
        return Err(Error::Unsupported("grid replay covers zero and last-observed predictors".into()));
    }
    let mut rates = LearningRates::uniform(k, settings.eta, f64::MAX)?;
    let mut schedule = settings.increasing_rates.then(|| RateSchedule::new(k, settings.horizon));
    let mut aux = SimplexPoint::uniform(k);
    let mut last = vec![0.0; k];
    let mut out = Vec::new();
    for (t, u) in draws.iter().enumerate() {
        let row = losses.row(t + 1)?;
        let m = match settings.predictor {
            PredictorKind::Zero => vec![0.0; k],
            _ => last.clone(),
        };
        let play = grid_search_omd(&aux, &m, &rates, grid)?;
        let sampling = if settings.mixing { mix_uniform(&play, settings.horizon)? } else { play.clone() };
        let arm = sample_index(sampling.weights(), *u);
        let loss = row[arm];
        let mut est = match settings.estimator {
            EstimatorKind::VarianceReduced => m.clone(),
            EstimatorKind::Plain => vec![0.0; k],
        };
        est[arm] = match settings.estimator {
            EstimatorKind::VarianceReduced => (loss - m[arm]) / sampling[arm] + m[arm],
            EstimatorKind::Plain => loss / sampling[arm],
        };
        let linear: Vec<f64> = (0..k)
            .map(|i| match settings.update {
                AuxUpdate::Corrected => {
                    let d = est[i] - m[i];
                    est[i] + 6.0 * rates.rates()[i] * play[i] * d * d
                }
                AuxUpdate::Uncorrected => est[i],
            })
            .collect();
        let next = grid_search_omd(&aux, &linear, &rates, grid)?;
        if let Some(s) = &mut schedule {
            s.update(&mut rates, &sampling);
        }
        last[arm] = loss;
        out.push(TraceStep {
            play: play.weights().to_vec(),
            arm,
            estimate: est,
            next_aux: next.weights().to_vec(),
        });
        aux = next;
    }
    Ok(out)
}

/// Settings of the scripted three-round traces.
pub fn golden_settings(boosted: bool) -> Settings {
    if boosted {
        Settings {
            arms: 2,
            horizon: 3,
            update: AuxUpdate::Corrected,
            predictor: PredictorKind::LastObserved,
            estimator: EstimatorKind::VarianceReduced,
            mixing: true,
            increasing_rates: true,
            eta: 1.0 / 810.0,
            doubling: false,
            rate_cap: Some(FIXED_RATE_CAP),
            mode: crate::estimators::CheckMode::Strict,
        }
    } else {
        Settings {
            arms: 2,
            horizon: 3,
            update: AuxUpdate::Uncorrected,
            predictor: PredictorKind::Zero,
            estimator: EstimatorKind::VarianceReduced,
            mixing: false,
            increasing_rates: false,
            eta: FIXED_RATE_CAP,
            doubling: false,
            rate_cap: Some(FIXED_RATE_CAP),
            mode: crate::estimators::CheckMode::Strict,
        }
    }
}

pub const GOLDEN_DRAWS: [f64; 3] = [0.3, 0.7, 0.5];

pub fn golden_losses() -> LossMatrix {
    LossMatrix::new(vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).expect("valid fixture")
}

/// Smallest KKT residual over 100 random (uniform point, random objective) pairs.
pub fn kkt_non_solution_minimum(seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut smallest = f64::INFINITY;
    for _ in 0..100 {
        let k = rng.gen_range(2..=5);
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
        let z: f64 = raw.iter().sum();
        let prev = SimplexPoint::new(raw.iter().map(|v| v / z).collect()).expect("normalized");
        let x: Vec<f64> = (0..k).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let rates: Vec<f64> = (0..k).map(|_| rng.gen_range(1e-3..FIXED_RATE_CAP)).collect();
        let rates = LearningRates::new(rates, FIXED_RATE_CAP).expect("positive");
        let obj = BarrierObjective::new(&prev, &x, &rates).expect("valid");
        let w = vec![1.0 / k as f64; k];
        smallest = smallest.min(kkt_residual(&w, &obj));
    }
    smallest
}

/// `sum_{t <= T} min(1, M K / t)`.
pub fn expected_explorations(capacity: usize, arms: usize, horizon: usize) -> f64 {
    (1..=horizon).map(|t| (capacity as f64 * arms as f64 / t as f64).min(1.0)).sum()
}

/// Variance of the exploration count (independent Bernoulli rounds).
pub fn exploration_variance(capacity: usize, arms: usize, horizon: usize) -> f64 {
    (1..=horizon)
        .map(|t| {
            let p = (capacity as f64 * arms as f64 / t as f64).min(1.0);
            p * (1.0 - p)
        })
        .sum()
}

/// Log-log slope of Exp3's mean regret on i.i.d. uniform losses over
/// horizons `10^3, 10^4, 10^5`.
pub fn exp3_slope(arms: usize, seeds: u64) -> Result<(f64, Vec<f64>)> {
    let horizons = [1_000usize, 10_000, 100_000];
    let mut means = Vec::new();
    for &t in &horizons {
        let mut total = 0.0;
        for seed in 0..seeds {
            let mut env_rng = ChaCha20Rng::seed_from_u64(seed);
            let mut alg = Exp3::new(arms, t, Exp3::<ChaCha20Rng>::default_rate(arms, t), ChaCha20Rng::seed_from_u64(seed + 1_000))?;
            let mut acc = RegretAccumulator::new(arms, &[t]);
            for _ in 0..t {
                let losses: Vec<f64> = (0..arms).map(|_| env_rng.gen()).collect();
                let arm = alg.select()?;
                alg.observe(losses[arm])?;
                acc.push(arm, &losses);
            }
            total += acc.finish().regret[0];
        }
        means.push(total / seeds as f64);
    }
    let xs: Vec<f64> = horizons.iter().map(|t| (*t as f64).log10()).collect();
    let ys: Vec<f64> = means.iter().map(|r| r.log10()).collect();
    Ok((least_squares_slope(&xs, &ys), means))
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn fmt_vec(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| format!("{x:.9}")).collect::<Vec<_>>().join(", "))
}

/// Regenerates every derived fixture and renders them as text.
pub fn fixtures_report() -> Result<String> {
    let mut out = String::new();

    let prev = SimplexPoint::uniform(2);
    let rates = LearningRates::uniform(2, 0.01, 1.0)?;
    let w = grid_search_omd(&prev, &[1.0, -1.0], &rates, GridSpec::new(1e-5)?)?;
    let _ = writeln!(out, "omd_step K=2 w'=(0.5,0.5) eta=0.01 x=(1,-1), grid 1e-5: {}", fmt_vec(w.weights()));

    for boosted in [false, true] {
        let s = golden_settings(boosted);
        let trace = grid_replay(&s, &GOLDEN_DRAWS, &golden_losses(), GridSpec::new(1e-6)?)?;
        let name = if boosted { "increasing-rate" } else { "uncorrected" };
        for (t, step) in trace.iter().enumerate() {
            let _ = writeln!(
                out,
                "golden {name} round {}: w = {}, arm = {}, estimate = {}, next aux = {}",
                t + 1,
                fmt_vec(&step.play),
                step.arm + 1,
                fmt_vec(&step.estimate),
                fmt_vec(&step.next_aux)
            );
        }
    }

    let _ = writeln!(out, "kkt residual minimum over 100 non-solutions: {:.6}", kkt_non_solution_minimum(2024));

    let (m, k, t) = (10, 5, 10_000);
    let mean = expected_explorations(m, k, t);
    let sd = exploration_variance(m, k, t).sqrt();
    let res = Reservoir::new(k, m)?;
    let mut counts = Vec::new();
    for seed in 0..100u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        counts.push((1..=t).filter(|s| res.schedule(*s, &mut rng).is_some()).count() as f64);
    }
    let emp = counts.iter().sum::<f64>() / counts.len() as f64;
    let _ = writeln!(out, "exploration rounds T=1e4 K=5 M=10: expected {mean:.3} (sd {sd:.3}), empirical mean over 100 seeds {emp:.2}");

    let mut env = GapEnvironment::new(2, 0, 0.2, 0.5, GapFamily::Bernoulli, ChaCha20Rng::seed_from_u64(5))?;
    let n = 100_000;
    let mut diff = 0.0;
    for _ in 0..n {
        let l = env.sample();
        diff += l[1] - l[0];
    }
    let _ = writeln!(
        out,
        "gap environment delta=0.2 p=0.5 empirical gap over 1e5 draws: {:.5} (3 se = {:.5})",
        diff / n as f64,
        3.0 * (0.5f64 / n as f64).sqrt()
    );

    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let reps = 10_000;
    let mut stats = StreamingStats::default();
    for _ in 0..reps {
        let mut r = Reservoir::new(1, 4)?;
        for _ in 0..20 {
            let v: f64 = if rng.gen::<f64>() < 0.3 { 1.0 } else { 0.0 };
            r.insert(0, v, &mut rng)?;
        }
        stats.push(r.predict().values()[0]);
    }
    let se = (stats.sum_sq_dev() / (reps as f64 - 1.0) / reps as f64).sqrt();
    let _ = writeln!(out, "reservoir mean (M=4, 20 Bernoulli(0.3) draws) over 1e4 reps: {:.5} +- {:.5}", stats.mean(), 3.0 * se);

    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let sw = env_switching(5, 10_000, 100, &mut rng)?;
    let recomputed: Vec<f64> = (0..5).map(|i| path_length(&sw.matrix, i)).collect();
    let worst = recomputed
        .iter()
        .zip(&sw.path_lengths)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let _ = writeln!(out, "switching path length, generator vs recomputed, max abs diff: {worst:e}");

    let mut stream = StreamingStats::default();
    sw.matrix.column(0).for_each(|v| stream.push(v));
    let _ = writeln!(
        out,
        "variance statistic, streaming vs two-pass, abs diff: {:e}",
        (stream.sum_sq_dev() - variance_stat(&sw.matrix, 0)).abs()
    );

    let (slope, means) = exp3_slope(5, 10)?;
    let _ = writeln!(out, "exp3 regret on uniform losses, T=1e3/1e4/1e5: {} slope {slope:.3}", fmt_vec(&means));
    Ok(out)
}
