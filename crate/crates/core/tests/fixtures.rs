//! Reference values produced once by the brute-force oracles (`omd-bandit
//! oracle`) and frozen here; the production code must reproduce them.

use approx::assert_abs_diff_eq;
use omd_bandit::algorithm::{BroadOmd, Learner};
use omd_bandit::barrier::{kkt_residual, omd_step, BarrierObjective, LearningRates, SimplexPoint};
use omd_bandit::baselines::{path_length, variance_stat, StreamingStats};
use omd_bandit::env::{env_switching, GapEnvironment, GapFamily};
use omd_bandit::estimators::Reservoir;
use omd_bandit::harness::oracle::{
    expected_explorations, exp3_slope, exploration_variance, golden_losses, golden_settings, kkt_non_solution_minimum,
    ScriptedRng, GOLDEN_DRAWS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Grid resolution the traces were solved at.
const TRACE_GRID: f64 = 1e-6;

struct Step {
    play: [f64; 2],
    arm: usize,
    next_aux: [f64; 2],
}

const UNCORRECTED: [Step; 3] = [
    Step { play: [0.5, 0.5], arm: 0, next_aux: [0.498457, 0.501543] },
    Step { play: [0.498457, 0.501543], arm: 1, next_aux: [0.498457, 0.501543] },
    Step { play: [0.498457, 0.501543], arm: 1, next_aux: [0.499995, 0.500005] },
];

const INCREASING_RATE: [Step; 3] = [
    Step { play: [0.5, 0.5], arm: 0, next_aux: [0.499689, 0.500311] },
    Step { play: [0.499535, 0.500465], arm: 1, next_aux: [0.499535, 0.500465] },
    Step { play: [0.499381, 0.500619], arm: 1, next_aux: [0.499691, 0.500309] },
];

fn replay(boosted: bool, expected: &[Step]) {
    let losses = golden_losses();
    let mut alg = BroadOmd::new(golden_settings(boosted), ScriptedRng::new(&GOLDEN_DRAWS)).unwrap();
    for (t, step) in expected.iter().enumerate() {
        let arm = alg.select().unwrap();
        let play = alg.play_point().weights().to_vec();
        for i in 0..2 {
            assert_abs_diff_eq!(play[i], step.play[i], epsilon = 2.0 * TRACE_GRID);
        }
        assert_eq!(arm, step.arm, "round {}", t + 1);
        let rec = alg.observe(losses.row(t + 1).unwrap()[arm]).unwrap();
        assert!(rec.violations.is_empty());
        let aux = alg.aux_point().weights();
        for i in 0..2 {
            assert_abs_diff_eq!(aux[i], step.next_aux[i], epsilon = 2.0 * TRACE_GRID);
        }
    }
}

#[test]
fn uncorrected_trace_matches_grid_oracle() {
    replay(false, &UNCORRECTED);
}

#[test]
fn increasing_rate_trace_matches_grid_oracle() {
    replay(true, &INCREASING_RATE);
}

#[test]
fn two_arm_step_matches_grid_oracle() {
    let prev = SimplexPoint::uniform(2);
    let rates = LearningRates::uniform(2, 0.01, 1.0).unwrap();
    let x = [1.0, -1.0];
    let obj = BarrierObjective::new(&prev, &x, &rates).unwrap();
    let w = omd_step(&obj).unwrap();
    assert_abs_diff_eq!(w[0], 0.4975, epsilon = 2e-5);
    assert_abs_diff_eq!(w[1], 0.5025, epsilon = 2e-5);
    assert!(kkt_residual(w.weights(), &obj) <= 1e-6);
}

#[test]
fn residual_separates_non_solutions() {
    let smallest = kkt_non_solution_minimum(2024);
    assert_abs_diff_eq!(smallest, 7.589750, epsilon = 1e-6);
    assert!(smallest > 1e-2);
}

#[test]
fn exploration_count_near_expectation() {
    let (m, k, t) = (10, 5, 10_000);
    assert_eq!(Reservoir::capacity_for_horizon(t), m);
    let mean = expected_explorations(m, k, t);
    let sd = exploration_variance(m, k, t).sqrt();
    assert_abs_diff_eq!(mean, 314.420, epsilon = 1e-3);
    let res = Reservoir::new(k, m).unwrap();
    let mut total = 0.0;
    for seed in 0..100u64 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let n = (1..=t).filter(|s| res.schedule(*s, &mut rng).is_some()).count() as f64;
        assert!((n - mean).abs() <= 5.0 * sd, "seed {seed}: {n} explorations");
        total += n;
    }
    assert_abs_diff_eq!(total / 100.0, 312.10, epsilon = 1e-9);
}

#[test]
fn gap_environment_mean_gap() {
    let mut env = GapEnvironment::new(2, 0, 0.2, 0.5, GapFamily::Bernoulli, ChaCha20Rng::seed_from_u64(5)).unwrap();
    let n = 100_000;
    let mut diff = 0.0;
    for _ in 0..n {
        let l = env.sample();
        diff += l[1] - l[0];
    }
    let observed = diff / n as f64;
    assert_abs_diff_eq!(observed, 0.19730, epsilon = 1e-9);
    assert!((observed - 0.2).abs() <= 3.0 * (0.25f64 / n as f64).sqrt());
}

#[test]
fn reservoir_mean_is_unbiased() {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let reps = 10_000;
    let mut stats = StreamingStats::default();
    for _ in 0..reps {
        let mut r = Reservoir::new(1, 4).unwrap();
        for _ in 0..20 {
            let v = if rng.gen::<f64>() < 0.3 { 1.0 } else { 0.0 };
            r.insert(0, v, &mut rng).unwrap();
        }
        stats.push(r.predict().values()[0]);
    }
    let three_se = 3.0 * (stats.sum_sq_dev() / (reps as f64 - 1.0) / reps as f64).sqrt();
    assert_abs_diff_eq!(stats.mean(), 0.29942, epsilon = 1e-5);
    assert!((stats.mean() - 0.3).abs() <= three_se);
}

#[test]
fn switching_path_length_recomputes() {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let sw = env_switching(5, 10_000, 100, &mut rng).unwrap();
    let total: f64 = sw.path_lengths.iter().sum();
    assert!(total <= 2.0 * 5.0 * 101.0);
    for (i, reported) in sw.path_lengths.iter().enumerate() {
        assert_eq!(path_length(&sw.matrix, i), *reported);
    }
    let mut stream = StreamingStats::default();
    sw.matrix.column(0).for_each(|v| stream.push(v));
    assert_abs_diff_eq!(stream.sum_sq_dev(), variance_stat(&sw.matrix, 0), epsilon = 1e-9);
}

#[test]
fn exp3_regret_grows_like_root_t() {
    let (slope, means) = exp3_slope(5, 10).unwrap();
    assert_abs_diff_eq!(slope, 0.441, epsilon = 1e-3);
    assert!((slope - 0.5).abs() <= 0.1, "slope {slope}, means {means:?}");
}
