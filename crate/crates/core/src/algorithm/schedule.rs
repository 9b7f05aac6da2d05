use crate::barrier::{LearningRates, SimplexPoint};

/// Increasing per-arm learning-rate schedule with doubling thresholds.
///
/// Whenever `1/p_i` exceeds the arm's threshold `rho_i` the threshold jumps
/// to `2/p_i` and the arm's rate is multiplied by `kappa = e^{1/ln T}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSchedule {
    thresholds: Vec<f64>,
    kappa: f64,
    increases: Vec<u32>,
}

impl RateSchedule {
    pub fn new(arms: usize, horizon: usize) -> Self {
        RateSchedule {
            thresholds: vec![2.0 * arms as f64; arms],
            kappa: Self::growth_factor(horizon),
            increases: vec![0; arms],
        }
    }

    /// `e^{1 / ln T}`.
    pub fn growth_factor(horizon: usize) -> f64 {
        (1.0 / (horizon as f64).ln()).exp()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn increases(&self) -> &[u32] {
        &self.increases
    }

    /// Applies the threshold test against the sampling distribution and
    /// returns the arms whose rate was raised.
    pub fn update(&mut self, rates: &mut LearningRates, sampling: &SimplexPoint) -> Vec<usize> {
        let mut raised = Vec::new();
        for i in 0..self.thresholds.len() {
            let inv = 1.0 / sampling[i];
            if inv > self.thresholds[i] {
                self.thresholds[i] = 2.0 * inv;
                rates.scale(i, self.kappa);
                self.increases[i] += 1;
                raised.push(i);
            }
        }
        raised
    }

    /// `floor(log2 T)`, the most increases any arm may receive.
    pub fn max_increases(horizon: usize) -> u32 {
        usize::BITS - 1 - horizon.leading_zeros()
    }
}
