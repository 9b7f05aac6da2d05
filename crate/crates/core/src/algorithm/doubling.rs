/// Restart bookkeeping for the doubling wrapper.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochState {
    epoch: u32,
    eta: f64,
    initial_eta: f64,
    statistic: f64,
    start_round: usize,
}

/// `K ln T / (3 eta^2)`.
pub fn restart_threshold(arms: usize, horizon: usize, eta: f64) -> f64 {
    arms as f64 * (horizon as f64).ln() / (3.0 * eta * eta)
}

impl EpochState {
    pub fn new(initial_eta: f64) -> Self {
        EpochState { epoch: 0, eta: initial_eta, initial_eta, statistic: 0.0, start_round: 0 }
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn initial_eta(&self) -> f64 {
        self.initial_eta
    }

    pub fn statistic(&self) -> f64 {
        self.statistic
    }

    /// Last round of the previous epoch (0 for the first epoch).
    pub fn start_round(&self) -> usize {
        self.start_round
    }

    pub fn threshold(&self, arms: usize, horizon: usize) -> f64 {
        restart_threshold(arms, horizon, self.eta)
    }

    /// Adds the round's increment; returns true when the epoch ends, in which
    /// case the rate has been halved and the statistic cleared.
    pub fn step(&mut self, increment: f64, arms: usize, horizon: usize, round: usize) -> bool {
        self.statistic += increment;
        if self.statistic >= self.threshold(arms, horizon) {
            self.eta *= 0.5;
            self.epoch += 1;
            self.statistic = 0.0;
            self.start_round = round;
            true
        } else {
            false
        }
    }
}
