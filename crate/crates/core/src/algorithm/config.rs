use std::fmt;
use std::str::FromStr;

use super::{AuxUpdate, EstimatorKind, PredictorKind, Settings};
use crate::barrier::FIXED_RATE_CAP;
use crate::error::{Error, Result};
use crate::estimators::CheckMode;

/// Initial-rate cap for the increasing-rate configuration; five times it is
/// the fixed-rate cap.
pub const BOOSTED_RATE_CAP: f64 = 1.0 / 810.0;

/// The four shipped configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TableRow {
    /// Corrected update, reservoir-mean predictions, fixed rate.
    Variance,
    /// Corrected update, last-observed predictions, mixing and increasing rates.
    PathPlus,
    /// Uncorrected update, last-observed predictions.
    PathSum,
    /// Uncorrected update, realized-loss predictions, plain estimator.
    BestOfBoth,
}

impl TableRow {
    pub const ALL: [TableRow; 4] =
        [TableRow::Variance, TableRow::PathPlus, TableRow::PathSum, TableRow::BestOfBoth];

    pub fn name(self) -> &'static str {
        match self {
            TableRow::Variance => "variance",
            TableRow::PathPlus => "path_plus",
            TableRow::PathSum => "path_sum",
            TableRow::BestOfBoth => "best_of_both",
        }
    }

    pub fn supports_auto(self) -> bool {
        matches!(self, TableRow::PathSum | TableRow::BestOfBoth)
    }

    /// Rate used when none is given.
    pub fn default_eta(self) -> f64 {
        match self {
            TableRow::PathPlus => BOOSTED_RATE_CAP,
            _ => FIXED_RATE_CAP,
        }
    }
}

impl fmt::Display for TableRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TableRow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TableRow::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::config(format!("unknown algorithm row `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaChoice {
    Default,
    Fixed(f64),
    /// Parameter-free operation through the doubling wrapper.
    Auto,
}

/// Wires a row into learner settings.
pub fn configure(row: TableRow, arms: usize, horizon: usize, eta: EtaChoice, mode: CheckMode) -> Result<Settings> {
    let (doubling, eta) = match eta {
        EtaChoice::Default => (false, row.default_eta()),
        EtaChoice::Fixed(v) => (false, v),
        EtaChoice::Auto if row.supports_auto() => (true, FIXED_RATE_CAP),
        EtaChoice::Auto => {
            return Err(Error::config(format!("eta = auto is not available for row {row}")))
        }
    };
    if row == TableRow::PathPlus && mode == CheckMode::Strict && eta > BOOSTED_RATE_CAP {
        return Err(Error::config(format!(
            "path_plus needs eta <= 1/810 in strict mode, got {eta}"
        )));
    }
    let (update, predictor, estimator, mixing, increasing_rates) = match row {
        TableRow::Variance => (
            AuxUpdate::Corrected,
            PredictorKind::Reservoir,
            EstimatorKind::VarianceReduced,
            false,
            false,
        ),
        TableRow::PathPlus => (
            AuxUpdate::Corrected,
            PredictorKind::LastObserved,
            EstimatorKind::VarianceReduced,
            true,
            true,
        ),
        TableRow::PathSum => (
            AuxUpdate::Uncorrected,
            PredictorKind::LastObserved,
            EstimatorKind::VarianceReduced,
            false,
            false,
        ),
        TableRow::BestOfBoth => (
            AuxUpdate::Uncorrected,
            PredictorKind::Realized,
            EstimatorKind::Plain,
            false,
            false,
        ),
    };
    Ok(Settings {
        arms,
        horizon,
        update,
        predictor,
        estimator,
        mixing,
        increasing_rates,
        eta,
        doubling,
        rate_cap: Some(FIXED_RATE_CAP),
        mode,
    })
}

/// `(M + N)^{-1/4} T^{-1/4}` for a game with `M` and `N` actions.
pub fn game_rate(rows: usize, cols: usize, horizon: usize) -> f64 {
    ((rows + cols) as f64).powf(-0.25) * (horizon as f64).powf(-0.25)
}

/// Self-play seat: the path-length row at the game rate, with the
/// rate cap lifted and the remaining conditions still checked.
pub fn game_player(arms: usize, opponent_arms: usize, horizon: usize, mode: CheckMode) -> Result<Settings> {
    let mut s = configure(
        TableRow::PathSum,
        arms,
        horizon,
        EtaChoice::Fixed(game_rate(arms, opponent_arms, horizon)),
        mode,
    )?;
    s.rate_cap = None;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithm::{BroadOmd, Learner};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn rows_parse_and_print() {
        for row in TableRow::ALL {
            assert_eq!(row.name().parse::<TableRow>().unwrap(), row);
        }
        assert!("exp4".parse::<TableRow>().is_err());
    }

    #[test]
    fn auto_wraps_only_uncorrected_rows() {
        let s = configure(TableRow::BestOfBoth, 4, 100, EtaChoice::Auto, CheckMode::Strict).unwrap();
        assert!(s.doubling);
        assert_eq!(s.eta, 1.0 / 162.0);
        assert!(configure(TableRow::Variance, 4, 100, EtaChoice::Auto, CheckMode::Strict).is_err());
        assert!(configure(TableRow::PathPlus, 4, 100, EtaChoice::Auto, CheckMode::Strict).is_err());
    }

    #[test]
    fn path_plus_wiring() {
        let s = configure(TableRow::PathPlus, 3, 148, EtaChoice::Default, CheckMode::Strict).unwrap();
        assert!(s.mixing && s.increasing_rates);
        assert!(s.eta <= 1.0 / 810.0);
        let alg = BroadOmd::new(s, ChaCha20Rng::seed_from_u64(0)).unwrap();
        let sched = alg.schedule().unwrap();
        assert_eq!(sched.thresholds(), &[6.0; 3]);
        assert!((sched.kappa() - (1.0 / 148f64.ln()).exp()).abs() < 1e-15);
        assert!(configure(TableRow::PathPlus, 3, 148, EtaChoice::Fixed(0.002), CheckMode::Strict).is_err());
    }

    #[test]
    fn variance_row_capacity() {
        let s = configure(TableRow::Variance, 5, 10_000, EtaChoice::Default, CheckMode::Strict).unwrap();
        let alg = BroadOmd::new(s, ChaCha20Rng::seed_from_u64(0)).unwrap();
        assert_eq!(alg.reservoir().unwrap().capacity(), 10);
        assert_eq!(alg.arms(), 5);
    }

    #[test]
    fn game_rate_value() {
        assert!((game_rate(2, 2, 10_000) - 0.5f64.sqrt() * 0.1).abs() < 1e-15);
        let s = game_player(2, 2, 10_000, CheckMode::Strict).unwrap();
        assert_eq!(s.rate_cap, None);
        assert!(!s.doubling);
    }
}
