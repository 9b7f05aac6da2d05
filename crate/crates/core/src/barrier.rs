//! Log-barrier regularizer on the probability simplex.
//!
//! The regularizer is `psi(w) = sum_i (1/eta_i) ln(1/w_i)` with one learning
//! rate per arm. Its Bregman divergence is `sum_i (1/eta_i) h(u_i / v_i)` with
//! `h(y) = y - 1 - ln y`, and the mirror-descent step
//!
//! ```text
//! argmin_{w in simplex}  <w, x> + D(w, w')
//! ```
//!
//! has the stationarity solution `w_i(lambda) = 1 / (eta_i (x_i + lambda) + 1/w'_i)`
//! where `lambda` is the unique multiplier normalizing the weights. The
//! multiplier is located by bisection on the strictly decreasing map
//! `lambda -> sum_i w_i(lambda)`.

use crate::error::{Error, Result};

/// Learning-rate cap for fixed-rate configurations (condition (i) of the
/// stability conditions).
pub const FIXED_RATE_CAP: f64 = 1.0 / 162.0;

/// Normalization residual at which the multiplier search stops.
pub const SOLVER_TOLERANCE: f64 = 1e-12;

/// Bisection iteration budget.
pub const MAX_BISECTION_STEPS: usize = 500;

/// Bracket expansion budget.
pub const MAX_BRACKET_DOUBLINGS: usize = 200;

/// A strictly positive probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub const SUM_TOLERANCE: f64 = 1e-9;

    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Domain("simplex point needs at least one coordinate".into()));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::Domain(format!(
                "simplex coordinate {i} must be strictly positive and finite, got {w}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::Domain(format!(
                "simplex weights must sum to 1 (got {sum})"
            )));
        }
        Ok(SimplexPoint(weights))
    }

    pub fn uniform(arms: usize) -> Self {
        assert!(arms > 0, "uniform point over zero arms");
        SimplexPoint(vec![1.0 / arms as f64; arms])
    }

    /// Wraps weights produced by a solver that already guarantees the invariants.
    pub(crate) fn from_solver(weights: Vec<f64>) -> Self {
        debug_assert!(weights.iter().all(|w| *w > 0.0));
        SimplexPoint(weights)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for SimplexPoint {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Per-arm learning rates together with the cap they are checked against.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningRates {
    rates: Vec<f64>,
    cap: f64,
}

impl LearningRates {
    pub fn new(rates: Vec<f64>, cap: f64) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::Domain("learning-rate vector is empty".into()));
        }
        if let Some(r) = rates.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::Domain(format!("learning rate must be positive, got {r}")));
        }
        if !(cap.is_finite() && cap > 0.0) {
            return Err(Error::Domain(format!("learning-rate cap must be positive, got {cap}")));
        }
        Ok(LearningRates { rates, cap })
    }

    pub fn uniform(arms: usize, eta: f64, cap: f64) -> Result<Self> {
        Self::new(vec![eta; arms], cap)
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn max_rate(&self) -> f64 {
        self.rates.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn within_cap(&self) -> bool {
        self.max_rate() <= self.cap
    }

    pub(crate) fn scale(&mut self, arm: usize, factor: f64) {
        self.rates[arm] *= factor;
    }

    pub(crate) fn reset_all(&mut self, eta: f64) {
        self.rates.iter_mut().for_each(|r| *r = eta);
    }
}

/// The mirror-descent objective `<w, x> + D(w, w')` around a previous point.
#[derive(Debug, Clone, Copy)]
pub struct BarrierObjective<'a> {
    prev: &'a SimplexPoint,
    linear: &'a [f64],
    rates: &'a LearningRates,
}

impl<'a> BarrierObjective<'a> {
    pub fn new(prev: &'a SimplexPoint, linear: &'a [f64], rates: &'a LearningRates) -> Result<Self> {
        let k = prev.len();
        if linear.len() != k {
            return Err(Error::Dimension { expected: k, got: linear.len() });
        }
        if rates.len() != k {
            return Err(Error::Dimension { expected: k, got: rates.len() });
        }
        if let Some(x) = linear.iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("linear term must be finite, got {x}")));
        }
        Ok(BarrierObjective { prev, linear, rates })
    }

    pub fn prev(&self) -> &SimplexPoint {
        self.prev
    }

    pub fn linear(&self) -> &[f64] {
        self.linear
    }

    pub fn rates(&self) -> &LearningRates {
        self.rates
    }

    /// Objective value at `w`; `+inf` outside the open positive orthant.
    pub fn value(&self, w: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..w.len() {
            if w[i] <= 0.0 {
                return f64::INFINITY;
            }
            total += self.linear[i] * w[i] + h_unchecked(w[i] / self.prev[i]) / self.rates.rates()[i];
        }
        total
    }
}

/// `h(y) = y - 1 - ln y`.
pub fn h(y: f64) -> Result<f64> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::Domain(format!("h is defined for y > 0, got {y}")));
    }
    Ok(h_unchecked(y))
}

#[inline]
fn h_unchecked(y: f64) -> f64 {
    y - 1.0 - y.ln()
}

/// Bregman divergence of the log-barrier, `sum_i (1/eta_i) h(u_i / v_i)`.
pub fn bregman(u: &[f64], v: &[f64], rates: &LearningRates) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension { expected: u.len(), got: v.len() });
    }
    if rates.len() != u.len() {
        return Err(Error::Dimension { expected: u.len(), got: rates.len() });
    }
    let mut total = 0.0;
    for ((ui, vi), eta) in u.iter().zip(v).zip(rates.rates()) {
        if !(*ui > 0.0) || !(*vi > 0.0) {
            return Err(Error::Domain(format!(
                "Bregman divergence needs positive coordinates, got {ui} and {vi}"
            )));
        }
        total += h_unchecked(ui / vi) / eta;
    }
    Ok(total)
}

/// Minimizes `<w, x> + D(w, w')` over the simplex.
pub fn omd_step(obj: &BarrierObjective<'_>) -> Result<SimplexPoint> {
    let rates = obj.rates.rates();
    let prev = obj.prev.weights();
    // w_i(lambda) = 1 / (offset_i + eta_i * lambda)
    let offset: Vec<f64> = obj
        .linear
        .iter()
        .zip(rates)
        .zip(prev)
        .map(|((x, eta), p)| eta * x + 1.0 / p)
        .collect();
    let total = |lambda: f64| -> f64 {
        offset
            .iter()
            .zip(rates)
            .map(|(c, eta)| 1.0 / (c + eta * lambda))
            .sum()
    };
    let bracket_err = || Error::Bracket {
        linear: obj.linear.to_vec(),
        rates: rates.to_vec(),
        prev: prev.to_vec(),
    };

    // Past every pole the sum decreases strictly from +inf to 0. At `lo` the
    // coordinate nearest its pole equals one, so the sum is at least one.
    let mut lo = offset
        .iter()
        .zip(rates)
        .map(|(c, eta)| (1.0 - c) / eta)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sum_lo = total(lo);
    if (sum_lo - 1.0).abs() <= SOLVER_TOLERANCE {
        return Ok(finish(&offset, rates, lo));
    }
    if !(sum_lo > 1.0) || !lo.is_finite() {
        return Err(bracket_err());
    }

    let min_rate = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let mut width = 1.0 / min_rate;
    let mut hi = lo + width;
    let mut sum_hi = total(hi);
    let mut doublings = 0;
    while sum_hi >= 1.0 {
        doublings += 1;
        if doublings > MAX_BRACKET_DOUBLINGS || !hi.is_finite() {
            return Err(bracket_err());
        }
        width *= 2.0;
        hi = lo + width;
        sum_hi = total(hi);
    }

    let mut best = if (sum_lo - 1.0).abs() < (sum_hi - 1.0).abs() {
        (lo, sum_lo)
    } else {
        (hi, sum_hi)
    };
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let sum_mid = total(mid);
        // A few ulps of summation noise are tolerated; real non-monotonicity is not.
        if sum_mid > sum_lo * (1.0 + 1e-14) || sum_mid < sum_hi * (1.0 - 1e-14) {
            return Err(Error::Numerical(format!(
                "normalization sum not monotone on [{lo}, {hi}]: {sum_lo} / {sum_mid} / {sum_hi}"
            )));
        }
        if (sum_mid - 1.0).abs() < (best.1 - 1.0).abs() {
            best = (mid, sum_mid);
        }
        if (sum_mid - 1.0).abs() <= SOLVER_TOLERANCE {
            break;
        }
        if sum_mid > 1.0 {
            lo = mid;
            sum_lo = sum_mid;
        } else {
            hi = mid;
            sum_hi = sum_mid;
        }
    }
    // Floating-point granularity can stop the bracket short of 1e-12 only for
    // extreme inputs; anything still off by more than the simplex tolerance is
    // a genuine failure.
    if (best.1 - 1.0).abs() > SimplexPoint::SUM_TOLERANCE {
        return Err(Error::Numerical(format!(
            "multiplier search stalled with normalization residual {}",
            (best.1 - 1.0).abs()
        )));
    }
    Ok(finish(&offset, rates, best.0))
}

fn finish(offset: &[f64], rates: &[f64], lambda: f64) -> SimplexPoint {
    SimplexPoint::from_solver(
        offset
            .iter()
            .zip(rates)
            .map(|(c, eta)| 1.0 / (c + eta * lambda))
            .collect(),
    )
}

/// First-order optimality residual of `w` for the objective.
///
/// Fits the multiplier `lambda* = mean_i(1/(eta_i w_i) - 1/(eta_i w'_i) - x_i)`
/// and returns the larger of the worst stationarity deviation and the
/// normalization error `|sum w - 1|`.
pub fn kkt_residual(w: &[f64], obj: &BarrierObjective<'_>) -> f64 {
    let rates = obj.rates.rates();
    let prev = obj.prev.weights();
    let k = w.len();
    let gradient_gap: Vec<f64> = (0..k)
        .map(|i| 1.0 / (rates[i] * w[i]) - 1.0 / (rates[i] * prev[i]) - obj.linear[i])
        .collect();
    let lambda = gradient_gap.iter().sum::<f64>() / k as f64;
    let stationarity = gradient_gap
        .iter()
        .map(|g| (g - lambda).abs())
        .fold(0.0, f64::max);
    let normalization = (w.iter().sum::<f64>() - 1.0).abs();
    stationarity.max(normalization)
}

/// `(1 - 1/T) w + 1/(K T)`: mixes a point with a `1/T` share of uniform exploration.
pub fn mix_uniform(w: &SimplexPoint, horizon: usize) -> Result<SimplexPoint> {
    if horizon < 2 {
        return Err(Error::Domain(format!("mixing needs horizon >= 2, got {horizon}")));
    }
    let t = horizon as f64;
    let k = w.len() as f64;
    Ok(SimplexPoint(
        w.weights()
            .iter()
            .map(|wi| (1.0 - 1.0 / t) * wi + 1.0 / (k * t))
            .collect(),
    ))
}

/// Minimizer of the regularizer itself: `w_i` proportional to `1/eta_i`.
pub fn init_point(rates: &LearningRates) -> SimplexPoint {
    let inv: Vec<f64> = rates.rates().iter().map(|r| 1.0 / r).collect();
    let z: f64 = inv.iter().sum();
    SimplexPoint(inv.into_iter().map(|v| v / z).collect())
}
