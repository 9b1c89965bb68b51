//! Closed-form power allocation for a fixed pairing.
//!
//! For a pair with total power `p` the far user's OMA-parity constraint is
//! binding at the optimum, so the near user receives
//! `p_n = (sigma^2 / |h_m|^2) (sqrt(1 + p |h_m|^2 / sigma^2) - 1)` and the far
//! user gets the remainder. Substituting `p_n` leaves a concave secrecy rate
//! in `p`; its stationarity condition against a power price `dual` reduces to
//! the cubic
//!
//! ```text
//! f(a) = a^3 - c a^2 - e,   c = 1 - |h_m|^2/|h_n|^2,
//!                           e = |h_m|^2 c / (2 ln2 sigma^2 dual),
//! ```
//!
//! in `a = sqrt(1 + p |h_m|^2 / sigma^2)`. The cubic has exactly one positive
//! root, taken from Cardano's formula. The price is then tuned by bisection
//! until the pair powers exhaust the budget.

use std::f64::consts::LN_2;

use crate::rate_model::{log2_1p, secrecy_rate, OrderedPair};
use crate::{Error, Result};

/// Relative tolerance on the budget identity after calibration.
pub const BUDGET_TOLERANCE: f64 = 1e-8;
/// Residual tolerance of the cubic, relative to `max(1, a^3)`.
pub const CUBIC_TOLERANCE: f64 = 1e-9;

const INITIAL_BRACKET: (f64, f64) = (1e-12, 1.0);
const MAX_DOUBLINGS: usize = 200;
const MAX_BISECTIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairAllocation {
    pub pair: OrderedPair,
    /// Total pair power `p_{m,n}`.
    pub p_pair: f64,
    pub p_near: f64,
    pub p_far: f64,
    /// Secrecy rate of the near user at these powers.
    pub secrecy: f64,
}

impl PairAllocation {
    /// Splits `p_pair` with the binding near-user power and evaluates the
    /// resulting secrecy rate.
    pub fn from_pair_power(pair: OrderedPair, p_pair: f64, noise: f64) -> Result<Self> {
        let p_near = pn_star(&pair, p_pair, noise)?.min(p_pair);
        let p_far = (p_pair - p_near).max(0.0);
        Ok(PairAllocation {
            pair,
            p_pair,
            p_near,
            p_far,
            secrecy: secrecy_rate(&pair, p_far, p_near, noise)?,
        })
    }

    /// Allocation for explicitly given per-user powers.
    pub fn from_user_powers(pair: OrderedPair, p_far: f64, p_near: f64, noise: f64) -> Result<Self> {
        Ok(PairAllocation {
            pair,
            p_pair: p_far + p_near,
            p_near,
            p_far,
            secrecy: secrecy_rate(&pair, p_far, p_near, noise)?,
        })
    }
}

/// Result of the budget calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualState {
    /// Calibrated power price.
    pub dual: f64,
    /// Sum of pair powers at `dual`.
    pub total_power: f64,
    /// Final bisection bracket.
    pub bracket: (f64, f64),
    /// Number of bisection steps taken.
    pub iterations: usize,
}

fn check_far_gain(pair: &OrderedPair, noise: f64) -> Result<()> {
    if !(pair.gain_far.is_finite() && pair.gain_far > 0.0) {
        return Err(Error::invalid(format!(
            "far-user gain must be positive, got {}",
            pair.gain_far
        )));
    }
    if !(noise.is_finite() && noise > 0.0) {
        return Err(Error::invalid("noise power must be positive and finite"));
    }
    Ok(())
}

/// Near-user power that makes the far user's OMA-parity constraint tight.
pub fn pn_star(pair: &OrderedPair, p_pair: f64, noise: f64) -> Result<f64> {
    check_far_gain(pair, noise)?;
    if !(p_pair.is_finite() && p_pair >= 0.0) {
        return Err(Error::invalid(format!("pair power must be finite and >= 0, got {p_pair}")));
    }
    let x = p_pair * pair.gain_far / noise;
    // (sigma^2/h)(sqrt(1+x) - 1) rewritten to avoid cancellation.
    Ok(p_pair / (1.0 + (1.0 + x).sqrt()))
}

/// Upper bound on `p_n` from the far user's rate constraint.
pub fn near_power_upper_bound(pair: &OrderedPair, p_pair: f64, noise: f64) -> f64 {
    let x = p_pair * pair.gain_far / noise;
    p_pair / (1.0 + (1.0 + x).sqrt())
}

/// Lower bound on `p_n` from the near user's rate constraint.
pub fn near_power_lower_bound(pair: &OrderedPair, p_pair: f64, noise: f64) -> f64 {
    let x = p_pair * pair.gain_near / noise;
    p_pair / (1.0 + (1.0 + x).sqrt())
}

/// Secrecy rate as a function of the pair power once `p_n` is binding.
pub fn secrecy_at_pair_power(pair: &OrderedPair, p_pair: f64, noise: f64) -> f64 {
    let x = p_pair * pair.gain_far / noise;
    let alpha = (1.0 + x).sqrt();
    let alpha_minus_one = x / (alpha + 1.0);
    log2_1p(pair.gain_near / pair.gain_far * alpha_minus_one) - 0.5 * log2_1p(x)
}

/// Closed-form derivative of [`secrecy_at_pair_power`] in the pair power.
pub fn secrecy_slope_pair(pair: &OrderedPair, p_pair: f64, noise: f64) -> f64 {
    let (hm, hn) = (pair.gain_far, pair.gain_near);
    let alpha = (1.0 + p_pair * hm / noise).sqrt();
    (hn - hm) * hm / (2.0 * LN_2 * noise * alpha * alpha * (hn * alpha - (hn - hm)))
}

/// Coefficients `(c, e)` of the stationarity cubic `a^3 - c a^2 - e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityCubic {
    pub c: f64,
    pub e: f64,
}

impl StationarityCubic {
    pub fn new(pair: &OrderedPair, dual: f64, noise: f64) -> Result<Self> {
        check_far_gain(pair, noise)?;
        if !(dual.is_finite() && dual > 0.0) {
            return Err(Error::invalid(format!("dual variable must be positive, got {dual}")));
        }
        if !(pair.gain_near.is_finite() && pair.gain_far < pair.gain_near) {
            return Err(Error::invalid(format!(
                "pair needs gain_far < gain_near, got {} and {}",
                pair.gain_far, pair.gain_near
            )));
        }
        let c = 1.0 - pair.gain_far / pair.gain_near;
        let e = pair.gain_far / noise * c / (2.0 * LN_2 * dual);
        Ok(StationarityCubic { c, e })
    }

    pub fn eval(&self, alpha: f64) -> f64 {
        alpha * alpha * (alpha - self.c) - self.e
    }

    /// Cardano radicand `a_{m,n}`, scaled so that the real cube-root term is
    /// `cbrt(a) / (3 cbrt(4))`.
    pub fn radicand(&self) -> Result<f64> {
        let (c, e) = (self.c, self.e);
        let inner = e * (c * c * c / 27.0 + e / 4.0);
        if !(inner >= 0.0) || !inner.is_finite() {
            return Err(Error::NumericDomain(format!(
                "negative or non-finite discriminant {inner:e} in the power cubic"
            )));
        }
        Ok(4.0 * c * c * c + 54.0 * e + 108.0 * inner.sqrt())
    }

    /// Positive root via Cardano's formula.
    pub fn cardano_root(&self) -> Result<f64> {
        let a = self.radicand()?;
        let u = (a / 108.0).cbrt();
        if u == 0.0 {
            return Ok(0.0);
        }
        Ok(u + self.c * self.c / (9.0 * u) + self.c / 3.0)
    }

    /// Positive root by bisection on `[c, c + cbrt(e)]`.
    pub fn bisection_root(&self) -> f64 {
        let mut lo = self.c.max(0.0);
        let mut hi = lo + self.e.cbrt() + f64::EPSILON;
        while self.eval(hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.eval(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn within_tolerance(&self, alpha: f64) -> bool {
        self.eval(alpha).abs() <= CUBIC_TOLERANCE * alpha.powi(3).max(1.0)
    }
}

/// The unique positive root `a` of the stationarity cubic at price `dual`.
pub fn cardano_alpha(pair: &OrderedPair, dual: f64, noise: f64) -> Result<f64> {
    let cubic = StationarityCubic::new(pair, dual, noise)?;
    let alpha = cubic.cardano_root()?;
    if alpha.is_finite() && cubic.within_tolerance(alpha) {
        Ok(alpha)
    } else {
        Ok(cubic.bisection_root())
    }
}

/// Optimal pair power at price `dual`; zero when the root falls at or below
/// one (the implied power would be negative).
pub fn pair_power_star(pair: &OrderedPair, dual: f64, noise: f64) -> Result<f64> {
    let alpha = cardano_alpha(pair, dual, noise)?;
    if alpha <= 1.0 {
        return Ok(0.0);
    }
    Ok(noise / pair.gain_far * (alpha - 1.0) * (alpha + 1.0))
}

/// Full allocation of one pair at price `dual`.
pub fn allocate_at_dual(pair: &OrderedPair, dual: f64, noise: f64) -> Result<PairAllocation> {
    PairAllocation::from_pair_power(*pair, pair_power_star(pair, dual, noise)?, noise)
}

fn total_power(pairs: &[OrderedPair], dual: f64, noise: f64) -> Result<f64> {
    pairs.iter().map(|p| pair_power_star(p, dual, noise)).sum()
}

/// Tunes the power price so that the pair powers sum to `budget`.
pub fn calibrate_dual(
    pairs: &[OrderedPair],
    budget: f64,
    noise: f64,
) -> Result<(DualState, Vec<PairAllocation>)> {
    if pairs.is_empty() {
        return Err(Error::invalid("calibration needs at least one pair"));
    }
    if !(budget.is_finite() && budget > 0.0) {
        return Err(Error::invalid(format!("budget must be positive, got {budget}")));
    }

    let (mut lo, mut hi) = INITIAL_BRACKET;
    let mut total_lo = total_power(pairs, lo, noise)?;
    let mut doublings = 0;
    while total_lo < budget {
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::Convergence(format!(
                "could not bracket the power price from below (total {total_lo:e} W < budget {budget:e} W)"
            )));
        }
        hi = lo;
        lo *= 0.5;
        total_lo = total_power(pairs, lo, noise)?;
    }
    let mut total_hi = total_power(pairs, hi, noise)?;
    doublings = 0;
    while total_hi > budget {
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::Convergence(format!(
                "could not bracket the power price from above (total {total_hi:e} W > budget {budget:e} W)"
            )));
        }
        lo = hi;
        total_lo = total_hi;
        hi *= 2.0;
        total_hi = total_power(pairs, hi, noise)?;
    }

    let mut best = if (total_lo - budget).abs() <= (total_hi - budget).abs() {
        (lo, total_lo)
    } else {
        (hi, total_hi)
    };
    let mut iterations = 0;
    while (best.1 - budget).abs() > BUDGET_TOLERANCE * budget && hi / lo - 1.0 > 1e-14 {
        if iterations == MAX_BISECTIONS {
            return Err(Error::Convergence(format!(
                "power price bisection stalled with total {:e} W vs budget {budget:e} W",
                best.1
            )));
        }
        iterations += 1;
        let mid = (lo * hi).sqrt();
        let total = total_power(pairs, mid, noise)?;
        if total > total_lo || total < total_hi {
            return Err(Error::Convergence(format!(
                "total power is not monotone in the price near {mid:e}"
            )));
        }
        if total > budget {
            lo = mid;
            total_lo = total;
        } else {
            hi = mid;
            total_hi = total;
        }
        if (total - budget).abs() < (best.1 - budget).abs() {
            best = (mid, total);
        }
    }

    let allocations = pairs
        .iter()
        .map(|p| allocate_at_dual(p, best.0, noise))
        .collect::<Result<Vec<_>>>()?;
    let state = DualState {
        dual: best.0,
        total_power: best.1,
        bracket: (lo, hi),
        iterations,
    };
    Ok((state, allocations))
}

/// Equal power for every user: `P / (2K)` each.
pub fn epa_allocation(pairs: &[OrderedPair], budget: f64, noise: f64) -> Result<Vec<PairAllocation>> {
    if pairs.is_empty() {
        return Err(Error::invalid("equal power allocation needs at least one pair"));
    }
    if !(budget.is_finite() && budget > 0.0) {
        return Err(Error::invalid(format!("budget must be positive, got {budget}")));
    }
    let per_user = budget / (2 * pairs.len()) as f64;
    pairs
        .iter()
        .map(|p| PairAllocation::from_user_powers(*p, per_user, per_user, noise))
        .collect()
}
