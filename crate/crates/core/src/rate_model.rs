//! SINRs, rates and secrecy rates for one NOMA pair.
//!
//! Within a pair the weaker user `m` (far) decodes its own message treating
//! the near user's signal as noise, then may run SIC to eavesdrop on the near
//! user `n`. The near user cancels `m`'s signal first and decodes its own.
//! Only the near user's message earns a positive secrecy rate.

use std::f64::consts::LN_2;

use crate::scenario::Scenario;
use crate::{Error, Result};

/// A pair with near/far roles fixed so that `gain_far <= gain_near`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderedPair {
    /// 1-based id of the weaker user `m`.
    pub far: usize,
    /// 1-based id of the stronger user `n`.
    pub near: usize,
    pub gain_far: f64,
    pub gain_near: f64,
}

impl OrderedPair {
    /// Orders two `(user_id, gain)` entries into far and near roles.
    pub fn new(a: (usize, f64), b: (usize, f64)) -> Self {
        let (far, near) = if a.1 <= b.1 { (a, b) } else { (b, a) };
        OrderedPair {
            far: far.0,
            near: near.0,
            gain_far: far.1,
            gain_near: near.1,
        }
    }

    pub fn from_scenario(scenario: &Scenario, u: usize, v: usize) -> Self {
        OrderedPair::new((u, scenario.gain(u)), (v, scenario.gain(v)))
    }

    /// The pair's user ids as `(smaller, larger)`.
    pub fn ids(&self) -> (usize, usize) {
        (self.far.min(self.near), self.far.max(self.near))
    }
}

/// Per-link SINRs inside a pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinrs {
    /// Far user's message as seen by the near user before SIC.
    pub far_at_near: f64,
    /// Near user's message at the near user after SIC.
    pub near_at_near: f64,
    /// Far user's own message, near user's signal as interference.
    pub far_at_far: f64,
    /// Near user's message intercepted by the far user after SIC.
    pub near_at_far: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReport {
    pub sinrs: Sinrs,
    /// `R_{n,n}`.
    pub rate_near: f64,
    /// `R_{m,m}`.
    pub rate_far: f64,
    /// `R_{n,m}`, the eavesdropping rate on the near user's message.
    pub eavesdrop: f64,
    /// `R^s_n`.
    pub secrecy: f64,
    /// OMA reference rate of the far user.
    pub oma_far: f64,
    /// OMA reference rate of the near user.
    pub oma_near: f64,
}

/// `log2(1 + x)`.
pub fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / LN_2
}

fn check_inputs(pair: &OrderedPair, powers: &[f64], noise: f64) -> Result<()> {
    if !(pair.gain_far.is_finite() && pair.gain_near.is_finite()) {
        return Err(Error::invalid("channel gains must be finite"));
    }
    if pair.gain_far < 0.0 || pair.gain_near < 0.0 {
        return Err(Error::invalid("channel gains must be non-negative"));
    }
    for &p in powers {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::invalid(format!("power must be finite and >= 0, got {p}")));
        }
    }
    if !(noise.is_finite() && noise > 0.0) {
        return Err(Error::invalid(format!("noise power must be positive and finite, got {noise}")));
    }
    Ok(())
}

pub fn sinr_terms(pair: &OrderedPair, p_far: f64, p_near: f64, noise: f64) -> Result<Sinrs> {
    check_inputs(pair, &[p_far, p_near], noise)?;
    let (hm, hn) = (pair.gain_far, pair.gain_near);
    Ok(Sinrs {
        far_at_near: p_far * hn / (p_near * hn + noise),
        near_at_near: p_near * hn / noise,
        far_at_far: p_far * hm / (p_near * hm + noise),
        near_at_far: p_near * hm / noise,
    })
}

/// Secrecy rate of the near user, clamped at zero.
pub fn secrecy_rate(pair: &OrderedPair, p_far: f64, p_near: f64, noise: f64) -> Result<f64> {
    let s = sinr_terms(pair, p_far, p_near, noise)?;
    Ok((log2_1p(s.near_at_near) - log2_1p(s.near_at_far)).max(0.0))
}

/// OMA reference rates `(R_m, R_n)` with half the resource each.
pub fn oma_rates(pair: &OrderedPair, p_pair: f64, noise: f64) -> Result<(f64, f64)> {
    check_inputs(pair, &[p_pair], noise)?;
    Ok((
        0.5 * log2_1p(p_pair * pair.gain_far / noise),
        0.5 * log2_1p(p_pair * pair.gain_near / noise),
    ))
}

pub fn rate_report(pair: &OrderedPair, p_far: f64, p_near: f64, noise: f64) -> Result<RateReport> {
    let sinrs = sinr_terms(pair, p_far, p_near, noise)?;
    let rate_near = log2_1p(sinrs.near_at_near);
    let rate_far = log2_1p(sinrs.far_at_far);
    let eavesdrop = log2_1p(sinrs.near_at_far);
    let (oma_far, oma_near) = oma_rates(pair, p_far + p_near, noise)?;
    Ok(RateReport {
        sinrs,
        rate_near,
        rate_far,
        eavesdrop,
        secrecy: (rate_near - eavesdrop).max(0.0),
        oma_far,
        oma_near,
    })
}

/// Closed-form `dR^s_n / dp_n` with `p_m` held fixed (valid where the
/// secrecy rate is not clamped).
pub fn secrecy_slope_near(pair: &OrderedPair, p_near: f64, noise: f64) -> f64 {
    let (hm, hn) = (pair.gain_far, pair.gain_near);
    (hn * noise - hm * noise) / (LN_2 * (p_near * hn + noise) * (p_near * hm + noise))
}
