//! Network instances: user placement, fading, path loss and noise.
//!
//! Users are dropped uniformly on a disc centred at the base station. Each
//! direct link sees Rayleigh fading, so the fading power `|g_k|^2` is a
//! unit-mean exponential draw, and power-law path loss, giving
//! `|h_k|^2 = |g_k|^2 * d_k^(-2 * exponent)`.
//!
//! # Reproducibility
//!
//! Every random draw comes from a ChaCha8 generator. A Monte-Carlo trial with
//! index `i` under base seed `s` uses the seed `s ^ i` (see [`trial_seed`]).
//! Within one seed, stream [`SCENARIO_STREAM`] feeds scenario sampling and
//! stream [`PAIRING_STREAM`] feeds randomized pairing, so the two never share
//! draws.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Stream used for sampling user positions and fading.
pub const SCENARIO_STREAM: u64 = 0;
/// Stream used by randomized baselines.
pub const PAIRING_STREAM: u64 = 1;

/// Users closer than this are placed at this distance (meters).
pub const MIN_DISTANCE: f64 = 1.0;

/// Relative jitter applied to break exact ties between channel gains.
const TIE_JITTER: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Number of user pairs `K`; the cell holds `2K` users.
    pub num_pairs: usize,
    /// Disc radius in meters.
    pub cell_radius: f64,
    pub path_loss_exponent: f64,
    /// Resource block bandwidth in Hz.
    pub bandwidth: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub total_power_dbm: f64,
    pub rng_seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            num_pairs: 4,
            cell_radius: 300.0,
            path_loss_exponent: 3.0,
            bandwidth: 0.5e6,
            noise_psd_dbm_per_hz: -174.0,
            total_power_dbm: 20.0,
            rng_seed: 0,
        }
    }
}

impl SystemConfig {
    pub fn num_users(&self) -> usize {
        2 * self.num_pairs
    }

    /// Receiver noise power `sigma^2` in watts.
    pub fn noise_power(&self) -> f64 {
        noise_power(self.noise_psd_dbm_per_hz, self.bandwidth)
    }

    /// Total transmit power budget `P` in watts.
    pub fn budget(&self) -> f64 {
        dbm_to_watts(self.total_power_dbm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_pairs < 1 {
            return Err(Error::invalid("num_pairs must be at least 1"));
        }
        let positive = [
            ("cell_radius", self.cell_radius),
            ("path_loss_exponent", self.path_loss_exponent),
            ("bandwidth", self.bandwidth),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        for (name, v) in [
            ("noise_psd_dbm_per_hz", self.noise_psd_dbm_per_hz),
            ("total_power_dbm", self.total_power_dbm),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite")));
            }
        }
        let (noise, budget) = (self.noise_power(), self.budget());
        if !(noise.is_finite() && noise > 0.0 && budget.is_finite() && budget > 0.0) {
            return Err(Error::invalid(format!(
                "derived noise power ({noise:e} W) and budget ({budget:e} W) must be positive and finite"
            )));
        }
        Ok(())
    }

    /// Parses a flat `key = value` config. Blank lines and `#` comments are
    /// ignored; keys not present keep their default value.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = SystemConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: &dyn std::fmt::Display| Error::Config {
                line: line_no,
                message: format!("bad value for `{key}`: {e}"),
            };
            match key {
                "num_pairs" => cfg.num_pairs = value.parse().map_err(|e| bad(&e))?,
                "cell_radius" => cfg.cell_radius = value.parse().map_err(|e| bad(&e))?,
                "path_loss_exponent" => {
                    cfg.path_loss_exponent = value.parse().map_err(|e| bad(&e))?
                }
                "bandwidth" => cfg.bandwidth = value.parse().map_err(|e| bad(&e))?,
                "noise_psd_dbm_per_hz" => {
                    cfg.noise_psd_dbm_per_hz = value.parse().map_err(|e| bad(&e))?
                }
                "total_power_dbm" => cfg.total_power_dbm = value.parse().map_err(|e| bad(&e))?,
                "rng_seed" => cfg.rng_seed = value.parse().map_err(|e| bad(&e))?,
                other => {
                    return Err(Error::Config {
                        line: line_no,
                        message: format!("unknown key `{other}`"),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_kv_str(&text)
    }

    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "num_pairs = {}", self.num_pairs);
        let _ = writeln!(out, "cell_radius = {}", self.cell_radius);
        let _ = writeln!(out, "path_loss_exponent = {}", self.path_loss_exponent);
        let _ = writeln!(out, "bandwidth = {}", self.bandwidth);
        let _ = writeln!(out, "noise_psd_dbm_per_hz = {}", self.noise_psd_dbm_per_hz);
        let _ = writeln!(out, "total_power_dbm = {}", self.total_power_dbm);
        let _ = writeln!(out, "rng_seed = {}", self.rng_seed);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserChannel {
    /// 1-based user index.
    pub user_id: usize,
    /// Distance to the base station in meters.
    pub distance: f64,
    /// Fading power `|g_k|^2`.
    pub fading_sq: f64,
    /// Channel gain `|h_k|^2`.
    pub gain_sq: f64,
}

/// One sampled network instance. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: SystemConfig,
    pub users: Vec<UserChannel>,
    /// `sigma^2` in watts.
    pub noise_power: f64,
    /// Power budget `P` in watts.
    pub budget: f64,
}

impl Scenario {
    /// Builds a scenario directly from channel gains (used by tests and by
    /// callers with externally measured channels). Distances are reported as
    /// NaN since they are unknown.
    pub fn from_gains(gains: &[f64], noise_power: f64, budget: f64) -> Result<Self> {
        if gains.is_empty() || gains.len() % 2 != 0 {
            return Err(Error::invalid(format!(
                "need a positive even number of users, got {}",
                gains.len()
            )));
        }
        if gains.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::invalid("channel gains must be positive and finite"));
        }
        if !(noise_power.is_finite() && noise_power > 0.0 && budget.is_finite() && budget > 0.0) {
            return Err(Error::invalid("noise power and budget must be positive and finite"));
        }
        let mut users: Vec<UserChannel> = gains
            .iter()
            .enumerate()
            .map(|(i, &g)| UserChannel {
                user_id: i + 1,
                distance: f64::NAN,
                fading_sq: f64::NAN,
                gain_sq: g,
            })
            .collect();
        break_ties(&mut users);
        let config = SystemConfig {
            num_pairs: gains.len() / 2,
            ..SystemConfig::default()
        };
        Ok(Scenario {
            config,
            users,
            noise_power,
            budget,
        })
    }

    pub fn num_pairs(&self) -> usize {
        self.users.len() / 2
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// Channel gain of a 1-based user id.
    pub fn gain(&self, user_id: usize) -> f64 {
        self.users[user_id - 1].gain_sq
    }

    /// Returns a copy with a different power budget (same channels).
    pub fn with_budget(&self, budget: f64) -> Scenario {
        let mut s = self.clone();
        s.budget = budget;
        s
    }
}

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Thermal noise power over `bandwidth` Hz for a PSD given in dBm/Hz.
pub fn noise_power(psd_dbm_per_hz: f64, bandwidth: f64) -> f64 {
    dbm_to_watts(psd_dbm_per_hz + 10.0 * bandwidth.log10())
}

/// Seed of Monte-Carlo trial `trial` under base seed `base`.
pub fn trial_seed(base: u64, trial: u64) -> u64 {
    base ^ trial
}

/// Generator for `seed` positioned on `stream`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Samples a scenario from `config`, drawing from stream
/// [`SCENARIO_STREAM`] of `config.rng_seed`.
pub fn sample_scenario(config: &SystemConfig) -> Result<Scenario> {
    config.validate()?;
    let mut rng = rng_for(config.rng_seed, SCENARIO_STREAM);
    let mut users = Vec::with_capacity(config.num_users());
    for k in 0..config.num_users() {
        let u: f64 = rng.gen();
        let distance = (config.cell_radius * u.sqrt()).max(MIN_DISTANCE);
        // Inverse-CDF exponential; 1 - u lies in (0, 1] so the log is finite.
        let v: f64 = rng.gen();
        let fading_sq = -(1.0 - v).ln();
        users.push(UserChannel {
            user_id: k + 1,
            distance,
            fading_sq,
            gain_sq: path_gain(fading_sq, distance, config.path_loss_exponent),
        });
    }
    // A zero fading draw happens only when v == 0 exactly; nudge it so every
    // user has a usable channel.
    for user in &mut users {
        if user.gain_sq <= 0.0 {
            user.fading_sq = f64::MIN_POSITIVE;
            user.gain_sq = path_gain(user.fading_sq, user.distance, config.path_loss_exponent)
                .max(f64::MIN_POSITIVE);
        }
    }
    break_ties(&mut users);
    Ok(Scenario {
        config: config.clone(),
        users,
        noise_power: config.noise_power(),
        budget: config.budget(),
    })
}

/// `|g|^2 * d^(-2 * exponent)`.
pub fn path_gain(fading_sq: f64, distance: f64, exponent: f64) -> f64 {
    fading_sq * distance.powf(-2.0 * exponent)
}

/// Makes all gains pairwise distinct by nudging later-indexed duplicates
/// upward by a relative `TIE_JITTER`.
fn break_ties(users: &mut [UserChannel]) {
    for i in 1..users.len() {
        loop {
            let g = users[i].gain_sq;
            let clash = users[..i]
                .iter()
                .any(|u| (u.gain_sq - g).abs() <= TIE_JITTER * 0.5 * g.max(u.gain_sq));
            if !clash {
                break;
            }
            users[i].gain_sq = g * (1.0 + TIE_JITTER);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn dbm_conversions() {
        assert!(close(dbm_to_watts(30.0), 1.0, 1e-15));
        assert!(close(dbm_to_watts(20.0), 0.1, 1e-14));
        assert!(close(dbm_to_watts(0.0), 1e-3, 1e-14));
    }

    #[test]
    fn noise_power_examples() {
        assert!(close(noise_power(-174.0, 1.0), 3.981_071_705_534_97e-21, 1e-12));
        assert!(close(noise_power(-174.0, 5e5), 1.990_535_852_767_484e-15, 1e-12));
        assert!(close(noise_power(-144.0, 1e3), 3.981_071_705_534_97e-15, 1e-12));
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = SystemConfig {
            rng_seed: 42,
            ..Default::default()
        };
        assert_eq!(sample_scenario(&cfg).unwrap(), sample_scenario(&cfg).unwrap());
        let other = SystemConfig {
            rng_seed: 43,
            ..Default::default()
        };
        let a = sample_scenario(&cfg).unwrap();
        let b = sample_scenario(&other).unwrap();
        assert_ne!(
            a.users.iter().map(|u| u.fading_sq).collect::<Vec<_>>(),
            b.users.iter().map(|u| u.fading_sq).collect::<Vec<_>>()
        );
    }

    #[test]
    fn cardinality_and_positivity() {
        let s = sample_scenario(&SystemConfig::default()).unwrap();
        assert_eq!(s.num_users(), 8);
        for u in &s.users {
            assert!(u.gain_sq > 0.0);
            assert!(u.distance >= MIN_DISTANCE && u.distance <= 300.0);
            let expected = path_gain(u.fading_sq, u.distance, 3.0);
            assert!(close(u.gain_sq, expected, 1e-11));
        }
    }

    #[test]
    fn ties_are_broken() {
        let s = Scenario::from_gains(&[1.0, 1.0, 2.0, 1.0], 1.0, 1.0).unwrap();
        let g: Vec<f64> = s.users.iter().map(|u| u.gain_sq).collect();
        for i in 0..g.len() {
            for j in 0..i {
                assert_ne!(g[i], g[j]);
            }
        }
        assert_eq!(g[0], 1.0);
        assert!(g[1] > 1.0 && g[1] < 1.0 + 1e-11);
    }

    #[test]
    fn gain_decreases_with_distance() {
        let mut prev = f64::INFINITY;
        for d in [1.0, 2.0, 10.0, 100.0, 300.0] {
            let g = path_gain(0.7, d, 3.0);
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn kv_config_round_trip_and_errors() {
        let cfg = SystemConfig {
            num_pairs: 3,
            total_power_dbm: 25.0,
            rng_seed: 9,
            ..Default::default()
        };
        assert_eq!(SystemConfig::from_kv_str(&cfg.to_kv_string()).unwrap(), cfg);

        let parsed = SystemConfig::from_kv_str("# comment\nnum_pairs = 5\n\n").unwrap();
        assert_eq!(parsed.num_pairs, 5);
        assert_eq!(parsed.cell_radius, 300.0);

        assert!(matches!(
            SystemConfig::from_kv_str("bogus = 1"),
            Err(Error::Config { line: 1, .. })
        ));
        assert!(matches!(
            SystemConfig::from_kv_str("num_pairs 3"),
            Err(Error::Config { .. })
        ));
        assert!(SystemConfig::from_kv_str("num_pairs = 0").is_err());
        assert!(SystemConfig::from_kv_str("bandwidth = -1").is_err());
    }
}
