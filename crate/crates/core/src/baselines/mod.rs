//! Comparison schemes: equal power allocation, random pairing, Gale-Shapley
//! pairing and the Simplex-based variant of the proposed algorithm.
//!
//! Every scheme reuses the shared power and rate code; only the pairing rule
//! or the power split differs.

pub mod gale_shapley;
pub mod simplex;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::optimizer::{allocate_for_pairing, optimize, sum_secrecy, LpBackend, OptimizerParams, Solution};
use crate::power_alloc::{epa_allocation, PairAllocation};
use crate::rounding::Pairing;
use crate::scenario::{rng_for, Scenario, PAIRING_STREAM};
use crate::Result;

pub use gale_shapley::{gale_shapley_pairing, is_stable, Preferences};
pub use simplex::{simplex_solve, SimplexSolution, SimplexTableau};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Proposed,
    /// Proposed pairing, equal power per user.
    Epa,
    RandomPairing,
    GaleShapley,
    /// Proposed alternation with the Simplex LP solver.
    Simplex,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Proposed,
        Scheme::Epa,
        Scheme::RandomPairing,
        Scheme::GaleShapley,
        Scheme::Simplex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Epa => "epa",
            Scheme::RandomPairing => "rp",
            Scheme::GaleShapley => "gs",
            Scheme::Simplex => "simplex",
        }
    }
}

/// Result of one scheme on one scenario.
#[derive(Debug, Clone)]
pub struct SchemeOutcome {
    pub pairing: Pairing,
    pub allocations: Vec<PairAllocation>,
    pub sum_secrecy: f64,
    /// Outer iterations (zero for non-iterative schemes).
    pub iterations: usize,
}

impl From<Solution> for SchemeOutcome {
    fn from(s: Solution) -> Self {
        SchemeOutcome {
            pairing: s.pairing,
            allocations: s.allocations,
            sum_secrecy: s.sum_secrecy,
            iterations: s.iterations,
        }
    }
}

/// Uniformly random perfect matching: shuffle the users and pair
/// neighbours.
pub fn random_pairing<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R) -> Pairing {
    let mut ids: Vec<usize> = (1..=scenario.num_users()).collect();
    ids.shuffle(rng);
    Pairing::new(scenario.num_users(), ids.chunks_exact(2).map(|c| (c[0], c[1])))
        .expect("consecutive pairs of a permutation form a perfect matching")
}

/// Calibrated powers on a fixed matching.
pub fn with_calibrated_powers(scenario: &Scenario, pairing: Pairing) -> Result<SchemeOutcome> {
    let (_, allocations) = allocate_for_pairing(scenario, &pairing)?;
    Ok(SchemeOutcome {
        sum_secrecy: sum_secrecy(&pairing, &allocations)?,
        pairing,
        allocations,
        iterations: 0,
    })
}

/// Equal power `P / (2K)` per user on a given matching.
pub fn epa_scheme(scenario: &Scenario, pairing: Pairing) -> Result<SchemeOutcome> {
    let allocations = epa_allocation(&pairing.ordered_pairs(scenario), scenario.budget, scenario.noise_power)?;
    Ok(SchemeOutcome {
        sum_secrecy: sum_secrecy(&pairing, &allocations)?,
        pairing,
        allocations,
        iterations: 0,
    })
}

pub fn random_pairing_scheme(scenario: &Scenario) -> Result<SchemeOutcome> {
    let mut rng = rng_for(scenario.config.rng_seed, PAIRING_STREAM);
    with_calibrated_powers(scenario, random_pairing(scenario, &mut rng))
}

pub fn gale_shapley_scheme(scenario: &Scenario) -> Result<SchemeOutcome> {
    with_calibrated_powers(scenario, gale_shapley_pairing(scenario)?)
}

/// Runs one scheme. EPA runs the proposed algorithm first for its pairing;
/// use [`epa_scheme`] directly when that pairing is already known.
pub fn run_scheme(scheme: Scheme, scenario: &Scenario, params: &OptimizerParams) -> Result<SchemeOutcome> {
    match scheme {
        Scheme::Proposed => Ok(optimize(scenario, params)?.into()),
        Scheme::Epa => epa_scheme(scenario, optimize(scenario, params)?.pairing),
        Scheme::RandomPairing => random_pairing_scheme(scenario),
        Scheme::GaleShapley => gale_shapley_scheme(scenario),
        Scheme::Simplex => {
            let p = OptimizerParams {
                backend: LpBackend::Simplex,
                ..*params
            };
            Ok(optimize(scenario, &p)?.into())
        }
    }
}
