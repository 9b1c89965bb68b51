//! Alternating optimization of powers and pairing.
//!
//! Each outer iteration calibrates the power price on the current matching,
//! prices every candidate pair at that price, solves the relaxed pairing LP
//! and rounds it to a new matching. The loop stops once the sum secrecy rate
//! changes by less than `eta`, when a matching repeats, or after `max_outer`
//! iterations. The best matching seen is returned.

use std::collections::HashSet;

use crate::baselines::simplex::simplex_solve;
use crate::pairing_lp::{
    barrier_solve, barrier_solve_from, build_lp, num_candidates, pair_of_index, BarrierDiagnostics, BarrierParams,
};
use crate::power_alloc::{allocate_at_dual, calibrate_dual, DualState, PairAllocation};
use crate::rate_model::{rate_report, OrderedPair};
use crate::rounding::{all_perfect_matchings, greedy_round, Pairing};
use crate::scenario::Scenario;
use crate::{Error, Result};

/// Which solver handles the relaxed pairing LP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpBackend {
    Barrier,
    Simplex,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerParams {
    /// Stop once consecutive sum secrecy rates differ by less than this.
    pub eta: f64,
    pub max_outer: usize,
    pub barrier: BarrierParams,
    pub backend: LpBackend,
    /// Relative headroom on the LP power row, which is set to
    /// `P (1 + power_slack)`.
    pub power_slack: f64,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        OptimizerParams {
            eta: 1e-6,
            max_outer: 50,
            barrier: BarrierParams::default(),
            backend: LpBackend::Barrier,
            power_slack: 1e-3,
        }
    }
}

impl OptimizerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("eta must be positive, got {}", self.eta)));
        }
        if self.max_outer == 0 {
            return Err(Error::invalid("max_outer must be at least 1"));
        }
        if !(self.power_slack >= 0.0 && self.power_slack.is_finite()) {
            return Err(Error::invalid("power_slack must be finite and >= 0"));
        }
        self.barrier.validate()
    }
}

/// Why the outer loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    /// The rounded matching had already been visited.
    Cycle,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub pairing: Pairing,
    pub allocations: Vec<PairAllocation>,
    pub dual: DualState,
    pub sum_secrecy: f64,
    /// Outer iterations performed.
    pub iterations: usize,
    /// Sum secrecy rate of the initial matching followed by one entry per
    /// outer iteration.
    pub trajectory: Vec<f64>,
    pub stop: StopReason,
    /// Barrier diagnostics of every LP solve (empty for the Simplex backend).
    pub lp_diagnostics: Vec<BarrierDiagnostics>,
}

/// Sum of the near users' secrecy rates over the matched pairs.
pub fn sum_secrecy(pairing: &Pairing, allocations: &[PairAllocation]) -> Result<f64> {
    if allocations.len() != pairing.num_pairs() {
        return Err(Error::invalid(format!(
            "{} allocations for {} pairs",
            allocations.len(),
            pairing.num_pairs()
        )));
    }
    let mut total = 0.0;
    for a in allocations {
        let (m, n) = a.pair.ids();
        if !pairing.contains(m, n) {
            return Err(Error::invalid(format!("allocation for unmatched pair ({m}, {n})")));
        }
        total += a.secrecy;
    }
    Ok(total)
}

/// Pairs the weakest user with the strongest, the second weakest with the
/// second strongest, and so on.
pub fn initial_pairing(scenario: &Scenario) -> Pairing {
    let mut ids: Vec<usize> = (1..=scenario.num_users()).collect();
    ids.sort_by(|&a, &b| scenario.gain(a).total_cmp(&scenario.gain(b)).then(a.cmp(&b)));
    let k = scenario.num_pairs();
    let pairs = (0..k).map(|i| (ids[i], ids[2 * k - 1 - i]));
    Pairing::new(scenario.num_users(), pairs).expect("strongest-weakest pairing is perfect")
}

/// Calibrated closed-form powers for a fixed matching.
pub fn allocate_for_pairing(scenario: &Scenario, pairing: &Pairing) -> Result<(DualState, Vec<PairAllocation>)> {
    calibrate_dual(&pairing.ordered_pairs(scenario), scenario.budget, scenario.noise_power)
}

/// Allocations of every candidate pair at a common price, in LP order.
pub fn price_candidates(scenario: &Scenario, dual: f64) -> Result<Vec<PairAllocation>> {
    let k = scenario.num_pairs();
    (1..=num_candidates(k))
        .map(|i| {
            let (m, n) = pair_of_index(i, k)?;
            allocate_at_dual(&OrderedPair::from_scenario(scenario, m, n), dual, scenario.noise_power)
        })
        .collect()
}

pub fn optimize(scenario: &Scenario, params: &OptimizerParams) -> Result<Solution> {
    optimize_from(scenario, initial_pairing(scenario), params)
}

/// Runs the alternation from a given matching.
pub fn optimize_from(scenario: &Scenario, initial: Pairing, params: &OptimizerParams) -> Result<Solution> {
    params.validate()?;
    if initial.num_users() != scenario.num_users() {
        return Err(Error::invalid("initial pairing does not match the scenario"));
    }
    let k = scenario.num_pairs();
    let power_cap = scenario.budget * (1.0 + params.power_slack);
    let (dual, allocations) = allocate_for_pairing(scenario, &initial)?;
    let o0 = sum_secrecy(&initial, &allocations)?;

    let mut current = (initial.clone(), dual, allocations.clone());
    let mut best = (initial.clone(), dual, allocations, o0);
    let mut trajectory = vec![o0];
    let mut visited: HashSet<Pairing> = HashSet::from([initial]);
    let mut lp_diagnostics = Vec::new();
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    for q in 1..=params.max_outer {
        iterations = q;
        let step = || -> Result<_> {
            let candidates = price_candidates(scenario, current.1.dual)?;
            let lp = build_lp(scenario, &candidates, power_cap)?;
            let (x, diag) = match params.backend {
                LpBackend::Barrier => {
                    let sol = match lp.matching_start(&current.0.to_vector()) {
                        Some(x0) => barrier_solve_from(&lp, &params.barrier, x0)?,
                        None => barrier_solve(&lp, &params.barrier)?,
                    };
                    (sol.x, Some(sol.diagnostics))
                }
                LpBackend::Simplex => (simplex_solve(&lp)?.x, None),
            };
            let pairing = greedy_round(&x, k)?;
            let (dual, allocations) = allocate_for_pairing(scenario, &pairing)?;
            Ok((pairing, dual, allocations, diag))
        };
        let (pairing, dual, allocations, diag) = step().map_err(|e| Error::Outer {
            iteration: q,
            source: Box::new(e),
        })?;
        lp_diagnostics.extend(diag);
        let o = sum_secrecy(&pairing, &allocations)?;
        let prev = *trajectory.last().expect("trajectory starts with o_0");
        trajectory.push(o);
        if o > best.3 {
            best = (pairing.clone(), dual, allocations.clone(), o);
        }
        if (o - prev).abs() < params.eta {
            stop = StopReason::Converged;
            break;
        }
        if !visited.insert(pairing.clone()) {
            stop = StopReason::Cycle;
            break;
        }
        current = (pairing, dual, allocations);
    }

    let (pairing, dual, allocations, sum) = best;
    Ok(Solution {
        pairing,
        allocations,
        dual,
        sum_secrecy: sum,
        iterations,
        trajectory,
        stop,
        lp_diagnostics,
    })
}

/// Checks every constraint of the joint problem at a solution: OMA rate
/// parity for both users of each pair, the power budget, and the matching
/// structure.
pub fn check_constraints(scenario: &Scenario, pairing: &Pairing, allocations: &[PairAllocation]) -> Result<()> {
    if pairing.num_users() != scenario.num_users() || allocations.len() != pairing.num_pairs() {
        return Err(Error::invalid("solution does not match the scenario"));
    }
    let x = pairing.indicator_matrix();
    for (i, row) in x.iter().enumerate() {
        if row[i] != 0 || row.iter().map(|&v| v as usize).sum::<usize>() != 1 {
            return Err(Error::invalid(format!("user {} is not matched exactly once", i + 1)));
        }
        if (0..row.len()).any(|j| x[j][i] != row[j]) {
            return Err(Error::invalid("indicator matrix is not symmetric"));
        }
    }
    let mut total = 0.0;
    for a in allocations {
        let (m, n) = a.pair.ids();
        if !pairing.contains(m, n) {
            return Err(Error::invalid(format!("allocation for unmatched pair ({m}, {n})")));
        }
        let r = rate_report(&a.pair, a.p_far, a.p_near, scenario.noise_power)?;
        if r.rate_far < r.oma_far - 1e-9 * r.oma_far.max(1.0) || r.rate_near < r.oma_near - 1e-9 * r.oma_near.max(1.0) {
            return Err(Error::invalid(format!(
                "pair ({m}, {n}) violates OMA parity: far {} < {} or near {} < {}",
                r.rate_far, r.oma_far, r.rate_near, r.oma_near
            )));
        }
        total += a.p_far + a.p_near;
    }
    if total > scenario.budget * (1.0 + 1e-8) {
        return Err(Error::invalid(format!(
            "total power {total:e} W exceeds budget {:e} W",
            scenario.budget
        )));
    }
    Ok(())
}

/// Best matching by exhaustive enumeration, each with calibrated powers.
/// Only practical for small user counts.
pub fn exhaustive_optimum(scenario: &Scenario) -> Result<(Pairing, f64)> {
    let mut best: Option<(Pairing, f64)> = None;
    for p in all_perfect_matchings(scenario.num_users())? {
        let (_, allocs) = allocate_for_pairing(scenario, &p)?;
        let o = sum_secrecy(&p, &allocs)?;
        if best.as_ref().map_or(true, |b| o > b.1) {
            best = Some((p, o));
        }
    }
    Ok(best.expect("at least one matching"))
}
