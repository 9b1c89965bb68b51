//! Deferred-acceptance pairing between strong and weak users.
//!
//! The K strongest users propose and the K weakest receive. Both sides rank
//! the other by the pair's secrecy rate when the pair gets an equal share
//! `P / K` of the budget, split with the binding near-user power. Ties are
//! broken by the smaller user id.

use crate::power_alloc::PairAllocation;
use crate::rate_model::OrderedPair;
use crate::rounding::Pairing;
use crate::scenario::Scenario;
use crate::Result;

/// Preference data of one instance.
#[derive(Debug, Clone)]
pub struct Preferences {
    /// User ids of the proposing side (strong users), strongest first.
    pub proposers: Vec<usize>,
    /// User ids of the receiving side (weak users), strongest first.
    pub receivers: Vec<usize>,
    /// `score[i][j]`: secrecy rate of pairing proposer `i` with receiver `j`.
    pub score: Vec<Vec<f64>>,
}

impl Preferences {
    pub fn build(scenario: &Scenario) -> Result<Self> {
        let mut ids: Vec<usize> = (1..=scenario.num_users()).collect();
        ids.sort_by(|&a, &b| scenario.gain(b).total_cmp(&scenario.gain(a)).then(a.cmp(&b)));
        let k = scenario.num_pairs();
        let proposers = ids[..k].to_vec();
        let receivers = ids[k..].to_vec();
        let share = scenario.budget / k as f64;
        let score = proposers
            .iter()
            .map(|&i| {
                receivers
                    .iter()
                    .map(|&j| {
                        let pair = OrderedPair::from_scenario(scenario, i, j);
                        Ok(PairAllocation::from_pair_power(pair, share, scenario.noise_power)?.secrecy)
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Preferences {
            proposers,
            receivers,
            score,
        })
    }

    /// True if proposer `i` strictly prefers receiver `a` over `b`.
    fn proposer_prefers(&self, i: usize, a: usize, b: usize) -> bool {
        let (sa, sb) = (self.score[i][a], self.score[i][b]);
        sa > sb || (sa == sb && self.receivers[a] < self.receivers[b])
    }

    /// True if receiver `j` strictly prefers proposer `a` over `b`.
    fn receiver_prefers(&self, j: usize, a: usize, b: usize) -> bool {
        let (sa, sb) = (self.score[a][j], self.score[b][j]);
        sa > sb || (sa == sb && self.proposers[a] < self.proposers[b])
    }

    /// Ranked receiver indices for proposer `i`, best first.
    fn proposer_list(&self, i: usize) -> Vec<usize> {
        let mut list: Vec<usize> = (0..self.receivers.len()).collect();
        list.sort_by(|&a, &b| {
            if self.proposer_prefers(i, a, b) {
                std::cmp::Ordering::Less
            } else if self.proposer_prefers(i, b, a) {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Equal
            }
        });
        list
    }
}

/// Proposer-optimal stable matching; returns, for each proposer index, the
/// matched receiver index.
pub fn deferred_acceptance(prefs: &Preferences) -> Vec<usize> {
    let k = prefs.proposers.len();
    let lists: Vec<Vec<usize>> = (0..k).map(|i| prefs.proposer_list(i)).collect();
    let mut next = vec![0usize; k];
    let mut holder: Vec<Option<usize>> = vec![None; k];
    let mut free: Vec<usize> = (0..k).rev().collect();
    while let Some(i) = free.pop() {
        let j = lists[i][next[i]];
        next[i] += 1;
        match holder[j] {
            None => holder[j] = Some(i),
            Some(cur) if prefs.receiver_prefers(j, i, cur) => {
                holder[j] = Some(i);
                free.push(cur);
            }
            Some(_) => free.push(i),
        }
    }
    let mut matched = vec![0; k];
    for (j, h) in holder.iter().enumerate() {
        matched[h.expect("every receiver is held when all proposers are matched")] = j;
    }
    matched
}

pub fn gale_shapley_pairing(scenario: &Scenario) -> Result<Pairing> {
    let prefs = Preferences::build(scenario)?;
    let matched = deferred_acceptance(&prefs);
    Pairing::new(
        scenario.num_users(),
        matched.iter().enumerate().map(|(i, &j)| (prefs.proposers[i], prefs.receivers[j])),
    )
}

/// True when no proposer and receiver both prefer each other over their
/// partners in `pairing`.
pub fn is_stable(prefs: &Preferences, pairing: &Pairing) -> bool {
    let k = prefs.proposers.len();
    let partner_index = |i: usize| -> Option<usize> {
        let p = pairing.partner(prefs.proposers[i])?;
        prefs.receivers.iter().position(|&r| r == p)
    };
    let mut matched = Vec::with_capacity(k);
    for i in 0..k {
        match partner_index(i) {
            Some(j) => matched.push(j),
            None => return false,
        }
    }
    let mut holder = vec![0; k];
    for (i, &j) in matched.iter().enumerate() {
        holder[j] = i;
    }
    for i in 0..k {
        for j in 0..k {
            if j != matched[i] && prefs.proposer_prefers(i, j, matched[i]) && prefs.receiver_prefers(j, i, holder[j]) {
                return false;
            }
        }
    }
    true
}
