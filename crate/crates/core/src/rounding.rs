//! Perfect matchings and greedy rounding of a fractional assignment.

use std::cmp::Ordering;

use crate::pairing_lp::{pair_of_index, vec_index};
use crate::rate_model::OrderedPair;
use crate::scenario::Scenario;
use crate::{Error, Result};

/// A perfect matching on users `1..=2K`, stored as `(smaller, larger)` id
/// pairs sorted by the smaller id.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pairing {
    num_users: usize,
    pairs: Vec<(usize, usize)>,
}

impl Pairing {
    pub fn new(num_users: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if num_users == 0 || num_users % 2 != 0 {
            return Err(Error::invalid(format!(
                "a perfect matching needs a positive even user count, got {num_users}"
            )));
        }
        let mut seen = vec![false; num_users + 1];
        let mut out = Vec::with_capacity(num_users / 2);
        for (a, b) in pairs {
            let (m, n) = (a.min(b), a.max(b));
            if m == 0 || n > num_users || m == n {
                return Err(Error::invalid(format!("invalid pair ({a}, {b})")));
            }
            if seen[m] || seen[n] {
                return Err(Error::invalid(format!("user appears twice in pair ({a}, {b})")));
            }
            seen[m] = true;
            seen[n] = true;
            out.push((m, n));
        }
        if out.len() * 2 != num_users {
            return Err(Error::invalid(format!(
                "{} pairs do not cover {num_users} users",
                out.len()
            )));
        }
        out.sort_unstable();
        Ok(Pairing { num_users, pairs: out })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Partner of a 1-based user id.
    pub fn partner(&self, user: usize) -> Option<usize> {
        self.pairs.iter().find_map(|&(m, n)| match user {
            u if u == m => Some(n),
            u if u == n => Some(m),
            _ => None,
        })
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.pairs.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    /// Symmetric 0/1 indicator matrix `X` (0-based indices).
    pub fn indicator_matrix(&self) -> Vec<Vec<u8>> {
        let mut x = vec![vec![0u8; self.num_users]; self.num_users];
        for &(m, n) in &self.pairs {
            x[m - 1][n - 1] = 1;
            x[n - 1][m - 1] = 1;
        }
        x
    }

    /// Indicator vector over the `K(2K-1)` candidate pairs.
    pub fn to_vector(&self) -> Vec<f64> {
        let k = self.num_users / 2;
        let mut x = vec![0.0; k * (2 * k - 1)];
        for &(m, n) in &self.pairs {
            x[vec_index(m, n, k).expect("valid pair") - 1] = 1.0;
        }
        x
    }

    /// Pairs with near/far roles resolved against the scenario's gains.
    pub fn ordered_pairs(&self, scenario: &Scenario) -> Vec<OrderedPair> {
        self.pairs
            .iter()
            .map(|&(m, n)| OrderedPair::from_scenario(scenario, m, n))
            .collect()
    }
}

/// Greedy rounding: repeatedly take the largest remaining entry whose two
/// users are both still free. Ties go to the smaller vector index.
pub fn greedy_round(x: &[f64], k: usize) -> Result<Pairing> {
    Pairing::new(2 * k, greedy_selection(x, k)?)
}

/// The pairs chosen by [`greedy_round`], in selection order.
pub fn greedy_selection(x: &[f64], k: usize) -> Result<Vec<(usize, usize)>> {
    let n_x = k * (2 * k).saturating_sub(1);
    if k == 0 || x.len() != n_x {
        return Err(Error::invalid(format!(
            "fractional assignment of length {} does not match K = {k}",
            x.len()
        )));
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("fractional assignment contains NaN"));
    }
    let mut order: Vec<usize> = (0..n_x).collect();
    order.sort_by(|&i, &j| x[j].partial_cmp(&x[i]).unwrap_or(Ordering::Equal).then(i.cmp(&j)));
    let mut taken = vec![false; 2 * k + 1];
    let mut pairs = Vec::with_capacity(k);
    for idx in order {
        let (m, n) = pair_of_index(idx + 1, k)?;
        if !taken[m] && !taken[n] {
            taken[m] = true;
            taken[n] = true;
            pairs.push((m, n));
            if pairs.len() == k {
                break;
            }
        }
    }
    Ok(pairs)
}

/// Every perfect matching on `num_users` users, in lexicographic order.
/// There are `(num_users - 1)!!` of them.
pub fn all_perfect_matchings(num_users: usize) -> Result<Vec<Pairing>> {
    if num_users == 0 || num_users % 2 != 0 || num_users > 16 {
        return Err(Error::invalid(format!(
            "enumeration supports an even user count in 2..=16, got {num_users}"
        )));
    }
    fn recurse(free: &mut Vec<usize>, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if free.is_empty() {
            out.push(cur.clone());
            return;
        }
        let first = free.remove(0);
        for i in 0..free.len() {
            let partner = free.remove(i);
            cur.push((first, partner));
            recurse(free, cur, out);
            cur.pop();
            free.insert(i, partner);
        }
        free.insert(0, first);
    }
    let mut out = Vec::new();
    recurse(&mut (1..=num_users).collect(), &mut Vec::new(), &mut out);
    out.into_iter().map(|p| Pairing::new(num_users, p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// The literal nested-loop rule: scan for the maximum, record it, then
    /// overwrite every entry touching either user with -inf.
    fn literal_greedy(x: &[f64], k: usize) -> Vec<(usize, usize)> {
        let mut work = x.to_vec();
        let mut pairs = Vec::new();
        for _ in 0..k {
            let mut best = 0;
            for i in 1..work.len() {
                if work[i] > work[best] {
                    best = i;
                }
            }
            let (m, n) = pair_of_index(best + 1, k).unwrap();
            pairs.push((m, n));
            for (i, w) in work.iter_mut().enumerate() {
                let (a, b) = pair_of_index(i + 1, k).unwrap();
                if a == m || a == n || b == m || b == n {
                    *w = f64::NEG_INFINITY;
                }
            }
        }
        pairs.sort_unstable();
        pairs
    }

    #[test]
    fn single_pair() {
        for v in [0.0, 0.3, 1.0, -5.0] {
            assert_eq!(greedy_round(&[v], 1).unwrap().pairs(), &[(1, 2)]);
        }
    }

    #[test]
    fn hand_traced_example() {
        // Order: (1,2) (1,3) (1,4) (2,3) (2,4) (3,4).
        let x = [0.5, 0.9, 0.1, 0.2, 0.8, 0.4];
        assert_eq!(greedy_round(&x, 2).unwrap().pairs(), &[(1, 3), (2, 4)]);
    }

    #[test]
    fn integral_input_is_fixed() {
        for p in all_perfect_matchings(8).unwrap() {
            assert_eq!(greedy_round(&p.to_vector(), 4).unwrap(), p);
        }
    }

    #[test]
    fn ties_go_to_smallest_index() {
        assert_eq!(greedy_round(&[0.5; 6], 2).unwrap().pairs(), &[(1, 2), (3, 4)]);
    }

    #[test]
    fn agrees_with_literal_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..500 {
            let k = 1 + trial % 6;
            let x: Vec<f64> = (0..k * (2 * k - 1))
                .map(|_| (rng.gen_range(0..8) as f64) / 8.0)
                .collect();
            let got = greedy_round(&x, k).unwrap();
            assert_eq!(got.pairs(), literal_greedy(&x, k).as_slice());
        }
    }

    #[test]
    fn selected_values_nonincreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for k in 1..7 {
            let x: Vec<f64> = (0..k * (2 * k - 1)).map(|_| rng.gen()).collect();
            let vals: Vec<f64> = greedy_selection(&x, k)
                .unwrap()
                .iter()
                .map(|&(m, n)| x[vec_index(m, n, k).unwrap() - 1])
                .collect();
            assert!(vals.windows(2).all(|w| w[0] >= w[1]));
            assert_eq!(vals[0], x.iter().cloned().fold(f64::MIN, f64::max));
        }
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(all_perfect_matchings(2).unwrap().len(), 1);
        assert_eq!(all_perfect_matchings(4).unwrap().len(), 3);
        assert_eq!(all_perfect_matchings(6).unwrap().len(), 15);
        assert_eq!(all_perfect_matchings(8).unwrap().len(), 105);
        let all = all_perfect_matchings(6).unwrap();
        let mut dedup = all.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), all.len());
    }

    #[test]
    fn indicator_matrix_structure() {
        let p = Pairing::new(6, [(4, 1), (2, 6), (3, 5)]).unwrap();
        let x = p.indicator_matrix();
        for i in 0..6 {
            assert_eq!(x[i][i], 0);
            assert_eq!(x[i].iter().map(|&v| v as u32).sum::<u32>(), 1);
            for j in 0..6 {
                assert_eq!(x[i][j], x[j][i]);
            }
        }
        assert_eq!(p.partner(4), Some(1));
        assert!(p.contains(6, 2));
    }

    #[test]
    fn invalid_pairings_rejected() {
        assert!(Pairing::new(4, [(1, 2), (2, 3)]).is_err());
        assert!(Pairing::new(4, [(1, 2)]).is_err());
        assert!(Pairing::new(4, [(1, 1), (2, 3)]).is_err());
        assert!(Pairing::new(4, [(1, 5), (2, 3)]).is_err());
        assert!(Pairing::new(3, [(1, 2)]).is_err());
        assert!(greedy_round(&[0.1; 5], 2).is_err());
    }
}
