use noma_secrecy::optimizer::{check_constraints, initial_pairing, optimize, OptimizerParams};
use noma_secrecy::pairing_lp::{num_candidates, pair_of_index, vec_index};
use noma_secrecy::power_alloc::{calibrate_dual, PairAllocation};
use noma_secrecy::rate_model::{rate_report, OrderedPair};
use noma_secrecy::rounding::greedy_round;
use noma_secrecy::scenario::{sample_scenario, SystemConfig};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn index_round_trip(k in 1usize..10, seed in any::<u64>()) {
        let n = num_candidates(k);
        let i = 1 + (seed as usize % n);
        let (m, nn) = pair_of_index(i, k).unwrap();
        prop_assert!(m < nn && nn <= 2 * k);
        prop_assert_eq!(vec_index(m, nn, k).unwrap(), i);
    }

    #[test]
    fn rounding_always_yields_perfect_matching(
        k in 1usize..7,
        values in proptest::collection::vec(0.0f64..1.0, 66),
    ) {
        let x = &values[..num_candidates(k)];
        let p = greedy_round(x, k).unwrap();
        prop_assert_eq!(p.num_pairs(), k);
        let mut seen = vec![false; 2 * k];
        for &(a, b) in p.pairs() {
            prop_assert!(!seen[a - 1] && !seen[b - 1]);
            seen[a - 1] = true;
            seen[b - 1] = true;
        }
    }

    #[test]
    fn rates_are_nonnegative(
        hm in 1e-3f64..1.0,
        ratio in 1.0f64..50.0,
        p_far in 0.0f64..10.0,
        p_near in 0.0f64..10.0,
    ) {
        let pair = OrderedPair::new((1, hm), (2, hm * ratio));
        let r = rate_report(&pair, p_far, p_near, 1.0).unwrap();
        prop_assert!(r.secrecy >= 0.0 && r.rate_far >= 0.0 && r.rate_near >= 0.0 && r.eavesdrop >= 0.0);
        prop_assert!(r.secrecy <= r.rate_near + 1e-12);
    }

    #[test]
    fn pair_power_split_sums(hm in 1e-3f64..1.0, ratio in 1.01f64..50.0, p in 1e-6f64..100.0) {
        let pair = OrderedPair::new((1, hm), (2, hm * ratio));
        let a = PairAllocation::from_pair_power(pair, p, 1.0).unwrap();
        prop_assert!((a.p_far + a.p_near - p).abs() <= 1e-12 * p);
        prop_assert!(a.p_near <= a.p_far);
    }

    #[test]
    fn calibration_meets_budget(k in 1usize..6, seed in 0u64..10_000, dbm in 10.0f64..30.0) {
        let cfg = SystemConfig { num_pairs: k, rng_seed: seed, total_power_dbm: dbm, ..SystemConfig::default() };
        let s = sample_scenario(&cfg).unwrap();
        let pairs = initial_pairing(&s).ordered_pairs(&s);
        let (state, allocs) = calibrate_dual(&pairs, s.budget, s.noise_power).unwrap();
        let total: f64 = allocs.iter().map(|a| a.p_pair).sum();
        prop_assert!((total - s.budget).abs() <= 1e-8 * s.budget);
        prop_assert!(state.dual > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn optimize_is_feasible_and_no_worse_than_start(k in 1usize..6, seed in 0u64..100_000) {
        let s = sample_scenario(&SystemConfig { num_pairs: k, rng_seed: seed, ..SystemConfig::default() }).unwrap();
        let sol = optimize(&s, &OptimizerParams::default()).unwrap();
        check_constraints(&s, &sol.pairing, &sol.allocations).unwrap();
        prop_assert!(sol.sum_secrecy >= sol.trajectory[0]);
        prop_assert_eq!(sol.trajectory.len(), sol.iterations + 1);
        prop_assert!(sol.trajectory.iter().all(|&o| o <= sol.sum_secrecy));
    }
}
