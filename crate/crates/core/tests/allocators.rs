mod common;

use bitalloc::allocators::{
    adp, adp_sum_count, enumerate_count, exhaustive, gbfos, greedy, random_geometry_table, random_table,
    DEFAULT_EXHAUSTIVE_CAP,
};
use bitalloc::model::SignalParams;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn no_policy_beats_exhaustive(seed in 0u64..100_000, n in 1usize..6, r in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = random_table(n, r, &mut rng).unwrap();
        let best = exhaustive(&table, r, DEFAULT_EXHAUSTIVE_CAP).unwrap();
        prop_assert_eq!(best.candidates_examined as u128, enumerate_count(n, r));
        for out in [adp(&table, r).unwrap(), gbfos(&table, r).unwrap(), greedy(&table, r).unwrap()] {
            prop_assert_eq!(out.alloc.total(), r);
            prop_assert!(out.logdet_value <= best.logdet_value + 1e-9);
        }
    }

    #[test]
    fn adp_count_matches_closed_form(seed in 0u64..1000, n in 1usize..12, r in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = random_table(n, r, &mut rng).unwrap();
        prop_assert_eq!(adp(&table, r).unwrap().matrix_sums, adp_sum_count(n, r));
    }
}

#[test]
fn geometry_tables_favour_the_trellis_over_greedy() {
    let bank = common::small_bank(4);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (mut adp_gap, mut greedy_gap) = (0.0, 0.0);
    for _ in 0..100 {
        let table = random_geometry_table(4, 4, &bank, SignalParams::default(), 20.0, &mut rng).unwrap();
        let best = exhaustive(&table, 4, DEFAULT_EXHAUSTIVE_CAP).unwrap().logdet_value;
        adp_gap += best - adp(&table, 4).unwrap().logdet_value;
        greedy_gap += best - greedy(&table, 4).unwrap().logdet_value;
    }
    assert!(adp_gap < greedy_gap, "adp {adp_gap}, greedy {greedy_gap}");
}

#[test]
fn geometry_table_rejects_rates_beyond_the_bank() {
    let bank = common::small_bank(2);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert!(random_geometry_table(3, 3, &bank, SignalParams::default(), 20.0, &mut rng).is_err());
}
