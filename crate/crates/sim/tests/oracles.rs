mod common;

use common::oracle::{check_dag, closure, run, RandomDag, Tally, MAX_BLOCKS, PREDICATES};
use proptest::prelude::*;

#[test]
fn thousand_random_dags_match_oracles() {
    let t = run(1000, 0);
    assert!(t.ok(), "{:#?}", t.mismatches);
    assert_eq!(t.dags, 1000);
    println!("{} blocks; checks {:?}; positives {:?}", t.blocks, t.checks, t.positives);
    for p in PREDICATES {
        let (all, pos) = (t.checks.get(p).copied().unwrap_or(0), t.positives.get(p).copied().unwrap_or(0));
        assert!(pos > 0 && pos < all, "{p}: {pos} of {all} positive");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_dag_matches_oracles(seed in any::<u64>()) {
        let mut t = Tally::default();
        check_dag(seed, &mut t);
        prop_assert!(t.ok(), "{:#?}", t.mismatches);
    }

    #[test]
    fn store_is_ref_closed_and_acyclic(seed in any::<u64>()) {
        let dag = RandomDag::generate(seed);
        prop_assert!(dag.len() <= MAX_BLOCKS);
        let reach = closure(&dag.refs);
        for b in 0..dag.len() {
            let cone = dag.store.cone(b).unwrap();
            for r in dag.store.refs(b).unwrap() {
                prop_assert!(cone.contains(*r));
                prop_assert!(dag.store.cone(*r).unwrap().is_subset(cone));
                prop_assert!(dag.time[*r] < dag.time[b]);
            }
            for c in 0..dag.len() {
                prop_assert!(!(b != c && reach[b][c] && reach[c][b]));
            }
            prop_assert!(cone.contains(0));
        }
    }
}
