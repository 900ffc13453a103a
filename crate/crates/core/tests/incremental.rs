mod common;

use common::{rng, small_graph};
use graphkd::dynamic::{full_student_logits, IncrementalState};
use graphkd::models::{ModelSpec, StudentConfig};
use graphkd::structprep::{StructCache, StructConfig};
use graphkd::Model;
use proptest::prelude::*;

#[test]
fn insertions_match_full_recomputation_on_50_graphs() {
    let (gap, steps) = common::incremental_gap(50, 11);
    assert_eq!(steps, 500);
    assert!(gap < 1e-6, "max gap {gap:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn removal_then_insertion_restores_logits(seed in any::<u64>(), n in 2usize..40, ops in prop::collection::vec((any::<bool>(), 0usize..1000), 1..30)) {
        let mut r = rng(seed);
        let g = small_graph(n, 0.1, 3, 0, &mut r);
        let cache = StructCache::build(&g, &StructConfig::default(), seed).unwrap();
        let spec = ModelSpec::student(StudentConfig::ga_mlp(2, 8).with_lape(), 3, 8, 2);
        let model = Model::new(spec, seed).unwrap();
        let mut state = IncrementalState::full(&model, &g, &cache).unwrap();
        let original = state.logits().unwrap();
        let mut present = vec![true; n];
        for (insert, v) in ops {
            let v = v % n;
            let out = if insert { state.insert(v) } else { state.remove(v) };
            // inserting a present node or removing an absent one is refused
            if insert == present[v] {
                prop_assert!(out.is_err());
                continue;
            }
            present[v] = insert;
            let full = full_student_logits(&model, &g, &cache, &present).unwrap();
            for (a, b) in out.unwrap().iter().zip(&full) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
        for v in (0..n).filter(|&v| !present[v]) {
            state.insert(v).unwrap();
        }
        for (a, b) in state.logits().unwrap().iter().zip(&original) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
