use causal_psl::model::{canonical_atom, AtomStore, CondSet, Predicate, TargetIndex};
use causal_psl::pipeline::{synthetic_instance, PipelineOptions, PreparedInstance, SynthSpec};
use causal_psl::rules::{builtin_rules, ground, write_ground_tsv, GroundPotential, RuleId, Variant};
use proptest::prelude::*;

const N: usize = 4;

/// Evidence for every pair and conditioning set of four vertices, drawn
/// from `values` in a fixed order.
fn evidence(values: &[f64], adjacency: Predicate) -> AtomStore {
    let mut store = AtomStore::new();
    let mut it = values.iter().cycle();
    for a in 0..N {
        for b in (a + 1)..N {
            for p in [Predicate::Dep, Predicate::Indep, adjacency] {
                store.insert(&canonical_atom(p, a, b, CondSet::empty(), *it.next().unwrap(), N).unwrap());
            }
            let rest: Vec<usize> = (0..N).filter(|&v| v != a && v != b).collect();
            let sets = [vec![rest[0]], vec![rest[1]], rest.clone()];
            for s in sets {
                for p in [Predicate::CondDep, Predicate::CondIndep] {
                    let atom = canonical_atom(p, a, b, CondSet::new(s.clone()).unwrap(), *it.next().unwrap(), N);
                    store.insert(&atom.unwrap());
                }
            }
        }
    }
    store
}

fn all_potentials(values: &[f64]) -> Vec<GroundPotential> {
    let index = TargetIndex::new(N).unwrap();
    let mut out = Vec::new();
    for variant in Variant::ALL {
        let store = evidence(values, variant.adjacency());
        out.extend(ground(&builtin_rules(variant, false), &store, &index, 2).unwrap());
    }
    out
}

fn causes(a: usize, b: usize) -> usize {
    TargetIndex::new(N).unwrap().causes(a, b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn distance_stays_in_unit_interval(
        values in proptest::collection::vec(0.0f64..=1.0, 60),
        y in proptest::collection::vec(0.0f64..=1.0, 2 * N * (N - 1)),
    ) {
        for p in all_potentials(&values) {
            let d = p.distance(&y);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&d), "{:?} gives {}", p.rule, d);
            prop_assert!(p.constant <= 1.0 + 1e-12);
            prop_assert!(p.terms.iter().all(|&(_, c)| c == 1.0 || c == -1.0));
        }
    }

    #[test]
    fn boolean_inputs_give_boolean_distances(
        values in proptest::collection::vec(proptest::bool::ANY, 60),
        y in proptest::collection::vec(proptest::bool::ANY, 2 * N * (N - 1)),
    ) {
        let values: Vec<f64> = values.into_iter().map(f64::from).collect();
        let y: Vec<f64> = y.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect();
        for p in all_potentials(&values) {
            let d = p.distance(&y);
            prop_assert!(d == 0.0 || d == 1.0, "{:?} gives {}", p.rule, d);
        }
    }

    /// A pair missing from the C1 groundings has TextAdj = 1, and the
    /// direct formula `max(0, c - t)` vanishes on a dense grid.
    #[test]
    fn pruned_c1_bindings_are_satisfied_everywhere(values in proptest::collection::vec(
        prop_oneof![Just(0.0f64), Just(1.0f64), 0.0f64..=1.0], 60)) {
        let store = evidence(&values, Predicate::TextAdj);
        let index = TargetIndex::new(N).unwrap();
        let rules: Vec<_> = builtin_rules(Variant::CausPsl, false).into_iter().filter(|r| r.id == RuleId::C1).collect();
        let pots = ground(&rules, &store, &index, 2).unwrap();
        for a in 0..N {
            for b in (0..N).filter(|&b| b != a) {
                let kept = pots.iter().any(|p| p.args == [a, b]);
                let t = store.pair_truth(Predicate::TextAdj, a, b);
                if !kept {
                    prop_assert_eq!(t, 1.0);
                    for step in 0..=100 {
                        let c = step as f64 / 100.0;
                        prop_assert_eq!((c - t).max(0.0), 0.0);
                    }
                } else {
                    let p = pots.iter().find(|p| p.args == [a, b]).unwrap();
                    let mut y = vec![0.0; index.len()];
                    y[causes(a, b)] = 0.9;
                    prop_assert!((p.distance(&y) - (0.9 - t).max(0.0)).abs() < 1e-12);
                }
            }
        }
    }

    /// C6 is `!c_ab v !c_bc v !t_ac v c_ac`; check the grounded hinge against
    /// the formula on random points.
    #[test]
    fn c6_matches_direct_formula(
        values in proptest::collection::vec(0.0f64..=1.0, 60),
        y in proptest::collection::vec(0.0f64..=1.0, 2 * N * (N - 1)),
    ) {
        let store = evidence(&values, Predicate::TextAdj);
        let index = TargetIndex::new(N).unwrap();
        let rules: Vec<_> = builtin_rules(Variant::CausPsl, false).into_iter().filter(|r| r.id == RuleId::C6).collect();
        let pots = ground(&rules, &store, &index, 2).unwrap();
        for p in &pots {
            let (a, b, c) = (p.args[0], p.args[1], p.args[2]);
            let t = store.pair_truth(Predicate::TextAdj, a, c);
            let sum = (1.0 - y[causes(a, b)]) + (1.0 - y[causes(b, c)]) + (1.0 - t) + y[causes(a, c)];
            prop_assert!((p.distance(&y) - (1.0 - sum).max(0.0)).abs() < 1e-12);
        }
    }
}

#[test]
fn grounding_is_deterministic_across_thread_counts() {
    let spec = SynthSpec {
        n: 10,
        edge_prob: 0.25,
        m: 200,
        kb_precision: 0.5,
        kb_recall: 0.5,
    };
    let (inst, _) = synthetic_instance(&spec, 12, 0).unwrap();
    let dump = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let prep = PreparedInstance::new(&inst, PipelineOptions::default()).unwrap();
            let pots = prep.ground_program(Variant::CausPsl, 0.05, None).unwrap();
            let mut buf = Vec::new();
            write_ground_tsv(&pots, &inst.vertices, &mut buf).unwrap();
            buf
        })
    };
    let one = dump(1);
    assert!(one.len() > 1000);
    assert_eq!(one, dump(4));
    assert_eq!(one, dump(1));
}

#[test]
fn empty_evidence_keeps_only_constraints_on_targets() {
    // Without adjacency evidence C1 pins every Causes atom to zero and
    // nothing depending on observed truth survives.
    let index = TargetIndex::new(3).unwrap();
    let pots = ground(&builtin_rules(Variant::CausPsl, false), &AtomStore::new(), &index, 2).unwrap();
    let rules: std::collections::BTreeSet<RuleId> = pots.iter().map(|p| p.rule).collect();
    assert!(rules.contains(&RuleId::C1));
    assert!(!rules.contains(&RuleId::C3) && !rules.contains(&RuleId::C4) && !rules.contains(&RuleId::C5));
}
