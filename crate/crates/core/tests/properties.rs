use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sigrefine_core::encode::Payload;
use sigrefine_core::oracle::{compare, random_instance, RANDOM_TERMS};
use sigrefine_core::signature::{filter, tag, BlockEdge};
use sigrefine_core::{
    desort, refine_sequential, run_inproc, HashMode, NestedCoalgebra, Partition, Scheduler,
    StateId, Value,
};

fn rename(v: &Value, perm: &[StateId]) -> Value {
    match v {
        Value::State(s) => Value::State(perm[*s as usize]),
        Value::Const(_) => v.clone(),
        Value::Set(items) => Value::Set(items.iter().map(|x| rename(x, perm)).collect()),
        Value::Weighted(entries) => Value::Weighted(
            entries
                .iter()
                .map(|(k, w)| (rename(k, perm), w.clone()))
                .collect(),
        ),
        Value::Inj(t, x) => Value::Inj(*t, Box::new(rename(x, perm))),
        Value::Tuple(items) => Value::Tuple(items.iter().map(|x| rename(x, perm)).collect()),
    }
}

fn permuted(c: &NestedCoalgebra, perm: &[StateId]) -> NestedCoalgebra {
    let mut values = vec![Value::State(0); c.len()];
    for (s, v) in c.values.iter().enumerate() {
        values[perm[s] as usize] = rename(v, perm);
    }
    NestedCoalgebra::with_default_names(c.term.clone(), values)
}

fn exact(c: &NestedCoalgebra) -> Partition {
    refine_sequential(&desort(c).unwrap(), HashMode::Exact)
        .unwrap()
        .partition
        .restrict(c.len())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_exhaustive_search(term in 0..RANDOM_TERMS.len(), states in 1usize..=6, seed: u64) {
        let c = random_instance(RANDOM_TERMS[term], states, &mut ChaCha8Rng::seed_from_u64(seed));
        let cmp = compare(&c).unwrap();
        prop_assert!(cmp.agrees(), "{}: expected {:?}, got {:?}", RANDOM_TERMS[term], cmp.expected, cmp.actual);
    }

    #[test]
    fn engines_agree(term in 0..RANDOM_TERMS.len(), states in 1usize..=12, seed: u64, workers in 1u32..=5) {
        let c = random_instance(RANDOM_TERMS[term], states, &mut ChaCha8Rng::seed_from_u64(seed));
        let encoded = desort(&c).unwrap();
        let e = refine_sequential(&encoded, HashMode::Exact).unwrap();
        let h = refine_sequential(&encoded, HashMode::Hashed).unwrap();
        prop_assert!(e.partition.same_as(&h.partition));
        prop_assert_eq!(&e.history, &h.history);
        let d = run_inproc(&encoded, workers, Scheduler::Adversarial(seed)).unwrap();
        prop_assert!(d.result.partition.same_as(&e.partition.restrict(states)));
        prop_assert_eq!(&d.result.history, &e.history);
    }

    #[test]
    fn renaming_states_renames_blocks(term in 0..RANDOM_TERMS.len(), states in 1usize..=10, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = random_instance(RANDOM_TERMS[term], states, &mut rng);
        let mut perm: Vec<StateId> = (0..states as StateId).collect();
        rand::seq::SliceRandom::shuffle(&mut perm[..], &mut rng);
        let p = exact(&c);
        let q = exact(&permuted(&c, &perm));
        for a in 0..states {
            for b in 0..states {
                prop_assert_eq!(
                    p.block(a as StateId) == p.block(b as StateId),
                    q.block(perm[a]) == q.block(perm[b])
                );
            }
        }
    }

    #[test]
    fn filter_undoes_tag(slots in prop::collection::vec((0u32..6, 0u128..4), 0..12), offset in 0u32..10, width in 0u32..4) {
        let unit = Payload::Unit;
        let bag: Vec<BlockEdge> = slots.iter().map(|&(slot, block)| BlockEdge { slot, payload: &unit, block }).collect();
        prop_assert_eq!(filter(&tag(&bag, offset), offset..offset + 6), bag.clone());
        // labels outside the summand are dropped
        let kept = filter(&tag(&bag, offset), offset..offset + width);
        prop_assert_eq!(kept.len(), bag.iter().filter(|e| e.slot < width).count());
    }
}

#[test]
fn repeated_edges_do_not_add_messages() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for term in ["P X", "2 x P X", "2 x P(2 x X^2)"] {
        let c = desort(&random_instance(term, 40, &mut rng)).unwrap();
        let inflated = c.with_repeated_edges(10);
        assert!(inflated.edge_count() > c.edge_count());
        for workers in [1, 3, 8] {
            let a = run_inproc(&c, workers, Scheduler::Fifo).unwrap();
            let b = run_inproc(&inflated, workers, Scheduler::Fifo).unwrap();
            assert!(a.result.partition.same_as(&b.result.partition));
            let totals = |r: &sigrefine_core::DistRun| {
                r.traces
                    .iter()
                    .map(|t| {
                        let upd: usize = t.rounds.iter().map(|x| x.upd_sent).sum();
                        (t.inedge_sent, t.in_set_total, upd)
                    })
                    .collect::<Vec<_>>()
            };
            assert_eq!(totals(&a), totals(&b), "{term} with {workers} workers");
        }
    }
}
