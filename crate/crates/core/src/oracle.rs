//! Exhaustive reference for tiny inputs.
//!
//! A partition of the states is stable when states in one block have equal
//! images once every state is replaced by its block. The coarsest stable
//! partition is found by trying every partition of the (at most
//! [`MAX_STATES`]) states. The image is computed directly on the parsed
//! values and shares no code with desorting or signatures.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::coalgebra::{ConstValue, NestedCoalgebra, StateId, Value};
use crate::encode::desort;
use crate::error::SignatureError;
use crate::functor::{parse_functor, ConstSet, FunctorTerm, MonoidId, PayloadKind};
use crate::refine::{refine_sequential, HashMode, Partition};
use crate::weight::Weight;

pub const MAX_STATES: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Image {
    Block(u32),
    Const(ConstValue),
    Set(BTreeSet<Image>),
    Map(BTreeMap<Image, Weight>),
    Inj(u8, Box<Image>),
    Tuple(Vec<Image>),
}

fn image(value: &Value, blocks: &[u32]) -> Result<Image, SignatureError> {
    Ok(match value {
        Value::State(s) => Image::Block(blocks[*s as usize]),
        Value::Const(c) => Image::Const(c.clone()),
        Value::Set(items) => Image::Set(
            items
                .iter()
                .map(|v| image(v, blocks))
                .collect::<Result<_, _>>()?,
        ),
        Value::Weighted(entries) => {
            let mut map: BTreeMap<Image, Weight> = BTreeMap::new();
            for (k, w) in entries {
                let k = image(k, blocks)?;
                match map.get_mut(&k) {
                    Some(acc) => acc.add_assign(w)?,
                    None => {
                        map.insert(k, w.clone());
                    }
                }
            }
            map.retain(|_, w| !w.is_zero());
            Image::Map(map)
        }
        Value::Inj(tag, v) => Image::Inj(*tag, Box::new(image(v, blocks)?)),
        Value::Tuple(items) => Image::Tuple(
            items
                .iter()
                .map(|v| image(v, blocks))
                .collect::<Result<_, _>>()?,
        ),
    })
}

/// Whether states sharing a block have equal images.
pub fn is_stable(c: &NestedCoalgebra, blocks: &[u32]) -> Result<bool, SignatureError> {
    let mut seen: BTreeMap<u32, Image> = BTreeMap::new();
    for (s, v) in c.values.iter().enumerate() {
        let img = image(v, blocks)?;
        match seen.get(&blocks[s]) {
            Some(other) if *other != img => return Ok(false),
            Some(_) => {}
            None => {
                seen.insert(blocks[s], img);
            }
        }
    }
    Ok(true)
}

/// Numbers the distinct images of the states under `blocks` in order of
/// first occurrence: equal numbers mean equal images.
pub fn image_classes(c: &NestedCoalgebra, blocks: &[u32]) -> Result<Vec<u32>, SignatureError> {
    let mut seen: BTreeMap<Image, u32> = BTreeMap::new();
    c.values
        .iter()
        .map(|v| {
            let img = image(v, blocks)?;
            let next = seen.len() as u32;
            Ok(*seen.entry(img).or_insert(next))
        })
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("{0} states, the exhaustive search handles at most {MAX_STATES}")]
    TooLarge(usize),
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error("stable partitions have no coarsest element")]
    NotUnique,
}

/// Calls `f` on every partition of `0..n` as a restricted growth string.
fn for_each_partition(n: usize, f: &mut dyn FnMut(&[u32]) -> Result<(), OracleError>) -> Result<(), OracleError> {
    fn go(
        rgs: &mut Vec<u32>,
        n: usize,
        max: u32,
        f: &mut dyn FnMut(&[u32]) -> Result<(), OracleError>,
    ) -> Result<(), OracleError> {
        if rgs.len() == n {
            return f(rgs);
        }
        let next = if rgs.is_empty() { 0 } else { max + 1 };
        for b in 0..=next {
            rgs.push(b);
            go(rgs, n, max.max(b), f)?;
            rgs.pop();
        }
        Ok(())
    }
    go(&mut Vec::with_capacity(n), n, 0, f)
}

/// The coarsest stable partition of the states, blocks numbered by first
/// occurrence.
pub fn brute_force_coarsest(c: &NestedCoalgebra) -> Result<Partition, OracleError> {
    if c.len() > MAX_STATES {
        return Err(OracleError::TooLarge(c.len()));
    }
    let mut stable: Vec<Partition> = Vec::new();
    for_each_partition(c.len(), &mut |rgs| {
        if is_stable(c, rgs)? {
            stable.push(Partition::from_keys(rgs));
        }
        Ok(())
    })?;
    // the discrete partition is always stable
    let best = stable
        .iter()
        .min_by_key(|p| p.size())
        .cloned()
        .ok_or(OracleError::NotUnique)?;
    if stable.iter().all(|p| p.refines(&best)) {
        Ok(best)
    } else {
        Err(OracleError::NotUnique)
    }
}

/// Result of comparing the refinement engine with the exhaustive search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Comparison {
    pub expected: Partition,
    pub actual: Partition,
}

impl Comparison {
    pub fn agrees(&self) -> bool {
        self.expected.same_as(&self.actual)
    }
}

/// Runs exact sequential refinement and the exhaustive search on the
/// original states.
pub fn compare(c: &NestedCoalgebra) -> Result<Comparison, OracleError> {
    let expected = brute_force_coarsest(c)?;
    let encoded = desort(c)?;
    let actual = refine_sequential(&encoded, HashMode::Exact)?
        .partition
        .restrict(c.len());
    Ok(Comparison { expected, actual })
}

/// Functor shapes used for random instances: every basic functor on its
/// own and a few combinations.
pub const RANDOM_TERMS: &[&str] = &[
    "P X",
    "B X",
    "D X",
    "(Z,+)^(X)",
    "(R,+)^(X)",
    "(C,+)^(X)",
    "(P64,or)^(X)",
    "(N,max)^(X)",
    "2 x P X",
    "{a,b} x X^2",
    "X + 2",
    "P X + B X",
    "(Z,+)^(2 x X)",
    "D(X + 1)",
    "P(B X)",
    "N x (N,max)^(2 x X^2)",
    "2 x P(2 x X^2)",
];

/// A random coalgebra for `term` with `states` states. Weights and
/// collections are kept small so that sums collide and cancel.
pub fn random_instance(term: &str, states: usize, rng: &mut impl Rng) -> NestedCoalgebra {
    let term = parse_functor(term).expect("random terms parse");
    let values = (0..states)
        .map(|_| random_value(&term, states, rng))
        .collect();
    NestedCoalgebra::with_default_names(term, values)
}

fn random_keys(inner: &FunctorTerm, states: usize, rng: &mut impl Rng) -> Vec<Value> {
    let want = rng.random_range(0..=3);
    let mut keys: Vec<Value> = Vec::new();
    for _ in 0..want {
        let k = random_value(inner, states, rng);
        if !keys.iter().any(|o| o.canonical() == k.canonical()) {
            keys.push(k);
        }
    }
    keys
}

fn random_weight(kind: PayloadKind, rng: &mut impl Rng) -> Weight {
    use num_bigint::BigInt;
    use num_rational::BigRational;
    let small = |rng: &mut dyn rand::RngCore| {
        BigRational::new(BigInt::from(rng.random_range(-2i64..=2)), BigInt::from(rng.random_range(1i64..=2)))
    };
    match kind {
        PayloadKind::Unit => unreachable!("unit payloads carry no weight"),
        PayloadKind::Nat => Weight::Count(rng.random_range(1..=3)),
        PayloadKind::Monoid(MonoidId::IntAdd) => Weight::Int(rng.random_range(-2..=2)),
        PayloadKind::Monoid(MonoidId::RatAdd) => Weight::Rat(small(rng)),
        PayloadKind::Monoid(MonoidId::ComplexRatAdd) => Weight::Complex(small(rng), small(rng)),
        PayloadKind::Monoid(MonoidId::Word64Or) => Weight::Word(rng.random_range(0..=3)),
        PayloadKind::Monoid(MonoidId::NatMax) => Weight::Max(rng.random_range(0..=3)),
    }
}

fn random_value(term: &FunctorTerm, states: usize, rng: &mut impl Rng) -> Value {
    match term {
        FunctorTerm::Var => Value::State(rng.random_range(0..states) as StateId),
        FunctorTerm::Const(ConstSet::Naturals) => Value::Const(ConstValue::Nat(rng.random_range(0..3))),
        FunctorTerm::Const(ConstSet::Finite(set)) => {
            Value::Const(ConstValue::Elem(rng.random_range(0..set.len()) as u32))
        }
        FunctorTerm::Powerset(inner) => Value::Set(random_keys(inner, states, rng)),
        FunctorTerm::Bag(inner) => Value::Weighted(
            random_keys(inner, states, rng)
                .into_iter()
                .map(|k| (k, random_weight(PayloadKind::Nat, rng)))
                .collect(),
        ),
        FunctorTerm::Dist(inner) => {
            use num_bigint::BigInt;
            use num_rational::BigRational;
            let mut keys = random_keys(inner, states, rng);
            if keys.is_empty() {
                keys.push(random_value(inner, states, rng));
            }
            let parts: Vec<i64> = keys.iter().map(|_| rng.random_range(1..=3)).collect();
            let total: i64 = parts.iter().sum();
            Value::Weighted(
                keys.into_iter()
                    .zip(parts)
                    .map(|(k, p)| (k, Weight::Rat(BigRational::new(BigInt::from(p), BigInt::from(total)))))
                    .collect(),
            )
        }
        FunctorTerm::MonoidValued(m, inner) => Value::Weighted(
            random_keys(inner, states, rng)
                .into_iter()
                .map(|k| (k, random_weight(PayloadKind::Monoid(*m), rng)))
                .filter(|(_, w)| !w.is_zero())
                .collect(),
        ),
        FunctorTerm::Sum(l, r) => {
            if rng.random_bool(0.5) {
                Value::Inj(0, Box::new(random_value(l, states, rng)))
            } else {
                Value::Inj(1, Box::new(random_value(r, states, rng)))
            }
        }
        FunctorTerm::Product(l, r) => Value::Tuple(vec![
            random_value(l, states, rng),
            random_value(r, states, rng),
        ]),
        FunctorTerm::Exponent(inner, set) => Value::Tuple(
            (0..set.len())
                .map(|_| random_value(inner, states, rng))
                .collect(),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coalgebra::{examples, parse_file, write_coalgebra};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn partition_counts_are_bell_numbers() {
        for (n, bell) in [(0, 1), (1, 1), (3, 5), (5, 52), (6, 203)] {
            let mut count = 0;
            for_each_partition(n, &mut |_| {
                count += 1;
                Ok(())
            })
            .unwrap();
            assert_eq!(count, bell);
        }
    }

    #[test]
    fn dfa_reference() {
        let c = parse_file(examples::DFA).unwrap();
        let p = brute_force_coarsest(&c).unwrap();
        assert_eq!(p.block_of(), &[0, 0, 1]);
        assert!(compare(&c).unwrap().agrees());
    }

    #[test]
    fn cancellation_merges() {
        // s reaches t with +1 and -1 through u and v, which are equivalent
        let c = parse_file(
            "(Z,+)^(X)\n\
             s: {u: 1, v: -1}\n\
             t: {}\n\
             u: {}\n\
             v: {}\n",
        )
        .unwrap();
        assert_eq!(brute_force_coarsest(&c).unwrap().size(), 1);
        assert!(compare(&c).unwrap().agrees());
    }

    #[test]
    fn random_instances_parse_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for term in RANDOM_TERMS {
            for _ in 0..5 {
                let c = random_instance(term, 4, &mut rng);
                let text = write_coalgebra(&c);
                let back = parse_file(&text).unwrap_or_else(|e| panic!("{term}: {e}\n{text}"));
                assert_eq!(back.len(), 4);
            }
        }
    }

    #[test]
    fn too_large() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = random_instance("P X", MAX_STATES + 1, &mut rng);
        assert!(matches!(brute_force_coarsest(&c), Err(OracleError::TooLarge(_))));
    }
}
