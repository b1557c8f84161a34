//! Sequential signature refinement.

use std::collections::{HashMap, HashSet};

use crate::coalgebra::StateId;
use crate::encode::EncodedCoalgebra;
use crate::error::SignatureError;
use crate::signature::{canonical_bytes, compute_signature, hash_id, BlockId};

/// A partition given by a dense block index per state.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Partition {
    block_of: Vec<u32>,
    size: usize,
}

impl Partition {
    /// The partition with a single block (none for zero states).
    pub fn trivial(n: usize) -> Partition {
        Partition {
            block_of: vec![0; n],
            size: usize::from(n > 0),
        }
    }

    pub fn identity(n: usize) -> Partition {
        Partition {
            block_of: (0..n as u32).collect(),
            size: n,
        }
    }

    /// Renumbers arbitrary block keys to `0..size` in order of first
    /// occurrence.
    pub fn from_keys<K: std::hash::Hash + Eq + Copy>(keys: &[K]) -> Partition {
        let mut ids: HashMap<K, u32> = HashMap::with_capacity(keys.len());
        let block_of = keys
            .iter()
            .map(|k| {
                let next = ids.len() as u32;
                *ids.entry(*k).or_insert(next)
            })
            .collect();
        Partition {
            block_of,
            size: ids.len(),
        }
    }

    pub fn block_of(&self) -> &[u32] {
        &self.block_of
    }

    pub fn block(&self, s: StateId) -> u32 {
        self.block_of[s as usize]
    }

    /// Number of blocks.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Number of states.
    pub fn len(&self) -> usize {
        self.block_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.block_of.is_empty()
    }

    /// The partition on the first `n` states, renumbered.
    pub fn restrict(&self, n: usize) -> Partition {
        Partition::from_keys(&self.block_of[..n])
    }

    /// Whether every block of `self` lies inside a block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        refines_keys(&self.block_of, &coarser.block_of)
    }

    /// Equality up to renaming of blocks.
    pub fn same_as(&self, other: &Partition) -> bool {
        self.len() == other.len() && self.refines(other) && other.refines(self)
    }

    /// The blocks as sorted lists of states, ordered by first state.
    pub fn blocks(&self) -> Vec<Vec<StateId>> {
        let canon = Partition::from_keys(&self.block_of);
        let mut out = vec![Vec::new(); canon.size];
        for (s, &b) in canon.block_of.iter().enumerate() {
            out[b as usize].push(s as StateId);
        }
        out
    }
}

/// Whether the partition given by `fine` keys refines the one given by
/// `coarse` keys.
pub fn refines_keys<A, B>(fine: &[A], coarse: &[B]) -> bool
where
    A: std::hash::Hash + Eq + Copy,
    B: Eq + Copy,
{
    assert_eq!(fine.len(), coarse.len());
    let mut seen: HashMap<A, B> = HashMap::new();
    fine.iter()
        .zip(coarse)
        .all(|(f, c)| *seen.entry(*f).or_insert(*c) == *c)
}

/// How new block ids are derived from signatures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HashMode {
    /// Dense ids from a per-round table of canonical bytes; collision free.
    Exact,
    /// The 128-bit hash of the canonical bytes is the block id.
    Hashed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefineResult {
    /// Final partition restricted to the original states.
    pub partition: Partition,
    /// Rounds executed, including the final one that splits nothing.
    pub iterations: usize,
    /// Partition size (over all states) after each round.
    pub history: Vec<usize>,
}

impl RefineResult {
    pub fn splitting_rounds(&self) -> usize {
        self.iterations.saturating_sub(1)
    }
}

/// What an observer sees after each round.
#[derive(Debug)]
pub struct RoundInfo<'a> {
    /// 1-based round number.
    pub round: usize,
    pub blocks: usize,
    /// New block id of every state.
    pub block_of: &'a [BlockId],
}

/// Assigns block ids to signatures for one round.
pub(crate) struct SigNamer {
    mode: HashMode,
    table: HashMap<Vec<u8>, BlockId>,
    seen: HashSet<BlockId>,
}

impl SigNamer {
    pub(crate) fn new(mode: HashMode) -> Self {
        SigNamer {
            mode,
            table: HashMap::new(),
            seen: HashSet::new(),
        }
    }

    pub(crate) fn name(&mut self, bytes: Vec<u8>) -> BlockId {
        match self.mode {
            HashMode::Exact => {
                let next = self.table.len() as BlockId;
                *self.table.entry(bytes).or_insert(next)
            }
            HashMode::Hashed => {
                let id = hash_id(&bytes).0;
                self.seen.insert(id);
                id
            }
        }
    }

    pub(crate) fn distinct(&self) -> usize {
        match self.mode {
            HashMode::Exact => self.table.len(),
            HashMode::Hashed => self.seen.len(),
        }
    }
}

/// One refinement step: the block ids induced by the signatures under
/// `block_of`, and how many distinct ones there are.
pub fn refine_step(
    c: &EncodedCoalgebra,
    block_of: &[BlockId],
    mode: HashMode,
) -> Result<(Vec<BlockId>, usize), SignatureError> {
    assert!(c.is_full(), "sequential refinement needs every state");
    let mut namer = SigNamer::new(mode);
    let mut next = Vec::with_capacity(c.state_count());
    for s in c.local_states() {
        let sig = compute_signature(c, s, |t| block_of.get(t as usize).copied())?;
        next.push(namer.name(canonical_bytes(&sig)));
    }
    Ok((next, namer.distinct()))
}

/// Runs the final-chain iteration from the trivial partition until two
/// consecutive partitions have the same size.
pub fn refine_sequential(
    c: &EncodedCoalgebra,
    mode: HashMode,
) -> Result<RefineResult, SignatureError> {
    refine_with_observer(c, mode, |_| {})
}

pub fn refine_with_observer(
    c: &EncodedCoalgebra,
    mode: HashMode,
    mut observe: impl FnMut(&RoundInfo<'_>),
) -> Result<RefineResult, SignatureError> {
    let n_prime = c.state_count();
    let mut cur: Vec<BlockId> = vec![0; n_prime];
    let mut l: i64 = -1;
    let mut l_new: i64 = i64::from(n_prime > 0);
    let mut history = Vec::new();
    while l != l_new {
        l = l_new;
        let (next, blocks) = refine_step(c, &cur, mode)?;
        debug_assert!(refines_keys(&next, &cur), "a round merged blocks");
        history.push(blocks);
        observe(&RoundInfo {
            round: history.len(),
            blocks,
            block_of: &next,
        });
        l_new = blocks as i64;
        cur = next;
    }
    log::debug!("sequential refinement: {} rounds, sizes {history:?}", history.len());
    Ok(RefineResult {
        partition: Partition::from_keys(&cur[..c.original_count()]),
        iterations: history.len(),
        history,
    })
}

/// Whether one refinement step from `pi` splits no block of `pi`, i.e.
/// `pi` is a fixed point of the iteration.
pub fn stabilize_check(c: &EncodedCoalgebra, pi: &Partition) -> Result<bool, SignatureError> {
    assert_eq!(pi.len(), c.state_count(), "partition must cover all states");
    let cur: Vec<BlockId> = pi.block_of().iter().map(|&b| b as BlockId).collect();
    let (next, _) = refine_step(c, &cur, HashMode::Exact)?;
    Ok(refines_keys(&cur, &next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coalgebra::{examples, parse_file};
    use crate::encode::desort;

    fn encoded(text: &str) -> EncodedCoalgebra {
        desort(&parse_file(text).unwrap()).unwrap()
    }

    #[test]
    fn dfa_needs_two_rounds() {
        let c = encoded(examples::DFA);
        for mode in [HashMode::Exact, HashMode::Hashed] {
            let r = refine_sequential(&c, mode).unwrap();
            assert_eq!(r.partition.block_of(), &[0, 0, 1]);
            assert_eq!(r.iterations, 2);
            assert_eq!(r.history, vec![2, 2]);
            assert_eq!(r.splitting_rounds(), 1);
        }
    }

    #[test]
    fn markov_chain_collapses_in_one_round() {
        let c = encoded(examples::MARKOV_CHAIN);
        let r = refine_sequential(&c, HashMode::Exact).unwrap();
        assert_eq!(r.partition.block_of(), &[0, 0, 0]);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn pure_constants_take_one_round() {
        let c = encoded("{a,b}\ns: a\nt: b\nu: a\n");
        let r = refine_sequential(&c, HashMode::Exact).unwrap();
        assert_eq!(r.partition.block_of(), &[0, 1, 0]);
        assert_eq!(r.iterations, 2);
        let c = encoded("{a,b}\ns: a\n");
        assert_eq!(refine_sequential(&c, HashMode::Exact).unwrap().iterations, 1);
    }

    #[test]
    fn empty_coalgebra() {
        let c = encoded("P X\n");
        let r = refine_sequential(&c, HashMode::Exact).unwrap();
        assert!(r.partition.is_empty());
        assert_eq!(r.history, vec![0]);
    }

    #[test]
    fn chain_of_rounds_in_an_lts() {
        // a path of length 4 distinguishes every state by its distance to the end
        let c = encoded("P X\na: {b}\nb: {c}\nc: {d}\nd: {}\n");
        let mut seen = Vec::new();
        let r = refine_with_observer(&c, HashMode::Exact, |info| seen.push(info.blocks)).unwrap();
        assert_eq!(r.partition.size(), 4);
        assert_eq!(seen, vec![2, 3, 4, 4]);
        assert_eq!(r.history, seen);
    }

    #[test]
    fn stability() {
        let c = encoded(examples::DFA);
        let coarse = Partition::from_keys(&[0, 0, 1]);
        assert!(stabilize_check(&c, &coarse).unwrap());
        assert!(!stabilize_check(&c, &Partition::trivial(3)).unwrap());
        assert!(stabilize_check(&c, &Partition::identity(3)).unwrap());
    }

    #[test]
    fn partition_helpers() {
        let p = Partition::from_keys(&[7u64, 3, 7, 9]);
        assert_eq!(p.block_of(), &[0, 1, 0, 2]);
        assert_eq!(p.size(), 3);
        assert_eq!(p.blocks(), vec![vec![0, 2], vec![1], vec![3]]);
        assert!(Partition::identity(4).refines(&p));
        assert!(!p.refines(&Partition::identity(4)));
        assert!(p.same_as(&Partition::from_keys(&[1, 0, 1, 5])));
        assert_eq!(p.restrict(2).block_of(), &[0, 1]);
    }
}
