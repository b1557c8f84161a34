//! Edge encoding and desorting.
//!
//! Every state is represented by an observable output (its image under
//! `F!`, tagged with the sort of the state) and a bag of labelled edges.
//! Arguments of basic functors that are not `X` become intermediate states
//! of their own sort, one per occurrence, appended after the original
//! states.

use std::collections::{HashMap, VecDeque};
use std::ops::Range;

use crate::coalgebra::{ConstValue, NestedCoalgebra, StateId, Value};
use crate::error::SignatureError;
use crate::functor::{
    label_layout, BasicKind, Child, FunctorTerm, LabelLayout, LayoutNode, SlotId, SortId,
};
use crate::weight::Weight;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Payload {
    Unit,
    Weight(Weight),
}

/// Edge label: the slot of the label alphabet and its payload.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label {
    pub slot: SlotId,
    pub payload: Payload,
}

/// Observable output of a state in one layer.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum F1Value {
    /// Identity and distribution functors.
    Unit,
    Const(ConstValue),
    /// Powerset: whether the set is nonempty.
    NonEmpty(bool),
    /// Bag and monoid-valued functors: the sum of all weights.
    Total(Weight),
    Inj(u8, Box<F1Value>),
    Tuple(Vec<F1Value>),
}

/// Output of a state together with its sort.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Observation {
    pub sort: SortId,
    pub value: F1Value,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub src: StateId,
    pub label: Label,
    pub tgt: StateId,
}

/// Flat, desorted system in compressed sparse row form.
///
/// A full coalgebra owns all states; a slice (see [`EncodedCoalgebra::slice`])
/// owns a contiguous range but keeps global state ids for edge targets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedCoalgebra {
    pub(crate) term: FunctorTerm,
    pub(crate) layout: LabelLayout,
    pub(crate) original_states: usize,
    pub(crate) total_states: usize,
    pub(crate) total_edges: usize,
    pub(crate) first: StateId,
    pub(crate) observations: Vec<Observation>,
    pub(crate) state_obs: Vec<u32>,
    pub(crate) labels: Vec<Label>,
    pub(crate) offsets: Vec<usize>,
    pub(crate) edge_label: Vec<u32>,
    pub(crate) edge_target: Vec<StateId>,
}

impl EncodedCoalgebra {
    pub fn term(&self) -> &FunctorTerm {
        &self.term
    }

    pub fn layout(&self) -> &LabelLayout {
        &self.layout
    }

    /// `n'`: all states, original and intermediate.
    pub fn state_count(&self) -> usize {
        self.total_states
    }

    /// `n`: states of the input file; they occupy ids `0..n`.
    pub fn original_count(&self) -> usize {
        self.original_states
    }

    /// `m`: number of edges of the whole system.
    pub fn edge_count(&self) -> usize {
        self.total_edges
    }

    /// States stored here. The whole range for a full coalgebra.
    pub fn local_states(&self) -> Range<StateId> {
        self.first..self.first + self.state_obs.len() as StateId
    }

    pub fn is_full(&self) -> bool {
        self.state_obs.len() == self.total_states
    }

    fn local(&self, s: StateId) -> usize {
        debug_assert!(self.local_states().contains(&s), "state {s} not stored here");
        (s - self.first) as usize
    }

    pub fn observation(&self, s: StateId) -> &Observation {
        &self.observations[self.state_obs[self.local(s)] as usize]
    }

    pub fn sort_of(&self, s: StateId) -> SortId {
        self.observation(s).sort
    }

    /// Outgoing edges of a locally stored state.
    pub fn edges(&self, s: StateId) -> impl ExactSizeIterator<Item = (&Label, StateId)> + '_ {
        let i = self.local(s);
        let range = self.offsets[i]..self.offsets[i + 1];
        self.edge_label[range.clone()]
            .iter()
            .zip(&self.edge_target[range])
            .map(|(&l, &t)| (&self.labels[l as usize], t))
    }

    pub fn out_degree(&self, s: StateId) -> usize {
        let i = self.local(s);
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Edges stored here, grouped by source.
    pub fn edge_list(&self) -> Vec<Edge> {
        self.local_states()
            .flat_map(|s| {
                self.edges(s).map(move |(label, tgt)| Edge {
                    src: s,
                    label: label.clone(),
                    tgt,
                })
            })
            .collect()
    }

    /// Copies a contiguous range of states, keeping global ids.
    pub fn slice(&self, range: Range<StateId>) -> EncodedCoalgebra {
        let mine = self.local_states();
        assert!(
            range.start >= mine.start && range.end <= mine.end && range.start <= range.end,
            "slice {range:?} outside {mine:?}"
        );
        let lo = (range.start - mine.start) as usize;
        let len = range.len();

        let mut obs_map: HashMap<u32, u32> = HashMap::new();
        let mut observations = Vec::new();
        let state_obs = self.state_obs[lo..lo + len]
            .iter()
            .map(|&o| {
                *obs_map.entry(o).or_insert_with(|| {
                    observations.push(self.observations[o as usize].clone());
                    observations.len() as u32 - 1
                })
            })
            .collect();

        let edge_range = self.offsets[lo]..self.offsets[lo + len];
        let mut label_map: HashMap<u32, u32> = HashMap::new();
        let mut labels = Vec::new();
        let edge_label = self.edge_label[edge_range.clone()]
            .iter()
            .map(|&l| {
                *label_map.entry(l).or_insert_with(|| {
                    labels.push(self.labels[l as usize].clone());
                    labels.len() as u32 - 1
                })
            })
            .collect();
        let base = edge_range.start;
        let offsets = self.offsets[lo..=lo + len].iter().map(|o| o - base).collect();

        EncodedCoalgebra {
            term: self.term.clone(),
            layout: self.layout.clone(),
            original_states: self.original_states,
            total_states: self.total_states,
            total_edges: self.total_edges,
            first: range.start,
            observations,
            state_obs,
            labels,
            offsets,
            edge_label,
            edge_target: self.edge_target[edge_range].to_vec(),
        }
    }

    /// Repeats every edge under a powerset `times` times. The result
    /// describes the same system with a larger edge list.
    pub fn with_repeated_edges(&self, times: usize) -> EncodedCoalgebra {
        fn powerset_slots(node: &LayoutNode, out: &mut Vec<SlotId>) {
            match node {
                LayoutNode::Basic { slot, kind: BasicKind::Powerset, .. } => out.push(*slot),
                LayoutNode::Sum(l, r) | LayoutNode::Product(l, r) => {
                    powerset_slots(l, out);
                    powerset_slots(r, out);
                }
                LayoutNode::Exponent(children) => {
                    children.iter().for_each(|n| powerset_slots(n, out))
                }
                _ => {}
            }
        }
        let mut sets = Vec::new();
        self.layout.sorts().iter().for_each(|n| powerset_slots(n, &mut sets));

        let mut c = self.clone();
        c.edge_label.clear();
        c.edge_target.clear();
        c.offsets = vec![0];
        for w in self.offsets.windows(2) {
            for e in w[0]..w[1] {
                let l = self.edge_label[e];
                let copies = if sets.contains(&self.labels[l as usize].slot) { times } else { 1 };
                for _ in 0..copies {
                    c.edge_label.push(l);
                    c.edge_target.push(self.edge_target[e]);
                }
            }
            c.offsets.push(c.edge_label.len());
        }
        c.total_edges += c.edge_label.len() - self.edge_label.len();
        c
    }

    /// Checks the structural invariants of the encoding.
    pub fn validate(&self) -> Result<(), String> {
        let n_prime = self.total_states as StateId;
        let mut incoming = vec![0usize; if self.is_full() { self.total_states } else { 0 }];
        let mut edges = 0usize;
        for s in self.local_states() {
            let obs = self.observation(s);
            let node = self
                .layout
                .sorts()
                .get(obs.sort as usize)
                .ok_or_else(|| format!("state {s}: unknown sort {}", obs.sort))?;
            let range = node.slot_range();
            for (label, t) in self.edges(s) {
                edges += 1;
                if t >= n_prime {
                    return Err(format!("edge {s} -> {t} out of range"));
                }
                if !range.contains(&label.slot) || self.layout.slot(label.slot).sort != obs.sort {
                    return Err(format!("state {s}: label slot {} not in its sort", label.slot));
                }
                if let Some(c) = incoming.get_mut(t as usize) {
                    *c += 1;
                }
            }
            let labels: Vec<&Label> = self.edges(s).map(|(l, _)| l).collect();
            check_totals(node, &obs.value, &labels)
                .map_err(|e| format!("state {s}: {e}"))?;
        }
        if self.is_full() {
            if edges != self.total_edges {
                return Err(format!("edge count {edges} != m = {}", self.total_edges));
            }
            for (s, &c) in incoming.iter().enumerate().skip(self.original_states) {
                if c != 1 {
                    return Err(format!("intermediate state {s} has {c} incoming edges"));
                }
            }
        }
        Ok(())
    }
}

/// Checks distribution sums and monoid totals against the edge labels.
fn check_totals(node: &LayoutNode, f1: &F1Value, labels: &[&Label]) -> Result<(), String> {
    match (node, f1) {
        (LayoutNode::Basic { slot, kind, .. }, f1) => {
            let mine = labels.iter().filter(|l| l.slot == *slot);
            match (kind, f1) {
                (BasicKind::Dist, F1Value::Unit) => {
                    let mut total = Weight::Rat(num_rational::BigRational::from_integer(0.into()));
                    let mut any = false;
                    for l in mine {
                        if let Payload::Weight(w) = &l.payload {
                            total = total.add(w).map_err(|e| e.to_string())?;
                            any = true;
                        }
                    }
                    let one = Weight::Rat(num_rational::BigRational::from_integer(1.into()));
                    if any && total != one {
                        return Err(format!("distribution sums to {total}"));
                    }
                    Ok(())
                }
                (BasicKind::Bag | BasicKind::Monoid(_), F1Value::Total(expected)) => {
                    let mut total = Weight::zero(kind.payload());
                    for l in mine {
                        if let Payload::Weight(w) = &l.payload {
                            total = total.add(w).map_err(|e| e.to_string())?;
                        }
                    }
                    if total != *expected {
                        return Err(format!("stored total {expected} != sum {total}"));
                    }
                    Ok(())
                }
                (BasicKind::Powerset, F1Value::NonEmpty(flag)) => {
                    if *flag != (mine.count() > 0) {
                        return Err("emptiness flag disagrees with edges".into());
                    }
                    Ok(())
                }
                _ => Err("output does not match functor".into()),
            }
        }
        (LayoutNode::Var { .. }, F1Value::Unit) | (LayoutNode::Const(_), F1Value::Const(_)) => {
            Ok(())
        }
        (LayoutNode::Sum(l, r), F1Value::Inj(tag, inner)) => {
            check_totals(if *tag == 0 { l } else { r }, inner, labels)
        }
        (LayoutNode::Product(l, r), F1Value::Tuple(items)) if items.len() == 2 => {
            check_totals(l, &items[0], labels)?;
            check_totals(r, &items[1], labels)
        }
        (LayoutNode::Exponent(children), F1Value::Tuple(items)) if items.len() == children.len() => {
            for (c, v) in children.iter().zip(items) {
                check_totals(c, v, labels)?;
            }
            Ok(())
        }
        _ => Err("output does not match functor".into()),
    }
}

/// Encodes one single-layer value: returns its output and pushes its edges.
/// Arguments of basic functors of another sort are turned into states by
/// `fresh`, which returns the id of the new intermediate state.
pub fn encode_flat(
    node: &LayoutNode,
    value: &Value,
    edges: &mut Vec<(Label, StateId)>,
    fresh: &mut dyn FnMut(SortId, &Value) -> StateId,
) -> Result<F1Value, SignatureError> {
    let shape = SignatureError::Shape("value does not match functor");
    match (node, value) {
        (LayoutNode::Var { slot }, Value::State(t)) => {
            edges.push((
                Label {
                    slot: *slot,
                    payload: Payload::Unit,
                },
                *t,
            ));
            Ok(F1Value::Unit)
        }
        (LayoutNode::Const(_), Value::Const(c)) => Ok(F1Value::Const(c.clone())),
        (LayoutNode::Basic { slot, kind, child }, value) => {
            let mut target = |v: &Value| -> Result<StateId, SignatureError> {
                match (child, v) {
                    (Child::Var, Value::State(t)) => Ok(*t),
                    (Child::Sort(sort), v) => Ok(fresh(*sort, v)),
                    _ => Err(SignatureError::Shape("expected a state")),
                }
            };
            match (kind, value) {
                (BasicKind::Powerset, Value::Set(items)) => {
                    for v in items {
                        let t = target(v)?;
                        edges.push((
                            Label {
                                slot: *slot,
                                payload: Payload::Unit,
                            },
                            t,
                        ));
                    }
                    Ok(F1Value::NonEmpty(!items.is_empty()))
                }
                (_, Value::Weighted(entries)) => {
                    let mut total = Weight::zero(kind.payload());
                    for (v, w) in entries {
                        if !w.fits(kind.payload()) {
                            return Err(SignatureError::Shape("weight from the wrong monoid"));
                        }
                        if w.is_zero() {
                            continue;
                        }
                        total.add_assign(w)?;
                        let t = target(v)?;
                        edges.push((
                            Label {
                                slot: *slot,
                                payload: Payload::Weight(w.clone()),
                            },
                            t,
                        ));
                    }
                    Ok(match kind {
                        BasicKind::Dist => F1Value::Unit,
                        _ => F1Value::Total(total),
                    })
                }
                _ => Err(shape),
            }
        }
        (LayoutNode::Sum(l, r), Value::Inj(tag, v)) => {
            let inner = match tag {
                0 => encode_flat(l, v, edges, fresh)?,
                1 => encode_flat(r, v, edges, fresh)?,
                _ => return Err(shape),
            };
            Ok(F1Value::Inj(*tag, Box::new(inner)))
        }
        (LayoutNode::Product(l, r), Value::Tuple(items)) if items.len() == 2 => {
            let a = encode_flat(l, &items[0], edges, fresh)?;
            let b = encode_flat(r, &items[1], edges, fresh)?;
            Ok(F1Value::Tuple(vec![a, b]))
        }
        (LayoutNode::Exponent(children), Value::Tuple(items)) if items.len() == children.len() => {
            let mut out = Vec::with_capacity(items.len());
            for (c, v) in children.iter().zip(items) {
                out.push(encode_flat(c, v, edges, fresh)?);
            }
            Ok(F1Value::Tuple(out))
        }
        _ => Err(shape),
    }
}

/// Incremental construction of an [`EncodedCoalgebra`] in state order.
pub(crate) struct EncodedBuilder {
    coalgebra: EncodedCoalgebra,
    obs_index: HashMap<Observation, u32>,
    label_index: HashMap<Label, u32>,
}

impl EncodedBuilder {
    pub(crate) fn new(term: FunctorTerm, layout: LabelLayout, original_states: usize) -> Self {
        EncodedBuilder {
            coalgebra: EncodedCoalgebra {
                term,
                layout,
                original_states,
                total_states: 0,
                total_edges: 0,
                first: 0,
                observations: Vec::new(),
                state_obs: Vec::new(),
                labels: Vec::new(),
                offsets: vec![0],
                edge_label: Vec::new(),
                edge_target: Vec::new(),
            },
            obs_index: HashMap::new(),
            label_index: HashMap::new(),
        }
    }

    pub(crate) fn push_state(&mut self, obs: Observation, edges: &mut Vec<(Label, StateId)>) {
        let c = &mut self.coalgebra;
        let next = c.observations.len() as u32;
        let o = *self.obs_index.entry(obs).or_insert_with_key(|obs| {
            c.observations.push(obs.clone());
            next
        });
        c.state_obs.push(o);
        for (label, t) in edges.drain(..) {
            let next = c.labels.len() as u32;
            let l = match self.label_index.get(&label) {
                Some(&l) => l,
                None => {
                    c.labels.push(label.clone());
                    self.label_index.insert(label, next);
                    next
                }
            };
            c.edge_label.push(l);
            c.edge_target.push(t);
        }
        c.offsets.push(c.edge_target.len());
    }

    pub(crate) fn finish(mut self) -> EncodedCoalgebra {
        let c = &mut self.coalgebra;
        c.total_states = c.state_obs.len();
        c.total_edges = c.edge_target.len();
        self.coalgebra
    }
}

/// Flattens a nested coalgebra into a single-layer multi-sorted system.
pub fn desort(nested: &NestedCoalgebra) -> Result<EncodedCoalgebra, SignatureError> {
    let layout = label_layout(&nested.term);
    let n = nested.values.len();
    let mut builder = EncodedBuilder::new(nested.term.clone(), layout.clone(), n);
    let mut queue: VecDeque<(SortId, Value)> = VecDeque::new();
    let mut next_id = n as u64;
    let mut overflow = false;
    let mut edges = Vec::new();

    let mut encode = |sort: SortId,
                      value: &Value,
                      queue: &mut VecDeque<(SortId, Value)>,
                      builder: &mut EncodedBuilder|
     -> Result<(), SignatureError> {
        let mut fresh = |sort: SortId, v: &Value| {
            let id = next_id;
            next_id += 1;
            overflow |= id > StateId::MAX as u64;
            queue.push_back((sort, v.clone()));
            id as StateId
        };
        let f1 = encode_flat(layout.sort(sort), value, &mut edges, &mut fresh)?;
        builder.push_state(Observation { sort, value: f1 }, &mut edges);
        Ok(())
    };

    for value in &nested.values {
        encode(0, value, &mut queue, &mut builder)?;
    }
    while let Some((sort, value)) = queue.pop_front() {
        encode(sort, &value, &mut queue, &mut builder)?;
    }
    if overflow {
        return Err(SignatureError::Shape("more than 2^32 states after desorting"));
    }
    Ok(builder.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coalgebra::{examples, parse_file};
    use crate::functor::{MonoidId, PathStep};
    use num_rational::BigRational;

    fn rat(n: i64, d: i64) -> Weight {
        Weight::Rat(BigRational::new(n.into(), d.into()))
    }

    #[test]
    fn flat_terms_are_not_desorted() {
        let c = desort(&parse_file(examples::DFA).unwrap()).unwrap();
        assert_eq!(c.state_count(), 3);
        assert_eq!(c.original_count(), 3);
        assert_eq!(c.edge_count(), 6);
        c.validate().unwrap();
        let c = desort(&parse_file(examples::MARKOV_CHAIN).unwrap()).unwrap();
        assert_eq!((c.state_count(), c.edge_count()), (3, 5));
        c.validate().unwrap();
    }

    #[test]
    fn powerset_encoding() {
        let c = desort(&parse_file("P X\na: {a, b}\nb: {}\n").unwrap()).unwrap();
        assert_eq!(c.observation(0).value, F1Value::NonEmpty(true));
        assert_eq!(c.observation(1).value, F1Value::NonEmpty(false));
        let edges: Vec<_> = c.edges(0).map(|(l, t)| (l.clone(), t)).collect();
        let unit = Label {
            slot: 0,
            payload: Payload::Unit,
        };
        assert_eq!(edges, vec![(unit.clone(), 0), (unit, 1)]);
    }

    #[test]
    fn monoid_encoding() {
        let c = desort(&parse_file("(R,+)^(X)\na: {a: 0.5, b: 1/2}\nb: {}\n").unwrap()).unwrap();
        assert_eq!(c.observation(0).value, F1Value::Total(rat(1, 1)));
        let edges: Vec<_> = c.edges(0).map(|(l, t)| (l.payload.clone(), t)).collect();
        assert_eq!(
            edges,
            vec![
                (Payload::Weight(rat(1, 2)), 0),
                (Payload::Weight(rat(1, 2)), 1)
            ]
        );
    }

    #[test]
    fn bag_encoding() {
        let c = desort(&parse_file("B X\na: {a: 3}\n").unwrap()).unwrap();
        assert_eq!(c.observation(0).value, F1Value::Total(Weight::Count(3)));
        let edges: Vec<_> = c.edges(0).map(|(l, t)| (l.payload.clone(), t)).collect();
        assert_eq!(edges, vec![(Payload::Weight(Weight::Count(3)), 0)]);
    }

    #[test]
    fn tree_automaton_sizes() {
        // two states, three transitions of rank 2
        let text = "N x (N,max)^(4 x X^2)\n\
                    s: (1, {(0, {0: s, 1: t}): 2, (3, {0: t, 1: t}): 1})\n\
                    t: (2, {(0, {0: s, 1: t}): 2})\n";
        let c = desort(&parse_file(text).unwrap()).unwrap();
        let (n, k, r) = (2, 3, 2);
        assert_eq!(c.original_count(), n);
        assert_eq!(c.state_count(), n + k);
        assert_eq!(c.edge_count(), (r + 1) * k);
        c.validate().unwrap();
        // intermediates are appended in order of occurrence
        assert_eq!(c.sort_of(2), 1);
        let targets: Vec<_> = c.edges(0).map(|(_, t)| t).collect();
        assert_eq!(targets, vec![2, 3]);
        let targets: Vec<_> = c.edges(4).map(|(_, t)| t).collect();
        assert_eq!(targets, vec![0, 1]);
        assert_eq!(
            c.layout().slot(c.edges(4).next().unwrap().0.slot).path,
            vec![PathStep::Right, PathStep::Inner, PathStep::Right, PathStep::Position(0)]
        );
    }

    #[test]
    fn nested_distributions() {
        let text = "P D X\na: {{a: 1}, {a: 0.5, b: 0.5}}\nb: {}\n";
        let c = desort(&parse_file(text).unwrap()).unwrap();
        assert_eq!(c.state_count(), 4);
        assert_eq!(c.edge_count(), 2 + 3);
        assert_eq!(c.observation(2).sort, 1);
        c.validate().unwrap();
    }

    #[test]
    fn slices_keep_global_ids() {
        let text = "N x (N,max)^(4 x X^2)\n\
                    s: (1, {(0, {0: s, 1: t}): 2, (3, {0: t, 1: t}): 1})\n\
                    t: (2, {(0, {0: s, 1: t}): 2})\n";
        let c = desort(&parse_file(text).unwrap()).unwrap();
        let part = c.slice(1..4);
        assert_eq!(part.local_states(), 1..4);
        assert_eq!(part.state_count(), c.state_count());
        for s in 1..4 {
            assert_eq!(part.observation(s), c.observation(s));
            let a: Vec<_> = part.edges(s).collect();
            let b: Vec<_> = c.edges(s).collect();
            assert_eq!(a, b);
        }
        part.validate().unwrap();
        let empty = c.slice(5..5);
        assert_eq!(empty.local_states().len(), 0);
        assert!(empty.edge_list().is_empty());
    }

    #[test]
    fn overflowing_totals_are_reported() {
        let text = format!("(Z,+)^(X)\na: {{a: {}, b: 1}}\nb: {{}}\n", i64::MAX);
        let err = desort(&parse_file(&text).unwrap()).unwrap_err();
        assert_eq!(err, SignatureError::Overflow(MonoidId::IntAdd));
    }
}
