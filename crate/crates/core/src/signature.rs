//! Signatures `F pi (c(s))` computed from the edge encoding.
//!
//! A state's signature is assembled from its output and the bag of its
//! edges with targets replaced by block ids. Basic functors read off their
//! slot, sums and products split the bag by slot range.

use std::fmt;
use std::ops::Range;

use xxhash_rust::xxh3::xxh3_128_with_seed;

use crate::codec::ByteWriter;
use crate::coalgebra::{ConstValue, StateId};
use crate::encode::{EncodedCoalgebra, F1Value, Label, Payload};
use crate::error::SignatureError;
use crate::functor::{BasicKind, LayoutNode, SlotId, SortId};
use crate::weight::Weight;

/// Block of a partition: a dense index in exact mode, a [`SigId`] in hashed
/// mode.
pub type BlockId = u128;

/// 128-bit digest of the canonical bytes of a signature.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SigId(pub u128);

impl SigId {
    pub fn low64(self) -> u64 {
        self.0 as u64
    }
}

impl fmt::Debug for SigId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SigId({:032x})", self.0)
    }
}

impl fmt::Display for SigId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

/// An element of `F N`: the signature of a state.
///
/// Sets and maps are sorted by block id and maps never contain the unit of
/// their monoid, so equal values have equal representations.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SigValue {
    Block(BlockId),
    Const(ConstValue),
    Set(Vec<BlockId>),
    Bag(Vec<(BlockId, u64)>),
    Dist(Vec<(BlockId, Weight)>),
    Monoid(Vec<(BlockId, Weight)>),
    Inj(u8, Box<SigValue>),
    Tuple(Vec<SigValue>),
    /// Top level: the sort of the state and its signature.
    Sort(SortId, Box<SigValue>),
}

/// Version byte of the canonical encoding.
pub const CANONICAL_VERSION: u8 = 1;

/// Seed of [`hash_id`]. Part of the identity contract between workers.
pub const HASH_SEED: u64 = 0x5167_7265_6669_6e65;

mod tag {
    pub const BLOCK: u8 = 0x10;
    pub const CONST: u8 = 0x11;
    pub const SET: u8 = 0x12;
    pub const BAG: u8 = 0x13;
    pub const DIST: u8 = 0x14;
    pub const MONOID: u8 = 0x15;
    pub const INJ: u8 = 0x16;
    pub const TUPLE: u8 = 0x17;
    pub const SORT: u8 = 0x18;
}

/// Injective byte encoding: version byte, then per node a tag byte and its
/// fields (fixed-width little-endian integers, `u32` length prefixes).
pub fn canonical_bytes(v: &SigValue) -> Vec<u8> {
    let mut out = ByteWriter::with_capacity(64);
    out.u8(CANONICAL_VERSION);
    write_sig(&mut out, v);
    out.into_inner()
}

fn write_sig(out: &mut ByteWriter, v: &SigValue) {
    match v {
        SigValue::Block(b) => {
            out.u8(tag::BLOCK);
            out.u128(*b);
        }
        SigValue::Const(c) => {
            out.u8(tag::CONST);
            out.const_value(c);
        }
        SigValue::Set(blocks) => {
            out.u8(tag::SET);
            out.len_prefix(blocks.len());
            for b in blocks {
                out.u128(*b);
            }
        }
        SigValue::Bag(entries) => {
            out.u8(tag::BAG);
            out.len_prefix(entries.len());
            for (b, k) in entries {
                out.u128(*b);
                out.u64(*k);
            }
        }
        SigValue::Dist(entries) | SigValue::Monoid(entries) => {
            out.u8(if matches!(v, SigValue::Dist(_)) {
                tag::DIST
            } else {
                tag::MONOID
            });
            out.len_prefix(entries.len());
            for (b, w) in entries {
                out.u128(*b);
                out.weight(w);
            }
        }
        SigValue::Inj(i, inner) => {
            out.u8(tag::INJ);
            out.u8(*i);
            write_sig(out, inner);
        }
        SigValue::Tuple(items) => {
            out.u8(tag::TUPLE);
            out.len_prefix(items.len());
            for item in items {
                write_sig(out, item);
            }
        }
        SigValue::Sort(sort, inner) => {
            out.u8(tag::SORT);
            out.u32(*sort);
            write_sig(out, inner);
        }
    }
}

/// XXH3-128 with the fixed seed [`HASH_SEED`].
pub fn hash_id(bytes: &[u8]) -> SigId {
    SigId(xxh3_128_with_seed(bytes, HASH_SEED))
}

/// An edge with its target replaced by the target's block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockEdge<'a> {
    pub slot: SlotId,
    pub payload: &'a Payload,
    pub block: BlockId,
}

/// Edges whose slot lies in `range`. Expects `edges` sorted by slot.
fn restrict<'e, 'a>(edges: &'e [BlockEdge<'a>], range: Range<SlotId>) -> &'e [BlockEdge<'a>] {
    if range.is_empty() {
        return &[];
    }
    let lo = edges.partition_point(|e| e.slot < range.start);
    let hi = edges.partition_point(|e| e.slot < range.end);
    &edges[lo..hi]
}

/// `filter_i`: the part of a bag over `A1 + A2` whose labels come from the
/// summand occupying `range`, with labels renumbered from 0.
pub fn filter<'a>(bag: &[BlockEdge<'a>], range: Range<SlotId>) -> Vec<BlockEdge<'a>> {
    bag.iter()
        .filter(|e| range.contains(&e.slot))
        .map(|e| BlockEdge {
            slot: e.slot - range.start,
            ..*e
        })
        .collect()
}

/// The injection of a bag over a summand's labels into the union, with the
/// summand starting at `offset`.
pub fn tag<'a>(bag: &[BlockEdge<'a>], offset: SlotId) -> Vec<BlockEdge<'a>> {
    bag.iter()
        .map(|e| BlockEdge {
            slot: e.slot + offset,
            ..*e
        })
        .collect()
}

/// Signature of a basic functor from the edges of its slot.
pub fn sig_basic(kind: BasicKind, edges: &[BlockEdge<'_>]) -> Result<SigValue, SignatureError> {
    match kind {
        BasicKind::Powerset => {
            let mut blocks: Vec<BlockId> = edges.iter().map(|e| e.block).collect();
            blocks.sort_unstable();
            blocks.dedup();
            Ok(SigValue::Set(blocks))
        }
        BasicKind::Bag => {
            let mut entries: Vec<(BlockId, u64)> = Vec::with_capacity(edges.len());
            for e in edges {
                match e.payload {
                    Payload::Weight(Weight::Count(k)) => entries.push((e.block, *k)),
                    _ => return Err(SignatureError::Shape("bag edge without multiplicity")),
                }
            }
            entries.sort_unstable();
            let mut merged: Vec<(BlockId, u64)> = Vec::with_capacity(entries.len());
            for (b, k) in entries {
                match merged.last_mut() {
                    Some((last, total)) if *last == b => {
                        *total = total.checked_add(k).ok_or(SignatureError::BagOverflow)?;
                    }
                    _ => merged.push((b, k)),
                }
            }
            merged.retain(|(_, k)| *k != 0);
            Ok(SigValue::Bag(merged))
        }
        BasicKind::Dist | BasicKind::Monoid(_) => {
            let mut entries: Vec<(BlockId, &Weight)> = Vec::with_capacity(edges.len());
            for e in edges {
                match e.payload {
                    Payload::Weight(w) if w.fits(kind.payload()) => entries.push((e.block, w)),
                    _ => return Err(SignatureError::Shape("weighted edge of the wrong monoid")),
                }
            }
            entries.sort_unstable_by_key(|(b, _)| *b);
            let mut merged: Vec<(BlockId, Weight)> = Vec::with_capacity(entries.len());
            for (b, w) in entries {
                match merged.last_mut() {
                    Some((last, total)) if *last == b => total.add_assign(w)?,
                    _ => merged.push((b, w.clone())),
                }
            }
            merged.retain(|(_, w)| !w.is_zero());
            Ok(match kind {
                BasicKind::Dist => SigValue::Dist(merged),
                _ => SigValue::Monoid(merged),
            })
        }
    }
}

/// Signature of a product or exponent layer: the component signatures on
/// the filtered sub-bags.
pub fn sig_product(
    node: &LayoutNode,
    f1: &F1Value,
    edges: &[BlockEdge<'_>],
) -> Result<SigValue, SignatureError> {
    let children: Vec<&LayoutNode> = match node {
        LayoutNode::Product(l, r) => vec![l, r],
        LayoutNode::Exponent(children) => children.iter().collect(),
        _ => return Err(SignatureError::Shape("not a product")),
    };
    let F1Value::Tuple(parts) = f1 else {
        return Err(SignatureError::Shape("product output is not a tuple"));
    };
    if parts.len() != children.len() {
        return Err(SignatureError::Shape("tuple of the wrong length"));
    }
    children
        .iter()
        .zip(parts)
        .map(|(child, part)| sig_node(child, part, restrict(edges, child.slot_range())))
        .collect::<Result<_, _>>()
        .map(SigValue::Tuple)
}

/// Signature of a sum layer. All edges must belong to the state's summand.
pub fn sig_coproduct(
    node: &LayoutNode,
    f1: &F1Value,
    edges: &[BlockEdge<'_>],
) -> Result<SigValue, SignatureError> {
    let LayoutNode::Sum(l, r) = node else {
        return Err(SignatureError::Shape("not a sum"));
    };
    let F1Value::Inj(i, inner) = f1 else {
        return Err(SignatureError::Shape("sum output is not tagged"));
    };
    let child = match i {
        0 => l,
        1 => r,
        _ => return Err(SignatureError::Shape("summand tag out of range")),
    };
    let range = child.slot_range();
    if edges.iter().any(|e| !range.contains(&e.slot)) {
        return Err(SignatureError::TagMismatch);
    }
    Ok(SigValue::Inj(*i, Box::new(sig_node(child, inner, edges)?)))
}

/// Signature of any layer node. `edges` must be sorted by slot and contain
/// only slots of this node.
pub fn sig_node(
    node: &LayoutNode,
    f1: &F1Value,
    edges: &[BlockEdge<'_>],
) -> Result<SigValue, SignatureError> {
    match node {
        LayoutNode::Var { .. } => match edges {
            [e] => Ok(SigValue::Block(e.block)),
            _ => Err(SignatureError::Shape("identity layer needs exactly one edge")),
        },
        LayoutNode::Const(_) => match f1 {
            F1Value::Const(c) => Ok(SigValue::Const(c.clone())),
            _ => Err(SignatureError::Shape("constant layer without a constant")),
        },
        LayoutNode::Basic { kind, .. } => sig_basic(*kind, edges),
        LayoutNode::Sum(..) => sig_coproduct(node, f1, edges),
        LayoutNode::Product(..) | LayoutNode::Exponent(_) => sig_product(node, f1, edges),
    }
}

/// `sig_pi(s)` for a locally stored state, tagged with its sort.
pub fn compute_signature(
    c: &EncodedCoalgebra,
    s: StateId,
    block_of: impl Fn(StateId) -> Option<BlockId>,
) -> Result<SigValue, SignatureError> {
    let obs = c.observation(s);
    let mut edges: Vec<BlockEdge<'_>> = Vec::with_capacity(c.out_degree(s));
    for (label, t) in c.edges(s) {
        let Label { slot, payload } = label;
        edges.push(BlockEdge {
            slot: *slot,
            payload,
            block: block_of(t).ok_or(SignatureError::MissingBlock(t))?,
        });
    }
    // the encoder emits edges in slot order; this is a linear scan then
    edges.sort_by_key(|e| e.slot);
    let node = c.layout().sort(obs.sort);
    Ok(SigValue::Sort(
        obs.sort,
        Box::new(sig_node(node, &obs.value, &edges)?),
    ))
}

/// [`hash_id`] of the canonical bytes of `sig_pi(s)`.
pub fn signature_id(
    c: &EncodedCoalgebra,
    s: StateId,
    block_of: impl Fn(StateId) -> Option<BlockId>,
) -> Result<SigId, SignatureError> {
    compute_signature(c, s, block_of).map(|v| hash_id(&canonical_bytes(&v)))
}
