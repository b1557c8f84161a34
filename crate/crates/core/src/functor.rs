//! Functor terms describing the transition type of a system.
//!
//! A term is the first line of every input file. The grammar is
//!
//! ```text
//! T ::= X | P T | B T | D T | M^(T) | C | T + T | T x T | T^A
//! C ::= N | A        A ::= {s1,...,sk} | k
//! ```
//!
//! where `M` is one of the monoids `(Z,+)`, `(R,+)`, `(C,+)`, `(P64,or)` and
//! `(N,max)`. Postfix `^` binds tightest, then the prefix functors, then `x`,
//! then `+`. Both infix operators associate to the right.

use std::fmt;

use crate::error::ParseError;

/// The commutative monoids supported by the monoid-valued functor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MonoidId {
    /// `(Z,+)`: 64-bit signed integers, checked addition.
    IntAdd,
    /// `(R,+)`: exact rationals.
    RatAdd,
    /// `(C,+)`: pairs of exact rationals.
    ComplexRatAdd,
    /// `(P64,or)`: 64-bit words under bitwise or.
    Word64Or,
    /// `(N,max)`: naturals under max.
    NatMax,
}

impl MonoidId {
    pub const ALL: [MonoidId; 5] = [
        MonoidId::IntAdd,
        MonoidId::RatAdd,
        MonoidId::ComplexRatAdd,
        MonoidId::Word64Or,
        MonoidId::NatMax,
    ];

    /// Spelling used in functor terms.
    pub fn spelling(self) -> &'static str {
        match self {
            MonoidId::IntAdd => "(Z,+)",
            MonoidId::RatAdd => "(R,+)",
            MonoidId::ComplexRatAdd => "(C,+)",
            MonoidId::Word64Or => "(P64,or)",
            MonoidId::NatMax => "(N,max)",
        }
    }

    fn from_parts(carrier: &str, op: &str) -> Option<MonoidId> {
        match (carrier, op) {
            ("Z", "+") => Some(MonoidId::IntAdd),
            ("R", "+") => Some(MonoidId::RatAdd),
            ("C", "+") => Some(MonoidId::ComplexRatAdd),
            ("P64", "or") => Some(MonoidId::Word64Or),
            ("N", "max") => Some(MonoidId::NatMax),
            _ => None,
        }
    }
}

/// A finite set of names, or the naturals.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ConstSet {
    Finite(FiniteSet),
    Naturals,
}

/// A nonempty, duplicate-free list of element names. The literal `k`
/// denotes the names `"0"` .. `"k-1"`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FiniteSet {
    names: Vec<String>,
}

impl FiniteSet {
    pub fn new(names: Vec<String>) -> Result<Self, String> {
        if names.is_empty() {
            return Err("empty finite set".to_string());
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(format!("duplicate element `{name}` in finite set"));
            }
        }
        Ok(FiniteSet { names })
    }

    /// The set `{0, ..., k-1}`.
    pub fn range(k: usize) -> Result<Self, String> {
        FiniteSet::new((0..k).map(|i| i.to_string()).collect())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn is_range(&self) -> bool {
        self.names.iter().enumerate().all(|(i, n)| *n == i.to_string())
    }
}

impl fmt::Display for FiniteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_range() {
            write!(f, "{}", self.names.len())
        } else {
            write!(f, "{{{}}}", self.names.join(","))
        }
    }
}

/// Abstract syntax of a functor term.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum FunctorTerm {
    Var,
    Const(ConstSet),
    Powerset(Box<FunctorTerm>),
    Bag(Box<FunctorTerm>),
    Dist(Box<FunctorTerm>),
    MonoidValued(MonoidId, Box<FunctorTerm>),
    Sum(Box<FunctorTerm>, Box<FunctorTerm>),
    Product(Box<FunctorTerm>, Box<FunctorTerm>),
    Exponent(Box<FunctorTerm>, FiniteSet),
}

impl FunctorTerm {
    pub fn powerset(t: FunctorTerm) -> Self {
        FunctorTerm::Powerset(Box::new(t))
    }
    pub fn bag(t: FunctorTerm) -> Self {
        FunctorTerm::Bag(Box::new(t))
    }
    pub fn dist(t: FunctorTerm) -> Self {
        FunctorTerm::Dist(Box::new(t))
    }
    pub fn monoid(m: MonoidId, t: FunctorTerm) -> Self {
        FunctorTerm::MonoidValued(m, Box::new(t))
    }
    pub fn sum(l: FunctorTerm, r: FunctorTerm) -> Self {
        FunctorTerm::Sum(Box::new(l), Box::new(r))
    }
    pub fn product(l: FunctorTerm, r: FunctorTerm) -> Self {
        FunctorTerm::Product(Box::new(l), Box::new(r))
    }
    pub fn exponent(t: FunctorTerm, set: FiniteSet) -> Self {
        FunctorTerm::Exponent(Box::new(t), set)
    }
    pub fn finite(names: &[&str]) -> Self {
        let set = FiniteSet::new(names.iter().map(|s| s.to_string()).collect())
            .expect("valid finite set");
        FunctorTerm::Const(ConstSet::Finite(set))
    }

    /// Whether `X` occurs anywhere in the term.
    pub fn has_var(&self) -> bool {
        match self {
            FunctorTerm::Var => true,
            FunctorTerm::Const(_) => false,
            FunctorTerm::Powerset(t)
            | FunctorTerm::Bag(t)
            | FunctorTerm::Dist(t)
            | FunctorTerm::MonoidValued(_, t)
            | FunctorTerm::Exponent(t, _) => t.has_var(),
            FunctorTerm::Sum(l, r) | FunctorTerm::Product(l, r) => l.has_var() || r.has_var(),
        }
    }

    /// Term depth, counting a leaf as 1.
    pub fn depth(&self) -> usize {
        match self {
            FunctorTerm::Var | FunctorTerm::Const(_) => 1,
            FunctorTerm::Powerset(t)
            | FunctorTerm::Bag(t)
            | FunctorTerm::Dist(t)
            | FunctorTerm::MonoidValued(_, t)
            | FunctorTerm::Exponent(t, _) => 1 + t.depth(),
            FunctorTerm::Sum(l, r) | FunctorTerm::Product(l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            FunctorTerm::Sum(..) => 0,
            FunctorTerm::Product(..) => 1,
            FunctorTerm::Powerset(_)
            | FunctorTerm::Bag(_)
            | FunctorTerm::Dist(_)
            | FunctorTerm::MonoidValued(..) => 2,
            FunctorTerm::Exponent(..) => 3,
            FunctorTerm::Var | FunctorTerm::Const(_) => 4,
        }
    }

    fn fmt_at(&self, min: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = self.precedence() < min;
        if wrap {
            f.write_str("(")?;
        }
        match self {
            FunctorTerm::Var => f.write_str("X")?,
            FunctorTerm::Const(ConstSet::Naturals) => f.write_str("N")?,
            FunctorTerm::Const(ConstSet::Finite(set)) => write!(f, "{set}")?,
            FunctorTerm::Powerset(t) => {
                f.write_str("P ")?;
                t.fmt_at(2, f)?;
            }
            FunctorTerm::Bag(t) => {
                f.write_str("B ")?;
                t.fmt_at(2, f)?;
            }
            FunctorTerm::Dist(t) => {
                f.write_str("D ")?;
                t.fmt_at(2, f)?;
            }
            FunctorTerm::MonoidValued(m, t) => {
                write!(f, "{}^(", m.spelling())?;
                t.fmt_at(0, f)?;
                f.write_str(")")?;
            }
            FunctorTerm::Sum(l, r) => {
                l.fmt_at(1, f)?;
                f.write_str(" + ")?;
                r.fmt_at(0, f)?;
            }
            FunctorTerm::Product(l, r) => {
                l.fmt_at(2, f)?;
                f.write_str(" x ")?;
                r.fmt_at(1, f)?;
            }
            FunctorTerm::Exponent(t, set) => {
                t.fmt_at(3, f)?;
                write!(f, "^{set}")?;
            }
        }
        if wrap {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for FunctorTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_at(0, f)
    }
}

impl std::str::FromStr for FunctorTerm {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_functor(s)
    }
}

/// `true` for names of the form `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Parses a functor term from the first line of an input file.
pub fn parse_functor(text: &str) -> Result<FunctorTerm, ParseError> {
    let mut p = TermParser {
        src: text.as_bytes(),
        pos: 0,
    };
    let term = p.sum()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(term)
}

struct TermParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl TermParser<'_> {
    fn error(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(1, self.pos + 1, msg)
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected `{}`", c as char)))
        }
    }

    fn sum(&mut self) -> Result<FunctorTerm, ParseError> {
        let left = self.product()?;
        if self.peek() == Some(b'+') {
            self.pos += 1;
            let right = self.sum()?;
            return Ok(FunctorTerm::sum(left, right));
        }
        Ok(left)
    }

    fn product(&mut self) -> Result<FunctorTerm, ParseError> {
        let left = self.prefix()?;
        if self.peek() == Some(b'x') {
            self.pos += 1;
            let right = self.product()?;
            return Ok(FunctorTerm::product(left, right));
        }
        Ok(left)
    }

    fn prefix(&mut self) -> Result<FunctorTerm, ParseError> {
        match self.peek() {
            Some(b'P') => {
                self.pos += 1;
                Ok(FunctorTerm::powerset(self.prefix()?))
            }
            Some(b'B') => {
                self.pos += 1;
                Ok(FunctorTerm::bag(self.prefix()?))
            }
            Some(b'D') => {
                self.pos += 1;
                Ok(FunctorTerm::dist(self.prefix()?))
            }
            Some(b'(') if self.at_monoid() => {
                let m = self.monoid()?;
                self.expect(b'^')?;
                Ok(FunctorTerm::monoid(m, self.prefix()?))
            }
            _ => self.postfix(),
        }
    }

    /// Lookahead for `( name ,` which can only start a monoid name.
    fn at_monoid(&mut self) -> bool {
        let save = self.pos;
        self.pos += 1;
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let has_name = self.pos > start;
        let comma = self.peek() == Some(b',');
        self.pos = save;
        has_name && comma
    }

    fn monoid(&mut self) -> Result<MonoidId, ParseError> {
        let at = self.pos;
        self.expect(b'(')?;
        self.skip_ws();
        let carrier = self.word(|c| c.is_ascii_alphanumeric());
        self.expect(b',')?;
        self.skip_ws();
        let op = if self.src.get(self.pos) == Some(&b'+') {
            self.pos += 1;
            "+".to_string()
        } else {
            self.word(|c| c.is_ascii_alphabetic())
        };
        self.expect(b')')?;
        MonoidId::from_parts(&carrier, &op).ok_or_else(|| {
            ParseError::new(1, at + 1, format!("unknown monoid `({carrier},{op})`"))
        })
    }

    fn word(&mut self, accept: impl Fn(u8) -> bool) -> String {
        let start = self.pos;
        while self.pos < self.src.len() && accept(self.src[self.pos]) {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn postfix(&mut self) -> Result<FunctorTerm, ParseError> {
        let mut term = self.atom()?;
        while self.peek() == Some(b'^') {
            self.pos += 1;
            let set = self.finite_set()?;
            term = FunctorTerm::exponent(term, set);
        }
        Ok(term)
    }

    fn atom(&mut self) -> Result<FunctorTerm, ParseError> {
        match self.peek() {
            Some(b'X') => {
                self.pos += 1;
                Ok(FunctorTerm::Var)
            }
            Some(b'N') => {
                self.pos += 1;
                Ok(FunctorTerm::Const(ConstSet::Naturals))
            }
            Some(b'(') => {
                self.pos += 1;
                let t = self.sum()?;
                self.expect(b')')?;
                Ok(t)
            }
            Some(b'{') | Some(b'0'..=b'9') => Ok(FunctorTerm::Const(ConstSet::Finite(
                self.finite_set()?,
            ))),
            Some(c) => Err(self.error(format!("unexpected `{}`", c as char))),
            None => Err(self.error("unexpected end of functor term")),
        }
    }

    fn finite_set(&mut self) -> Result<FiniteSet, ParseError> {
        let at = self.pos;
        match self.peek() {
            Some(b'{') => {
                self.pos += 1;
                let mut names = Vec::new();
                if self.peek() != Some(b'}') {
                    loop {
                        self.skip_ws();
                        let name_at = self.pos;
                        let name = self.word(|c| c.is_ascii_alphanumeric() || c == b'_');
                        if !is_identifier(&name) {
                            return Err(ParseError::new(
                                1,
                                name_at + 1,
                                format!("invalid element name `{name}`"),
                            ));
                        }
                        names.push(name);
                        if self.peek() == Some(b',') {
                            self.pos += 1;
                        } else {
                            break;
                        }
                    }
                }
                self.expect(b'}')?;
                FiniteSet::new(names).map_err(|e| ParseError::new(1, at + 1, e))
            }
            Some(b'0'..=b'9') => {
                let digits = self.word(|c| c.is_ascii_digit());
                let k: usize = digits
                    .parse()
                    .map_err(|_| ParseError::new(1, at + 1, "set size out of range"))?;
                FiniteSet::range(k).map_err(|e| ParseError::new(1, at + 1, e))
            }
            _ => Err(self.error("expected a finite set `{...}` or a natural number")),
        }
    }
}

/// Index of a label slot in the flattened label alphabet of a term.
pub type SlotId = u32;

/// Index of a sort (layer) produced by desorting.
pub type SortId = u32;

/// Payload carried by the labels of a slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PayloadKind {
    /// Powerset and identity: the label set is a singleton.
    Unit,
    /// Bag: multiplicities.
    Nat,
    /// Monoid-valued and distribution functors.
    Monoid(MonoidId),
}

/// A basic functor with a nontrivial label set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BasicKind {
    Powerset,
    Bag,
    Dist,
    Monoid(MonoidId),
}

impl BasicKind {
    pub fn payload(self) -> PayloadKind {
        match self {
            BasicKind::Powerset => PayloadKind::Unit,
            BasicKind::Bag => PayloadKind::Nat,
            BasicKind::Dist => PayloadKind::Monoid(MonoidId::RatAdd),
            BasicKind::Monoid(m) => PayloadKind::Monoid(m),
        }
    }
}

/// What the argument of a basic functor refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Child {
    /// Successors are states of the system itself.
    Var,
    /// Successors are intermediate states of the given sort.
    Sort(SortId),
}

/// One layer of a (possibly composite) functor, with every position that
/// produces edges assigned a slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayoutNode {
    /// A bare `X`: exactly one edge.
    Var { slot: SlotId },
    Const(ConstSet),
    Basic {
        slot: SlotId,
        kind: BasicKind,
        child: Child,
    },
    Sum(Box<LayoutNode>, Box<LayoutNode>),
    Product(Box<LayoutNode>, Box<LayoutNode>),
    Exponent(Vec<LayoutNode>),
}

impl LayoutNode {
    /// Slots occurring in this node (contiguous, including nested sorts).
    pub fn slot_range(&self) -> std::ops::Range<SlotId> {
        let (lo, hi) = self.slot_bounds();
        lo..hi
    }

    fn slot_bounds(&self) -> (SlotId, SlotId) {
        match self {
            LayoutNode::Var { slot } => (*slot, slot + 1),
            LayoutNode::Basic { slot, .. } => (*slot, slot + 1),
            LayoutNode::Const(_) => (SlotId::MAX, SlotId::MAX),
            LayoutNode::Sum(l, r) | LayoutNode::Product(l, r) => {
                merge_bounds(l.slot_bounds(), r.slot_bounds())
            }
            LayoutNode::Exponent(children) => children
                .iter()
                .map(LayoutNode::slot_bounds)
                .fold((SlotId::MAX, SlotId::MAX), merge_bounds),
        }
    }
}

fn merge_bounds(a: (SlotId, SlotId), b: (SlotId, SlotId)) -> (SlotId, SlotId) {
    match (a.0 == SlotId::MAX, b.0 == SlotId::MAX) {
        (true, _) => b,
        (_, true) => a,
        _ => (a.0.min(b.0), a.1.max(b.1)),
    }
}

/// One step of a slot path from the root of the term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PathStep {
    Left,
    Right,
    Position(u32),
    /// Into the argument of a basic functor (a new sort).
    Inner,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotInfo {
    pub slot: SlotId,
    pub sort: SortId,
    pub path: Vec<PathStep>,
    pub payload: PayloadKind,
}

/// Flattened label alphabet of a term.
///
/// Every sort gets its own layer tree; slot ids are assigned in preorder,
/// which makes the slots below any node a contiguous range, so the tagged
/// union `A1 + A2` of a product or sum is a pair of adjacent ranges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelLayout {
    sorts: Vec<LayoutNode>,
    slots: Vec<SlotInfo>,
}

impl LabelLayout {
    pub fn sorts(&self) -> &[LayoutNode] {
        &self.sorts
    }

    pub fn sort(&self, id: SortId) -> &LayoutNode {
        &self.sorts[id as usize]
    }

    pub fn slots(&self) -> &[SlotInfo] {
        &self.slots
    }

    pub fn slot(&self, id: SlotId) -> &SlotInfo {
        &self.slots[id as usize]
    }
}

/// Computes the label layout of a term, desorting nested basic functors.
pub fn label_layout(term: &FunctorTerm) -> LabelLayout {
    let mut builder = LayoutBuilder {
        sorts: Vec::new(),
        slots: Vec::new(),
    };
    builder.sort(term, Vec::new());
    LabelLayout {
        sorts: builder
            .sorts
            .into_iter()
            .map(|s| s.expect("every sort is built"))
            .collect(),
        slots: builder.slots,
    }
}

struct LayoutBuilder {
    sorts: Vec<Option<LayoutNode>>,
    slots: Vec<SlotInfo>,
}

impl LayoutBuilder {
    fn sort(&mut self, term: &FunctorTerm, path: Vec<PathStep>) -> SortId {
        let id = self.sorts.len() as SortId;
        self.sorts.push(None);
        let node = self.node(term, id, path);
        self.sorts[id as usize] = Some(node);
        id
    }

    fn new_slot(&mut self, sort: SortId, path: Vec<PathStep>, payload: PayloadKind) -> SlotId {
        let slot = self.slots.len() as SlotId;
        self.slots.push(SlotInfo {
            slot,
            sort,
            path,
            payload,
        });
        slot
    }

    fn basic(
        &mut self,
        kind: BasicKind,
        inner: &FunctorTerm,
        sort: SortId,
        path: Vec<PathStep>,
    ) -> LayoutNode {
        let slot = self.new_slot(sort, path.clone(), kind.payload());
        let child = match inner {
            FunctorTerm::Var => Child::Var,
            other => {
                let mut inner_path = path;
                inner_path.push(PathStep::Inner);
                Child::Sort(self.sort(other, inner_path))
            }
        };
        LayoutNode::Basic { slot, kind, child }
    }

    fn node(&mut self, term: &FunctorTerm, sort: SortId, path: Vec<PathStep>) -> LayoutNode {
        let step = |p: &Vec<PathStep>, s: PathStep| {
            let mut p = p.clone();
            p.push(s);
            p
        };
        match term {
            FunctorTerm::Var => LayoutNode::Var {
                slot: self.new_slot(sort, path, PayloadKind::Unit),
            },
            FunctorTerm::Const(c) => LayoutNode::Const(c.clone()),
            FunctorTerm::Powerset(t) => self.basic(BasicKind::Powerset, t, sort, path),
            FunctorTerm::Bag(t) => self.basic(BasicKind::Bag, t, sort, path),
            FunctorTerm::Dist(t) => self.basic(BasicKind::Dist, t, sort, path),
            FunctorTerm::MonoidValued(m, t) => self.basic(BasicKind::Monoid(*m), t, sort, path),
            FunctorTerm::Sum(l, r) => {
                let l = self.node(l, sort, step(&path, PathStep::Left));
                let r = self.node(r, sort, step(&path, PathStep::Right));
                LayoutNode::Sum(Box::new(l), Box::new(r))
            }
            FunctorTerm::Product(l, r) => {
                let l = self.node(l, sort, step(&path, PathStep::Left));
                let r = self.node(r, sort, step(&path, PathStep::Right));
                LayoutNode::Product(Box::new(l), Box::new(r))
            }
            FunctorTerm::Exponent(t, set) => LayoutNode::Exponent(
                (0..set.len())
                    .map(|i| self.node(t, sort, step(&path, PathStep::Position(i as u32))))
                    .collect(),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(s: &str) -> FunctorTerm {
        parse_functor(s).unwrap_or_else(|e| panic!("{s}: {e}"))
    }

    #[test]
    fn markov_chain_term() {
        assert_eq!(parse("DX"), FunctorTerm::dist(FunctorTerm::Var));
    }

    #[test]
    fn dfa_term() {
        let expected = FunctorTerm::product(
            FunctorTerm::finite(&["f", "n"]),
            FunctorTerm::exponent(
                FunctorTerm::Var,
                FiniteSet::new(vec!["a".into(), "b".into()]).unwrap(),
            ),
        );
        assert_eq!(parse("{f,n} x X^{a,b}"), expected);
    }

    #[test]
    fn identity_term() {
        assert_eq!(parse("X"), FunctorTerm::Var);
    }

    #[test]
    fn monoid_with_numeric_sets() {
        let t = parse("(Z,+)^(4 x X^3)");
        let expected = FunctorTerm::monoid(
            MonoidId::IntAdd,
            FunctorTerm::product(
                FunctorTerm::Const(ConstSet::Finite(FiniteSet::range(4).unwrap())),
                FunctorTerm::exponent(FunctorTerm::Var, FiniteSet::range(3).unwrap()),
            ),
        );
        assert_eq!(t, expected);
        assert_eq!(parse(&t.to_string()), t);
    }

    #[test]
    fn precedence_and_associativity() {
        let t = parse("P X + B X x D X + X");
        let expected = FunctorTerm::sum(
            FunctorTerm::powerset(FunctorTerm::Var),
            FunctorTerm::sum(
                FunctorTerm::product(
                    FunctorTerm::bag(FunctorTerm::Var),
                    FunctorTerm::dist(FunctorTerm::Var),
                ),
                FunctorTerm::Var,
            ),
        );
        assert_eq!(t, expected);
        // postfix binds tighter than the prefix functors
        assert_eq!(
            parse("P X^2"),
            FunctorTerm::powerset(FunctorTerm::exponent(
                FunctorTerm::Var,
                FiniteSet::range(2).unwrap()
            ))
        );
        assert_eq!(
            parse("(P X)^2"),
            FunctorTerm::exponent(
                FunctorTerm::powerset(FunctorTerm::Var),
                FiniteSet::range(2).unwrap()
            )
        );
    }

    #[test]
    fn all_monoid_names() {
        for m in MonoidId::ALL {
            let text = format!("{}^(X)", m.spelling());
            assert_eq!(parse(&text), FunctorTerm::monoid(m, FunctorTerm::Var));
        }
        assert_eq!(
            parse("N x (N,max)^(X)"),
            FunctorTerm::product(
                FunctorTerm::Const(ConstSet::Naturals),
                FunctorTerm::monoid(MonoidId::NatMax, FunctorTerm::Var)
            )
        );
    }

    #[test]
    fn errors() {
        let e = parse_functor("(Q,+)^(X)").unwrap_err();
        assert!(e.message.contains("unknown monoid"), "{e}");
        let e = parse_functor("X^{}").unwrap_err();
        assert!(e.message.contains("empty finite set"), "{e}");
        let e = parse_functor("X^0").unwrap_err();
        assert!(e.message.contains("empty finite set"), "{e}");
        let e = parse_functor("{a,a}").unwrap_err();
        assert!(e.message.contains("duplicate"), "{e}");
        let e = parse_functor("{1a}").unwrap_err();
        assert!(e.message.contains("invalid element name"), "{e}");
        let e = parse_functor("P X )").unwrap_err();
        assert_eq!(e.column, 5);
        assert!(parse_functor("").is_err());
        assert!(parse_functor("X +").is_err());
    }

    #[test]
    fn layout_of_identity() {
        let layout = label_layout(&FunctorTerm::Var);
        assert_eq!(layout.slots().len(), 1);
        assert_eq!(layout.slots()[0].payload, PayloadKind::Unit);
        assert_eq!(layout.sorts().len(), 1);
    }

    #[test]
    fn layout_of_powerset() {
        let layout = label_layout(&parse("P X"));
        assert_eq!(layout.slots().len(), 1);
        assert_eq!(layout.slots()[0].payload, PayloadKind::Unit);
        assert!(layout.slots()[0].path.is_empty());
    }

    #[test]
    fn layout_of_product() {
        let layout = label_layout(&parse("D X x B X"));
        let slots = layout.slots();
        assert_eq!(slots.len(), 2);
        assert_eq!(slots[0].path, vec![PathStep::Left]);
        assert_eq!(slots[0].payload, PayloadKind::Monoid(MonoidId::RatAdd));
        assert_eq!(slots[1].path, vec![PathStep::Right]);
        assert_eq!(slots[1].payload, PayloadKind::Nat);
    }

    #[test]
    fn layout_desorts_nested_basic_functors() {
        let layout = label_layout(&parse("N x (N,max)^(4 x X^3)"));
        assert_eq!(layout.sorts().len(), 2);
        // one monoid slot at the root, three identity slots in the inner sort
        assert_eq!(layout.slots().len(), 4);
        assert_eq!(layout.slots()[0].sort, 0);
        assert!(layout.slots()[1..].iter().all(|s| s.sort == 1));
        match layout.sort(0) {
            LayoutNode::Product(_, r) => match **r {
                LayoutNode::Basic { child, .. } => assert_eq!(child, Child::Sort(1)),
                ref other => panic!("{other:?}"),
            },
            other => panic!("{other:?}"),
        }
    }

    pub(crate) fn arb_term() -> impl Strategy<Value = FunctorTerm> {
        let name = prop::sample::select(vec!["a", "b", "c", "f", "n", "_x1", "Yes"]);
        let finite = prop_oneof![
            (1usize..5).prop_map(|k| FiniteSet::range(k).unwrap()),
            prop::collection::btree_set(name, 1..4).prop_map(|s| FiniteSet::new(
                s.into_iter().map(String::from).collect()
            )
            .unwrap()),
        ];
        let leaf = prop_oneof![
            Just(FunctorTerm::Var),
            Just(FunctorTerm::Const(ConstSet::Naturals)),
            finite.clone().prop_map(|s| FunctorTerm::Const(ConstSet::Finite(s))),
        ];
        leaf.prop_recursive(4, 24, 2, move |inner| {
            prop_oneof![
                inner.clone().prop_map(FunctorTerm::powerset),
                inner.clone().prop_map(FunctorTerm::bag),
                inner.clone().prop_map(FunctorTerm::dist),
                (prop::sample::select(MonoidId::ALL.to_vec()), inner.clone())
                    .prop_map(|(m, t)| FunctorTerm::monoid(m, t)),
                (inner.clone(), inner.clone()).prop_map(|(l, r)| FunctorTerm::sum(l, r)),
                (inner.clone(), inner.clone()).prop_map(|(l, r)| FunctorTerm::product(l, r)),
                (inner, finite.clone()).prop_map(|(t, s)| FunctorTerm::exponent(t, s)),
            ]
        })
    }

    fn slot_paths_distinct(layout: &LabelLayout) -> bool {
        let mut seen = std::collections::HashSet::new();
        layout.slots().iter().all(|s| seen.insert((s.sort, s.path.clone())))
    }

    proptest! {
        #[test]
        fn pretty_print_round_trips(t in arb_term()) {
            prop_assert!(t.depth() <= 5);
            let printed = t.to_string();
            let reparsed = parse_functor(&printed).map_err(|e| TestCaseError::fail(format!("{printed}: {e}")))?;
            prop_assert_eq!(&reparsed, &t);
            prop_assert_eq!(label_layout(&reparsed), label_layout(&t));
        }

        #[test]
        fn slot_paths_are_injective(t in arb_term()) {
            let layout = label_layout(&t);
            prop_assert!(slot_paths_distinct(&layout));
            for (i, s) in layout.slots().iter().enumerate() {
                prop_assert_eq!(s.slot as usize, i);
            }
        }
    }
}
