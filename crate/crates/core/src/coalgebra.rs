//! Coalgebra files: nested values per state, parsed against a functor term.
//!
//! An input file has the functor term on its first nonblank line and one
//! `name: value` line per state. Value syntax follows the term:
//!
//! | term        | value                                   |
//! |-------------|-----------------------------------------|
//! | `X`         | a state name                            |
//! | `{a,b}`, `k`| an element name                         |
//! | `N`         | a natural number                        |
//! | `P T`       | `{v, ...}`                              |
//! | `B T`       | `{v: 3, ...}`                           |
//! | `D T`       | `{v: 0.5, ...}` (weights sum to 1)      |
//! | `M^(T)`     | `{v: w, ...}`                           |
//! | `T + T`     | `inl v` or `inr v`                      |
//! | `T x T x T` | `(v, v, v)`                             |
//! | `T^{a,b}`   | `{a: v, b: v}`                          |

use std::collections::HashMap;
use std::fmt::Write as _;

use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::ParseError;
use crate::functor::{parse_functor, ConstSet, FunctorTerm, MonoidId, PayloadKind};
use crate::weight::{self, Weight};

/// Dense state index.
pub type StateId = u32;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstValue {
    /// Index into a finite set.
    Elem(u32),
    Nat(u64),
}

/// An element of `F S` for the functor of the file.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    State(StateId),
    Const(ConstValue),
    Set(Vec<Value>),
    Weighted(Vec<(Value, Weight)>),
    /// `0` for the left summand, `1` for the right.
    Inj(u8, Box<Value>),
    /// Binary for products, one entry per exponent name for exponents.
    Tuple(Vec<Value>),
}

impl Value {
    /// Sorts sets and maps so that equal elements of `F S` compare equal.
    pub fn canonical(&self) -> Value {
        match self {
            Value::State(_) | Value::Const(_) => self.clone(),
            Value::Set(items) => {
                let mut items: Vec<Value> = items.iter().map(Value::canonical).collect();
                items.sort();
                Value::Set(items)
            }
            Value::Weighted(entries) => {
                let mut entries: Vec<(Value, Weight)> = entries
                    .iter()
                    .map(|(k, w)| (k.canonical(), w.clone()))
                    .collect();
                entries.sort();
                Value::Weighted(entries)
            }
            Value::Inj(tag, v) => Value::Inj(*tag, Box::new(v.canonical())),
            Value::Tuple(items) => Value::Tuple(items.iter().map(Value::canonical).collect()),
        }
    }
}

/// A parsed coalgebra before desorting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NestedCoalgebra {
    pub term: FunctorTerm,
    pub names: Vec<String>,
    pub values: Vec<Value>,
}

impl NestedCoalgebra {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Creates a coalgebra with states named `s0`, `s1`, ...
    pub fn with_default_names(term: FunctorTerm, values: Vec<Value>) -> Self {
        let names = (0..values.len()).map(|i| format!("s{i}")).collect();
        NestedCoalgebra {
            term,
            names,
            values,
        }
    }
}

/// Parses a whole input file: functor term line followed by state lines.
pub fn parse_file(text: &str) -> Result<NestedCoalgebra, ParseError> {
    let mut lines = text.lines().enumerate();
    let term = loop {
        match lines.next() {
            Some((_, line)) if line.trim().is_empty() => continue,
            Some((i, line)) => {
                let term = parse_functor(line).map_err(|mut e| {
                    e.line = i + 1;
                    e
                })?;
                break term;
            }
            None => return Err(ParseError::new(1, 1, "missing functor term")),
        }
    };
    let body: Vec<(usize, &str)> = lines.map(|(i, l)| (i + 1, l)).collect();
    parse_coalgebra(term, &body)
}

/// Parses `name: value` lines (with their 1-based line numbers) against a
/// functor term. Blank lines and lines starting with `#` are ignored.
pub fn parse_coalgebra(
    term: FunctorTerm,
    lines: &[(usize, &str)],
) -> Result<NestedCoalgebra, ParseError> {
    let mut names = Vec::new();
    let mut index: HashMap<String, StateId> = HashMap::new();
    let mut bodies = Vec::new();
    for &(line_no, line) in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((name, rest)) = line.split_once(':') else {
            return Err(ParseError::new(line_no, 1, "expected `state: value`"));
        };
        let name = name.trim();
        if name.is_empty() || !name.bytes().all(is_name_byte) {
            return Err(ParseError::new(
                line_no,
                1,
                format!("invalid state name `{name}`"),
            ));
        }
        if index.contains_key(name) {
            return Err(ParseError::new(
                line_no,
                1,
                format!("duplicate definition of state `{name}`"),
            ));
        }
        let id = StateId::try_from(names.len())
            .map_err(|_| ParseError::new(line_no, 1, "too many states"))?;
        index.insert(name.to_string(), id);
        names.push(name.to_string());
        let offset = line.len() - rest.len();
        bodies.push((line_no, offset, rest));
    }

    let mut values = Vec::with_capacity(bodies.len());
    for (line_no, offset, rest) in bodies {
        let mut p = ValueParser {
            src: rest.as_bytes(),
            pos: 0,
            line: line_no,
            offset,
            states: &index,
        };
        let value = p.value(&term)?;
        p.skip_ws();
        if p.pos < p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        values.push(value);
    }
    Ok(NestedCoalgebra {
        term,
        names,
        values,
    })
}

fn is_name_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Splits a right-nested product into its components.
pub(crate) fn product_chain(term: &FunctorTerm) -> Vec<&FunctorTerm> {
    let mut chain = Vec::new();
    let mut cur = term;
    while let FunctorTerm::Product(l, r) = cur {
        chain.push(&**l);
        cur = r;
    }
    chain.push(cur);
    chain
}

struct ValueParser<'a> {
    src: &'a [u8],
    pos: usize,
    line: usize,
    offset: usize,
    states: &'a HashMap<String, StateId>,
}

impl ValueParser<'_> {
    fn error(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.line, self.offset + self.pos + 1, msg)
    }

    fn error_at(&self, pos: usize, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.line, self.offset + pos + 1, msg)
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

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{}`", c as char)))
        }
    }

    fn token(&mut self, accept: impl Fn(u8) -> bool) -> (usize, &str) {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && accept(self.src[self.pos]) {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        (start, text)
    }

    fn name(&mut self) -> Result<(usize, String), ParseError> {
        let (at, name) = self.token(is_name_byte);
        if name.is_empty() {
            return Err(self.error("expected a name"));
        }
        Ok((at, name.to_string()))
    }

    /// Parses comma-separated items up to `close`, after the opening bracket.
    fn list<T>(
        &mut self,
        close: u8,
        mut item: impl FnMut(&mut Self) -> Result<T, ParseError>,
    ) -> Result<Vec<T>, ParseError> {
        let mut out = Vec::new();
        if self.eat(close) {
            return Ok(out);
        }
        loop {
            out.push(item(self)?);
            if self.eat(close) {
                return Ok(out);
            }
            self.expect(b',')?;
        }
    }

    fn value(&mut self, term: &FunctorTerm) -> Result<Value, ParseError> {
        match term {
            FunctorTerm::Var => {
                let (at, name) = self.name()?;
                self.states
                    .get(&name)
                    .map(|&s| Value::State(s))
                    .ok_or_else(|| self.error_at(at, format!("undeclared state `{name}`")))
            }
            FunctorTerm::Const(ConstSet::Naturals) => {
                let (at, text) = self.token(|b| b.is_ascii_digit());
                text.parse::<u64>()
                    .map(|v| Value::Const(ConstValue::Nat(v)))
                    .map_err(|_| self.error_at(at, "expected a natural number"))
            }
            FunctorTerm::Const(ConstSet::Finite(set)) => {
                let (at, name) = self.name()?;
                set.index_of(&name)
                    .map(|i| Value::Const(ConstValue::Elem(i as u32)))
                    .ok_or_else(|| {
                        self.error_at(at, format!("`{name}` is not an element of {set}"))
                    })
            }
            FunctorTerm::Powerset(inner) => {
                let at = self.pos;
                self.expect(b'{')?;
                let items = self.list(b'}', |p| p.value(inner))?;
                let mut seen: Vec<Value> = items.iter().map(Value::canonical).collect();
                seen.sort();
                if seen.windows(2).any(|w| w[0] == w[1]) {
                    return Err(self.error_at(at, "duplicate element in set"));
                }
                Ok(Value::Set(items))
            }
            FunctorTerm::Bag(inner) => self.weighted(inner, PayloadKind::Nat, false),
            FunctorTerm::Dist(inner) => {
                self.weighted(inner, PayloadKind::Monoid(MonoidId::RatAdd), true)
            }
            FunctorTerm::MonoidValued(m, inner) => {
                self.weighted(inner, PayloadKind::Monoid(*m), false)
            }
            FunctorTerm::Sum(l, r) => {
                let (at, kw) = self.token(|b| b.is_ascii_alphabetic());
                match kw {
                    "inl" => Ok(Value::Inj(0, Box::new(self.value(l)?))),
                    "inr" => Ok(Value::Inj(1, Box::new(self.value(r)?))),
                    _ => Err(self.error_at(at, "expected `inl` or `inr`")),
                }
            }
            FunctorTerm::Product(..) => {
                let chain = product_chain(term);
                self.expect(b'(')?;
                let mut items = Vec::with_capacity(chain.len());
                for (i, component) in chain.iter().enumerate() {
                    if i > 0 {
                        self.expect(b',')?;
                    }
                    items.push(self.value(component)?);
                }
                self.expect(b')')?;
                let mut acc = items.pop().expect("product has components");
                while let Some(v) = items.pop() {
                    acc = Value::Tuple(vec![v, acc]);
                }
                Ok(acc)
            }
            FunctorTerm::Exponent(inner, set) => {
                let at = self.pos;
                self.expect(b'{')?;
                let mut slots: Vec<Option<Value>> = vec![None; set.len()];
                self.list(b'}', |p| {
                    let (at, name) = p.name()?;
                    let i = set.index_of(&name).ok_or_else(|| {
                        p.error_at(at, format!("`{name}` is not an element of {set}"))
                    })?;
                    p.expect(b':')?;
                    let v = p.value(inner)?;
                    if slots[i].replace(v).is_some() {
                        return Err(p.error_at(at, format!("duplicate key `{name}`")));
                    }
                    Ok(())
                })?;
                let items = slots
                    .into_iter()
                    .enumerate()
                    .map(|(i, v)| {
                        v.ok_or_else(|| {
                            self.error_at(at, format!("missing key `{}`", set.names()[i]))
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Value::Tuple(items))
            }
        }
    }

    fn weighted(
        &mut self,
        inner: &FunctorTerm,
        kind: PayloadKind,
        distribution: bool,
    ) -> Result<Value, ParseError> {
        let at = self.pos;
        self.expect(b'{')?;
        let entries = self.list(b'}', |p| {
            let key = p.value(inner)?;
            p.expect(b':')?;
            let w = p.weight(kind)?;
            Ok((key, w))
        })?;
        let mut keys: Vec<Value> = entries.iter().map(|(k, _)| k.canonical()).collect();
        keys.sort();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(self.error_at(at, "duplicate key in map"));
        }
        let entries: Vec<(Value, Weight)> =
            entries.into_iter().filter(|(_, w)| !w.is_zero()).collect();
        if distribution {
            let mut total = BigRational::zero();
            for (_, w) in &entries {
                let Weight::Rat(r) = w else { unreachable!() };
                if !weight::is_probability(r) {
                    return Err(self.error_at(at, format!("probability {r} outside [0,1]")));
                }
                total += r;
            }
            if !total.is_one() {
                return Err(self.error_at(at, format!("distribution sums to {total}, not 1")));
            }
        }
        Ok(Value::Weighted(entries))
    }

    fn weight(&mut self, kind: PayloadKind) -> Result<Weight, ParseError> {
        if kind == PayloadKind::Monoid(MonoidId::ComplexRatAdd) && self.eat(b'(') {
            let re = self.rational()?;
            self.expect(b',')?;
            let im = self.rational()?;
            self.expect(b')')?;
            return Ok(Weight::Complex(re, im));
        }
        let (at, text) = self.token(is_number_byte);
        weight::parse_weight(kind, text).map_err(|e| self.error_at(at, e))
    }

    fn rational(&mut self) -> Result<BigRational, ParseError> {
        let (at, text) = self.token(is_number_byte);
        weight::parse_rational(text).map_err(|e| self.error_at(at, e))
    }
}

fn is_number_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || matches!(b, b'.' | b'/' | b'-' | b'+')
}

/// Renders a value in the input syntax of `term`.
pub fn write_value(term: &FunctorTerm, value: &Value, names: &[String]) -> String {
    let mut out = String::new();
    render(term, value, names, &mut out);
    out
}

fn render(term: &FunctorTerm, value: &Value, names: &[String], out: &mut String) {
    match (term, value) {
        (FunctorTerm::Var, Value::State(s)) => out.push_str(&names[*s as usize]),
        (FunctorTerm::Const(ConstSet::Naturals), Value::Const(ConstValue::Nat(v))) => {
            let _ = write!(out, "{v}");
        }
        (FunctorTerm::Const(ConstSet::Finite(set)), Value::Const(ConstValue::Elem(i))) => {
            out.push_str(&set.names()[*i as usize]);
        }
        (FunctorTerm::Powerset(inner), Value::Set(items)) => {
            out.push('{');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                render(inner, v, names, out);
            }
            out.push('}');
        }
        (
            FunctorTerm::Bag(inner) | FunctorTerm::Dist(inner) | FunctorTerm::MonoidValued(_, inner),
            Value::Weighted(entries),
        ) => {
            out.push('{');
            for (i, (k, w)) in entries.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                render(inner, k, names, out);
                let _ = write!(out, ": {w}");
            }
            out.push('}');
        }
        (FunctorTerm::Sum(l, r), Value::Inj(tag, v)) => {
            if *tag == 0 {
                out.push_str("inl ");
                render(l, v, names, out);
            } else {
                out.push_str("inr ");
                render(r, v, names, out);
            }
        }
        (FunctorTerm::Product(..), Value::Tuple(_)) => {
            let chain = product_chain(term);
            out.push('(');
            let mut cur = value;
            for (i, component) in chain.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                if i + 1 == chain.len() {
                    render(component, cur, names, out);
                } else {
                    let Value::Tuple(pair) = cur else {
                        panic!("value does not match product term")
                    };
                    render(component, &pair[0], names, out);
                    cur = &pair[1];
                }
            }
            out.push(')');
        }
        (FunctorTerm::Exponent(inner, set), Value::Tuple(items)) => {
            out.push('{');
            for (i, (name, v)) in set.names().iter().zip(items).enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "{name}: ");
                render(inner, v, names, out);
            }
            out.push('}');
        }
        (t, v) => panic!("value {v:?} does not match term {t}"),
    }
}

/// Renders a whole coalgebra in the input file format.
pub fn write_coalgebra(c: &NestedCoalgebra) -> String {
    let mut out = format!("{}\n\n", c.term);
    for (name, value) in c.names.iter().zip(&c.values) {
        out.push_str(name);
        out.push_str(": ");
        render(&c.term, value, &c.names, &mut out);
        out.push('\n');
    }
    out
}

/// Renders a partition of the original states as `name: block` lines, with
/// blocks renumbered in order of first occurrence.
pub fn write_partition(blocks: &[u32], names: &[String]) -> String {
    let mut renumber: HashMap<u32, u32> = HashMap::new();
    let mut out = String::new();
    for (name, b) in names.iter().zip(blocks) {
        let next = renumber.len() as u32;
        let id = *renumber.entry(*b).or_insert(next);
        let _ = writeln!(out, "{name}: {id}");
    }
    out
}

/// The Markov chain and automaton inputs used throughout the docs and tests.
pub mod examples {
    pub const MARKOV_CHAIN: &str = "DX\n\nq: {p: 0.5, r: 0.5}\np: {q: 0.4, r: 0.6}\nr: {r: 1}\n";
    pub const DFA: &str =
        "{f,n} x X^{a,b}\n\nq: (n, {a: p, b: r})\np: (n, {a: q, b: r})\nr: (f, {a: q, b: p})\n";
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rat(n: i64, d: i64) -> Weight {
        Weight::Rat(BigRational::new(n.into(), d.into()))
    }

    #[test]
    fn markov_chain() {
        let c = parse_file(examples::MARKOV_CHAIN).unwrap();
        assert_eq!(c.names, ["q", "p", "r"]);
        assert_eq!(
            c.values[0],
            Value::Weighted(vec![(Value::State(1), rat(1, 2)), (Value::State(2), rat(1, 2))])
        );
        assert_eq!(c.values[2], Value::Weighted(vec![(Value::State(2), rat(1, 1))]));
    }

    #[test]
    fn automaton() {
        let c = parse_file(examples::DFA).unwrap();
        assert_eq!(c.len(), 3);
        // r: (f, {a: q, b: p})
        assert_eq!(
            c.values[2],
            Value::Tuple(vec![
                Value::Const(ConstValue::Elem(0)),
                Value::Tuple(vec![Value::State(0), Value::State(1)])
            ])
        );
    }

    #[test]
    fn empty_set() {
        let c = parse_file("P X\ns: {}\n").unwrap();
        assert_eq!(c.values, vec![Value::Set(vec![])]);
    }

    #[test]
    fn flattened_products_and_sums() {
        let c = parse_file("2 x N x P X + X\na: inl (1, 7, {a, b})\nb: inr a\n").unwrap();
        assert_eq!(
            c.values[0],
            Value::Inj(
                0,
                Box::new(Value::Tuple(vec![
                    Value::Const(ConstValue::Elem(1)),
                    Value::Tuple(vec![
                        Value::Const(ConstValue::Nat(7)),
                        Value::Set(vec![Value::State(0), Value::State(1)])
                    ])
                ]))
            )
        );
        assert_eq!(c.values[1], Value::Inj(1, Box::new(Value::State(0))));
    }

    #[test]
    fn nested_keys() {
        let text = "N x (N,max)^(4 x X^2)\n\
                    s: (3, {(1, {0: s, 1: t}): 5, (0, {1: s, 0: s}): 2})\n\
                    t: (0, {})\n";
        let c = parse_file(text).unwrap();
        let again = parse_file(&write_coalgebra(&c)).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn complex_weights() {
        let c = parse_file("(C,+)^(X)\ns: {s: (1/2, -3), t: 2}\nt: {}\n").unwrap();
        let Value::Weighted(entries) = &c.values[0] else { panic!() };
        assert!(matches!(entries[0].1, Weight::Complex(..)));
        assert_eq!(parse_file(&write_coalgebra(&c)).unwrap(), c);
    }

    #[test]
    fn zero_weights_are_absent() {
        let c = parse_file("(Z,+)^(X)\ns: {s: 0, t: -2}\nt: {}\n").unwrap();
        assert_eq!(
            c.values[0],
            Value::Weighted(vec![(Value::State(1), Weight::Int(-2))])
        );
    }

    #[test]
    fn error_cases() {
        let cases = [
            ("P X\ns: {t}\n", "undeclared state"),
            ("P X\ns: {}\ns: {}\n", "duplicate definition"),
            ("P X\ns: (s)\n", "expected `{`"),
            ("DX\ns: {s: 0.5}\n", "sums to 1/2"),
            ("DX\ns: {s: 2, t: -1}\nt: {t: 1}\n", "outside [0,1]"),
            ("(Z,+)^(X)\ns: {s: 1.5}\n", "not a 64-bit integer"),
            ("P X\ns: {s, s}\n", "duplicate element"),
            ("B X\ns: {s: 1, s: 2}\n", "duplicate key"),
            ("X^{a,b}\ns: {a: s}\n", "missing key `b`"),
            ("{f,n}\ns: g\n", "not an element"),
            ("X + X\ns: s\n", "expected `inl` or `inr`"),
            ("P X\ns {}\n", "expected `state: value`"),
            ("P X\ns: {} x\n", "trailing"),
        ];
        for (text, needle) in cases {
            let e = parse_file(text).unwrap_err();
            assert!(e.message.contains(needle), "{text:?}: {e}");
            assert!(e.line >= 2, "{text:?}: {e}");
        }
        let e = parse_file("P X\n\ns: {}\nt: {u}\n").unwrap_err();
        assert_eq!((e.line, e.column), (4, 5));
    }

    #[test]
    fn partition_output() {
        let names: Vec<String> = ["q", "p", "r"].iter().map(|s| s.to_string()).collect();
        assert_eq!(write_partition(&[7, 7, 3], &names), "q: 0\np: 0\nr: 1\n");
        assert_eq!(write_partition(&[4], &names[..1]), "q: 0\n");
    }

    #[test]
    fn write_then_parse_is_identity() {
        for text in [examples::MARKOV_CHAIN, examples::DFA] {
            let c = parse_file(text).unwrap();
            assert_eq!(parse_file(&write_coalgebra(&c)).unwrap(), c);
        }
    }
}
