//! Exact arithmetic for edge weights and monoid elements.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, One, Signed, Zero};

use crate::error::SignatureError;
use crate::functor::{MonoidId, PayloadKind};

/// An element of one of the supported monoids, or a bag multiplicity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Weight {
    /// Bag multiplicity in `(N,+)`.
    Count(u64),
    Int(i64),
    Rat(BigRational),
    Complex(BigRational, BigRational),
    Word(u64),
    Max(u64),
}

impl Weight {
    pub fn zero(kind: PayloadKind) -> Weight {
        match kind {
            PayloadKind::Unit | PayloadKind::Nat => Weight::Count(0),
            PayloadKind::Monoid(m) => Weight::monoid_zero(m),
        }
    }

    pub fn monoid_zero(m: MonoidId) -> Weight {
        match m {
            MonoidId::IntAdd => Weight::Int(0),
            MonoidId::RatAdd => Weight::Rat(BigRational::zero()),
            MonoidId::ComplexRatAdd => Weight::Complex(BigRational::zero(), BigRational::zero()),
            MonoidId::Word64Or => Weight::Word(0),
            MonoidId::NatMax => Weight::Max(0),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Weight::Count(v) | Weight::Word(v) | Weight::Max(v) => *v == 0,
            Weight::Int(v) => *v == 0,
            Weight::Rat(r) => r.is_zero(),
            Weight::Complex(re, im) => re.is_zero() && im.is_zero(),
        }
    }

    /// Monoid addition. Both operands must come from the same monoid.
    pub fn add(&self, other: &Weight) -> Result<Weight, SignatureError> {
        Ok(match (self, other) {
            (Weight::Count(a), Weight::Count(b)) => {
                Weight::Count(a.checked_add(*b).ok_or(SignatureError::BagOverflow)?)
            }
            (Weight::Int(a), Weight::Int(b)) => Weight::Int(
                a.checked_add(*b)
                    .ok_or(SignatureError::Overflow(MonoidId::IntAdd))?,
            ),
            (Weight::Rat(a), Weight::Rat(b)) => Weight::Rat(a + b),
            (Weight::Complex(a, b), Weight::Complex(c, d)) => Weight::Complex(a + c, b + d),
            (Weight::Word(a), Weight::Word(b)) => Weight::Word(a | b),
            (Weight::Max(a), Weight::Max(b)) => Weight::Max(*a.max(b)),
            _ => return Err(SignatureError::Shape("weights from different monoids")),
        })
    }

    pub fn add_assign(&mut self, other: &Weight) -> Result<(), SignatureError> {
        // in-place fast paths for the word-sized monoids
        match (&mut *self, other) {
            (Weight::Count(a), Weight::Count(b)) => {
                *a = a.checked_add(*b).ok_or(SignatureError::BagOverflow)?;
            }
            (Weight::Word(a), Weight::Word(b)) => *a |= *b,
            (Weight::Max(a), Weight::Max(b)) => *a = (*a).max(*b),
            _ => *self = self.add(other)?,
        }
        Ok(())
    }

    /// Whether the weight belongs to the payload kind.
    pub fn fits(&self, kind: PayloadKind) -> bool {
        matches!(
            (self, kind),
            (Weight::Count(_), PayloadKind::Nat)
                | (Weight::Int(_), PayloadKind::Monoid(MonoidId::IntAdd))
                | (Weight::Rat(_), PayloadKind::Monoid(MonoidId::RatAdd))
                | (Weight::Complex(..), PayloadKind::Monoid(MonoidId::ComplexRatAdd))
                | (Weight::Word(_), PayloadKind::Monoid(MonoidId::Word64Or))
                | (Weight::Max(_), PayloadKind::Monoid(MonoidId::NatMax))
        )
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Weight::Count(v) | Weight::Word(v) | Weight::Max(v) => write!(f, "{v}"),
            Weight::Int(v) => write!(f, "{v}"),
            Weight::Rat(r) => write_rational(f, r),
            Weight::Complex(re, im) => {
                f.write_str("(")?;
                write_rational(f, re)?;
                f.write_str(", ")?;
                write_rational(f, im)?;
                f.write_str(")")
            }
        }
    }
}

fn write_rational(f: &mut fmt::Formatter<'_>, r: &BigRational) -> fmt::Result {
    if r.denom().is_one() {
        write!(f, "{}", r.numer())
    } else {
        write!(f, "{}/{}", r.numer(), r.denom())
    }
}

/// Parses a rational written as an integer, a decimal `-1.25` or a
/// fraction `3/4`.
pub fn parse_rational(text: &str) -> Result<BigRational, String> {
    let bad = || format!("`{text}` is not a rational number");
    if let Some((num, den)) = text.split_once('/') {
        let num = parse_bigint(num).ok_or_else(bad)?;
        let den = parse_bigint(den).ok_or_else(bad)?;
        if den.is_zero() {
            return Err(format!("zero denominator in `{text}`"));
        }
        return Ok(BigRational::new(num, den));
    }
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty()
        || !int.bytes().all(|b| b.is_ascii_digit())
        || !frac.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(bad());
    }
    let digits = format!("{int}{frac}");
    let mut numer = BigInt::from_str_radix(if digits.is_empty() { "0" } else { &digits }, 10)
        .map_err(|_| bad())?;
    if negative {
        numer = -numer;
    }
    let denom = BigInt::from(10u32).pow(frac.len() as u32);
    Ok(BigRational::new(numer, denom))
}

fn parse_bigint(text: &str) -> Option<BigInt> {
    let text = text.trim();
    let digits = text.strip_prefix('-').unwrap_or(text);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    BigInt::from_str_radix(text, 10).ok()
}

pub(crate) fn parse_u64(text: &str) -> Result<u64, String> {
    let parsed = match text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => text.parse::<u64>(),
    };
    parsed.map_err(|_| format!("`{text}` is not a 64-bit natural number"))
}

/// Parses a scalar weight for the given payload kind. Complex weights with
/// a nonzero imaginary part are written as a pair and handled by the caller.
pub fn parse_weight(kind: PayloadKind, text: &str) -> Result<Weight, String> {
    match kind {
        PayloadKind::Unit => Err("this functor carries no weights".to_string()),
        PayloadKind::Nat => text
            .parse::<u64>()
            .map(Weight::Count)
            .map_err(|_| format!("`{text}` is not a multiplicity")),
        PayloadKind::Monoid(MonoidId::IntAdd) => text
            .parse::<i64>()
            .map(Weight::Int)
            .map_err(|_| format!("`{text}` is not a 64-bit integer")),
        PayloadKind::Monoid(MonoidId::RatAdd) => parse_rational(text).map(Weight::Rat),
        PayloadKind::Monoid(MonoidId::ComplexRatAdd) => {
            parse_rational(text).map(|re| Weight::Complex(re, BigRational::zero()))
        }
        PayloadKind::Monoid(MonoidId::Word64Or) => parse_u64(text).map(Weight::Word),
        PayloadKind::Monoid(MonoidId::NatMax) => parse_u64(text).map(Weight::Max),
    }
}

pub(crate) fn is_probability(r: &BigRational) -> bool {
    !r.is_negative() && *r <= BigRational::one()
}
