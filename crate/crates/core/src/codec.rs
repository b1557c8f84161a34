//! Little-endian binary framing shared by canonical signature bytes, the
//! wire format and slice files.

use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;

use crate::coalgebra::ConstValue;
use crate::encode::{F1Value, Label, Observation, Payload};
use crate::weight::Weight;

#[derive(Default, Debug, Clone)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        ByteWriter::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        ByteWriter {
            buf: Vec::with_capacity(n),
        }
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u128(&mut self, v: u128) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn len_prefix(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("length exceeds u32"));
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.len_prefix(b.len());
        self.buf.extend_from_slice(b);
    }

    pub fn raw(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }

    fn magnitude(&mut self, m: &BigUint) {
        self.bytes(&m.to_bytes_le());
    }

    /// Sign byte (0 zero, 1 positive, 2 negative), then numerator and
    /// denominator magnitudes. Rationals are always in lowest terms.
    pub fn rational(&mut self, r: &BigRational) {
        let sign = match r.numer().sign() {
            Sign::NoSign => 0,
            Sign::Plus => 1,
            Sign::Minus => 2,
        };
        self.u8(sign);
        self.magnitude(r.numer().magnitude());
        self.magnitude(r.denom().magnitude());
    }

    pub fn weight(&mut self, w: &Weight) {
        match w {
            Weight::Count(v) => {
                self.u8(0);
                self.u64(*v);
            }
            Weight::Int(v) => {
                self.u8(1);
                self.i64(*v);
            }
            Weight::Rat(r) => {
                self.u8(2);
                self.rational(r);
            }
            Weight::Complex(re, im) => {
                self.u8(3);
                self.rational(re);
                self.rational(im);
            }
            Weight::Word(v) => {
                self.u8(4);
                self.u64(*v);
            }
            Weight::Max(v) => {
                self.u8(5);
                self.u64(*v);
            }
        }
    }

    pub fn const_value(&mut self, c: &ConstValue) {
        match c {
            ConstValue::Elem(i) => {
                self.u8(0);
                self.u32(*i);
            }
            ConstValue::Nat(v) => {
                self.u8(1);
                self.u64(*v);
            }
        }
    }

    pub fn f1(&mut self, v: &F1Value) {
        match v {
            F1Value::Unit => self.u8(0),
            F1Value::Const(c) => {
                self.u8(1);
                self.const_value(c);
            }
            F1Value::NonEmpty(b) => {
                self.u8(2);
                self.u8(*b as u8);
            }
            F1Value::Total(w) => {
                self.u8(3);
                self.weight(w);
            }
            F1Value::Inj(tag, inner) => {
                self.u8(4);
                self.u8(*tag);
                self.f1(inner);
            }
            F1Value::Tuple(items) => {
                self.u8(5);
                self.len_prefix(items.len());
                for item in items {
                    self.f1(item);
                }
            }
        }
    }

    pub fn observation(&mut self, o: &Observation) {
        self.u32(o.sort);
        self.f1(&o.value);
    }

    pub fn label(&mut self, l: &Label) {
        self.u32(l.slot);
        match &l.payload {
            Payload::Unit => self.u8(0),
            Payload::Weight(w) => {
                self.u8(1);
                self.weight(w);
            }
        }
    }
}

/// Reader over a byte slice; every getter fails on truncated input.
#[derive(Debug, Clone)]
pub struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

pub type DecodeResult<T> = Result<T, String>;

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    pub fn is_at_end(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn finish(&self) -> DecodeResult<()> {
        if self.is_at_end() {
            Ok(())
        } else {
            Err(format!("{} trailing bytes", self.buf.len() - self.pos))
        }
    }

    pub fn take(&mut self, n: usize) -> DecodeResult<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(format!("truncated input at byte {}", self.pos));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> DecodeResult<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> DecodeResult<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> DecodeResult<u32> {
        self.array().map(u32::from_le_bytes)
    }

    pub fn u64(&mut self) -> DecodeResult<u64> {
        self.array().map(u64::from_le_bytes)
    }

    pub fn i64(&mut self) -> DecodeResult<i64> {
        self.array().map(i64::from_le_bytes)
    }

    pub fn u128(&mut self) -> DecodeResult<u128> {
        self.array().map(u128::from_le_bytes)
    }

    pub fn len_prefix(&mut self) -> DecodeResult<usize> {
        let n = self.u32()? as usize;
        // a length can never exceed what is left of the input
        if n > self.buf.len() - self.pos {
            return Err(format!("length {n} exceeds remaining input"));
        }
        Ok(n)
    }

    pub fn bytes(&mut self) -> DecodeResult<&'a [u8]> {
        let n = self.len_prefix()?;
        self.take(n)
    }

    pub fn str(&mut self) -> DecodeResult<&'a str> {
        std::str::from_utf8(self.bytes()?).map_err(|e| e.to_string())
    }

    pub fn rational(&mut self) -> DecodeResult<BigRational> {
        let sign = match self.u8()? {
            0 => Sign::NoSign,
            1 => Sign::Plus,
            2 => Sign::Minus,
            other => return Err(format!("bad sign byte {other}")),
        };
        let numer = BigUint::from_bytes_le(self.bytes()?);
        let denom = BigUint::from_bytes_le(self.bytes()?);
        if denom == BigUint::from(0u8) {
            return Err("zero denominator".into());
        }
        let numer = BigInt::from_biguint(sign, numer);
        Ok(BigRational::new(numer, BigInt::from(denom)))
    }

    pub fn weight(&mut self) -> DecodeResult<Weight> {
        Ok(match self.u8()? {
            0 => Weight::Count(self.u64()?),
            1 => Weight::Int(self.i64()?),
            2 => Weight::Rat(self.rational()?),
            3 => Weight::Complex(self.rational()?, self.rational()?),
            4 => Weight::Word(self.u64()?),
            5 => Weight::Max(self.u64()?),
            other => return Err(format!("bad weight tag {other}")),
        })
    }

    pub fn const_value(&mut self) -> DecodeResult<ConstValue> {
        Ok(match self.u8()? {
            0 => ConstValue::Elem(self.u32()?),
            1 => ConstValue::Nat(self.u64()?),
            other => return Err(format!("bad constant tag {other}")),
        })
    }

    pub fn f1(&mut self) -> DecodeResult<F1Value> {
        Ok(match self.u8()? {
            0 => F1Value::Unit,
            1 => F1Value::Const(self.const_value()?),
            2 => F1Value::NonEmpty(self.u8()? != 0),
            3 => F1Value::Total(self.weight()?),
            4 => {
                let tag = self.u8()?;
                F1Value::Inj(tag, Box::new(self.f1()?))
            }
            5 => {
                let n = self.len_prefix()?;
                let mut items = Vec::with_capacity(n);
                for _ in 0..n {
                    items.push(self.f1()?);
                }
                F1Value::Tuple(items)
            }
            other => return Err(format!("bad output tag {other}")),
        })
    }

    pub fn observation(&mut self) -> DecodeResult<Observation> {
        let sort = self.u32()?;
        Ok(Observation {
            sort,
            value: self.f1()?,
        })
    }

    pub fn label(&mut self) -> DecodeResult<Label> {
        let slot = self.u32()?;
        let payload = match self.u8()? {
            0 => Payload::Unit,
            1 => Payload::Weight(self.weight()?),
            other => return Err(format!("bad payload tag {other}")),
        };
        Ok(Label { slot, payload })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_round_trip() {
        let samples = [
            Weight::Count(7),
            Weight::Int(-3),
            Weight::Rat(BigRational::new((-10).into(), 4.into())),
            Weight::Rat(BigRational::new(0.into(), 1.into())),
            Weight::Complex(
                BigRational::new(1.into(), 3.into()),
                BigRational::new(u64::MAX.into(), 7.into()),
            ),
            Weight::Word(u64::MAX),
            Weight::Max(9),
        ];
        for w in samples {
            let mut out = ByteWriter::new();
            out.weight(&w);
            let bytes = out.into_inner();
            let mut r = ByteReader::new(&bytes);
            assert_eq!(r.weight().unwrap(), w);
            r.finish().unwrap();
        }
    }

    #[test]
    fn truncation_is_detected() {
        let mut out = ByteWriter::new();
        out.f1(&F1Value::Tuple(vec![F1Value::Unit, F1Value::NonEmpty(true)]));
        let bytes = out.into_inner();
        for cut in 0..bytes.len() {
            assert!(ByteReader::new(&bytes[..cut]).f1().is_err());
        }
    }
}
