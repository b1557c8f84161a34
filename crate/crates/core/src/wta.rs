//! Random weighted tree automata.
//!
//! An automaton over the ranked alphabet `4 x X^r` with weights in a monoid
//! `M` is a coalgebra for `M x M^(4 x X^r)`: every state carries an output
//! weight and a weight for each transition `sigma(s1, ..., sr) -> s` into
//! it. Transitions are sampled uniformly without replacement from all
//! `4 * n^(r+1)` candidates.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coalgebra::{write_coalgebra, ConstValue, NestedCoalgebra, StateId, Value};
use crate::functor::{parse_functor, MonoidId};
use crate::weight::Weight;

/// Number of input symbols.
pub const SYMBOLS: u64 = 4;
/// Transitions per state, and size of the weight alphabet.
pub const PER_STATE: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WtaMonoid {
    NatMax,
    Word64Or,
    /// The Boolean semiring, as a powerset of transitions.
    Bool,
}

impl FromStr for WtaMonoid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "natmax" | "max" | "(n,max)" => Ok(WtaMonoid::NatMax),
            "word" | "word64or" | "or" | "(p64,or)" => Ok(WtaMonoid::Word64Or),
            "bool" | "2" => Ok(WtaMonoid::Bool),
            _ => Err(format!("unknown automaton monoid `{s}` (natmax, word, bool)")),
        }
    }
}

impl fmt::Display for WtaMonoid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WtaMonoid::NatMax => "natmax",
            WtaMonoid::Word64Or => "word",
            WtaMonoid::Bool => "bool",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WtaSpec {
    pub states: usize,
    pub rank: u32,
    pub monoid: WtaMonoid,
    pub seed: u64,
}

impl WtaSpec {
    pub fn transitions(&self) -> usize {
        PER_STATE * self.states
    }

    pub fn functor(&self) -> String {
        let r = self.rank;
        match self.monoid {
            WtaMonoid::NatMax => format!("N x {}^(4 x X^{r})", MonoidId::NatMax.spelling()),
            WtaMonoid::Word64Or => format!("N x {}^(4 x X^{r})", MonoidId::Word64Or.spelling()),
            WtaMonoid::Bool => format!("2 x P(4 x X^{r})"),
        }
    }

    /// `4 * n^(r+1)`, if it fits in 64 bits.
    pub fn universe(&self) -> Option<u64> {
        let n = self.states as u64;
        (0..=self.rank).try_fold(SYMBOLS, |acc, _| acc.checked_mul(n))
    }
}

/// Draws `k` distinct indices from `0..universe` in increasing order, each
/// `k`-subset equally likely, in `O(k)` expected time and no extra memory
/// (Vitter's method D, with method A once the remaining sample is dense).
pub fn sample_sorted(k: u64, universe: u64, rng: &mut impl Rng, out: &mut impl FnMut(u64)) {
    assert!(k <= universe, "cannot draw {k} of {universe}");
    const NEG_ALPHA_INV: f64 = -13.0;
    let mut n = k;
    let mut big_n = universe;
    let mut current: i128 = -1;
    let u = |rng: &mut dyn rand::RngCore| -> f64 { rng.random::<f64>() };
    let mut select = |skip: u64, current: &mut i128| {
        *current += skip as i128 + 1;
        out(*current as u64);
    };
    if n == 0 {
        return;
    }

    let mut n_real = n as f64;
    let mut big_n_real = big_n as f64;
    let mut ninv = 1.0 / n_real;
    let mut v_prime = (u(rng).ln() * ninv).exp();
    let mut qu1 = big_n - n + 1;
    let mut qu1_real = big_n_real - n_real + 1.0;
    let mut threshold = -NEG_ALPHA_INV * n_real;

    while n > 1 && threshold < big_n_real {
        let nmin1inv = 1.0 / (n_real - 1.0);
        let s: u64;
        loop {
            let (x, s_try) = loop {
                let x = big_n_real * (1.0 - v_prime);
                let s_try = x as u64;
                if s_try < qu1 {
                    break (x, s_try);
                }
                v_prime = (u(rng).ln() * ninv).exp();
            };
            let uu = u(rng);
            let neg_s_real = -(s_try as f64);
            let y1 = ((uu * big_n_real / qu1_real).ln() * nmin1inv).exp();
            v_prime = y1 * (1.0 - x / big_n_real) * (qu1_real / (neg_s_real + qu1_real));
            if v_prime <= 1.0 {
                s = s_try;
                break;
            }
            let mut y2 = 1.0;
            let mut top = big_n_real - 1.0;
            let (mut bottom, limit) = if n - 1 > s_try {
                (big_n_real - n_real, big_n - s_try)
            } else {
                (big_n_real + neg_s_real - 1.0, qu1)
            };
            let mut t = big_n - 1;
            while t >= limit {
                y2 = y2 * top / bottom;
                top -= 1.0;
                bottom -= 1.0;
                t -= 1;
            }
            if big_n_real / (big_n_real - x) >= y1 * (y2.ln() * nmin1inv).exp() {
                v_prime = (u(rng).ln() * nmin1inv).exp();
                s = s_try;
                break;
            }
            v_prime = (u(rng).ln() * ninv).exp();
        }
        select(s, &mut current);
        big_n = big_n - 1 - s;
        big_n_real = big_n as f64;
        n -= 1;
        n_real -= 1.0;
        ninv = nmin1inv;
        qu1 -= s;
        qu1_real -= s as f64;
        threshold += NEG_ALPHA_INV;
    }

    if n > 1 {
        // method A on what is left
        let mut top = (big_n - n) as f64;
        let mut big_n_real = big_n as f64;
        while n >= 2 {
            let v = u(rng);
            let mut s = 0u64;
            let mut quot = top / big_n_real;
            while quot > v {
                s += 1;
                top -= 1.0;
                big_n_real -= 1.0;
                quot = quot * top / big_n_real;
            }
            select(s, &mut current);
            big_n_real -= 1.0;
            n -= 1;
        }
        let s = (big_n_real.round() * u(rng)) as u64;
        select(s, &mut current);
    } else {
        let s = (big_n_real * v_prime) as u64;
        select(s.min(big_n - 1), &mut current);
    }
}

fn alphabet(monoid: WtaMonoid, rng: &mut impl Rng) -> Vec<Weight> {
    match monoid {
        WtaMonoid::NatMax => (1..=PER_STATE as u64).map(Weight::Max).collect(),
        WtaMonoid::Word64Or => {
            let mut words: Vec<u64> = Vec::with_capacity(PER_STATE);
            while words.len() < PER_STATE {
                let w: u64 = rng.random();
                if w != 0 && !words.contains(&w) {
                    words.push(w);
                }
            }
            words.into_iter().map(Weight::Word).collect()
        }
        WtaMonoid::Bool => vec![],
    }
}

fn output(w: &Weight) -> Value {
    match w {
        Weight::Max(v) | Weight::Word(v) => Value::Const(ConstValue::Nat(*v)),
        _ => unreachable!("automaton outputs are naturals"),
    }
}

/// Generates the automaton as a parsed coalgebra with states `s0, s1, ...`.
pub fn generate_wta_nested(spec: &WtaSpec) -> Result<NestedCoalgebra, String> {
    if !(1..=5).contains(&spec.rank) {
        return Err(format!("rank {} outside 1..=5", spec.rank));
    }
    let n = spec.states as u64;
    let k = spec.transitions() as u64;
    let universe = spec
        .universe()
        .ok_or_else(|| format!("4 * {n}^{} transitions do not fit in 64 bits", spec.rank + 1))?;
    if k > universe {
        return Err(format!("{k} transitions requested from a universe of {universe}"));
    }
    let term = parse_functor(&spec.functor()).expect("automaton functor parses");

    let mut sampler = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut weights = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x7765_6967_6874_7321);
    let alphabet = alphabet(spec.monoid, &mut weights);
    let per_target = universe / n.max(1);
    let per_symbol = per_target / SYMBOLS;

    let mut entries: Vec<Vec<(Value, Option<Weight>)>> = vec![Vec::new(); spec.states];
    sample_sorted(k, universe, &mut sampler, &mut |index| {
        let target = index / per_target;
        let rest = index % per_target;
        let symbol = rest / per_symbol;
        let mut code = rest % per_symbol;
        let mut sources = vec![Value::State(0); spec.rank as usize];
        for slot in sources.iter_mut().rev() {
            *slot = Value::State((code % n) as StateId);
            code /= n;
        }
        let key = Value::Tuple(vec![
            Value::Const(ConstValue::Elem(symbol as u32)),
            Value::Tuple(sources),
        ]);
        let w = (!alphabet.is_empty())
            .then(|| alphabet[weights.random_range(0..alphabet.len())].clone());
        entries[target as usize].push((key, w));
    });

    let values = entries
        .into_iter()
        .map(|transitions| match spec.monoid {
            WtaMonoid::Bool => {
                let out = Value::Const(ConstValue::Elem(weights.random_range(0..2)));
                Value::Tuple(vec![
                    out,
                    Value::Set(transitions.into_iter().map(|(key, _)| key).collect()),
                ])
            }
            _ => {
                let out = output(&alphabet[weights.random_range(0..alphabet.len())]);
                Value::Tuple(vec![
                    out,
                    Value::Weighted(
                        transitions
                            .into_iter()
                            .map(|(key, w)| (key, w.expect("weighted")))
                            .collect(),
                    ),
                ])
            }
        })
        .collect();
    Ok(NestedCoalgebra::with_default_names(term, values))
}

/// Generates the automaton as an input file.
pub fn generate_wta(spec: &WtaSpec) -> Result<String, String> {
    generate_wta_nested(spec).map(|c| write_coalgebra(&c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coalgebra::parse_file;
    use crate::encode::desort;

    fn draw(k: u64, universe: u64, seed: u64) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        sample_sorted(k, universe, &mut rng, &mut |i| out.push(i));
        out
    }

    #[test]
    fn samples_are_sorted_distinct_and_complete() {
        for (k, universe) in [(0, 10), (1, 1), (5, 5), (10, 1000), (1000, 1_000_000), (500, 600), (3, u64::MAX / 2)] {
            for seed in 0..5 {
                let s = draw(k, universe, seed);
                assert_eq!(s.len() as u64, k);
                assert!(s.windows(2).all(|w| w[0] < w[1]));
                assert!(s.iter().all(|&i| i < universe));
            }
        }
    }

    #[test]
    fn inclusion_is_uniform() {
        // every candidate is drawn with probability k/N
        let (k, universe, runs) = (5u64, 20u64, 4000u64);
        let mut hits = vec![0u64; universe as usize];
        for seed in 0..runs {
            for i in draw(k, universe, seed) {
                hits[i as usize] += 1;
            }
        }
        let p = k as f64 / universe as f64;
        let mean = runs as f64 * p;
        let sigma = (runs as f64 * p * (1.0 - p)).sqrt();
        for h in hits {
            assert!((h as f64 - mean).abs() <= 5.0 * sigma, "{h} vs {mean}");
        }
        // the method D branch needs a sparse sample
        let (k, universe) = (4u64, 400u64);
        let mut hits = vec![0u64; universe as usize];
        for seed in 0..runs {
            for i in draw(k, universe, seed) {
                hits[i as usize] += 1;
            }
        }
        let p = k as f64 / universe as f64;
        let mean = runs as f64 * p;
        let sigma = (runs as f64 * p * (1.0 - p)).sqrt();
        for h in hits {
            assert!((h as f64 - mean).abs() <= 5.0 * sigma, "{h} vs {mean}");
        }
    }

    #[test]
    fn sizes_after_desorting() {
        let spec = WtaSpec {
            states: 20,
            rank: 1,
            monoid: WtaMonoid::NatMax,
            seed: 7,
        };
        let c = desort(&generate_wta_nested(&spec).unwrap()).unwrap();
        assert_eq!(c.state_count(), 1020);
        assert_eq!(c.edge_count(), 2000);
        c.validate().unwrap();
    }

    #[test]
    fn files_are_deterministic_and_parse() {
        for monoid in [WtaMonoid::NatMax, WtaMonoid::Word64Or, WtaMonoid::Bool] {
            let spec = WtaSpec {
                states: 6,
                rank: 2,
                monoid,
                seed: 11,
            };
            let a = generate_wta(&spec).unwrap();
            assert_eq!(a, generate_wta(&spec).unwrap());
            let parsed = parse_file(&a).unwrap();
            assert_eq!(parsed, generate_wta_nested(&spec).unwrap());
            let c = desort(&parsed).unwrap();
            assert_eq!(c.state_count(), 6 + 300);
            assert_eq!(c.edge_count(), 3 * 300);
        }
        let other = WtaSpec {
            states: 6,
            rank: 2,
            monoid: WtaMonoid::NatMax,
            seed: 12,
        };
        assert_ne!(
            generate_wta(&other).unwrap(),
            generate_wta(&WtaSpec { seed: 11, ..other }).unwrap()
        );
    }

    #[test]
    fn universe_limits() {
        let spec = WtaSpec {
            states: 2,
            rank: 1,
            monoid: WtaMonoid::Bool,
            seed: 0,
        };
        // 100 transitions but only 16 candidates
        assert!(generate_wta(&spec).is_err());
        assert!(generate_wta(&WtaSpec { rank: 6, ..spec }).is_err());
        assert!("(N,max)".parse::<WtaMonoid>().is_ok());
        assert!("(Z,+)".parse::<WtaMonoid>().is_err());
    }
}
