//! Shared inputs for the benchmarks.

use sigrefine_core::{desort, generate_wta_nested, EncodedCoalgebra, WtaMonoid, WtaSpec};

/// A desorted random automaton with `states` states of the given rank.
pub fn wta(states: usize, rank: u32, monoid: WtaMonoid) -> EncodedCoalgebra {
    let spec = WtaSpec {
        states,
        rank,
        monoid,
        seed: 42,
    };
    desort(&generate_wta_nested(&spec).expect("valid spec")).expect("generated automata desort")
}
