//! Small named structures used throughout tests and examples.

use super::{KripkeBuilder, PointedStructure, Signature, WorldId};

/// Signature from string slices. Panics on invalid names.
pub fn sig(agents: &[&str], props: &[&str]) -> Signature {
    Signature::new(agents.iter().copied(), props.iter().copied()).expect("valid fixture signature")
}

/// Root `0` with `k` children `1..=k` via agent `a`, no propositions.
pub fn fan(k: usize) -> PointedStructure {
    let mut b = KripkeBuilder::new(sig(&["a"], &[]), k + 1);
    for child in 1..=k {
        b.edge("a", 0, child).unwrap();
    }
    b.build().unwrap().pointed(WorldId(0)).unwrap()
}

/// A single world with an `a`-self-loop.
pub fn loop1() -> PointedStructure {
    let mut b = KripkeBuilder::new(sig(&["a"], &[]), 1);
    b.edge("a", 0, 0).unwrap();
    b.build().unwrap().pointed(WorldId(0)).unwrap()
}

/// `w0 -> w1 -> ... -> wn` via agent `a`, pointed at `w0`.
pub fn chain(n: usize) -> PointedStructure {
    let mut b = KripkeBuilder::new(sig(&["a"], &[]), n + 1);
    for i in 0..n {
        b.edge("a", i, i + 1).unwrap();
    }
    b.build().unwrap().pointed(WorldId(0)).unwrap()
}

/// Two worlds `w0 <-> w1` via agent `a`, pointed at `w0`.
pub fn two_cycle() -> PointedStructure {
    let mut b = KripkeBuilder::new(sig(&["a"], &[]), 2);
    b.edge("a", 0, 1).unwrap().edge("a", 1, 0).unwrap();
    b.build().unwrap().pointed(WorldId(0)).unwrap()
}
