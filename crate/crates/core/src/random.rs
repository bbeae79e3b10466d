//! Seeded generators for structures and formulas, used by property tests,
//! the acceptance suite and `find-c`'s sampling fallback.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::kripke::{KripkeBuilder, KripkeStructure, PointedStructure, Signature, WorldId};
use crate::syntax::Formula;

/// Size parameters for [`random_structure`].
#[derive(Debug, Clone, Copy)]
pub struct StructureShape {
    pub min_worlds: usize,
    pub max_worlds: usize,
    /// Probability of each possible edge, per agent.
    pub edge_probability: f64,
    /// Probability of each proposition holding at each world.
    pub prop_probability: f64,
}

impl Default for StructureShape {
    fn default() -> Self {
        StructureShape {
            min_worlds: 1,
            max_worlds: 6,
            edge_probability: 0.3,
            prop_probability: 0.5,
        }
    }
}

pub fn random_structure<R: Rng>(rng: &mut R, sig: &Signature, shape: StructureShape) -> KripkeStructure {
    let n = rng.gen_range(shape.min_worlds.max(1)..=shape.max_worlds.max(shape.min_worlds.max(1)));
    let mut b = KripkeBuilder::new(sig.clone(), n);
    for agent in 0..sig.agents().len() {
        for u in 0..n {
            for v in 0..n {
                if rng.gen_bool(shape.edge_probability) {
                    b.edge_by_index(agent, WorldId(u), WorldId(v)).unwrap();
                }
            }
        }
    }
    for prop in 0..sig.props().len() {
        for u in 0..n {
            if rng.gen_bool(shape.prop_probability) {
                b.set_label(prop, WorldId(u), true).unwrap();
            }
        }
    }
    b.build().expect("at least one world")
}

pub fn random_pointed<R: Rng>(rng: &mut R, sig: &Signature, shape: StructureShape) -> PointedStructure {
    let m = random_structure(rng, sig, shape);
    let w = WorldId(rng.gen_range(0..m.world_count()));
    m.pointed(w).unwrap()
}

/// A random signature with `1..=max_agents` agents and `0..=max_props` props.
pub fn random_signature<R: Rng>(rng: &mut R, max_agents: usize, max_props: usize) -> Signature {
    let agents = rng.gen_range(1..=max_agents.max(1));
    let props = rng.gen_range(0..=max_props);
    Signature::new(
        ["a", "b", "c", "d"].iter().take(agents).copied(),
        ["p", "q", "r", "s"].iter().take(props).copied(),
    )
    .unwrap()
}

/// Size parameters for [`random_formula`].
#[derive(Debug, Clone, Copy)]
pub struct FormulaShape {
    /// Maximal syntax-tree depth.
    pub max_depth: usize,
    /// Grades are drawn from `1..=max_grade`.
    pub max_grade: usize,
    /// Maximal modal nesting depth.
    pub modal_budget: usize,
}

pub fn random_formula<R: Rng>(rng: &mut R, sig: &Signature, shape: FormulaShape) -> Formula {
    gen(rng, sig, shape.max_depth, shape.max_grade.max(1), shape.modal_budget)
}

fn gen<R: Rng>(rng: &mut R, sig: &Signature, depth: usize, max_grade: usize, modal: usize) -> Formula {
    let leaf = |rng: &mut R| {
        let roll = rng.gen_range(0..10);
        if roll == 0 || sig.props().is_empty() && roll < 5 {
            Formula::Top
        } else if roll == 1 {
            Formula::Bot
        } else if let Some(p) = sig.props().choose(rng) {
            Formula::prop(p.clone())
        } else {
            Formula::Top
        }
    };
    if depth == 0 {
        return leaf(rng);
    }
    let can_modal = modal > 0 && !sig.agents().is_empty();
    match rng.gen_range(0..10) {
        0 | 1 => leaf(rng),
        2 => Formula::not(gen(rng, sig, depth - 1, max_grade, modal)),
        3 | 4 => Formula::and(
            gen(rng, sig, depth - 1, max_grade, modal),
            gen(rng, sig, depth - 1, max_grade, modal),
        ),
        5 => Formula::or(
            gen(rng, sig, depth - 1, max_grade, modal),
            gen(rng, sig, depth - 1, max_grade, modal),
        ),
        _ if can_modal => {
            let agent = sig.agents().choose(rng).unwrap().clone();
            let grade = rng.gen_range(1..=max_grade);
            Formula::diamond(agent, grade, gen(rng, sig, depth - 1, max_grade, modal - 1))
        }
        _ => Formula::not(gen(rng, sig, depth - 1, max_grade, modal)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kripke::fixtures::sig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_are_respected() {
        let s = sig(&["a", "b"], &["p", "q"]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let m = random_structure(&mut rng, &s, StructureShape::default());
            assert!((1..=6).contains(&m.world_count()));
            let f = random_formula(
                &mut rng,
                &s,
                FormulaShape { max_depth: 5, max_grade: 2, modal_budget: 2 },
            );
            assert!(f.nd() <= 2 && f.crk() <= 2);
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let s = sig(&["a"], &["p"]);
        let a = random_structure(&mut ChaCha8Rng::seed_from_u64(9), &s, StructureShape::default());
        let b = random_structure(&mut ChaCha8Rng::seed_from_u64(9), &s, StructureShape::default());
        assert_eq!(a, b);
    }
}
