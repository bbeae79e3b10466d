//! Model checking graded modal formulas over finite structures.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::Result;
use crate::kripke::{KripkeStructure, PointedStructure, WorldId};
use crate::syntax::Formula;

/// `[[φ]]^M`: the worlds satisfying a formula.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Extension {
    members: Vec<bool>,
}

impl Extension {
    fn full(n: usize, value: bool) -> Self {
        Extension {
            members: vec![value; n],
        }
    }

    pub fn contains(&self, w: WorldId) -> bool {
        self.members[w.0]
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = WorldId> + '_ {
        self.members
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(WorldId(i)))
    }

    pub fn to_vec(&self) -> Vec<WorldId> {
        self.iter().collect()
    }

    pub fn as_bools(&self) -> &[bool] {
        &self.members
    }
}

/// Bottom-up evaluation of `φ` on every world of `m`.
///
/// Subformulas shared through `Arc` are evaluated once per call.
pub fn extension(m: &KripkeStructure, phi: &Formula) -> Result<Extension> {
    phi.check_signature(m.signature())?;
    Ok(Evaluator::new(m).eval(phi))
}

/// `M, w ⊨ φ`.
pub fn satisfies(m: &PointedStructure, phi: &Formula) -> Result<bool> {
    Ok(extension(m.structure(), phi)?.contains(m.point()))
}

/// Reusable evaluator; its memo table lives as long as the evaluator, so
/// formulas passed to it must outlive it too.
pub(crate) struct Evaluator<'m> {
    m: &'m KripkeStructure,
    memo: HashMap<*const Formula, Arc<Extension>>,
    // keeps memoized nodes alive so their addresses are not reused
    pins: Vec<Arc<Formula>>,
}

impl<'m> Evaluator<'m> {
    pub(crate) fn new(m: &'m KripkeStructure) -> Self {
        Evaluator {
            m,
            memo: HashMap::new(),
            pins: Vec::new(),
        }
    }

    pub(crate) fn eval(&mut self, phi: &Formula) -> Extension {
        let n = self.m.world_count();
        match phi {
            Formula::Top => Extension::full(n, true),
            Formula::Bot => Extension::full(n, false),
            Formula::Prop(p) => {
                let j = self
                    .m
                    .signature()
                    .prop_index(p)
                    .expect("signature checked before evaluation");
                Extension {
                    members: self.m.worlds().map(|u| self.m.holds(j, u)).collect(),
                }
            }
            Formula::Not(f) => {
                let inner = self.shared(f);
                Extension {
                    members: inner.members.iter().map(|b| !b).collect(),
                }
            }
            Formula::And(a, b) | Formula::Or(a, b) => {
                let left = self.shared(a);
                let right = self.shared(b);
                let is_and = matches!(phi, Formula::And(..));
                Extension {
                    members: left
                        .members
                        .iter()
                        .zip(&right.members)
                        .map(|(x, y)| if is_and { *x && *y } else { *x || *y })
                        .collect(),
                }
            }
            Formula::Diamond { agent, grade, body } => {
                let i = self
                    .m
                    .signature()
                    .agent_index(agent)
                    .expect("signature checked before evaluation");
                let inner = self.shared(body);
                Extension {
                    members: self
                        .m
                        .worlds()
                        .map(|u| {
                            self.m
                                .successors_of(i, u)
                                .iter()
                                .filter(|v| inner.contains(**v))
                                .count()
                                >= *grade
                        })
                        .collect(),
                }
            }
        }
    }

    pub(crate) fn shared(&mut self, f: &Arc<Formula>) -> Arc<Extension> {
        let key = Arc::as_ptr(f);
        if let Some(ext) = self.memo.get(&key) {
            return ext.clone();
        }
        let ext = Arc::new(self.eval(f));
        self.memo.insert(key, ext.clone());
        self.pins.push(f.clone());
        ext
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kripke::fixtures::{fan, loop1, sig};
    use crate::kripke::KripkeBuilder;
    use crate::random::{random_formula, random_structure, FormulaShape, StructureShape};
    use crate::syntax::parse;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ext(m: &KripkeStructure, f: &str) -> Vec<usize> {
        extension(m, &parse(f).unwrap())
            .unwrap()
            .iter()
            .map(WorldId::index)
            .collect()
    }

    #[test]
    fn fan_counts() {
        let f3 = fan(3);
        assert_eq!(ext(f3.structure(), "<a:3> true"), vec![0]);
        assert!(ext(f3.structure(), "<a:4> true").is_empty());
        assert_eq!(ext(f3.structure(), "!<a:1> true"), vec![1, 2, 3]);

        let mut b = KripkeBuilder::new(sig(&["a"], &["p"]), 3);
        b.edge("a", 0, 1).unwrap().edge("a", 0, 2).unwrap().prop("p", 1).unwrap();
        let m = b.build().unwrap();
        assert!(ext(&m, "<a:2> p").is_empty());
        assert_eq!(ext(&m, "<a:1> p"), vec![0]);
    }

    #[test]
    fn pointed_satisfaction() {
        let l = loop1();
        assert!(satisfies(&l, &parse("<a:1> true").unwrap()).unwrap());
        assert!(!satisfies(&l, &parse("<a:2> true").unwrap()).unwrap());
        assert!(satisfies(&fan(2), &Formula::Top).unwrap());
        assert!(!satisfies(&fan(2), &Formula::Bot).unwrap());
    }

    #[test]
    fn unknown_names_are_errors() {
        assert!(extension(fan(1).structure(), &parse("<b:1> true").unwrap()).is_err());
        assert!(extension(fan(1).structure(), &parse("p").unwrap()).is_err());
    }

    #[test]
    fn shared_subformulas_evaluate_consistently() {
        let body: Arc<Formula> = Arc::new(parse("<a:1> true").unwrap());
        let f = Formula::and(
            Formula::diamond("a", 1, body.clone()),
            Formula::not(Formula::diamond("a", 2, body)),
        );
        let m = crate::kripke::fixtures::chain(3);
        assert_eq!(extension(m.structure(), &f).unwrap().to_vec(), vec![WorldId(0), WorldId(1)]);
    }

    proptest! {
        #[test]
        fn grade_one_is_plain_diamond_and_grades_are_monotone(seed in any::<u64>()) {
            let s = sig(&["a", "b"], &["p", "q"]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_structure(&mut rng, &s, StructureShape::default());
            let psi = random_formula(&mut rng, &s, FormulaShape { max_depth: 3, max_grade: 3, modal_budget: 2 });
            let inner = extension(&m, &psi).unwrap();
            for agent in ["a", "b"] {
                let one = extension(&m, &Formula::diamond(agent, 1, psi.clone())).unwrap();
                for u in m.worlds() {
                    let plain = m.successors(agent, u).unwrap().iter().any(|v| inner.contains(*v));
                    prop_assert_eq!(one.contains(u), plain);
                }
                for k in 1..4 {
                    let weaker = extension(&m, &Formula::diamond(agent, k, psi.clone())).unwrap();
                    let stronger = extension(&m, &Formula::diamond(agent, k + 1, psi.clone())).unwrap();
                    for u in stronger.iter() {
                        prop_assert!(weaker.contains(u));
                    }
                }
            }
        }
    }
}
