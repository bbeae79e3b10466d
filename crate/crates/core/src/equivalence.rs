//! Counting-bisimulation equivalences by counted partition refinement.
//!
//! Round `m + 1` splits a class whenever two of its worlds disagree on the
//! number of `E_i`-successors in some round-`m` class. Under a cap `c` the
//! counts are compared after truncation at `c`, which is exactly what
//! Duplicator can still answer in the `c`-graded game: Spoiler's sets have at
//! most `c` elements, so only `min(n, c)` successors of each class are ever
//! observable.

use std::collections::BTreeMap;

use serde::ser::{Serialize, SerializeStruct, Serializer};

use crate::error::{Error, Result};
use crate::kripke::{self, KripkeStructure, PointedStructure, WorldId};

/// How successor counts are compared during refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cap {
    /// Exact counts (`≃C^l` and full `≃C`).
    Exact,
    /// Counts truncated at `c` (`≃C^{c,l}`).
    At(usize),
}

impl Cap {
    fn apply(self, n: usize) -> usize {
        match self {
            Cap::Exact => n,
            Cap::At(c) => n.min(c),
        }
    }
}

impl Serialize for Cap {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Cap::Exact => s.serialize_str("exact"),
            Cap::At(c) => s.serialize_u64(*c as u64),
        }
    }
}

/// One level of a [`ColorHistory`]: every arena world belongs to exactly one class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    class_of: Vec<usize>,
    classes: Vec<Vec<WorldId>>,
}

impl Partition {
    fn from_keys<K: Ord + Clone>(keys: &[K]) -> Self {
        // canonical ids: rank of the key among the distinct keys
        let ids: BTreeMap<K, usize> = {
            let mut distinct: Vec<K> = keys.to_vec();
            distinct.sort();
            distinct.dedup();
            distinct.into_iter().enumerate().map(|(i, k)| (k, i)).collect()
        };
        let class_of: Vec<usize> = keys.iter().map(|k| ids[k]).collect();
        let mut classes = vec![Vec::new(); ids.len()];
        for (w, &c) in class_of.iter().enumerate() {
            classes[c].push(WorldId(w));
        }
        Partition { class_of, classes }
    }

    pub fn class_of(&self, w: WorldId) -> usize {
        self.class_of[w.0]
    }

    pub fn classes(&self) -> &[Vec<WorldId>] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Per-agent successor counts into the classes of one level, keyed by
/// `(agent, class)`, zero entries omitted, capped under [`Cap::At`].
pub type ClassCountVector = Vec<(usize, usize, usize)>;

/// Refinement levels over the disjoint union ("arena") of one or more structures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorHistory {
    arena: KripkeStructure,
    offsets: Vec<usize>,
    levels: Vec<Partition>,
    cap: Cap,
}

impl ColorHistory {
    /// Level 0 (atomic types) over the union of `parts`.
    pub fn new(parts: &[&KripkeStructure], cap: Cap) -> Result<Self> {
        let (arena, _) = kripke::disjoint_union(parts, None)?;
        let offsets = kripke::part_offsets(parts.iter().map(|p| p.world_count()));
        let labels: Vec<Vec<bool>> = arena.worlds().map(|u| arena.label(u).to_vec()).collect();
        Ok(ColorHistory {
            levels: vec![Partition::from_keys(&labels)],
            arena,
            offsets,
            cap,
        })
    }

    /// History with levels `0..=rounds`.
    pub fn with_rounds(parts: &[&KripkeStructure], cap: Cap, rounds: usize) -> Result<Self> {
        let mut h = ColorHistory::new(parts, cap)?;
        for _ in 0..rounds {
            h.push_level();
        }
        Ok(h)
    }

    /// History refined until stable.
    pub fn stable(parts: &[&KripkeStructure], cap: Cap) -> Result<Self> {
        let mut h = ColorHistory::new(parts, cap)?;
        while !h.is_stable() {
            h.push_level();
        }
        Ok(h)
    }

    pub fn arena(&self) -> &KripkeStructure {
        &self.arena
    }

    pub fn cap(&self) -> Cap {
        self.cap
    }

    pub fn levels(&self) -> &[Partition] {
        &self.levels
    }

    pub fn level(&self, m: usize) -> &Partition {
        &self.levels[m]
    }

    pub fn last(&self) -> &Partition {
        self.levels.last().expect("histories have a level 0")
    }

    /// Number of refinement rounds performed.
    pub fn rounds(&self) -> usize {
        self.levels.len() - 1
    }

    /// Arena id of world `w` of part `part`.
    pub fn world(&self, part: usize, w: WorldId) -> WorldId {
        WorldId(self.offsets[part] + w.0)
    }

    pub fn part_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Part index and local id of an arena world.
    pub fn locate(&self, w: WorldId) -> (usize, WorldId) {
        let part = self.offsets.partition_point(|&o| o <= w.0) - 1;
        (part, WorldId(w.0 - self.offsets[part]))
    }

    pub fn same_class(&self, level: usize, a: WorldId, b: WorldId) -> bool {
        let p = &self.levels[level];
        p.class_of(a) == p.class_of(b)
    }

    /// True once the last round did not split any class.
    pub fn is_stable(&self) -> bool {
        let n = self.levels.len();
        n >= 2 && self.levels[n - 1].len() == self.levels[n - 2].len()
    }

    /// Successor counts of `u` over the classes of `level`.
    pub fn count_vector(&self, level: usize, u: WorldId) -> ClassCountVector {
        let p = &self.levels[level];
        let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for agent in 0..self.arena.signature().agents().len() {
            for &v in self.arena.successors_of(agent, u) {
                *counts.entry((agent, p.class_of(v))).or_default() += 1;
            }
        }
        counts
            .into_iter()
            .map(|((agent, class), n)| (agent, class, self.cap.apply(n)))
            .filter(|&(_, _, n)| n > 0)
            .collect()
    }

    fn push_level(&mut self) {
        let m = self.levels.len() - 1;
        let prev = &self.levels[m];
        let keys: Vec<(usize, ClassCountVector)> = self
            .arena
            .worlds()
            .map(|u| (prev.class_of(u), self.count_vector(m, u)))
            .collect();
        let next = Partition::from_keys(&keys);
        self.levels.push(next);
    }
}

/// Appends one refinement level.
pub fn refine(history: &ColorHistory) -> ColorHistory {
    let mut next = history.clone();
    next.push_level();
    next
}

impl Serialize for ColorHistory {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let levels: Vec<&[Vec<WorldId>]> = self.levels.iter().map(|p| p.classes()).collect();
        let mut st = s.serialize_struct("ColorHistory", 3)?;
        st.serialize_field("cap", &self.cap)?;
        st.serialize_field("parts", &self.offsets)?;
        st.serialize_field("levels", &levels)?;
        st.end()
    }
}

/// Verdict plus the refinement history that justifies it.
#[derive(Debug, Clone)]
pub struct Verdict {
    pub equivalent: bool,
    pub history: ColorHistory,
}

fn pair_history(a: &PointedStructure, b: &PointedStructure, cap: Cap, rounds: Option<usize>) -> Result<Verdict> {
    a.signature().ensure_same(b.signature())?;
    let parts = [a.structure(), b.structure()];
    let history = match rounds {
        Some(r) => ColorHistory::with_rounds(&parts, cap, r)?,
        None => ColorHistory::stable(&parts, cap)?,
    };
    let wa = history.world(0, a.point());
    let wb = history.world(1, b.point());
    let equivalent = history.same_class(history.rounds(), wa, wb);
    Ok(Verdict { equivalent, history })
}

/// `A, w ≃C^{c,l} B, w'`.
pub fn bounded_equivalence(a: &PointedStructure, b: &PointedStructure, c: usize, l: usize) -> Result<Verdict> {
    pair_history(a, b, Cap::At(c), Some(l))
}

/// `A, w ≃C^l B, w'`.
pub fn graded_l_equivalence(a: &PointedStructure, b: &PointedStructure, l: usize) -> Result<bool> {
    Ok(pair_history(a, b, Cap::Exact, Some(l))?.equivalent)
}

/// Full graded bisimilarity via the stable exact-count partition.
#[derive(Debug, Clone)]
pub struct FullBisimilarity {
    pub equivalent: bool,
    pub history: ColorHistory,
    /// Pairs `(u, u')`, `u` in the first and `u'` in the second structure,
    /// sharing a stable class.
    pub relation: Vec<(WorldId, WorldId)>,
}

pub fn full_graded_bisimilarity(a: &PointedStructure, b: &PointedStructure) -> Result<FullBisimilarity> {
    let Verdict { equivalent, history } = pair_history(a, b, Cap::Exact, None)?;
    let last = history.last();
    let mut relation = Vec::new();
    for u in a.structure().worlds() {
        for v in b.structure().worlds() {
            if last.class_of(history.world(0, u)) == last.class_of(history.world(1, v)) {
                relation.push((u, v));
            }
        }
    }
    Ok(FullBisimilarity {
        equivalent,
        history,
        relation,
    })
}

/// Which clause of a graded bisimulation failed.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Atoms {
        pair: (WorldId, WorldId),
    },
    /// Not every successor on the left can be matched injectively.
    Forth {
        pair: (WorldId, WorldId),
        agent: String,
        /// Size of the left successor set, the failing `k`.
        required: usize,
        matched: usize,
    },
    /// Not every successor on the right can be matched injectively.
    Back {
        pair: (WorldId, WorldId),
        agent: String,
        required: usize,
        matched: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct BisimulationCheck {
    pub holds: bool,
    pub violations: Vec<Violation>,
}

/// Checks the graded bisimulation clauses for an explicit relation.
///
/// For finite successor sets "for all k, any k distinct successors have k
/// distinct partners" reduces to one maximum matching between `E_i[u]` and
/// `E_i[u']` along `Z` saturating the relevant side.
pub fn relation_is_graded_bisimulation(
    z: &[(WorldId, WorldId)],
    a: &KripkeStructure,
    b: &KripkeStructure,
) -> Result<BisimulationCheck> {
    a.signature().ensure_same(b.signature())?;
    if z.is_empty() {
        return Err(Error::InvalidArgument("graded bisimulations are nonempty".into()));
    }
    for &(u, v) in z {
        a.check_world(u)?;
        b.check_world(v)?;
    }
    let related: std::collections::BTreeSet<(WorldId, WorldId)> = z.iter().copied().collect();
    let agents = a.signature().agents();
    let mut violations = Vec::new();
    for &(u, v) in &related {
        if a.label(u) != b.label(v) {
            violations.push(Violation::Atoms { pair: (u, v) });
        }
        for (i, agent) in agents.iter().enumerate() {
            let left = a.successors_of(i, u);
            let right = b.successors_of(i, v);
            let adj: Vec<Vec<usize>> = left
                .iter()
                .map(|&x| {
                    right
                        .iter()
                        .enumerate()
                        .filter(|(_, &y)| related.contains(&(x, y)))
                        .map(|(j, _)| j)
                        .collect()
                })
                .collect();
            let matched = maximum_matching(&adj, right.len());
            if matched < right.len() {
                violations.push(Violation::Back {
                    pair: (u, v),
                    agent: agent.clone(),
                    required: right.len(),
                    matched,
                });
            }
            if matched < left.len() {
                violations.push(Violation::Forth {
                    pair: (u, v),
                    agent: agent.clone(),
                    required: left.len(),
                    matched,
                });
            }
        }
    }
    Ok(BisimulationCheck {
        holds: violations.is_empty(),
        violations,
    })
}

/// Size of a maximum matching in a bipartite graph given as left adjacency
/// lists into `0..right_len` (augmenting paths).
pub fn maximum_matching(adj: &[Vec<usize>], right_len: usize) -> usize {
    fn augment(x: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &y in &adj[x] {
            if seen[y] {
                continue;
            }
            seen[y] = true;
            if owner[y].is_none_or(|other| augment(other, adj, seen, owner)) {
                owner[y] = Some(x);
                return true;
            }
        }
        false
    }
    let mut owner = vec![None; right_len];
    let mut size = 0;
    for x in 0..adj.len() {
        let mut seen = vec![false; right_len];
        if augment(x, adj, &mut seen, &mut owner) {
            size += 1;
        }
    }
    size
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kripke::fixtures::{chain, fan, loop1, sig, two_cycle};
    use crate::kripke::KripkeBuilder;
    use crate::random::{random_pointed, StructureShape};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn roots_share(h: &ColorHistory, level: usize) -> bool {
        h.same_class(level, h.world(0, WorldId(0)), h.world(1, WorldId(0)))
    }

    #[test]
    fn capped_refinement_on_fans() {
        let (f2, f3) = (fan(2), fan(3));
        let h = ColorHistory::new(&[f2.structure(), f3.structure()], Cap::At(2)).unwrap();
        assert!(roots_share(&refine(&h), 1));
        let h = ColorHistory::new(&[f2.structure(), f3.structure()], Cap::At(3)).unwrap();
        assert!(!roots_share(&refine(&h), 1));
    }

    #[test]
    fn atomic_split_is_preserved() {
        let s = sig(&["a"], &["p"]);
        let mut b = KripkeBuilder::new(s.clone(), 1);
        b.prop("p", 0).unwrap();
        let with_p = b.build().unwrap();
        let without = KripkeBuilder::new(s, 1).build().unwrap();
        let h = ColorHistory::new(&[&with_p, &without], Cap::At(2)).unwrap();
        assert!(!roots_share(&h, 0));
        assert!(!roots_share(&refine(&h), 1));
    }

    #[test]
    fn fan_family_formula() {
        for j in 0..=4 {
            for k in 0..=4 {
                for c in 0..=4 {
                    let v = bounded_equivalence(&fan(j), &fan(k), c, 1).unwrap();
                    assert_eq!(v.equivalent, j.min(c) == k.min(c), "j={j} k={k} c={c}");
                }
            }
        }
        for j in 1..=4 {
            for k in j + 1..=4 {
                assert!(!bounded_equivalence(&fan(j), &fan(k), k.max(j), 1).unwrap().equivalent);
            }
        }
    }

    #[test]
    fn graded_l_examples() {
        assert!(!graded_l_equivalence(&fan(2), &fan(3), 1).unwrap());
        assert!(graded_l_equivalence(&fan(2), &fan(3), 0).unwrap());
        assert!(graded_l_equivalence(&loop1(), &chain(5), 1).unwrap());
        assert!(!graded_l_equivalence(&loop1(), &chain(5), 6).unwrap());
    }

    #[test]
    fn full_bisimilarity_examples() {
        let r = full_graded_bisimilarity(&loop1(), &two_cycle()).unwrap();
        assert!(r.equivalent);
        assert_eq!(r.relation.len(), 2);
        let check = relation_is_graded_bisimulation(&r.relation, loop1().structure(), two_cycle().structure()).unwrap();
        assert!(check.holds, "{check:?}");

        assert!(!full_graded_bisimilarity(&fan(2), &fan(3)).unwrap().equivalent);

        let (junk, _) = kripke::disjoint_union(&[fan(2).structure(), chain(3).structure()], None).unwrap();
        let padded = junk.pointed(WorldId(0)).unwrap();
        assert!(full_graded_bisimilarity(&fan(2), &padded).unwrap().equivalent);
    }

    #[test]
    fn signature_mismatch() {
        let other = KripkeBuilder::new(sig(&["b"], &[]), 1).build().unwrap().pointed(WorldId(0)).unwrap();
        assert!(matches!(bounded_equivalence(&fan(1), &other, 1, 1), Err(Error::Signature(_))));
        assert!(full_graded_bisimilarity(&fan(1), &other).is_err());
    }

    #[test]
    fn zero_cap_is_atom_equivalence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sig(&["a", "b"], &["p"]);
        for _ in 0..50 {
            let a = random_pointed(&mut rng, &s, StructureShape::default());
            let b = random_pointed(&mut rng, &s, StructureShape::default());
            let atoms = a.structure().label(a.point()) == b.structure().label(b.point());
            for l in 0..3 {
                assert_eq!(bounded_equivalence(&a, &b, 0, l).unwrap().equivalent, atoms);
            }
        }
    }

    #[test]
    fn relation_checks() {
        let f = fan(3);
        let id: Vec<_> = f.structure().worlds().map(|w| (w, w)).collect();
        assert!(relation_is_graded_bisimulation(&id, f.structure(), f.structure()).unwrap().holds);

        let check = relation_is_graded_bisimulation(
            &[(WorldId(0), WorldId(0))],
            fan(2).structure(),
            fan(3).structure(),
        )
        .unwrap();
        assert!(!check.holds);
        assert!(check.violations.contains(&Violation::Back {
            pair: (WorldId(0), WorldId(0)),
            agent: "a".into(),
            required: 3,
            matched: 0,
        }));
        assert!(check.violations.iter().any(|v| matches!(v, Violation::Forth { required: 2, .. })));

        // every child of fan(2) related to every child of fan(3): forth holds, back does not
        let mut z = vec![(WorldId(0), WorldId(0))];
        for x in 1..=2 {
            for y in 1..=3 {
                z.push((WorldId(x), WorldId(y)));
            }
        }
        let check = relation_is_graded_bisimulation(&z, fan(2).structure(), fan(3).structure()).unwrap();
        assert_eq!(
            check.violations,
            vec![Violation::Back { pair: (WorldId(0), WorldId(0)), agent: "a".into(), required: 3, matched: 2 }]
        );

        assert!(relation_is_graded_bisimulation(&[], fan(1).structure(), fan(1).structure()).is_err());
        assert!(relation_is_graded_bisimulation(&[(WorldId(9), WorldId(0))], fan(1).structure(), fan(1).structure()).is_err());
    }

    #[test]
    fn matching_sizes() {
        assert_eq!(maximum_matching(&[vec![0, 1], vec![0], vec![0]], 2), 2);
        assert_eq!(maximum_matching(&[vec![0], vec![0, 1], vec![1, 2]], 3), 3);
        assert_eq!(maximum_matching(&[], 4), 0);
    }

    #[test]
    fn history_serializes() {
        let v = bounded_equivalence(&fan(1), &fan(2), 2, 1).unwrap();
        let json = serde_json::to_value(&v.history).unwrap();
        assert_eq!(json["cap"], 2);
        assert_eq!(json["parts"], serde_json::json!([0, 2, 5]));
        assert_eq!(json["levels"].as_array().unwrap().len(), 2);
        let exact = ColorHistory::new(&[fan(1).structure()], Cap::Exact).unwrap();
        assert_eq!(serde_json::to_value(&exact).unwrap()["cap"], "exact");
    }

    proptest! {
        #[test]
        fn refinement_invariants(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = sig(&["a", "b"], &["p", "q"]);
            let a = random_pointed(&mut rng, &s, StructureShape::default());
            let b = random_pointed(&mut rng, &s, StructureShape::default());
            let c = (seed % 3) as usize;

            let stable = ColorHistory::stable(&[a.structure(), b.structure()], Cap::Exact).unwrap();
            prop_assert!(stable.rounds() <= stable.arena().world_count());
            for m in 1..stable.levels().len() {
                for u in stable.arena().worlds() {
                    for v in stable.arena().worlds() {
                        if stable.same_class(m, u, v) {
                            prop_assert!(stable.same_class(m - 1, u, v));
                        }
                    }
                }
            }

            for l in 0..3 {
                let here = bounded_equivalence(&a, &b, c, l).unwrap().equivalent;
                if bounded_equivalence(&a, &b, c + 1, l).unwrap().equivalent {
                    prop_assert!(here);
                }
                if bounded_equivalence(&a, &b, c, l + 1).unwrap().equivalent {
                    prop_assert!(here);
                }
                let degree = a.structure().max_out_degree().max(b.structure().max_out_degree());
                prop_assert_eq!(
                    graded_l_equivalence(&a, &b, l).unwrap(),
                    bounded_equivalence(&a, &b, degree, l).unwrap().equivalent
                );
            }

            let full = full_graded_bisimilarity(&a, &b).unwrap();
            if full.equivalent {
                let check = relation_is_graded_bisimulation(&full.relation, a.structure(), b.structure()).unwrap();
                prop_assert!(check.holds);
            }
        }

        #[test]
        fn bounded_equivalence_is_an_equivalence(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = sig(&["a"], &["p"]);
            let shape = StructureShape { max_worlds: 4, ..StructureShape::default() };
            let xs: Vec<_> = (0..3).map(|_| random_pointed(&mut rng, &s, shape)).collect();
            let eq = |i: usize, j: usize| bounded_equivalence(&xs[i], &xs[j], 1, 2).unwrap().equivalent;
            for i in 0..3 {
                prop_assert!(eq(i, i));
                for j in 0..3 {
                    prop_assert_eq!(eq(i, j), eq(j, i));
                    for k in 0..3 {
                        if eq(i, j) && eq(j, k) {
                            prop_assert!(eq(i, k));
                        }
                    }
                }
            }
        }
    }
}
