//! Finite Kripke structures and structure-level constructions.
//!
//! Worlds are dense indices `0..world_count`. Every combinator relabels
//! deterministically: parts in list order, and in [`unravel`] the tree part
//! (breadth-first) before the appended copy.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};

pub mod fixtures;
mod text;

pub use text::{parse_structure, StructureFile};

/// A world of a Kripke structure, dense within its owning structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct WorldId(pub usize);

impl WorldId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for WorldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ordered agent and proposition names.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Signature {
    agents: Vec<String>,
    props: Vec<String>,
}

impl Signature {
    pub fn new<A, P>(agents: A, props: P) -> Result<Self>
    where
        A: IntoIterator,
        A::Item: Into<String>,
        P: IntoIterator,
        P::Item: Into<String>,
    {
        let agents: Vec<String> = agents.into_iter().map(Into::into).collect();
        let props: Vec<String> = props.into_iter().map(Into::into).collect();
        check_names("agent", &agents)?;
        check_names("proposition", &props)?;
        Ok(Signature { agents, props })
    }

    pub fn agents(&self) -> &[String] {
        &self.agents
    }

    pub fn props(&self) -> &[String] {
        &self.props
    }

    pub fn agent_index(&self, name: &str) -> Result<usize> {
        self.agents
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| Error::Signature(format!("unknown agent `{name}`")))
    }

    pub fn prop_index(&self, name: &str) -> Result<usize> {
        self.props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::Signature(format!("unknown proposition `{name}`")))
    }

    pub(crate) fn ensure_same(&self, other: &Signature) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::Signature(format!(
                "signature mismatch: agents {:?} props {:?} vs agents {:?} props {:?}",
                self.agents, self.props, other.agents, other.props
            )))
        }
    }
}

fn check_names(kind: &str, names: &[String]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for name in names {
        if name.is_empty() {
            return Err(Error::Signature(format!("empty {kind} name")));
        }
        let mut chars = name.chars();
        let well_formed = chars.next().is_some_and(|c| c.is_ascii_alphabetic())
            && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
        if !well_formed || name == "true" || name == "false" {
            return Err(Error::Signature(format!("{kind} name `{name}` is not a valid identifier")));
        }
        if !seen.insert(name.as_str()) {
            return Err(Error::Signature(format!("duplicate {kind} name `{name}`")));
        }
    }
    Ok(())
}

/// A finite Kripke structure `(W, (E_i), (P_j))`.
///
/// Built through [`KripkeBuilder`]; immutable afterwards. The only way to
/// obtain a structure without worlds is [`copies`] with `q = 0`, which is
/// meant to be fed to [`disjoint_union`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KripkeStructure {
    signature: Signature,
    // agent -> world -> sorted successors
    succ: Vec<Vec<Vec<WorldId>>>,
    // world -> prop -> truth value
    labels: Vec<Vec<bool>>,
}

impl KripkeStructure {
    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn world_count(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn worlds(&self) -> impl Iterator<Item = WorldId> {
        (0..self.world_count()).map(WorldId)
    }

    pub fn check_world(&self, w: WorldId) -> Result<()> {
        if w.0 < self.world_count() {
            Ok(())
        } else {
            Err(Error::InvalidWorld {
                world: w.0,
                world_count: self.world_count(),
            })
        }
    }

    /// `E_i[u]` for the named agent.
    pub fn successors(&self, agent: &str, u: WorldId) -> Result<&[WorldId]> {
        let i = self.signature.agent_index(agent)?;
        self.check_world(u)?;
        Ok(&self.succ[i][u.0])
    }

    /// `E_i[u]` by agent index. Panics on out-of-range input.
    pub fn successors_of(&self, agent: usize, u: WorldId) -> &[WorldId] {
        &self.succ[agent][u.0]
    }

    /// Truth values of all propositions at `u`, in signature order.
    pub fn label(&self, u: WorldId) -> &[bool] {
        &self.labels[u.0]
    }

    pub fn holds(&self, prop: usize, u: WorldId) -> bool {
        self.labels[u.0][prop]
    }

    pub fn has_edge(&self, agent: usize, u: WorldId, v: WorldId) -> bool {
        self.succ[agent][u.0].binary_search(&v).is_ok()
    }

    /// All edges of one agent, sorted.
    pub fn edges(&self, agent: usize) -> impl Iterator<Item = (WorldId, WorldId)> + '_ {
        self.succ[agent]
            .iter()
            .enumerate()
            .flat_map(|(u, vs)| vs.iter().map(move |&v| (WorldId(u), v)))
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().flatten().map(Vec::len).sum()
    }

    /// Largest per-agent out-degree.
    pub fn max_out_degree(&self) -> usize {
        self.succ
            .iter()
            .flatten()
            .map(Vec::len)
            .max()
            .unwrap_or(0)
    }

    /// Worlds satisfying the proposition.
    pub fn valuation(&self, prop: usize) -> impl Iterator<Item = WorldId> + '_ {
        self.worlds().filter(move |&u| self.holds(prop, u))
    }

    pub fn pointed(self, point: WorldId) -> Result<PointedStructure> {
        PointedStructure::new(self, point)
    }

    /// Undirected adjacency over the symmetrized union of all relations.
    fn undirected_neighbours(&self) -> Vec<BTreeSet<WorldId>> {
        let mut adj = vec![BTreeSet::new(); self.world_count()];
        for agent in 0..self.succ.len() {
            for (u, v) in self.edges(agent) {
                adj[u.0].insert(v);
                adj[v.0].insert(u);
            }
        }
        adj
    }

    /// Undirected BFS distances from `w`, cut off beyond `radius`.
    fn distances(&self, w: WorldId, radius: usize) -> Vec<Option<usize>> {
        let adj = self.undirected_neighbours();
        let mut dist = vec![None; self.world_count()];
        dist[w.0] = Some(0);
        let mut queue = VecDeque::from([w]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u.0].expect("queued worlds have a distance");
            if d == radius {
                continue;
            }
            for &v in &adj[u.0] {
                if dist[v.0].is_none() {
                    dist[v.0] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

/// Incremental constructor for [`KripkeStructure`].
#[derive(Debug, Clone)]
pub struct KripkeBuilder {
    signature: Signature,
    succ: Vec<Vec<BTreeSet<WorldId>>>,
    labels: Vec<Vec<bool>>,
}

impl KripkeBuilder {
    pub fn new(signature: Signature, world_count: usize) -> Self {
        let agents = signature.agents().len();
        let props = signature.props().len();
        KripkeBuilder {
            succ: vec![vec![BTreeSet::new(); world_count]; agents],
            labels: vec![vec![false; props]; world_count],
            signature,
        }
    }

    pub fn world_count(&self) -> usize {
        self.labels.len()
    }

    /// Appends a fresh world and returns it.
    pub fn add_world(&mut self) -> WorldId {
        for per_agent in &mut self.succ {
            per_agent.push(BTreeSet::new());
        }
        self.labels.push(vec![false; self.signature.props().len()]);
        WorldId(self.labels.len() - 1)
    }

    fn check(&self, w: WorldId) -> Result<()> {
        if w.0 < self.world_count() {
            Ok(())
        } else {
            Err(Error::InvalidWorld {
                world: w.0,
                world_count: self.world_count(),
            })
        }
    }

    pub fn edge(&mut self, agent: &str, u: usize, v: usize) -> Result<&mut Self> {
        let i = self.signature.agent_index(agent)?;
        self.edge_by_index(i, WorldId(u), WorldId(v))?;
        Ok(self)
    }

    pub fn edge_by_index(&mut self, agent: usize, u: WorldId, v: WorldId) -> Result<()> {
        if agent >= self.succ.len() {
            return Err(Error::Signature(format!("agent index {agent} out of range")));
        }
        self.check(u)?;
        self.check(v)?;
        self.succ[agent][u.0].insert(v);
        Ok(())
    }

    pub fn prop(&mut self, prop: &str, u: usize) -> Result<&mut Self> {
        let j = self.signature.prop_index(prop)?;
        self.set_label(j, WorldId(u), true)?;
        Ok(self)
    }

    pub fn set_label(&mut self, prop: usize, u: WorldId, value: bool) -> Result<()> {
        if prop >= self.signature.props().len() {
            return Err(Error::Signature(format!("proposition index {prop} out of range")));
        }
        self.check(u)?;
        self.labels[u.0][prop] = value;
        Ok(())
    }

    pub fn set_labels(&mut self, u: WorldId, labels: &[bool]) -> Result<()> {
        self.check(u)?;
        if labels.len() != self.signature.props().len() {
            return Err(Error::Signature("label vector length mismatch".into()));
        }
        self.labels[u.0].copy_from_slice(labels);
        Ok(())
    }

    pub fn build(self) -> Result<KripkeStructure> {
        if self.labels.is_empty() {
            return Err(Error::EmptyStructure);
        }
        Ok(self.finish())
    }

    fn finish(self) -> KripkeStructure {
        KripkeStructure {
            signature: self.signature,
            succ: self
                .succ
                .into_iter()
                .map(|per_world| per_world.into_iter().map(|s| s.into_iter().collect()).collect())
                .collect(),
            labels: self.labels,
        }
    }
}

/// A Kripke structure with a distinguished world.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointedStructure {
    structure: KripkeStructure,
    point: WorldId,
}

impl PointedStructure {
    pub fn new(structure: KripkeStructure, point: WorldId) -> Result<Self> {
        structure.check_world(point)?;
        Ok(PointedStructure { structure, point })
    }

    pub fn structure(&self) -> &KripkeStructure {
        &self.structure
    }

    pub fn point(&self) -> WorldId {
        self.point
    }

    pub fn signature(&self) -> &Signature {
        self.structure.signature()
    }

    pub fn into_parts(self) -> (KripkeStructure, WorldId) {
        (self.structure, self.point)
    }
}

/// `E_i[u]` as an owned set.
pub fn successors(m: &KripkeStructure, agent: &str, u: WorldId) -> Result<BTreeSet<WorldId>> {
    Ok(m.successors(agent, u)?.iter().copied().collect())
}

/// Disjoint union of `parts`, relabeled in list order.
///
/// Empty parts (from `copies(_, 0)`) are allowed as operands; the union
/// itself must be nonempty. `point_from` names a world of one part by its
/// part index and its local id.
pub fn disjoint_union(
    parts: &[&KripkeStructure],
    point_from: Option<(usize, WorldId)>,
) -> Result<(KripkeStructure, Option<WorldId>)> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("disjoint union of no parts".into()))?;
    for part in &parts[1..] {
        first.signature.ensure_same(&part.signature)?;
    }
    let offsets = part_offsets(parts.iter().map(|p| p.world_count()));
    let point = match point_from {
        None => None,
        Some((idx, w)) => {
            let part = parts.get(idx).ok_or_else(|| {
                Error::InvalidArgument(format!("part index {idx} out of range"))
            })?;
            part.check_world(w)?;
            Some(WorldId(offsets[idx] + w.0))
        }
    };
    let total = offsets[parts.len()];
    let mut builder = KripkeBuilder::new(first.signature.clone(), total);
    for (idx, part) in parts.iter().enumerate() {
        copy_into(&mut builder, part, offsets[idx]);
    }
    Ok((builder.build()?, point))
}

/// Cumulative world offsets; the last entry is the total.
pub(crate) fn part_offsets(counts: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let mut offsets = vec![0];
    for n in counts {
        offsets.push(offsets.last().unwrap() + n);
    }
    offsets
}

fn copy_into(builder: &mut KripkeBuilder, part: &KripkeStructure, offset: usize) {
    for agent in 0..part.succ.len() {
        for (u, v) in part.edges(agent) {
            builder.succ[agent][offset + u.0].insert(WorldId(offset + v.0));
        }
    }
    for u in part.worlds() {
        builder.labels[offset + u.0].copy_from_slice(part.label(u));
    }
}

/// `q` disjoint copies of `m`. With `q = 0` the result has no worlds and is
/// only usable as a [`disjoint_union`] operand.
pub fn copies(m: &KripkeStructure, q: usize) -> KripkeStructure {
    let n = m.world_count();
    let mut builder = KripkeBuilder::new(m.signature.clone(), n * q);
    for k in 0..q {
        copy_into(&mut builder, m, k * n);
    }
    builder.finish()
}

/// `N^l(w)`: worlds within undirected distance `l` of `w`.
pub fn neighborhood(m: &KripkeStructure, w: WorldId, l: usize) -> Result<BTreeSet<WorldId>> {
    m.check_world(w)?;
    Ok(m.distances(w, l)
        .into_iter()
        .enumerate()
        .filter_map(|(u, d)| d.map(|_| WorldId(u)))
        .collect())
}

/// Induced substructure on `worlds`, relabeled densely in increasing order.
///
/// Returns the restriction and the map from old to new ids.
pub fn restrict(
    m: &KripkeStructure,
    worlds: &BTreeSet<WorldId>,
) -> Result<(KripkeStructure, Vec<Option<WorldId>>)> {
    if worlds.is_empty() {
        return Err(Error::EmptyStructure);
    }
    for &w in worlds {
        m.check_world(w)?;
    }
    let mut relabel = vec![None; m.world_count()];
    for (new, &old) in worlds.iter().enumerate() {
        relabel[old.0] = Some(WorldId(new));
    }
    let mut builder = KripkeBuilder::new(m.signature.clone(), worlds.len());
    for agent in 0..m.succ.len() {
        for (u, v) in m.edges(agent) {
            if let (Some(nu), Some(nv)) = (relabel[u.0], relabel[v.0]) {
                builder.succ[agent][nu.0].insert(nv);
            }
        }
    }
    for &old in worlds {
        let new = relabel[old.0].unwrap();
        builder.labels[new.0].copy_from_slice(m.label(old));
    }
    Ok((builder.build()?, relabel))
}

/// Restriction pointed at the image of `point`.
pub fn restrict_pointed(
    m: &KripkeStructure,
    worlds: &BTreeSet<WorldId>,
    point: WorldId,
) -> Result<PointedStructure> {
    if !worlds.contains(&point) {
        return Err(Error::InvalidArgument(format!(
            "new point {point} is not in the restriction set"
        )));
    }
    let (sub, relabel) = restrict(m, worlds)?;
    sub.pointed(relabel[point.0].unwrap())
}

/// `M↾N^l(w), w`.
pub fn restrict_to_neighborhood(m: &PointedStructure, l: usize) -> Result<PointedStructure> {
    let n = neighborhood(m.structure(), m.point(), l)?;
    restrict_pointed(m.structure(), &n, m.point())
}

/// Why a structure is not rooted tree-like.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "condition", rename_all = "snake_case")]
pub enum TreelikeFailure {
    /// Two agents share an undirected edge.
    Disjointness {
        agents: (String, String),
        edge: (WorldId, WorldId),
    },
    /// The undirected union contains a cycle (a self-loop is a cycle of length one).
    Acyclicity { cycle: Vec<WorldId> },
    /// An edge does not lead from distance `d` to distance `d + 1`.
    Direction {
        agent: String,
        edge: (WorldId, WorldId),
    },
}

impl fmt::Display for TreelikeFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreelikeFailure::Disjointness { agents, edge } => write!(
                f,
                "disjointness: agents {} and {} share edge {{{}, {}}}",
                agents.0, agents.1, edge.0, edge.1
            ),
            TreelikeFailure::Acyclicity { cycle } => {
                let c: Vec<String> = cycle.iter().map(|w| w.to_string()).collect();
                write!(f, "acyclicity: cycle {}", c.join(" - "))
            }
            TreelikeFailure::Direction { agent, edge } => write!(
                f,
                "direction: {} edge ({}, {}) does not point away from the root",
                agent, edge.0, edge.1
            ),
        }
    }
}

/// Checks that `M↾N^l(w), w` is rooted tree-like.
pub fn is_rooted_treelike(
    m: &KripkeStructure,
    w: WorldId,
    l: usize,
) -> Result<std::result::Result<(), TreelikeFailure>> {
    m.check_world(w)?;
    let dist = m.distances(w, l);
    let inside = |u: WorldId| dist[u.0].is_some();
    let agents = m.signature.agents();

    // undirected edge -> first agent carrying it
    let mut owner: std::collections::BTreeMap<(WorldId, WorldId), usize> = Default::default();
    let mut local_edges = Vec::new();
    for agent in 0..agents.len() {
        let mut mine = BTreeSet::new();
        for (u, v) in m.edges(agent) {
            if !(inside(u) && inside(v)) {
                continue;
            }
            local_edges.push((agent, u, v));
            let key = (u.min(v), u.max(v));
            if !mine.insert(key) {
                continue;
            }
            if let Some(&other) = owner.get(&key) {
                return Ok(Err(TreelikeFailure::Disjointness {
                    agents: (agents[other].clone(), agents[agent].clone()),
                    edge: (u, v),
                }));
            }
            owner.insert(key, agent);
        }
    }

    let mut forest = DisjointSets::new(m.world_count());
    let mut tree_adj: Vec<Vec<WorldId>> = vec![Vec::new(); m.world_count()];
    for &(u, v) in owner.keys() {
        if u == v {
            return Ok(Err(TreelikeFailure::Acyclicity { cycle: vec![u] }));
        }
        if !forest.union(u.0, v.0) {
            let mut cycle = forest_path(&tree_adj, u, v);
            cycle.push(u);
            return Ok(Err(TreelikeFailure::Acyclicity { cycle }));
        }
        tree_adj[u.0].push(v);
        tree_adj[v.0].push(u);
    }

    for (agent, u, v) in local_edges {
        if dist[v.0] != dist[u.0].map(|d| d + 1) {
            return Ok(Err(TreelikeFailure::Direction {
                agent: agents[agent].clone(),
                edge: (u, v),
            }));
        }
    }
    Ok(Ok(()))
}

fn forest_path(adj: &[Vec<WorldId>], from: WorldId, to: WorldId) -> Vec<WorldId> {
    let mut parent = vec![None; adj.len()];
    let mut queue = VecDeque::from([from]);
    parent[from.0] = Some(from);
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for &v in &adj[u.0] {
            if parent[v.0].is_none() {
                parent[v.0] = Some(u);
                queue.push_back(v);
            }
        }
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = parent[cur.0].expect("endpoints are connected in the forest");
        path.push(cur);
    }
    path.reverse();
    path
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// Partial directed tree unravelling of `m` from its point.
///
/// The tree part holds every directed path (agent-labelled steps) of length
/// `< depth`, breadth-first, each carrying the labels of its endpoint. A
/// single copy of the original structure is appended; frontier paths (length
/// `depth - 1`) get edges into the copy-images of their endpoint's successors.
/// The result is pointed at the empty path.
pub fn unravel(m: &PointedStructure, depth: usize) -> Result<PointedStructure> {
    if depth == 0 {
        return Err(Error::InvalidArgument("unravelling depth must be at least 1".into()));
    }
    let base = m.structure();
    let agents = base.signature.agents().len();

    // (endpoint, length) per tree node, in BFS order
    let mut nodes: Vec<(WorldId, usize)> = vec![(m.point(), 0)];
    let mut tree_edges: Vec<(usize, usize, usize)> = Vec::new();
    let mut next = 0;
    while next < nodes.len() {
        let (end, len) = nodes[next];
        if len + 1 < depth {
            for agent in 0..agents {
                for &v in base.successors_of(agent, end) {
                    nodes.push((v, len + 1));
                    tree_edges.push((agent, next, nodes.len() - 1));
                }
            }
        }
        next += 1;
    }

    let tree_size = nodes.len();
    let mut builder = KripkeBuilder::new(base.signature.clone(), tree_size + base.world_count());
    for (idx, &(end, len)) in nodes.iter().enumerate() {
        builder.labels[idx].copy_from_slice(base.label(end));
        if len + 1 == depth {
            for agent in 0..agents {
                for &v in base.successors_of(agent, end) {
                    builder.succ[agent][idx].insert(WorldId(tree_size + v.0));
                }
            }
        }
    }
    for (agent, from, to) in tree_edges {
        builder.succ[agent][from].insert(WorldId(to));
    }
    copy_into(&mut builder, base, tree_size);
    builder.build()?.pointed(WorldId(0))
}

#[cfg(test)]
mod tests {
    use super::fixtures::{chain, fan, loop1, sig};
    use super::*;

    fn ws(ids: &[usize]) -> BTreeSet<WorldId> {
        ids.iter().map(|&i| WorldId(i)).collect()
    }

    #[test]
    fn successors_of_fixtures() {
        let f = fan(3);
        assert_eq!(successors(f.structure(), "a", WorldId(0)).unwrap(), ws(&[1, 2, 3]));
        assert!(successors(f.structure(), "a", WorldId(1)).unwrap().is_empty());
        let l = loop1();
        assert_eq!(successors(l.structure(), "a", WorldId(0)).unwrap(), ws(&[0]));
        assert!(matches!(
            successors(f.structure(), "b", WorldId(0)),
            Err(Error::Signature(_))
        ));
    }

    #[test]
    fn union_is_additive() {
        let (u, p) = disjoint_union(&[fan(2).structure(), fan(3).structure()], None).unwrap();
        assert_eq!(u.world_count(), 7);
        assert_eq!(u.edge_count(), 5);
        assert!(p.is_none());

        let (_, p) =
            disjoint_union(&[fan(2).structure(), fan(3).structure()], Some((0, WorldId(0))))
                .unwrap();
        assert_eq!(p, Some(WorldId(0)));
        let (_, p) =
            disjoint_union(&[fan(2).structure(), fan(3).structure()], Some((1, WorldId(0))))
                .unwrap();
        assert_eq!(p, Some(WorldId(3)));

        let (u, _) = disjoint_union(&[loop1().structure(), loop1().structure()], None).unwrap();
        let edges: Vec<_> = u.edges(0).collect();
        assert_eq!(edges, vec![(WorldId(0), WorldId(0)), (WorldId(1), WorldId(1))]);
    }

    #[test]
    fn union_errors() {
        let other = KripkeBuilder::new(sig(&["b"], &[]), 1).build().unwrap();
        assert!(matches!(
            disjoint_union(&[fan(1).structure(), &other], None),
            Err(Error::Signature(_))
        ));
        assert!(disjoint_union(&[fan(1).structure()], Some((0, WorldId(5)))).is_err());
        assert!(disjoint_union(&[fan(1).structure()], Some((3, WorldId(0)))).is_err());
        let empty = copies(fan(1).structure(), 0);
        assert!(matches!(
            disjoint_union(&[&empty], None),
            Err(Error::EmptyStructure)
        ));
    }

    #[test]
    fn copies_counts() {
        let c = copies(fan(2).structure(), 3);
        assert_eq!(c.world_count(), 9);
        assert_eq!(c.edge_count(), 6);
        assert_eq!(&copies(fan(2).structure(), 1), fan(2).structure());
        let empty = copies(fan(2).structure(), 0);
        assert!(empty.is_empty());
        let (u, _) = disjoint_union(&[&empty, fan(2).structure()], None).unwrap();
        assert_eq!(&u, fan(2).structure());
    }

    #[test]
    fn neighborhoods() {
        let c = chain(3);
        assert_eq!(neighborhood(c.structure(), WorldId(1), 1).unwrap(), ws(&[0, 1, 2]));
        assert_eq!(neighborhood(c.structure(), WorldId(2), 0).unwrap(), ws(&[2]));
        assert_eq!(neighborhood(fan(3).structure(), WorldId(0), 1).unwrap(), ws(&[0, 1, 2, 3]));
        // leaves reach each other through the root
        assert_eq!(neighborhood(fan(3).structure(), WorldId(1), 1).unwrap(), ws(&[0, 1]));
        assert_eq!(
            neighborhood(fan(3).structure(), WorldId(1), 2).unwrap(),
            ws(&[0, 1, 2, 3])
        );
    }

    #[test]
    fn restrictions() {
        let c = chain(3);
        let (r, _) = restrict(c.structure(), &ws(&[0, 1])).unwrap();
        assert_eq!(&r, chain(1).structure());
        let all: BTreeSet<_> = c.structure().worlds().collect();
        assert_eq!(&restrict(c.structure(), &all).unwrap().0, c.structure());
        let (r, _) = restrict(fan(3).structure(), &ws(&[0])).unwrap();
        assert_eq!(r.world_count(), 1);
        assert_eq!(r.edge_count(), 0);
        assert!(matches!(
            restrict(c.structure(), &BTreeSet::new()),
            Err(Error::EmptyStructure)
        ));
        let p = restrict_pointed(c.structure(), &ws(&[2, 3]), WorldId(3)).unwrap();
        assert_eq!(p.point(), WorldId(1));
        assert!(restrict_pointed(c.structure(), &ws(&[2, 3]), WorldId(0)).is_err());
    }

    #[test]
    fn treelike_examples() {
        for l in 0..4 {
            assert_eq!(is_rooted_treelike(fan(3).structure(), WorldId(0), l).unwrap(), Ok(()));
        }
        let fail = is_rooted_treelike(loop1().structure(), WorldId(0), 1).unwrap();
        assert_eq!(fail, Err(TreelikeFailure::Acyclicity { cycle: vec![WorldId(0)] }));

        let mut b = KripkeBuilder::new(sig(&["a", "b"], &[]), 2);
        b.edge("a", 0, 1).unwrap().edge("b", 0, 1).unwrap();
        let m = b.build().unwrap();
        assert!(matches!(
            is_rooted_treelike(&m, WorldId(0), 1).unwrap(),
            Err(TreelikeFailure::Disjointness { .. })
        ));

        // edge pointing back to the root
        let mut b = KripkeBuilder::new(sig(&["a"], &[]), 2);
        b.edge("a", 1, 0).unwrap();
        let m = b.build().unwrap();
        assert_eq!(
            is_rooted_treelike(&m, WorldId(0), 1).unwrap(),
            Err(TreelikeFailure::Direction {
                agent: "a".into(),
                edge: (WorldId(1), WorldId(0))
            })
        );
        // outside the radius nothing is checked
        assert_eq!(is_rooted_treelike(&m, WorldId(0), 0).unwrap(), Ok(()));

        // a triangle: 0->1, 0->2, 1->2
        let mut b = KripkeBuilder::new(sig(&["a"], &[]), 3);
        b.edge("a", 0, 1).unwrap().edge("a", 0, 2).unwrap().edge("a", 1, 2).unwrap();
        let m = b.build().unwrap();
        match is_rooted_treelike(&m, WorldId(0), 1).unwrap() {
            Err(TreelikeFailure::Acyclicity { cycle }) => {
                assert_eq!(cycle.len(), 4);
                assert_eq!(cycle.first(), cycle.last());
            }
            other => panic!("expected a cycle, got {other:?}"),
        }
    }

    #[test]
    fn unravel_loop() {
        let u = unravel(&loop1(), 2).unwrap();
        let m = u.structure();
        assert_eq!(m.world_count(), 3);
        assert_eq!(u.point(), WorldId(0));
        let edges: Vec<_> = m.edges(0).collect();
        assert_eq!(
            edges,
            vec![
                (WorldId(0), WorldId(1)),
                (WorldId(1), WorldId(2)),
                (WorldId(2), WorldId(2))
            ]
        );
    }

    #[test]
    fn unravel_fan_leaves_copy_unreachable() {
        let u = unravel(&fan(3), 2).unwrap();
        let m = u.structure();
        assert_eq!(m.world_count(), 8);
        assert_eq!(m.successors_of(0, WorldId(0)), &[WorldId(1), WorldId(2), WorldId(3)]);
        for leaf in 1..4 {
            assert!(m.successors_of(0, WorldId(leaf)).is_empty());
        }
        let reach = neighborhood(m, WorldId(0), 10).unwrap();
        assert_eq!(reach, ws(&[0, 1, 2, 3]));
    }

    #[test]
    fn unravel_diamond_shares_the_copy() {
        let mut b = KripkeBuilder::new(sig(&["a"], &[]), 4);
        b.edge("a", 0, 1).unwrap().edge("a", 0, 2).unwrap();
        b.edge("a", 1, 3).unwrap().edge("a", 2, 3).unwrap();
        let d = b.build().unwrap().pointed(WorldId(0)).unwrap();
        let u = unravel(&d, 2).unwrap();
        let m = u.structure();
        // tree: eps, (w1), (w2); copy at offset 3
        assert_eq!(m.world_count(), 3 + 4);
        assert_eq!(m.successors_of(0, WorldId(1)), &[WorldId(6)]);
        assert_eq!(m.successors_of(0, WorldId(2)), &[WorldId(6)]);
    }

    #[test]
    fn unravel_rejects_depth_zero() {
        assert!(unravel(&loop1(), 0).is_err());
    }

    #[test]
    fn unravel_neighborhood_is_tree() {
        for l in 0..4 {
            let u = unravel(&loop1(), l + 1).unwrap();
            let r = restrict_to_neighborhood(&u, l).unwrap();
            assert_eq!(r.structure().world_count(), l + 1);
            assert_eq!(is_rooted_treelike(r.structure(), r.point(), l).unwrap(), Ok(()));
        }
    }
}
