//! Characteristic formulas, type catalogs, normal forms and distinguishing
//! formulas for the bounded fragments `CML_{c,l}`.
//!
//! `χ^{c,0}_{M,w}` is the full atomic description of `w`. `χ^{c,m+1}_{M,w}`
//! conjoins `χ^{c,m}_{M,w}` with, for every agent `i` and every class `t` of
//! `≃C^{c,m}` realized by `n` successors of `w`:
//!
//! * the forth conjunct `<i:min(n,c)> χ_t`, which implies all weaker ones;
//! * the back conjunct `!<i:n+1> χ_t` when `n < c`, which implies all stronger ones.
//!
//! Classes come from the capped refinement of `M` alone, so each class
//! contributes one shared formula. In [`ChiMode::Complete`] a box conjunct
//! `!<i:1> !(χ_{t1} | ... | χ_{tk})` also rules out successors of types not
//! realized at `w`. Without it, `B ⊨ χ_A` can hold for inequivalent `B`
//! (see the `literal_mode_is_incomplete` test).

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::ser::{SerializeStruct, Serializer};
use serde::Serialize;

use crate::equivalence::{bounded_equivalence, Cap, ColorHistory};
use crate::error::{Error, Result};
use crate::kripke::StructureFile;
use crate::kripke::{KripkeBuilder, KripkeStructure, PointedStructure, Signature, WorldId};
use crate::semantics::{extension, satisfies, Evaluator, Extension};
use crate::syntax::{Formula, FragmentBound};

/// Default bound on the number of types per catalog level.
pub const DEFAULT_CATALOG_GUARD: usize = 4096;

/// Bound on the total number of worlds of one catalog level's canonical models.
const CATALOG_WORLD_GUARD: usize = 2_000_000;

/// Which conjuncts a characteristic formula carries beyond forth and back.
#[derive(Debug, Clone, Copy, Default)]
pub enum ChiMode<'c> {
    /// Forth and back conjuncts over realized successor classes only.
    Literal,
    /// Adds one box conjunct per agent covering the realized classes.
    #[default]
    Complete,
    /// Adds `!<i:1> χ_t` for every catalog type `t` no successor realizes.
    Catalog(&'c TypeCatalog),
}

/// `χ^{c,l}_{M,w}` in [`ChiMode::Complete`].
pub fn characteristic_formula(m: &PointedStructure, c: usize, l: usize) -> Formula {
    characteristic_formula_with(m, c, l, ChiMode::Complete).expect("only catalog mode can fail")
}

/// Fails only when a catalog of different bounds or signature is supplied.
pub fn characteristic_formula_with(m: &PointedStructure, c: usize, l: usize, mode: ChiMode<'_>) -> Result<Formula> {
    if let ChiMode::Catalog(cat) = mode {
        m.signature().ensure_same(&cat.signature)?;
        if cat.c != c || cat.l + 1 < l {
            return Err(Error::InvalidArgument(format!(
                "catalog with c = {}, l = {} cannot complete χ at c = {c}, l = {l}",
                cat.c, cat.l
            )));
        }
    }
    let mut builder = ChiBuilder::new(m.structure(), c, l, mode);
    Ok(unwrap(builder.chi(l, m.point())))
}

fn unwrap(f: Arc<Formula>) -> Formula {
    Arc::try_unwrap(f).unwrap_or_else(|f| (*f).clone())
}

struct ChiBuilder<'a> {
    m: &'a KripkeStructure,
    history: ColorHistory,
    c: usize,
    mode: ChiMode<'a>,
    memo: HashMap<(usize, usize), Arc<Formula>>,
    // per catalog level: which worlds of `m` satisfy each entry's χ
    catalog_hits: HashMap<usize, Vec<Extension>>,
}

impl<'a> ChiBuilder<'a> {
    fn new(m: &'a KripkeStructure, c: usize, rounds: usize, mode: ChiMode<'a>) -> Self {
        let history = ColorHistory::with_rounds(&[m], Cap::At(c), rounds).expect("structures are nonempty");
        ChiBuilder {
            m,
            history,
            c,
            mode,
            memo: HashMap::new(),
            catalog_hits: HashMap::new(),
        }
    }

    fn chi(&mut self, level: usize, w: WorldId) -> Arc<Formula> {
        let class = self.history.level(level).class_of(w);
        if let Some(f) = self.memo.get(&(level, class)) {
            return f.clone();
        }
        let rep = self.history.level(level).classes()[class][0];
        let f = Arc::new(if level == 0 { self.atoms(rep) } else { self.step(level, rep) });
        self.memo.insert((level, class), f.clone());
        f
    }

    fn atoms(&self, w: WorldId) -> Formula {
        Formula::conj(self.m.signature().props().iter().zip(self.m.label(w)).map(|(p, &on)| {
            let atom = Formula::prop(p.clone());
            if on {
                atom
            } else {
                Formula::not(atom)
            }
        }))
    }

    fn step(&mut self, level: usize, w: WorldId) -> Formula {
        let below = level - 1;
        let mut parts = vec![self.chi(below, w)];
        if self.c == 0 {
            return Formula::conj(parts);
        }
        for agent in 0..self.m.signature().agents().len() {
            let name = self.m.signature().agents()[agent].clone();
            let mut groups: BTreeMap<usize, (WorldId, usize)> = BTreeMap::new();
            for &u in self.m.successors_of(agent, w) {
                let class = self.history.level(below).class_of(u);
                groups.entry(class).or_insert((u, 0)).1 += 1;
            }
            let mut realized = Vec::new();
            for (rep, n) in groups.into_values() {
                let chi_t = self.chi(below, rep);
                parts.push(Arc::new(Formula::diamond(name.clone(), n.min(self.c), chi_t.clone())));
                if n < self.c {
                    parts.push(Arc::new(Formula::not(Formula::diamond(name.clone(), n + 1, chi_t.clone()))));
                }
                realized.push(chi_t);
            }
            match self.mode {
                ChiMode::Literal => {}
                ChiMode::Complete => {
                    if realized.is_empty() {
                        parts.push(Arc::new(Formula::not(Formula::diamond(name, 1, Formula::Top))));
                    } else if !realized.iter().any(|f| **f == Formula::Top) {
                        let cover = Formula::disj(realized);
                        parts.push(Arc::new(Formula::not(Formula::diamond(name, 1, Formula::not(cover)))));
                    }
                }
                ChiMode::Catalog(cat) => {
                    let hits = self.catalog_hits(cat, below).to_vec();
                    for (entry, ext) in cat.level(below).iter().zip(hits) {
                        let seen = self.m.successors_of(agent, w).iter().any(|&u| ext.contains(u));
                        if !seen {
                            parts.push(Arc::new(Formula::not(Formula::diamond(name.clone(), 1, entry.chi.clone()))));
                        }
                    }
                }
            }
        }
        Formula::conj(parts)
    }

    fn catalog_hits(&mut self, cat: &TypeCatalog, level: usize) -> &[Extension] {
        let m = self.m;
        self.catalog_hits.entry(level).or_insert_with(|| {
            let mut ev = Evaluator::new(m);
            cat.level(level).iter().map(|e| ev.shared(&e.chi).as_ref().clone()).collect()
        })
    }
}

/// Root valuation and, per agent, capped child counts indexed by the type
/// ids of the level below. Level 0 types have no counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TypeShape {
    pub valuation: Vec<bool>,
    pub counts: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub id: usize,
    pub chi: Arc<Formula>,
    /// Canonical tree realizing the type, pointed at its root.
    pub model: PointedStructure,
    pub shape: TypeShape,
}

impl Serialize for CatalogEntry {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let model = StructureFile::from_pointed(format!("type{}", self.id), self.model.clone()).to_string();
        let mut st = s.serialize_struct("CatalogEntry", 3)?;
        st.serialize_field("id", &self.id)?;
        st.serialize_field("formula", &self.chi.to_string())?;
        st.serialize_field("model", &model)?;
        st.end()
    }
}

/// All `≃C^{c,m}` types over a signature for `m = 0..=l`.
#[derive(Debug, Clone)]
pub struct TypeCatalog {
    signature: Signature,
    c: usize,
    l: usize,
    levels: Vec<Vec<CatalogEntry>>,
    // union of the top level's canonical models and the roots in it
    top_union: KripkeStructure,
    top_roots: Vec<WorldId>,
}

impl TypeCatalog {
    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn bound(&self) -> FragmentBound {
        FragmentBound::new(self.c, self.l)
    }

    /// Entries at level `l`.
    pub fn entries(&self) -> &[CatalogEntry] {
        &self.levels[self.l]
    }

    pub fn level(&self, m: usize) -> &[CatalogEntry] {
        &self.levels[m]
    }

    pub fn len(&self) -> usize {
        self.entries().len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries().is_empty()
    }

    /// Ids of the top-level entries whose canonical model satisfies `phi`.
    pub fn satisfying(&self, phi: &Formula) -> Result<Vec<usize>> {
        let ext = extension(&self.top_union, phi)?;
        Ok(self
            .top_roots
            .iter()
            .enumerate()
            .filter(|(_, r)| ext.contains(**r))
            .map(|(id, _)| id)
            .collect())
    }
}

impl Serialize for TypeCatalog {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("TypeCatalog", 4)?;
        st.serialize_field("c", &self.c)?;
        st.serialize_field("l", &self.l)?;
        st.serialize_field("type_count", &self.len())?;
        st.serialize_field("entries", self.entries())?;
        st.end()
    }
}

/// Number of types per level, `None` on overflow.
///
/// `N_0 = 2^P` and `N_{m+1} = 2^P (c+1)^(A N_m)`.
pub fn catalog_size(sig: &Signature, c: usize, l: usize) -> Option<Vec<usize>> {
    let valuations = 1usize.checked_shl(u32::try_from(sig.props().len()).ok()?)?;
    let agents = sig.agents().len();
    let mut sizes = vec![valuations];
    for m in 0..l {
        let digits = agents.checked_mul(sizes[m])?;
        let combos = (c + 1).checked_pow(u32::try_from(digits).ok()?)?;
        sizes.push(valuations.checked_mul(combos)?);
    }
    Some(sizes)
}

/// Enumerates every type up to level `l`, refusing when a level would have
/// more than `guard` types.
pub fn enumerate_types(sig: &Signature, c: usize, l: usize, guard: usize) -> Result<TypeCatalog> {
    let sizes = catalog_size(sig, c, l)
        .ok_or_else(|| Error::ResourceLimit(format!("type count at c = {c}, l = {l} overflows")))?;
    if let Some(&big) = sizes.iter().find(|&&n| n > guard) {
        return Err(Error::ResourceLimit(format!(
            "catalog at c = {c}, l = {l} needs {big} types per level, guard is {guard}"
        )));
    }
    let props = sig.props().len();
    let agents = sig.agents().len();
    let valuations: Vec<Vec<bool>> = (0..1usize << props)
        .map(|bits| (0..props).map(|j| bits >> j & 1 == 1).collect())
        .collect();

    let mut shapes: Vec<Vec<TypeShape>> = Vec::new();
    let mut tree_sizes: Vec<Vec<usize>> = Vec::new();
    let mut levels: Vec<Vec<CatalogEntry>> = Vec::new();
    let mut top = None;
    for m in 0..=l {
        let level_shapes: Vec<TypeShape> = if m == 0 {
            valuations
                .iter()
                .map(|v| TypeShape { valuation: v.clone(), counts: Vec::new() })
                .collect()
        } else {
            let below = shapes[m - 1].len();
            let mut out = Vec::with_capacity(sizes[m]);
            for v in &valuations {
                let mut digits = vec![0usize; agents * below];
                loop {
                    out.push(TypeShape {
                        valuation: v.clone(),
                        counts: digits.chunks(below.max(1)).take(agents).map(<[usize]>::to_vec).collect(),
                    });
                    if !odometer(&mut digits, c) {
                        break;
                    }
                }
            }
            out
        };
        let sizes_here: Vec<usize> = level_shapes
            .iter()
            .map(|s| {
                1 + s
                    .counts
                    .iter()
                    .flat_map(|per| per.iter().enumerate().map(|(t, &n)| n * tree_sizes[m - 1][t]))
                    .sum::<usize>()
            })
            .collect();
        if sizes_here.iter().sum::<usize>() > CATALOG_WORLD_GUARD {
            return Err(Error::ResourceLimit(format!(
                "canonical models at level {m} exceed {CATALOG_WORLD_GUARD} worlds"
            )));
        }
        shapes.push(level_shapes);
        tree_sizes.push(sizes_here);

        let mut union = KripkeBuilder::new(sig.clone(), 0);
        let roots: Vec<WorldId> = (0..shapes[m].len()).map(|id| plant(&shapes, &mut union, m, id)).collect();
        let union = union.build()?;
        let mut builder = ChiBuilder::new(&union, c, m, ChiMode::Complete);
        let top_level = builder.history.level(m);
        let mut seen: Vec<usize> = roots.iter().map(|&r| top_level.class_of(r)).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), roots.len(), "canonical models must be pairwise inequivalent");

        let entries = roots
            .iter()
            .enumerate()
            .map(|(id, &root)| {
                let mut one = KripkeBuilder::new(sig.clone(), 0);
                plant(&shapes, &mut one, m, id);
                CatalogEntry {
                    id,
                    chi: builder.chi(m, root),
                    model: one.build().and_then(|s| s.pointed(WorldId(0))).expect("trees have a root"),
                    shape: shapes[m][id].clone(),
                }
            })
            .collect();
        levels.push(entries);
        if m == l {
            top = Some((union, roots));
        }
    }
    let (top_union, top_roots) = top.expect("level l was built");
    Ok(TypeCatalog {
        signature: sig.clone(),
        c,
        l,
        levels,
        top_union,
        top_roots,
    })
}

/// Advances a base-`(c+1)` counter; false once it wraps around.
fn odometer(digits: &mut [usize], c: usize) -> bool {
    for d in digits.iter_mut() {
        if *d < c {
            *d += 1;
            return true;
        }
        *d = 0;
    }
    false
}

fn plant(shapes: &[Vec<TypeShape>], b: &mut KripkeBuilder, level: usize, id: usize) -> WorldId {
    let shape = &shapes[level][id];
    let root = b.add_world();
    b.set_labels(root, &shape.valuation).expect("valuation matches the signature");
    for (agent, per) in shape.counts.iter().enumerate() {
        for (t, &n) in per.iter().enumerate() {
            for _ in 0..n {
                let child = plant(shapes, b, level - 1, t);
                b.edge_by_index(agent, root, child).expect("worlds were just added");
            }
        }
    }
    root
}

/// The disjunction of the characteristic formulas of all `(c,l)`-types
/// satisfying `phi`.
pub fn normal_form(phi: &Formula, sig: &Signature, c: usize, l: usize) -> Result<Formula> {
    phi.ensure_in_fragment(FragmentBound::new(c, l))?;
    phi.check_signature(sig)?;
    let catalog = enumerate_types(sig, c, l, DEFAULT_CATALOG_GUARD)?;
    normal_form_in(phi, &catalog)
}

/// [`normal_form`] against an existing catalog.
pub fn normal_form_in(phi: &Formula, catalog: &TypeCatalog) -> Result<Formula> {
    phi.ensure_in_fragment(catalog.bound())?;
    let hits = catalog.satisfying(phi)?;
    Ok(Formula::disj(hits.into_iter().map(|id| catalog.entries()[id].chi.clone())))
}

/// A formula of `CML_{c,l}` true at `a` and false at `b`, or `None` when
/// the two are `(c,l)`-equivalent.
///
/// Starts from `χ^{c,l}_a` and drops top-level conjuncts while the
/// separation survives: negated conjuncts first, deeper ones first within
/// each group.
pub fn distinguishing_formula(a: &PointedStructure, b: &PointedStructure, c: usize, l: usize) -> Result<Option<Formula>> {
    if bounded_equivalence(a, b, c, l)?.equivalent {
        return Ok(None);
    }
    let chi = characteristic_formula(a, c, l);
    let mut order: Vec<Arc<Formula>> = chi.conjuncts();
    // stable sort keeps construction order among ties
    order.sort_by_key(|f| (!matches!(**f, Formula::Not(_)), std::cmp::Reverse(f.nd())));
    let mut kept = order.clone();
    for f in &order {
        let trial: Vec<Arc<Formula>> = kept.iter().filter(|g| !Arc::ptr_eq(g, f)).cloned().collect();
        if !satisfies(b, &Formula::conj(trial.iter().cloned()))? {
            kept = trial;
        }
    }
    let psi = Formula::conj(kept);
    debug_assert!(!satisfies(b, &psi)? && satisfies(a, &psi)?);
    Ok(Some(psi))
}
