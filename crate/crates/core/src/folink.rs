//! First-order logic over Kripke structures: syntax, evaluation, the
//! standard translation of graded modal formulas, Ehrenfeucht-Fraïssé
//! equivalence, instance-level locality checks, locality padding, the
//! upgrading pipeline, and an empirical search for the grading bound `c`.
//!
//! Concrete syntax: `true`, `false`, `p(x)`, `Ea(x,y)` (the edge relation of
//! agent `a`), `x = y`, `!f`, `(f & g)`, `(f | g)`, `E y f`, `A y f`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::equivalence::{bounded_equivalence, full_graded_bisimilarity, Cap, ColorHistory};
use crate::error::{Error, Result};
use crate::kripke::{
    copies, disjoint_union, is_rooted_treelike, restrict_to_neighborhood, unravel, KripkeBuilder,
    KripkeStructure, PointedStructure, Signature, StructureFile, WorldId,
};
use crate::syntax::Formula;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FoFormula {
    Top,
    Bot,
    Prop { prop: String, var: String },
    Edge { agent: String, from: String, to: String },
    Eq(String, String),
    Not(Box<FoFormula>),
    And(Box<FoFormula>, Box<FoFormula>),
    Or(Box<FoFormula>, Box<FoFormula>),
    Exists(String, Box<FoFormula>),
    Forall(String, Box<FoFormula>),
}

impl FoFormula {
    pub fn not(f: FoFormula) -> Self {
        FoFormula::Not(Box::new(f))
    }

    pub fn and(a: FoFormula, b: FoFormula) -> Self {
        FoFormula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: FoFormula, b: FoFormula) -> Self {
        FoFormula::Or(Box::new(a), Box::new(b))
    }

    pub fn exists(var: impl Into<String>, body: FoFormula) -> Self {
        FoFormula::Exists(var.into(), Box::new(body))
    }

    pub fn forall(var: impl Into<String>, body: FoFormula) -> Self {
        FoFormula::Forall(var.into(), Box::new(body))
    }

    /// Left-nested conjunction; `Top` operands are dropped.
    pub fn conj(items: impl IntoIterator<Item = FoFormula>) -> Self {
        items
            .into_iter()
            .filter(|f| *f != FoFormula::Top)
            .reduce(FoFormula::and)
            .unwrap_or(FoFormula::Top)
    }

    /// Quantifier rank.
    pub fn qr(&self) -> usize {
        match self {
            FoFormula::Top | FoFormula::Bot | FoFormula::Prop { .. } | FoFormula::Edge { .. } | FoFormula::Eq(..) => 0,
            FoFormula::Not(f) => f.qr(),
            FoFormula::And(a, b) | FoFormula::Or(a, b) => a.qr().max(b.qr()),
            FoFormula::Exists(_, f) | FoFormula::Forall(_, f) => f.qr() + 1,
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free<'f>(&'f self, bound: &mut Vec<&'f str>, out: &mut BTreeSet<String>) {
        let mut note = |v: &str, bound: &Vec<&str>| {
            if !bound.contains(&v) {
                out.insert(v.to_string());
            }
        };
        match self {
            FoFormula::Top | FoFormula::Bot => {}
            FoFormula::Prop { var, .. } => note(var, bound),
            FoFormula::Edge { from, to, .. } | FoFormula::Eq(from, to) => {
                note(from, bound);
                note(to, bound);
            }
            FoFormula::Not(f) => f.collect_free(bound, out),
            FoFormula::And(a, b) | FoFormula::Or(a, b) => {
                a.collect_free(bound, out);
                b.collect_free(bound, out);
            }
            FoFormula::Exists(v, f) | FoFormula::Forall(v, f) => {
                bound.push(v);
                f.collect_free(bound, out);
                bound.pop();
            }
        }
    }

    pub fn check_signature(&self, sig: &Signature) -> Result<()> {
        match self {
            FoFormula::Top | FoFormula::Bot | FoFormula::Eq(..) => Ok(()),
            FoFormula::Prop { prop, .. } => sig.prop_index(prop).map(drop),
            FoFormula::Edge { agent, .. } => sig.agent_index(agent).map(drop),
            FoFormula::Not(f) | FoFormula::Exists(_, f) | FoFormula::Forall(_, f) => f.check_signature(sig),
            FoFormula::And(a, b) | FoFormula::Or(a, b) => {
                a.check_signature(sig)?;
                b.check_signature(sig)
            }
        }
    }
}

impl fmt::Display for FoFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FoFormula::Top => f.write_str("true"),
            FoFormula::Bot => f.write_str("false"),
            FoFormula::Prop { prop, var } => write!(f, "{prop}({var})"),
            FoFormula::Edge { agent, from, to } => write!(f, "E{agent}({from},{to})"),
            FoFormula::Eq(a, b) => write!(f, "{a} = {b}"),
            FoFormula::Not(g) => write!(f, "!{g}"),
            FoFormula::And(a, b) => write!(f, "({a} & {b})"),
            FoFormula::Or(a, b) => write!(f, "({a} | {b})"),
            FoFormula::Exists(v, g) => write!(f, "E {v} {g}"),
            FoFormula::Forall(v, g) => write!(f, "A {v} {g}"),
        }
    }
}

impl std::str::FromStr for FoFormula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_fo(s)
    }
}

pub fn parse_fo(text: &str) -> Result<FoFormula> {
    let mut p = FoParser { src: text, pos: 0 };
    let f = p.formula()?;
    p.skip_ws();
    if p.pos < text.len() {
        return Err(p.error("trailing input"));
    }
    Ok(f)
}

struct FoParser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> FoParser<'a> {
    fn error(&self, message: impl Into<String>) -> Error {
        Error::FormulaSyntax {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(self.error(format!("expected `{c}`")))
        }
    }

    fn ident(&mut self) -> Result<&'a str> {
        self.skip_ws();
        let src = self.src;
        let rest = &src[self.pos..];
        if !rest.starts_with(|c: char| c.is_ascii_alphabetic()) {
            return Err(self.error("expected an identifier"));
        }
        let end = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(rest.len());
        self.pos += end;
        Ok(&rest[..end])
    }

    fn formula(&mut self) -> Result<FoFormula> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some('!') => {
                self.pos += 1;
                Ok(FoFormula::not(self.formula()?))
            }
            Some('(') => {
                self.pos += 1;
                let left = self.formula()?;
                let op = self.peek();
                if !matches!(op, Some('&' | '|')) {
                    return Err(self.error("expected `&` or `|`"));
                }
                self.pos += 1;
                let right = self.formula()?;
                self.expect(')')?;
                Ok(if op == Some('&') {
                    FoFormula::and(left, right)
                } else {
                    FoFormula::or(left, right)
                })
            }
            Some(_) => self.atom_or_quantifier(),
        }
    }

    fn atom_or_quantifier(&mut self) -> Result<FoFormula> {
        let start = self.pos;
        let name = self.ident()?;
        match name {
            "true" => return Ok(FoFormula::Top),
            "false" => return Ok(FoFormula::Bot),
            _ => {}
        }
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let first = self.ident()?.to_string();
                let second = if self.peek() == Some(',') {
                    self.pos += 1;
                    Some(self.ident()?.to_string())
                } else {
                    None
                };
                self.expect(')')?;
                match second {
                    None => Ok(FoFormula::Prop {
                        prop: name.to_string(),
                        var: first,
                    }),
                    Some(to) if name.len() > 1 && name.starts_with('E') => Ok(FoFormula::Edge {
                        agent: name[1..].to_string(),
                        from: first,
                        to,
                    }),
                    Some(_) => Err(Error::FormulaSyntax {
                        offset: start,
                        message: format!("binary relation `{name}` must be `E<agent>`"),
                    }),
                }
            }
            Some('=') => {
                self.pos += 1;
                Ok(FoFormula::Eq(name.to_string(), self.ident()?.to_string()))
            }
            Some(c) if (name == "E" || name == "A") && c.is_ascii_alphabetic() => {
                let var = self.ident()?.to_string();
                let body = self.formula()?;
                Ok(if name == "E" {
                    FoFormula::exists(var, body)
                } else {
                    FoFormula::forall(var, body)
                })
            }
            _ => Err(Error::FormulaSyntax {
                offset: start,
                message: format!("expected an atom or quantifier at `{name}`"),
            }),
        }
    }
}

/// Standard translation with free variable `x`; graded diamonds become
/// blocks of existential quantifiers over pairwise distinct successors.
pub fn standard_translation(phi: &Formula, x: &str) -> FoFormula {
    let mut fresh = 0usize;
    translate(phi, x, &mut fresh)
}

fn translate(phi: &Formula, x: &str, fresh: &mut usize) -> FoFormula {
    match phi {
        Formula::Top => FoFormula::Top,
        Formula::Bot => FoFormula::Bot,
        Formula::Prop(p) => FoFormula::Prop {
            prop: p.clone(),
            var: x.to_string(),
        },
        Formula::Not(f) => FoFormula::not(translate(f, x, fresh)),
        Formula::And(a, b) => FoFormula::and(translate(a, x, fresh), translate(b, x, fresh)),
        Formula::Or(a, b) => FoFormula::or(translate(a, x, fresh), translate(b, x, fresh)),
        Formula::Diamond { agent, grade, body } => {
            let vars: Vec<String> = (0..*grade)
                .map(|_| loop {
                    *fresh += 1;
                    let v = format!("y{fresh}");
                    if v != x {
                        break v;
                    }
                })
                .collect();
            let mut parts = Vec::new();
            for (m, a) in vars.iter().enumerate() {
                for b in &vars[m + 1..] {
                    parts.push(FoFormula::not(FoFormula::Eq(a.clone(), b.clone())));
                }
            }
            for v in &vars {
                parts.push(FoFormula::Edge {
                    agent: agent.clone(),
                    from: x.to_string(),
                    to: v.clone(),
                });
            }
            for v in &vars {
                parts.push(translate(body, v, fresh));
            }
            vars.into_iter()
                .rev()
                .fold(FoFormula::conj(parts), |acc, v| FoFormula::exists(v, acc))
        }
    }
}

/// Tarskian evaluation; quantifiers range over all worlds.
pub fn fo_eval(m: &KripkeStructure, env: &[(&str, WorldId)], psi: &FoFormula) -> Result<bool> {
    psi.check_signature(m.signature())?;
    for v in psi.free_vars() {
        if !env.iter().any(|(name, _)| *name == v) {
            return Err(Error::UnassignedVariable(v));
        }
    }
    let mut stack: Vec<(&str, WorldId)> = Vec::with_capacity(env.len() + psi.qr());
    for &(name, w) in env {
        m.check_world(w)?;
        stack.push((name, w));
    }
    Ok(eval(m, &mut stack, psi))
}

fn lookup(stack: &[(&str, WorldId)], v: &str) -> WorldId {
    stack
        .iter()
        .rev()
        .find(|(name, _)| *name == v)
        .map(|&(_, w)| w)
        .expect("free variables were checked")
}

fn eval<'f>(m: &KripkeStructure, stack: &mut Vec<(&'f str, WorldId)>, psi: &'f FoFormula) -> bool {
    let sig = m.signature();
    match psi {
        FoFormula::Top => true,
        FoFormula::Bot => false,
        FoFormula::Prop { prop, var } => m.holds(sig.prop_index(prop).expect("checked"), lookup(stack, var)),
        FoFormula::Edge { agent, from, to } => m.has_edge(
            sig.agent_index(agent).expect("checked"),
            lookup(stack, from),
            lookup(stack, to),
        ),
        FoFormula::Eq(a, b) => lookup(stack, a) == lookup(stack, b),
        FoFormula::Not(f) => !eval(m, stack, f),
        FoFormula::And(a, b) => eval(m, stack, a) && eval(m, stack, b),
        FoFormula::Or(a, b) => eval(m, stack, a) || eval(m, stack, b),
        FoFormula::Exists(v, f) | FoFormula::Forall(v, f) => {
            let want = matches!(psi, FoFormula::Exists(..));
            for w in m.worlds() {
                stack.push((v, w));
                let value = eval(m, stack, f);
                stack.pop();
                if value == want {
                    return want;
                }
            }
            !want
        }
    }
}

/// Default bound on explored EF positions.
pub const DEFAULT_EF_BUDGET: usize = 20_000_000;

/// `A, w ≡^{FO_q} B, w'` with the points as distinguished elements.
pub fn fo_q_equivalent(a: &PointedStructure, b: &PointedStructure, q: usize) -> Result<bool> {
    fo_q_equivalent_with(a, b, q, DEFAULT_EF_BUDGET)
}

pub fn fo_q_equivalent_with(a: &PointedStructure, b: &PointedStructure, q: usize, budget: usize) -> Result<bool> {
    a.signature().ensure_same(b.signature())?;
    let mut ef = Ef {
        a: a.structure(),
        b: b.structure(),
        memo: HashMap::new(),
        steps: 0,
        budget,
    };
    let mut ta = Vec::with_capacity(q + 1);
    let mut tb = Vec::with_capacity(q + 1);
    if !ef.compatible(&ta, &tb, a.point(), b.point()) {
        return Ok(false);
    }
    ta.push(a.point());
    tb.push(b.point());
    ef.play(&mut ta, &mut tb, q)
}

struct Ef<'s> {
    a: &'s KripkeStructure,
    b: &'s KripkeStructure,
    memo: HashMap<(Vec<WorldId>, Vec<WorldId>), bool>,
    steps: usize,
    budget: usize,
}

impl Ef<'_> {
    /// Whether extending the partial isomorphism `ta -> tb` by `x -> y` keeps it one.
    fn compatible(&self, ta: &[WorldId], tb: &[WorldId], x: WorldId, y: WorldId) -> bool {
        if self.a.label(x) != self.b.label(y) {
            return false;
        }
        let agents = self.a.signature().agents().len();
        for agent in 0..agents {
            if self.a.has_edge(agent, x, x) != self.b.has_edge(agent, y, y) {
                return false;
            }
        }
        for (&u, &v) in ta.iter().zip(tb) {
            if (u == x) != (v == y) {
                return false;
            }
            for agent in 0..agents {
                if self.a.has_edge(agent, u, x) != self.b.has_edge(agent, v, y)
                    || self.a.has_edge(agent, x, u) != self.b.has_edge(agent, y, v)
                {
                    return false;
                }
            }
        }
        true
    }

    fn play(&mut self, ta: &mut Vec<WorldId>, tb: &mut Vec<WorldId>, rounds: usize) -> Result<bool> {
        if rounds == 0 {
            return Ok(true);
        }
        if let Some(&v) = self.memo.get(&(ta.clone(), tb.clone())) {
            return Ok(v);
        }
        self.steps += 1;
        if self.steps > self.budget {
            return Err(Error::ResourceLimit(format!(
                "Ehrenfeucht-Fraïssé search exceeded {} positions",
                self.budget
            )));
        }
        let value = self.forth(ta, tb, rounds, false)? && self.forth(ta, tb, rounds, true)?;
        self.memo.insert((ta.clone(), tb.clone()), value);
        Ok(value)
    }

    /// Spoiler picks in `A` (or in `B` when `back`); Duplicator must answer.
    fn forth(&mut self, ta: &mut Vec<WorldId>, tb: &mut Vec<WorldId>, rounds: usize, back: bool) -> Result<bool> {
        let (spoiler_side, dup_side) = if back { (self.b, self.a) } else { (self.a, self.b) };
        for x in spoiler_side.worlds() {
            let mut answered = false;
            for y in dup_side.worlds() {
                let (xa, yb) = if back { (y, x) } else { (x, y) };
                if !self.compatible(ta, tb, xa, yb) {
                    continue;
                }
                ta.push(xa);
                tb.push(yb);
                let ok = self.play(ta, tb, rounds - 1);
                ta.pop();
                tb.pop();
                if ok? {
                    answered = true;
                    break;
                }
            }
            if !answered {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Whether `psi` has the same value at `w` in `M` and in `M↾N^l(w)`.
///
/// This checks one instance; it does not decide locality of `psi`.
pub fn is_l_local(psi: &FoFormula, var: &str, m: &PointedStructure, l: usize) -> Result<bool> {
    let free = psi.free_vars();
    if free.iter().any(|v| v != var) {
        return Err(Error::Arity(format!(
            "expected at most the free variable `{var}`, found {{{}}}",
            free.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let near = restrict_to_neighborhood(m, l)?;
    Ok(fo_eval(m.structure(), &[(var, m.point())], psi)?
        == fo_eval(near.structure(), &[(var, near.point())], psi)?)
}

/// `(q⊗M ⊕ M,w ⊕ q⊗N, q⊗M ⊕ N,w ⊕ q⊗N)` with `N = M↾N^l(w)`, each
/// pointed at `w` in its middle component.
pub fn locality_padding(m: &PointedStructure, l: usize, q: usize) -> Result<(PointedStructure, PointedStructure)> {
    let near = restrict_to_neighborhood(m, l)?;
    let many = copies(m.structure(), q);
    let many_near = copies(near.structure(), q);
    let (wide, p) = disjoint_union(&[&many, m.structure(), &many_near], Some((1, m.point())))?;
    let (narrow, p2) = disjoint_union(&[&many, near.structure(), &many_near], Some((1, near.point())))?;
    Ok((
        wide.pointed(p.expect("point requested"))?,
        narrow.pointed(p2.expect("point requested"))?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Holds,
    Fails,
    NotApplicable,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineStep {
    pub step: usize,
    pub name: &'static str,
    pub status: StepStatus,
    pub detail: String,
}

/// Where the pipeline's `c` came from.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CSource {
    Supplied,
    Searched { search_l: usize, size_bound: usize, exhaustive: bool },
}

#[derive(Debug, Clone, Serialize)]
pub struct UpgradeReport {
    pub formula: String,
    pub translation: String,
    pub q: usize,
    pub l: usize,
    pub c: usize,
    pub c_source: CSource,
    /// `A ≃C^{c,l} B`.
    pub equivalent: bool,
    pub truth_a: bool,
    pub truth_b: bool,
    pub steps: Vec<PipelineStep>,
    pub notes: Vec<String>,
}

impl UpgradeReport {
    /// No step failed, and equivalent inputs agree on the formula.
    pub fn consistent(&self) -> bool {
        self.steps.iter().all(|s| s.status != StepStatus::Fails) && (!self.equivalent || self.truth_a == self.truth_b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UpgradeOptions {
    /// Overrides `l = 2^q - 1`.
    pub l: Option<usize>,
    /// Skips the search for `c`.
    pub c: Option<usize>,
    /// Caps the `l` used when searching for `c`.
    pub search_l_cap: Option<usize>,
    pub size_bound: usize,
    /// Largest world-count product for which the tree step also runs the
    /// FO_q game.
    pub fo_product_guard: usize,
}

impl Default for UpgradeOptions {
    fn default() -> Self {
        UpgradeOptions {
            l: None,
            c: None,
            search_l_cap: Some(1),
            size_bound: 6,
            fo_product_guard: 400,
        }
    }
}

/// Checks the instance-checkable steps of the chain
/// `A ~ A* ~ A*↾N^l ~ B*↾N^l ~ B* ~ B` for `ψ = ST(φ)`.
pub fn upgrade_pipeline(
    phi: &Formula,
    a: &PointedStructure,
    b: &PointedStructure,
    options: UpgradeOptions,
) -> Result<UpgradeReport> {
    a.signature().ensure_same(b.signature())?;
    phi.check_signature(a.signature())?;
    let psi = standard_translation(phi, "x");
    let q = psi.qr();
    let l = match options.l {
        Some(l) => l,
        None => u32::try_from(q)
            .ok()
            .and_then(|q| 2usize.checked_pow(q))
            .map(|p| p - 1)
            .ok_or_else(|| Error::ResourceLimit(format!("l = 2^{q} - 1 overflows")))?,
    };
    let mut notes = Vec::new();
    let (c, c_source) = match options.c {
        Some(c) => (c, CSource::Supplied),
        None => {
            let search_l = options.search_l_cap.map_or(l, |cap| l.min(cap));
            if search_l < l {
                notes.push(format!("c searched at l = {search_l} instead of l = {l} to bound the FO game cost"));
            }
            let found = find_c(q, search_l, a.signature(), options.size_bound, FindCOptions::default())?;
            (
                found.c,
                CSource::Searched {
                    search_l,
                    size_bound: options.size_bound,
                    exhaustive: found.exhaustive,
                },
            )
        }
    };

    let truth = |m: &PointedStructure| fo_eval(m.structure(), &[("x", m.point())], &psi);
    let a_star = unravel(a, l + 1)?;
    let b_star = unravel(b, l + 1)?;
    let a_tree = restrict_to_neighborhood(&a_star, l)?;
    let b_tree = restrict_to_neighborhood(&b_star, l)?;
    let equivalent = bounded_equivalence(a, b, c, l)?.equivalent;
    let (truth_a, truth_b) = (truth(a)?, truth(b)?);

    let mut steps = Vec::new();
    for (step, m, m_star, side) in [(1, a, &a_star, "A"), (5, b, &b_star, "B")] {
        let bisimilar = full_graded_bisimilarity(m, m_star)?.equivalent;
        let same = truth(m)? == truth(m_star)?;
        steps.push(PipelineStep {
            step,
            name: "graded bisimulation invariance",
            status: if bisimilar && same { StepStatus::Holds } else { StepStatus::Fails },
            detail: format!("{side} vs its unravelling to depth {}: bisimilar = {bisimilar}, same truth value = {same}", l + 1),
        });
    }
    for (step, m_star, side) in [(2, &a_star, "A*"), (4, &b_star, "B*")] {
        let treelike = is_rooted_treelike(m_star.structure(), m_star.point(), l)?;
        let local = is_l_local(&psi, "x", m_star, l)?;
        let status = if treelike.is_ok() && local { StepStatus::Holds } else { StepStatus::Fails };
        let detail = match treelike {
            Ok(()) => format!("{side} is rooted tree-like to depth {l}; value unchanged on N^{l}: {local}"),
            Err(why) => format!("{side} is not rooted tree-like to depth {l}: {why}"),
        };
        steps.push(PipelineStep { step, name: "locality", status, detail });
    }
    let middle = if !equivalent {
        PipelineStep {
            step: 3,
            name: "choice of c",
            status: StepStatus::NotApplicable,
            detail: format!("A and B are not ({c},{l})-equivalent"),
        }
    } else {
        let trees_equivalent = bounded_equivalence(&a_tree, &b_tree, c, l)?.equivalent;
        let same = truth(&a_tree)? == truth(&b_tree)?;
        let product = a_tree.structure().world_count() * b_tree.structure().world_count();
        let fo = if product <= options.fo_product_guard {
            Some(fo_q_equivalent(&a_tree, &b_tree, q)?)
        } else {
            None
        };
        let fo_text = match fo {
            Some(v) => format!("FO_{q}-equivalent = {v}"),
            None => format!("FO_{q} game skipped ({product} position pairs exceed the guard)"),
        };
        PipelineStep {
            step: 3,
            name: "choice of c",
            status: if trees_equivalent && same && fo != Some(false) {
                StepStatus::Holds
            } else {
                StepStatus::Fails
            },
            detail: format!("restricted trees ({c},{l})-equivalent = {trees_equivalent}, same truth value = {same}, {fo_text}"),
        }
    };
    steps.push(middle);
    steps.sort_by_key(|s| s.step);

    Ok(UpgradeReport {
        formula: phi.to_string(),
        translation: psi.to_string(),
        q,
        l,
        c,
        c_source,
        equivalent,
        truth_a,
        truth_b,
        steps,
        notes,
    })
}

/// A finite rooted tree: root valuation and agent-labelled children.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Tree {
    label: Vec<bool>,
    children: Vec<(usize, Tree)>,
}

impl Tree {
    fn size(&self) -> usize {
        1 + self.children.iter().map(|(_, t)| t.size()).sum::<usize>()
    }

    fn plant(&self, b: &mut KripkeBuilder) -> WorldId {
        let root = b.add_world();
        b.set_labels(root, &self.label).expect("valuation matches the signature");
        for (agent, child) in &self.children {
            let c = child.plant(b);
            b.edge_by_index(*agent, root, c).expect("worlds were just added");
        }
        root
    }

    fn to_pointed(&self, sig: &Signature) -> PointedStructure {
        let mut b = KripkeBuilder::new(sig.clone(), 0);
        self.plant(&mut b);
        b.build().and_then(|m| m.pointed(WorldId(0))).expect("trees have a root")
    }
}

/// All trees of depth `<= depth` with at most `max_size` nodes, up to
/// isomorphism, or `None` once more than `budget` would be produced.
fn enumerate_trees(sig: &Signature, depth: usize, max_size: usize, budget: usize) -> Option<Vec<Tree>> {
    if max_size == 0 {
        return Some(Vec::new());
    }
    let props = sig.props().len();
    let labels: Vec<Vec<bool>> = (0..1usize << props)
        .map(|bits| (0..props).map(|j| bits >> j & 1 == 1).collect())
        .collect();
    let mut level: Vec<Tree> = labels
        .iter()
        .map(|l| Tree { label: l.clone(), children: Vec::new() })
        .collect();
    if level.len() > budget {
        return None;
    }
    for _ in 0..depth {
        let options: Vec<(usize, &Tree, usize)> = (0..sig.agents().len())
            .flat_map(|a| level.iter().map(move |t| (a, t, t.size())))
            .collect();
        let mut next = Vec::new();
        for label in &labels {
            let mut chosen = Vec::new();
            if !multisets(&options, 0, max_size - 1, &mut chosen, &mut |kids| {
                next.push(Tree {
                    label: label.clone(),
                    children: kids.iter().map(|&(a, t, _)| (a, t.clone())).collect(),
                });
                next.len() <= budget
            }) {
                return None;
            }
        }
        level = next;
    }
    Some(level)
}

/// Calls `f` on every multiset of `options` (non-decreasing index
/// sequences) with total size at most `room`; stops when `f` returns false.
fn multisets<'t>(
    options: &[(usize, &'t Tree, usize)],
    start: usize,
    room: usize,
    chosen: &mut Vec<(usize, &'t Tree, usize)>,
    f: &mut dyn FnMut(&[(usize, &'t Tree, usize)]) -> bool,
) -> bool {
    if !f(chosen) {
        return false;
    }
    for i in start..options.len() {
        if options[i].2 <= room {
            chosen.push(options[i]);
            let go_on = multisets(options, i, room - options[i].2, chosen, f);
            chosen.pop();
            if !go_on {
                return false;
            }
        }
    }
    true
}

fn sample_tree<R: Rng>(rng: &mut R, sig: &Signature, depth: usize, room: &mut usize) -> Tree {
    *room -= 1;
    let label = (0..sig.props().len()).map(|_| rng.gen_bool(0.5)).collect();
    let mut children = Vec::new();
    if depth > 0 && !sig.agents().is_empty() {
        let want = rng.gen_range(0..=(*room).min(3));
        for _ in 0..want {
            if *room == 0 {
                break;
            }
            let agent = rng.gen_range(0..sig.agents().len());
            children.push((agent, sample_tree(rng, sig, depth - 1, room)));
        }
    }
    children.sort();
    Tree { label, children }
}

#[derive(Debug, Clone, Copy)]
pub struct FindCOptions {
    /// Largest number of trees enumerated before switching to sampling.
    pub enumeration_budget: usize,
    pub samples: usize,
    pub seed: u64,
}

impl Default for FindCOptions {
    fn default() -> Self {
        FindCOptions {
            enumeration_budget: 20_000,
            samples: 2_000,
            seed: 0,
        }
    }
}

/// A pair of candidate trees that are `(c,l)`-equivalent but not
/// FO_q-equivalent.
#[derive(Debug, Clone, Serialize)]
pub struct Counterexample {
    pub c: usize,
    pub left: String,
    pub right: String,
}

/// The least `c` consistent with the candidate trees. Empirical only: a
/// larger candidate set may raise it.
#[derive(Debug, Clone, Serialize)]
pub struct FindCReport {
    pub q: usize,
    pub l: usize,
    pub size_bound: usize,
    pub c: usize,
    /// True when every tree within the bounds was considered.
    pub exhaustive: bool,
    pub candidates: usize,
    /// One counterexample for every rejected `c < self.c`.
    pub log: Vec<Counterexample>,
}

pub fn find_c(q: usize, l: usize, sig: &Signature, size_bound: usize, options: FindCOptions) -> Result<FindCReport> {
    let (trees, exhaustive) = match enumerate_trees(sig, l, size_bound, options.enumeration_budget) {
        Some(all) => (all, true),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            let mut sampled: Vec<Tree> = (0..options.samples)
                .map(|_| {
                    let mut room = size_bound;
                    sample_tree(&mut rng, sig, l, &mut room)
                })
                .collect();
            sampled.sort();
            sampled.dedup();
            (sampled, false)
        }
    };
    let models: Vec<PointedStructure> = trees.iter().map(|t| t.to_pointed(sig)).collect();
    let mut log = Vec::new();
    if models.is_empty() {
        return Ok(FindCReport { q, l, size_bound, c: 0, exhaustive, candidates: 0, log });
    }
    let parts: Vec<&KripkeStructure> = models.iter().map(PointedStructure::structure).collect();
    // (c,l)-classes of depth-l trees of size <= n stop splitting once c >= n
    for c in 0..=size_bound {
        let history = ColorHistory::with_rounds(&parts, Cap::At(c), l)?;
        let mut reps: HashMap<usize, usize> = HashMap::new();
        let mut found = None;
        for (idx, m) in models.iter().enumerate() {
            let class = history.level(l).class_of(history.world(idx, m.point()));
            let rep = *reps.entry(class).or_insert(idx);
            if rep != idx && !fo_q_equivalent(&models[rep], m, q)? {
                found = Some((rep, idx));
                break;
            }
        }
        match found {
            None => {
                return Ok(FindCReport {
                    q,
                    l,
                    size_bound,
                    c,
                    exhaustive,
                    candidates: models.len(),
                    log,
                })
            }
            Some((i, j)) => log.push(Counterexample {
                c,
                left: StructureFile::from_pointed(format!("tree{i}"), models[i].clone()).to_string(),
                right: StructureFile::from_pointed(format!("tree{j}"), models[j].clone()).to_string(),
            }),
        }
    }
    Err(Error::ResourceLimit(format!(
        "no c <= {size_bound} separates the candidates; FO_{q} classes are finer than every (c,{l}) partition"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kripke::fixtures::{chain, fan, sig};
    use crate::random::{random_formula, random_pointed, FormulaShape, StructureShape};
    use crate::semantics::satisfies;
    use crate::syntax::parse;
    use proptest::prelude::*;

    fn st(f: &str) -> FoFormula {
        standard_translation(&parse(f).unwrap(), "x")
    }

    #[test]
    fn translation_shape() {
        let s = sig(&["a"], &["p"]);
        assert_eq!(st("p").to_string(), "p(x)");
        assert_eq!(
            st("<a:2> p").to_string(),
            "E y1 E y2 ((((!y1 = y2 & Ea(x,y1)) & Ea(x,y2)) & p(y1)) & p(y2))"
        );
        assert_eq!(st("<a:1> true").to_string(), "E y1 Ea(x,y1)");
        assert_eq!(st("<a:2> <a:1> p").qr(), 3);
        assert!(st("<a:2> <a:1> p").check_signature(&s).is_ok());
        assert_eq!(st("<a:2> <a:1> p").free_vars(), BTreeSet::from(["x".to_string()]));
        assert_eq!(st("(p & !p)").qr(), 0);
    }

    #[test]
    fn parser_round_trip() {
        for text in [
            "E y1 (Ea(x,y1) & p(y1))",
            "A y !(x = y | Eb(y,x))",
            "!E y true",
            "(false | q(z))",
        ] {
            let f = parse_fo(text).unwrap();
            assert_eq!(f.to_string(), text);
        }
        let f = st("(<a:2> !p | <a:1> <a:3> true)");
        assert_eq!(parse_fo(&f.to_string()).unwrap(), f);
        assert!(parse_fo("Rab(x,y)").is_err());
        assert!(parse_fo("E y").is_err());
        assert!(parse_fo("p(x) q").is_err());
    }

    #[test]
    fn evaluation() {
        let f3 = fan(3);
        let at_root = [("x", f3.point())];
        assert!(fo_eval(f3.structure(), &at_root, &st("<a:3> true")).unwrap());
        assert!(!fo_eval(f3.structure(), &at_root, &st("<a:4> true")).unwrap());
        let s = sig(&["a"], &["p"]);
        let plain = KripkeBuilder::new(s, 2).build().unwrap();
        assert!(!fo_eval(&plain, &[], &parse_fo("E y p(y)").unwrap()).unwrap());
        assert_eq!(
            fo_eval(&plain, &[], &parse_fo("p(x)").unwrap()),
            Err(Error::UnassignedVariable("x".into()))
        );
        assert!(fo_eval(&plain, &[("x", WorldId(0))], &parse_fo("q(x)").unwrap()).is_err());
    }

    #[test]
    fn ef_games() {
        assert!(fo_q_equivalent(&fan(1), &fan(2), 1).unwrap());
        assert!(!fo_q_equivalent(&fan(1), &fan(2), 2).unwrap());
        let two = parse_fo("E y E z ((!y = z & Ea(x,y)) & Ea(x,z))").unwrap();
        assert!(!fo_eval(fan(1).structure(), &[("x", WorldId(0))], &two).unwrap());
        assert!(fo_eval(fan(2).structure(), &[("x", WorldId(0))], &two).unwrap());
        for q in 0..3 {
            assert!(fo_q_equivalent(&fan(2), &fan(2), q).unwrap());
        }
        let s = sig(&["a"], &["p"]);
        let mut b = KripkeBuilder::new(s.clone(), 1);
        b.prop("p", 0).unwrap();
        let with_p = b.build().unwrap().pointed(WorldId(0)).unwrap();
        let without = KripkeBuilder::new(s, 1).build().unwrap().pointed(WorldId(0)).unwrap();
        assert!(!fo_q_equivalent(&with_p, &without, 0).unwrap());
        let err = fo_q_equivalent_with(&fan(3), &fan(3), 3, 2).unwrap_err();
        assert!(err.is_resource_limit());
    }

    #[test]
    fn locality() {
        let s = sig(&["a"], &["p"]);
        // 0 -> 1, and an unreachable p-world 2
        let mut b = KripkeBuilder::new(s, 3);
        b.edge("a", 0, 1).unwrap().prop("p", 2).unwrap();
        let m = b.build().unwrap().pointed(WorldId(0)).unwrap();
        let somewhere = parse_fo("E y p(y)").unwrap();
        assert!(!is_l_local(&somewhere, "x", &m, 1).unwrap());
        assert!(is_l_local(&st("<a:1> p"), "x", &m, 1).unwrap());
        let c = chain(3);
        assert!(is_l_local(&parse_fo("E y Ea(y,x)").unwrap(), "x", &c, 5).unwrap());
        assert!(matches!(
            is_l_local(&parse_fo("Ea(x,z)").unwrap(), "x", &m, 1),
            Err(Error::Arity(_))
        ));
    }

    #[test]
    fn padding() {
        let m = chain(3);
        for q in 0..3 {
            let (wide, narrow) = locality_padding(&m, 1, q).unwrap();
            let near = restrict_to_neighborhood(&m, 1).unwrap();
            let n = near.structure().world_count();
            assert_eq!(wide.structure().world_count(), q * 4 + 4 + q * n);
            assert_eq!(narrow.structure().world_count(), q * 4 + n + q * n);
            if q == 0 {
                assert_eq!(wide.structure(), m.structure());
                assert_eq!(narrow.structure(), near.structure());
            }
        }
        let (wide, narrow) = locality_padding(&m, 1, 1).unwrap();
        assert!(fo_q_equivalent(&wide, &narrow, 1).unwrap());
        // too small a radius for one quantifier
        let (wide, narrow) = locality_padding(&fan(2), 0, 1).unwrap();
        assert!(!fo_q_equivalent(&wide, &narrow, 1).unwrap());
    }

    #[test]
    fn tree_enumeration() {
        let s = sig(&["a"], &[]);
        let fans = enumerate_trees(&s, 1, 6, 1000).unwrap();
        assert_eq!(fans.len(), 6);
        let depth2 = enumerate_trees(&s, 2, 4, 1000).unwrap();
        // rooted unordered trees of height <= 2 with <= 4 nodes: 1 + 1 + 2 + 3
        assert_eq!(depth2.len(), 7);
        assert!(enumerate_trees(&s, 2, 8, 5).is_none());
    }

    #[test]
    fn find_c_examples() {
        let none = sig(&["a"], &[]);
        let r = find_c(0, 2, &none, 5, FindCOptions::default()).unwrap();
        assert_eq!(r.c, 0);
        assert!(r.log.is_empty());

        let r = find_c(2, 1, &none, 6, FindCOptions::default()).unwrap();
        assert_eq!(r.c, 2);
        assert!(r.exhaustive);
        assert_eq!(r.log.len(), 2);

        let r = find_c(1, 1, &sig(&["a"], &["p"]), 5, FindCOptions::default()).unwrap();
        assert!(r.c <= 1);
        assert!(r.log.iter().all(|e| e.c < r.c));

        let sampled = find_c(1, 2, &sig(&["a", "b"], &["p"]), 6, FindCOptions { enumeration_budget: 50, ..FindCOptions::default() }).unwrap();
        assert!(!sampled.exhaustive);
    }

    #[test]
    fn pipeline_on_fans() {
        let phi = parse("<a:2> true").unwrap();
        let r = upgrade_pipeline(&phi, &fan(2), &fan(2), UpgradeOptions::default()).unwrap();
        assert_eq!((r.q, r.l, r.c), (2, 3, 2));
        assert!(r.steps.iter().all(|s| s.status == StepStatus::Holds));
        assert!(r.consistent());

        let options = UpgradeOptions { c: Some(2), ..UpgradeOptions::default() };
        let r = upgrade_pipeline(&phi, &fan(2), &fan(3), options).unwrap();
        assert!(r.equivalent && r.truth_a && r.truth_b && r.consistent());
        let r = upgrade_pipeline(&phi, &fan(1), &fan(3), options).unwrap();
        assert!(!r.equivalent);
        assert_eq!(r.steps[2].status, StepStatus::NotApplicable);
        assert!(r.consistent());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]
        #[test]
        fn translation_is_adequate_and_local(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = sig(&["a", "b"], &["p", "q"]);
            let m = random_pointed(&mut rng, &s, StructureShape::default());
            let phi = random_formula(&mut rng, &s, FormulaShape { max_depth: 4, max_grade: 2, modal_budget: 2 });
            let psi = standard_translation(&phi, "x");
            prop_assert!(psi.qr() >= phi.nd());
            prop_assert_eq!(
                satisfies(&m, &phi).unwrap(),
                fo_eval(m.structure(), &[("x", m.point())], &psi).unwrap()
            );
            prop_assert!(is_l_local(&psi, "x", &m, phi.nd()).unwrap());
        }

        #[test]
        fn fo_equivalence_refines_with_q(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = sig(&["a"], &["p"]);
            let shape = StructureShape { max_worlds: 4, ..StructureShape::default() };
            let a = random_pointed(&mut rng, &s, shape);
            let b = random_pointed(&mut rng, &s, shape);
            prop_assert!(fo_q_equivalent(&a, &a, 2).unwrap());
            prop_assert_eq!(fo_q_equivalent(&a, &b, 2).unwrap(), fo_q_equivalent(&b, &a, 2).unwrap());
            if fo_q_equivalent(&a, &b, 2).unwrap() {
                prop_assert!(fo_q_equivalent(&a, &b, 1).unwrap());
            }
        }
    }
}
