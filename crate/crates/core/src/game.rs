//! The `c`-graded `l`-round back-and-forth game, solved exhaustively.
//!
//! A round from position `(u, u')`: Spoiler picks an agent `i` and a nonempty
//! set `s` of at most `c` successors on one side; Duplicator answers with a set
//! `s'` of the same size on the other side; Spoiler picks a world of `s'` and
//! Duplicator a world of `s`. Duplicator loses at any position violating atom
//! equivalence and whenever she has no answer.
//!
//! This solver does not use the refinement in [`crate::equivalence`] unless
//! [`Enumeration::ClassRepresentatives`] is requested, so with the default
//! options it is an independent oracle for it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::ser::{SerializeStruct, Serializer};
use serde::Serialize;

use crate::equivalence::{Cap, ColorHistory};
use crate::error::{Error, Result};
use crate::kripke::{KripkeStructure, PointedStructure, WorldId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Spoiler,
    Duplicator,
}

impl fmt::Display for Winner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Winner::Spoiler => "spoiler",
            Winner::Duplicator => "duplicator",
        })
    }
}

/// `(u, u')` with `rounds_left` rounds still to play.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Position {
    pub left: WorldId,
    pub right: WorldId,
    pub rounds_left: usize,
}

/// Spoiler's set choice.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Challenge {
    pub side: Side,
    pub agent: String,
    pub set: Vec<WorldId>,
}

/// Duplicator's answer to a challenge: her set, and for every Spoiler pick
/// from it, her matching pick from the challenge set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reply {
    pub set: Vec<WorldId>,
    pub picks: Vec<(WorldId, WorldId)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "move", rename_all = "snake_case")]
pub enum SpoilerPlan {
    /// The position already violates atom equivalence.
    AtomMismatch,
    /// A challenge plus, for every possible Duplicator answer set, the world
    /// Spoiler picks from it.
    Challenge {
        challenge: Challenge,
        picks: Vec<(Vec<WorldId>, WorldId)>,
    },
}

/// A winning strategy for one player on every position reachable under it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Strategy {
    Duplicator(BTreeMap<Position, Vec<(Challenge, Reply)>>),
    Spoiler(BTreeMap<Position, SpoilerPlan>),
}

impl Strategy {
    pub fn len(&self) -> usize {
        match self {
            Strategy::Duplicator(m) => m.len(),
            Strategy::Spoiler(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Serialize for Strategy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct DupEntry<'a> {
            position: &'a Position,
            responses: Vec<DupResponse<'a>>,
        }
        #[derive(Serialize)]
        struct DupResponse<'a> {
            challenge: &'a Challenge,
            reply: &'a Reply,
        }
        #[derive(Serialize)]
        struct SpoilerEntry<'a> {
            position: &'a Position,
            plan: &'a SpoilerPlan,
        }
        match self {
            Strategy::Duplicator(m) => s.collect_seq(m.iter().map(|(position, rs)| DupEntry {
                position,
                responses: rs
                    .iter()
                    .map(|(challenge, reply)| DupResponse { challenge, reply })
                    .collect(),
            })),
            Strategy::Spoiler(m) => {
                s.collect_seq(m.iter().map(|(position, plan)| SpoilerEntry { position, plan }))
            }
        }
    }
}

/// Game verdict with a replayable certificate for the winner.
#[derive(Debug, Clone)]
pub struct GameResult {
    pub winner: Winner,
    pub cap: usize,
    pub rounds: usize,
    pub root: Position,
    pub strategy: Strategy,
    /// Positions whose value was computed.
    pub positions_explored: usize,
}

impl Serialize for GameResult {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("GameResult", 6)?;
        st.serialize_field("winner", &self.winner)?;
        st.serialize_field("cap", &self.cap)?;
        st.serialize_field("rounds", &self.rounds)?;
        st.serialize_field("root", &self.root)?;
        st.serialize_field("positions_explored", &self.positions_explored)?;
        st.serialize_field("strategy", &self.strategy)?;
        st.end()
    }
}

/// How Spoiler's candidate sets are enumerated while deciding positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Enumeration {
    /// Every subset of size `1..=c`. Independent of the refinement module.
    #[default]
    Raw,
    /// One set per vector of per-class multiplicities, using the capped
    /// refinement classes of the previous round. Certificates are still
    /// extracted over all raw challenges.
    ClassRepresentatives,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub enumeration: Enumeration,
    /// Upper bound on examined challenges before giving up.
    pub budget: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            enumeration: Enumeration::Raw,
            budget: 5_000_000,
        }
    }
}

pub fn solve_game(a: &PointedStructure, b: &PointedStructure, c: usize, l: usize) -> Result<GameResult> {
    solve_game_with(a, b, c, l, SolveOptions::default())
}

pub fn solve_game_with(
    a: &PointedStructure,
    b: &PointedStructure,
    c: usize,
    l: usize,
    options: SolveOptions,
) -> Result<GameResult> {
    a.signature().ensure_same(b.signature())?;
    let history = match options.enumeration {
        Enumeration::Raw => None,
        Enumeration::ClassRepresentatives => Some(ColorHistory::with_rounds(
            &[a.structure(), b.structure()],
            Cap::At(c),
            l,
        )?),
    };
    let mut solver = Solver {
        arena: Arena {
            a: a.structure(),
            b: b.structure(),
            c,
        },
        memo: HashMap::new(),
        steps: 0,
        budget: options.budget,
        history,
    };
    let root = Position {
        left: a.point(),
        right: b.point(),
        rounds_left: l,
    };
    let duplicator_wins = solver.wins(root)?;
    let strategy = if duplicator_wins {
        Strategy::Duplicator(solver.duplicator_strategy(root)?)
    } else {
        Strategy::Spoiler(solver.spoiler_strategy(root)?)
    };
    Ok(GameResult {
        winner: if duplicator_wins {
            Winner::Duplicator
        } else {
            Winner::Spoiler
        },
        cap: c,
        rounds: l,
        root,
        strategy,
        positions_explored: solver.memo.len(),
    })
}

struct Arena<'s> {
    a: &'s KripkeStructure,
    b: &'s KripkeStructure,
    c: usize,
}

impl<'s> Arena<'s> {
    fn atoms_agree(&self, p: Position) -> bool {
        self.a.label(p.left) == self.b.label(p.right)
    }

    fn agent_count(&self) -> usize {
        self.a.signature().agents().len()
    }

    fn agent_name(&self, agent: usize) -> &str {
        &self.a.signature().agents()[agent]
    }

    /// Successors on the challenged side and on the answering side.
    fn sides(&self, p: Position, side: Side, agent: usize) -> (&'s [WorldId], &'s [WorldId]) {
        let left = self.a.successors_of(agent, p.left);
        let right = self.b.successors_of(agent, p.right);
        match side {
            Side::Left => (left, right),
            Side::Right => (right, left),
        }
    }

    /// Next position after Duplicator picks `x` from the challenge set and
    /// Spoiler picked `y` from the answer set.
    fn next(p: Position, side: Side, x: WorldId, y: WorldId) -> Position {
        let (left, right) = match side {
            Side::Left => (x, y),
            Side::Right => (y, x),
        };
        Position {
            left,
            right,
            rounds_left: p.rounds_left - 1,
        }
    }

    /// All raw challenges from a position, in a fixed order.
    fn raw_challenges(&self, p: Position) -> Vec<(Side, usize, Vec<WorldId>)> {
        let mut out = Vec::new();
        for agent in 0..self.agent_count() {
            for side in [Side::Left, Side::Right] {
                let (mine, _) = self.sides(p, side, agent);
                for k in 1..=self.c.min(mine.len()) {
                    for s in subsets(mine, k) {
                        out.push((side, agent, s));
                    }
                }
            }
        }
        out
    }
}

struct Solver<'s> {
    arena: Arena<'s>,
    memo: HashMap<Position, bool>,
    steps: usize,
    budget: usize,
    history: Option<ColorHistory>,
}

impl Solver<'_> {
    fn wins(&mut self, p: Position) -> Result<bool> {
        if let Some(&v) = self.memo.get(&p) {
            return Ok(v);
        }
        let value = self.decide(p)?;
        self.memo.insert(p, value);
        Ok(value)
    }

    fn decide(&mut self, p: Position) -> Result<bool> {
        if !self.arena.atoms_agree(p) {
            return Ok(false);
        }
        if p.rounds_left == 0 {
            return Ok(true);
        }
        for (side, agent, s) in self.challenges(p) {
            self.steps += 1;
            if self.steps > self.budget {
                return Err(Error::ResourceLimit(format!(
                    "game solver exceeded {} examined challenges",
                    self.budget
                )));
            }
            if self.covered(p, side, agent, &s)?.len() < s.len() {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn challenges(&self, p: Position) -> Vec<(Side, usize, Vec<WorldId>)> {
        let Some(history) = &self.history else {
            return self.arena.raw_challenges(p);
        };
        let level = history.level(p.rounds_left - 1);
        let mut out = Vec::new();
        for agent in 0..self.arena.agent_count() {
            for side in [Side::Left, Side::Right] {
                let (mine, _) = self.arena.sides(p, side, agent);
                let part = if side == Side::Left { 0 } else { 1 };
                let mut groups: BTreeMap<usize, Vec<WorldId>> = BTreeMap::new();
                for &w in mine {
                    groups
                        .entry(level.class_of(history.world(part, w)))
                        .or_default()
                        .push(w);
                }
                let groups: Vec<Vec<WorldId>> = groups.into_values().collect();
                let mut counts = vec![0usize; groups.len()];
                multiplicities(&groups, self.arena.c, 0, 0, &mut counts, &mut |ks| {
                    let set: Vec<WorldId> = groups
                        .iter()
                        .zip(ks)
                        .flat_map(|(g, &k)| g[..k].iter().copied())
                        .collect();
                    let mut set = set;
                    set.sort();
                    out.push((side, agent, set));
                });
            }
        }
        out
    }

    /// Answer-side successors that some member of `s` can be matched with.
    fn covered(&mut self, p: Position, side: Side, agent: usize, s: &[WorldId]) -> Result<Vec<WorldId>> {
        let (_, theirs) = self.arena.sides(p, side, agent);
        let mut out = Vec::new();
        for &y in theirs {
            for &x in s {
                if self.wins(Arena::next(p, side, x, y))? {
                    out.push(y);
                    break;
                }
            }
        }
        Ok(out)
    }

    fn duplicator_strategy(&mut self, root: Position) -> Result<BTreeMap<Position, Vec<(Challenge, Reply)>>> {
        let mut plan = BTreeMap::new();
        let mut stack = vec![root];
        while let Some(p) = stack.pop() {
            if plan.contains_key(&p) {
                continue;
            }
            let mut responses = Vec::new();
            if p.rounds_left > 0 {
                for (side, agent, s) in self.arena.raw_challenges(p) {
                    let covered = self.covered(p, side, agent, &s)?;
                    let set: Vec<WorldId> = covered[..s.len()].to_vec();
                    let mut picks = Vec::new();
                    for &y in &set {
                        let mut answer = None;
                        for &x in &s {
                            if self.wins(Arena::next(p, side, x, y))? {
                                answer = Some(x);
                                break;
                            }
                        }
                        let x = answer.expect("covered worlds have a matching pick");
                        picks.push((y, x));
                        stack.push(Arena::next(p, side, x, y));
                    }
                    let challenge = Challenge {
                        side,
                        agent: self.arena.agent_name(agent).to_string(),
                        set: s,
                    };
                    responses.push((challenge, Reply { set, picks }));
                }
            }
            plan.insert(p, responses);
        }
        Ok(plan)
    }

    fn spoiler_strategy(&mut self, root: Position) -> Result<BTreeMap<Position, SpoilerPlan>> {
        let mut plan = BTreeMap::new();
        let mut stack = vec![root];
        while let Some(p) = stack.pop() {
            if plan.contains_key(&p) {
                continue;
            }
            if !self.arena.atoms_agree(p) {
                plan.insert(p, SpoilerPlan::AtomMismatch);
                continue;
            }
            let mut chosen = None;
            for (side, agent, s) in self.arena.raw_challenges(p) {
                let covered = self.covered(p, side, agent, &s)?;
                if covered.len() < s.len() {
                    chosen = Some((side, agent, s, covered));
                    break;
                }
            }
            let (side, agent, s, covered) =
                chosen.expect("a losing position with agreeing atoms has a winning challenge");
            let (_, theirs) = self.arena.sides(p, side, agent);
            let mut picks = Vec::new();
            for answer in subsets(theirs, s.len()) {
                let y = *answer
                    .iter()
                    .find(|y| !covered.contains(y))
                    .expect("an answer larger than the covered set has an uncovered world");
                for &x in &s {
                    stack.push(Arena::next(p, side, x, y));
                }
                picks.push((answer, y));
            }
            let challenge = Challenge {
                side,
                agent: self.arena.agent_name(agent).to_string(),
                set: s,
            };
            plan.insert(p, SpoilerPlan::Challenge { challenge, picks });
        }
        Ok(plan)
    }
}

/// Calls `f` with every multiplicity vector `0 <= k_t <= |groups[t]|` with
/// total between 1 and `cap`.
fn multiplicities(
    groups: &[Vec<WorldId>],
    cap: usize,
    idx: usize,
    total: usize,
    counts: &mut Vec<usize>,
    f: &mut dyn FnMut(&[usize]),
) {
    if idx == groups.len() {
        if total >= 1 {
            f(counts);
        }
        return;
    }
    for k in 0..=groups[idx].len().min(cap - total) {
        counts[idx] = k;
        multiplicities(groups, cap, idx + 1, total + k, counts, f);
    }
    counts[idx] = 0;
}

/// All `k`-element subsets of `items` in lexicographic index order.
pub(crate) fn subsets<T: Copy>(items: &[T], k: usize) -> Vec<Vec<T>> {
    fn go<T: Copy>(items: &[T], k: usize, start: usize, cur: &mut Vec<T>, out: &mut Vec<Vec<T>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            if items.len() - i < k - cur.len() {
                break;
            }
            cur.push(items[i]);
            go(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= items.len() {
        go(items, k, 0, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

/// Why a certificate was rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    Mismatch(String),
    NotTotal(Position, String),
    IllegalMove(Position, String),
    Lost(Position, String),
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::Mismatch(m) => write!(f, "certificate does not match the game: {m}"),
            Rejection::NotTotal(p, m) => write!(f, "strategy undefined at {p:?}: {m}"),
            Rejection::IllegalMove(p, m) => write!(f, "illegal move at {p:?}: {m}"),
            Rejection::Lost(p, m) => write!(f, "claimed winner loses at {p:?}: {m}"),
        }
    }
}

/// Replays every opposing move against the stored strategy.
pub fn verify_strategy(
    result: &GameResult,
    a: &PointedStructure,
    b: &PointedStructure,
    c: usize,
    l: usize,
) -> std::result::Result<(), Rejection> {
    if a.signature() != b.signature() {
        return Err(Rejection::Mismatch("signatures differ".into()));
    }
    let root = Position {
        left: a.point(),
        right: b.point(),
        rounds_left: l,
    };
    if result.cap != c || result.rounds != l || result.root != root {
        return Err(Rejection::Mismatch(format!(
            "certificate is for c = {}, l = {}, root {:?}",
            result.cap, result.rounds, result.root
        )));
    }
    let arena = Arena {
        a: a.structure(),
        b: b.structure(),
        c,
    };
    let mut done = BTreeSet::new();
    match (&result.winner, &result.strategy) {
        (Winner::Duplicator, Strategy::Duplicator(plan)) => verify_duplicator(&arena, plan, root, &mut done),
        (Winner::Spoiler, Strategy::Spoiler(plan)) => verify_spoiler(&arena, plan, root, &mut done),
        _ => Err(Rejection::Mismatch("strategy belongs to the other player".into())),
    }
}

fn check_subset(p: Position, set: &[WorldId], within: &[WorldId], what: &str) -> std::result::Result<(), Rejection> {
    let distinct: BTreeSet<_> = set.iter().collect();
    if distinct.len() != set.len() {
        return Err(Rejection::IllegalMove(p, format!("{what} repeats a world")));
    }
    if let Some(w) = set.iter().find(|w| !within.contains(w)) {
        return Err(Rejection::IllegalMove(p, format!("{what} contains non-successor {w}")));
    }
    Ok(())
}

fn verify_duplicator(
    arena: &Arena<'_>,
    plan: &BTreeMap<Position, Vec<(Challenge, Reply)>>,
    p: Position,
    done: &mut BTreeSet<Position>,
) -> std::result::Result<(), Rejection> {
    if !done.insert(p) {
        return Ok(());
    }
    if !arena.atoms_agree(p) {
        return Err(Rejection::Lost(p, "atom equivalence violated".into()));
    }
    if p.rounds_left == 0 {
        return Ok(());
    }
    let responses = plan
        .get(&p)
        .ok_or_else(|| Rejection::NotTotal(p, "no entry for reached position".into()))?;
    let table: HashMap<(Side, &str, &[WorldId]), &Reply> = responses
        .iter()
        .map(|(ch, r)| ((ch.side, ch.agent.as_str(), ch.set.as_slice()), r))
        .collect();
    for (side, agent, s) in arena.raw_challenges(p) {
        let name = arena.agent_name(agent);
        let reply = table
            .get(&(side, name, s.as_slice()))
            .ok_or_else(|| Rejection::NotTotal(p, format!("no answer to {side:?} {name} {s:?}")))?;
        let (_, theirs) = arena.sides(p, side, agent);
        check_subset(p, &reply.set, theirs, "answer")?;
        if reply.set.len() != s.len() {
            return Err(Rejection::IllegalMove(p, "answer size differs from challenge size".into()));
        }
        for &y in &reply.set {
            let x = reply
                .picks
                .iter()
                .find(|(from, _)| *from == y)
                .map(|&(_, x)| x)
                .ok_or_else(|| Rejection::NotTotal(p, format!("no counter-pick for {y}")))?;
            if !s.contains(&x) {
                return Err(Rejection::IllegalMove(p, format!("counter-pick {x} outside the challenge")));
            }
            verify_duplicator(arena, plan, Arena::next(p, side, x, y), done)?;
        }
    }
    Ok(())
}

fn verify_spoiler(
    arena: &Arena<'_>,
    plan: &BTreeMap<Position, SpoilerPlan>,
    p: Position,
    done: &mut BTreeSet<Position>,
) -> std::result::Result<(), Rejection> {
    if !done.insert(p) {
        return Ok(());
    }
    let entry = plan
        .get(&p)
        .ok_or_else(|| Rejection::NotTotal(p, "no entry for reached position".into()))?;
    match entry {
        SpoilerPlan::AtomMismatch => {
            if arena.atoms_agree(p) {
                Err(Rejection::Lost(p, "claimed atom mismatch, but atoms agree".into()))
            } else {
                Ok(())
            }
        }
        SpoilerPlan::Challenge { challenge, picks } => {
            if p.rounds_left == 0 {
                return Err(Rejection::Lost(p, "no rounds left and atoms agree".into()));
            }
            let agent = arena
                .a
                .signature()
                .agent_index(&challenge.agent)
                .map_err(|e| Rejection::IllegalMove(p, e.to_string()))?;
            let (mine, theirs) = arena.sides(p, challenge.side, agent);
            check_subset(p, &challenge.set, mine, "challenge")?;
            if challenge.set.is_empty() || challenge.set.len() > arena.c {
                return Err(Rejection::IllegalMove(p, "challenge size outside 1..=c".into()));
            }
            for answer in subsets(theirs, challenge.set.len()) {
                let y = picks
                    .iter()
                    .find(|(r, _)| *r == answer)
                    .map(|&(_, y)| y)
                    .ok_or_else(|| Rejection::NotTotal(p, format!("no pick against answer {answer:?}")))?;
                if !answer.contains(&y) {
                    return Err(Rejection::IllegalMove(p, format!("pick {y} outside answer {answer:?}")));
                }
                for &x in &challenge.set {
                    verify_spoiler(arena, plan, Arena::next(p, challenge.side, x, y), done)?;
                }
            }
            Ok(())
        }
    }
}
