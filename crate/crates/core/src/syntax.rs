//! Graded modal formulas: abstract syntax, concrete grammar, nesting depth
//! and counting rank.
//!
//! ```text
//! f ::= "true" | "false" | IDENT | "!" f
//!     | "(" f "&" f ")" | "(" f "|" f ")"
//!     | "<" IDENT ":" INT ">" f | "[" IDENT ":" INT "]" f
//! ```
//!
//! `[a:k] f` is sugar for `!<a:k> !f`; the printer only emits core forms.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kripke::Signature;

/// A graded modal formula. Subformulas are reference counted so that
/// constructions like characteristic formulas can share them.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Top,
    Bot,
    Prop(String),
    Not(Arc<Formula>),
    And(Arc<Formula>, Arc<Formula>),
    Or(Arc<Formula>, Arc<Formula>),
    /// `<agent:grade> body`: at least `grade` agent-successors satisfy `body`.
    Diamond {
        agent: String,
        grade: usize,
        body: Arc<Formula>,
    },
}

impl Formula {
    pub fn prop(name: impl Into<String>) -> Self {
        Formula::Prop(name.into())
    }

    pub fn not(f: impl Into<Arc<Formula>>) -> Self {
        Formula::Not(f.into())
    }

    pub fn and(a: impl Into<Arc<Formula>>, b: impl Into<Arc<Formula>>) -> Self {
        Formula::And(a.into(), b.into())
    }

    pub fn or(a: impl Into<Arc<Formula>>, b: impl Into<Arc<Formula>>) -> Self {
        Formula::Or(a.into(), b.into())
    }

    /// Panics if `grade == 0`.
    pub fn diamond(agent: impl Into<String>, grade: usize, body: impl Into<Arc<Formula>>) -> Self {
        assert!(grade >= 1, "graded modalities start at 1");
        Formula::Diamond {
            agent: agent.into(),
            grade,
            body: body.into(),
        }
    }

    /// `[agent:grade] body`, desugared.
    pub fn boxed(agent: impl Into<String>, grade: usize, body: impl Into<Arc<Formula>>) -> Self {
        Formula::not(Formula::diamond(agent, grade, Formula::not(body)))
    }

    /// Left-nested conjunction; empty is `Top`, `Top` operands are dropped.
    pub fn conj<I>(items: I) -> Self
    where
        I: IntoIterator,
        I::Item: Into<Arc<Formula>>,
    {
        items
            .into_iter()
            .map(Into::into)
            .filter(|f: &Arc<Formula>| **f != Formula::Top)
            .reduce(|a, b| Arc::new(Formula::And(a, b)))
            .map_or(Formula::Top, unwrap_arc)
    }

    /// Left-nested disjunction; empty is `Bot`, `Bot` operands are dropped.
    pub fn disj<I>(items: I) -> Self
    where
        I: IntoIterator,
        I::Item: Into<Arc<Formula>>,
    {
        items
            .into_iter()
            .map(Into::into)
            .filter(|f: &Arc<Formula>| **f != Formula::Bot)
            .reduce(|a, b| Arc::new(Formula::Or(a, b)))
            .map_or(Formula::Bot, unwrap_arc)
    }

    /// Top-level conjuncts, flattening nested `And`.
    pub fn conjuncts(&self) -> Vec<Arc<Formula>> {
        fn walk(f: &Arc<Formula>, out: &mut Vec<Arc<Formula>>) {
            match &**f {
                Formula::And(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                _ => out.push(f.clone()),
            }
        }
        let mut out = Vec::new();
        walk(&Arc::new(self.clone()), &mut out);
        out
    }

    /// Modal nesting depth.
    pub fn nd(&self) -> usize {
        match self {
            Formula::Top | Formula::Bot | Formula::Prop(_) => 0,
            Formula::Not(f) => f.nd(),
            Formula::And(a, b) | Formula::Or(a, b) => a.nd().max(b.nd()),
            Formula::Diamond { body, .. } => body.nd() + 1,
        }
    }

    /// Counting rank: the largest grade occurring.
    pub fn crk(&self) -> usize {
        match self {
            Formula::Top | Formula::Bot | Formula::Prop(_) => 0,
            Formula::Not(f) => f.crk(),
            Formula::And(a, b) | Formula::Or(a, b) => a.crk().max(b.crk()),
            Formula::Diamond { grade, body, .. } => (*grade).max(body.crk()),
        }
    }

    pub fn in_fragment(&self, bound: FragmentBound) -> bool {
        self.crk() <= bound.c && self.nd() <= bound.l
    }

    pub fn ensure_in_fragment(&self, bound: FragmentBound) -> Result<()> {
        if self.in_fragment(bound) {
            Ok(())
        } else {
            Err(Error::OutsideFragment {
                c: bound.c,
                l: bound.l,
                crk: self.crk(),
                nd: self.nd(),
            })
        }
    }

    /// Checks that all agents and propositions occur in `sig`.
    pub fn check_signature(&self, sig: &Signature) -> Result<()> {
        match self {
            Formula::Top | Formula::Bot => Ok(()),
            Formula::Prop(p) => sig.prop_index(p).map(drop),
            Formula::Not(f) => f.check_signature(sig),
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.check_signature(sig)?;
                b.check_signature(sig)
            }
            Formula::Diamond { agent, body, .. } => {
                sig.agent_index(agent)?;
                body.check_signature(sig)
            }
        }
    }

    /// Number of nodes in the (unshared) syntax tree.
    pub fn size(&self) -> usize {
        match self {
            Formula::Top | Formula::Bot | Formula::Prop(_) => 1,
            Formula::Not(f) | Formula::Diamond { body: f, .. } => 1 + f.size(),
            Formula::And(a, b) | Formula::Or(a, b) => 1 + a.size() + b.size(),
        }
    }
}

fn unwrap_arc(f: Arc<Formula>) -> Formula {
    Arc::try_unwrap(f).unwrap_or_else(|shared| (*shared).clone())
}

/// `CML_{c,l}`: counting rank at most `c`, nesting depth at most `l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct FragmentBound {
    pub c: usize,
    pub l: usize,
}

impl FragmentBound {
    pub fn new(c: usize, l: usize) -> Self {
        FragmentBound { c, l }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Top => f.write_str("true"),
            Formula::Bot => f.write_str("false"),
            Formula::Prop(p) => f.write_str(p),
            Formula::Not(g) => write!(f, "!{g}"),
            Formula::And(a, b) => write!(f, "({a} & {b})"),
            Formula::Or(a, b) => write!(f, "({a} | {b})"),
            Formula::Diamond { agent, grade, body } => write!(f, "<{agent}:{grade}> {body}"),
        }
    }
}

impl std::str::FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse(s)
    }
}

/// Parses the concrete grammar.
pub fn parse(text: &str) -> Result<Formula> {
    let mut p = Parser { src: text, pos: 0 };
    let f = p.formula()?;
    p.skip_ws();
    if p.pos < text.len() {
        return Err(p.error("trailing input"));
    }
    Ok(f)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
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
        let mut chars = rest.char_indices();
        match chars.next() {
            Some((_, c)) if c.is_ascii_alphabetic() => {}
            _ => return Err(self.error("expected an identifier")),
        }
        let end = chars
            .find(|&(_, c)| !(c.is_ascii_alphanumeric() || c == '_'))
            .map_or(rest.len(), |(i, _)| i);
        self.pos += end;
        Ok(&rest[..end])
    }

    fn int(&mut self) -> Result<usize> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let end = rest
            .find(|c: char| !c.is_ascii_digit())
            .unwrap_or(rest.len());
        if end == 0 {
            return Err(self.error("expected a grade"));
        }
        let value = rest[..end]
            .parse()
            .map_err(|_| self.error("grade out of range"))?;
        self.pos += end;
        Ok(value)
    }

    fn modality(&mut self, close: char) -> Result<(String, usize)> {
        let agent = self.ident()?.to_string();
        self.expect(':')?;
        let at = self.pos;
        let grade = self.int()?;
        if grade == 0 {
            return Err(Error::FormulaSyntax {
                offset: at,
                message: "grades start at 1".into(),
            });
        }
        self.expect(close)?;
        Ok((agent, grade))
    }

    fn formula(&mut self) -> Result<Formula> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some('!') => {
                self.pos += 1;
                Ok(Formula::not(self.formula()?))
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
                    Formula::and(left, right)
                } else {
                    Formula::or(left, right)
                })
            }
            Some('<') => {
                self.pos += 1;
                let (agent, grade) = self.modality('>')?;
                Ok(Formula::diamond(agent, grade, self.formula()?))
            }
            Some('[') => {
                self.pos += 1;
                let (agent, grade) = self.modality(']')?;
                Ok(Formula::boxed(agent, grade, self.formula()?))
            }
            Some(_) => Ok(match self.ident()? {
                "true" => Formula::Top,
                "false" => Formula::Bot,
                name => Formula::prop(name),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_formula, FormulaShape};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(s: &str) -> Formula {
        parse(s).unwrap()
    }

    #[test]
    fn parses_examples() {
        assert_eq!(p("<a:3> p"), Formula::diamond("a", 3, Formula::prop("p")));
        assert_eq!(
            p("[a:2] p"),
            Formula::not(Formula::diamond("a", 2, Formula::not(Formula::prop("p"))))
        );
        assert!(matches!(parse("<a:0> p"), Err(Error::FormulaSyntax { offset: 3, .. })));
        assert_eq!(p("  ( p&!q )"), Formula::and(Formula::prop("p"), Formula::not(Formula::prop("q"))));
        assert_eq!(p("true"), Formula::Top);
        assert_eq!(p("false"), Formula::Bot);
        assert_eq!(p("truex"), Formula::prop("truex"));
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["", "(p)", "p & q", "<a3> p", "<a:> p", "<:1> p", "(p & q", "p q", "!", "1p", "<a:1>"] {
            assert!(parse(bad).is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn prints_core_forms() {
        assert_eq!(Formula::diamond("a", 1, Formula::Top).to_string(), "<a:1> true");
        assert_eq!(
            Formula::and(Formula::prop("p"), Formula::not(Formula::prop("q"))).to_string(),
            "(p & !q)"
        );
        assert_eq!(p("[b:2] (p | false)").to_string(), "!<b:2> !(p | false)");
    }

    #[test]
    fn nd_and_crk() {
        assert_eq!(p("p").nd(), 0);
        assert_eq!(p("<a:3> p").nd(), 1);
        assert_eq!(p("<a:1> <a:2> p").nd(), 2);
        assert_eq!(p("(p & !q)").crk(), 0);
        assert_eq!(p("<a:3> p").crk(), 3);
        assert_eq!(p("<a:2> <a:5> p").crk(), 5);
        assert_eq!(p("(<a:4> p | <b:1> <b:1> q)").crk(), 4);
        assert_eq!(p("(<a:4> p | <b:1> <b:1> q)").nd(), 2);
    }

    #[test]
    fn fragments() {
        let b = FragmentBound::new;
        assert!(p("<a:2> true").in_fragment(b(2, 1)));
        assert!(!p("<a:3> true").in_fragment(b(2, 1)));
        assert!(p("p").in_fragment(b(0, 0)));
        assert!(!p("<a:1> <a:1> p").in_fragment(b(5, 1)));
        assert!(matches!(
            p("<a:3> true").ensure_in_fragment(b(2, 1)),
            Err(Error::OutsideFragment { crk: 3, nd: 1, .. })
        ));
    }

    #[test]
    fn conj_and_disj_helpers() {
        assert_eq!(Formula::conj(Vec::<Formula>::new()), Formula::Top);
        assert_eq!(Formula::disj(Vec::<Formula>::new()), Formula::Bot);
        assert_eq!(Formula::conj([Formula::Top, p("p")]), p("p"));
        assert_eq!(Formula::conj([p("p"), p("q"), p("r")]).to_string(), "((p & q) & r)");
        assert_eq!(p("((p & q) & (r & s))").conjuncts().len(), 4);
    }

    #[test]
    fn roundtrip_thousand_random_formulas() {
        let sig = crate::kripke::fixtures::sig(&["a", "b"], &["p", "q"]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let shape = FormulaShape { max_depth: 4, max_grade: 3, modal_budget: 3 };
        for _ in 0..1000 {
            let f = random_formula(&mut rng, &sig, shape);
            assert_eq!(parse(&f.to_string()).unwrap(), f);
        }
    }

    proptest! {
        #[test]
        fn gradations_follow_the_clauses(seed in any::<u64>()) {
            let sig = crate::kripke::fixtures::sig(&["a", "b"], &["p"]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shape = FormulaShape { max_depth: 4, max_grade: 4, modal_budget: 3 };
            let f = random_formula(&mut rng, &sig, shape);
            let g = random_formula(&mut rng, &sig, shape);
            prop_assert_eq!(Formula::not(f.clone()).crk(), f.crk());
            prop_assert_eq!(Formula::not(f.clone()).nd(), f.nd());
            prop_assert_eq!(Formula::and(f.clone(), g.clone()).crk(), f.crk().max(g.crk()));
            prop_assert_eq!(Formula::or(f.clone(), g.clone()).nd(), f.nd().max(g.nd()));

            let (c, l) = (f.crk(), f.nd());
            prop_assert!(f.in_fragment(FragmentBound::new(c, l)));
            if c > 0 {
                prop_assert!(!f.in_fragment(FragmentBound::new(c - 1, l)));
            }
            if l > 0 {
                prop_assert!(!f.in_fragment(FragmentBound::new(c, l - 1)));
            }

            let k = 1 + (seed % 4) as usize;
            let boxed = Formula::boxed("a", k, f.clone());
            prop_assert_eq!(boxed.nd(), f.nd() + 1);
            prop_assert_eq!(boxed.crk(), k.max(f.crk()));
        }
    }
}
