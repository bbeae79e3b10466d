//! Line-oriented structure files.
//!
//! ```text
//! # comment
//! structure fan2
//! agents: a
//! props: p
//! worlds: 3
//! edge a: 0 1
//! edge a: 0 2
//! prop p: 1
//! point: 0
//! ```

use std::fmt;

use super::{KripkeBuilder, KripkeStructure, PointedStructure, Signature, WorldId};
use crate::error::{Error, Result};

/// A parsed structure file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructureFile {
    pub name: String,
    pub structure: KripkeStructure,
    pub point: Option<WorldId>,
}

impl StructureFile {
    pub fn new(name: impl Into<String>, structure: KripkeStructure, point: Option<WorldId>) -> Self {
        StructureFile {
            name: name.into(),
            structure,
            point,
        }
    }

    pub fn from_pointed(name: impl Into<String>, pointed: PointedStructure) -> Self {
        let (structure, point) = pointed.into_parts();
        StructureFile::new(name, structure, Some(point))
    }

    /// The structure pointed at the file's `point:` line, or `fallback`.
    pub fn pointed_or(&self, fallback: Option<WorldId>) -> Result<PointedStructure> {
        let point = fallback.or(self.point).ok_or_else(|| {
            Error::InvalidArgument(format!("structure `{}` has no point", self.name))
        })?;
        self.structure.clone().pointed(point)
    }
}

fn syntax(line: usize, message: impl Into<String>) -> Error {
    Error::StructureSyntax {
        line,
        message: message.into(),
    }
}

fn parse_index(line: usize, tok: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| syntax(line, format!("expected a world index, found `{tok}`")))
}

/// Parses the structure text format.
pub fn parse_structure(text: &str) -> Result<StructureFile> {
    let mut name = None;
    let mut agents: Option<Vec<String>> = None;
    let mut props: Option<Vec<String>> = None;
    let mut builder: Option<KripkeBuilder> = None;
    let mut point = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (head, rest) = match content.split_once(':') {
            Some((h, r)) => (h.trim(), r.trim()),
            None => {
                let mut parts = content.splitn(2, char::is_whitespace);
                let head = parts.next().unwrap_or("");
                if head != "structure" {
                    return Err(syntax(line, format!("unrecognised line `{content}`")));
                }
                let n = parts.next().unwrap_or("").trim();
                if n.is_empty() || n.contains(char::is_whitespace) {
                    return Err(syntax(line, "expected `structure <name>`"));
                }
                if name.replace(n.to_string()).is_some() {
                    return Err(syntax(line, "duplicate `structure` line"));
                }
                continue;
            }
        };
        let words: Vec<&str> = rest.split_whitespace().collect();
        let mut head_words = head.split_whitespace();
        let keyword = head_words.next().unwrap_or("");
        let operand = head_words.next();
        if head_words.next().is_some() {
            return Err(syntax(line, format!("malformed directive `{head}`")));
        }
        match (keyword, operand) {
            ("agents", None) => {
                if builder.is_some() || agents.is_some() {
                    return Err(syntax(line, "`agents:` must appear once, before `worlds:`"));
                }
                agents = Some(words.iter().map(|s| s.to_string()).collect());
            }
            ("props", None) => {
                if builder.is_some() || props.is_some() {
                    return Err(syntax(line, "`props:` must appear once, before `worlds:`"));
                }
                props = Some(words.iter().map(|s| s.to_string()).collect());
            }
            ("worlds", None) => {
                if builder.is_some() {
                    return Err(syntax(line, "duplicate `worlds:` line"));
                }
                let [n] = words.as_slice() else {
                    return Err(syntax(line, "expected `worlds: <n>`"));
                };
                let n = parse_index(line, n)?;
                if n == 0 {
                    return Err(syntax(line, "a structure needs at least one world"));
                }
                let sig = Signature::new(
                    agents.clone().unwrap_or_default(),
                    props.clone().unwrap_or_default(),
                )
                .map_err(|e| syntax(line, e.to_string()))?;
                builder = Some(KripkeBuilder::new(sig, n));
            }
            ("edge", Some(agent)) => {
                let b = builder
                    .as_mut()
                    .ok_or_else(|| syntax(line, "`edge` before `worlds:`"))?;
                let [u, v] = words.as_slice() else {
                    return Err(syntax(line, "expected `edge <agent>: <u> <v>`"));
                };
                let (u, v) = (parse_index(line, u)?, parse_index(line, v)?);
                b.edge(agent, u, v).map_err(|e| syntax(line, e.to_string()))?;
            }
            ("prop", Some(prop)) => {
                let b = builder
                    .as_mut()
                    .ok_or_else(|| syntax(line, "`prop` before `worlds:`"))?;
                let j = b
                    .signature
                    .prop_index(prop)
                    .map_err(|e| syntax(line, e.to_string()))?;
                for w in &words {
                    let u = parse_index(line, w)?;
                    b.set_label(j, WorldId(u), true)
                        .map_err(|e| syntax(line, e.to_string()))?;
                }
            }
            ("point", None) => {
                let b = builder
                    .as_ref()
                    .ok_or_else(|| syntax(line, "`point:` before `worlds:`"))?;
                let [u] = words.as_slice() else {
                    return Err(syntax(line, "expected `point: <u>`"));
                };
                let u = parse_index(line, u)?;
                if u >= b.world_count() {
                    return Err(syntax(line, format!("point {u} out of range")));
                }
                if point.replace(WorldId(u)).is_some() {
                    return Err(syntax(line, "duplicate `point:` line"));
                }
            }
            _ => return Err(syntax(line, format!("unrecognised directive `{head}`"))),
        }
    }

    let last = text.lines().count().max(1);
    let name = name.ok_or_else(|| syntax(1, "missing `structure <name>` line"))?;
    let builder = builder.ok_or_else(|| syntax(last, "missing `worlds:` line"))?;
    Ok(StructureFile {
        name,
        structure: builder.build()?,
        point,
    })
}

/// Canonical serialization: header lines, then edges sorted by agent, then
/// source, then target, then one `prop` line per proposition, then the point.
impl fmt::Display for StructureFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.structure;
        let sig = m.signature();
        writeln!(f, "structure {}", self.name)?;
        writeln!(f, "agents:{}", joined(sig.agents()))?;
        writeln!(f, "props:{}", joined(sig.props()))?;
        writeln!(f, "worlds: {}", m.world_count())?;
        for (i, agent) in sig.agents().iter().enumerate() {
            for (u, v) in m.edges(i) {
                writeln!(f, "edge {agent}: {u} {v}")?;
            }
        }
        for (j, prop) in sig.props().iter().enumerate() {
            let members: Vec<String> = m.valuation(j).map(|w| w.to_string()).collect();
            writeln!(f, "prop {prop}:{}", joined(&members))?;
        }
        if let Some(p) = self.point {
            writeln!(f, "point: {p}")?;
        }
        Ok(())
    }
}

fn joined(items: &[String]) -> String {
    items.iter().map(|s| format!(" {s}")).collect()
}
