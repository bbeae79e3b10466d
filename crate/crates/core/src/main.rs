use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use graded_modal::charform::{
    characteristic_formula_with, distinguishing_formula, enumerate_types, normal_form_in, ChiMode,
    DEFAULT_CATALOG_GUARD,
};
use graded_modal::equivalence::{
    bounded_equivalence, full_graded_bisimilarity, graded_l_equivalence, relation_is_graded_bisimulation,
};
use graded_modal::folink::{
    find_c, fo_eval, fo_q_equivalent, is_l_local, locality_padding, parse_fo, standard_translation,
    upgrade_pipeline, FindCOptions, StepStatus, UpgradeOptions,
};
use graded_modal::game::{solve_game_with, verify_strategy, Enumeration, SolveOptions, Winner};
use graded_modal::kripke::{
    is_rooted_treelike, parse_structure, restrict_to_neighborhood, unravel, StructureFile,
};
use graded_modal::semantics::extension;
use graded_modal::syntax::parse;
use graded_modal::{Error, PointedStructure, Signature, WorldId};

#[derive(Parser)]
#[command(name = "gml", version, about = "Graded modal logic over finite Kripke structures")]
struct Cli {
    /// Print one JSON document instead of the human-readable report.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Bounds {
    /// Grading bound.
    #[arg(long)]
    c: usize,
    /// Round / depth bound.
    #[arg(long)]
    l: usize,
}

#[derive(Args)]
struct SigArgs {
    /// Comma-separated agent names.
    #[arg(long, value_delimiter = ',', default_value = "a")]
    agents: Vec<String>,
    /// Comma-separated proposition names.
    #[arg(long, value_delimiter = ',')]
    props: Vec<String>,
}

impl SigArgs {
    fn signature(&self) -> Result<Signature, Error> {
        Signature::new(
            self.agents.iter().filter(|s| !s.is_empty()),
            self.props.iter().filter(|s| !s.is_empty()),
        )
    }
}

#[derive(Subcommand)]
enum Command {
    /// Model check a formula at a world.
    Mc {
        file: PathBuf,
        formula: String,
        /// Evaluate here instead of at the file's point.
        #[arg(long)]
        world: Option<usize>,
    },
    /// Decide (c,l)-equivalence by refinement; print a distinguishing formula if inequivalent.
    Equiv {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        bounds: Bounds,
        /// Include the refinement history.
        #[arg(long)]
        trace: bool,
    },
    /// Full graded bisimilarity, l-bounded graded bisimilarity, or a relation check.
    Bisim {
        a: PathBuf,
        b: PathBuf,
        /// Only l rounds with exact counts.
        #[arg(long)]
        l: Option<usize>,
        /// Check this relation instead, as `u-v` pairs separated by commas.
        #[arg(long, value_delimiter = ',')]
        relation: Vec<String>,
    },
    /// Solve the c-graded l-round game and verify the winner's certificate.
    Game {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        bounds: Bounds,
        /// Include the winning strategy.
        #[arg(long)]
        trace: bool,
        /// Enumerate Spoiler sets over refinement classes while solving.
        #[arg(long)]
        class_reps: bool,
        #[arg(long, default_value_t = SolveOptions::default().budget)]
        budget: usize,
    },
    /// Characteristic formula of a pointed structure.
    Char {
        file: PathBuf,
        #[command(flatten)]
        bounds: Bounds,
        #[arg(long)]
        world: Option<usize>,
        /// Forth and back conjuncts only.
        #[arg(long, conflicts_with = "catalog")]
        literal_chi: bool,
        /// Complete the formula against the type catalog.
        #[arg(long)]
        catalog: bool,
    },
    /// Enumerate all (c,l)-types over a signature.
    Types {
        #[command(flatten)]
        sig: SigArgs,
        #[command(flatten)]
        bounds: Bounds,
        #[arg(long, default_value_t = DEFAULT_CATALOG_GUARD)]
        guard: usize,
    },
    /// Normal form of a formula as a disjunction of characteristic formulas.
    Nf {
        formula: String,
        #[command(flatten)]
        sig: SigArgs,
        #[command(flatten)]
        bounds: Bounds,
        #[arg(long, default_value_t = DEFAULT_CATALOG_GUARD)]
        guard: usize,
    },
    /// A formula true at the first structure and false at the second.
    Distinguish {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        bounds: Bounds,
    },
    /// Partial tree unravelling.
    Unravel {
        file: PathBuf,
        #[arg(long)]
        depth: usize,
        #[arg(long)]
        world: Option<usize>,
    },
    /// Restriction to the l-neighbourhood of the point.
    Restrict {
        file: PathBuf,
        #[arg(long)]
        l: usize,
        #[arg(long)]
        world: Option<usize>,
    },
    /// Check the rooted tree-like conditions within the l-neighbourhood.
    Treelike {
        file: PathBuf,
        #[arg(long)]
        l: usize,
        #[arg(long)]
        world: Option<usize>,
    },
    /// Standard translation into first-order logic.
    Translate {
        formula: String,
        #[arg(long, default_value = "x")]
        var: String,
    },
    /// Evaluate a first-order formula with one free variable at a world.
    FoEval {
        file: PathBuf,
        formula: String,
        #[arg(long, default_value = "x")]
        var: String,
        #[arg(long)]
        world: Option<usize>,
    },
    /// q-round Ehrenfeucht-Fraïssé equivalence of two pointed structures.
    FoEquiv {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        q: usize,
    },
    /// Instance-level l-locality of a first-order formula.
    Local {
        file: PathBuf,
        formula: String,
        #[arg(long)]
        l: usize,
        #[arg(long, default_value = "x")]
        var: String,
        #[arg(long)]
        world: Option<usize>,
    },
    /// Locality padding: q copies around the structure and around its l-neighbourhood.
    Pad {
        file: PathBuf,
        #[arg(long)]
        l: usize,
        #[arg(long)]
        q: usize,
        #[arg(long)]
        world: Option<usize>,
    },
    /// Run the upgrading chain for a graded modal formula on two structures.
    Upgrade {
        a: PathBuf,
        b: PathBuf,
        formula: String,
        /// Use this c instead of searching for one.
        #[arg(long)]
        c: Option<usize>,
        /// Override l = 2^q - 1.
        #[arg(long)]
        l: Option<usize>,
        /// Largest l used by the search for c.
        #[arg(long, default_value_t = 1)]
        search_l_cap: usize,
        #[arg(long, default_value_t = 6)]
        size_bound: usize,
    },
    /// Least c consistent with all small rooted trees (empirical).
    FindC {
        #[arg(long)]
        q: usize,
        #[arg(long)]
        l: usize,
        #[command(flatten)]
        sig: SigArgs,
        #[arg(long, default_value_t = 6)]
        size_bound: usize,
        #[arg(long, default_value_t = FindCOptions::default().enumeration_budget)]
        enumeration_budget: usize,
        #[arg(long, default_value_t = FindCOptions::default().samples)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// What a successful run decided.
enum Outcome {
    Verdict(bool),
    Done,
}

struct Report {
    outcome: Outcome,
    text: String,
    json: Value,
}

impl Report {
    fn verdict(holds: bool, text: impl Into<String>, json: Value) -> Self {
        Report { outcome: Outcome::Verdict(holds), text: text.into(), json }
    }

    fn done(text: impl Into<String>, json: Value) -> Self {
        Report { outcome: Outcome::Done, text: text.into(), json }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(report) => {
            let out = if cli.json {
                serde_json::to_string_pretty(&report.json).expect("reports serialize")
            } else {
                report.text.trim_end().to_string()
            };
            // A closed pipe (e.g. `| head`) is not an error worth reporting.
            let _ = writeln!(std::io::stdout(), "{out}");
            match report.outcome {
                Outcome::Verdict(false) => ExitCode::from(1),
                _ => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("gml: {e}");
            ExitCode::from(if e.is_resource_limit() { 3 } else { 2 })
        }
    }
}

fn read(path: &Path) -> Result<StructureFile, Error> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    parse_structure(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn pointed(path: &Path, world: Option<usize>) -> Result<PointedStructure, Error> {
    read(path)?.pointed_or(world.map(WorldId))
}

fn structure_text(name: &str, m: PointedStructure) -> String {
    StructureFile::from_pointed(name, m).to_string()
}

fn to_json<T: serde::Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("library types serialize")
}

fn run(command: &Command) -> Result<Report, Error> {
    match command {
        Command::Mc { file, formula, world } => {
            let m = pointed(file, *world)?;
            let phi = parse(formula)?;
            let ext = extension(m.structure(), &phi)?;
            let holds = ext.contains(m.point());
            Ok(Report::verdict(
                holds,
                holds.to_string(),
                json!({
                    "formula": phi.to_string(),
                    "world": m.point(),
                    "holds": holds,
                    "extension": ext.to_vec(),
                }),
            ))
        }
        Command::Equiv { a, b, bounds, trace } => {
            let (ma, mb) = (pointed(a, None)?, pointed(b, None)?);
            let verdict = bounded_equivalence(&ma, &mb, bounds.c, bounds.l)?;
            let psi = distinguishing_formula(&ma, &mb, bounds.c, bounds.l)?;
            let mut text = if verdict.equivalent { "equivalent".to_string() } else { "inequivalent".to_string() };
            if let Some(psi) = &psi {
                text.push_str(&format!("\ndistinguishing formula: {psi}"));
            }
            let mut doc = json!({
                "c": bounds.c,
                "l": bounds.l,
                "equivalent": verdict.equivalent,
                "distinguishing_formula": psi.as_ref().map(ToString::to_string),
            });
            if *trace {
                doc["history"] = to_json(&verdict.history);
                text.push_str(&format!("\nhistory: {}", serde_json::to_string(&verdict.history).expect("serializes")));
            }
            Ok(Report::verdict(verdict.equivalent, text, doc))
        }
        Command::Bisim { a, b, l, relation } => {
            let (ma, mb) = (pointed(a, None)?, pointed(b, None)?);
            if !relation.is_empty() {
                let z = relation
                    .iter()
                    .map(|pair| parse_pair(pair))
                    .collect::<Result<Vec<_>, _>>()?;
                let check = relation_is_graded_bisimulation(&z, ma.structure(), mb.structure())?;
                let mut text = if check.holds {
                    "relation is a graded bisimulation".to_string()
                } else {
                    "relation is not a graded bisimulation".to_string()
                };
                for v in &check.violations {
                    text.push_str(&format!("\n  {}", serde_json::to_string(v).expect("serializes")));
                }
                return Ok(Report::verdict(check.holds, text, to_json(&check)));
            }
            match l {
                Some(l) => {
                    let eq = graded_l_equivalence(&ma, &mb, *l)?;
                    let text = if eq { "bisimilar" } else { "not bisimilar" };
                    Ok(Report::verdict(eq, format!("{text} (l = {l})"), json!({ "l": l, "bisimilar": eq })))
                }
                None => {
                    let full = full_graded_bisimilarity(&ma, &mb)?;
                    let text = if full.equivalent { "bisimilar" } else { "not bisimilar" };
                    Ok(Report::verdict(
                        full.equivalent,
                        format!("{text} ({} refinement rounds)", full.history.rounds()),
                        json!({
                            "bisimilar": full.equivalent,
                            "rounds": full.history.rounds(),
                            "relation": full.relation,
                        }),
                    ))
                }
            }
        }
        Command::Game { a, b, bounds, trace, class_reps, budget } => {
            let (ma, mb) = (pointed(a, None)?, pointed(b, None)?);
            let options = SolveOptions {
                enumeration: if *class_reps { Enumeration::ClassRepresentatives } else { Enumeration::Raw },
                budget: *budget,
            };
            let result = solve_game_with(&ma, &mb, bounds.c, bounds.l, options)?;
            let verified = verify_strategy(&result, &ma, &mb, bounds.c, bounds.l);
            if let Err(why) = &verified {
                return Err(Error::InvalidArgument(format!("internal certificate rejected: {why}")));
            }
            let mut text = format!(
                "winner: {}\ncertificate: {} positions, verified",
                result.winner,
                result.strategy.len()
            );
            let mut doc = json!({
                "c": bounds.c,
                "l": bounds.l,
                "winner": result.winner,
                "verified": true,
                "positions": result.strategy.len(),
            });
            if *trace {
                doc["trace"] = to_json(&result);
                text.push_str(&format!("\n{}", serde_json::to_string_pretty(&result.strategy).expect("serializes")));
            }
            Ok(Report::verdict(result.winner == Winner::Duplicator, text, doc))
        }
        Command::Char { file, bounds, world, literal_chi, catalog } => {
            let m = pointed(file, *world)?;
            let built;
            let mode = if *literal_chi {
                ChiMode::Literal
            } else if *catalog {
                built = enumerate_types(m.signature(), bounds.c, bounds.l.saturating_sub(1), DEFAULT_CATALOG_GUARD)?;
                ChiMode::Catalog(&built)
            } else {
                ChiMode::Complete
            };
            let chi = characteristic_formula_with(&m, bounds.c, bounds.l, mode)?;
            let mode_name = match mode {
                ChiMode::Literal => "literal",
                ChiMode::Complete => "complete",
                ChiMode::Catalog(_) => "catalog",
            };
            Ok(Report::done(
                chi.to_string(),
                json!({
                    "c": bounds.c,
                    "l": bounds.l,
                    "mode": mode_name,
                    "formula": chi.to_string(),
                    "nd": chi.nd(),
                    "crk": chi.crk(),
                }),
            ))
        }
        Command::Types { sig, bounds, guard } => {
            let catalog = enumerate_types(&sig.signature()?, bounds.c, bounds.l, *guard)?;
            let mut text = format!("{} types at c = {}, l = {}", catalog.len(), bounds.c, bounds.l);
            for e in catalog.entries() {
                text.push_str(&format!("\n{}: {}", e.id, e.chi));
            }
            Ok(Report::done(text, to_json(&catalog)))
        }
        Command::Nf { formula, sig, bounds, guard } => {
            let phi = parse(formula)?;
            let signature = sig.signature()?;
            phi.check_signature(&signature)?;
            phi.ensure_in_fragment(graded_modal::FragmentBound::new(bounds.c, bounds.l))?;
            let catalog = enumerate_types(&signature, bounds.c, bounds.l, *guard)?;
            let types = catalog.satisfying(&phi)?;
            let nf = normal_form_in(&phi, &catalog)?;
            Ok(Report::done(
                nf.to_string(),
                json!({
                    "formula": phi.to_string(),
                    "c": bounds.c,
                    "l": bounds.l,
                    "types": types,
                    "normal_form": nf.to_string(),
                }),
            ))
        }
        Command::Distinguish { a, b, bounds } => {
            let (ma, mb) = (pointed(a, None)?, pointed(b, None)?);
            let psi = distinguishing_formula(&ma, &mb, bounds.c, bounds.l)?;
            let text = psi.as_ref().map_or("none (equivalent)".to_string(), ToString::to_string);
            Ok(Report::verdict(
                psi.is_none(),
                text,
                json!({ "c": bounds.c, "l": bounds.l, "formula": psi.as_ref().map(ToString::to_string) }),
            ))
        }
        Command::Unravel { file, depth, world } => {
            let m = pointed(file, *world)?;
            let u = unravel(&m, *depth)?;
            let text = structure_text("unravelled", u);
            Ok(Report::done(text.clone(), json!({ "depth": depth, "structure": text })))
        }
        Command::Restrict { file, l, world } => {
            let m = pointed(file, *world)?;
            let r = restrict_to_neighborhood(&m, *l)?;
            let text = structure_text("restricted", r);
            Ok(Report::done(text.clone(), json!({ "l": l, "structure": text })))
        }
        Command::Treelike { file, l, world } => {
            let m = pointed(file, *world)?;
            let verdict = is_rooted_treelike(m.structure(), m.point(), *l)?;
            let text = match &verdict {
                Ok(()) => format!("rooted tree-like to depth {l}"),
                Err(why) => format!("not rooted tree-like to depth {l}: {why}"),
            };
            let doc = json!({
                "l": l,
                "treelike": verdict.is_ok(),
                "failure": verdict.as_ref().err().map(to_json),
            });
            Ok(Report::verdict(verdict.is_ok(), text, doc))
        }
        Command::Translate { formula, var } => {
            let phi = parse(formula)?;
            let psi = standard_translation(&phi, var);
            Ok(Report::done(
                format!("{psi}\nqr = {}", psi.qr()),
                json!({ "formula": phi.to_string(), "translation": psi.to_string(), "qr": psi.qr() }),
            ))
        }
        Command::FoEval { file, formula, var, world } => {
            let m = pointed(file, *world)?;
            let psi = parse_fo(formula)?;
            let holds = fo_eval(m.structure(), &[(var.as_str(), m.point())], &psi)?;
            Ok(Report::verdict(
                holds,
                holds.to_string(),
                json!({ "formula": psi.to_string(), "world": m.point(), "holds": holds }),
            ))
        }
        Command::FoEquiv { a, b, q } => {
            let (ma, mb) = (pointed(a, None)?, pointed(b, None)?);
            let eq = fo_q_equivalent(&ma, &mb, *q)?;
            let text = if eq { "FO_q-equivalent" } else { "FO_q-inequivalent" };
            Ok(Report::verdict(eq, format!("{text} (q = {q})"), json!({ "q": q, "equivalent": eq })))
        }
        Command::Local { file, formula, l, var, world } => {
            let m = pointed(file, *world)?;
            let psi = parse_fo(formula)?;
            let local = is_l_local(&psi, var, &m, *l)?;
            let text = if local {
                format!("same value on the {l}-neighbourhood")
            } else {
                format!("value changes on the {l}-neighbourhood")
            };
            Ok(Report::verdict(local, text, json!({ "l": l, "formula": psi.to_string(), "local": local })))
        }
        Command::Pad { file, l, q, world } => {
            let m = pointed(file, *world)?;
            let (wide, narrow) = locality_padding(&m, *l, *q)?;
            let (wide, narrow) = (structure_text("padded_full", wide), structure_text("padded_local", narrow));
            Ok(Report::done(
                format!("{wide}\n{narrow}"),
                json!({ "l": l, "q": q, "full": wide, "local": narrow }),
            ))
        }
        Command::Upgrade { a, b, formula, c, l, search_l_cap, size_bound } => {
            let (ma, mb) = (pointed(a, None)?, pointed(b, None)?);
            let phi = parse(formula)?;
            let options = UpgradeOptions {
                l: *l,
                c: *c,
                search_l_cap: Some(*search_l_cap),
                size_bound: *size_bound,
                ..UpgradeOptions::default()
            };
            let report = upgrade_pipeline(&phi, &ma, &mb, options)?;
            let mut text = format!(
                "psi = {}\nq = {}, l = {}, c = {}\n(c,l)-equivalent: {}\n",
                report.translation, report.q, report.l, report.c, report.equivalent
            );
            for s in &report.steps {
                let status = match s.status {
                    StepStatus::Holds => "holds",
                    StepStatus::Fails => "FAILS",
                    StepStatus::NotApplicable => "n/a",
                };
                text.push_str(&format!("step {} ({}): {status}: {}\n", s.step, s.name, s.detail));
            }
            for n in &report.notes {
                text.push_str(&format!("note: {n}\n"));
            }
            text.push_str(&format!("A |= psi: {}, B |= psi: {}", report.truth_a, report.truth_b));
            let mut doc = to_json(&report);
            doc["consistent"] = json!(report.consistent());
            Ok(Report::verdict(report.consistent(), text, doc))
        }
        Command::FindC { q, l, sig, size_bound, enumeration_budget, samples, seed } => {
            let options = FindCOptions {
                enumeration_budget: *enumeration_budget,
                samples: *samples,
                seed: *seed,
            };
            let report = find_c(*q, *l, &sig.signature()?, *size_bound, options)?;
            let scope = if report.exhaustive {
                format!("all {}", report.candidates)
            } else {
                format!("{} sampled", report.candidates)
            };
            let mut text = format!(
                "c = {} (least c consistent with {scope} trees of depth <= {} and size <= {}; empirical)",
                report.c, report.l, report.size_bound
            );
            for e in &report.log {
                text.push_str(&format!("\nrejected c = {}:\n{}{}", e.c, e.left, e.right));
            }
            Ok(Report::done(text, to_json(&report)))
        }
    }
}

fn parse_pair(text: &str) -> Result<(WorldId, WorldId), Error> {
    let bad = || Error::InvalidArgument(format!("relation pairs look like `u-v`, got `{text}`"));
    let (u, v) = text.trim().split_once('-').ok_or_else(bad)?;
    Ok((
        WorldId(u.trim().parse().map_err(|_| bad())?),
        WorldId(v.trim().parse().map_err(|_| bad())?),
    ))
}
