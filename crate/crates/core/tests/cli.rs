//! End-to-end runs of the `gml` binary. JSON outputs are compared with the
//! files in `tests/golden/`; set `UPDATE_GOLDEN=1` to rewrite them.

use std::path::PathBuf;
use std::process::{Command, Output};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn gml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gml"))
        .current_dir(root().join("tests/data"))
        .args(args)
        .output()
        .expect("gml runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn golden(name: &str, args: &[&str], code: i32) {
    let out = gml(args);
    assert_eq!(out.status.code(), Some(code), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let actual = stdout(&out);
    serde_json::from_str::<serde_json::Value>(&actual).expect("--json prints one JSON document");
    let path = root().join("tests/golden").join(format!("{name}.json"));
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {path:?}"));
    assert_eq!(actual, expected, "golden mismatch for {name}");
}

#[test]
fn model_checking() {
    let out = gml(&["mc", "fan3.kr", "<a:3> true"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "true\n");
    let out = gml(&["mc", "fan3.kr", "<a:4> true"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout(&out), "false\n");
    golden("mc", &["mc", "fan3.kr", "!<a:1> true", "--json"], 1);
}

#[test]
fn equivalence_with_distinguishing_formula() {
    let out = gml(&["equiv", "fan2.kr", "fan3.kr", "--c", "3", "--l", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("!<a:3> true"));
    assert_eq!(gml(&["equiv", "fan2.kr", "fan3.kr", "--c", "2", "--l", "1"]).status.code(), Some(0));
    golden("equiv", &["equiv", "fan2.kr", "fan3.kr", "--c", "3", "--l", "1", "--json"], 1);
}

#[test]
fn game_certificates() {
    golden("game", &["game", "fan1.kr", "fan2.kr", "--c", "2", "--l", "1", "--json", "--trace"], 1);
    let out = gml(&["game", "fan2.kr", "fan2.kr", "--c", "2", "--l", "2", "--class-reps"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("winner: duplicator"));
}

#[test]
fn bisimulation() {
    assert_eq!(gml(&["bisim", "loop1.kr", "two_cycle.kr"]).status.code(), Some(0));
    assert_eq!(gml(&["bisim", "fan1.kr", "fan2.kr", "--l", "1"]).status.code(), Some(1));
    golden("bisim_relation", &["bisim", "fan1.kr", "fan2.kr", "--relation", "0-0,1-1", "--json"], 1);
}

#[test]
fn formulas_and_catalogs() {
    let out = gml(&["char", "fan3.kr", "--c", "2", "--l", "1"]);
    assert_eq!(stdout(&out), "<a:2> true\n");
    let out = gml(&["char", "fan2.kr", "--c", "1", "--l", "1", "--literal-chi"]);
    assert_eq!(stdout(&out), "<a:1> true\n");
    golden("types", &["types", "--c", "2", "--l", "1", "--json"], 0);
    let out = gml(&["nf", "<a:2> true", "--c", "2", "--l", "1"]);
    assert_eq!(stdout(&out), "<a:2> true\n");
    assert_eq!(gml(&["nf", "<a:3> true", "--c", "2", "--l", "1"]).status.code(), Some(2));
    let out = gml(&["distinguish", "fan3.kr", "fan2.kr", "--c", "3", "--l", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout(&out), "<a:3> true\n");
}

#[test]
fn structure_operations() {
    let out = gml(&["unravel", "loop1.kr", "--depth", "2"]);
    assert_eq!(
        stdout(&out),
        "structure unravelled\nagents: a\nprops:\nworlds: 3\nedge a: 0 1\nedge a: 1 2\nedge a: 2 2\npoint: 0\n"
    );
    let out = gml(&["restrict", "islands.kr", "--l", "1"]);
    assert!(stdout(&out).contains("worlds: 2"));
    golden("treelike", &["treelike", "two_cycle.kr", "--l", "1", "--json"], 1);
    assert_eq!(gml(&["treelike", "fan2.kr", "--l", "3"]).status.code(), Some(0));
    let out = gml(&["pad", "fan1.kr", "--l", "0", "--q", "1", "--json"]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(doc["full"].as_str().unwrap().contains("worlds: 5"));
}

#[test]
fn first_order_commands() {
    let out = gml(&["translate", "<a:2> p"]);
    assert!(stdout(&out).starts_with("E y1 E y2 ((((!y1 = y2 & Ea(x,y1)) & Ea(x,y2)) & p(y1)) & p(y2))"));
    assert_eq!(gml(&["fo-eval", "islands.kr", "E y p(y)"]).status.code(), Some(0));
    assert_eq!(gml(&["fo-eval", "islands.kr", "p(z)"]).status.code(), Some(2));
    assert_eq!(gml(&["local", "islands.kr", "E y p(y)", "--l", "2"]).status.code(), Some(1));
    assert_eq!(gml(&["local", "islands.kr", "E y Ea(x,y)", "--l", "1"]).status.code(), Some(0));
    assert_eq!(gml(&["fo-equiv", "fan1.kr", "fan2.kr", "--q", "1"]).status.code(), Some(0));
    assert_eq!(gml(&["fo-equiv", "fan1.kr", "fan2.kr", "--q", "2"]).status.code(), Some(1));
}

#[test]
fn upgrading_and_search() {
    golden("upgrade", &["upgrade", "fan2.kr", "fan3.kr", "<a:2> true", "--json"], 0);
    golden("find_c", &["find-c", "--q", "2", "--l", "1", "--json"], 0);
}

#[test]
fn error_exit_codes() {
    let parse_error = gml(&["mc", "fan3.kr", "<a:0> true"]);
    assert_eq!(parse_error.status.code(), Some(2));
    assert!(parse_error.stdout.is_empty());
    assert!(String::from_utf8_lossy(&parse_error.stderr).contains("grades start at 1"));
    assert_eq!(gml(&["mc", "missing.kr", "true"]).status.code(), Some(2));
    assert_eq!(gml(&["equiv", "fan1.kr", "islands.kr", "--c", "1", "--l", "1"]).status.code(), Some(2));
    assert_eq!(gml(&["frobnicate"]).status.code(), Some(2));
    let guard = gml(&["game", "fan3.kr", "fan3.kr", "--c", "2", "--l", "2", "--budget", "1"]);
    assert_eq!(guard.status.code(), Some(3));
    let guard = gml(&["types", "--props", "p", "--c", "2", "--l", "2"]);
    assert_eq!(guard.status.code(), Some(3));
}
