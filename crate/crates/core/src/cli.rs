//! Command-line front end. Exit codes: 0 when the property holds or the
//! artifact was produced, 1 when the property fails, 2 on usage or input
//! errors. Results go to stdout, diagnostics to stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::Path;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::compile::{extract_certificate, gen_tw_form_sid_full, gen_tw_sid, slr_to_so, FormSidOptions, TYPE_CUTOFF};
use crate::gallery::{self, Kind};
use crate::slr::{
    check_slr, check_slr_injective, injectify, normalize, parse_sid, parse_slr, split_relation_atoms, Derivation, Sid,
};
use crate::so::{check_so, check_so_with_hint, parse_so};
use crate::structure::{Signature, Store, Structure};
use crate::text::{load_structure, parse_bindings, parse_signature, structure_to_json, Names, StructureText};
use crate::treewidth::{
    decomposition_to_derivation, derivation_to_decomposition, optimal_decomposition, reduce, verify_decomposition,
    verify_reduced, TreeDecomposition,
};
use crate::types::{type_of_with, TypeConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Emit {
    Text,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "relog", version, about = "Separation logic of relations, (M)SO and treewidth tools")]
pub struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Emit::Text, global = true)]
    pub emit: Emit,
    #[command(subcommand)]
    pub command: Command,
}

/// Shared inputs of the SLR checks. Text arguments are read from a file when
/// one exists at that path and taken literally otherwise.
#[derive(Debug, clap::Args)]
pub struct SlrInput {
    /// Structure (text or JSON).
    pub structure: String,
    /// Inductive definitions.
    pub sid: String,
    /// Query formula, e.g. `ls(x,y)`.
    pub query: String,
    /// Store bindings, e.g. `x=a, y=b`.
    #[arg(long, default_value = "")]
    pub store: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decides s, ν ⊨ φ for an SLR formula and prints a derivation.
    CheckSlr(SlrInput),
    /// Like check-slr, but quantified variables take pairwise distinct values
    /// outside the store image.
    CheckSlrInj(SlrInput),
    /// Decides s, ν ⊨ φ for a second-order formula.
    CheckSo {
        structure: String,
        formula: String,
        #[arg(long, default_value = "")]
        store: String,
        /// Fresh elements added to the carrier (default 2^rank).
        #[arg(long)]
        padding: Option<usize>,
    },
    /// Rewrites an SID so that no rule equates variables.
    Normalize { sid: String },
    /// Rewrites an SID so that no rule has two atoms of one relation.
    Split { sid: String },
    /// Rebuilds a model so that quantified variables take distinct values.
    Injectify(SlrInput),
    /// Exact treewidth, with an optimal decomposition.
    Treewidth { structure: String },
    /// Checks a tree decomposition; with --reduced, also checks reducedness.
    VerifyTd {
        structure: String,
        decomposition: String,
        #[arg(long, value_name = "K")]
        reduced: Option<usize>,
    },
    /// Turns a width-k decomposition into a reduced one.
    ReduceTd { structure: String, decomposition: String, k: usize },
    /// Builds a decomposition from a derivation of the treewidth SID.
    DeriveToTd { structure: String, sid: String, derivation: String, k: usize },
    /// Builds a treewidth-SID derivation from a reduced decomposition.
    TdToDerive { structure: String, decomposition: String, k: usize },
    /// Rank-r type of a structure.
    TypeOf {
        structure: String,
        rank: usize,
        #[arg(long)]
        padding: Option<usize>,
        #[arg(long, default_value_t = TypeConfig::default().max_support)]
        max_support: usize,
    },
    /// SID whose models are the guarded structures of treewidth ≤ k.
    GenTwsid {
        k: usize,
        signature: String,
        #[arg(long)]
        with_corner_cases: bool,
    },
    /// SID whose models are the guarded structures of treewidth ≤ k that
    /// satisfy an MSO sentence.
    GenTwformsid {
        k: usize,
        signature: String,
        formula: String,
        #[arg(long)]
        with_corner_cases: bool,
        #[arg(long, default_value_t = TYPE_CUTOFF)]
        type_cutoff: usize,
    },
    /// Translates a predicate atom into an equivalent SO formula; with
    /// --check, also evaluates the formula on a structure.
    TranslateSo {
        sid: String,
        query: String,
        /// Signature; defaults to the relations of the SID.
        #[arg(long)]
        signature: Option<String>,
        #[arg(long, value_name = "STRUCTURE")]
        check: Option<String>,
        #[arg(long, default_value = "")]
        store: String,
        /// Fresh elements for refuting non-models (default: fill the carrier
        /// up to 6 elements). Models are checked on a witness padded with
        /// the unfolding-tree nodes.
        #[arg(long)]
        padding: Option<usize>,
    },
    /// Built-in examples.
    #[command(subcommand)]
    Gallery(GalleryCommand),
}

#[derive(Debug, Subcommand)]
pub enum GalleryCommand {
    /// Lists the entries.
    List,
    /// Compares entries against their closed-form oracles on enumerated
    /// structures.
    Run {
        entry: Option<String>,
        #[arg(long)]
        support: Option<usize>,
        #[arg(long)]
        tuples: Option<usize>,
    },
}

/// Result of a command: the verdict plus its text and JSON renderings.
struct Report {
    holds: bool,
    text: String,
    json: Value,
}

impl Report {
    fn produced(text: String, json: Value) -> Report {
        Report { holds: true, text, json }
    }
}

type Out = std::result::Result<Report, String>;

fn msg(e: crate::Error) -> String {
    e.to_string()
}

fn source(arg: &str) -> std::result::Result<String, String> {
    let p = Path::new(arg);
    if p.is_file() {
        std::fs::read_to_string(p).map_err(|e| format!("{arg}: {e}"))
    } else {
        Ok(arg.to_string())
    }
}

fn structure(arg: &str) -> std::result::Result<(Structure, Names), String> {
    load_structure(&source(arg)?, None).map_err(|e| format!("{arg}: {e}"))
}

fn sid(arg: &str) -> std::result::Result<Sid, String> {
    parse_sid(&source(arg)?).map_err(|e| format!("{arg}: {e}"))
}

fn store(src: &str, names: &Names) -> std::result::Result<Store, String> {
    Ok(parse_bindings(src, names).map_err(msg)?.into_iter().fold(Store::new(), |nu, (x, e)| nu.bind(&x, e)))
}

fn decomposition(arg: &str) -> std::result::Result<TreeDecomposition, String> {
    let v: Value = serde_json::from_str(&source(arg)?).map_err(|e| format!("{arg}: {e}"))?;
    TreeDecomposition::from_json(&v).map_err(msg)
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON renders")
}

fn sid_report(sid: &Sid) -> Report {
    Report::produced(sid.to_string(), serde_json::to_value(sid).expect("SID serializes"))
}

fn td_report(td: &TreeDecomposition) -> Report {
    Report::produced(format!("width {}\n{}", td.width(), td.render()), td.to_json())
}

fn check_slr_cmd(inp: &SlrInput, injective: bool) -> Out {
    let (s, names) = structure(&inp.structure)?;
    let sid = sid(&inp.sid)?;
    let q = parse_slr(&inp.query, &sid, s.signature()).map_err(msg)?;
    let nu = store(&inp.store, &names)?;
    let d = if injective { check_slr_injective(&s, &nu, &q, &sid) } else { check_slr(&s, &nu, &q, &sid) }.map_err(msg)?;
    Ok(match d {
        Some(d) => Report { holds: true, text: format!("true\n{}", pretty(&d.to_json())), json: json!({"holds": true, "derivation": d.to_json()}) },
        None => Report { holds: false, text: "false".into(), json: json!({"holds": false}) },
    })
}

fn verdict(holds: bool) -> Report {
    Report { holds, text: holds.to_string(), json: json!({ "holds": holds }) }
}

fn translate(sid_arg: &str, query: &str, sig_arg: Option<&str>, check: Option<&str>, store_arg: &str, padding: Option<usize>) -> Out {
    let sid = split_relation_atoms(&sid(sid_arg)?);
    let sig = match sig_arg {
        Some(a) => parse_signature(&source(a)?).map_err(msg)?,
        None => sid.relations().iter().try_fold(Signature::new(), |s, (r, a)| s.with_relation(r, *a)).map_err(msg)?,
    };
    let q = parse_slr(query, &sid, &sig).map_err(msg)?;
    let phi = slr_to_so(&sid, &sig, &q).map_err(msg)?;
    let Some(path) = check else {
        return Ok(Report::produced(phi.to_string(), serde_json::to_value(&phi).expect("formula serializes")));
    };
    let (s, names) = structure(path)?;
    let s = s.extend_signature(&sig).map_err(msg)?;
    let nu = store(store_arg, &names)?;
    let holds = match check_slr(&s, &nu, &q, &sid).map_err(msg)? {
        Some(d) => {
            let c = extract_certificate(&s, &sid, &d).map_err(msg)?;
            let padded = c.padded(&s).map_err(msg)?;
            let pad = padding.unwrap_or(0).max(c.nodes.len());
            check_so_with_hint(&padded, &nu, &phi, &c.store, Some(pad)).map_err(msg)?
        }
        None => {
            let mut base = s.dom();
            base.extend(nu.image());
            check_so(&s, &nu, &phi, Some(padding.unwrap_or(6usize.saturating_sub(base.len())))).map_err(msg)?
        }
    };
    Ok(Report { holds, text: format!("{holds}\n{phi}"), json: json!({ "holds": holds, "formula": phi }) })
}

fn gallery_cmd(cmd: &GalleryCommand) -> Out {
    match cmd {
        GalleryCommand::List => {
            let es = gallery::entries();
            let text = es.iter().map(|e| format!("{:<10} {}", e.name, e.description)).collect::<Vec<_>>().join("\n");
            let json = es
                .iter()
                .map(|e| {
                    let kind = match e.kind {
                        Kind::Slr => "slr",
                        Kind::So => "so",
                    };
                    json!({"name": e.name, "kind": kind, "description": e.description, "source": e.source, "query": e.query})
                })
                .collect();
            Ok(Report::produced(text, Value::Array(json)))
        }
        GalleryCommand::Run { entry, support, tuples } => {
            let es: Vec<_> = match entry {
                Some(n) => vec![gallery::entry(n).ok_or_else(|| format!("no gallery entry `{n}`"))?],
                None => gallery::entries(),
            };
            let (mut lines, mut rows, mut ok) = (vec![], vec![], true);
            for e in es {
                let bounds = (support.unwrap_or(e.bounds.0), tuples.unwrap_or(e.bounds.1));
                let cases = gallery::sweep(&e, Some(bounds)).map_err(msg)?;
                let bad: Vec<_> = cases.iter().filter(|c| c.expected != c.actual).collect();
                ok &= bad.is_empty();
                let pos = cases.iter().filter(|c| c.actual).count();
                lines.push(format!("{}: {} cases, {} positive, {} mismatches", e.name, cases.len(), pos, bad.len()));
                for c in &bad {
                    lines.push(format!("  mismatch: {} under {:?}", StructureText(&c.structure), c.store.fo));
                }
                rows.push(json!({
                    "entry": e.name,
                    "cases": cases.len(),
                    "positive": pos,
                    "mismatches": bad.iter().map(|c| json!({"structure": structure_to_json(&c.structure), "store": c.store})).collect::<Vec<_>>(),
                }));
            }
            Ok(Report { holds: ok, text: lines.join("\n"), json: Value::Array(rows) })
        }
    }
}

fn execute(cmd: &Command) -> Out {
    match cmd {
        Command::CheckSlr(inp) => check_slr_cmd(inp, false),
        Command::CheckSlrInj(inp) => check_slr_cmd(inp, true),
        Command::CheckSo { structure: st, formula, store: b, padding } => {
            let (s, names) = structure(st)?;
            let phi = parse_so(&source(formula)?, s.signature()).map_err(msg)?;
            let nu = store(b, &names)?;
            Ok(verdict(check_so(&s, &nu, &phi, *padding).map_err(msg)?))
        }
        Command::Normalize { sid: a } => Ok(sid_report(&normalize(&sid(a)?))),
        Command::Split { sid: a } => Ok(sid_report(&split_relation_atoms(&sid(a)?))),
        Command::Injectify(inp) => {
            let (s, names) = structure(&inp.structure)?;
            let sid = sid(&inp.sid)?;
            let q = parse_slr(&inp.query, &sid, s.signature()).map_err(msg)?;
            let nu = store(&inp.store, &names)?;
            let Some(d) = check_slr(&s, &nu, &q, &sid).map_err(msg)? else {
                return Ok(Report { holds: false, text: "not a model".into(), json: json!({"holds": false}) });
            };
            let (sbar, dbar) = injectify(&s, &sid, &d).map_err(msg)?;
            Ok(Report::produced(
                format!("{}\n{}", StructureText(&sbar), pretty(&dbar.to_json())),
                json!({"structure": structure_to_json(&sbar), "derivation": dbar.to_json()}),
            ))
        }
        Command::Treewidth { structure: st } => {
            let (s, _) = structure(st)?;
            let td = optimal_decomposition(&s).map_err(msg)?;
            Ok(Report::produced(
                format!("{}\n{}", td.width(), td.render()),
                json!({"treewidth": td.width(), "decomposition": td.to_json()}),
            ))
        }
        Command::VerifyTd { structure: st, decomposition: t, reduced } => {
            let (s, _) = structure(st)?;
            let td = decomposition(t)?;
            let res = match reduced {
                Some(k) => verify_reduced(&s, &td, *k),
                None => verify_decomposition(&s, &td),
            };
            Ok(match res {
                Ok(()) => verdict(true),
                Err(v) => Report { holds: false, text: format!("false\n{v}"), json: json!({"holds": false, "violation": v.to_json()}) },
            })
        }
        Command::ReduceTd { structure: st, decomposition: t, k } => {
            let (s, _) = structure(st)?;
            Ok(td_report(&reduce(&s, &decomposition(t)?, *k).map_err(msg)?))
        }
        Command::DeriveToTd { structure: st, sid: a, derivation, k } => {
            let (s, _) = structure(st)?;
            let sid = sid(a)?;
            let v: Value = serde_json::from_str(&source(derivation)?).map_err(|e| format!("{derivation}: {e}"))?;
            let d = Derivation::from_json(&v, &sid, s.signature()).map_err(msg)?;
            Ok(td_report(&derivation_to_decomposition(&s, &d, *k).map_err(msg)?))
        }
        Command::TdToDerive { structure: st, decomposition: t, k } => {
            let (s, _) = structure(st)?;
            let (d, nu) = decomposition_to_derivation(&s, &decomposition(t)?, *k).map_err(msg)?;
            let json = json!({"derivation": d.to_json(), "store": nu});
            Ok(Report::produced(pretty(&json), json))
        }
        Command::TypeOf { structure: st, rank, padding, max_support } => {
            let (s, _) = structure(st)?;
            let cfg = TypeConfig { max_support: *max_support, ..TypeConfig::default() };
            let t = type_of_with(&s, *rank, *padding, &cfg).map_err(msg)?;
            let json = t.to_json();
            Ok(Report::produced(json.to_string(), json))
        }
        Command::GenTwsid { k, signature, with_corner_cases } => {
            let sig = parse_signature(&source(signature)?).map_err(msg)?;
            Ok(sid_report(&gen_tw_sid(*k, &sig, *with_corner_cases).map_err(msg)?))
        }
        Command::GenTwformsid { k, signature, formula, with_corner_cases, type_cutoff } => {
            let sig = parse_signature(&source(signature)?).map_err(msg)?;
            let phi = parse_so(&source(formula)?, &sig).map_err(msg)?;
            let opts = FormSidOptions { corner_cases: *with_corner_cases, type_cutoff: *type_cutoff };
            Ok(sid_report(&gen_tw_form_sid_full(*k, &sig, &phi, &opts).map_err(msg)?.sid))
        }
        Command::TranslateSo { sid, query, signature, check, store, padding } => {
            translate(sid, query, signature.as_deref(), check.as_deref(), store, *padding)
        }
        Command::Gallery(g) => gallery_cmd(g),
    }
}

/// Runs one invocation and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(r) => {
            let body = match cli.emit {
                Emit::Text => r.text,
                Emit::Json => pretty(&r.json),
            };
            let _ = writeln!(out, "{body}");
            if r.holds {
                0
            } else {
                1
            }
        }
        Err(m) => {
            let _ = writeln!(err, "error: {m}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (vec![], vec![]);
        let code = run(std::iter::once("relog").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    const EVEN: &str = "A() <= emp;\nA() <= ex x, y . R(x) * R(y) * A();";

    #[test]
    fn check_slr_exit_codes() {
        let (code, out, _) = call(&["check-slr", "structure { R = { (a) (b) }; }", EVEN, "A()"]);
        assert_eq!(code, 0);
        assert!(out.starts_with("true"));
        let (code, out, _) = call(&["check-slr", "structure { R = { (a) (b) (c) }; }", EVEN, "A()"]);
        assert_eq!((code, out.trim()), (1, "false"));
        let (code, _, err) = call(&["check-slr", "structure { R = { (a) }; }", EVEN, "B()"]);
        assert_eq!(code, 2);
        assert!(err.contains("B"));
        assert_eq!(call(&["no-such-command"]).0, 2);
    }

    #[test]
    fn treewidth_of_triangle() {
        let k3 = "structure { E = { (a,b) (b,c) (a,c) }; }";
        let (code, out, _) = call(&["treewidth", k3]);
        assert_eq!(code, 0);
        assert_eq!(out.lines().next(), Some("2"));
        let (_, out, _) = call(&["--emit", "json", "treewidth", k3]);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["treewidth"], 2);
        let td = v["decomposition"].to_string();
        assert_eq!(call(&["verify-td", k3, &td]).0, 0);
        let bad = r#"{"nodes": [{"parent": null, "bag": [1, 2]}]}"#;
        assert_eq!(call(&["verify-td", k3, bad]).0, 1);
    }

    #[test]
    fn twsid_has_eight_rules() {
        let (code, out, _) = call(&["gen-twsid", "1", "signature { rel E/2; guard D; }"]);
        assert_eq!(code, 0);
        assert_eq!(parse_sid(&out).unwrap().rules.len(), 8);
        let (_, json_out, _) = call(&["--emit", "json", "gen-twsid", "1", "signature { rel E/2; guard D; }"]);
        let back: Sid = serde_json::from_str(&json_out).unwrap();
        assert_eq!(back, parse_sid(&out).unwrap());
    }

    #[test]
    fn derivation_round_trip_through_files() {
        let dir = std::env::temp_dir().join(format!("relog-cli-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let st = "signature { rel E/2; guard D; } structure { E = { (a,b) (b,c) }; D = { (a) (b) (c) }; }";
        let sig = "signature { rel E/2; guard D; }";
        let (_, sid_text, _) = call(&["gen-twsid", "1", sig, "--with-corner-cases"]);
        let sid_path = dir.join("tw.sid");
        std::fs::write(&sid_path, &sid_text).unwrap();
        let sid_path = sid_path.to_str().unwrap();
        let top = crate::compile::tw_top(1);
        let (code, out, err) = call(&["--emit", "json", "check-slr", st, sid_path, &format!("{top}()")]);
        assert_eq!(code, 0, "{err}");
        let v: Value = serde_json::from_str(&out).unwrap();
        let d_path = dir.join("d.json");
        std::fs::write(&d_path, v["derivation"].to_string()).unwrap();
        let (code, out, err) = call(&["--emit", "json", "derive-to-td", st, sid_path, d_path.to_str().unwrap(), "1"]);
        assert_eq!(code, 0, "{err}");
        let td: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(call(&["verify-td", st, &td.to_string(), "--reduced", "1"]).0, 0);
        let (code, _, err) = call(&["td-to-derive", st, &td.to_string(), "1"]);
        assert_eq!(code, 0, "{err}");
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn translate_and_check() {
        let ls = "ls(x,y) <= H(x,y);\nls(x,y) <= ex z . H(x,z) * ls(z,y);";
        let (code, out, _) = call(&["translate-so", ls, "ls(a,b)"]);
        assert_eq!(code, 0);
        assert!(out.contains("ex2"));
        let st = "structure { H = { (p,q) (q,r) }; }";
        assert_eq!(call(&["translate-so", ls, "ls(a,b)", "--check", st, "--store", "a=p, b=r"]).0, 0);
        assert_eq!(call(&["translate-so", ls, "ls(a,b)", "--check", st, "--store", "a=q, b=r"]).0, 1);
    }

    #[test]
    fn normalize_split_and_gallery() {
        let (code, out, _) = call(&["normalize", "A(x,y) <= x = y * R(x);"]);
        assert_eq!(code, 0);
        assert!(crate::slr::is_normalized(&parse_sid(&out).unwrap()));
        let (code, out, _) = call(&["split", "A() <= ex x, y . R(x) * R(y);"]);
        assert_eq!(code, 0);
        assert!(parse_sid(&out).unwrap().rules.len() > 1);
        let (code, out, _) = call(&["gallery", "run", "even", "--support", "3", "--tuples", "3"]);
        assert_eq!(code, 0, "{out}");
        assert!(out.contains("0 mismatches"));
        assert_eq!(call(&["gallery", "list"]).0, 0);
    }

    #[test]
    fn so_and_types() {
        let st = "structure { R = { (a) }; D = { (a) (b) }; }";
        assert_eq!(call(&["check-so", st, "ex x . R(x)"]).0, 0);
        assert_eq!(call(&["check-so", st, "all x . D(x) -> R(x)"]).0, 1);
        assert_eq!(call(&["check-so", st, "R(x)", "--store", "x=a"]).0, 0);
        let (code, out, _) = call(&["type-of", st, "1"]);
        assert_eq!(code, 0);
        assert!(serde_json::from_str::<Value>(&out).unwrap()["rank"] == 1);
    }
}
