//! Text and JSON formats for signatures and structures.
//!
//! ```text
//! signature { rel E/2; guard D; const c1; }
//! structure { elem a b c; E = { (a,b) (b,c) }; D = { (a)(b)(c) }; c1 = a; }
//! ```
//!
//! A unary relation named `D` is taken as the guard unless another guard is
//! declared. Element names that are numbers denote that ID; other names are
//! numbered in order of appearance, skipping numeric IDs in use. Elements
//! listed under `elem` that occur in no tuple and name no constant become
//! padding.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexer::Parser;
use crate::structure::{Elem, Signature, Structure, GUARD};

/// Element names of a parsed structure.
#[derive(Clone, Debug, Default)]
pub struct Names {
    pub by_name: BTreeMap<String, Elem>,
}

impl Names {
    pub fn get(&self, name: &str) -> Option<Elem> {
        self.by_name.get(name).copied()
    }

    pub fn name_of(&self, e: Elem) -> String {
        self.by_name.iter().find(|(_, v)| **v == e).map(|(k, _)| k.clone()).unwrap_or_else(|| e.to_string())
    }
}

pub fn parse_signature(src: &str) -> Result<Signature> {
    let mut p = Parser::new(src)?;
    let sig = signature_block(&mut p)?;
    if !p.at_eof() {
        return p.error("trailing input after signature");
    }
    Ok(sig)
}

fn signature_block(p: &mut Parser) -> Result<Signature> {
    p.expect_keyword("signature")?;
    p.expect_sym("{")?;
    let mut sig = Signature::new();
    let mut guard = None;
    while !p.accept_sym("}") {
        if p.accept_ident("rel") {
            let name = p.ident()?;
            p.expect_sym("/")?;
            let arity = p.number()? as usize;
            sig = sig.with_relation(&name, arity)?;
        } else if p.accept_ident("const") {
            let name = p.ident()?;
            sig = sig.with_constant(&name)?;
        } else if p.accept_ident("guard") {
            guard = Some(p.ident()?);
        } else {
            return p.error("expected `rel`, `const`, `guard` or `}`");
        }
        p.expect_sym(";")?;
    }
    match guard {
        Some(g) => sig = sig.with_guard(&g)?,
        None if sig.arity(GUARD) == Some(1) => sig = sig.with_guard(GUARD)?,
        None => {}
    }
    Ok(sig)
}

/// Parses an optional signature block followed by a structure block. If no
/// signature is given in the text or as `sig`, it is inferred from the
/// structure block.
pub fn parse_structure(src: &str, sig: Option<&Signature>) -> Result<(Structure, Names)> {
    let mut p = Parser::new(src)?;
    let own = if p.is_ident("signature") { Some(signature_block(&mut p)?) } else { None };
    let raw = structure_block(&mut p)?;
    if !p.at_eof() {
        return p.error("trailing input after structure");
    }
    let sig = match (own, sig) {
        (Some(s), _) => s,
        (None, Some(s)) => s.clone(),
        (None, None) => raw.infer_signature()?,
    };
    raw.build(&sig)
}

struct RawStructure {
    elems: Vec<String>,
    rels: Vec<(String, Vec<Vec<String>>)>,
    consts: Vec<(String, String)>,
}

fn structure_block(p: &mut Parser) -> Result<RawStructure> {
    p.expect_keyword("structure")?;
    p.expect_sym("{")?;
    let mut raw = RawStructure { elems: vec![], rels: vec![], consts: vec![] };
    while !p.accept_sym("}") {
        if p.accept_ident("elem") {
            while !p.is_sym(";") {
                raw.elems.push(p.name()?);
            }
            p.expect_sym(";")?;
            continue;
        }
        let sym = p.ident()?;
        p.expect_sym("=")?;
        if p.accept_sym("{") {
            let mut tuples = vec![];
            while !p.accept_sym("}") {
                p.expect_sym("(")?;
                let mut t = vec![];
                if !p.is_sym(")") {
                    t.push(p.name()?);
                    while p.accept_sym(",") {
                        t.push(p.name()?);
                    }
                }
                p.expect_sym(")")?;
                p.accept_sym(",");
                tuples.push(t);
            }
            raw.rels.push((sym, tuples));
        } else {
            raw.consts.push((sym, p.name()?));
        }
        p.expect_sym(";")?;
    }
    Ok(raw)
}

impl RawStructure {
    fn infer_signature(&self) -> Result<Signature> {
        let mut sig = Signature::new();
        for (r, ts) in &self.rels {
            let arity = ts.first().map(|t| t.len()).ok_or_else(|| {
                Error::Invalid(format!("cannot infer the arity of empty relation `{r}` without a signature"))
            })?;
            if sig.arity(r).is_none() {
                sig = sig.with_relation(r, arity)?;
            }
        }
        for (c, _) in &self.consts {
            sig = sig.with_constant(c)?;
        }
        if sig.arity(GUARD) == Some(1) {
            sig = sig.with_guard(GUARD)?;
        }
        Ok(sig)
    }

    fn build(&self, sig: &Signature) -> Result<(Structure, Names)> {
        let mut order: Vec<&String> = vec![];
        let mut seen = BTreeSet::new();
        let all = self
            .elems
            .iter()
            .chain(self.rels.iter().flat_map(|(_, ts)| ts.iter().flatten()))
            .chain(self.consts.iter().map(|(_, e)| e));
        for n in all {
            if seen.insert(n.clone()) {
                order.push(n);
            }
        }
        let numeric: BTreeSet<u64> = order.iter().filter_map(|n| n.parse::<u64>().ok()).collect();
        let mut names = Names::default();
        let mut next = 1u64;
        for n in order {
            let id = match n.parse::<u64>() {
                Ok(v) => v,
                Err(_) => {
                    while numeric.contains(&next) {
                        next += 1;
                    }
                    next += 1;
                    next - 1
                }
            };
            names.by_name.insert(n.clone(), Elem(id));
        }
        let mut b = Structure::builder(sig);
        for (r, ts) in &self.rels {
            for t in ts {
                let t: Vec<Elem> = t.iter().map(|n| names.by_name[n]).collect();
                b = b.tuple(r, &t);
            }
        }
        for (c, n) in &self.consts {
            b = b.constant(c, names.by_name[n]);
        }
        for n in &self.elems {
            b = b.padding(names.by_name[n]);
        }
        Ok((b.build()?, names))
    }
}

/// Prints a structure (elements by ID) in the text format.
pub struct StructureText<'a>(pub &'a Structure);

impl fmt::Display for StructureText<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = self.0;
        writeln!(f, "{}", s.signature())?;
        write!(f, "structure {{ elem")?;
        for e in s.carrier() {
            write!(f, " {e}")?;
        }
        write!(f, ";")?;
        for (r, ts) in s.relations() {
            write!(f, " {r} = {{")?;
            for t in ts {
                let items: Vec<String> = t.iter().map(|e| e.to_string()).collect();
                write!(f, " ({})", items.join(","))?;
            }
            write!(f, " }};")?;
        }
        for (c, e) in s.constants() {
            write!(f, " {c} = {e};")?;
        }
        write!(f, " }}")
    }
}

#[derive(Serialize, Deserialize)]
struct SignatureJson {
    relations: BTreeMap<String, usize>,
    constants: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    guard: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct StructureJson {
    signature: SignatureJson,
    elements: Vec<Elem>,
    relations: BTreeMap<String, Vec<Vec<Elem>>>,
    constants: BTreeMap<String, Elem>,
    #[serde(default)]
    padding: Vec<Elem>,
}

pub fn structure_to_json(s: &Structure) -> serde_json::Value {
    let sig = s.signature();
    let j = StructureJson {
        signature: SignatureJson {
            relations: sig.relations().map(|(r, a)| (r.to_string(), a)).collect(),
            constants: sig.constants().map(|c| c.to_string()).collect(),
            guard: sig.guard().map(|g| g.to_string()),
        },
        elements: s.dom().into_iter().collect(),
        relations: s.relations().map(|(r, ts)| (r.to_string(), ts.iter().cloned().collect())).collect(),
        constants: s.constants().map(|(c, e)| (c.to_string(), e)).collect(),
        padding: s.padding().iter().copied().collect(),
    };
    serde_json::to_value(j).expect("structure serializes")
}

pub fn structure_from_json(v: &serde_json::Value) -> Result<Structure> {
    let j: StructureJson = serde_json::from_value(v.clone()).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut sig = Signature::new();
    for (r, a) in &j.signature.relations {
        sig = sig.with_relation(r, *a)?;
    }
    for c in &j.signature.constants {
        sig = sig.with_constant(c)?;
    }
    if let Some(g) = &j.signature.guard {
        sig = sig.with_guard(g)?;
    }
    let mut b = Structure::builder(&sig);
    for (r, ts) in &j.relations {
        for t in ts {
            b = b.tuple(r, t);
        }
    }
    for (c, e) in &j.constants {
        b = b.constant(c, *e);
    }
    for e in j.padding.iter().chain(j.elements.iter()) {
        b = b.padding(*e);
    }
    b.build()
}

/// Parses a structure given either as text or as JSON (detected by a leading `{`).
pub fn load_structure(src: &str, sig: Option<&Signature>) -> Result<(Structure, Names)> {
    if src.trim_start().starts_with('{') {
        let v: serde_json::Value = serde_json::from_str(src).map_err(|e| Error::Invalid(e.to_string()))?;
        let s = structure_from_json(&v)?;
        let names = Names { by_name: s.carrier().into_iter().map(|e| (e.to_string(), e)).collect() };
        return Ok((s, names));
    }
    parse_structure(src, sig)
}

/// Reads `name = value` bindings separated by commas or whitespace.
pub fn parse_bindings(src: &str, names: &Names) -> Result<BTreeMap<String, Elem>> {
    let mut p = Parser::new(src)?;
    let mut out = BTreeMap::new();
    while !p.at_eof() {
        let x = p.ident()?;
        p.expect_sym("=")?;
        let v = p.name()?;
        let e = match names.get(&v) {
            Some(e) => e,
            None => match v.parse::<u64>() {
                Ok(n) => Elem(n),
                Err(_) => return Err(Error::Invalid(format!("unknown element `{v}`"))),
            },
        };
        out.insert(x, e);
        if !p.accept_sym(",") {
            p.accept_sym(";");
        }
    }
    Ok(out)
}
