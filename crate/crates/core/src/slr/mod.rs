//! Separation logic of relations: formulas, inductive definitions (SIDs),
//! satisfaction checking and SID transformations.

mod check;
mod transform;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexer::{Parser, Tok};
use crate::structure::Signature;

pub use check::{check_slr, check_slr_injective, replay, replay_injective, DerivNode, Derivation};
pub use transform::{characteristic_formula, injectify, is_normalized, normalize, split_relation_atoms, width_bound};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Term {
    Var(String),
    Const(String),
}

impl Term {
    pub fn var(x: &str) -> Term {
        Term::Var(x.to_string())
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(x) => Some(x),
            Term::Const(_) => None,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Term::Var(x) | Term::Const(x) => x,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slr {
    Emp,
    Eq(Term, Term),
    Neq(Term, Term),
    Rel(String, Vec<Term>),
    Pred(String, Vec<Term>),
    Star(Box<Slr>, Box<Slr>),
    Exists(String, Box<Slr>),
}

impl Slr {
    pub fn star(a: Slr, b: Slr) -> Slr {
        Slr::Star(Box::new(a), Box::new(b))
    }

    pub fn exists(x: &str, body: Slr) -> Slr {
        Slr::Exists(x.to_string(), Box::new(body))
    }

    /// Separating conjunction of a list; `emp` when empty.
    pub fn star_all(parts: impl IntoIterator<Item = Slr>) -> Slr {
        parts.into_iter().reduce(Slr::star).unwrap_or(Slr::Emp)
    }

    pub fn exists_all(vars: &[String], body: Slr) -> Slr {
        vars.iter().rev().fold(body, |b, x| Slr::exists(x, b))
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_fv(&mut vec![], &mut out);
        out
    }

    fn collect_fv(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        let mut add = |ts: &[&Term], bound: &Vec<String>| {
            for t in ts {
                if let Term::Var(x) = t {
                    if !bound.contains(x) {
                        out.insert(x.clone());
                    }
                }
            }
        };
        match self {
            Slr::Emp => {}
            Slr::Eq(a, b) | Slr::Neq(a, b) => add(&[a, b], bound),
            Slr::Rel(_, ts) | Slr::Pred(_, ts) => add(&ts.iter().collect::<Vec<_>>(), bound),
            Slr::Star(a, b) => {
                a.collect_fv(bound, out);
                b.collect_fv(bound, out);
            }
            Slr::Exists(x, b) => {
                bound.push(x.clone());
                b.collect_fv(bound, out);
                bound.pop();
            }
        }
    }

    /// All variable names occurring free or bound.
    pub fn all_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.walk(&mut |f| match f {
            Slr::Eq(a, b) | Slr::Neq(a, b) => {
                out.extend([a, b].into_iter().filter_map(|t| t.as_var().map(String::from)));
            }
            Slr::Rel(_, ts) | Slr::Pred(_, ts) => out.extend(ts.iter().filter_map(|t| t.as_var().map(String::from))),
            Slr::Exists(x, _) => {
                out.insert(x.clone());
            }
            _ => {}
        });
        out
    }

    pub fn walk(&self, f: &mut impl FnMut(&Slr)) {
        f(self);
        match self {
            Slr::Star(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            Slr::Exists(_, b) => b.walk(f),
            _ => {}
        }
    }

    /// Capture-avoiding substitution of free variables by terms.
    pub fn subst(&self, map: &BTreeMap<String, Term>) -> Slr {
        let sub = |t: &Term| match t {
            Term::Var(x) => map.get(x).cloned().unwrap_or_else(|| t.clone()),
            c => c.clone(),
        };
        match self {
            Slr::Emp => Slr::Emp,
            Slr::Eq(a, b) => Slr::Eq(sub(a), sub(b)),
            Slr::Neq(a, b) => Slr::Neq(sub(a), sub(b)),
            Slr::Rel(r, ts) => Slr::Rel(r.clone(), ts.iter().map(sub).collect()),
            Slr::Pred(p, ts) => Slr::Pred(p.clone(), ts.iter().map(sub).collect()),
            Slr::Star(a, b) => Slr::star(a.subst(map), b.subst(map)),
            Slr::Exists(x, b) => {
                let mut inner = map.clone();
                inner.remove(x);
                let clash = inner.values().any(|t| t == &Term::Var(x.clone()));
                if clash {
                    let mut avoid: BTreeSet<String> = b.all_vars();
                    avoid.extend(inner.values().filter_map(|t| t.as_var().map(String::from)));
                    let y = fresh_name(x, &avoid);
                    inner.insert(x.clone(), Term::Var(y.clone()));
                    Slr::exists(&y, b.subst(&inner))
                } else {
                    Slr::exists(x, b.subst(&inner))
                }
            }
        }
    }

    pub fn has_predicates(&self) -> bool {
        let mut found = false;
        self.walk(&mut |f| found |= matches!(f, Slr::Pred(..)));
        found
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, in_star: bool) -> fmt::Result {
        let args = |ts: &[Term]| ts.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(",");
        match self {
            Slr::Emp => write!(f, "emp"),
            Slr::Eq(a, b) => write!(f, "{a} = {b}"),
            Slr::Neq(a, b) => write!(f, "{a} != {b}"),
            Slr::Rel(r, ts) | Slr::Pred(r, ts) => write!(f, "{r}({})", args(ts)),
            Slr::Star(a, b) => {
                a.fmt_prec(f, true)?;
                write!(f, " * ")?;
                b.fmt_prec(f, true)
            }
            Slr::Exists(x, b) => {
                if in_star {
                    write!(f, "(")?;
                }
                write!(f, "ex {x} . ")?;
                b.fmt_prec(f, false)?;
                if in_star {
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Slr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, false)
    }
}

/// A name based on `base` that avoids every name in `avoid`.
pub(crate) fn fresh_name(base: &str, avoid: &BTreeSet<String>) -> String {
    let stem = base.trim_end_matches(|c: char| c.is_ascii_digit() || c == '_');
    let stem = if stem.is_empty() { "v" } else { stem };
    (1..).map(|i| format!("{stem}_{i}")).find(|n| !avoid.contains(n)).unwrap()
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rule {
    pub head: String,
    pub params: Vec<String>,
    pub body: Slr,
}

impl Rule {
    pub fn new(head: &str, params: &[&str], body: Slr) -> Result<Rule> {
        let rule = Rule { head: head.to_string(), params: params.iter().map(|p| p.to_string()).collect(), body };
        rule.validate()?;
        Ok(rule)
    }

    fn validate(&self) -> Result<()> {
        let distinct: BTreeSet<&String> = self.params.iter().collect();
        if distinct.len() != self.params.len() {
            return Err(Error::Invalid(format!("rule for `{}` repeats a parameter", self.head)));
        }
        if let Some(x) = self.body.free_vars().into_iter().find(|x| !self.params.contains(x)) {
            return Err(Error::UnboundVariable(x));
        }
        Ok(())
    }

    /// The rule in the shape `ex ys . eqs * neqs * rel atoms * pred atoms`,
    /// with bound variables renamed apart.
    pub fn flatten(&self) -> Flat {
        let mut flat = Flat { params: self.params.clone(), ..Flat::default() };
        let mut used: BTreeSet<String> = self.body.all_vars();
        used.extend(self.params.iter().cloned());
        let mut taken: BTreeSet<String> = self.params.iter().cloned().collect();
        flatten_into(&self.body, &BTreeMap::new(), &mut flat, &mut used, &mut taken);
        flat
    }
}

fn flatten_into(
    f: &Slr,
    ren: &BTreeMap<String, String>,
    out: &mut Flat,
    used: &mut BTreeSet<String>,
    taken: &mut BTreeSet<String>,
) {
    let t = |x: &Term| match x {
        Term::Var(v) => Term::Var(ren.get(v).cloned().unwrap_or_else(|| v.clone())),
        c => c.clone(),
    };
    match f {
        Slr::Emp => {}
        Slr::Eq(a, b) => out.eqs.push((t(a), t(b))),
        Slr::Neq(a, b) => out.neqs.push((t(a), t(b))),
        Slr::Rel(r, ts) => out.rels.push((r.clone(), ts.iter().map(t).collect())),
        Slr::Pred(p, ts) => out.calls.push((p.clone(), ts.iter().map(t).collect())),
        Slr::Star(a, b) => {
            flatten_into(a, ren, out, used, taken);
            flatten_into(b, ren, out, used, taken);
        }
        Slr::Exists(x, b) => {
            let name = if taken.contains(x) {
                let n = fresh_name(x, used);
                used.insert(n.clone());
                n
            } else {
                x.clone()
            };
            taken.insert(name.clone());
            out.exists.push(name.clone());
            let mut inner = ren.clone();
            inner.insert(x.clone(), name);
            flatten_into(b, &inner, out, used, taken);
        }
    }
}

/// A rule body split into its parts. Variables are `params ++ exists`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Flat {
    pub params: Vec<String>,
    pub exists: Vec<String>,
    pub eqs: Vec<(Term, Term)>,
    pub neqs: Vec<(Term, Term)>,
    pub rels: Vec<(String, Vec<Term>)>,
    pub calls: Vec<(String, Vec<Term>)>,
}

impl Flat {
    pub fn vars(&self) -> Vec<String> {
        self.params.iter().chain(self.exists.iter()).cloned().collect()
    }

    /// Rebuilds a formula: the existential prefix over the separating
    /// conjunction of all atoms.
    pub fn to_slr(&self) -> Slr {
        let mut parts = vec![];
        parts.extend(self.eqs.iter().map(|(a, b)| Slr::Eq(a.clone(), b.clone())));
        parts.extend(self.neqs.iter().map(|(a, b)| Slr::Neq(a.clone(), b.clone())));
        parts.extend(self.rels.iter().map(|(r, ts)| Slr::Rel(r.clone(), ts.clone())));
        parts.extend(self.calls.iter().map(|(p, ts)| Slr::Pred(p.clone(), ts.clone())));
        Slr::exists_all(&self.exists, Slr::star_all(parts))
    }

    /// Variables that occur in some atom.
    pub fn occurring(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let terms = self
            .eqs
            .iter()
            .chain(self.neqs.iter())
            .flat_map(|(a, b)| [a, b])
            .chain(self.rels.iter().chain(self.calls.iter()).flat_map(|(_, ts)| ts.iter()));
        for t in terms {
            if let Term::Var(x) = t {
                out.insert(x.clone());
            }
        }
        out
    }
}

/// A set of inductive definitions. `preds` records the arity of every
/// predicate, including predicates without rules.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sid {
    pub rules: Vec<Rule>,
    pub preds: BTreeMap<String, usize>,
}

impl Sid {
    pub fn new() -> Sid {
        Sid::default()
    }

    pub fn from_rules(rules: Vec<Rule>) -> Result<Sid> {
        let mut sid = Sid::new();
        for r in rules {
            sid.add_rule(r)?;
        }
        sid.check_arities()?;
        Ok(sid)
    }

    pub fn add_rule(&mut self, rule: Rule) -> Result<()> {
        rule.validate()?;
        self.declare(&rule.head, rule.params.len())?;
        self.rules.push(rule);
        Ok(())
    }

    pub fn declare(&mut self, pred: &str, arity: usize) -> Result<()> {
        match self.preds.get(pred) {
            Some(a) if *a != arity => {
                Err(Error::ArityMismatch { symbol: pred.to_string(), expected: *a, found: arity })
            }
            _ => {
                self.preds.insert(pred.to_string(), arity);
                Ok(())
            }
        }
    }

    pub fn arity(&self, pred: &str) -> Option<usize> {
        self.preds.get(pred).copied()
    }

    pub fn rules_for<'a>(&'a self, pred: &'a str) -> impl Iterator<Item = (usize, &'a Rule)> + 'a {
        self.rules.iter().enumerate().filter(move |(_, r)| r.head == pred)
    }

    /// Checks predicate-atom arities and consistent relation arities.
    pub fn check_arities(&self) -> Result<()> {
        let mut rels: BTreeMap<String, usize> = BTreeMap::new();
        let mut err = None;
        for r in &self.rules {
            r.body.walk(&mut |f| match f {
                Slr::Pred(p, ts) => match self.preds.get(p) {
                    Some(a) if *a != ts.len() => {
                        err.get_or_insert(Error::ArityMismatch { symbol: p.clone(), expected: *a, found: ts.len() });
                    }
                    None => {
                        err.get_or_insert(Error::UnknownPredicate(p.clone()));
                    }
                    _ => {}
                },
                Slr::Rel(q, ts) => {
                    let a = *rels.entry(q.clone()).or_insert(ts.len());
                    if a != ts.len() {
                        err.get_or_insert(Error::ArityMismatch { symbol: q.clone(), expected: a, found: ts.len() });
                    }
                }
                _ => {}
            });
        }
        err.map_or(Ok(()), Err)
    }

    /// Relation symbols used in rule bodies, with their arities.
    pub fn relations(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for r in &self.rules {
            r.body.walk(&mut |f| {
                if let Slr::Rel(q, ts) = f {
                    out.insert(q.clone(), ts.len());
                }
            });
        }
        out
    }

    /// Largest number of predicate atoms in one rule.
    pub fn max_calls(&self) -> usize {
        self.rules.iter().map(|r| r.flatten().calls.len()).max().unwrap_or(0)
    }
}

impl fmt::Display for Sid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let defined: BTreeSet<&str> = self.rules.iter().map(|r| r.head.as_str()).collect();
        for (p, a) in &self.preds {
            if !defined.contains(p.as_str()) {
                writeln!(f, "pred {p}/{a};")?;
            }
        }
        for r in &self.rules {
            writeln!(f, "{}({}) <= {};", r.head, r.params.join(","), r.body)?;
        }
        Ok(())
    }
}

// Parsing. Atoms and terms are first read as raw names and resolved once the
// set of predicates (and, for formulas, the signature) is known.

#[derive(Clone, Debug)]
enum Raw {
    Emp,
    Eq(String, String),
    Neq(String, String),
    Atom(String, Vec<String>),
    Star(Box<Raw>, Box<Raw>),
    Exists(String, Box<Raw>),
}

fn raw_star(p: &mut Parser) -> Result<Raw> {
    let mut f = raw_unit(p)?;
    while p.accept_sym("*") {
        let g = raw_unit(p)?;
        f = Raw::Star(Box::new(f), Box::new(g));
    }
    Ok(f)
}

fn raw_unit(p: &mut Parser) -> Result<Raw> {
    if p.accept_sym("(") {
        let f = raw_star(p)?;
        p.expect_sym(")")?;
        return Ok(f);
    }
    if p.accept_ident("ex") {
        let mut vars = vec![p.ident()?];
        while p.accept_sym(",") {
            vars.push(p.ident()?);
        }
        p.expect_sym(".")?;
        let body = raw_star(p)?;
        return Ok(vars.into_iter().rev().fold(body, |b, x| Raw::Exists(x, Box::new(b))));
    }
    if p.accept_ident("emp") {
        return Ok(Raw::Emp);
    }
    let name = p.name()?;
    if p.accept_sym("(") {
        let mut args = vec![];
        if !p.is_sym(")") {
            args.push(p.name()?);
            while p.accept_sym(",") {
                args.push(p.name()?);
            }
        }
        p.expect_sym(")")?;
        return Ok(Raw::Atom(name, args));
    }
    if p.accept_sym("=") {
        return Ok(Raw::Eq(name, p.name()?));
    }
    if p.accept_sym("!=") {
        return Ok(Raw::Neq(name, p.name()?));
    }
    p.error(format!("expected an atom after `{name}`"))
}

fn resolve(raw: &Raw, is_pred: &dyn Fn(&str) -> bool, is_var: &dyn Fn(&str, &[String]) -> bool, bound: &mut Vec<String>) -> Slr {
    let term = |n: &String, bound: &Vec<String>| {
        if is_var(n, bound) {
            Term::Var(n.clone())
        } else {
            Term::Const(n.clone())
        }
    };
    match raw {
        Raw::Emp => Slr::Emp,
        Raw::Eq(a, b) => Slr::Eq(term(a, bound), term(b, bound)),
        Raw::Neq(a, b) => Slr::Neq(term(a, bound), term(b, bound)),
        Raw::Atom(n, args) => {
            let ts = args.iter().map(|a| term(a, bound)).collect();
            if is_pred(n) {
                Slr::Pred(n.clone(), ts)
            } else {
                Slr::Rel(n.clone(), ts)
            }
        }
        Raw::Star(a, b) => Slr::star(resolve(a, is_pred, is_var, bound), resolve(b, is_pred, is_var, bound)),
        Raw::Exists(x, b) => {
            bound.push(x.clone());
            let body = resolve(b, is_pred, is_var, bound);
            bound.pop();
            Slr::exists(x, body)
        }
    }
}

/// Parses an SID: `pred P/n;` declarations and rules `A(x1,..,xn) <= body;`.
/// Atoms naming a declared or defined predicate are predicate atoms, all
/// others are relation atoms; names not bound in a rule are constants.
pub fn parse_sid(src: &str) -> Result<Sid> {
    let mut p = Parser::new(src)?;
    let mut decls: Vec<(String, usize)> = vec![];
    let mut raws: Vec<(String, Vec<String>, Raw, usize, usize)> = vec![];
    while !p.at_eof() {
        if p.is_ident("pred") && matches!(p.peek_at(1), Tok::Ident(_)) && matches!(p.peek_at(2), Tok::Sym("/")) {
            p.next();
            let name = p.ident()?;
            p.expect_sym("/")?;
            decls.push((name, p.number()? as usize));
            p.expect_sym(";")?;
            continue;
        }
        let head = p.ident()?;
        p.expect_sym("(")?;
        let mut params = vec![];
        if !p.is_sym(")") {
            params.push(p.ident()?);
            while p.accept_sym(",") {
                params.push(p.ident()?);
            }
        }
        p.expect_sym(")")?;
        p.expect_sym("<=")?;
        let body = raw_star(&mut p)?;
        p.expect_sym(";")?;
        raws.push((head, params, body, 0, 0));
    }
    let mut preds: BTreeMap<String, usize> = BTreeMap::new();
    for (n, a) in decls.iter().cloned().chain(raws.iter().map(|r| (r.0.clone(), r.1.len()))) {
        if let Some(b) = preds.insert(n.clone(), a) {
            if a != b {
                return Err(Error::ArityMismatch { symbol: n, expected: b, found: a });
            }
        }
    }
    let mut sid = Sid { rules: vec![], preds: preds.clone() };
    for (head, params, raw, _, _) in raws {
        let ps = params.clone();
        let body = resolve(&raw, &|n| preds.contains_key(n), &|n, bound| ps.iter().any(|x| x == n) || bound.iter().any(|x| x == n), &mut vec![]);
        let rule = Rule { head, params, body };
        rule.validate()?;
        sid.rules.push(rule);
    }
    sid.check_arities()?;
    Ok(sid)
}

/// Parses a formula against an SID (for predicate names) and a signature
/// (for constant names). Other free names are variables.
pub fn parse_slr(src: &str, sid: &Sid, sig: &Signature) -> Result<Slr> {
    let mut p = Parser::new(src)?;
    let raw = raw_star(&mut p)?;
    if !p.at_eof() {
        return p.error("trailing input after formula");
    }
    let f = resolve(&raw, &|n| sid.preds.contains_key(n), &|n, _| !sig.has_constant(n), &mut vec![]);
    let mut err = None;
    f.walk(&mut |g| {
        if let Slr::Pred(q, ts) = g {
            if sid.arity(q) != Some(ts.len()) {
                err.get_or_insert(Error::ArityMismatch { symbol: q.clone(), expected: sid.arity(q).unwrap_or(0), found: ts.len() });
            }
        }
    });
    err.map_or(Ok(f), Err)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LS: &str = "ls(x,y) <= x = y;\nls(x,y) <= ex z . H(x,z) * ls(z,y);";

    #[test]
    fn parse_and_print_round_trip() {
        let sid = parse_sid(LS).unwrap();
        assert_eq!(sid.rules.len(), 2);
        assert_eq!(sid.arity("ls"), Some(2));
        let printed = sid.to_string();
        assert_eq!(parse_sid(&printed).unwrap(), sid);
        match &sid.rules[1].body {
            Slr::Exists(z, b) => {
                assert_eq!(z, "z");
                assert!(matches!(**b, Slr::Star(..)));
            }
            other => panic!("unexpected body {other}"),
        }
    }

    #[test]
    fn repeated_parameters_rejected() {
        assert!(parse_sid("A(x,x) <= emp;").is_err());
    }

    #[test]
    fn unbound_names_become_constants() {
        let sid = parse_sid("A() <= R(c,c);").unwrap();
        assert_eq!(sid.rules[0].body, Slr::Rel("R".into(), vec![Term::Const("c".into()), Term::Const("c".into())]));
    }

    #[test]
    fn arity_errors() {
        assert!(matches!(parse_sid("A(x) <= A(x,x);"), Err(Error::ArityMismatch { .. })));
        assert!(matches!(parse_sid("A(x) <= R(x) * R(x,x);"), Err(Error::ArityMismatch { .. })));
    }

    #[test]
    fn formula_parse() {
        let sid = parse_sid(LS).unwrap();
        let sig = Signature::new().with_relation("H", 2).unwrap();
        let f = parse_slr("ex y . H(x1,y) * ls(y,x2)", &sid, &sig).unwrap();
        assert_eq!(f.free_vars(), ["x1", "x2"].iter().map(|s| s.to_string()).collect());
        assert!(matches!(f, Slr::Exists(..)));
    }

    #[test]
    fn substitution_avoids_capture() {
        let f = Slr::exists("z", Slr::Rel("H".into(), vec![Term::var("x"), Term::var("z")]));
        let g = f.subst(&[("x".to_string(), Term::var("z"))].into_iter().collect());
        assert_eq!(g.free_vars(), ["z".to_string()].into_iter().collect());
    }

    #[test]
    fn flatten_renames_apart() {
        let sid = parse_sid("A(x) <= (ex y . R(x,y)) * (ex y . R(y,x));").unwrap();
        let flat = sid.rules[0].flatten();
        assert_eq!(flat.exists.len(), 2);
        assert_ne!(flat.exists[0], flat.exists[1]);
        assert_eq!(flat.rels.len(), 2);
    }
}
