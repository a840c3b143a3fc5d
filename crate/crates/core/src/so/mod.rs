//! Weak second-order logic: formulas, quantifier rank, and model checking
//! over a padded finite carrier.

mod eval;
mod ground;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexer::{Parser, Tok};
use crate::slr::Term;
use crate::structure::Signature;

pub use eval::{carrier_for, check_so, check_so_naive, check_so_with_hint, Cutoffs, Engine};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum So {
    True,
    False,
    Eq(Term, Term),
    Rel(String, Vec<Term>),
    Var(String, Vec<Term>),
    Not(Box<So>),
    And(Box<So>, Box<So>),
    Or(Box<So>, Box<So>),
    Implies(Box<So>, Box<So>),
    Iff(Box<So>, Box<So>),
    ExistsFo(String, Box<So>),
    ForallFo(String, Box<So>),
    ExistsSo(String, usize, Box<So>),
    ForallSo(String, usize, Box<So>),
}

impl So {
    pub fn eq(a: Term, b: Term) -> So {
        So::Eq(a, b)
    }

    pub fn neq(a: Term, b: Term) -> So {
        So::not(So::Eq(a, b))
    }

    pub fn rel(r: &str, ts: &[&str]) -> So {
        So::Rel(r.to_string(), ts.iter().map(|x| Term::var(x)).collect())
    }

    pub fn var(x: &str, ts: &[&str]) -> So {
        So::Var(x.to_string(), ts.iter().map(|x| Term::var(x)).collect())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: So) -> So {
        So::Not(Box::new(a))
    }

    pub fn and(a: So, b: So) -> So {
        So::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: So, b: So) -> So {
        So::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: So, b: So) -> So {
        So::Implies(Box::new(a), Box::new(b))
    }

    pub fn iff(a: So, b: So) -> So {
        So::Iff(Box::new(a), Box::new(b))
    }

    pub fn exists(x: &str, a: So) -> So {
        So::ExistsFo(x.to_string(), Box::new(a))
    }

    pub fn forall(x: &str, a: So) -> So {
        So::ForallFo(x.to_string(), Box::new(a))
    }

    pub fn exists_so(x: &str, arity: usize, a: So) -> So {
        So::ExistsSo(x.to_string(), arity, Box::new(a))
    }

    pub fn forall_so(x: &str, arity: usize, a: So) -> So {
        So::ForallSo(x.to_string(), arity, Box::new(a))
    }

    /// Conjunction of a list; `true` when empty.
    pub fn and_all(parts: impl IntoIterator<Item = So>) -> So {
        parts.into_iter().reduce(So::and).unwrap_or(So::True)
    }

    /// Disjunction of a list; `false` when empty.
    pub fn or_all(parts: impl IntoIterator<Item = So>) -> So {
        parts.into_iter().reduce(So::or).unwrap_or(So::False)
    }

    pub fn exists_all(xs: &[String], a: So) -> So {
        xs.iter().rev().fold(a, |b, x| So::exists(x, b))
    }

    pub fn forall_all(xs: &[String], a: So) -> So {
        xs.iter().rev().fold(a, |b, x| So::forall(x, b))
    }

    pub fn quantifier_rank(&self) -> usize {
        match self {
            So::True | So::False | So::Eq(..) | So::Rel(..) | So::Var(..) => 0,
            So::Not(a) => a.quantifier_rank(),
            So::And(a, b) | So::Or(a, b) | So::Implies(a, b) | So::Iff(a, b) => a.quantifier_rank().max(b.quantifier_rank()),
            So::ExistsFo(_, a) | So::ForallFo(_, a) | So::ExistsSo(_, _, a) | So::ForallSo(_, _, a) => 1 + a.quantifier_rank(),
        }
    }

    /// Rewrites sugar (`|`, `->`, `<->`, universal quantifiers) into
    /// negation, conjunction and existential quantifiers.
    pub fn desugar(&self) -> So {
        match self {
            So::True | So::False | So::Eq(..) | So::Rel(..) | So::Var(..) => self.clone(),
            So::Not(a) => So::not(a.desugar()),
            So::And(a, b) => So::and(a.desugar(), b.desugar()),
            So::Or(a, b) => So::not(So::and(So::not(a.desugar()), So::not(b.desugar()))),
            So::Implies(a, b) => So::not(So::and(a.desugar(), So::not(b.desugar()))),
            So::Iff(a, b) => {
                let (a, b) = (a.desugar(), b.desugar());
                So::and(So::not(So::and(a.clone(), So::not(b.clone()))), So::not(So::and(b, So::not(a))))
            }
            So::ExistsFo(x, a) => So::exists(x, a.desugar()),
            So::ForallFo(x, a) => So::not(So::exists(x, So::not(a.desugar()))),
            So::ExistsSo(x, n, a) => So::exists_so(x, *n, a.desugar()),
            So::ForallSo(x, n, a) => So::not(So::exists_so(x, *n, So::not(a.desugar()))),
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut vec![], &mut vec![], &mut out, &mut BTreeMap::new());
        out
    }

    /// Free second-order variables with their arities.
    pub fn free_so_vars(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        self.collect_free(&mut vec![], &mut vec![], &mut BTreeSet::new(), &mut out);
        out
    }

    fn collect_free(&self, fo: &mut Vec<String>, so: &mut Vec<String>, out: &mut BTreeSet<String>, sout: &mut BTreeMap<String, usize>) {
        let mut terms = |ts: &[Term], fo: &Vec<String>| {
            for t in ts {
                if let Term::Var(x) = t {
                    if !fo.contains(x) {
                        out.insert(x.clone());
                    }
                }
            }
        };
        match self {
            So::True | So::False => {}
            So::Eq(a, b) => terms(&[a.clone(), b.clone()], fo),
            So::Rel(_, ts) => terms(ts, fo),
            So::Var(x, ts) => {
                terms(ts, fo);
                if !so.contains(x) {
                    sout.insert(x.clone(), ts.len());
                }
            }
            So::Not(a) => a.collect_free(fo, so, out, sout),
            So::And(a, b) | So::Or(a, b) | So::Implies(a, b) | So::Iff(a, b) => {
                a.collect_free(fo, so, out, sout);
                b.collect_free(fo, so, out, sout);
            }
            So::ExistsFo(x, a) | So::ForallFo(x, a) => {
                fo.push(x.clone());
                a.collect_free(fo, so, out, sout);
                fo.pop();
            }
            So::ExistsSo(x, _, a) | So::ForallSo(x, _, a) => {
                so.push(x.clone());
                a.collect_free(fo, so, out, sout);
                so.pop();
            }
        }
    }

    /// True iff every second-order quantifier and variable is monadic.
    pub fn is_monadic(&self) -> bool {
        self.max_so_arity() <= 1
    }

    pub fn max_so_arity(&self) -> usize {
        match self {
            So::True | So::False | So::Eq(..) | So::Rel(..) => 0,
            So::Var(_, ts) => ts.len(),
            So::Not(a) => a.max_so_arity(),
            So::And(a, b) | So::Or(a, b) | So::Implies(a, b) | So::Iff(a, b) => a.max_so_arity().max(b.max_so_arity()),
            So::ExistsFo(_, a) | So::ForallFo(_, a) => a.max_so_arity(),
            So::ExistsSo(_, n, a) | So::ForallSo(_, n, a) => (*n).max(a.max_so_arity()),
        }
    }

    /// Largest arity of a second-order quantifier; free second-order
    /// variables do not count.
    pub fn max_quantified_so_arity(&self) -> usize {
        match self {
            So::True | So::False | So::Eq(..) | So::Rel(..) | So::Var(..) => 0,
            So::Not(a) | So::ExistsFo(_, a) | So::ForallFo(_, a) => a.max_quantified_so_arity(),
            So::And(a, b) | So::Or(a, b) | So::Implies(a, b) | So::Iff(a, b) => {
                a.max_quantified_so_arity().max(b.max_quantified_so_arity())
            }
            So::ExistsSo(_, n, a) | So::ForallSo(_, n, a) => (*n).max(a.max_quantified_so_arity()),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            So::True | So::False | So::Eq(..) | So::Rel(..) | So::Var(..) => 1,
            So::Not(a) | So::ExistsFo(_, a) | So::ForallFo(_, a) | So::ExistsSo(_, _, a) | So::ForallSo(_, _, a) => 1 + a.size(),
            So::And(a, b) | So::Or(a, b) | So::Implies(a, b) | So::Iff(a, b) => 1 + a.size() + b.size(),
        }
    }

    /// Checks relation symbols and arities against a signature and arity
    /// consistency of second-order variables.
    pub fn validate(&self, sig: &Signature) -> Result<()> {
        fn go(f: &So, sig: &Signature, so: &mut Vec<(String, usize)>, free: &mut BTreeMap<String, usize>) -> Result<()> {
            let term = |t: &Term| match t {
                Term::Const(c) if !sig.has_constant(c) => Err(Error::UnknownConstant(c.clone())),
                _ => Ok(()),
            };
            match f {
                So::True | So::False => Ok(()),
                So::Eq(a, b) => {
                    term(a)?;
                    term(b)
                }
                So::Rel(r, ts) => {
                    ts.iter().try_for_each(term)?;
                    match sig.arity(r) {
                        None => Err(Error::UnknownRelation(r.clone())),
                        Some(a) if a != ts.len() => Err(Error::ArityMismatch { symbol: r.clone(), expected: a, found: ts.len() }),
                        _ => Ok(()),
                    }
                }
                So::Var(x, ts) => {
                    ts.iter().try_for_each(term)?;
                    let expected = so.iter().rev().find(|(y, _)| y == x).map(|(_, a)| *a).or_else(|| free.get(x).copied());
                    match expected {
                        Some(a) if a != ts.len() => Err(Error::ArityMismatch { symbol: x.clone(), expected: a, found: ts.len() }),
                        Some(_) => Ok(()),
                        None => {
                            free.insert(x.clone(), ts.len());
                            Ok(())
                        }
                    }
                }
                So::Not(a) | So::ExistsFo(_, a) | So::ForallFo(_, a) => go(a, sig, so, free),
                So::And(a, b) | So::Or(a, b) | So::Implies(a, b) | So::Iff(a, b) => {
                    go(a, sig, so, free)?;
                    go(b, sig, so, free)
                }
                So::ExistsSo(x, n, a) | So::ForallSo(x, n, a) => {
                    if *n == 0 {
                        return Err(Error::Invalid(format!("second-order variable `{x}` has arity 0")));
                    }
                    so.push((x.clone(), *n));
                    let r = go(a, sig, so, free);
                    so.pop();
                    r
                }
            }
        }
        go(self, sig, &mut vec![], &mut BTreeMap::new())
    }

    fn prec(&self) -> u8 {
        match self {
            So::Iff(..) => 1,
            So::Implies(..) => 2,
            So::Or(..) => 3,
            So::And(..) => 4,
            So::ExistsFo(..) | So::ForallFo(..) | So::ExistsSo(..) | So::ForallSo(..) => 0,
            _ => 6,
        }
    }

    fn fmt_in(&self, f: &mut fmt::Formatter<'_>, ctx: u8) -> fmt::Result {
        let paren = self.prec() < ctx || (self.prec() == 0 && ctx > 0);
        if paren {
            write!(f, "(")?;
        }
        let args = |ts: &[Term]| ts.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(",");
        match self {
            So::True => write!(f, "true")?,
            So::False => write!(f, "false")?,
            So::Eq(a, b) => write!(f, "{a} = {b}")?,
            So::Rel(r, ts) | So::Var(r, ts) => write!(f, "{r}({})", args(ts))?,
            So::Not(a) => match &**a {
                So::Eq(x, y) => write!(f, "{x} != {y}")?,
                _ => {
                    write!(f, "~")?;
                    a.fmt_in(f, 6)?;
                }
            },
            So::And(a, b) => {
                a.fmt_in(f, 4)?;
                write!(f, " & ")?;
                b.fmt_in(f, 5)?;
            }
            So::Or(a, b) => {
                a.fmt_in(f, 3)?;
                write!(f, " | ")?;
                b.fmt_in(f, 4)?;
            }
            So::Implies(a, b) => {
                a.fmt_in(f, 3)?;
                write!(f, " -> ")?;
                b.fmt_in(f, 2)?;
            }
            So::Iff(a, b) => {
                a.fmt_in(f, 2)?;
                write!(f, " <-> ")?;
                b.fmt_in(f, 2)?;
            }
            So::ExistsFo(x, a) => {
                write!(f, "ex {x}. ")?;
                a.fmt_in(f, 0)?;
            }
            So::ForallFo(x, a) => {
                write!(f, "all {x}. ")?;
                a.fmt_in(f, 0)?;
            }
            So::ExistsSo(x, n, a) => {
                write!(f, "ex2 {x}/{n}. ")?;
                a.fmt_in(f, 0)?;
            }
            So::ForallSo(x, n, a) => {
                write!(f, "all2 {x}/{n}. ")?;
                a.fmt_in(f, 0)?;
            }
        }
        if paren {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for So {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_in(f, 0)
    }
}

struct SoParser<'a> {
    p: Parser,
    sig: &'a Signature,
    fo: Vec<String>,
    so: Vec<String>,
}

impl SoParser<'_> {
    fn formula(&mut self) -> Result<So> {
        let a = self.implication()?;
        if self.p.accept_sym("<->") {
            let b = self.implication()?;
            return Ok(So::iff(a, b));
        }
        Ok(a)
    }

    fn implication(&mut self) -> Result<So> {
        let a = self.disjunction()?;
        if self.p.accept_sym("->") {
            let b = self.implication()?;
            return Ok(So::implies(a, b));
        }
        Ok(a)
    }

    fn disjunction(&mut self) -> Result<So> {
        let mut a = self.conjunction()?;
        while self.p.accept_sym("|") {
            let b = self.conjunction()?;
            a = So::or(a, b);
        }
        Ok(a)
    }

    fn conjunction(&mut self) -> Result<So> {
        let mut a = self.unary()?;
        while self.p.accept_sym("&") {
            let b = self.unary()?;
            a = So::and(a, b);
        }
        Ok(a)
    }

    fn term(&self, n: String) -> Term {
        if self.fo.contains(&n) || !self.sig.has_constant(&n) {
            Term::Var(n)
        } else {
            Term::Const(n)
        }
    }

    fn unary(&mut self) -> Result<So> {
        if self.p.accept_sym("~") {
            return Ok(So::not(self.unary()?));
        }
        if self.p.accept_sym("(") {
            let a = self.formula()?;
            self.p.expect_sym(")")?;
            return Ok(a);
        }
        for (kw, universal) in [("ex", false), ("all", true)] {
            if self.p.accept_ident(kw) {
                let mut xs = vec![self.p.ident()?];
                while self.p.accept_sym(",") {
                    xs.push(self.p.ident()?);
                }
                self.p.expect_sym(".")?;
                let depth = self.fo.len();
                self.fo.extend(xs.iter().cloned());
                let body = self.formula()?;
                self.fo.truncate(depth);
                return Ok(if universal { So::forall_all(&xs, body) } else { So::exists_all(&xs, body) });
            }
        }
        for (kw, universal) in [("ex2", false), ("all2", true)] {
            if self.p.accept_ident(kw) {
                let x = self.p.ident()?;
                self.p.expect_sym("/")?;
                let n = self.p.number()? as usize;
                self.p.expect_sym(".")?;
                self.so.push(x.clone());
                let body = self.formula()?;
                self.so.pop();
                return Ok(if universal { So::forall_so(&x, n, body) } else { So::exists_so(&x, n, body) });
            }
        }
        if self.p.accept_ident("true") {
            return Ok(So::True);
        }
        if self.p.accept_ident("false") {
            return Ok(So::False);
        }
        let name = self.p.name()?;
        if self.p.accept_sym("(") {
            let mut ts = vec![];
            if !self.p.is_sym(")") {
                let n = self.p.name()?;
                ts.push(self.term(n));
                while self.p.accept_sym(",") {
                    let n = self.p.name()?;
                    ts.push(self.term(n));
                }
            }
            self.p.expect_sym(")")?;
            return Ok(if !self.so.contains(&name) && self.sig.has_relation(&name) {
                So::Rel(name, ts)
            } else {
                So::Var(name, ts)
            });
        }
        let a = self.term(name);
        if self.p.accept_sym("=") {
            let n = self.p.name()?;
            return Ok(So::Eq(a, self.term(n)));
        }
        if self.p.accept_sym("!=") {
            let n = self.p.name()?;
            return Ok(So::neq(a, self.term(n)));
        }
        if matches!(self.p.peek(), Tok::Eof) {
            return self.p.error("unexpected end of formula");
        }
        self.p.error("expected `=` or `!=`")
    }
}

/// Parses a formula. Atom names that are relations of the signature (and
/// not shadowed by a second-order quantifier) are relation atoms; other atom
/// names are second-order variables. Identifiers naming constants of the
/// signature are constants unless bound by a first-order quantifier.
pub fn parse_so(src: &str, sig: &Signature) -> Result<So> {
    let mut sp = SoParser { p: Parser::new(src)?, sig, fo: vec![], so: vec![] };
    let f = sp.formula()?;
    if !sp.p.at_eof() {
        return sp.p.error("trailing input after formula");
    }
    f.validate(sig)?;
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig() -> Signature {
        Signature::new().with_relation("E", 2).unwrap().with_relation("D", 1).unwrap().with_constant("c").unwrap()
    }

    #[test]
    fn parse_print_round_trip() {
        let srcs = [
            "all x. all y. x != y -> E(x,y) | E(y,x)",
            "ex2 X/1. ex x. X(x) & ~D(x)",
            "(ex x. D(x)) & ~(ex y. E(y,c))",
            "a = b <-> (b = a -> true)",
            "all2 Y/2. ex x. Y(x,x) & (D(x) | false)",
            "~~D(c) & (D(c) & D(c))",
        ];
        for src in srcs {
            let f = parse_so(src, &sig()).unwrap();
            let printed = f.to_string();
            assert_eq!(parse_so(&printed, &sig()).unwrap(), f, "{src} -> {printed}");
        }
    }

    #[test]
    fn ranks() {
        let s = sig();
        assert_eq!(parse_so("E(x,y)", &s).unwrap().quantifier_rank(), 0);
        assert_eq!(parse_so("ex x. ex2 X/1. X(x)", &s).unwrap().quantifier_rank(), 2);
        assert_eq!(parse_so("(ex x. D(x)) & all y. all z. E(y,z)", &s).unwrap().quantifier_rank(), 2);
    }

    #[test]
    fn resolution_of_names() {
        let f = parse_so("ex x. D(x) & x = c & Z(c)", &sig()).unwrap();
        assert_eq!(f.free_vars(), BTreeSet::new());
        assert_eq!(f.free_so_vars(), [("Z".to_string(), 1)].into_iter().collect());
        assert!(matches!(parse_so("E(x)", &sig()), Err(Error::ArityMismatch { .. })));
        assert!(matches!(parse_so("ex2 X/1. X(x,y)", &sig()), Err(Error::ArityMismatch { .. })));
    }
}
