//! Generators for the treewidth-k SID and its type-annotated refinement.

use crate::error::{Error, Result};
use crate::slr::{Rule, Sid, Slr, Term};
use crate::structure::{Signature, GUARD};

/// Name of the recursive predicate of the treewidth SID.
pub const TW_PRED: &str = "A";

/// Name of the 0-ary top predicate of the treewidth SID for width `k`.
pub fn tw_top(k: usize) -> String {
    format!("A_{k}")
}

pub(crate) fn xs(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

fn vars(names: &[String]) -> Vec<Term> {
    names.iter().map(|x| Term::var(x)).collect()
}

/// All functions `[0, len) -> [0, range)` in lexicographic order.
pub(crate) fn functions(len: usize, range: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|f| {
                (0..range).map(move |v| {
                    let mut g = f.clone();
                    g.push(v);
                    g
                })
            })
            .collect();
    }
    out
}

pub(crate) fn guard_of(sig: &Signature) -> String {
    sig.guard().unwrap_or(GUARD).to_string()
}

fn rule(head: &str, params: &[String], body: Slr) -> Rule {
    Rule { head: head.to_string(), params: params.to_vec(), body }
}

/// The rule shapes of the treewidth SID, parameterized by the predicate
/// names used at each position (so that the annotated SID can reuse them).
pub(crate) struct TwShapes {
    pub guard: String,
    pub xs: Vec<String>,
}

impl TwShapes {
    pub fn new(k: usize, guard: &str) -> TwShapes {
        TwShapes { guard: guard.to_string(), xs: xs(k + 1) }
    }

    pub fn comp(&self, head: &str, left: &str, right: &str) -> Rule {
        let a = Slr::Pred(left.to_string(), vars(&self.xs));
        let b = Slr::Pred(right.to_string(), vars(&self.xs));
        rule(head, &self.xs, Slr::star(a, b))
    }

    /// `head(x̄) <= ex y . D(y) * child(x̄)[x_i/y]` for 0-based `i`.
    pub fn exists(&self, head: &str, child: &str, i: usize) -> Rule {
        let mut args = vars(&self.xs);
        args[i] = Term::var("y");
        let body = Slr::star(Slr::Rel(self.guard.clone(), vec![Term::var("y")]), Slr::Pred(child.to_string(), args));
        rule(head, &self.xs, Slr::exists("y", body))
    }

    pub fn rel(&self, head: &str, r: &str, f: &[usize]) -> Rule {
        let args = f.iter().map(|&i| Term::var(&self.xs[i])).collect();
        rule(head, &self.xs, Slr::Rel(r.to_string(), args))
    }

    pub fn top(&self, head: &str, child: &str) -> Rule {
        let mut parts: Vec<Slr> = self.xs.iter().map(|x| Slr::Rel(self.guard.clone(), vec![Term::var(x)])).collect();
        parts.push(Slr::Pred(child.to_string(), vars(&self.xs)));
        rule(head, &[], Slr::exists_all(&self.xs, Slr::star_all(parts)))
    }
}

/// The SID whose top predicate `A_k()` defines the guarded structures of
/// treewidth at most `k` that have at least `k+1` guarded elements and at
/// least one relation tuple.
///
/// Rule order: composition; one existential rule per position; one relation
/// rule per symbol (in name order) and argument map (lexicographic); top.
/// With `corner_cases`, extra rules for `A_k()` cover structures with at
/// most `k` guarded elements (including the empty structure).
pub fn gen_tw_sid(k: usize, sig: &Signature, corner_cases: bool) -> Result<Sid> {
    if k == 0 {
        return Err(Error::Invalid("treewidth bound must be at least 1".into()));
    }
    let guard = guard_of(sig);
    let sh = TwShapes::new(k, &guard);
    let top = tw_top(k);
    let mut sid = Sid::new();
    sid.add_rule(sh.comp(TW_PRED, TW_PRED, TW_PRED))?;
    for i in 0..=k {
        sid.add_rule(sh.exists(TW_PRED, TW_PRED, i))?;
    }
    for (r, ar) in sig.sigma_relations() {
        for f in functions(ar, k + 1) {
            sid.add_rule(sh.rel(TW_PRED, r, &f))?;
        }
    }
    sid.add_rule(sh.top(&top, TW_PRED))?;
    if corner_cases {
        add_corner_cases(&mut sid, k, sig, &guard, &top)?;
    }
    sid.check_arities()?;
    Ok(sid)
}

/// Name of the predicate collecting the tuples of a structure whose guard
/// holds exactly `j` elements.
pub fn small_pred(j: usize) -> String {
    format!("C_{j}")
}

fn add_corner_cases(sid: &mut Sid, k: usize, sig: &Signature, guard: &str, top: &str) -> Result<()> {
    sid.add_rule(rule(top, &[], Slr::Emp))?;
    for j in 1..=k {
        let c = small_pred(j);
        let ys = xs(j);
        let mut parts: Vec<Slr> = ys.iter().map(|x| Slr::Rel(guard.to_string(), vec![Term::var(x)])).collect();
        parts.push(Slr::Pred(c.clone(), vars(&ys)));
        sid.add_rule(rule(top, &[], Slr::exists_all(&ys, Slr::star_all(parts))))?;
        sid.add_rule(rule(&c, &ys, Slr::Emp))?;
        for (r, ar) in sig.sigma_relations() {
            for f in functions(ar, j) {
                let args = f.iter().map(|&i| Term::var(&ys[i])).collect();
                let body = Slr::star(Slr::Rel(r.to_string(), args), Slr::Pred(c.clone(), vars(&ys)));
                sid.add_rule(rule(&c, &ys, body))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slr::parse_sid;

    fn sig_e() -> Signature {
        Signature::new().with_relation("E", 2).unwrap().with_guard(GUARD).unwrap()
    }

    #[test]
    fn rule_count_for_one_binary_symbol() {
        let sid = gen_tw_sid(1, &sig_e(), false).unwrap();
        assert_eq!(sid.rules.len(), 8);
        let text = sid.to_string();
        assert!(text.contains("A(x1,x2) <= A(x1,x2) * A(x1,x2);"), "{text}");
        assert!(text.contains("A(x1,x2) <= E(x2,x1);"), "{text}");
        assert_eq!(parse_sid(&text).unwrap(), sid);
    }

    #[test]
    fn unary_symbol_adds_two_relation_rules() {
        let sig = sig_e().with_relation("P", 1).unwrap();
        let sid = gen_tw_sid(1, &sig, false).unwrap();
        assert_eq!(sid.rules.len(), 10);
        let p_rules = sid.rules.iter().filter(|r| r.body.to_string().starts_with("P(")).count();
        assert_eq!(p_rules, 2);
    }

    #[test]
    fn corner_cases_are_extra_rules() {
        let plain = gen_tw_sid(2, &sig_e(), false).unwrap();
        let full = gen_tw_sid(2, &sig_e(), true).unwrap();
        assert_eq!(&full.rules[..plain.rules.len()], &plain.rules[..]);
        // emp, then per j in 1..=2: top, C_j emp, j^2 relation rules.
        assert_eq!(full.rules.len() - plain.rules.len(), 1 + (1 + 1 + 1) + (1 + 1 + 4));
    }

    #[test]
    fn zero_width_rejected() {
        assert!(gen_tw_sid(0, &sig_e(), false).is_err());
    }
}
