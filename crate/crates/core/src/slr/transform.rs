//! SID transformations: normalization, relation-atom splitting, injective
//! models, width bounds and characteristic formulas.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::check::{top_rule, DerivNode, Derivation};
use super::{fresh_name, Flat, Rule, Sid, Slr, Term};
use crate::error::{Error, Result};
use crate::structure::{Elem, Structure, Tuple};

/// True iff no rule contains an equality between two distinct variables.
pub fn is_normalized(sid: &Sid) -> bool {
    sid.rules.iter().all(|r| {
        r.flatten().eqs.iter().all(|(a, b)| !(matches!((a, b), (Term::Var(x), Term::Var(y)) if x != y)))
    })
}

/// All set partitions of `0..n` as restricted growth strings.
fn partitions(n: usize) -> Vec<Vec<usize>> {
    fn go(i: usize, n: usize, cur: &mut Vec<usize>, max: usize, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..=max {
            cur.push(b);
            go(i + 1, n, cur, max.max(b + 1), out);
            cur.pop();
        }
    }
    let mut out = vec![];
    go(0, n, &mut vec![], 0, &mut out);
    out
}

/// Name of the predicate for `pred` with arguments identified according to
/// `blocks` (1-based positions, blocks ordered by least member).
fn partition_name(pred: &str, blocks: &[Vec<usize>]) -> String {
    let bs: Vec<String> = blocks.iter().map(|b| b.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("_")).collect();
    format!("{pred}__{}", bs.join("__"))
}

/// Groups positions of `ts` holding identical terms. Returns the blocks and
/// the distinct terms in order of first occurrence.
fn term_blocks(ts: &[Term]) -> (Vec<Vec<usize>>, Vec<Term>) {
    let mut distinct: Vec<Term> = vec![];
    let mut blocks: Vec<Vec<usize>> = vec![];
    for (i, t) in ts.iter().enumerate() {
        match distinct.iter().position(|d| d == t) {
            Some(k) => blocks[k].push(i + 1),
            None => {
                distinct.push(t.clone());
                blocks.push(vec![i + 1]);
            }
        }
    }
    (blocks, distinct)
}

/// Removes equalities between distinct variables. Every rule is replaced by
/// one rule per identification of its variables consistent with its
/// equalities, defining a predicate whose parameters are the distinct
/// parameter classes; the original predicate gets one rule per such
/// predicate forwarding its class representatives. Rules that would contain
/// `x != x` are dropped. Predicate atoms are redirected to the variant
/// matching the identification of their arguments.
///
/// Models are preserved for atoms whose variable arguments are existentially
/// closed; under a fixed store the forwarding rules may identify arguments.
pub fn normalize(sid: &Sid) -> Sid {
    let mut out = Sid::new();
    let mut seen: std::collections::HashSet<Rule> = Default::default();
    let mut push = |out: &mut Sid, r: Rule| {
        if seen.insert(r.clone()) {
            out.rules.push(r);
        }
    };
    for (p, a) in &sid.preds {
        out.preds.insert(p.clone(), *a);
    }
    for rule in &sid.rules {
        let flat = rule.flatten();
        let vars = flat.vars();
        let n = flat.params.len();
        'parts: for part in partitions(vars.len()) {
            for (a, b) in &flat.eqs {
                if let (Term::Var(x), Term::Var(y)) = (a, b) {
                    let i = vars.iter().position(|v| v == x).unwrap();
                    let j = vars.iter().position(|v| v == y).unwrap();
                    if part[i] != part[j] {
                        continue 'parts;
                    }
                }
            }
            let rep_of = |i: usize| part.iter().position(|&b| b == part[i]).unwrap();
            let map: BTreeMap<String, Term> = (0..vars.len()).map(|i| (vars[i].clone(), Term::Var(vars[rep_of(i)].clone()))).collect();
            let sub = |t: &Term| match t {
                Term::Var(x) => map[x].clone(),
                c => c.clone(),
            };
            let mut body = Flat::default();
            for (a, b) in &flat.eqs {
                let (a, b) = (sub(a), sub(b));
                if a != b || a.as_var().is_none() {
                    body.eqs.push((a, b));
                }
            }
            for (a, b) in &flat.neqs {
                let (a, b) = (sub(a), sub(b));
                if a == b && a.as_var().is_some() {
                    continue 'parts;
                }
                body.neqs.push((a, b));
            }
            body.rels = flat.rels.iter().map(|(r, ts)| (r.clone(), ts.iter().map(sub).collect())).collect();
            for (q, ts) in &flat.calls {
                let ts: Vec<Term> = ts.iter().map(sub).collect();
                let (blocks, distinct) = term_blocks(&ts);
                let name = partition_name(q, &blocks);
                out.preds.insert(name.clone(), distinct.len());
                body.calls.push((name, distinct));
            }
            let mut head_blocks: Vec<Vec<usize>> = vec![];
            let mut head_params: Vec<String> = vec![];
            for i in 0..n {
                let r = rep_of(i);
                match head_params.iter().position(|p| p == &vars[r]) {
                    Some(k) => head_blocks[k].push(i + 1),
                    None => {
                        head_params.push(vars[r].clone());
                        head_blocks.push(vec![i + 1]);
                    }
                }
            }
            body.params = head_params.clone();
            body.exists = (n..vars.len()).filter(|&i| rep_of(i) == i).map(|i| vars[i].clone()).collect();
            let name = partition_name(&rule.head, &head_blocks);
            out.preds.insert(name.clone(), head_params.len());
            let forward = Rule {
                head: rule.head.clone(),
                params: flat.params.clone(),
                body: Slr::Pred(name.clone(), head_params.iter().map(|x| Term::Var(x.clone())).collect()),
            };
            push(&mut out, forward);
            push(&mut out, Rule { head: name, params: head_params, body: body.to_slr() });
        }
    }
    out
}

/// Moves every relation atom beyond the first occurrence of its symbol in a
/// rule into a rule of its own for a fresh predicate.
pub fn split_relation_atoms(sid: &Sid) -> Sid {
    let mut taken: BTreeSet<String> = sid.preds.keys().cloned().collect();
    let mut out = Sid { rules: vec![], preds: sid.preds.clone() };
    for rule in &sid.rules {
        let flat = rule.flatten();
        let mut keep = Flat { params: flat.params.clone(), exists: flat.exists.clone(), eqs: flat.eqs.clone(), neqs: flat.neqs.clone(), ..Flat::default() };
        let mut extra = vec![];
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut new_calls = vec![];
        for (r, ts) in &flat.rels {
            if seen.insert(r) {
                keep.rels.push((r.clone(), ts.clone()));
                continue;
            }
            let mut params: Vec<String> = vec![];
            for t in ts {
                if let Term::Var(x) = t {
                    if !params.contains(x) {
                        params.push(x.clone());
                    }
                }
            }
            let name = fresh_name(&format!("{}_split", rule.head), &taken);
            taken.insert(name.clone());
            out.preds.insert(name.clone(), params.len());
            new_calls.push((name.clone(), params.iter().map(|x| Term::Var(x.clone())).collect::<Vec<_>>()));
            extra.push(Rule { head: name, params, body: Slr::Rel(r.clone(), ts.clone()) });
        }
        keep.calls = flat.calls.clone();
        keep.calls.extend(new_calls);
        let body = if extra.is_empty() { rule.body.clone() } else { keep.to_slr() };
        out.rules.push(Rule { head: rule.head.clone(), params: rule.params.clone(), body });
        out.rules.extend(extra);
    }
    out
}

/// Largest number of variables (parameters plus existentials) of a rule.
pub fn width_bound(sid: &Sid) -> usize {
    sid.rules.iter().map(|r| {
        let f = r.flatten();
        f.params.len() + f.exists.len()
    }).max().unwrap_or(0)
}

fn node_rule<'a>(sid: &'a Sid, d: &'a Derivation, n: &DerivNode) -> Result<Rule> {
    match n.rule {
        Some(i) => sid.rules.get(i).cloned().ok_or_else(|| Error::BadDerivation(format!("no rule {i}"))),
        None => Ok(top_rule(&d.formula)),
    }
}

/// Rebuilds a derivation with every existential witness replaced by a fresh
/// element (witnesses equated to a constant keep its value). Returns the
/// structure made of the re-valued tuples and the new derivation.
pub fn injectify(s: &Structure, sid: &Sid, d: &Derivation) -> Result<(Structure, Derivation)> {
    if let Some(r) = sid.rules.iter().find(|r| !is_normalized(&Sid { rules: vec![(*r).clone()], preds: BTreeMap::new() })) {
        return Err(Error::NotNormalized(r.head.clone()));
    }
    fn go(s: &Structure, sid: &Sid, d: &Derivation, n: &DerivNode, args: &[Elem], out: &mut Vec<(String, Tuple)>) -> Result<DerivNode> {
        let rule = node_rule(sid, d, n)?;
        let flat = rule.flatten();
        let pinned: HashMap<&str, Elem> = flat
            .eqs
            .iter()
            .filter_map(|(a, b)| match (a, b) {
                (Term::Var(x), Term::Const(c)) | (Term::Const(c), Term::Var(x)) => s.constant(c).map(|e| (x.as_str(), e)),
                _ => None,
            })
            .collect();
        let mut env: HashMap<&str, Elem> = flat.params.iter().map(String::as_str).zip(args.iter().copied()).collect();
        let mut exists = vec![];
        for (y, _) in &n.exists {
            let e = pinned.get(y.as_str()).copied().unwrap_or_else(Elem::fresh);
            env.insert(y.as_str(), e);
            exists.push((y.clone(), e));
        }
        let val = |t: &Term| -> Result<Elem> {
            match t {
                Term::Var(x) => env.get(x.as_str()).copied().ok_or_else(|| Error::BadDerivation(format!("unbound `{x}`"))),
                Term::Const(c) => s.constant(c).ok_or_else(|| Error::UnknownConstant(c.clone())),
            }
        };
        let consumed: Vec<(String, Tuple)> =
            flat.rels.iter().map(|(r, ts)| Ok((r.clone(), ts.iter().map(val).collect::<Result<Vec<_>>>()?))).collect::<Result<_>>()?;
        out.extend(consumed.iter().cloned());
        if flat.calls.len() != n.children.len() {
            return Err(Error::BadDerivation(format!("node for `{}` has the wrong number of children", n.pred)));
        }
        let mut children = vec![];
        for ((_, ts), c) in flat.calls.iter().zip(&n.children) {
            let a = ts.iter().map(val).collect::<Result<Vec<_>>>()?;
            children.push(go(s, sid, d, c, &a, out)?);
        }
        Ok(DerivNode { rule: n.rule, pred: n.pred.clone(), args: args.to_vec(), exists, consumed, children })
    }
    let mut tuples = vec![];
    let root = go(s, sid, d, &d.root, &d.root.args, &mut tuples)?;
    let mut b = Structure::builder(s.signature());
    for (r, t) in &tuples {
        b = b.tuple(r, t);
    }
    for (c, e) in s.constants() {
        b = b.constant(c, e);
    }
    let sbar = b.build()?;
    Ok((sbar, Derivation { formula: d.formula.clone(), root }))
}

/// The predicate-free formula obtained by unfolding the derivation: each
/// node contributes its rule body with parameters replaced by the caller's
/// arguments and the children's formulas in place of the predicate atoms.
pub fn characteristic_formula(sid: &Sid, d: &Derivation) -> Result<Slr> {
    let mut avoid: BTreeSet<String> = d.formula.all_vars();
    fn go(sid: &Sid, d: &Derivation, n: &DerivNode, args: &[Term], avoid: &mut BTreeSet<String>) -> Result<Slr> {
        let rule = node_rule(sid, d, n)?;
        let flat = rule.flatten();
        let mut map: HashMap<String, Term> = flat.params.iter().cloned().zip(args.iter().cloned()).collect();
        let mut exists = vec![];
        for y in &flat.exists {
            let z = fresh_name(y, avoid);
            avoid.insert(z.clone());
            map.insert(y.clone(), Term::Var(z.clone()));
            exists.push(z);
        }
        let sub = |t: &Term| match t {
            Term::Var(x) => map[x].clone(),
            c => c.clone(),
        };
        let mut parts = vec![];
        parts.extend(flat.eqs.iter().map(|(a, b)| Slr::Eq(sub(a), sub(b))));
        parts.extend(flat.neqs.iter().map(|(a, b)| Slr::Neq(sub(a), sub(b))));
        parts.extend(flat.rels.iter().map(|(r, ts)| Slr::Rel(r.clone(), ts.iter().map(sub).collect())));
        if flat.calls.len() != n.children.len() {
            return Err(Error::BadDerivation(format!("node for `{}` has the wrong number of children", n.pred)));
        }
        for ((_, ts), c) in flat.calls.iter().zip(&n.children) {
            let a: Vec<Term> = ts.iter().map(sub).collect();
            parts.push(go(sid, d, c, &a, avoid)?);
        }
        Ok(Slr::exists_all(&exists, Slr::star_all(parts)))
    }
    let args: Vec<Term> = match (&d.formula, d.root.rule) {
        (Slr::Pred(_, ts), Some(_)) => ts.clone(),
        (_, None) => top_rule(&d.formula).params.iter().map(|x| Term::Var(x.clone())).collect(),
        _ => return Err(Error::BadDerivation("root does not match the formula".into())),
    };
    go(sid, d, &d.root, &args, &mut avoid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slr::{check_slr, check_slr_injective, parse_sid, parse_slr, replay_injective};
    use crate::structure::{Signature, Store};

    fn heap(edges: &[(u64, u64)]) -> Structure {
        let sig = Signature::new().with_relation("H", 2).unwrap();
        let mut b = Structure::builder(&sig);
        for &(x, y) in edges {
            b = b.tuple("H", &[Elem(x), Elem(y)]);
        }
        b.build().unwrap()
    }

    #[test]
    fn normalize_equality_rule() {
        let sid = parse_sid("A(x1,x2) <= x1 = x2 * R(x1);").unwrap();
        let n = normalize(&sid);
        assert!(is_normalized(&n));
        let text = n.to_string();
        assert!(text.contains("A__1_2(x1) <= R(x1);"), "{text}");
        assert!(text.contains("A(x1,x2) <= A__1_2(x1);"), "{text}");
        assert!(!text.contains("A__1__2(x1,x2) <="), "{text}");
    }

    #[test]
    fn normalize_drops_self_disequality() {
        let sid = parse_sid("A(x,y) <= x != y;").unwrap();
        let n = normalize(&sid);
        assert!(!n.to_string().contains("A__1_2"));
        assert_eq!(n.rules.len(), 2);
    }

    #[test]
    fn split_moves_repeated_atoms() {
        let sid = parse_sid("A() <= ex x, y . R(x) * R(y);").unwrap();
        let s = split_relation_atoms(&sid);
        assert_eq!(s.rules.len(), 2);
        assert_eq!(s.rules[1].body, Slr::Rel("R".into(), vec![Term::var("y")]));
        assert_eq!(split_relation_atoms(&s).rules.len(), 2);
    }

    #[test]
    fn widths() {
        let fold = parse_sid("fold_ls(x1) <= emp;\nfold_ls(x1) <= ex y . H(x1,y) * fold_ls(y);").unwrap();
        assert_eq!(width_bound(&fold), 2);
        assert_eq!(width_bound(&Sid::new()), 0);
    }

    #[test]
    fn injectify_unfolds_lasso() {
        let sid = parse_sid("fold_ls(x1) <= emp;\nfold_ls(x1) <= ex y . H(x1,y) * fold_ls(y);").unwrap();
        let lasso = heap(&[(1, 2), (2, 3), (3, 2)]);
        let nu = Store::new().bind("x", Elem(1));
        let phi = parse_slr("fold_ls(x)", &sid, lasso.signature()).unwrap();
        let d = check_slr(&lasso, &nu, &phi, &sid).unwrap().unwrap();
        let (sbar, dbar) = injectify(&lasso, &sid, &d).unwrap();
        assert_eq!(sbar.tuple_count(), 3);
        assert_eq!(sbar.dom().len(), 4);
        assert!(replay_injective(&sbar, &nu, &sid, &dbar).unwrap());
        assert!(check_slr_injective(&sbar, &nu, &phi, &sid).unwrap().is_some());
    }

    #[test]
    fn injectify_requires_normalized() {
        let sid = parse_sid("ls(x,y) <= x = y;\nls(x,y) <= ex z . H(x,z) * ls(z,y);").unwrap();
        let s = heap(&[]);
        let nu = Store::new().bind("x", Elem(1)).bind("y", Elem(1));
        let phi = parse_slr("ls(x,y)", &sid, s.signature()).unwrap();
        let d = check_slr(&s, &nu, &phi, &sid).unwrap().unwrap();
        assert!(matches!(injectify(&s, &sid, &d), Err(Error::NotNormalized(_))));
    }

    #[test]
    fn characteristic_formula_of_list() {
        let sid = parse_sid("ls(x,y) <= x = y;\nls(x,y) <= ex z . H(x,z) * ls(z,y);").unwrap();
        let s = heap(&[(1, 2), (2, 3)]);
        let nu = Store::new().bind("x", Elem(1)).bind("y", Elem(3));
        let phi = parse_slr("ls(x,y)", &sid, s.signature()).unwrap();
        let d = check_slr(&s, &nu, &phi, &sid).unwrap().unwrap();
        let cf = characteristic_formula(&sid, &d).unwrap();
        assert!(!cf.has_predicates());
        assert_eq!(cf.to_string(), "ex z_1 . H(x,z_1) * (ex z_2 . H(z_1,z_2) * z_2 = y)");
        assert!(check_slr(&s, &nu, &cf, &Sid::new()).unwrap().is_some());
        let leaf = check_slr(&Structure::empty(s.signature()).unwrap(), &Store::new().bind("x", Elem(1)).bind("y", Elem(1)), &phi, &sid).unwrap().unwrap();
        assert_eq!(characteristic_formula(&sid, &leaf).unwrap().to_string(), "x = y");
    }
}
