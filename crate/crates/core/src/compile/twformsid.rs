//! The treewidth SID annotated with rank-r types: its top predicate defines
//! the guarded models of an MSO sentence of treewidth at most k.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::slr::{Rule, Sid, Slr, Term};
use crate::so::So;
use crate::structure::{port_name, Elem, Signature, Structure};
use crate::types::{RankType, TypeConfig, TypeRegistry};

use super::twsid::{functions, guard_of, small_pred, tw_top, xs, TwShapes, TW_PRED};

/// Default cap on the number of reachable types.
pub const TYPE_CUTOFF: usize = 5000;

#[derive(Clone, Debug)]
pub struct FormSidOptions {
    pub corner_cases: bool,
    pub type_cutoff: usize,
}

impl Default for FormSidOptions {
    fn default() -> Self {
        FormSidOptions { corner_cases: false, type_cutoff: TYPE_CUTOFF }
    }
}

/// The annotated SID together with the type behind each annotation.
#[derive(Clone, Debug)]
pub struct TwFormSid {
    pub sid: Sid,
    pub top: String,
    /// Annotated predicate name to its type.
    pub annotations: Vec<(String, RankType)>,
    pub registry: TypeRegistry,
}

/// Name of the top predicate of the annotated SID.
pub fn tw_form_top(k: usize) -> String {
    format!("{}_phi", tw_top(k))
}

fn annotated(base: &str, i: usize) -> String {
    format!("{base}_t{i}")
}

/// Drops type annotations: `A_t3` becomes `A`, `C_1_t0` becomes `C_1`, and
/// the top predicate becomes the treewidth SID's top.
pub fn strip_annotations(sid: &Sid) -> Result<Sid> {
    fn strip(p: &str) -> String {
        if let Some(base) = p.strip_suffix("_phi") {
            return base.to_string();
        }
        match p.rfind("_t") {
            Some(i) if p.len() > i + 2 && p[i + 2..].bytes().all(|b| b.is_ascii_digit()) => p[..i].to_string(),
            _ => p.to_string(),
        }
    }
    fn body(f: &Slr) -> Slr {
        match f {
            Slr::Pred(p, ts) => Slr::Pred(strip(p), ts.clone()),
            Slr::Star(a, b) => Slr::star(body(a), body(b)),
            Slr::Exists(x, a) => Slr::exists(x, body(a)),
            other => other.clone(),
        }
    }
    let mut out = Sid::new();
    let mut seen = HashSet::new();
    for r in &sid.rules {
        let rule = Rule { head: strip(&r.head), params: r.params.clone(), body: body(&r.body) };
        if seen.insert(rule.clone()) {
            out.add_rule(rule)?;
        }
    }
    Ok(out)
}

/// Generator state for one family of annotated predicates sharing a port
/// count.
struct Family<'a> {
    reg: &'a mut TypeRegistry,
    rank: usize,
    base: String,
    types: Vec<RankType>,
    index: HashMap<RankType, usize>,
    cutoff: usize,
}

impl Family<'_> {
    fn name(&self, t: RankType) -> String {
        annotated(&self.base, self.index[&t])
    }

    fn add(&mut self, t: RankType) -> Result<bool> {
        if self.index.contains_key(&t) {
            return Ok(false);
        }
        if self.types.len() >= self.cutoff {
            return Err(Error::TypeBlowup(self.cutoff));
        }
        self.index.insert(t, self.types.len());
        self.types.push(t);
        Ok(true)
    }
}

/// Relation symbols occurring in `phi`.
fn relations_of(phi: &So, out: &mut BTreeSet<String>) {
    match phi {
        So::Rel(r, _) => {
            out.insert(r.clone());
        }
        So::Not(a) | So::ExistsFo(_, a) | So::ForallFo(_, a) | So::ExistsSo(_, _, a) | So::ForallSo(_, _, a) => {
            relations_of(a, out)
        }
        So::And(a, b) | So::Or(a, b) | So::Implies(a, b) | So::Iff(a, b) => {
            relations_of(a, out);
            relations_of(b, out);
        }
        So::True | So::False | So::Eq(..) | So::Var(..) => {}
    }
}

/// The signature the annotation types are computed over: the relations and
/// constants of `sig` that `phi` mentions. Truth of `phi` depends only on
/// this reduct, and taking reducts commutes with glue and forget.
fn type_signature(sig: &Signature, phi: &So) -> Result<Signature> {
    let mut used = BTreeSet::new();
    relations_of(phi, &mut used);
    let mut out = Signature::new();
    for (r, a) in sig.relations() {
        if used.contains(r) {
            out = out.with_relation(r, a)?;
        }
    }
    for c in sig.constants() {
        out = out.with_constant(c)?;
    }
    Ok(out)
}

/// Encoded structure with ports `p1..pn` on fresh elements in the guard,
/// plus the given relation tuples over the ports. Tuples of relations
/// outside `tsig` are dropped.
fn port_structure(tsig: &Signature, guard: &str, n: usize, tuples: &[(&str, Vec<usize>)]) -> Result<Structure> {
    let mut esig = tsig.clone();
    for i in 1..=n {
        esig = esig.with_constant(&port_name(i))?;
    }
    let ports: Vec<Elem> = (0..n).map(|_| Elem::fresh()).collect();
    let mut b = Structure::builder(&esig);
    for (i, &e) in ports.iter().enumerate() {
        b = b.constant(&port_name(i + 1), e);
        if tsig.has_relation(guard) {
            b = b.tuple(guard, &[e]);
        }
    }
    for (r, f) in tuples {
        if tsig.has_relation(r) {
            b = b.tuple(r, &f.iter().map(|&i| ports[i]).collect::<Vec<_>>());
        }
    }
    b.build()
}

/// Limits used for the representatives of the fixpoint: rank 1 types are
/// cheap for any support, rank 2 types grow as 2^support.
fn fixpoint_config(rank: usize) -> TypeConfig {
    TypeConfig { max_rank: 2, max_support: if rank <= 1 { 40 } else { 12 } }
}

/// [`gen_tw_form_sid_full`] returning only the SID.
pub fn gen_tw_form_sid(k: usize, sig: &Signature, phi: &So, corner_cases: bool) -> Result<Sid> {
    let opts = FormSidOptions { corner_cases, ..FormSidOptions::default() };
    Ok(gen_tw_form_sid_full(k, sig, phi, &opts)?.sid)
}

/// Builds the annotated SID by a fixpoint over the reachable types of
/// encoded structures: relation rules seed it, composition and existential
/// rules close it, and a top rule is emitted for each reachable type that
/// contains `phi`.
pub fn gen_tw_form_sid_full(k: usize, sig: &Signature, phi: &So, opts: &FormSidOptions) -> Result<TwFormSid> {
    if k == 0 {
        return Err(Error::Invalid("treewidth bound must be at least 1".into()));
    }
    let rank = phi.quantifier_rank();
    let cfg = fixpoint_config(rank);
    if rank > cfg.max_rank {
        return Err(Error::RankTooLarge { rank, bound: cfg.max_rank });
    }
    if !phi.is_monadic() {
        return Err(Error::Invalid("formula is not monadic".into()));
    }
    if let Some(x) = phi.free_vars().into_iter().next() {
        return Err(Error::UnboundVariable(x));
    }
    phi.validate(&sig.clone().with_guard(&guard_of(sig))?)?;
    let guard = guard_of(sig);
    let sh = TwShapes::new(k, &guard);
    let top = tw_form_top(k);
    let mut reg = TypeRegistry::with_config(cfg);
    let mut sid = Sid::new();
    let rels: Vec<(String, usize)> = sig.sigma_relations().map(|(r, a)| (r.to_string(), a)).collect();
    let tsig = type_signature(sig, phi)?;

    // Relation rules seed the fixpoint.
    let mut seeds = vec![];
    for (r, a) in &rels {
        for f in functions(*a, k + 1) {
            let s = port_structure(&tsig, &guard, k + 1, &[(r, f.clone())])?;
            seeds.push((reg.register(&s, rank)?, r.clone(), f));
        }
    }
    // The one-element structure naming a fresh guard element by port i.
    let rhos: Vec<RankType> = (1..=k + 1)
        .map(|i| {
            let a = Elem::fresh();
            let mut rs = Signature::new().with_constant(&port_name(i))?;
            let with_guard = tsig.has_relation(&guard);
            if with_guard {
                rs = rs.with_relation(&guard, 1)?;
            }
            let mut b = Structure::builder(&rs).constant(&port_name(i), a);
            if with_guard {
                b = b.tuple(&guard, &[a]);
            }
            reg.register(&b.build()?, rank)
        })
        .collect::<Result<_>>()?;
    let mut fam = Family {
        reg: &mut reg,
        rank,
        base: TW_PRED.to_string(),
        types: vec![],
        index: HashMap::new(),
        cutoff: opts.type_cutoff,
    };
    for (t, _, _) in &seeds {
        fam.add(*t)?;
    }
    let mut deferred: Vec<(usize, Rule)> = vec![];
    let mut comp: Vec<(RankType, RankType, RankType)> = vec![];
    let mut exists: Vec<(RankType, RankType, usize)> = vec![];
    let mut next = 0;
    while next < fam.types.len() {
        let t = fam.types[next];
        for i in 0..=k {
            let forgotten = fam.reg.abs_forget(t, &port_name(i + 1))?;
            let u = fam.reg.abs_glue(forgotten, rhos[i])?;
            fam.add(u)?;
            exists.push((u, t, i));
        }
        for j in 0..=next {
            let o = fam.types[j];
            let u = fam.reg.abs_glue(o, t)?;
            fam.add(u)?;
            comp.push((u, o, t));
        }
        next += 1;
    }
    let _ = fam.rank;
    for (u, a, b) in comp {
        deferred.push((0, sh.comp(&fam.name(u), &fam.name(a), &fam.name(b))));
    }
    for (u, t, i) in exists {
        deferred.push((1, sh.exists(&fam.name(u), &fam.name(t), i)));
    }
    for (t, r, f) in &seeds {
        deferred.push((2, sh.rel(&fam.name(*t), r, f)));
    }
    let mut tops = vec![];
    for &t in &fam.types {
        if fam.reg.contains_sentence(t, phi)? {
            tops.push(sh.top(&top, &fam.name(t)));
        }
    }
    let mut annotations: Vec<(String, RankType)> = fam.types.iter().map(|&t| (fam.name(t), t)).collect();
    deferred.sort_by_key(|(kind, _)| *kind);
    for (_, r) in deferred {
        sid.add_rule(r)?;
    }
    for r in tops {
        sid.add_rule(r)?;
    }
    if opts.corner_cases {
        corner_cases(&mut sid, &mut reg, &mut annotations, k, sig, &tsig, &guard, &top, phi, rank, opts.type_cutoff)?;
    }
    // Keep the top predicate declared even when no type contains `phi`.
    sid.declare(&top, 0)?;
    sid.check_arities()?;
    Ok(TwFormSid { sid, top, annotations, registry: reg })
}

#[allow(clippy::too_many_arguments)]
fn corner_cases(
    sid: &mut Sid,
    reg: &mut TypeRegistry,
    annotations: &mut Vec<(String, RankType)>,
    k: usize,
    sig: &Signature,
    tsig: &Signature,
    guard: &str,
    top: &str,
    phi: &So,
    rank: usize,
    cutoff: usize,
) -> Result<()> {
    let empty = port_structure(tsig, guard, 0, &[])?;
    let te = reg.register(&empty, rank)?;
    if reg.contains_sentence(te, phi)? {
        sid.add_rule(Rule { head: top.to_string(), params: vec![], body: Slr::Emp })?;
    }
    let rels: Vec<(String, usize)> = sig.sigma_relations().map(|(r, a)| (r.to_string(), a)).collect();
    for j in 1..=k {
        let ys = xs(j);
        let mut singles = vec![];
        for (r, a) in &rels {
            for f in functions(*a, j) {
                let s = port_structure(tsig, guard, j, &[(r, f.clone())])?;
                singles.push((reg.register(&s, rank)?, r.clone(), f));
            }
        }
        let base = reg.register(&port_structure(tsig, guard, j, &[])?, rank)?;
        let mut fam = Family {
            reg: &mut *reg,
            rank,
            base: small_pred(j),
            types: vec![],
            index: HashMap::new(),
            cutoff,
        };
        fam.add(base)?;
        let mut steps = vec![];
        let mut next = 0;
        while next < fam.types.len() {
            let t = fam.types[next];
            for (s, r, f) in &singles {
                let u = fam.reg.abs_glue(*s, t)?;
                fam.add(u)?;
                steps.push((u, r.clone(), f.clone(), t));
            }
            next += 1;
        }
        let c = |t: RankType| fam.name(t);
        let vars = |names: &[String]| names.iter().map(|x| Term::var(x)).collect::<Vec<_>>();
        sid.add_rule(Rule { head: c(base), params: ys.clone(), body: Slr::Emp })?;
        for (u, r, f, t) in steps {
            let args = f.iter().map(|&i| Term::var(&ys[i])).collect();
            let body = Slr::star(Slr::Rel(r, args), Slr::Pred(c(t), vars(&ys)));
            sid.add_rule(Rule { head: c(u), params: ys.clone(), body })?;
        }
        for &t in &fam.types {
            if fam.reg.contains_sentence(t, phi)? {
                let mut parts: Vec<Slr> = ys.iter().map(|x| Slr::Rel(guard.to_string(), vec![Term::var(x)])).collect();
                parts.push(Slr::Pred(c(t), vars(&ys)));
                sid.add_rule(Rule { head: top.to_string(), params: vec![], body: Slr::exists_all(&ys, Slr::star_all(parts)) })?;
            }
        }
        annotations.extend(fam.types.iter().map(|&t| (c(t), t)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compile::{gen_tw_sid, tw_top};
    use crate::slr::parse_sid;
    use crate::so::parse_so;
    use crate::structure::GUARD;

    fn sig_e() -> Signature {
        Signature::new().with_relation("E", 2).unwrap().with_guard(GUARD).unwrap()
    }

    fn rule_set(sid: &Sid) -> HashSet<Rule> {
        sid.rules.iter().cloned().collect()
    }

    #[test]
    fn stripping_yields_treewidth_sid() {
        let phi = parse_so("ex x . D(x)", &sig_e()).unwrap();
        for corner in [false, true] {
            let f = gen_tw_form_sid(1, &sig_e(), &phi, corner).unwrap();
            let stripped = strip_annotations(&f).unwrap();
            // The empty structure violates the sentence, so its top rule is absent.
            let mut want = rule_set(&gen_tw_sid(1, &sig_e(), corner).unwrap());
            want.remove(&Rule { head: tw_top(1), params: vec![], body: Slr::Emp });
            assert_eq!(rule_set(&stripped), want);
        }
    }

    #[test]
    fn contradiction_has_no_top_rule() {
        let phi = parse_so("ex x . D(x) & ~D(x)", &sig_e()).unwrap();
        let f = gen_tw_form_sid_full(1, &sig_e(), &phi, &FormSidOptions::default()).unwrap();
        assert!(f.sid.rules.iter().all(|r| r.head != f.top));
        assert_eq!(f.sid.arity(&f.top), Some(0));
    }

    #[test]
    fn output_reparses() {
        let phi = parse_so("(ex2 X/1 . all x . X(x) -> D(x)) & ~(ex x . D(x))", &sig_e()).unwrap();
        let sid = gen_tw_form_sid(1, &sig_e(), &phi, true).unwrap();
        assert_eq!(parse_sid(&sid.to_string()).unwrap(), sid);
    }

    #[test]
    fn limits() {
        let phi = parse_so("ex x . D(x)", &sig_e()).unwrap();
        let opts = FormSidOptions { corner_cases: false, type_cutoff: 1 };
        assert!(matches!(gen_tw_form_sid_full(1, &sig_e(), &phi, &opts), Err(Error::TypeBlowup(1))));
        let deep = parse_so("ex x . ex y . ex z . E(x,y) & E(y,z)", &sig_e()).unwrap();
        assert!(matches!(gen_tw_form_sid(1, &sig_e(), &deep, false), Err(Error::RankTooLarge { .. })));
    }
}
