//! Bottom-up satisfaction checking for SLR over an SID.
//!
//! Facts are triples (predicate, argument pattern, consumed tuple set). An
//! argument pattern maps each argument to a support element or to a fresh
//! placeholder; placeholders are numbered by first occurrence, so only their
//! distinctness pattern is recorded. Under injective semantics a fact also
//! records the support elements used anywhere below it.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Flat, Rule, Sid, Slr, Term};
use crate::error::{Error, Result};
use crate::structure::{Elem, Signature, Store, Structure, Tuple};

/// Values at or above this are fresh placeholders.
const FRESH: u32 = 1 << 20;

fn is_fresh(v: u32) -> bool {
    v >= FRESH
}

/// One node of an unfolding tree. `rule` is `None` for the node standing for
/// the top-level formula itself.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivNode {
    pub rule: Option<usize>,
    pub pred: String,
    pub args: Vec<Elem>,
    pub exists: Vec<(String, Elem)>,
    pub consumed: Vec<(String, Tuple)>,
    pub children: Vec<DerivNode>,
}

impl DerivNode {
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(DerivNode::size).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(DerivNode::depth).max().unwrap_or(0)
    }

    pub fn all_consumed(&self) -> Vec<(String, Tuple)> {
        let mut out = self.consumed.clone();
        for c in &self.children {
            out.extend(c.all_consumed());
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Derivation {
    pub formula: Slr,
    pub root: DerivNode,
}

impl Derivation {
    pub fn to_json(&self) -> serde_json::Value {
        fn node(n: &DerivNode) -> serde_json::Value {
            serde_json::json!({
                "rule": n.rule,
                "pred": n.pred,
                "args": n.args.iter().map(|e| e.0).collect::<Vec<_>>(),
                "bindings": n.exists.iter().map(|(x, e)| serde_json::json!([x, e.0])).collect::<Vec<_>>(),
                "consumed": n.consumed.iter().map(|(r, t)| serde_json::json!({"rel": r, "tuple": t.iter().map(|e| e.0).collect::<Vec<_>>()})).collect::<Vec<_>>(),
                "children": n.children.iter().map(node).collect::<Vec<_>>(),
            })
        }
        serde_json::json!({ "formula": self.formula.to_string(), "root": node(&self.root) })
    }

    /// Reads the format of [`Derivation::to_json`]; the formula is parsed
    /// against `sid` and `sig`.
    pub fn from_json(v: &serde_json::Value, sid: &Sid, sig: &Signature) -> Result<Derivation> {
        let formula = v["formula"].as_str().ok_or_else(|| bad_json("missing `formula`"))?;
        let formula = super::parse_slr(formula, sid, sig)?;
        let root = node_from_json(&v["root"])?;
        for e in root.all_consumed().iter().flat_map(|(_, t)| t).chain(&root.args) {
            e.reserve();
        }
        Ok(Derivation { formula, root })
    }
}

fn bad_json(m: &str) -> Error {
    Error::Invalid(format!("derivation JSON: {m}"))
}

fn elem_from_json(x: &serde_json::Value) -> Result<Elem> {
    x.as_u64().map(Elem).ok_or_else(|| bad_json("element ids are integers"))
}

fn elems_from_json(x: &serde_json::Value) -> Result<Vec<Elem>> {
    x.as_array().ok_or_else(|| bad_json("expected an array of element ids"))?.iter().map(elem_from_json).collect()
}

fn list_json<'a>(x: &'a serde_json::Value, what: &str) -> Result<&'a [serde_json::Value]> {
    match x {
        serde_json::Value::Null => Ok(&[]),
        serde_json::Value::Array(a) => Ok(a),
        _ => Err(bad_json(&format!("`{what}` must be an array"))),
    }
}

fn node_from_json(n: &serde_json::Value) -> Result<DerivNode> {
    let rule = match &n["rule"] {
        serde_json::Value::Null => None,
        r => Some(r.as_u64().ok_or_else(|| bad_json("rule is an index or null"))? as usize),
    };
    let pred = n["pred"].as_str().ok_or_else(|| bad_json("node needs `pred`"))?.to_string();
    let mut exists = vec![];
    for b in list_json(&n["bindings"], "bindings")? {
        let x = b[0].as_str().ok_or_else(|| bad_json("binding is [name, element]"))?;
        exists.push((x.to_string(), elem_from_json(&b[1])?));
    }
    let mut consumed = vec![];
    for c in list_json(&n["consumed"], "consumed")? {
        let r = c["rel"].as_str().ok_or_else(|| bad_json("consumed tuple needs `rel`"))?;
        consumed.push((r.to_string(), elems_from_json(&c["tuple"])?));
    }
    let children = list_json(&n["children"], "children")?.iter().map(node_from_json).collect::<Result<_>>()?;
    Ok(DerivNode { rule, pred, args: elems_from_json(&n["args"])?, exists, consumed, children })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tm {
    V(usize),
    C(u32),
}

/// A rule (or the top-level formula) with symbols resolved.
struct CRule {
    rule: Option<usize>,
    head: u32,
    flat: Flat,
    nparams: usize,
    nvars: usize,
    eqs: Vec<(Tm, Tm)>,
    neqs: Vec<(Tm, Tm)>,
    rels: Vec<(String, Vec<Tm>)>,
    calls: Vec<(u32, Vec<Tm>)>,
    /// Variables of the local (predicate-free) part.
    local: Vec<usize>,
    occurring: Vec<bool>,
    /// Fixed values for parameters (only for the top-level formula).
    fixed: Option<Vec<u32>>,
}

struct Inst {
    rule: usize,
    vals: Vec<u32>,
    mask: u64,
    head: usize,
    /// Instance fresh value for each head placeholder.
    head_fresh: Vec<u32>,
    calls: Vec<usize>,
    // Injective bookkeeping.
    u0: (u64, u64),
    call_univ: Vec<(u64, u64)>,
    allowed0: Vec<(u64, u64)>,
    allowed: Vec<Vec<(u64, u64)>>,
}

struct Just {
    inst: usize,
    kids: Vec<(usize, usize)>,
}

#[derive(Default)]
struct Facts {
    entries: Vec<(u64, u64)>,
    seen: HashSet<(u64, u64)>,
    just: Vec<Just>,
}

struct Engine<'a> {
    s: &'a Structure,
    support: Vec<Elem>,
    sidx: HashMap<Elem, u32>,
    tidx: HashMap<(String, Vec<u32>), u32>,
    full: u64,
    const_mask: u64,
    consts: HashMap<String, u32>,
    injective: bool,
    pred_ids: HashMap<String, u32>,
    pred_names: Vec<String>,
    rules: Vec<CRule>,
    keys: Vec<(u32, Vec<u32>)>,
    key_ids: HashMap<(u32, Vec<u32>), usize>,
    facts: Vec<Facts>,
    insts: Vec<Inst>,
}

fn canon(args: &[u32]) -> (Vec<u32>, Vec<u32>) {
    let mut order: Vec<u32> = vec![];
    let out = args
        .iter()
        .map(|&v| {
            if is_fresh(v) {
                let k = order.iter().position(|&f| f == v).unwrap_or_else(|| {
                    order.push(v);
                    order.len() - 1
                });
                FRESH + k as u32
            } else {
                v
            }
        })
        .collect();
    (out, order)
}

impl<'a> Engine<'a> {
    fn new(s: &'a Structure, sid: &Sid, injective: bool) -> Result<Engine<'a>> {
        let support: Vec<Elem> = s.dom().into_iter().collect();
        if support.len() >= 64 {
            return Err(Error::SupportTooLarge { size: support.len(), bound: 63 });
        }
        let sidx: HashMap<Elem, u32> = support.iter().enumerate().map(|(i, e)| (*e, i as u32)).collect();
        let tuples = s.all_tuples();
        if tuples.len() > 64 {
            return Err(Error::TooManyTuples(tuples.len()));
        }
        let tidx = tuples
            .iter()
            .enumerate()
            .map(|(i, (r, t))| ((r.clone(), t.iter().map(|e| sidx[e]).collect()), i as u32))
            .collect();
        let full = if tuples.len() == 64 { u64::MAX } else { (1u64 << tuples.len()) - 1 };
        let consts: HashMap<String, u32> = s.constants().map(|(c, e)| (c.to_string(), sidx[&e])).collect();
        let const_mask = consts.values().fold(0u64, |m, &v| m | (1 << v));
        let mut eng = Engine {
            s,
            support,
            sidx,
            tidx,
            full,
            const_mask,
            consts,
            injective,
            pred_ids: HashMap::new(),
            pred_names: vec![],
            rules: vec![],
            keys: vec![],
            key_ids: HashMap::new(),
            facts: vec![],
            insts: vec![],
        };
        for p in sid.preds.keys() {
            eng.pred_id(p);
        }
        for (i, r) in sid.rules.iter().enumerate() {
            let c = eng.compile(Some(i), r, sid, None)?;
            eng.rules.push(c);
        }
        Ok(eng)
    }

    fn pred_id(&mut self, p: &str) -> u32 {
        if let Some(&i) = self.pred_ids.get(p) {
            return i;
        }
        let i = self.pred_names.len() as u32;
        self.pred_ids.insert(p.to_string(), i);
        self.pred_names.push(p.to_string());
        i
    }

    fn key(&mut self, pred: u32, args: Vec<u32>) -> usize {
        let k = (pred, args);
        if let Some(&i) = self.key_ids.get(&k) {
            return i;
        }
        let i = self.keys.len();
        self.keys.push(k.clone());
        self.key_ids.insert(k, i);
        self.facts.push(Facts::default());
        i
    }

    fn compile(&mut self, idx: Option<usize>, rule: &Rule, sid: &Sid, fixed: Option<Vec<u32>>) -> Result<CRule> {
        let flat = rule.flatten();
        let vars = flat.vars();
        let pos: HashMap<&str, usize> = vars.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
        let sig = self.s.signature();
        let consts = self.consts.clone();
        let tm = |t: &Term| -> Result<Tm> {
            match t {
                Term::Var(x) => pos.get(x.as_str()).map(|&i| Tm::V(i)).ok_or_else(|| Error::UnboundVariable(x.clone())),
                Term::Const(c) => {
                    consts.get(c).map(|&v| Tm::C(v)).ok_or_else(|| Error::UnknownConstant(c.clone()))
                }
            }
        };
        let pair = |(a, b): &(Term, Term)| -> Result<(Tm, Tm)> { Ok((tm(a)?, tm(b)?)) };
        let eqs = flat.eqs.iter().map(pair).collect::<Result<Vec<_>>>()?;
        let neqs = flat.neqs.iter().map(pair).collect::<Result<Vec<_>>>()?;
        let mut rels = vec![];
        for (r, ts) in &flat.rels {
            match sig.arity(r) {
                None => return Err(Error::UnknownRelation(r.clone())),
                Some(a) if a != ts.len() => {
                    return Err(Error::ArityMismatch { symbol: r.clone(), expected: a, found: ts.len() })
                }
                _ => {}
            }
            rels.push((r.clone(), ts.iter().map(tm).collect::<Result<Vec<_>>>()?));
        }
        let mut calls = vec![];
        for (p, ts) in &flat.calls {
            match sid.arity(p) {
                None => return Err(Error::UnknownPredicate(p.clone())),
                Some(a) if a != ts.len() => {
                    return Err(Error::ArityMismatch { symbol: p.clone(), expected: a, found: ts.len() })
                }
                _ => {}
            }
            let ts = ts.iter().map(tm).collect::<Result<Vec<_>>>()?;
            calls.push((self.pred_id(p), ts));
        }
        let mut local = BTreeSet::new();
        for (a, b) in eqs.iter().chain(neqs.iter()) {
            for t in [a, b] {
                if let Tm::V(i) = t {
                    local.insert(*i);
                }
            }
        }
        for (_, ts) in &rels {
            for t in ts {
                if let Tm::V(i) = t {
                    local.insert(*i);
                }
            }
        }
        let occ = flat.occurring();
        let occurring = vars.iter().map(|v| occ.contains(v)).collect();
        let head = self.pred_id(&rule.head);
        Ok(CRule {
            rule: idx,
            head,
            nparams: flat.params.len(),
            nvars: vars.len(),
            flat,
            eqs,
            neqs,
            rels,
            calls,
            local: local.into_iter().collect(),
            occurring,
            fixed,
        })
    }

    fn val(t: Tm, vals: &[u32]) -> Option<u32> {
        match t {
            Tm::C(c) => Some(c),
            Tm::V(i) => vals.get(i).copied(),
        }
    }

    /// Enumerates the instances of rule `ri` in lexicographic order.
    fn instantiate(&mut self, ri: usize) {
        let n = self.rules[ri].nvars;
        let r = &self.rules[ri];
        // Atoms are checked as soon as their last variable is assigned.
        let last = |ts: &[Tm]| ts.iter().filter_map(|t| if let Tm::V(i) = t { Some(*i + 1) } else { None }).max().unwrap_or(0);
        let mut checks: Vec<Vec<usize>> = vec![vec![]; n + 1];
        let natoms = r.eqs.len() + r.neqs.len() + r.rels.len();
        for (k, (a, b)) in r.eqs.iter().chain(r.neqs.iter()).enumerate() {
            checks[last(&[*a, *b])].push(k);
        }
        for (k, (_, ts)) in r.rels.iter().enumerate() {
            checks[last(ts)].push(r.eqs.len() + r.neqs.len() + k);
        }
        let mut in_rel = vec![false; n];
        for (_, ts) in &r.rels {
            for t in ts {
                if let Tm::V(i) = t {
                    in_rel[*i] = true;
                }
            }
        }
        debug_assert_eq!(checks.iter().map(Vec::len).sum::<usize>(), natoms);
        let mut found: Vec<Vec<u32>> = vec![];
        let mut vals: Vec<u32> = Vec::with_capacity(n);
        self.dfs_assign(ri, &checks, &in_rel, &mut vals, 0, &mut found);
        for vals in found {
            self.add_inst(ri, vals);
        }
    }

    fn atom_ok(&self, ri: usize, k: usize, vals: &[u32]) -> bool {
        let r = &self.rules[ri];
        let (ne, nn) = (r.eqs.len(), r.neqs.len());
        if k < ne {
            let (a, b) = r.eqs[k];
            Self::val(a, vals) == Self::val(b, vals)
        } else if k < ne + nn {
            let (a, b) = r.neqs[k - ne];
            Self::val(a, vals) != Self::val(b, vals)
        } else {
            let (name, ts) = &r.rels[k - ne - nn];
            let t: Vec<u32> = ts.iter().map(|t| Self::val(*t, vals).unwrap()).collect();
            !t.iter().any(|v| is_fresh(*v)) && self.tidx.contains_key(&(name.clone(), t))
        }
    }

    fn dfs_assign(
        &self,
        ri: usize,
        checks: &[Vec<usize>],
        in_rel: &[bool],
        vals: &mut Vec<u32>,
        next_fresh: u32,
        out: &mut Vec<Vec<u32>>,
    ) {
        let r = &self.rules[ri];
        let i = vals.len();
        if i == r.nvars {
            out.push(vals.clone());
            return;
        }
        let mut cands: Vec<u32> = vec![];
        if let Some(fixed) = r.fixed.as_ref().filter(|_| i < r.nparams) {
            cands.push(fixed[i]);
        } else if !r.occurring[i] && i >= r.nparams {
            // An unused existential: any one value will do.
            cands.push(FRESH + next_fresh);
        } else {
            cands.extend(0..self.support.len() as u32);
            if !in_rel[i] {
                cands.extend((0..=next_fresh).map(|f| FRESH + f));
            }
        }
        for v in cands {
            vals.push(v);
            if checks[i + 1].iter().all(|&k| self.atom_ok(ri, k, vals)) {
                let nf = if is_fresh(v) { next_fresh.max(v - FRESH + 1) } else { next_fresh };
                self.dfs_assign(ri, checks, in_rel, vals, nf, out);
            }
            vals.pop();
        }
    }

    fn add_inst(&mut self, ri: usize, vals: Vec<u32>) {
        let r = &self.rules[ri];
        if self.injective {
            // Existential witnesses are distinct from every other occurring value.
            for y in r.nparams..r.nvars {
                if !r.occurring[y] {
                    continue;
                }
                let clash = (0..r.nvars).any(|z| z != y && r.occurring[z] && vals[z] == vals[y]);
                if clash {
                    return;
                }
            }
        }
        let mut mask = 0u64;
        for (name, ts) in &r.rels {
            let t: Vec<u32> = ts.iter().map(|t| Self::val(*t, &vals).unwrap()).collect();
            let bit = self.tidx[&(name.clone(), t)];
            if mask & (1 << bit) != 0 {
                return;
            }
            mask |= 1 << bit;
        }
        let (head_args, head_fresh) = canon(&vals[..r.nparams]);
        let head_pred = r.head;
        let call_args: Vec<(u32, Vec<u32>)> = r
            .calls
            .iter()
            .map(|(p, ts)| (*p, canon(&ts.iter().map(|t| Self::val(*t, &vals).unwrap()).collect::<Vec<_>>()).0))
            .collect();
        let univ = |vs: &mut dyn Iterator<Item = u32>| {
            vs.fold((0u64, 0u64), |(s, f), v| if is_fresh(v) { (s, f | 1 << (v - FRESH)) } else { (s | 1 << v, f) })
        };
        let u0 = univ(&mut r.local.iter().map(|&i| vals[i]));
        let call_vals: Vec<Vec<u32>> =
            r.calls.iter().map(|(_, ts)| ts.iter().map(|t| Self::val(*t, &vals).unwrap()).collect()).collect();
        let call_univ: Vec<(u64, u64)> = call_vals.iter().map(|vs| univ(&mut vs.iter().copied())).collect();
        let call_vars: Vec<BTreeSet<usize>> = r
            .calls
            .iter()
            .map(|(_, ts)| ts.iter().filter_map(|t| if let Tm::V(i) = t { Some(*i) } else { None }).collect())
            .collect();
        let shared = |a: &BTreeSet<usize>, b: &BTreeSet<usize>| {
            let (s, f) = univ(&mut a.intersection(b).map(|&i| vals[i]));
            (s | self.const_mask, f)
        };
        let local_set: BTreeSet<usize> = r.local.iter().copied().collect();
        let allowed0 = call_vars.iter().map(|cv| shared(&local_set, cv)).collect();
        let allowed = call_vars.iter().map(|a| call_vars.iter().map(|b| shared(a, b)).collect()).collect();
        let head = self.key(head_pred, head_args);
        let calls = call_args.into_iter().map(|(p, a)| self.key(p, a)).collect();
        self.insts.push(Inst { rule: ri, vals, mask, head, head_fresh, calls, u0, call_univ, allowed0, allowed });
    }

    /// Runs the fixpoint until no new facts appear or `stop` has a fact
    /// covering every tuple.
    fn run(&mut self, stop: Option<usize>) {
        for ri in 0..self.rules.len() {
            self.instantiate(ri);
        }
        let mut old: Vec<usize> = vec![0; self.facts.len()];
        let mut first = true;
        loop {
            let cur: Vec<usize> = self.facts.iter().map(|f| f.entries.len()).collect();
            let mut added: Vec<(usize, (u64, u64), Just)> = vec![];
            for ii in 0..self.insts.len() {
                let inst = &self.insts[ii];
                if inst.calls.is_empty() && !first {
                    continue;
                }
                let mut chosen = vec![];
                self.combine(ii, 0, inst.mask, inst.u0.0, first, &old, &cur, &mut chosen, &mut added);
            }
            let mut changed = false;
            for (key, entry, just) in added {
                let f = &mut self.facts[key];
                if f.seen.insert(entry) {
                    f.entries.push(entry);
                    f.just.push(just);
                    changed = true;
                }
            }
            old = cur;
            old.resize(self.facts.len(), 0);
            first = false;
            if !changed || stop.is_some_and(|k| self.facts[k].entries.iter().any(|e| e.0 == self.full)) {
                break;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn combine(
        &self,
        ii: usize,
        l: usize,
        mask: u64,
        umask: u64,
        any_new: bool,
        old: &[usize],
        cur: &[usize],
        chosen: &mut Vec<(usize, usize)>,
        out: &mut Vec<(usize, (u64, u64), Just)>,
    ) {
        let inst = &self.insts[ii];
        if l == inst.calls.len() {
            if any_new {
                let entry = (mask, if self.injective { umask } else { 0 });
                let f = &self.facts[inst.head];
                if !f.seen.contains(&entry) && !out.iter().any(|(k, e, _)| *k == inst.head && *e == entry) {
                    out.push((inst.head, entry, Just { inst: ii, kids: chosen.clone() }));
                }
            }
            return;
        }
        let key = inst.calls[l];
        let limit = cur.get(key).copied().unwrap_or(0);
        let fresh_from = old.get(key).copied().unwrap_or(0);
        for idx in 0..limit {
            let (m, u) = self.facts[key].entries[idx];
            if m & mask != 0 {
                continue;
            }
            if self.injective && !self.injective_ok(inst, l, u, chosen) {
                continue;
            }
            chosen.push((key, idx));
            let cu = u | inst.call_univ[l].0;
            self.combine(ii, l + 1, mask | m, umask | cu, any_new || idx >= fresh_from, old, cur, chosen, out);
            chosen.pop();
        }
    }

    fn injective_ok(&self, inst: &Inst, l: usize, u: u64, chosen: &[(usize, usize)]) -> bool {
        let ul = (u | inst.call_univ[l].0, inst.call_univ[l].1);
        let within = |x: (u64, u64), y: (u64, u64), a: (u64, u64)| (x.0 & y.0) & !a.0 == 0 && (x.1 & y.1) & !a.1 == 0;
        if !within(inst.u0, ul, inst.allowed0[l]) {
            return false;
        }
        for (j, &(key, idx)) in chosen.iter().enumerate() {
            let uj = (self.facts[key].entries[idx].1 | inst.call_univ[j].0, inst.call_univ[j].1);
            if !within(uj, ul, inst.allowed[j][l]) {
                return false;
            }
        }
        true
    }

    fn elem(&self, v: u32, fresh: &mut HashMap<u32, Elem>) -> Elem {
        if is_fresh(v) {
            *fresh.entry(v).or_insert_with(Elem::fresh)
        } else {
            self.support[v as usize]
        }
    }

    fn build(&self, key: usize, idx: usize, args: &[Elem]) -> DerivNode {
        let just = &self.facts[key].just[idx];
        let inst = &self.insts[just.inst];
        let r = &self.rules[inst.rule];
        let mut fresh: HashMap<u32, Elem> = HashMap::new();
        for (k, &v) in inst.head_fresh.iter().enumerate() {
            let pos = self.keys[key].1.iter().position(|&a| a == FRESH + k as u32).unwrap();
            fresh.insert(v, args[pos]);
        }
        let exists = r.flat.exists.iter().enumerate().map(|(j, y)| (y.clone(), self.elem(inst.vals[r.nparams + j], &mut fresh))).collect();
        let consumed = r
            .rels
            .iter()
            .map(|(name, ts)| (name.clone(), ts.iter().map(|t| self.support[Self::val(*t, &inst.vals).unwrap() as usize]).collect()))
            .collect();
        let children = r
            .calls
            .iter()
            .zip(&just.kids)
            .map(|((_, ts), &(k, i))| {
                let a: Vec<Elem> = ts.iter().map(|t| self.elem(Self::val(*t, &inst.vals).unwrap(), &mut fresh)).collect();
                self.build(k, i, &a)
            })
            .collect();
        DerivNode {
            rule: r.rule,
            pred: self.pred_names[r.head as usize].clone(),
            args: args.to_vec(),
            exists,
            consumed,
            children,
        }
    }
}

/// Canonical pattern of concrete values: support index or placeholder.
fn pattern(values: &[Elem], sidx: &HashMap<Elem, u32>) -> Vec<u32> {
    let mut fresh: Vec<Elem> = vec![];
    values
        .iter()
        .map(|e| match sidx.get(e) {
            Some(&i) => i,
            None => {
                let k = fresh.iter().position(|f| f == e).unwrap_or_else(|| {
                    fresh.push(*e);
                    fresh.len() - 1
                });
                FRESH + k as u32
            }
        })
        .collect()
}

const TOP: &str = "<top>";

pub(crate) fn top_rule(phi: &Slr) -> Rule {
    Rule { head: TOP.to_string(), params: phi.free_vars().into_iter().collect(), body: phi.clone() }
}

fn validate_formula(phi: &Slr, sid: &Sid, s: &Structure) -> Result<()> {
    let mut err = None;
    phi.walk(&mut |f| match f {
        Slr::Pred(p, ts) => match sid.arity(p) {
            None => {
                err.get_or_insert(Error::UnknownPredicate(p.clone()));
            }
            Some(a) if a != ts.len() => {
                err.get_or_insert(Error::ArityMismatch { symbol: p.clone(), expected: a, found: ts.len() });
            }
            _ => {}
        },
        Slr::Rel(r, ts) => match s.signature().arity(r) {
            None => {
                err.get_or_insert(Error::UnknownRelation(r.clone()));
            }
            Some(a) if a != ts.len() => {
                err.get_or_insert(Error::ArityMismatch { symbol: r.clone(), expected: a, found: ts.len() });
            }
            _ => {}
        },
        _ => {}
    });
    err.map_or(Ok(()), Err)
}

fn term_value(t: &Term, nu: &Store, s: &Structure) -> Result<Elem> {
    match t {
        Term::Var(x) => nu.get(x).ok_or_else(|| Error::UnboundVariable(x.clone())),
        Term::Const(c) => s.constant(c).ok_or_else(|| Error::UnknownConstant(c.clone())),
    }
}

fn check(s: &Structure, nu: &Store, phi: &Slr, sid: &Sid, injective: bool) -> Result<Option<Derivation>> {
    validate_formula(phi, sid, s)?;
    for x in phi.free_vars() {
        nu.get(&x).ok_or(Error::UnboundVariable(x))?;
    }
    let mut eng = Engine::new(s, sid, injective)?;
    let (root_key, root_args) = match phi {
        Slr::Pred(p, ts) => {
            let args = ts.iter().map(|t| term_value(t, nu, s)).collect::<Result<Vec<_>>>()?;
            let pid = eng.pred_id(p);
            (eng.key(pid, pattern(&args, &eng.sidx)), args)
        }
        _ => {
            let top = top_rule(phi);
            let args: Vec<Elem> = top.params.iter().map(|x| nu.get(x).unwrap()).collect();
            let pat = pattern(&args, &eng.sidx);
            let c = eng.compile(None, &top, sid, Some(pat.clone()))?;
            eng.rules.push(c);
            let pid = eng.pred_id(TOP);
            (eng.key(pid, pat), args)
        }
    };
    eng.run(Some(root_key));
    let facts = &eng.facts[root_key];
    let Some(idx) = facts.entries.iter().position(|e| e.0 == eng.full) else {
        return Ok(None);
    };
    let root = eng.build(root_key, idx, &root_args);
    Ok(Some(Derivation { formula: phi.clone(), root }))
}

/// Decides `s, nu |= phi` under the SID and returns a witnessing derivation.
pub fn check_slr(s: &Structure, nu: &Store, phi: &Slr, sid: &Sid) -> Result<Option<Derivation>> {
    check(s, nu, phi, sid, false)
}

/// As [`check_slr`] under injective semantics: sibling subformulas share only
/// the values of their common variables (and constants), and existential
/// witnesses avoid the values of all other variables of their rule.
pub fn check_slr_injective(s: &Structure, nu: &Store, phi: &Slr, sid: &Sid) -> Result<Option<Derivation>> {
    check(s, nu, phi, sid, true)
}

// Replay: checks a derivation against the rules independently of the engine.

struct Replay<'a> {
    s: &'a Structure,
    sid: &'a Sid,
    injective: bool,
    const_vals: BTreeSet<Elem>,
    consumed: Vec<(String, Tuple)>,
}

impl Replay<'_> {
    /// Verifies one node; returns its universe (values used below it).
    fn node(&mut self, n: &DerivNode, rule: &Rule, args: &[Elem]) -> Option<BTreeSet<Elem>> {
        if n.args != args || rule.params.len() != args.len() {
            return None;
        }
        let flat = rule.flatten();
        if flat.exists.len() != n.exists.len() || flat.exists.iter().zip(&n.exists).any(|(a, (b, _))| a != b) {
            return None;
        }
        let mut env: HashMap<&str, Elem> = flat.params.iter().map(String::as_str).zip(args.iter().copied()).collect();
        env.extend(n.exists.iter().map(|(x, e)| (x.as_str(), *e)));
        let val = |t: &Term| -> Option<Elem> {
            match t {
                Term::Var(x) => env.get(x.as_str()).copied(),
                Term::Const(c) => self.s.constant(c),
            }
        };
        for (a, b) in &flat.eqs {
            if val(a)? != val(b)? {
                return None;
            }
        }
        for (a, b) in &flat.neqs {
            if val(a)? == val(b)? {
                return None;
            }
        }
        let mut local: Vec<(String, Tuple)> = vec![];
        for (r, ts) in &flat.rels {
            local.push((r.clone(), ts.iter().map(val).collect::<Option<Vec<_>>>()?));
        }
        let mut a = local.clone();
        let mut b = n.consumed.clone();
        a.sort();
        b.sort();
        if a != b {
            return None;
        }
        self.consumed.extend(local);
        if flat.calls.len() != n.children.len() {
            return None;
        }
        let var_vals = |vs: &mut dyn Iterator<Item = &Term>| -> BTreeSet<Elem> {
            vs.filter(|t| t.as_var().is_some()).filter_map(val).collect()
        };
        let u0: BTreeSet<Elem> = var_vals(
            &mut flat.eqs.iter().chain(flat.neqs.iter()).flat_map(|(a, b)| [a, b]).chain(flat.rels.iter().flat_map(|(_, ts)| ts.iter())),
        );
        let mut univs: Vec<BTreeSet<Elem>> = vec![];
        for ((p, ts), child) in flat.calls.iter().zip(&n.children) {
            let cargs = ts.iter().map(val).collect::<Option<Vec<_>>>()?;
            let (ri, crule) = match child.rule {
                Some(ri) => (ri, self.sid.rules.get(ri)?),
                None => return None,
            };
            if &crule.head != p || &child.pred != p {
                return None;
            }
            let _ = ri;
            let mut u = self.node(child, crule, &cargs)?;
            u.extend(cargs.iter().copied());
            univs.push(u);
        }
        if self.injective {
            let occ = flat.occurring();
            for (y, e) in &n.exists {
                if !occ.contains(y) {
                    continue;
                }
                let clash = flat.vars().iter().any(|z| z != y && occ.contains(z) && env.get(z.as_str()) == Some(e));
                if clash {
                    return None;
                }
            }
            fn vars_of(ts: &[Term]) -> BTreeSet<&str> {
                ts.iter().filter_map(|t| t.as_var()).collect()
            }
            let local_vars: BTreeSet<&str> = flat
                .eqs
                .iter()
                .chain(flat.neqs.iter())
                .flat_map(|(a, b)| [a, b])
                .chain(flat.rels.iter().flat_map(|(_, ts)| ts.iter()))
                .filter_map(|t| t.as_var())
                .collect();
            let within = |x: &BTreeSet<Elem>, y: &BTreeSet<Elem>, shared: BTreeSet<&str>| {
                let allowed: BTreeSet<Elem> = shared.iter().map(|v| env[v]).chain(self.const_vals.iter().copied()).collect();
                x.intersection(y).all(|e| allowed.contains(e))
            };
            for (l, (_, ts)) in flat.calls.iter().enumerate() {
                let vl = vars_of(ts);
                if !within(&u0, &univs[l], local_vars.intersection(&vl).copied().collect()) {
                    return None;
                }
                for (j, (_, tj)) in flat.calls.iter().enumerate().take(l) {
                    let vj = vars_of(tj);
                    if !within(&univs[j], &univs[l], vj.intersection(&vl).copied().collect()) {
                        return None;
                    }
                }
            }
        }
        let mut u = u0;
        for x in univs {
            u.extend(x);
        }
        Some(u)
    }
}

fn replay_with(s: &Structure, nu: &Store, sid: &Sid, d: &Derivation, injective: bool) -> Result<bool> {
    let phi = &d.formula;
    validate_formula(phi, sid, s)?;
    let mut rp = Replay { s, sid, injective, const_vals: s.constants().map(|(_, e)| e).collect(), consumed: vec![] };
    let ok = match (phi, d.root.rule) {
        (Slr::Pred(p, ts), Some(ri)) => {
            let args = ts.iter().map(|t| term_value(t, nu, s)).collect::<Result<Vec<_>>>()?;
            match sid.rules.get(ri) {
                Some(rule) if &rule.head == p && &d.root.pred == p => rp.node(&d.root, rule, &args).is_some(),
                _ => false,
            }
        }
        (_, None) => {
            let top = top_rule(phi);
            let args = top.params.iter().map(|x| nu.get(x).ok_or_else(|| Error::UnboundVariable(x.clone()))).collect::<Result<Vec<_>>>()?;
            rp.node(&d.root, &top, &args).is_some()
        }
        _ => false,
    };
    if !ok {
        return Ok(false);
    }
    let mut used = rp.consumed;
    used.sort();
    let mut all = s.all_tuples();
    all.sort();
    Ok(used == all)
}

/// Checks that a derivation is a valid unfolding tree whose consumed tuples
/// partition the tuples of `s` exactly.
pub fn replay(s: &Structure, nu: &Store, sid: &Sid, d: &Derivation) -> Result<bool> {
    replay_with(s, nu, sid, d, false)
}

/// As [`replay`], additionally checking the injective-semantics conditions.
pub fn replay_injective(s: &Structure, nu: &Store, sid: &Sid, d: &Derivation) -> Result<bool> {
    replay_with(s, nu, sid, d, true)
}
