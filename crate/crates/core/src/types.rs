//! Rank-r MSO types as interned Hintikka-style fingerprints, a registry of
//! representative structures, and the abstract glue and forget operations.
//!
//! The fingerprint of a structure at rank 0 is its atomic diagram over the
//! constants and the currently bound elements and sets. At rank r > 0 it is
//! the pair of the sets of rank r-1 fingerprints of all one-element and all
//! one-set extensions. Extensions range over the support plus a number of
//! padding elements (2^r by default). Padding elements that are not bound and
//! agree on membership in all bound sets are interchangeable, so only one
//! representative per such class is tried, and sets are enumerated by how
//! many members they take from each class.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::{LazyLock, Mutex};

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::so::{check_so, So};
use crate::structure::{Elem, Signature, Store, Structure};

/// Limits for type computation. Rank-2 cost grows as 2^support.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TypeConfig {
    pub max_rank: usize,
    pub max_support: usize,
}

impl Default for TypeConfig {
    fn default() -> Self {
        TypeConfig { max_rank: 2, max_support: 5 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Node {
    Diagram(Vec<u8>),
    Ext(Vec<u32>, Vec<u32>),
    Root { rels: Vec<(String, usize)>, consts: Vec<String>, rank: usize, body: u32 },
}

#[derive(Default)]
struct Interner {
    ids: HashMap<Node, u32>,
    nodes: Vec<Node>,
}

static INTERNER: LazyLock<Mutex<Interner>> = LazyLock::new(Mutex::default);

fn intern(n: Node) -> u32 {
    let mut g = INTERNER.lock().unwrap();
    if let Some(&id) = g.ids.get(&n) {
        return id;
    }
    let id = g.nodes.len() as u32;
    g.nodes.push(n.clone());
    g.ids.insert(n, id);
    id
}

fn node(id: u32) -> Node {
    INTERNER.lock().unwrap().nodes[id as usize].clone()
}

/// An interned rank-r type. Equal types have equal IDs within a process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RankType {
    pub rank: usize,
    id: u32,
}

impl RankType {
    pub fn id(&self) -> u32 {
        self.id
    }

    /// Canonical JSON: nested arrays sorted by their serialized form.
    pub fn to_json(&self) -> Value {
        let Node::Root { rels, consts, rank, body } = node(self.id) else { unreachable!() };
        let mut memo = HashMap::new();
        json!({
            "rank": rank,
            "relations": rels.iter().map(|(r, a)| json!([r, a])).collect::<Vec<_>>(),
            "constants": consts,
            "fingerprint": body_json(body, &rels, &mut memo),
        })
    }
}

fn body_json(id: u32, rels: &[(String, usize)], memo: &mut HashMap<u32, Value>) -> Value {
    if let Some(v) = memo.get(&id) {
        return v.clone();
    }
    let v = match node(id) {
        Node::Diagram(d) => diagram_json(&d, rels),
        Node::Ext(es, ss) => {
            let mut sorted = |ids: &[u32]| {
                let mut vs: Vec<Value> = ids.iter().map(|&c| body_json(c, rels, memo)).collect();
                vs.sort_by_cached_key(|v| v.to_string());
                Value::Array(vs)
            };
            json!({ "elements": sorted(&es), "sets": sorted(&ss) })
        }
        Node::Root { .. } => unreachable!(),
    };
    memo.insert(id, v.clone());
    v
}

fn diagram_json(d: &[u8], rels: &[(String, usize)]) -> Value {
    let t = d[0] as usize;
    let nsets = d[1] as usize;
    let mut i = 2;
    let eq: Vec<u8> = d[i..i + t].to_vec();
    i += t;
    let mut relv = serde_json::Map::new();
    for (r, a) in rels {
        let mut ts = vec![];
        for code in 0..t.pow(*a as u32) {
            if d[i] == 1 {
                ts.push(Value::from(digits(code, t, *a)));
            }
            i += 1;
        }
        relv.insert(r.clone(), Value::Array(ts));
    }
    let mut sets = vec![];
    for _ in 0..nsets {
        sets.push((0..t).filter(|&j| d[i + j] == 1).collect::<Vec<_>>());
        i += t;
    }
    json!({ "eq": eq, "rel": relv, "in": sets })
}

fn digits(mut code: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for k in (0..len).rev() {
        out[k] = code % base;
        code /= base;
    }
    out
}

/// Evaluation context: carrier indices `0..ns` are the support, the rest
/// padding.
struct Ctx {
    ns: usize,
    n: usize,
    consts: Vec<usize>,
    rels: Vec<(usize, HashSet<Vec<u8>>)>,
}

struct State {
    elems: Vec<usize>,
    sets: Vec<u64>,
}

impl Ctx {
    fn terms(&self, st: &State) -> Vec<usize> {
        self.consts.iter().chain(&st.elems).copied().collect()
    }

    fn diagram(&self, st: &State) -> u32 {
        let terms = self.terms(st);
        let t = terms.len();
        let mut d = vec![t as u8, st.sets.len() as u8];
        for (i, v) in terms.iter().enumerate() {
            d.push(terms.iter().position(|w| w == v).unwrap_or(i) as u8);
        }
        for (a, ts) in &self.rels {
            for code in 0..t.pow(*a as u32) {
                let tup: Vec<u8> = digits(code, t, *a).into_iter().map(|j| terms[j] as u8).collect();
                d.push(ts.contains(&tup) as u8);
            }
        }
        for x in &st.sets {
            for v in &terms {
                d.push((x >> v & 1) as u8);
            }
        }
        intern(Node::Diagram(d))
    }

    /// Free padding elements grouped by membership in the bound sets.
    fn padding_classes(&self, st: &State) -> Vec<Vec<usize>> {
        let mut classes: BTreeMap<Vec<bool>, Vec<usize>> = BTreeMap::new();
        for p in self.ns..self.n {
            if st.elems.contains(&p) {
                continue;
            }
            let key = st.sets.iter().map(|x| x >> p & 1 == 1).collect();
            classes.entry(key).or_default().push(p);
        }
        classes.into_values().collect()
    }

    fn fingerprint(&self, st: &mut State, q: usize) -> u32 {
        if q == 0 {
            return self.diagram(st);
        }
        let classes = self.padding_classes(st);
        let mut cands: BTreeSet<usize> = (0..self.ns).collect();
        cands.extend(st.elems.iter().copied());
        cands.extend(classes.iter().map(|c| c[0]));
        let mut es = BTreeSet::new();
        for e in cands {
            st.elems.push(e);
            es.insert(self.fingerprint(st, q - 1));
            st.elems.pop();
        }
        let mut ss = BTreeSet::new();
        for x in self.set_candidates(st, q - 1, &classes) {
            st.sets.push(x);
            ss.insert(self.fingerprint(st, q - 1));
            st.sets.pop();
        }
        intern(Node::Ext(es.into_iter().collect(), ss.into_iter().collect()))
    }

    /// Sets to try when `rest` ranks remain after binding.
    fn set_candidates(&self, st: &State, rest: usize, classes: &[Vec<usize>]) -> Vec<u64> {
        let base: u64 = if rest == 0 {
            // Only membership of the terms is visible in the diagram.
            self.terms(st).iter().fold(0, |m, &v| m | 1 << v)
        } else {
            let mut m = if self.ns == 64 { u64::MAX } else { (1u64 << self.ns) - 1 };
            for &e in &st.elems {
                m |= 1 << e;
            }
            m
        };
        let mut out = vec![];
        let mut sub = base;
        loop {
            out.push(sub);
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & base;
        }
        if rest > 0 {
            for c in classes {
                out = out
                    .into_iter()
                    .flat_map(|x| {
                        (0..=c.len()).map(move |k| c[..k].iter().fold(x, |m, &p| m | 1 << p))
                    })
                    .collect();
            }
        }
        out
    }
}

/// Signature key of a type: relations and constants, ignoring which relation
/// is the guard.
fn sig_key(sig: &Signature) -> (Vec<(String, usize)>, Vec<String>) {
    (sig.relations().map(|(r, a)| (r.to_string(), a)).collect(), sig.constants().map(str::to_string).collect())
}

/// The rank-`r` type of `s`, computed over its support plus `2^r` padding
/// elements.
pub fn type_of(s: &Structure, r: usize) -> Result<RankType> {
    type_of_with(s, r, None, &TypeConfig::default())
}

/// [`type_of`] with an explicit padding count and limits.
pub fn type_of_with(s: &Structure, r: usize, padding: Option<usize>, cfg: &TypeConfig) -> Result<RankType> {
    if r > cfg.max_rank {
        return Err(Error::RankTooLarge { rank: r, bound: cfg.max_rank });
    }
    let dom: Vec<Elem> = s.dom().into_iter().collect();
    if dom.len() > cfg.max_support {
        return Err(Error::SupportTooLarge { size: dom.len(), bound: cfg.max_support });
    }
    let pad = padding.unwrap_or(1 << r);
    let n = dom.len() + pad;
    if n > 64 {
        return Err(Error::CarrierTooLarge { size: n, cutoff: 64 });
    }
    let idx: HashMap<Elem, usize> = dom.iter().enumerate().map(|(i, e)| (*e, i)).collect();
    let (rels, consts) = sig_key(s.signature());
    let mut cvals = vec![];
    for c in &consts {
        let v = s.constant(c).ok_or_else(|| Error::MissingConstant(c.clone()))?;
        cvals.push(idx[&v]);
    }
    let ctx = Ctx {
        ns: dom.len(),
        n,
        consts: cvals,
        rels: rels
            .iter()
            .map(|(r, a)| (*a, s.tuples(r).iter().map(|t| t.iter().map(|e| idx[e] as u8).collect()).collect()))
            .collect(),
    };
    let body = ctx.fingerprint(&mut State { elems: vec![], sets: vec![] }, r);
    Ok(RankType { rank: r, id: intern(Node::Root { rels, consts, rank: r, body }) })
}

/// Representatives of registered types (the first registered structure of
/// each type wins).
#[derive(Clone, Debug, Default)]
pub struct TypeRegistry {
    pub config: TypeConfig,
    reps: HashMap<RankType, Structure>,
    order: Vec<RankType>,
}

impl TypeRegistry {
    pub fn new() -> TypeRegistry {
        TypeRegistry::default()
    }

    pub fn with_config(config: TypeConfig) -> TypeRegistry {
        TypeRegistry { config, ..TypeRegistry::default() }
    }

    /// Computes the type of `s` and registers `s` as its representative
    /// unless the type already has one.
    pub fn register(&mut self, s: &Structure, r: usize) -> Result<RankType> {
        let t = type_of_with(s, r, None, &self.config)?;
        self.insert(t, s);
        Ok(t)
    }

    fn insert(&mut self, t: RankType, s: &Structure) {
        if !self.reps.contains_key(&t) {
            self.reps.insert(t, s.unpadded());
            self.order.push(t);
        }
    }

    pub fn representative(&self, t: RankType) -> Result<&Structure> {
        self.reps.get(&t).ok_or(Error::UnregisteredType)
    }

    /// Registered types in registration order.
    pub fn types(&self) -> &[RankType] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// The type of the glue of the representatives; the glued structure is
    /// registered for it.
    pub fn abs_glue(&mut self, t1: RankType, t2: RankType) -> Result<RankType> {
        if t1.rank != t2.rank {
            return Err(Error::RankMismatch { formula: t2.rank, rank: t1.rank });
        }
        let s = self.representative(t1)?.glue(self.representative(t2)?)?;
        self.register(&s, t1.rank)
    }

    /// The type of the representative with constant `c` dropped.
    pub fn abs_forget(&mut self, t: RankType, c: &str) -> Result<RankType> {
        let s = self.representative(t)?.forget(c)?;
        self.register(&s, t.rank)
    }

    /// Whether the MSO sentence `phi` belongs to type `t`.
    pub fn contains_sentence(&self, t: RankType, phi: &So) -> Result<bool> {
        let qr = phi.quantifier_rank();
        if qr > t.rank {
            return Err(Error::RankMismatch { formula: qr, rank: t.rank });
        }
        if !phi.is_monadic() {
            return Err(Error::Invalid("sentence is not monadic".into()));
        }
        if let Some(x) = phi.free_vars().into_iter().next() {
            return Err(Error::UnboundVariable(x));
        }
        check_so(self.representative(t)?, &Store::new(), phi, None)
    }

    /// Registry contents as JSON: each type with its representative.
    pub fn to_json(&self) -> Value {
        Value::Array(
            self.order
                .iter()
                .map(|t| json!({ "id": t.id, "rank": t.rank, "representative": crate::text::structure_to_json(&self.reps[t]) }))
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery::enumerate_structures;
    use crate::so::parse_so;

    fn rd() -> Signature {
        Signature::new().with_relation("R", 1).unwrap().with_relation("D", 1).unwrap()
    }

    fn e(i: u64) -> Elem {
        Elem(i)
    }

    #[test]
    fn empty_structures_share_rank0_type() {
        let a = Structure::empty(&rd()).unwrap();
        let b = Structure::empty(&rd()).unwrap().pad(3);
        assert_eq!(type_of(&a, 0).unwrap(), type_of(&b, 0).unwrap());
    }

    #[test]
    fn rank_and_support_limits() {
        let s = Structure::empty(&rd()).unwrap();
        assert!(matches!(type_of(&s, 3), Err(Error::RankTooLarge { .. })));
        let mut b = Structure::builder(&rd());
        for i in 1..=6 {
            b = b.tuple("R", &[e(i)]);
        }
        assert!(matches!(type_of(&b.build().unwrap(), 1), Err(Error::SupportTooLarge { .. })));
    }

    #[test]
    fn rank1_distinguishes_emptiness_only() {
        let sig = rd();
        let one = Structure::builder(&sig).tuple("R", &[e(1)]).build().unwrap();
        let two = Structure::builder(&sig).tuple("R", &[e(1)]).tuple("R", &[e(2)]).build().unwrap();
        let none = Structure::empty(&sig).unwrap();
        assert_eq!(type_of(&one, 1).unwrap(), type_of(&two, 1).unwrap());
        assert_ne!(type_of(&one, 1).unwrap(), type_of(&none, 1).unwrap());
        // Rank 2 separates one element from two.
        assert_ne!(type_of(&one, 2).unwrap(), type_of(&two, 2).unwrap());
    }

    #[test]
    fn isomorphic_structures_share_interned_type() {
        let sig = Signature::new().with_relation("E", 2).unwrap();
        let a = Structure::builder(&sig).tuple("E", &[e(1), e(2)]).tuple("E", &[e(2), e(2)]).build().unwrap();
        let map: HashMap<Elem, Elem> = [(e(1), e(7)), (e(2), e(5))].into_iter().collect();
        let b = a.rename(&map);
        for r in 0..=2 {
            assert_eq!(type_of(&a, r).unwrap().id(), type_of(&b, r).unwrap().id());
        }
    }

    #[test]
    fn padding_beyond_single_type_bound_is_invisible() {
        for s in enumerate_structures(&rd(), 3, 6).unwrap() {
            for r in 0..=2 {
                let cfg = TypeConfig::default();
                let a = type_of_with(&s, r, None, &cfg).unwrap();
                let b = type_of_with(&s, r, Some((1 << r) + 3), &cfg).unwrap();
                assert_eq!(a, b, "{s:?} rank {r}");
            }
        }
    }

    /// Rank-r fingerprint without the padding symmetry reduction.
    fn naive(ctx: &Ctx, st: &mut State, q: usize) -> String {
        if q == 0 {
            return format!("{:?}", node(ctx.diagram(st)));
        }
        let mut es = BTreeSet::new();
        for e in 0..ctx.n {
            st.elems.push(e);
            es.insert(naive(ctx, st, q - 1));
            st.elems.pop();
        }
        let mut ss = BTreeSet::new();
        for x in 0..1u64 << ctx.n {
            st.sets.push(x);
            ss.insert(naive(ctx, st, q - 1));
            st.sets.pop();
        }
        format!("({es:?},{ss:?})")
    }

    fn naive_type(s: &Structure, r: usize) -> String {
        let dom: Vec<Elem> = s.dom().into_iter().collect();
        let idx: HashMap<Elem, usize> = dom.iter().enumerate().map(|(i, e)| (*e, i)).collect();
        let (rels, _) = sig_key(s.signature());
        let ctx = Ctx {
            ns: dom.len(),
            n: dom.len() + (1 << r),
            consts: vec![],
            rels: rels
                .iter()
                .map(|(r, a)| (*a, s.tuples(r).iter().map(|t| t.iter().map(|e| idx[e] as u8).collect()).collect()))
                .collect(),
        };
        naive(&ctx, &mut State { elems: vec![], sets: vec![] }, r)
    }

    #[test]
    fn reduced_enumeration_matches_naive_partition() {
        let all = enumerate_structures(&rd(), 3, 6).unwrap();
        for r in 0..=2 {
            let fast: Vec<RankType> = all.iter().map(|s| type_of(s, r).unwrap()).collect();
            let slow: Vec<String> = all.iter().map(|s| naive_type(s, r)).collect();
            for i in 0..all.len() {
                for j in 0..all.len() {
                    assert_eq!(fast[i] == fast[j], slow[i] == slow[j], "rank {r}: {:?} {:?}", all[i], all[j]);
                }
            }
        }
    }

    #[test]
    fn equal_rank2_types_agree_on_sentences() {
        let sig = rd();
        let sentences = [
            "ex2 X/1 . all x . X(x) <-> R(x)",
            "ex x . ex y . x != y & R(x) & R(y)",
            "ex2 X/1 . ex x . X(x) & ~R(x) & ~D(x)",
            "all x . R(x) -> D(x)",
        ];
        let phis: Vec<So> = sentences.iter().map(|p| parse_so(p, &sig).unwrap()).collect();
        let all = enumerate_structures(&sig, 3, 4).unwrap();
        for a in &all {
            for b in &all {
                if type_of(a, 2).unwrap() == type_of(b, 2).unwrap() {
                    for phi in &phis {
                        assert_eq!(
                            check_so(a, &Store::new(), phi, None).unwrap(),
                            check_so(b, &Store::new(), phi, None).unwrap()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn glue_with_empty_is_identity() {
        let sig = rd().with_constant("c").unwrap();
        let s = Structure::builder(&sig).tuple("R", &[e(1)]).constant("c", e(2)).build().unwrap();
        let empty = Structure::empty(&Signature::new()).unwrap();
        let mut reg = TypeRegistry::new();
        let t = reg.register(&s, 1).unwrap();
        let z = reg.register(&empty, 1).unwrap();
        assert_eq!(reg.abs_glue(t, z).unwrap(), t);
    }

    #[test]
    fn forget_errors_and_readd() {
        let sig = rd().with_constant("c").unwrap();
        let s = Structure::builder(&sig).tuple("R", &[e(1)]).constant("c", e(1)).build().unwrap();
        let mut reg = TypeRegistry::new();
        let t = reg.register(&s, 1).unwrap();
        let f = reg.abs_forget(t, "c").unwrap();
        assert!(matches!(reg.abs_forget(f, "c"), Err(Error::UnknownConstant(_))));
        let back = reg.representative(f).unwrap().with_constant("c", e(1)).unwrap();
        assert_eq!(type_of(&back, 1).unwrap(), t);
    }

    #[test]
    fn unregistered_and_rank_mismatch() {
        let s = Structure::empty(&rd()).unwrap();
        let t = type_of(&s, 1).unwrap();
        let mut reg = TypeRegistry::new();
        assert!(matches!(reg.abs_forget(t, "c"), Err(Error::UnregisteredType)));
        reg.register(&s, 1).unwrap();
        let phi = parse_so("ex x . ex y . R(x) & R(y)", &rd()).unwrap();
        assert!(matches!(reg.contains_sentence(t, &phi), Err(Error::RankMismatch { .. })));
        let none = parse_so("~(ex x . D(x))", &rd()).unwrap();
        assert!(reg.contains_sentence(t, &none).unwrap());
    }

    #[test]
    fn clique_formula_in_k2_type() {
        let g = crate::gallery::entry("clique").unwrap();
        let phi = g.formula().unwrap();
        let k2 = Structure::encode_graph(&[e(1), e(2)], &[(e(1), e(2)), (e(2), e(1))]).unwrap();
        let mut reg = TypeRegistry::new();
        let t = reg.register(&k2, phi.quantifier_rank()).unwrap();
        assert!(reg.contains_sentence(t, &phi).unwrap());
    }

    #[test]
    fn json_is_canonical() {
        let sig = Signature::new().with_relation("E", 2).unwrap().with_constant("c").unwrap();
        let a = Structure::builder(&sig).tuple("E", &[e(1), e(2)]).constant("c", e(2)).build().unwrap();
        let map: HashMap<Elem, Elem> = [(e(1), e(9)), (e(2), e(4))].into_iter().collect();
        let ja = type_of(&a, 1).unwrap().to_json();
        let jb = type_of(&a.rename(&map), 1).unwrap().to_json();
        assert_eq!(ja.to_string(), jb.to_string());
        assert_eq!(ja["constants"], json!(["c"]));
        let diag = type_of(&a, 0).unwrap().to_json();
        assert_eq!(diag["fingerprint"]["eq"], json!([0]));
        assert_eq!(diag["fingerprint"]["rel"]["E"], json!([]));
    }

    /// Rank-1 sentences over `R/1, D/1`: both quantifiers over every boolean
    /// function of `R(x), D(x)`, the same under a vacuous set quantifier, and
    /// the two set-quantified constants.
    fn rank1_corpus(sig: &Signature) -> Vec<So> {
        let mut out = vec![];
        for table in 0..16u32 {
            let mut minterms = vec![];
            for m in 0..4u32 {
                if table >> m & 1 == 1 {
                    let r = if m & 1 == 1 { "R(x)" } else { "~R(x)" };
                    let d = if m & 2 == 2 { "D(x)" } else { "~D(x)" };
                    minterms.push(format!("({r} & {d})"));
                }
            }
            let body = if minterms.is_empty() { "false".to_string() } else { minterms.join(" | ") };
            out.push(format!("ex x . {body}"));
            out.push(format!("all x . {body}"));
            out.push(format!("(all2 X/1 . true) & (ex x . {body})"));
        }
        out.push("ex2 X/1 . true".into());
        out.push("all2 X/1 . false".into());
        out.iter().map(|p| parse_so(p, sig).unwrap()).collect()
    }

    #[test]
    fn equal_rank1_types_agree_on_corpus() {
        let sig = rd();
        let corpus = rank1_corpus(&sig);
        assert_eq!(corpus.len(), 50);
        let all = enumerate_structures(&sig, 3, 6).unwrap();
        let verdicts: Vec<Vec<bool>> = all
            .iter()
            .map(|s| corpus.iter().map(|phi| check_so(s, &Store::new(), phi, None).unwrap()).collect())
            .collect();
        for i in 0..all.len() {
            for j in 0..all.len() {
                if type_of(&all[i], 1).unwrap() == type_of(&all[j], 1).unwrap() {
                    assert_eq!(verdicts[i], verdicts[j], "{:?} {:?}", all[i], all[j]);
                }
            }
        }
    }

    #[test]
    fn abstract_ops_ignore_registration_order() {
        let sig = rd().with_constant("c").unwrap();
        let a = Structure::builder(&sig).tuple("R", &[e(1)]).tuple("R", &[e(2)]).constant("c", e(1)).build().unwrap();
        let b = Structure::builder(&sig).tuple("R", &[e(3)]).tuple("D", &[e(4)]).constant("c", e(3)).build().unwrap();
        let a2 = Structure::builder(&sig)
            .tuples("R", [[e(5)], [e(6)], [e(7)]].iter().map(|t| &t[..]))
            .constant("c", e(5))
            .build()
            .unwrap();
        assert_eq!(type_of(&a, 1).unwrap(), type_of(&a2, 1).unwrap());
        let mut r1 = TypeRegistry::new();
        let ta = r1.register(&a, 1).unwrap();
        r1.register(&a2, 1).unwrap();
        let tb = r1.register(&b, 1).unwrap();
        let mut r2 = TypeRegistry::new();
        r2.register(&a2, 1).unwrap();
        r2.register(&a, 1).unwrap();
        r2.register(&b, 1).unwrap();
        assert_eq!(r1.abs_glue(ta, tb).unwrap(), r2.abs_glue(ta, tb).unwrap());
        assert_eq!(r1.abs_forget(ta, "c").unwrap(), r2.abs_forget(ta, "c").unwrap());
    }
}
