//! Signatures, finite-support structures over an unbounded element space,
//! stores, and the structure algebra (composition, glue, forget, encode,
//! padding).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An element of the universe. IDs handed out by [`Elem::fresh`] never
/// collide with any ID that has been used to build a structure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Elem(pub u64);

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

impl Elem {
    pub fn fresh() -> Elem {
        Elem(NEXT_ID.fetch_add(1, Ordering::SeqCst))
    }

    /// Marks this ID as used so that later fresh IDs stay above it.
    pub fn reserve(self) {
        NEXT_ID.fetch_max(self.0 + 1, Ordering::SeqCst);
    }
}

impl fmt::Display for Elem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Default name of the guard relation.
pub const GUARD: &str = "D";
/// Vertex and edge relations of graph encodings.
pub const VERTEX: &str = "V";
pub const EDGE: &str = "E";

/// Name of the `i`-th port constant (1-based).
pub fn port_name(i: usize) -> String {
    format!("p{i}")
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Signature {
    relations: BTreeMap<String, usize>,
    constants: BTreeSet<String>,
    guard: Option<String>,
}

impl Signature {
    pub fn new() -> Signature {
        Signature::default()
    }

    pub fn with_relation(mut self, name: &str, arity: usize) -> Result<Signature> {
        if arity == 0 {
            return Err(Error::Invalid(format!("relation `{name}` must have arity at least 1")));
        }
        if self.relations.contains_key(name) || self.constants.contains(name) {
            return Err(Error::DuplicateSymbol(name.to_string()));
        }
        self.relations.insert(name.to_string(), arity);
        Ok(self)
    }

    pub fn with_constant(mut self, name: &str) -> Result<Signature> {
        if self.relations.contains_key(name) || self.constants.contains(name) {
            return Err(Error::DuplicateSymbol(name.to_string()));
        }
        self.constants.insert(name.to_string());
        Ok(self)
    }

    /// Declares `name` as the unary guard relation, adding it if needed.
    pub fn with_guard(mut self, name: &str) -> Result<Signature> {
        match self.relations.get(name) {
            Some(1) => {}
            Some(_) => return Err(Error::SignatureConflict(name.to_string())),
            None => self = self.with_relation(name, 1)?,
        }
        if let Some(g) = &self.guard {
            if g != name {
                return Err(Error::SignatureConflict(name.to_string()));
            }
        }
        self.guard = Some(name.to_string());
        Ok(self)
    }

    pub fn relations(&self) -> impl Iterator<Item = (&str, usize)> + '_ {
        self.relations.iter().map(|(n, a)| (n.as_str(), *a))
    }

    /// Relations other than the guard.
    pub fn sigma_relations(&self) -> impl Iterator<Item = (&str, usize)> + '_ {
        self.relations().filter(move |(n, _)| Some(*n) != self.guard.as_deref())
    }

    pub fn constants(&self) -> impl Iterator<Item = &str> + '_ {
        self.constants.iter().map(|c| c.as_str())
    }

    pub fn guard(&self) -> Option<&str> {
        self.guard.as_deref()
    }

    pub fn arity(&self, rel: &str) -> Option<usize> {
        self.relations.get(rel).copied()
    }

    pub fn has_relation(&self, rel: &str) -> bool {
        self.relations.contains_key(rel)
    }

    pub fn has_constant(&self, c: &str) -> bool {
        self.constants.contains(c)
    }

    pub fn without_constant(&self, c: &str) -> Result<Signature> {
        if !self.constants.contains(c) {
            return Err(Error::UnknownConstant(c.to_string()));
        }
        let mut sig = self.clone();
        sig.constants.remove(c);
        Ok(sig)
    }

    pub fn union(&self, other: &Signature) -> Result<Signature> {
        let mut sig = self.clone();
        for (r, a) in other.relations() {
            match sig.relations.get(r) {
                Some(b) if *b != a => return Err(Error::SignatureConflict(r.to_string())),
                Some(_) => {}
                None => {
                    if sig.constants.contains(r) {
                        return Err(Error::SignatureConflict(r.to_string()));
                    }
                    sig.relations.insert(r.to_string(), a);
                }
            }
        }
        for c in other.constants() {
            if sig.relations.contains_key(c) {
                return Err(Error::SignatureConflict(c.to_string()));
            }
            sig.constants.insert(c.to_string());
        }
        match (&sig.guard, other.guard()) {
            (Some(a), Some(b)) if a != b => return Err(Error::SignatureConflict(b.to_string())),
            (None, Some(b)) => sig.guard = Some(b.to_string()),
            _ => {}
        }
        Ok(sig)
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "signature {{")?;
        for (r, a) in self.relations() {
            if Some(r) == self.guard() {
                write!(f, " guard {r};")?;
            } else {
                write!(f, " rel {r}/{a};")?;
            }
        }
        for c in self.constants() {
            write!(f, " const {c};")?;
        }
        write!(f, " }}")
    }
}

pub type Tuple = Vec<Elem>;

/// A structure: finite interpretation of a signature. `padding` holds extra
/// carrier elements outside the support, used when model checking over a
/// finite carrier.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Structure {
    sig: Signature,
    rels: BTreeMap<String, BTreeSet<Tuple>>,
    consts: BTreeMap<String, Elem>,
    padding: BTreeSet<Elem>,
}

pub struct StructureBuilder {
    sig: Signature,
    tuples: Vec<(String, Tuple)>,
    consts: Vec<(String, Elem)>,
    padding: Vec<Elem>,
}

impl StructureBuilder {
    pub fn tuple(mut self, rel: &str, t: &[Elem]) -> Self {
        self.tuples.push((rel.to_string(), t.to_vec()));
        self
    }

    pub fn tuples<'a>(mut self, rel: &str, ts: impl IntoIterator<Item = &'a [Elem]>) -> Self {
        for t in ts {
            self.tuples.push((rel.to_string(), t.to_vec()));
        }
        self
    }

    pub fn constant(mut self, c: &str, e: Elem) -> Self {
        self.consts.push((c.to_string(), e));
        self
    }

    pub fn padding(mut self, e: Elem) -> Self {
        self.padding.push(e);
        self
    }

    pub fn build(self) -> Result<Structure> {
        let mut rels: BTreeMap<String, BTreeSet<Tuple>> =
            self.sig.relations().map(|(r, _)| (r.to_string(), BTreeSet::new())).collect();
        for (r, t) in self.tuples {
            let arity = self.sig.arity(&r).ok_or_else(|| Error::UnknownRelation(r.clone()))?;
            if t.len() != arity {
                return Err(Error::ArityMismatch { symbol: r, expected: arity, found: t.len() });
            }
            for e in &t {
                e.reserve();
            }
            rels.get_mut(&r).unwrap().insert(t);
        }
        let mut consts = BTreeMap::new();
        for (c, e) in self.consts {
            if !self.sig.has_constant(&c) {
                return Err(Error::UnknownConstant(c));
            }
            e.reserve();
            consts.insert(c, e);
        }
        for c in self.sig.constants() {
            if !consts.contains_key(c) {
                return Err(Error::MissingConstant(c.to_string()));
            }
        }
        let mut s = Structure { sig: self.sig, rels, consts, padding: BTreeSet::new() };
        let dom = s.dom();
        for e in self.padding {
            e.reserve();
            if !dom.contains(&e) {
                s.padding.insert(e);
            }
        }
        Ok(s)
    }
}

impl Structure {
    pub fn builder(sig: &Signature) -> StructureBuilder {
        StructureBuilder { sig: sig.clone(), tuples: vec![], consts: vec![], padding: vec![] }
    }

    /// The structure with empty relations; fails if the signature has constants.
    pub fn empty(sig: &Signature) -> Result<Structure> {
        Structure::builder(sig).build()
    }

    pub fn signature(&self) -> &Signature {
        &self.sig
    }

    pub fn tuples(&self, rel: &str) -> &BTreeSet<Tuple> {
        static EMPTY: BTreeSet<Tuple> = BTreeSet::new();
        self.rels.get(rel).unwrap_or(&EMPTY)
    }

    pub fn relations(&self) -> impl Iterator<Item = (&str, &BTreeSet<Tuple>)> + '_ {
        self.rels.iter().map(|(r, ts)| (r.as_str(), ts))
    }

    /// All tuples in a fixed order: by relation name, then tuple.
    pub fn all_tuples(&self) -> Vec<(String, Tuple)> {
        self.rels
            .iter()
            .flat_map(|(r, ts)| ts.iter().map(move |t| (r.clone(), t.clone())))
            .collect()
    }

    pub fn tuple_count(&self) -> usize {
        self.rels.values().map(|ts| ts.len()).sum()
    }

    pub fn contains(&self, rel: &str, t: &[Elem]) -> bool {
        self.rels.get(rel).is_some_and(|ts| ts.contains(t))
    }

    pub fn constant(&self, c: &str) -> Option<Elem> {
        self.consts.get(c).copied()
    }

    pub fn constants(&self) -> impl Iterator<Item = (&str, Elem)> + '_ {
        self.consts.iter().map(|(c, e)| (c.as_str(), *e))
    }

    pub fn padding(&self) -> &BTreeSet<Elem> {
        &self.padding
    }

    /// Elements occurring in some tuple of any relation.
    pub fn rel_elements(&self) -> BTreeSet<Elem> {
        self.rels.values().flat_map(|ts| ts.iter().flatten().copied()).collect()
    }

    /// Elements occurring in some tuple of a relation other than the guard.
    pub fn sigma_elements(&self) -> BTreeSet<Elem> {
        let g = self.sig.guard();
        self.rels
            .iter()
            .filter(|(r, _)| Some(r.as_str()) != g)
            .flat_map(|(_, ts)| ts.iter().flatten().copied())
            .collect()
    }

    /// The support: related elements plus constant values.
    pub fn dom(&self) -> BTreeSet<Elem> {
        let mut d = self.rel_elements();
        d.extend(self.consts.values().copied());
        d
    }

    /// Support plus padding.
    pub fn carrier(&self) -> BTreeSet<Elem> {
        let mut c = self.dom();
        c.extend(self.padding.iter().copied());
        c
    }

    pub fn guard_set(&self) -> Result<BTreeSet<Elem>> {
        let g = self.sig.guard().ok_or(Error::MissingGuard)?;
        Ok(self.tuples(g).iter().map(|t| t[0]).collect())
    }

    /// Replaces the interpretation of `rel` (which must be declared).
    pub fn with_relation_tuples(&self, rel: &str, ts: BTreeSet<Tuple>) -> Result<Structure> {
        let arity = self.sig.arity(rel).ok_or_else(|| Error::UnknownRelation(rel.to_string()))?;
        if let Some(t) = ts.iter().find(|t| t.len() != arity) {
            return Err(Error::ArityMismatch { symbol: rel.to_string(), expected: arity, found: t.len() });
        }
        for e in ts.iter().flatten() {
            e.reserve();
        }
        let mut s = self.clone();
        s.rels.insert(rel.to_string(), ts);
        s.normalize_padding();
        Ok(s)
    }

    /// Adds a constant symbol (or rebinds an existing one).
    pub fn with_constant(&self, c: &str, e: Elem) -> Result<Structure> {
        let mut s = self.clone();
        if !s.sig.has_constant(c) {
            s.sig = s.sig.with_constant(c)?;
        }
        e.reserve();
        s.consts.insert(c.to_string(), e);
        s.normalize_padding();
        Ok(s)
    }

    /// Extends the signature; new relations start out empty.
    pub fn extend_signature(&self, sig: &Signature) -> Result<Structure> {
        let mut s = self.clone();
        s.sig = self.sig.union(sig)?;
        for c in s.sig.constants() {
            if !s.consts.contains_key(c) {
                return Err(Error::MissingConstant(c.to_string()));
            }
        }
        for (r, _) in sig.relations() {
            s.rels.entry(r.to_string()).or_default();
        }
        Ok(s)
    }

    /// The sub-structure keeping only the listed tuples (constants kept).
    pub fn restrict_tuples(&self, keep: &[(String, Tuple)]) -> Structure {
        let mut s = self.clone();
        for ts in s.rels.values_mut() {
            ts.clear();
        }
        for (r, t) in keep {
            if let Some(ts) = s.rels.get_mut(r) {
                ts.insert(t.clone());
            }
        }
        s.padding.clear();
        s
    }

    /// Applies an element renaming; elements missing from `map` are kept.
    pub fn rename(&self, map: &HashMap<Elem, Elem>) -> Structure {
        let f = |e: &Elem| *map.get(e).unwrap_or(e);
        let rels = self
            .rels
            .iter()
            .map(|(r, ts)| (r.clone(), ts.iter().map(|t| t.iter().map(f).collect()).collect()))
            .collect();
        let consts = self.consts.iter().map(|(c, e)| (c.clone(), f(e))).collect();
        let mut s = Structure { sig: self.sig.clone(), rels, consts, padding: self.padding.iter().map(f).collect() };
        for e in s.carrier() {
            e.reserve();
        }
        s.normalize_padding();
        s
    }

    fn normalize_padding(&mut self) {
        let dom = self.dom();
        self.padding.retain(|e| !dom.contains(e));
    }

    /// Spatial composition of two compatible, locally disjoint structures.
    pub fn compose(&self, other: &Structure) -> Result<Structure> {
        if self.sig != other.sig {
            return Err(Error::SignatureMismatch);
        }
        for (c, e) in &self.consts {
            if other.consts.get(c) != Some(e) {
                return Err(Error::NotCompatible(c.clone()));
            }
        }
        let mut s = self.clone();
        for (r, ts) in &other.rels {
            let mine = s.rels.get_mut(r).unwrap();
            if !mine.is_disjoint(ts) {
                return Err(Error::NotLocallyDisjoint(r.clone()));
            }
            mine.extend(ts.iter().cloned());
        }
        s.padding.extend(other.padding.iter().copied());
        s.normalize_padding();
        Ok(s)
    }

    /// Disjoint union followed by fusion of the elements named by shared
    /// constants. Each fusion class collapses to its least ID.
    pub fn glue(&self, other: &Structure) -> Result<Structure> {
        let sig = self.sig.union(&other.sig)?;
        let ren: HashMap<Elem, Elem> = other.carrier().into_iter().map(|e| (e, Elem::fresh())).collect();
        let other = other.rename(&ren);

        let mut parent: HashMap<Elem, Elem> = HashMap::new();
        fn find(parent: &mut HashMap<Elem, Elem>, e: Elem) -> Elem {
            let p = *parent.get(&e).unwrap_or(&e);
            if p == e {
                return e;
            }
            let r = find(parent, p);
            parent.insert(e, r);
            r
        }
        for (c, e2) in other.constants() {
            if let Some(e1) = self.constant(c) {
                let (a, b) = (find(&mut parent, e1), find(&mut parent, e2));
                if a != b {
                    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                    parent.insert(hi, lo);
                }
            }
        }
        let mut fuse = HashMap::new();
        for e in self.carrier().into_iter().chain(other.carrier()) {
            let r = find(&mut parent, e);
            if r != e {
                fuse.insert(e, r);
            }
        }
        let a = self.rename(&fuse);
        let b = other.rename(&fuse);
        let mut rels: BTreeMap<String, BTreeSet<Tuple>> =
            sig.relations().map(|(r, _)| (r.to_string(), BTreeSet::new())).collect();
        for s in [&a, &b] {
            for (r, ts) in &s.rels {
                rels.get_mut(r).unwrap().extend(ts.iter().cloned());
            }
        }
        let mut consts = a.consts.clone();
        for (c, e) in &b.consts {
            consts.entry(c.clone()).or_insert(*e);
        }
        let mut padding = a.padding.clone();
        padding.extend(b.padding.iter().copied());
        let mut s = Structure { sig, rels, consts, padding };
        s.normalize_padding();
        Ok(s)
    }

    /// Drops a constant from the signature.
    pub fn forget(&self, c: &str) -> Result<Structure> {
        let sig = self.sig.without_constant(c)?;
        let mut s = self.clone();
        s.sig = sig;
        s.consts.remove(c);
        Ok(s)
    }

    /// Adds port constants `p1..p(k+1)` naming `nu(x1)..nu(x(k+1))` and puts
    /// those values in the guard relation.
    pub fn encode(&self, nu: &Store, k: usize) -> Result<Structure> {
        let g = self.sig.guard().ok_or(Error::MissingGuard)?.to_string();
        let guard = self.guard_set()?;
        let mut s = self.clone();
        let mut ts = self.tuples(&g).clone();
        for i in 1..=k + 1 {
            let x = format!("x{i}");
            let v = nu.get(&x).ok_or(Error::UnboundVariable(x))?;
            if guard.contains(&v) {
                return Err(Error::PortClash(v));
            }
            let p = port_name(i);
            if s.sig.has_constant(&p) || s.sig.has_relation(&p) {
                return Err(Error::DuplicateSymbol(p));
            }
            s.sig = s.sig.with_constant(&p)?;
            s.consts.insert(p, v);
            ts.insert(vec![v]);
        }
        s.rels.insert(g, ts);
        s.normalize_padding();
        Ok(s)
    }

    /// Adds `n` fresh carrier elements outside the support.
    pub fn pad(&self, n: usize) -> Structure {
        let mut s = self.clone();
        for _ in 0..n {
            s.padding.insert(Elem::fresh());
        }
        s
    }

    /// Drops all padding.
    pub fn unpadded(&self) -> Structure {
        let mut s = self.clone();
        s.padding.clear();
        s
    }

    /// True iff the elements of non-guard tuples are exactly the guard set.
    pub fn is_guarded(&self) -> Result<bool> {
        Ok(self.sigma_elements() == self.guard_set()?)
    }

    /// Encodes a directed graph over the signature `{V/1, E/2}`.
    pub fn encode_graph(vertices: &[Elem], edges: &[(Elem, Elem)]) -> Result<Structure> {
        let sig = graph_signature();
        let vs: BTreeSet<Elem> = vertices.iter().copied().collect();
        let mut b = Structure::builder(&sig);
        for v in &vs {
            b = b.tuple(VERTEX, &[*v]);
        }
        for (u, v) in edges {
            for e in [u, v] {
                if !vs.contains(e) {
                    return Err(Error::DanglingEdge(*e));
                }
            }
            b = b.tuple(EDGE, &[*u, *v]);
        }
        b.build()
    }

    pub fn isomorphic(&self, other: &Structure) -> Result<bool> {
        self.isomorphic_within(other, 10)
    }

    /// Brute-force isomorphism test over supports of at most `bound` elements.
    /// Padding is ignored.
    pub fn isomorphic_within(&self, other: &Structure, bound: usize) -> Result<bool> {
        if self.sig != other.sig {
            return Ok(false);
        }
        let (d1, d2) = (self.dom(), other.dom());
        for d in [&d1, &d2] {
            if d.len() > bound {
                return Err(Error::SupportTooLarge { size: d.len(), bound });
            }
        }
        if d1.len() != d2.len() {
            return Ok(false);
        }
        for (r, ts) in &self.rels {
            if other.tuples(r).len() != ts.len() {
                return Ok(false);
            }
        }
        let p1 = self.profiles();
        let p2 = other.profiles();
        let mut map: HashMap<Elem, Elem> = HashMap::new();
        let mut used: BTreeSet<Elem> = BTreeSet::new();
        for (c, e1) in &self.consts {
            let e2 = other.consts[c];
            match map.get(e1) {
                Some(x) if *x != e2 => return Ok(false),
                Some(_) => {}
                None => {
                    if used.contains(&e2) {
                        return Ok(false);
                    }
                    map.insert(*e1, e2);
                    used.insert(e2);
                }
            }
        }
        for (a, b) in &map {
            if p1[a] != p2[b] {
                return Ok(false);
            }
        }
        let rest: Vec<Elem> = d1.iter().copied().filter(|e| !map.contains_key(e)).collect();
        let targets: Vec<Elem> = d2.iter().copied().collect();
        if !self.partial_ok(other, &map) {
            return Ok(false);
        }
        Ok(self.iso_search(other, &rest, 0, &targets, &p1, &p2, &mut map, &mut used))
    }

    fn profiles(&self) -> HashMap<Elem, Vec<(String, usize, usize)>> {
        let mut counts: HashMap<Elem, BTreeMap<(String, usize), usize>> = HashMap::new();
        for e in self.dom() {
            counts.entry(e).or_default();
        }
        for (r, ts) in &self.rels {
            for t in ts {
                for (i, e) in t.iter().enumerate() {
                    *counts.get_mut(e).unwrap().entry((r.clone(), i)).or_default() += 1;
                }
            }
        }
        for (c, e) in &self.consts {
            *counts.get_mut(e).unwrap().entry((format!("={c}"), 0)).or_default() += 1;
        }
        counts
            .into_iter()
            .map(|(e, m)| (e, m.into_iter().map(|((r, i), n)| (r, i, n)).collect()))
            .collect()
    }

    fn partial_ok(&self, other: &Structure, map: &HashMap<Elem, Elem>) -> bool {
        for (r, ts) in &self.rels {
            for t in ts {
                let img: Option<Tuple> = t.iter().map(|e| map.get(e).copied()).collect();
                if let Some(img) = img {
                    if !other.contains(r, &img) {
                        return false;
                    }
                }
            }
        }
        true
    }

    #[allow(clippy::too_many_arguments)]
    fn iso_search(
        &self,
        other: &Structure,
        rest: &[Elem],
        i: usize,
        targets: &[Elem],
        p1: &HashMap<Elem, Vec<(String, usize, usize)>>,
        p2: &HashMap<Elem, Vec<(String, usize, usize)>>,
        map: &mut HashMap<Elem, Elem>,
        used: &mut BTreeSet<Elem>,
    ) -> bool {
        if i == rest.len() {
            return true;
        }
        let e = rest[i];
        for &t in targets {
            if used.contains(&t) || p1[&e] != p2[&t] {
                continue;
            }
            map.insert(e, t);
            used.insert(t);
            if self.partial_ok(other, map) && self.iso_search(other, rest, i + 1, targets, p1, p2, map, used) {
                return true;
            }
            map.remove(&e);
            used.remove(&t);
        }
        false
    }
}

pub fn graph_signature() -> Signature {
    Signature::new().with_relation(VERTEX, 1).unwrap().with_relation(EDGE, 2).unwrap()
}

/// First- and second-order variable bindings.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Store {
    pub fo: BTreeMap<String, Elem>,
    pub so: BTreeMap<String, SoValue>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoValue {
    pub arity: usize,
    pub tuples: BTreeSet<Tuple>,
}

impl Store {
    pub fn new() -> Store {
        Store::default()
    }

    pub fn bind(mut self, x: &str, e: Elem) -> Store {
        self.fo.insert(x.to_string(), e);
        self
    }

    pub fn bind_so(mut self, x: &str, arity: usize, tuples: BTreeSet<Tuple>) -> Result<Store> {
        if let Some(t) = tuples.iter().find(|t| t.len() != arity) {
            return Err(Error::ArityMismatch { symbol: x.to_string(), expected: arity, found: t.len() });
        }
        self.so.insert(x.to_string(), SoValue { arity, tuples });
        Ok(self)
    }

    pub fn get(&self, x: &str) -> Option<Elem> {
        self.fo.get(x).copied()
    }

    pub fn get_so(&self, x: &str) -> Option<&SoValue> {
        self.so.get(x)
    }

    /// Values of all first-order bindings.
    pub fn image(&self) -> BTreeSet<Elem> {
        self.fo.values().copied().collect()
    }
}
