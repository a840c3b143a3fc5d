//! Named example SIDs and formulas with closed-form expected verdicts, and
//! exhaustive enumeration of small structures up to isomorphism.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::slr::{check_slr, parse_sid, parse_slr, Sid, Slr};
use crate::so::{check_so, parse_so, So};
use crate::structure::{Elem, Signature, Store, Structure, EDGE, VERTEX};

pub const EVEN_SID: &str = include_str!("../gallery/even.sid");
pub const LS_SID: &str = include_str!("../gallery/ls.sid");
pub const RLS_SID: &str = include_str!("../gallery/rls.sid");
pub const STAR_SID: &str = include_str!("../gallery/star.sid");
pub const FOLD_LS_SID: &str = include_str!("../gallery/fold_ls.sid");
pub const CLIQUE_SO: &str = include_str!("../gallery/clique.so");
pub const GUARDED_SO: &str = include_str!("../gallery/guarded.so");

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Slr,
    So,
}

#[derive(Clone, Debug)]
pub struct GalleryEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub kind: Kind,
    /// SID text, or formula text for `Kind::So`.
    pub source: &'static str,
    /// Query atom for SID entries.
    pub query: &'static str,
    pub signature: Signature,
    /// Default enumeration bounds (support, tuples).
    pub bounds: (usize, usize),
}

fn sig(rels: &[(&str, usize)]) -> Signature {
    rels.iter().fold(Signature::new(), |s, (r, a)| s.with_relation(r, *a).unwrap())
}

pub fn entries() -> Vec<GalleryEntry> {
    vec![
        GalleryEntry {
            name: "even",
            description: "R holds an even number of elements",
            kind: Kind::Slr,
            source: EVEN_SID,
            query: "A()",
            signature: sig(&[("R", 1)]),
            bounds: (6, 6),
        },
        GalleryEntry {
            name: "ls",
            description: "list segments: H is traversed from x to y using each edge once",
            kind: Kind::Slr,
            source: LS_SID,
            query: "ls(x,y)",
            signature: sig(&[("H", 2)]),
            bounds: (4, 4),
        },
        GalleryEntry {
            name: "rls",
            description: "list segments with pairwise distinct cells recorded in D",
            kind: Kind::Slr,
            source: RLS_SID,
            query: "rls(x,y)",
            signature: sig(&[("D", 1), ("H", 2)]),
            bounds: (4, 4),
        },
        GalleryEntry {
            name: "star",
            description: "stars: E edges from a centre to distinct N-labelled frontier vertices",
            kind: Kind::Slr,
            source: STAR_SID,
            query: "star(x)",
            signature: sig(&[("E", 2), ("N", 1)]),
            bounds: (4, 5),
        },
        GalleryEntry {
            name: "fold_ls",
            description: "H is traversed by a walk from x using each edge once",
            kind: Kind::Slr,
            source: FOLD_LS_SID,
            query: "fold_ls(x)",
            signature: sig(&[("H", 2)]),
            bounds: (4, 4),
        },
        GalleryEntry {
            name: "clique",
            description: "graph encodings that are cliques",
            kind: Kind::So,
            source: CLIQUE_SO,
            query: "",
            signature: sig(&[(VERTEX, 1), (EDGE, 2)]),
            bounds: (5, 10),
        },
        GalleryEntry {
            name: "guarded",
            description: "E elements coincide with D elements",
            kind: Kind::So,
            source: GUARDED_SO,
            query: "",
            signature: sig(&[("D", 1), ("E", 2)]),
            bounds: (4, 4),
        },
    ]
}

pub fn entry(name: &str) -> Option<GalleryEntry> {
    entries().into_iter().find(|e| e.name == name)
}

impl GalleryEntry {
    pub fn sid(&self) -> Result<Sid> {
        match self.kind {
            Kind::Slr => parse_sid(self.source),
            Kind::So => Ok(Sid::new()),
        }
    }

    pub fn query_formula(&self) -> Result<Slr> {
        parse_slr(self.query, &self.sid()?, &self.signature)
    }

    pub fn formula(&self) -> Result<So> {
        parse_so(self.source, &self.signature)
    }

    /// Free variables of the query, in order.
    pub fn query_vars(&self) -> Result<Vec<String>> {
        Ok(match self.kind {
            Kind::Slr => self.query_formula()?.free_vars().into_iter().collect(),
            Kind::So => vec![],
        })
    }

    /// The engine's verdict.
    pub fn check(&self, s: &Structure, nu: &Store) -> Result<bool> {
        match self.kind {
            Kind::Slr => Ok(check_slr(s, nu, &self.query_formula()?, &self.sid()?)?.is_some()),
            Kind::So => check_so(s, nu, &self.formula()?, None),
        }
    }
}

/// The SO sentence defining the guarded structures over `sig`: the elements
/// of the non-guard tuples are exactly the guard's elements.
pub fn guarded_formula(sig: &Signature) -> Result<So> {
    let g = sig.guard().ok_or(Error::MissingGuard)?;
    let mut inside = vec![];
    let mut occurs = vec![];
    for (r, a) in sig.sigma_relations() {
        let ys: Vec<String> = (1..=a).map(|i| format!("y{i}")).collect();
        let guards: Vec<String> = ys.iter().map(|y| format!("{g}({y})")).collect();
        inside.push(format!("(all {} . {r}({}) -> {})", ys.join(", "), ys.join(","), guards.join(" & ")));
        for i in 0..a {
            let others: Vec<&String> = ys.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, y)| y).collect();
            let args: Vec<&str> = (0..a).map(|j| if j == i { "x" } else { ys[j].as_str() }).collect();
            let atom = format!("{r}({})", args.join(","));
            occurs.push(if others.is_empty() {
                atom
            } else {
                let names: Vec<&str> = others.iter().map(|y| y.as_str()).collect();
                format!("(ex {} . {atom})", names.join(", "))
            });
        }
    }
    if occurs.is_empty() {
        occurs.push("false".into());
    }
    inside.push(format!("(all x . {g}(x) -> {})", occurs.join(" | ")));
    parse_so(&inside.join(" & "), sig)
}

/// The closed-form verdict of an entry on `s` under `nu`.
pub fn expected_verdict(entry: &GalleryEntry, s: &Structure, nu: &Store) -> bool {
    let var = |x: &str| nu.get(x).expect("query variable bound");
    let tuples = |r: &str| -> Vec<Vec<Elem>> { s.tuples(r).iter().cloned().collect() };
    let edges = |r: &str| -> Vec<(Elem, Elem)> { tuples(r).into_iter().map(|t| (t[0], t[1])).collect() };
    match entry.name {
        "even" => s.tuples("R").len() % 2 == 0,
        "ls" => euler_trail(&edges("H"), var("x"), Some(var("y"))),
        "fold_ls" => euler_trail(&edges("H"), var("x"), None),
        "rls" => {
            let h = edges("H");
            let (x, y) = (var("x"), var("y"));
            let next: BTreeMap<Elem, Vec<Elem>> = h.iter().fold(BTreeMap::new(), |mut m, (a, b)| {
                m.entry(*a).or_insert_with(Vec::new).push(*b);
                m
            });
            let mut visited = BTreeSet::new();
            let mut c = x;
            for _ in 0..h.len() {
                match next.get(&c) {
                    Some(v) if v.len() == 1 && visited.insert(c) => c = v[0],
                    _ => return false,
                }
            }
            let d: BTreeSet<Elem> = tuples("D").into_iter().map(|t| t[0]).collect();
            c == y && d == visited
        }
        "star" => {
            let x = var("x");
            let e = edges("E");
            let n: BTreeSet<Elem> = tuples("N").into_iter().map(|t| t[0]).collect();
            let mut want: BTreeSet<Elem> = e.iter().map(|(_, b)| *b).collect();
            let ok = e.iter().all(|(a, b)| *a == x && *b != x);
            want.insert(x);
            ok && n == want
        }
        "clique" => {
            let vs: Vec<Elem> = tuples(VERTEX).into_iter().map(|t| t[0]).collect();
            vs.iter().all(|&a| vs.iter().all(|&b| a == b || s.contains(EDGE, &[a, b]) || s.contains(EDGE, &[b, a])))
        }
        "guarded" => {
            let d: BTreeSet<Elem> = tuples("D").into_iter().map(|t| t[0]).collect();
            let e: BTreeSet<Elem> = tuples("E").into_iter().flatten().collect();
            d == e
        }
        _ => false,
    }
}

/// Whether the edge set can be traversed by a walk from `from` (ending at
/// `to` if given) that uses every edge exactly once.
fn euler_trail(edges: &[(Elem, Elem)], from: Elem, to: Option<Elem>) -> bool {
    if edges.is_empty() {
        return to.is_none_or(|t| t == from);
    }
    let mut balance: BTreeMap<Elem, i64> = BTreeMap::new();
    for (a, b) in edges {
        *balance.entry(*a).or_default() += 1;
        *balance.entry(*b).or_default() -= 1;
    }
    // Every edge must be weakly connected to `from`.
    let mut seen = BTreeSet::from([from]);
    loop {
        let before = seen.len();
        for (a, b) in edges {
            if seen.contains(a) || seen.contains(b) {
                seen.insert(*a);
                seen.insert(*b);
            }
        }
        if seen.len() == before {
            break;
        }
    }
    if edges.iter().any(|(a, _)| !seen.contains(a)) || !edges.iter().any(|(a, _)| *a == from) {
        return false;
    }
    let ends = |t: Elem| balance.iter().all(|(v, d)| *d == i64::from(*v == from) - i64::from(*v == t));
    match to {
        Some(t) => ends(t),
        None => balance.keys().any(|&t| ends(t)) || ends(from),
    }
}

/// Hard cap on the number of candidate structures visited by
/// [`enumerate_structures`].
const ENUM_BUDGET: u128 = 20_000_000;

type Code = (Vec<(usize, Vec<u8>)>, Vec<u8>);

fn permutations(m: usize) -> Vec<Vec<u8>> {
    let mut out = vec![];
    let mut cur: Vec<u8> = (0..m as u8).collect();
    fn go(k: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if k == cur.len() {
            out.push(cur.clone());
            return;
        }
        for i in k..cur.len() {
            cur.swap(k, i);
            go(k + 1, cur, out);
            cur.swap(k, i);
        }
    }
    go(0, &mut cur, &mut out);
    out
}

fn canonical(tuples: &[(usize, Vec<u8>)], consts: &[u8], perms: &[Vec<u8>]) -> Code {
    let mut best: Option<Code> = None;
    for p in perms {
        let mut ts: Vec<(usize, Vec<u8>)> =
            tuples.iter().map(|(r, t)| (*r, t.iter().map(|&e| p[e as usize]).collect())).collect();
        ts.sort();
        let cs: Vec<u8> = consts.iter().map(|&e| p[e as usize]).collect();
        let code = (ts, cs);
        if best.as_ref().is_none_or(|b| code < *b) {
            best = Some(code);
        }
    }
    best.unwrap()
}

fn binomial_sum(n: usize, k: usize) -> u128 {
    let mut total = 0u128;
    let mut c = 1u128;
    for i in 0..=k.min(n) {
        total += c;
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    total
}

/// All structures over `sig` with support of at most `max_support`
/// elements and at most `max_tuples` tuples, one per isomorphism class,
/// ordered by support size and then by canonical form. Elements are
/// `Elem(1)..=Elem(m)`. If the signature has a guard, guard tuples are not
/// enumerated: each structure gets the guard holding exactly the elements of
/// its other tuples (so every result is guarded) and they do not count
/// towards `max_tuples`.
pub fn enumerate_structures(sig: &Signature, max_support: usize, max_tuples: usize) -> Result<Vec<Structure>> {
    let rels: Vec<(String, usize)> = sig.sigma_relations().map(|(r, a)| (r.to_string(), a)).collect();
    let consts: Vec<String> = sig.constants().map(str::to_string).collect();
    let cand_count = |m: usize| rels.iter().map(|(_, a)| m.pow(*a as u32)).sum::<usize>();
    let mut work = 0u128;
    for m in 0..=max_support {
        work += binomial_sum(cand_count(m), max_tuples) * (m as u128).pow(consts.len() as u32);
        if m > 8 || work > ENUM_BUDGET {
            return Err(Error::BoundsTooLarge(format!("support {m} with {} candidate tuples", cand_count(m))));
        }
    }
    let mut out = vec![];
    for m in 0..=max_support {
        let cands: Vec<(usize, Vec<u8>)> = rels
            .iter()
            .enumerate()
            .flat_map(|(ri, (_, a))| {
                crate::compile::functions(*a, m).into_iter().map(move |f| (ri, f.into_iter().map(|x| x as u8).collect()))
            })
            .collect();
        let const_maps = crate::compile::functions(consts.len(), m);
        let perms = permutations(m);
        let mut seen: BTreeSet<Code> = BTreeSet::new();
        let mut chosen: Vec<usize> = vec![];
        fn subsets(n: usize, k: usize, start: usize, chosen: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
            f(chosen);
            if chosen.len() == k {
                return;
            }
            for i in start..n {
                chosen.push(i);
                subsets(n, k, i + 1, chosen, f);
                chosen.pop();
            }
        }
        let mut visit = |set: &[usize]| {
            let ts: Vec<(usize, Vec<u8>)> = set.iter().map(|&i| cands[i].clone()).collect();
            for cm in &const_maps {
                let cm: Vec<u8> = cm.iter().map(|&x| x as u8).collect();
                let mut used = 0u32;
                for (_, t) in &ts {
                    for &e in t {
                        used |= 1 << e;
                    }
                }
                for &e in &cm {
                    used |= 1 << e;
                }
                if used.count_ones() as usize != m {
                    continue;
                }
                seen.insert(canonical(&ts, &cm, &perms));
            }
        };
        subsets(cands.len(), max_tuples, 0, &mut chosen, &mut visit);
        for (ts, cs) in seen {
            let el = |e: u8| Elem(e as u64 + 1);
            let mut b = Structure::builder(sig);
            for (ri, t) in &ts {
                b = b.tuple(&rels[ri.to_owned()].0, &t.iter().map(|&e| el(e)).collect::<Vec<_>>());
            }
            if let Some(g) = sig.guard() {
                let elems: BTreeSet<u8> = ts.iter().flat_map(|(_, t)| t.iter().copied()).collect();
                for e in elems {
                    b = b.tuple(g, &[el(e)]);
                }
            }
            for (c, &e) in consts.iter().zip(&cs) {
                b = b.constant(c, el(e));
            }
            out.push(b.build()?);
        }
    }
    Ok(out)
}

/// All undirected simple graphs on at most `max_vertices` vertices, one per
/// isomorphism class, encoded with both orientations of every edge.
pub fn enumerate_graphs(max_vertices: usize) -> Result<Vec<Structure>> {
    if max_vertices > 7 {
        return Err(Error::BoundsTooLarge(format!("{max_vertices} vertices")));
    }
    let mut out = vec![];
    for n in 0..=max_vertices {
        let pairs: Vec<(u8, u8)> = (0..n as u8).flat_map(|a| (a + 1..n as u8).map(move |b| (a, b))).collect();
        let perms = permutations(n);
        let mut seen: BTreeSet<Vec<(u8, u8)>> = BTreeSet::new();
        for mask in 0u32..(1 << pairs.len()) {
            let es: Vec<(u8, u8)> = (0..pairs.len()).filter(|i| mask >> i & 1 == 1).map(|i| pairs[i]).collect();
            let best = perms
                .iter()
                .map(|p| {
                    let mut v: Vec<(u8, u8)> = es
                        .iter()
                        .map(|&(a, b)| {
                            let (x, y) = (p[a as usize], p[b as usize]);
                            (x.min(y), x.max(y))
                        })
                        .collect();
                    v.sort();
                    v
                })
                .min()
                .unwrap();
            seen.insert(best);
        }
        for es in seen {
            let vs: Vec<Elem> = (1..=n as u64).map(Elem).collect();
            let edges: Vec<(Elem, Elem)> = es
                .iter()
                .flat_map(|&(a, b)| {
                    let (x, y) = (Elem(a as u64 + 1), Elem(b as u64 + 1));
                    [(x, y), (y, x)]
                })
                .collect();
            out.push(Structure::encode_graph(&vs, &edges)?);
        }
    }
    Ok(out)
}

/// All stores for `vars` over the support of `s` plus one element outside
/// it.
pub fn stores(s: &Structure, vars: &[String]) -> Vec<Store> {
    let mut vals: Vec<Elem> = s.dom().into_iter().collect();
    vals.push(Elem(vals.iter().map(|e| e.0).max().unwrap_or(0) + 1));
    let mut out = vec![Store::new()];
    for x in vars {
        out = out.into_iter().flat_map(|nu| vals.iter().map(move |&e| nu.clone().bind(x, e))).collect();
    }
    out
}

#[derive(Clone, Debug)]
pub struct SweepCase {
    pub structure: Structure,
    pub store: Store,
    pub expected: bool,
    pub actual: bool,
}

/// Runs an entry over every enumerated structure within `bounds` (or the
/// entry's defaults) and every store over the support plus one outside
/// element.
pub fn sweep(entry: &GalleryEntry, bounds: Option<(usize, usize)>) -> Result<Vec<SweepCase>> {
    let (sup, tup) = bounds.unwrap_or(entry.bounds);
    let vars = entry.query_vars()?;
    let mut out = vec![];
    let structs = if entry.name == "clique" {
        enumerate_graphs(sup)?
    } else {
        enumerate_structures(&entry.signature, sup, tup)?
    };
    for s in structs {
        for nu in stores(&s, &vars) {
            let actual = entry.check(&s, &nu)?;
            let expected = expected_verdict(entry, &s, &nu);
            out.push(SweepCase { structure: s.clone(), store: nu, expected, actual });
        }
    }
    Ok(out)
}
