//! Tree decompositions: verification, exact treewidth, reduction to the
//! normal form used by the treewidth SID, and conversion between such
//! decompositions and derivations of that SID.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::compile::{gen_tw_sid, tw_top, TW_PRED};
use crate::error::{Error, Result};
use crate::slr::{DerivNode, Derivation, Sid, Slr, Term};
use crate::structure::{Elem, Store, Structure, Tuple, GUARD};

/// Largest support handled by [`exact_treewidth`].
pub const EXACT_BOUND: usize = 12;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TdNode {
    pub parent: Option<usize>,
    /// Sorted, without duplicates.
    pub bag: Vec<Elem>,
}

/// A rooted tree labelled with element sets. `witness` maps relation tuples
/// to the leaves witnessing them (filled in for reduced decompositions);
/// `padding` lists the elements minted to fill bags up to size `k+1`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TreeDecomposition {
    pub nodes: Vec<TdNode>,
    pub witness: BTreeMap<(String, Tuple), usize>,
    pub padding: BTreeSet<Elem>,
}

impl TreeDecomposition {
    pub fn single(bag: impl IntoIterator<Item = Elem>) -> TreeDecomposition {
        TreeDecomposition { nodes: vec![TdNode { parent: None, bag: sorted(bag) }], ..Default::default() }
    }

    /// Builds a decomposition from `(parent, bag)` pairs.
    pub fn from_nodes(nodes: Vec<(Option<usize>, Vec<Elem>)>) -> TreeDecomposition {
        let nodes = nodes.into_iter().map(|(parent, bag)| TdNode { parent, bag: sorted(bag) }).collect();
        TreeDecomposition { nodes, ..Default::default() }
    }

    pub fn root(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.parent.is_none())
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![vec![]; self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            if let Some(p) = n.parent {
                if p < ch.len() {
                    ch[p].push(i);
                }
            }
        }
        ch
    }

    /// Largest bag size minus one; -1 when all bags are empty.
    pub fn width(&self) -> i64 {
        self.nodes.iter().map(|n| n.bag.len() as i64).max().unwrap_or(0) - 1
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "nodes": self.nodes.iter().map(|n| serde_json::json!({
                "parent": n.parent,
                "bag": n.bag.iter().map(|e| e.0).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
            "witness": self.witness.iter().map(|((r, t), leaf)| serde_json::json!({
                "rel": r,
                "tuple": t.iter().map(|e| e.0).collect::<Vec<_>>(),
                "leaf": leaf,
            })).collect::<Vec<_>>(),
            "padding": self.padding.iter().map(|e| e.0).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<TreeDecomposition> {
        let bad = |m: &str| Error::Invalid(format!("decomposition JSON: {m}"));
        let elems = |v: &serde_json::Value| -> Result<Vec<Elem>> {
            v.as_array()
                .ok_or_else(|| bad("expected an array of element ids"))?
                .iter()
                .map(|x| x.as_u64().map(Elem).ok_or_else(|| bad("element ids are integers")))
                .collect()
        };
        let mut td = TreeDecomposition::default();
        for n in v["nodes"].as_array().ok_or_else(|| bad("missing `nodes`"))? {
            let parent = match &n["parent"] {
                serde_json::Value::Null => None,
                p => Some(p.as_u64().ok_or_else(|| bad("parent is an index or null"))? as usize),
            };
            td.nodes.push(TdNode { parent, bag: sorted(elems(&n["bag"])?) });
        }
        if let Some(ws) = v.get("witness").and_then(|w| w.as_array()) {
            for w in ws {
                let r = w["rel"].as_str().ok_or_else(|| bad("witness needs `rel`"))?.to_string();
                let leaf = w["leaf"].as_u64().ok_or_else(|| bad("witness needs `leaf`"))? as usize;
                td.witness.insert((r, elems(&w["tuple"])?), leaf);
            }
        }
        if let Some(p) = v.get("padding") {
            td.padding = elems(p)?.into_iter().collect();
        }
        for e in td.nodes.iter().flat_map(|n| n.bag.iter()) {
            e.reserve();
        }
        Ok(td)
    }

    /// An indented drawing of the tree, one node per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let Some(root) = self.root() else {
            return out;
        };
        let ch = self.children();
        let mut wit: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for ((r, t), leaf) in &self.witness {
            let args: Vec<String> = t.iter().map(|e| e.to_string()).collect();
            wit.entry(*leaf).or_default().push(format!("{r}({})", args.join(",")));
        }
        fn go(
            td: &TreeDecomposition,
            ch: &[Vec<usize>],
            wit: &BTreeMap<usize, Vec<String>>,
            n: usize,
            prefix: &str,
            tail: Option<bool>,
            out: &mut String,
        ) {
            let bag: Vec<String> = td.nodes[n].bag.iter().map(|e| e.to_string()).collect();
            let branch = match tail {
                None => "",
                Some(true) => "└─ ",
                Some(false) => "├─ ",
            };
            out.push_str(&format!("{prefix}{branch}{n} {{{}}}", bag.join(", ")));
            if let Some(w) = wit.get(&n) {
                out.push_str(&format!("  [{}]", w.join(" ")));
            }
            out.push('\n');
            let inner = match tail {
                None => prefix.to_string(),
                Some(true) => format!("{prefix}   "),
                Some(false) => format!("{prefix}│  "),
            };
            for (i, &c) in ch[n].iter().enumerate() {
                go(td, ch, wit, c, &inner, Some(i + 1 == ch[n].len()), out);
            }
        }
        go(self, &ch, &wit, root, "", None, &mut out);
        out
    }
}

fn sorted(bag: impl IntoIterator<Item = Elem>) -> Vec<Elem> {
    let set: BTreeSet<Elem> = bag.into_iter().collect();
    set.into_iter().collect()
}

/// The first violated condition found by a verifier.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// The node/parent structure is not a rooted tree.
    Malformed(String),
    /// Some tuple's elements are not contained in a single bag.
    UncoveredTuple { rel: String, tuple: Tuple },
    /// A support element occurs in no bag.
    MissingElement(Elem),
    /// The nodes whose bags contain the element are not connected.
    Disconnected(Elem),
    /// A tuple has no witness leaf containing its elements.
    MissingWitness { rel: String, tuple: Tuple },
    /// A leaf witnesses a number of tuples other than one.
    LeafWitnesses { node: usize, count: usize },
    TooManyChildren { node: usize, count: usize },
    /// A binary node's label differs from one of its children's labels.
    BinaryLabels { node: usize },
    BagSize { node: usize, size: usize, expected: usize },
    /// A unary node and its child differ by more than one element each way.
    UnaryStep { node: usize },
}

impl Violation {
    /// Short name of the violated condition.
    pub fn condition(&self) -> &'static str {
        match self {
            Violation::Malformed(_) => "tree",
            Violation::UncoveredTuple { .. } => "tuple-coverage",
            Violation::MissingElement(_) | Violation::Disconnected(_) => "element-connectivity",
            Violation::MissingWitness { .. } => "witness-leaf",
            Violation::LeafWitnesses { .. } => "one-tuple-per-leaf",
            Violation::TooManyChildren { .. } => "at-most-two-children",
            Violation::BinaryLabels { .. } => "binary-equal-labels",
            Violation::BagSize { .. } => "bag-size",
            Violation::UnaryStep { .. } => "unary-step",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "condition": self.condition(), "detail": self.to_string() })
    }
}

fn show_tuple(rel: &str, t: &[Elem]) -> String {
    let args: Vec<String> = t.iter().map(|e| e.to_string()).collect();
    format!("{rel}({})", args.join(","))
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Malformed(m) => write!(f, "not a rooted tree: {m}"),
            Violation::UncoveredTuple { rel, tuple } => write!(f, "no bag contains {}", show_tuple(rel, tuple)),
            Violation::MissingElement(e) => write!(f, "element {e} occurs in no bag"),
            Violation::Disconnected(e) => write!(f, "bags containing element {e} are not connected"),
            Violation::MissingWitness { rel, tuple } => write!(f, "no witness leaf for {}", show_tuple(rel, tuple)),
            Violation::LeafWitnesses { node, count } => write!(f, "leaf {node} witnesses {count} tuples"),
            Violation::TooManyChildren { node, count } => write!(f, "node {node} has {count} children"),
            Violation::BinaryLabels { node } => write!(f, "binary node {node} and its children have different labels"),
            Violation::BagSize { node, size, expected } => {
                write!(f, "bag of node {node} has {size} elements, expected {expected}")
            }
            Violation::UnaryStep { node } => {
                write!(f, "node {node} and its only child differ by more than one element")
            }
        }
    }
}

/// Checks that the node/parent structure forms a single rooted tree.
fn check_tree(t: &TreeDecomposition) -> std::result::Result<usize, Violation> {
    let roots: Vec<usize> = (0..t.nodes.len()).filter(|&i| t.nodes[i].parent.is_none()).collect();
    if roots.len() != 1 {
        return Err(Violation::Malformed(format!("{} roots", roots.len())));
    }
    let n = t.nodes.len();
    for (i, node) in t.nodes.iter().enumerate() {
        if node.parent.is_some_and(|p| p >= n || p == i) {
            return Err(Violation::Malformed(format!("node {i} has an invalid parent")));
        }
    }
    for start in 0..n {
        let mut cur = start;
        for _ in 0..=n {
            match t.nodes[cur].parent {
                Some(p) => cur = p,
                None => break,
            }
        }
        if t.nodes[cur].parent.is_some() {
            return Err(Violation::Malformed(format!("node {start} lies on a cycle")));
        }
    }
    Ok(roots[0])
}

/// Checks both conditions of a tree decomposition of `s`: every tuple lies
/// inside some bag, and every support element occurs in a nonempty,
/// connected set of nodes.
pub fn verify_decomposition(s: &Structure, t: &TreeDecomposition) -> std::result::Result<(), Violation> {
    check_tree(t)?;
    let bags: Vec<BTreeSet<Elem>> = t.nodes.iter().map(|n| n.bag.iter().copied().collect()).collect();
    for (rel, tuple) in s.all_tuples() {
        if !bags.iter().any(|b| tuple.iter().all(|e| b.contains(e))) {
            return Err(Violation::UncoveredTuple { rel, tuple });
        }
    }
    for e in s.dom() {
        let count = bags.iter().filter(|b| b.contains(&e)).count();
        if count == 0 {
            return Err(Violation::MissingElement(e));
        }
        let edges = t
            .nodes
            .iter()
            .enumerate()
            .filter(|(i, n)| bags[*i].contains(&e) && n.parent.is_some_and(|p| bags[p].contains(&e)))
            .count();
        if edges + 1 != count {
            return Err(Violation::Disconnected(e));
        }
    }
    Ok(())
}

pub fn width(t: &TreeDecomposition) -> i64 {
    t.width()
}

/// Gaifman graph of `s` over its sorted support, as adjacency bitmasks.
fn gaifman(s: &Structure) -> Result<(Vec<Elem>, Vec<u32>)> {
    let verts: Vec<Elem> = s.dom().into_iter().collect();
    if verts.len() > EXACT_BOUND {
        return Err(Error::SupportTooLarge { size: verts.len(), bound: EXACT_BOUND });
    }
    let idx: BTreeMap<Elem, usize> = verts.iter().enumerate().map(|(i, e)| (*e, i)).collect();
    let mut adj = vec![0u32; verts.len()];
    for (_, t) in s.all_tuples() {
        for a in &t {
            for b in &t {
                if a != b {
                    adj[idx[a]] |= 1 << idx[b];
                }
            }
        }
    }
    Ok((verts, adj))
}

/// Vertices outside `set ∪ {v}` adjacent to the component of `v` in the
/// subgraph induced by `set ∪ {v}`.
fn q_size(adj: &[u32], set: u32, v: usize) -> u32 {
    let within = set | 1 << v;
    let mut comp = 1u32 << v;
    let mut frontier = comp;
    while frontier != 0 {
        let u = frontier.trailing_zeros() as usize;
        frontier &= frontier - 1;
        let next = adj[u] & within & !comp;
        comp |= next;
        frontier |= next;
    }
    let mut nb = 0u32;
    let mut c = comp;
    while c != 0 {
        let u = c.trailing_zeros() as usize;
        c &= c - 1;
        nb |= adj[u];
    }
    (nb & !within).count_ones()
}

/// An elimination order of minimum width, computed by dynamic programming
/// over vertex subsets: `TW(S) = min_{v ∈ S} max(TW(S∖v), |Q(S∖v, v)|)`.
fn best_order(adj: &[u32]) -> (i64, Vec<usize>) {
    let n = adj.len();
    let full = if n == 0 { 0 } else { (1u32 << n) - 1 };
    let mut tw = vec![i64::MIN; 1 << n];
    let mut last = vec![0usize; 1 << n];
    for set in 1..=full as usize {
        let s = set as u32;
        let mut best = i64::MAX;
        let mut m = s;
        while m != 0 {
            let v = m.trailing_zeros() as usize;
            m &= m - 1;
            let rest = s & !(1 << v);
            let w = tw[rest as usize].max(q_size(adj, rest, v) as i64);
            if w < best {
                best = w;
                last[set] = v;
            }
        }
        tw[set] = best;
    }
    let mut order = vec![];
    let mut s = full;
    while s != 0 {
        let v = last[s as usize];
        order.push(v);
        s &= !(1 << v);
    }
    order.reverse();
    (if n == 0 { -1 } else { tw[full as usize] }, order)
}

/// Exact treewidth of `s` (of its Gaifman graph; constants are isolated
/// vertices). The empty structure has treewidth -1.
pub fn exact_treewidth(s: &Structure) -> Result<i64> {
    let (_, adj) = gaifman(s)?;
    Ok(best_order(&adj).0)
}

/// A decomposition of minimum width, built from an optimal elimination
/// order. Node `i` holds the `i`-th eliminated vertex and its neighbours at
/// elimination time.
pub fn optimal_decomposition(s: &Structure) -> Result<TreeDecomposition> {
    let (verts, mut adj) = gaifman(s)?;
    if verts.is_empty() {
        return Ok(TreeDecomposition::single([]));
    }
    let (_, order) = best_order(&adj);
    let n = verts.len();
    let mut pos = vec![0; n];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i;
    }
    let mut nodes = vec![];
    let mut alive: u32 = (1u32 << n) - 1;
    for &v in &order {
        alive &= !(1 << v);
        let nb = adj[v] & alive;
        let mut m = nb;
        while m != 0 {
            let u = m.trailing_zeros() as usize;
            m &= m - 1;
            adj[u] |= nb & !(1 << u);
        }
        let mut bag = vec![verts[v]];
        let mut parent: Option<usize> = None;
        let mut m = nb;
        while m != 0 {
            let u = m.trailing_zeros() as usize;
            m &= m - 1;
            bag.push(verts[u]);
            parent = Some(parent.map_or(pos[u], |p: usize| p.min(pos[u])));
        }
        nodes.push((parent, bag));
    }
    let root = n - 1;
    for (i, node) in nodes.iter_mut().enumerate() {
        if node.0.is_none() && i != root {
            node.0 = Some(root);
        }
    }
    Ok(TreeDecomposition::from_nodes(nodes))
}

fn sigma_tuples(s: &Structure) -> Vec<(String, Tuple)> {
    let g = s.signature().guard();
    s.all_tuples().into_iter().filter(|(r, _)| Some(r.as_str()) != g).collect()
}

/// Mutable tree used while reducing.
struct Arena {
    parent: Vec<Option<usize>>,
    bag: Vec<BTreeSet<Elem>>,
    children: Vec<Vec<usize>>,
    dead: Vec<bool>,
    root: usize,
}

impl Arena {
    fn from_td(t: &TreeDecomposition, root: usize) -> Arena {
        Arena {
            parent: t.nodes.iter().map(|n| n.parent).collect(),
            bag: t.nodes.iter().map(|n| n.bag.iter().copied().collect()).collect(),
            children: t.children(),
            dead: vec![false; t.nodes.len()],
            root,
        }
    }

    fn add(&mut self, parent: Option<usize>, bag: BTreeSet<Elem>) -> usize {
        let i = self.bag.len();
        self.parent.push(parent);
        self.bag.push(bag);
        self.children.push(vec![]);
        self.dead.push(false);
        if let Some(p) = parent {
            self.children[p].push(i);
        }
        i
    }

    /// Places a new node labelled `bag` between `parent` and its child `c`.
    fn insert_above(&mut self, c: usize, bag: BTreeSet<Elem>) -> usize {
        let p = self.parent[c].expect("not the root");
        let m = self.add(None, bag);
        self.parent[m] = Some(p);
        let slot = self.children[p].iter().position(|&x| x == c).unwrap();
        self.children[p][slot] = m;
        self.parent[c] = Some(m);
        self.children[m].push(c);
        m
    }

    fn preorder(&self) -> Vec<usize> {
        let mut out = vec![];
        let mut stack = vec![self.root];
        while let Some(n) = stack.pop() {
            out.push(n);
            for &c in self.children[n].iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    /// Renumbers live nodes in preorder (root first).
    fn finish(self, witness: BTreeMap<(String, Tuple), usize>, padding: BTreeSet<Elem>) -> TreeDecomposition {
        let order = self.preorder();
        let mut new_id = vec![usize::MAX; self.bag.len()];
        for (i, &n) in order.iter().enumerate() {
            new_id[n] = i;
        }
        let nodes = order
            .iter()
            .map(|&n| TdNode { parent: self.parent[n].map(|p| new_id[p]), bag: self.bag[n].iter().copied().collect() })
            .collect();
        let witness = witness.into_iter().map(|(t, n)| (t, new_id[n])).collect();
        TreeDecomposition { nodes, witness, padding }
    }
}

/// Turns a decomposition of width at most `k` into a reduced one of width
/// exactly `k`, applying the normalization steps in order: witness leaves
/// for tuples witnessed at inner nodes, one leaf per tuple, binarization,
/// label copies above the children of binary nodes, padding to `k+1`
/// elements, and one-element steps along unary edges.
///
/// Leaves left without a tuple are pruned, which requires every support
/// element to occur in some relation tuple (guard tuples excepted).
pub fn reduce(s: &Structure, t: &TreeDecomposition, k: usize) -> Result<TreeDecomposition> {
    if let Err(v) = verify_decomposition(s, t) {
        return Err(Error::Invalid(format!("not a tree decomposition: {v}")));
    }
    if t.width() > k as i64 {
        return Err(Error::WidthExceeded(k as i64));
    }
    let tuples = sigma_tuples(s);
    if tuples.is_empty() {
        return Err(Error::Invalid("a reduced decomposition needs at least one relation tuple".into()));
    }
    let covered: BTreeSet<Elem> = tuples.iter().flat_map(|(_, t)| t.iter().copied()).collect();
    if let Some(e) = s.dom().into_iter().find(|e| !covered.contains(e)) {
        return Err(Error::Invalid(format!("element {e} occurs in no relation tuple")));
    }
    let mut a = Arena::from_td(t, t.root().unwrap());

    // Witness assignment: first node in preorder containing the tuple.
    let pre = a.preorder();
    let mut assigned: BTreeMap<usize, Vec<(String, Tuple)>> = BTreeMap::new();
    for (r, tu) in &tuples {
        let n = *pre.iter().find(|&&n| tu.iter().all(|e| a.bag[n].contains(e))).expect("verified");
        assigned.entry(n).or_default().push((r.clone(), tu.clone()));
    }
    // Inner witnesses get a leaf copy holding their tuples.
    let inner: Vec<usize> = assigned.keys().copied().filter(|&n| !a.children[n].is_empty()).collect();
    for n in inner {
        let ts = assigned.remove(&n).unwrap();
        let leaf = a.add(Some(n), a.bag[n].clone());
        assigned.insert(leaf, ts);
    }
    // Prune leaves without tuples.
    loop {
        let empty: Vec<usize> = (0..a.bag.len())
            .filter(|&n| !a.dead[n] && a.children[n].is_empty() && !assigned.contains_key(&n) && n != a.root)
            .collect();
        if empty.is_empty() {
            break;
        }
        for n in empty {
            a.dead[n] = true;
            let p = a.parent[n].unwrap();
            a.children[p].retain(|&c| c != n);
        }
    }
    // One tuple per leaf.
    let mut witness = BTreeMap::new();
    for (n, ts) in assigned {
        if ts.len() == 1 {
            witness.insert(ts[0].clone(), n);
            continue;
        }
        for tu in ts {
            let leaf = a.add(Some(n), a.bag[n].clone());
            witness.insert(tu, leaf);
        }
    }
    // Binarize: n0 -> m1 -> m2 ... with m_i holding child i.
    for n in a.preorder() {
        let ch = a.children[n].clone();
        if ch.len() <= 2 {
            continue;
        }
        let l = ch.len();
        a.children[n].clear();
        let mut prev = n;
        for (i, &c) in ch.iter().enumerate().take(l - 1) {
            let m = a.add(Some(prev), a.bag[n].clone());
            a.parent[c] = Some(m);
            a.children[m].push(c);
            if i == l - 2 {
                a.parent[ch[l - 1]] = Some(m);
                a.children[m].push(ch[l - 1]);
            }
            prev = m;
        }
    }
    // Label copies between binary nodes and differing children.
    for n in a.preorder() {
        if a.children[n].len() != 2 {
            continue;
        }
        for c in a.children[n].clone() {
            if a.bag[c] != a.bag[n] {
                a.insert_above(c, a.bag[n].clone());
            }
        }
    }
    // Padding, inherited from the parent where possible.
    let mut padding = BTreeSet::new();
    for n in a.preorder() {
        let need = (k + 1).saturating_sub(a.bag[n].len());
        if need == 0 {
            continue;
        }
        let inherited: Vec<Elem> = match a.parent[n] {
            Some(p) => a.bag[p].iter().copied().filter(|e| padding.contains(e) && !a.bag[n].contains(e)).collect(),
            None => vec![],
        };
        let mut added = 0;
        for e in inherited.into_iter().take(need) {
            a.bag[n].insert(e);
            added += 1;
        }
        for _ in added..need {
            let e = Elem::fresh();
            padding.insert(e);
            a.bag[n].insert(e);
        }
    }
    // One-element steps along unary edges.
    for n in a.preorder() {
        if a.children[n].len() != 1 {
            continue;
        }
        let c = a.children[n][0];
        let gone: Vec<Elem> = a.bag[n].difference(&a.bag[c]).copied().collect();
        let new: Vec<Elem> = a.bag[c].difference(&a.bag[n]).copied().collect();
        let mut cur = a.bag[n].clone();
        let mut below = c;
        let mut chain = vec![];
        for (g, e) in gone.iter().zip(&new).take(gone.len().saturating_sub(1)) {
            cur.remove(g);
            cur.insert(*e);
            chain.push(cur.clone());
        }
        for bag in chain.into_iter().rev() {
            below = a.insert_above(below, bag);
        }
    }
    let td = a.finish(witness, padding);
    if let Err(v) = verify_reduced(s, &td, k) {
        return Err(Error::NotReduced(v.to_string()));
    }
    Ok(td)
}

/// Checks that `t` is a reduced decomposition of width `k`: a tree
/// decomposition whose witness map sends each relation tuple (guard tuples
/// excepted) to a distinct leaf containing it, every leaf witnessing exactly
/// one tuple; at most two children per node; binary nodes labelled like
/// their children; all bags of size `k+1`; unary edges changing at most one
/// element.
pub fn verify_reduced(s: &Structure, t: &TreeDecomposition, k: usize) -> std::result::Result<(), Violation> {
    verify_decomposition(s, t)?;
    let ch = t.children();
    let tuples = sigma_tuples(s);
    let all: BTreeSet<&(String, Tuple)> = tuples.iter().collect();
    for ((r, tu), _) in t.witness.iter() {
        if !all.contains(&(r.clone(), tu.clone())) {
            return Err(Violation::Malformed(format!("witness entry for {} which is not a tuple", show_tuple(r, tu))));
        }
    }
    for (r, tu) in &tuples {
        let ok = t.witness.get(&(r.clone(), tu.clone())).is_some_and(|&n| {
            n < t.nodes.len() && ch[n].is_empty() && tu.iter().all(|e| t.nodes[n].bag.contains(e))
        });
        if !ok {
            return Err(Violation::MissingWitness { rel: r.clone(), tuple: tu.clone() });
        }
    }
    for n in 0..t.nodes.len() {
        if ch[n].is_empty() {
            let count = t.witness.values().filter(|&&m| m == n).count();
            if count != 1 {
                return Err(Violation::LeafWitnesses { node: n, count });
            }
        }
    }
    for n in 0..t.nodes.len() {
        if ch[n].len() > 2 {
            return Err(Violation::TooManyChildren { node: n, count: ch[n].len() });
        }
    }
    for n in 0..t.nodes.len() {
        if ch[n].len() == 2 && ch[n].iter().any(|&c| t.nodes[c].bag != t.nodes[n].bag) {
            return Err(Violation::BinaryLabels { node: n });
        }
    }
    for (n, node) in t.nodes.iter().enumerate() {
        if node.bag.len() != k + 1 {
            return Err(Violation::BagSize { node: n, size: node.bag.len(), expected: k + 1 });
        }
    }
    for n in 0..t.nodes.len() {
        if ch[n].len() == 1 {
            let a: BTreeSet<Elem> = t.nodes[n].bag.iter().copied().collect();
            let b: BTreeSet<Elem> = t.nodes[ch[n][0]].bag.iter().copied().collect();
            let d1 = a.difference(&b).count();
            let d2 = b.difference(&a).count();
            if !(d1 == 0 && d2 == 0 || d1 == 1 && d2 == 1) {
                return Err(Violation::UnaryStep { node: n });
            }
        }
    }
    Ok(())
}

fn guard_name(s: &Structure) -> String {
    s.signature().guard().unwrap_or(GUARD).to_string()
}

/// Builds the reduced decomposition of width `k` read off a derivation of
/// the treewidth SID: leaves for relation rules, a fresh binary root for
/// composition, a unary root for the existential rule. The root bag holds
/// the arguments of the recursive predicate. A derivation of the top
/// predicate is entered below its top rule.
pub fn derivation_to_decomposition(s: &Structure, d: &Derivation, k: usize) -> Result<TreeDecomposition> {
    let guard = guard_name(s);
    let root = if d.root.args.is_empty() && d.root.children.len() == 1 {
        &d.root.children[0]
    } else {
        &d.root
    };
    if root.args.len() != k + 1 {
        return Err(Error::BadDerivation(format!("expected a predicate of arity {}", k + 1)));
    }
    let below: BTreeSet<Elem> =
        root.all_consumed().into_iter().filter(|(r, _)| *r == guard).map(|(_, t)| t[0]).collect();
    let args: BTreeSet<Elem> = root.args.iter().copied().collect();
    if args.len() != k + 1 {
        return Err(Error::GuardViolation("root arguments are not pairwise distinct".into()));
    }
    if let Some(e) = args.iter().find(|e| below.contains(e)) {
        return Err(Error::GuardViolation(format!("root argument {e} is guarded below the root")));
    }
    let mut a = Arena { parent: vec![], bag: vec![], children: vec![], dead: vec![], root: 0 };
    let mut witness = BTreeMap::new();
    fn go(
        n: &DerivNode,
        parent: Option<usize>,
        guard: &str,
        a: &mut Arena,
        witness: &mut BTreeMap<(String, Tuple), usize>,
    ) -> Result<()> {
        let me = a.add(parent, n.args.iter().copied().collect());
        match n.children.len() {
            0 => {
                let ts: Vec<&(String, Tuple)> = n.consumed.iter().filter(|(r, _)| r != guard).collect();
                if ts.len() != 1 {
                    return Err(Error::BadDerivation(format!("leaf for `{}` consumes {} tuples", n.pred, ts.len())));
                }
                witness.insert(ts[0].clone(), me);
            }
            1 | 2 => {
                for c in &n.children {
                    go(c, Some(me), guard, a, witness)?;
                }
            }
            m => return Err(Error::BadDerivation(format!("node for `{}` has {m} children", n.pred))),
        }
        Ok(())
    }
    go(root, None, &guard, &mut a, &mut witness)?;
    let td = a.finish(witness, BTreeSet::new());
    if let Err(v) = verify_reduced(s, &td, k) {
        return Err(Error::GuardViolation(v.to_string()));
    }
    Ok(td)
}

/// Builds a derivation of the treewidth SID for width `k` from a reduced
/// decomposition. If the guard holds exactly the elements of the bags, the
/// derivation is for the top predicate `A_k()`; if it holds the bag elements
/// outside the root bag, it is for `A(x1,...)` under the returned store,
/// which maps `x_i` to the `i`-th root element. Binary nodes become
/// composition steps, unary nodes with a changed element become existential
/// steps (unchanged ones are skipped), leaves become relation rules.
pub fn decomposition_to_derivation(s: &Structure, t: &TreeDecomposition, k: usize) -> Result<(Derivation, Store)> {
    if let Err(v) = verify_reduced(s, t, k) {
        return Err(Error::NotReduced(v.to_string()));
    }
    let ch = t.children();
    let root = t.root().unwrap();
    // Every bag element must be introduced exactly once.
    for e in t.nodes.iter().flat_map(|n| n.bag.iter()).collect::<BTreeSet<_>>() {
        let count = t.nodes.iter().filter(|n| n.bag.contains(e)).count();
        let edges = t
            .nodes
            .iter()
            .filter(|n| n.bag.contains(e) && n.parent.is_some_and(|p| t.nodes[p].bag.contains(e)))
            .count();
        if edges + 1 != count {
            return Err(Error::NotReduced(format!("bags containing element {e} are not connected")));
        }
    }
    let guard_set = s.guard_set()?;
    let all: BTreeSet<Elem> = t.nodes.iter().flat_map(|n| n.bag.iter().copied()).collect();
    let root_bag: BTreeSet<Elem> = t.nodes[root].bag.iter().copied().collect();
    let inner: BTreeSet<Elem> = all.difference(&root_bag).copied().collect();
    let with_top = if guard_set == all {
        true
    } else if guard_set == inner {
        false
    } else {
        return Err(Error::GuardMismatch("the guard must hold the bag elements, with or without the root bag".into()));
    };
    let guard = guard_name(s);
    let sid = gen_tw_sid(k, s.signature(), false)?;
    let index = RuleIndex::new(&sid, k);
    let vs: Vec<Elem> = t.nodes[root].bag.clone();

    fn go(
        t: &TreeDecomposition,
        ch: &[Vec<usize>],
        leaf_tuple: &BTreeMap<usize, (String, Tuple)>,
        index: &RuleIndex,
        guard: &str,
        n: usize,
        args: Vec<Elem>,
    ) -> Result<DerivNode> {
        let node = |rule: usize, args: Vec<Elem>, exists, consumed, children| DerivNode {
            rule: Some(rule),
            pred: TW_PRED.to_string(),
            args,
            exists,
            consumed,
            children,
        };
        match ch[n].len() {
            0 => {
                let (r, tu) = leaf_tuple[&n].clone();
                let f: Vec<usize> = tu.iter().map(|e| args.iter().position(|a| a == e).unwrap()).collect();
                let rule = index.rel(&r, &f)?;
                Ok(node(rule, args, vec![], vec![(r, tu)], vec![]))
            }
            1 => {
                let c = ch[n][0];
                let here: BTreeSet<Elem> = args.iter().copied().collect();
                let there: BTreeSet<Elem> = t.nodes[c].bag.iter().copied().collect();
                if here == there {
                    return go(t, ch, leaf_tuple, index, guard, c, args);
                }
                let old = *here.difference(&there).next().unwrap();
                let new = *there.difference(&here).next().unwrap();
                let i = args.iter().position(|a| *a == old).unwrap();
                let mut cargs = args.clone();
                cargs[i] = new;
                let child = go(t, ch, leaf_tuple, index, guard, c, cargs)?;
                Ok(node(index.exists[i], args, vec![("y".to_string(), new)], vec![(guard.to_string(), vec![new])], vec![child]))
            }
            _ => {
                let l = go(t, ch, leaf_tuple, index, guard, ch[n][0], args.clone())?;
                let r = go(t, ch, leaf_tuple, index, guard, ch[n][1], args.clone())?;
                Ok(node(index.comp, args, vec![], vec![], vec![l, r]))
            }
        }
    }
    let leaf_tuple: BTreeMap<usize, (String, Tuple)> = t.witness.iter().map(|(tu, &n)| (n, tu.clone())).collect();
    let a = go(t, &ch, &leaf_tuple, &index, &guard, root, vs.clone())?;
    let xs: Vec<String> = (1..=k + 1).map(|i| format!("x{i}")).collect();
    if with_top {
        let top = tw_top(k);
        let root = DerivNode {
            rule: Some(index.top),
            pred: top.clone(),
            args: vec![],
            exists: xs.iter().cloned().zip(vs.iter().copied()).collect(),
            consumed: vs.iter().map(|e| (guard.clone(), vec![*e])).collect(),
            children: vec![a],
        };
        Ok((Derivation { formula: Slr::Pred(top, vec![]), root }, Store::new()))
    } else {
        let mut nu = Store::new();
        for (x, e) in xs.iter().zip(&vs) {
            nu = nu.bind(x, *e);
        }
        let formula = Slr::Pred(TW_PRED.to_string(), xs.iter().map(|x| Term::var(x)).collect());
        Ok((Derivation { formula, root: a }, nu))
    }
}

/// Rule indices of the treewidth SID.
struct RuleIndex {
    comp: usize,
    exists: Vec<usize>,
    rels: BTreeMap<(String, Vec<usize>), usize>,
    top: usize,
}

impl RuleIndex {
    fn new(sid: &Sid, k: usize) -> RuleIndex {
        let mut rels = BTreeMap::new();
        let xs: Vec<String> = (1..=k + 1).map(|i| format!("x{i}")).collect();
        for (i, r) in sid.rules.iter().enumerate().take(sid.rules.len() - 1).skip(k + 2) {
            if let Slr::Rel(q, ts) = &r.body {
                let f = ts.iter().map(|t| xs.iter().position(|x| Some(x.as_str()) == t.as_var()).unwrap()).collect();
                rels.insert((q.clone(), f), i);
            }
        }
        RuleIndex { comp: 0, exists: (1..=k + 1).collect(), rels, top: sid.rules.len() - 1 }
    }

    fn rel(&self, r: &str, f: &[usize]) -> Result<usize> {
        self.rels.get(&(r.to_string(), f.to_vec())).copied().ok_or_else(|| Error::UnknownRelation(r.to_string()))
    }
}

/// The decomposition whose nodes are the nodes of a derivation, each
/// labelled with the values of all variables of its rule (arguments and
/// existential witnesses).
pub fn derivation_bags(d: &Derivation) -> TreeDecomposition {
    let mut nodes = vec![];
    fn go(n: &DerivNode, parent: Option<usize>, nodes: &mut Vec<(Option<usize>, Vec<Elem>)>) {
        let me = nodes.len();
        let bag = n.args.iter().copied().chain(n.exists.iter().map(|(_, e)| *e)).collect();
        nodes.push((parent, bag));
        for c in &n.children {
            go(c, Some(me), nodes);
        }
    }
    go(&d.root, None, &mut nodes);
    TreeDecomposition::from_nodes(nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slr::{check_slr, replay};
    use crate::structure::Signature;

    fn e(i: u64) -> Elem {
        Elem(i)
    }

    fn graph(n: u64, edges: &[(u64, u64)]) -> Structure {
        let vs: Vec<Elem> = (1..=n).map(e).collect();
        let es: Vec<(Elem, Elem)> = edges.iter().map(|&(a, b)| (e(a), e(b))).collect();
        Structure::encode_graph(&vs, &es).unwrap()
    }

    fn clique(n: u64) -> Structure {
        let mut es = vec![];
        for a in 1..=n {
            for b in 1..=n {
                if a != b {
                    es.push((a, b));
                }
            }
        }
        graph(n, &es)
    }

    fn guarded(edges: &[(u64, u64)]) -> Structure {
        let sig = Signature::new().with_relation("E", 2).unwrap().with_guard(GUARD).unwrap();
        let mut b = Structure::builder(&sig);
        let mut vs = BTreeSet::new();
        for &(x, y) in edges {
            b = b.tuple("E", &[e(x), e(y)]);
            vs.insert(x);
            vs.insert(y);
        }
        for v in vs {
            b = b.tuple(GUARD, &[e(v)]);
        }
        b.build().unwrap()
    }

    #[test]
    fn width_examples() {
        assert_eq!(TreeDecomposition::single([e(1), e(2), e(3)]).width(), 2);
        assert_eq!(TreeDecomposition::single([]).width(), -1);
        let path = TreeDecomposition::from_nodes(vec![(None, vec![e(1), e(2)]), (Some(0), vec![e(2), e(3)])]);
        assert_eq!(path.width(), 1);
    }

    #[test]
    fn verifier_reports_conditions() {
        let s = graph(3, &[(1, 2), (2, 3)]);
        assert_eq!(verify_decomposition(&s, &TreeDecomposition::single([e(1), e(2), e(3)])), Ok(()));
        let split = TreeDecomposition::from_nodes(vec![
            (None, vec![e(1), e(2)]),
            (Some(0), vec![e(2)]),
            (Some(1), vec![e(1), e(3)]),
        ]);
        assert!(matches!(verify_decomposition(&s, &split), Err(Violation::UncoveredTuple { .. })));
        let disc = TreeDecomposition::from_nodes(vec![
            (None, vec![e(1), e(2)]),
            (Some(0), vec![e(3)]),
            (Some(1), vec![e(2), e(3)]),
        ]);
        assert_eq!(verify_decomposition(&s, &disc), Err(Violation::Disconnected(e(2))));
    }

    #[test]
    fn clique_treewidth() {
        for n in 1..=6 {
            assert_eq!(exact_treewidth(&clique(n)).unwrap(), n as i64 - 1);
        }
    }

    #[test]
    fn small_treewidths() {
        let sig = Signature::new().with_constant("c").unwrap();
        let s = Structure::builder(&sig).constant("c", e(5)).build().unwrap();
        assert_eq!(exact_treewidth(&s).unwrap(), 0);
        assert_eq!(exact_treewidth(&Structure::empty(&sig.without_constant("c").unwrap()).unwrap()).unwrap(), -1);
        assert_eq!(exact_treewidth(&graph(4, &[(1, 2), (2, 3), (3, 4)])).unwrap(), 1);
        assert_eq!(exact_treewidth(&graph(4, &[(1, 2), (2, 3), (3, 4), (4, 1)])).unwrap(), 2);
    }

    #[test]
    fn optimal_decomposition_is_valid() {
        for s in [clique(4), graph(5, &[(1, 2), (2, 3), (3, 4), (4, 1), (1, 5)]), graph(3, &[])] {
            let td = optimal_decomposition(&s).unwrap();
            assert_eq!(verify_decomposition(&s, &td), Ok(()));
            assert_eq!(td.width(), exact_treewidth(&s).unwrap());
        }
    }

    #[test]
    fn too_large_support() {
        let s = graph(13, &[]);
        assert!(matches!(exact_treewidth(&s), Err(Error::SupportTooLarge { size: 13, .. })));
    }

    #[test]
    fn reduce_single_edge() {
        let s = guarded(&[(1, 2)]);
        let td = reduce(&s, &TreeDecomposition::single([e(1), e(2)]), 1).unwrap();
        assert_eq!(td.nodes.len(), 1);
        assert_eq!(td.witness.len(), 1);
        assert_eq!(verify_reduced(&s, &td, 1), Ok(()));
    }

    #[test]
    fn reduce_binarizes_three_children() {
        let s = guarded(&[(1, 2), (1, 3), (1, 4)]);
        let td = TreeDecomposition::from_nodes(vec![
            (None, vec![e(1)]),
            (Some(0), vec![e(1), e(2)]),
            (Some(0), vec![e(1), e(3)]),
            (Some(0), vec![e(1), e(4)]),
        ]);
        let r = reduce(&s, &td, 1).unwrap();
        assert_eq!(verify_reduced(&s, &r, 1), Ok(()));
        assert!(r.children().iter().all(|c| c.len() <= 2));
        assert_eq!(r.padding.len(), 1);
    }

    #[test]
    fn reduce_inserts_chains() {
        // Parent and child differ by two elements each way.
        let s = guarded(&[(1, 2), (3, 4), (2, 3)]);
        let td = TreeDecomposition::from_nodes(vec![
            (None, vec![e(1), e(2), e(3)]),
            (Some(0), vec![e(2), e(3), e(4)]),
        ]);
        let r = reduce(&s, &td, 3).unwrap();
        assert_eq!(verify_reduced(&s, &r, 3), Ok(()));
        assert!(reduce(&s, &td, 1).is_err());
    }

    #[test]
    fn verify_reduced_detects_small_bag() {
        let s = guarded(&[(1, 2)]);
        let mut td = TreeDecomposition::single([e(1), e(2)]);
        td.witness.insert(("E".into(), vec![e(1), e(2)]), 0);
        assert_eq!(verify_reduced(&s, &td, 1), Ok(()));
        assert!(matches!(verify_reduced(&s, &td, 2), Err(Violation::BagSize { .. })));
        td.witness.clear();
        assert!(matches!(verify_reduced(&s, &td, 1), Err(Violation::MissingWitness { .. })));
    }

    #[test]
    fn converters_round_trip() {
        let sig = Signature::new().with_relation("E", 2).unwrap().with_guard(GUARD).unwrap();
        let sid = gen_tw_sid(1, &sig, false).unwrap();
        let phi = Slr::Pred(tw_top(1), vec![]);
        for edges in [vec![(1, 2)], vec![(1, 2), (2, 3)], vec![(1, 2), (2, 3), (3, 1), (1, 1)], vec![(1, 2), (1, 3), (1, 4)]] {
            let s = guarded(&edges);
            let d = check_slr(&s, &Store::new(), &phi, &sid).unwrap();
            if edges.len() == 4 && edges.contains(&(3, 1)) {
                assert!(d.is_none());
                continue;
            }
            let d = d.expect("treewidth one");
            let td = derivation_to_decomposition(&s, &d, 1).unwrap();
            assert_eq!(verify_reduced(&s, &td, 1), Ok(()));
            let (d2, nu) = decomposition_to_derivation(&s, &td, 1).unwrap();
            assert!(replay(&s, &nu, &sid, &d2).unwrap(), "{edges:?}");
        }
    }

    #[test]
    fn reduced_from_optimal_converts() {
        let sig = Signature::new().with_relation("E", 2).unwrap().with_guard(GUARD).unwrap();
        let sid = gen_tw_sid(1, &sig, false).unwrap();
        let s = guarded(&[(1, 2), (2, 3), (2, 4), (4, 5)]);
        let td = reduce(&s, &optimal_decomposition(&s).unwrap(), 1).unwrap();
        if td.padding.is_empty() {
            let (d, nu) = decomposition_to_derivation(&s, &td, 1).unwrap();
            assert!(replay(&s, &nu, &sid, &d).unwrap());
        } else {
            // Padding elements are not guarded.
            assert!(matches!(decomposition_to_derivation(&s, &td, 1), Err(Error::GuardMismatch(_))));
        }
    }

    #[test]
    fn json_round_trip() {
        let s = guarded(&[(1, 2), (1, 3), (1, 4)]);
        let r = reduce(&s, &optimal_decomposition(&s).unwrap(), 1).unwrap();
        let back = TreeDecomposition::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        assert!(r.render().contains("[E("));
    }
}
