//! Translation of SLR predicate atoms into SO formulas that guess an
//! unfolding tree inside the structure, plus the certificate extractor that
//! reads the tree off an SLR derivation.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::slr::{Derivation, DerivNode, Sid, Slr, Term};
use crate::so::So;
use crate::structure::{Elem, Signature, Store, Structure, Tuple};

/// One side of a disequality.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Side {
    Slot(usize),
    Const(String),
}

/// A rule body over numbered variable slots: parameters first, then
/// existentials. Constants in relation and predicate atoms are moved into
/// fresh slots equated to them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleShape {
    pub head: String,
    pub slots: Vec<String>,
    pub arity: usize,
    /// Slot pairs equated by the body.
    pub eqs: Vec<(usize, usize)>,
    /// Slots equated to a constant.
    pub const_eqs: Vec<(usize, String)>,
    pub neqs: Vec<(Side, Side)>,
    /// Equalities (`true`) and disequalities between two constants.
    pub const_facts: Vec<(String, String, bool)>,
    pub atoms: Vec<(String, Vec<usize>)>,
    /// Callee and argument slot per callee parameter, in syntactic order.
    pub calls: Vec<(String, Vec<usize>)>,
}

/// Parameter passing and equality links between the variable slots of the
/// rules. Two (node, slot) pairs of an unfolding tree denote the same value
/// iff they are connected in the product of the tree with this graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotFlowGraph {
    pub rules: Vec<RuleShape>,
    /// Largest number of slots of a rule.
    pub width: usize,
    /// Largest number of predicate atoms of a rule.
    pub max_calls: usize,
}

impl SlotFlowGraph {
    pub fn new(sid: &Sid) -> SlotFlowGraph {
        let mut rules = vec![];
        for rule in &sid.rules {
            let flat = rule.flatten();
            let mut slots = flat.vars();
            let mut const_eqs = vec![];
            let slot_of = |t: &Term, slots: &mut Vec<String>, const_eqs: &mut Vec<(usize, String)>| match t {
                Term::Var(x) => slots.iter().position(|s| s == x).expect("flattened variables are slots"),
                Term::Const(c) => {
                    slots.push(format!("#{c}"));
                    const_eqs.push((slots.len() - 1, c.clone()));
                    slots.len() - 1
                }
            };
            let mut eqs = vec![];
            let mut const_facts = vec![];
            for (a, b) in &flat.eqs {
                match (a, b) {
                    (Term::Const(c), Term::Const(d)) => const_facts.push((c.clone(), d.clone(), true)),
                    (Term::Var(_), Term::Var(_)) => {
                        let (i, j) = (slot_of(a, &mut slots, &mut const_eqs), slot_of(b, &mut slots, &mut const_eqs));
                        eqs.push((i, j));
                    }
                    (Term::Var(_), Term::Const(c)) | (Term::Const(c), Term::Var(_)) => {
                        let v = if a.as_var().is_some() { a } else { b };
                        let i = slot_of(v, &mut slots, &mut const_eqs);
                        const_eqs.push((i, c.clone()));
                    }
                }
            }
            let mut neqs = vec![];
            for (a, b) in &flat.neqs {
                if let (Term::Const(c), Term::Const(d)) = (a, b) {
                    const_facts.push((c.clone(), d.clone(), false));
                    continue;
                }
                let mut side = |t: &Term| match t {
                    Term::Var(_) => Side::Slot(slot_of(t, &mut slots, &mut const_eqs)),
                    Term::Const(c) => Side::Const(c.clone()),
                };
                neqs.push((side(a), side(b)));
            }
            let atoms = flat
                .rels
                .iter()
                .map(|(r, ts)| (r.clone(), ts.iter().map(|t| slot_of(t, &mut slots, &mut const_eqs)).collect()))
                .collect();
            let calls = flat
                .calls
                .iter()
                .map(|(p, ts)| (p.clone(), ts.iter().map(|t| slot_of(t, &mut slots, &mut const_eqs)).collect()))
                .collect();
            rules.push(RuleShape {
                head: rule.head.clone(),
                arity: flat.params.len(),
                slots,
                eqs,
                const_eqs,
                neqs,
                const_facts,
                atoms,
                calls,
            });
        }
        let width = rules.iter().map(|r| r.slots.len()).max().unwrap_or(0);
        let max_calls = rules.iter().map(|r| r.calls.len()).max().unwrap_or(0);
        SlotFlowGraph { rules, width, max_calls }
    }

    /// Equivalence classes of (node, slot) pairs over the unfolding tree of
    /// `d`, by direct search. Nodes are numbered in preorder; the result
    /// maps each pair to a class id.
    pub fn classes(&self, d: &Derivation) -> Result<BTreeMap<(usize, usize), usize>> {
        let (labels, edges) = tree_of(tree_root(d)?)?;
        let mut parent: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
        fn find(p: &mut BTreeMap<(usize, usize), (usize, usize)>, a: (usize, usize)) -> (usize, usize) {
            let mut r = a;
            while let Some(&q) = p.get(&r) {
                if q == r {
                    break;
                }
                r = q;
            }
            p.insert(a, r);
            r
        }
        let union = |p: &mut BTreeMap<(usize, usize), (usize, usize)>, a, b| {
            let (ra, rb) = (find(p, a), find(p, b));
            if ra != rb {
                p.insert(ra, rb);
            }
        };
        for (n, &i) in labels.iter().enumerate() {
            let shape = self.rule(i)?;
            for s in 0..shape.slots.len() {
                parent.insert((n, s), (n, s));
            }
            for &(a, b) in &shape.eqs {
                union(&mut parent, (n, a), (n, b));
            }
        }
        for &(n, l, m) in &edges {
            let shape = self.rule(labels[n])?;
            for (p, &a) in shape.calls[l].1.iter().enumerate() {
                union(&mut parent, (n, a), (m, p));
            }
        }
        let keys: Vec<(usize, usize)> = parent.keys().copied().collect();
        let mut ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut out = BTreeMap::new();
        for k in keys {
            let r = find(&mut parent, k);
            let next = ids.len();
            out.insert(k, *ids.entry(r).or_insert(next));
        }
        Ok(out)
    }

    fn rule(&self, i: usize) -> Result<&RuleShape> {
        self.rules.get(i).ok_or_else(|| Error::BadDerivation(format!("no rule {i}")))
    }
}

fn tree_root(d: &Derivation) -> Result<&DerivNode> {
    match (&d.formula, d.root.rule) {
        (Slr::Pred(..), Some(_)) => Ok(&d.root),
        _ => Err(Error::BadDerivation("derivation is not for a predicate atom".into())),
    }
}

/// Rule labels in preorder and the edges (parent, call position, child).
fn tree_of(root: &DerivNode) -> Result<(Vec<usize>, Vec<(usize, usize, usize)>)> {
    fn go(n: &DerivNode, labels: &mut Vec<usize>, edges: &mut Vec<(usize, usize, usize)>) -> Result<usize> {
        let me = labels.len();
        labels.push(n.rule.ok_or_else(|| Error::BadDerivation("inner node without a rule".into()))?);
        for (l, c) in n.children.iter().enumerate() {
            let id = go(c, labels, edges)?;
            edges.push((me, l, id));
        }
        Ok(me)
    }
    let (mut labels, mut edges) = (vec![], vec![]);
    go(root, &mut labels, &mut edges)?;
    Ok((labels, edges))
}

/// Names of the variables of the translation, chosen apart from the
/// variables of the atom and the symbols of the signature.
struct Names {
    avoid: BTreeSet<String>,
}

impl Names {
    fn new(atom: &[Term], sig: &Signature) -> Names {
        let mut avoid: BTreeSet<String> = atom.iter().filter_map(|t| t.as_var().map(str::to_string)).collect();
        avoid.extend(sig.relations().map(|(r, _)| r.to_string()));
        avoid.extend(sig.constants().map(str::to_string));
        Names { avoid }
    }

    fn get(&self, base: &str) -> String {
        let mut n = base.to_string();
        while self.avoid.contains(&n) {
            n.push('_');
        }
        n
    }

    fn root(&self) -> String {
        self.get("x")
    }

    fn label(&self, i: usize) -> String {
        self.get(&format!("X{}", i + 1))
    }

    fn edge(&self, j: usize) -> String {
        self.get(&format!("Y{}", j + 1))
    }

    fn proj(&self, r: &str, l: usize) -> String {
        self.get(&format!("Z_{r}_{}", l + 1))
    }

    fn slot_set(&self, family: char, a: usize) -> String {
        self.get(&format!("{family}{}", a + 1))
    }

    fn fo(&self, base: &str, i: usize) -> String {
        self.get(&format!("{base}{i}"))
    }
}

enum Val {
    Term(Term),
    /// Projection relation and the node it is applied to.
    Proj(String, String),
}

/// Where the value of a slot comes from.
#[derive(Clone, Debug, PartialEq, Eq)]
enum Source {
    /// Position of the rule's atom for the relation.
    Atom(String, usize),
    Const(String),
    /// Parameter of the root rule, bound to the atom's argument.
    Param(usize),
}

struct Builder<'a> {
    g: &'a SlotFlowGraph,
    names: Names,
    atom_pred: String,
    atom_args: Vec<Term>,
    /// Relations of the signature with their arities.
    rels: Vec<(String, usize)>,
}

fn v(x: &str) -> Term {
    Term::var(x)
}

fn sov(x: &str, ts: &[&str]) -> So {
    So::var(x, ts)
}

impl Builder<'_> {
    fn root(&self) -> String {
        self.names.root()
    }

    fn label(&self, i: usize, n: &str) -> So {
        sov(&self.names.label(i), &[n])
    }

    fn labelled(&self, n: &str) -> So {
        So::or_all((0..self.g.rules.len()).map(|i| self.label(i, n)))
    }

    fn defines(&self, pred: &str, n: &str) -> So {
        So::or_all(self.g.rules.iter().enumerate().filter(|(_, r)| r.head == pred).map(|(i, _)| self.label(i, n)))
    }

    fn edge(&self, a: &str, b: &str) -> So {
        So::or_all((0..self.g.max_calls).map(|j| sov(&self.names.edge(j), &[a, b])))
    }

    fn with_relation(&self, r: &str, n: &str) -> So {
        So::or_all(
            self.g.rules.iter().enumerate().filter(|(_, s)| s.atoms.iter().any(|(q, _)| q == r)).map(|(i, _)| self.label(i, n)),
        )
    }

    fn tree_formula(&self) -> So {
        let x = self.root();
        let (n, m, p, q) = (self.names.fo("n", 1), self.names.fo("m", 1), self.names.fo("p", 1), self.names.fo("p", 2));
        let nr = self.g.rules.len();
        let mut parts = vec![self.defines(&self.atom_pred, &x)];
        let pairs: Vec<So> = (0..nr)
            .flat_map(|i| (i + 1..nr).map(move |j| (i, j)))
            .map(|(i, j)| So::not(So::and(self.label(i, &n), self.label(j, &n))))
            .collect();
        if !pairs.is_empty() {
            parts.push(So::forall(&n, So::and_all(pairs)));
        }
        let t = self.names.get("T");
        let closed = So::forall(
            &n,
            So::forall(&m, So::implies(So::and(sov(&t, &[&n]), self.edge(&n, &m)), sov(&t, &[&m]))),
        );
        parts.push(So::forall_so(
            &t,
            1,
            So::implies(
                So::and(sov(&t, &[&x]), closed),
                So::forall(&n, So::implies(self.labelled(&n), sov(&t, &[&n]))),
            ),
        ));
        let mut unique = vec![];
        for j in 0..self.g.max_calls {
            for k in 0..self.g.max_calls {
                let (yj, yk) = (self.names.edge(j), self.names.edge(k));
                let both = So::and(sov(&yj, &[&p, &n]), sov(&yk, &[&q, &n]));
                unique.push(if j == k {
                    So::implies(both, So::eq(v(&p), v(&q)))
                } else {
                    So::not(both)
                });
            }
        }
        parts.push(So::forall(
            &n,
            So::implies(
                self.labelled(&n),
                So::and(
                    So::implies(So::neq(v(&n), v(&x)), So::exists(&p, self.edge(&p, &n))),
                    So::forall(&p, So::forall(&q, So::and_all(unique))),
                ),
            ),
        ));
        parts.push(So::forall(&p, So::not(self.edge(&p, &x))));
        for (i, shape) in self.g.rules.iter().enumerate() {
            let mut out = vec![];
            for j in 0..self.g.max_calls {
                let yj = self.names.edge(j);
                if let Some((callee, _)) = shape.calls.get(j) {
                    out.push(So::exists(
                        &m,
                        So::and_all([
                            sov(&yj, &[&n, &m]),
                            self.defines(callee, &m),
                            So::forall(&q, So::implies(sov(&yj, &[&n, &q]), So::eq(v(&q), v(&m)))),
                        ]),
                    ));
                } else {
                    out.push(So::forall(&m, So::not(sov(&yj, &[&n, &m]))));
                }
            }
            if !out.is_empty() {
                parts.push(So::forall(&n, So::implies(self.label(i, &n), So::and_all(out))));
            }
        }
        So::and_all(parts)
    }

    /// The slot sets of `family` are closed under the equality and
    /// parameter-passing links. The least closed family containing a
    /// (node, slot) pair is its value class.
    fn closed(&self, family: char) -> So {
        let (n, m) = (self.names.fo("n", 2), self.names.fo("m", 2));
        let s = |k: usize, e: &str| sov(&self.names.slot_set(family, k), &[e]);
        let mut local = vec![];
        let mut passing = vec![];
        for (i, shape) in self.g.rules.iter().enumerate() {
            if !shape.eqs.is_empty() {
                let links = shape.eqs.iter().map(|&(u, w)| So::iff(s(u, &n), s(w, &n)));
                local.push(So::implies(self.label(i, &n), So::and_all(links)));
            }
            for (l, (_, args)) in shape.calls.iter().enumerate() {
                let links = args.iter().enumerate().map(|(p, &u)| So::iff(s(u, &n), s(p, &m)));
                passing.push(So::implies(
                    So::and(self.label(i, &n), sov(&self.names.edge(l), &[&n, &m])),
                    So::and_all(links),
                ));
            }
        }
        So::and(So::forall(&n, So::and_all(local)), So::forall(&n, So::forall(&m, So::and_all(passing))))
    }

    /// Existentially quantifies the slot sets of `family` in `body`.
    fn with_family(&self, family: char, body: So) -> So {
        (0..self.g.width).rev().fold(body, |f, k| So::exists_so(&self.names.slot_set(family, k), 1, f))
    }

    fn in_family(&self, family: char, k: usize, e: &str) -> So {
        sov(&self.names.slot_set(family, k), &[e])
    }

    /// Slot `b` of node `z` lies outside the value class of slot `a` of
    /// node `y`.
    #[cfg(test)]
    fn separable(&self, y: &str, a: usize, z: &str, b: usize) -> So {
        self.with_family(
            'S',
            So::and_all([self.closed('S'), self.in_family('S', a, y), So::not(self.in_family('S', b, z))]),
        )
    }

    fn sources(&self) -> Vec<(usize, usize, Source)> {
        let mut out = vec![];
        for (i, shape) in self.g.rules.iter().enumerate() {
            for a in 0..shape.slots.len() {
                for (r, args) in &shape.atoms {
                    for (l, &u) in args.iter().enumerate() {
                        if u == a {
                            out.push((i, a, Source::Atom(r.clone(), l)));
                        }
                    }
                }
                for (u, c) in &shape.const_eqs {
                    if *u == a {
                        out.push((i, a, Source::Const(c.clone())));
                    }
                }
                if shape.head == self.atom_pred && a < shape.arity {
                    out.push((i, a, Source::Param(a)));
                }
            }
        }
        out
    }

    /// Value of a source at node `y`: a guard on `y` and the value itself.
    fn value(&self, src: &Source, y: &str) -> (So, Val) {
        match src {
            Source::Atom(r, l) => (So::True, Val::Proj(self.names.proj(r, *l), y.to_string())),
            Source::Const(c) => (So::True, Val::Term(Term::Const(c.clone()))),
            Source::Param(j) => (So::eq(v(y), v(&self.root())), Val::Term(self.atom_args[*j].clone())),
        }
    }

    /// `a = b` (or `a != b`). Projections are functional and total wherever
    /// they are consulted, so a projection value is compared through its graph.
    fn compare(&self, a: &Val, b: &Val, equal: bool) -> So {
        let lit = |f: So| if equal { f } else { So::not(f) };
        match (a, b) {
            (Val::Term(s), Val::Term(t)) => lit(So::eq(s.clone(), t.clone())),
            (Val::Proj(z, y), Val::Term(t)) | (Val::Term(t), Val::Proj(z, y)) => {
                lit(So::Var(z.clone(), vec![v(y), t.clone()]))
            }
            (Val::Proj(z1, y1), Val::Proj(z2, y2)) => {
                let u = self.names.fo("z", 1);
                So::forall(&u, So::implies(sov(z1, &[y1, &u]), lit(sov(z2, &[y2, &u]))))
            }
        }
    }

    fn frame_formula(&self) -> So {
        let mut parts = vec![];
        let (n, n2, n3) = (self.names.fo("y", 1), self.names.fo("y", 2), self.names.fo("y", 3));
        let rel_rules: BTreeMap<&str, usize> = self.rels.iter().map(|(r, a)| (r.as_str(), *a)).collect();
        // Projections are functional.
        for (r, a) in &self.rels {
            for l in 0..*a {
                let z = self.names.proj(r, l);
                let (u, w) = (self.names.fo("z", 1), self.names.fo("z", 2));
                parts.push(So::forall_all(
                    &[n.clone(), u.clone(), w.clone()],
                    So::implies(So::and(sov(&z, &[&n, &u]), sov(&z, &[&n, &w])), So::eq(v(&u), v(&w))),
                ));
            }
        }
        let zs = |base: &str, a: usize| (1..=a).map(|i| self.names.fo(base, i)).collect::<Vec<_>>();
        let proj_all = |r: &str, node: &str, vals: &[String]| {
            So::and_all(vals.iter().enumerate().map(|(l, z)| sov(&self.names.proj(r, l), &[node, z])))
        };
        // Every atom of a node's rule is matched by a tuple.
        for (i, shape) in self.g.rules.iter().enumerate() {
            for (r, _) in &shape.atoms {
                let vals = zs("z", rel_rules[r.as_str()]);
                let tuple = So::Rel(r.clone(), vals.iter().map(|z| v(z)).collect());
                parts.push(So::forall(
                    &n,
                    So::implies(self.label(i, &n), So::exists_all(&vals, So::and(tuple, proj_all(r, &n, &vals)))),
                ));
            }
        }
        for (r, a) in &self.rels {
            let vals = zs("z", *a);
            let holder = self.with_relation(r, &n);
            // Distinct nodes take distinct tuples.
            if holder != So::False {
                let differ = So::or_all((0..*a).map(|l| {
                    let z = self.names.proj(r, l);
                    self.compare(&Val::Proj(z.clone(), n.clone()), &Val::Proj(z, n2.clone()), false)
                }));
                let both = So::and_all([So::neq(v(&n), v(&n2)), holder.clone(), self.with_relation(r, &n2)]);
                parts.push(So::forall_all(&[n.clone(), n2.clone()], So::implies(both, differ)));
            }
            // Every tuple is taken by some node.
            let tuple = So::Rel(r.clone(), vals.iter().map(|z| v(z)).collect());
            parts.push(So::forall_all(
                &vals,
                So::implies(tuple, So::exists(&n, So::and(holder, proj_all(r, &n, &vals)))),
            ));
        }
        let sources = self.sources();
        // All sources in the value class of a source's slot agree with it.
        // Sources are visited in order, so each pair is covered once.
        for (i, shape) in self.g.rules.iter().enumerate() {
            for a in 0..shape.slots.len() {
                let mut checks = vec![];
                for (s1, (_, _, src1)) in sources.iter().enumerate().filter(|(_, (j, b, _))| *j == i && *b == a) {
                    let (g1, t1) = self.value(src1, &n);
                    let mut inner = vec![];
                    for (k, c, src2) in &sources[s1..] {
                        let (g2, t2) = self.value(src2, &n2);
                        let ante = So::and_all([self.label(*k, &n2), self.in_family('S', *c, &n2), g2]);
                        inner.push(So::forall(&n2, So::implies(ante, self.compare(&t1, &t2, true))));
                    }
                    checks.push(So::implies(g1, So::and_all(inner)));
                }
                if checks.is_empty() {
                    continue;
                }
                let body = So::and_all([self.closed('S'), self.in_family('S', a, &n), So::and_all(checks)]);
                parts.push(So::forall(&n, So::implies(self.label(i, &n), self.with_family('S', body))));
            }
        }
        // Disequalities: the two sides lie in different classes and their
        // sources take different values.
        for (i, shape) in self.g.rules.iter().enumerate() {
            for (c, d, eq) in &shape.const_facts {
                let f = So::eq(Term::Const(c.clone()), Term::Const(d.clone()));
                parts.push(So::forall(&n, So::implies(self.label(i, &n), if *eq { f } else { So::not(f) })));
            }
            for (l, r) in &shape.neqs {
                // Per side: node variable, guard and value.
                let reach = |side: &Side, family: char, node: &str| -> Vec<(Option<String>, So, Val)> {
                    match side {
                        Side::Const(c) => vec![(None, So::True, Val::Term(Term::Const(c.clone())))],
                        Side::Slot(_) => sources
                            .iter()
                            .map(|(j, b, src)| {
                                let (g, t) = self.value(src, node);
                                (Some(node.to_string()), So::and_all([self.label(*j, node), self.in_family(family, *b, node), g]), t)
                            })
                            .collect(),
                    }
                };
                let mut body = vec![];
                for (qa, ga, ta) in reach(l, 'S', &n2) {
                    for (qb, gb, tb) in reach(r, 'U', &n3) {
                        let qs: Vec<String> = qa.iter().chain(&qb).cloned().collect();
                        body.push(So::forall_all(&qs, So::implies(So::and(ga.clone(), gb), self.compare(&ta, &tb, false))));
                    }
                }
                let mut f = So::and_all(body);
                if let Side::Slot(k) = r {
                    f = self.with_family('U', So::and_all([self.closed('U'), self.in_family('U', *k, &n), f]));
                }
                if let Side::Slot(k) = l {
                    let apart = match r {
                        Side::Slot(k2) => So::not(self.in_family('S', *k2, &n)),
                        Side::Const(_) => So::True,
                    };
                    f = self.with_family('S', So::and_all([self.closed('S'), self.in_family('S', *k, &n), apart, f]));
                }
                parts.push(So::forall(&n, So::implies(self.label(i, &n), f)));
            }
        }
        So::and_all(parts)
    }

    fn quantified(&self, body: So) -> So {
        let mut f = body;
        for (r, a) in self.rels.iter().rev() {
            for l in (0..*a).rev() {
                f = So::exists_so(&self.names.proj(r, l), 2, f);
            }
        }
        for j in (0..self.g.max_calls).rev() {
            f = So::exists_so(&self.names.edge(j), 2, f);
        }
        for i in (0..self.g.rules.len()).rev() {
            f = So::exists_so(&self.names.label(i), 1, f);
        }
        So::exists(&self.root(), f)
    }
}

fn split_atom(atom: &Slr, sid: &Sid) -> Result<(String, Vec<Term>)> {
    let Slr::Pred(p, ts) = atom else {
        return Err(Error::Invalid("the translation expects a predicate atom".into()));
    };
    match sid.arity(p) {
        None => Err(Error::UnknownPredicate(p.clone())),
        Some(a) if a != ts.len() => Err(Error::ArityMismatch { symbol: p.clone(), expected: a, found: ts.len() }),
        Some(_) => Ok((p.clone(), ts.clone())),
    }
}

fn check_split(sid: &Sid) -> Result<()> {
    for r in &sid.rules {
        let flat = r.flatten();
        let mut seen = BTreeSet::new();
        if let Some((rel, _)) = flat.rels.iter().find(|(rel, _)| !seen.insert(rel.as_str())) {
            return Err(Error::Invalid(format!("rule for `{}` has two `{rel}` atoms; split it first", r.head)));
        }
    }
    Ok(())
}

fn builder<'a>(g: &'a SlotFlowGraph, sid: &Sid, sig: &Signature, atom: &Slr) -> Result<Builder<'a>> {
    check_split(sid)?;
    let (atom_pred, atom_args) = split_atom(atom, sid)?;
    let mut rels: BTreeMap<String, usize> = sig.relations().map(|(r, a)| (r.to_string(), a)).collect();
    for (r, a) in sid.relations() {
        match rels.get(&r) {
            Some(&b) if b != a => return Err(Error::ArityMismatch { symbol: r, expected: b, found: a }),
            _ => {
                rels.insert(r, a);
            }
        }
    }
    Ok(Builder { g, names: Names::new(&atom_args, sig), atom_pred, atom_args, rels: rels.into_iter().collect() })
}

/// The tree part of the translation: the labels and edges form an
/// unfolding tree for the atom rooted at the root variable. Free in the
/// root, label and edge variables.
pub fn build_tree_formula(sid: &Sid, sig: &Signature, atom: &Slr) -> Result<So> {
    let g = SlotFlowGraph::new(sid);
    Ok(builder(&g, sid, sig, atom)?.tree_formula())
}

/// The frame part of the translation: the projections relate every node to
/// the tuples of its relation atoms, tuples and nodes are in bijection, and
/// equalities and disequalities hold along the slot flow. Free in the atom's
/// variables and in the tree and projection variables.
pub fn build_frame_formula(sid: &Sid, sig: &Signature, atom: &Slr) -> Result<So> {
    let g = SlotFlowGraph::new(sid);
    Ok(builder(&g, sid, sig, atom)?.frame_formula())
}

/// SO formula equivalent to `atom` under `sid`, which must have at most one
/// atom per relation symbol in each rule. Relations of `sig` missing from
/// the SID are constrained to be empty.
pub fn slr_to_so(sid: &Sid, sig: &Signature, atom: &Slr) -> Result<So> {
    let g = SlotFlowGraph::new(sid);
    let b = builder(&g, sid, sig, atom)?;
    Ok(b.quantified(So::and(b.tree_formula(), b.frame_formula())))
}

/// Witnesses for the outer existential quantifiers of [`slr_to_so`], read
/// off a derivation of the atom.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Certificate {
    pub store: Store,
    /// Elements standing for the tree nodes, in preorder.
    pub nodes: Vec<Elem>,
}

impl Certificate {
    /// `s` with the node elements added as padding.
    pub fn padded(&self, s: &Structure) -> Result<Structure> {
        let mut b = Structure::builder(s.signature());
        for (r, ts) in s.relations() {
            for t in ts {
                b = b.tuple(r, t);
            }
        }
        for (c, e) in s.constants() {
            b = b.constant(c, e);
        }
        for &e in s.padding().iter().chain(&self.nodes) {
            b = b.padding(e);
        }
        b.build()
    }
}

/// Reads the unfolding tree of `d` (a derivation of a predicate atom under
/// `sid`) into bindings for the variables of [`slr_to_so`]. Tree nodes are
/// fresh elements.
pub fn extract_certificate(s: &Structure, sid: &Sid, d: &Derivation) -> Result<Certificate> {
    let g = SlotFlowGraph::new(sid);
    let b = builder(&g, sid, s.signature(), &d.formula)?;
    let root = tree_root(d)?;
    let mut nodes = vec![];
    let mut labels: Vec<BTreeSet<Tuple>> = vec![BTreeSet::new(); g.rules.len()];
    let mut edges: Vec<BTreeSet<Tuple>> = vec![BTreeSet::new(); g.max_calls];
    let mut projs: BTreeMap<(String, usize), BTreeSet<Tuple>> = BTreeMap::new();
    fn go(
        n: &DerivNode,
        nodes: &mut Vec<Elem>,
        labels: &mut [BTreeSet<Tuple>],
        edges: &mut [BTreeSet<Tuple>],
        projs: &mut BTreeMap<(String, usize), BTreeSet<Tuple>>,
    ) -> Result<Elem> {
        let me = Elem::fresh();
        nodes.push(me);
        let i = n.rule.ok_or_else(|| Error::BadDerivation("inner node without a rule".into()))?;
        labels.get_mut(i).ok_or_else(|| Error::BadDerivation(format!("no rule {i}")))?.insert(vec![me]);
        for (r, t) in &n.consumed {
            for (l, &e) in t.iter().enumerate() {
                projs.entry((r.clone(), l)).or_default().insert(vec![me, e]);
            }
        }
        for (j, c) in n.children.iter().enumerate() {
            let child = go(c, nodes, labels, edges, projs)?;
            edges.get_mut(j).ok_or_else(|| Error::BadDerivation("too many children".into()))?.insert(vec![me, child]);
        }
        Ok(me)
    }
    let r = go(root, &mut nodes, &mut labels, &mut edges, &mut projs)?;
    let mut store = Store::new().bind(&b.root(), r);
    for (i, set) in labels.into_iter().enumerate() {
        store = store.bind_so(&b.names.label(i), 1, set)?;
    }
    for (j, set) in edges.into_iter().enumerate() {
        store = store.bind_so(&b.names.edge(j), 2, set)?;
    }
    for (r, a) in &b.rels {
        for l in 0..*a {
            let set = projs.remove(&(r.clone(), l)).unwrap_or_default();
            store = store.bind_so(&b.names.proj(r, l), 2, set)?;
        }
    }
    Ok(Certificate { store, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slr::{check_slr, parse_sid, parse_slr, split_relation_atoms};
    use crate::so::{check_so, check_so_with_hint};

    const LS: &str = "ls(x,y) <= x = y;\nls(x,y) <= ex z . H(x,z) * ls(z,y);";

    fn hsig() -> Signature {
        Signature::new().with_relation("H", 2).unwrap()
    }

    fn heap(edges: &[(u64, u64)]) -> Structure {
        let mut b = Structure::builder(&hsig());
        for &(x, y) in edges {
            b = b.tuple("H", &[Elem(x), Elem(y)]);
        }
        b.build().unwrap()
    }

    fn set(ts: &[&[Elem]]) -> BTreeSet<Tuple> {
        ts.iter().map(|t| t.to_vec()).collect()
    }

    /// Checks the translation against the SLR checker: positives through
    /// their certificates, negatives by search over a carrier of six.
    fn agrees(sid: &Sid, sig: &Signature, atom: &Slr, s: &Structure, nu: &Store) -> bool {
        let phi = slr_to_so(sid, sig, atom).unwrap();
        match check_slr(s, nu, atom, sid).unwrap() {
            Some(d) => {
                let c = extract_certificate(s, sid, &d).unwrap();
                check_so_with_hint(&c.padded(s).unwrap(), nu, &phi, &c.store, Some(c.nodes.len())).unwrap()
            }
            None => {
                let mut base = s.dom();
                base.extend(nu.image());
                !check_so(s, nu, &phi, Some(6usize.saturating_sub(base.len()))).unwrap()
            }
        }
    }

    #[test]
    fn slot_graph_shapes() {
        let sid = parse_sid("A(x) <= ex y . R(x,c) * B(y,c) * x = y;\nB(x,y) <= x != c;").unwrap();
        let g = SlotFlowGraph::new(&sid);
        assert_eq!(g.width, 4);
        assert_eq!(g.max_calls, 1);
        let r = &g.rules[0];
        assert_eq!(r.slots, ["x", "y", "#c", "#c"]);
        assert_eq!(r.eqs, [(0, 1)]);
        assert_eq!(r.atoms, [("R".to_string(), vec![0, 2])]);
        assert_eq!(r.calls, [("B".to_string(), vec![1, 3])]);
        assert_eq!(g.rules[1].neqs, [(Side::Slot(0), Side::Const("c".into()))]);
    }

    #[test]
    fn rejects_unsplit_and_non_atoms() {
        let sid = parse_sid("A() <= ex x, y . R(x) * R(y);").unwrap();
        let sig = Signature::new().with_relation("R", 1).unwrap();
        let atom = Slr::Pred("A".into(), vec![]);
        assert!(matches!(slr_to_so(&sid, &sig, &atom), Err(Error::Invalid(_))));
        let split = split_relation_atoms(&sid);
        assert!(slr_to_so(&split, &sig, &atom).is_ok());
        assert!(matches!(slr_to_so(&split, &sig, &Slr::Emp), Err(Error::Invalid(_))));
    }

    #[test]
    fn even_sid_translation() {
        let sid = split_relation_atoms(&parse_sid("A() <= ex x, y . R(x) * R(y) * A();\nA() <= emp;").unwrap());
        let sig = Signature::new().with_relation("R", 1).unwrap();
        let atom = Slr::Pred("A".into(), vec![]);
        for n in 0..=4u64 {
            let mut b = Structure::builder(&sig);
            for i in 1..=n {
                b = b.tuple("R", &[Elem(i)]);
            }
            let s = b.build().unwrap();
            assert_eq!(check_slr(&s, &Store::new(), &atom, &sid).unwrap().is_some(), n % 2 == 0);
            assert!(agrees(&sid, &sig, &atom, &s, &Store::new()), "{n} elements");
        }
    }

    #[test]
    fn list_segment_translation() {
        let sid = parse_sid(LS).unwrap();
        let atom = parse_slr("ls(a,b)", &sid, &hsig()).unwrap();
        let cases: [&[(u64, u64)]; 4] = [&[], &[(1, 2)], &[(1, 2), (2, 3)], &[(1, 1)]];
        for edges in cases {
            let s = heap(edges);
            for a in 1..=4 {
                for b in 1..=4 {
                    let nu = Store::new().bind("a", Elem(a)).bind("b", Elem(b));
                    assert!(agrees(&sid, &hsig(), &atom, &s, &nu), "{edges:?} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn constant_atom_translation() {
        let sig = Signature::new().with_relation("R", 2).unwrap().with_constant("c1").unwrap();
        let sid = parse_sid("A() <= R(c1,c1);").unwrap();
        let atom = Slr::Pred("A".into(), vec![]);
        let phi = slr_to_so(&sid, &sig, &atom).unwrap();
        let (a, b) = (Elem(1), Elem(2));
        let build = |ts: &[[Elem; 2]]| {
            let mut bd = Structure::builder(&sig).constant("c1", a);
            for t in ts {
                bd = bd.tuple("R", t);
            }
            bd.padding(b).build().unwrap()
        };
        let cases: [(&[[Elem; 2]], bool); 4] = [(&[[a, a]], true), (&[], false), (&[[a, b]], false), (&[[a, a], [b, b]], false)];
        for (ts, want) in cases {
            assert_eq!(check_so(&build(ts), &Store::new(), &phi, Some(2)).unwrap(), want, "{ts:?}");
        }
    }

    fn tree_setup() -> (Sid, Signature, Slr, Builder<'static>) {
        let sid = parse_sid(LS).unwrap();
        let g: &'static SlotFlowGraph = Box::leak(Box::new(SlotFlowGraph::new(&sid)));
        let atom = parse_slr("ls(a,b)", &sid, &hsig()).unwrap();
        let b = builder(g, &sid, &hsig(), &atom).unwrap();
        (sid, hsig(), atom, b)
    }

    /// Binds the tree variables: `labels[i]` holds the nodes of rule i.
    fn tree_store(b: &Builder, root: Elem, labels: &[&[Elem]], edges: &[(Elem, Elem)]) -> Store {
        let mut st = Store::new().bind(&b.root(), root);
        for (i, ns) in labels.iter().enumerate() {
            st = st.bind_so(&b.names.label(i), 1, ns.iter().map(|&e| vec![e]).collect()).unwrap();
        }
        st.bind_so(&b.names.edge(0), 2, edges.iter().map(|&(p, c)| vec![p, c]).collect()).unwrap()
    }

    #[test]
    fn tree_formula_cases() {
        let (_, sig, _, b) = tree_setup();
        let t = b.tree_formula();
        let s = Structure::empty(&sig).unwrap().pad(3);
        let (n1, n2, n3) = (Elem(101), Elem(102), Elem(103));
        let s = Structure::builder(&sig).padding(n1).padding(n2).padding(n3).build().unwrap_or(s);
        let ok = tree_store(&b, n1, &[&[n2], &[n1]], &[(n1, n2)]);
        assert!(check_so(&s, &ok, &t, Some(0)).unwrap());
        let cycle = tree_store(&b, n1, &[&[], &[n1, n2]], &[(n1, n2), (n2, n1)]);
        assert!(!check_so(&s, &cycle, &t, Some(0)).unwrap());
        let overlap = tree_store(&b, n1, &[&[n1, n2], &[n1]], &[(n1, n2)]);
        assert!(!check_so(&s, &overlap, &t, Some(0)).unwrap());
        let stray = tree_store(&b, n1, &[&[n2, n3], &[n1]], &[(n1, n2)]);
        assert!(!check_so(&s, &stray, &t, Some(0)).unwrap());
    }

    /// The certificate of ls(1,3) over 1 -> 2 -> 3, with the frame formula.
    fn frame_setup() -> (Builder<'static>, Structure, Store, Certificate) {
        let (sid, _, atom, b) = tree_setup();
        let s = heap(&[(1, 2), (2, 3)]);
        let nu = Store::new().bind("a", Elem(1)).bind("b", Elem(3));
        let d = check_slr(&s, &nu, &atom, &sid).unwrap().unwrap();
        let c = extract_certificate(&s, &sid, &d).unwrap();
        (b, s, nu, c)
    }

    fn frame_holds(b: &Builder, s: &Structure, nu: &Store, c: &Certificate, store: &Store) -> bool {
        let mut full = nu.clone();
        full.fo.extend(store.fo.clone());
        full.so.extend(store.so.clone());
        let f = So::and(b.tree_formula(), b.frame_formula());
        check_so(&c.padded(s).unwrap(), &full, &f, Some(c.nodes.len())).unwrap()
    }

    #[test]
    fn frame_formula_cases() {
        let (b, s, nu, c) = frame_setup();
        assert_eq!(c.nodes.len(), 3);
        assert!(frame_holds(&b, &s, &nu, &c, &c.store));
        let z1 = b.names.proj("H", 0);
        let z2 = b.names.proj("H", 1);
        // A non-functional projection.
        let mut bad = c.store.clone();
        let mut t = bad.so[&z2].tuples.clone();
        t.insert(vec![c.nodes[0], Elem(3)]);
        bad = bad.bind_so(&z2, 2, t).unwrap();
        assert!(!frame_holds(&b, &s, &nu, &c, &bad));
        // Two nodes taking the same tuple.
        let (n0, n1) = (c.nodes[0], c.nodes[1]);
        let shared = c
            .store
            .clone()
            .bind_so(&z1, 2, set(&[&[n0, Elem(1)], &[n1, Elem(1)]]))
            .unwrap()
            .bind_so(&z2, 2, set(&[&[n0, Elem(2)], &[n1, Elem(2)]]))
            .unwrap();
        assert!(!frame_holds(&b, &s, &nu, &c, &shared));
        // The root parameter is tied to the first tuple's source.
        let moved = nu.clone().bind("a", Elem(2));
        assert!(!frame_holds(&b, &s, &moved, &c, &c.store));
    }

    #[test]
    fn leaf_certificate() {
        let sid = parse_sid(LS).unwrap();
        let atom = parse_slr("ls(a,b)", &sid, &hsig()).unwrap();
        let s = heap(&[]);
        let nu = Store::new().bind("a", Elem(1)).bind("b", Elem(1));
        let d = check_slr(&s, &nu, &atom, &sid).unwrap().unwrap();
        let c = extract_certificate(&s, &sid, &d).unwrap();
        assert_eq!(c.nodes.len(), 1);
        assert_eq!(c.store.so["X1"].tuples, set(&[&[c.nodes[0]]]));
        assert!(c.store.so["Y1"].tuples.is_empty());
        assert_eq!(c.store.get("x"), Some(c.nodes[0]));
    }

    #[test]
    fn same_value_matches_slot_classes() {
        let (b, s, nu, c) = frame_setup();
        let (sid, _, atom, _) = tree_setup();
        let d = check_slr(&s, &nu, &atom, &sid).unwrap().unwrap();
        let classes = b.g.classes(&d).unwrap();
        let padded = c.padded(&s).unwrap();
        let (y, z) = (b.names.fo("y", 1), b.names.fo("y", 2));
        for (&(n, a), k) in &classes {
            for (&(m, bb), k2) in &classes {
                let f = b.separable(&y, a, &z, bb);
                let st = c.store.clone().bind(&y, c.nodes[n]).bind(&z, c.nodes[m]);
                let got = check_so(&padded, &st, &f, Some(c.nodes.len())).unwrap();
                assert_eq!(!got, k == k2, "({n},{a}) vs ({m},{bb})");
            }
        }
    }

    #[test]
    fn output_reparses() {
        let (sid, sig, atom, _) = tree_setup();
        let phi = slr_to_so(&sid, &sig, &atom).unwrap();
        assert_eq!(crate::so::parse_so(&phi.to_string(), &sig).unwrap(), phi);
    }
}
