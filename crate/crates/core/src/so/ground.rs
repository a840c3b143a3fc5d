//! Grounding of second-order formulas over a finite carrier into CNF.
//!
//! First-order quantifiers are expanded. A second-order quantifier that is
//! effectively existential (an `ex2` under an even number of negations, or an
//! `all2` under an odd number) becomes one propositional variable per tuple
//! position; the others are expanded over all values. The formula or its
//! negation is grounded, whichever needs fewer expansions.

use std::collections::HashMap;
use std::rc::Rc;

use super::eval::{Engine, Env, SoVal};
use super::So;
use crate::error::{Error, Result};
use crate::sat::{Lit, Solver};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Pol {
    Pos,
    Neg,
    Both,
}

impl Pol {
    fn flip(self) -> Pol {
        match self {
            Pol::Pos => Pol::Neg,
            Pol::Neg => Pol::Pos,
            Pol::Both => Pol::Both,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum G {
    T,
    F,
    L(Lit),
}

impl G {
    fn not(self) -> G {
        match self {
            G::T => G::F,
            G::F => G::T,
            G::L(l) => G::L(!l),
        }
    }
}

#[derive(Clone)]
enum Bind {
    Val(Rc<SoVal>),
    Sym(u32, Rc<Vec<Lit>>),
}

/// Largest number of values a second-order quantifier may be expanded into.
const MAX_EXPANSION: f64 = 1e5;
/// Largest number of clauses produced before giving up.
const MAX_CLAUSES: usize = 30_000_000;

pub(super) struct Grounder<'a> {
    eng: &'a Engine,
    solver: Solver,
    fo: Vec<(String, u32)>,
    so: Vec<(String, Bind)>,
    sym_ids: u32,
    memo: HashMap<(usize, Pol, Vec<u64>), G>,
    free: HashMap<usize, (Vec<String>, Vec<String>)>,
}

/// Expansion cost of grounding `f` at polarity `pol` (saturating).
fn cost(f: &So, pol: Pol, n: f64) -> f64 {
    match f {
        So::True | So::False | So::Eq(..) | So::Rel(..) | So::Var(..) => 1.0,
        So::Not(a) => cost(a, pol.flip(), n),
        So::And(a, b) | So::Or(a, b) => cost(a, pol, n) + cost(b, pol, n),
        So::Implies(a, b) => cost(a, pol.flip(), n) + cost(b, pol, n),
        So::Iff(a, b) => cost(a, Pol::Both, n) + cost(b, Pol::Both, n),
        So::ExistsFo(_, a) | So::ForallFo(_, a) => n * cost(a, pol, n),
        So::ExistsSo(_, k, a) | So::ForallSo(_, k, a) => {
            let m = n.powi(*k as i32);
            let skolem = match f {
                So::ExistsSo(..) => pol == Pol::Pos,
                _ => pol == Pol::Neg,
            };
            if skolem {
                m + cost(a, pol, n)
            } else {
                2f64.powf(m) * cost(a, pol, n)
            }
        }
    }
}

impl<'a> Grounder<'a> {
    pub(super) fn decide(eng: &'a Engine, phi: &So, env: Env) -> Result<bool> {
        let n = eng.n() as f64;
        let negate = cost(phi, Pol::Neg, n) < cost(phi, Pol::Pos, n);
        let mut g = Grounder {
            eng,
            solver: Solver::new(),
            fo: env.fo,
            so: env.so.into_iter().map(|(x, v)| (x, Bind::Val(v))).collect(),
            sym_ids: 0,
            memo: HashMap::new(),
            free: HashMap::new(),
        };
        let pol = if negate { Pol::Neg } else { Pol::Pos };
        let root = g.ground(phi, pol)?;
        let root = if negate { root.not() } else { root };
        let sat = match root {
            G::T => true,
            G::F => false,
            G::L(l) => {
                g.solver.add_clause(&[l]);
                g.solver.solve()
            }
        };
        Ok(if negate { !sat } else { sat })
    }

    fn new_lit(&mut self) -> Result<Lit> {
        if self.solver.num_clauses() > MAX_CLAUSES {
            return Err(Error::CarrierTooLarge { size: self.eng.n(), cutoff: self.eng.n() - 1 });
        }
        Ok(Lit::pos(self.solver.new_var()))
    }

    /// A literal equivalent (as far as `pol` requires) to the conjunction.
    fn and(&mut self, parts: Vec<G>, pol: Pol) -> Result<G> {
        let mut lits = vec![];
        for p in parts {
            match p {
                G::F => return Ok(G::F),
                G::T => {}
                G::L(l) => lits.push(l),
            }
        }
        lits.sort();
        lits.dedup();
        if lits.windows(2).any(|w| w[0] == !w[1]) {
            return Ok(G::F);
        }
        match lits.len() {
            0 => Ok(G::T),
            1 => Ok(G::L(lits[0])),
            _ => {
                let g = self.new_lit()?;
                if pol != Pol::Neg {
                    for &l in &lits {
                        self.solver.add_clause(&[!g, l]);
                    }
                }
                if pol != Pol::Pos {
                    let mut c: Vec<Lit> = lits.iter().map(|&l| !l).collect();
                    c.push(g);
                    self.solver.add_clause(&c);
                }
                Ok(G::L(g))
            }
        }
    }

    fn or(&mut self, parts: Vec<G>, pol: Pol) -> Result<G> {
        let neg = parts.into_iter().map(G::not).collect();
        Ok(self.and(neg, pol.flip())?.not())
    }

    fn lookup_fo(&self, x: &str) -> u32 {
        self.fo.iter().rev().find(|(y, _)| y == x).map(|(_, v)| *v).expect("bound")
    }

    fn lookup_so(&self, x: &str) -> &Bind {
        self.so.iter().rev().find(|(y, _)| y == x).map(|(_, v)| v).expect("bound")
    }

    fn term(&self, t: &crate::slr::Term) -> u32 {
        match t {
            crate::slr::Term::Var(x) => self.lookup_fo(x),
            crate::slr::Term::Const(c) => self.eng.consts[c],
        }
    }

    /// Memo key: the node and the values of its free variables.
    fn key(&mut self, f: &So, pol: Pol) -> (usize, Pol, Vec<u64>) {
        let id = f as *const So as usize;
        let (fo, so) = self
            .free
            .entry(id)
            .or_insert_with(|| (f.free_vars().into_iter().collect(), f.free_so_vars().into_keys().collect()))
            .clone();
        let mut vals: Vec<u64> = fo.iter().map(|x| self.lookup_fo(x) as u64).collect();
        for x in &so {
            match self.lookup_so(x) {
                Bind::Sym(i, _) => vals.push(1 << 40 | *i as u64),
                Bind::Val(v) => {
                    vals.push(2 << 40);
                    vals.extend(v.bits.iter().copied());
                }
            }
        }
        (id, pol, vals)
    }

    fn ground(&mut self, f: &So, pol: Pol) -> Result<G> {
        match f {
            So::True => Ok(G::T),
            So::False => Ok(G::F),
            So::Eq(a, b) => Ok(if self.term(a) == self.term(b) { G::T } else { G::F }),
            So::Rel(r, ts) => {
                let t: Vec<u32> = ts.iter().map(|t| self.term(t)).collect();
                Ok(if self.eng.has(r, &t) { G::T } else { G::F })
            }
            So::Var(x, ts) => {
                let p = self.eng.pos(ts.iter().map(|t| self.term(t)));
                Ok(match self.lookup_so(x) {
                    Bind::Val(v) => {
                        if v.get(p) {
                            G::T
                        } else {
                            G::F
                        }
                    }
                    Bind::Sym(_, lits) => G::L(lits[p]),
                })
            }
            So::Not(a) => Ok(self.ground(a, pol.flip())?.not()),
            So::And(..) => {
                let mut parts = vec![];
                let mut conj = vec![];
                flatten_and(f, &mut conj);
                for c in conj {
                    let g = self.ground(c, pol)?;
                    if g == G::F {
                        return Ok(G::F);
                    }
                    parts.push(g);
                }
                self.and(parts, pol)
            }
            So::Or(..) => {
                let mut disj = vec![];
                flatten_or(f, &mut disj);
                let mut parts = vec![];
                for d in disj {
                    let g = self.ground(d, pol)?;
                    if g == G::T {
                        return Ok(G::T);
                    }
                    parts.push(g);
                }
                self.or(parts, pol)
            }
            So::Implies(a, b) => {
                let ga = self.ground(a, pol.flip())?;
                if ga == G::F {
                    return Ok(G::T);
                }
                let gb = self.ground(b, pol)?;
                self.or(vec![ga.not(), gb], pol)
            }
            So::Iff(a, b) => {
                let ga = self.ground(a, Pol::Both)?;
                let gb = self.ground(b, Pol::Both)?;
                let x = self.or(vec![ga.not(), gb], Pol::Both)?;
                let y = self.or(vec![gb.not(), ga], Pol::Both)?;
                self.and(vec![x, y], pol)
            }
            So::ExistsFo(..) | So::ForallFo(..) | So::ExistsSo(..) | So::ForallSo(..) => {
                let key = self.key(f, pol);
                if let Some(&g) = self.memo.get(&key) {
                    return Ok(g);
                }
                let g = self.quantifier(f, pol)?;
                self.memo.insert(key, g);
                Ok(g)
            }
        }
    }

    fn quantifier(&mut self, f: &So, pol: Pol) -> Result<G> {
        match f {
            So::ExistsFo(x, a) | So::ForallFo(x, a) => {
                let exists = matches!(f, So::ExistsFo(..));
                let mut parts = vec![];
                for v in 0..self.eng.n() as u32 {
                    self.fo.push((x.clone(), v));
                    let g = self.ground(a, pol);
                    self.fo.pop();
                    let g = g?;
                    if (exists && g == G::T) || (!exists && g == G::F) {
                        return Ok(g);
                    }
                    parts.push(g);
                }
                if exists {
                    self.or(parts, pol)
                } else {
                    self.and(parts, pol)
                }
            }
            So::ExistsSo(x, k, a) | So::ForallSo(x, k, a) => {
                let exists = matches!(f, So::ExistsSo(..));
                let m = self.eng.n().pow(*k as u32);
                let skolem = if exists { pol == Pol::Pos } else { pol == Pol::Neg };
                if skolem {
                    let lits = (0..m).map(|_| self.new_lit()).collect::<Result<Vec<_>>>()?;
                    self.sym_ids += 1;
                    self.so.push((x.clone(), Bind::Sym(self.sym_ids, Rc::new(lits))));
                    let g = self.ground(a, pol);
                    self.so.pop();
                    return g;
                }
                if 2f64.powi(m as i32) > MAX_EXPANSION {
                    return Err(Error::CarrierTooLarge { size: self.eng.n(), cutoff: self.eng.n() - 1 });
                }
                let mut parts = vec![];
                for mask in 0u64..(1u64 << m) {
                    let mut v = SoVal::empty(*k, self.eng.n());
                    for p in 0..m {
                        if mask >> p & 1 == 1 {
                            v.set(p);
                        }
                    }
                    self.so.push((x.clone(), Bind::Val(Rc::new(v))));
                    let g = self.ground(a, pol);
                    self.so.pop();
                    let g = g?;
                    if (exists && g == G::T) || (!exists && g == G::F) {
                        return Ok(g);
                    }
                    parts.push(g);
                }
                if exists {
                    self.or(parts, pol)
                } else {
                    self.and(parts, pol)
                }
            }
            _ => unreachable!(),
        }
    }
}

fn flatten_and<'f>(f: &'f So, out: &mut Vec<&'f So>) {
    match f {
        So::And(a, b) => {
            flatten_and(a, out);
            flatten_and(b, out);
        }
        _ => out.push(f),
    }
}

fn flatten_or<'f>(f: &'f So, out: &mut Vec<&'f So>) {
    match f {
        So::Or(a, b) => {
            flatten_or(a, out);
            flatten_or(b, out);
        }
        _ => out.push(f),
    }
}
