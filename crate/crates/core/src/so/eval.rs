use std::collections::{BTreeSet, HashMap, HashSet};
use std::rc::Rc;

use super::ground::Grounder;
use super::So;
use crate::error::{Error, Result};
use crate::slr::Term;
use crate::structure::{Elem, Store, Structure};

/// Carrier size limits; `RELOG_CUTOFF_SO` and `RELOG_CUTOFF_MSO` override
/// the defaults.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cutoffs {
    /// Largest carrier for formulas quantifying second-order variables of
    /// arity ≥ 2.
    pub so: usize,
    /// Largest carrier for monadic formulas.
    pub mso: usize,
}

impl Default for Cutoffs {
    fn default() -> Self {
        Cutoffs { so: 8, mso: 12 }
    }
}

impl Cutoffs {
    pub fn from_env() -> Cutoffs {
        let get = |k: &str, d: usize| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
        let d = Cutoffs::default();
        Cutoffs { so: get("RELOG_CUTOFF_SO", d.so), mso: get("RELOG_CUTOFF_MSO", d.mso) }
    }

    fn limit(&self, phi: &So) -> usize {
        if phi.max_quantified_so_arity() >= 2 {
            self.so
        } else {
            self.mso
        }
    }
}

/// A second-order value: a set of tuples over the carrier, as a bitset over
/// tuple positions `t0 + t1*n + t2*n^2 + ...`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub(super) struct SoVal {
    pub arity: usize,
    pub bits: Vec<u64>,
}

impl SoVal {
    pub fn empty(arity: usize, n: usize) -> SoVal {
        let m = n.pow(arity as u32);
        SoVal { arity, bits: vec![0; m.div_ceil(64).max(1)] }
    }

    pub fn get(&self, pos: usize) -> bool {
        self.bits[pos / 64] >> (pos % 64) & 1 == 1
    }

    pub fn set(&mut self, pos: usize) {
        self.bits[pos / 64] |= 1 << (pos % 64);
    }
}

/// Elements over which quantifiers range: the support, the values bound by
/// the store, the structure's own padding, topped up with fresh elements so
/// that at least `padding` (default `2^qr`) elements lie outside the support
/// and the store image.
pub fn carrier_for(s: &Structure, nu: &Store, padding: Option<usize>, qr: usize) -> Vec<Elem> {
    let mut base: BTreeSet<Elem> = s.dom();
    base.extend(nu.image());
    let extra: Vec<Elem> = s.padding().iter().copied().filter(|e| !base.contains(e)).collect();
    let want = padding.unwrap_or(1usize << qr.min(24));
    let mut out: Vec<Elem> = base.into_iter().chain(extra.iter().copied()).collect();
    for _ in extra.len()..want {
        out.push(Elem::fresh());
    }
    out
}

/// Evaluation context over a fixed carrier.
pub struct Engine {
    pub carrier: Vec<Elem>,
    pub(super) idx: HashMap<Elem, u32>,
    pub(super) rels: HashMap<String, HashSet<Vec<u32>>>,
    pub(super) consts: HashMap<String, u32>,
}

#[derive(Clone, Default)]
pub(super) struct Env {
    pub fo: Vec<(String, u32)>,
    pub so: Vec<(String, Rc<SoVal>)>,
}

impl Env {
    pub fn fo(&self, x: &str) -> u32 {
        self.fo.iter().rev().find(|(y, _)| y == x).map(|(_, v)| *v).expect("free variables are bound")
    }

    pub fn so(&self, x: &str) -> Option<&Rc<SoVal>> {
        self.so.iter().rev().find(|(y, _)| y == x).map(|(_, v)| v)
    }
}

impl Engine {
    pub fn new(s: &Structure, carrier: Vec<Elem>) -> Engine {
        let idx: HashMap<Elem, u32> = carrier.iter().enumerate().map(|(i, e)| (*e, i as u32)).collect();
        let rels = s
            .relations()
            .map(|(r, ts)| (r.to_string(), ts.iter().map(|t| t.iter().map(|e| idx[e]).collect()).collect()))
            .collect();
        let consts = s.constants().map(|(c, e)| (c.to_string(), idx[&e])).collect();
        Engine { carrier, idx, rels, consts }
    }

    pub fn n(&self) -> usize {
        self.carrier.len()
    }

    pub(super) fn term(&self, t: &Term, env: &Env) -> u32 {
        match t {
            Term::Var(x) => env.fo(x),
            Term::Const(c) => self.consts[c],
        }
    }

    pub(super) fn pos(&self, vals: impl Iterator<Item = u32>) -> usize {
        let n = self.n();
        let mut p = 0;
        let mut m = 1;
        for v in vals {
            p += v as usize * m;
            m *= n;
        }
        p
    }

    pub(super) fn has(&self, r: &str, t: &[u32]) -> bool {
        self.rels.get(r).is_some_and(|set| set.contains(t))
    }

    /// Binds the store's values into an environment.
    pub(super) fn env_of(&self, nu: &Store, phi: &So) -> Result<Env> {
        let mut env = Env::default();
        for x in phi.free_vars() {
            let e = nu.get(&x).ok_or_else(|| Error::UnboundVariable(x.clone()))?;
            env.fo.push((x, self.idx[&e]));
        }
        for (x, a) in phi.free_so_vars() {
            let v = nu.get_so(&x).ok_or_else(|| Error::UnboundVariable(x.clone()))?;
            if v.arity != a {
                return Err(Error::ArityMismatch { symbol: x, expected: v.arity, found: a });
            }
            let mut val = SoVal::empty(a, self.n());
            for t in &v.tuples {
                val.set(self.pos(t.iter().map(|e| self.idx[e])));
            }
            env.so.push((x, Rc::new(val)));
        }
        Ok(env)
    }

    /// Direct recursive evaluation, enumerating second-order values by
    /// increasing cardinality.
    pub(super) fn eval(&self, f: &So, env: &mut Env) -> bool {
        match f {
            So::True => true,
            So::False => false,
            So::Eq(a, b) => self.term(a, env) == self.term(b, env),
            So::Rel(r, ts) => {
                let t: Vec<u32> = ts.iter().map(|t| self.term(t, env)).collect();
                self.has(r, &t)
            }
            So::Var(x, ts) => {
                let p = self.pos(ts.iter().map(|t| self.term(t, env)));
                env.so(x).expect("free variables are bound").get(p)
            }
            So::Not(a) => !self.eval(a, env),
            So::And(a, b) => self.eval(a, env) && self.eval(b, env),
            So::Or(a, b) => self.eval(a, env) || self.eval(b, env),
            So::Implies(a, b) => !self.eval(a, env) || self.eval(b, env),
            So::Iff(a, b) => self.eval(a, env) == self.eval(b, env),
            So::ExistsFo(x, a) | So::ForallFo(x, a) => {
                let want = matches!(f, So::ExistsFo(..));
                for v in 0..self.n() as u32 {
                    env.fo.push((x.clone(), v));
                    let r = self.eval(a, env);
                    env.fo.pop();
                    if r == want {
                        return want;
                    }
                }
                !want
            }
            So::ExistsSo(x, k, a) | So::ForallSo(x, k, a) => {
                let want = matches!(f, So::ExistsSo(..));
                let m = self.n().pow(*k as u32);
                let mut found = false;
                for_each_subset(m, &mut |set: &[usize]| {
                    let mut val = SoVal::empty(*k, self.n());
                    for &p in set {
                        val.set(p);
                    }
                    env.so.push((x.clone(), Rc::new(val)));
                    let r = self.eval(a, env);
                    env.so.pop();
                    if r == want {
                        found = true;
                    }
                    !found
                });
                if found {
                    want
                } else {
                    !want
                }
            }
        }
    }
}

/// Visits the subsets of `0..m` by increasing cardinality, then
/// lexicographically; stops when the callback returns false.
fn for_each_subset(m: usize, f: &mut dyn FnMut(&[usize]) -> bool) {
    for c in 0..=m {
        let mut idx: Vec<usize> = (0..c).collect();
        loop {
            if !f(&idx) {
                return;
            }
            // Advance to the next combination of size c.
            let mut i = c;
            while i > 0 && idx[i - 1] == m - c + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..c {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
}

/// Number of evaluation steps of the naive evaluator (saturating).
fn naive_cost(f: &So, n: usize) -> f64 {
    match f {
        So::True | So::False | So::Eq(..) | So::Rel(..) | So::Var(..) => 1.0,
        So::Not(a) => naive_cost(a, n),
        So::And(a, b) | So::Or(a, b) | So::Implies(a, b) | So::Iff(a, b) => naive_cost(a, n) + naive_cost(b, n),
        So::ExistsFo(_, a) | So::ForallFo(_, a) => n as f64 * naive_cost(a, n),
        So::ExistsSo(_, k, a) | So::ForallSo(_, k, a) => 2f64.powf((n as f64).powi(*k as i32)) * naive_cost(a, n),
    }
}

const NAIVE_BUDGET: f64 = 2e6;

fn prepare(s: &Structure, nu: &Store, phi: &So, padding: Option<usize>, cutoffs: Cutoffs) -> Result<Engine> {
    phi.validate(s.signature())?;
    let carrier = carrier_for(s, nu, padding, phi.quantifier_rank());
    let limit = cutoffs.limit(phi);
    if carrier.len() > limit {
        return Err(Error::CarrierTooLarge { size: carrier.len(), cutoff: limit });
    }
    Ok(Engine::new(s, carrier))
}

/// Decides `s, nu |= phi` under weak semantics over the padded carrier.
/// Small search spaces are enumerated directly; larger ones are grounded to
/// propositional logic and handed to the SAT solver.
pub fn check_so(s: &Structure, nu: &Store, phi: &So, padding: Option<usize>) -> Result<bool> {
    let eng = prepare(s, nu, phi, padding, Cutoffs::from_env())?;
    eng.decide(nu, phi)
}

/// The reference evaluator: always enumerates.
pub fn check_so_naive(s: &Structure, nu: &Store, phi: &So, padding: Option<usize>) -> Result<bool> {
    let eng = prepare(s, nu, phi, padding, Cutoffs::from_env())?;
    let mut env = eng.env_of(nu, phi)?;
    Ok(eng.eval(phi, &mut env))
}

impl Engine {
    pub fn decide(&self, nu: &Store, phi: &So) -> Result<bool> {
        let mut env = self.env_of(nu, phi)?;
        if naive_cost(phi, self.n()) <= NAIVE_BUDGET {
            return Ok(self.eval(phi, &mut env));
        }
        Grounder::decide(self, phi, env)
    }
}

/// Instantiates the outermost existential quantifiers whose variables are
/// bound in `hints`, then checks the rest. A true answer implies
/// [`check_so`] is true; a false answer only says the hints do not work.
pub fn check_so_with_hint(s: &Structure, nu: &Store, phi: &So, hints: &Store, padding: Option<usize>) -> Result<bool> {
    let mut nu = nu.clone();
    let mut f = phi;
    loop {
        match f {
            So::ExistsSo(x, k, body) => match hints.get_so(x) {
                Some(v) if v.arity != *k => {
                    return Err(Error::HintArityMismatch { var: x.clone(), expected: *k, found: v.arity })
                }
                Some(v) => {
                    nu = nu.bind_so(x, v.arity, v.tuples.clone())?;
                    f = body;
                }
                None => break,
            },
            So::ExistsFo(x, body) => match hints.get(x) {
                Some(e) => {
                    nu = nu.bind(x, e);
                    f = body;
                }
                None => break,
            },
            _ => break,
        }
    }
    check_so(s, &nu, f, padding)
}
