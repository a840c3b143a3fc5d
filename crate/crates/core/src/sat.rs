//! A small CDCL SAT solver: two watched literals, 1UIP learning, VSIDS-style
//! activities with phase saving, and Luby restarts.

use std::collections::BinaryHeap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit(u32);

impl Lit {
    pub fn pos(v: u32) -> Lit {
        Lit(v << 1)
    }

    pub fn neg(v: u32) -> Lit {
        Lit(v << 1 | 1)
    }

    pub fn var(self) -> u32 {
        self.0 >> 1
    }

    pub fn is_neg(self) -> bool {
        self.0 & 1 == 1
    }

    fn idx(self) -> usize {
        self.0 as usize
    }
}

impl std::ops::Not for Lit {
    type Output = Lit;
    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

const UNDEF: i8 = -1;

#[derive(Default)]
pub struct Solver {
    clauses: Vec<Vec<Lit>>,
    watches: Vec<Vec<usize>>,
    assign: Vec<i8>,
    level: Vec<usize>,
    reason: Vec<Option<usize>>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    activity: Vec<f64>,
    var_inc: f64,
    heap: BinaryHeap<(u64, u32)>,
    phase: Vec<bool>,
    seen: Vec<bool>,
    unsat: bool,
    pub conflicts: u64,
}

impl Solver {
    pub fn new() -> Solver {
        Solver { var_inc: 1.0, ..Solver::default() }
    }

    pub fn new_var(&mut self) -> u32 {
        let v = self.assign.len() as u32;
        self.assign.push(UNDEF);
        self.level.push(0);
        self.reason.push(None);
        self.activity.push(0.0);
        self.phase.push(false);
        self.seen.push(false);
        self.watches.push(vec![]);
        self.watches.push(vec![]);
        self.heap.push((0, v));
        v
    }

    pub fn num_vars(&self) -> usize {
        self.assign.len()
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    fn lit_value(&self, l: Lit) -> i8 {
        let a = self.assign[l.var() as usize];
        if a == UNDEF {
            UNDEF
        } else {
            a ^ (l.is_neg() as i8)
        }
    }

    /// Value of a variable in the last satisfying assignment.
    pub fn value(&self, v: u32) -> bool {
        self.assign[v as usize] == 1
    }

    fn decision_level(&self) -> usize {
        self.trail_lim.len()
    }

    fn enqueue(&mut self, l: Lit, reason: Option<usize>) {
        let v = l.var() as usize;
        self.assign[v] = (!l.is_neg()) as i8;
        self.level[v] = self.decision_level();
        self.reason[v] = reason;
        self.trail.push(l);
    }

    pub fn add_clause(&mut self, lits: &[Lit]) {
        if self.unsat {
            return;
        }
        debug_assert_eq!(self.decision_level(), 0);
        let mut c: Vec<Lit> = lits.to_vec();
        c.sort();
        c.dedup();
        if c.windows(2).any(|w| w[0] == !w[1]) {
            return;
        }
        c.retain(|&l| self.lit_value(l) != 0);
        if c.iter().any(|&l| self.lit_value(l) == 1) {
            return;
        }
        match c.len() {
            0 => self.unsat = true,
            1 => {
                self.enqueue(c[0], None);
                if self.propagate().is_some() {
                    self.unsat = true;
                }
            }
            _ => {
                self.attach(c);
            }
        }
    }

    fn attach(&mut self, c: Vec<Lit>) -> usize {
        let ci = self.clauses.len();
        self.watches[c[0].idx()].push(ci);
        self.watches[c[1].idx()].push(ci);
        self.clauses.push(c);
        ci
    }

    fn propagate(&mut self) -> Option<usize> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            let fl = !p;
            let ws = std::mem::take(&mut self.watches[fl.idx()]);
            let mut kept = Vec::with_capacity(ws.len());
            let mut conflict = None;
            let mut i = 0;
            while i < ws.len() {
                let ci = ws[i];
                i += 1;
                let c = &mut self.clauses[ci];
                if c[0] == fl {
                    c.swap(0, 1);
                }
                let first = c[0];
                let fv = {
                    let a = self.assign[first.var() as usize];
                    if a == UNDEF { UNDEF } else { a ^ (first.is_neg() as i8) }
                };
                if fv == 1 {
                    kept.push(ci);
                    continue;
                }
                let mut moved = false;
                for k in 2..c.len() {
                    let l = c[k];
                    let a = self.assign[l.var() as usize];
                    let lv = if a == UNDEF { UNDEF } else { a ^ (l.is_neg() as i8) };
                    if lv != 0 {
                        c.swap(1, k);
                        let w = c[1];
                        self.watches[w.idx()].push(ci);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                kept.push(ci);
                if fv == 0 {
                    conflict = Some(ci);
                    kept.extend_from_slice(&ws[i..]);
                    break;
                }
                self.enqueue(first, Some(ci));
            }
            self.watches[fl.idx()] = kept;
            if conflict.is_some() {
                return conflict;
            }
        }
        None
    }

    fn bump(&mut self, v: u32) {
        let a = &mut self.activity[v as usize];
        *a += self.var_inc;
        if *a > 1e100 {
            for x in self.activity.iter_mut() {
                *x *= 1e-100;
            }
            self.var_inc *= 1e-100;
            self.rebuild_heap();
        } else {
            let key = a.to_bits();
            self.heap.push((key, v));
        }
    }

    fn rebuild_heap(&mut self) {
        self.heap = (0..self.assign.len() as u32)
            .filter(|&v| self.assign[v as usize] == UNDEF)
            .map(|v| (self.activity[v as usize].to_bits(), v))
            .collect();
    }

    fn analyze(&mut self, mut confl: usize) -> (Vec<Lit>, usize) {
        let mut learnt = vec![Lit(0)];
        let mut pathc = 0;
        let mut p: Option<Lit> = None;
        let mut idx = self.trail.len();
        let dl = self.decision_level();
        loop {
            let start = if p.is_some() { 1 } else { 0 };
            let clause = self.clauses[confl].clone();
            for &q in &clause[start..] {
                let v = q.var() as usize;
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    self.bump(q.var());
                    if self.level[v] >= dl {
                        pathc += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                idx -= 1;
                if self.seen[self.trail[idx].var() as usize] {
                    break;
                }
            }
            let lit = self.trail[idx];
            p = Some(lit);
            self.seen[lit.var() as usize] = false;
            pathc -= 1;
            if pathc == 0 {
                break;
            }
            confl = self.reason[lit.var() as usize].expect("implied literal has a reason");
        }
        learnt[0] = !p.unwrap();
        for l in &learnt[1..] {
            self.seen[l.var() as usize] = false;
        }
        let mut bt = 0;
        if learnt.len() > 1 {
            let mut best = 1;
            for i in 2..learnt.len() {
                if self.level[learnt[i].var() as usize] > self.level[learnt[best].var() as usize] {
                    best = i;
                }
            }
            learnt.swap(1, best);
            bt = self.level[learnt[1].var() as usize];
        }
        (learnt, bt)
    }

    fn backtrack(&mut self, lvl: usize) {
        if self.decision_level() <= lvl {
            return;
        }
        let lim = self.trail_lim[lvl];
        for i in (lim..self.trail.len()).rev() {
            let l = self.trail[i];
            let v = l.var() as usize;
            self.phase[v] = !l.is_neg();
            self.assign[v] = UNDEF;
            self.reason[v] = None;
            self.heap.push((self.activity[v].to_bits(), v as u32));
        }
        self.trail.truncate(lim);
        self.trail_lim.truncate(lvl);
        self.qhead = lim;
    }

    fn pick(&mut self) -> Option<u32> {
        while let Some((_, v)) = self.heap.pop() {
            if self.assign[v as usize] == UNDEF {
                return Some(v);
            }
        }
        None
    }

    fn luby(mut i: u64) -> u64 {
        let mut size = 1u64;
        let mut seq = 0u32;
        while size < i + 1 {
            seq += 1;
            size = 2 * size + 1;
        }
        let mut x = 1u64 << seq;
        while size - 1 != i {
            size = (size - 1) >> 1;
            seq -= 1;
            x = 1u64 << seq;
            i %= size;
        }
        x.max(1)
    }

    /// Returns true iff the clause set is satisfiable; the model is then
    /// available through [`Solver::value`].
    pub fn solve(&mut self) -> bool {
        if self.unsat {
            return false;
        }
        if self.propagate().is_some() {
            self.unsat = true;
            return false;
        }
        let mut restart = 0u64;
        loop {
            let budget = 100 * Self::luby(restart);
            restart += 1;
            let mut local = 0u64;
            loop {
                if let Some(confl) = self.propagate() {
                    self.conflicts += 1;
                    local += 1;
                    if self.decision_level() == 0 {
                        self.unsat = true;
                        return false;
                    }
                    let (learnt, bt) = self.analyze(confl);
                    self.backtrack(bt);
                    if learnt.len() == 1 {
                        self.enqueue(learnt[0], None);
                    } else {
                        let first = learnt[0];
                        let ci = self.attach(learnt);
                        self.enqueue(first, Some(ci));
                    }
                    self.var_inc *= 1.0 / 0.95;
                    continue;
                }
                if local >= budget {
                    self.backtrack(0);
                    break;
                }
                match self.pick() {
                    None => return true,
                    Some(v) => {
                        self.trail_lim.push(self.trail.len());
                        let l = if self.phase[v as usize] { Lit::pos(v) } else { Lit::neg(v) };
                        self.enqueue(l, None);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(n: u32, clauses: &[Vec<Lit>]) -> bool {
        (0..1u32 << n).any(|m| clauses.iter().all(|c| c.iter().any(|l| ((m >> l.var()) & 1 == 1) != l.is_neg())))
    }

    #[test]
    fn pigeonhole_unsat() {
        // 4 pigeons, 3 holes.
        let mut s = Solver::new();
        let v: Vec<Vec<u32>> = (0..4).map(|_| (0..3).map(|_| s.new_var()).collect()).collect();
        for p in &v {
            s.add_clause(&p.iter().map(|&x| Lit::pos(x)).collect::<Vec<_>>());
        }
        for h in 0..3 {
            for a in 0..4 {
                for b in a + 1..4 {
                    s.add_clause(&[Lit::neg(v[a][h]), Lit::neg(v[b][h])]);
                }
            }
        }
        assert!(!s.solve());
    }

    #[test]
    fn random_agrees_with_brute_force() {
        let mut seed = 12345u64;
        let mut rnd = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            seed
        };
        for _ in 0..300 {
            let n = 3 + (rnd() % 8) as u32;
            let m = 2 + (rnd() % 40) as usize;
            let clauses: Vec<Vec<Lit>> = (0..m)
                .map(|_| {
                    let k = 1 + (rnd() % 3) as usize;
                    (0..k).map(|_| {
                        let v = (rnd() % n as u64) as u32;
                        if rnd() % 2 == 0 { Lit::pos(v) } else { Lit::neg(v) }
                    }).collect()
                })
                .collect();
            let mut s = Solver::new();
            for _ in 0..n {
                s.new_var();
            }
            for c in &clauses {
                s.add_clause(c);
            }
            let sat = s.solve();
            assert_eq!(sat, brute(n, &clauses));
            if sat {
                assert!(clauses.iter().all(|c| c.iter().any(|l| s.value(l.var()) != l.is_neg())));
            }
        }
    }
}
