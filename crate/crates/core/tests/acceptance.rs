//! Acceptance suite: one pass/fail line per criterion.

use std::time::{Duration, Instant};

use relog::compile::{extract_certificate, gen_tw_form_sid, gen_tw_sid, slr_to_so, tw_form_top, tw_top};
use relog::gallery::{self, enumerate_graphs, enumerate_structures};
use relog::slr::{
    check_slr, check_slr_injective, injectify, is_normalized, normalize, parse_sid, parse_slr, replay, split_relation_atoms,
    width_bound, Sid, Slr,
};
use relog::so::{check_so, check_so_with_hint, parse_so};
use relog::structure::{Elem, Signature, Store, Structure, EDGE};
use relog::types::{type_of, type_of_with, TypeConfig, TypeRegistry};
use relog::treewidth::{
    derivation_bags, decomposition_to_derivation, derivation_to_decomposition, exact_treewidth, optimal_decomposition, reduce,
    verify_reduced,
};

type Outcome = Result<String, String>;

fn tw_sig() -> Signature {
    Signature::new().with_relation("E", 2).unwrap().with_guard("D").unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: relog::Error) -> String {
    e.to_string()
}

/// Guarded structures of criterion 1 with their membership verdicts.
fn criterion1_cases() -> Result<Vec<(Structure, bool, i64)>, String> {
    let sig = tw_sig();
    let sid = gen_tw_sid(1, &sig, true).map_err(err)?;
    let top = Slr::Pred(tw_top(1), vec![]);
    let mut out = vec![];
    for s in enumerate_structures(&sig, 5, 4).map_err(err)? {
        let member = check_slr(&s, &Store::new(), &top, &sid).map_err(err)?.is_some();
        out.push((s.clone(), member, exact_treewidth(&s).map_err(err)?));
    }
    Ok(out)
}

fn criterion1() -> Outcome {
    let cases = criterion1_cases()?;
    for (s, member, tw) in &cases {
        ensure(*member == (*tw <= 1), || format!("mismatch on {s:?}: member {member}, treewidth {tw}"))?;
    }
    let pos = cases.iter().filter(|c| c.1).count();
    Ok(format!("{} structures, {} members", cases.len(), pos))
}

fn criterion2() -> Outcome {
    let sig = tw_sig();
    let sentences = ["ex x . D(x)", "~(ex x . D(x))", "(ex2 X/1 . all x . X(x) -> D(x)) & (all x . D(x) | ~D(x))"];
    let cases = criterion1_cases()?;
    let top = Slr::Pred(tw_form_top(1), vec![]);
    let mut pos = 0;
    for src in sentences {
        let phi = parse_so(src, &sig).map_err(err)?;
        let sid = gen_tw_form_sid(1, &sig, &phi, true).map_err(err)?;
        for (s, _, tw) in &cases {
            let member = check_slr(s, &Store::new(), &top, &sid).map_err(err)?.is_some();
            let want = *tw <= 1 && check_so(s, &Store::new(), &phi, None).map_err(err)?;
            ensure(member == want, || format!("{src} on {s:?}: member {member}, expected {want}"))?;
            pos += member as usize;
        }
    }
    Ok(format!("{} sentences, {} structures, {pos} members", sentences.len(), cases.len()))
}

fn criterion6() -> Outcome {
    let sig = tw_sig();
    let strict = gen_tw_sid(1, &sig, false).map_err(err)?;
    let top = Slr::Pred(tw_top(1), vec![]);
    let mut n = 0;
    for (s, member, _) in criterion1_cases()? {
        if !member {
            continue;
        }
        // Positives outside the strict rules come from the corner-case rules.
        let Some(d) = check_slr(&s, &Store::new(), &top, &strict).map_err(err)? else {
            continue;
        };
        n += 1;
        let t = derivation_to_decomposition(&s, &d, 1).map_err(err)?;
        verify_reduced(&s, &t, 1).map_err(|v| format!("{s:?}: {v}"))?;
        ensure(t.width() == 1, || format!("{s:?}: width {}", t.width()))?;
        let (d2, nu) = decomposition_to_derivation(&s, &t, 1).map_err(err)?;
        ensure(replay(&s, &nu, &strict, &d2).map_err(err)?, || format!("{s:?}: derivation does not replay"))?;
    }
    Ok(format!("{n} derivations round-tripped"))
}

fn criterion7() -> Outcome {
    let mut structs = enumerate_graphs(6).map_err(err)?;
    let e2 = Signature::new().with_relation(EDGE, 2).unwrap();
    structs.extend(enumerate_structures(&e2, 6, 4).map_err(err)?);
    let mut n = 0;
    for s in structs {
        if s.tuple_count() == 0 || s.dom().iter().any(|&e| !s.rel_elements().contains(&e)) {
            // No reduced decomposition exists without tuples covering every element.
            continue;
        }
        let tw = exact_treewidth(&s).map_err(err)?;
        if tw > 2 {
            continue;
        }
        let k = tw as usize;
        let t = optimal_decomposition(&s).map_err(err)?;
        let r = reduce(&s, &t, k).map_err(|e| format!("{s:?}: {e}"))?;
        verify_reduced(&s, &r, k).map_err(|v| format!("{s:?}: {v}"))?;
        n += 1;
    }
    Ok(format!("{n} structures reduced"))
}

fn criterion10() -> Outcome {
    let even = gallery::entry("even").unwrap();
    let sig = even.signature.clone();
    for n in 0..=6u64 {
        let mut b = Structure::builder(&sig);
        for i in 1..=n {
            b = b.tuple("R", &[Elem(i)]);
        }
        let s = b.build().map_err(err)?;
        let v = even.check(&s, &Store::new()).map_err(err)?;
        ensure(v == (n % 2 == 0), || format!("even SID on {n} elements: {v}"))?;
    }
    let clique = gallery::entry("clique").unwrap();
    let mut graphs = 0;
    for g in enumerate_graphs(4).map_err(err)? {
        let v = clique.check(&g, &Store::new()).map_err(err)?;
        let n = g.tuples("V").len();
        let is_clique = g.tuples(EDGE).len() == n * n.saturating_sub(1);
        ensure(v == is_clique, || format!("clique formula on {g:?}: {v}"))?;
        graphs += 1;
    }
    for n in 1..=6u64 {
        let vs: Vec<Elem> = (1..=n).map(Elem).collect();
        let es: Vec<(Elem, Elem)> =
            vs.iter().flat_map(|&a| vs.iter().filter(move |&&b| a != b).map(move |&b| (a, b))).collect();
        let k = Structure::encode_graph(&vs, &es).map_err(err)?;
        let tw = exact_treewidth(&k).map_err(err)?;
        ensure(tw == n as i64 - 1, || format!("K_{n}: treewidth {tw}"))?;
    }
    Ok(format!("parity to 6, {graphs} graphs, K_1..K_6"))
}

fn criterion4() -> Outcome {
    let sig = Signature::new().with_relation("R", 1).unwrap().with_relation("D", 1).unwrap();
    let structs = enumerate_structures(&sig, 3, 6).map_err(err)?;
    let cfg = TypeConfig::default();
    for s in &structs {
        for r in 0..=2usize {
            let a = type_of_with(s, r, Some(1 << r), &cfg).map_err(err)?;
            let b = type_of_with(s, r, Some((1 << r) + 3), &cfg).map_err(err)?;
            ensure(a == b, || format!("{s:?}: rank {r} type changes with extra padding"))?;
        }
    }
    Ok(format!("{} structures, ranks 0..=2", structs.len()))
}

/// All structures over `{E/2}` plus guard `D` on elements 1..=3 with at most
/// two support elements.
fn small_labelled(sig: &Signature) -> Result<Vec<Structure>, String> {
    let els: Vec<Elem> = (1..=3).map(Elem).collect();
    let edges: Vec<[Elem; 2]> = els.iter().flat_map(|&a| els.iter().map(move |&b| [a, b])).collect();
    let mut out = vec![];
    for emask in 0u32..1 << edges.len() {
        for dmask in 0u32..1 << els.len() {
            let mut b = Structure::builder(sig);
            for (i, t) in edges.iter().enumerate() {
                if emask >> i & 1 == 1 {
                    b = b.tuple("E", t);
                }
            }
            for (i, &v) in els.iter().enumerate() {
                if dmask >> i & 1 == 1 {
                    b = b.tuple("D", &[v]);
                }
            }
            let s = b.build().map_err(err)?;
            if s.dom().len() <= 2 {
                out.push(s);
            }
        }
    }
    Ok(out)
}

fn criterion5() -> Outcome {
    let sig = tw_sig();
    let port = Elem(1);
    let nu = Store::new().bind("x1", port);
    let structs = small_labelled(&sig)?;
    let mut reg = TypeRegistry::new();
    let mut pairs = 0;
    for s1 in &structs {
        for s2 in &structs {
            let shared: Vec<Elem> = s1.rel_elements().intersection(&s2.rel_elements()).copied().collect();
            let d = s1.guard_set().map_err(err)?.union(&s2.guard_set().map_err(err)?).copied().collect::<Vec<_>>();
            if shared.iter().any(|&e| e != port) || d.contains(&port) {
                continue;
            }
            let Ok(both) = s1.compose(s2) else { continue };
            pairs += 1;
            let t1 = reg.register(&enc(s1, &nu)?, 1).map_err(err)?;
            let t2 = reg.register(&enc(s2, &nu)?, 1).map_err(err)?;
            let want = type_of(&enc(&both, &nu)?, 1).map_err(err)?;
            let got = reg.abs_glue(t1, t2).map_err(err)?;
            ensure(want == got, || format!("glue mismatch for {s1:?} and {s2:?}"))?;
        }
    }
    Ok(format!("{pairs} pairs, {} registered types", reg.len()))
}

fn enc(s: &Structure, nu: &Store) -> Result<Structure, String> {
    s.encode(nu, 0).map_err(err)
}

/// Chained equalities between parameters and an existential.
const CHAIN_SID: &str = "C(x1,x2,x3) <= x1 = x2 * x2 = x3 * R(x3);\n\
C(x1,x2,x3) <= ex y . x1 = y * x2 = x3 * S(y,x3) * C(y,y,x3);\n";

/// (name, sid, query, signature) of the regression set for criterion 8.
fn regression_set() -> Result<Vec<(String, Sid, Slr, Signature)>, String> {
    let mut out = vec![];
    for name in ["ls", "rls", "star", "even"] {
        let e = gallery::entry(name).unwrap();
        out.push((name.to_string(), e.sid().map_err(err)?, e.query_formula().map_err(err)?, e.signature.clone()));
    }
    let sig = Signature::new().with_relation("R", 1).unwrap().with_relation("S", 2).unwrap();
    let sid = parse_sid(CHAIN_SID).map_err(err)?;
    let q = parse_slr("C(a,b,c)", &sid, &sig).map_err(err)?;
    out.push(("chain".into(), sid, q, sig));
    Ok(out)
}

fn criterion8() -> Outcome {
    let mut checks = 0;
    for (name, sid, q, sig) in regression_set()? {
        let norm = normalize(&sid);
        ensure(is_normalized(&norm), || format!("{name}: normalized SID still has equalities"))?;
        let split = split_relation_atoms(&sid);
        let both = split_relation_atoms(&norm);
        let vars: Vec<String> = q.free_vars().into_iter().collect();
        // Normalization preserves the existential closure of the query;
        // splitting preserves the query under every store.
        let closed = Slr::exists_all(&vars, q.clone());
        for s in enumerate_structures(&sig, 3, 3).map_err(err)? {
            let want = check_slr(&s, &Store::new(), &closed, &sid).map_err(err)?.is_some();
            for (what, d) in [("normalize", &norm), ("normalize then split", &both)] {
                let got = check_slr(&s, &Store::new(), &closed, d).map_err(err)?.is_some();
                ensure(got == want, || format!("{name}, {what}: {got} vs {want} on {s:?}"))?;
                checks += 1;
            }
            for nu in gallery::stores(&s, &vars) {
                let want = check_slr(&s, &nu, &q, &sid).map_err(err)?.is_some();
                let got = check_slr(&s, &nu, &q, &split).map_err(err)?.is_some();
                ensure(got == want, || format!("{name}, split: {got} vs {want} on {s:?} under {nu:?}"))?;
                checks += 1;
            }
        }
    }
    Ok(format!("5 SIDs, {checks} comparisons"))
}

fn criterion9() -> Outcome {
    let mut n = 0;
    for name in ["fold_ls", "ls"] {
        let e = gallery::entry(name).unwrap();
        let sid = normalize(&e.sid().map_err(err)?);
        let q = e.query_formula().map_err(err)?;
        let bound = width_bound(&sid) as i64;
        let vars: Vec<String> = q.free_vars().into_iter().collect();
        for s in enumerate_structures(&e.signature, 4, 4).map_err(err)? {
            for nu in gallery::stores(&s, &vars) {
                let Some(d) = check_slr(&s, &nu, &q, &sid).map_err(err)? else { continue };
                let (sbar, dbar) = injectify(&s, &sid, &d).map_err(err)?;
                ensure(check_slr_injective(&sbar, &nu, &q, &sid).map_err(err)?.is_some(), || {
                    format!("{name}: injectified {s:?} is not an injective model")
                })?;
                let w = derivation_bags(&dbar).width();
                ensure(w <= bound, || format!("{name}: width {w} exceeds {bound} on {s:?}"))?;
                if name == "fold_ls" && sbar.tuple_count() > 0 {
                    let tw = exact_treewidth(&sbar).map_err(err)?;
                    ensure(tw <= 2, || format!("fold_ls: injectified {s:?} has treewidth {tw}"))?;
                }
                n += 1;
            }
        }
    }
    Ok(format!("{n} models injectified"))
}

/// Positives are certified by the witness built from the derivation;
/// negatives are refuted by exhaustive search over carriers of at most six
/// elements.
fn criterion3() -> Outcome {
    const CARRIER: usize = 6;
    let (mut pos, mut neg) = (0, 0);
    for name in ["even", "ls", "rls"] {
        let e = gallery::entry(name).unwrap();
        let sid = e.sid().map_err(err)?;
        let split = split_relation_atoms(&sid);
        let q = e.query_formula().map_err(err)?;
        let phi = slr_to_so(&split, &e.signature, &q).map_err(err)?;
        let vars: Vec<String> = q.free_vars().into_iter().collect();
        for s in enumerate_structures(&e.signature, CARRIER, 3).map_err(err)? {
            for nu in gallery::stores(&s, &vars) {
                let mut base = s.dom();
                base.extend(nu.image());
                if base.len() > CARRIER {
                    continue;
                }
                let d = check_slr(&s, &nu, &q, &split).map_err(err)?;
                let orig = check_slr(&s, &nu, &q, &sid).map_err(err)?.is_some();
                ensure(orig == d.is_some(), || format!("{name}: splitting changed the verdict on {s:?} under {nu:?}"))?;
                match d {
                    Some(d) => {
                        let c = extract_certificate(&s, &split, &d).map_err(err)?;
                        let padded = c.padded(&s).map_err(err)?;
                        let ok = check_so_with_hint(&padded, &nu, &phi, &c.store, Some(c.nodes.len())).map_err(err)?;
                        ensure(ok, || format!("{name}: certificate rejected on {s:?} under {nu:?}"))?;
                        pos += 1;
                    }
                    None => {
                        let sat = check_so(&s, &nu, &phi, Some(CARRIER - base.len())).map_err(err)?;
                        ensure(!sat, || format!("{name}: translation holds on non-model {s:?} under {nu:?}"))?;
                        neg += 1;
                    }
                }
            }
        }
    }
    Ok(format!("{pos} certified models, {neg} refuted non-models"))
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome, Duration)> = vec![
        ("1 treewidth SID membership equals treewidth <= 1", criterion1, Duration::from_secs(300)),
        ("2 annotated SID membership equals formula and treewidth", criterion2, Duration::from_secs(900)),
        ("3 SLR to SO translation agrees with the SLR checker", criterion3, Duration::from_secs(900)),
        ("4 types are stable under extra padding", criterion4, Duration::MAX),
        ("5 abstract glue matches concrete glue", criterion5, Duration::MAX),
        ("6 converters round-trip on treewidth SID members", criterion6, Duration::MAX),
        ("7 reduce yields reduced decompositions", criterion7, Duration::MAX),
        ("8 normalization and splitting preserve models", criterion8, Duration::MAX),
        ("9 injective pipeline", criterion9, Duration::MAX),
        ("10 counterexample sanity", criterion10, Duration::MAX),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f, limit) in criteria {
        let id = name.split(' ').next().unwrap();
        if !filter.is_empty() && !filter.iter().any(|x| x == id) {
            continue;
        }
        let t = Instant::now();
        let res = f();
        let el = t.elapsed();
        let res = match res {
            Ok(m) if el > limit => Err(format!("{m}; took {el:?}, limit {limit:?}")),
            r => r,
        };
        match res {
            Ok(m) => println!("PASS criterion {name} ({m}) [{:.1}s]", el.as_secs_f64()),
            Err(m) => {
                failed += 1;
                println!("FAIL criterion {name}: {m} [{:.1}s]", el.as_secs_f64())
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
