use std::collections::HashMap;

use proptest::prelude::*;
use relog::gallery;
use relog::slr::{check_slr, check_slr_injective, parse_sid, replay, Derivation};
use relog::so::{check_so, parse_so, So};
use relog::structure::{Elem, Signature, Store, Structure};
use relog::text::{load_structure, structure_from_json, structure_to_json, StructureText};
use relog::treewidth::{exact_treewidth, optimal_decomposition, reduce, verify_decomposition, verify_reduced};
use relog::types::type_of;

fn sig() -> Signature {
    Signature::new().with_relation("R", 1).unwrap().with_relation("E", 2).unwrap()
}

fn sig_c() -> Signature {
    sig().with_constant("c").unwrap()
}

/// Up to `n` tuples over elements 1..=`m`, as (is_binary, a, b).
fn raw_tuples(m: u64, n: usize) -> impl Strategy<Value = Vec<(bool, u64, u64)>> {
    prop::collection::vec((any::<bool>(), 1..=m, 1..=m), 0..=n)
}

fn build(sig: &Signature, ts: &[(bool, u64, u64)], c: Option<u64>) -> Structure {
    let mut b = Structure::builder(sig);
    for &(bin, a, z) in ts {
        b = if bin { b.tuple("E", &[Elem(a), Elem(z)]) } else { b.tuple("R", &[Elem(a)]) };
    }
    if let Some(c) = c {
        b = b.constant("c", Elem(c));
    }
    b.build().unwrap()
}

fn structure(m: u64, n: usize) -> impl Strategy<Value = Structure> {
    raw_tuples(m, n).prop_map(|ts| build(&sig(), &ts, None))
}

/// A structure together with a random permutation of 1..=m.
fn with_perm(m: u64, n: usize) -> impl Strategy<Value = (Structure, HashMap<Elem, Elem>)> {
    (structure(m, n), Just((1..=m).collect::<Vec<_>>()).prop_shuffle())
        .prop_map(move |(s, p)| (s, (1..=m).map(Elem).zip(p.into_iter().map(Elem)).collect()))
}

fn rename_store(nu: &Store, map: &HashMap<Elem, Elem>) -> Store {
    nu.fo.iter().fold(Store::new(), |acc, (x, e)| acc.bind(x, *map.get(e).unwrap_or(e)))
}

fn h_structure(m: u64, n: usize) -> impl Strategy<Value = (Structure, HashMap<Elem, Elem>, u64, u64)> {
    let hs = Signature::new().with_relation("H", 2).unwrap();
    (prop::collection::vec((1..=m, 1..=m), 0..=n), Just((1..=m).collect::<Vec<_>>()).prop_shuffle(), 1..=m, 1..=m)
        .prop_map(move |(ts, p, a, b)| {
            let s = ts.iter().fold(Structure::builder(&hs), |bd, &(x, y)| bd.tuple("H", &[Elem(x), Elem(y)])).build().unwrap();
            (s, (1..=m).map(Elem).zip(p.into_iter().map(Elem)).collect(), a, b)
        })
}

fn formula() -> impl Strategy<Value = So> {
    let var = prop::sample::select(vec!["x", "y", "z"]);
    let leaf = prop_oneof![
        var.clone().prop_map(|x| So::rel("R", &[x])),
        (var.clone(), var.clone()).prop_map(|(x, y)| So::rel("E", &[x, y])),
        (var.clone(), var.clone()).prop_map(|(x, y)| So::eq(relog::slr::Term::var(x), relog::slr::Term::var(y))),
        var.clone().prop_map(|x| So::var("X", &[x])),
        Just(So::True),
    ];
    let body = leaf.prop_recursive(3, 12, 2, move |inner| {
        prop_oneof![
            inner.clone().prop_map(So::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| So::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| So::or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| So::implies(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| So::iff(a, b)),
            (var.clone(), inner.clone()).prop_map(|(x, a)| So::exists(x, a)),
            (var.clone(), inner).prop_map(|(x, a)| So::forall(x, a)),
        ]
    });
    (any::<bool>(), body).prop_map(|(ex, b)| if ex { So::exists_so("X", 1, b) } else { So::forall_so("X", 1, b) })
}

fn xyz_store(s: &Structure) -> Store {
    let e = s.dom().into_iter().next().unwrap_or(Elem(1));
    Store::new().bind("x", e).bind("y", e).bind("z", e)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn compose_commutes_and_associates(a in raw_tuples(4, 3), b in raw_tuples(4, 3), c in raw_tuples(4, 3), k in 1u64..=4) {
        let (s1, s2, s3) = (build(&sig_c(), &a, Some(k)), build(&sig_c(), &b, Some(k)), build(&sig_c(), &c, Some(k)));
        if let (Ok(l), Ok(r)) = (s1.compose(&s2), s2.compose(&s1)) {
            prop_assert_eq!(&l, &r);
        } else {
            prop_assert!(s1.compose(&s2).is_err() && s2.compose(&s1).is_err());
        }
        let left = s1.compose(&s2).and_then(|x| x.compose(&s3));
        let right = s2.compose(&s3).and_then(|x| s1.compose(&x));
        if let (Ok(l), Ok(r)) = (&left, &right) {
            prop_assert_eq!(l, r);
        } else {
            prop_assert!(left.is_err() && right.is_err());
        }
        let unit = build(&sig_c(), &[], Some(k));
        prop_assert_eq!(s1.compose(&unit).unwrap(), s1);
    }

    #[test]
    fn glue_is_symmetric_up_to_isomorphism(a in raw_tuples(4, 3), b in raw_tuples(4, 3), k1 in 1u64..=4, k2 in 1u64..=4) {
        let (s1, s2) = (build(&sig_c(), &a, Some(k1)), build(&sig_c(), &b, Some(k2)));
        let (l, r) = (s1.glue(&s2).unwrap(), s2.glue(&s1).unwrap());
        prop_assert!(l.isomorphic(&r).unwrap());
    }

    #[test]
    fn padding_keeps_support(s in structure(5, 4), n in 0usize..4) {
        let p = s.pad(n);
        prop_assert_eq!(p.dom(), s.dom());
        prop_assert_eq!(p.carrier().len(), s.carrier().len() + n);
    }

    #[test]
    fn text_and_json_round_trip(s in structure(5, 5)) {
        prop_assert_eq!(structure_from_json(&structure_to_json(&s)).unwrap(), s.clone());
        let (back, _) = load_structure(&StructureText(&s).to_string(), None).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn so_printer_round_trips(phi in formula()) {
        prop_assert_eq!(parse_so(&phi.to_string(), &sig()).unwrap(), phi);
    }

    #[test]
    fn forall_matches_negated_exists(phi in formula(), s in structure(3, 3), x in prop::sample::select(vec!["x", "y"])) {
        let nu = xyz_store(&s);
        let a = check_so(&s, &nu, &So::forall(x, phi.clone()), Some(1)).unwrap();
        let b = check_so(&s, &nu, &So::not(So::exists(x, So::not(phi))), Some(1)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn so_is_isomorphism_invariant(phi in formula(), (s, map) in with_perm(4, 4)) {
        let nu = xyz_store(&s);
        let a = check_so(&s, &nu, &phi, Some(1)).unwrap();
        let b = check_so(&s.rename(&map), &rename_store(&nu, &map), &phi, Some(1)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn types_are_isomorphism_invariant((s, map) in with_perm(3, 3), r in 0usize..=1) {
        prop_assert_eq!(type_of(&s, r).unwrap(), type_of(&s.rename(&map), r).unwrap());
    }

    #[test]
    fn treewidth_is_isomorphism_invariant((s, map) in with_perm(5, 5)) {
        let tw = exact_treewidth(&s).unwrap();
        prop_assert_eq!(tw, exact_treewidth(&s.rename(&map)).unwrap());
        let td = optimal_decomposition(&s).unwrap();
        prop_assert!(verify_decomposition(&s, &td).is_ok());
        prop_assert_eq!(td.width(), tw);
    }

    #[test]
    fn reduce_yields_reduced_decompositions(s in structure(5, 4)) {
        prop_assume!(s.tuple_count() > 0);
        let k = exact_treewidth(&s).unwrap().max(0) as usize;
        let td = reduce(&s, &optimal_decomposition(&s).unwrap(), k).unwrap();
        prop_assert!(td.width() <= k as i64);
        prop_assert!(verify_reduced(&s, &td, k).is_ok());
    }

    #[test]
    fn slr_verdicts_are_isomorphism_invariant((s, map, a, b) in h_structure(4, 4)) {
        for name in ["ls", "rls", "fold_ls"] {
            let e = gallery::entry(name).unwrap();
            let sid = e.sid().unwrap();
            let q = e.query_formula().unwrap();
            let s = s.extend_signature(&e.signature).unwrap();
            let vars: Vec<String> = q.free_vars().into_iter().collect();
            let nu = vars.iter().zip([a, b]).fold(Store::new(), |acc, (x, v)| acc.bind(x, Elem(v)));
            let here = check_slr(&s, &nu, &q, &sid).unwrap().is_some();
            let there = check_slr(&s.rename(&map), &rename_store(&nu, &map), &q, &sid).unwrap().is_some();
            prop_assert_eq!(here, there, "{}", name);
        }
    }

    #[test]
    fn derivations_partition_and_replay((s, _, a, b) in h_structure(4, 4)) {
        for name in ["ls", "rls", "fold_ls"] {
            let e = gallery::entry(name).unwrap();
            let sid = e.sid().unwrap();
            let q = e.query_formula().unwrap();
            let s = s.extend_signature(&e.signature).unwrap();
            let vars: Vec<String> = q.free_vars().into_iter().collect();
            let nu = vars.iter().zip([a, b]).fold(Store::new(), |acc, (x, v)| acc.bind(x, Elem(v)));
            if let Some(d) = check_slr(&s, &nu, &q, &sid).unwrap() {
                let mut used = d.root.all_consumed();
                used.sort();
                let mut all = s.all_tuples();
                all.sort();
                prop_assert_eq!(used, all);
                prop_assert!(replay(&s, &nu, &sid, &d).unwrap());
                let back = Derivation::from_json(&d.to_json(), &sid, s.signature()).unwrap();
                prop_assert_eq!(back, d);
            }
            if let Some(d) = check_slr_injective(&s, &nu, &q, &sid).unwrap() {
                prop_assert!(replay(&s, &nu, &sid, &d).unwrap());
            }
        }
    }
}

#[test]
fn sid_printer_is_idempotent() {
    for e in gallery::entries() {
        if let Ok(sid) = e.sid() {
            let text = sid.to_string();
            assert_eq!(parse_sid(&text).unwrap().to_string(), text, "{}", e.name);
        }
    }
}
