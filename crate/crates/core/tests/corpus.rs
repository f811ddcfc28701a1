//! Every corpus entry produces the verdicts recorded with it.

use dfc::corpus::{self, Entry};
use dfc::knowledge::{check_release, check_system_security, Verdict};
use dfc::logic::{check_program, LogicOptions};
use dfc::verify::verify_annotations;

fn check(e: &Entry) -> Vec<String> {
    let sys = e.load().unwrap();
    let b = e.bounds();
    let x = e.expect;
    let mut bad = Vec::new();
    let mut expect = |what: &str, want: Option<bool>, got: bool| {
        if want.is_some_and(|w| w != got) {
            bad.push(format!("{}: {} expected {:?}, got {}", e.name, what, want, got));
        }
    };
    expect("valid", x.valid, verify_annotations(&sys, &b).unwrap().valid());
    expect(
        "accepted",
        x.accepted,
        check_program(&sys, &b, &LogicOptions::default()).unwrap().accepted(),
    );
    let levels = sys.policy.lattice.levels().to_vec();
    if x.secure.is_some() {
        let mut all = true;
        for &l in &levels {
            let r = check_system_security(&sys, &b, l, sys.policy.declass_predicate()).unwrap();
            assert_ne!(r.verdict, Verdict::BoundExhausted, "{}: {}", e.name, r);
            all &= r.secure();
        }
        expect("secure", x.secure, all);
    }
    if x.release.is_some() || x.no_secret_branching.is_some() {
        let (mut dr, mut nsb) = (true, true);
        for &l in &levels {
            let (a, b2) = check_release(&sys, &b, l).unwrap();
            assert_ne!(a.verdict, Verdict::BoundExhausted, "{}: {}", e.name, a);
            dr &= a.secure();
            nsb &= b2.secure();
        }
        expect("release", x.release, dr);
        expect("no secret branching", x.no_secret_branching, nsb);
    }
    bad
}

#[test]
fn corpus_files_match_their_digests() {
    corpus::verify_integrity().unwrap();
    for n in corpus::file_names() {
        corpus::file(n).unwrap();
    }
}

#[test]
fn every_entry_meets_its_expectations() {
    let bad: Vec<String> = corpus::entries().iter().flat_map(check).collect();
    assert!(bad.is_empty(), "{}", bad.join("\n"));
}
