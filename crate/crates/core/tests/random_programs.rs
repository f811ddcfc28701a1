//! Cross-checks on generated programs: the explorer against the
//! brute-force reference, witness replay, soundness of the logic and
//! conservativity of the syntactic bisimulation check.

mod common;

use std::rc::Rc;

use common::{annotate, program, system, Shape, HATCH_POLICY, POLICY};
use dfc::declass::Declassifier;
use dfc::knowledge::reference;
use dfc::knowledge::{check_release, check_system_security, SecurityReport, Verdict};
use dfc::lang::{parse_program, print_program, Command};
use dfc::logic::{bisimilar_semantic, bisimilar_syntactic, check_program, BisimEvidence, LogicOptions};
use dfc::system::{Bounds, System};
use dfc::verify::verify_annotations;
use dfc::{corpus, Symbol};

fn levels(sys: &System) -> Vec<Symbol> {
    sys.policy.lattice.levels().to_vec()
}

/// `Some(secure)` unless the bound was exhausted.
fn decided(r: &SecurityReport) -> Option<bool> {
    match r.verdict {
        Verdict::Secure => Some(true),
        Verdict::Violation => Some(false),
        Verdict::BoundExhausted => None,
    }
}

fn tiny() -> Shape {
    Shape {
        max_threads: 2,
        max_stmts: 5,
        ..Shape::default()
    }
}

#[test]
fn generated_programs_round_trip_through_the_printer() {
    for seed in 0..1000 {
        let shape = Shape {
            declass: seed % 2 == 0,
            ..Shape::default()
        };
        let src = program(seed, &shape);
        let p = parse_program(&src).unwrap_or_else(|e| panic!("seed {}: {}\n{}", seed, e, src));
        let text = print_program(&p);
        assert_eq!(parse_program(&text).unwrap(), p, "seed {}", seed);
        assert_eq!(print_program(&parse_program(&text).unwrap()), text);
    }
}

#[test]
fn explorer_agrees_with_the_reference_on_system_security() {
    let b = Bounds::new(2, 1, 4);
    let mut compared = 0;
    for seed in 0..120 {
        let shape = Shape {
            declass: seed % 3 == 0,
            ..tiny()
        };
        let sys = system(&program(seed, &shape), if shape.declass { HATCH_POLICY } else { POLICY });
        let d = Declassifier::new(&sys, b, sys.policy.declass_predicate());
        for alvl in levels(&sys) {
            let fast = check_system_security(&sys, &b, alvl, sys.policy.declass_predicate()).unwrap();
            let slow = reference::system_security(&sys, &b, alvl, &d).unwrap();
            if let Some(secure) = decided(&fast) {
                assert_eq!(
                    secure,
                    slow.is_none(),
                    "seed {} level {}\n{}\nexplorer: {}\nreference: {:?}",
                    seed,
                    alvl,
                    print_program(&sys.program),
                    fast,
                    slow
                );
                compared += 1;
            }
        }
    }
    assert!(compared >= 200, "only {} decided comparisons", compared);
}

#[test]
fn explorer_agrees_with_the_reference_on_release() {
    let b = Bounds::new(2, 2, 4);
    let mut compared = 0;
    for seed in 0..80 {
        let shape = Shape { declass: true, ..tiny() };
        let sys = system(&program(seed, &shape), HATCH_POLICY);
        let bot = Symbol::intern("bot");
        let (dr, nsb) = check_release(&sys, &b, bot).unwrap();
        let (rdr, rnsb) = reference::release_properties(&sys, &b, bot).unwrap();
        for (fast, slow, what) in [(&dr, &rdr, "release"), (&nsb, &rnsb, "branching")] {
            if let Some(secure) = decided(fast) {
                assert_eq!(
                    secure,
                    slow.is_none(),
                    "{} seed {}\n{}\nexplorer: {}\nreference: {:?}",
                    what,
                    seed,
                    print_program(&sys.program),
                    fast,
                    slow
                );
                compared += 1;
            }
        }
    }
    assert!(compared >= 100, "only {} decided comparisons", compared);
}

#[test]
fn every_violation_witness_replays() {
    let b = Bounds::new(2, 1, 5);
    let mut replayed = 0;
    for seed in 0..80 {
        let shape = Shape {
            declass: seed % 2 == 0,
            ..tiny()
        };
        let sys = system(&program(seed, &shape), HATCH_POLICY);
        for alvl in levels(&sys) {
            let mut reports = vec![check_system_security(&sys, &b, alvl, sys.policy.declass_predicate()).unwrap()];
            let (dr, nsb) = check_release(&sys, &b, alvl).unwrap();
            reports.extend([dr, nsb]);
            for r in reports.iter().filter(|r| r.verdict == Verdict::Violation) {
                for w in &r.witnesses {
                    assert!(w.replay(&sys, &b, alvl).unwrap(), "seed {}: {}", seed, r);
                    replayed += 1;
                }
            }
        }
    }
    assert!(replayed >= 30, "only {} witnesses", replayed);
}

#[test]
fn accepted_programs_with_valid_annotations_are_secure() {
    let b = Bounds::new(2, 1, 6);
    let (mut accepted, mut rejected, mut proved) = (0, 0, 0);
    for seed in 0..600 {
        let sys = annotate(&system(&program(seed, &Shape::default()), POLICY), &b);
        if !verify_annotations(&sys, &b).unwrap().valid() {
            continue;
        }
        let logic = check_program(&sys, &b, &LogicOptions::default()).unwrap();
        if !logic.accepted() {
            rejected += 1;
            continue;
        }
        accepted += 1;
        for alvl in levels(&sys) {
            let r = check_system_security(&sys, &b, alvl, sys.policy.declass_predicate()).unwrap();
            assert_ne!(
                r.verdict,
                Verdict::Violation,
                "seed {} accepted but insecure\n{}\n{}",
                seed,
                print_program(&sys.program),
                r
            );
            proved += (r.verdict == Verdict::Secure) as usize;
        }
    }
    eprintln!("accepted {} rejected {} secure within bounds {}", accepted, rejected, proved);
    assert!(accepted >= 60 && rejected >= 60, "accepted {} rejected {}", accepted, rejected);
    assert!(proved >= accepted, "most checks should be decided, {} of {}", proved, 2 * accepted);
}

fn conditionals(c: &Rc<Command>, out: &mut Vec<(Rc<Command>, Rc<Command>)>) {
    match &**c {
        Command::If { then_, else_, .. } => {
            out.push((then_.clone(), else_.clone()));
            conditionals(then_, out);
            conditionals(else_, out);
        }
        Command::While { body, .. } => conditionals(body, out),
        Command::Seq(a, b) => {
            conditionals(a, out);
            conditionals(b, out);
        }
        _ => {}
    }
}

fn syntactic_implies_semantic(sys: &System, b: &Bounds) -> usize {
    let mut checked = 0;
    for (tid, t) in sys.program.threads.iter().enumerate() {
        let mut pairs = Vec::new();
        conditionals(t, &mut pairs);
        for alvl in levels(sys) {
            for (c1, c2) in &pairs {
                if !bisimilar_syntactic(sys, alvl, c1, c2).holds() {
                    continue;
                }
                let sem = bisimilar_semantic(sys, b, alvl, tid, c1, c2).unwrap();
                assert!(
                    sem.holds() || matches!(sem, BisimEvidence::Undetermined(_)),
                    "syntactically but not semantically bisimilar at {}: {:?}\n{}",
                    alvl,
                    sem,
                    print_program(&sys.program)
                );
                checked += 1;
            }
        }
    }
    checked
}

#[test]
fn syntactic_bisimilarity_implies_semantic() {
    let mut checked = 0;
    for e in corpus::entries() {
        checked += syntactic_implies_semantic(&e.load().unwrap(), &Bounds::new(2, 1, 4));
    }
    let b = Bounds::new(2, 1, 4);
    for seed in 0..800 {
        let sys = system(&program(seed, &Shape::default()), POLICY);
        checked += syntactic_implies_semantic(&sys, &b);
    }
    assert!(checked >= 50, "only {} pairs", checked);
}
