//! Properties of the indistinguishability relations and of execution.
//!
//! States are drawn over a diamond lattice with one labeled variable per
//! level and an unlabeled one, from a two-value domain so that related
//! states come up often.

mod common;

use proptest::prelude::*;

use dfc::equivalence::{env_equiv, gstate_equiv, mem_equiv, project, state_dr_agree, trace_equiv};
use dfc::lang::{print_program, Term};
use dfc::policy::{parse_policy, Policy};
use dfc::semantics::{Environment, Event, GlobalState, LockMap, Memory, Stream, Trace};
use dfc::{Domain, Symbol};

use common::{DIAMOND, DIAMOND_LEVELS as LEVELS, DIAMOND_VARS as VARS};

fn policy() -> Policy {
    parse_policy(DIAMOND).unwrap()
}

fn sym(s: &str) -> Symbol {
    Symbol::intern(s)
}

fn event() -> impl Strategy<Value = Event> {
    (0..3usize, 0..4usize, 0..2i64, 0..2usize).prop_map(|(k, l, v, e)| {
        let lvl = sym(LEVELS[l]);
        let expr = if e == 0 { Term::konst(v) } else { Term::var(sym("x")) };
        match k {
            0 => Event::input(lvl, v),
            1 => Event::output(lvl, v, expr),
            _ => Event::declass(lvl, v, expr),
        }
    })
}

fn state() -> impl Strategy<Value = GlobalState> {
    (
        prop::collection::vec(0..2i64, 5),
        prop::collection::vec(prop::collection::vec(0..2i64, 0..3), 4),
        prop::option::of(0..2usize),
        prop::collection::vec(event(), 0..4),
    )
        .prop_map(|(vals, streams, owner, events)| {
            let mut mem = Memory::zeroed(&VARS.map(sym));
            for (x, v) in VARS.iter().zip(vals) {
                mem.set(sym(x), v);
            }
            let mut env = Environment::constant(&LEVELS.map(sym), 0);
            for ((_, s), p) in env.streams.iter_mut().zip(streams) {
                *s = Stream::new(p, 0);
            }
            let mut locks = LockMap::free(&[sym("m")]);
            locks.set(sym("m"), owner);
            GlobalState {
                env,
                mem,
                locks,
                trace: Trace(events),
            }
        })
}

fn level() -> impl Strategy<Value = Symbol> {
    (0..4usize).prop_map(|i| sym(LEVELS[i]))
}

fn dr(p: &Policy, l: Symbol, s: &GlobalState, t: &GlobalState) -> bool {
    state_dr_agree(p, Domain::new(2), l, s, t, 3).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn relations_are_reflexive(s in state(), l in level()) {
        let p = policy();
        prop_assert!(gstate_equiv(&p, l, &s, &s));
        prop_assert!(trace_equiv(&p.lattice, l, &s.trace, &s.trace));
        prop_assert!(dr(&p, l, &s, &s));
    }

    #[test]
    fn relations_are_symmetric(s in state(), t in state(), l in level()) {
        let p = policy();
        prop_assert_eq!(gstate_equiv(&p, l, &s, &t), gstate_equiv(&p, l, &t, &s));
        prop_assert_eq!(mem_equiv(&p, l, &s.mem, &t.mem), mem_equiv(&p, l, &t.mem, &s.mem));
        prop_assert_eq!(env_equiv(&p.lattice, l, &s.env, &t.env), env_equiv(&p.lattice, l, &t.env, &s.env));
        prop_assert_eq!(dr(&p, l, &s, &t), dr(&p, l, &t, &s));
    }

    #[test]
    fn relations_are_transitive(s in state(), t in state(), r in state(), l in level()) {
        let p = policy();
        // pull t and r toward s so that the premises hold often
        let mut t = t;
        let mut r = r;
        t.locks = s.locks.clone();
        r.locks = s.locks.clone();
        r.trace = t.trace.clone();
        if gstate_equiv(&p, l, &s, &t) && gstate_equiv(&p, l, &t, &r) {
            prop_assert!(gstate_equiv(&p, l, &s, &r));
        }
        if mem_equiv(&p, l, &s.mem, &t.mem) && mem_equiv(&p, l, &t.mem, &r.mem) {
            prop_assert!(mem_equiv(&p, l, &s.mem, &r.mem));
        }
        if trace_equiv(&p.lattice, l, &s.trace, &t.trace) && trace_equiv(&p.lattice, l, &t.trace, &r.trace) {
            prop_assert!(trace_equiv(&p.lattice, l, &s.trace, &r.trace));
        }
        if dr(&p, l, &s, &t) && dr(&p, l, &t, &r) {
            prop_assert!(dr(&p, l, &s, &r));
        }
    }

    #[test]
    fn higher_attackers_distinguish_more(s in state(), t in state(), l in level(), m in level()) {
        let p = policy();
        if p.lattice.leq(l, m) && gstate_equiv(&p, m, &s, &t) {
            prop_assert!(gstate_equiv(&p, l, &s, &t));
        }
    }

    #[test]
    fn trace_equivalence_is_equality_of_projections(s in state(), t in state(), l in level()) {
        let p = policy();
        prop_assert_eq!(
            trace_equiv(&p.lattice, l, &s.trace, &t.trace),
            project(&p.lattice, l, &s.trace) == project(&p.lattice, l, &t.trace)
        );
    }

    #[test]
    fn unlabeled_variables_are_never_observed(s in state(), v in 0..2i64, l in level()) {
        let p = policy();
        let mut t = s.clone();
        t.mem.set(sym("u"), v);
        prop_assert!(gstate_equiv(&p, l, &s, &t));
    }
}

fn sched_and_seed() -> impl Strategy<Value = (u64, Vec<usize>, Vec<i64>)> {
    (any::<u64>(), prop::collection::vec(0..3usize, 0..12), prop::collection::vec(0..2i64, 4))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn execution_is_deterministic_and_traces_only_grow((seed, sched, init) in sched_and_seed()) {
        let sys = common::system(&common::program(seed, &common::Shape::default()), common::POLICY);
        let n = sys.thread_count();
        let sched: Vec<usize> = sched.into_iter().map(|t| t % n).collect();
        let mut mem = Memory::zeroed(&sys.program.vars);
        for (x, v) in ["h", "l", "u", "w"].iter().zip(init) {
            mem.set(sym(x), v);
        }
        let levels = sys.policy.lattice.levels().to_vec();
        let mut env = Environment::constant(&levels, 0);
        for (i, (_, s)) in env.streams.iter_mut().enumerate() {
            *s = Stream::new(vec![(seed as i64 + i as i64) % 2, 1], 0);
        }
        let st = GlobalState { env, mem, locks: LockMap::free(&sys.program.locks), trace: Trace::default() };
        let r = common::check_run(&sys, Domain::new(2), &st, &sched);
        prop_assert!(r.is_ok(), "{}\n{}", r.unwrap_err(), print_program(&sys.program));
    }
}
