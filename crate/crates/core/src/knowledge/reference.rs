//! Brute-force reference checks, written straight from the definitions.
//!
//! Every stream prefix and every schedule of exactly the bounded length is
//! enumerated, each run is executed from scratch and the quantifiers are
//! evaluated literally. This is exponential and only meant for tiny
//! programs, where it serves as an independent oracle for the explorer.

use std::rc::Rc;

use crate::declass::{release, Declassifier};
use crate::equivalence::{gstate_equiv, project, state_dr_agree, visible};
use crate::lang::ast::Command;
use crate::error::{Error, Result};
use crate::semantics::state::{Environment, Event, EventKind, GlobalState, LockMap, Trace};
use crate::semantics::{run, GlobalConfig};
use crate::symbol::Symbol;
use crate::system::{Bounds, System};
use crate::value::ThreadId;

use super::engine::initial_memories;

/// The first violation the reference found.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Finding {
    pub schedule: Vec<ThreadId>,
    /// Index into [`initial_states`].
    pub initial: usize,
    /// Index into [`initial_states`] of the run the violation is relative to.
    pub other: Option<usize>,
    pub step: usize,
    pub event: Option<Event>,
}

/// Every bounded initial state: memories satisfying `init` and the entry
/// annotations, times every stream prefix of the bounded length.
pub fn initial_states(sys: &System, bounds: &Bounds) -> Result<Vec<GlobalState>> {
    let mems = initial_memories(sys, bounds, true)?;
    let levels = sys.policy.lattice.levels().to_vec();
    let k = bounds.domain;
    let slots = levels.len() * bounds.prefix;
    let total = (k.size() as u64)
        .checked_pow(slots as u32)
        .and_then(|n| n.checked_mul(mems.len() as u64))
        .filter(|n| *n <= bounds.cap)
        .ok_or_else(|| Error::Bounds("reference initial states exceed the cap".into()))?;
    let mut out = Vec::with_capacity(total as usize);
    for mem in &mems {
        for n in 0..(k.size() as u64).pow(slots as u32) {
            let mut rest = n;
            let mut digits = vec![0; slots];
            for d in digits.iter_mut().rev() {
                *d = (rest % k.size() as u64) as i64;
                rest /= k.size() as u64;
            }
            let mut env = Environment::constant(&levels, 0);
            for (i, (_, s)) in env.streams.iter_mut().enumerate() {
                s.prefix = digits[i * bounds.prefix..(i + 1) * bounds.prefix].to_vec();
            }
            out.push(GlobalState {
                env,
                mem: mem.clone(),
                locks: LockMap::free(&sys.program.locks),
                trace: Trace::default(),
            });
        }
    }
    Ok(out)
}

/// Every schedule of exactly `len` steps over `threads` threads, in
/// lexicographic order.
pub fn schedules(threads: usize, len: usize) -> impl Iterator<Item = Vec<ThreadId>> {
    let total = threads.pow(len as u32);
    (0..total).map(move |mut n| {
        let mut s = vec![0; len];
        for d in s.iter_mut().rev() {
            *d = n % threads;
            n /= threads;
        }
        s
    })
}

fn budget(sys: &System, bounds: &Bounds, runs: u64) -> Result<()> {
    let scheds = (sys.thread_count() as u64).checked_pow(bounds.sched as u32);
    match scheds.and_then(|s| s.checked_mul(runs)) {
        Some(n) if n <= bounds.cap => Ok(()),
        _ => Err(Error::Bounds("reference runs exceed the cap".into())),
    }
}

fn execute(sys: &System, bounds: &Bounds, st: &GlobalState, sched: &[ThreadId]) -> Result<Vec<GlobalConfig>> {
    Ok(run(sys, bounds.domain, GlobalConfig::new(sys, st.clone(), sched.to_vec()))?.0)
}

fn visible_trace(sys: &System, alvl: Symbol, t: &Trace) -> Vec<Event> {
    project(&sys.policy.lattice, alvl, t).into_iter().cloned().collect()
}

/// Whether some configuration of the run shows exactly `obs`.
fn gives_rise(sys: &System, alvl: Symbol, cfgs: &[GlobalConfig], obs: &[Event]) -> bool {
    cfgs.iter().any(|c| visible_trace(sys, alvl, &c.state.trace) == obs)
}

/// The attacker's uncertainty: the indices of `candidates` equivalent to
/// `init` whose run under `sched` can give rise to a trace equivalent to `t`.
pub fn uncertainty(
    sys: &System,
    bounds: &Bounds,
    alvl: Symbol,
    candidates: &[GlobalState],
    init: &GlobalState,
    sched: &[ThreadId],
    t: &Trace,
) -> Result<Vec<usize>> {
    let obs = visible_trace(sys, alvl, t);
    let mut out = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        if !gstate_equiv(&sys.policy, alvl, c, init) {
            continue;
        }
        if gives_rise(sys, alvl, &execute(sys, bounds, c, sched)?, &obs) {
            out.push(i);
        }
    }
    Ok(out)
}

/// System security by enumeration. `None` means secure within the bounds.
pub fn system_security(sys: &System, bounds: &Bounds, alvl: Symbol, d: &Declassifier) -> Result<Option<Finding>> {
    let states = initial_states(sys, bounds)?;
    budget(sys, bounds, states.len() as u64)?;
    let lat = &sys.policy.lattice;
    for sched in schedules(sys.thread_count(), bounds.sched) {
        let runs: Vec<Vec<GlobalConfig>> = states
            .iter()
            .map(|s| execute(sys, bounds, s, &sched))
            .collect::<Result<_>>()?;
        let finals: Vec<Vec<Event>> = runs
            .iter()
            .map(|r| visible_trace(sys, alvl, &r.last().unwrap().state.trace))
            .collect();
        for (i, cfgs) in runs.iter().enumerate() {
            for step in 0..cfgs.len() - 1 {
                let (pre, post) = (&cfgs[step], &cfgs[step + 1]);
                let Some(e) = post.state.trace.events().get(pre.state.trace.len()) else {
                    continue;
                };
                let tid = sched[step];
                if e.kind == EventKind::Declass && visible(lat, alvl, e) {
                    let head = pre.locals[tid].head();
                    debug_assert!(release(sys, head).is_some());
                    if !d.permits(head, &pre.state)? {
                        return Ok(Some(Finding {
                            schedule: sched.clone(),
                            initial: i,
                            other: None,
                            step,
                            event: Some(e.clone()),
                        }));
                    }
                    continue;
                }
                // U(t) ⊆ U(t·e); runs only grow, so giving rise to an
                // observation means having it as a prefix of the final one
                let before = visible_trace(sys, alvl, &pre.state.trace);
                let after = visible_trace(sys, alvl, &post.state.trace);
                for (j, other) in states.iter().enumerate() {
                    if !gstate_equiv(&sys.policy, alvl, other, &states[i]) {
                        continue;
                    }
                    let fin = &finals[j];
                    let in_before = fin.starts_with(&before);
                    let in_after = fin.starts_with(&after);
                    if in_before && !in_after {
                        return Ok(Some(Finding {
                            schedule: sched.clone(),
                            initial: i,
                            other: Some(j),
                            step,
                            event: Some(e.clone()),
                        }));
                    }
                }
            }
        }
    }
    Ok(None)
}

fn snapshot(sys: &System, alvl: Symbol, c: &GlobalConfig) -> (Vec<Rc<Command>>, usize, Vec<usize>) {
    let lat = &sys.policy.lattice;
    let code = c.locals.clone();
    let vis = c.state.trace.events().iter().filter(|e| visible(lat, alvl, e)).count();
    let counts = lat.levels().iter().map(|l| c.state.trace.input_count(*l)).collect();
    (code, vis, counts)
}

/// Delimited release and absence of secret branching by enumeration of
/// agreeing pairs. Each component is `None` when the property holds.
pub fn release_properties(sys: &System, bounds: &Bounds, alvl: Symbol) -> Result<(Option<Finding>, Option<Finding>)> {
    let states = initial_states(sys, bounds)?;
    budget(sys, bounds, states.len() as u64)?;
    let horizon = bounds.sched + bounds.prefix;
    let mut pairs = Vec::new();
    for (i, s) in states.iter().enumerate() {
        for (j, t) in states.iter().enumerate() {
            if state_dr_agree(&sys.policy, bounds.domain, alvl, s, t, horizon)? {
                pairs.push((i, j));
            }
        }
    }
    let (mut dr, mut nsb) = (None, None);
    for sched in schedules(sys.thread_count(), bounds.sched) {
        let runs: Vec<Vec<GlobalConfig>> = states
            .iter()
            .map(|s| execute(sys, bounds, s, &sched))
            .collect::<Result<_>>()?;
        for &(i, j) in &pairs {
            let (a, b) = (&runs[i], &runs[j]);
            if dr.is_none() {
                if let Some(step) = a
                    .iter()
                    .position(|y| !gives_rise(sys, alvl, b, &visible_trace(sys, alvl, &y.state.trace)))
                {
                    dr = Some(Finding {
                        schedule: sched.clone(),
                        initial: i,
                        other: Some(j),
                        step,
                        event: None,
                    });
                }
            }
            if nsb.is_none() {
                let theirs: Vec<_> = b.iter().map(|c| snapshot(sys, alvl, c)).collect();
                if let Some(step) = a.iter().position(|y| !theirs.contains(&snapshot(sys, alvl, y))) {
                    nsb = Some(Finding {
                        schedule: sched.clone(),
                        initial: i,
                        other: Some(j),
                        step,
                        event: None,
                    });
                }
            }
            if dr.is_some() && nsb.is_some() {
                return Ok((dr, nsb));
            }
        }
    }
    Ok((dr, nsb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;
    use crate::policy::parse_policy;

    fn sys(prog: &str, pol: &str) -> System {
        System::new(parse_program(prog).unwrap(), parse_policy(pol).unwrap()).unwrap()
    }

    const TWO: &str = "lattice { levels bot top; bot <= top; } labels { h: top; l: bot; }";

    #[test]
    fn schedules_are_lexicographic() {
        let all: Vec<_> = schedules(2, 2).collect();
        assert_eq!(all, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn empty_trace_keeps_the_whole_class() {
        let s = sys("vars h l; thread 0 { output bot h {true} }", TWO);
        let b = Bounds::new(2, 1, 1);
        let states = initial_states(&s, &b).unwrap();
        let bot = Symbol::intern("bot");
        let init = &states[0];
        let u = uncertainty(&s, &b, bot, &states, init, &[0], &Trace::default()).unwrap();
        let class: Vec<usize> = (0..states.len())
            .filter(|&i| gstate_equiv(&s.policy, bot, &states[i], init))
            .collect();
        assert_eq!(u, class);
    }

    #[test]
    fn observing_a_secret_narrows_to_its_value() {
        let s = sys("vars h l; thread 0 { output bot h {true} }", TWO);
        let b = Bounds::new(2, 1, 1);
        let states = initial_states(&s, &b).unwrap();
        let bot = Symbol::intern("bot");
        let init = states.iter().find(|st| st.mem.get(Symbol::intern("h")) == Some(1)).unwrap();
        let cfgs = execute(&s, &b, init, &[0]).unwrap();
        let t = &cfgs.last().unwrap().state.trace;
        let u = uncertainty(&s, &b, bot, &states, init, &[0], t).unwrap();
        assert!(!u.is_empty());
        for i in u {
            assert_eq!(states[i].mem.get(Symbol::intern("h")), Some(1));
        }
    }
}
