//! Attacker indistinguishability relations and delimited-release agreement.

use crate::error::EvalError;
use crate::lang::term::Scope;
use crate::policy::{Lattice, Policy};
use crate::semantics::state::{Environment, Event, GlobalState, Memory, Trace};
use crate::symbol::Symbol;
use crate::value::{Domain, Value};

/// Whether an attacker at `alvl` observes `e`.
pub fn visible(lat: &Lattice, alvl: Symbol, e: &Event) -> bool {
    lat.leq(e.level, alvl)
}

/// The events of `t` visible at `alvl`, in order.
pub fn project<'t>(lat: &Lattice, alvl: Symbol, t: &'t Trace) -> Vec<&'t Event> {
    t.events().iter().filter(|e| visible(lat, alvl, e)).collect()
}

pub fn trace_equiv(lat: &Lattice, alvl: Symbol, t: &Trace, u: &Trace) -> bool {
    let mut a = t.events().iter().filter(|e| visible(lat, alvl, e));
    let mut b = u.events().iter().filter(|e| visible(lat, alvl, e));
    loop {
        match (a.next(), b.next()) {
            (None, None) => return true,
            (Some(x), Some(y)) if x == y => {}
            _ => return false,
        }
    }
}

/// Streams at every level `<= alvl` are extensionally equal.
pub fn env_equiv(lat: &Lattice, alvl: Symbol, env: &Environment, other: &Environment) -> bool {
    lat.levels()
        .iter()
        .filter(|&&l| lat.leq(l, alvl))
        .all(|&l| env.stream(l) == other.stream(l))
}

/// Labeled variables at or below `alvl` agree; unlabeled ones are free.
pub fn mem_equiv(policy: &Policy, alvl: Symbol, m: &Memory, n: &Memory) -> bool {
    policy
        .labels
        .entries
        .iter()
        .filter(|(_, l)| policy.lattice.leq(*l, alvl))
        .all(|(x, _)| m.get(*x) == n.get(*x))
}

pub fn gstate_equiv(policy: &Policy, alvl: Symbol, s: &GlobalState, t: &GlobalState) -> bool {
    env_equiv(&policy.lattice, alvl, &s.env, &t.env)
        && mem_equiv(policy, alvl, &s.mem, &t.mem)
        && s.locks == t.locks
        && trace_equiv(&policy.lattice, alvl, &s.trace, &t.trace)
}

/// Evaluates a hatch on a list of consumed inputs.
pub fn hatch_value(policy: &Policy, k: Domain, h: &crate::lang::term::Term, vs: &[Value]) -> Result<Value, EvalError> {
    Scope::new(k, &policy.tables).with_vs(vs).eval(h)
}

/// The first `horizon` values of the stream at `lvl`.
fn prefixes(env: &Environment, lvl: Symbol, horizon: usize) -> Vec<Value> {
    let s = env.stream(lvl);
    (0..horizon)
        .map(|i| s.map_or(0, |s| s.nth(i)))
        .collect()
}

/// Every hatch whose destination the attacker observes yields the same value
/// on every equal-length prefix (up to `horizon`) of the two environments.
pub fn env_dr_agree(
    policy: &Policy,
    k: Domain,
    alvl: Symbol,
    env: &Environment,
    other: &Environment,
    horizon: usize,
) -> Result<bool, EvalError> {
    for h in policy
        .hatches
        .iter()
        .filter(|h| policy.lattice.leq(h.dst, alvl))
    {
        let a = prefixes(env, h.src, horizon);
        let b = prefixes(other, h.src, horizon);
        for n in 0..=horizon {
            if hatch_value(policy, k, &h.expr, &a[..n])? != hatch_value(policy, k, &h.expr, &b[..n])? {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// The environment with the inputs already consumed in `trace` put back in
/// front of each stream.
pub fn unconsume(env: &Environment, trace: &Trace) -> Environment {
    let mut out = env.clone();
    for (lvl, s) in out.streams.iter_mut() {
        let mut prefix: Vec<Value> = trace.inputs(*lvl).collect();
        prefix.extend(s.prefix.iter().copied());
        s.prefix = prefix;
    }
    out
}

/// State agreement under the hatches: indistinguishable, equal memories,
/// equal per-channel input counts, and hatch agreement on the environments
/// with consumed inputs restored.
pub fn state_dr_agree(
    policy: &Policy,
    k: Domain,
    alvl: Symbol,
    s: &GlobalState,
    t: &GlobalState,
    horizon: usize,
) -> Result<bool, EvalError> {
    if !gstate_equiv(policy, alvl, s, t) || s.mem != t.mem {
        return Ok(false);
    }
    let counts_agree = policy.lattice.levels().iter().all(|&l| {
        s.trace.input_count(l) == t.trace.input_count(l)
    });
    if !counts_agree {
        return Ok(false);
    }
    env_dr_agree(
        policy,
        k,
        alvl,
        &unconsume(&s.env, &s.trace),
        &unconsume(&t.env, &t.trace),
        horizon,
    )
}
