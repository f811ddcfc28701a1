//! Bounded discharge of verification conditions.
//!
//! A condition `{H} s {C}` is checked by enumerating the states of its
//! support (see [`crate::space`]), running `s` on every state satisfying
//! `H` with every possible input value, and evaluating `C` afterwards. A
//! statement that cannot run (a blocked acquire, a release of a lock the
//! thread does not own) has no post-state and so satisfies any conclusion.
//!
//! Several conditions are settled syntactically first; interference
//! conditions are overwhelmingly of that kind.

use std::rc::Rc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lang::ast::Command;
use crate::lang::term::{Scope, Term};
use crate::semantics::state::GlobalState;
use crate::semantics::step_in_place;
use crate::space::{describe, feed, Space, Support};
use crate::system::{Bounds, System};
use crate::value::ThreadId;

use super::{Origin, Vc};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discharge {
    Valid { shortcut: Option<&'static str> },
    /// A counterexample: a state satisfying the hypothesis and the state
    /// the statement leads to.
    Invalid(String),
    /// The state space exceeded the cap.
    Undischarged(String),
}

impl Discharge {
    pub fn is_valid(&self) -> bool {
        matches!(self, Discharge::Valid { .. })
    }
}

/// Whether `s` leaves everything `c` reads untouched.
fn frame(s: &Command, c: &Term) -> bool {
    let reads = Support::of(&[c]);
    match s {
        Command::Assign { var, .. } | Command::DAssign { var, .. } => !reads.vars.contains(var),
        Command::Input { var, level, .. } => {
            !reads.vars.contains(var) && !reads.inputs.iter().any(|(l, _)| l == level)
        }
        Command::Output { level, .. } => !reads.outputs.contains(level),
        Command::DOutput { .. } => true,
        Command::Acquire { lock, .. } | Command::Release { lock, .. } => {
            !reads.locks.iter().any(|(l, _)| l == lock)
        }
        _ => false,
    }
}

/// Lock facts asserted by top-level conjuncts: `(lock, Some(owner))` for
/// `held`, `(lock, None)` for `free`.
fn lock_facts(t: &Rc<Term>) -> Vec<(crate::symbol::Symbol, Option<ThreadId>)> {
    t.conjuncts()
        .iter()
        .filter_map(|c| match &**c {
            Term::Held(l, t) => Some((*l, Some(*t))),
            Term::Free(l) => Some((*l, None)),
            _ => None,
        })
        .collect()
}

fn shortcut(vc: &Vc) -> Option<&'static str> {
    if vc.concl.is_true_literal() {
        return Some("trivial conclusion");
    }
    let facts = lock_facts(&vc.hyp);
    for (i, (l, a)) in facts.iter().enumerate() {
        if facts[i + 1..].iter().any(|(m, b)| m == l && a != b) {
            return Some("lock disjointness");
        }
    }
    let tid = vc.origin.executor();
    match vc.stmt.as_deref() {
        Some(Command::Acquire { lock, .. }) if facts.iter().any(|(l, o)| l == lock && o.is_some()) => {
            return Some("blocked acquire");
        }
        Some(Command::Release { lock, .. }) if facts.iter().any(|(l, o)| l == lock && *o != Some(tid)) => {
            return Some("release of a lock not owned");
        }
        _ => {}
    }
    if let (Origin::Interference { .. }, Some(s)) = (vc.origin, &vc.stmt) {
        if let Command::Assign { var, expr, .. } = &**s {
            if **expr == Term::Var(*var) {
                return Some("self-assignment");
            }
        }
        if frame(s, &vc.concl) {
            return Some("frame");
        }
    }
    None
}

pub fn discharge(sys: &System, bounds: &Bounds, vc: &Vc) -> Result<Discharge> {
    if let Some(s) = shortcut(vc) {
        return Ok(Discharge::Valid { shortcut: Some(s) });
    }
    let tid = vc.origin.executor();
    let mut support = Support::of(&[&vc.hyp, &vc.concl]);
    if let Some(s) = &vc.stmt {
        support.add_command(s, tid);
    }
    if let Origin::Init { .. } = vc.origin {
        // initial states have free locks and an empty trace
        support.locks.clear();
        support.inputs.clear();
        support.outputs.clear();
    }
    let k = bounds.domain;
    let space = match Space::new(sys, k, bounds.history(), bounds.cap, &support) {
        Ok(s) => s,
        Err(Error::Bounds(m)) => return Ok(Discharge::Undischarged(m)),
        Err(e) => return Err(e),
    };
    let holds = |t: &Term, st: &GlobalState| -> Result<bool> {
        Ok(Scope::new(k, &sys.policy.tables)
            .with_mem(&st.mem)
            .with_locks(&st.locks)
            .with_trace(&st.trace)
            .holds(t)?)
    };
    let mut bad = None;
    space.for_each(|st| {
        if !holds(&vc.hyp, st)? {
            return Ok(true);
        }
        let pres: Vec<GlobalState> = match vc.stmt.as_deref() {
            Some(Command::Input { level, .. }) => k.values().map(|v| feed(st, *level, v)).collect(),
            _ => vec![st.clone()],
        };
        for pre in pres {
            let mut post = pre;
            if let Some(s) = &vc.stmt {
                if step_in_place(sys, k, tid, s, &mut post)?.is_none() {
                    continue;
                }
            }
            if !holds(&vc.concl, &post)? {
                let mut shown = support.clone();
                if let Some(s) = &vc.stmt {
                    for x in s.writes() {
                        shown.add_var(x);
                    }
                }
                bad = Some(if vc.stmt.is_some() {
                    format!("from {} to {}", describe(st, &shown), describe(&post, &shown))
                } else {
                    format!("in {}", describe(st, &shown))
                });
                return Ok(false);
            }
        }
        Ok(true)
    })?;
    Ok(match bad {
        Some(m) => Discharge::Invalid(m),
        None => Discharge::Valid { shortcut: None },
    })
}
