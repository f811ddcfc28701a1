//! `explevel(lvl, A, E)`: the value of `E` is determined by what an
//! observer at `lvl` sees, in every pair of indistinguishable states
//! satisfying `A`.
//!
//! Enumerates the support of `A` and `E` and groups the states satisfying
//! `A` by their visible projection (labeled variables at or below `lvl`,
//! lock owners, visible trace events). `E` must be constant on each group.

use std::collections::HashMap;
use std::rc::Rc;

use serde::Serialize;

use crate::equivalence::project;
use crate::error::{Error, Result};
use crate::lang::term::{Scope, Term};
use crate::semantics::state::{Event, GlobalState};
use crate::space::{describe, Space, Support};
use crate::symbol::Symbol;
use crate::system::{Bounds, System};
use crate::value::{ThreadId, Value};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Judgement {
    /// Holds; `fast` when every variable of the expression is visible.
    Holds { fast: bool },
    /// Two indistinguishable states giving different values.
    Fails(String),
    /// The enumeration exceeded the cap.
    Undetermined(String),
}

impl Judgement {
    pub fn holds(&self) -> bool {
        matches!(self, Judgement::Holds { .. })
    }
}

/// What an observer at `lvl` sees of a state restricted to `support`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub(crate) struct View {
    vars: Vec<Option<Value>>,
    locks: Vec<Option<Option<ThreadId>>>,
    trace: Vec<Event>,
}

pub(crate) fn view(sys: &System, lvl: Symbol, support: &Support, st: &GlobalState) -> View {
    let pol = &sys.policy;
    View {
        vars: support
            .vars
            .iter()
            .filter(|x| pol.labels.get(**x).is_some_and(|l| pol.lattice.leq(l, lvl)))
            .map(|x| st.mem.get(*x))
            .collect(),
        locks: support.locks.iter().map(|(l, _)| st.locks.get(*l)).collect(),
        trace: project(&pol.lattice, lvl, &st.trace).into_iter().cloned().collect(),
    }
}

/// Whether every variable of `e` carries a label at or below `lvl`.
pub fn visibly_labeled(sys: &System, lvl: Symbol, e: &Term) -> bool {
    let pol = &sys.policy;
    e.vars()
        .into_iter()
        .all(|x| pol.labels.get(x).is_some_and(|l| pol.lattice.leq(l, lvl)))
}

pub fn explevel(sys: &System, bounds: &Bounds, lvl: Symbol, a: &Rc<Term>, e: &Rc<Term>) -> Result<Judgement> {
    if visibly_labeled(sys, lvl, e) {
        return Ok(Judgement::Holds { fast: true });
    }
    let support = Support::of(&[a, e]);
    let k = bounds.domain;
    let space = match Space::new(sys, k, bounds.history(), bounds.cap, &support) {
        Ok(s) => s,
        Err(Error::Bounds(m)) => return Ok(Judgement::Undetermined(m)),
        Err(err) => return Err(err),
    };
    let mut seen: HashMap<View, (Value, GlobalState)> = HashMap::new();
    let mut bad = None;
    space.for_each(|st| {
        let sc = Scope::new(k, &sys.policy.tables)
            .with_mem(&st.mem)
            .with_locks(&st.locks)
            .with_trace(&st.trace);
        if !sc.holds(a)? {
            return Ok(true);
        }
        let v = sc.eval(e)?;
        match seen.get(&view(sys, lvl, &support, st)) {
            Some((w, other)) if *w != v => {
                bad = Some(format!(
                    "`{}` is {} in {} but {} in {}",
                    e,
                    w,
                    describe(other, &support),
                    v,
                    describe(st, &support)
                ));
                Ok(false)
            }
            Some(_) => Ok(true),
            None => {
                seen.insert(view(sys, lvl, &support, st), (v, st.clone()));
                Ok(true)
            }
        }
    })?;
    Ok(match bad {
        Some(m) => Judgement::Fails(m),
        None => Judgement::Holds { fast: false },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_program, parse_term, TermContext};
    use crate::policy::parse_policy;

    fn sys() -> System {
        let prog = parse_program("vars h l buf; locks m; thread 0 { l := 0 {true} }").unwrap();
        let pol = parse_policy("lattice { levels bot top; bot <= top; } labels { h: top; l: bot; }").unwrap();
        System::new(prog, pol).unwrap()
    }

    fn judge(a: &str, e: &str) -> Judgement {
        let s = sys();
        let a = parse_term(a, TermContext::Annotation).unwrap();
        let e = parse_term(e, TermContext::Expr).unwrap();
        explevel(&s, &Bounds::new(3, 1, 1), Symbol::intern("bot"), &a, &e).unwrap()
    }

    #[test]
    fn visible_expressions_take_the_fast_path() {
        assert_eq!(judge("true", "l + 1"), Judgement::Holds { fast: true });
    }

    #[test]
    fn secrets_and_free_unlabeled_variables_fail() {
        assert!(!judge("true", "h").holds());
        assert!(!judge("true", "buf").holds());
    }

    #[test]
    fn annotations_can_pin_unlabeled_variables() {
        assert_eq!(judge("buf = l", "buf"), Judgement::Holds { fast: false });
        assert_eq!(judge("buf = lastinput(bot)", "buf"), Judgement::Holds { fast: false });
        assert!(!judge("buf = lastinput(top)", "buf").holds());
        assert!(!judge("buf = h", "buf").holds());
        // an unsatisfiable annotation makes every expression visible
        assert!(judge("false", "h").holds());
    }
}
