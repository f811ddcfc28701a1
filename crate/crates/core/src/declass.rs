//! Evaluation of the declassification predicate `D(src, dst, state, v, c)`.
//!
//! Two forms are supported. A predicate written in the declassification
//! language is evaluated directly in the state. The predicate induced by
//! escape hatches holds for a command when some hatch from the source to the
//! destination level agrees with the declassified expression in every state
//! satisfying the command's annotation; that judgement does not depend on
//! the current state, so it is computed once per statement.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::equivalence::hatch_value;
use crate::error::{Error, Result};
use crate::lang::ast::{Ann, Command, StmtId};
use crate::lang::term::{DeclassFacts, Scope, Term};
use crate::policy::DeclassPredicate;
use crate::semantics::state::GlobalState;
use crate::space::{History, Space, Support};
use crate::symbol::Symbol;
use crate::system::{Bounds, System};
use crate::value::{ThreadId, Value};

/// What a declassifying command releases.
pub struct Release<'c> {
    /// Label of the declassified expression; `None` if it reads an
    /// unlabeled variable.
    pub src: Option<Symbol>,
    pub dst: Symbol,
    pub expr: &'c Rc<Term>,
    pub ann: &'c Ann,
}

/// The release performed by `c`, or `None` when `c` does not declassify.
pub fn release<'c>(sys: &System, c: &'c Command) -> Option<Release<'c>> {
    let (dst, expr, ann) = match c {
        Command::DAssign { var, expr, ann, .. } => (sys.policy.labels.get(*var)?, expr, ann),
        Command::DOutput { level, expr, ann, .. } => (*level, expr, ann),
        _ => return None,
    };
    Some(Release {
        src: sys.policy.expr_label(expr),
        dst,
        expr,
        ann,
    })
}

fn scope<'s>(sys: &'s System, b: &Bounds, st: &'s GlobalState) -> Scope<'s> {
    Scope::new(b.domain, &sys.policy.tables)
        .with_mem(&st.mem)
        .with_locks(&st.locks)
        .with_trace(&st.trace)
}

pub struct Declassifier<'a> {
    sys: &'a System,
    bounds: Bounds,
    pred: DeclassPredicate,
    memo: RefCell<HashMap<StmtId, bool>>,
}

impl<'a> Declassifier<'a> {
    pub fn new(sys: &'a System, bounds: Bounds, pred: DeclassPredicate) -> Declassifier<'a> {
        Declassifier {
            sys,
            bounds,
            pred,
            memo: RefCell::new(HashMap::new()),
        }
    }

    pub fn predicate(&self) -> &DeclassPredicate {
        &self.pred
    }

    /// `D(L(E), dst, st, eval E, c)` for the command `c` about to run in
    /// `st`. Non-declassifying commands are always permitted.
    pub fn permits(&self, c: &Command, st: &GlobalState) -> Result<bool> {
        let Some(r) = release(self.sys, c) else {
            return Ok(true);
        };
        let Some(src) = r.src else {
            return Ok(false);
        };
        match &self.pred {
            DeclassPredicate::Dsl(d) => {
                let sc = scope(self.sys, &self.bounds, st);
                let value = sc.eval(r.expr)?;
                let ann = sc.holds(r.ann)?;
                self.dsl(d, src, r.dst, value, ann, st)
            }
            DeclassPredicate::Encoded(_) => self.encoded(c, &r, src),
        }
    }

    fn dsl(&self, d: &Term, src: Symbol, dst: Symbol, value: Value, ann: bool, st: &GlobalState) -> Result<bool> {
        let facts = DeclassFacts { src, dst, value, ann };
        Ok(scope(self.sys, &self.bounds, st)
            .with_declass(facts, &self.sys.policy.lattice)
            .holds(d)?)
    }

    fn encoded(&self, c: &Command, r: &Release, src: Symbol) -> Result<bool> {
        let id = c.id().expect("declassifying commands carry ids");
        if let Some(b) = self.memo.borrow().get(&id) {
            return Ok(*b);
        }
        let hatches: Vec<Rc<Term>> = match &self.pred {
            DeclassPredicate::Encoded(hs) => hs
                .iter()
                .filter(|h| h.src == src && h.dst == r.dst)
                .map(|h| h.expr.clone())
                .collect(),
            DeclassPredicate::Dsl(_) => unreachable!(),
        };
        let mut support = Support::of(&[r.ann, r.expr]);
        support.add_input(src, History::Full);
        let b = &self.bounds;
        let space = Space::new(self.sys, b.domain, b.history(), b.cap, &support)?;
        let mut found = false;
        for h in &hatches {
            let all = space.for_each(|st| {
                let sc = scope(self.sys, b, st);
                if !sc.holds(r.ann)? {
                    return Ok(true);
                }
                let vs: Vec<Value> = st.trace.inputs(src).collect();
                Ok(sc.eval(r.expr)? == hatch_value(&self.sys.policy, b.domain, h, &vs)?)
            })?;
            if all {
                found = true;
                break;
            }
        }
        self.memo.borrow_mut().insert(id, found);
        Ok(found)
    }

    /// The declassification premise of the logic: `D` holds in every state
    /// satisfying the annotation of `c`. Returns a description of a
    /// counterexample state when it fails.
    pub fn premise(&self, c: &Command, _tid: ThreadId) -> Result<Option<String>> {
        let Some(r) = release(self.sys, c) else {
            return Ok(None);
        };
        let Some(src) = r.src else {
            return Ok(Some(format!("`{}` reads an unlabeled variable", r.expr)));
        };
        match &self.pred {
            DeclassPredicate::Encoded(_) => Ok(if self.encoded(c, &r, src)? {
                None
            } else {
                Some(format!(
                    "no escape hatch from {} to {} equals `{}` under the annotation",
                    src, r.dst, r.expr
                ))
            }),
            DeclassPredicate::Dsl(d) => {
                let support = Support::of(&[r.ann, r.expr, d]);
                let b = &self.bounds;
                let space = Space::new(self.sys, b.domain, b.history(), b.cap, &support)?;
                let mut bad = None;
                space.for_each(|st| {
                    let sc = scope(self.sys, b, st);
                    if !sc.holds(r.ann)? {
                        return Ok(true);
                    }
                    let v = sc.eval(r.expr)?;
                    if self.dsl(d, src, r.dst, v, true, st)? {
                        Ok(true)
                    } else {
                        bad = Some(describe(st, v));
                        Ok(false)
                    }
                })?;
                Ok(bad)
            }
        }
    }
}

fn describe(st: &GlobalState, v: Value) -> String {
    let mem: Vec<String> = st.mem.slots.iter().map(|(x, v)| format!("{}={}", x, v)).collect();
    let tr: Vec<String> = st.trace.events().iter().map(|e| e.to_string()).collect();
    format!("v={} in state [{}] with trace [{}]", v, mem.join(" "), tr.join(" "))
}

/// Convenience for reports: whether an error is a bound overrun.
pub fn is_bound_error(e: &Error) -> bool {
    matches!(e, Error::Bounds(_))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;
    use crate::policy::parse_policy;
    use crate::semantics::state::{Environment, LockMap, Memory, Trace};

    const LAT: &str = "lattice { levels bot top; bot <= top; } labels { h: top; l: bot; }";

    fn sys(body: &str, extra: &str) -> System {
        let prog = parse_program(&format!("vars h l u; {}", body)).unwrap();
        System::new(prog, parse_policy(&format!("{} {}", LAT, extra)).unwrap()).unwrap()
    }

    fn stmt(s: &System, i: usize) -> Rc<Command> {
        s.program.threads[0].flatten()[i].clone()
    }

    fn state(s: &System, h: Value) -> GlobalState {
        let mut mem = Memory::zeroed(&s.program.vars);
        mem.set(Symbol::intern("h"), h);
        GlobalState {
            env: Environment::constant(s.policy.lattice.levels(), 0),
            mem,
            locks: LockMap::free(&s.program.locks),
            trace: Trace::default(),
        }
    }

    fn premise(s: &System, i: usize) -> Option<String> {
        let d = Declassifier::new(s, Bounds::new(3, 2, 4), s.policy.declass_predicate());
        d.premise(&stmt(s, i), 0).unwrap()
    }

    #[test]
    fn releases_name_source_and_destination() {
        let s = sys("thread 0 { l :=^ h; output^ bot h + l; output^ bot u; l := h }", "");
        let c = stmt(&s, 0);
        let r = release(&s, &c).unwrap();
        assert_eq!((r.src, r.dst), (Some(Symbol::intern("top")), Symbol::intern("bot")));
        // the source is the join of the labels read
        assert_eq!(release(&s, &stmt(&s, 1)).unwrap().src, Some(Symbol::intern("top")));
        assert_eq!(release(&s, &stmt(&s, 2)).unwrap().src, None);
        assert!(release(&s, &stmt(&s, 3)).is_none());
        assert!(premise(&s, 2).unwrap().contains("unlabeled"));
    }

    #[test]
    fn hatch_premise_needs_the_annotation_to_pin_the_value() {
        let hatch = "hatches { top -> bot: last(vs); }";
        let s = sys("thread 0 { input h top; l :=^ h {h = lastinput(top)} }", hatch);
        assert_eq!(premise(&s, 1), None);
        let s = sys("thread 0 { input h top; l :=^ h }", hatch);
        assert!(premise(&s, 1).unwrap().contains("no escape hatch"));
    }

    #[test]
    fn dsl_predicates_are_evaluated_in_the_state() {
        let s = sys("thread 0 { l :=^ h }", "declass { v = 0 && src = top && dst <= bot }");
        let d = Declassifier::new(&s, Bounds::new(3, 1, 1), s.policy.declass_predicate());
        let c = stmt(&s, 0);
        assert!(d.permits(&c, &state(&s, 0)).unwrap());
        assert!(!d.permits(&c, &state(&s, 2)).unwrap());
        assert!(premise(&s, 0).unwrap().contains("v=1"));
        let pinned = sys("thread 0 { l :=^ h {h = 0} }", "declass { v = 0 }");
        assert_eq!(premise(&pinned, 0), None);
    }

    #[test]
    fn ordinary_commands_are_always_permitted() {
        let s = sys("thread 0 { l := h }", "declass { false }");
        let d = Declassifier::new(&s, Bounds::new(2, 1, 1), s.policy.declass_predicate());
        assert!(d.permits(&stmt(&s, 0), &state(&s, 1)).unwrap());
    }
}
