//! Strongest-postcondition annotation inference, and stabilisation of
//! annotations against interference.
//!
//! Inference runs forward through each thread, keeping the current
//! precondition as a list of conjuncts. An assignment drops the facts about
//! its target and records the new value, an input records the last input
//! of its channel, lock operations record ownership, and branches are
//! joined by factoring out common conjuncts and disjoining the rest. The
//! result is a sequential proof for each thread; nothing guarantees that
//! other threads leave it intact.
//!
//! [`stabilize`] then weakens annotations until every verification
//! condition, including interference freedom, discharges.

use std::collections::HashMap;
use std::rc::Rc;

use crate::error::Result;
use crate::lang::ast::{Ann, Command, Program, StmtId};
use crate::lang::term::{BinOp, Term, TraceQuery};
use crate::symbol::Symbol;
use crate::system::{Bounds, System};
use crate::value::ThreadId;

use super::{discharge, generate, Vc};

#[derive(Clone, Debug)]
pub struct InferOutcome {
    pub program: Program,
    /// Places where a fact could not be carried over.
    pub notices: Vec<String>,
    /// Statements whose annotation was inferred rather than supplied.
    pub inferred: Vec<StmtId>,
}

fn mentions_lock(t: &Term, l: Symbol) -> bool {
    t.locks().contains(&l)
}

fn mentions_inputs(t: &Term, l: Symbol) -> bool {
    let mut hit = false;
    t.visit(&mut |t| {
        hit |= match t {
            Term::Trace(TraceQuery::LastInput | TraceQuery::InputCount, m) | Term::Inputs(m) | Term::NthInput(m, _) => {
                *m == l
            }
            _ => false,
        }
    });
    hit
}

fn mentions_outputs(t: &Term, l: Symbol) -> bool {
    let mut hit = false;
    t.visit(&mut |t| hit |= matches!(t, Term::Trace(TraceQuery::LastOutput, m) if *m == l));
    hit
}

/// Replaces every occurrence of variable `x` in `t` by `by`.
fn subst(t: &Rc<Term>, x: Symbol, by: &Rc<Term>) -> Rc<Term> {
    let s = |a: &Rc<Term>| subst(a, x, by);
    Rc::new(match &**t {
        Term::Var(y) if *y == x => return by.clone(),
        Term::Unary(op, a) => Term::Unary(*op, s(a)),
        Term::Binary(op, a, b) => Term::Binary(*op, s(a), s(b)),
        Term::Cond(a, b, c) => Term::Cond(s(a), s(b), s(c)),
        Term::Apply(f, a) => Term::Apply(*f, s(a)),
        Term::NthInput(l, a) => Term::NthInput(*l, s(a)),
        Term::ListFn(f, a) => Term::ListFn(*f, s(a)),
        Term::Take(a, b) => Term::Take(s(a), s(b)),
        Term::Rev(a) => Term::Rev(s(a)),
        _ => return t.clone(),
    })
}

fn conj_all(cs: &[Rc<Term>]) -> Rc<Term> {
    cs.iter().cloned().fold(Term::tt(), Term::and)
}

fn push(cs: &mut Vec<Rc<Term>>, t: Rc<Term>) {
    if !t.is_true_literal() && !cs.contains(&t) {
        cs.push(t);
    }
}

struct Sp<'a> {
    tid: ThreadId,
    anns: &'a mut HashMap<StmtId, Ann>,
    notices: &'a mut Vec<String>,
    inferred: &'a mut Vec<StmtId>,
}

impl Sp<'_> {
    /// Annotates `c` starting from `pre`; returns the postcondition.
    fn seq(&mut self, c: &Rc<Command>, pre: Vec<Rc<Term>>) -> Vec<Rc<Term>> {
        c.flatten().iter().fold(pre, |p, item| self.stmt(item, p))
    }

    fn stmt(&mut self, c: &Command, pre: Vec<Rc<Term>>) -> Vec<Rc<Term>> {
        let id = c.id().expect("statements have ids");
        let own = c.own_ann().expect("statements are annotated");
        // user-written annotations are kept and taken as the new starting point
        let pre = if own.is_true_literal() {
            if !self.inferred.contains(&id) {
                self.inferred.push(id);
            }
            pre
        } else {
            own.conjuncts()
        };
        self.anns.insert(id, conj_all(&pre));
        let keep = |pre: &[Rc<Term>], kill: &dyn Fn(&Term) -> bool| -> Vec<Rc<Term>> {
            pre.iter().filter(|t| !kill(t)).cloned().collect()
        };
        match c {
            Command::Assign { var, expr, .. } | Command::DAssign { var, expr, .. } => {
                let x = *var;
                if **expr == Term::Var(x) {
                    return pre;
                }
                let mut post = keep(&pre, &|t| t.mentions_var(x));
                if !expr.mentions_var(x) {
                    push(&mut post, Term::eq(Term::var(x), expr.clone()));
                } else {
                    // carry `x = t` through `x := e` as `x = e[t/x]`
                    let old = pre.iter().find_map(|t| match &**t {
                        Term::Binary(BinOp::Eq, a, b) if **a == Term::Var(x) && !b.mentions_var(x) => Some(b.clone()),
                        _ => None,
                    });
                    match old {
                        Some(o) => push(&mut post, Term::eq(Term::var(x), subst(expr, x, &o))),
                        None => {
                            if pre.iter().any(|t| t.mentions_var(x)) {
                                self.notices
                                    .push(format!("thread {}: facts about {} dropped at statement {}", self.tid, x, id));
                            }
                        }
                    }
                }
                post
            }
            Command::Input { var, level, .. } => {
                let mut post = keep(&pre, &|t| t.mentions_var(*var) || mentions_inputs(t, *level));
                push(
                    &mut post,
                    Term::eq(Term::var(*var), Rc::new(Term::Trace(TraceQuery::LastInput, *level))),
                );
                post
            }
            Command::Output { level, expr, .. } => {
                let mut post = keep(&pre, &|t| mentions_outputs(t, *level));
                push(
                    &mut post,
                    Term::eq(Rc::new(Term::Trace(TraceQuery::LastOutput, *level)), expr.clone()),
                );
                post
            }
            Command::DOutput { .. } => pre,
            Command::Acquire { lock, .. } => {
                let mut post = keep(&pre, &|t| mentions_lock(t, *lock));
                push(&mut post, Rc::new(Term::Held(*lock, self.tid)));
                post
            }
            Command::Release { lock, .. } => {
                let mut post = keep(&pre, &|t| mentions_lock(t, *lock));
                push(&mut post, Term::not(Rc::new(Term::Held(*lock, self.tid))));
                post
            }
            Command::If {
                cond, then_, else_, ..
            } => {
                let mut tp = pre.clone();
                push(&mut tp, cond.clone());
                let mut ep = pre.clone();
                push(&mut ep, Term::not(cond.clone()));
                let a = self.seq(then_, tp);
                let b = self.seq(else_, ep);
                join(a, b)
            }
            Command::While { cond, inv, body, .. } => {
                let head = if own.is_true_literal() {
                    if inv.is_true_literal() {
                        self.notices
                            .push(format!("thread {}: loop {} has invariant `true`", self.tid, id));
                    }
                    inv.conjuncts()
                } else {
                    own.conjuncts()
                };
                self.anns.insert(id, conj_all(&head));
                let mut bp = head.clone();
                push(&mut bp, cond.clone());
                self.seq(body, bp);
                let mut post = head;
                push(&mut post, Term::not(cond.clone()));
                post
            }
            Command::Seq(..) | Command::Stop => unreachable!(),
        }
    }
}

/// Common conjuncts, plus the disjunction of what remains of each side.
fn join(a: Vec<Rc<Term>>, b: Vec<Rc<Term>>) -> Vec<Rc<Term>> {
    let common: Vec<Rc<Term>> = a.iter().filter(|t| b.contains(t)).cloned().collect();
    let ra: Vec<Rc<Term>> = a.iter().filter(|t| !common.contains(t)).cloned().collect();
    let rb: Vec<Rc<Term>> = b.iter().filter(|t| !common.contains(t)).cloned().collect();
    let mut out = common;
    if !ra.is_empty() && !rb.is_empty() {
        push(&mut out, Term::bin(BinOp::Or, conj_all(&ra), conj_all(&rb)));
    }
    out
}

/// Replaces every `true` annotation with the inferred strongest
/// postcondition of what precedes it. Threads start from the program's
/// precondition.
pub fn infer_annotations(prog: &Program) -> InferOutcome {
    let mut anns = HashMap::new();
    let mut notices = Vec::new();
    let mut inferred = Vec::new();
    let init = prog.init.as_ref().map(|i| i.conjuncts()).unwrap_or_default();
    for (tid, t) in prog.threads.iter().enumerate() {
        let mut sp = Sp {
            tid,
            anns: &mut anns,
            notices: &mut notices,
            inferred: &mut inferred,
        };
        sp.seq(t, init.clone());
    }
    let mut out = prog.clone();
    for t in out.threads.iter_mut() {
        *t = t.map_anns(&mut |id, old| anns.get(&id).cloned().unwrap_or_else(|| old.clone()));
    }
    InferOutcome {
        program: out,
        notices,
        inferred,
    }
}

/// Where a condition's conclusion lives: the statement whose annotation
/// (or, with `true`, loop invariant) it is.
fn site(prog: &Program, vc: &Vc) -> Option<(StmtId, bool)> {
    let mut found = None;
    for t in &prog.threads {
        t.visit(&mut |c| {
            if found.is_some() {
                return;
            }
            if c.own_ann().is_some_and(|a| Rc::ptr_eq(a, &vc.concl)) {
                found = Some((c.id().unwrap(), false));
            } else if let Command::While { id, inv, .. } = c {
                if Rc::ptr_eq(inv, &vc.concl) {
                    found = Some((*id, true));
                }
            }
        });
    }
    found
}

/// Weakens annotations (dropping conjuncts that some condition cannot
/// establish) until every condition discharges. Returns the program and the
/// number of conjuncts dropped.
pub fn stabilize(sys: &System, bounds: &Bounds) -> Result<(Program, usize)> {
    stabilize_within(sys, bounds, None)
}

/// [`stabilize`], weakening only the annotations of the statements in
/// `only` when given; other failing conditions are left for verification
/// to report.
pub fn stabilize_within(sys: &System, bounds: &Bounds, only: Option<&[StmtId]>) -> Result<(Program, usize)> {
    let mut prog = sys.program.clone();
    let mut dropped = 0;
    loop {
        let mut cut: HashMap<(StmtId, bool), Vec<Rc<Term>>> = HashMap::new();
        let probe = System {
            program: prog.clone(),
            policy: sys.policy.clone(),
        };
        for vc in generate(&prog) {
            if discharge(&probe, bounds, &vc)?.is_valid() {
                continue;
            }
            let Some(at) = site(&prog, &vc) else { continue };
            // invariants are always supplied, never inferred
            if only.is_some_and(|o| at.1 || !o.contains(&at.0)) {
                continue;
            }
            for c in vc.concl.conjuncts() {
                let single = Vc {
                    concl: c.clone(),
                    ..vc.clone()
                };
                if !discharge(&probe, bounds, &single)?.is_valid() {
                    let e = cut.entry(at).or_default();
                    if !e.contains(&c) {
                        e.push(c);
                    }
                }
            }
        }
        if cut.is_empty() {
            return Ok((prog, dropped));
        }
        for t in prog.threads.iter_mut() {
            *t = rebuild(t, &cut, &mut dropped);
        }
    }
}

fn weaken(a: &Ann, gone: Option<&Vec<Rc<Term>>>, dropped: &mut usize) -> Ann {
    match gone {
        None => a.clone(),
        Some(g) => {
            let keep: Vec<Rc<Term>> = a.conjuncts().into_iter().filter(|c| !g.contains(c)).collect();
            *dropped += a.conjuncts().len() - keep.len();
            conj_all(&keep)
        }
    }
}

fn rebuild(t: &Rc<Command>, cut: &HashMap<(StmtId, bool), Vec<Rc<Term>>>, dropped: &mut usize) -> Rc<Command> {
    let t = t.map_anns(&mut |id, a| weaken(a, cut.get(&(id, false)), dropped));
    fn invs(c: &Rc<Command>, cut: &HashMap<(StmtId, bool), Vec<Rc<Term>>>, dropped: &mut usize) -> Rc<Command> {
        match &**c {
            Command::Seq(a, b) => {
                let a = invs(a, cut, dropped);
                Rc::new(Command::Seq(a, invs(b, cut, dropped)))
            }
            Command::If {
                id,
                ann,
                cond,
                then_,
                else_,
            } => {
                let then_ = invs(then_, cut, dropped);
                Rc::new(Command::If {
                    id: *id,
                    ann: ann.clone(),
                    cond: cond.clone(),
                    then_,
                    else_: invs(else_, cut, dropped),
                })
            }
            Command::While {
                id,
                ann,
                cond,
                inv,
                body,
            } => Rc::new(Command::While {
                id: *id,
                ann: ann.clone(),
                cond: cond.clone(),
                inv: weaken(inv, cut.get(&(*id, true)), dropped),
                body: invs(body, cut, dropped),
            }),
            _ => c.clone(),
        }
    }
    invs(&t, cut, dropped)
}
