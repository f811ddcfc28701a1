//! Thread-local step rules and global scheduling.

use std::fmt;
use std::rc::Rc;

use serde::Serialize;

use crate::error::EvalError;
use crate::lang::ast::Command;
use crate::lang::term::Scope;
use crate::semantics::state::{Event, GlobalState};
use crate::system::System;
use crate::value::{truth, Domain, ThreadId};

/// The thread-local rule that fired. Sequencing rules report the rule that
/// fired inside the sequence's first component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Rule {
    Assign,
    DAssign,
    Output,
    DOutput,
    Input,
    IfT,
    IfF,
    WhileT,
    WhileF,
    Acquire,
    Release,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Steps `cmd` of thread `tid` in place. Returns the successor command and
/// the rule fired, or `None` when the thread is stuck (terminated, blocked
/// acquire, or release of a lock it does not own); `st` is untouched then.
pub fn step_in_place(
    sys: &System,
    k: Domain,
    tid: ThreadId,
    cmd: &Rc<Command>,
    st: &mut GlobalState,
) -> Result<Option<(Rc<Command>, Rule)>, EvalError> {
    let eval = |st: &GlobalState, e: &crate::lang::term::Term| {
        Scope::new(k, &sys.policy.tables).with_mem(&st.mem).eval(e)
    };
    let stop = || Rc::new(Command::Stop);
    Ok(Some(match &**cmd {
        Command::Stop => return Ok(None),
        Command::Assign { var, expr, .. } => {
            let v = eval(st, expr)?;
            st.mem.set(*var, v);
            (stop(), Rule::Assign)
        }
        Command::DAssign { var, expr, .. } => {
            let v = eval(st, expr)?;
            let level = sys
                .policy
                .labels
                .get(*var)
                .ok_or(EvalError::MissingContext("a label for the declassified variable"))?;
            st.mem.set(*var, v);
            st.trace.push(Event::declass(level, v, expr.clone()));
            (stop(), Rule::DAssign)
        }
        Command::Output { level, expr, .. } => {
            let v = eval(st, expr)?;
            st.trace.push(Event::output(*level, v, expr.clone()));
            (stop(), Rule::Output)
        }
        Command::DOutput { level, expr, .. } => {
            let v = eval(st, expr)?;
            st.trace.push(Event::declass(*level, v, expr.clone()));
            (stop(), Rule::DOutput)
        }
        Command::Input { var, level, .. } => {
            let stream = st
                .env
                .stream_mut(*level)
                .ok_or(EvalError::UnknownLevel(*level))?;
            let v = stream.pop();
            st.mem.set(*var, v);
            st.trace.push(Event::input(*level, v));
            (stop(), Rule::Input)
        }
        Command::If {
            cond, then_, else_, ..
        } => {
            if truth(eval(st, cond)?) {
                (then_.clone(), Rule::IfT)
            } else {
                (else_.clone(), Rule::IfF)
            }
        }
        Command::While { cond, body, .. } => {
            if truth(eval(st, cond)?) {
                (Rc::new(Command::Seq(body.clone(), cmd.clone())), Rule::WhileT)
            } else {
                (stop(), Rule::WhileF)
            }
        }
        Command::Acquire { lock, .. } => match st.locks.get(*lock) {
            Some(None) => {
                st.locks.set(*lock, Some(tid));
                (stop(), Rule::Acquire)
            }
            Some(Some(_)) => return Ok(None),
            None => return Err(EvalError::UnknownLock(*lock)),
        },
        Command::Release { lock, .. } => match st.locks.get(*lock) {
            Some(Some(owner)) if owner == tid => {
                st.locks.set(*lock, None);
                (stop(), Rule::Release)
            }
            Some(_) => return Ok(None),
            None => return Err(EvalError::UnknownLock(*lock)),
        },
        Command::Seq(c1, c2) => match step_in_place(sys, k, tid, c1, st)? {
            None => return Ok(None),
            Some((c1p, rule)) => {
                if c1p.is_stop() {
                    (c2.clone(), rule)
                } else {
                    (Rc::new(Command::Seq(c1p, c2.clone())), rule)
                }
            }
        },
    }))
}

/// Functional form of [`step_in_place`].
pub fn local_step(
    sys: &System,
    k: Domain,
    tid: ThreadId,
    cmd: &Rc<Command>,
    st: &GlobalState,
) -> Result<Option<(Rc<Command>, GlobalState, Rule)>, EvalError> {
    let mut next = st.clone();
    Ok(step_in_place(sys, k, tid, cmd, &mut next)?.map(|(c, r)| (c, next, r)))
}

/// Thread-local code, shared state and the remaining schedule.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GlobalConfig {
    pub locals: Vec<Rc<Command>>,
    pub state: GlobalState,
    pub sched: Vec<ThreadId>,
}

/// What one global step did.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StepRecord {
    pub thread: ThreadId,
    /// `None` when the scheduled thread could not move and the system idled.
    pub rule: Option<Rule>,
    pub event: Option<Event>,
}

/// Pops the head of the schedule and steps that thread, or idles when it is
/// stuck. Returns `None` when the schedule is exhausted.
pub fn global_step(
    sys: &System,
    k: Domain,
    cfg: &mut GlobalConfig,
) -> Result<Option<StepRecord>, EvalError> {
    if cfg.sched.is_empty() {
        return Ok(None);
    }
    let tid = cfg.sched.remove(0);
    let before = cfg.state.trace.len();
    let Some(cmd) = cfg.locals.get(tid).cloned() else {
        return Ok(Some(StepRecord {
            thread: tid,
            rule: None,
            event: None,
        }));
    };
    let rule = match step_in_place(sys, k, tid, &cmd, &mut cfg.state)? {
        Some((next, rule)) => {
            cfg.locals[tid] = next;
            Some(rule)
        }
        None => None,
    };
    let event = cfg.state.trace.events().get(before).cloned();
    Ok(Some(StepRecord {
        thread: tid,
        rule,
        event,
    }))
}

/// The full execution: every configuration from `cfg` until the schedule
/// is exhausted, paired with the record of the step that produced it.
pub fn run(
    sys: &System,
    k: Domain,
    cfg: GlobalConfig,
) -> Result<(Vec<GlobalConfig>, Vec<StepRecord>), EvalError> {
    let mut configs = vec![cfg.clone()];
    let mut records = Vec::new();
    let mut cur = cfg;
    while let Some(rec) = global_step(sys, k, &mut cur)? {
        configs.push(cur.clone());
        records.push(rec);
    }
    Ok((configs, records))
}

impl GlobalConfig {
    pub fn new(sys: &System, state: GlobalState, sched: Vec<ThreadId>) -> GlobalConfig {
        GlobalConfig {
            locals: sys.program.threads.clone(),
            state,
            sched,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;
    use crate::policy::parse_policy;
    use crate::semantics::state::{Environment, LockMap, Memory, Stream, Trace};
    use crate::symbol::Symbol;

    fn sys(body: &str) -> System {
        let prog = parse_program(&format!("vars h l x; locks m; {}", body)).unwrap();
        let pol = parse_policy("lattice { levels bot top; bot <= top; } labels { h: top; l: bot; }").unwrap();
        System::new(prog, pol).unwrap()
    }

    fn start(s: &System) -> GlobalState {
        let mut env = Environment::constant(s.policy.lattice.levels(), 0);
        *env.stream_mut(Symbol::intern("top")).unwrap() = Stream::new(vec![2, 1], 0);
        GlobalState {
            env,
            mem: Memory::zeroed(&s.program.vars),
            locks: LockMap::free(&s.program.locks),
            trace: Trace::default(),
        }
    }

    fn go(s: &System, sched: &[ThreadId]) -> (GlobalConfig, Vec<StepRecord>) {
        let (cfgs, recs) = run(s, Domain::new(3), GlobalConfig::new(s, start(s), sched.to_vec())).unwrap();
        (cfgs.last().unwrap().clone(), recs)
    }

    fn var(c: &GlobalConfig, x: &str) -> i64 {
        c.state.mem.get(Symbol::intern(x)).unwrap()
    }

    #[test]
    fn assignments_wrap_around_the_domain() {
        let s = sys("thread 0 { x := 2; x := x + 2 }");
        let (c, recs) = go(&s, &[0, 0]);
        assert_eq!(var(&c, "x"), 1);
        assert_eq!(recs[1].rule, Some(Rule::Assign));
        assert!(c.locals[0].is_stop());
    }

    #[test]
    fn io_consumes_streams_and_records_events() {
        let s = sys("thread 0 { input h top; input h top; input h top; output bot h }");
        let (c, recs) = go(&s, &[0, 0, 0, 0]);
        let vals: Vec<_> = c.state.trace.inputs(Symbol::intern("top")).collect();
        // the stream falls back to its default once the prefix is used up
        assert_eq!(vals, vec![2, 1, 0]);
        assert_eq!(recs[3].event.as_ref().unwrap().to_string(), "out<bot,0,h>");
    }

    #[test]
    fn declassification_emits_at_the_target_label() {
        let s = sys("thread 0 { input h top; l :=^ h; output^ top l }");
        let (c, _) = go(&s, &[0, 0, 0]);
        let shown: Vec<_> = c.state.trace.events().iter().map(|e| e.to_string()).collect();
        assert_eq!(shown, vec!["in<top,2>", "declass<bot,2,h>", "declass<top,2,l>"]);
    }

    #[test]
    fn conditionals_and_loops_unfold_one_step_at_a_time() {
        let s = sys("thread 0 { while x < 2 do x := x + 1 od; if x = 2 then l := 1 else l := 2 fi }");
        let (c, recs) = go(&s, &[0; 8]);
        let rules: Vec<_> = recs.iter().map(|r| r.rule).collect();
        use Rule::*;
        assert_eq!(
            rules,
            vec![Some(WhileT), Some(Assign), Some(WhileT), Some(Assign), Some(WhileF), Some(IfT), Some(Assign), None]
        );
        assert_eq!(var(&c, "l"), 1);
    }

    #[test]
    fn locks_block_and_only_owners_release() {
        let s = sys("thread 0 { acquire m; x := 1; release m } thread 1 { release m; acquire m; x := 2 }");
        let (c, recs) = go(&s, &[0, 1, 1, 0, 0, 1, 1, 1]);
        let rules: Vec<_> = recs.iter().map(|r| (r.thread, r.rule)).collect();
        use Rule::*;
        assert_eq!(
            rules,
            vec![
                (0, Some(Acquire)),
                // thread 1 neither releases thread 0's lock nor acquires it
                (1, None),
                (1, None),
                (0, Some(Assign)),
                (0, Some(Release)),
                (1, None),
                (1, None),
                (1, None),
            ]
        );
        assert_eq!(var(&c, "x"), 1);
        // a stuck thread leaves the state untouched
        assert_eq!(c.state.locks.get(Symbol::intern("m")), Some(None));
    }

    #[test]
    fn schedules_naming_missing_threads_idle() {
        let s = sys("thread 0 { x := 1 }");
        let (c, recs) = go(&s, &[3, 0, 0]);
        assert_eq!(recs[0].rule, None);
        assert_eq!(recs[1].rule, Some(Rule::Assign));
        assert_eq!(recs[2].rule, None);
        assert_eq!(var(&c, "x"), 1);
    }
}
