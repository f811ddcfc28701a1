//! Bounded enumeration of the states a formula can distinguish.
//!
//! Annotation validity, `explevel` and the declassification premises all
//! quantify over every state. We enumerate only the part of the state the
//! formulas involved can read (their support): the variables they mention,
//! the locks they test and an abstraction of the trace. Everything outside
//! the support is fixed to a default, which cannot change any verdict.
//!
//! Input histories are abstracted per channel by what is queried: the last
//! value only, the count only, both, or the full list (up to the history
//! bound). Output histories are only ever queried for their last value.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::lang::ast::Command;
use crate::lang::term::{Term, TraceQuery};
use crate::semantics::state::{Environment, Event, GlobalState, LockMap, Memory, Stream, Trace};
use crate::symbol::Symbol;
use crate::system::System;
use crate::value::{Domain, ThreadId, Value};

/// How much of a channel's input history a formula can observe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum History {
    Last,
    Count,
    LastCount,
    Full,
}

impl History {
    fn join(self, other: History) -> History {
        use History::*;
        match (self, other) {
            (Full, _) | (_, Full) => Full,
            (a, b) if a == b => a,
            _ => LastCount,
        }
    }
}

/// The parts of a state a set of formulas and statements may read.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Support {
    pub vars: Vec<Symbol>,
    /// Each lock with the thread ids tested against it.
    pub locks: Vec<(Symbol, Vec<ThreadId>)>,
    pub inputs: Vec<(Symbol, History)>,
    pub outputs: Vec<Symbol>,
}

impl Support {
    pub fn of(terms: &[&Term]) -> Support {
        let mut s = Support::default();
        for t in terms {
            s.add_term(t);
        }
        s
    }

    pub fn add_var(&mut self, x: Symbol) {
        if !self.vars.contains(&x) {
            self.vars.push(x);
        }
    }

    pub fn add_lock(&mut self, l: Symbol, tid: Option<ThreadId>) {
        let idx = match self.locks.iter().position(|(m, _)| *m == l) {
            Some(i) => i,
            None => {
                self.locks.push((l, Vec::new()));
                self.locks.len() - 1
            }
        };
        if let Some(t) = tid {
            if !self.locks[idx].1.contains(&t) {
                self.locks[idx].1.push(t);
            }
        }
    }

    pub fn add_input(&mut self, l: Symbol, h: History) {
        match self.inputs.iter_mut().find(|(m, _)| *m == l) {
            Some(slot) => slot.1 = slot.1.join(h),
            None => self.inputs.push((l, h)),
        }
    }

    pub fn add_term(&mut self, t: &Term) {
        t.visit(&mut |t| match t {
            Term::Var(x) => self.add_var(*x),
            Term::Held(l, tid) => self.add_lock(*l, Some(*tid)),
            Term::Free(l) => self.add_lock(*l, None),
            Term::Trace(TraceQuery::LastInput, l) => self.add_input(*l, History::Last),
            Term::Trace(TraceQuery::InputCount, l) => self.add_input(*l, History::Count),
            Term::Trace(TraceQuery::LastOutput, l) => {
                if !self.outputs.contains(l) {
                    self.outputs.push(*l);
                }
            }
            Term::Inputs(l) | Term::NthInput(l, _) => self.add_input(*l, History::Full),
            _ => {}
        });
    }

    /// Adds what executing the atomic or branching statement `c` (of
    /// thread `tid`) reads: its expressions and the lock it touches.
    pub fn add_command(&mut self, c: &Command, tid: ThreadId) {
        match c {
            Command::Assign { expr, .. }
            | Command::DAssign { expr, .. }
            | Command::Output { expr, .. }
            | Command::DOutput { expr, .. } => self.add_term(expr),
            Command::If { cond, .. } | Command::While { cond, .. } => self.add_term(cond),
            Command::Acquire { lock, .. } | Command::Release { lock, .. } => {
                self.add_lock(*lock, Some(tid))
            }
            Command::Input { .. } | Command::Seq(..) | Command::Stop => {}
        }
    }

    pub fn union(&mut self, other: &Support) {
        for x in &other.vars {
            self.add_var(*x);
        }
        for (l, tids) in &other.locks {
            self.add_lock(*l, None);
            for t in tids {
                self.add_lock(*l, Some(*t));
            }
        }
        for (l, h) in &other.inputs {
            self.add_input(*l, *h);
        }
        for l in &other.outputs {
            if !self.outputs.contains(l) {
                self.outputs.push(*l);
            }
        }
    }
}

/// The enumerable state space of a support.
pub struct Space {
    template: GlobalState,
    vars: Vec<Symbol>,
    domain: Domain,
    locks: Vec<(Symbol, Vec<Option<ThreadId>>)>,
    inputs: Vec<(Symbol, Vec<Vec<Value>>)>,
    outputs: Vec<Symbol>,
    size: u64,
}

/// The input histories enumerated for an abstraction.
fn histories(h: History, k: Domain, depth: usize) -> Vec<Vec<Value>> {
    let kn = k.size() as usize;
    match h {
        History::Last => k.values().map(|v| vec![v]).collect(),
        History::Count => (0..kn).map(|n| vec![0; n]).collect(),
        History::LastCount => {
            let mut out = vec![Vec::new()];
            for n in 1..=kn {
                for v in k.values() {
                    let mut xs = vec![0; n - 1];
                    xs.push(v);
                    out.push(xs);
                }
            }
            out
        }
        History::Full => {
            let mut out = vec![Vec::new()];
            let mut layer = vec![Vec::new()];
            for _ in 0..depth {
                let mut next = Vec::new();
                for xs in &layer {
                    for v in k.values() {
                        let mut ys: Vec<Value> = xs.clone();
                        ys.push(v);
                        next.push(ys);
                    }
                }
                out.extend(next.iter().cloned());
                layer = next;
            }
            out
        }
    }
}

impl Space {
    /// Builds the space, refusing when it would exceed `cap` states.
    pub fn new(sys: &System, k: Domain, depth: usize, cap: u64, support: &Support) -> Result<Space> {
        let threads = sys.thread_count();
        let mut size: u64 = 1;
        let mut grow = |n: usize| -> Result<()> {
            size = size.checked_mul(n as u64).filter(|s| *s <= cap).ok_or_else(|| {
                Error::Bounds(format!("state space exceeds the cap of {}", cap))
            })?;
            Ok(())
        };
        let mut vars = Vec::new();
        for x in &support.vars {
            if sys.program.vars.contains(x) {
                vars.push(*x);
                grow(k.size() as usize)?;
            }
        }
        let mut locks = Vec::new();
        for (l, tids) in &support.locks {
            let mut opts = vec![None];
            let mut tids: Vec<ThreadId> = tids.iter().copied().filter(|t| *t < threads).collect();
            tids.sort_unstable();
            opts.extend(tids.iter().map(|t| Some(*t)));
            // one representative for every untested owner
            if let Some(other) = (0..threads).find(|t| !tids.contains(t)) {
                opts.push(Some(other));
            }
            grow(opts.len())?;
            locks.push((*l, opts));
        }
        let mut inputs = Vec::new();
        for (l, h) in &support.inputs {
            let hs = histories(*h, k, depth);
            grow(hs.len())?;
            inputs.push((*l, hs));
        }
        for _ in &support.outputs {
            grow(k.size() as usize)?;
        }
        let levels = sys.policy.lattice.levels().to_vec();
        let template = GlobalState {
            env: Environment::constant(&levels, 0),
            mem: Memory::zeroed(&sys.program.vars),
            locks: LockMap::free(&sys.program.locks),
            trace: Trace::default(),
        };
        Ok(Space {
            template,
            vars,
            domain: k,
            locks,
            inputs,
            outputs: support.outputs.clone(),
            size,
        })
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    /// Calls `f` on every state in a fixed order until it returns `false`.
    /// Returns whether the enumeration ran to completion.
    pub fn for_each(&self, mut f: impl FnMut(&GlobalState) -> Result<bool>) -> Result<bool> {
        let k = self.domain.size() as usize;
        let mut radices = Vec::new();
        radices.extend(self.vars.iter().map(|_| k));
        radices.extend(self.locks.iter().map(|(_, o)| o.len()));
        radices.extend(self.inputs.iter().map(|(_, h)| h.len()));
        radices.extend(self.outputs.iter().map(|_| k));
        let mut digits = vec![0usize; radices.len()];
        let mut st = self.template.clone();
        loop {
            self.fill(&digits, &mut st);
            if !f(&st)? {
                return Ok(false);
            }
            // odometer, last digit fastest
            let mut i = digits.len();
            loop {
                if i == 0 {
                    return Ok(true);
                }
                i -= 1;
                digits[i] += 1;
                if digits[i] < radices[i] {
                    break;
                }
                digits[i] = 0;
            }
        }
    }

    fn fill(&self, digits: &[usize], st: &mut GlobalState) {
        let mut d = digits.iter();
        for x in &self.vars {
            st.mem.set(*x, *d.next().unwrap() as Value);
        }
        for (l, opts) in &self.locks {
            st.locks.set(*l, opts[*d.next().unwrap()]);
        }
        st.trace.0.clear();
        for (l, hs) in &self.inputs {
            for v in &hs[*d.next().unwrap()] {
                st.trace.push(Event::input(*l, *v));
            }
        }
        for l in &self.outputs {
            let v = *d.next().unwrap() as Value;
            st.trace.push(Event::output(*l, v, Rc::new(Term::Const(v))));
        }
    }
}

/// The part of `st` inside `support`, for counterexample reports.
pub fn describe(st: &GlobalState, support: &Support) -> String {
    let mut parts: Vec<String> = support
        .vars
        .iter()
        .filter_map(|x| st.mem.get(*x).map(|v| format!("{}={}", x, v)))
        .collect();
    for (l, _) in &support.locks {
        match st.locks.get(*l) {
            Some(Some(t)) => parts.push(format!("{} held by {}", l, t)),
            Some(None) => parts.push(format!("{} free", l)),
            None => {}
        }
    }
    if !st.trace.is_empty() {
        let tr: Vec<String> = st.trace.events().iter().map(|e| e.to_string()).collect();
        parts.push(format!("trace [{}]", tr.join(" ")));
    }
    format!("[{}]", parts.join(", "))
}

/// A state whose `level` stream will deliver `v` next.
pub fn feed(st: &GlobalState, level: Symbol, v: Value) -> GlobalState {
    let mut out = st.clone();
    if let Some(s) = out.env.stream_mut(level) {
        *s = Stream::new(vec![v], 0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;
    use crate::lang::parse_term;
    use crate::lang::TermContext;
    use crate::policy::parse_policy;

    fn sys() -> System {
        let p = parse_program("locks l; vars x y; thread 0 { x := 1 } thread 1 { y := 1 } thread 2 { y := 2 }")
            .unwrap();
        let pol = parse_policy("lattice { levels bot top; bot <= top; } labels { x: bot; }").unwrap();
        System::new(p, pol).unwrap()
    }

    #[test]
    fn support_collects_reads() {
        let t = parse_term(
            "x = lastinput(bot) && held(l, 1) && len(inputs(top)) = 2 && lastoutput(bot) = y",
            TermContext::Annotation,
        )
        .unwrap();
        let s = Support::of(&[&t]);
        assert_eq!(s.vars, vec![Symbol::intern("x"), Symbol::intern("y")]);
        assert_eq!(s.locks, vec![(Symbol::intern("l"), vec![1])]);
        assert_eq!(
            s.inputs,
            vec![(Symbol::intern("bot"), History::Last), (Symbol::intern("top"), History::Full)]
        );
        assert_eq!(s.outputs, vec![Symbol::intern("bot")]);
    }

    #[test]
    fn space_size_matches_enumeration() {
        let sys = sys();
        let t = parse_term("x = y && held(l, 1) && inputcount(bot) = 0", TermContext::Annotation).unwrap();
        let space = Space::new(&sys, Domain::new(3), 2, 1_000_000, &Support::of(&[&t])).unwrap();
        // 3 * 3 values, lock free/1/other, 3 counts
        assert_eq!(space.size(), 9 * 3 * 3);
        let mut n = 0;
        space.for_each(|_| {
            n += 1;
            Ok(true)
        })
        .unwrap();
        assert_eq!(n, space.size());
    }

    #[test]
    fn full_histories_cover_every_list() {
        let hs = histories(History::Full, Domain::new(2), 3);
        assert_eq!(hs.len(), 1 + 2 + 4 + 8);
        let lc = histories(History::LastCount, Domain::new(3), 3);
        assert_eq!(lc.len(), 1 + 9);
    }

    #[test]
    fn cap_is_enforced() {
        let sys = sys();
        let t = parse_term("x = y", TermContext::Annotation).unwrap();
        assert!(Space::new(&sys, Domain::new(3), 2, 8, &Support::of(&[&t])).is_err());
    }
}
