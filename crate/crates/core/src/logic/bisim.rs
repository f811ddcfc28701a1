//! Bisimilarity of the two branches of an `if` that branches on a secret.
//!
//! The syntactic check is the default: both branches take the same number
//! of steps whatever the state, write no visible labeled variable, perform
//! no visible input or output, declassify nothing, and touch no lock (an
//! acquire may block, which would show in the scheduling). The semantic
//! check computes the greatest secure bisimulation over the local states
//! reachable from the pair, quantifying over bounded states.

use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use serde::Serialize;

use crate::equivalence::{gstate_equiv, visible};
use crate::error::{Error, Result};
use crate::lang::ast::{Command, StmtId};
use crate::lang::term::{Scope, Term};
use crate::semantics::state::{EventKind, GlobalState};
use crate::semantics::step_in_place;
use crate::space::{describe, feed, Space, Support};
use crate::symbol::Symbol;
use crate::system::{Bounds, System};
use crate::value::ThreadId;

use super::explevel::view;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BisimEvidence {
    Bisimilar,
    /// The statement violating a clause, and why.
    Clause { stmt: Option<StmtId>, reason: String },
    /// Step counts differ or are not static.
    Steps(String),
    /// A pair of equivalent states the semantic check separates.
    Step(String),
    Undetermined(String),
}

impl BisimEvidence {
    pub fn holds(&self) -> bool {
        matches!(self, BisimEvidence::Bisimilar)
    }
}

/// Number of steps `c` takes from any state, if statically known.
pub fn step_count(c: &Command) -> Option<usize> {
    match c {
        Command::Stop => Some(0),
        Command::Seq(a, b) => Some(step_count(a)? + step_count(b)?),
        Command::If { then_, else_, .. } => {
            let n = step_count(then_)?;
            (step_count(else_)? == n).then_some(n + 1)
        }
        Command::While { .. } => None,
        _ => Some(1),
    }
}

fn clause_violation(sys: &System, alvl: Symbol, c: &Command) -> Option<(Option<StmtId>, String)> {
    let pol = &sys.policy;
    let low = |l: Symbol| pol.lattice.leq(l, alvl);
    let mut out = None;
    c.visit(&mut |s| {
        if out.is_some() {
            return;
        }
        let why = match s {
            Command::Assign { var, expr, .. } if **expr == Term::Var(*var) => None,
            Command::Assign { var, .. } | Command::Input { var, .. }
                if pol.labels.get(*var).is_some_and(low) =>
            {
                Some(format!("writes visible variable `{}`", var))
            }
            Command::Input { level, .. } | Command::Output { level, .. } if low(*level) => {
                Some(format!("uses visible channel {}", level))
            }
            Command::DAssign { .. } | Command::DOutput { .. } => Some("declassifies".to_string()),
            Command::Acquire { lock, .. } | Command::Release { lock, .. } => {
                Some(format!("operates on lock `{}`", lock))
            }
            _ => None,
        };
        if let Some(w) = why {
            out = Some((s.id(), w));
        }
    });
    out
}

pub fn bisimilar_syntactic(sys: &System, alvl: Symbol, c1: &Command, c2: &Command) -> BisimEvidence {
    match (step_count(c1), step_count(c2)) {
        (Some(a), Some(b)) if a == b => {}
        (Some(a), Some(b)) => return BisimEvidence::Steps(format!("{} steps against {}", a, b)),
        _ => return BisimEvidence::Steps("step count is not static".into()),
    }
    for c in [c1, c2] {
        if let Some((stmt, reason)) = clause_violation(sys, alvl, c) {
            return BisimEvidence::Clause { stmt, reason };
        }
    }
    BisimEvidence::Bisimilar
}

type Pair = (Rc<Command>, Rc<Command>);

/// Result of checking one pair: `Err` when some state pair separates it
/// outright, otherwise the successor pairs it depends on.
type Obligation = std::result::Result<Vec<Pair>, String>;

struct Semantic<'a> {
    sys: &'a System,
    bounds: &'a Bounds,
    alvl: Symbol,
    tid: ThreadId,
}

impl Semantic<'_> {
    fn holds(&self, a: &Term, st: &GlobalState) -> Result<bool> {
        Ok(Scope::new(self.bounds.domain, &self.sys.policy.tables)
            .with_mem(&st.mem)
            .with_locks(&st.locks)
            .with_trace(&st.trace)
            .holds(a)?)
    }

    /// Every way of feeding the next value of each stream in `levels`.
    fn feeds(&self, levels: &[Symbol], st: &GlobalState) -> Vec<GlobalState> {
        let mut out = vec![st.clone()];
        for l in levels {
            out = out
                .iter()
                .flat_map(|s| self.bounds.domain.values().map(move |v| feed(s, *l, v)))
                .collect();
        }
        out
    }

    fn obligation(&self, (c, d): &Pair) -> Result<Obligation> {
        if c.is_stop() || d.is_stop() {
            return Ok(if c.is_stop() == d.is_stop() {
                Ok(Vec::new())
            } else {
                Err("one side terminates before the other".into())
            });
        }
        let tt = Term::tt();
        let (ac, ad) = (c.entry_ann().unwrap_or(&tt), d.entry_ann().unwrap_or(&tt));
        let mut support = Support::of(&[ac, ad]);
        support.add_command(c.head(), self.tid);
        support.add_command(d.head(), self.tid);
        let mut levels = Vec::new();
        for h in [c.head(), d.head()] {
            if let Command::Input { level, .. } = h {
                if !levels.contains(level) {
                    levels.push(*level);
                }
            }
        }
        let b = self.bounds;
        let space = Space::new(self.sys, b.domain, b.history(), b.cap, &support)?;
        // group the states by what the attacker sees
        let mut index = HashMap::new();
        let mut groups: Vec<(Vec<GlobalState>, Vec<GlobalState>)> = Vec::new();
        space.for_each(|st| {
            let (l, r) = (self.holds(ac, st)?, self.holds(ad, st)?);
            if !l && !r {
                return Ok(true);
            }
            let n = *index.entry(view(self.sys, self.alvl, &support, st)).or_insert_with(|| {
                groups.push(Default::default());
                groups.len() - 1
            });
            if l {
                groups[n].0.push(st.clone());
            }
            if r {
                groups[n].1.push(st.clone());
            }
            Ok(true)
        })?;
        let (pol, lat) = (&self.sys.policy, &self.sys.policy.lattice);
        let mut succ = Vec::new();
        for (ls, rs) in &groups {
            for s0 in ls {
                for s in self.feeds(&levels, s0) {
                    let mut s2 = s.clone();
                    let Some((c2, _)) = step_in_place(self.sys, b.domain, self.tid, c, &mut s2)? else {
                        continue;
                    };
                    for t0 in rs {
                        for t in self.feeds(&levels, t0) {
                            if !gstate_equiv(pol, self.alvl, &s, &t) {
                                continue;
                            }
                            let shown = || format!("{} and {}", describe(&s, &support), describe(&t, &support));
                            let mut t2 = t.clone();
                            let Some((d2, _)) = step_in_place(self.sys, b.domain, self.tid, d, &mut t2)? else {
                                return Ok(Err(format!("no matching step from {}", shown())));
                            };
                            let ev = s2.trace.events().get(s.trace.len());
                            let ev2 = t2.trace.events().get(t.trace.len());
                            let count = |x: &GlobalState| x.trace.events().iter().filter(|e| visible(lat, self.alvl, e)).count();
                            let need_equiv = match ev {
                                Some(e) if e.kind == EventKind::Declass && visible(lat, self.alvl, e) => ev2 == Some(e),
                                _ => true,
                            };
                            if count(&s2) != count(&t2) || (need_equiv && !gstate_equiv(pol, self.alvl, &s2, &t2)) {
                                return Ok(Err(format!("steps from {} are distinguishable", shown())));
                            }
                            let p = (c2.clone(), d2);
                            if !succ.contains(&p) {
                                succ.push(p);
                            }
                        }
                    }
                }
            }
        }
        Ok(Ok(succ))
    }
}

/// The greatest secure bisimulation check for `(tid, c1)` and `(tid, c2)`.
pub fn bisimilar_semantic(
    sys: &System,
    bounds: &Bounds,
    alvl: Symbol,
    tid: ThreadId,
    c1: &Rc<Command>,
    c2: &Rc<Command>,
) -> Result<BisimEvidence> {
    let sem = Semantic { sys, bounds, alvl, tid };
    let start: Pair = (c1.clone(), c2.clone());
    let mut graph: HashMap<Pair, Obligation> = HashMap::new();
    let mut order = Vec::new();
    let mut work = vec![start.clone()];
    while let Some(p) = work.pop() {
        if graph.contains_key(&p) {
            continue;
        }
        if graph.len() as u64 >= bounds.cap {
            return Ok(BisimEvidence::Undetermined("too many local state pairs".into()));
        }
        let ob = match sem.obligation(&p) {
            Ok(o) => o,
            Err(Error::Bounds(m)) => return Ok(BisimEvidence::Undetermined(m)),
            Err(e) => return Err(e),
        };
        if let Ok(next) = &ob {
            work.extend(next.iter().filter(|q| !graph.contains_key(*q)).cloned());
        }
        order.push(p.clone());
        graph.insert(p, ob);
    }
    // greatest fixpoint: drop pairs until every survivor's successors survive
    let mut alive: HashSet<&Pair> = graph.iter().filter(|(_, o)| o.is_ok()).map(|(p, _)| p).collect();
    loop {
        let dead: Vec<&Pair> = alive
            .iter()
            .copied()
            .filter(|p| match &graph[*p] {
                Ok(next) => next.iter().any(|q| !alive.contains(q)),
                Err(_) => true,
            })
            .collect();
        if dead.is_empty() {
            break;
        }
        for p in dead {
            alive.remove(p);
        }
    }
    if alive.contains(&start) {
        return Ok(BisimEvidence::Bisimilar);
    }
    let why = order
        .iter()
        .find_map(|p| graph[p].as_ref().err().cloned())
        .unwrap_or_else(|| "no secure bisimulation relates the branches".into());
    Ok(BisimEvidence::Step(why))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;
    use crate::policy::parse_policy;

    fn sys(body: &str) -> System {
        let prog = parse_program(&format!("vars h l u; locks m; thread 0 {{ {} }}", body)).unwrap();
        let pol = parse_policy("lattice { levels bot top; bot <= top; } labels { h: top; l: bot; }").unwrap();
        System::new(prog, pol).unwrap()
    }

    /// The two branches of the thread's first statement.
    fn branches(s: &System) -> (Rc<Command>, Rc<Command>) {
        match s.program.threads[0].head() {
            Command::If { then_, else_, .. } => (then_.clone(), else_.clone()),
            _ => panic!("expected an if"),
        }
    }

    fn both(body: &str) -> (BisimEvidence, BisimEvidence) {
        let s = sys(body);
        let (a, b) = branches(&s);
        let bot = Symbol::intern("bot");
        let syn = bisimilar_syntactic(&s, bot, &a, &b);
        let sem = bisimilar_semantic(&s, &Bounds::new(2, 1, 1), bot, 0, &a, &b).unwrap();
        (syn, sem)
    }

    #[test]
    fn secret_writes_of_equal_length_are_bisimilar() {
        let (syn, sem) = both("if h {true} then h := 1 {true}; u := 0 {true} else u := 1 {true}; h := 0 {true} fi");
        assert!(syn.holds());
        assert!(sem.holds());
    }

    #[test]
    fn unequal_lengths_fail_syntactically() {
        let (syn, _) = both("if h {true} then h := 1 {true}; h := 0 {true} else h := 1 {true} fi");
        assert!(matches!(syn, BisimEvidence::Steps(_)));
    }

    #[test]
    fn visible_outputs_of_different_values_are_separated() {
        let (syn, sem) = both("if h {true} then output bot 1 {true} else output bot 0 {true} fi");
        assert!(matches!(syn, BisimEvidence::Clause { .. }));
        assert!(matches!(sem, BisimEvidence::Step(_)));
    }

    #[test]
    fn identical_visible_outputs_are_semantically_bisimilar() {
        let (syn, sem) = both("if h {true} then output bot 1 {true} else output bot 1 {true} fi");
        assert!(!syn.holds());
        assert!(sem.holds());
    }

    #[test]
    fn declassification_breaks_syntactic_bisimilarity() {
        let (syn, _) = both("if h {true} then output^ bot h {true} else output^ bot 0 {true} fi");
        assert_eq!(syn, BisimEvidence::Clause { stmt: Some(1), reason: "declassifies".into() });
    }

    #[test]
    fn stop_pairs_are_bisimilar() {
        let s = sys("skip");
        let stop = Rc::new(Command::Stop);
        let bot = Symbol::intern("bot");
        assert!(bisimilar_semantic(&s, &Bounds::new(2, 1, 1), bot, 0, &stop, &stop).unwrap().holds());
        assert!(bisimilar_syntactic(&s, bot, &stop, &stop).holds());
    }
}
