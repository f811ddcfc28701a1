//! Annotation validity by the Owicki-Gries method.
//!
//! Each thread's annotations must form a sequential proof (local
//! conditions), no atomic statement of one thread may invalidate an
//! annotation of another (interference freedom), and the precondition of
//! the program must establish every thread's first annotation. The
//! conditions are discharged by enumerating bounded states, see
//! [`discharge`].

mod discharge;
mod infer;

pub use discharge::{discharge, Discharge};
pub use infer::{infer_annotations, stabilize, stabilize_within, InferOutcome};

use std::fmt;
use std::rc::Rc;

use serde::Serialize;

use crate::error::{Error, ParseError, Result};
use crate::lang::ast::{Ann, Command, Program, StmtId};
use crate::lang::parser::parse_vc_body;
use crate::lang::printer::ann_str;
use crate::lang::term::Term;
use crate::system::{Bounds, System};
use crate::value::ThreadId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    /// A sequential obligation of `thread` at statement `stmt`.
    Local { thread: ThreadId, stmt: StmtId },
    /// Statement `stmt` of thread `by` must preserve the annotation of
    /// statement `ann` in `thread`.
    Interference {
        thread: ThreadId,
        ann: StmtId,
        by: ThreadId,
        stmt: StmtId,
    },
    /// The precondition establishes the first annotation of `thread`.
    Init { thread: ThreadId },
}

impl Origin {
    /// The thread executing the statement of the condition.
    pub fn executor(&self) -> ThreadId {
        match *self {
            Origin::Local { thread, .. } | Origin::Init { thread } => thread,
            Origin::Interference { by, .. } => by,
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Local { thread, stmt } => write!(f, "local:{}:{}", thread, stmt),
            Origin::Interference { thread, ann, by, stmt } => {
                write!(f, "interference:{}:{}/{}:{}", thread, ann, by, stmt)
            }
            Origin::Init { thread } => write!(f, "init:{}", thread),
        }
    }
}

impl std::str::FromStr for Origin {
    type Err = String;

    fn from_str(s: &str) -> Result<Origin, String> {
        let bad = || format!("malformed origin `{}`", s);
        let nums = |t: &str| -> Result<Vec<u32>, String> {
            t.split([':', '/']).map(|n| n.parse().map_err(|_| bad())).collect()
        };
        if let Some(rest) = s.strip_prefix("local:") {
            match nums(rest)?[..] {
                [t, st] => Ok(Origin::Local { thread: t as usize, stmt: st }),
                _ => Err(bad()),
            }
        } else if let Some(rest) = s.strip_prefix("interference:") {
            match nums(rest)?[..] {
                [t, a, b, st] => Ok(Origin::Interference {
                    thread: t as usize,
                    ann: a,
                    by: b as usize,
                    stmt: st,
                }),
                _ => Err(bad()),
            }
        } else if let Some(rest) = s.strip_prefix("init:") {
            match nums(rest)?[..] {
                [t] => Ok(Origin::Init { thread: t as usize }),
                _ => Err(bad()),
            }
        } else {
            Err(bad())
        }
    }
}

/// `{hyp} stmt {concl}`; a missing statement is `skip`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vc {
    pub id: usize,
    pub origin: Origin,
    pub hyp: Ann,
    pub stmt: Option<Rc<Command>>,
    pub concl: Ann,
}

pub(crate) fn bare(c: &Command) -> String {
    match c {
        Command::Assign { var, expr, .. } => format!("{} := {}", var, expr),
        Command::DAssign { var, expr, .. } => format!("{} :=^ {}", var, expr),
        Command::Output { level, expr, .. } => format!("output {} {}", level, expr),
        Command::DOutput { level, expr, .. } => format!("output^ {} {}", level, expr),
        Command::Input { var, level, .. } => format!("input {} {}", var, level),
        Command::Acquire { lock, .. } => format!("acquire {}", lock),
        Command::Release { lock, .. } => format!("release {}", lock),
        _ => unreachable!("conditions only mention atomic statements"),
    }
}

impl fmt::Display for Vc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let stmt = self.stmt.as_ref().map_or_else(|| "skip".to_string(), |c| bare(c));
        write!(
            f,
            "vc {} {} {{{}}} {} {{{}}}",
            self.id,
            self.origin,
            ann_str(&self.hyp),
            stmt,
            ann_str(&self.concl)
        )
    }
}

/// Renders conditions one per line.
pub fn print_vcs(vcs: &[Vc]) -> String {
    vcs.iter().map(|v| format!("{}\n", v)).collect()
}

/// Parses the output of [`print_vcs`] back, in the context of `prog`.
pub fn parse_vcs(src: &str, prog: &Program) -> Result<Vec<Vc>> {
    let mut out = Vec::new();
    for (n, line) in src.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("//") {
            continue;
        }
        let err = |msg: String| Error::Parse(ParseError::new(n + 1, 1, msg));
        let mut parts = line.splitn(4, ' ');
        if parts.next() != Some("vc") {
            return Err(err("expected `vc`".into()));
        }
        let id = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err("expected a condition number".into()))?;
        let origin = parts.next().unwrap_or("").parse().map_err(err)?;
        let body = parts.next().unwrap_or("");
        let (hyp, stmt, concl) = parse_vc_body(body, prog).map_err(|mut e| {
            e.line = n + 1;
            e
        })?;
        out.push(Vc {
            id,
            origin,
            hyp,
            stmt: stmt.map(strip),
            concl,
        });
    }
    Ok(out)
}

/// The statement with its annotation reset to `true`; the conclusion is
/// kept separately.
fn strip(c: Rc<Command>) -> Rc<Command> {
    c.map_anns(&mut |_, _| Term::tt())
}

fn conj(a: &Ann, b: &Ann) -> Ann {
    Term::and(a.clone(), b.clone())
}

fn cond_and(a: &Ann, e: &Rc<Term>, positive: bool) -> Ann {
    let guard = if positive { e.clone() } else { Term::not(e.clone()) };
    conj(a, &guard)
}

struct Builder<'a> {
    out: &'a mut Vec<Vc>,
}

impl Builder<'_> {
    fn push(&mut self, origin: Origin, hyp: Ann, stmt: Option<Rc<Command>>, concl: Ann) {
        let id = self.out.len();
        self.out.push(Vc {
            id,
            origin,
            hyp,
            stmt: stmt.map(strip),
            concl,
        });
    }

    /// Obligations of the sequence `c` followed by a point annotated `post`.
    fn seq(&mut self, tid: ThreadId, c: &Rc<Command>, post: &Ann) {
        let items = c.flatten();
        for (i, item) in items.iter().enumerate() {
            let next = items.get(i + 1).and_then(|n| n.entry_ann()).unwrap_or(post).clone();
            self.stmt(tid, item, &next);
        }
    }

    fn stmt(&mut self, tid: ThreadId, c: &Rc<Command>, post: &Ann) {
        let id = c.id().expect("non-sequence commands have ids");
        let origin = Origin::Local { thread: tid, stmt: id };
        match &**c {
            Command::If {
                ann,
                cond,
                then_,
                else_,
                ..
            } => {
                for (branch, positive) in [(then_, true), (else_, false)] {
                    let entry = branch.entry_ann().unwrap_or(post).clone();
                    self.push(origin, cond_and(ann, cond, positive), None, entry);
                    self.seq(tid, branch, post);
                }
            }
            Command::While {
                ann, cond, inv, body, ..
            } => {
                self.push(origin, ann.clone(), None, inv.clone());
                let entry = body.entry_ann().unwrap_or(ann).clone();
                self.push(origin, cond_and(ann, cond, true), None, entry);
                // the loop head is re-entered after the body
                self.seq(tid, body, ann);
                self.push(origin, cond_and(ann, cond, false), None, post.clone());
            }
            _ => {
                let ann = c.own_ann().expect("atomic commands are annotated").clone();
                self.push(origin, ann, Some(c.clone()), post.clone());
            }
        }
    }
}

/// Every annotation of a thread with the statement it is attached to.
fn annotations(c: &Command) -> Vec<(StmtId, Ann)> {
    let mut out = Vec::new();
    c.visit(&mut |c| {
        if let (Some(id), Some(a)) = (c.id(), c.own_ann()) {
            out.push((id, a.clone()));
        }
    });
    out
}

/// Atomic statements of a thread.
fn atomics(c: &Command) -> Vec<Rc<Command>> {
    let mut out = Vec::new();
    c.visit(&mut |c| {
        if c.is_atomic() {
            out.push(Rc::new(c.clone()));
        }
    });
    out
}

/// The sequential obligations of thread `tid`.
pub fn local_vcs(tid: ThreadId, thread: &Rc<Command>) -> Vec<Vc> {
    let mut out = Vec::new();
    Builder { out: &mut out }.seq(tid, thread, &Term::tt());
    out
}

/// Every annotation of every thread against every atomic statement of
/// every other thread.
pub fn interference_vcs(prog: &Program) -> Vec<Vc> {
    let mut out = Vec::new();
    let mut b = Builder { out: &mut out };
    for (i, ti) in prog.threads.iter().enumerate() {
        for (aid, a) in annotations(ti) {
            for (j, tj) in prog.threads.iter().enumerate() {
                if i == j {
                    continue;
                }
                for s in atomics(tj) {
                    let sb = s.own_ann().expect("atomic commands are annotated").clone();
                    let origin = Origin::Interference {
                        thread: i,
                        ann: aid,
                        by: j,
                        stmt: s.id().unwrap(),
                    };
                    b.push(origin, conj(&a, &sb), Some(s), a.clone());
                }
            }
        }
    }
    out
}

/// The precondition (with free locks and an empty trace) implies every
/// thread's first annotation.
pub fn init_vcs(prog: &Program) -> Vec<Vc> {
    let mut out = Vec::new();
    let mut b = Builder { out: &mut out };
    let init = prog.init.clone().unwrap_or_else(Term::tt);
    for (i, t) in prog.threads.iter().enumerate() {
        if let Some(a) = t.entry_ann() {
            b.push(Origin::Init { thread: i }, init.clone(), None, a.clone());
        }
    }
    out
}

/// All conditions of a program, numbered consecutively: initial, then local
/// per thread, then interference.
pub fn generate(prog: &Program) -> Vec<Vc> {
    let mut all = init_vcs(prog);
    for (i, t) in prog.threads.iter().enumerate() {
        all.extend(local_vcs(i, t));
    }
    all.extend(interference_vcs(prog));
    for (n, v) in all.iter_mut().enumerate() {
        v.id = n;
    }
    all
}

#[derive(Clone, Debug, Serialize)]
pub struct VcResult {
    pub vc: String,
    pub origin: Origin,
    pub outcome: Discharge,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct VcReport {
    pub total: usize,
    /// Conditions discharged by a syntactic shortcut.
    pub fast: usize,
    pub failed: Vec<VcResult>,
    pub undischarged: Vec<VcResult>,
}

impl VcReport {
    pub fn valid(&self) -> bool {
        self.failed.is_empty() && self.undischarged.is_empty()
    }

    pub fn summary(&self) -> String {
        let verdict = if !self.failed.is_empty() {
            "invalid"
        } else if !self.undischarged.is_empty() {
            "bound-exhausted"
        } else {
            "valid"
        };
        format!(
            "annotations {}: {} conditions, {} by shortcut, {} failed, {} undischarged",
            verdict,
            self.total,
            self.fast,
            self.failed.len(),
            self.undischarged.len()
        )
    }
}

impl fmt::Display for VcReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.summary())?;
        for r in self.failed.iter().chain(&self.undischarged) {
            writeln!(f, "  {}", r.vc)?;
            if let Discharge::Invalid(why) | Discharge::Undischarged(why) = &r.outcome {
                writeln!(f, "    {}", why)?;
            }
        }
        Ok(())
    }
}

/// Discharges `vcs`; stops after `max_failures` failures when given.
pub fn check_vcs(sys: &System, bounds: &Bounds, vcs: &[Vc], max_failures: Option<usize>) -> Result<VcReport> {
    let mut rep = VcReport {
        total: vcs.len(),
        ..VcReport::default()
    };
    for vc in vcs {
        let outcome = discharge(sys, bounds, vc)?;
        let res = || VcResult {
            vc: vc.to_string(),
            origin: vc.origin,
            outcome: outcome.clone(),
        };
        match &outcome {
            Discharge::Valid { shortcut: Some(_) } => rep.fast += 1,
            Discharge::Valid { shortcut: None } => {}
            Discharge::Invalid(_) => rep.failed.push(res()),
            Discharge::Undischarged(_) => rep.undischarged.push(res()),
        }
        if max_failures.is_some_and(|m| rep.failed.len() >= m) {
            break;
        }
    }
    Ok(rep)
}

/// Generates and discharges every condition of the system's program.
pub fn verify_annotations(sys: &System, bounds: &Bounds) -> Result<VcReport> {
    check_vcs(sys, bounds, &generate(&sys.program), None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::lang::parse_program;
    use crate::policy::parse_policy;

    const POL: &str = "lattice { levels bot top; bot <= top; } labels { h: top; l: bot; }";

    fn sys(src: &str) -> System {
        System::new(parse_program(src).unwrap(), parse_policy(POL).unwrap()).unwrap()
    }

    fn one(s: &System, line: &str) -> Discharge {
        let vcs = parse_vcs(line, &s.program).unwrap();
        discharge(s, &Bounds::new(3, 1, 1), &vcs[0]).unwrap()
    }

    #[test]
    fn hoare_triples_by_enumeration() {
        let s = sys("vars x h l; thread 0 { x := x + 1 {true} }");
        assert!(one(&s, "vc 0 local:0:0 {x = 1} x := x + 1 {x = 2}").is_valid());
        assert!(matches!(one(&s, "vc 0 local:0:0 {x = 1} x := x + 1 {x = 1}"), Discharge::Invalid(_)));
        // values wrap around the domain
        assert!(one(&s, "vc 0 local:0:0 {x = 2} x := x + 1 {x = 0}").is_valid());
        assert!(one(&s, "vc 0 local:0:0 {x = 1 && x = 2} x := x + 1 {false}").is_valid());
    }

    #[test]
    fn lock_shortcuts() {
        let s = sys("vars x h l; locks m; thread 0 { acquire m {true} } thread 1 { skip }");
        assert_eq!(
            one(&s, "vc 0 local:0:0 {held(m, 1)} acquire m {false}"),
            Discharge::Valid { shortcut: Some("blocked acquire") }
        );
        assert_eq!(
            one(&s, "vc 0 local:0:0 {held(m, 0) && free(m)} skip {false}"),
            Discharge::Valid { shortcut: Some("lock disjointness") }
        );
        assert!(one(&s, "vc 0 local:0:0 {free(m)} acquire m {held(m, 0)}").is_valid());
        assert!(!one(&s, "vc 0 local:0:0 {free(m)} acquire m {held(m, 1)}").is_valid());
    }

    #[test]
    fn printed_conditions_parse_back() {
        for e in corpus::entries() {
            let s = e.load().unwrap();
            let vcs = generate(&s.program);
            let text = print_vcs(&vcs);
            let back = parse_vcs(&text, &s.program).unwrap();
            assert_eq!(print_vcs(&back), text, "{}", e.name);
            for (a, b) in vcs.iter().zip(&back) {
                assert_eq!((a.id, a.origin), (b.id, b.origin));
            }
        }
    }

    #[test]
    fn numbering_is_init_local_interference() {
        let s = sys("vars x h l; init {x = 0}; thread 0 { x := 1 {x = 0} } thread 1 { l := 2 {true} }");
        let vcs = generate(&s.program);
        let kinds: Vec<&str> = vcs
            .iter()
            .map(|v| match v.origin {
                Origin::Init { .. } => "init",
                Origin::Local { .. } => "local",
                Origin::Interference { .. } => "interference",
            })
            .collect();
        assert_eq!(kinds, ["init", "init", "local", "local", "interference", "interference"]);
        assert!(vcs.iter().enumerate().all(|(i, v)| v.id == i));
        let rep = verify_annotations(&s, &Bounds::new(3, 1, 1)).unwrap();
        assert!(rep.valid(), "{}", rep);
    }

    #[test]
    fn interference_is_detected() {
        let s = sys("vars x h l; init {x = 0}; thread 0 { l := x {x = 0} } thread 1 { x := 1 {true} }");
        let rep = verify_annotations(&s, &Bounds::new(3, 1, 1)).unwrap();
        assert_eq!(rep.failed.len(), 1);
        assert!(matches!(rep.failed[0].origin, Origin::Interference { by: 1, .. }));
    }

    #[test]
    fn inferred_annotations_satisfy_their_local_conditions() {
        let src = "vars x y h l; locks m; init {x = 0 && y = 0}; \
                   thread 0 { acquire m; x := x + 1; input y bot; if y = 1 then l := y else l := 0 fi; release m } \
                   thread 1 { h := 2; while h do h := 0 od; output top h }";
        let s = sys(src);
        let out = infer_annotations(&s.program);
        let inferred = System::new(out.program, s.policy.clone()).unwrap();
        let b = Bounds::new(3, 1, 1);
        for (i, t) in inferred.program.threads.iter().enumerate() {
            let rep = check_vcs(&inferred, &b, &local_vcs(i, t), None).unwrap();
            assert!(rep.valid(), "thread {}: {}", i, rep);
        }
        let (stable, _) = stabilize(&inferred, &b).unwrap();
        let stable = System::new(stable, s.policy.clone()).unwrap();
        assert!(verify_annotations(&stable, &b).unwrap().valid());
    }
}
