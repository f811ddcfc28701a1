//! The compositional security logic: `alvl ⊢ c` for each thread.
//!
//! Rules are applied syntax-directed. Side conditions that quantify over
//! states (`explevel`, the declassification premises) are discharged by
//! bounded enumeration; an undetermined side condition counts as failed.
//! The result is a derivation tree recording every premise with its
//! evidence.

mod bisim;
mod explevel;

pub use bisim::{bisimilar_semantic, bisimilar_syntactic, step_count, BisimEvidence};
pub use explevel::{explevel, visibly_labeled, Judgement};

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use serde::Serialize;

use crate::declass::Declassifier;
use crate::error::Result;
use crate::lang::ast::{Command, StmtId};
use crate::lang::term::Term;
use crate::policy::DeclassPredicate;
use crate::symbol::Symbol;
use crate::system::{Bounds, System};
use crate::value::ThreadId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum TypingRule {
    SeqTy,
    UAsgTy,
    LAsgTy,
    DAsgTy,
    OutTy,
    DOutTy,
    UInTy,
    LInTy,
    AcqTy,
    RelTy,
    IfTy,
    WhileTy,
    /// The terminated command; types trivially.
    StopTy,
}

impl fmt::Display for TypingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Holds,
    Fails,
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Premise {
    pub name: String,
    pub status: Status,
    pub evidence: String,
}

impl Premise {
    fn new(name: impl Into<String>, status: Status, evidence: impl Into<String>) -> Premise {
        Premise {
            name: name.into(),
            status,
            evidence: evidence.into(),
        }
    }

    fn from_explevel(name: String, j: &Judgement) -> Premise {
        match j {
            Judgement::Holds { fast: true } => Premise::new(name, Status::Holds, "visible labels"),
            Judgement::Holds { fast: false } => Premise::new(name, Status::Holds, "by enumeration"),
            Judgement::Fails(w) => Premise::new(name, Status::Fails, w.clone()),
            Judgement::Undetermined(m) => Premise::new(name, Status::Undetermined, m.clone()),
        }
    }

    fn from_bisim(name: String, b: &BisimEvidence) -> Premise {
        let (status, ev) = match b {
            BisimEvidence::Bisimilar => (Status::Holds, "bisimilar".to_string()),
            BisimEvidence::Clause { stmt: Some(id), reason } => (Status::Fails, format!("statement {} {}", id, reason)),
            BisimEvidence::Clause { stmt: None, reason } => (Status::Fails, reason.clone()),
            BisimEvidence::Steps(m) | BisimEvidence::Step(m) => (Status::Fails, m.clone()),
            BisimEvidence::Undetermined(m) => (Status::Undetermined, m.clone()),
        };
        Premise::new(name, status, ev)
    }

    pub fn holds(&self) -> bool {
        self.status == Status::Holds
    }
}

/// One rule application with its premises and sub-derivations.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Derivation {
    pub rule: TypingRule,
    pub stmt: Option<StmtId>,
    pub command: String,
    pub premises: Vec<Premise>,
    pub children: Vec<Derivation>,
    /// Set on `IfTy` when the condition is not visible and the branches had
    /// to be shown bisimilar.
    pub secret_branch: bool,
}

impl Derivation {
    pub fn accepted(&self) -> bool {
        self.premises.iter().all(Premise::holds) && self.children.iter().all(Derivation::accepted)
    }

    /// The first failing premise in pre-order, with its rule application.
    pub fn first_failure(&self) -> Option<(&Derivation, &Premise)> {
        if let Some(p) = self.premises.iter().find(|p| !p.holds()) {
            return Some((self, p));
        }
        self.children.iter().find_map(Derivation::first_failure)
    }

    pub fn secret_branches(&self) -> usize {
        self.secret_branch as usize + self.children.iter().map(Derivation::secret_branches).sum::<usize>()
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, depth: usize) -> fmt::Result {
        let pad = "  ".repeat(depth);
        match self.stmt {
            Some(id) => writeln!(f, "{}{} [{}] {}", pad, self.rule, id, self.command)?,
            None => writeln!(f, "{}{} {}", pad, self.rule, self.command)?,
        }
        for p in &self.premises {
            let st = match p.status {
                Status::Holds => "holds",
                Status::Fails => "FAILS",
                Status::Undetermined => "UNDETERMINED",
            };
            writeln!(f, "{}  - {}: {} ({})", pad, p.name, st, p.evidence)?;
        }
        for c in &self.children {
            c.write(f, depth + 1)?;
        }
        Ok(())
    }
}

impl fmt::Display for Derivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, 0)
    }
}

/// How secret branches are shown bisimilar.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BisimMode {
    #[default]
    Syntactic,
    Semantic,
}

type ExpKey = (Symbol, Rc<Term>, Rc<Term>);

/// The logic at one attacker level, with its side-condition caches.
pub struct Logic<'a> {
    sys: &'a System,
    bounds: Bounds,
    alvl: Symbol,
    declass: Declassifier<'a>,
    mode: BisimMode,
    memo: RefCell<HashMap<ExpKey, Judgement>>,
}

fn short(c: &Command) -> String {
    match c {
        Command::If { cond, .. } => format!("if {}", cond),
        Command::While { cond, .. } => format!("while {}", cond),
        Command::Seq(..) => "sequence".into(),
        Command::Stop => "stop".into(),
        other => crate::verify::bare(other),
    }
}

impl<'a> Logic<'a> {
    pub fn new(sys: &'a System, bounds: Bounds, alvl: Symbol, pred: DeclassPredicate, mode: BisimMode) -> Logic<'a> {
        Logic {
            sys,
            bounds,
            alvl,
            declass: Declassifier::new(sys, bounds, pred),
            mode,
            memo: RefCell::new(HashMap::new()),
        }
    }

    pub fn explevel(&self, lvl: Symbol, a: &Rc<Term>, e: &Rc<Term>) -> Result<Judgement> {
        let key = (lvl, a.clone(), e.clone());
        if let Some(j) = self.memo.borrow().get(&key) {
            return Ok(j.clone());
        }
        let j = explevel(self.sys, &self.bounds, lvl, a, e)?;
        self.memo.borrow_mut().insert(key, j.clone());
        Ok(j)
    }

    fn leq(&self, a: Symbol, b: Symbol) -> bool {
        self.sys.policy.lattice.leq(a, b)
    }

    fn declass_premise(&self, c: &Command, tid: ThreadId) -> Result<Premise> {
        let name = "D holds under the annotation";
        Ok(match self.declass.premise(c, tid) {
            Ok(None) => Premise::new(name, Status::Holds, "every annotated state permits the release"),
            Ok(Some(w)) => Premise::new(name, Status::Fails, w),
            Err(crate::Error::Bounds(m)) => Premise::new(name, Status::Undetermined, m),
            Err(e) => return Err(e),
        })
    }

    fn bisimilar(&self, tid: ThreadId, c1: &Rc<Command>, c2: &Rc<Command>) -> Result<BisimEvidence> {
        Ok(match self.mode {
            BisimMode::Syntactic => bisimilar_syntactic(self.sys, self.alvl, c1, c2),
            BisimMode::Semantic => {
                // required in both directions, so that either branch matches the other
                let there = bisimilar_semantic(self.sys, &self.bounds, self.alvl, tid, c1, c2)?;
                if !there.holds() {
                    there
                } else {
                    bisimilar_semantic(self.sys, &self.bounds, self.alvl, tid, c2, c1)?
                }
            }
        })
    }

    /// Derives `alvl ⊢ c` for command `c` of thread `tid`.
    pub fn check_command(&self, tid: ThreadId, c: &Rc<Command>) -> Result<Derivation> {
        let alvl = self.alvl;
        let pol = &self.sys.policy;
        let mut d = Derivation {
            rule: TypingRule::StopTy,
            stmt: c.id(),
            command: short(c),
            premises: Vec::new(),
            children: Vec::new(),
            secret_branch: false,
        };
        match &**c {
            Command::Stop => {}
            Command::Seq(..) => {
                d.rule = TypingRule::SeqTy;
                for item in c.flatten() {
                    d.children.push(self.check_command(tid, &item)?);
                }
            }
            Command::Assign { ann, var, expr, .. } => match pol.labels.get(*var) {
                None => d.rule = TypingRule::UAsgTy,
                Some(lx) => {
                    d.rule = TypingRule::LAsgTy;
                    let j = self.explevel(lx, ann, expr)?;
                    d.premises.push(Premise::from_explevel(format!("explevel({}, A, {})", lx, expr), &j));
                }
            },
            Command::DAssign { .. } => {
                d.rule = TypingRule::DAsgTy;
                d.premises.push(self.declass_premise(c, tid)?);
            }
            Command::DOutput { .. } => {
                d.rule = TypingRule::DOutTy;
                d.premises.push(self.declass_premise(c, tid)?);
            }
            Command::Output { ann, level, expr, .. } => {
                d.rule = TypingRule::OutTy;
                if self.leq(*level, alvl) {
                    let j = self.explevel(alvl, ann, expr)?;
                    d.premises.push(Premise::from_explevel(format!("explevel({}, A, {})", alvl, expr), &j));
                }
            }
            Command::Input { var, level, .. } => match pol.labels.get(*var) {
                None => d.rule = TypingRule::UInTy,
                Some(lx) => {
                    d.rule = TypingRule::LInTy;
                    let ok = self.leq(*level, lx);
                    d.premises.push(Premise::new(
                        format!("{} <= {}", level, lx),
                        if ok { Status::Holds } else { Status::Fails },
                        if ok { "lattice order" } else { "not ordered in the lattice" },
                    ));
                }
            },
            Command::Acquire { .. } => d.rule = TypingRule::AcqTy,
            Command::Release { .. } => d.rule = TypingRule::RelTy,
            Command::If {
                ann, cond, then_, else_, ..
            } => {
                d.rule = TypingRule::IfTy;
                d.children.push(self.check_command(tid, then_)?);
                d.children.push(self.check_command(tid, else_)?);
                let j = self.explevel(alvl, ann, cond)?;
                let name = format!("explevel({}, A, {}) or branches {}-bisimilar", alvl, cond, alvl);
                if j.holds() {
                    d.premises.push(Premise::from_explevel(name, &j));
                } else {
                    // an undetermined condition is treated as secret
                    d.secret_branch = true;
                    let mut p = Premise::from_bisim(name, &self.bisimilar(tid, then_, else_)?);
                    let why = match &j {
                        Judgement::Fails(w) | Judgement::Undetermined(w) => w.as_str(),
                        Judgement::Holds { .. } => unreachable!(),
                    };
                    p.evidence = format!("secret condition ({}); {}", why, p.evidence);
                    d.premises.push(p);
                }
            }
            Command::While {
                ann, cond, inv, body, ..
            } => {
                d.rule = TypingRule::WhileTy;
                let j = self.explevel(alvl, ann, cond)?;
                d.premises.push(Premise::from_explevel(format!("explevel({}, A, {})", alvl, cond), &j));
                let j = self.explevel(alvl, inv, cond)?;
                d.premises.push(Premise::from_explevel(format!("explevel({}, I, {})", alvl, cond), &j));
                d.children.push(self.check_command(tid, body)?);
            }
        }
        Ok(d)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ThreadResult {
    pub thread: ThreadId,
    pub derivation: Derivation,
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelResult {
    pub level: Symbol,
    pub threads: Vec<ThreadResult>,
}

impl LevelResult {
    pub fn accepted(&self) -> bool {
        self.threads.iter().all(|t| t.derivation.accepted())
    }

    pub fn secret_branches(&self) -> usize {
        self.threads.iter().map(|t| t.derivation.secret_branches()).sum()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LogicReport {
    pub levels: Vec<LevelResult>,
}

impl LogicReport {
    pub fn accepted(&self) -> bool {
        self.levels.iter().all(LevelResult::accepted)
    }

    /// Uses of the secret-branching case of `IfTy`, over all levels.
    pub fn secret_branches(&self) -> usize {
        self.levels.iter().map(LevelResult::secret_branches).sum()
    }

    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        for l in &self.levels {
            let verdict = if l.accepted() { "accepted" } else { "rejected" };
            parts.push(format!("{} {}", l.level, verdict));
        }
        format!(
            "logic {}: {}; {} secret branch(es)",
            if self.accepted() { "accepted" } else { "rejected" },
            parts.join(", "),
            self.secret_branches()
        )
    }

    /// Every derivation as indented text.
    pub fn derivations(&self) -> String {
        let mut out = String::new();
        for l in &self.levels {
            for t in &l.threads {
                out.push_str(&format!("level {} thread {}\n{}", l.level, t.thread, t.derivation));
            }
        }
        out
    }
}

impl LogicReport {
    /// The first failing premise of each rejected thread, one line each.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for l in &self.levels {
            for t in &l.threads {
                if let Some((d, p)) = t.derivation.first_failure() {
                    let at = d.stmt.map(|i| format!(" at statement {}", i)).unwrap_or_default();
                    out.push(format!(
                        "level {} thread {}: {}{} ({}): {}",
                        l.level, t.thread, d.rule, at, p.name, p.evidence
                    ));
                }
            }
        }
        out
    }
}

impl fmt::Display for LogicReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.summary())?;
        for line in self.failures() {
            writeln!(f, "  {}", line)?;
        }
        Ok(())
    }
}

/// Options for [`check_program`].
#[derive(Clone, Debug, Default)]
pub struct LogicOptions {
    /// Levels to check; every lattice level when empty.
    pub levels: Vec<Symbol>,
    pub bisim: BisimMode,
    /// Declassification predicate; the policy's when `None`.
    pub predicate: Option<DeclassPredicate>,
}

/// Checks every thread at every requested level.
pub fn check_program(sys: &System, bounds: &Bounds, opts: &LogicOptions) -> Result<LogicReport> {
    let levels = if opts.levels.is_empty() {
        sys.policy.lattice.levels().to_vec()
    } else {
        opts.levels.clone()
    };
    let pred = opts.predicate.clone().unwrap_or_else(|| sys.policy.declass_predicate());
    let mut out = Vec::new();
    for alvl in levels {
        let _span = tracing::debug_span!("logic", level = %alvl).entered();
        let logic = Logic::new(sys, *bounds, alvl, pred.clone(), opts.bisim);
        let mut threads = Vec::new();
        for (tid, t) in sys.program.threads.iter().enumerate() {
            threads.push(ThreadResult {
                thread: tid,
                derivation: logic.check_command(tid, t)?,
            });
        }
        out.push(LevelResult { level: alvl, threads });
    }
    Ok(LogicReport { levels: out })
}
