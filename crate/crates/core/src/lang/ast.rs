//! Annotated commands and programs.

use std::rc::Rc;

use crate::lang::term::Term;
use crate::symbol::Symbol;

/// Identifies an annotated statement within a program. Assigned in
/// pre-order by [`Program::renumber`].
pub type StmtId = u32;

pub type Ann = Rc<Term>;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Command {
    Assign {
        id: StmtId,
        ann: Ann,
        var: Symbol,
        expr: Rc<Term>,
    },
    /// Declassifying assignment `x :=^ E`.
    DAssign {
        id: StmtId,
        ann: Ann,
        var: Symbol,
        expr: Rc<Term>,
    },
    Output {
        id: StmtId,
        ann: Ann,
        level: Symbol,
        expr: Rc<Term>,
    },
    /// Declassifying output `output^ lvl E`.
    DOutput {
        id: StmtId,
        ann: Ann,
        level: Symbol,
        expr: Rc<Term>,
    },
    Input {
        id: StmtId,
        ann: Ann,
        var: Symbol,
        level: Symbol,
    },
    If {
        id: StmtId,
        ann: Ann,
        cond: Rc<Term>,
        then_: Rc<Command>,
        else_: Rc<Command>,
    },
    While {
        id: StmtId,
        ann: Ann,
        cond: Rc<Term>,
        inv: Ann,
        body: Rc<Command>,
    },
    Acquire {
        id: StmtId,
        ann: Ann,
        lock: Symbol,
    },
    Release {
        id: StmtId,
        ann: Ann,
        lock: Symbol,
    },
    Seq(Rc<Command>, Rc<Command>),
    Stop,
}

impl Command {
    /// Right-nested sequence of the given commands; `Stop` if empty.
    pub fn seq(mut cmds: Vec<Rc<Command>>) -> Rc<Command> {
        let mut acc = match cmds.pop() {
            Some(c) => c,
            None => return Rc::new(Command::Stop),
        };
        while let Some(c) = cmds.pop() {
            acc = Rc::new(Command::Seq(c, acc));
        }
        acc
    }

    pub fn is_stop(&self) -> bool {
        matches!(self, Command::Stop)
    }

    /// The annotation of the command that executes next: the annotation of
    /// the leftmost non-sequence command. `None` for `Stop`.
    pub fn entry_ann(&self) -> Option<&Ann> {
        match self {
            Command::Seq(a, _) => a.entry_ann(),
            Command::Stop => None,
            other => other.own_ann(),
        }
    }

    /// The annotation attached to this very command (not to a sub-command).
    pub fn own_ann(&self) -> Option<&Ann> {
        match self {
            Command::Assign { ann, .. }
            | Command::DAssign { ann, .. }
            | Command::Output { ann, .. }
            | Command::DOutput { ann, .. }
            | Command::Input { ann, .. }
            | Command::If { ann, .. }
            | Command::While { ann, .. }
            | Command::Acquire { ann, .. }
            | Command::Release { ann, .. } => Some(ann),
            Command::Seq(..) | Command::Stop => None,
        }
    }

    pub fn id(&self) -> Option<StmtId> {
        match self {
            Command::Assign { id, .. }
            | Command::DAssign { id, .. }
            | Command::Output { id, .. }
            | Command::DOutput { id, .. }
            | Command::Input { id, .. }
            | Command::If { id, .. }
            | Command::While { id, .. }
            | Command::Acquire { id, .. }
            | Command::Release { id, .. } => Some(*id),
            Command::Seq(..) | Command::Stop => None,
        }
    }

    /// The leftmost non-sequence command.
    pub fn head(&self) -> &Command {
        match self {
            Command::Seq(a, _) => a.head(),
            other => other,
        }
    }

    /// Whether the command is a single atomic step (not If, While, Seq).
    pub fn is_atomic(&self) -> bool {
        matches!(
            self,
            Command::Assign { .. }
                | Command::DAssign { .. }
                | Command::Output { .. }
                | Command::DOutput { .. }
                | Command::Input { .. }
                | Command::Acquire { .. }
                | Command::Release { .. }
        )
    }

    /// Calls `f` on every non-sequence command, pre-order.
    pub fn visit(&self, f: &mut impl FnMut(&Command)) {
        match self {
            Command::Seq(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Command::Stop => {}
            Command::If { then_, else_, .. } => {
                f(self);
                then_.visit(f);
                else_.visit(f);
            }
            Command::While { body, .. } => {
                f(self);
                body.visit(f);
            }
            _ => f(self),
        }
    }

    /// Flattens a right- or left-nested sequence into its elements.
    pub fn flatten(self: &Rc<Command>) -> Vec<Rc<Command>> {
        let mut out = Vec::new();
        fn go(c: &Rc<Command>, out: &mut Vec<Rc<Command>>) {
            match &**c {
                Command::Seq(a, b) => {
                    go(a, out);
                    go(b, out);
                }
                Command::Stop => {}
                _ => out.push(c.clone()),
            }
        }
        go(self, &mut out);
        out
    }

    /// Variables written by the command (including nested commands).
    pub fn writes(&self) -> Vec<Symbol> {
        let mut out = Vec::new();
        self.visit(&mut |c| {
            if let Command::Assign { var, .. }
            | Command::DAssign { var, .. }
            | Command::Input { var, .. } = c
            {
                if !out.contains(var) {
                    out.push(*var);
                }
            }
        });
        out
    }

    /// Rebuilds the command with ids assigned in pre-order from `next`.
    fn renumber(self: &Rc<Command>, next: &mut StmtId) -> Rc<Command> {
        let mut fresh = || {
            let id = *next;
            *next += 1;
            id
        };
        Rc::new(match &**self {
            Command::Seq(a, b) => {
                let a = a.renumber(next);
                let b = b.renumber(next);
                Command::Seq(a, b)
            }
            Command::Stop => Command::Stop,
            Command::Assign { ann, var, expr, .. } => Command::Assign {
                id: fresh(),
                ann: ann.clone(),
                var: *var,
                expr: expr.clone(),
            },
            Command::DAssign { ann, var, expr, .. } => Command::DAssign {
                id: fresh(),
                ann: ann.clone(),
                var: *var,
                expr: expr.clone(),
            },
            Command::Output { ann, level, expr, .. } => Command::Output {
                id: fresh(),
                ann: ann.clone(),
                level: *level,
                expr: expr.clone(),
            },
            Command::DOutput { ann, level, expr, .. } => Command::DOutput {
                id: fresh(),
                ann: ann.clone(),
                level: *level,
                expr: expr.clone(),
            },
            Command::Input { ann, var, level, .. } => Command::Input {
                id: fresh(),
                ann: ann.clone(),
                var: *var,
                level: *level,
            },
            Command::Acquire { ann, lock, .. } => Command::Acquire {
                id: fresh(),
                ann: ann.clone(),
                lock: *lock,
            },
            Command::Release { ann, lock, .. } => Command::Release {
                id: fresh(),
                ann: ann.clone(),
                lock: *lock,
            },
            Command::If {
                ann,
                cond,
                then_,
                else_,
                ..
            } => {
                let id = fresh();
                let then_ = then_.renumber(next);
                let else_ = else_.renumber(next);
                Command::If {
                    id,
                    ann: ann.clone(),
                    cond: cond.clone(),
                    then_,
                    else_,
                }
            }
            Command::While {
                ann, cond, inv, body, ..
            } => {
                let id = fresh();
                let body = body.renumber(next);
                Command::While {
                    id,
                    ann: ann.clone(),
                    cond: cond.clone(),
                    inv: inv.clone(),
                    body,
                }
            }
        })
    }

    /// Replaces the annotation of every statement using `f(id, old)`.
    pub fn map_anns(self: &Rc<Command>, f: &mut impl FnMut(StmtId, &Ann) -> Ann) -> Rc<Command> {
        Rc::new(match &**self {
            Command::Seq(a, b) => {
                let a = a.map_anns(f);
                Command::Seq(a, b.map_anns(f))
            }
            Command::Stop => Command::Stop,
            Command::If {
                id,
                ann,
                cond,
                then_,
                else_,
            } => {
                let ann = f(*id, ann);
                let then_ = then_.map_anns(f);
                Command::If {
                    id: *id,
                    ann,
                    cond: cond.clone(),
                    then_,
                    else_: else_.map_anns(f),
                }
            }
            Command::While {
                id,
                ann,
                cond,
                inv,
                body,
            } => {
                let ann = f(*id, ann);
                Command::While {
                    id: *id,
                    ann,
                    cond: cond.clone(),
                    inv: inv.clone(),
                    body: body.map_anns(f),
                }
            }
            other => {
                let mut c = other.clone();
                let id = c.id().expect("atomic command has an id");
                let new = f(id, c.own_ann().expect("atomic command is annotated"));
                match &mut c {
                    Command::Assign { ann, .. }
                    | Command::DAssign { ann, .. }
                    | Command::Output { ann, .. }
                    | Command::DOutput { ann, .. }
                    | Command::Input { ann, .. }
                    | Command::Acquire { ann, .. }
                    | Command::Release { ann, .. } => *ann = new,
                    _ => unreachable!(),
                }
                c
            }
        })
    }
}

/// A named predicate usable in annotations.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PredDef {
    pub name: Symbol,
    pub body: Rc<Term>,
}

/// A concurrent program: declarations plus one command per thread. Thread
/// ids are positions in `threads`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Program {
    pub locks: Vec<Symbol>,
    pub vars: Vec<Symbol>,
    /// Optional precondition restricting the initial states considered.
    pub init: Option<Rc<Term>>,
    pub preds: Vec<PredDef>,
    pub threads: Vec<Rc<Command>>,
}

impl Program {
    /// Reassigns statement ids in pre-order across threads.
    pub fn renumber(&mut self) {
        let mut next = 0;
        for t in self.threads.iter_mut() {
            *t = t.renumber(&mut next);
        }
    }

    pub fn statement_count(&self) -> usize {
        let mut n = 0;
        for t in &self.threads {
            t.visit(&mut |_| n += 1);
        }
        n
    }

    /// Finds a statement by id, returning its thread and the command.
    pub fn find(&self, id: StmtId) -> Option<(usize, &Command)> {
        fn go(c: &Command, id: StmtId) -> Option<&Command> {
            if c.id() == Some(id) {
                return Some(c);
            }
            match c {
                Command::Seq(a, b) => go(a, id).or_else(|| go(b, id)),
                Command::If { then_, else_, .. } => go(then_, id).or_else(|| go(else_, id)),
                Command::While { body, .. } => go(body, id),
                _ => None,
            }
        }
        self.threads
            .iter()
            .enumerate()
            .find_map(|(tid, t)| go(t, id).map(|c| (tid, c)))
    }
}
