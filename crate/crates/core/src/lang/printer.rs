//! Canonical pretty-printing. Printing and re-parsing yields the same tree.

use std::fmt::{self, Write};

use crate::lang::ast::{Command, Program};
use crate::lang::term::{BinOp, LevelOp, LevelRef, Term, UnOp};

fn prec(t: &Term) -> u8 {
    match t {
        Term::Cond(..) => 0,
        Term::Binary(op, ..) => match op {
            BinOp::Implies => 1,
            BinOp::Or => 2,
            BinOp::And => 3,
            BinOp::Add | BinOp::Sub => 6,
            BinOp::Mul | BinOp::Div => 7,
            _ => 5,
        },
        Term::Unary(UnOp::Not, _) => 4,
        Term::Unary(UnOp::Neg, _) => 8,
        Term::LevelCmp(..) => 5,
        Term::Const(c) if *c < 0 => 8,
        _ => 9,
    }
}

fn write_at(f: &mut fmt::Formatter<'_>, t: &Term, min: u8) -> fmt::Result {
    if prec(t) < min {
        write!(f, "({})", t)
    } else {
        write!(f, "{}", t)
    }
}

fn level_ref(r: LevelRef) -> String {
    match r {
        LevelRef::Src => "src".into(),
        LevelRef::Dst => "dst".into(),
        LevelRef::Named(l) => l.to_string(),
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) if *c < 0 => write!(f, "-{}", -c),
            Term::Const(c) => write!(f, "{}", c),
            Term::Var(x) => write!(f, "{}", x),
            Term::Unary(UnOp::Not, a) => {
                f.write_str("!")?;
                write_at(f, a, 4)
            }
            Term::Unary(UnOp::Neg, a) => {
                f.write_str("-")?;
                write_at(f, a, 8)
            }
            Term::Binary(op, a, b) => {
                let p = prec(self);
                let (lmin, rmin) = match op {
                    BinOp::Implies => (p + 1, p),
                    _ if op.is_comparison() => (p + 1, p + 1),
                    _ => (p, p + 1),
                };
                write_at(f, a, lmin)?;
                write!(f, " {} ", op.symbol())?;
                write_at(f, b, rmin)
            }
            Term::Cond(c, a, b) => {
                write_at(f, c, 1)?;
                f.write_str(" ? ")?;
                write_at(f, a, 0)?;
                f.write_str(" : ")?;
                write_at(f, b, 0)
            }
            Term::Apply(n, a) => write!(f, "{}({})", n, a),
            Term::Held(l, t) => write!(f, "held({}, {})", l, t),
            Term::Free(l) => write!(f, "free({})", l),
            Term::Trace(q, l) => write!(f, "{}({})", q.name(), l),
            Term::NthInput(l, k) => write!(f, "nthinput({}, {})", l, k),
            Term::Inputs(l) => write!(f, "inputs({})", l),
            Term::ListFn(g, l) => write!(f, "{}({})", g.name(), l),
            Term::Take(n, l) => write!(f, "take({}, {})", n, l),
            Term::Rev(l) => write!(f, "rev({})", l),
            Term::Vs => f.write_str("vs"),
            Term::Released => f.write_str("v"),
            Term::Ann => f.write_str("ann"),
            Term::LevelCmp(a, op, b) => {
                let op = match op {
                    LevelOp::Eq => "=",
                    LevelOp::Le => "<=",
                };
                write!(f, "{} {} {}", level_ref(*a), op, level_ref(*b))
            }
            Term::Pred(name, _) => write!(f, "{}", name),
        }
    }
}

/// Prints an annotation; the literal `1` is shown as `true`.
pub fn ann_str(t: &Term) -> String {
    if t.is_true_literal() {
        "true".into()
    } else {
        t.to_string()
    }
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn print_seq(out: &mut String, c: &std::rc::Rc<Command>, depth: usize) {
    let items = c.flatten();
    for (i, item) in items.iter().enumerate() {
        print_cmd(out, item, depth);
        if i + 1 < items.len() {
            out.push(';');
        }
        out.push('\n');
    }
}

fn print_cmd(out: &mut String, c: &Command, depth: usize) {
    if let Command::Seq(..) = c {
        let items = std::rc::Rc::new(c.clone()).flatten();
        for (i, item) in items.iter().enumerate() {
            if i > 0 {
                out.push_str(";\n");
            }
            print_cmd(out, item, depth);
        }
        return;
    }
    indent(out, depth);
    match c {
        Command::Assign { ann, var, expr, .. } => {
            let _ = write!(out, "{} := {} {{{}}}", var, expr, ann_str(ann));
        }
        Command::DAssign { ann, var, expr, .. } => {
            let _ = write!(out, "{} :=^ {} {{{}}}", var, expr, ann_str(ann));
        }
        Command::Output { ann, level, expr, .. } => {
            let _ = write!(out, "output {} {} {{{}}}", level, expr, ann_str(ann));
        }
        Command::DOutput { ann, level, expr, .. } => {
            let _ = write!(out, "output^ {} {} {{{}}}", level, expr, ann_str(ann));
        }
        Command::Input { ann, var, level, .. } => {
            let _ = write!(out, "input {} {} {{{}}}", var, level, ann_str(ann));
        }
        Command::Acquire { ann, lock, .. } => {
            let _ = write!(out, "acquire {} {{{}}}", lock, ann_str(ann));
        }
        Command::Release { ann, lock, .. } => {
            let _ = write!(out, "release {} {{{}}}", lock, ann_str(ann));
        }
        Command::If {
            ann,
            cond,
            then_,
            else_,
            ..
        } => {
            let _ = writeln!(out, "if {} {{{}}} then", cond, ann_str(ann));
            print_seq(out, then_, depth + 1);
            indent(out, depth);
            out.push_str("else\n");
            print_seq(out, else_, depth + 1);
            indent(out, depth);
            out.push_str("fi");
        }
        Command::While {
            ann,
            cond,
            inv,
            body,
            ..
        } => {
            let _ = writeln!(
                out,
                "while {} {{{}}} inv {{{}}} do",
                cond,
                ann_str(ann),
                ann_str(inv)
            );
            print_seq(out, body, depth + 1);
            indent(out, depth);
            out.push_str("od");
        }
        Command::Seq(..) => unreachable!("sequences are printed by print_seq"),
        Command::Stop => out.push_str("stop"),
    }
}

/// Renders a single command (used in reports and VC files).
pub fn command_str(c: &Command) -> String {
    let mut out = String::new();
    print_cmd(&mut out, c, 0);
    out
}

/// Renders a program in canonical concrete syntax.
pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    if !p.locks.is_empty() {
        out.push_str("locks");
        for l in &p.locks {
            let _ = write!(out, " {}", l);
        }
        out.push_str(";\n");
    }
    if !p.vars.is_empty() {
        out.push_str("vars");
        for x in &p.vars {
            let _ = write!(out, " {}", x);
        }
        out.push_str(";\n");
    }
    if let Some(init) = &p.init {
        let _ = writeln!(out, "init {{{}}}", ann_str(init));
    }
    for d in &p.preds {
        let _ = writeln!(out, "pred {} {{{}}}", d.name, ann_str(&d.body));
    }
    for (i, t) in p.threads.iter().enumerate() {
        let _ = writeln!(out, "\nthread {} {{", i);
        if !t.is_stop() {
            print_seq(&mut out, t, 1);
        }
        out.push_str("}\n");
    }
    out
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_program(self))
    }
}
