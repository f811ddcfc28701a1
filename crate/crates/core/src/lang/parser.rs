//! Recursive-descent parsers for terms and programs.

use std::rc::Rc;

use crate::error::ParseError;
use crate::lang::ast::{Command, PredDef, Program};
use crate::lang::lexer::{describe, Cursor, Tok};
use crate::lang::term::{BinOp, LevelOp, LevelRef, ListFn, Term, TermContext, TraceQuery, UnOp};
use crate::symbol::Symbol;

const BUILTINS: &[&str] = &[
    "held",
    "free",
    "lastinput",
    "lastoutput",
    "inputcount",
    "inputs",
    "nthinput",
    "len",
    "last",
    "sum",
    "avg",
    "take",
    "rev",
];

const KEYWORDS: &[&str] = &[
    "locks", "vars", "init", "pred", "thread", "skip", "input", "output", "acquire", "release",
    "if", "then", "else", "fi", "while", "inv", "do", "od", "stop", "true", "false",
];

/// Parses terms for a given context. Optionally checks variable and lock
/// names against declared sets.
pub struct TermParser<'a> {
    pub ctx: TermContext,
    pub vars: Option<&'a [Symbol]>,
    pub locks: Option<&'a [Symbol]>,
    pub preds: &'a [PredDef],
}

impl<'a> TermParser<'a> {
    pub fn new(ctx: TermContext) -> TermParser<'static> {
        TermParser {
            ctx,
            vars: None,
            locks: None,
            preds: &[],
        }
    }

    pub fn parse(&self, cur: &mut Cursor) -> Result<Rc<Term>, ParseError> {
        let pos = cur.here();
        let t = self.cond(cur)?;
        t.check(self.ctx)
            .map_err(|m| ParseError::new(pos.0, pos.1, m))?;
        Ok(t)
    }

    fn cond(&self, cur: &mut Cursor) -> Result<Rc<Term>, ParseError> {
        let c = self.implies(cur)?;
        if cur.eat_punct("?") {
            let a = self.cond(cur)?;
            cur.expect_punct(":")?;
            let b = self.cond(cur)?;
            return Ok(Rc::new(Term::Cond(c, a, b)));
        }
        Ok(c)
    }

    fn implies(&self, cur: &mut Cursor) -> Result<Rc<Term>, ParseError> {
        let a = self.or(cur)?;
        if cur.eat_punct("==>") {
            let b = self.implies(cur)?;
            return Ok(Term::bin(BinOp::Implies, a, b));
        }
        Ok(a)
    }

    fn or(&self, cur: &mut Cursor) -> Result<Rc<Term>, ParseError> {
        let mut a = self.and(cur)?;
        while cur.eat_punct("||") {
            let b = self.and(cur)?;
            a = Term::bin(BinOp::Or, a, b);
        }
        Ok(a)
    }

    fn and(&self, cur: &mut Cursor) -> Result<Rc<Term>, ParseError> {
        let mut a = self.not(cur)?;
        while cur.eat_punct("&&") {
            let b = self.not(cur)?;
            a = Term::bin(BinOp::And, a, b);
        }
        Ok(a)
    }

    fn not(&self, cur: &mut Cursor) -> Result<Rc<Term>, ParseError> {
        if cur.eat_punct("!") {
            let a = self.not(cur)?;
            return Ok(Rc::new(Term::Unary(UnOp::Not, a)));
        }
        self.cmp(cur)
    }

    fn cmp(&self, cur: &mut Cursor) -> Result<Rc<Term>, ParseError> {
        let a = self.add(cur)?;
        let op = match cur.peek() {
            Tok::Punct("=") => BinOp::Eq,
            Tok::Punct("!=") => BinOp::Ne,
            Tok::Punct("<") => BinOp::Lt,
            Tok::Punct("<=") => BinOp::Le,
            Tok::Punct(">") => BinOp::Gt,
            Tok::Punct(">=") => BinOp::Ge,
            _ => return Ok(a),
        };
        cur.bump();
        let b = self.add(cur)?;
        Ok(Term::bin(op, a, b))
    }

    fn add(&self, cur: &mut Cursor) -> Result<Rc<Term>, ParseError> {
        let mut a = self.mul(cur)?;
        loop {
            let op = match cur.peek() {
                Tok::Punct("+") => BinOp::Add,
                Tok::Punct("-") => BinOp::Sub,
                _ => return Ok(a),
            };
            cur.bump();
            let b = self.mul(cur)?;
            a = Term::bin(op, a, b);
        }
    }

    fn mul(&self, cur: &mut Cursor) -> Result<Rc<Term>, ParseError> {
        let mut a = self.unary(cur)?;
        loop {
            let op = match cur.peek() {
                Tok::Punct("*") => BinOp::Mul,
                Tok::Punct("/") => BinOp::Div,
                _ => return Ok(a),
            };
            cur.bump();
            let b = self.unary(cur)?;
            a = Term::bin(op, a, b);
        }
    }

    fn unary(&self, cur: &mut Cursor) -> Result<Rc<Term>, ParseError> {
        if cur.eat_punct("-") {
            let a = self.unary(cur)?;
            return Ok(Rc::new(Term::Unary(UnOp::Neg, a)));
        }
        self.atom(cur)
    }

    fn level_ref(&self, cur: &mut Cursor) -> Result<LevelRef, ParseError> {
        let w = cur.ident()?;
        Ok(match w.as_str() {
            "src" => LevelRef::Src,
            "dst" => LevelRef::Dst,
            _ => LevelRef::Named(Symbol::intern(&w)),
        })
    }

    fn lock(&self, cur: &mut Cursor) -> Result<Symbol, ParseError> {
        let pos = cur.here();
        let l = Symbol::intern(&cur.ident()?);
        if let Some(locks) = self.locks {
            if !locks.contains(&l) {
                return Err(ParseError::new(pos.0, pos.1, format!("undeclared lock `{}`", l)));
            }
        }
        Ok(l)
    }

    fn atom(&self, cur: &mut Cursor) -> Result<Rc<Term>, ParseError> {
        let pos = cur.here();
        match cur.bump() {
            Tok::Int(n) => Ok(Term::konst(n)),
            Tok::Punct("(") => {
                let t = self.cond(cur)?;
                cur.expect_punct(")")?;
                Ok(t)
            }
            Tok::Ident(w) => self.ident_atom(cur, w, pos),
            other => Err(ParseError::new(
                pos.0,
                pos.1,
                format!("expected a term, found {}", describe(&other)),
            )),
        }
    }

    fn ident_atom(
        &self,
        cur: &mut Cursor,
        w: String,
        pos: (usize, usize),
    ) -> Result<Rc<Term>, ParseError> {
        let declass = self.ctx == TermContext::Declass;
        match w.as_str() {
            "true" => return Ok(Term::konst(1)),
            "false" => return Ok(Term::konst(0)),
            "vs" if self.ctx == TermContext::Hatch => return Ok(Rc::new(Term::Vs)),
            "v" if declass => return Ok(Rc::new(Term::Released)),
            "ann" if declass => return Ok(Rc::new(Term::Ann)),
            "src" | "dst" if declass => {
                let lhs = if w == "src" { LevelRef::Src } else { LevelRef::Dst };
                let op = if cur.eat_punct("=") {
                    LevelOp::Eq
                } else if cur.eat_punct("<=") {
                    LevelOp::Le
                } else {
                    return Err(cur.error(format!("expected `=` or `<=` after `{}`", w)));
                };
                let rhs = self.level_ref(cur)?;
                return Ok(Rc::new(Term::LevelCmp(lhs, op, rhs)));
            }
            _ => {}
        }
        if cur.is_punct("(") {
            cur.bump();
            let t = if BUILTINS.contains(&w.as_str()) {
                self.builtin(cur, &w)?
            } else {
                let arg = self.cond(cur)?;
                Rc::new(Term::Apply(Symbol::intern(&w), arg))
            };
            cur.expect_punct(")")?;
            return Ok(t);
        }
        if KEYWORDS.contains(&w.as_str()) {
            return Err(ParseError::new(pos.0, pos.1, format!("unexpected keyword `{}`", w)));
        }
        let sym = Symbol::intern(&w);
        if let Some(p) = self.preds.iter().find(|p| p.name == sym) {
            return Ok(Rc::new(Term::Pred(sym, p.body.clone())));
        }
        if let Some(vars) = self.vars {
            if !vars.contains(&sym) {
                return Err(ParseError::new(pos.0, pos.1, format!("undeclared variable `{}`", w)));
            }
        }
        Ok(Rc::new(Term::Var(sym)))
    }

    fn builtin(&self, cur: &mut Cursor, name: &str) -> Result<Rc<Term>, ParseError> {
        let level = |cur: &mut Cursor| -> Result<Symbol, ParseError> { Ok(Symbol::intern(&cur.ident()?)) };
        Ok(Rc::new(match name {
            "held" => {
                let l = self.lock(cur)?;
                cur.expect_punct(",")?;
                let tid = cur.int()?;
                Term::Held(l, tid as usize)
            }
            "free" => Term::Free(self.lock(cur)?),
            "lastinput" => Term::Trace(TraceQuery::LastInput, level(cur)?),
            "lastoutput" => Term::Trace(TraceQuery::LastOutput, level(cur)?),
            "inputcount" => Term::Trace(TraceQuery::InputCount, level(cur)?),
            "inputs" => Term::Inputs(level(cur)?),
            "nthinput" => {
                let l = level(cur)?;
                cur.expect_punct(",")?;
                Term::NthInput(l, self.cond(cur)?)
            }
            "len" => Term::ListFn(ListFn::Len, self.cond(cur)?),
            "last" => Term::ListFn(ListFn::Last, self.cond(cur)?),
            "sum" => Term::ListFn(ListFn::Sum, self.cond(cur)?),
            "avg" => Term::ListFn(ListFn::Avg, self.cond(cur)?),
            "take" => {
                let n = self.cond(cur)?;
                cur.expect_punct(",")?;
                Term::Take(n, self.cond(cur)?)
            }
            "rev" => Term::Rev(self.cond(cur)?),
            _ => unreachable!("not a builtin: {}", name),
        }))
    }
}

/// Parses a standalone term.
pub fn parse_term(src: &str, ctx: TermContext) -> Result<Rc<Term>, ParseError> {
    let mut cur = Cursor::new(src)?;
    let t = TermParser::new(ctx).parse(&mut cur)?;
    if !cur.at_eof() {
        return Err(cur.error(format!("unexpected {}", describe(cur.peek()))));
    }
    Ok(t)
}

/// Parses a program. Statement ids are assigned in pre-order.
pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let mut cur = Cursor::new(src)?;
    let mut prog = Program {
        locks: Vec::new(),
        vars: Vec::new(),
        init: None,
        preds: Vec::new(),
        threads: Vec::new(),
    };
    loop {
        if cur.eat_keyword("locks") {
            while !cur.eat_punct(";") {
                let pos = cur.here();
                let l = Symbol::intern(&cur.ident()?);
                if prog.locks.contains(&l) {
                    return Err(ParseError::new(pos.0, pos.1, format!("lock `{}` declared twice", l)));
                }
                prog.locks.push(l);
            }
        } else if cur.eat_keyword("vars") {
            while !cur.eat_punct(";") {
                let pos = cur.here();
                let x = cur.ident()?;
                if KEYWORDS.contains(&x.as_str()) || BUILTINS.contains(&x.as_str()) {
                    return Err(ParseError::new(pos.0, pos.1, format!("`{}` is reserved", x)));
                }
                let x = Symbol::intern(&x);
                if prog.vars.contains(&x) {
                    return Err(ParseError::new(pos.0, pos.1, format!("variable `{}` declared twice", x)));
                }
                prog.vars.push(x);
            }
        } else if cur.eat_keyword("init") {
            let t = braced(&mut cur, &annotation_parser(&prog))?;
            prog.init = Some(t);
            cur.eat_punct(";");
        } else if cur.eat_keyword("pred") {
            let pos = cur.here();
            let name = Symbol::intern(&cur.ident()?);
            if prog.vars.contains(&name) || prog.preds.iter().any(|p| p.name == name) {
                return Err(ParseError::new(pos.0, pos.1, format!("`{}` is already defined", name)));
            }
            let body = braced(&mut cur, &annotation_parser(&prog))?;
            prog.preds.push(PredDef { name, body });
            cur.eat_punct(";");
        } else {
            break;
        }
    }
    while cur.eat_keyword("thread") {
        let pos = cur.here();
        let n = cur.int()?;
        if n as usize != prog.threads.len() {
            return Err(ParseError::new(
                pos.0,
                pos.1,
                format!("expected thread {}, found thread {}", prog.threads.len(), n),
            ));
        }
        cur.expect_punct("{")?;
        let body = if cur.is_punct("}") {
            Rc::new(Command::Stop)
        } else {
            statements(&mut cur, &prog)?
        };
        cur.expect_punct("}")?;
        prog.threads.push(body);
    }
    if !cur.at_eof() {
        return Err(cur.error(format!("unexpected {}", describe(cur.peek()))));
    }
    if prog.threads.is_empty() {
        return Err(cur.error("a program needs at least one thread"));
    }
    prog.renumber();
    Ok(prog)
}

/// Parses the tail of a verification-condition line, `{H} stmt {C}` or
/// `{H} skip {C}`, in the context of `prog`. Returns the hypothesis, the
/// statement (`None` for `skip`) and the conclusion.
#[allow(clippy::type_complexity)]
pub fn parse_vc_body(src: &str, prog: &Program) -> Result<(Rc<Term>, Option<Rc<Command>>, Rc<Term>), ParseError> {
    let mut cur = Cursor::new(src)?;
    let hyp = braced(&mut cur, &annotation_parser(prog))?;
    let skip = cur.is_keyword("skip");
    let stmt = statement(&mut cur, prog)?;
    if !stmt.is_atomic() {
        return Err(cur.error("a verification condition needs an atomic statement"));
    }
    if !cur.at_eof() {
        return Err(cur.error(format!("unexpected {}", describe(cur.peek()))));
    }
    let concl = stmt.own_ann().cloned().unwrap_or_else(Term::tt);
    Ok((hyp, if skip { None } else { Some(stmt) }, concl))
}

fn annotation_parser(prog: &Program) -> TermParser<'_> {
    TermParser {
        ctx: TermContext::Annotation,
        vars: Some(&prog.vars),
        locks: Some(&prog.locks),
        preds: &prog.preds,
    }
}

fn expr_parser(prog: &Program) -> TermParser<'_> {
    TermParser {
        ctx: TermContext::Expr,
        vars: Some(&prog.vars),
        locks: Some(&prog.locks),
        preds: &[],
    }
}

fn braced(cur: &mut Cursor, p: &TermParser) -> Result<Rc<Term>, ParseError> {
    cur.expect_punct("{")?;
    let t = p.parse(cur)?;
    cur.expect_punct("}")?;
    Ok(t)
}

fn annotation(cur: &mut Cursor, prog: &Program) -> Result<Rc<Term>, ParseError> {
    if cur.is_punct("{") {
        braced(cur, &annotation_parser(prog))
    } else {
        Ok(Term::tt())
    }
}

fn statements(cur: &mut Cursor, prog: &Program) -> Result<Rc<Command>, ParseError> {
    let mut cmds = vec![statement(cur, prog)?];
    while cur.eat_punct(";") {
        if cur.is_punct("}") || cur.is_keyword("else") || cur.is_keyword("fi") || cur.is_keyword("od") {
            break;
        }
        cmds.push(statement(cur, prog)?);
    }
    Ok(Command::seq(cmds))
}

fn var(cur: &mut Cursor, prog: &Program) -> Result<Symbol, ParseError> {
    let pos = cur.here();
    let x = Symbol::intern(&cur.ident()?);
    if !prog.vars.contains(&x) {
        return Err(ParseError::new(pos.0, pos.1, format!("undeclared variable `{}`", x)));
    }
    Ok(x)
}

fn lock(cur: &mut Cursor, prog: &Program) -> Result<Symbol, ParseError> {
    let pos = cur.here();
    let l = Symbol::intern(&cur.ident()?);
    if !prog.locks.contains(&l) {
        return Err(ParseError::new(pos.0, pos.1, format!("undeclared lock `{}`", l)));
    }
    Ok(l)
}

fn statement(cur: &mut Cursor, prog: &Program) -> Result<Rc<Command>, ParseError> {
    let pos = cur.here();
    let kw = match cur.peek() {
        Tok::Ident(w) => w.clone(),
        other => return Err(cur.error(format!("expected a statement, found {}", describe(other)))),
    };
    let id = 0;
    let cmd = match kw.as_str() {
        "stop" => {
            return Err(ParseError::new(pos.0, pos.1, "`stop` cannot appear in source programs"));
        }
        "skip" => {
            cur.bump();
            let ann = annotation(cur, prog)?;
            let x = *prog
                .vars
                .first()
                .ok_or_else(|| ParseError::new(pos.0, pos.1, "`skip` needs at least one declared variable"))?;
            Command::Assign {
                id,
                ann,
                var: x,
                expr: Rc::new(Term::Var(x)),
            }
        }
        "input" => {
            cur.bump();
            let var = var(cur, prog)?;
            let level = Symbol::intern(&cur.ident()?);
            let ann = annotation(cur, prog)?;
            Command::Input { id, ann, var, level }
        }
        "output" => {
            cur.bump();
            let declass = cur.eat_punct("^");
            let level = Symbol::intern(&cur.ident()?);
            let expr = expr_parser(prog).parse(cur)?;
            let ann = annotation(cur, prog)?;
            if declass {
                Command::DOutput { id, ann, level, expr }
            } else {
                Command::Output { id, ann, level, expr }
            }
        }
        "acquire" | "release" => {
            cur.bump();
            let l = lock(cur, prog)?;
            let ann = annotation(cur, prog)?;
            if kw == "acquire" {
                Command::Acquire { id, ann, lock: l }
            } else {
                Command::Release { id, ann, lock: l }
            }
        }
        "if" => {
            cur.bump();
            let cond = expr_parser(prog).parse(cur)?;
            let ann = annotation(cur, prog)?;
            cur.expect_keyword("then")?;
            let then_ = statements(cur, prog)?;
            let else_ = if cur.eat_keyword("else") {
                statements(cur, prog)?
            } else {
                let x = *prog
                    .vars
                    .first()
                    .ok_or_else(|| ParseError::new(pos.0, pos.1, "an `if` without `else` needs a declared variable"))?;
                Rc::new(Command::Assign {
                    id,
                    ann: ann.clone(),
                    var: x,
                    expr: Rc::new(Term::Var(x)),
                })
            };
            cur.expect_keyword("fi")?;
            Command::If {
                id,
                ann,
                cond,
                then_,
                else_,
            }
        }
        "while" => {
            cur.bump();
            let cond = expr_parser(prog).parse(cur)?;
            let ann = annotation(cur, prog)?;
            let inv = if cur.eat_keyword("inv") {
                braced(cur, &annotation_parser(prog))?
            } else {
                Term::tt()
            };
            cur.expect_keyword("do")?;
            let body = statements(cur, prog)?;
            cur.expect_keyword("od")?;
            Command::While {
                id,
                ann,
                cond,
                inv,
                body,
            }
        }
        _ => {
            let var = var(cur, prog)?;
            cur.expect_punct(":=")?;
            let declass = cur.eat_punct("^");
            let expr = expr_parser(prog).parse(cur)?;
            let ann = annotation(cur, prog)?;
            if declass {
                Command::DAssign { id, ann, var, expr }
            } else {
                Command::Assign { id, ann, var, expr }
            }
        }
    };
    Ok(Rc::new(cmd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::printer::print_program;

    fn err(src: &str) -> ParseError {
        parse_program(src).unwrap_err()
    }

    #[test]
    fn annotations_follow_the_statement_head_and_default_to_true() {
        let p = parse_program("vars x; thread 0 { x := 1 {x = 0}; x := 2 }").unwrap();
        let items = p.threads[0].flatten();
        assert_eq!(items[0].own_ann().unwrap().to_string(), "x = 0");
        assert_eq!(items[1].own_ann().unwrap(), &Term::tt());
        assert_eq!(items.iter().map(|c| c.id()).collect::<Vec<_>>(), vec![Some(0), Some(1)]);
    }

    #[test]
    fn sugar_desugars() {
        let p = parse_program("vars x y; thread 0 { skip; if x then y := 1 fi }").unwrap();
        let text = print_program(&p);
        // `skip` is a self-assignment of the first variable
        assert!(text.contains("x := x"), "{}", text);
        let Command::If { else_, .. } = &*p.threads[0].flatten()[1] else {
            panic!("expected an if");
        };
        // a missing else branch is a skip with its own statement id
        assert!(matches!(&**else_, Command::Assign { var, expr, .. } if expr.vars() == vec![*var]));
        assert_eq!(p.statement_count(), 4);
    }

    #[test]
    fn errors_carry_positions() {
        let e = err("vars x;\nthread 0 { x := }");
        assert_eq!((e.line, e.col), (2, 17));
        let e = err("vars x;\nthread 0 { y := 1 }");
        assert!(e.msg.contains("undeclared"), "{}", e.msg);
        assert_eq!(e.line, 2);
    }

    #[test]
    fn declarations_are_checked() {
        assert!(err("vars x x; thread 0 { x := 1 }").msg.contains("twice"));
        assert!(err("locks m m; vars x; thread 0 { x := 1 }").msg.contains("twice"));
        assert!(err("vars if; thread 0 { skip }").msg.contains("reserved"));
        assert!(err("vars x; thread 1 { x := 1 }").msg.contains("expected thread 0"));
        assert!(err("vars x;").msg.contains("at least one thread"));
        assert!(err("vars x; thread 0 { acquire n }").msg.contains("n"));
    }

    #[test]
    fn expressions_cannot_read_the_trace() {
        assert!(parse_program("vars x; thread 0 { x := lastinput(bot) }").is_err());
        assert!(parse_program("vars x; thread 0 { x := 1 {x = lastinput(bot)} }").is_ok());
        // `v` is only the released value inside a declassification predicate
        assert!(parse_program("vars x; thread 0 { x := 1 {v = 1} }").is_err());
        assert!(parse_term("v = 1 && src <= dst", TermContext::Declass).is_ok());
        assert!(parse_term("last(vs)", TermContext::Hatch).is_ok());
    }

    #[test]
    fn predicates_expand_in_annotations() {
        let p = parse_program("vars x; pred P {x = 1} thread 0 { x := 1 {P} }").unwrap();
        let a = p.threads[0].own_ann().unwrap();
        assert_eq!(a.vars(), vec![Symbol::intern("x")]);
    }
}
