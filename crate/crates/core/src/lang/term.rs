//! Terms: program expressions, annotations, declassification predicates and
//! hatch expressions share one syntax tree. Which atoms are allowed depends on
//! the context a term is used in; see [`TermContext`].

use std::rc::Rc;

use crate::error::EvalError;
use crate::policy::{Lattice, Tables};
use crate::semantics::state::{EventKind, LockMap, Memory, Trace};
use crate::symbol::Symbol;
use crate::value::{from_bool, truth, Domain, ThreadId, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Implies,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Eq => "=",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
            BinOp::Implies => "==>",
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge
        )
    }
}

/// Scalar functions over lists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ListFn {
    Len,
    Last,
    Sum,
    Avg,
}

impl ListFn {
    pub fn name(self) -> &'static str {
        match self {
            ListFn::Len => "len",
            ListFn::Last => "last",
            ListFn::Sum => "sum",
            ListFn::Avg => "avg",
        }
    }
}

/// A level operand inside a declassification predicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LevelRef {
    Src,
    Dst,
    Named(Symbol),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LevelOp {
    Eq,
    Le,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TraceQuery {
    LastInput,
    LastOutput,
    InputCount,
}

impl TraceQuery {
    pub fn name(self) -> &'static str {
        match self {
            TraceQuery::LastInput => "lastinput",
            TraceQuery::LastOutput => "lastoutput",
            TraceQuery::InputCount => "inputcount",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Const(Value),
    Var(Symbol),
    Unary(UnOp, Rc<Term>),
    Binary(BinOp, Rc<Term>, Rc<Term>),
    Cond(Rc<Term>, Rc<Term>, Rc<Term>),
    /// Application of a finite function table, e.g. `CK(x)`.
    Apply(Symbol, Rc<Term>),
    Held(Symbol, ThreadId),
    Free(Symbol),
    Trace(TraceQuery, Symbol),
    /// `nthinput(lvl, k)`: the k-th input (0-based) consumed at `lvl`.
    NthInput(Symbol, Rc<Term>),
    /// The list of inputs consumed at a level, oldest first.
    Inputs(Symbol),
    ListFn(ListFn, Rc<Term>),
    Take(Rc<Term>, Rc<Term>),
    Rev(Rc<Term>),
    /// The input list a hatch expression is applied to.
    Vs,
    /// The released value in a declassification predicate.
    Released,
    /// Whether the annotation of the declassifying command holds.
    Ann,
    LevelCmp(LevelRef, LevelOp, LevelRef),
    /// A reference to a named predicate; evaluates as its body.
    Pred(Symbol, Rc<Term>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Int,
    List,
}

/// Where a term appears; restricts which atoms are legal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TermContext {
    /// Program expressions: memory, constants and tables only.
    Expr,
    /// Annotations and invariants: adds locks and trace queries.
    Annotation,
    /// Declassification predicates: adds `v`, `src`, `dst`, `ann`.
    Declass,
    /// Hatch expressions: tables and `vs` only.
    Hatch,
}

pub const TRUE: Term = Term::Const(1);

impl Term {
    pub fn tt() -> Rc<Term> {
        Rc::new(Term::Const(1))
    }

    pub fn var(x: impl Into<Symbol>) -> Rc<Term> {
        Rc::new(Term::Var(x.into()))
    }

    pub fn konst(v: Value) -> Rc<Term> {
        Rc::new(Term::Const(v))
    }

    pub fn bin(op: BinOp, a: Rc<Term>, b: Rc<Term>) -> Rc<Term> {
        Rc::new(Term::Binary(op, a, b))
    }

    pub fn and(a: Rc<Term>, b: Rc<Term>) -> Rc<Term> {
        if *a == TRUE {
            return b;
        }
        if *b == TRUE {
            return a;
        }
        Term::bin(BinOp::And, a, b)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Rc<Term>) -> Rc<Term> {
        Rc::new(Term::Unary(UnOp::Not, a))
    }

    pub fn eq(a: Rc<Term>, b: Rc<Term>) -> Rc<Term> {
        Term::bin(BinOp::Eq, a, b)
    }

    pub fn is_true_literal(&self) -> bool {
        *self == TRUE
    }

    /// Splits a conjunction into its top-level conjuncts (named predicates
    /// are looked through).
    pub fn conjuncts(self: &Rc<Term>) -> Vec<Rc<Term>> {
        let mut out = Vec::new();
        fn go(t: &Rc<Term>, out: &mut Vec<Rc<Term>>) {
            match &**t {
                Term::Binary(BinOp::And, a, b) => {
                    go(a, out);
                    go(b, out);
                }
                Term::Pred(_, body) => go(body, out),
                Term::Const(1) => {}
                _ => out.push(t.clone()),
            }
        }
        go(self, &mut out);
        out
    }

    /// Calls `f` on every sub-term, pre-order.
    pub fn visit(&self, f: &mut impl FnMut(&Term)) {
        f(self);
        match self {
            Term::Unary(_, a)
            | Term::Apply(_, a)
            | Term::NthInput(_, a)
            | Term::ListFn(_, a)
            | Term::Rev(a)
            | Term::Pred(_, a) => a.visit(f),
            Term::Binary(_, a, b) | Term::Take(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Term::Cond(a, b, c) => {
                a.visit(f);
                b.visit(f);
                c.visit(f);
            }
            _ => {}
        }
    }

    /// Memory variables read by the term, in first-occurrence order.
    pub fn vars(&self) -> Vec<Symbol> {
        let mut out = Vec::new();
        self.visit(&mut |t| {
            if let Term::Var(x) = t {
                if !out.contains(x) {
                    out.push(*x);
                }
            }
        });
        out
    }

    pub fn mentions_var(&self, x: Symbol) -> bool {
        let mut hit = false;
        self.visit(&mut |t| hit |= matches!(t, Term::Var(y) if *y == x));
        hit
    }

    /// Locks mentioned by `held`/`free`.
    pub fn locks(&self) -> Vec<Symbol> {
        let mut out = Vec::new();
        self.visit(&mut |t| {
            if let Term::Held(l, _) | Term::Free(l) = t {
                if !out.contains(l) {
                    out.push(*l);
                }
            }
        });
        out
    }

    /// Levels whose trace projection is queried.
    pub fn trace_levels(&self) -> Vec<Symbol> {
        let mut out = Vec::new();
        self.visit(&mut |t| {
            if let Term::Trace(_, l) | Term::Inputs(l) | Term::NthInput(l, _) = t {
                if !out.contains(l) {
                    out.push(*l);
                }
            }
        });
        out
    }

    pub fn reads_trace(&self) -> bool {
        !self.trace_levels().is_empty()
    }

    /// Tables applied anywhere in the term.
    pub fn tables(&self) -> Vec<Symbol> {
        let mut out = Vec::new();
        self.visit(&mut |t| {
            if let Term::Apply(n, _) = t {
                if !out.contains(n) {
                    out.push(*n);
                }
            }
        });
        out
    }

    /// Level names mentioned anywhere in the term.
    pub fn levels(&self) -> Vec<Symbol> {
        let mut out = self.trace_levels();
        self.visit(&mut |t| {
            if let Term::LevelCmp(a, _, b) = t {
                for r in [a, b] {
                    if let LevelRef::Named(l) = r {
                        if !out.contains(l) {
                            out.push(*l);
                        }
                    }
                }
            }
        });
        out
    }

    /// Checks the term is well-typed and uses only atoms legal in `ctx`.
    /// Returns the kind of the term.
    pub fn check(&self, ctx: TermContext) -> Result<Kind, String> {
        use TermContext::*;
        let need_int = |t: &Term| -> Result<(), String> {
            match t.check(ctx)? {
                Kind::Int => Ok(()),
                Kind::List => Err(format!("expected a scalar, found list `{}`", t)),
            }
        };
        let need_list = |t: &Term| -> Result<(), String> {
            match t.check(ctx)? {
                Kind::List => Ok(()),
                Kind::Int => Err(format!("expected a list, found scalar `{}`", t)),
            }
        };
        let forbid = |what: &str, ok: bool| -> Result<(), String> {
            if ok {
                Ok(())
            } else {
                Err(format!("`{}` is not allowed in {}", what, ctx.describe()))
            }
        };
        match self {
            Term::Const(_) => Ok(Kind::Int),
            Term::Var(x) => {
                forbid(x.as_str(), ctx != Hatch)?;
                Ok(Kind::Int)
            }
            Term::Unary(_, a) => need_int(a).map(|_| Kind::Int),
            Term::Binary(_, a, b) => {
                need_int(a)?;
                need_int(b)?;
                Ok(Kind::Int)
            }
            Term::Cond(c, a, b) => {
                need_int(c)?;
                need_int(a)?;
                need_int(b)?;
                Ok(Kind::Int)
            }
            Term::Apply(_, a) => need_int(a).map(|_| Kind::Int),
            Term::Held(..) => forbid("held", matches!(ctx, Annotation | Declass)).map(|_| Kind::Int),
            Term::Free(_) => forbid("free", matches!(ctx, Annotation | Declass)).map(|_| Kind::Int),
            Term::Trace(q, _) => forbid(q.name(), matches!(ctx, Annotation | Declass)).map(|_| Kind::Int),
            Term::NthInput(_, k) => {
                forbid("nthinput", matches!(ctx, Annotation | Declass))?;
                need_int(k).map(|_| Kind::Int)
            }
            Term::Inputs(_) => {
                forbid("inputs", matches!(ctx, Annotation | Declass)).map(|_| Kind::List)
            }
            Term::ListFn(_, l) => need_list(l).map(|_| Kind::Int),
            Term::Take(n, l) => {
                need_int(n)?;
                need_list(l).map(|_| Kind::List)
            }
            Term::Rev(l) => need_list(l).map(|_| Kind::List),
            Term::Vs => forbid("vs", ctx == Hatch).map(|_| Kind::List),
            Term::Released => forbid("v", ctx == Declass).map(|_| Kind::Int),
            Term::Ann => forbid("ann", ctx == Declass).map(|_| Kind::Int),
            Term::LevelCmp(..) => forbid("level comparison", ctx == Declass).map(|_| Kind::Int),
            Term::Pred(_, body) => body.check(ctx),
        }
    }
}

impl TermContext {
    fn describe(self) -> &'static str {
        match self {
            TermContext::Expr => "program expressions",
            TermContext::Annotation => "annotations",
            TermContext::Declass => "declassification predicates",
            TermContext::Hatch => "hatch expressions",
        }
    }
}

/// The facts a declassification predicate is evaluated against.
#[derive(Clone, Copy, Debug)]
pub struct DeclassFacts {
    pub src: Symbol,
    pub dst: Symbol,
    pub value: Value,
    pub ann: bool,
}

/// Everything a term may read. Missing parts make the corresponding atoms
/// fail with [`EvalError::MissingContext`].
#[derive(Clone, Copy)]
pub struct Scope<'a> {
    pub domain: Domain,
    pub tables: &'a Tables,
    pub mem: Option<&'a Memory>,
    pub locks: Option<&'a LockMap>,
    pub trace: Option<&'a Trace>,
    pub vs: Option<&'a [Value]>,
    pub declass: Option<DeclassFacts>,
    pub lattice: Option<&'a Lattice>,
}

impl<'a> Scope<'a> {
    pub fn new(domain: Domain, tables: &'a Tables) -> Scope<'a> {
        Scope {
            domain,
            tables,
            mem: None,
            locks: None,
            trace: None,
            vs: None,
            declass: None,
            lattice: None,
        }
    }

    pub fn with_mem(mut self, mem: &'a Memory) -> Self {
        self.mem = Some(mem);
        self
    }

    pub fn with_locks(mut self, locks: &'a LockMap) -> Self {
        self.locks = Some(locks);
        self
    }

    pub fn with_trace(mut self, trace: &'a Trace) -> Self {
        self.trace = Some(trace);
        self
    }

    pub fn with_vs(mut self, vs: &'a [Value]) -> Self {
        self.vs = Some(vs);
        self
    }

    pub fn with_declass(mut self, facts: DeclassFacts, lattice: &'a Lattice) -> Self {
        self.declass = Some(facts);
        self.lattice = Some(lattice);
        self
    }

    fn trace(&self) -> Result<&'a Trace, EvalError> {
        self.trace.ok_or(EvalError::MissingContext("the trace"))
    }

    fn level(&self, r: LevelRef) -> Result<Symbol, EvalError> {
        match r {
            LevelRef::Named(l) => Ok(l),
            LevelRef::Src => self.declass.map(|d| d.src).ok_or(EvalError::MissingContext("src")),
            LevelRef::Dst => self.declass.map(|d| d.dst).ok_or(EvalError::MissingContext("dst")),
        }
    }

    /// Evaluates a scalar term.
    pub fn eval(&self, t: &Term) -> Result<Value, EvalError> {
        let k = self.domain;
        Ok(match t {
            Term::Const(c) => *c,
            Term::Var(x) => {
                let mem = self.mem.ok_or(EvalError::MissingContext("memory"))?;
                mem.get(*x).ok_or(EvalError::UnboundVariable(*x))?
            }
            Term::Unary(UnOp::Neg, a) => k.wrap(-self.eval(a)?),
            Term::Unary(UnOp::Not, a) => from_bool(!truth(self.eval(a)?)),
            Term::Binary(op, a, b) => {
                let x = self.eval(a)?;
                // connectives short-circuit so that guarded partial terms work
                match op {
                    BinOp::And if !truth(x) => return Ok(0),
                    BinOp::Or if truth(x) => return Ok(1),
                    BinOp::Implies if !truth(x) => return Ok(1),
                    _ => {}
                }
                let y = self.eval(b)?;
                match op {
                    BinOp::Add => k.wrap(x + y),
                    BinOp::Sub => k.wrap(x - y),
                    BinOp::Mul => k.wrap(x * y),
                    BinOp::Div => {
                        if y == 0 {
                            0
                        } else {
                            k.wrap(x.div_euclid(y))
                        }
                    }
                    BinOp::Eq => from_bool(x == y),
                    BinOp::Ne => from_bool(x != y),
                    BinOp::Lt => from_bool(x < y),
                    BinOp::Le => from_bool(x <= y),
                    BinOp::Gt => from_bool(x > y),
                    BinOp::Ge => from_bool(x >= y),
                    BinOp::And | BinOp::Or | BinOp::Implies => from_bool(truth(y)),
                }
            }
            Term::Cond(c, a, b) => {
                if truth(self.eval(c)?) {
                    self.eval(a)?
                } else {
                    self.eval(b)?
                }
            }
            Term::Apply(name, a) => {
                let x = self.eval(a)?;
                self.tables.apply(*name, x)?
            }
            Term::Held(l, tid) => {
                let locks = self.locks.ok_or(EvalError::MissingContext("locks"))?;
                from_bool(locks.get(*l).ok_or(EvalError::UnknownLock(*l))? == Some(*tid))
            }
            Term::Free(l) => {
                let locks = self.locks.ok_or(EvalError::MissingContext("locks"))?;
                from_bool(locks.get(*l).ok_or(EvalError::UnknownLock(*l))?.is_none())
            }
            Term::Trace(q, lvl) => {
                let tr = self.trace()?;
                match q {
                    TraceQuery::LastInput => tr.last_of(EventKind::Input, *lvl).unwrap_or(0),
                    TraceQuery::LastOutput => tr.last_output(*lvl).unwrap_or(0),
                    TraceQuery::InputCount => k.wrap(tr.input_count(*lvl) as i64),
                }
            }
            Term::NthInput(lvl, idx) => {
                let i = self.eval(idx)?;
                let tr = self.trace()?;
                tr.inputs(*lvl).nth(i as usize).unwrap_or(0)
            }
            Term::ListFn(f, l) => {
                let xs = self.eval_list(l)?;
                list_fn(k, *f, &xs)
            }
            Term::Released => self.declass.map(|d| d.value).ok_or(EvalError::MissingContext("v"))?,
            Term::Ann => from_bool(self.declass.ok_or(EvalError::MissingContext("ann"))?.ann),
            Term::LevelCmp(a, op, b) => {
                let (a, b) = (self.level(*a)?, self.level(*b)?);
                let lat = self.lattice.ok_or(EvalError::MissingContext("the lattice"))?;
                from_bool(match op {
                    LevelOp::Eq => a == b,
                    LevelOp::Le => lat.leq(a, b),
                })
            }
            Term::Pred(_, body) => self.eval(body)?,
            Term::Inputs(_) | Term::Take(..) | Term::Rev(_) | Term::Vs => {
                return Err(EvalError::Type(format!("`{}` is a list", t)))
            }
        })
    }

    pub fn holds(&self, t: &Term) -> Result<bool, EvalError> {
        Ok(truth(self.eval(t)?))
    }

    /// Evaluates a list-valued term.
    pub fn eval_list(&self, t: &Term) -> Result<Vec<Value>, EvalError> {
        match t {
            Term::Inputs(lvl) => Ok(self.trace()?.inputs(*lvl).collect()),
            Term::Vs => Ok(self.vs.ok_or(EvalError::MissingContext("vs"))?.to_vec()),
            Term::Take(n, l) => {
                let n = self.eval(n)?.max(0) as usize;
                let mut xs = self.eval_list(l)?;
                xs.truncate(n);
                Ok(xs)
            }
            Term::Rev(l) => {
                let mut xs = self.eval_list(l)?;
                xs.reverse();
                Ok(xs)
            }
            Term::Pred(_, body) => self.eval_list(body),
            _ => Err(EvalError::Type(format!("`{}` is not a list", t))),
        }
    }
}

pub fn list_fn(k: Domain, f: ListFn, xs: &[Value]) -> Value {
    match f {
        ListFn::Len => k.wrap(xs.len() as i64),
        ListFn::Last => xs.last().copied().unwrap_or(0),
        ListFn::Sum => k.wrap(xs.iter().sum()),
        ListFn::Avg => {
            let n = k.wrap(xs.len() as i64);
            if n == 0 {
                0
            } else {
                k.wrap(xs.iter().sum()).div_euclid(n)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_term;
    use crate::semantics::state::{Event, LockMap, Memory, Trace};

    fn sym(s: &str) -> Symbol {
        Symbol::intern(s)
    }

    fn eval_with(src: &str, ctx: TermContext, f: impl FnOnce(Scope) -> Scope) -> Result<Value, EvalError> {
        let tables = Tables::default();
        let mut mem = Memory::zeroed(&[sym("x"), sym("y")]);
        mem.set(sym("x"), 3);
        mem.set(sym("y"), 2);
        let mut locks = LockMap::free(&[sym("m")]);
        locks.set(sym("m"), Some(1));
        let mut tr = Trace::default();
        for v in [4, 1, 3] {
            tr.push(Event::input(sym("top"), v));
        }
        let sc = Scope::new(Domain::new(5), &tables)
            .with_mem(&mem)
            .with_locks(&locks)
            .with_trace(&tr);
        f(sc).eval(&parse_term(src, ctx).unwrap())
    }

    fn ann(src: &str) -> Value {
        eval_with(src, TermContext::Annotation, |s| s).unwrap()
    }

    #[test]
    fn arithmetic_wraps_and_division_is_total() {
        assert_eq!(ann("x + y"), 0);
        assert_eq!(ann("y - x"), 4);
        assert_eq!(ann("x * x"), 4);
        assert_eq!(ann("x / y"), 1);
        assert_eq!(ann("x / 0"), 0);
        assert_eq!(ann("-x"), 2);
    }

    #[test]
    fn connectives_short_circuit() {
        assert_eq!(ann("false && nthinput(top, 9) = 1"), 0);
        assert_eq!(ann("x = 3 ==> y = 2"), 1);
        assert_eq!(ann("x = 2 ==> y = 9"), 1);
        assert_eq!(ann("!(x < y) || false"), 1);
        assert_eq!(ann("x > y ? x : y"), 3);
    }

    #[test]
    fn locks_and_trace_queries() {
        assert_eq!(ann("held(m, 1)"), 1);
        assert_eq!(ann("held(m, 0) || free(m)"), 0);
        assert_eq!(ann("lastinput(top)"), 3);
        assert_eq!(ann("lastinput(bot)"), 0);
        assert_eq!(ann("inputcount(top)"), 3);
        assert_eq!(ann("nthinput(top, 1)"), 1);
    }

    #[test]
    fn list_functions() {
        assert_eq!(ann("len(inputs(top))"), 3);
        assert_eq!(ann("sum(inputs(top))"), 3);
        // the average divides the wrapped sum by the wrapped length
        assert_eq!(ann("avg(inputs(top))"), 1);
        assert_eq!(ann("last(take(2, inputs(top)))"), 1);
        assert_eq!(ann("last(rev(inputs(top)))"), 4);
        assert_eq!(ann("avg(take(0, inputs(top)))"), 0);
        assert_eq!(list_fn(Domain::new(5), ListFn::Avg, &[1, 1, 1, 1, 1]), 0);
    }

    #[test]
    fn missing_context_is_an_error() {
        let e = parse_term("x", TermContext::Expr).unwrap();
        let tables = Tables::default();
        assert!(Scope::new(Domain::new(2), &tables).eval(&e).is_err());
        assert!(eval_with("inputs(top)", TermContext::Annotation, |s| s).is_err());
    }
}
