//! A program bound to a policy, plus the exploration bounds used by every
//! bounded check.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lang::ast::{Command, Program};
use crate::lang::term::Term;
use crate::policy::Policy;
use crate::symbol::Symbol;
use crate::value::Domain;

/// Exploration bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Bounds {
    pub domain: Domain,
    /// Length of the explicit prefix of every input stream.
    pub prefix: usize,
    /// Length of the schedules explored.
    pub sched: usize,
    /// Maximum number of states any single enumeration may visit.
    pub cap: u64,
    /// Longest input history enumerated when discharging annotations;
    /// defaults to 3.
    pub history: Option<usize>,
}

impl Bounds {
    pub fn new(domain: i64, prefix: usize, sched: usize) -> Bounds {
        Bounds {
            domain: Domain::new(domain),
            prefix,
            sched,
            ..Bounds::default()
        }
    }

    pub fn history(&self) -> usize {
        self.history.unwrap_or(3)
    }

    pub fn with_cap(mut self, cap: u64) -> Bounds {
        self.cap = cap;
        self
    }

    /// Applies `key=value` overrides separated by commas.
    pub fn apply(&mut self, spec: &str) -> Result<()> {
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Bounds(format!("expected key=value, found `{}`", item)))?;
            let n: u64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Bounds(format!("`{}` is not a natural number", v)))?;
            match k.trim() {
                "domain" => {
                    if n == 0 {
                        return Err(Error::Bounds("domain must be positive".into()));
                    }
                    self.domain = Domain::new(n as i64);
                }
                "prefix" => self.prefix = n as usize,
                "sched" => self.sched = n as usize,
                "cap" => {
                    if n == 0 {
                        return Err(Error::Bounds("cap must be positive".into()));
                    }
                    self.cap = n;
                }
                "history" => self.history = Some(n as usize),
                other => return Err(Error::Bounds(format!("unknown bound `{}`", other))),
            }
        }
        Ok(())
    }
}

impl Default for Bounds {
    fn default() -> Bounds {
        Bounds {
            domain: Domain::default(),
            prefix: 2,
            sched: 8,
            cap: 50_000_000,
            history: None,
        }
    }
}

impl FromStr for Bounds {
    type Err = Error;

    fn from_str(s: &str) -> Result<Bounds> {
        let mut b = Bounds::default();
        b.apply(s)?;
        Ok(b)
    }
}

impl fmt::Display for Bounds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "domain={},prefix={},sched={},cap={}",
            self.domain.size(),
            self.prefix,
            self.sched,
            self.cap
        )?;
        if let Some(h) = self.history {
            write!(f, ",history={}", h)?;
        }
        Ok(())
    }
}

/// A program together with the policy it is checked against. Construction
/// validates that every name the two mention is declared.
#[derive(Clone, Debug)]
pub struct System {
    pub program: Program,
    pub policy: Policy,
}

impl System {
    pub fn new(program: Program, policy: Policy) -> Result<System> {
        let sys = System { program, policy };
        sys.validate()?;
        Ok(sys)
    }

    fn validate(&self) -> Result<()> {
        let prog = &self.program;
        let pol = &self.policy;
        let bad = |m: String| Err(Error::Program(m));
        for &(x, _) in &pol.labels.entries {
            if !prog.vars.contains(&x) {
                return bad(format!("labeled variable `{}` is not declared", x));
            }
        }
        let level = |l: Symbol| -> Result<()> {
            if pol.lattice.contains(l) {
                Ok(())
            } else {
                Err(Error::Program(format!("unknown level `{}`", l)))
            }
        };
        let table = |e: &Term| -> Result<()> {
            for t in e.tables() {
                if pol.tables.get(t).is_none() {
                    return Err(Error::Program(format!("unknown table `{}`", t)));
                }
            }
            Ok(())
        };
        let ann = |a: &Term| -> Result<()> {
            a.levels().into_iter().try_for_each(level)?;
            table(a)
        };
        if let Some(i) = &prog.init {
            ann(i)?;
        }
        for d in &prog.preds {
            ann(&d.body)?;
        }
        let mut result = Ok(());
        for t in &prog.threads {
            t.visit(&mut |c| {
                if result.is_err() {
                    return;
                }
                result = self.validate_command(c, &level, &table, &ann);
            });
        }
        result?;
        if let Some(d) = &pol.declass {
            for x in d.vars() {
                if !prog.vars.contains(&x) {
                    return bad(format!("declassification predicate reads undeclared `{}`", x));
                }
            }
            for l in d.locks() {
                if !prog.locks.contains(&l) {
                    return bad(format!("declassification predicate uses undeclared lock `{}`", l));
                }
            }
        }
        Ok(())
    }

    fn validate_command(
        &self,
        c: &Command,
        level: &impl Fn(Symbol) -> Result<()>,
        table: &impl Fn(&Term) -> Result<()>,
        ann: &impl Fn(&Term) -> Result<()>,
    ) -> Result<()> {
        if let Some(a) = c.own_ann() {
            ann(a)?;
        }
        match c {
            Command::Assign { expr, .. } => table(expr),
            Command::DAssign { var, expr, .. } => {
                if self.policy.labels.get(*var).is_none() {
                    return Err(Error::Program(format!(
                        "declassifying assignment to unlabeled variable `{}`",
                        var
                    )));
                }
                table(expr)
            }
            Command::Output { level: l, expr, .. } | Command::DOutput { level: l, expr, .. } => {
                level(*l)?;
                table(expr)
            }
            Command::Input { level: l, .. } => level(*l),
            Command::If { cond, .. } => table(cond),
            Command::While { cond, inv, .. } => {
                ann(inv)?;
                table(cond)
            }
            _ => Ok(()),
        }
    }

    /// Checks the system is meaningful under `bounds`: tables are total on
    /// the domain and program constants lie inside it.
    pub fn check_bounds(&self, bounds: &Bounds) -> Result<()> {
        self.policy
            .tables
            .check_total(bounds.domain)
            .map_err(Error::Bounds)?;
        let k = bounds.domain;
        let mut bad = None;
        let mut scan = |e: &Term| {
            e.visit(&mut |t| {
                if let Term::Const(c) = t {
                    if !k.contains(*c) && bad.is_none() {
                        bad = Some(*c);
                    }
                }
            })
        };
        for t in &self.program.threads {
            t.visit(&mut |c| match c {
                Command::Assign { expr, .. }
                | Command::DAssign { expr, .. }
                | Command::Output { expr, .. }
                | Command::DOutput { expr, .. } => scan(expr),
                Command::If { cond, .. } | Command::While { cond, .. } => scan(cond),
                _ => {}
            });
        }
        if let Some(c) = bad {
            return Err(Error::Bounds(format!(
                "program constant {} lies outside the domain of size {}",
                c,
                k.size()
            )));
        }
        Ok(())
    }

    pub fn thread_count(&self) -> usize {
        self.program.threads.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_parse_and_print() {
        let b: Bounds = "domain=3,prefix=2,sched=8,cap=1000".parse().unwrap();
        assert_eq!(b.domain.size(), 3);
        assert_eq!((b.prefix, b.sched, b.cap), (2, 8, 1000));
        assert_eq!(b.history(), 3);
        assert_eq!(b.to_string().parse::<Bounds>().unwrap(), b);
        assert!("domain=0".parse::<Bounds>().is_err());
        assert!("depth=3".parse::<Bounds>().is_err());
        assert!("domain".parse::<Bounds>().is_err());
    }
}
