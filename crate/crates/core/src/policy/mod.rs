//! Security policies: lattice, labeling, function tables, declassification
//! predicate and delimited-release escape hatches.

pub mod lattice;
mod parse;

use std::rc::Rc;

use crate::error::EvalError;
use crate::lang::term::Term;
use crate::symbol::Symbol;
use crate::value::{Domain, Value};

pub use lattice::Lattice;
pub use parse::{parse_policy, print_policy};

/// Partial map from variables to levels.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Labeling {
    pub entries: Vec<(Symbol, Symbol)>,
}

impl Labeling {
    pub fn get(&self, x: Symbol) -> Option<Symbol> {
        self.entries.iter().find(|(y, _)| *y == x).map(|(_, l)| *l)
    }

    pub fn set(&mut self, x: Symbol, l: Symbol) {
        match self.entries.iter_mut().find(|(y, _)| *y == x) {
            Some(e) => e.1 = l,
            None => self.entries.push((x, l)),
        }
    }

    /// Whether `x` is labeled at or below `alvl`.
    pub fn visible(&self, lat: &Lattice, x: Symbol, alvl: Symbol) -> bool {
        self.get(x).is_some_and(|l| lat.leq(l, alvl))
    }
}

/// A finite function over the value domain, such as a signature check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FnTable {
    pub name: Symbol,
    pub entries: Vec<Value>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Tables {
    pub tables: Vec<FnTable>,
}

impl Tables {
    pub fn get(&self, name: Symbol) -> Option<&FnTable> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn apply(&self, name: Symbol, v: Value) -> Result<Value, EvalError> {
        let t = self.get(name).ok_or(EvalError::UnknownTable(name))?;
        usize::try_from(v)
            .ok()
            .and_then(|i| t.entries.get(i).copied())
            .ok_or(EvalError::TableOutOfRange(name, v))
    }

    /// Checks every table is total on `domain` with results in `domain`.
    pub fn check_total(&self, domain: Domain) -> Result<(), String> {
        for t in &self.tables {
            for v in domain.values() {
                match t.entries.get(v as usize) {
                    Some(r) if domain.contains(*r) => {}
                    Some(r) => {
                        return Err(format!(
                            "table {} maps {} to {}, outside the domain of size {}",
                            t.name,
                            v,
                            r,
                            domain.size()
                        ))
                    }
                    None => {
                        return Err(format!(
                            "table {} has no entry for {} (domain size {})",
                            t.name,
                            v,
                            domain.size()
                        ))
                    }
                }
            }
        }
        Ok(())
    }
}

/// An escape hatch: releasing `expr` applied to the inputs consumed at
/// `src` is permitted towards `dst`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hatch {
    pub src: Symbol,
    pub dst: Symbol,
    pub expr: Rc<Term>,
}

/// The declassification predicate in force.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DeclassPredicate {
    /// A predicate written in the declassification DSL.
    Dsl(Rc<Term>),
    /// The predicate induced by a set of escape hatches.
    Encoded(Vec<Hatch>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Policy {
    pub lattice: Lattice,
    pub labels: Labeling,
    pub tables: Tables,
    pub declass: Option<Rc<Term>>,
    pub hatches: Vec<Hatch>,
}

impl Policy {
    /// The DSL predicate when one is given, else the hatch encoding.
    pub fn declass_predicate(&self) -> DeclassPredicate {
        match &self.declass {
            Some(d) => DeclassPredicate::Dsl(d.clone()),
            None => DeclassPredicate::Encoded(self.hatches.clone()),
        }
    }

    /// The hatch encoding regardless of any DSL predicate.
    pub fn encoded(&self) -> DeclassPredicate {
        DeclassPredicate::Encoded(self.hatches.clone())
    }

    pub fn hatches_for(&self, src: Symbol, dst: Symbol) -> impl Iterator<Item = &Hatch> {
        self.hatches
            .iter()
            .filter(move |h| h.src == src && h.dst == dst)
    }

    /// The join of the labels of the variables of `e`; constants count as
    /// the bottom level. `None` when some variable is unlabeled.
    pub fn expr_label(&self, e: &Term) -> Option<Symbol> {
        let mut acc = self.lattice.bottom();
        for x in e.vars() {
            acc = self.lattice.lub(acc, self.labels.get(x)?)?;
        }
        Some(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_term;
    use crate::lang::TermContext;

    fn pol() -> Policy {
        let mut labels = Labeling::default();
        labels.set("topbuf".into(), "top".into());
        labels.set("botbuf".into(), "bot".into());
        Policy {
            lattice: Lattice::two_point(),
            labels,
            tables: Tables::default(),
            declass: None,
            hatches: Vec::new(),
        }
    }

    #[test]
    fn expr_label_joins_and_is_partial() {
        let p = pol();
        let e = |s: &str| parse_term(s, TermContext::Expr).unwrap();
        assert_eq!(p.expr_label(&e("topbuf")), Some("top".into()));
        assert_eq!(p.expr_label(&e("5")), Some("bot".into()));
        assert_eq!(p.expr_label(&e("botbuf + 1")), Some("bot".into()));
        assert_eq!(p.expr_label(&e("botbuf + topbuf")), Some("top".into()));
        assert_eq!(p.expr_label(&e("buf + botbuf")), None);
    }

    #[test]
    fn table_totality() {
        let t = Tables {
            tables: vec![FnTable {
                name: "CK".into(),
                entries: vec![1, 0, 1],
            }],
        };
        assert!(t.check_total(Domain::new(3)).is_ok());
        assert!(t.check_total(Domain::new(4)).is_err());
        assert!(t.check_total(Domain::new(1)).is_err());
        assert_eq!(t.apply("CK".into(), 2), Ok(1));
    }
}
