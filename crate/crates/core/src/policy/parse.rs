//! Policy file syntax.
//!
//! ```text
//! lattice { levels bot top; bot <= top; }
//! labels { x: bot; h: top; }
//! tables { CK = [1, 0, 1]; }
//! declass { v = lastoutput(top) && lastinput(bot) = 1 }
//! hatches { top -> bot: last(vs); }
//! ```

use std::fmt::Write;

use crate::error::{Error, ParseError, Result};
use crate::lang::lexer::{describe, Cursor};
use crate::lang::parser::TermParser;
use crate::lang::printer::ann_str;
use crate::lang::term::TermContext;
use crate::policy::{FnTable, Hatch, Labeling, Lattice, Policy, Tables};
use crate::symbol::Symbol;

fn sym(cur: &mut Cursor) -> std::result::Result<Symbol, ParseError> {
    Ok(Symbol::intern(&cur.ident()?))
}

pub fn parse_policy(src: &str) -> Result<Policy> {
    let mut cur = Cursor::new(src)?;
    let mut lattice = None;
    let mut labels = Labeling::default();
    let mut tables = Tables::default();
    let mut declass = None;
    let mut hatches = Vec::new();
    while !cur.at_eof() {
        let pos = cur.here();
        let section = cur.ident()?;
        cur.expect_punct("{")?;
        match section.as_str() {
            "lattice" => {
                let mut levels = Vec::new();
                let mut edges = Vec::new();
                while !cur.eat_punct("}") {
                    if cur.eat_keyword("levels") {
                        while !cur.eat_punct(";") {
                            levels.push(sym(&mut cur)?);
                        }
                    } else {
                        let a = sym(&mut cur)?;
                        cur.expect_punct("<=")?;
                        let b = sym(&mut cur)?;
                        cur.expect_punct(";")?;
                        edges.push((a, b));
                    }
                }
                lattice = Some(Lattice::new(levels, edges)?);
            }
            "labels" => {
                while !cur.eat_punct("}") {
                    let p = cur.here();
                    let x = sym(&mut cur)?;
                    cur.expect_punct(":")?;
                    let l = sym(&mut cur)?;
                    cur.expect_punct(";")?;
                    if labels.get(x).is_some() {
                        return Err(ParseError::new(p.0, p.1, format!("`{}` labeled twice", x)).into());
                    }
                    labels.set(x, l);
                }
            }
            "tables" => {
                while !cur.eat_punct("}") {
                    let name = sym(&mut cur)?;
                    cur.expect_punct("=")?;
                    cur.expect_punct("[")?;
                    let mut entries = Vec::new();
                    while !cur.eat_punct("]") {
                        if !entries.is_empty() {
                            cur.expect_punct(",")?;
                        }
                        entries.push(cur.int()?);
                    }
                    cur.expect_punct(";")?;
                    tables.tables.push(FnTable { name, entries });
                }
            }
            "declass" => {
                declass = Some(TermParser::new(TermContext::Declass).parse(&mut cur)?);
                cur.expect_punct("}")?;
            }
            "hatches" => {
                while !cur.eat_punct("}") {
                    let src = sym(&mut cur)?;
                    cur.expect_punct("->")?;
                    let dst = sym(&mut cur)?;
                    cur.expect_punct(":")?;
                    let expr = TermParser::new(TermContext::Hatch).parse(&mut cur)?;
                    cur.expect_punct(";")?;
                    hatches.push(Hatch { src, dst, expr });
                }
            }
            other => {
                return Err(ParseError::new(pos.0, pos.1, format!("unknown section `{}`", other)).into());
            }
        }
    }
    let lattice = lattice.ok_or_else(|| Error::Policy("missing `lattice` section".into()))?;
    let check_level = |l: Symbol| {
        if lattice.contains(l) {
            Ok(())
        } else {
            Err(Error::Policy(format!("unknown level `{}`", l)))
        }
    };
    for &(_, l) in &labels.entries {
        check_level(l)?;
    }
    for h in &hatches {
        check_level(h.src)?;
        check_level(h.dst)?;
    }
    if let Some(d) = &declass {
        for l in d.levels() {
            check_level(l)?;
        }
    }
    for (i, t) in tables.tables.iter().enumerate() {
        if tables.tables[..i].iter().any(|u| u.name == t.name) {
            return Err(Error::Policy(format!("table `{}` defined twice", t.name)));
        }
    }
    let used_tables = declass
        .iter()
        .flat_map(|d| d.tables())
        .chain(hatches.iter().flat_map(|h| h.expr.tables()));
    for t in used_tables {
        if tables.get(t).is_none() {
            return Err(Error::Policy(format!("unknown table `{}`", t)));
        }
    }
    if !cur.at_eof() {
        return Err(cur.error(format!("unexpected {}", describe(cur.peek()))).into());
    }
    Ok(Policy {
        lattice,
        labels,
        tables,
        declass,
        hatches,
    })
}

/// Canonical rendering; `parse_policy(print_policy(p)) == p`.
pub fn print_policy(p: &Policy) -> String {
    let mut out = String::new();
    out.push_str("lattice {\n  levels");
    for l in p.lattice.levels() {
        let _ = write!(out, " {}", l);
    }
    out.push_str(";\n");
    for (a, b) in p.lattice.edges() {
        let _ = writeln!(out, "  {} <= {};", a, b);
    }
    out.push_str("}\n");
    if !p.labels.entries.is_empty() {
        out.push_str("labels {\n");
        for (x, l) in &p.labels.entries {
            let _ = writeln!(out, "  {}: {};", x, l);
        }
        out.push_str("}\n");
    }
    if !p.tables.tables.is_empty() {
        out.push_str("tables {\n");
        for t in &p.tables.tables {
            let entries: Vec<String> = t.entries.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "  {} = [{}];", t.name, entries.join(", "));
        }
        out.push_str("}\n");
    }
    if let Some(d) = &p.declass {
        let _ = writeln!(out, "declass {{\n  {}\n}}", ann_str(d));
    }
    if !p.hatches.is_empty() {
        out.push_str("hatches {\n");
        for h in &p.hatches {
            let _ = writeln!(out, "  {} -> {}: {};", h.src, h.dst, h.expr);
        }
        out.push_str("}\n");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = "
        lattice { levels bot top; bot <= top; }
        labels { x: bot; h: top; }
        tables { CK = [1, 0, 1]; }
        declass { src <= top && v = lastinput(bot) }
        hatches { top -> bot: len(vs) != 0 ? CK(last(vs)) : 0; }
    ";

    #[test]
    fn round_trip() {
        let p = parse_policy(SRC).unwrap();
        let text = print_policy(&p);
        let q = parse_policy(&text).unwrap();
        assert_eq!(p, q);
        assert_eq!(text, print_policy(&q));
    }

    #[test]
    fn rejects_unknown_names() {
        assert!(parse_policy("lattice { levels bot; } labels { x: top; }").is_err());
        assert!(parse_policy("lattice { levels bot; } hatches { bot -> bot: F(last(vs)); }").is_err());
        assert!(parse_policy("labels { x: bot; }").is_err());
    }
}
