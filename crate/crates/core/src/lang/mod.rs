//! The annotated concurrent language: syntax trees, parsing and printing.

pub mod ast;
pub mod lexer;
pub mod parser;
pub mod printer;
pub mod term;

pub use ast::{Ann, Command, PredDef, Program, StmtId};
pub use parser::{parse_program, parse_term};
pub use printer::print_program;
pub use term::{Term, TermContext};
