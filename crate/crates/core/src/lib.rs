//! Verification toolkit for information-flow security of lock-based
//! shared-memory concurrent programs.
//!
//! Programs are annotated with functional-correctness assertions. The
//! toolkit checks the annotations (Owicki-Gries), checks every thread in a
//! compositional security logic that relies on them, and cross-validates
//! both against an exhaustive, bounded semantic oracle.

pub mod corpus;
pub mod declass;
pub mod equivalence;
pub mod knowledge;
pub mod error;
pub mod lang;
pub mod logic;
pub mod pipeline;
pub mod policy;
pub mod semantics;
pub mod space;
pub mod symbol;
pub mod system;
pub mod value;
pub mod verify;

pub use error::{Error, Result};
pub use symbol::Symbol;
pub use value::{Domain, ThreadId, Value};
