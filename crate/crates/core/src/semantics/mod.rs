//! Small-step thread semantics and deterministic global scheduling.

pub mod state;
pub mod step;

pub use state::{Environment, Event, EventKind, GlobalState, LockMap, Memory, Stream, Trace};
pub use step::{global_step, local_step, run, step_in_place, GlobalConfig, Rule, StepRecord};
