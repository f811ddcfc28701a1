//! Verdicts, witnesses and their replay.

use std::fmt;

use serde::Serialize;

use crate::equivalence::{project, visible};
use crate::error::Result;
use crate::lang::term::Scope;
use crate::semantics::state::{Environment, GlobalState, LockMap, Memory, Stream, Trace};
use crate::semantics::{run, GlobalConfig};
use crate::symbol::Symbol;
use crate::system::{Bounds, System};
use crate::value::{ThreadId, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Property {
    SystemSecurity,
    DelimitedRelease,
    NoSecretBranching,
    Embedding,
    AnnotationMonitor,
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Property::SystemSecurity => "system-security",
            Property::DelimitedRelease => "delimited-release",
            Property::NoSecretBranching => "no-secret-branching",
            Property::Embedding => "embedding",
            Property::AnnotationMonitor => "annotation-monitor",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Secure,
    Violation,
    BoundExhausted,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Secure => "secure",
            Verdict::Violation => "violation",
            Verdict::BoundExhausted => "bound-exhausted",
        })
    }
}

/// A bounded initial state: full memory and the explicit stream prefixes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InitialState {
    pub mem: Vec<(Symbol, Value)>,
    pub streams: Vec<(Symbol, Vec<Value>)>,
}

impl InitialState {
    pub fn to_state(&self, sys: &System) -> GlobalState {
        let levels = sys.policy.lattice.levels().to_vec();
        let mut env = Environment::constant(&levels, 0);
        for (l, vs) in &self.streams {
            if let Some(s) = env.stream_mut(*l) {
                *s = Stream::new(vs.clone(), 0);
            }
        }
        GlobalState {
            env,
            mem: Memory { slots: self.mem.clone() },
            locks: LockMap::free(&sys.program.locks),
            trace: Trace::default(),
        }
    }
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mem: Vec<String> = self.mem.iter().map(|(x, v)| format!("{}={}", x, v)).collect();
        let env: Vec<String> = self
            .streams
            .iter()
            .map(|(l, vs)| format!("{}:{:?}", l, vs))
            .collect();
        write!(f, "[{}] streams [{}]", mem.join(" "), env.join(" "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessKind {
    /// A visible declassification the predicate does not permit.
    DeclassDenied,
    /// A visible event after which some attacker-equivalent run is ruled out.
    UncertaintyShrinks,
    /// Two agreeing runs whose visible traces are not prefix-related.
    TracesDiverge,
    /// A configuration of one run never matched by the other's code and counts.
    CodeDiverges,
    /// An annotation that fails in a reachable configuration.
    AnnotationFails,
    /// The bounded schedule ended before a matching event could appear.
    Undetermined,
}

#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub kind: WitnessKind,
    pub initial: InitialState,
    pub other: Option<InitialState>,
    pub schedule: Vec<ThreadId>,
    /// Index of the step (0-based) that produced `event`, or of the
    /// configuration an annotation failed in.
    pub step: usize,
    pub event: Option<String>,
    pub explanation: String,
}

impl Witness {
    /// Re-executes the witness through the semantics and confirms it.
    pub fn replay(&self, sys: &System, bounds: &Bounds, alvl: Symbol) -> Result<bool> {
        let k = bounds.domain;
        let runs = |init: &InitialState| {
            run(sys, k, GlobalConfig::new(sys, init.to_state(sys), self.schedule.clone()))
        };
        let (cfgs, recs) = runs(&self.initial)?;
        let lat = &sys.policy.lattice;
        Ok(match self.kind {
            WitnessKind::DeclassDenied | WitnessKind::UncertaintyShrinks | WitnessKind::Undetermined => {
                let here = recs
                    .get(self.step)
                    .and_then(|r| r.event.as_ref())
                    .map(|e| e.to_string());
                if here.is_none() || here != self.event {
                    return Ok(false);
                }
                match (&self.other, self.kind) {
                    (Some(o), WitnessKind::UncertaintyShrinks) => {
                        // the other run matches up to the event, then differs
                        let mine = project(lat, alvl, &cfgs[self.step + 1].state.trace)
                            .into_iter()
                            .cloned()
                            .collect::<Vec<_>>();
                        let (ocfgs, _) = runs(o)?;
                        let theirs: Vec<_> = project(lat, alvl, &ocfgs.last().unwrap().state.trace)
                            .into_iter()
                            .cloned()
                            .collect();
                        let n = mine.len() - 1;
                        theirs.len() > n && theirs[..n] == mine[..n] && theirs[n] != mine[n]
                    }
                    _ => true,
                }
            }
            WitnessKind::TracesDiverge => {
                let Some(o) = &self.other else { return Ok(false) };
                let (ocfgs, _) = runs(o)?;
                let a = project(lat, alvl, &cfgs.last().unwrap().state.trace);
                let b = project(lat, alvl, &ocfgs.last().unwrap().state.trace);
                let n = a.len().min(b.len());
                a[..n] != b[..n]
            }
            WitnessKind::CodeDiverges => {
                let Some(o) = &self.other else { return Ok(false) };
                let (ocfgs, _) = runs(o)?;
                let y = &cfgs[self.step];
                let snap = |c: &GlobalConfig| {
                    let vis = c.state.trace.events().iter().filter(|e| visible(lat, alvl, e)).count();
                    let counts: Vec<usize> =
                        lat.levels().iter().map(|l| c.state.trace.input_count(*l)).collect();
                    (c.locals.clone(), vis, counts)
                };
                let target = snap(y);
                !ocfgs.iter().any(|c| snap(c) == target)
            }
            WitnessKind::AnnotationFails => {
                let Some(c) = cfgs.get(self.step) else { return Ok(false) };
                let sc = Scope::new(k, &sys.policy.tables)
                    .with_mem(&c.state.mem)
                    .with_locks(&c.state.locks)
                    .with_trace(&c.state.trace);
                let mut failed = false;
                for l in &c.locals {
                    if let Some(a) = l.entry_ann() {
                        failed |= !sc.holds(a)?;
                    }
                }
                failed
            }
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Stats {
    pub initial_states: u64,
    pub schedules: u64,
    pub nodes: u64,
    pub steps: u64,
    pub merged: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SecurityReport {
    pub property: Property,
    pub level: Symbol,
    pub verdict: Verdict,
    pub witnesses: Vec<Witness>,
    pub stats: Stats,
    pub notice: Option<String>,
}

impl SecurityReport {
    pub fn secure(&self) -> bool {
        self.verdict == Verdict::Secure
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{} at {}: {}", self.property, self.level, self.verdict);
        if let Some(n) = &self.notice {
            s.push_str(&format!(" ({})", n));
        }
        s
    }
}

impl fmt::Display for SecurityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.summary())?;
        writeln!(
            f,
            "  explored {} initial states, {} schedules, {} steps",
            self.stats.initial_states, self.stats.schedules, self.stats.steps
        )?;
        for w in &self.witnesses {
            writeln!(f, "  witness ({:?}): {}", w.kind, w.explanation)?;
            writeln!(f, "    initial {}", w.initial)?;
            if let Some(o) = &w.other {
                writeln!(f, "    other   {}", o)?;
            }
            writeln!(f, "    schedule {:?}, step {}", w.schedule, w.step)?;
            if let Some(e) = &w.event {
                writeln!(f, "    event {}", e)?;
            }
        }
        Ok(())
    }
}
