//! Global states: input environment, memory, lock map and trace.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::rc::Rc;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::lang::term::Term;
use crate::symbol::Symbol;
use crate::value::{ThreadId, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Input,
    Output,
    Declass,
}

/// A trace event. Output and declassification events remember the
/// expression that produced them, and an observer of the event sees it too:
/// two events are equal only if their expressions are syntactically equal.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Event {
    pub kind: EventKind,
    pub level: Symbol,
    pub value: Value,
    pub expr: Option<Rc<Term>>,
}

impl Event {
    pub fn input(level: Symbol, value: Value) -> Event {
        Event {
            kind: EventKind::Input,
            level,
            value,
            expr: None,
        }
    }

    pub fn output(level: Symbol, value: Value, expr: Rc<Term>) -> Event {
        Event {
            kind: EventKind::Output,
            level,
            value,
            expr: Some(expr),
        }
    }

    pub fn declass(level: Symbol, value: Value, expr: Rc<Term>) -> Event {
        Event {
            kind: EventKind::Declass,
            level,
            value,
            expr: Some(expr),
        }
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            EventKind::Input => "in",
            EventKind::Output => "out",
            EventKind::Declass => "declass",
        };
        match &self.expr {
            Some(e) => write!(f, "{}<{},{},{}>", k, self.level, self.value, e),
            None => write!(f, "{}<{},{}>", k, self.level, self.value),
        }
    }
}

impl Serialize for Event {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Event", 4)?;
        st.serialize_field("kind", &self.kind)?;
        st.serialize_field("level", &self.level)?;
        st.serialize_field("value", &self.value)?;
        st.serialize_field("expr", &self.expr.as_ref().map(|e| e.to_string()))?;
        st.end()
    }
}

/// The ordered event history of a run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct Trace(pub Vec<Event>);

impl Trace {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, e: Event) {
        self.0.push(e);
    }

    pub fn events(&self) -> &[Event] {
        &self.0
    }

    pub fn inputs(&self, level: Symbol) -> impl Iterator<Item = Value> + '_ {
        self.0
            .iter()
            .filter(move |e| e.kind == EventKind::Input && e.level == level)
            .map(|e| e.value)
    }

    pub fn input_count(&self, level: Symbol) -> usize {
        self.inputs(level).count()
    }

    pub fn last_of(&self, kind: EventKind, level: Symbol) -> Option<Value> {
        self.0
            .iter()
            .rev()
            .find(|e| e.kind == kind && e.level == level)
            .map(|e| e.value)
    }

    pub fn last_output(&self, level: Symbol) -> Option<Value> {
        self.last_of(EventKind::Output, level)
    }

    pub fn is_prefix_of(&self, other: &Trace) -> bool {
        other.0.len() >= self.0.len() && other.0[..self.0.len()] == self.0[..]
    }
}

/// An infinite input stream: an explicit prefix followed by a constant
/// default. Equality is extensional.
#[derive(Clone, Debug, Serialize)]
pub struct Stream {
    pub prefix: Vec<Value>,
    pub default: Value,
}

impl Stream {
    pub fn new(prefix: Vec<Value>, default: Value) -> Stream {
        Stream { prefix, default }
    }

    pub fn constant(default: Value) -> Stream {
        Stream::new(Vec::new(), default)
    }

    pub fn head(&self) -> Value {
        self.prefix.first().copied().unwrap_or(self.default)
    }

    /// Removes and returns the head.
    pub fn pop(&mut self) -> Value {
        if self.prefix.is_empty() {
            self.default
        } else {
            self.prefix.remove(0)
        }
    }

    pub fn nth(&self, i: usize) -> Value {
        self.prefix.get(i).copied().unwrap_or(self.default)
    }

    fn canonical_len(&self) -> usize {
        let mut n = self.prefix.len();
        while n > 0 && self.prefix[n - 1] == self.default {
            n -= 1;
        }
        n
    }
}

impl PartialEq for Stream {
    fn eq(&self, other: &Stream) -> bool {
        let n = self.canonical_len();
        self.default == other.default
            && n == other.canonical_len()
            && self.prefix[..n] == other.prefix[..n]
    }
}

impl Eq for Stream {}

impl Hash for Stream {
    fn hash<H: Hasher>(&self, h: &mut H) {
        let n = self.canonical_len();
        self.prefix[..n].hash(h);
        self.default.hash(h);
    }
}

/// One stream per security level, in lattice declaration order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Environment {
    pub streams: Vec<(Symbol, Stream)>,
}

impl Environment {
    pub fn constant(levels: &[Symbol], default: Value) -> Environment {
        Environment {
            streams: levels.iter().map(|&l| (l, Stream::constant(default))).collect(),
        }
    }

    pub fn stream(&self, level: Symbol) -> Option<&Stream> {
        self.streams.iter().find(|(l, _)| *l == level).map(|(_, s)| s)
    }

    pub fn stream_mut(&mut self, level: Symbol) -> Option<&mut Stream> {
        self.streams
            .iter_mut()
            .find(|(l, _)| *l == level)
            .map(|(_, s)| s)
    }
}

/// Variable valuation in declaration order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Memory {
    pub slots: Vec<(Symbol, Value)>,
}

impl Memory {
    pub fn zeroed(vars: &[Symbol]) -> Memory {
        Memory {
            slots: vars.iter().map(|&x| (x, 0)).collect(),
        }
    }

    #[inline]
    pub fn get(&self, x: Symbol) -> Option<Value> {
        self.slots.iter().find(|(y, _)| *y == x).map(|(_, v)| *v)
    }

    pub fn set(&mut self, x: Symbol, v: Value) {
        match self.slots.iter_mut().find(|(y, _)| *y == x) {
            Some(slot) => slot.1 = v,
            None => self.slots.push((x, v)),
        }
    }
}

/// Lock ownership in declaration order; `None` means free.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct LockMap {
    pub slots: Vec<(Symbol, Option<ThreadId>)>,
}

impl LockMap {
    pub fn free(locks: &[Symbol]) -> LockMap {
        LockMap {
            slots: locks.iter().map(|&l| (l, None)).collect(),
        }
    }

    pub fn get(&self, l: Symbol) -> Option<Option<ThreadId>> {
        self.slots.iter().find(|(m, _)| *m == l).map(|(_, o)| *o)
    }

    pub fn set(&mut self, l: Symbol, owner: Option<ThreadId>) {
        if let Some(slot) = self.slots.iter_mut().find(|(m, _)| *m == l) {
            slot.1 = owner;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct GlobalState {
    pub env: Environment,
    pub mem: Memory,
    pub locks: LockMap,
    pub trace: Trace,
}

impl GlobalState {
    /// A short stable digest used in trace dumps.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (l, s) in &self.env.streams {
            h.update(format!("{}:{:?}/{};", l, &s.prefix[..s.canonical_len()], s.default));
        }
        for (x, v) in &self.mem.slots {
            h.update(format!("{}={};", x, v));
        }
        for (l, o) in &self.locks.slots {
            h.update(format!("{}@{:?};", l, o));
        }
        for e in &self.trace.0 {
            h.update(format!("{};", e));
        }
        hex::encode(&h.finalize()[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_equality_is_extensional() {
        let a = Stream::new(vec![1, 0, 0], 0);
        let b = Stream::new(vec![1], 0);
        assert_eq!(a, b);
        assert_ne!(a, Stream::new(vec![1], 1));
        let mut c = b.clone();
        assert_eq!(c.pop(), 1);
        assert_eq!(c.pop(), 0);
        assert_eq!(c, Stream::constant(0));
    }

    #[test]
    fn trace_queries() {
        let bot = Symbol::intern("bot");
        let top = Symbol::intern("top");
        let mut t = Trace::default();
        t.push(Event::input(top, 3));
        t.push(Event::input(bot, 1));
        t.push(Event::input(top, 2));
        assert_eq!(t.inputs(top).collect::<Vec<_>>(), vec![3, 2]);
        assert_eq!(t.input_count(bot), 1);
        assert_eq!(t.last_of(EventKind::Input, top), Some(2));
        assert_eq!(t.last_output(top), None);
    }
}
