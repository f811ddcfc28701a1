//! Bounded integer values shared by every evaluator.

use serde::Serialize;

pub type Value = i64;
pub type ThreadId = usize;

/// The bounded value domain `[0, size)`. Arithmetic wraps modulo `size`
/// and booleans are encoded as `0`/`1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Domain {
    size: i64,
}

impl Domain {
    pub fn new(size: i64) -> Domain {
        assert!(size > 0, "domain size must be positive");
        Domain { size }
    }

    pub fn size(self) -> i64 {
        self.size
    }

    #[inline]
    pub fn wrap(self, v: i64) -> Value {
        v.rem_euclid(self.size)
    }

    pub fn values(self) -> impl Iterator<Item = Value> + Clone {
        0..self.size
    }

    pub fn contains(self, v: Value) -> bool {
        (0..self.size).contains(&v)
    }
}

impl Default for Domain {
    fn default() -> Self {
        Domain::new(4)
    }
}

#[inline]
pub fn truth(v: Value) -> bool {
    v == 1
}

#[inline]
pub fn from_bool(b: bool) -> Value {
    b as Value
}
