//! Replica identifiers and Lamport timestamps.

use std::fmt;

/// Opaque replica identifier, ordered by its canonical text form.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReplicaId(String);

impl ReplicaId {
    pub fn new(name: impl Into<String>) -> Self {
        ReplicaId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ReplicaId {
    fn from(s: &str) -> Self {
        ReplicaId::new(s)
    }
}

impl From<String> for ReplicaId {
    fn from(s: String) -> Self {
        ReplicaId(s)
    }
}

/// A Lamport timestamp `(counter, replica)`.
///
/// The derived ordering compares the counter first and breaks ties with the
/// replica id, which is exactly the total order used to place concurrent list
/// insertions. Field order matters here.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp {
    pub counter: u64,
    pub replica: ReplicaId,
}

impl Timestamp {
    pub fn new(counter: u64, replica: impl Into<ReplicaId>) -> Self {
        Timestamp {
            counter,
            replica: replica.into(),
        }
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.counter, self.replica)
    }
}

/// Strict Lamport order: `a < b` iff `a.counter < b.counter`, or the counters
/// are equal and `a.replica < b.replica`.
pub fn ts_less(a: &Timestamp, b: &Timestamp) -> bool {
    a.counter < b.counter || (a.counter == b.counter && a.replica < b.replica)
}
