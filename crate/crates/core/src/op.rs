use std::collections::BTreeSet;
use std::fmt;

use crate::cursor::Cursor;
use crate::ids::Timestamp;
use crate::value::Value;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mutation {
    Insert(Value),
    Delete,
    Assign(Value),
}

impl Mutation {
    pub fn is_delete(&self) -> bool {
        matches!(self, Mutation::Delete)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mutation::Insert(_) => "insert",
            Mutation::Delete => "delete",
            Mutation::Assign(_) => "assign",
        }
    }
}

/// `op(id, deps, cur, mut)`.
///
/// `deps` is the full set of operation ids that had been applied at the
/// generating replica when this operation was created.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Operation {
    pub id: Timestamp,
    pub deps: BTreeSet<Timestamp>,
    pub cursor: Cursor,
    pub mutation: Mutation,
}

impl Operation {
    /// True if neither operation causally depends on the other.
    pub fn concurrent_with(&self, other: &Operation) -> bool {
        self.id != other.id && !self.deps.contains(&other.id) && !other.deps.contains(&self.id)
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "op({}, {{", self.id)?;
        for (i, d) in self.deps.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, "}}, {}, ", self.cursor)?;
        match &self.mutation {
            Mutation::Insert(v) => write!(f, "insert({v}))"),
            Mutation::Delete => f.write_str("delete)"),
            Mutation::Assign(v) => write!(f, "assign({v}))"),
        }
    }
}
