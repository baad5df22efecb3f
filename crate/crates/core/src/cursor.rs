//! Keys and cursors: immutable paths that locate a position in the document
//! by identity rather than by index.

use std::fmt;

use crate::ids::Timestamp;

/// A key inside a branch node.
///
/// `Doc` names the document root inside the replica state. `Head` is the
/// virtual position before the first element of a list. List elements are
/// keyed by the id of the operation that inserted them.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Key {
    Doc,
    Head,
    Str(String),
    Id(Timestamp),
}

impl Key {
    pub fn str(s: impl Into<String>) -> Self {
        Key::Str(s.into())
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Key::Doc => f.write_str("doc"),
            Key::Head => f.write_str("head"),
            Key::Str(s) => write!(f, "{s:?}"),
            Key::Id(t) => write!(f, "{t}"),
        }
    }
}

/// Node type annotation carried by a key. Each tag is a separate namespace,
/// so the same key may hold a map, a list and a register side by side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    Map,
    List,
    Reg,
}

impl Tag {
    pub const ALL: [Tag; 3] = [Tag::Map, Tag::List, Tag::Reg];

    pub fn name(self) -> &'static str {
        match self {
            Tag::Map => "mapT",
            Tag::List => "listT",
            Tag::Reg => "regT",
        }
    }

    pub fn from_name(s: &str) -> Option<Tag> {
        match s {
            "mapT" => Some(Tag::Map),
            "listT" => Some(Tag::List),
            "regT" => Some(Tag::Reg),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaggedKey {
    pub tag: Tag,
    pub key: Key,
}

impl TaggedKey {
    pub fn new(tag: Tag, key: Key) -> Self {
        TaggedKey { tag, key }
    }

    pub fn map(key: Key) -> Self {
        TaggedKey::new(Tag::Map, key)
    }

    pub fn list(key: Key) -> Self {
        TaggedKey::new(Tag::List, key)
    }

    pub fn reg(key: Key) -> Self {
        TaggedKey::new(Tag::Reg, key)
    }
}

impl fmt::Display for TaggedKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.tag.name(), self.key)
    }
}

/// `cursor(<k1, ..., kn-1>, kn)`: a path of tagged branch keys plus an
/// untagged final key.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cursor {
    pub path: Vec<TaggedKey>,
    pub key: Key,
}

impl Cursor {
    pub fn new(path: Vec<TaggedKey>, key: Key) -> Self {
        Cursor { path, key }
    }

    /// The root cursor `cursor(<>, doc)`.
    pub fn doc() -> Self {
        Cursor::new(Vec::new(), Key::Doc)
    }

    /// Extends the path with `tag(final)` and moves to `key`.
    pub fn descend(&self, tag: Tag, key: Key) -> Cursor {
        let mut path = self.path.clone();
        path.push(TaggedKey::new(tag, self.key.clone()));
        Cursor::new(path, key)
    }
}

impl fmt::Display for Cursor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("cursor(<")?;
        for (i, tk) in self.path.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{tk}")?;
        }
        write!(f, ">, {})", self.key)
    }
}
