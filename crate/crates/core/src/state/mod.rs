//! The document-state tree.
//!
//! A replica's document lives inside a root map node under the key
//! [`Key::Doc`]. Branch nodes store their children under tagged keys, so a
//! single key can hold a map, a list and a register at the same time, and a
//! presence set per untagged key recording which operations currently assert
//! that the key exists. An empty presence set means the key (or list element)
//! is deleted. List nodes also keep a singly linked `next` chain from
//! [`Key::Head`] to [`Link::Tail`]; deleted elements stay linked as tombstones.

mod render;

use std::collections::{BTreeMap, BTreeSet};

use crate::cursor::{Key, Tag, TaggedKey};
use crate::ids::Timestamp;
use crate::op::Mutation;
use crate::value::Value;

pub use render::render_json;

pub type IdSet = BTreeSet<Timestamp>;

static EMPTY: IdSet = BTreeSet::new();

/// Successor of a list position.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Link {
    Elem(Timestamp),
    Tail,
}

impl Link {
    pub fn key(&self) -> Option<Key> {
        match self {
            Link::Elem(t) => Some(Key::Id(t.clone())),
            Link::Tail => None,
        }
    }
}

/// Children and presence sets shared by map and list nodes.
///
/// Empty presence sets are never stored, so an absent entry and an empty one
/// compare equal structurally.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Entries {
    pub(crate) children: BTreeMap<TaggedKey, Node>,
    pub(crate) presence: BTreeMap<Key, IdSet>,
}

impl Entries {
    pub fn child(&self, tk: &TaggedKey) -> Option<&Node> {
        self.children.get(tk)
    }

    pub fn child_mut(&mut self, tk: &TaggedKey) -> Option<&mut Node> {
        self.children.get_mut(tk)
    }

    pub fn contains(&self, tk: &TaggedKey) -> bool {
        self.children.contains_key(tk)
    }

    /// Existing child, or a fresh empty node of the kind named by the tag.
    pub fn child_get_or_create(&mut self, tk: &TaggedKey) -> &mut Node {
        self.children
            .entry(tk.clone())
            .or_insert_with(|| Node::empty(tk.tag))
    }

    /// `pres(k)`, or the empty set when absent.
    pub fn presence(&self, k: &Key) -> &IdSet {
        self.presence.get(k).unwrap_or(&EMPTY)
    }

    pub(crate) fn set_presence(&mut self, k: &Key, ids: IdSet) {
        if ids.is_empty() {
            self.presence.remove(k);
        } else {
            self.presence.insert(k.clone(), ids);
        }
    }

    pub fn is_live(&self, k: &Key) -> bool {
        !self.presence(k).is_empty()
    }

    /// Adds `id` to the presence set of `tk`'s untagged key unless the
    /// mutation is a deletion.
    pub fn add_id(&mut self, tk: &TaggedKey, id: &Timestamp, mutation: &Mutation) {
        if mutation.is_delete() {
            return;
        }
        self.presence
            .entry(tk.key.clone())
            .or_default()
            .insert(id.clone());
    }

    /// Untagged keys that have a child under at least one tag.
    pub fn keys(&self) -> BTreeSet<&Key> {
        self.children.keys().map(|tk| &tk.key).collect()
    }

    /// Keys with a child and a non-empty presence set.
    pub fn live_keys(&self) -> BTreeSet<&Key> {
        self.keys()
            .into_iter()
            .filter(|k| self.is_live(k))
            .collect()
    }

    pub fn children(&self) -> impl Iterator<Item = (&TaggedKey, &Node)> {
        self.children.iter()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MapNode {
    pub(crate) entries: Entries,
    /// Ids of `{}` assignments that created this node and are not yet
    /// cleared. Used only to decide whether an otherwise empty map is shown.
    pub(crate) assigned: IdSet,
}

impl MapNode {
    pub fn entries(&self) -> &Entries {
        &self.entries
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ListNode {
    pub(crate) entries: Entries,
    pub(crate) next: BTreeMap<Key, Link>,
    /// Like [`MapNode::assigned`], for `[]` assignments.
    pub(crate) assigned: IdSet,
}

impl Default for ListNode {
    fn default() -> Self {
        let mut next = BTreeMap::new();
        next.insert(Key::Head, Link::Tail);
        ListNode {
            entries: Entries::default(),
            next,
            assigned: IdSet::new(),
        }
    }
}

impl ListNode {
    pub fn entries(&self) -> &Entries {
        &self.entries
    }

    pub fn next_of(&self, k: &Key) -> Option<&Link> {
        self.next.get(k)
    }

    pub fn contains_position(&self, k: &Key) -> bool {
        self.next.contains_key(k)
    }

    /// All element ids in list order, tombstones included.
    pub fn chain(&self) -> Vec<Timestamp> {
        let mut out = Vec::new();
        let mut cur = self.next.get(&Key::Head);
        while let Some(Link::Elem(t)) = cur {
            out.push(t.clone());
            cur = self.next.get(&Key::Id(t.clone()));
        }
        out
    }

    /// Element ids with non-empty presence, in list order.
    pub fn live_elements(&self) -> Vec<Timestamp> {
        self.chain()
            .into_iter()
            .filter(|t| self.entries.is_live(&Key::Id(t.clone())))
            .collect()
    }

    /// Checks that `next` is a single chain from head to tail that visits
    /// every linked element exactly once.
    pub fn check_chain(&self) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        let mut cur = Key::Head;
        loop {
            match self.next.get(&cur) {
                None => return Err(format!("position {cur} has no successor")),
                Some(Link::Tail) => break,
                Some(Link::Elem(t)) => {
                    if !seen.insert(t.clone()) {
                        return Err(format!("element {t} visited twice"));
                    }
                    cur = Key::Id(t.clone());
                }
            }
        }
        let linked = self.next.keys().filter(|k| **k != Key::Head).count();
        if linked != seen.len() {
            return Err(format!(
                "{} linked elements but only {} reachable from head",
                linked,
                seen.len()
            ));
        }
        Ok(())
    }
}

/// Multi-value register: each write is kept under the id of its operation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RegNode {
    pub(crate) writes: BTreeMap<Timestamp, Value>,
}

impl RegNode {
    pub fn writes(&self) -> &BTreeMap<Timestamp, Value> {
        &self.writes
    }

    /// `range(writes)`.
    pub fn values(&self) -> BTreeSet<Value> {
        self.writes.values().cloned().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Node {
    Map(MapNode),
    List(ListNode),
    Reg(RegNode),
}

impl Default for Node {
    /// The replica-state root: an empty map that will hold the document
    /// under [`Key::Doc`].
    fn default() -> Self {
        Node::Map(MapNode::default())
    }
}

impl Node {
    pub fn empty(tag: Tag) -> Node {
        match tag {
            Tag::Map => Node::Map(MapNode::default()),
            Tag::List => Node::List(ListNode::default()),
            Tag::Reg => Node::Reg(RegNode::default()),
        }
    }

    pub fn tag(&self) -> Tag {
        match self {
            Node::Map(_) => Tag::Map,
            Node::List(_) => Tag::List,
            Node::Reg(_) => Tag::Reg,
        }
    }

    pub fn entries(&self) -> Option<&Entries> {
        match self {
            Node::Map(m) => Some(&m.entries),
            Node::List(l) => Some(&l.entries),
            Node::Reg(_) => None,
        }
    }

    pub fn entries_mut(&mut self) -> Option<&mut Entries> {
        match self {
            Node::Map(m) => Some(&mut m.entries),
            Node::List(l) => Some(&mut l.entries),
            Node::Reg(_) => None,
        }
    }

    pub fn as_list(&self) -> Option<&ListNode> {
        match self {
            Node::List(l) => Some(l),
            _ => None,
        }
    }

    pub fn as_map(&self) -> Option<&MapNode> {
        match self {
            Node::Map(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_reg(&self) -> Option<&RegNode> {
        match self {
            Node::Reg(r) => Some(r),
            _ => None,
        }
    }

    /// Follows a path of tagged keys without creating anything.
    pub fn lookup(&self, path: &[TaggedKey]) -> Option<&Node> {
        let mut node = self;
        for tk in path {
            node = node.entries()?.child(tk)?;
        }
        Some(node)
    }

    /// Every list in the tree, keyed by its path from this node.
    pub fn lists(&self) -> Vec<(Vec<TaggedKey>, &ListNode)> {
        let mut out = Vec::new();
        let mut path = Vec::new();
        collect_lists(self, &mut path, &mut out);
        out
    }

    /// Runs [`ListNode::check_chain`] on every list in the tree.
    pub fn check_chains(&self) -> Result<(), String> {
        for (path, list) in self.lists() {
            list.check_chain()
                .map_err(|e| format!("list at {path:?}: {e}"))?;
        }
        Ok(())
    }
}

fn collect_lists<'a>(
    node: &'a Node,
    path: &mut Vec<TaggedKey>,
    out: &mut Vec<(Vec<TaggedKey>, &'a ListNode)>,
) {
    if let Node::List(l) = node {
        out.push((path.clone(), l));
    }
    if let Some(entries) = node.entries() {
        for (tk, child) in entries.children() {
            path.push(tk.clone());
            collect_lists(child, path, out);
            path.pop();
        }
    }
}

/// Structural equality of two state trees, tombstones and presence sets
/// included.
pub fn state_equal(a: &Node, b: &Node) -> bool {
    a == b
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(c: u64, r: &str) -> Timestamp {
        Timestamp::new(c, r)
    }

    #[test]
    fn child_list_starts_with_head_to_tail() {
        let mut e = Entries::default();
        let child = e.child_get_or_create(&TaggedKey::list(Key::str("shopping")));
        let list = child.as_list().unwrap();
        assert_eq!(list.next_of(&Key::Head), Some(&Link::Tail));
        assert!(list.chain().is_empty());
        list.check_chain().unwrap();
    }

    #[test]
    fn child_get_returns_existing() {
        let mut e = Entries::default();
        let tk = TaggedKey::reg(Key::str("a"));
        if let Node::Reg(r) = e.child_get_or_create(&tk) {
            r.writes.insert(ts(1, "p"), Value::int(1));
        }
        let again = e.child_get_or_create(&tk).as_reg().unwrap();
        assert_eq!(again.values(), [Value::int(1)].into_iter().collect());
    }

    #[test]
    fn child_map_and_reg_are_empty() {
        let mut e = Entries::default();
        assert_eq!(
            e.child_get_or_create(&TaggedKey::map(Key::str("a"))),
            &Node::Map(MapNode::default())
        );
        assert_eq!(
            e.child_get_or_create(&TaggedKey::reg(Key::str("a"))),
            &Node::Reg(RegNode::default())
        );
    }

    #[test]
    fn presence_and_add_id() {
        let mut e = Entries::default();
        let k = Key::str("k");
        let tk = TaggedKey::reg(k.clone());
        assert!(e.presence(&k).is_empty());

        e.add_id(&tk, &ts(1, "p"), &Mutation::Assign(Value::Null));
        assert_eq!(e.presence(&k), &[ts(1, "p")].into_iter().collect());

        e.add_id(&tk, &ts(2, "p"), &Mutation::Delete);
        assert_eq!(e.presence(&k).len(), 1);

        e.add_id(&tk, &ts(3, "q"), &Mutation::Insert(Value::Null));
        assert_eq!(e.presence(&k).len(), 2);

        e.set_presence(&k, IdSet::new());
        assert!(e.presence(&k).is_empty());
        assert!(!e.presence.contains_key(&k));
    }

    #[test]
    fn state_equal_sees_presence_differences() {
        assert!(state_equal(&Node::default(), &Node::default()));
        let mut a = MapNode::default();
        let mut b = MapNode::default();
        a.entries
            .child_get_or_create(&TaggedKey::reg(Key::str("x")));
        b.entries
            .child_get_or_create(&TaggedKey::reg(Key::str("x")));
        assert!(state_equal(&Node::Map(a.clone()), &Node::Map(b.clone())));
        a.entries.add_id(
            &TaggedKey::reg(Key::str("x")),
            &ts(1, "p"),
            &Mutation::Assign(Value::Null),
        );
        assert!(!state_equal(&Node::Map(a), &Node::Map(b)));
    }

    #[test]
    fn broken_chain_is_reported() {
        let mut l = ListNode::default();
        l.next.insert(Key::Id(ts(1, "p")), Link::Tail);
        assert!(l.check_chain().is_err());
        l.next.insert(Key::Head, Link::Elem(ts(1, "p")));
        l.check_chain().unwrap();
    }
}
