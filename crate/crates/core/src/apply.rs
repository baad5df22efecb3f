//! Applying operations to a state tree.
//!
//! [`apply_op`] descends the operation's cursor path, creating missing
//! branch nodes and adding the operation id to the presence set of every key
//! it passes through. At the target node the mutation is dispatched:
//! assignment clears causally prior state and records the new value;
//! insertion splices a new element into the list chain (skipping over
//! concurrent insertions with greater ids) and assigns its value; deletion
//! clears the element.
//!
//! Clearing removes every id that appears in the operation's `deps` and keeps
//! everything else, so concurrent updates survive a concurrent overwrite or
//! delete.

use crate::cursor::{Key, Tag, TaggedKey};
use crate::ids::Timestamp;
use crate::op::{Mutation, Operation};
use crate::state::{Entries, IdSet, Link, ListNode, Node};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApplyError {
    #[error("cursor mismatch: {0}")]
    CursorMismatch(String),
}

fn mismatch(msg: impl Into<String>) -> ApplyError {
    ApplyError::CursorMismatch(msg.into())
}

/// Applies `op` to the replica-state root. The tree is left untouched when an
/// error is returned.
pub fn apply_op(root: &mut Node, op: &Operation) -> Result<(), ApplyError> {
    check_applicable(root, op)?;
    apply_at(root, &op.cursor.path, op)
}

/// Read-only dry run of the checks `apply_at` would fail on.
fn check_applicable(root: &Node, op: &Operation) -> Result<(), ApplyError> {
    let mut node = Some(root);
    let mut fresh_tag = Tag::Map;
    for tk in &op.cursor.path {
        if tk.tag == Tag::Reg {
            return Err(mismatch(format!("register {tk} on cursor path")));
        }
        if let Some(n) = node {
            let entries = n
                .entries()
                .ok_or_else(|| mismatch(format!("cannot descend into register at {tk}")))?;
            node = entries.child(tk);
        }
        fresh_tag = tk.tag;
    }
    let target_tag = node.map(Node::tag).unwrap_or(fresh_tag);
    match (&op.mutation, target_tag) {
        (_, Tag::Reg) => Err(mismatch("cursor targets a register node")),
        (Mutation::Insert(_), Tag::Map) => Err(mismatch("insertAfter on a map position")),
        (Mutation::Insert(_), Tag::List) => {
            let linked = match node.and_then(Node::as_list) {
                Some(l) => l.contains_position(&op.cursor.key),
                None => op.cursor.key == Key::Head,
            };
            let already = node
                .and_then(Node::as_list)
                .is_some_and(|l| l.contains_position(&Key::Id(op.id.clone())));
            if !linked {
                Err(mismatch(format!("{} is not in the list", op.cursor.key)))
            } else if already {
                Err(mismatch(format!("element {} already inserted", op.id)))
            } else {
                Ok(())
            }
        }
        _ => Ok(()),
    }
}

fn apply_at(ctx: &mut Node, path: &[TaggedKey], op: &Operation) -> Result<(), ApplyError> {
    match path.split_first() {
        Some((tk, rest)) => {
            let entries = ctx
                .entries_mut()
                .ok_or_else(|| mismatch("cannot descend into a register"))?;
            apply_at(entries.child_get_or_create(tk), rest, op)?;
            entries.add_id(tk, &op.id, &op.mutation);
            Ok(())
        }
        None => {
            let key = &op.cursor.key;
            match &op.mutation {
                Mutation::Assign(v) => apply_assign(ctx, key, &op.id, &op.deps, v),
                Mutation::Insert(v) => apply_insert(ctx, key, &op.id, &op.deps, v),
                Mutation::Delete => apply_delete(ctx, key, &op.deps),
            }
        }
    }
}

/// Assignment at `key` inside `ctx`.
///
/// A primitive clears only the register under `key`; `{}` and `[]` clear the
/// whole element under every tag before (re)creating the branch node.
pub fn apply_assign(
    ctx: &mut Node,
    key: &Key,
    id: &Timestamp,
    deps: &IdSet,
    val: &Value,
) -> Result<(), ApplyError> {
    let entries = ctx
        .entries_mut()
        .ok_or_else(|| mismatch("assignment inside a register"))?;
    let mutation = Mutation::Assign(val.clone());
    match val {
        Value::EmptyMap => {
            clear_elem(entries, deps, key);
            let tk = TaggedKey::map(key.clone());
            entries.add_id(&tk, id, &mutation);
            if let Node::Map(m) = entries.child_get_or_create(&tk) {
                m.assigned.insert(id.clone());
            }
        }
        Value::EmptyList => {
            clear_elem(entries, deps, key);
            let tk = TaggedKey::list(key.clone());
            entries.add_id(&tk, id, &mutation);
            if let Node::List(l) = entries.child_get_or_create(&tk) {
                l.assigned.insert(id.clone());
            }
        }
        primitive => {
            let tk = TaggedKey::reg(key.clone());
            clear(entries, deps, &tk);
            entries.add_id(&tk, id, &mutation);
            if let Node::Reg(r) = entries.child_get_or_create(&tk) {
                r.writes.insert(id.clone(), primitive.clone());
            }
        }
    }
    Ok(())
}

/// Inserts element `id` after `prev`. Successive elements with ids greater
/// than `id` are skipped, so concurrent insertions at the same position end
/// up in descending id order.
pub fn apply_insert(
    ctx: &mut Node,
    prev: &Key,
    id: &Timestamp,
    deps: &IdSet,
    val: &Value,
) -> Result<(), ApplyError> {
    let list: &mut ListNode = match ctx {
        Node::List(l) => l,
        _ => return Err(mismatch("insertAfter outside a list")),
    };
    let mut cur = prev.clone();
    loop {
        let next = list
            .next
            .get(&cur)
            .cloned()
            .ok_or_else(|| mismatch(format!("{cur} is not in the list")))?;
        match next {
            Link::Elem(ref n) if id < n => cur = Key::Id(n.clone()),
            _ => {
                list.next.insert(cur, Link::Elem(id.clone()));
                list.next.insert(Key::Id(id.clone()), next);
                break;
            }
        }
    }
    apply_assign(ctx, &Key::Id(id.clone()), id, deps, val)
}

pub fn apply_delete(ctx: &mut Node, key: &Key, deps: &IdSet) -> Result<(), ApplyError> {
    let entries = ctx
        .entries_mut()
        .ok_or_else(|| mismatch("delete inside a register"))?;
    clear_elem(entries, deps, key);
    Ok(())
}

/// Clears the child under `tk`, dropping everything written by operations in
/// `deps`. Returns the ids that survive anywhere in that subtree.
pub fn clear(entries: &mut Entries, deps: &IdSet, tk: &TaggedKey) -> IdSet {
    match entries.child_mut(tk) {
        None => IdSet::new(),
        Some(Node::Reg(r)) => {
            r.writes.retain(|id, _| !deps.contains(id));
            r.writes.keys().cloned().collect()
        }
        Some(Node::Map(m)) => {
            m.assigned.retain(|id| !deps.contains(id));
            let keys: Vec<Key> = m.entries.keys().into_iter().cloned().collect();
            let mut pres = IdSet::new();
            for k in keys {
                pres.extend(clear_elem(&mut m.entries, deps, &k));
            }
            pres
        }
        Some(Node::List(l)) => {
            l.assigned.retain(|id| !deps.contains(id));
            let mut pres = IdSet::new();
            let mut cur = Key::Head;
            loop {
                pres.extend(clear_elem(&mut l.entries, deps, &cur));
                match l.next.get(&cur).and_then(Link::key) {
                    Some(k) => cur = k,
                    None => break,
                }
            }
            pres
        }
    }
}

fn clear_any(entries: &mut Entries, deps: &IdSet, key: &Key) -> IdSet {
    let mut pres = IdSet::new();
    for tag in Tag::ALL {
        pres.extend(clear(entries, deps, &TaggedKey::new(tag, key.clone())));
    }
    pres
}

/// Clears `key` under every tag and sets its presence set to the surviving
/// nested ids plus its previous presence, minus `deps`.
pub fn clear_elem(entries: &mut Entries, deps: &IdSet, key: &Key) -> IdSet {
    let mut pres = clear_any(entries, deps, key);
    pres.extend(entries.presence(key).iter().cloned());
    pres.retain(|id| !deps.contains(id));
    entries.set_presence(key, pres.clone());
    pres
}
