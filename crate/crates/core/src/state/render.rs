//! Projection of the state tree onto plain JSON text.
//!
//! Output is single-line and deterministic:
//! - map keys appear iff their presence set is non-empty, ordered by the
//!   smallest id in that set (ties by key);
//! - list elements appear in chain order, tombstones skipped;
//! - a register with one distinct value renders as that value, otherwise as
//!   `{"?mv":[...]}` in ascending writer-timestamp order;
//! - a key holding several node types renders as `"k?map"`, `"k?list"`,
//!   `"k?reg"` siblings. Unkeyed positions (the document root, list elements)
//!   use an object with `"?map"`, `"?list"`, `"?reg"` fields instead.

use std::fmt::Write;

use super::{Entries, ListNode, MapNode, Node, RegNode};
use crate::cursor::{Key, Tag, TaggedKey};

/// Renders the document held under [`Key::Doc`] in a replica-state root.
/// A document with no live content renders as `{}`.
pub fn render_json(root: &Node) -> String {
    let mut out = String::new();
    let entries = match root.entries() {
        Some(e) => e,
        None => {
            render_node(&mut out, root);
            return out;
        }
    };
    if !entries.is_live(&Key::Doc) {
        return "{}".to_string();
    }
    render_unkeyed(&mut out, entries, &Key::Doc);
    out
}

fn tag_suffix(tag: Tag) -> &'static str {
    match tag {
        Tag::Map => "?map",
        Tag::List => "?list",
        Tag::Reg => "?reg",
    }
}

fn has_content(node: &Node) -> bool {
    match node {
        Node::Map(m) => !m.assigned.is_empty() || !m.entries.live_keys().is_empty(),
        Node::List(l) => !l.assigned.is_empty() || !l.live_elements().is_empty(),
        Node::Reg(r) => !r.writes.is_empty(),
    }
}

/// Nodes to show for a live key. Nodes with content win; if none has any
/// (e.g. a map whose last key was deleted), every existing branch is shown,
/// falling back to an empty register.
fn visible<'a>(entries: &'a Entries, key: &Key) -> Vec<&'a Node> {
    let present: Vec<&'a Node> = Tag::ALL
        .iter()
        .filter_map(|t| entries.child(&TaggedKey::new(*t, key.clone())))
        .collect();
    let strong: Vec<&'a Node> = present.iter().copied().filter(|n| has_content(n)).collect();
    if !strong.is_empty() {
        return strong;
    }
    let branches: Vec<&'a Node> = present
        .iter()
        .copied()
        .filter(|n| !matches!(n, Node::Reg(_)))
        .collect();
    if !branches.is_empty() {
        return branches;
    }
    present
}

fn render_unkeyed(out: &mut String, entries: &Entries, key: &Key) {
    let nodes = visible(entries, key);
    match nodes.as_slice() {
        [] => out.push_str("null"),
        [one] => render_node(out, one),
        many => {
            out.push('{');
            for (i, n) in many.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                push_str_lit(out, tag_suffix(n.tag()));
                out.push(':');
                render_node(out, n);
            }
            out.push('}');
        }
    }
}

fn render_node(out: &mut String, node: &Node) {
    match node {
        Node::Map(m) => render_map(out, m),
        Node::List(l) => render_list(out, l),
        Node::Reg(r) => render_reg(out, r),
    }
}

fn render_map(out: &mut String, map: &MapNode) {
    let entries = &map.entries;
    let mut keys: Vec<&Key> = entries.live_keys().into_iter().collect();
    keys.sort_by_key(|k| (entries.presence(k).first(), *k));
    out.push('{');
    let mut first = true;
    for key in keys {
        let name = match key {
            Key::Str(s) => s.clone(),
            other => other.to_string(),
        };
        let nodes = visible(entries, key);
        let suffix = nodes.len() > 1;
        for n in nodes {
            if !first {
                out.push(',');
            }
            first = false;
            if suffix {
                push_str_lit(out, &format!("{name}{}", tag_suffix(n.tag())));
            } else {
                push_str_lit(out, &name);
            }
            out.push(':');
            render_node(out, n);
        }
    }
    out.push('}');
}

fn render_list(out: &mut String, list: &ListNode) {
    out.push('[');
    for (i, id) in list.live_elements().into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        render_unkeyed(out, &list.entries, &Key::Id(id));
    }
    out.push(']');
}

fn render_reg(out: &mut String, reg: &RegNode) {
    let mut distinct = Vec::new();
    for v in reg.writes.values() {
        if !distinct.contains(&v) {
            distinct.push(v);
        }
    }
    if let [one] = distinct.as_slice() {
        let _ = write!(out, "{}", one.to_json());
        return;
    }
    out.push_str("{\"?mv\":[");
    for (i, v) in distinct.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{}", v.to_json());
    }
    out.push_str("]}");
}

fn push_str_lit(out: &mut String, s: &str) {
    out.push_str(&serde_json::Value::String(s.to_string()).to_string());
}
