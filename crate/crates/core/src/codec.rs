//! Canonical text encoding of operations.
//!
//! An operation is encoded as a single-line JSON object with sorted field
//! names:
//!
//! ```text
//! {"cur":{"key":<key>,"path":[{"key":<key>,"tag":"mapT"},...]},
//!  "deps":[[1,"p"],[2,"q"]],"id":[3,"p"],
//!  "mut":{"type":"assign","value":"x"}}
//! ```
//!
//! Keys are `{"doc":null}`, `{"head":null}`, `{"str":"..."}` or
//! `{"id":[counter,"replica"]}`. Dependencies are listed in ascending Lamport
//! order, so two equal operations always encode to identical bytes.

use std::collections::BTreeSet;

use serde_json::{json, Map, Value as J};

use crate::cursor::{Cursor, Key, Tag, TaggedKey};
use crate::ids::{ReplicaId, Timestamp};
use crate::op::{Mutation, Operation};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("malformed operation text: {0}")]
    Syntax(String),
    #[error("invalid field `{field}`: {reason}")]
    Field { field: String, reason: String },
}

fn bad(field: impl Into<String>, reason: impl Into<String>) -> DecodeError {
    DecodeError::Field {
        field: field.into(),
        reason: reason.into(),
    }
}

pub fn timestamp_to_json(t: &Timestamp) -> J {
    json!([t.counter, t.replica.as_str()])
}

pub fn key_to_json(k: &Key) -> J {
    match k {
        Key::Doc => json!({ "doc": null }),
        Key::Head => json!({ "head": null }),
        Key::Str(s) => json!({ "str": s }),
        Key::Id(t) => json!({ "id": timestamp_to_json(t) }),
    }
}

pub fn cursor_to_json(c: &Cursor) -> J {
    let path: Vec<J> = c
        .path
        .iter()
        .map(|tk| json!({ "tag": tk.tag.name(), "key": key_to_json(&tk.key) }))
        .collect();
    json!({ "path": path, "key": key_to_json(&c.key) })
}

pub fn operation_to_json(op: &Operation) -> J {
    let deps: Vec<J> = op.deps.iter().map(timestamp_to_json).collect();
    let mut m = Map::new();
    m.insert("type".into(), J::String(op.mutation.name().into()));
    match &op.mutation {
        Mutation::Insert(v) | Mutation::Assign(v) => {
            m.insert("value".into(), v.to_json());
        }
        Mutation::Delete => {}
    }
    json!({
        "id": timestamp_to_json(&op.id),
        "deps": deps,
        "cur": cursor_to_json(&op.cursor),
        "mut": J::Object(m),
    })
}

/// Canonical single-line encoding.
pub fn encode_operation(op: &Operation) -> String {
    operation_to_json(op).to_string()
}

pub fn decode_operation(bytes: &[u8]) -> Result<Operation, DecodeError> {
    let v: J = serde_json::from_slice(bytes).map_err(|e| DecodeError::Syntax(e.to_string()))?;
    operation_from_json(&v)
}

pub fn operation_from_json(v: &J) -> Result<Operation, DecodeError> {
    let obj = v
        .as_object()
        .ok_or_else(|| bad("<root>", "expected an object"))?;
    let id = timestamp_from_json(field(obj, "id")?, "id")?;
    let deps_json = field(obj, "deps")?
        .as_array()
        .ok_or_else(|| bad("deps", "expected an array"))?;
    let mut deps = BTreeSet::new();
    for (i, d) in deps_json.iter().enumerate() {
        let name = format!("deps[{i}]");
        if !deps.insert(timestamp_from_json(d, &name)?) {
            return Err(bad(name, "duplicate dependency"));
        }
    }
    if deps.contains(&id) {
        return Err(bad("deps", "operation depends on itself"));
    }
    let cursor = cursor_from_json(field(obj, "cur")?)?;
    let mutation = mutation_from_json(field(obj, "mut")?)?;
    Ok(Operation {
        id,
        deps,
        cursor,
        mutation,
    })
}

fn field<'a>(obj: &'a Map<String, J>, name: &str) -> Result<&'a J, DecodeError> {
    obj.get(name).ok_or_else(|| bad(name, "missing"))
}

pub fn timestamp_from_json(v: &J, name: &str) -> Result<Timestamp, DecodeError> {
    match v.as_array().map(Vec::as_slice) {
        Some([c, r]) => {
            let counter = c
                .as_u64()
                .filter(|c| *c > 0)
                .ok_or_else(|| bad(name, "counter must be a positive integer"))?;
            let replica = r
                .as_str()
                .ok_or_else(|| bad(name, "replica must be a string"))?;
            Ok(Timestamp {
                counter,
                replica: ReplicaId::new(replica),
            })
        }
        _ => Err(bad(name, "expected [counter, replica]")),
    }
}

fn key_from_json(v: &J, name: &str) -> Result<Key, DecodeError> {
    let obj = v
        .as_object()
        .filter(|o| o.len() == 1)
        .ok_or_else(|| bad(name, "expected a single-entry key object"))?;
    let (kind, payload) = obj.iter().next().expect("len checked");
    match kind.as_str() {
        "doc" if payload.is_null() => Ok(Key::Doc),
        "head" if payload.is_null() => Ok(Key::Head),
        "str" => payload
            .as_str()
            .map(Key::str)
            .ok_or_else(|| bad(name, "str key must hold a string")),
        "id" => Ok(Key::Id(timestamp_from_json(payload, name)?)),
        _ => Err(bad(name, format!("unknown key kind `{kind}`"))),
    }
}

fn cursor_from_json(v: &J) -> Result<Cursor, DecodeError> {
    let obj = v
        .as_object()
        .ok_or_else(|| bad("cur", "expected an object"))?;
    let path_json = obj
        .get("path")
        .and_then(J::as_array)
        .ok_or_else(|| bad("cur.path", "expected an array"))?;
    let mut path = Vec::with_capacity(path_json.len());
    for (i, seg) in path_json.iter().enumerate() {
        let name = format!("cur.path[{i}]");
        let seg = seg
            .as_object()
            .ok_or_else(|| bad(&name, "expected an object"))?;
        let tag = seg
            .get("tag")
            .and_then(J::as_str)
            .and_then(Tag::from_name)
            .filter(|t| *t != Tag::Reg)
            .ok_or_else(|| bad(format!("{name}.tag"), "expected \"mapT\" or \"listT\""))?;
        let key = key_from_json(
            seg.get("key")
                .ok_or_else(|| bad(format!("{name}.key"), "missing"))?,
            &format!("{name}.key"),
        )?;
        path.push(TaggedKey::new(tag, key));
    }
    let key = key_from_json(
        obj.get("key").ok_or_else(|| bad("cur.key", "missing"))?,
        "cur.key",
    )?;
    Ok(Cursor::new(path, key))
}

fn mutation_from_json(v: &J) -> Result<Mutation, DecodeError> {
    let obj = v
        .as_object()
        .ok_or_else(|| bad("mut", "expected an object"))?;
    let ty = obj
        .get("type")
        .and_then(J::as_str)
        .ok_or_else(|| bad("mut.type", "missing"))?;
    let value = || -> Result<Value, DecodeError> {
        let raw = obj
            .get("value")
            .ok_or_else(|| bad("mut.value", "missing"))?;
        Value::from_json(raw).ok_or_else(|| bad("mut.value", "not a primitive, {} or []"))
    };
    match ty {
        "assign" => Ok(Mutation::Assign(value()?)),
        "insert" => Ok(Mutation::Insert(value()?)),
        "delete" => Ok(Mutation::Delete),
        other => Err(bad("mut.type", format!("unknown mutation `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Operation {
        Operation {
            id: Timestamp::new(3, "p"),
            deps: [Timestamp::new(2, "q"), Timestamp::new(1, "p")]
                .into_iter()
                .collect(),
            cursor: Cursor::new(
                vec![
                    TaggedKey::map(Key::Doc),
                    TaggedKey::list(Key::str("shopping")),
                ],
                Key::Id(Timestamp::new(1, "p")),
            ),
            mutation: Mutation::Insert(Value::str("milk")),
        }
    }

    #[test]
    fn encoding_is_sorted_and_stable() {
        let text = encode_operation(&sample());
        assert_eq!(
            text,
            r#"{"cur":{"key":{"id":[1,"p"]},"path":[{"key":{"doc":null},"tag":"mapT"},{"key":{"str":"shopping"},"tag":"listT"}]},"deps":[[1,"p"],[2,"q"]],"id":[3,"p"],"mut":{"type":"insert","value":"milk"}}"#
        );
        assert_eq!(encode_operation(&sample().clone()), text);
    }

    #[test]
    fn truncated_input_is_rejected() {
        let text = encode_operation(&sample());
        let err = decode_operation(&text.as_bytes()[..text.len() - 5]).unwrap_err();
        assert!(matches!(err, DecodeError::Syntax(_)));
    }

    #[test]
    fn errors_name_the_field() {
        let bad_dep = r#"{"cur":{"key":{"doc":null},"path":[]},"deps":[[0,"p"]],"id":[3,"p"],"mut":{"type":"delete"}}"#;
        match decode_operation(bad_dep.as_bytes()).unwrap_err() {
            DecodeError::Field { field, .. } => assert_eq!(field, "deps[0]"),
            e => panic!("unexpected {e:?}"),
        }
        let bad_tag = r#"{"cur":{"key":{"doc":null},"path":[{"tag":"regT","key":{"doc":null}}]},"deps":[],"id":[3,"p"],"mut":{"type":"delete"}}"#;
        match decode_operation(bad_tag.as_bytes()).unwrap_err() {
            DecodeError::Field { field, .. } => assert_eq!(field, "cur.path[0].tag"),
            e => panic!("unexpected {e:?}"),
        }
        let no_mut = r#"{"cur":{"key":{"doc":null},"path":[]},"deps":[],"id":[3,"p"]}"#;
        match decode_operation(no_mut.as_bytes()).unwrap_err() {
            DecodeError::Field { field, .. } => assert_eq!(field, "mut"),
            e => panic!("unexpected {e:?}"),
        }
    }

    fn arb_ts() -> impl Strategy<Value = Timestamp> {
        (1u64..20, "[a-z]{1,3}").prop_map(|(c, r)| Timestamp::new(c, r.as_str()))
    }

    fn arb_key() -> impl Strategy<Value = Key> {
        prop_oneof![
            Just(Key::Doc),
            Just(Key::Head),
            ".{0,6}".prop_map(Key::Str),
            arb_ts().prop_map(Key::Id),
        ]
    }

    fn arb_value() -> impl Strategy<Value = Value> {
        prop_oneof![
            any::<i32>().prop_map(|n| Value::int(n as i64)),
            ".{0,6}".prop_map(Value::Str),
            any::<bool>().prop_map(Value::Bool),
            Just(Value::Null),
            Just(Value::EmptyMap),
            Just(Value::EmptyList),
        ]
    }

    prop_compose! {
        fn arb_op()(
            id in arb_ts(),
            deps in prop::collection::btree_set(arb_ts(), 0..5),
            path in prop::collection::vec(
                (prop::bool::ANY, arb_key()).prop_map(|(m, k)| TaggedKey::new(if m { Tag::Map } else { Tag::List }, k)),
                0..4),
            key in arb_key(),
            mutation in prop_oneof![
                arb_value().prop_map(Mutation::Assign),
                arb_value().prop_map(Mutation::Insert),
                Just(Mutation::Delete),
            ],
        ) -> Operation {
            let mut deps = deps;
            deps.remove(&id);
            Operation { id, deps, cursor: Cursor::new(path, key), mutation }
        }
    }

    proptest! {
        #[test]
        fn round_trip(op in arb_op()) {
            let text = encode_operation(&op);
            prop_assert_eq!(decode_operation(text.as_bytes()).unwrap(), op);
        }

        #[test]
        fn encoding_is_injective(a in arb_op(), b in arb_op()) {
            prop_assert_eq!(a == b, encode_operation(&a) == encode_operation(&b));
        }
    }
}
