//! Expression evaluation: turning `doc.get(..).idx(..)` chains into cursors,
//! and answering `keys` / `values` queries against the local state.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::cursor::{Cursor, Key, Tag, TaggedKey};
use crate::state::{Link, ListNode, Node};
use crate::value::Value;

/// `EXPR ::= doc | x | EXPR.get(key) | EXPR.idx(i) | EXPR.keys | EXPR.values`
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Doc,
    Var(String),
    Get(Box<Expr>, String),
    Idx(Box<Expr>, usize),
    Keys(Box<Expr>),
    Values(Box<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn get(self, key: impl Into<String>) -> Expr {
        Expr::Get(Box::new(self), key.into())
    }

    pub fn idx(self, i: usize) -> Expr {
        Expr::Idx(Box::new(self), i)
    }

    pub fn keys(self) -> Expr {
        Expr::Keys(Box::new(self))
    }

    pub fn values(self) -> Expr {
        Expr::Values(Box::new(self))
    }

    pub fn is_query(&self) -> bool {
        matches!(self, Expr::Keys(_) | Expr::Values(_))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Doc => f.write_str("doc"),
            Expr::Var(x) => f.write_str(x),
            Expr::Get(e, k) => write!(f, "{e}.get({})", serde_json::Value::String(k.clone())),
            Expr::Idx(e, i) => write!(f, "{e}.idx({i})"),
            Expr::Keys(e) => write!(f, "{e}.keys"),
            Expr::Values(e) => write!(f, "{e}.values"),
        }
    }
}

pub type Vars = BTreeMap<String, Cursor>;

/// Each variant is a reduction that would get stuck.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("UnboundVariable: `{0}` is not defined")]
    UnboundVariable(String),
    #[error("GetOnHead: cannot get a key from the head of a list")]
    GetOnHead,
    #[error("IndexOutOfBounds: idx({index}) past the end of a list with {live} elements")]
    IndexOutOfBounds { index: usize, live: usize },
    #[error("NotAList: no list at {0}")]
    NotAList(String),
    #[error("NotInList: position {0} is not linked in the list")]
    NotInList(String),
    #[error("NotAMap: no map at {0}")]
    NotAMap(String),
    #[error("NotARegister: no register at {0}")]
    NotARegister(String),
    #[error("NotACursor: `{0}` is a query, not a position")]
    NotACursor(String),
}

impl EvalError {
    /// Short name used in error reports and negative tests.
    pub fn name(&self) -> &'static str {
        match self {
            EvalError::UnboundVariable(_) => "UnboundVariable",
            EvalError::GetOnHead => "GetOnHead",
            EvalError::IndexOutOfBounds { .. } => "IndexOutOfBounds",
            EvalError::NotAList(_) => "NotAList",
            EvalError::NotInList(_) => "NotInList",
            EvalError::NotAMap(_) => "NotAMap",
            EvalError::NotARegister(_) => "NotARegister",
            EvalError::NotACursor(_) => "NotACursor",
        }
    }
}

/// Result of a `keys` or `values` query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Answer {
    Keys(BTreeSet<String>),
    Values(BTreeSet<Value>),
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<serde_json::Value> = match self {
            Answer::Keys(ks) => ks.iter().cloned().map(serde_json::Value::String).collect(),
            Answer::Values(vs) => vs.iter().map(Value::to_json).collect(),
        };
        write!(f, "{}", serde_json::Value::Array(items))
    }
}

/// Evaluates a position expression to a cursor. Never mutates state.
pub fn resolve(doc: &Node, vars: &Vars, expr: &Expr) -> Result<Cursor, EvalError> {
    match expr {
        Expr::Doc => Ok(Cursor::doc()),
        Expr::Var(x) => vars
            .get(x)
            .cloned()
            .ok_or_else(|| EvalError::UnboundVariable(x.clone())),
        Expr::Get(e, key) => {
            let cur = resolve(doc, vars, e)?;
            if cur.key == Key::Head {
                return Err(EvalError::GetOnHead);
            }
            Ok(cur.descend(Tag::Map, Key::str(key.clone())))
        }
        Expr::Idx(e, i) => {
            let head = resolve(doc, vars, e)?.descend(Tag::List, Key::Head);
            let list = doc
                .lookup(&head.path)
                .and_then(Node::as_list)
                .ok_or_else(|| EvalError::NotAList(head.to_string()))?;
            let key = idx_resolve(list, &Key::Head, *i)?;
            Ok(Cursor::new(head.path, key))
        }
        Expr::Keys(_) | Expr::Values(_) => Err(EvalError::NotACursor(expr.to_string())),
    }
}

/// Moves `i` live elements forward from `start`; tombstones are stepped over
/// without counting. `i = 0` returns `start` itself.
pub fn idx_resolve(list: &ListNode, start: &Key, i: usize) -> Result<Key, EvalError> {
    let mut cur = start.clone();
    let mut remaining = i;
    while remaining > 0 {
        match list.next_of(&cur) {
            None => return Err(EvalError::NotInList(cur.to_string())),
            Some(Link::Tail) => {
                return Err(EvalError::IndexOutOfBounds {
                    index: i,
                    live: list.live_elements().len(),
                })
            }
            Some(Link::Elem(t)) => {
                cur = Key::Id(t.clone());
                if list.entries().is_live(&cur) {
                    remaining -= 1;
                }
            }
        }
    }
    Ok(cur)
}

/// Live keys of the map at `cursor`.
pub fn keys(doc: &Node, cursor: &Cursor) -> Result<BTreeSet<String>, EvalError> {
    let map = doc
        .lookup(&cursor.path)
        .and_then(Node::entries)
        .and_then(|e| e.child(&TaggedKey::map(cursor.key.clone())))
        .and_then(Node::as_map)
        .ok_or_else(|| EvalError::NotAMap(cursor.to_string()))?;
    Ok(map
        .entries()
        .live_keys()
        .into_iter()
        .map(|k| match k {
            Key::Str(s) => s.clone(),
            other => other.to_string(),
        })
        .collect())
}

/// Values currently held by the register at `cursor`.
pub fn values(doc: &Node, cursor: &Cursor) -> Result<BTreeSet<Value>, EvalError> {
    doc.lookup(&cursor.path)
        .and_then(Node::entries)
        .and_then(|e| e.child(&TaggedKey::reg(cursor.key.clone())))
        .and_then(Node::as_reg)
        .map(|r| r.values())
        .ok_or_else(|| EvalError::NotARegister(cursor.to_string()))
}

/// Evaluates a `keys` or `values` expression.
pub fn query(doc: &Node, vars: &Vars, expr: &Expr) -> Result<Answer, EvalError> {
    match expr {
        Expr::Keys(e) => keys(doc, &resolve(doc, vars, e)?).map(Answer::Keys),
        Expr::Values(e) => values(doc, &resolve(doc, vars, e)?).map(Answer::Values),
        other => Err(EvalError::NotACursor(format!("{other} is not a query"))),
    }
}
