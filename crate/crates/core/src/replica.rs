//! One replica: local command execution, operation generation and the
//! send / receive / apply-remote steps of `yield`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::apply::{apply_op, ApplyError};
use crate::cursor::Cursor;
use crate::eval::{self, Answer, EvalError, Expr, Vars};
use crate::ids::{ReplicaId, Timestamp};
use crate::op::{Mutation, Operation};
use crate::state::{render_json, Node};
use crate::value::Value;

/// `CMD ::= let x = EXPR | EXPR := v | EXPR.insertAfter(v) | EXPR.delete | yield | CMD; CMD`
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Command {
    Let(String, Expr),
    Assign(Expr, Value),
    InsertAfter(Expr, Value),
    Delete(Expr),
    Yield,
    Seq(Box<Command>, Box<Command>),
}

impl Command {
    pub fn seq(a: Command, b: Command) -> Command {
        Command::Seq(Box::new(a), Box::new(b))
    }

    /// Folds a list of commands into right-nested `Seq`s.
    pub fn sequence(cmds: impl IntoIterator<Item = Command>) -> Option<Command> {
        let mut cmds: Vec<Command> = cmds.into_iter().collect();
        let mut acc = cmds.pop()?;
        while let Some(c) = cmds.pop() {
            acc = Command::seq(c, acc);
        }
        Some(acc)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Let(x, e) => write!(f, "let {x} = {e}"),
            Command::Assign(e, v) => write!(f, "{e} := {v}"),
            Command::InsertAfter(e, v) => write!(f, "{e}.insertAfter({v})"),
            Command::Delete(e) => write!(f, "{e}.delete"),
            Command::Yield => f.write_str("yield"),
            Command::Seq(a, b) => write!(f, "{a}; {b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReplicaError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Apply(#[from] ApplyError),
}

impl ReplicaError {
    pub fn name(&self) -> &'static str {
        match self {
            ReplicaError::Eval(e) => e.name(),
            ReplicaError::Apply(_) => "CursorMismatch",
        }
    }
}

/// Local state of one replica.
///
/// `ops` holds the id of every operation applied to `document`, in either
/// direction. `queue` holds locally generated operations, `send` what has
/// been offered to the network and `recv` everything received (applied or
/// not).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Replica {
    id: ReplicaId,
    document: Node,
    vars: Vars,
    ops: BTreeSet<Timestamp>,
    queue: Vec<Operation>,
    send: BTreeMap<Timestamp, Operation>,
    recv: BTreeMap<Timestamp, Operation>,
    history: Vec<Timestamp>,
}

impl Replica {
    pub fn new(id: impl Into<ReplicaId>) -> Self {
        Replica {
            id: id.into(),
            document: Node::default(),
            vars: Vars::new(),
            ops: BTreeSet::new(),
            queue: Vec::new(),
            send: BTreeMap::new(),
            recv: BTreeMap::new(),
            history: Vec::new(),
        }
    }

    pub fn id(&self) -> &ReplicaId {
        &self.id
    }

    /// Replica-state root; the document lives under `Key::Doc`.
    pub fn document(&self) -> &Node {
        &self.document
    }

    pub fn vars(&self) -> &Vars {
        &self.vars
    }

    pub fn ops(&self) -> &BTreeSet<Timestamp> {
        &self.ops
    }

    pub fn queue(&self) -> &[Operation] {
        &self.queue
    }

    pub fn send_buffer(&self) -> &BTreeMap<Timestamp, Operation> {
        &self.send
    }

    pub fn recv_buffer(&self) -> &BTreeMap<Timestamp, Operation> {
        &self.recv
    }

    /// Operation ids in the order they were applied here.
    pub fn history(&self) -> &[Timestamp] {
        &self.history
    }

    pub fn render(&self) -> String {
        render_json(&self.document)
    }

    pub fn resolve(&self, expr: &Expr) -> Result<Cursor, EvalError> {
        eval::resolve(&self.document, &self.vars, expr)
    }

    pub fn query(&self, expr: &Expr) -> Result<Answer, EvalError> {
        eval::query(&self.document, &self.vars, expr)
    }

    /// Executes a command locally. `yield` is a no-op here; network steps
    /// are driven by the simulator. Returns the operations generated.
    pub fn exec(&mut self, cmd: &Command) -> Result<Vec<Operation>, ReplicaError> {
        let mut generated = Vec::new();
        self.exec_into(cmd, &mut generated)?;
        Ok(generated)
    }

    fn exec_into(&mut self, cmd: &Command, out: &mut Vec<Operation>) -> Result<(), ReplicaError> {
        match cmd {
            Command::Let(x, e) => {
                let cur = self.resolve(e)?;
                self.vars.insert(x.clone(), cur);
            }
            Command::Assign(e, v) => {
                let cur = self.resolve(e)?;
                out.push(self.make_op(cur, Mutation::Assign(v.clone()))?);
            }
            Command::InsertAfter(e, v) => {
                let cur = self.resolve(e)?;
                out.push(self.make_op(cur, Mutation::Insert(v.clone()))?);
            }
            Command::Delete(e) => {
                let cur = self.resolve(e)?;
                out.push(self.make_op(cur, Mutation::Delete)?);
            }
            Command::Yield => {}
            Command::Seq(a, b) => {
                self.exec_into(a, out)?;
                self.exec_into(b, out)?;
            }
        }
        Ok(())
    }

    /// Generates an operation with counter one above every counter seen so
    /// far and `deps` equal to all applied ids, then applies it locally.
    pub fn make_op(&mut self, cursor: Cursor, mutation: Mutation) -> Result<Operation, ApplyError> {
        let counter = self.ops.iter().map(|t| t.counter).max().unwrap_or(0) + 1;
        let op = Operation {
            id: Timestamp {
                counter,
                replica: self.id.clone(),
            },
            deps: self.ops.clone(),
            cursor,
            mutation,
        };
        apply_op(&mut self.document, &op)?;
        self.ops.insert(op.id.clone());
        self.history.push(op.id.clone());
        self.queue.push(op.clone());
        Ok(op)
    }

    /// `send := send ∪ queue`. Returns the number of newly offered operations.
    pub fn yield_send(&mut self) -> usize {
        let before = self.send.len();
        for op in &self.queue {
            self.send.entry(op.id.clone()).or_insert_with(|| op.clone());
        }
        self.send.len() - before
    }

    /// Like [`yield_send`](Self::yield_send), but also offers every remote
    /// operation already applied here, so ops can travel over multi-hop
    /// topologies.
    pub fn yield_send_relay(&mut self) -> usize {
        let before = self.send.len();
        self.yield_send();
        for (id, op) in &self.recv {
            if self.ops.contains(id) {
                self.send.entry(id.clone()).or_insert_with(|| op.clone());
            }
        }
        self.send.len() - before
    }

    /// `recv := recv ∪ peer_send`. Returns the operations that were new.
    pub fn yield_recv<'a>(
        &mut self,
        peer_send: impl IntoIterator<Item = &'a Operation>,
    ) -> Vec<Operation> {
        let mut fresh = Vec::new();
        for op in peer_send {
            if !self.recv.contains_key(&op.id) {
                self.recv.insert(op.id.clone(), op.clone());
                fresh.push(op.clone());
            }
        }
        fresh
    }

    /// Received operations that have not been applied but whose
    /// dependencies all have, in ascending id order.
    pub fn ready(&self) -> Vec<&Operation> {
        self.recv
            .values()
            .filter(|op| !self.ops.contains(&op.id) && op.deps.is_subset(&self.ops))
            .collect()
    }

    /// Applies ready operations until none remains, lowest id first.
    pub fn apply_remote_ready(&mut self) -> Result<Vec<Timestamp>, ApplyError> {
        self.apply_remote_ready_with(|_| 0)
    }

    /// Applies ready operations until none remains; `choose` picks which of
    /// the currently ready operations (ascending order) goes next.
    pub fn apply_remote_ready_with(
        &mut self,
        mut choose: impl FnMut(usize) -> usize,
    ) -> Result<Vec<Timestamp>, ApplyError> {
        let mut applied = Vec::new();
        loop {
            let ready: Vec<Operation> = self.ready().into_iter().cloned().collect();
            if ready.is_empty() {
                return Ok(applied);
            }
            let op = &ready[choose(ready.len()).min(ready.len() - 1)];
            apply_op(&mut self.document, op)?;
            self.ops.insert(op.id.clone());
            self.history.push(op.id.clone());
            applied.push(op.id.clone());
        }
    }
}
