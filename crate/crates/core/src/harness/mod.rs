//! Random valid executions and the convergence / commutativity oracles.

mod oracle;

use std::collections::{BTreeMap, BTreeSet};

use crate::cursor::{Key, Tag, TaggedKey};
use crate::eval::Expr;
use crate::ids::{ReplicaId, Timestamp};
use crate::netsim::{Policy, Rng, Simulation, YieldAction};
use crate::op::{Mutation, Operation};
use crate::replica::Command;
use crate::state::{Entries, Link, Node};
use crate::value::Value;

pub use oracle::{
    check_convergence, check_pair, check_pairwise_commutativity, concurrent_pairs,
    linear_extensions, replay, sample_pair, shrink, spot_check_schedules, ConvergenceReport,
    Divergence, HarnessError, PairCase, PairClass, Verdict, EXTENSION_BOUND,
};

/// Relative weights of generated command kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OpWeights {
    pub assign: u32,
    pub insert: u32,
    pub delete: u32,
}

impl Default for OpWeights {
    fn default() -> Self {
        OpWeights {
            assign: 4,
            insert: 4,
            delete: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenParams {
    pub replicas: usize,
    /// Total number of operations across all replicas.
    pub ops: usize,
    /// Chance, before each command, of one send / transfer / apply round
    /// between two random replicas.
    pub sync_probability: f64,
    /// Chance that a generated value is `{}` or `[]`.
    pub container_probability: f64,
    pub weights: OpWeights,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            replicas: 3,
            ops: 8,
            sync_probability: 0.4,
            container_probability: 0.25,
            weights: OpWeights::default(),
        }
    }
}

/// Where an insert landed at its origin: right after `prev`, before `next`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InsertBounds {
    pub list: Vec<TaggedKey>,
    pub prev: Key,
    pub next: Link,
}

/// The operations of one execution plus what is needed to check them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecutionTrace {
    pub replicas: Vec<ReplicaId>,
    /// Every operation, in generation order.
    pub ops: Vec<Operation>,
    /// Per-replica generation order.
    pub by_replica: BTreeMap<ReplicaId, Vec<Timestamp>>,
    pub inserts: BTreeMap<Timestamp, InsertBounds>,
}

impl ExecutionTrace {
    pub fn ids(&self) -> BTreeSet<Timestamp> {
        self.ops.iter().map(|o| o.id.clone()).collect()
    }

    /// Keeps only the operations in `keep`.
    pub fn restrict(&self, keep: &BTreeSet<Timestamp>) -> ExecutionTrace {
        ExecutionTrace {
            replicas: self.replicas.clone(),
            ops: self
                .ops
                .iter()
                .filter(|o| keep.contains(&o.id))
                .cloned()
                .collect(),
            by_replica: self
                .by_replica
                .iter()
                .map(|(r, ids)| {
                    (
                        r.clone(),
                        ids.iter().filter(|t| keep.contains(t)).cloned().collect(),
                    )
                })
                .collect(),
            inserts: self
                .inserts
                .iter()
                .filter(|(t, _)| keep.contains(t))
                .map(|(t, b)| (t.clone(), b.clone()))
                .collect(),
        }
    }

    /// True iff every dependency of a kept op is itself in the trace.
    pub fn causally_closed(&self) -> bool {
        let ids = self.ids();
        self.ops.iter().all(|o| o.deps.is_subset(&ids))
    }
}

pub fn replica_name(i: usize) -> ReplicaId {
    const NAMES: [&str; 3] = ["p", "q", "r"];
    match NAMES.get(i) {
        Some(n) => ReplicaId::new(*n),
        None => ReplicaId::new(format!("r{i}")),
    }
}

#[derive(Default)]
struct Targets {
    assign: Vec<Expr>,
    insert: Vec<Expr>,
    delete: Vec<Expr>,
}

const MAX_DEPTH: usize = 3;
const KEY_POOL: [&str; 3] = ["a", "b", "c"];

/// Collects every command target reachable through live structure at the
/// position `key` inside `entries`, reached by `expr`.
fn collect(entries: &Entries, key: &Key, expr: Expr, depth: usize, out: &mut Targets) {
    out.assign.push(expr.clone());
    if depth >= MAX_DEPTH {
        return;
    }
    if let Some(map) = entries
        .child(&TaggedKey::new(Tag::Map, key.clone()))
        .and_then(Node::as_map)
    {
        let live: Vec<String> = map
            .entries()
            .live_keys()
            .into_iter()
            .filter_map(|k| match k {
                Key::Str(s) => Some(s.clone()),
                _ => None,
            })
            .collect();
        for k in &live {
            out.delete.push(expr.clone().get(k.clone()));
            collect(
                map.entries(),
                &Key::str(k.clone()),
                expr.clone().get(k.clone()),
                depth + 1,
                out,
            );
        }
        for k in KEY_POOL.iter().filter(|k| !live.iter().any(|l| l == *k)) {
            out.assign.push(expr.clone().get(*k));
        }
    }
    if let Some(list) = entries
        .child(&TaggedKey::new(Tag::List, key.clone()))
        .and_then(Node::as_list)
    {
        let live = list.live_elements();
        out.insert.push(expr.clone().idx(0));
        for (i, id) in live.iter().enumerate() {
            let e = expr.clone().idx(i + 1);
            out.insert.push(e.clone());
            out.delete.push(e.clone());
            collect(list.entries(), &Key::Id(id.clone()), e, depth + 1, out);
        }
    }
}

fn random_value(rng: &mut Rng, container_probability: f64) -> Value {
    if rng.chance(container_probability) {
        return if rng.below(2) == 0 {
            Value::EmptyMap
        } else {
            Value::EmptyList
        };
    }
    match rng.below(5) {
        0 | 1 => Value::int(rng.below(10) as i64),
        2 => Value::str(["a", "b", "c", "d", "e"][rng.below(5)]),
        3 => Value::Bool(rng.below(2) == 0),
        _ => Value::Null,
    }
}

/// A random command that is valid against `replica_doc` (a replica-state
/// root) as it stands.
pub fn gen_command(replica_doc: &Node, rng: &mut Rng, params: &GenParams) -> Command {
    let mut t = Targets::default();
    let root = replica_doc.entries().expect("replica root is a map");
    collect(root, &Key::Doc, Expr::Doc, 0, &mut t);
    let has_container = !t.insert.is_empty() || t.assign.len() > 1;
    if !has_container {
        let v = if rng.below(2) == 0 {
            Value::EmptyMap
        } else {
            Value::EmptyList
        };
        return Command::Assign(Expr::Doc, v);
    }
    // The root keeps its container; only inner positions are reassigned.
    t.assign.retain(|e| *e != Expr::Doc);
    let w = params.weights;
    let weights = [
        if t.assign.is_empty() { 0 } else { w.assign },
        if t.insert.is_empty() { 0 } else { w.insert },
        if t.delete.is_empty() { 0 } else { w.delete },
    ];
    match rng.weighted(&weights) {
        Some(1) => {
            let e = t.insert[rng.below(t.insert.len())].clone();
            Command::InsertAfter(e, random_value(rng, params.container_probability))
        }
        Some(2) => Command::Delete(t.delete[rng.below(t.delete.len())].clone()),
        Some(0) => {
            let e = t.assign[rng.below(t.assign.len())].clone();
            Command::Assign(e, random_value(rng, params.container_probability))
        }
        _ => {
            // Only the root is assignable: add a key to the root map or an
            // element to the root list.
            Command::Assign(Expr::Doc.get("a"), random_value(rng, 0.0))
        }
    }
}

/// Generates a random valid execution. Deterministic in `seed`; every
/// command is built from the issuing replica's live state, so replaying it
/// never gets stuck.
pub fn gen_execution(seed: u64, params: &GenParams) -> ExecutionTrace {
    let ids: Vec<ReplicaId> = (0..params.replicas.max(1)).map(replica_name).collect();
    let mut sim = Simulation::new(ids.clone(), seed, Policy::default()).expect("distinct names");
    let mut rng = Rng::new(seed ^ 0x5EED_0FC0_FFEE);
    let mut trace = ExecutionTrace {
        replicas: ids.clone(),
        ops: Vec::new(),
        by_replica: ids.iter().map(|r| (r.clone(), Vec::new())).collect(),
        inserts: BTreeMap::new(),
    };

    for _ in 0..params.ops {
        if ids.len() > 1 && rng.chance(params.sync_probability) {
            let a = rng.below(ids.len());
            let mut b = rng.below(ids.len() - 1);
            if b >= a {
                b += 1;
            }
            let (from, to) = (ids[a].clone(), ids[b].clone());
            sim.step(&YieldAction::Send(from.clone()))
                .expect("known replica");
            sim.step(&YieldAction::Transfer {
                from,
                to: to.clone(),
            })
            .expect("known replica");
            sim.step(&YieldAction::Apply(to)).expect("valid ops apply");
        }
        let who = ids[rng.below(ids.len())].clone();
        let replica = sim.replica(&who).expect("known replica");
        let cmd = gen_command(replica.document(), &mut rng, params);
        let bounds = match &cmd {
            Command::InsertAfter(e, _) => {
                let cur = replica.resolve(e).expect("generated target resolves");
                let list = replica
                    .document()
                    .lookup(&cur.path)
                    .and_then(Node::as_list)
                    .expect("insert target is a list");
                Some(InsertBounds {
                    list: cur.path.clone(),
                    prev: cur.key.clone(),
                    next: list.next_of(&cur.key).cloned().expect("prev is linked"),
                })
            }
            _ => None,
        };
        let ops = sim
            .exec(&who, &cmd)
            .unwrap_or_else(|e| panic!("generated command `{cmd}` failed: {e}"));
        for op in ops {
            if let (Some(b), Mutation::Insert(_)) = (&bounds, &op.mutation) {
                trace.inserts.insert(op.id.clone(), b.clone());
            }
            trace
                .by_replica
                .get_mut(&who)
                .expect("known")
                .push(op.id.clone());
            trace.ops.push(op);
        }
    }
    trace
}
