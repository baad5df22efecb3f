use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::apply::apply_op;
use crate::cursor::{Key, TaggedKey};
use crate::ids::Timestamp;
use crate::netsim::Rng;
use crate::op::{Mutation, Operation};
use crate::replica::Replica;
use crate::state::{render_json, state_equal, Link, Node};

use super::{gen_execution, ExecutionTrace, GenParams, OpWeights};

/// Largest number of histories enumerated exhaustively (8!).
pub const EXTENSION_BOUND: usize = 40_320;

/// Histories sampled when a trace has more than [`EXTENSION_BOUND`].
const SAMPLED_HISTORIES: usize = 2_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HarnessError {
    #[error("TooManyExtensions: more than {bound} causal orders")]
    TooManyExtensions { bound: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Divergence {
    pub first: Vec<Timestamp>,
    pub second: Vec<Timestamp>,
    pub diff: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Diverged(Divergence),
    /// A history violated an ordering lemma or failed to apply.
    Broken {
        history: Vec<Timestamp>,
        message: String,
    },
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

fn fmt_history(h: &[Timestamp]) -> String {
    h.iter()
        .map(Timestamp::to_string)
        .collect::<Vec<_>>()
        .join(" ")
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => f.write_str("pass"),
            Verdict::Diverged(d) => write!(
                f,
                "diverged\n  history A: {}\n  history B: {}\n{}",
                fmt_history(&d.first),
                fmt_history(&d.second),
                d.diff
            ),
            Verdict::Broken { history, message } => {
                write!(f, "broken after {}: {message}", fmt_history(history))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvergenceReport {
    pub verdict: Verdict,
    pub histories: usize,
    pub sampled: bool,
}

/// Indices of `ops` each op depends on, restricted to the trace.
fn dep_indices(ops: &[Operation]) -> Vec<Vec<usize>> {
    let index: BTreeMap<&Timestamp, usize> =
        ops.iter().enumerate().map(|(i, o)| (&o.id, i)).collect();
    ops.iter()
        .map(|o| {
            o.deps
                .iter()
                .filter_map(|d| index.get(d).copied())
                .collect()
        })
        .collect()
}

fn ready(deps: &[Vec<usize>], placed: &[bool], i: usize) -> bool {
    !placed[i] && deps[i].iter().all(|&d| placed[d])
}

/// Every total order of `ops` consistent with the deps relation.
pub fn linear_extensions(
    ops: &[Operation],
    bound: usize,
) -> Result<Vec<Vec<Timestamp>>, HarnessError> {
    fn go(
        ops: &[Operation],
        deps: &[Vec<usize>],
        placed: &mut Vec<bool>,
        cur: &mut Vec<usize>,
        out: &mut Vec<Vec<Timestamp>>,
        bound: usize,
    ) -> Result<(), HarnessError> {
        if cur.len() == ops.len() {
            if out.len() == bound {
                return Err(HarnessError::TooManyExtensions { bound });
            }
            out.push(cur.iter().map(|&i| ops[i].id.clone()).collect());
            return Ok(());
        }
        for i in 0..ops.len() {
            if ready(deps, placed, i) {
                placed[i] = true;
                cur.push(i);
                go(ops, deps, placed, cur, out, bound)?;
                cur.pop();
                placed[i] = false;
            }
        }
        Ok(())
    }
    let deps = dep_indices(ops);
    let mut out = Vec::new();
    go(
        ops,
        &deps,
        &mut vec![false; ops.len()],
        &mut Vec::new(),
        &mut out,
        bound,
    )?;
    Ok(out)
}

fn count_extensions(
    deps: &[Vec<usize>],
    placed: &mut Vec<bool>,
    depth: usize,
    cap: usize,
) -> usize {
    if depth == deps.len() {
        return 1;
    }
    let mut total = 0;
    for i in 0..deps.len() {
        if ready(deps, placed, i) {
            placed[i] = true;
            total += count_extensions(deps, placed, depth + 1, cap - total.min(cap));
            placed[i] = false;
            if total > cap {
                return total;
            }
        }
    }
    total
}

type Chains = BTreeMap<Vec<TaggedKey>, Vec<Timestamp>>;

fn chains(state: &Node) -> Chains {
    state
        .lists()
        .into_iter()
        .map(|(p, l)| (p, l.chain()))
        .collect()
}

fn is_subsequence(short: &[Timestamp], long: &[Timestamp]) -> bool {
    let mut it = long.iter();
    short.iter().all(|x| it.any(|y| y == x))
}

/// Earlier list orders persist: each old chain is a subsequence of the new.
fn check_order_preserved(before: &Chains, after: &Chains) -> Result<(), String> {
    for (path, old) in before {
        let new = after
            .get(path)
            .ok_or_else(|| format!("list at {path:?} disappeared"))?;
        if !is_subsequence(old, new) {
            return Err(format!(
                "list order not preserved at {path:?}: {old:?} is not a subsequence of {new:?}"
            ));
        }
    }
    Ok(())
}

/// Each applied insert sits strictly between the neighbours it had at its
/// origin.
fn check_inserts_between(
    trace: &ExecutionTrace,
    state: &Node,
    applied: &BTreeSet<Timestamp>,
) -> Result<(), String> {
    for (id, b) in &trace.inserts {
        if !applied.contains(id) {
            continue;
        }
        let list = state
            .lookup(&b.list)
            .and_then(Node::as_list)
            .ok_or_else(|| format!("list for insert {id} missing"))?;
        let chain = list.chain();
        let pos = |t: &Timestamp| chain.iter().position(|x| x == t);
        let lo: isize = match &b.prev {
            Key::Head => -1,
            Key::Id(t) => pos(t).ok_or_else(|| format!("prev {t} of {id} not linked"))? as isize,
            other => return Err(format!("bad prev key {other}")),
        };
        let hi: isize = match &b.next {
            Link::Tail => chain.len() as isize,
            Link::Elem(t) => pos(t).ok_or_else(|| format!("next {t} of {id} not linked"))? as isize,
        };
        let at = pos(id).ok_or_else(|| format!("insert {id} not linked"))? as isize;
        if !(lo < at && at < hi) {
            return Err(format!(
                "insert {id} at {at} outside its origin interval ({lo}, {hi})"
            ));
        }
    }
    Ok(())
}

/// Applies a history to a fresh state, checking both ordering lemmas after
/// every step.
pub fn replay(trace: &ExecutionTrace, history: &[Timestamp]) -> Result<Node, String> {
    let by_id: BTreeMap<&Timestamp, &Operation> = trace.ops.iter().map(|o| (&o.id, o)).collect();
    let mut state = Node::default();
    let mut applied = BTreeSet::new();
    for id in history {
        let op = by_id.get(id).ok_or_else(|| format!("unknown op {id}"))?;
        let before = chains(&state);
        apply_op(&mut state, op).map_err(|e| e.to_string())?;
        applied.insert(id.clone());
        check_order_preserved(&before, &chains(&state))?;
        check_inserts_between(trace, &state, &applied)?;
    }
    Ok(state)
}

fn diff_states(a: &Node, b: &Node) -> String {
    let (ra, rb) = (render_json(a), render_json(b));
    if ra != rb {
        format!("  render A: {ra}\n  render B: {rb}")
    } else {
        format!("  renders agree ({ra}) but states differ\n  state A: {a:?}\n  state B: {b:?}")
    }
}

struct Search<'a> {
    trace: &'a ExecutionTrace,
    deps: Vec<Vec<usize>>,
    reference: Option<(Node, Vec<Timestamp>)>,
    leaves: usize,
}

impl Search<'_> {
    fn ids(&self, order: &[usize]) -> Vec<Timestamp> {
        order
            .iter()
            .map(|&i| self.trace.ops[i].id.clone())
            .collect()
    }

    fn step(
        &self,
        state: &Node,
        applied: &mut BTreeSet<Timestamp>,
        i: usize,
        order: &[usize],
    ) -> Result<Node, Verdict> {
        let op = &self.trace.ops[i];
        let mut next = state.clone();
        let broken = |message: String| Verdict::Broken {
            history: self.ids(order),
            message,
        };
        apply_op(&mut next, op).map_err(|e| broken(e.to_string()))?;
        applied.insert(op.id.clone());
        check_order_preserved(&chains(state), &chains(&next)).map_err(broken)?;
        check_inserts_between(self.trace, &next, applied).map_err(broken)?;
        Ok(next)
    }

    fn leaf(&mut self, state: Node, order: &[usize]) -> Result<(), Verdict> {
        self.leaves += 1;
        match &self.reference {
            None => {
                self.reference = Some((state, self.ids(order)));
                Ok(())
            }
            Some((reference, first)) => {
                if state_equal(reference, &state) {
                    Ok(())
                } else {
                    Err(Verdict::Diverged(Divergence {
                        first: first.clone(),
                        second: self.ids(order),
                        diff: diff_states(reference, &state),
                    }))
                }
            }
        }
    }

    /// Depth-first over all causal orders, sharing each prefix's state.
    fn dfs(
        &mut self,
        state: &Node,
        placed: &mut Vec<bool>,
        applied: &mut BTreeSet<Timestamp>,
        order: &mut Vec<usize>,
    ) -> Result<(), Verdict> {
        if order.len() == self.trace.ops.len() {
            return self.leaf(state.clone(), order);
        }
        for i in 0..self.trace.ops.len() {
            if ready(&self.deps, placed, i) {
                placed[i] = true;
                order.push(i);
                let next = self.step(state, applied, i, order)?;
                self.dfs(&next, placed, applied, order)?;
                applied.remove(&self.trace.ops[i].id);
                order.pop();
                placed[i] = false;
            }
        }
        Ok(())
    }

    fn sample(&mut self, seed: u64, count: usize) -> Result<(), Verdict> {
        let mut rng = Rng::new(seed);
        let n = self.trace.ops.len();
        for _ in 0..count {
            let mut placed = vec![false; n];
            let mut applied = BTreeSet::new();
            let mut order = Vec::new();
            let mut state = Node::default();
            while order.len() < n {
                let choices: Vec<usize> =
                    (0..n).filter(|&i| ready(&self.deps, &placed, i)).collect();
                let i = choices[rng.below(choices.len())];
                placed[i] = true;
                order.push(i);
                state = self.step(&state, &mut applied, i, &order)?;
            }
            self.leaf(state, &order)?;
        }
        Ok(())
    }
}

/// Applies every causal order of the trace to a fresh state and checks all
/// end states are equal. Traces with more than [`EXTENSION_BOUND`] orders
/// are checked on a seeded sample instead.
pub fn check_convergence(trace: &ExecutionTrace) -> ConvergenceReport {
    let deps = dep_indices(&trace.ops);
    let total = count_extensions(&deps, &mut vec![false; deps.len()], 0, EXTENSION_BOUND);
    let mut search = Search {
        trace,
        deps,
        reference: None,
        leaves: 0,
    };
    let sampled = total > EXTENSION_BOUND;
    let result = if sampled {
        search.sample(trace.ops.len() as u64, SAMPLED_HISTORIES)
    } else {
        let n = trace.ops.len();
        search.dfs(
            &Node::default(),
            &mut vec![false; n],
            &mut BTreeSet::new(),
            &mut Vec::new(),
        )
    };
    ConvergenceReport {
        verdict: result.err().unwrap_or(Verdict::Pass),
        histories: search.leaves,
        sampled,
    }
}

/// Index pairs `(i, j)`, `i < j`, of concurrent operations.
pub fn concurrent_pairs(trace: &ExecutionTrace) -> Vec<(usize, usize)> {
    let ops = &trace.ops;
    let mut out = Vec::new();
    for i in 0..ops.len() {
        for j in i + 1..ops.len() {
            if ops[i].concurrent_with(&ops[j]) {
                out.push((i, j));
            }
        }
    }
    out
}

fn apply_all<'a>(
    state: &mut Node,
    ops: impl IntoIterator<Item = &'a Operation>,
) -> Result<(), String> {
    for op in ops {
        apply_op(state, op).map_err(|e| format!("{}: {e}", op.id))?;
    }
    Ok(())
}

/// Checks that ops `a` and `b` commute after the smallest and the largest
/// causally valid prefix that excludes both.
pub fn check_pair(trace: &ExecutionTrace, a: usize, b: usize) -> Result<(), String> {
    let (oa, ob) = (&trace.ops[a], &trace.ops[b]);
    if !oa.concurrent_with(ob) {
        return Ok(());
    }
    let mut smallest: Vec<&Operation> = trace
        .ops
        .iter()
        .filter(|o| oa.deps.contains(&o.id) || ob.deps.contains(&o.id))
        .collect();
    let mut largest: Vec<&Operation> = trace
        .ops
        .iter()
        .filter(|o| {
            o.id != oa.id && o.id != ob.id && !o.deps.contains(&oa.id) && !o.deps.contains(&ob.id)
        })
        .collect();
    // Ascending Lamport order respects deps, so it is a valid history.
    smallest.sort_by(|x, y| x.id.cmp(&y.id));
    largest.sort_by(|x, y| x.id.cmp(&y.id));
    for prefix in [smallest, largest] {
        let mut base = Node::default();
        apply_all(&mut base, prefix.iter().copied())?;
        let mut ab = base.clone();
        apply_all(&mut ab, [oa, ob])?;
        let mut ba = base;
        apply_all(&mut ba, [ob, oa])?;
        if !state_equal(&ab, &ba) {
            return Err(format!(
                "{} and {} do not commute after {} ops\n{}",
                oa.id,
                ob.id,
                prefix.len(),
                diff_states(&ab, &ba)
            ));
        }
    }
    Ok(())
}

/// [`check_pair`] over every concurrent pair of the trace.
pub fn check_pairwise_commutativity(trace: &ExecutionTrace) -> Verdict {
    for (a, b) in concurrent_pairs(trace) {
        if let Err(message) = check_pair(trace, a, b) {
            return Verdict::Broken {
                history: vec![trace.ops[a].id.clone(), trace.ops[b].id.clone()],
                message,
            };
        }
    }
    Verdict::Pass
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairClass {
    InsertInsert,
    DeleteAny,
    AssignAny,
}

impl PairClass {
    pub const ALL: [PairClass; 3] = [
        PairClass::InsertInsert,
        PairClass::DeleteAny,
        PairClass::AssignAny,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PairClass::InsertInsert => "insert/insert",
            PairClass::DeleteAny => "delete/any",
            PairClass::AssignAny => "assign/any",
        }
    }

    pub fn matches(self, a: &Operation, b: &Operation) -> bool {
        let is = |o: &Operation, f: fn(&Mutation) -> bool| f(&o.mutation);
        let ins = |m: &Mutation| matches!(m, Mutation::Insert(_));
        let del = |m: &Mutation| matches!(m, Mutation::Delete);
        let asg = |m: &Mutation| matches!(m, Mutation::Assign(_));
        match self {
            PairClass::InsertInsert => is(a, ins) && is(b, ins),
            PairClass::DeleteAny => is(a, del) || is(b, del),
            PairClass::AssignAny => is(a, asg) || is(b, asg),
        }
    }

    fn params(self) -> GenParams {
        let weights = match self {
            PairClass::InsertInsert => OpWeights {
                assign: 1,
                insert: 8,
                delete: 1,
            },
            PairClass::DeleteAny => OpWeights {
                assign: 3,
                insert: 3,
                delete: 4,
            },
            PairClass::AssignAny => OpWeights {
                assign: 6,
                insert: 3,
                delete: 1,
            },
        };
        GenParams {
            replicas: 2,
            ops: 8,
            sync_probability: 0.5,
            container_probability: 0.2,
            weights,
        }
    }
}

/// A concurrent pair inside the execution it was drawn from.
#[derive(Clone, Debug)]
pub struct PairCase {
    pub trace: ExecutionTrace,
    pub a: usize,
    pub b: usize,
}

/// Draws a concurrent pair of the given class. Insert pairs on the same list
/// are preferred when one exists.
pub fn sample_pair(seed: u64, class: PairClass) -> Option<PairCase> {
    let params = class.params();
    let mut rng = Rng::new(seed);
    for attempt in 0..1_000u64 {
        let trace = gen_execution(seed.wrapping_mul(1_000_003).wrapping_add(attempt), &params);
        let pairs: Vec<(usize, usize)> = concurrent_pairs(&trace)
            .into_iter()
            .filter(|&(a, b)| class.matches(&trace.ops[a], &trace.ops[b]))
            .collect();
        if pairs.is_empty() {
            continue;
        }
        let same_list: Vec<(usize, usize)> = pairs
            .iter()
            .copied()
            .filter(|&(a, b)| trace.ops[a].cursor.path == trace.ops[b].cursor.path)
            .collect();
        let pool = if class == PairClass::InsertInsert && !same_list.is_empty() {
            same_list
        } else {
            pairs
        };
        let (a, b) = pool[rng.below(pool.len())];
        return Some(PairCase { trace, a, b });
    }
    None
}

/// Repeatedly drops an operation nothing depends on while `failing` still
/// holds, returning a trace where no single such removal keeps it failing.
pub fn shrink(trace: &ExecutionTrace, failing: impl Fn(&ExecutionTrace) -> bool) -> ExecutionTrace {
    let mut cur = trace.clone();
    'outer: loop {
        let maximal: Vec<Timestamp> = cur
            .ops
            .iter()
            .filter(|o| !cur.ops.iter().any(|x| x.deps.contains(&o.id)))
            .map(|o| o.id.clone())
            .collect();
        for id in maximal.into_iter().rev() {
            let mut keep = cur.ids();
            keep.remove(&id);
            let candidate = cur.restrict(&keep);
            debug_assert!(candidate.causally_closed());
            if failing(&candidate) {
                cur = candidate;
                continue 'outer;
            }
        }
        return cur;
    }
}

/// Delivers the trace's operations to fresh observer replicas under
/// `schedules` random delivery orders (partial batches, duplicates, random
/// apply order) and checks each ends equal to a plain replay.
pub fn spot_check_schedules(
    trace: &ExecutionTrace,
    schedules: usize,
    seed: u64,
) -> Result<(), String> {
    let history: Vec<Timestamp> = trace.ops.iter().map(|o| o.id.clone()).collect();
    let reference = replay(trace, &history)?;
    let mut rng = Rng::new(seed);
    for s in 0..schedules {
        let mut observer = Replica::new(format!("obs{s}"));
        let mut pending: Vec<&Operation> = trace.ops.iter().collect();
        rng.shuffle(&mut pending);
        let mut guard = 0;
        while observer.ops().len() < trace.ops.len() {
            guard += 1;
            if guard > 10 * trace.ops.len() + 10 {
                return Err(format!("schedule {s}: delivery stalled"));
            }
            let take = 1 + rng.below(pending.len().max(1));
            let batch: Vec<&Operation> = pending.iter().take(take).copied().collect();
            observer.yield_recv(batch.iter().copied());
            if rng.chance(0.3) {
                observer.yield_recv(batch.iter().copied());
            }
            pending.drain(..take.min(pending.len()));
            observer
                .apply_remote_ready_with(|n| rng.below(n))
                .map_err(|e| format!("schedule {s}: {e}"))?;
        }
        if !state_equal(observer.document(), &reference) {
            return Err(format!(
                "schedule {s} diverged from replay\n{}",
                diff_states(&reference, observer.document())
            ));
        }
    }
    Ok(())
}
