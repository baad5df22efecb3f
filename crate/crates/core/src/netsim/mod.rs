//! Deterministic simulated network over a set of replicas.
//!
//! The network is lossy-free but otherwise adversarial: a transfer may be
//! duplicated, may deliver only part of the sender's buffer, and ready
//! operations may be applied in any order. All randomness comes from one
//! seeded [`Rng`], so a `(seed, policy, commands)` triple replays exactly.

pub mod rng;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::apply::ApplyError;
use crate::codec::encode_operation;
use crate::ids::{ReplicaId, Timestamp};
use crate::op::Operation;
use crate::replica::{Command, Replica, ReplicaError};
use crate::state::state_equal;

pub use rng::Rng;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("UnknownReplica: {0}")]
    UnknownReplica(String),
    #[error("DuplicateReplica: {0}")]
    DuplicateReplica(String),
    #[error("NoFixpoint: no quiescent state after {0} rounds")]
    NoFixpoint(usize),
    #[error(transparent)]
    Replica(#[from] ReplicaError),
}

impl From<ApplyError> for SimError {
    fn from(e: ApplyError) -> Self {
        SimError::Replica(ReplicaError::Apply(e))
    }
}

/// Relative weights of the actions `run_random` picks from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Weights {
    pub send: u32,
    pub transfer: u32,
    pub apply: u32,
    pub noop: u32,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            send: 3,
            transfer: 4,
            apply: 3,
            noop: 1,
        }
    }
}

/// Network behaviour.
///
/// - `reorder`: probability that a transfer delivers a random subset of the
///   sender's buffer, and independently that an apply step picks ready
///   operations in random rather than ascending order.
/// - `dup`: how many times each transfer is delivered.
/// - `forward`: senders also offer remote operations they have applied.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub reorder: f64,
    pub dup: u32,
    pub forward: bool,
    pub weights: Weights,
}

impl Default for Policy {
    fn default() -> Self {
        Policy {
            reorder: 0.0,
            dup: 1,
            forward: false,
            weights: Weights::default(),
        }
    }
}

impl Policy {
    /// Parses `reorder=R,dup=D[,forward=true]`.
    pub fn parse(s: &str) -> Result<Policy, String> {
        let mut p = Policy::default();
        for part in s.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got `{part}`"))?;
            match k.trim() {
                "reorder" => {
                    let r: f64 = v.trim().parse().map_err(|_| format!("bad reorder `{v}`"))?;
                    if !(0.0..=1.0).contains(&r) {
                        return Err(format!("reorder out of [0,1]: {r}"));
                    }
                    p.reorder = r;
                }
                "dup" => {
                    let d: u32 = v.trim().parse().map_err(|_| format!("bad dup `{v}`"))?;
                    if d == 0 {
                        return Err("dup must be at least 1".into());
                    }
                    p.dup = d;
                }
                "forward" => {
                    p.forward = v.trim().parse().map_err(|_| format!("bad forward `{v}`"))?;
                }
                other => return Err(format!("unknown policy key `{other}`")),
            }
        }
        Ok(p)
    }
}

/// One network step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum YieldAction {
    Send(ReplicaId),
    Transfer { from: ReplicaId, to: ReplicaId },
    Apply(ReplicaId),
    Noop,
}

impl fmt::Display for YieldAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            YieldAction::Send(r) => write!(f, "send {r}"),
            YieldAction::Transfer { from, to } => write!(f, "transfer {from} {to}"),
            YieldAction::Apply(r) => write!(f, "apply {r}"),
            YieldAction::Noop => f.write_str("noop"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Simulation {
    replicas: BTreeMap<ReplicaId, Replica>,
    policy: Policy,
    rng: Rng,
    steps: u64,
    trace: Vec<String>,
    generated: Vec<Operation>,
}

impl Simulation {
    pub fn new<I, R>(ids: I, seed: u64, policy: Policy) -> Result<Self, SimError>
    where
        I: IntoIterator<Item = R>,
        R: Into<ReplicaId>,
    {
        let mut replicas = BTreeMap::new();
        for id in ids {
            let id = id.into();
            if replicas.contains_key(&id) {
                return Err(SimError::DuplicateReplica(id.to_string()));
            }
            replicas.insert(id.clone(), Replica::new(id));
        }
        Ok(Simulation {
            replicas,
            policy,
            rng: Rng::new(seed),
            steps: 0,
            trace: Vec::new(),
            generated: Vec::new(),
        })
    }

    /// Adds a replica with an empty state; fails if the name is taken.
    pub fn add_replica(&mut self, id: impl Into<ReplicaId>) -> Result<(), SimError> {
        let id = id.into();
        if self.replicas.contains_key(&id) {
            return Err(SimError::DuplicateReplica(id.to_string()));
        }
        self.replicas.insert(id.clone(), Replica::new(id));
        Ok(())
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn replica_ids(&self) -> Vec<ReplicaId> {
        self.replicas.keys().cloned().collect()
    }

    pub fn replicas(&self) -> impl Iterator<Item = &Replica> {
        self.replicas.values()
    }

    pub fn replica(&self, id: &ReplicaId) -> Result<&Replica, SimError> {
        self.replicas
            .get(id)
            .ok_or_else(|| SimError::UnknownReplica(id.to_string()))
    }

    fn replica_mut(&mut self, id: &ReplicaId) -> Result<&mut Replica, SimError> {
        self.replicas
            .get_mut(id)
            .ok_or_else(|| SimError::UnknownReplica(id.to_string()))
    }

    /// Every operation generated so far, in generation order.
    pub fn operations(&self) -> &[Operation] {
        &self.generated
    }

    /// Trace lines: `STEP <n> <action>[ | <json array of ops>]`.
    pub fn trace(&self) -> &[String] {
        &self.trace
    }

    pub fn trace_text(&self) -> String {
        let mut s = self.trace.join("\n");
        if !s.is_empty() {
            s.push('\n');
        }
        s
    }

    fn log(&mut self, action: &str, ops: &[&Operation]) {
        self.steps += 1;
        let mut line = format!("STEP {} {}", self.steps, action);
        if !ops.is_empty() {
            let enc: Vec<String> = ops.iter().map(|o| encode_operation(o)).collect();
            line.push_str(" | [");
            line.push_str(&enc.join(","));
            line.push(']');
        }
        self.trace.push(line);
    }

    /// Executes a command on one replica. A `yield` inside the command runs
    /// one random network step; everything else is local.
    pub fn exec(&mut self, id: &ReplicaId, cmd: &Command) -> Result<Vec<Operation>, SimError> {
        match cmd {
            Command::Seq(a, b) => {
                let mut ops = self.exec(id, a)?;
                ops.extend(self.exec(id, b)?);
                Ok(ops)
            }
            Command::Yield => {
                self.replica(id)?;
                self.random_step()?;
                Ok(Vec::new())
            }
            _ => {
                let ops = self.replica_mut(id)?.exec(cmd)?;
                let refs: Vec<&Operation> = ops.iter().collect();
                let line = format!("local {id}");
                self.log(&line, &refs);
                self.generated.extend(ops.iter().cloned());
                Ok(ops)
            }
        }
    }

    /// Performs one network step.
    pub fn step(&mut self, action: &YieldAction) -> Result<(), SimError> {
        match action {
            YieldAction::Noop => self.log("noop", &[]),
            YieldAction::Send(r) => {
                let forward = self.policy.forward;
                let rep = self.replica_mut(r)?;
                let before: BTreeSet<Timestamp> = rep.send_buffer().keys().cloned().collect();
                if forward {
                    rep.yield_send_relay();
                } else {
                    rep.yield_send();
                }
                let fresh: Vec<Operation> = rep
                    .send_buffer()
                    .values()
                    .filter(|o| !before.contains(&o.id))
                    .cloned()
                    .collect();
                let refs: Vec<&Operation> = fresh.iter().collect();
                self.log(&action.to_string(), &refs);
            }
            YieldAction::Transfer { from, to } => self.transfer(from, to, true)?,
            YieldAction::Apply(r) => {
                let shuffle = self.rng.chance(self.policy.reorder);
                let mut rng = self.rng.clone();
                let rep = self.replica_mut(r)?;
                let applied = if shuffle {
                    rep.apply_remote_ready_with(|n| rng.below(n))?
                } else {
                    rep.apply_remote_ready()?
                };
                let ops: Vec<Operation> = applied
                    .iter()
                    .map(|id| rep.recv_buffer()[id].clone())
                    .collect();
                self.rng = rng;
                let refs: Vec<&Operation> = ops.iter().collect();
                let tag = if shuffle { " shuffled" } else { "" };
                self.log(&format!("{action}{tag}"), &refs);
            }
        }
        Ok(())
    }

    /// Delivers `from`'s send buffer to `to`, `dup` times. With `lossy`, a
    /// reorder draw may restrict the delivery to a shuffled random subset.
    fn transfer(&mut self, from: &ReplicaId, to: &ReplicaId, lossy: bool) -> Result<(), SimError> {
        self.replica(to)?;
        let mut batch: Vec<Operation> = self
            .replica(from)?
            .send_buffer()
            .values()
            .cloned()
            .collect();
        let mut partial = false;
        if lossy && !batch.is_empty() && self.rng.chance(self.policy.reorder) {
            self.rng.shuffle(&mut batch);
            let keep = 1 + self.rng.below(batch.len());
            partial = keep < batch.len();
            batch.truncate(keep);
        }
        let dup = self.policy.dup.max(1);
        let rep = self.replica_mut(to)?;
        for _ in 0..dup {
            rep.yield_recv(batch.iter());
        }
        let refs: Vec<&Operation> = batch.iter().collect();
        let mut label = format!("transfer {from} {to}");
        if partial {
            label.push_str(" partial");
        }
        if dup > 1 {
            label.push_str(&format!(" x{dup}"));
        }
        self.log(&label, &refs);
        Ok(())
    }

    /// Picks and performs one action according to the policy weights.
    pub fn random_step(&mut self) -> Result<YieldAction, SimError> {
        let ids = self.replica_ids();
        if ids.is_empty() {
            self.step(&YieldAction::Noop)?;
            return Ok(YieldAction::Noop);
        }
        let w = self.policy.weights;
        let transfer = if ids.len() > 1 { w.transfer } else { 0 };
        let action = match self.rng.weighted(&[w.send, transfer, w.apply, w.noop]) {
            Some(0) => YieldAction::Send(ids[self.rng.below(ids.len())].clone()),
            Some(1) => {
                let a = self.rng.below(ids.len());
                let mut b = self.rng.below(ids.len() - 1);
                if b >= a {
                    b += 1;
                }
                YieldAction::Transfer {
                    from: ids[a].clone(),
                    to: ids[b].clone(),
                }
            }
            Some(2) => YieldAction::Apply(ids[self.rng.below(ids.len())].clone()),
            _ => YieldAction::Noop,
        };
        self.step(&action)?;
        Ok(action)
    }

    pub fn run_random(&mut self, steps: usize) -> Result<(), SimError> {
        for _ in 0..steps {
            self.random_step()?;
        }
        Ok(())
    }

    fn progress(&self) -> usize {
        self.replicas
            .values()
            .map(|r| r.ops().len() + r.recv_buffer().len() + r.send_buffer().len())
            .sum()
    }

    /// Runs send, full transfer over every link and apply on every replica
    /// until nothing changes. Links are `(from, to)` pairs.
    pub fn sync_over(&mut self, links: &[(ReplicaId, ReplicaId)]) -> Result<(), SimError> {
        for (a, b) in links {
            self.replica(a)?;
            self.replica(b)?;
        }
        let ids = self.replica_ids();
        let bound = self.generated.len() * ids.len().max(1) + 2;
        for _ in 0..bound {
            let before = self.progress();
            for id in &ids {
                self.step(&YieldAction::Send(id.clone()))?;
            }
            for (a, b) in links {
                self.transfer(a, b, false)?;
            }
            for id in &ids {
                self.step(&YieldAction::Apply(id.clone()))?;
            }
            if self.progress() == before {
                return Ok(());
            }
        }
        Err(SimError::NoFixpoint(bound))
    }

    /// `sync_over` the complete graph.
    pub fn sync_all(&mut self) -> Result<(), SimError> {
        let ids = self.replica_ids();
        let links: Vec<(ReplicaId, ReplicaId)> = ids
            .iter()
            .flat_map(|a| {
                ids.iter()
                    .filter(move |b| *b != a)
                    .map(move |b| (a.clone(), b.clone()))
            })
            .collect();
        self.sync_over(&links)
    }

    /// Delivers every generated operation to every replica once more and
    /// runs apply. Used to check that redelivery changes nothing.
    pub fn redeliver_all(&mut self) -> Result<(), SimError> {
        let ids = self.replica_ids();
        for a in &ids {
            for b in &ids {
                if a != b {
                    self.transfer(a, b, false)?;
                }
            }
        }
        for id in &ids {
            self.step(&YieldAction::Apply(id.clone()))?;
        }
        Ok(())
    }

    /// True iff every pair of replicas holds equal document states.
    pub fn converged(&self) -> bool {
        let mut it = self.replicas.values();
        match it.next() {
            None => true,
            Some(first) => it.all(|r| state_equal(first.document(), r.document())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Expr;
    use crate::value::Value;

    fn rid(s: &str) -> ReplicaId {
        ReplicaId::new(s)
    }

    fn set(sim: &mut Simulation, r: &str, key: &str, v: i64) {
        sim.exec(&rid(r), &Command::Assign(Expr::Doc.get(key), Value::int(v)))
            .unwrap();
    }

    #[test]
    fn policy_parsing() {
        let p = Policy::parse("reorder=0.5,dup=3").unwrap();
        assert_eq!(p.reorder, 0.5);
        assert_eq!(p.dup, 3);
        assert!(!p.forward);
        assert!(Policy::parse("reorder=2").is_err());
        assert!(Policy::parse("dup=0").is_err());
        assert!(Policy::parse("foo=1").is_err());
        assert_eq!(Policy::parse("").unwrap(), Policy::default());
    }

    #[test]
    fn unknown_and_duplicate_replica() {
        let mut sim = Simulation::new(["p"], 0, Policy::default()).unwrap();
        let err = sim.step(&YieldAction::Send(rid("z"))).unwrap_err();
        assert_eq!(err, SimError::UnknownReplica("z".into()));
        assert!(matches!(
            Simulation::new(["p", "p"], 0, Policy::default()),
            Err(SimError::DuplicateReplica(_))
        ));
        assert!(sim.trace().is_empty());
    }

    #[test]
    fn sync_all_converges() {
        let mut sim = Simulation::new(["p", "q", "r"], 1, Policy::default()).unwrap();
        set(&mut sim, "p", "a", 1);
        set(&mut sim, "q", "a", 2);
        set(&mut sim, "r", "b", 3);
        sim.sync_all().unwrap();
        assert!(sim.converged());
        for r in sim.replicas() {
            assert_eq!(r.ops().len(), 3);
            assert_eq!(r.render(), r#"{"a":{"?mv":[1,2]},"b":3}"#);
        }
    }

    #[test]
    fn no_relay_without_forwarding() {
        let links = [(rid("p"), rid("q")), (rid("q"), rid("r"))];
        let mut sim = Simulation::new(["p", "q", "r"], 1, Policy::default()).unwrap();
        set(&mut sim, "p", "a", 1);
        sim.sync_over(&links).unwrap();
        assert_eq!(sim.replica(&rid("q")).unwrap().ops().len(), 1);
        assert!(sim.replica(&rid("r")).unwrap().ops().is_empty());

        let policy = Policy {
            forward: true,
            ..Policy::default()
        };
        let mut sim = Simulation::new(["p", "q", "r"], 1, policy).unwrap();
        set(&mut sim, "p", "a", 1);
        sim.sync_over(&links).unwrap();
        assert!(sim.converged());
        assert_eq!(sim.replica(&rid("r")).unwrap().ops().len(), 1);
    }

    #[test]
    fn duplicated_reordered_network_converges() {
        for seed in 0..20 {
            let policy = Policy::parse("reorder=0.5,dup=3").unwrap();
            let mut sim = Simulation::new(["p", "q", "r"], seed, policy).unwrap();
            for (i, r) in ["p", "q", "r", "p", "q"].iter().enumerate() {
                set(&mut sim, r, &format!("k{}", i % 2), i as i64);
                sim.run_random(5).unwrap();
            }
            sim.sync_all().unwrap();
            assert!(sim.converged(), "seed {seed}");
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let run = |seed| {
            let policy = Policy::parse("reorder=0.5,dup=2").unwrap();
            let mut sim = Simulation::new(["p", "q"], seed, policy).unwrap();
            set(&mut sim, "p", "a", 1);
            sim.run_random(20).unwrap();
            set(&mut sim, "q", "a", 2);
            sim.run_random(20).unwrap();
            sim.trace_text()
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }

    #[test]
    fn redelivery_is_identity() {
        let mut sim = Simulation::new(["p", "q"], 2, Policy::default()).unwrap();
        set(&mut sim, "p", "a", 1);
        set(&mut sim, "q", "b", 2);
        sim.sync_all().unwrap();
        let before: Vec<Replica> = sim.replicas().cloned().collect();
        sim.redeliver_all().unwrap();
        let after: Vec<Replica> = sim.replicas().cloned().collect();
        assert_eq!(before, after);
    }

    #[test]
    fn trace_line_format() {
        let mut sim = Simulation::new(["p"], 0, Policy::default()).unwrap();
        sim.step(&YieldAction::Noop).unwrap();
        set(&mut sim, "p", "a", 1);
        assert_eq!(sim.trace()[0], "STEP 1 noop");
        assert!(sim.trace()[1].starts_with("STEP 2 local p | [{\"cur\":"));
    }
}
