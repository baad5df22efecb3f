//! Script language: the command grammar plus simulation directives, and a
//! runner that drives a [`Simulation`].
//!
//! ```text
//! replica p;                        // switch (creating on first use)
//! doc := {};                        // any command
//! doc.get("a").keys;                // query, printed
//! sync;                             // deliver everything everywhere
//! yield 5;                          // five random network steps
//! render; render q;                 // print a projection
//! expect q {"a":1};                 // byte-exact check
//! ```

mod parser;

use std::collections::BTreeMap;
use std::fmt;

use crate::eval::Expr;
use crate::ids::ReplicaId;
use crate::netsim::{Policy, SimError, Simulation};
use crate::replica::Command;

pub use parser::{parse_command, parse_expr, parse_script, ParseError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Directive {
    ReplicaSwitch(ReplicaId),
    Cmd(Command),
    Query(Expr),
    Sync,
    YieldSteps(usize),
    Render(Option<ReplicaId>),
    Expect(Option<ReplicaId>, String),
}

/// A parsed script; each directive carries its source line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Script {
    pub directives: Vec<(usize, Directive)>,
}

pub(crate) enum Statement {
    Cmd(Command),
    Query(Expr),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("directive {index} (line {line}) on replica {replica}: {message}")]
    Exec {
        index: usize,
        line: usize,
        replica: String,
        name: String,
        message: String,
    },
    #[error("directive {index} (line {line}): expect failed on replica {replica}\n  expected: {expected}\n  actual:   {actual}")]
    ExpectMismatch {
        index: usize,
        line: usize,
        replica: String,
        expected: String,
        actual: String,
    },
}

impl RunError {
    /// Short error name (`IndexOutOfBounds`, `ExpectMismatch`, ...).
    pub fn name(&self) -> &str {
        match self {
            RunError::Parse(_) => "SyntaxError",
            RunError::Exec { name, .. } => name,
            RunError::ExpectMismatch { .. } => "ExpectMismatch",
        }
    }
}

fn sim_error_name(e: &SimError) -> String {
    match e {
        SimError::Replica(r) => r.name().to_string(),
        SimError::UnknownReplica(_) => "UnknownReplica".into(),
        SimError::DuplicateReplica(_) => "DuplicateReplica".into(),
        SimError::NoFixpoint(_) => "NoFixpoint".into(),
    }
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Final render of every replica.
    pub renders: BTreeMap<ReplicaId, String>,
    /// Lines printed by `render` and query directives.
    pub output: Vec<String>,
    pub sim: Simulation,
}

impl fmt::Display for RunOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in &self.output {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

/// Runs a parsed script. Directives execute in order; commands run on the
/// current replica. The first error aborts the run.
pub fn run_script(script: &Script, seed: u64, policy: Policy) -> Result<RunOutput, RunError> {
    let mut sim = Simulation::new(Vec::<ReplicaId>::new(), seed, policy).expect("no replicas");
    let mut current: Option<ReplicaId> = None;
    let mut output = Vec::new();

    for (index, (line, d)) in script.directives.iter().enumerate() {
        let who = current.as_ref().map_or("-".to_string(), |r| r.to_string());
        let fail = |e: SimError| RunError::Exec {
            index,
            line: *line,
            replica: who.clone(),
            name: sim_error_name(&e),
            message: e.to_string(),
        };
        let target = |r: &Option<ReplicaId>| -> Result<ReplicaId, RunError> {
            r.clone()
                .or_else(|| current.clone())
                .ok_or_else(|| fail(SimError::UnknownReplica("-".into())))
        };
        match d {
            Directive::ReplicaSwitch(id) => {
                if sim.replica(id).is_err() {
                    sim.add_replica(id.clone()).map_err(fail)?;
                }
                current = Some(id.clone());
            }
            Directive::Cmd(c) => {
                let id = target(&None)?;
                sim.exec(&id, c).map_err(fail)?;
            }
            Directive::Query(e) => {
                let id = target(&None)?;
                let ans = sim
                    .replica(&id)
                    .map_err(fail)?
                    .query(e)
                    .map_err(|err| fail(SimError::Replica(err.into())))?;
                output.push(format!("{id}: {e} = {ans}"));
            }
            Directive::Sync => sim.sync_all().map_err(fail)?,
            Directive::YieldSteps(n) => sim.run_random(*n).map_err(fail)?,
            Directive::Render(r) => {
                let id = target(r)?;
                let text = sim.replica(&id).map_err(fail)?.render();
                output.push(format!("{id}: {text}"));
            }
            Directive::Expect(r, expected) => {
                let id = target(r)?;
                let actual = sim.replica(&id).map_err(fail)?.render();
                if &actual != expected {
                    return Err(RunError::ExpectMismatch {
                        index,
                        line: *line,
                        replica: id.to_string(),
                        expected: expected.clone(),
                        actual,
                    });
                }
            }
        }
    }

    let renders = sim
        .replicas()
        .map(|r| (r.id().clone(), r.render()))
        .collect();
    Ok(RunOutput {
        renders,
        output,
        sim,
    })
}

/// Parses and runs script text.
pub fn run_text(text: &str, seed: u64, policy: Policy) -> Result<RunOutput, RunError> {
    run_script(&parse_script(text)?, seed, policy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(text: &str) -> Result<RunOutput, RunError> {
        run_text(text, 0, Policy::default())
    }

    #[test]
    fn no_sync_keeps_states_independent() {
        let out = run(r#"replica p; doc := {}; replica q; doc := []; render p; render q"#).unwrap();
        assert_eq!(out.output, vec!["p: {}", "q: []"]);
    }

    #[test]
    fn final_sync_gives_identical_renders() {
        let out = run(
            r#"replica p; doc.get("a") := 1; yield 3; replica q; doc.get("a") := 2; yield 2; sync"#,
        )
        .unwrap();
        let renders: Vec<&String> = out.renders.values().collect();
        assert_eq!(renders.len(), 2);
        assert_eq!(renders[0], renders[1]);
        assert_eq!(renders[0], r#"{"a":{"?mv":[1,2]}}"#);
    }

    #[test]
    fn expect_mismatch_reports_both() {
        let err = run(r#"doc.get("a") := 1; expect {"a":2}"#).unwrap_err();
        match err {
            RunError::ExpectMismatch {
                index,
                expected,
                actual,
                ..
            } => {
                assert_eq!(index, 2);
                assert_eq!(expected, r#"{"a":2}"#);
                assert_eq!(actual, r#"{"a":1}"#);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_carry_location() {
        let err = run("replica r;\ndoc := [];\ndoc.idx(1).delete;").unwrap_err();
        match err {
            RunError::Exec {
                index,
                line,
                replica,
                name,
                ..
            } => {
                assert_eq!((index, line), (2, 3));
                assert_eq!(replica, "r");
                assert_eq!(name, "IndexOutOfBounds");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn queries_print() {
        let out = run(r#"doc.get("b") := true; doc.get("a") := 1; doc.keys; doc.get("a").values"#)
            .unwrap();
        assert_eq!(
            out.output,
            vec![
                r#"p: doc.keys = ["a","b"]"#,
                r#"p: doc.get("a").values = [1]"#
            ]
        );
    }
}
