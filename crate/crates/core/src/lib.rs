//! A conflict-free replicated JSON datatype.
//!
//! Documents are trees of maps, ordered lists and multi-value registers that
//! can be edited concurrently on any number of replicas. Every edit becomes an
//! [`Operation`] that is applied locally straight away and then broadcast;
//! replicas that have applied the same set of operations hold the same
//! document state, whatever order those operations arrived in.
//!
//! The crate is organised bottom-up:
//!
//! - [`ids`], [`cursor`], [`value`], [`op`], [`codec`]: identifiers, cursors,
//!   values, operations and their canonical text encoding;
//! - [`state`]: the document-state tree and its JSON projection;
//! - [`eval`]: expression evaluation (cursors, `keys`, `values`);
//! - [`apply`]: applying operations to a state tree;
//! - [`replica`]: per-replica command execution and buffering;
//! - [`netsim`]: a deterministic simulated network;
//! - [`interp`]: the script language and its runner;
//! - [`harness`]: random executions and convergence / commutativity oracles.

pub mod apply;
pub mod codec;
pub mod cursor;
pub mod eval;
pub mod harness;
pub mod ids;
pub mod interp;
pub mod netsim;
pub mod op;
pub mod replica;
pub mod state;
pub mod value;

pub use cursor::{Cursor, Key, Tag, TaggedKey};
pub use eval::{EvalError, Expr};
pub use ids::{ReplicaId, Timestamp};
pub use op::{Mutation, Operation};
pub use replica::{Command, Replica};
pub use state::{render_json, state_equal, Node};
pub use value::Value;
