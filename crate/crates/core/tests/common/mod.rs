#![allow(dead_code)]

use std::fmt::Write;
use std::path::PathBuf;

use jcrdt::harness::{gen_command, GenParams};
use jcrdt::netsim::{Policy, Rng, Simulation};
use jcrdt::ReplicaId;

pub fn script_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/scripts")
        .join(name)
}

pub fn script(name: &str) -> String {
    std::fs::read_to_string(script_path(name)).expect("script exists")
}

pub const REPLICAS: [&str; 3] = ["p", "q", "r"];

/// Random valid edits on three replicas, each followed by up to five random
/// network steps under `policy`.
pub fn adversarial_sim(seed: u64, policy: Policy, ops: usize) -> Simulation {
    let params = GenParams::default();
    let mut sim = Simulation::new(REPLICAS, seed, policy).unwrap();
    let mut rng = Rng::new(seed ^ 0xA5A5_A5A5);
    for _ in 0..ops {
        let who = ReplicaId::new(REPLICAS[rng.below(REPLICAS.len())]);
        let cmd = gen_command(sim.replica(&who).unwrap().document(), &mut rng, &params);
        sim.exec(&who, &cmd).unwrap();
        let steps = rng.below(6);
        sim.run_random(steps).unwrap();
    }
    sim
}

/// Script text for a random valid program ending in `sync`. Generated by
/// driving a simulation with the same seed the script will run under, so
/// every command is valid when the script replays.
pub fn gen_script(seed: u64, ops: usize) -> String {
    let params = GenParams::default();
    let mut sim = Simulation::new(REPLICAS, seed, Policy::default()).unwrap();
    let mut rng = Rng::new(seed.wrapping_add(17));
    let mut text = String::from("replica r;\nreplica q;\nreplica p;\n");
    for _ in 0..ops {
        let who = ReplicaId::new(REPLICAS[rng.below(REPLICAS.len())]);
        let cmd = gen_command(sim.replica(&who).unwrap().document(), &mut rng, &params);
        sim.exec(&who, &cmd).unwrap();
        writeln!(text, "replica {who};\n{cmd};").unwrap();
        let steps = rng.below(4);
        if steps > 0 {
            sim.run_random(steps).unwrap();
            writeln!(text, "yield {steps};").unwrap();
        }
    }
    text.push_str("sync;\n");
    text
}
