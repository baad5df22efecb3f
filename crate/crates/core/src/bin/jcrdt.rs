use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use jcrdt::codec::encode_operation;
use jcrdt::harness::{
    check_convergence, check_pairwise_commutativity, gen_execution, shrink, spot_check_schedules,
    ExecutionTrace, GenParams, Verdict,
};
use jcrdt::interp::{parse_script, run_script, RunError};
use jcrdt::netsim::Policy;

#[derive(Parser)]
#[command(name = "jcrdt", version, about = "Replicated JSON document simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a script.
    Run {
        script: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// e.g. `reorder=0.5,dup=3`
        #[arg(long, default_value = "")]
        policy: String,
        /// Print each replica's raw state tree.
        #[arg(long)]
        dump_state: bool,
        /// Write the network trace to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Check convergence of random executions.
    Check {
        /// Half-open range `A..B`.
        #[arg(long, default_value = "0..100")]
        seed_range: String,
        #[arg(long, default_value_t = 3)]
        replicas: usize,
        #[arg(long, default_value_t = 8)]
        ops: usize,
        #[arg(long, default_value_t = 0.4)]
        sync_probability: f64,
        /// Random delivery schedules replayed per execution.
        #[arg(long, default_value_t = 0)]
        schedules: usize,
        /// Directory for failing traces.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Cmd::Run {
            script,
            seed,
            policy,
            dump_state,
            trace,
        } => run(script, seed, &policy, dump_state, trace),
        Cmd::Check {
            seed_range,
            replicas,
            ops,
            sync_probability,
            schedules,
            out,
        } => {
            let params = GenParams {
                replicas,
                ops,
                sync_probability,
                ..GenParams::default()
            };
            check(&seed_range, &params, schedules, out)
        }
    }
}

fn run(
    script: PathBuf,
    seed: u64,
    policy: &str,
    dump_state: bool,
    trace: Option<PathBuf>,
) -> ExitCode {
    let policy = match Policy::parse(policy) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: bad --policy: {e}");
            return ExitCode::from(2);
        }
    };
    let text = match fs::read_to_string(&script) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", script.display());
            return ExitCode::from(2);
        }
    };
    let parsed = match parse_script(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}: {e}", script.display());
            return ExitCode::from(2);
        }
    };
    let out = match run_script(&parsed, seed, policy) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{}: {e}", script.display());
            return ExitCode::from(match e {
                RunError::ExpectMismatch { .. } => 1,
                _ => 2,
            });
        }
    };
    print!("{out}");
    for (id, render) in &out.renders {
        println!("final {id}: {render}");
    }
    if dump_state {
        for r in out.sim.replicas() {
            println!("state {}: {:#?}", r.id(), r.document());
        }
    }
    if let Some(path) = trace {
        if let Err(e) = fs::write(&path, out.sim.trace_text()) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::from(2);
        }
    }
    ExitCode::SUCCESS
}

fn parse_range(s: &str) -> Option<(u64, u64)> {
    let (a, b) = s.split_once("..")?;
    let (a, b) = (a.trim().parse().ok()?, b.trim().parse().ok()?);
    (a <= b).then_some((a, b))
}

fn verdict_of(trace: &ExecutionTrace, schedules: usize, seed: u64) -> (usize, Result<(), String>) {
    let report = check_convergence(trace);
    if !report.verdict.is_pass() {
        return (report.histories, Err(report.verdict.to_string()));
    }
    if let v @ Verdict::Broken { .. } = check_pairwise_commutativity(trace) {
        return (report.histories, Err(v.to_string()));
    }
    if schedules > 0 {
        if let Err(e) = spot_check_schedules(trace, schedules, seed) {
            return (report.histories, Err(e));
        }
    }
    (report.histories, Ok(()))
}

fn check(range: &str, params: &GenParams, schedules: usize, out: Option<PathBuf>) -> ExitCode {
    let Some((from, to)) = parse_range(range) else {
        eprintln!("error: --seed-range must look like A..B");
        return ExitCode::from(2);
    };
    if let Some(dir) = &out {
        if let Err(e) = fs::create_dir_all(dir) {
            eprintln!("error: cannot create {}: {e}", dir.display());
            return ExitCode::from(2);
        }
    }
    println!("{:>8} {:>5} {:>10}  result", "seed", "ops", "histories");
    let mut failures = 0;
    for seed in from..to {
        let trace = gen_execution(seed, params);
        let (histories, result) = verdict_of(&trace, schedules, seed);
        match result {
            Ok(()) => println!("{seed:>8} {:>5} {histories:>10}  pass", trace.ops.len()),
            Err(msg) => {
                failures += 1;
                println!("{seed:>8} {:>5} {histories:>10}  FAIL", trace.ops.len());
                eprintln!("seed {seed}: {msg}");
                let small = shrink(&trace, |t| verdict_of(t, schedules, seed).1.is_err());
                if let Some(dir) = &out {
                    let body: String = small
                        .ops
                        .iter()
                        .map(|o| encode_operation(o) + "\n")
                        .collect();
                    let path = dir.join(format!("seed-{seed}.ops"));
                    if let Err(e) = fs::write(&path, body) {
                        eprintln!("error: cannot write {}: {e}", path.display());
                    }
                }
            }
        }
    }
    println!("{} executions, {failures} failed", to - from);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
