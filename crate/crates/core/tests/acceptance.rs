//! Acceptance suite: one PASS/FAIL line per criterion. Runs as a plain
//! binary so the lines show up in `cargo test` output.

mod common;

use std::collections::BTreeSet;
use std::process::Command as Process;
use std::time::{Duration, Instant};

use jcrdt::harness::{
    check_convergence, check_pair, gen_execution, sample_pair, GenParams, PairClass,
};
use jcrdt::interp::{run_text, RunError};
use jcrdt::netsim::Policy;
use jcrdt::state::state_equal;
use jcrdt::Replica;

use common::{adversarial_sim, script, script_path};

const GOLDENS_LIMIT: Duration = Duration::from_secs(1);
const CONVERGENCE_LIMIT: Duration = Duration::from_secs(60);
const COMMUTATIVITY_LIMIT: Duration = Duration::from_secs(30);
const ADVERSARIAL_LIMIT: Duration = Duration::from_secs(30);

const CONVERGENCE_RUNS: u64 = 500;
const PAIRS_PER_CLASS: u64 = 1000;
const ADVERSARIAL_RUNS: u64 = 200;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn renders_of(name: &str) -> Result<Vec<(String, String)>, String> {
    let out = run_text(&script(name), 0, Policy::default()).map_err(|e| format!("{name}: {e}"))?;
    Ok(out
        .renders
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect())
}

fn all_equal_to(name: &str, golden: &str) -> Result<(), String> {
    for (r, text) in renders_of(name)? {
        if text != golden {
            return Err(format!(
                "{name}: replica {r} rendered {text}, want {golden}"
            ));
        }
    }
    Ok(())
}

fn scenario_goldens() -> Outcome {
    all_equal_to("register_assign.jcrdt", r#"{"key":{"?mv":["B","C"]}}"#)?;
    all_equal_to(
        "map_remove.jcrdt",
        r##"{"colors":{"red":"#ff0000","green":"#00ff00"}}"##,
    )?;
    let lists = renders_of("two_lists.jcrdt")?;
    let allowed = [
        r#"{"grocery":["eggs","ham","milk","flour"]}"#,
        r#"{"grocery":["milk","flour","eggs","ham"]}"#,
    ];
    if lists.len() != 2 || lists[0].1 != lists[1].1 || !allowed.contains(&lists[0].1.as_str()) {
        return Err(format!("two_lists.jcrdt: {lists:?}"));
    }
    all_equal_to("text_edit.jcrdt", r#"["y","a","x","z","c"]"#)?;
    all_equal_to("type_clash.jcrdt", r#"{"a?map":{"x":"y"},"a?list":["z"]}"#)?;
    all_equal_to("todo_item.jcrdt", r#"{"todo":[{"done":true}]}"#)?;
    all_equal_to("make_doc.jcrdt", r#"{"shopping":["cheese","eggs","milk"]}"#)?;
    Ok("7 scenarios byte-exact".into())
}

fn convergence_oracle() -> Outcome {
    let params = GenParams {
        replicas: 3,
        ops: 8,
        ..GenParams::default()
    };
    let mut histories = 0;
    let mut max = 0;
    for seed in 0..CONVERGENCE_RUNS {
        let trace = gen_execution(seed, &params);
        let report = check_convergence(&trace);
        if !report.verdict.is_pass() {
            return Err(format!("seed {seed}: {}", report.verdict));
        }
        if report.sampled {
            return Err(format!("seed {seed}: enumeration exceeded the bound"));
        }
        histories += report.histories;
        max = max.max(report.histories);
    }
    Ok(format!(
        "{CONVERGENCE_RUNS} executions, {histories} histories replayed (max {max} per execution)"
    ))
}

fn commutativity_suites() -> Outcome {
    let mut summary = Vec::new();
    for class in PairClass::ALL {
        for seed in 0..PAIRS_PER_CLASS {
            let case = sample_pair(seed, class)
                .ok_or_else(|| format!("{}: no pair for seed {seed}", class.name()))?;
            check_pair(&case.trace, case.a, case.b)
                .map_err(|e| format!("{} seed {seed}: {e}", class.name()))?;
        }
        summary.push(format!("{} x{PAIRS_PER_CLASS}", class.name()));
    }
    Ok(summary.join(", "))
}

fn adversarial_delivery() -> Outcome {
    let policy = Policy::parse("reorder=0.5,dup=3").map_err(|e| e.to_string())?;
    for seed in 0..ADVERSARIAL_RUNS {
        let mut sim = adversarial_sim(seed, policy.clone(), 8);
        sim.run_random(20).map_err(|e| e.to_string())?;
        sim.sync_all().map_err(|e| format!("seed {seed}: {e}"))?;
        let reps: Vec<&Replica> = sim.replicas().collect();
        for a in &reps {
            for b in &reps {
                if !state_equal(a.document(), b.document()) {
                    return Err(format!("seed {seed}: {} and {} differ", a.id(), b.id()));
                }
            }
        }
    }
    Ok(format!("{ADVERSARIAL_RUNS} schedules, dup=3 reorder=0.5"))
}

fn idempotence() -> Outcome {
    for seed in 0..50 {
        let mut sim = adversarial_sim(seed, Policy::default(), 8);
        sim.sync_all().map_err(|e| e.to_string())?;
        let before: Vec<Replica> = sim.replicas().cloned().collect();
        for _ in 0..3 {
            sim.redeliver_all().map_err(|e| e.to_string())?;
        }
        let after: Vec<Replica> = sim.replicas().cloned().collect();
        if before != after {
            return Err(format!("seed {seed}: redelivery changed a replica"));
        }
    }
    Ok("50 synced simulations, every op redelivered 3 times".into())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |tag: &str, seed: &str| -> Result<(String, String), String> {
        let trace = dir.path().join(format!("{tag}.trace"));
        let out = Process::new(env!("CARGO_BIN_EXE_jcrdt"))
            .arg("run")
            .arg(script_path("yields.jcrdt"))
            .args(["--seed", seed, "--policy", "reorder=0.5,dup=3", "--trace"])
            .arg(&trace)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(String::from_utf8_lossy(&out.stderr).into_owned());
        }
        let trace = std::fs::read_to_string(&trace).map_err(|e| e.to_string())?;
        Ok((trace, String::from_utf8_lossy(&out.stdout).into_owned()))
    };
    let a = run("a", "42")?;
    let b = run("b", "42")?;
    if a != b {
        return Err("same seed produced different output".into());
    }
    let c = run("c", "43")?;
    if a.0 == c.0 {
        return Err("seed has no influence on the trace".into());
    }
    Ok(format!(
        "identical {}-line traces and renders",
        a.0.lines().count()
    ))
}

fn error_semantics() -> Outcome {
    let cases = [
        ("err_idx_past_end.jcrdt", "IndexOutOfBounds"),
        ("err_get_on_head.jcrdt", "GetOnHead"),
        ("err_values_on_map.jcrdt", "NotARegister"),
    ];
    let mut seen = BTreeSet::new();
    for (name, want) in cases {
        match run_text(&script(name), 0, Policy::default()) {
            Err(e @ RunError::Exec { .. }) if e.name() == want => {}
            other => return Err(format!("{name}: expected {want}, got {other:?}")),
        }
        let out = Process::new(env!("CARGO_BIN_EXE_jcrdt"))
            .arg("run")
            .arg(script_path(name))
            .output()
            .map_err(|e| e.to_string())?;
        let stderr = String::from_utf8_lossy(&out.stderr);
        if out.status.code() != Some(2) || !stderr.contains(want) {
            return Err(format!(
                "{name}: CLI exit {:?}, stderr {stderr}",
                out.status.code()
            ));
        }
        seen.insert(want);
    }
    Ok(seen.into_iter().collect::<Vec<_>>().join(", "))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("scenario goldens", scenario_goldens, Some(GOLDENS_LIMIT)),
        (
            "convergence oracle",
            convergence_oracle,
            Some(CONVERGENCE_LIMIT),
        ),
        (
            "commutativity suites",
            commutativity_suites,
            Some(COMMUTATIVITY_LIMIT),
        ),
        (
            "adversarial delivery",
            adversarial_delivery,
            Some(ADVERSARIAL_LIMIT),
        ),
        ("idempotence", idempotence, None),
        ("determinism", determinism, None),
        ("error semantics", error_semantics, None),
    ];
    let mut failed = 0;
    for (i, (name, check, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut result = check();
        let elapsed = start.elapsed();
        if let (Ok(_), Some(limit)) = (&result, limit) {
            if elapsed > *limit {
                result = Err(format!("took {elapsed:.2?}, limit {limit:?}"));
            }
        }
        let budget = limit.map_or(String::new(), |l| format!(" / {l:?}"));
        match result {
            Ok(detail) => println!("PASS [{}] {name} ({elapsed:.2?}{budget}): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {name} ({elapsed:.2?}{budget}): {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
