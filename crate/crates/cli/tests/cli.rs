use std::path::{Path, PathBuf};
use std::process::Command as Process;

use clap::Parser;
use proptest::prelude::*;
use tie_auction::generate;
use tie_auction::seed;
use tie_auction_cli::commands::Cli;
use tie_auction_cli::schema::{parse_instance, parse_instance_str, serialize_instance};
use tie_auction_cli::{run, CliError, EXIT_BUDGET, EXIT_OK, EXIT_VALIDATION, EXIT_VERIFICATION};

fn corpus(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus").join(rel)
}

fn cli(args: &[&str]) -> Cli {
    Cli::try_parse_from(std::iter::once("tie-auction").chain(args.iter().copied())).unwrap()
}

fn binary(args: &[&str], threads: Option<&str>) -> (i32, String) {
    let mut cmd = Process::new(env!("CARGO_BIN_EXE_tie-auction"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("RAYON_NUM_THREADS", t);
    }
    let out = cmd.output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
}

fn payload(stdout: &str) -> String {
    let v: serde_json::Value = serde_json::from_str(stdout).unwrap();
    serde_json::to_string(&v["result"]).unwrap()
}

#[test]
fn allocate_single_item_reaches_closed_form() {
    let path = corpus("instances/single_item.json");
    let report = run(&cli(&["allocate", "--instance", path.to_str().unwrap(), "--epsilon", "0.1"])).unwrap();
    let fexp = report.result["fexp"].as_f64().unwrap();
    assert!(fexp >= 0.9 * (1.0 - (-1.0f64).exp()), "{fexp}");
    let d = &report.config.derived[0];
    assert_eq!(d.step_size, 0.1 / 8.0);
    assert_eq!(d.iteration_cap, 6400);
}

#[test]
fn verify_corpus_exits_zero() {
    let dir = corpus("instances");
    let (code, out) = binary(&["verify", "--instance", dir.to_str().unwrap()], None);
    assert_eq!(code, EXIT_OK, "{out}");
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["result"]["instances"].as_array().unwrap().len(), 5);
}

#[test]
fn hardness_cycle() {
    let g = corpus("graphs/cycle4.json");
    let report = run(&cli(&["hardness", "--graph", g.to_str().unwrap()])).unwrap();
    assert_eq!(report.result["via_rank"], 2);
    assert_eq!(report.result["direct"], 2);
    assert_eq!(report.result["match"], true);
    assert!(report.passed);
}

#[test]
fn hardness_corpus_matches() {
    for entry in std::fs::read_dir(corpus("graphs")).unwrap() {
        let path = entry.unwrap().path();
        let report = run(&cli(&["hardness", "--graph", path.to_str().unwrap()])).unwrap();
        assert_eq!(report.result["match"], true, "{}", path.display());
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"num_items": 1, "bidders": [{"components": [{"weight": -1, "matroid": {"type": "uniform", "k": 1}}]}]}"#,
    )
    .unwrap();
    let (code, _) = binary(&["allocate", "--instance", bad.to_str().unwrap()], None);
    assert_eq!(code, EXIT_VALIDATION);

    let triangle = dir.path().join("triangle.json");
    std::fs::write(&triangle, r#"{"num_vertices": 3, "edges": [[0, 1], [1, 2], [0, 2]]}"#).unwrap();
    let (code, _) = binary(&["hardness", "--graph", triangle.to_str().unwrap()], None);
    assert_eq!(code, EXIT_VALIDATION);

    // 17 edges exceed the paving construction's budget.
    let edges: Vec<(usize, usize)> = (0..17).map(|e| (0, 1 + e % 3)).collect();
    let big = dir.path().join("big.json");
    std::fs::write(&big, serde_json::json!({"num_vertices": 4, "edges": edges}).to_string()).unwrap();
    let (code, _) = binary(&["hardness", "--graph", big.to_str().unwrap()], None);
    assert_eq!(code, EXIT_BUDGET);

    let (code, _) = binary(
        &["mechanism", "--instance", corpus("instances/single_item.json").to_str().unwrap()],
        None,
    );
    assert_eq!(code, EXIT_VALIDATION);
    assert_ne!(EXIT_VERIFICATION, EXIT_OK);
}

#[test]
fn reports_are_deterministic_across_runs_and_thread_counts() {
    let inst = corpus("instances/two_unit_demand.json");
    let inst = inst.to_str().unwrap();
    let single = corpus("instances/single_item.json");
    let single = single.to_str().unwrap();
    for args in [
        vec!["allocate", "--instance", inst, "--seed", "7"],
        vec!["allocate", "--instance", single, "--seed", "7", "--gradient", "sampled", "--epsilon", "0.5"],
        vec!["mechanism", "--instance", inst, "--seed", "7", "--welfare-samples", "20000"],
    ] {
        let (c1, a) = binary(&args, Some("1"));
        let (c2, b) = binary(&args, Some("4"));
        let (c3, c) = binary(&args, None);
        assert_eq!((c1, c2, c3), (0, 0, 0));
        assert_eq!(payload(&a), payload(&b), "{args:?}");
        assert_eq!(payload(&a), payload(&c), "{args:?}");
    }
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let g = corpus("graphs/k4.json");
    let (code, stdout) = binary(&["hardness", "--graph", g.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(code, 0);
    assert!(stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v["result"]["direct"], 3);
}

#[test]
fn regret_command_reports_every_row() {
    let inst = corpus("instances/weak_bidder.json");
    let report = run(&cli(&[
        "regret",
        "--instance",
        inst.to_str().unwrap(),
        "--bidder",
        "1",
        "--trials",
        "5",
        "--welfare-samples",
        "2000",
    ]))
    .unwrap();
    let rows = report.result["report"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r["trials"] == 5));
}

#[test]
fn corpus_instances_parse() {
    for entry in std::fs::read_dir(corpus("instances")).unwrap() {
        let path = entry.unwrap().path();
        let inst = parse_instance(&path).unwrap();
        assert_eq!(parse_instance_str(&serialize_instance(&inst)).unwrap(), inst);
    }
}

#[test]
fn missing_instance_flag() {
    assert!(matches!(run(&cli(&["allocate"])), Err(CliError::Validation(_))));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn instances_round_trip(s in any::<u64>(), n in 1usize..4, m in 1usize..7) {
        let inst = generate::instance(&mut seed::rng(s), n, m);
        let text = serialize_instance(&inst);
        prop_assert_eq!(parse_instance_str(&text).unwrap(), inst);
    }
}
