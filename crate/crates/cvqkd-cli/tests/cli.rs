//! End-to-end runs of the compiled binary: output formats, exit codes,
//! artifact determinism and the self-check battery.

use std::path::Path;
use std::process::{Command, Output};

use cvqkd::keygain::{gain, PostselectionThreshold};
use cvqkd::protocol::{ProtocolId, ProtocolSpec};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvqkd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("utf-8 stdout")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).expect("utf-8 stderr")
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("exit code")
}

/// Parses CSV text into (header, rows of cells).
fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines
        .next()
        .expect("header line")
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    (header, rows)
}

fn cell_f64(row: &[String], idx: usize) -> f64 {
    row[idx].parse().expect("numeric cell")
}

#[test]
fn tables_render_the_sifting_grid() {
    let output = run(&["tables", "--protocol", "o4"]);
    assert_eq!(code(&output), 0);
    let (header, rows) = parse_csv(&stdout_of(&output));
    assert_eq!(header[0], "protocol");
    assert_eq!(rows.len(), 8);

    // The state at angle 0 read along phase 0 encodes bit 1 at mean +α.
    let row = rows
        .iter()
        .find(|r| (cell_f64(r, 2) - 1.0).abs() < 1e-9 && cell_f64(r, 5) == 0.0)
        .expect("state (1, 0) at phase 0");
    assert_eq!(cell_f64(row, 6), 1.0);
    assert_eq!(row[7], "1");
    assert_eq!(row[8], "");

    // Every numeric cell reparses to text identically: the format is stable.
    for row in &rows {
        for idx in [2, 3, 5, 6] {
            let reformatted = format!("{:.11e}", cell_f64(row, idx));
            assert_eq!(reformatted, row[idx]);
        }
    }
}

#[test]
fn tables_reject_protocols_without_a_reference_table() {
    for protocol in ["mb4", "mb6", "mb8", "gen2", "nonsense"] {
        let output = run(&["tables", "--protocol", protocol]);
        assert_eq!(code(&output), 2, "{protocol}");
        assert!(stderr_of(&output).contains("usage error"), "{protocol}");
    }
}

#[test]
fn gain_curve_matches_the_library_and_reports_crossings() {
    let output = run(&[
        "gain-curve",
        "--protocol",
        "o4",
        "--alpha",
        "0.5",
        "--eta",
        "1:0.2:5",
        "--x0",
        "0.2",
    ]);
    assert_eq!(code(&output), 0);
    let (header, rows) = parse_csv(&stdout_of(&output));
    assert_eq!(
        header,
        ["protocol", "alpha", "eta", "x0", "I", "tau_u", "Pe", "gain"]
    );
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0][2], "1.00000000000e0");
    assert_eq!(rows[4][2], "2.00000000000e-1");

    // The first row against a direct library call.
    let spec = ProtocolSpec::new(ProtocolId::O4, 0.5).unwrap();
    let x0 = PostselectionThreshold::new(0.2).unwrap();
    let expected = gain(&spec, 1.0, x0).unwrap();
    assert!((cell_f64(&rows[0], 4) - expected.mutual_info_integral).abs() < 5e-12);
    assert!((cell_f64(&rows[0], 7) - expected.gain).abs() < 5e-12);
    assert_eq!(cell_f64(&rows[0], 6), 0.5);

    // The sign change between η = 0.8 and 0.6 is reported as a refined root.
    let stderr = stderr_of(&output);
    let line = stderr
        .lines()
        .find(|l| l.starts_with("eta* = "))
        .expect("crossing report");
    let eta_star: f64 = line
        .split_whitespace()
        .nth(2)
        .unwrap()
        .parse()
        .expect("crossing value");
    assert!((0.6..0.8).contains(&eta_star), "eta* = {eta_star}");
    let refined = gain(&spec, eta_star, x0).unwrap();
    assert!(refined.gain.abs() < 1e-10, "gain at eta* is {}", refined.gain);
}

#[test]
fn gain_curve_rejects_bad_grids_and_domains() {
    for args in [
        vec!["gain-curve", "--protocol", "o4", "--eta", "0:1:5"],
        vec!["gain-curve", "--protocol", "o4", "--alpha", "x"],
        vec!["gain-curve", "--protocol", "o4", "--alpha", "1:2"],
        vec!["gain-curve", "--protocol", "o4", "--x0", "-0.5"],
        vec!["gain-curve", "--protocol", "p9"],
    ] {
        let output = run(&args);
        assert_eq!(code(&output), 2, "{args:?}");
    }
}

#[test]
fn security_table_matches_the_closed_form() {
    let output = run(&[
        "security-table",
        "--protocol",
        "mb4",
        "--alpha",
        "0.5",
        "--eta",
        "0.5",
    ]);
    assert_eq!(code(&output), 0);
    let (header, rows) = parse_csv(&stdout_of(&output));
    assert_eq!(header[3], "overlap");
    assert_eq!(rows.len(), 1);
    let overlap = cell_f64(&rows[0], 3);
    let fidelity = cell_f64(&rows[0], 4);
    let expected = (-2.0f64 * 0.5 * 0.25).exp();
    assert!((overlap - expected).abs() < 1e-9);
    assert!((fidelity - expected).abs() < 1e-9);
    assert!(cell_f64(&rows[0], 6) < 1e-9);

    let json_run = run(&[
        "--format",
        "json",
        "security-table",
        "--protocol",
        "mb4",
        "--alpha",
        "0.5",
        "--eta",
        "0.5",
    ]);
    assert_eq!(code(&json_run), 0);
    let parsed: serde_json::Value = serde_json::from_str(&stdout_of(&json_run)).unwrap();
    let row = &parsed.as_array().unwrap()[0];
    assert_eq!(row["protocol"], "mb4");
    assert!((row["tau_u"].as_f64().unwrap() - 0.478_681_259_993_225_25).abs() < 1e-9);
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {path:?}: {e}"))
}

#[test]
fn simulate_writes_deterministic_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for (name, transport) in [("a", "memory"), ("b", "memory"), ("c", "socket")] {
        let out = dir.path().join(name);
        let output = run(&[
            "--seed",
            "42",
            "simulate",
            "--protocol",
            "s8",
            "--alpha",
            "1",
            "--eta",
            "0.6",
            "--x0",
            "0.3",
            "--rounds",
            "3000",
            "--transport",
            transport,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&output), 0, "{}", stderr_of(&output));
        assert!(stdout_of(&output).starts_with("protocol=s8 rounds=3000"));
        for file in [
            "stats.json",
            "alice_key.hex",
            "bob_key.hex",
            "wire.jsonl",
            "rounds_public.jsonl",
            "rounds_private.jsonl",
            "manifest.json",
        ] {
            assert!(out.join(file).exists(), "{name}/{file}");
        }
        outs.push(out);
    }
    for file in [
        "stats.json",
        "alice_key.hex",
        "bob_key.hex",
        "wire.jsonl",
        "rounds_public.jsonl",
    ] {
        let first = read(&outs[0].join(file));
        assert_eq!(first, read(&outs[1].join(file)), "second run differs: {file}");
        assert_eq!(first, read(&outs[2].join(file)), "socket run differs: {file}");
    }

    // The public transcript must not carry the sender's private columns.
    let public = String::from_utf8(read(&outs[0].join("rounds_public.jsonl"))).unwrap();
    assert!(!public.contains("alice_state_index"));
    assert!(!public.contains("verdict"));

    // A different seed changes the wire.
    let other = dir.path().join("d");
    let output = run(&[
        "--seed",
        "43",
        "simulate",
        "--protocol",
        "s8",
        "--alpha",
        "1",
        "--eta",
        "0.6",
        "--x0",
        "0.3",
        "--rounds",
        "3000",
        "--out",
        other.to_str().unwrap(),
    ]);
    assert_eq!(code(&output), 0);
    assert_ne!(read(&outs[0].join("wire.jsonl")), read(&other.join("wire.jsonl")));

    let manifest: serde_json::Value =
        serde_json::from_slice(&read(&outs[0].join("manifest.json"))).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["parameters"]["protocol"], "s8");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 7);
}

#[test]
fn simulate_rejects_degenerate_configs() {
    for args in [
        vec!["simulate", "--protocol", "o4", "--rounds", "0"],
        vec!["simulate", "--protocol", "o4", "--eta", "0"],
        vec!["simulate", "--protocol", "o4", "--eta", "1.5"],
        vec!["simulate", "--protocol", "o4", "--alpha", "-1"],
        vec!["simulate", "--protocol", "o4", "--x0", "-0.1"],
    ] {
        let output = run(&args);
        assert_eq!(code(&output), 2, "{args:?}");
    }
}

#[test]
fn verify_passes_and_the_negative_control_fails() {
    let output = run(&["verify", "--quick"]);
    assert_eq!(code(&output), 0, "{}", stderr_of(&output));
    let report: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    let checks = report["checks"].as_array().unwrap();
    assert!(checks.len() >= 12, "only {} checks", checks.len());
    assert_eq!(report["failed"], 0);
    assert!(checks.iter().all(|c| c["passed"].as_bool().unwrap()));

    let perturbed = run(&["verify", "--quick", "--perturb-variance", "0.26"]);
    assert_eq!(code(&perturbed), 1);
    let report: serde_json::Value = serde_json::from_str(&stdout_of(&perturbed)).unwrap();
    let failed: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| !c["passed"].as_bool().unwrap())
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["uncertainty-minimum"]);
}

#[test]
fn help_and_version_exit_cleanly() {
    let version = run(&["--version"]);
    assert_eq!(code(&version), 0);
    assert!(stdout_of(&version).contains("cvqkd"));

    let bare = run(&[]);
    assert_eq!(code(&bare), 2);

    let unknown = run(&["frobnicate"]);
    assert_eq!(code(&unknown), 2);
}
