use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use netprobe::network::NetworkSpec;
use serde_json::Value;
use tempfile::TempDir;

fn netprobe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netprobe"))
        .args(args)
        .current_dir(dir)
        .env("NETPROBE_THREADS", "2")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = netprobe(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// The single JSON error line a failed run leaves on stderr.
fn error_line(out: &Output) -> Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1, "{text}");
    serde_json::from_str(lines[0]).unwrap()
}

fn chain(dir: &Path, n: &str, name: &str) {
    ok(
        dir,
        &[
            "generate", "--recipe", "chain", "--n", n, "--h", "0.1", "--omega0", "0.25", "--seed",
            "7", "--out", name,
        ],
    );
}

#[test]
fn generate_writes_a_loadable_network() {
    let dir = TempDir::new().unwrap();
    let out = ok(
        dir.path(),
        &[
            "generate", "--recipe", "chain", "--n", "200", "--h", "0.1", "--omega0", "0.25",
            "--seed", "7", "--out", "net.json",
        ],
    );
    let config: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(config["command"]["command"], "generate");
    let spec =
        NetworkSpec::from_json(&fs::read_to_string(dir.path().join("net.json")).unwrap()).unwrap();
    assert_eq!(spec.n(), 200);
    assert_eq!(spec.edges().len(), 199);
    assert_eq!(spec.omega0(), 0.25);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let runs = |tag: &str| {
        let net = format!("net{tag}.json");
        ok(
            d,
            &[
                "generate",
                "--recipe",
                "small-world",
                "--n",
                "40",
                "--h-chain",
                "0.1",
                "--h-shortcut",
                "0.05",
                "--n-shortcuts",
                "5",
                "--omega0",
                "0.25",
                "--seed",
                "3",
                "--out",
                &net,
            ],
        );
        ok(
            d,
            &[
                "scan",
                "--network",
                &net,
                "--k",
                "0.01",
                "--t",
                "200",
                "--T",
                "5",
                "--omega-min",
                "0.2",
                "--omega-max",
                "0.6",
                "--steps",
                "40",
                "--noise",
                "0.01",
                "--seed",
                "9",
                "--out",
                &format!("scan{tag}.csv"),
            ],
        );
        ok(
            d,
            &[
                "spectrum",
                "--network",
                &net,
                "--nodes",
                "0,5",
                "--k",
                "0.01",
                "--t-max",
                "300",
                "--omega-min",
                "0.2",
                "--omega-max",
                "0.6",
                "--out",
                &format!("spec{tag}.csv"),
                "--comb-out",
                &format!("comb{tag}.csv"),
            ],
        );
    };
    runs("a");
    runs("b");
    for stem in ["net", "scan", "spec", "comb"] {
        let ext = if stem == "net" { "json" } else { "csv" };
        let a = fs::read(d.join(format!("{stem}a.{ext}"))).unwrap();
        let b = fs::read(d.join(format!("{stem}b.{ext}"))).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{stem} differs between runs");
    }
    let scan = fs::read_to_string(d.join("scana.csv")).unwrap();
    assert_eq!(scan.lines().next().unwrap(), "omega_S,J_est,status");
    assert_eq!(scan.lines().count(), 41);
}

#[test]
fn dynamics_and_eigenfrequencies() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    chain(d, "2", "pair.json");
    ok(
        d,
        &[
            "dynamics",
            "--network",
            "pair.json",
            "--k",
            "0.002",
            "--T",
            "1",
            "--omega-s",
            "0.25",
            "--t-end",
            "400",
            "--steps",
            "50",
            "--out",
            "n.csv",
        ],
    );
    let series = fs::read_to_string(d.join("n.csv")).unwrap();
    assert_eq!(series.lines().count(), 51);

    ok(
        d,
        &[
            "eigenfreqs",
            "--network",
            "pair.json",
            "--k",
            "0.002",
            "--T",
            "1",
            "--t",
            "150",
            "--omega-min",
            "0.15",
            "--omega-max",
            "0.6",
            "--steps",
            "300",
            "--expected",
            "2",
            "--out",
            "lines.json",
        ],
    );
    let lines: Value =
        serde_json::from_str(&fs::read_to_string(d.join("lines.json")).unwrap()).unwrap();
    let mut found: Vec<f64> = lines["omegas"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    found.sort_by(f64::total_cmp);
    assert_eq!(found.len(), 2, "{lines}");
    assert!(
        (found[0] - 0.25).abs() < 0.005 && (found[1] - 0.512348).abs() < 0.005,
        "{found:?}"
    );
}

#[test]
fn reconstruct_and_compare() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    chain(d, "6", "hidden.json");
    ok(
        d,
        &[
            "reconstruct",
            "--hidden",
            "hidden.json",
            "--N",
            "6",
            "--out",
            "report.json",
            "--a-out",
            "a.csv",
        ],
    );
    let report: Value =
        serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["n"], 6);
    assert!(report["diagnostics"]["measurement_count"].as_u64().unwrap() > 2 * 36);

    for estimate in ["report.json", "a.csv"] {
        let cmp_out = format!("cmp-{estimate}.json");
        ok(
            d,
            &[
                "compare",
                "--estimate",
                estimate,
                "--truth",
                "hidden.json",
                "--out",
                &cmp_out,
                "--diff-out",
                "diff.csv",
            ],
        );
        let cmp: Value =
            serde_json::from_str(&fs::read_to_string(d.join(&cmp_out)).unwrap()).unwrap();
        assert_eq!(cmp["recall"], 1.0);
        assert_eq!(cmp["true_links"], 5);
        assert!(
            cmp["relative_frobenius_error"].as_f64().unwrap() < 0.01,
            "{cmp}"
        );
    }
}

#[test]
fn invalid_input_exits_with_one() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.json"), r#"{"n": 2, "edges": [[0, 1, 0.1]]}"#).unwrap();
    let out = netprobe(
        d,
        &[
            "scan",
            "--network",
            "bad.json",
            "--k",
            "0.01",
            "--t",
            "100",
            "--omega-min",
            "0.2",
            "--omega-max",
            "0.6",
            "--out",
            "s.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    let err = error_line(&out);
    assert_eq!(err["error"], "schema");
    assert!(err["message"].as_str().unwrap().contains("omega0"), "{err}");
    assert!(!d.join("s.csv").exists());

    fs::write(
        d.join("loop.json"),
        r#"{"n": 2, "omega0": 0.25, "edges": [[0, 0, 0.1]]}"#,
    )
    .unwrap();
    let out = netprobe(
        d,
        &[
            "scan",
            "--network",
            "loop.json",
            "--k",
            "0.01",
            "--t",
            "100",
            "--omega-min",
            "0.2",
            "--omega-max",
            "0.6",
            "--out",
            "s.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(error_line(&out)["message"]
        .as_str()
        .unwrap()
        .contains("self"));

    let out = netprobe(
        d,
        &[
            "generate", "--recipe", "chain", "--n", "5", "--omega0", "0.25", "--out", "x.json",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    error_line(&out);

    let out = netprobe(d, &["scan", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["error"], "usage");
}

#[test]
fn numerical_failure_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    chain(d, "4", "net.json");
    // coupling far beyond the stability bound
    let out = netprobe(
        d,
        &[
            "dynamics",
            "--network",
            "net.json",
            "--k",
            "5",
            "--omega-s",
            "0.25",
            "--t-end",
            "10",
            "--out",
            "n.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "not_positive_definite");
}

#[test]
fn in_process_entry_point_matches_the_binary() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    chain(d, "5", "a.json");
    let b = d.join("b.json");
    let code = netprobe::cli::run([
        "netprobe",
        "generate",
        "--recipe",
        "chain",
        "--n",
        "5",
        "--h",
        "0.1",
        "--omega0",
        "0.25",
        "--seed",
        "7",
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(fs::read(d.join("a.json")).unwrap(), fs::read(&b).unwrap());
}
