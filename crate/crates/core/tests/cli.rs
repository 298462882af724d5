//! End-to-end checks of the command-line front end: exit codes, output
//! schemas, and run determinism.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hia-precode"))
}

#[test]
fn run_is_byte_deterministic_across_invocations() {
    let dir = std::env::temp_dir();
    let a = dir.join("hia_cli_det_a.csv");
    let b = dir.join("hia_cli_det_b.csv");
    for path in [&a, &b] {
        let status = bin()
            .args([
                "run",
                "--scenario",
                "fig3_nc",
                "--seed",
                "7",
                "--draws",
                "2",
                "--out",
            ])
            .arg(path)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let bytes_a = std::fs::read(&a).unwrap();
    let bytes_b = std::fs::read(&b).unwrap();
    assert_eq!(bytes_a, bytes_b);
    let text = String::from_utf8(bytes_a).unwrap();
    assert!(text.starts_with("scenario,method,snr_db_or_m,message,mean_rate_bits,stderr,draws,seed"));
    let _ = std::fs::remove_file(a);
    let _ = std::fs::remove_file(b);
}

#[test]
fn trace_scenario_emits_iteration_columns() {
    let out = bin()
        .args(["run", "--scenario", "fig5_trace"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("scenario,iteration,alpha,lambda,residual"));
    let first = lines.next().unwrap();
    assert!(first.starts_with("fig5_trace,1,"));
}

#[test]
fn validate_passes_and_filters() {
    let out = bin().arg("validate").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 5);
    for line in text.lines() {
        let cols: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(cols.len(), 4, "bad check line: {line}");
        assert_eq!(cols[3], "PASS");
    }

    let out = bin()
        .args(["validate", "--only", "gradient"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1);
}

#[test]
fn scenario_listing_and_schema() {
    let out = bin().arg("scenarios").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 7);
    for id in ["fig2_noma", "fig3_nc", "fig4_c", "fig5_trace", "fig6_pf"] {
        assert!(text.contains(id));
    }

    let out = bin().arg("schema").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    // the embedded example must parse under the documented grammar
    let toml_part: String = text
        .lines()
        .skip_while(|l| !l.starts_with("id ="))
        .take_while(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    hia_precode::harness::Scenario::from_toml_str(&toml_part).unwrap();
}

#[test]
fn bad_inputs_exit_2_without_partial_output() {
    let missing = std::env::temp_dir().join("hia_cli_missing_out.csv");
    let _ = std::fs::remove_file(&missing);
    let status = bin()
        .args(["run", "--scenario", "/no/such/file.toml", "--out"])
        .arg(&missing)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
    assert!(!missing.exists(), "no partial output on parse failure");

    // malformed scenario file
    let bad = std::env::temp_dir().join("hia_cli_bad_scenario.toml");
    std::fs::write(&bad, "id = \"x\"\nnot valid").unwrap();
    let out = bin().args(["run", "--scenario"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8(out.stderr).unwrap().is_empty());
    let _ = std::fs::remove_file(bad);
}

#[test]
fn custom_scenario_file_round_trips_through_run() {
    let mut sc = hia_precode::harness::bundled_scenario("fig3_nc").unwrap();
    sc.id = "custom".into();
    sc.snr_db = vec![10.0];
    sc.draws = 1;
    sc.quad_points = 256;
    let path = std::env::temp_dir().join("hia_cli_custom.toml");
    std::fs::write(&path, sc.to_toml()).unwrap();
    let out = bin()
        .args(["run", "--scenario"])
        .arg(&path)
        .args(["--jobs", "2"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().skip(1).all(|l| l.starts_with("custom,")));
    let _ = std::fs::remove_file(path);
}
