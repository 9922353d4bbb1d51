use std::process::Command;

fn hho(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hho"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(
        hho(&["solve", "--k", "0", "--problem", "elasticity_compressible"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(hho(&["converge", "--levels", "3"]).status.code(), Some(2));
    assert_eq!(hho(&["solve", "--bogus"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    assert_eq!(
        hho(&["solve", "--mesh", "/nonexistent/mesh.json"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn solve_writes_json_to_stdout() {
    let out = hho(&["solve", "--gen", "quad:4:4", "--k", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.is_object());
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"gen": "tri:4:4", "k": 2, "sizes": [4, 8, 16, 32]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = hho(&[
        "converge",
        "--config",
        cfg.to_str().unwrap(),
        "--k",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(out_dir.join("convergence.csv")).unwrap();
    assert!(
        csv.starts_with("level,h,err_h1,err_l2_cell,err_l2_rec,stab_seminorm,rate_h1,rate_l2\n")
    );
    assert_eq!(csv.lines().count(), 5);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("convergence.json")).unwrap())
            .unwrap();
    assert_eq!(json["k_face"], 1);
}

#[test]
fn oracle_command_reports_pass() {
    let out = hho(&["oracle1d", "--k", "3", "--n", "16"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["pass"], true);
}
