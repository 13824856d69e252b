use std::process::Command;

fn tubenet() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tubenet"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let status = tubenet()
        .args(["run", "--rho", "0.2", "--rep", "0", "--horizon", "40", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = dir.path().join("rt-linear-rho0.20-s00.csv");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 41);
    assert!(text.starts_with(
        "k,x0,x1,x2,x3,xn0,xn1,xn2,xn3,u,un,xhat0,xhat1,xhat2,xhat3,theta,gamma,Theta,s,q,status,solve_ms"
    ));

    let out = tubenet().args(["report", "--dir"]).arg(dir.path()).output().unwrap();
    assert!(out.status.success());
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rows[0]["steps"], 40);
    assert_eq!(rows[0]["infeasible_steps"], 0);
}

#[test]
fn empty_sweep_writes_empty_summary() {
    let dir = tempfile::tempdir().unwrap();
    let status = tubenet()
        .args(["sweep", "--seeds", "0", "--out"])
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary-rt-linear.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"].as_array().unwrap().len(), 0);
    assert!(dir.path().join("solve-times-rt-linear.json").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("huge-w.toml");
    std::fs::write(&cfg, "[disturbance]\nhalf_widths = [0.5, 0.5, 0.5, 0.5]\n").unwrap();
    let status = tubenet()
        .args(["synthesize", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2), "synthesis failure");

    let status = tubenet()
        .args(["report", "--dir"])
        .arg(dir.path().join("missing"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3), "I/O failure");

    let status = tubenet().args(["run", "--rho", "1.5"]).status().unwrap();
    assert_eq!(status.code(), Some(1), "invalid config");
}
