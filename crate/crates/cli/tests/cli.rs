use std::path::Path;
use std::process::{Command, Output};

fn fgl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fgl"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = fgl(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.cfg");
    std::fs::write(
        &path,
        "synthetic.nodes = 200\n\
         federation.rounds = 5\n\
         report.window = 1, 5\n\
         psi.group = test64\n\
         experiment.arms = 2sfgl, fedavg_only\n\
         experiment.seeds = 0, 1\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_is_reproducible_and_report_matches() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let table = ok(&["run", "--config", &cfg, "--out", a.to_str().unwrap()]);
    assert!(table.contains("2sfgl") && table.contains("fedavg_only"));
    ok(&["run", "--config", &cfg, "--out", b.to_str().unwrap()]);
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(&a, "summary.csv"), read(&b, "summary.csv"));
    for f in [
        "history_2sfgl_0.csv",
        "history_fedavg_only_1.csv",
        "table.txt",
    ] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
    }

    let summary = read(&a, "summary.csv");
    std::fs::remove_file(a.join("summary.csv")).unwrap();
    ok(&["report", "--config", &cfg, "--out", a.to_str().unwrap()]);
    assert_eq!(read(&a, "summary.csv"), summary);
}

#[test]
fn gen_writes_loadable_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("data");
    ok(&[
        "gen",
        "--config",
        &cfg,
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    for f in ["nodes.csv", "r0.csv", "r1.csv", "r2.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let nodes = std::fs::read_to_string(out.join("nodes.csv")).unwrap();
    assert_eq!(nodes.lines().count(), 201);
}

#[test]
fn fuse_dumps_graphs_shares_and_transcripts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("fuse");
    let stdout = ok(&["fuse", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(stdout.lines().count(), 3);
    for f in [
        "fused_r0.csv",
        "fused_r2.csv",
        "shares_r0-r1.csv",
        "shares_r2-r0.csv",
        "psi_r0-r1.hex",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let fused = std::fs::read_to_string(out.join("fused_r1.csv")).unwrap();
    assert!(fused.starts_with("# provenance"));
}

#[test]
fn train_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("t");
    let o = out.to_str().unwrap();
    ok(&[
        "train", "--config", &cfg, "--out", o, "--arch", "sage", "--seed", "4", "--name", "raw",
    ]);
    assert!(out.join("history_raw_4.csv").exists());
    let table = ok(&["report", "--config", &cfg, "--out", o, "--arch", "sage"]);
    assert!(table.contains("SAGE | raw"));
}

#[test]
fn errors_exit_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "fusion.lambda = 2\n").unwrap();
    let out = fgl(&[
        "run",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda"));

    let missing = fgl(&["run", "--config", "/nonexistent/x.cfg"]);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/x.cfg"));

    let empty = fgl(&["report", "--out", dir.path().to_str().unwrap()]);
    assert!(!empty.status.success());
    assert!(!fgl(&["run", "--arch", "mlp"]).status.success());
}
