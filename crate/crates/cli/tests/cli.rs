use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hypospace_core::Instance;

fn hypospace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypospace"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn instance_files(out: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(out.join("instances"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
}

fn gen_one(out: &Path, task: &str, extra: &[&str]) -> PathBuf {
    let d = out.to_str().unwrap();
    let mut args = vec![
        "gen", "--task", task, "--count", "1", "--seed", "3", "--out", d,
    ];
    args.extend_from_slice(extra);
    assert!(hypospace(&args).status.success());
    instance_files(out).remove(0)
}

#[test]
fn gen_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let mut snapshots = Vec::new();
    for rep in ["a", "b"] {
        let out = tmp.path().join(rep);
        let o = hypospace(&[
            "gen",
            "--task",
            "causal",
            "--nodes",
            "4",
            "--count",
            "5",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let files = instance_files(&out);
        assert_eq!(files.len(), 5);
        snapshots.push(
            files
                .iter()
                .map(|f| std::fs::read(f).unwrap())
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(snapshots[0], snapshots[1]);
}

#[test]
fn validate_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let voxel = gen_one(&tmp.path().join("v"), "voxel", &["--tp", "1"]);
    let inst = Instance::from_json(&std::fs::read_to_string(&voxel).unwrap()).unwrap();
    let v = voxel.to_str().unwrap();

    let good = inst.nth_admissible(0).unwrap().to_text();
    let o = hypospace(&["validate", "--instance", v, "--hypothesis", &good]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("category: valid"));

    // Lift a one-high stack off the floor.
    let flat = (0..inst.admissible_size())
        .map(|i| inst.nth_admissible(i).unwrap().to_text())
        .find(|t| t.lines().skip(5).all(|l| !l.contains('1')))
        .unwrap();
    let rows: Vec<&str> = flat.lines().skip(1).take(3).collect();
    let floating = format!(
        "LAYERS:\n000\n000\n000\n\n{}\n\n000\n000\n000",
        rows.join("\n")
    );
    let o = hypospace(&["validate", "--instance", v, "--hypothesis", &floating]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("constraint_violation"));

    let causal = gen_one(&tmp.path().join("c"), "causal", &["--nodes", "3"]);
    let o = hypospace(&[
        "validate",
        "--instance",
        causal.to_str().unwrap(),
        "--hypothesis",
        "EDGES: A>>B",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("parse_failure"));

    let o = hypospace(&[
        "validate",
        "--instance",
        "/nonexistent/instance.json",
        "--hypothesis",
        "EDGES: none",
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(hypospace(&["gen", "--task", "nope"]).status.code(), Some(1));
}

#[test]
fn scripted_run_and_mixed_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let instance = gen_one(&out, "voxel", &["--tp", "1"]);
    let inst = Instance::from_json(&std::fs::read_to_string(&instance).unwrap()).unwrap();
    assert_eq!(inst.admissible_size(), 3);
    let script = tmp.path().join("script.txt");
    std::fs::write(
        &script,
        format!("{}\n---\n", inst.nth_admissible(1).unwrap().to_text()),
    )
    .unwrap();

    let d = out.to_str().unwrap();
    let common = [
        "--task",
        "voxel",
        "--tp",
        "1",
        "--count",
        "1",
        "--seed",
        "3",
        "--deterministic",
        "--out",
        d,
    ];
    let mut args = vec![
        "run",
        "--sampler",
        "scripted",
        "--script",
        script.to_str().unwrap(),
    ];
    args.extend_from_slice(&common);
    let o = hypospace(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(
        stdout(&o).contains("VR=1.0000 NR=0.3333 RR=0.3333"),
        "{}",
        stdout(&o)
    );

    let mut args = vec!["run", "--sampler", "oracle"];
    args.extend_from_slice(&common);
    assert!(hypospace(&args).status.success());

    let report = tmp.path().join("report");
    let o = hypospace(&["report", "--logs", d, "--out", report.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let md = std::fs::read_to_string(report.join("report.md")).unwrap();
    assert!(md.contains("oracle") && md.contains("scripted"));
    assert!(md.contains("100.00% ± 0.00%"));
    assert!(md.contains("33.33%"));
    for f in [
        "summary.csv",
        "failures.csv",
        "coverage.csv",
        "rr_at_k.csv",
        "manifest.json",
    ] {
        assert!(report.join(f).exists(), "{f} missing");
    }
}
