use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ecgalarm(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ecgalarm"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    for (k, _) in std::env::vars() {
        if k.starts_with("ECGALARM_") && !envs.iter().any(|(e, _)| *e == k) {
            cmd.env_remove(k);
        }
    }
    cmd.output().expect("run ecgalarm")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn run_all(data: &Path, out: &Path) {
    let o = ecgalarm(&["all", "--scenarios", "DWT,HLF_cityblock"], &[("ECGALARM_DATA_DIR", data), ("ECGALARM_OUT", out)]);
    ok(&o);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("Accuracy"), "{text}");
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn end_to_end_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&ecgalarm(&["synth", data.to_str().unwrap(), "--records", "30", "--duration", "40"], &[]));
    run_all(&data, &a);
    run_all(&data, &b);
    for f in [
        "manifest.csv",
        "features/llf.csv",
        "features/dwt.csv",
        "features/hlf_cityblock.csv",
        "features/hlf_euclidean.csv",
        "report/report.json",
        "report/report.md",
    ] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f} differs");
    }
    let rocs: Vec<_> = fs::read_dir(a.join("report/roc")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(rocs.len(), 4);
    for name in &rocs {
        assert_eq!(read(&a.join("report/roc").join(name)), read(&b.join("report/roc").join(name)));
    }

    let report = ecgalarm(&["report"], &[("ECGALARM_OUT", &a)]);
    ok(&report);
    assert_eq!(report.stdout, read(&a.join("report/report.md")));

    // synthetic corpus has every 10th record without lead II
    let manifest = String::from_utf8(read(&a.join("manifest.csv"))).unwrap();
    assert_eq!(manifest.lines().filter(|l| l.contains("lead")).count(), 3);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("none");
    let o = ecgalarm(&["ingest"], &[("ECGALARM_DATA_DIR", &missing), ("ECGALARM_OUT", tmp.path())]);
    assert!(!o.status.success());
    let o = ecgalarm(&["evaluate"], &[("ECGALARM_OUT", &missing)]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let o = ecgalarm(&["evaluate", "--folds", "1"], &[("ECGALARM_OUT", tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    let o = ecgalarm(&["evaluate", "--scenarios", "NOPE"], &[("ECGALARM_OUT", tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
}
