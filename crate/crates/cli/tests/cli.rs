use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_parrep"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

/// Copies a fixture config with a shorter horizon next to its network file.
fn short_config(dir: &Path, name: &str, t_end: &str) -> PathBuf {
    let text = std::fs::read_to_string(fixture(name)).unwrap();
    let text: String = text
        .lines()
        .map(|l| if l.starts_with("t_end") { format!("t_end = {t_end}") } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n");
    for net in ["cascade.net", "trimer.net"] {
        std::fs::copy(fixture(net), dir.join(net)).unwrap();
    }
    let path = dir.join(name);
    std::fs::write(&path, text + "\n").unwrap();
    path
}

#[test]
fn missing_config_exits_2_and_names_path() {
    let out = bin()
        .args(["run", "--config", "/no/such/file.cfg"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/file.cfg"));
}

#[test]
fn bad_config_is_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "algorithm = ssa\n").unwrap();
    let out = bin().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("initial_state"));
}

#[test]
fn run_writes_byte_stable_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), "cascade_embedded.cfg", "200");
    let mut outputs = Vec::new();
    for workers in ["1", "3"] {
        let out_dir = dir.path().join(format!("out{workers}"));
        let st = bin()
            .args(["run", "--workers", workers, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(st.status.success());
        let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
        let cycles = std::fs::read_to_string(out_dir.join("cycles.csv")).unwrap();
        outputs.push((summary, cycles));
    }
    assert_eq!(outputs[0], outputs[1]);
    let summary = &outputs[0].0;
    assert!(summary.contains("# seed = 1"));
    assert!(summary.contains("# config_sha256 = "));
    for name in ["f1", "f2", "f3"] {
        assert!(summary.lines().any(|l| l.starts_with(&format!("{name},"))));
    }
}

#[test]
fn overrides_change_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), "cascade_ctmc.cfg", "20");
    let out = bin()
        .args(["run", "--seed", "7", "--replicas", "1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let s = String::from_utf8_lossy(&out.stdout);
    assert!(s.contains("# seed = 7"));
    assert!(s.contains("# replicas = 1"));
}

#[test]
fn sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), "cascade_embedded.cfg", "100");
    let out = bin()
        .args(["sweep", "--replicas", "1,4", "--thresholds", "10,15", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("s"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("s/sweep.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 5);
    assert!(rows[0].starts_with("replicas,threshold,dephasing,f1_estimate"));
}

#[test]
fn validate_quick_passes() {
    let out = bin().args(["validate", "--quick"]).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("checks passed"));
}

#[test]
fn validate_names_injected_fault() {
    let out = bin()
        .args(["validate", "--quick", "--reference", "ex1.sigma1=0.891"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL [3] eigen ex1.sigma1"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ex1.sigma1"));
}
