use std::path::Path;
use std::process::{Command, Output};

fn fracheat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracheat"))
        .args(args)
        .env("FRACHEAT_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn unknown_flag_exits_with_usage_code() {
    let out = fracheat(&["--no-such-flag", "variance-table"]);
    assert_eq!(out.status.code(), Some(2));
    let out = fracheat(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_usage_code_and_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = dir.path().join("bad_key.toml");
    std::fs::write(&bad_key, "preset = \"rough1d\"\nsurprise = 3\n").unwrap();
    let out = fracheat(&["--config", bad_key.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "variance-table"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let bad_h = dir.path().join("bad_h.toml");
    std::fs::write(&bad_h, "preset = \"rough1d\"\nH = 0.4\n").unwrap();
    let out = fracheat(&["--config", bad_h.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "variance-table"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`H`"));
}

#[test]
fn outputs_carry_the_manifest_hash() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = fracheat(&["--preset", "rough1d", "--out", d, "variance-table", "--lags", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&read(dir.path(), "variance-table.manifest.json")).unwrap();
    let hash = manifest["input_hash"].as_str().unwrap();
    let csv = String::from_utf8(read(dir.path(), "variance.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), format!("# manifest {hash}"));
    assert_eq!(csv.lines().nth(1).unwrap(), "dt,dx,D,error_estimate");
    assert_eq!(manifest["status"], "passed");

    let out = fracheat(&["--preset", "rough1d", "--format", "json", "--out", d, "variance-table", "--lags", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let table: serde_json::Value = serde_json::from_slice(&read(dir.path(), "variance.json")).unwrap();
    assert_eq!(table["rows"].as_array().unwrap().len(), 9);
    assert!(table["manifest"].is_string());
}

#[test]
fn identical_inputs_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |dir: &Path| {
        let out = fracheat(&[
            "--preset", "rough1d", "--seed", "7", "--out", dir.to_str().unwrap(),
            "sample-field", "--nt", "4", "--nx", "4", "--paths", "16",
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run(a.path());
    run(b.path());
    for name in ["field.fhf1", "field.json"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name} differs");
    }
}

#[test]
fn smooth_statistics_are_refused_for_a_rough_preset() {
    let dir = tempfile::tempdir().unwrap();
    let out = fracheat(&["--preset", "rough1d", "--out", dir.path().to_str().unwrap(), "smooth-check", "--n", "256"]);
    assert_eq!(out.status.code(), Some(1));
}
