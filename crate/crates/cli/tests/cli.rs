use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cp-regular"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn validate_accepts_good_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.conf", "# duality check\nscenario = duality\nreplicas = 100\n");
    let o = bin().arg("validate").arg(&cfg).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("duality"));
}

#[test]
fn invalid_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for (i, body) in [
        "scenario = bogus\n",
        "scenario = clash_time\n",
        "scenario = duality\nreplicas = 0\n",
        "scenario = duality\nwhat = 1\n",
    ]
    .iter()
    .enumerate()
    {
        let cfg = write_config(dir.path(), &format!("bad{i}.conf"), body);
        let v = bin().arg("validate").arg(&cfg).output().unwrap();
        assert_eq!(code(&v), 2, "validate {body:?}: {}", String::from_utf8_lossy(&v.stderr));
        let r = bin().arg("run").arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
        assert_eq!(code(&r), 2, "run {body:?}: {}", String::from_utf8_lossy(&r.stderr));
    }
    assert!(!dir.path().join("o").exists());
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&bin().output().unwrap()), 2);
    assert_eq!(code(&bin().arg("frobnicate").output().unwrap()), 2);
    let cfg = write_config(dir.path(), "a.conf", "scenario = duality\n");
    assert_eq!(code(&bin().arg("run").arg(&cfg).arg("--seed").arg("x").output().unwrap()), 2);
    assert_eq!(code(&bin().arg("run").arg(dir.path().join("missing.conf")).output().unwrap()), 2);
}

#[test]
fn budget_abort_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "g.conf",
        "scenario = growth_concentration\nlambda = 2\nhorizon = 6\nreplicas = 20\nnode_budget = 50\n",
    );
    let o = bin().arg("run").arg(&cfg).arg("--out").arg(dir.path().join("out")).output().unwrap();
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn runs_are_reproducible_and_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.conf",
        "scenario = clash_time\nlambda = 1.2\nn_grid = 100, 1000\nreplicas = 40\nc_replicas = 100\nc_horizon = 3\n",
    );
    let mut outputs = Vec::new();
    for (run, threads) in [(0, "1"), (1, "1"), (2, "3")] {
        let out = dir.path().join(format!("out{run}"));
        let o = bin()
            .args(["run"])
            .arg(&cfg)
            .args(["--seed", "17", "--threads", threads, "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let manifest: Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["seed"], 17);
        assert_eq!(manifest["scenario"], "clash_time");
        let mut files = Vec::new();
        for f in manifest["files"].as_array().unwrap() {
            let name = f["name"].as_str().unwrap().to_string();
            files.push((name.clone(), fs::read(out.join(&name)).unwrap()));
        }
        assert!(files.iter().any(|(n, _)| n == "clash_time.csv"));
        outputs.push((manifest["content_hash"].clone(), files));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}
