use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const HEADER: &str = "experiment,x_name,x,level,quantity,value,lower,upper,witness,note,pass,estimator,fidelity";

fn morrey(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_morrey")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const NORMS: &str = r#"
id = "small-norms"
kind = "norms"
seed = 5

[grid]
dim = 1
level = 5

[[weights]]
rho = 0.25
center = [0.5, 0.5]

[corpus]
indicators = 3
point_masses = 2
power_bumps = 2
random_fields = 2
"#;

#[test]
fn norms_output_is_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "n.toml", NORMS);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        let o = morrey(&["run", "--config", &cfg, "--out", d.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["small-norms.csv", "small-norms.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let csv = fs::read_to_string(a.join("small-norms.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(HEADER));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("small-norms.json")).unwrap()).unwrap();
    assert_eq!(json["passed"], true);
    assert_eq!(json["kind"], "norms");
    assert!(json["failing_rows"].as_array().unwrap().is_empty());
}

#[test]
fn seed_override_changes_the_corpus() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "n.toml", NORMS);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(code(&morrey(&["run", "--config", &cfg, "--out", a.to_str().unwrap()])), 0);
    assert_eq!(code(&morrey(&["norms", "--config", &cfg, "--seed", "6", "--out", b.to_str().unwrap()])), 0);
    assert_ne!(fs::read(a.join("small-norms.csv")).unwrap(), fs::read(b.join("small-norms.csv")).unwrap());
}

#[test]
fn subcommands_run_with_defaults() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = morrey(&["universal", "--seed", "3", "--level", "4", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let csv = fs::read_to_string(tmp.path().join("universal.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(HEADER));
    assert!(csv.lines().count() > 1);
    let o = morrey(&["norms", "--seed", "3", "--level", "4", "--fidelity", "shifted", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("norms.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["fidelity"], "shifted");
    assert_eq!(json["config"]["grid"]["level"], 4);
}

#[test]
fn failed_check_exits_one_and_lists_rows() {
    let tmp = TempDir::new().unwrap();
    // Attainment ratios are at least one, so a bound of one half cannot hold.
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        r#"
kind = "conditions"
[grid]
dim = 1
level = 5
[[weights]]
rho = 0.0
center = [0.5, 0.5]
[attainment]
levels = [4, 5]
admissible = [0.0]
singular = []
bound = 0.5
"#,
    );
    let o = morrey(&["run", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("FAIL attainment_bounded"), "{stdout}");
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("conditions.json")).unwrap()).unwrap();
    assert_eq!(json["passed"], false);
    assert_eq!(json["failing_rows"].as_array().unwrap().len(), 2);
}

#[test]
fn missing_seed_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let o = morrey(&["sparse-fuzz", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
    assert!(fs::read_dir(tmp.path()).unwrap().next().is_none(), "nothing is written on error");
}

#[test]
fn bad_coupling_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.toml",
        "kind = \"counterexample\"\n[exponents]\np = 2.0\np0 = 4.0\nalpha = 0.125\nq = 3.0\nq0 = 5.0\n",
    );
    let o = morrey(&["run", "--config", &cfg]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("exponents"));
}

#[test]
fn malformed_configs_are_config_errors() {
    let tmp = TempDir::new().unwrap();
    let unknown = write_config(tmp.path(), "u.toml", "kind = \"norms\"\nseed = 1\nlevels = 3\n");
    assert_eq!(code(&morrey(&["run", "--config", &unknown])), 2);
    let p_above = write_config(tmp.path(), "p.toml", "kind = \"norms\"\nseed = 1\n[exponents]\np = 5.0\np0 = 4.0\nalpha = 0.1\n");
    assert_eq!(code(&morrey(&["run", "--config", &p_above])), 2);
    let bad_rho = write_config(tmp.path(), "r.toml", "kind = \"norms\"\nseed = 1\n[[weights]]\nrho = -1.5\ncenter = [0.5, 0.5]\n");
    assert_eq!(code(&morrey(&["run", "--config", &bad_rho])), 2);
    assert_eq!(code(&morrey(&["run", "--config", tmp.path().join("absent.toml").to_str().unwrap()])), 2);
    assert_eq!(code(&morrey(&["run"])), 2);
}

#[test]
fn subcommand_must_match_config_kind() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "n.toml", NORMS);
    let o = morrey(&["universal", "--config", &cfg]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("kind"));
}

#[test]
fn unknown_fidelity_is_rejected() {
    assert_eq!(code(&morrey(&["norms", "--seed", "1", "--fidelity", "cubic"])), 2);
}
