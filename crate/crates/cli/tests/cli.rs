use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn phasecell(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phasecell"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("PHASECELL_OUT")
        .output()
        .expect("spawn phasecell")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn cp_prints_value_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = phasecell(dir.path(), &["cp", "--potential", "quartic", "--p", "2"]);
    assert!(o.status.success());
    let cp: f64 = String::from_utf8_lossy(&o.stdout).trim().parse().unwrap();
    assert!((cp - 1.0 / 3.0).abs() < 1e-8, "cp = {cp}");
    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["command"], "cp");
    let names: Vec<&str> = m["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| o["path"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"cp.json") && names.contains(&"config.toml"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        phasecell(dir.path(), &["no-such-command"]).status.code(),
        Some(2)
    );
    assert_eq!(
        phasecell(dir.path(), &["cell", "--rho", "oops"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        phasecell(dir.path(), &["cp", "--p", "0.5"]).status.code(),
        Some(1)
    );
    assert_eq!(
        phasecell(dir.path(), &["cell", "--rho", "0.1", "--eps", "0.1"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(phasecell(dir.path(), &["cp"]).status.code(), Some(0));
}

#[test]
fn manifest_hashes_match_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = phasecell(
        dir.path(),
        &["cell", "--nu", "1,0", "--eps", "0.125", "--N", "32"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&dir.path().join("manifest.json"));
    let outputs = m["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 3);
    for e in outputs {
        let bytes = fs::read(dir.path().join(e["path"].as_str().unwrap())).unwrap();
        let hex: String = Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        assert_eq!(e["sha256"].as_str().unwrap(), hex);
        assert_eq!(e["bytes"].as_u64().unwrap(), bytes.len() as u64);
    }
    assert_eq!(m["csv_schemas"]["field.csv"], "v1: x,y[,z],value");
    let first = fs::read_to_string(dir.path().join("field.csv")).unwrap();
    assert!(first.starts_with("x,y,value\n"));
    assert_eq!(first.lines().count(), 1 + 33 * 33);
}

#[test]
fn verify_report_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = phasecell(d.path(), &["--seed", "11", "verify", "--level", "fast"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let ra = fs::read(a.path().join("verify.json")).unwrap();
    let rb = fs::read(b.path().join("verify.json")).unwrap();
    assert_eq!(ra, rb);
    let v: Value = serde_json::from_slice(&ra).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["seed"], 11);
}

#[test]
fn rerun_from_echoed_config_reproduces_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = phasecell(
        a.path(),
        &[
            "--seed",
            "5",
            "cell",
            "--coefficient",
            "laminate",
            "--axis",
            "1",
            "--values",
            "1,2",
            "--eps",
            "0.125",
            "--N",
            "32",
        ],
    );
    assert!(o.status.success());
    let cfg = a.path().join("config.toml");
    let o = phasecell(b.path(), &["--config", cfg.to_str().unwrap(), "cell"]);
    assert!(o.status.success());
    for f in ["cell.json", "field.csv", "config.toml"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(json(&b.path().join("manifest.json"))["seed"], 5);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("in.toml");
    fs::write(&cfg, "[cell]\neps = 0.25\ncells = 16\n").unwrap();
    let out = dir.path().join("out");
    let o = phasecell(
        &out,
        &["--config", cfg.to_str().unwrap(), "cell", "--eps", "0.125"],
    );
    assert!(o.status.success());
    let r = json(&out.join("cell.json"));
    assert_eq!(r["eps"], 0.125);
    assert_eq!(r["cells"], 16);
}

#[test]
fn unknown_config_key_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[cell]\nepsilon = 0.1\n").unwrap();
    let o = phasecell(
        &dir.path().join("o"),
        &["--config", cfg.to_str().unwrap(), "cell"],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn export_field_binary_layout() {
    let dir = tempfile::tempdir().unwrap();
    let o = phasecell(
        dir.path(),
        &[
            "export-field",
            "--format",
            "bin",
            "--N",
            "16",
            "--eps",
            "0.125",
        ],
    );
    assert!(o.status.success());
    let bytes = fs::read(dir.path().join("field.bin")).unwrap();
    assert_eq!(&bytes[..4], b"PCFD");
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cells = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    assert_eq!((n, cells), (2, 16));
    assert_eq!(bytes.len(), 12 + 8 * (2 + n) + 8 * 17 * 17);
    let eps = f64::from_le_bytes(
        bytes[12 + 8 * (1 + n)..12 + 8 * (2 + n)]
            .try_into()
            .unwrap(),
    );
    assert_eq!(eps, 0.125);
}

#[test]
fn periodic_and_stochastic_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = phasecell(
        dir.path(),
        &["periodic", "--r-list", "4,8", "--cells-per-unit", "16"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("periodic.csv")).unwrap();
    assert!(csv.starts_with("nu_x,nu_y,x,r,density,converged\n"));
    assert_eq!(csv.lines().count(), 3);

    let s = dir.path().join("s");
    let o = phasecell(
        &s,
        &["--seed", "2", "stochastic", "--r-list", "4", "--seeds", "8"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(s.join("samples.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
    assert!(
        json(&s.join("stochastic.json"))["levels"]
            .as_array()
            .unwrap()
            .len()
            == 1
    );
}

#[test]
fn directions_accept_integer_pairs_and_angles() {
    let run = |nu: &str| {
        let dir = tempfile::tempdir().unwrap();
        let o = phasecell(
            dir.path(),
            &["cell", "--nu", nu, "--eps", "0.125", "--N", "32"],
        );
        assert!(
            o.status.success(),
            "{nu}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        json(&dir.path().join("cell.json"))["density"]
            .as_f64()
            .unwrap()
    };
    let pair = run("3,4");
    let unit = run("0.6,0.8");
    assert!((pair - unit).abs() < 1e-12);
    let a = run("0,1");
    let b = run("90deg");
    assert!((a - b).abs() < 1e-9, "{a} {b}");
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        phasecell(dir.path(), &["cell", "--nu", "0,0"])
            .status
            .code(),
        Some(2)
    );
}
