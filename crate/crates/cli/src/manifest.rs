//! Output directory bookkeeping: every file written through [`Run`] is
//! hashed and listed in `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

/// Column layouts of the CSV files, versioned.
pub fn csv_schema(name: &str) -> Option<&'static str> {
    Some(match name {
        "profile.csv" => "v1: t,value",
        "field.csv" => "v1: x,y[,z],value",
        "gamma.csv" => "v1: rho,eps,N,density,converged,iterations",
        "periodic.csv" => "v1: nu_x,nu_y[,nu_z],x,r,density,converged",
        "polar.csv" => "v1: angle,density",
        "samples.csv" => "v1: seed,r,nu,density,iterations,converged",
        _ => return None,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub timestamp_unix: u64,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub csv_schemas: BTreeMap<String, String>,
    pub timings: BTreeMap<String, f64>,
    pub outputs: Vec<OutputEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub struct Run {
    dir: PathBuf,
    command: String,
    seed: u64,
    config: serde_json::Value,
    outputs: Vec<OutputEntry>,
    timings: BTreeMap<String, f64>,
    started: Instant,
}

impl Run {
    pub fn new(dir: &Path, command: &str, seed: u64, config: serde_json::Value) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command: command.to_string(),
            seed,
            config,
            outputs: Vec::new(),
            timings: BTreeMap::new(),
            started: Instant::now(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.retain(|o| o.path != name);
        self.outputs.push(OutputEntry {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Runs `f` and records its wall time under `task`.
    pub fn timed<T>(&mut self, task: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let v = f();
        self.timings
            .insert(task.to_string(), t.elapsed().as_secs_f64());
        v
    }

    pub fn finish(mut self) -> Result<Manifest> {
        self.timings
            .insert("total".into(), self.started.elapsed().as_secs_f64());
        let csv_schemas = self
            .outputs
            .iter()
            .filter_map(|o| csv_schema(&o.path).map(|s| (o.path.clone(), s.to_string())))
            .collect();
        let manifest = Manifest {
            tool: "phasecell".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            command: self.command,
            seed: self.seed,
            config: self.config,
            csv_schemas,
            timings: self.timings,
            outputs: self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.dir.join(MANIFEST), text)?;
        Ok(manifest)
    }
}

/// Checks that every listed output exists and matches its hash.
#[cfg(test)]
pub fn check_manifest(dir: &Path) -> Result<Manifest> {
    use anyhow::bail;
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let m: Manifest = serde_json::from_str(&text)?;
    for o in &m.outputs {
        let bytes =
            fs::read(dir.join(&o.path)).with_context(|| format!("missing output {}", o.path))?;
        if sha256_hex(&bytes) != o.sha256 {
            bail!("hash mismatch for {}", o.path);
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_lists_and_verifies_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = Run::new(dir.path(), "cp", 3, serde_json::json!({"seed": 3})).unwrap();
        run.write("a.txt", b"one").unwrap();
        run.write("gamma.csv", b"rho\n").unwrap();
        let m = run.finish().unwrap();
        assert_eq!(m.outputs.len(), 2);
        assert!(m.csv_schemas.contains_key("gamma.csv"));
        check_manifest(dir.path()).unwrap();
        fs::write(dir.path().join("a.txt"), b"two").unwrap();
        assert!(check_manifest(dir.path()).is_err());
    }
}
