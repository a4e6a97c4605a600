//! Trajectory tables and run manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use simplex_flow::mirror::IterateRecord;
use simplex_flow::TrajectoryRecord;

/// 17 significant digits, enough for a lossless round trip of any `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn header(first: &str, dim: usize, tail: &[&str]) -> String {
    let mut h = first.to_string();
    for i in 1..=dim {
        let _ = write!(h, ",p_{i}");
    }
    for t in tail {
        h.push(',');
        h.push_str(t);
    }
    h.push('\n');
    h
}

pub fn trajectory_csv(traj: &TrajectoryRecord) -> String {
    let dim = traj.samples.first().map_or(0, |s| s.p.len());
    let mut out = header("t", dim, &["free_energy", "kl_to_target", "field_norm"]);
    for s in &traj.samples {
        out.push_str(&num(s.t));
        for &p in s.p.probs() {
            out.push(',');
            out.push_str(&num(p));
        }
        for v in [s.free_energy, s.kl_to_target, s.field_norm] {
            out.push(',');
            out.push_str(&num(v));
        }
        out.push('\n');
    }
    out
}

pub fn iterate_csv(record: &IterateRecord) -> String {
    let mut out = header(
        "step",
        record.initial.len(),
        &["free_energy", "kl_step", "kl_to_softmax", "ascent_slack"],
    );
    for s in &record.steps {
        out.push_str(&s.step.to_string());
        for &p in s.p.probs() {
            out.push(',');
            out.push_str(&num(p));
        }
        for v in [s.free_energy, s.kl_step, s.kl_to_softmax, s.certificate.slack] {
            out.push(',');
            out.push_str(&num(v));
        }
        out.push('\n');
    }
    out
}

/// Emitted next to every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    /// SHA-256 of the canonical JSON of the resolved configuration.
    pub config_hash: String,
    pub seed: u64,
    pub wall_clock_seconds: f64,
    pub status: String,
    pub metrics: BTreeMap<String, f64>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String, seed: u64) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash,
            seed,
            wall_clock_seconds: 0.0,
            status: String::new(),
            metrics: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }
}

pub fn config_hash<T: Serialize>(config: &T) -> String {
    let canonical = serde_json::to_vec(config).expect("configurations serialize");
    hex::encode(Sha256::digest(&canonical))
}

/// `run.csv` → `run.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    output.with_file_name(format!("{stem}.manifest.json"))
}

pub fn write_file(path: &Path, contents: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, contents)
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(manifest).expect("manifests serialize");
    text.push('\n');
    write_file(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300, -7.25e12, 0.0] {
            let text = num(x);
            assert_eq!(text.parse::<f64>().unwrap(), x, "{text}");
        }
        assert_eq!(num(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn manifest_round_trip() {
        let mut m = RunManifest::new("simulate", config_hash(&[1.0, 2.0]), 7);
        m.metrics.insert("terminal_kl".into(), 1.25e-11);
        m.outputs.push("run.csv".into());
        let text = serde_json::to_string(&m).unwrap();
        let back: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
        assert_eq!(m.config_hash.len(), 64);
    }

    #[test]
    fn manifest_sits_next_to_output() {
        assert_eq!(manifest_path(Path::new("out/run.csv")), Path::new("out/run.manifest.json"));
    }
}
