#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn shrubmap(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shrubmap"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

pub fn ok(args: &[&str], cwd: &Path) -> String {
    let out = shrubmap(args, cwd);
    assert!(
        out.status.success(),
        "shrubmap {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Writes `config.toml` into `dir` and returns its path.
pub fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.toml");
    fs::write(&p, body).unwrap();
    p
}

/// A small, fast pipeline: 192² scene with four blobs.
pub const SMALL_CONFIG: &str = r#"
[paths]
output_dir = "out"

[synth]
scene_size = 192
n_blobs = 4
blob_radius_range = [10.0, 16.0]
min_separation = 12.0
rng_seed = 11

[augment]
multiplier = 10
rng_seed = 11

[train]
alpha = 0.05
max_iterations = 300
rng_seed = 11

[detect]
window_sizes = [48, 38]

[obia.params]
scale = 30.0
shape_weight = 0.3
compactness_weight = 0.8

[obia.grid]
scale = [20.0, 30.0]
shape = [0.3]
compactness = [0.5, 0.8]
"#;

/// All files under `dir`, relative, sorted.
pub fn list_files(dir: &Path) -> Vec<PathBuf> {
    fn walk(base: &Path, d: &Path, out: &mut Vec<PathBuf>) {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.push(p.strip_prefix(base).unwrap().to_path_buf());
            }
        }
    }
    let mut v = Vec::new();
    walk(dir, dir, &mut v);
    v.sort();
    v
}

/// File contents with any CSV `seconds` column removed.
pub fn without_timing(path: &Path) -> Vec<u8> {
    let bytes = fs::read(path).unwrap();
    if path.extension().is_none_or(|e| e != "csv") {
        return bytes;
    }
    let text = String::from_utf8(bytes).unwrap();
    let mut lines = text.lines();
    let Some(header) = lines.next() else {
        return Vec::new();
    };
    let cols: Vec<&str> = header.split(',').collect();
    let Some(k) = cols.iter().position(|c| *c == "seconds") else {
        return text.into_bytes();
    };
    std::iter::once(header)
        .chain(lines)
        .map(|l| {
            l.split(',')
                .enumerate()
                .filter(|(i, _)| *i != k)
                .map(|(_, c)| c)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
        .into_bytes()
}
