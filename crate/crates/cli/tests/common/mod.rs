#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Parser;
use shroomgen_cli::{run, Cli, CliError};

/// Writes a project config for small renders under `dir` and returns its path.
pub fn small_config(dir: &Path, seed: u64, scenes: u64, width: u32, height: u32) -> PathBuf {
    let cfg = serde_json::json!({
        "master_seed": seed,
        "scene_count": scenes,
        "scene": {"lens": {"width": width, "height": height}},
        "crop": {"width": height, "height": height},
        "tile": {"tile_width": height / 2, "tile_height": height / 2},
        "output": dir.join("out"),
        "generation": {"initial_backoff_ms": 5, "request_timeout_s": 10},
    });
    let p = dir.join("project.json");
    std::fs::write(&p, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    p
}

pub fn cli(args: &[&str]) -> Result<(), CliError> {
    let mut full = vec!["shroomgen"];
    full.extend_from_slice(args);
    run(&Cli::try_parse_from(full).expect("arguments parse"))
}

/// Every file under `root` with its bytes, keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    if root.is_dir() {
        walk(root, root, &mut out);
    }
    out
}
