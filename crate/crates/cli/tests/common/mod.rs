#![allow(dead_code)]

use std::path::Path;

use serde_json::{json, Value};

/// A pipeline small enough to run end to end in seconds.
pub fn tiny_config() -> Value {
    let random =
        |seed| json!({ "kind": "random", "seed": seed, "turns": 2, "frames": 8, "max_angle": 0.5 });
    json!({
        "simulate": {
            "scene": { "strands": 6, "vertices_per_strand": 6, "grid_resolution": 16, "settle_frames": 10 },
            "train": [random(1), random(2)],
            "test": [{ "kind": "damped", "amplitude": 0.4, "period_frames": 6.0, "decay_frames": 8.0, "frames": 8 }]
        },
        "dynamics": {
            "coarse_train": { "steps": 5, "points_per_step": 20 },
            "fine_train": { "steps": 5, "points_per_step": 20, "rollout_steps": 2 }
        },
        "gsplat": {
            "train": { "steps": 3 },
            "cameras": { "count": 2, "size": 16 },
            "train_stride": 4,
            "render_stride": 4
        }
    })
}

pub fn write_config(dir: &Path, cfg: &Value) -> std::path::PathBuf {
    let p = dir.join("config_in.json");
    std::fs::write(&p, serde_json::to_vec_pretty(cfg).unwrap()).unwrap();
    p
}

/// Runs `dgh <args>` in-process and parses the JSON line.
pub fn dgh(args: &[&str]) -> (i32, Value) {
    let mut argv = vec!["dgh"];
    argv.extend_from_slice(args);
    let out = dgh_cli::run(argv);
    let v = serde_json::from_str(out.stdout.trim()).unwrap_or(Value::Null);
    (out.code, v)
}

pub const STAGES: [&str; 7] = [
    "simulate",
    "train-coarse",
    "train-fine",
    "train-appearance",
    "infer",
    "render",
    "eval",
];

/// Every stage in order; panics with the JSON output of a failing stage.
pub fn run_pipeline(config: &Path, out: &Path, seed: u64) {
    let seed = seed.to_string();
    for stage in STAGES {
        let (code, v) = dgh(&[
            stage,
            "--config",
            config.to_str().unwrap(),
            "--seed",
            &seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{stage}: {v}");
    }
}

/// Relative path and bytes of every file under `root`, sorted.
pub fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}
