#![allow(dead_code)]

use std::path::{Path, PathBuf};

use hmnn::data::idx::{encode_idx_images, encode_idx_labels, IdxImages};
use hmnn::RandomSource;
use serde_json::Value;

/// Runs the CLI in-process and returns its exit code.
pub fn hmnn(args: &[&str]) -> i32 {
    let mut argv = vec!["hmnn"];
    argv.extend_from_slice(args);
    hmnn_cli::run_command(argv)
}

pub fn run_with(command: &str, config: &Path, output: &Path, extra: &[&str]) -> i32 {
    let mut args = vec![
        command,
        "--config",
        config.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    hmnn(&args)
}

pub fn write_config(dir: &Path, name: &str, config: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_vec_pretty(config).unwrap()).unwrap();
    path
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

/// Writes MNIST-format IDX files of 6x6 images whose class is visible in
/// the brightness of one row.
pub fn write_tiny_mnist(dir: &Path, train: usize, test: usize, seed: u64) {
    std::fs::create_dir_all(dir).unwrap();
    let mut rs = RandomSource::new(seed);
    for (prefix, count) in [("train", train), ("t10k", test)] {
        let mut pixels = Vec::with_capacity(count * 36);
        let mut labels = Vec::with_capacity(count);
        for i in 0..count {
            let label = (i % 10) as u8;
            for p in 0..36 {
                let bright = p / 6 == label as usize % 6;
                let base = if bright { 200.0 } else { 20.0 };
                pixels.push((base + 30.0 * rs.uniform()) as u8);
            }
            labels.push(label);
        }
        let images = IdxImages {
            count,
            rows: 6,
            cols: 6,
            pixels,
        };
        std::fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), encode_idx_images(&images)).unwrap();
        std::fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), encode_idx_labels(&labels)).unwrap();
    }
}

pub fn evolving_config(steps: usize, epochs: usize) -> Value {
    serde_json::json!({
        "experiment": "evolving",
        "network": { "hidden": [8] },
        "kernel": { "pi": 0.5, "alpha": 0.5, "neg_log_sigma": 2.0, "c": 50.0, "mu": "previous_mean" },
        "step": {
            "epochs": epochs,
            "learning_rate": 0.01,
            "optimizer": { "adam": { "beta1": 0.9, "beta2": 0.999, "eps": 1e-8 } },
            "minibatch": { "size": 25 }
        },
        "data": { "source": "synthetic_drift", "steps": steps, "per_step_n": 100, "test_per_step_n": 200 },
        "seed": 7
    })
}
