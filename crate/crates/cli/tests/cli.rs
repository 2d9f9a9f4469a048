mod common;

use common::*;
use hmnn::{FilterState, Head, KernelParams, MuMode, NetworkShape, RandomSource, VariationalParams};
use hmnn_cli::checkpoint::Checkpoint;
use hmnn_cli::{load_checkpoint, serialize_checkpoint};
use serde_json::json;

fn random_state(seed: u64, steps: usize) -> FilterState {
    let mut rs = RandomSource::new(seed);
    let shape = NetworkShape::new(vec![3, 5, 4, 2], Head::SoftmaxCategorical).unwrap();
    let kernel = KernelParams::new(0.3, 0.6, 0.2, 7.0, MuMode::PreviousMean).unwrap();
    let rates = [(1usize, 0.4)].into_iter().collect();
    let init = VariationalParams::init(&shape, rates, 0.7, 0.3, &mut rs).unwrap();
    let mut state = FilterState::new(shape.clone(), kernel, init.clone()).unwrap();
    for _ in 0..steps {
        let n = shape.num_weights();
        let mean = rs.sample_standard_normal(n).iter().map(|v| v * 1e-3 + 1.0 / 3.0).collect();
        let s_tilde = rs.sample_standard_normal(n);
        let next = VariationalParams::new(&shape, mean, s_tilde, init.drop_rates().clone()).unwrap();
        state.history.push(next);
    }
    state
}

fn bits(p: &VariationalParams) -> Vec<u64> {
    p.mean.iter().chain(&p.s_tilde).map(|v| v.to_bits()).collect()
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    for seed in 0..5 {
        let state = random_state(seed, 4);
        serialize_checkpoint(&state, seed, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, state);
        for (a, b) in back.history.iter().zip(&state.history) {
            assert_eq!(bits(a), bits(b));
        }
    }
}

#[test]
fn truncated_checkpoint_is_a_clean_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    serialize_checkpoint(&random_state(3, 2), 3, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    let err = Checkpoint::load(&path).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");

    let config = write_config(dir.path(), "cfg.json", &evolving_config(3, 1));
    let out = dir.path().join("eval");
    let code = run_with("evaluate", &config, &out, &["--resume", path.to_str().unwrap()]);
    assert_eq!(code, 3);
    assert_eq!(read_json(&out.join("error.json"))["error"]["kind"], "data");
    assert!(!out.join("summary.json").exists());
}

#[test]
fn evolving_three_steps_two_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "cfg.json", &evolving_config(3, 2));
    let out = dir.path().join("run");
    assert_eq!(run_with("train-evolving", &config, &out, &[]), 0);

    let ckpt = Checkpoint::load(&out.join("checkpoint.json")).unwrap();
    assert_eq!(ckpt.step, 3);
    assert_eq!(ckpt.state.history.len(), 3);
    assert_eq!(ckpt.diagnostics.len(), 3);
    assert!(ckpt.diagnostics.iter().all(|d| d.objective_trace.len() == 2));

    let (header, rows) = read_csv(&out.join("per_step.csv"));
    assert_eq!(header, ["t", "f_t", "accuracy"]);
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][1], "1");

    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["results"]["per_step_accuracy"].as_array().unwrap().len(), 3);
    assert_eq!(summary["config"]["step"]["epochs"], 2);
    assert_eq!(summary["config"]["posterior"]["init_mean"], "he");
    let diagnostics = read_json(&out.join("diagnostics.json"));
    assert_eq!(diagnostics["mode"], "hmnn");
    assert_eq!(diagnostics["steps"].as_array().unwrap().len(), 3);
    assert_eq!(diagnostics["config"], summary["config"]);
}

#[test]
fn resume_reproduces_the_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let full_cfg = write_config(dir.path(), "full.json", &evolving_config(4, 2));
    let mut partial = evolving_config(4, 2);
    partial["max_steps"] = json!(2);
    let partial_cfg = write_config(dir.path(), "partial.json", &partial);

    let (full, first, resumed) = (dir.path().join("full"), dir.path().join("first"), dir.path().join("resumed"));
    assert_eq!(run_with("train-evolving", &full_cfg, &full, &[]), 0);
    assert_eq!(run_with("train-evolving", &partial_cfg, &first, &[]), 0);
    assert_eq!(Checkpoint::load(&first.join("checkpoint.json")).unwrap().step, 2);
    let resume = first.join("checkpoint.json");
    assert_eq!(run_with("train-evolving", &full_cfg, &resumed, &["--resume", resume.to_str().unwrap()]), 0);

    let a = Checkpoint::load(&full.join("checkpoint.json")).unwrap();
    let b = Checkpoint::load(&resumed.join("checkpoint.json")).unwrap();
    assert_eq!(a.state, b.state);
    assert_eq!(bits(a.state.latest()), bits(b.state.latest()));
    let acc = |d: &std::path::Path| read_json(&d.join("summary.json"))["results"]["per_step_accuracy"].clone();
    assert_eq!(acc(&full), acc(&resumed));
}

#[test]
fn resume_rejects_a_foreign_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "cfg.json", &evolving_config(3, 1));
    let run = dir.path().join("run");
    assert_eq!(run_with("train-evolving", &config, &run, &[]), 0);
    let ckpt = run.join("checkpoint.json");
    let other = dir.path().join("other");
    let code = run_with("train-evolving", &config, &other, &["--seed", "8", "--resume", ckpt.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn identical_seed_gives_identical_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "cfg.json", &evolving_config(3, 1));
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    // The echoed config includes output_dir, so both runs share it.
    assert_eq!(run_with("train-evolving", &config, &a, &[]), 0);
    let first = std::fs::read(a.join("summary.json")).unwrap();
    assert_eq!(run_with("train-evolving", &config, &a, &[]), 0);
    assert_eq!(first, std::fs::read(a.join("summary.json")).unwrap());

    assert_eq!(run_with("train-evolving", &config, &b, &[]), 0);
    assert_eq!(run_with("train-evolving", &config, &c, &["--seed", "99"]), 0);
    let results = |d: &std::path::Path| read_json(&d.join("summary.json"))["results"].clone();
    assert_eq!(results(&a), results(&b));
    assert_ne!(results(&a), results(&c));
    assert_eq!(read_json(&c.join("summary.json"))["config"]["seed"], 99);
}

#[test]
fn evaluate_rescores_a_stored_history() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "cfg.json", &evolving_config(3, 1));
    let (run, eval) = (dir.path().join("run"), dir.path().join("eval"));
    assert_eq!(run_with("train-evolving", &config, &run, &[]), 0);
    let ckpt = run.join("checkpoint.json");
    assert_eq!(run_with("evaluate", &config, &eval, &["--resume", ckpt.to_str().unwrap()]), 0);
    let acc = |d: &std::path::Path| read_json(&d.join("summary.json"))["results"]["per_step_accuracy"].clone();
    assert_eq!(acc(&run), acc(&eval));
    assert_eq!(read_json(&eval.join("summary.json"))["command"], "evaluate");

    let fresh = dir.path().join("fresh");
    assert_eq!(run_with("evaluate", &config, &fresh, &[]), 2);
}

#[test]
fn static_bayes_by_backprop_is_labelled_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    write_tiny_mnist(&dir.path().join("mnist"), 120, 40, 1);
    let mut cfg = json!({
        "experiment": "static",
        "network": { "hidden": [12, 12] },
        "kernel": { "pi": 0.5, "alpha": 0.0, "neg_log_sigma": 0.0, "c": 400.0, "mu": "zero_vector" },
        "step": {
            "epochs": 3,
            "learning_rate": 0.01,
            "optimizer": { "adam": { "beta1": 0.9, "beta2": 0.999, "eps": 1e-8 } },
            "minibatch": { "size": 20 }
        },
        "data": { "source": "mnist", "dir": "mnist", "train_size": 80, "validation_size": 40, "test_size": 40 },
        "seed": 3
    });
    let config = write_config(dir.path(), "bbp.json", &cfg);
    let out = dir.path().join("bbp");
    assert_eq!(run_with("train-static", &config, &out, &[]), 0);
    assert_eq!(read_json(&out.join("diagnostics.json"))["mode"], "bbp-degenerate");
    let (header, rows) = read_csv(&out.join("per_step.csv"));
    assert_eq!(header, ["p", "epoch", "validation_accuracy"]);
    assert_eq!(rows.len(), 3);
    assert!(out.join("checkpoint_p1.json").exists());

    cfg["posterior"] = json!({ "p_grid": [1.0, 0.5] });
    let config = write_config(dir.path(), "grid.json", &cfg);
    let out = dir.path().join("grid");
    assert_eq!(run_with("train-static", &config, &out, &[]), 0);
    let summary = read_json(&out.join("summary.json"));
    let runs = summary["results"]["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    assert_eq!(runs[0]["mode"], "bbp-degenerate");
    assert_eq!(runs[1]["mode"], "hmnn");
    assert_eq!(runs[1]["p"], 0.5);
    let table = std::fs::read_to_string(out.join("table.txt")).unwrap();
    assert!(table.starts_with("p "));
    assert_eq!(table.lines().count(), 4);

    let ckpt = out.join("checkpoint_p0.5.json");
    let eval = dir.path().join("eval");
    assert_eq!(run_with("evaluate", &config, &eval, &["--resume", ckpt.to_str().unwrap()]), 0);
    assert_eq!(read_json(&eval.join("summary.json"))["results"]["test_accuracy"], runs[1]["test_accuracy"]);
    assert_eq!(run_with("train-static", &config, &out, &["--resume", ckpt.to_str().unwrap()]), 2);
}

#[test]
fn series_run_reports_rmse_so_far() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "experiment": "series",
        "network": { "hidden": [8], "obs_var": 0.1 },
        "kernel": { "pi": 0.5, "alpha": 0.5, "neg_log_sigma": 2.0, "c": 50.0, "mu": "previous_mean" },
        "step": {
            "epochs": 3,
            "learning_rate": 0.01,
            "optimizer": { "adam": { "beta1": 0.9, "beta2": 0.999, "eps": 1e-8 } }
        },
        "data": { "source": "texture", "frames": 40, "height": 5, "width": 5 },
        "series": { "window": 5, "pca_components": 6, "eval_start": 20, "eval_stride": 2 },
        "checkpoint_every": 10,
        "seed": 2
    });
    let config = write_config(dir.path(), "cfg.json", &cfg);
    let out = dir.path().join("run");
    assert_eq!(run_with("train-series", &config, &out, &[]), 0);
    let (header, rows) = read_csv(&out.join("per_step.csv"));
    assert_eq!(header, ["t", "standardized_rmse_so_far"]);
    let frames: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(frames, ["20", "22", "24", "26", "28", "30", "32", "34", "36", "38", "40"]);
    let summary = read_json(&out.join("summary.json"));
    let last: f64 = rows.last().unwrap()[1].parse().unwrap();
    assert_eq!(summary["results"]["hmnn_standardized_rmse"].as_f64().unwrap(), last);
    assert!(summary["results"]["trivial_standardized_rmse"].as_f64().unwrap() > 0.0);
    assert_eq!(Checkpoint::load(&out.join("checkpoint.json")).unwrap().step, 35);
}

#[test]
fn gradcheck_default_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "experiment": "gradcheck",
        "kernel": { "pi": 0.5, "alpha": 0.5, "sigma": 0.3, "c": 20.0, "mu": "previous_mean" }
    });
    let config = write_config(dir.path(), "cfg.json", &cfg);
    let out = dir.path().join("gc");
    assert_eq!(run_with("gradcheck", &config, &out, &[]), 0);
    let results = &read_json(&out.join("summary.json"))["results"];
    assert!(results["max_rel_error"].as_f64().unwrap() < 1e-4, "{results}");
    assert_eq!(results["passed"], true);
}

#[test]
fn make_data_writes_streams_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "cfg.json", &evolving_config(3, 1));
    let out = dir.path().join("data");
    assert_eq!(run_with("make-data", &config, &out, &[]), 0);
    let (header, rows) = read_csv(&out.join("train_stream.csv"));
    assert_eq!(header, ["t", "f_t", "x0", "x1", "label", "identity_labelled"]);
    assert_eq!(rows.len(), 300);
    assert_eq!(read_json(&out.join("test_manifest.json"))["T"], 3);

    let series = json!({
        "experiment": "series",
        "kernel": { "pi": 0.5, "alpha": 0.5, "sigma": 0.1, "c": 50.0, "mu": "previous_mean" },
        "data": { "source": "texture", "frames": 50, "height": 4, "width": 3 },
        "series": { "eval_start": 40, "window": 10 }
    });
    let config = write_config(dir.path(), "series.json", &series);
    let out = dir.path().join("series");
    assert_eq!(run_with("make-data", &config, &out, &[]), 0);
    let frames = hmnn::data::series::read_series_csv(&out.join("series.csv")).unwrap();
    assert_eq!((frames.rows(), frames.cols()), (50, 12));
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let good = write_config(d, "good.json", &evolving_config(2, 1));

    assert_eq!(hmnn(&["--help"]), 0);
    assert_eq!(hmnn(&["no-such-command"]), 2);
    assert_eq!(hmnn(&["train-evolving"]), 2);
    assert_eq!(run_with("train-evolving", &d.join("missing.json"), &d.join("o1"), &[]), 2);
    assert_eq!(run_with("train-series", &good, &d.join("o2"), &[]), 2);
    assert_eq!(read_json(&d.join("o2/error.json"))["error"]["exit_code"], 2);

    std::fs::write(d.join("bad.json"), "{ not json").unwrap();
    assert_eq!(run_with("train-evolving", &d.join("bad.json"), &d.join("o3"), &[]), 2);

    let mut both = evolving_config(2, 1);
    both["kernel"]["sigma"] = json!(0.1);
    let cfg = write_config(d, "both.json", &both);
    assert_eq!(run_with("train-evolving", &cfg, &d.join("o4"), &[]), 2);

    let mut missing_dir = json!({
        "experiment": "static",
        "kernel": { "pi": 0.5, "alpha": 0.0, "sigma": 1.0, "c": 400.0, "mu": "zero_vector" },
        "data": { "source": "mnist", "dir": "nowhere" }
    });
    let cfg = write_config(d, "nodir.json", &missing_dir);
    assert_eq!(run_with("train-static", &cfg, &d.join("o5"), &[]), 2);

    std::fs::create_dir_all(d.join("broken")).unwrap();
    for name in ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"] {
        std::fs::write(d.join("broken").join(name), b"\x00\x00\x08").unwrap();
    }
    missing_dir["data"]["dir"] = json!("broken");
    let cfg = write_config(d, "broken.json", &missing_dir);
    assert_eq!(run_with("train-static", &cfg, &d.join("o6"), &[]), 3);

    let mut diverge = evolving_config(2, 2);
    diverge["step"]["learning_rate"] = json!(1e300);
    diverge["step"]["optimizer"] = json!("vanilla_gd");
    let cfg = write_config(d, "diverge.json", &diverge);
    assert_eq!(run_with("train-evolving", &cfg, &d.join("o7"), &[]), 4);
    assert_eq!(read_json(&d.join("o7/error.json"))["error"]["kind"], "numeric");

    let strict = json!({
        "experiment": "gradcheck",
        "kernel": { "pi": 0.5, "alpha": 0.5, "sigma": 0.3, "c": 20.0, "mu": "previous_mean" },
        "gradcheck": { "tolerance": 1e-300 }
    });
    let cfg = write_config(d, "strict.json", &strict);
    assert_eq!(run_with("gradcheck", &cfg, &d.join("o8"), &[]), 4);
    assert!(d.join("o8/summary.json").exists());

    std::fs::write(d.join("occupied"), b"").unwrap();
    assert_eq!(run_with("train-evolving", &good, &d.join("occupied"), &[]), 5);
}
