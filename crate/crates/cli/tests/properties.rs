use hmnn::{FilterState, Head, KernelParams, MuMode, NetworkShape, RandomSource, VariationalParams};
use hmnn_cli::checkpoint::Checkpoint;
use hmnn_cli::config::ExperimentConfig;
use proptest::prelude::*;
use serde_json::json;

fn kernel_json(scale: serde_json::Value) -> String {
    let mut cfg = json!({
        "experiment": "evolving",
        "kernel": { "pi": 0.4, "alpha": 0.3, "mu": "previous_mean" },
        "data": { "source": "synthetic_drift", "steps": 2 }
    });
    for (k, v) in scale.as_object().unwrap() {
        cfg["kernel"][k] = v.clone();
    }
    cfg.to_string()
}

proptest! {
    #[test]
    fn checkpoint_bytes_round_trip(seed in any::<u64>(), steps in 0usize..4, scale in 1e-3f64..10.0) {
        let mut rs = RandomSource::new(seed);
        let shape = NetworkShape::new(vec![2, 3, 2], Head::GaussianRegression { obs_var: 0.5 }).unwrap();
        let kernel = KernelParams::new(0.5, 0.5, scale, 1.0 + scale, MuMode::ZeroVector).unwrap();
        let init = VariationalParams::init(&shape, Default::default(), 1.0, scale, &mut rs).unwrap();
        let mut state = FilterState::new(shape.clone(), kernel, init).unwrap();
        for _ in 0..steps {
            let n = shape.num_weights();
            let p = VariationalParams::new(&shape, rs.sample_standard_normal(n), rs.sample_standard_normal(n), Default::default()).unwrap();
            state.history.push(p);
        }
        let ckpt = Checkpoint::new(state, seed, Vec::new());
        let bytes = serde_json::to_vec(&ckpt).unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &ckpt);
        let cut = (bytes.len() as f64 * 0.9) as usize;
        prop_assert!(Checkpoint::from_bytes(&bytes[..cut]).is_err());
    }

    #[test]
    fn neg_log_aliases_match_direct_scales(ls in -3.0f64..6.0, lc in 0.01f64..8.0) {
        let alias = ExperimentConfig::from_json(&kernel_json(json!({ "neg_log_sigma": ls, "c": lc.exp() }))).unwrap();
        let direct = ExperimentConfig::from_json(&kernel_json(json!({ "sigma": (-ls).exp(), "c": lc.exp() }))).unwrap();
        prop_assert_eq!(&alias.kernel, &direct.kernel);
        let both = kernel_json(json!({ "sigma": 1.0, "neg_log_sigma": ls, "c": lc.exp() }));
        prop_assert!(ExperimentConfig::from_json(&both).is_err());
    }

    #[test]
    fn echoed_config_reparses_to_itself(seed in any::<u64>(), epochs in 1usize..50, lr in 1e-5f64..1.0, p in 0.01f64..1.0) {
        let text = json!({
            "experiment": "evolving",
            "kernel": { "pi": 0.5, "alpha": 0.5, "neg_log_sigma": 1.5, "c": 20.0, "mu": "previous_mean" },
            "posterior": { "p": p },
            "step": { "epochs": epochs, "learning_rate": lr },
            "data": { "source": "synthetic_drift" },
            "seed": seed
        });
        let cfg = ExperimentConfig::from_json(&text.to_string()).unwrap();
        cfg.validate().unwrap();
        let again = ExperimentConfig::from_json(&cfg.echo().to_string()).unwrap();
        prop_assert_eq!(again, cfg);
    }
}
