#![allow(dead_code)]

use hetsl_harness::ExperimentConfig;

/// A configuration that trains in well under a second.
pub fn tiny_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    for (k, v) in [
        ("filters", "2"),
        ("image", "8"),
        ("fc1_units", "8"),
        ("k", "48"),
        ("epochs", "2"),
        ("batch_size", "8"),
        ("eval_every", "2"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg.seed = seed;
    cfg
}
