#![allow(dead_code)]

use std::path::{Path, PathBuf};

use harmnet::cli::run_from;

/// Runs the CLI in-process and returns its stdout.
pub fn harmnet(args: &[&str]) -> anyhow::Result<String> {
    let mut out = Vec::new();
    let argv = std::iter::once("harmnet").chain(args.iter().copied());
    run_from(argv, &mut out)?;
    Ok(String::from_utf8(out).expect("utf-8 output"))
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Writes a synthetic corpus and returns its path.
pub fn gen(dir: &Path, name: &str, profile: &str, count: usize, seed: u64) -> PathBuf {
    let out = dir.join(name);
    harmnet(&[
        "gen-synth",
        "--out",
        path_str(&out),
        "--count",
        &count.to_string(),
        "--seed",
        &seed.to_string(),
        "--profile",
        profile,
    ])
    .unwrap();
    out
}

/// Small attentive GRU-CNN settings that train in seconds.
pub const SMALL: &[&str] = &[
    "--set",
    "embed_dim=16",
    "--set",
    "channels=8",
    "--set",
    "hidden_size=16",
    "--set",
    "n_max=32",
    "--set",
    "batch_size=16",
    "--set",
    "max_epochs=12",
    "--set",
    "early_stop_patience=4",
];

pub fn train_small(data: &Path, out: &Path, variant: &str, seed: u64) -> anyhow::Result<String> {
    let seed = seed.to_string();
    let mut args = vec![
        "train",
        "--data",
        path_str(data),
        "--variant",
        variant,
        "--schema",
        "binary",
        "--out",
        path_str(out),
        "--seed",
        &seed,
        "--quiet",
    ];
    args.extend_from_slice(SMALL);
    harmnet(&args)
}
