mod common;

use std::fs;

use common::{gen, harmnet, path_str, train_small};
use harmnet::cli::{CHECKPOINT_FILE, CONFIG_FILE, EVAL_FILE, HISTORY_FILE, VOCAB_FILE};
use harmnet::config::RunConfig;
use harmnet::io;
use harmnet::pipeline::prepare;
use harmnet_core::data::Report;
use harmnet_core::metrics::EvalReport;
use serde_json::Value;
use tempfile::tempdir;

#[test]
fn gen_synth_is_deterministic_and_counts_lines() {
    let dir = tempdir().unwrap();
    let a = gen(dir.path(), "a.jsonl", "separable", 100, 4);
    let b = gen(dir.path(), "b.jsonl", "separable", 100, 4);
    let c = gen(dir.path(), "c.jsonl", "separable", 100, 5);
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    assert_ne!(bytes, fs::read(&c).unwrap());
    assert_eq!(String::from_utf8(bytes).unwrap().lines().count(), 100);
}

#[test]
fn gen_synth_summary_reports_harm_share() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("ds2.jsonl");
    let summary = harmnet(&[
        "gen-synth",
        "--out",
        path_str(&out),
        "--count",
        "10000",
        "--seed",
        "1",
        "--profile",
        "ds2_like",
    ])
    .unwrap();
    assert!(summary.starts_with("wrote 10000 reports"), "{summary}");
    let reports = io::read_jsonl(&out).unwrap();
    let harm =
        reports.iter().filter(|r| r.is_harm() == Some(true)).count() as f64 / reports.len() as f64;
    assert!((harm - 0.034).abs() <= 0.01, "harm share {harm}");
}

#[test]
fn unwritable_output_is_an_error() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("missing").join("x.jsonl");
    assert!(harmnet(&["gen-synth", "--out", path_str(&out), "--count", "5"]).is_err());
    assert!(!out.exists());
}

#[test]
fn unknown_variant_lists_the_valid_ones() {
    let err = harmnet(&["train", "--data", "x.jsonl", "--variant", "bogus"]).unwrap_err();
    let msg = err.to_string();
    for v in ["cnn", "att_bigru_cnn", "att_lstm_cnn"] {
        assert!(msg.contains(v), "{msg}");
    }
    assert!(err.downcast_ref::<clap::Error>().is_some());
}

#[test]
fn failed_training_leaves_no_run_directory() {
    let dir = tempdir().unwrap();
    let data = dir.path().join("one_class.jsonl");
    let reports: Vec<Report> = (0..10)
        .map(|i| {
            serde_json::from_value(
                serde_json::json!({"text": format!("report {i}"), "severity": "A"}),
            )
            .unwrap()
        })
        .collect();
    io::write_jsonl(&data, &reports).unwrap();
    let run = dir.path().join("run");
    let err = train_small(&data, &run, "cnn", 0).unwrap_err();
    assert!(err.to_string().starts_with("data:"), "{err:#}");
    assert!(!run.exists());

    let err = harmnet(&[
        "train",
        "--data",
        path_str(&data),
        "--out",
        path_str(&run),
        "--set",
        "max_epochs=x",
    ])
    .unwrap_err();
    assert!(err.to_string().starts_with("config"), "{err:#}");
    assert!(!run.exists());
}

#[test]
fn train_eval_predict_round_trip() {
    let dir = tempdir().unwrap();
    let data = gen(dir.path(), "sep.jsonl", "separable", 400, 2);
    let run = dir.path().join("run");
    let log = train_small(&data, &run, "att_gru_cnn", 3).unwrap();
    assert!(log.contains("best epoch"), "{log}");
    for f in [
        CONFIG_FILE,
        VOCAB_FILE,
        CHECKPOINT_FILE,
        HISTORY_FILE,
        EVAL_FILE,
    ] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    // nothing but the final files in the run directory
    let names: Vec<String> = fs::read_dir(&run)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert!(names.iter().all(|n| !n.starts_with(".tmp")), "{names:?}");
    assert!(fs::read_to_string(run.join(CONFIG_FILE))
        .unwrap()
        .contains("variant = att_gru_cnn"));

    let test_eval: EvalReport = io::read_json(&run.join(EVAL_FILE)).unwrap();
    assert!(
        test_eval.headline().f1 >= 0.95,
        "test F-1 {}",
        test_eval.headline().f1
    );

    // the training split is memorized
    let mut cfg = RunConfig::default();
    cfg.apply_file(&run.join(CONFIG_FILE)).unwrap();
    let all = io::read_jsonl(&data).unwrap();
    let prep = prepare(&all, &cfg).unwrap();
    let train_file = dir.path().join("train.jsonl");
    io::write_jsonl(
        &train_file,
        &prep
            .split
            .train
            .iter()
            .map(|&i| all[i].clone())
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let json = harmnet(&[
        "eval",
        "--model",
        path_str(&run),
        "--data",
        path_str(&train_file),
        "--json",
    ])
    .unwrap();
    let v: Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["report"]["accuracy"].as_f64(), Some(1.0));

    let table = harmnet(&["eval", "--model", path_str(&run), "--data", path_str(&data)]).unwrap();
    let header: Vec<&str> = table.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["class", "P", "R", "F-1", "AUC", "support"]);

    // one category in, one group out
    let mut reports = io::read_jsonl(&data).unwrap();
    reports
        .iter_mut()
        .for_each(|r| r.category = Some("Medication".into()));
    let cat = dir.path().join("cat.jsonl");
    io::write_jsonl(&cat, &reports).unwrap();
    let json = harmnet(&[
        "eval",
        "--model",
        path_str(&run),
        "--data",
        path_str(&cat),
        "--by-category",
        "--json",
    ])
    .unwrap();
    let v: Value = serde_json::from_str(&json).unwrap();
    let groups = v["by_category"].as_object().unwrap();
    assert_eq!(groups.keys().collect::<Vec<_>>(), ["Medication"]);

    let text = &reports[0].text;
    let json = harmnet(&[
        "predict",
        "--model",
        path_str(&run),
        "--text",
        text,
        "--json",
    ])
    .unwrap();
    let p: Value = serde_json::from_str(json.trim()).unwrap();
    let alphas: Vec<f64> = p["attention"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["alpha"].as_f64().unwrap())
        .collect();
    assert!((alphas.iter().sum::<f64>() - 1.0).abs() <= 1e-6);

    // human-readable output carries the same numbers
    let human = harmnet(&["predict", "--model", path_str(&run), "--text", text]).unwrap();
    assert!(human.contains(&format!("class: {}", p["class"].as_str().unwrap())));
    for pair in p["probabilities"].as_array().unwrap() {
        assert!(
            human.contains(&format!(
                "{}={}",
                pair[0].as_str().unwrap(),
                pair[1].as_f64().unwrap()
            )),
            "{human}"
        );
    }
    for a in &alphas {
        assert!(human.contains(&format!("  {a}\t")), "{human}");
    }

    let json = harmnet(&[
        "predict",
        "--model",
        path_str(&run),
        "--text",
        "fall",
        "--json",
    ])
    .unwrap();
    let p: Value = serde_json::from_str(json.trim()).unwrap();
    let att = p["attention"].as_array().unwrap();
    assert_eq!(att.len(), 1);
    assert_eq!(att[0]["alpha"].as_f64(), Some(1.0));

    let err = harmnet(&["predict", "--model", path_str(&run), "--text", "   "]).unwrap_err();
    assert!(err.to_string().starts_with("input:"), "{err:#}");

    // a vocabulary from another corpus does not fit this checkpoint
    let other = gen(dir.path(), "other.jsonl", "ds1_like", 200, 8);
    let other_run = dir.path().join("other_run");
    train_small(&other, &other_run, "cnn", 0).unwrap();
    fs::copy(other_run.join(VOCAB_FILE), run.join(VOCAB_FILE)).unwrap();
    let err = harmnet(&["eval", "--model", path_str(&run), "--data", path_str(&data)]).unwrap_err();
    assert!(err.to_string().contains("incompatible"), "{err:#}");
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempdir().unwrap();
    let data = gen(dir.path(), "sep.jsonl", "separable", 120, 1);
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "variant = lstm\nmax_epochs = 2\nembed_dim = 8\nhidden_size = 8\nn_max = 16\n",
    )
    .unwrap();
    let run = dir.path().join("run");
    harmnet(&[
        "train",
        "--data",
        path_str(&data),
        "--config",
        path_str(&cfg),
        "--variant",
        "cnn",
        "--out",
        path_str(&run),
        "--set",
        "channels=4",
        "--quiet",
    ])
    .unwrap();
    let echo = fs::read_to_string(run.join(CONFIG_FILE)).unwrap();
    for line in [
        "variant = cnn",
        "max_epochs = 2",
        "embed_dim = 8",
        "channels = 4",
    ] {
        assert!(echo.lines().any(|l| l == line), "{line} not in\n{echo}");
    }
}

#[test]
fn gradcheck_passes_and_repeats_exactly() {
    let a = harmnet(&["gradcheck", "--variant", "att_lstm_cnn", "--seed", "2"]).unwrap();
    let b = harmnet(&["gradcheck", "--variant", "att_lstm_cnn", "--seed", "2"]).unwrap();
    assert!(a.trim_end().ends_with("PASS"), "{a}");
    assert_eq!(a, b);
    assert!(harmnet(&["gradcheck", "--variant", "nope"]).is_err());
}

#[test]
fn predict_takes_exactly_one_input() {
    assert!(harmnet(&["predict", "--model", "run"])
        .unwrap_err()
        .downcast_ref::<clap::Error>()
        .is_some());
    let both = harmnet(&[
        "predict", "--model", "run", "--text", "x", "--data", "d.jsonl",
    ])
    .unwrap_err();
    assert!(both.downcast_ref::<clap::Error>().is_some());
    // parsing succeeds with one input; loading the missing run then fails
    let missing = harmnet(&["predict", "--model", "no/such/run", "--text", "x"]).unwrap_err();
    assert!(missing.downcast_ref::<clap::Error>().is_none());
}
