use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn srnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_srnn"))
        .args(args)
        .output()
        .expect("spawn srnn")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn value(out: &str, key: &str) -> f64 {
    out.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
        .unwrap_or_else(|| panic!("no {key} in {out}"))
        .trim()
        .parse()
        .unwrap()
}

fn small_config(epochs: usize) -> String {
    format!(
        r#"{{
  "version": "srnn-config/1",
  "network": {{
    "input_size": 6,
    "layers": [
      {{"size": 12, "neuron": "alif", "recurrent": true,
        "tau_m_init": {{"mean": 20.0, "std": 5.0}}, "tau_adp_init": {{"mean": 150.0, "std": 10.0}},
        "threshold": 0.01}},
      {{"size": 3, "neuron": "readout", "recurrent": false,
        "tau_m_init": {{"mean": 20.0, "std": 5.0}}}}
    ],
    "decode": "membrane_softmax",
    "seed": 4
  }},
  "training": {{"lr": 0.002, "epochs": {epochs}, "minibatch": 4}},
  "task": {{
    "source": {{"pattern": {{"classes": 3, "steps": 15, "channels": 6, "jitter_std": 1.0, "samples": 40}}}},
    "seed": 9
  }},
  "outputs": {{"dir": "run"}}
}}"#
    )
}

fn write_config(dir: &Path, epochs: usize) -> PathBuf {
    let path = dir.join("run.json");
    fs::write(&path, small_config(epochs)).unwrap();
    path
}

#[test]
fn missing_config_is_a_usage_error_naming_the_path() {
    let o = srnn(&["train", "--config", "/no/such/config.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/config.json"));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    fs::write(&path, small_config(1).replace("\"minibatch\": 4", "\"minibatch\": 4, \"momentum\": 0.9")).unwrap();
    let o = srnn(&["train", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("momentum"), "{}", stderr(&o));
}

#[test]
fn zero_epochs_writes_the_initial_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0);
    let o = srnn(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = dir.path().join("run");
    for f in ["model.json", "metrics.csv", "anytime.csv", "cost.csv", "cost.txt", "data/test.json"] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let acc = value(&stdout(&o), "test_accuracy");
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn same_seed_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 2);
    let cfg = cfg.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    for (out, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let o = srnn(&["train", "--config", cfg, "--seed", seed, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    assert_eq!(read(&a, "metrics.csv"), read(&b, "metrics.csv"));
    assert_eq!(read(&a, "model.json"), read(&b, "model.json"));
    assert_ne!(read(&a, "model.json"), read(&c, "model.json"));
    // --seed leaves the data alone
    assert_eq!(read(&a, "data/test.csv"), read(&c, "data/test.csv"));
}

#[test]
fn eval_reproduces_the_held_out_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 1);
    let o = srnn(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = dir.path().join("run");
    let e = srnn(&[
        "eval",
        "--model",
        run.join("model.json").to_str().unwrap(),
        "--data",
        run.join("data/test.json").to_str().unwrap(),
    ]);
    assert_eq!(e.status.code(), Some(0), "{}", stderr(&e));
    assert_eq!(value(&stdout(&o), "test_accuracy"), value(&stdout(&e), "eval_accuracy"));
    assert!(run.join("eval_anytime.csv").exists());
}

#[test]
fn eval_writes_streaming_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("streaming.json"))
        .unwrap()
        .replace("\"samples\": 300", "\"samples\": 20")
        .replace("\"epochs\": 60,", "\"epochs\": 1,");
    let cfg = dir.path().join("stream.json");
    fs::write(&cfg, text).unwrap();
    let out = dir.path().join("run");
    let o = srnn(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let e = srnn(&[
        "eval",
        "--model",
        out.join("model.json").to_str().unwrap(),
        "--data",
        out.join("data/test.json").to_str().unwrap(),
        "--out",
        dir.path().join("eval").to_str().unwrap(),
    ]);
    assert_eq!(e.status.code(), Some(0), "{}", stderr(&e));
    let pred = fs::read_to_string(dir.path().join("eval/predictions.csv")).unwrap();
    let mut lines = pred.lines();
    assert_eq!(lines.next(), Some("sample,t,label,prediction,p0,p1,p2"));
    // 4 test samples of 200 steps each
    assert_eq!(lines.count(), 4 * 200);
}

#[test]
fn energy_of_the_shd_architecture() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("cost.csv");
    let arch = configs().join("shd_arch.json");
    let o = srnn(&[
        "energy",
        "--arch",
        arch.to_str().unwrap(),
        "--fr",
        "0.0757",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&csv).unwrap();
    let row: Vec<&str> = text.lines().find(|l| l.starts_with("srnn-shd,")).unwrap().split(',').collect();
    let mac: f64 = row[1].parse().unwrap();
    let ac: f64 = row[2].parse().unwrap();
    assert_eq!(mac, 788.0);
    assert!((ac - 10_697.3).abs() < 0.1, "{ac}");
    let lstm: Vec<&str> = text.lines().find(|l| l.starts_with("bi-lstm-shd,")).unwrap().split(',').collect();
    assert_eq!(lstm[2].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn energy_rejects_bad_firing_rates() {
    let arch = configs().join("shd_arch.json");
    let arch = arch.to_str().unwrap();
    assert_eq!(srnn(&["energy", "--arch", arch, "--fr", "1.5"]).status.code(), Some(2));
    assert_eq!(srnn(&["energy", "--arch", arch, "--fr", "-0.1"]).status.code(), Some(2));
    // spiking layers need a rate
    assert_eq!(srnn(&["energy", "--arch", arch]).status.code(), Some(2));
}

#[test]
fn energy_of_a_trained_model_measures_its_rate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0);
    assert_eq!(srnn(&["train", "--config", cfg.to_str().unwrap()]).status.code(), Some(0));
    let run = dir.path().join("run");
    let o = srnn(&[
        "energy",
        "--model",
        run.join("model.json").to_str().unwrap(),
        "--data",
        run.join("data/test.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("mac_per_step"));
}

#[test]
fn gradcheck_passes_and_catches_a_wrong_surrogate() {
    let cfg = configs().join("gradcheck.json");
    let cfg = cfg.to_str().unwrap();
    let ok = srnn(&["gradcheck", "--config", cfg]);
    assert_eq!(ok.status.code(), Some(0), "{}{}", stdout(&ok), stderr(&ok));
    assert_eq!(stdout(&ok).matches(" pass").count(), 2);

    let bad = srnn(&["gradcheck", "--config", cfg, "--corrupt-surrogate"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("surrogate_consistency") && stdout(&bad).contains("FAIL"));

    let zero = srnn(&["gradcheck", "--config", cfg, "--zero-weights"]);
    assert_eq!(zero.status.code(), Some(0), "{}", stdout(&zero));
}

#[test]
fn gen_is_deterministic_and_writes_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 0);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = srnn(&["gen", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert_eq!(stdout(&o).lines().count(), 3);
    }
    for f in ["train.json", "train.csv", "valid.csv", "test.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("train.json")).unwrap()).unwrap();
    assert_eq!(manifest["samples"], 29);
    assert_eq!(manifest["channels"], 6);
    assert_eq!(manifest["format"], "event_csv");
}

#[test]
fn zero_threads_is_rejected() {
    let o = srnn(&["--threads", "0", "gen", "--config", "x.json", "--out", "y"]);
    assert_eq!(o.status.code(), Some(2));
}
