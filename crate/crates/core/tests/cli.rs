use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use vaelf::data::generate_synthetic_with;
use vaelf::dataset::load_manifest;
use vaelf::config::RunConfig;

const SMALL: &str = r#"{
  "synthetic": {"k": 2, "n_days": 7, "m_slots": 96},
  "density": 0.3,
  "seeds": {"data": 4, "split": 5, "model": 6},
  "train": {"epochs_max": 4, "hidden_dim": 16, "latent_dim": 3},
  "lfa": {"rank": 3, "epochs": 8},
  "grad_check": {"configs": 10}
}"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

fn vaelf(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vaelf"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn ok(o: Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_synth_shape_determinism_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"synthetic": {"k": 1, "n_days": 2, "m_slots": 3}, "seeds": {"data": 8}}"#,
    );
    let out = dir.path().join("out");
    let stdout = ok(vaelf(&cfg, &out, &["gen-synth"]));
    assert!(stdout.contains("1 x 2 x 3") && stdout.contains("= 6"), "{stdout}");
    let csv = fs::read_to_string(out.join("data/channel_0.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.split(',').count() == 3));

    let first = fs::read(out.join("data/channel_0.csv")).unwrap();
    ok(vaelf(&cfg, &out, &["gen-synth"]));
    assert_eq!(fs::read(out.join("data/channel_0.csv")).unwrap(), first);

    let rc = RunConfig::from_path(&cfg).unwrap();
    let syn = rc.synthetic.unwrap();
    let original = generate_synthetic_with(&syn.profiles(), 2, 3, 8).unwrap();
    let (_, back) = load_manifest(&out.join("data/manifest.json")).unwrap();
    assert_eq!(back, original);

    let summary = json(&out.join("gen-synth.summary.json"));
    assert_eq!(summary["format_version"], 1);
    assert_eq!(summary["config"]["seeds"]["data"], 8);
}

#[test]
fn mask_counts_and_blank_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    ok(vaelf(&cfg, &out, &["gen-synth"]));
    ok(vaelf(&cfg, &out, &["--density", "0.05", "mask"]));
    let (manifest, t) = load_manifest(&out.join("masked/manifest.json")).unwrap();
    assert_eq!(t.observed_count(), (0.05 * (2 * 7 * 96) as f64).floor() as usize);
    assert_eq!(manifest.density, Some(0.05));
    let (_, full) = load_manifest(&out.join("data/manifest.json")).unwrap();
    for p in t.observed_positions() {
        assert_eq!(t.get(p), full.get(p));
    }
    let text = fs::read_to_string(out.join("masked/channel_0.csv")).unwrap();
    assert!(text.contains(",,"));

    let out1 = dir.path().join("dense");
    ok(vaelf(&cfg, &out1, &["--density", "1", "mask"]));
    for c in 0..2 {
        let name = format!("channel_{c}.csv");
        assert_eq!(
            fs::read(out1.join("masked").join(&name)).unwrap(),
            fs::read(out.join("data").join(&name)).unwrap()
        );
    }
}

#[test]
fn train_impute_eval_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(vaelf(&cfg, &a, &["train"]));
    ok(vaelf(&cfg, &b, &["train"]));
    for f in ["epochs.csv", "vae.ckpt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let epochs = fs::read_to_string(a.join("epochs.csv")).unwrap();
    let mut lines = epochs.lines();
    assert_eq!(lines.next(), Some("epoch,train_loss,valid_rmse,valid_mae,wall_ms"));
    let valid: Vec<f64> = lines.map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(valid.len(), 4);
    let summary = json(&a.join("train.summary.json"));
    let min = valid.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(summary["best_valid_rmse"].as_f64().unwrap(), min);
    assert_eq!(summary["config"]["train"]["latent_dim"], 3);

    let ckpt = a.join("vae.ckpt");
    let ckpt_arg = ckpt.to_str().unwrap();
    ok(vaelf(&cfg, &a, &["impute", "--checkpoint", ckpt_arg]));
    let first = fs::read(a.join("imputed.csv")).unwrap();
    ok(vaelf(&cfg, &a, &["impute", "--checkpoint", ckpt_arg]));
    assert_eq!(fs::read(a.join("imputed.csv")).unwrap(), first);
    let text = String::from_utf8(first).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    let cells = 2 * 7 * 96;
    assert_eq!(rows.len(), cells - (0.3 * cells as f64).floor() as usize);
    for r in &rows {
        let v: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert!(v > 0.0 && v < 1.0);
    }
    ok(vaelf(&cfg, &a, &["--raw", "impute", "--checkpoint", ckpt_arg]));
    let raw = fs::read_to_string(a.join("imputed.csv")).unwrap();
    let v: f64 = raw.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!(v > 1.0, "raw value {v}");

    ok(vaelf(&cfg, &a, &["train", "--model", "lfa"]));
    let lfa = a.join("lfa.ckpt");
    let stdout = ok(vaelf(
        &cfg,
        &a,
        &["eval", "--vae", ckpt_arg, "--lfa", lfa.to_str().unwrap(), "--mean", "--oracle"],
    ));
    let names: Vec<&str> = stdout.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["mean", "mf-lfa", "oracle", "vae-lf"]);
    let oracle = json(&a.join("eval_oracle.json"));
    assert_eq!(oracle["rmse"], 0.0);
    assert_eq!(oracle["mae"], 0.0);
    let hashes: Vec<Value> = names.iter().map(|n| json(&a.join(format!("eval_{n}.json")))["omega_hash"].clone()).collect();
    assert!(hashes.iter().all(|h| h == &hashes[0] && h.is_string()));

    let other = write_config(dir.path(), &SMALL.replace("\"k\": 2", "\"k\": 3"));
    let o = vaelf(&other, &dir.path().join("c"), &["impute", "--checkpoint", ckpt_arg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("input_dim"));
}

#[test]
fn compare_lists_each_model_once() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    ok(vaelf(&cfg, &out, &["compare"]));
    let csv = fs::read_to_string(out.join("compare.csv")).unwrap();
    let names: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["mean", "mf-lfa", "vae-lf"]);
    let imp = fs::read_to_string(out.join("compare_improvements.csv")).unwrap();
    assert_eq!(imp.lines().count(), 3);
    let summary = json(&out.join("compare.summary.json"));
    assert_eq!(summary["comparison"]["reports"].as_array().unwrap().len(), 3);
}

#[test]
fn grad_check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let stdout = ok(vaelf(&cfg, &out, &["grad-check"]));
    for block in ["w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4", "w5", "b5"] {
        assert!(stdout.contains(&format!("  {block} ")), "{stdout}");
    }
    assert!(stdout.contains("10 configurations") && stdout.ends_with("PASS\n"));
    let bad = vaelf(&cfg, &out, &["grad-check", "--corrupt-gradient"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));
}

#[test]
fn bad_config_fails_fast_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for (text, key) in [
        (r#"{"train": {"lr": "fast"}}"#, "train.lr"),
        (r#"{"seeds": {"dta": 1}}"#, "seeds"),
        (r#"{"density": 0}"#, "density"),
        (r#"{"lfa": {"rank": 0}}"#, "lfa.rank"),
        (r#"{"train": {"kl_weight": -1}}"#, "train.kl_weight"),
    ] {
        let cfg = write_config(dir.path(), text);
        let o = vaelf(&cfg, &out, &["compare"]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(key), "{text}: {err}");
        assert!(!out.exists());
    }
}
