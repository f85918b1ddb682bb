use std::path::Path;
use std::process::{Command, Output};

use hgn::synthgen::{generate_dataset, write_dataset, SynthConfig};

fn hgn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgn")).args(args).env("HGN_THREADS", "1").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "status {:?}\nstdout:\n{}\nstderr:\n{}", o.status, stdout(&o), stderr(&o));
    stdout(&o)
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("{key} missing in\n{text}"))
}

const SMALL: &str = r#"
mode = "HGN+UM"

[synth]
count = 50
reallike_fraction = 0.3
seed = 7

[train]
epochs = 1
pretrain_epochs = 0
batch_size = 16
lr = 1e-3
checkpoint_every = 1
"#;

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let data = dir.path().join("data.hgnds");
    let out = ok(hgn(&["generate", "--config", p(&cfg), "--out", p(&data)]));
    assert_eq!(value(&out, "samples"), "50");
    assert_eq!(value(&out, "reallike"), "15");

    let run = dir.path().join("run");
    let out = ok(hgn(&["train", "--config", p(&cfg), "--dataset", p(&data), "--out", p(&run)]));
    assert_eq!(value(&out, "epochs"), "1");
    let log = std::fs::read_to_string(run.join("metrics.log")).unwrap();
    assert_eq!(log.lines().count(), 1);
    assert!(log.starts_with("epoch=1 "));
    assert!(run.join("epoch-0001.json").exists());
    let ckpt = run.join("checkpoint.json");

    let errors = dir.path().join("errors.tsv");
    let report = ok(hgn(&["eval", "--checkpoint", p(&ckpt), "--dataset", p(&data), "--out", p(&errors)]));
    assert_eq!(value(&report, "mode"), "HGN+UM");
    assert_eq!(value(&report, "count"), "50");
    assert!(value(&report, "mean_angular_deg").parse::<f64>().unwrap().is_finite());
    assert_eq!(std::fs::read_to_string(&errors).unwrap().lines().count(), 51);

    let qdir = dir.path().join("quality");
    let q = ok(hgn(&["quality", "--checkpoint", p(&ckpt), "--dataset", p(&data), "--quantiles", "0,0.5,1", "--out", p(&qdir)]));
    assert_eq!(value(&q, "reallike.count"), "15");
    let manifest = std::fs::read_to_string(qdir.join("manifest.txt")).unwrap();
    assert_eq!(manifest.lines().count(), 3);
    for line in manifest.lines() {
        let img = line.rsplit("image=").next().unwrap();
        assert!(qdir.join(img).exists(), "{img}");
    }

    let png = dir.path().join("viz.png");
    ok(hgn(&["viz", "--checkpoint", p(&ckpt), "--dataset", p(&data), "--index", "3", "--out", p(&png)]));
    assert!(std::fs::metadata(&png).unwrap().len() > 0);
    let bad = hgn(&["viz", "--checkpoint", p(&ckpt), "--dataset", p(&data), "--index", "50", "--out", p(&png)]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn training_is_bit_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, SMALL.replace("count = 50", "count = 24")).unwrap();
    let data = dir.path().join("d.hgnds");
    ok(hgn(&["generate", "--config", p(&cfg), "--out", p(&data)]));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(hgn(&["train", "--config", p(&cfg), "--dataset", p(&data), "--out", p(&a)]));
    ok(hgn(&["train", "--config", p(&cfg), "--dataset", p(&data), "--out", p(&b)]));
    for f in ["checkpoint.json", "metrics.log"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn eval_on_empty_dataset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, SMALL.replace("count = 50", "count = 8")).unwrap();
    let data = dir.path().join("d.hgnds");
    ok(hgn(&["generate", "--config", p(&cfg), "--out", p(&data)]));
    let run = dir.path().join("run");
    ok(hgn(&["train", "--config", p(&cfg), "--dataset", p(&data), "--out", p(&run)]));

    let mut empty = generate_dataset(&SynthConfig { count: 1, ..Default::default() }).unwrap();
    empty.samples.clear();
    let empty_path = dir.path().join("empty.hgnds");
    write_dataset(&empty, &empty_path).unwrap();
    let o = hgn(&["eval", "--checkpoint", p(&run.join("checkpoint.json")), "--dataset", p(&empty_path)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error_category=config"), "{}", stderr(&o));
}

#[test]
fn gradcheck_passes_on_default_config() {
    let out = ok(hgn(&["gradcheck"]));
    assert_eq!(value(&out, "status"), "pass");
    assert_eq!(value(&out, "checked"), "200");
}

#[test]
fn ablate_emits_one_row_per_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ablate.toml");
    std::fs::write(
        &cfg,
        r#"
[synth]
height = 16
width = 24
radius_range = [5.0, 7.0]
center_jitter = 1.0
count = 16

[network]
input_height = 16
input_width = 24
widths = [4, 6]
radius_init = 6.0

[train]
epochs = 1
pretrain_epochs = 0
batch_size = 8

[ablate]
modes = ["B", "HGN", "MTL"]
seeds = [0, 1]
test_count = 6
"#,
    )
    .unwrap();
    let table_path = dir.path().join("table.tsv");
    let out = ok(hgn(&["ablate", "--config", p(&cfg), "--out", p(&table_path)]));
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("mode\t"));
    for (row, mode) in rows[1..].iter().zip(["B", "HGN", "MTL"]) {
        let cols: Vec<&str> = row.split('\t').collect();
        assert_eq!(cols[0], mode);
        assert_eq!(cols[1], "2");
    }
    assert_eq!(std::fs::read_to_string(table_path).unwrap(), out);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(hgn(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(hgn(&["eval", "--bogus"]).status.code(), Some(2));
    assert_eq!(hgn(&["generate"]).status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_hgn")).args(["gradcheck"]).env("HGN_THREADS", "zero").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error_category=usage"));
}

#[test]
fn runtime_errors_report_a_category() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let o = hgn(&["eval", "--checkpoint", p(&missing), "--dataset", p(&missing)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error_category=io"));
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[synth]\ncount = 4\n[train]\nlr = -1.0\n").unwrap();
    let data = dir.path().join("d.hgnds");
    let o = hgn(&["generate", "--config", p(&cfg), "--out", p(&data)]);
    assert!(o.status.success());
    let o = hgn(&["train", "--config", p(&cfg), "--dataset", p(&data), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error_category=config"));
}
