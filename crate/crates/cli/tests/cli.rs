use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn zsar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zsar"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn ok(args: &[&str]) -> String {
    let out = zsar(args);
    assert_eq!(
        code(&out),
        0,
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

fn small_dataset(dir: &Path) -> PathBuf {
    let ds = dir.join("ds");
    ok(&[
        "synth",
        "--classes",
        "5",
        "--videos-per-class",
        "6",
        "--out",
        p(&ds),
    ]);
    ds.join("manifest.json")
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        ok(&[
            "synth",
            "--classes",
            "10",
            "--seed",
            "7",
            "--noise",
            "0.05",
            "--out",
            p(&dir.path().join(name)),
        ]);
    }
    let a = tree(&dir.path().join("a"));
    assert!(a.contains_key(Path::new("manifest.json")));
    assert!(a.contains_key(Path::new("ground_truth.json")));
    assert_eq!(a, tree(&dir.path().join("b")));
}

#[test]
fn synth_rejects_oversized_latent() {
    let dir = tempfile::tempdir().unwrap();
    let out = zsar(&[
        "synth",
        "--latent-dim",
        "32",
        "--visual-dim",
        "16",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("latent_dim"));
}

#[test]
fn default_synth_passes_ingest() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--out", p(dir.path())]);
    let stdout = ok(&[
        "ingest",
        "--manifest",
        p(&dir.path().join("manifest.json")),
        "--validate",
    ]);
    assert!(stdout.contains("classes:              10"));
    assert!(stdout.contains("descriptions/class:   5"));
    assert!(stdout.contains("manifest is valid"));
}

#[test]
fn ingest_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(
        code(&zsar(&["ingest", "--manifest", p(&missing), "--validate"])),
        2
    );
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    assert_eq!(
        code(&zsar(&["ingest", "--manifest", p(&bad), "--validate"])),
        1
    );

    let manifest = small_dataset(dir.path());
    let tensors = dir.path().join("ds/tensors");
    let victim = fs::read_dir(&tensors)
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let mut bytes = fs::read(&victim).unwrap();
    bytes[0] = b'X';
    fs::write(&victim, bytes).unwrap();
    let out = zsar(&["ingest", "--manifest", p(&manifest), "--validate"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("header"));
}

#[test]
fn usage_errors_exit_with_validation_code() {
    assert_eq!(code(&zsar(&["frobnicate"])), 1);
    assert_eq!(code(&zsar(&["train"])), 1);
    assert_eq!(code(&zsar(&["--help"])), 0);
}

#[test]
fn split_writes_and_imports_files() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_dataset(dir.path());
    let splits = dir.path().join("splits");
    ok(&[
        "split",
        "--manifest",
        p(&manifest),
        "--count",
        "3",
        "--unseen-fraction",
        "0.4",
        "--seed",
        "1",
        "--out-dir",
        p(&splits),
    ]);
    let text = fs::read_to_string(splits.join("split_02.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["seen"].as_array().unwrap().len(), 3);
    assert_eq!(v["unseen"].as_array().unwrap().len(), 2);

    let external = dir.path().join("published.json");
    fs::write(
        &external,
        r#"{"split_id": "official_1", "seen": ["class_00", "class_01", "class_02"], "unseen": ["class_03", "class_04"]}"#,
    )
    .unwrap();
    let imported = dir.path().join("imported");
    ok(&[
        "split",
        "--manifest",
        p(&manifest),
        "--import",
        p(&external),
        "--out-dir",
        p(&imported),
    ]);
    assert!(imported.join("official_1.json").exists());

    let overlap = dir.path().join("overlap.json");
    fs::write(
        &overlap,
        r#"{"split_id": "x", "seen": ["class_00"], "unseen": ["class_00"]}"#,
    )
    .unwrap();
    let out = zsar(&[
        "split",
        "--manifest",
        p(&manifest),
        "--import",
        p(&overlap),
        "--out-dir",
        p(&imported),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("overlap"));
}

#[test]
fn collapsed_training_exits_with_numerical_code() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_dataset(dir.path());
    let split = dir.path().join("split.json");
    fs::write(&split, r#"{"split_id": "s", "seen": ["class_00", "class_01", "class_02"], "unseen": ["class_03"]}"#).unwrap();
    let cfg = dir.path().join("cfg.txt");
    fs::write(
        &cfg,
        "learning_rate = 1e300\nbatch_size = 4\nshared_dim = 2\n",
    )
    .unwrap();
    let out = zsar(&[
        "train",
        "--manifest",
        p(&manifest),
        "--split",
        p(&split),
        "--config",
        p(&cfg),
        "--out-model",
        p(&dir.path().join("m.json")),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epoch 1"));

    fs::write(&cfg, "colour = blue\n").unwrap();
    let out = zsar(&[
        "train",
        "--manifest",
        p(&manifest),
        "--split",
        p(&split),
        "--config",
        p(&cfg),
        "--out-model",
        p(&dir.path().join("m.json")),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn eval_refuses_a_model_with_other_dims() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_dataset(dir.path());
    let other = dir.path().join("other");
    ok(&[
        "synth",
        "--classes",
        "5",
        "--videos-per-class",
        "6",
        "--visual-dim",
        "12",
        "--out",
        p(&other),
    ]);
    let split = dir.path().join("split.json");
    fs::write(&split, r#"{"split_id": "s", "seen": ["class_00", "class_01", "class_02"], "unseen": ["class_03", "class_04"]}"#).unwrap();
    let model = dir.path().join("model.json");
    ok(&[
        "train",
        "--manifest",
        p(&other.join("manifest.json")),
        "--split",
        p(&split),
        "--out-model",
        p(&model),
    ]);
    let out = zsar(&[
        "eval",
        "--manifest",
        p(&manifest),
        "--split",
        p(&split),
        "--model",
        p(&model),
        "--out-report",
        p(&dir.path().join("r.json")),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("dims"));
}

#[test]
fn full_chain_produces_a_report_table() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = small_dataset(dir.path());
    let splits = dir.path().join("splits");
    ok(&[
        "split",
        "--manifest",
        p(&manifest),
        "--count",
        "3",
        "--unseen-fraction",
        "0.4",
        "--out-dir",
        p(&splits),
    ]);
    for i in 0..3 {
        let split = splits.join(format!("split_{i:02}.json"));
        let model = dir.path().join(format!("model_{i}.json"));
        let log = dir.path().join(format!("log_{i}.csv"));
        ok(&[
            "train",
            "--manifest",
            p(&manifest),
            "--split",
            p(&split),
            "--out-model",
            p(&model),
            "--log",
            p(&log),
        ]);
        assert!(fs::read_to_string(&log)
            .unwrap()
            .starts_with("epoch,train_loss,val_acc,val_loss\n"));
        let report = dir.path().join(format!("report_{i}.json"));
        let csv = dir.path().join(format!("per_class_{i}.csv"));
        ok(&[
            "eval",
            "--manifest",
            p(&manifest),
            "--split",
            p(&split),
            "--model",
            p(&model),
            "--out-report",
            p(&report),
            "--per-class-csv",
            p(&csv),
        ]);
        assert!(fs::read_to_string(&csv)
            .unwrap()
            .starts_with("class_id,accuracy\n"));
    }
    let table = ok(&[
        "report",
        "--reports",
        &format!("{}/report_*.json", p(dir.path())),
    ]);
    let row = table
        .lines()
        .find(|l| l.starts_with("synthetic-seed7"))
        .unwrap();
    assert!(row.contains("     3  unseen"), "{table}");
    assert!(row.contains(" ± "));

    let single = ok(&["report", "--reports", p(&dir.path().join("report_0.json"))]);
    assert!(single.trim_end().ends_with("± 0.0"), "{single}");
}

#[test]
fn report_with_empty_glob_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = zsar(&["report", "--reports", &format!("{}/*.json", p(dir.path()))]);
    assert_eq!(code(&out), 1);
}
