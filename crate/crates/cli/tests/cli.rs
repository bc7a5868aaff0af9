use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use clap::Parser;
use facefake_cli::{resolve_config, Cli};
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_facefake"));
    c.env_remove("FACEFAKE_CONFIG").env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Eight short synthetic videos, extracted once and shared by the tests.
struct Fixture {
    _dir: tempfile::TempDir,
    data: PathBuf,
    crops: PathBuf,
    model: PathBuf,
}

const TRAIN_ARGS: [&str; 14] = [
    "--variant",
    "B0",
    "--width-budget",
    "0.1",
    "--input-size",
    "32",
    "--steps",
    "6",
    "--batch-size",
    "4",
    "--holdout",
    "0",
    "--workers",
    "1",
];

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let crops = dir.path().join("crops");
        let model = dir.path().join("model");
        ok(&[
            "synth",
            "--out",
            s(&data),
            "--n-videos",
            "8",
            "--frames-per-video",
            "6",
            "--seed",
            "5",
        ]);
        ok(&["extract", "--input", s(&data), "--out", s(&crops)]);
        let manifest = crops.join("manifest.json");
        let mut args = vec![
            "train",
            "--manifest",
            s(&manifest),
            "--out",
            s(&model),
            "--set",
            "training.validation_every=3",
        ];
        args.extend(TRAIN_ARGS);
        ok(&args);
        Fixture {
            _dir: dir,
            data,
            crops,
            model,
        }
    })
}

#[test]
fn config_precedence_defaults_file_flags() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.toml");
    std::fs::write(
        &file,
        r#"
seed = 11
[synth]
n_videos = 12
[detector.cascade]
stride = 3
[preprocess]
margin = 0.4
[classifier]
width_budget = 0.5
[training]
total_steps = 50
[aggregation]
low_conf = 0.7
[evaluation]
threshold = 0.4
"#,
    )
    .unwrap();
    let parse = |args: &[&str]| resolve_config(&Cli::parse_from(args)).unwrap();
    let f = s(&file);

    let d = parse(&["facefake", "config"]);
    assert_eq!(
        (d.seed, d.synth.n_videos, d.detector.cascade.stride, d.preprocess.margin),
        (0, 60, 2, 0.30)
    );
    assert_eq!(
        (
            d.classifier.width_budget,
            d.training.total_steps,
            d.aggregation.low_conf,
            d.evaluation.threshold
        ),
        (1.0, 2000, 0.6, 0.5)
    );

    let c = parse(&["facefake", "config", "--config", f]);
    assert_eq!(
        (c.seed, c.synth.n_videos, c.detector.cascade.stride, c.preprocess.margin),
        (11, 12, 3, 0.4)
    );
    assert_eq!(
        (
            c.classifier.width_budget,
            c.training.total_steps,
            c.aggregation.low_conf,
            c.evaluation.threshold
        ),
        (0.5, 50, 0.7, 0.4)
    );
    assert_eq!((c.synth.seed, c.training.seed, c.detector.train.seed), (11, 11, 11));

    let sets = [
        "--set",
        "detector.cascade.stride=4",
        "--set",
        "aggregation.low_conf=0.8",
        "--set",
        "training.total_steps=99",
    ];
    let mut args = vec!["facefake", "config", "--config", f, "--seed", "12"];
    args.extend(sets);
    let o = parse(&args);
    assert_eq!(
        (
            o.seed,
            o.detector.cascade.stride,
            o.aggregation.low_conf,
            o.training.total_steps
        ),
        (12, 4, 0.8, 99)
    );
    assert_eq!(o.synth.n_videos, 12);

    // Command flags beat both the file and --set.
    let mut args = vec!["facefake", "--config", f];
    args.extend(sets);
    args.extend(["train", "--steps", "7", "--width-budget", "0.25"]);
    let t = parse(&args);
    assert_eq!((t.training.total_steps, t.classifier.width_budget), (7, 0.25));
    let t = parse(&["facefake", "--config", f, "synth", "--n-videos", "3"]);
    assert_eq!(t.synth.n_videos, 3);
    let t = parse(&["facefake", "--config", f, "extract", "--margin", "0.1"]);
    assert_eq!(t.preprocess.margin, 0.1);
    let t = parse(&[
        "facefake",
        "--config",
        f,
        "predict",
        "--low-conf",
        "0.9",
        "--high-conf",
        "0.95",
    ]);
    assert_eq!(t.aggregation.low_conf, 0.9);
    let t = parse(&["facefake", "--config", f, "evaluate", "--threshold", "0.3"]);
    assert_eq!(t.evaluation.threshold, 0.3);

    // The environment variable supplies the file when --config is absent.
    let shown = bin().args(["config"]).env("FACEFAKE_CONFIG", f).output().unwrap();
    let shown: toml::Value = toml::from_str(&String::from_utf8(shown.stdout).unwrap()).unwrap();
    assert_eq!(shown["synth"]["n_videos"].as_integer(), Some(12));
}

#[test]
fn config_errors_exit_2() {
    let out = run(&["config", "--set", "training.total_stepz=3"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["config", "--set", "no_equals_sign"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["bogus-command"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_is_deterministic_and_balanced() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&[
            "synth",
            "--out",
            s(out),
            "--n-videos",
            "10",
            "--seed",
            "7",
            "--frames-per-video",
            "4",
            "--workers",
            "1",
        ]);
    }
    let (ta, tb) = (tree(&a), tree(&b));
    assert_eq!(ta.len(), 10 * 5 + 2);
    assert!(ta == tb, "trees differ");

    let c = dir.path().join("c");
    ok(&[
        "synth",
        "--out",
        s(&c),
        "--n-videos",
        "10",
        "--fake-fraction",
        "0.3",
        "--frames-per-video",
        "2",
    ]);
    let labels = std::fs::read_to_string(c.join("labels.csv")).unwrap();
    let fakes = labels.lines().skip(1).filter(|l| l.ends_with(",1")).count();
    assert_eq!((labels.lines().count() - 1, fakes), (10, 3));
}

#[test]
fn extract_writes_detections_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = dir.path().join("out");
    ok(&["synth", "--out", s(&data), "--n-videos", "4", "--frames-per-video", "3"]);
    ok(&["extract", "--input", s(&data), "--out", s(&out)]);
    let dets: Vec<_> = std::fs::read_dir(out.join("detections")).unwrap().collect();
    assert_eq!(dets.len(), 4);
    let manifest = std::fs::read(out.join("manifest.json")).unwrap();
    let m: Value = serde_json::from_slice(&manifest).unwrap();
    assert_eq!(m["entries"].as_array().unwrap().len(), 12);

    ok(&["extract", "--input", s(&data), "--out", s(&out)]);
    assert_eq!(std::fs::read(out.join("manifest.json")).unwrap(), manifest);

    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let res = run(&["extract", "--input", s(&empty), "--out", s(&dir.path().join("x"))]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("no videos"));
}

#[test]
fn train_smoke_and_missing_manifest() {
    let f = fixture();
    assert!(f.model.join("checkpoint.ffp").is_file());
    let log = std::fs::read_to_string(f.model.join("train_log.jsonl")).unwrap();
    assert_eq!(log.lines().filter(|l| l.contains("\"loss\"")).count(), 6);

    let dir = tempfile::tempdir().unwrap();
    let res = run(&[
        "train",
        "--manifest",
        s(&dir.path().join("nope.json")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(res.status.code(), Some(3));
}

fn losses(log: &Path) -> Vec<f64> {
    std::fs::read_to_string(log)
        .unwrap()
        .lines()
        .filter_map(|l| {
            serde_json::from_str::<Value>(l)
                .unwrap()
                .get("loss")
                .and_then(Value::as_f64)
        })
        .collect()
}

#[test]
fn training_log_is_seed_deterministic() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let manifest = f.crops.join("manifest.json");
    let mut runs = Vec::new();
    for (k, seed) in ["1", "1", "2"].iter().enumerate() {
        let out = dir.path().join(k.to_string());
        let mut args = vec!["train", "--manifest", s(&manifest), "--out", s(&out), "--seed", seed];
        args.extend(TRAIN_ARGS);
        ok(&args);
        runs.push(losses(&out.join("train_log.jsonl")));
    }
    assert_eq!(runs[0].len(), 6);
    assert_eq!(runs[0], runs[1]);
    assert_ne!(runs[0], runs[2]);
}

#[test]
fn numeric_blow_up_exits_4() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let manifest = f.crops.join("manifest.json");
    let mut args = vec!["train", "--manifest", s(&manifest), "--out", s(dir.path())];
    args.extend(TRAIN_ARGS);
    args.extend(["--lr", "1e250"]);
    let res = run(&args);
    assert_eq!(res.status.code(), Some(4), "{}", String::from_utf8_lossy(&res.stderr));
}

fn read_csv(path: &Path) -> Vec<(String, f64)> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("filename,label"));
    lines
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            assert_eq!(b.split_once('.').unwrap().1.len(), 6, "six decimals: {l}");
            (a.to_string(), b.parse().unwrap())
        })
        .collect()
}

#[test]
fn predict_two_videos() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let videos = dir.path().join("videos");
    for id in ["v0000", "v0004"] {
        let dst = videos.join(id);
        std::fs::create_dir_all(&dst).unwrap();
        for e in std::fs::read_dir(f.data.join(id)).unwrap() {
            let p = e.unwrap().path();
            std::fs::copy(&p, dst.join(p.file_name().unwrap())).unwrap();
        }
    }
    let out = dir.path().join("pred");
    let ckpt = f.model.join("checkpoint.ffp");
    // A floor of 0.5 keeps every frame of this barely trained model.
    ok(&[
        "predict",
        "--input",
        s(&videos),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&out),
        "--low-conf",
        "0.5",
    ]);
    let rows = read_csv(&out.join("predictions.csv"));
    assert_eq!(
        rows.iter().map(|r| r.0.as_str()).collect::<Vec<_>>(),
        ["v0000", "v0004"]
    );
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.1)));
    let report: Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    let v = &report["videos"][0];
    assert_eq!(v["faces"].as_u64(), Some(6));
    assert_eq!(v["fallback_used"].as_bool(), Some(false));
    assert_eq!(v["frames_used"].as_u64(), Some(6));

    // A confidence floor of 1 discards every frame.
    let out2 = dir.path().join("pred2");
    ok(&[
        "predict",
        "--input",
        s(&videos),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&out2),
        "--set",
        "aggregation.low_conf=1.0",
        "--set",
        "aggregation.high_conf=1.0",
    ]);
    let report: Value = serde_json::from_slice(&std::fs::read(out2.join("report.json")).unwrap()).unwrap();
    for v in report["videos"].as_array().unwrap() {
        assert_eq!(v["fallback_used"].as_bool(), Some(true));
        assert_eq!(v["frames_discarded"].as_u64(), Some(6));
    }

    // The folder filter and manifest input pick the same holdout videos.
    let out3 = dir.path().join("pred3");
    let manifest = f.crops.join("manifest.json");
    ok(&[
        "predict",
        "--input",
        s(&manifest),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&out3),
        "--folders",
        "0",
    ]);
    let out4 = dir.path().join("pred4");
    ok(&[
        "predict",
        "--input",
        s(&f.data),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&out4),
        "--folders",
        "0",
    ]);
    let (a, b) = (
        read_csv(&out3.join("predictions.csv")),
        read_csv(&out4.join("predictions.csv")),
    );
    assert_eq!(a, b);
    assert_eq!(a.len(), 2);
}

#[test]
fn corrupt_checkpoint_is_a_shape_mismatch() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let mut archive = facefake_core::archive::Archive::load(&f.model.join("checkpoint.ffp")).unwrap();
    archive.config["backbone"]["head_channels"] = serde_json::json!(999);
    let bad = dir.path().join("bad.ffp");
    archive.save(&bad).unwrap();
    let res = run(&[
        "predict",
        "--input",
        s(&f.data),
        "--checkpoint",
        s(&bad),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("shape mismatch"));
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn eval(dir: &Path, preds: &Path, labels: &Path) -> Value {
    let out = dir.join("eval");
    ok(&[
        "evaluate",
        "--predictions",
        s(preds),
        "--labels",
        s(labels),
        "--out",
        s(&out),
    ]);
    assert!(std::fs::read_to_string(out.join("table.txt"))
        .unwrap()
        .contains("Proposed MTCNN-EfficientNetB5"));
    serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn evaluate_examples() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("labels.csv");
    write(&labels, "filename,label\na.mp4,1\nb.mp4,0\nc.mp4,1\nd.mp4,0\n");
    let preds = dir.path().join("p.csv");

    write(
        &preds,
        "filename,label\na.mp4,1.000000\nb.mp4,0.000000\nc.mp4,1.000000\nd.mp4,0.000000\n",
    );
    let r = eval(dir.path(), &preds, &labels);
    assert!(r["logloss"].as_f64().unwrap() <= 1e-14);
    assert_eq!(r["auc"].as_f64(), Some(1.0));

    write(&preds, "filename,label\na.mp4,0.5\nb.mp4,0.5\nc.mp4,0.5\nd.mp4,0.5\n");
    let r = eval(dir.path(), &preds, &labels);
    assert_eq!(format!("{:.6}", r["logloss"].as_f64().unwrap()), "0.693147");

    let keys: Vec<&str> = r.as_object().unwrap().keys().map(String::as_str).collect();
    let mut expected = [
        "logloss",
        "logloss_real",
        "logloss_fake",
        "auc",
        "precision",
        "recall",
        "f1",
        "n_videos",
        "threshold",
    ];
    expected.sort();
    let mut keys = keys;
    keys.sort();
    assert_eq!(keys, expected);

    write(&preds, "filename,label\nzzz.mp4,0.5\n");
    let res = run(&[
        "evaluate",
        "--predictions",
        s(&preds),
        "--labels",
        s(&labels),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn evaluate_matches_hand_computed_fixture() {
    let fx = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/eval");
    let dir = tempfile::tempdir().unwrap();
    let r = eval(dir.path(), &fx.join("predictions.csv"), &fx.join("labels.csv"));
    let expected: Value = serde_json::from_slice(&std::fs::read(fx.join("expected.json")).unwrap()).unwrap();
    for (k, v) in expected.as_object().unwrap() {
        let (got, want) = (r[k].as_f64().unwrap(), v.as_f64().unwrap());
        assert!((got - want).abs() <= 1e-12, "{k}: {got} vs {want}");
    }
}
