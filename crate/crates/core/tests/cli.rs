//! End-to-end runs of the binary on a small synthetic cohort.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_icu-deterioration");

/// Small cohort, small network; shared by every run.
const SMALL: &[&str] = &[
    "synth.n_patients=100",
    "synth.event_rate=0.06",
    "synth.structured_strength=2",
    "synth.text_strength=0.5",
    "synth.embed_dim=16",
    "data.embed_dim=16",
    "model.text_in=16",
    "model.lstm_hidden=8",
    "model.lstm_layers=1",
    "model.proj_dim=16",
    "model.clf_hidden=8",
    "train.batch_size=32",
    "train.batches_per_epoch=6",
    "train.max_epochs=3",
    "train.warmup_epochs=1",
    "train.eval_batch_size=256",
];

fn run(out: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.arg("--out").arg(out).args(["--log-level", "warn"]);
    for kv in SMALL {
        cmd.args(["--set", kv]);
    }
    cmd.args(args).env_remove("ICU_DET_OUT").env_remove("ICU_DET_WORKERS");
    cmd.output().expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) {
    let o = run(out, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn code(out: &Path, args: &[&str]) -> i32 {
    run(out, args).status.code().expect("exit code")
}

/// Relative path → bytes for every file under `dir`, skipping resolved configs
/// (they name the run directory).
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if !p.to_string_lossy().ends_with(".config.txt") {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn prepared_run(dir: &Path) {
    for stage in ["synth", "ingest", "featurize", "sample"] {
        ok(dir, &[stage]);
    }
}

/// History rows without the wall-clock column.
fn history_without_time(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let t = header.iter().position(|h| *h == "seconds").expect("seconds column");
    lines
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(t);
            f.join(",")
        })
        .collect()
}

#[test]
fn synth_is_reproducible_and_refuses_to_overwrite() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(a.path(), &["--seed", "7", "synth"]);
    ok(b.path(), &["--seed", "7", "synth"]);
    let first = snapshot(a.path());
    assert!(first.len() >= 12);
    assert_eq!(first, snapshot(b.path()));

    assert_eq!(code(a.path(), &["--seed", "7", "synth"]), 3);
    ok(a.path(), &["--seed", "7", "synth", "--force"]);
    assert_eq!(snapshot(a.path()), first);

    ok(b.path(), &["--seed", "8", "synth", "--force"]);
    assert_ne!(snapshot(b.path()), first);
    let resolved = std::fs::read_to_string(b.path().join("bundle/synth.config.txt")).unwrap();
    assert!(resolved.contains(&format!("tool.version={}", env!("CARGO_PKG_VERSION"))));
    assert!(resolved.contains("seed=8"));
}

#[test]
fn failure_classes_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(d, &["ingest", "--data", "/nonexistent/tables"]), 5);
    assert_eq!(code(d, &["train"]), 5);
    assert_eq!(code(d, &["--set", "model.colour=red", "synth"]), 3);
    assert_eq!(code(d, &["--set", "no-equals", "synth"]), 3);
    assert_eq!(code(d, &["--set", "synth.event_rate=0.95", "synth"]), 3);
    assert_eq!(code(d, &["train", "--mode", "quantum"]), 3);

    ok(d, &["synth"]);
    let chart = d.join("bundle/chartevents.csv");
    let text = std::fs::read_to_string(&chart).unwrap();
    std::fs::write(&chart, text.replacen("valuenum", "value_number", 1)).unwrap();
    assert_eq!(code(d, &["ingest"]), 2);
    std::fs::write(&chart, text).unwrap();

    ok(d, &["ingest"]);
    ok(d, &["featurize"]);
    ok(d, &["sample"]);
    assert_eq!(code(d, &["--set", "data.split_seed=1", "train", "--mode", "structured_only"]), 3);
    assert_eq!(code(d, &["--set", "train.lr=1e300", "train", "--mode", "structured_only"]), 4);
}

#[test]
fn full_pipeline_with_restartable_stages() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepared_run(d);
    let prepared = snapshot(d);
    for stage in ["ingest", "featurize", "sample"] {
        ok(d, &[stage, "--force"]);
    }
    assert_eq!(snapshot(d), prepared, "rerun stages changed their outputs");

    for mode in ["structured_only", "logreg"] {
        ok(d, &["train", "--mode", mode]);
        ok(d, &["evaluate", "--mode", mode]);
        ok(d, &["calibrate", "--mode", mode]);
        ok(d, &["report", "--mode", mode]);
        let eval = d.join("eval").join(mode);
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(eval.join("metrics_test.json")).unwrap()).unwrap();
        assert_eq!(report["strata"].as_array().unwrap().len(), 4);
        let cal: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(eval.join("metrics_test_calibrated.json")).unwrap()).unwrap();
        assert!(cal["temperature"].as_f64().unwrap() > 0.0);
        for f in ["roc.csv", "pr.csv", "reliability.csv", "reliability_calibrated.csv", "history.csv"] {
            assert!(d.join("report").join(mode).join(f).exists(), "{mode}/{f}");
        }
    }

    let models = d.join("models/structured_only");
    let best = std::fs::read(models.join("best.ckpt")).unwrap();
    let history = history_without_time(&models.join("history.csv"));
    assert_eq!(code(d, &["train", "--mode", "structured_only"]), 3);
    ok(d, &["train", "--mode", "structured_only", "--force"]);
    assert_eq!(std::fs::read(models.join("best.ckpt")).unwrap(), best);
    assert_eq!(history_without_time(&models.join("history.csv")), history);
}

#[test]
fn structured_only_ignores_embeddings_and_multimodal_does_not() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prepared_run(d);
    // Same notes, different vectors.
    let original = std::fs::read_to_string(d.join("bundle/embeddings.csv")).unwrap();
    let mut lines = original.lines();
    let mut scrambled = format!("{}\n", lines.next().unwrap());
    for line in lines {
        let mut f: Vec<String> = line.split(',').map(String::from).collect();
        let n = f.len();
        f[n - 16..].reverse();
        scrambled.push_str(&f.join(","));
        scrambled.push('\n');
    }
    let alt = d.join("scrambled.csv");
    std::fs::write(&alt, scrambled).unwrap();
    let alt = alt.to_str().unwrap();

    for (mode, should_match) in [("structured_only", true), ("multimodal", false)] {
        ok(d, &["train", "--mode", mode]);
        ok(d, &["evaluate", "--mode", mode]);
        let scores = d.join("eval").join(mode).join("scores_test.csv");
        let before = std::fs::read(&scores).unwrap();
        ok(d, &["evaluate", "--mode", mode, "--embeddings", alt, "--force"]);
        assert_eq!(std::fs::read(&scores).unwrap() == before, should_match, "{mode}");
    }
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    prepared_run(a.path());
    prepared_run(b.path());
    ok(a.path(), &["train", "--mode", "multimodal"]);
    ok(b.path(), &["train", "--mode", "multimodal", "--stop-after-epoch", "2"]);
    assert_eq!(history_without_time(&b.path().join("models/multimodal/history.csv")).len(), 2);
    ok(b.path(), &["train", "--mode", "multimodal", "--resume"]);
    for f in ["best.ckpt", "last.ckpt"] {
        let x = std::fs::read(a.path().join("models/multimodal").join(f)).unwrap();
        let y = std::fs::read(b.path().join("models/multimodal").join(f)).unwrap();
        assert!(x == y, "{f} differs after resume");
    }
    assert_eq!(
        history_without_time(&a.path().join("models/multimodal/history.csv")),
        history_without_time(&b.path().join("models/multimodal/history.csv"))
    );
}

#[test]
fn help_documents_every_flag() {
    let top = Command::new(BIN).arg("--help").output().unwrap();
    assert!(top.status.success());
    let text = String::from_utf8(top.stdout).unwrap();
    for flag in ["--config", "--set", "--out", "--workers", "--seed", "--force", "--log-level"] {
        assert!(text.contains(flag), "top-level help lacks {flag}");
    }
    for sub in ["synth", "ingest", "featurize", "sample", "train", "evaluate", "calibrate", "report"] {
        assert!(text.contains(sub), "help lacks {sub}");
        let h = Command::new(BIN).args([sub, "--help"]).output().unwrap();
        assert!(h.status.success());
    }
    let train = String::from_utf8(Command::new(BIN).args(["train", "--help"]).output().unwrap().stdout).unwrap();
    for flag in ["--mode", "--embeddings", "--resume", "--stop-after-epoch", "structured_only"] {
        assert!(train.contains(flag), "train help lacks {flag}");
    }
}

#[test]
fn environment_sets_the_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let o = Command::new(BIN)
        .args(["--log-level", "warn", "--set", "synth.n_patients=20", "synth"])
        .env("ICU_DET_OUT", &target)
        .env("ICU_DET_WORKERS", "1")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let resolved = std::fs::read_to_string(target.join("bundle/synth.config.txt")).unwrap();
    assert!(resolved.contains("workers=1"));
}
