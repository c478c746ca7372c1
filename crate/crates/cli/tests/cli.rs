use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use emocont_core::data::DatasetManifest;
use emocont_core::Subset;

const BIN: &str = env!("CARGO_BIN_EXE_emocont");

fn emocont(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = emocont(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Small corpus: 3 train, 2 dev, 2 test conversations of 20–30 s.
fn small_corpus(dir: &Path, seed: u64) {
    std::fs::write(
        dir.join("synth.json"),
        r#"{"n_train": 3, "n_dev": 2, "n_test": 2, "min_duration_ms": 20000, "max_duration_ms": 30000}"#,
    )
    .unwrap();
    ok(
        dir,
        &["synth", "--out", "corpus", "--config", "synth.json", "--seed", &seed.to_string()],
    );
}

const COMMON: [&str; 4] = ["--manifest", "corpus/manifest.json", "--out", "runs"];

fn with_common<'a>(cmd: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![cmd];
    v.extend(COMMON);
    v.extend(extra);
    v
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_is_reproducible_and_manifest_validates() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    small_corpus(a.path(), 4);
    small_corpus(b.path(), 4);
    assert!(tree(&a.path().join("corpus")) == tree(&b.path().join("corpus")));

    let m = DatasetManifest::load(&a.path().join("corpus/manifest.json")).unwrap();
    assert!(m.missing_paths().is_empty());
    assert_eq!(m.subset(Subset::Train).count(), 3);
    assert_eq!(m.subset(Subset::Dev).count(), 2);
    for rec in &m.conversations {
        assert_eq!(rec.segment_ms, 250);
        assert!(rec.embeddings.contains_key("acoustic-embed"));
        assert!(rec.embeddings.contains_key("linguistic-embed"));
    }

    let c = tempfile::tempdir().unwrap();
    small_corpus(c.path(), 5);
    assert!(tree(&a.path().join("corpus")) != tree(&c.path().join("corpus")));
}

#[test]
fn extract_twice_rewrites_nothing() {
    let d = tempfile::tempdir().unwrap();
    small_corpus(d.path(), 1);
    for fs in ["mfcc-stats", "linguistic-embed+spk", "egemaps-stats"] {
        let first = ok(d.path(), &with_common("extract", &["--feature-set", fs]));
        assert!(first.contains("written=7 up_to_date=0 failed=0"), "{first}");
        let cache = d.path().join("runs/features").join(fs);
        let before = tree(&cache);
        let second = ok(d.path(), &with_common("extract", &["--feature-set", fs]));
        assert!(second.contains("written=0 up_to_date=7 failed=0"), "{second}");
        assert!(before == tree(&cache));
    }
    let dims = ok(d.path(), &with_common("extract", &["--feature-set", "linguistic-embed+spk"]));
    assert!(dims.contains("dim=769"), "{dims}");
}

#[test]
fn missing_audio_names_the_conversation() {
    let d = tempfile::tempdir().unwrap();
    small_corpus(d.path(), 2);
    std::fs::remove_file(d.path().join("corpus/audio/dev_01.wav")).unwrap();
    let out = emocont(d.path(), &with_common("extract", &[]));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("dev_01"), "{err}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("written=6") && stdout.contains("failed=1"), "{stdout}");
}

#[test]
fn bad_inputs_exit_with_status_two() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("run.json"), r#"{"epoch": 3}"#).unwrap();
    let out = emocont(d.path(), &["train", "--config", "run.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = emocont(d.path(), &["extract"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest"));
}

#[test]
fn train_eval_fuse_plot_workflow() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    small_corpus(p, 3);
    for fs in ["mfcc-stats", "acoustic-embed"] {
        ok(p, &with_common("extract", &["--feature-set", fs]));
        let out = ok(
            p,
            &with_common("train", &["--feature-set", fs, "--epochs", "3", "--quiet"]),
        );
        assert!(out.contains("epochs=3"), "{out}");
        let model = p.join("runs/models").join(fs);
        for f in ["best.serm", "last.serm", "norm.json", "run.json"] {
            assert!(model.join(f).is_file(), "{f}");
        }
        let history = std::fs::read_to_string(model.join("history.csv")).unwrap();
        assert_eq!(history.lines().next(), Some("epoch,train_loss,dev_ccc"));
        assert_eq!(history.lines().count(), 1 + 3);

        for subset in ["dev", "test"] {
            ok(p, &with_common("eval", &["--feature-set", fs, "--subset", subset]));
        }
        let report = p.join("runs/eval").join(fs).join("test/report.csv");
        let first = std::fs::read(&report).unwrap();
        ok(p, &with_common("eval", &["--feature-set", fs, "--subset", "test"]));
        assert_eq!(first, std::fs::read(&report).unwrap());
    }

    // Every prediction file covers its conversation's full grid.
    let m = DatasetManifest::load(&p.join("corpus/manifest.json")).unwrap();
    for rec in m.subset(Subset::Test) {
        let gold = m.load_gold(rec, "satisfaction").unwrap();
        let pred = std::fs::read_to_string(p.join(format!("runs/eval/mfcc-stats/test/predictions/{}.csv", rec.id))).unwrap();
        assert_eq!(pred.lines().count(), 1 + gold.values.len());
    }

    let out = ok(
        p,
        &with_common(
            "fuse",
            &["--preds-a", "runs/eval/mfcc-stats", "--preds-b", "runs/eval/acoustic-embed"],
        ),
    );
    assert!(out.contains("test_ccc="), "{out}");
    let report = std::fs::read_to_string(p.join("runs/fusion/mfcc-stats+acoustic-embed/report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "w_a,w_b,dev_ccc");
    assert_eq!(lines.len(), 1 + 81 + 1);
    assert!(lines[1].starts_with("0.10,0.90,"));
    assert!(lines[81].starts_with("0.90,0.10,"));
    assert!(lines[82].starts_with("selected:"));

    // Fusing a model with itself ties everywhere; the smallest weight wins.
    let copy = p.join("runs/eval/mfcc-copy");
    std::fs::create_dir_all(copy.join("dev/predictions")).unwrap();
    for e in std::fs::read_dir(p.join("runs/eval/mfcc-stats/dev/predictions")).unwrap() {
        let e = e.unwrap();
        std::fs::copy(e.path(), copy.join("dev/predictions").join(e.file_name())).unwrap();
    }
    let out = ok(
        p,
        &with_common("fuse", &["--preds-a", "runs/eval/mfcc-stats", "--preds-b", "runs/eval/mfcc-copy"]),
    );
    assert!(out.contains("w_a=0.10 w_b=0.90"), "{out}");
    assert!(!out.contains("test_ccc"), "{out}");

    let out = ok(
        p,
        &[
            "plot",
            "--gold",
            "runs/eval/mfcc-stats/test/gold/test_00.csv",
            "--pred",
            "A_p=runs/eval/acoustic-embed/test/predictions/test_00.csv",
            "--pred",
            "runs/fusion/mfcc-stats+acoustic-embed/test/predictions/test_00.csv",
            "--out",
            "test_00.svg",
            "--title",
            "test_00",
        ],
    );
    assert!(out.contains("svg=test_00.svg"));
    let svg = std::fs::read_to_string(p.join("test_00.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polyline")).count(), 3);
    assert!(svg.contains("ccc(A_p) = "));
}

#[test]
fn fuse_reports_missing_dev_predictions() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    small_corpus(p, 6);
    ok(p, &with_common("extract", &[]));
    ok(p, &with_common("train", &["--epochs", "1", "--quiet"]));
    ok(p, &with_common("eval", &["--subset", "dev"]));
    let other = p.join("runs/eval/partial/dev/predictions");
    std::fs::create_dir_all(&other).unwrap();
    std::fs::copy(
        p.join("runs/eval/mfcc-stats/dev/predictions/dev_00.csv"),
        other.join("dev_00.csv"),
    )
    .unwrap();
    let out = emocont(
        p,
        &with_common("fuse", &["--preds-a", "runs/eval/mfcc-stats", "--preds-b", "runs/eval/partial"]),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dev_01"));
}
