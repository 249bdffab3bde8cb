use std::path::Path;
use std::process::{Command, Output};

use glyphnet::cli::run::RunManifest;
use glyphnet::cli::{exit, ConfigFile};
use glyphnet::codecs::{encode, layout, render_png, Label};
use glyphnet::nn::StopReason;
use glyphnet::{Experiment, Variant};

fn glyphnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glyphnet"))
        .args(args)
        .env_remove(glyphnet::cli::OUT_ENV)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = glyphnet(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_los_writes_53_columns_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&[
            "gen",
            "--kind",
            "los",
            "--n",
            "500",
            "--seed",
            "3",
            "--out",
            p(d),
        ]);
    }
    let text = std::fs::read_to_string(a.join("data.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 501);
    assert!(lines.iter().all(|l| l.split(',').count() == 53));
    for f in ["data.csv", "manifest.json"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn gen_retina_writes_images_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "gen",
        "--kind",
        "retina",
        "--n",
        "10",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(
        std::fs::read_dir(dir.path().join("images"))
            .unwrap()
            .count(),
        10
    );
    let labels = std::fs::read_to_string(dir.path().join("labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 11);
}

#[test]
fn output_directory_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_glyphnet"))
        .args(["gen", "--kind", "survival", "--n", "20"])
        .env(glyphnet::cli::OUT_ENV, dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("data.csv").exists());
}

#[test]
fn train_eval_round_trip_and_reproducible_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&[
        "gen",
        "--kind",
        "ad",
        "--n",
        "200",
        "--seed",
        "1",
        "--out",
        p(&data),
    ]);
    let runs: Vec<_> = ["r1", "r2"]
        .iter()
        .map(|r| {
            let out = dir.path().join(r);
            ok(&[
                "train",
                "--data",
                p(&data),
                "--max-epochs",
                "3",
                "--batch-size",
                "50",
                "--folds",
                "2",
                "--seed",
                "4",
                "--out",
                p(&out),
            ]);
            out
        })
        .collect();
    let m1 = std::fs::read(runs[0].join("run_manifest.json")).unwrap();
    assert_eq!(
        m1,
        std::fs::read(runs[1].join("run_manifest.json")).unwrap()
    );
    let manifest: RunManifest = serde_json::from_slice(&m1).unwrap();
    assert_eq!(manifest.folds.len(), 2);
    assert_eq!(manifest.config.train.max_epochs, 3);
    assert!(manifest.overrides.contains(&"max_epochs".to_string()));
    assert!(manifest.overrides.contains(&"folds".to_string()));
    for f in &manifest.folds {
        assert_eq!(f.stop_reason, StopReason::MaxEpochs);
        assert_eq!(f.stop_epoch, 3);
        assert_eq!(f.n_test, 20);
    }
    for i in 0..2 {
        assert!(runs[0].join(format!("model_fold{i}.json")).exists());
        let csv = std::fs::read_to_string(runs[0].join(format!("loss_fold{i}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 4);
    }
    let timing: serde_json::Value =
        serde_json::from_slice(&std::fs::read(runs[0].join("timing.json")).unwrap()).unwrap();
    assert_eq!(timing["fold_seconds"].as_array().unwrap().len(), 2);

    let grid = dir.path().join("grid.png");
    let report = ok(&[
        "eval",
        "--model",
        p(&runs[0].join("model_fold0.json")),
        "--data",
        p(&data),
        "--grid",
        p(&grid),
    ]);
    let report: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(report["n"], 200);
    assert_eq!(report["per_timepoint"].as_array().unwrap().len(), 4);
    assert!(std::fs::read(&grid).unwrap().starts_with(b"\x89PNG"));
}

#[test]
fn ratio_split_writes_single_model() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["gen", "--kind", "survival", "--n", "60", "--out", p(&data)]);
    let out = dir.path().join("run");
    ok(&[
        "train",
        "--data",
        p(&data),
        "--max-epochs",
        "2",
        "--out",
        p(&out),
    ]);
    assert!(out.join("model.json").exists());
    assert!(out.join("loss.csv").exists());
}

#[test]
fn eval_rejects_model_for_other_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let (sdata, ldata) = (dir.path().join("s"), dir.path().join("l"));
    ok(&["gen", "--kind", "survival", "--n", "30", "--out", p(&sdata)]);
    ok(&["gen", "--kind", "los", "--n", "30", "--out", p(&ldata)]);
    let run = dir.path().join("run");
    ok(&[
        "train",
        "--data",
        p(&sdata),
        "--max-epochs",
        "1",
        "--out",
        p(&run),
    ]);
    let out = glyphnet(&[
        "eval",
        "--model",
        p(&run.join("model.json")),
        "--data",
        p(&ldata),
    ]);
    assert_eq!(out.status.code(), Some(exit::CONFIG));
}

#[test]
fn error_exit_codes_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let missing = glyphnet(&[
        "train",
        "--data",
        p(&dir.path().join("nope")),
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(missing.status.code(), Some(exit::DATA));

    let data = dir.path().join("data");
    ok(&["gen", "--kind", "survival", "--n", "30", "--out", p(&data)]);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"batch_size": 0}"#).unwrap();
    let bad = glyphnet(&[
        "train",
        "--data",
        p(&data),
        "--config",
        p(&cfg),
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(bad.status.code(), Some(exit::CONFIG));
    std::fs::write(&cfg, r#"{"experiment": "los"}"#).unwrap();
    let wrong = glyphnet(&[
        "train",
        "--data",
        p(&data),
        "--config",
        p(&cfg),
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(wrong.status.code(), Some(exit::CONFIG));

    let diverge = glyphnet(&[
        "train",
        "--data",
        p(&data),
        "--lr",
        "1e308",
        "--max-epochs",
        "3",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(
        diverge.status.code(),
        Some(exit::DIVERGED),
        "{}",
        String::from_utf8_lossy(&diverge.stderr)
    );

    assert_eq!(
        glyphnet(&["gen", "--kind", "nine", "--n", "3", "--out", "x"])
            .status
            .code(),
        Some(exit::CONFIG)
    );
}

#[test]
fn config_file_resolves_defaults_and_overrides() {
    let covid = ConfigFile::default()
        .resolve(Experiment::Covid, Variant::desk(), false)
        .unwrap()
        .0;
    assert_eq!(
        (covid.train.patience_train, covid.train.patience_val),
        (50, 100)
    );
    let ad = ConfigFile::default()
        .resolve(Experiment::Ad, Variant::desk(), false)
        .unwrap()
        .0;
    assert_eq!((ad.train.max_epochs, ad.train.batch_size), (4000, 500));
    let file: ConfigFile =
        serde_json::from_str(r#"{"max_epochs": 5, "learning_rate": 0.001}"#).unwrap();
    let (cfg, overrides) = file
        .resolve(Experiment::Los, Variant::desk(), false)
        .unwrap();
    assert_eq!(cfg.train.max_epochs, 5);
    assert_eq!(overrides, vec!["max_epochs".to_string()]);
    assert!(serde_json::from_str::<ConfigFile>(r#"{"epochs": 5}"#).is_err());
}

#[test]
fn decode_rendered_target() {
    let dir = tempfile::tempdir().unwrap();
    let png = dir.path().join("fatal.png");
    ok(&[
        "render",
        "--exp",
        "1",
        "--label",
        "1",
        "--zoom",
        "4",
        "-o",
        p(&png),
    ]);
    let line = ok(&["decode", "--exp", "survival", p(&png)]);
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(v["label"], "1");
    assert!(v["decode"]["margin"].as_f64().unwrap() >= 0.5);
    assert_eq!(v["uncertainty"]["flags"].as_array().unwrap().len(), 0);
}

#[test]
fn decode_flags_contaminated_ru() {
    let dir = tempfile::tempdir().unwrap();
    let label = Label::Survival { fatal: false };
    let mut img = encode(Experiment::Survival, Variant::desk(), &label).unwrap();
    let lay = layout(Experiment::Survival, Variant::desk());
    for idx in lay.ru.indices() {
        for c in 0..3 {
            img.data_mut()[idx * 3 + c] = 0.2;
        }
    }
    let png = dir.path().join("ru.png");
    std::fs::write(&png, render_png(&img, 1).unwrap()).unwrap();
    let line = ok(&["decode", "--exp", "survival", p(&png)]);
    let v: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(
        v["uncertainty"]["flags"],
        serde_json::json!(["ru_contaminated"])
    );
}

#[test]
fn decode_directory_prints_one_line_per_image() {
    let dir = tempfile::tempdir().unwrap();
    for (i, label) in ["CN,CN,MCI,AD", "MCI,MCI,MCI,MCI", "CN,CN,CN,CN"]
        .iter()
        .enumerate()
    {
        ok(&[
            "render",
            "--exp",
            "ad",
            "--label",
            label,
            "-o",
            p(&dir.path().join(format!("{i}.png"))),
        ]);
    }
    std::fs::write(dir.path().join("notes.txt"), "skip me").unwrap();
    let out = ok(&["decode", "--exp", "ad", p(dir.path())]);
    let labels: Vec<String> = out
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["label"]
                .as_str()
                .unwrap()
                .to_string()
        })
        .collect();
    assert_eq!(labels, ["CN,CN,MCI,AD", "MCI,MCI,MCI,MCI", "CN,CN,CN,CN"]);
}

#[test]
fn decode_rejects_wrong_canvas_size() {
    let dir = tempfile::tempdir().unwrap();
    let png = dir.path().join("los.png");
    ok(&[
        "render",
        "--exp",
        "los",
        "--label",
        "12",
        "--zoom",
        "1",
        "-o",
        p(&png),
    ]);
    assert_eq!(
        glyphnet(&["decode", "--exp", "survival", p(&png)])
            .status
            .code(),
        Some(exit::DATA)
    );
}

#[test]
fn gradcheck_table_is_stable_and_localizes_faults() {
    let a = ok(&["gradcheck", "--seed", "9", "--seeds", "2"]);
    assert_eq!(a, ok(&["gradcheck", "--seed", "9", "--seeds", "2"]));
    assert!(!a.contains("FAIL"));
    let out = glyphnet(&["gradcheck", "--seeds", "1", "--inject-fault", "tconv2d"]);
    assert_eq!(out.status.code(), Some(exit::GRADCHECK));
    let text = String::from_utf8(out.stdout).unwrap();
    let failing: Vec<&str> = text.lines().filter(|l| l.ends_with("FAIL")).collect();
    assert_eq!(failing.len(), 1);
    assert!(failing[0].starts_with("TConv2D"));
}
