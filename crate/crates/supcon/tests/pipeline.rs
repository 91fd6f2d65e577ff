//! Commands run end to end on a tiny synthetic corpus.

use std::path::{Path, PathBuf};

use supcon::config::{SweepAxis, SweepSpec, SweepValue};
use supcon::error::exit;
use supcon::formats;
use supcon::io::sha256_file;
use supcon::manifest::read_manifest;
use supcon::pipeline::{self, without_timing, ModelChoice};
use supcon::sweep::run_sweep;
use supcon::{cli, Error, RunConfig};
use supcon_core::data::{SplitSpec, SyntheticConfig};
use supcon_core::model::EncoderConfig;

fn tiny(outdir: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = 1;
    cfg.outdir = outdir.to_path_buf();
    cfg.data.synthetic = SyntheticConfig { n_patients: 6, grid_w: 4, grid_h: 3, patch_size: 16, ..SyntheticConfig::default() };
    cfg.split = SplitSpec::new(4, 1, 1, 0);
    cfg.encoder = EncoderConfig { input_size: 16, patch_size: 8, depth: 1, width: 8, heads: 2, mlp_ratio: 2 };
    cfg.train.stage1.epochs = 2;
    cfg.train.stage1.batch_size = 8;
    cfg.train.stage1.lr = 1e-3;
    cfg.train.stage2.epochs = 5;
    cfg.train.baseline.epochs = 2;
    cfg.train.baseline.lr = 1e-3;
    cfg
}

fn write_config(cfg: &RunConfig, dir: &Path) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    path
}

fn cli_run(args: &[&str]) -> supcon::Result<()> {
    cli::run(std::iter::once("supcon").chain(args.iter().copied()))
}

fn prepare(cfg: &RunConfig) {
    pipeline::cmd_synth(cfg).unwrap();
    pipeline::cmd_split(cfg).unwrap();
}

#[test]
fn full_pipeline_from_the_command_line() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = tiny(&out);
    let path = write_config(&cfg, tmp.path());
    cli_run(&["pipeline", "--config", path.to_str().unwrap()]).unwrap();

    let metrics: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("eval/metrics_supcon.json")).unwrap()).unwrap();
    for key in ["precision", "sensitivity", "specificity", "f1", "balanced_accuracy", "tp", "fn", "fp", "tn", "flags"] {
        assert!(metrics.get(key).is_some(), "metrics lacks {key}");
    }
    let total: u64 = ["tp", "fn", "fp", "tn"].iter().map(|k| metrics[k].as_u64().unwrap()).sum();
    assert_eq!(total, 12, "one test patient of 4x3 patches");

    for stage in ["data", "stage1", "features", "stage2", "eval", "maps"] {
        let m = read_manifest(&out.join(stage)).unwrap();
        assert!(!m.is_empty(), "{stage} manifest");
        for entry in m.values() {
            assert_eq!(entry.config_hash, cfg.hash());
        }
    }
    let data = read_manifest(&out.join("data")).unwrap();
    assert!(data.contains_key("synth") && data.contains_key("split"));
    assert!(out.join("eval/pca_supcon.csv").exists() && out.join("eval/pca_supcon.png").exists());
    let maps = std::fs::read_dir(out.join("maps/supcon")).unwrap().count();
    assert_eq!(maps, 3, "prediction map, truth map and summary for one patient");
    let (w, h, _) = formats::read_pgm(&out.join("data/truth/syn00.pgm")).unwrap();
    assert_eq!((w, h), (4, 3));
}

#[test]
fn stage2_before_extract_names_the_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path());
    prepare(&cfg);
    pipeline::cmd_train_stage1(&cfg).unwrap();
    let err = pipeline::cmd_train_stage2(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), exit::MISSING_ARTIFACT);
    match err {
        Error::MissingArtifact { path, .. } => assert_eq!(path, tmp.path().join("features/train.emb")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_split_and_checkpoint_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path());
    match pipeline::cmd_train_stage1(&cfg) {
        Err(Error::MissingArtifact { path, .. }) => assert_eq!(path, tmp.path().join("data/split.csv")),
        other => panic!("{other:?}"),
    }
    prepare(&cfg);
    match pipeline::cmd_extract(&cfg) {
        Err(Error::MissingArtifact { path, .. }) => assert_eq!(path, tmp.path().join("stage1/encoder.json")),
        other => panic!("{other:?}"),
    }
    match pipeline::cmd_predmap(&cfg, ModelChoice::Supcon) {
        Err(Error::MissingArtifact { path, .. }) => assert_eq!(path, tmp.path().join("eval/predictions_supcon.csv")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn edited_cache_is_a_manifest_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path());
    prepare(&cfg);
    pipeline::cmd_train_stage1(&cfg).unwrap();
    pipeline::cmd_extract(&cfg).unwrap();
    let cache = tmp.path().join("features/train.emb");
    let mut bytes = std::fs::read(&cache).unwrap();
    let last = bytes.len() - 20;
    bytes[last] ^= 0x40;
    std::fs::write(&cache, bytes).unwrap();
    let err = pipeline::cmd_train_stage2(&cfg).unwrap_err();
    assert!(matches!(err, Error::ManifestMismatch { .. }), "{err:?}");
    assert_eq!(err.exit_code(), exit::MISSING_ARTIFACT);
}

#[test]
fn negative_lr_is_a_config_error_naming_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path());
    cfg.train.stage1.lr = 1e-3;
    let text = cfg.to_toml_string().unwrap().replace("lr = 0.001", "lr = -0.001");
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, text).unwrap();
    let err = cli_run(&["train-stage1", "--config", path.to_str().unwrap()]).unwrap_err();
    assert_eq!(err.exit_code(), exit::CONFIG);
    match err {
        Error::Config { field, .. } => assert_eq!(field, "train.stage1.lr"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn rerun_reproduces_histories_and_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path());
    let run = || {
        prepare(&cfg);
        let s1 = pipeline::cmd_train_stage1(&cfg).unwrap();
        pipeline::cmd_extract(&cfg).unwrap();
        let s2 = pipeline::cmd_train_stage2(&cfg).unwrap();
        pipeline::cmd_eval(&cfg, ModelChoice::Supcon).unwrap();
        let metrics = std::fs::read(tmp.path().join("eval/metrics_supcon.json")).unwrap();
        let hist = formats::read_history(&tmp.path().join("stage1/history.jsonl")).unwrap();
        assert_eq!(without_timing(&hist), without_timing(&s1.history));
        let split = std::fs::read(tmp.path().join("data/split.csv")).unwrap();
        let weights = sha256_file(&tmp.path().join("stage2/classifier.bin")).unwrap();
        (without_timing(&s1.history), without_timing(&s2.history), metrics, split, weights)
    };
    let first = run();
    let second = run();
    assert_eq!(first, second);
}

#[test]
fn seed_override_changes_training() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path());
    prepare(&cfg);
    let path = write_config(&cfg, tmp.path());
    let p = path.to_str().unwrap();
    cli_run(&["train-stage1", "--config", p]).unwrap();
    let a = formats::read_history(&tmp.path().join("stage1/history.jsonl")).unwrap();
    cli_run(&["train-stage1", "--config", p, "--seed", "2"]).unwrap();
    let b = formats::read_history(&tmp.path().join("stage1/history.jsonl")).unwrap();
    assert_ne!(without_timing(&a), without_timing(&b));
    let m = read_manifest(&tmp.path().join("stage1")).unwrap();
    assert_eq!(m["train-stage1"].seed, 2);
}

#[test]
fn outdir_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(&tmp.path().join("ignored"));
    let path = write_config(&cfg, tmp.path());
    let other = tmp.path().join("other");
    cli_run(&["synth", "--config", path.to_str().unwrap(), "--outdir", other.to_str().unwrap()]).unwrap();
    assert!(other.join("data/images").is_dir());
    assert!(!tmp.path().join("ignored").exists());
}

#[test]
fn stage2_leaves_the_encoder_untouched() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path());
    prepare(&cfg);
    pipeline::cmd_train_stage1(&cfg).unwrap();
    pipeline::cmd_extract(&cfg).unwrap();
    let enc = tmp.path().join("stage1/encoder.bin");
    let before = sha256_file(&enc).unwrap();
    pipeline::cmd_train_stage2(&cfg).unwrap();
    assert_eq!(sha256_file(&enc).unwrap(), before);
}

#[test]
fn baseline_commands() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path());
    prepare(&cfg);
    let summary = pipeline::cmd_train_baseline(&cfg).unwrap();
    assert!(summary.epochs_run >= 1 && summary.epochs_run <= 2);
    let hist = formats::read_history(&tmp.path().join("baseline/history.jsonl")).unwrap();
    assert_eq!(hist.len(), summary.epochs_run);
    let report = pipeline::cmd_eval(&cfg, ModelChoice::Baseline).unwrap();
    assert!((0.0..=1.0).contains(&report.f1));
    pipeline::cmd_pca(&cfg, ModelChoice::Baseline).unwrap();
    let maps = pipeline::cmd_predmap(&cfg, ModelChoice::Baseline).unwrap();
    assert_eq!(maps.len(), 1);
    assert!(tmp.path().join("eval/metrics_baseline.json").exists());
}

#[test]
fn pca_export_is_centred_and_ordered() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path());
    prepare(&cfg);
    pipeline::cmd_train_stage1(&cfg).unwrap();
    pipeline::cmd_extract(&cfg).unwrap();
    let summary = pipeline::cmd_pca(&cfg, ModelChoice::Supcon).unwrap();
    assert_eq!(summary.components, 2);
    assert!(summary.explained_variance[0] >= summary.explained_variance[1]);
    let (scores, labels) = formats::read_pca_csv(&tmp.path().join("eval/pca_supcon.csv")).unwrap();
    assert_eq!(labels.len(), 12);
    for c in 0..2 {
        let mean = scores.iter_rows().map(|r| r[c]).sum::<f64>() / scores.rows() as f64;
        assert!(mean.abs() < 1e-6, "column {c} mean {mean}");
    }
}

#[test]
fn external_dataset_root_skips_foreign_files() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = tiny(&tmp.path().join("gen"));
    pipeline::cmd_synth(&gen).unwrap();
    let root = tmp.path().join("gen/data/images");
    std::fs::write(root.join("README.txt"), "not a patch").unwrap();
    std::fs::write(root.join("syn00").join("syn00_x0_y0_class0.jpg"), "wrong format").unwrap();
    let mut cfg = tiny(&tmp.path().join("run"));
    cfg.data.root = Some(root);
    let split = pipeline::cmd_split(&cfg).unwrap();
    assert_eq!(split.train.len() + split.val.len() + split.test.len(), 72);
}

#[test]
fn pretrained_weights_seed_training() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path());
    let donor = supcon_core::model::VitEncoder::new(cfg.encoder, 99).unwrap();
    let weights = tmp.path().join("weights/encoder.json");
    supcon::pretrained::export_encoder(&weights, &donor, supcon::pretrained::Dtype::F64).unwrap();
    cfg.pretrained = Some(weights);
    assert_eq!(pipeline::initial_encoder(&cfg).unwrap(), donor);
    prepare(&cfg);
    pipeline::cmd_train_stage1(&cfg).unwrap();
    let m = read_manifest(&tmp.path().join("stage1")).unwrap();
    assert!(m["train-stage1"].inputs.keys().any(|k| k.ends_with("weights/encoder.json")));

    cfg.encoder.width = 16;
    cfg.encoder.heads = 4;
    assert!(matches!(pipeline::initial_encoder(&cfg), Err(Error::ManifestMismatch { .. })));
}

#[test]
fn sweeps() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny(tmp.path());
    prepare(&cfg);
    let data = pipeline::load_split_images(&cfg).unwrap();

    let temps = SweepSpec { axis: SweepAxis::Temperature, values: [0.03, 0.1, 1.0].map(SweepValue::Number).to_vec() };
    let table = run_sweep(&cfg, &temps, &data).unwrap();
    assert_eq!(table.rows.len(), 3);
    for w in table.rows.windows(2) {
        assert!(w[0].val_f1.unwrap() >= w[1].val_f1.unwrap());
    }
    assert!(table.rows.iter().all(|r| (0.0..=1.0).contains(&r.val_f1.unwrap())));
    assert_eq!(table.rows.iter().filter(|r| r.best).count(), 1);
    assert!(table.rows[0].best);

    let augs = SweepSpec {
        axis: SweepAxis::Augmentation,
        values: vec![SweepValue::Name("flips".into()), SweepValue::Name("flips+color".into())],
    };
    let table = run_sweep(&cfg, &augs, &data).unwrap();
    let mut names: Vec<&str> = table.rows.iter().map(|r| r.value.as_str()).collect();
    names.sort();
    assert_eq!(names, ["flips", "flips+color"]);
    let csv = String::from_utf8(table.to_csv().unwrap()).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "axis,value,val_f1,best_epoch,wall_clock_s,best,error");
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn single_point_sweep_matches_a_plain_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path());
    prepare(&cfg);
    pipeline::cmd_train_stage1(&cfg).unwrap();
    pipeline::cmd_extract(&cfg).unwrap();
    let plain = pipeline::cmd_train_stage2(&cfg).unwrap();

    cfg.sweep = Some(SweepSpec { axis: SweepAxis::Temperature, values: vec![SweepValue::Number(cfg.loss.temperature)] });
    let table = supcon::sweep::cmd_sweep(&cfg).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert_eq!(table.rows[0].val_f1, Some(plain.best_f1));
    assert_eq!(table.rows[0].best_epoch, Some(plain.best_epoch));
    assert!(tmp.path().join("sweep/results.csv").exists() && tmp.path().join("sweep/results.json").exists());
}

#[test]
fn failing_sweep_point_is_reported_and_others_finish() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path());
    prepare(&cfg);
    let data = pipeline::load_split_images(&cfg).unwrap();
    // a point whose config fails validation
    cfg.train.stage1.lr = f64::INFINITY;
    let spec = SweepSpec { axis: SweepAxis::Temperature, values: vec![SweepValue::Number(0.1)] };
    let table = run_sweep(&cfg, &spec, &data).unwrap();
    assert!(table.rows[0].error.is_some());
    assert!(!table.rows[0].best);

    cfg.train.stage1.lr = 1e-3;
    let spec = SweepSpec {
        axis: SweepAxis::Variant,
        values: vec![SweepValue::Name("as-printed".into()), SweepValue::Name("khosla-out".into())],
    };
    let table = run_sweep(&cfg, &spec, &data).unwrap();
    assert!(table.rows.iter().all(|r| r.error.is_none()));
}
