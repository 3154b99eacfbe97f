mod common;

use std::fs;
use std::path::Path;
use std::process::Command;

use common::*;
use ponnet::harness::*;
use ponnet::model::{InputMode, ModelConfig, PonNet, Variant};
use ponnet::placesim::dataset::{read_ppm, DEFAULT_RATIOS, MANIFEST_FILE, STATS_FILE};
use ponnet::placesim::{LabelStats, Split};
use proptest::prelude::*;

fn tiny(dir: &Path) -> Dataset {
    small_dataset(60, 3, [4.0, 1.0, 1.0], dir)
}

fn quick(seed: u64) -> TrainConfig {
    TrainConfig { epochs: 2, batch_size: 16, ..learning_config(seed) }
}

#[test]
fn constant_predictor_confusion() {
    let truth: Vec<bool> = (0..100).map(|i| i % 2 == 0).collect();
    let c = Confusion::from_predictions(&truth, &[true; 100]);
    assert_eq!(c.0, [[50, 0], [50, 0]]);
    assert_eq!(c.accuracy(), 0.5);
    assert_eq!(c.total(), 100);
    assert!(predicts_dc(&[0.5, 0.5]));
    assert!(!predicts_dc(&[0.49, 0.51]));
}

#[test]
fn mean_std_matches_direct_formula() {
    let xs = [0.81, 0.84, 0.79, 0.88, 0.86];
    let (m, s) = mean_std(&xs);
    let mean = (0.81 + 0.84 + 0.79 + 0.88 + 0.86) / 5.0;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 4.0;
    assert!((m - mean).abs() < 1e-12);
    assert!((s.unwrap() - var.sqrt()).abs() < 1e-12);
    assert_eq!(mean_std(&[0.7]), (0.7, None));
}

#[test]
fn default_grid_covers_every_cell() {
    let g = default_grid();
    assert_eq!(g.len(), 12);
    assert_eq!(g[0], Cell::Baseline);
    assert_eq!(g.iter().filter(|c| matches!(c, Cell::Model { variant: Variant::Type3, .. })).count(), 3);
    assert_eq!(*g.last().unwrap(), Cell::model(Variant::Full, InputMode::Rgbd));
}

#[test]
fn colormap_endpoints_and_overlays() {
    assert_eq!(colormap(0.0), [0.0, 0.0, 255.0]);
    assert_eq!(colormap(1.0), [255.0, 0.0, 0.0]);
    let img = ponnet::depthproc::RgbImage::filled(16, 16, [100, 50, 200]);
    let cold = overlay(&img, &[0.0; 16], 4).unwrap();
    assert_eq!((cold.width, cold.height), (16, 16));
    assert!(cold.data.chunks(3).all(|p| p == [50, 25, 228]));
    let mut a = vec![0.1; 16];
    a[5] = 0.9;
    let hot = overlay(&img, &a, 4).unwrap();
    let reddest = hot.data.chunks(3).map(|p| p[0] as i32 - p[2] as i32).max().unwrap();
    assert_eq!(reddest, 178 - 100);
}

#[test]
fn dataset_round_trip_and_batches() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny(dir.path());
    let sizes = Split::ALL.map(|s| data.split(s).len());
    assert_eq!(sizes, [40, 10, 10]);
    assert_eq!(data.stats(), &LabelStats::from_records(&data.manifest.records));
    for s in Split::ALL {
        assert_eq!(data.stats().split_total(s), data.split(s).len());
    }
    let (batch, labels) = data.batch(Split::Train, &[0, 3, 7], 5).unwrap();
    assert_eq!(batch.rgb.shape(), &[3, 3, 32, 32]);
    assert_eq!(batch.depth.shape(), &[3, 3, 32, 32]);
    assert_eq!(labels.len(), 5);
    assert!(batch.rgb.data().iter().all(|v| (-0.5..=0.5).contains(v)));
    let s = &data.split(Split::Train)[3];
    assert_eq!(labels[0].data()[2..4], [f64::from(s.labels.any.is_dc() as u8), f64::from(!s.labels.any.is_dc() as u8)]);
    assert!(data.batch(Split::Test, &[99], 1).is_err());
}

#[test]
fn load_errors_name_the_record() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny(dir.path());
    let victim = &data.manifest.records[4];
    fs::write(dir.path().join(&victim.rgb), b"P6\n2 2\n255\nxx").unwrap();
    let err = load_dataset(dir.path(), 32).unwrap_err().to_string();
    assert!(err.contains(&format!("record {}", victim.id)), "{err}");

    let dir = tempfile::tempdir().unwrap();
    tiny(dir.path());
    let path = dir.path().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[2] = lines[2].replacen("\"Any\":\"DC\"", "\"Any\":\"MAYBE\"", 1).replacen("\"Any\":\"NDC\"", "\"Any\":\"MAYBE\"", 1);
    fs::write(&path, lines.join("\n")).unwrap();
    let err = load_dataset(dir.path(), 32).unwrap_err().to_string();
    assert!(err.contains("line 3"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    tiny(dir.path());
    let stats = dir.path().join(STATS_FILE);
    let tampered = fs::read_to_string(&stats).unwrap().replacen('1', "2", 1);
    fs::write(&stats, tampered).unwrap();
    assert!(load_dataset(dir.path(), 32).is_err());
}

#[test]
fn training_is_deterministic_and_keeps_best_validation_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny(dir.path());
    let cfg = TrainConfig { epochs: 4, ..quick(5) };
    let a = train(&cfg, &data).unwrap();
    let b = train(&cfg, &data).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.history.len(), 4);
    let best = a.history.iter().fold((f64::MIN, 0), |acc, e| if e.val_accuracy >= acc.0 { (e.val_accuracy, e.epoch) } else { acc });
    assert_eq!(a.best_epoch, best.1);
    let mut m = a.model.clone();
    let val = evaluate(&mut m, &data, Split::Valid).unwrap();
    assert_eq!(val.accuracy, best.0);
    let c = train(&TrainConfig { seed: 6, ..cfg }, &data).unwrap();
    assert_ne!(a.history, c.history);
}

#[test]
fn checkpoint_round_trip_reproduces_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny(dir.path());
    let cfg = quick(1);
    let (outcome, metrics) = train_and_test(&cfg, &data).unwrap();
    let path = dir.path().join("m.ckpt");
    outcome.model.save(&path).unwrap();
    let mut back = PonNet::load(cfg.model_config(), &path).unwrap();
    let mut again = evaluate(&mut back, &data, Split::Test).unwrap();
    again.attach_training(cfg.seed, &outcome);
    assert_eq!(again, metrics);
    assert_eq!(Metrics::from_json(&metrics.to_json()).unwrap(), metrics);
    let five = cfg.model_config().collision_types();
    assert!(PonNet::load(five, &path).is_err());
}

#[test]
fn non_finite_loss_aborts_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny(dir.path());
    let cfg = TrainConfig { lr: 1e200, ..quick(2) };
    match train(&cfg, &data) {
        Err(ponnet::Error::Training { epoch, batch, .. }) => assert!(epoch >= 1 && batch >= 1),
        other => panic!("expected a training abort, got {other:?}"),
    }
}

#[test]
fn train_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny(dir.path());
    assert!(train(&TrainConfig { epochs: 0, ..quick(0) }, &data).is_err());
    assert!(train(&TrainConfig { batch_size: 0, ..quick(0) }, &data).is_err());
    let mut wrong_side = quick(0);
    wrong_side.model.input_side = 16;
    assert!(train(&wrong_side, &data).is_err());
    assert!(TrainConfig::from_json(r#"{"epochs": 3, "bogus": 1}"#).is_err());
    let c = TrainConfig::from_json(r#"{"epochs": 3}"#).unwrap();
    assert_eq!((c.epochs, c.batch_size, c.beta1, c.beta2), (3, 48, 0.99, 0.9));
    assert_eq!(TrainConfig::from_json(&c.to_json()).unwrap(), c);
    let c = TrainConfig::from_json(r#"{"beta1": 0.9, "model": {"variant": "type3", "input_mode": "depth"}}"#).unwrap();
    assert_eq!(c.model, ModelConfig::with_variant(Variant::Type3, InputMode::Depth));
    assert_eq!(c.beta1, 0.9);
}

#[test]
fn evaluation_tables_and_branches() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny(dir.path());
    let mut full = PonNet::build(ModelConfig::default()).unwrap();
    let m = evaluate(&mut full, &data, Split::Test).unwrap();
    assert_eq!(m.samples, 10);
    assert_eq!(m.confusion[0].total(), 10);
    assert_eq!(m.branches.len(), 2);
    assert!(m.branches.iter().all(|b| b.confusion[0].total() == 10));
    let table = m.confusion_table(0);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 4);
    for h in ["Total", "RGB Att.", "Depth Att."] {
        assert!(lines[0].contains(h));
    }
    assert_eq!(lines[1].split_whitespace().filter(|w| *w == "DC").count(), 3);
    assert!(lines[2].starts_with("DC") && lines[3].starts_with("NDC"));

    let mut t2 = PonNet::build(ModelConfig::with_variant(Variant::Type2, InputMode::Rgb)).unwrap();
    assert!(evaluate(&mut t2, &data, Split::Test).unwrap().branches.is_empty());
    let mut five = PonNet::build(ModelConfig::default().collision_types()).unwrap();
    let m5 = evaluate(&mut five, &data, Split::Test).unwrap();
    assert_eq!(m5.heads, ["Any", "AO", "TO", "OO", "OD"]);
    assert_eq!(m5.confusion.len(), 5);
    assert_eq!(m5.branches[0].confusion.len(), 5);
}

#[test]
fn ablation_report_rows_and_failures() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny(dir.path());
    let grid = [Cell::Baseline, Cell::model(Variant::Type2, InputMode::Depth), Cell::model(Variant::Full, InputMode::Rgbd)];
    let base = TrainConfig { epochs: 1, ..quick(0) };
    let mut seen = 0;
    let r = run_ablation(&grid, &data, &base, 2, 10, |_| seen += 1).unwrap();
    assert_eq!(seen, 3);
    assert_eq!(r.rows.len(), 3);
    assert_eq!(r.columns, ["Accuracy"]);
    assert!(r.rows[0].std[0].is_none() && r.rows[0].trials.len() == 1);
    for row in &r.rows[1..] {
        assert_eq!(row.seeds, [10, 11]);
        assert_eq!(row.trials.len(), 2);
        let (m, s) = mean_std(&[row.trials[0][0], row.trials[1][0]]);
        assert_eq!((row.mean[0], row.std[0]), (m, s));
    }
    let table = r.table();
    let header: Vec<&str> = table.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["Method", "BB", "AB", "SA", "Input", "Accuracy"]);
    assert_eq!(table.lines().count(), 4);

    let mut broken = base.clone();
    broken.model.input_side = 16;
    let r = run_ablation(&grid, &data, &broken, 2, 0, |_| {}).unwrap();
    assert!(r.rows[0].error.is_none());
    assert!(r.rows[1].error.is_some() && r.rows[2].error.is_some());
    assert!(r.table().contains("failed"));
}

#[test]
fn collision_type_report_has_five_columns() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny(dir.path());
    let base = TrainConfig { epochs: 1, ..quick(0) };
    assert!(run_collision_types(&[Cell::Baseline], &data, &base, 2, 0, |_| {}).is_err());
    let r = run_collision_types(&[Cell::model(Variant::Full, InputMode::Rgbd)], &data, &base, 2, 0, |_| {}).unwrap();
    assert_eq!(r.columns, ["Any", "AO", "TO", "OO", "OD"]);
    assert_eq!(r.rows[0].mean.len(), 5);
    let header: Vec<String> = r.table().lines().next().unwrap().split_whitespace().map(String::from).collect();
    assert_eq!(header, ["Method", "Input", "Any", "AO", "TO", "OO", "OD"]);
}

#[test]
fn attention_overlays_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny(dir.path());
    let mut model = PonNet::build(ModelConfig::default()).unwrap();
    let out = dir.path().join("overlays");
    let paths = export_attention_overlay(&mut model, &data, Split::Test, 2, &out).unwrap();
    for p in &paths {
        let img = read_ppm(p).unwrap();
        assert_eq!((img.width, img.height), (32, 32));
    }
    let mut t2 = PonNet::build(ModelConfig::with_variant(Variant::Type2, InputMode::Rgbd)).unwrap();
    assert!(export_attention_overlay(&mut t2, &data, Split::Test, 0, &out).is_err());
}

#[test]
fn baseline_metrics_cover_split() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny(dir.path());
    let m = baseline_metrics(&data, Split::Test, &Default::default()).unwrap();
    assert_eq!(m.samples, 10);
    assert!(m.branches.is_empty());
}

#[test]
fn toy_run_reduces_loss() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_dataset(640, 11, [8.0, 1.0, 1.0], dir.path());
    assert_eq!(data.split(Split::Train).len(), 512);
    let outcome = train(&learning_config(0), &data).unwrap();
    let (first, last) = (outcome.history[0].train_loss, outcome.history[59].train_loss);
    assert!(last <= 0.2 * first, "initial {first} final {last}");
}

fn ponnet() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ponnet"))
}

#[test]
fn cli_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    let st = ponnet().args(["gen-data", "--n", "1200", "--seed", "7", "--out"]).arg(&d).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let m = ponnet::placesim::DatasetManifest::read(&d).unwrap();
    assert_eq!(Split::ALL.map(|s| m.split(s).count()), [1000, 100, 100]);
    assert_eq!(fs::read_dir(d.join("rgb")).unwrap().count(), 1200);
    assert_eq!(fs::read_dir(d.join("depth")).unwrap().count(), 1200);
    assert_eq!(DEFAULT_RATIOS, [10.0, 1.0, 1.0]);

    let small = dir.path().join("s");
    tiny(&small);
    let cfg = dir.path().join("train.json");
    fs::write(&cfg, TrainConfig { epochs: 1, ..quick(0) }.to_json()).unwrap();
    let run = dir.path().join("run");
    let st = ponnet().args(["train", "--data"]).arg(&small).arg("--config").arg(&cfg).arg("--out").arg(&run).output().unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let metrics = Metrics::from_json(&fs::read_to_string(run.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics.training.as_ref().unwrap().epochs, 1);

    let ev = dir.path().join("ev");
    let st = ponnet().args(["eval", "--data"]).arg(&small).arg("--run").arg(&run).arg("--out").arg(&ev).output().unwrap();
    assert!(st.status.success());
    let again = Metrics::from_json(&fs::read_to_string(ev.join("eval_test.json")).unwrap()).unwrap();
    assert_eq!(again.confusion, metrics.confusion);

    let st =
        ponnet().args(["overlay", "--data"]).arg(&small).arg("--run").arg(&run).arg("--out").arg(dir.path().join("ov")).output().unwrap();
    assert!(st.status.success());
    assert_eq!(fs::read_dir(dir.path().join("ov")).unwrap().count(), 3);

    let st = ponnet().args(["baseline", "--data"]).arg(&small).arg("--out").arg(dir.path().join("b")).output().unwrap();
    assert!(st.status.success());

    let st = ponnet().args(["gradcheck", "--seeds", "1"]).env("PONNET_THREADS", "2").output().unwrap();
    assert!(st.status.success());
    let st = ponnet().args(["gradcheck", "--seeds", "1"]).env("PONNET_THREADS", "zero").output().unwrap();
    assert_eq!(st.status.code(), Some(1));

    for bad in [vec!["frobnicate"], vec!["train", "--bogus"], vec!["gen-data"]] {
        let st = ponnet().args(&bad).output().unwrap();
        assert_eq!(st.status.code(), Some(2), "{bad:?}");
        assert!(String::from_utf8_lossy(&st.stderr).contains("Usage"));
    }
    let st = ponnet().args(["train", "--data"]).arg(dir.path().join("missing")).output().unwrap();
    assert_eq!(st.status.code(), Some(1));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn confusion_cells_sum_to_count(pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 0..200)) {
        let (t, p): (Vec<bool>, Vec<bool>) = pairs.iter().copied().unzip();
        let c = Confusion::from_predictions(&t, &p);
        prop_assert_eq!(c.total(), pairs.len());
        let agree = pairs.iter().filter(|(a, b)| a == b).count();
        prop_assert_eq!(c.correct(), agree);
    }

    #[test]
    fn colormap_channels_in_range(t in -1.0f64..2.0) {
        let c = colormap(t);
        prop_assert!(c.iter().all(|v| (0.0..=255.0).contains(v)));
    }
}
