use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use salvet::harness::{CampaignManifest, RunRecord};
use salvet::verdicts::{Outcome, Report, TestKind};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_salvet")
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn expect_ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path
}

const TINY_CAMPAIGN: &str = r#"
seed = 11

[train]
epochs = 2
learningRate = 2e-3
augment = false

[model]
profile = "desk"
hiddenSize = 4

[wp1]
specs = ["C-S"]
baseline = "B"

[wp2]
specs = ["C-S"]
temporalThreshold = 0.7
spatialThreshold = 0.5
"#;

fn synth(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    let out = run(&[
        "--seed",
        "11",
        "synth",
        data.to_str().unwrap(),
        "--sequences",
        "4",
        "--frames",
        "2",
        "--height",
        "8",
        "--width",
        "8",
        "--folds",
        "2",
    ]);
    let text = expect_ok(&out);
    assert!(text.contains("4 sequences"), "{text}");
    assert!(text.contains("2 folds assigned"), "{text}");
    data
}

#[test]
fn synth_then_train_then_resume() {
    let dir = scratch("cli-train");
    let data = synth(&dir);
    let cfg = write_config(&dir, TINY_CAMPAIGN);
    let store = dir.join("store");

    let args = [
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        store.to_str().unwrap(),
        "train",
        "--data",
        data.to_str().unwrap(),
        "--spec",
        "C-S",
        "--fold",
        "0",
    ];
    let first = expect_ok(&run(&args));
    assert!(first.contains("run C-S-learned-fold0-seed11"), "{first}");

    let record_path = store.join("runs/C-S-learned-fold0-seed11.json");
    let record: RunRecord =
        serde_json::from_str(&std::fs::read_to_string(&record_path).unwrap()).unwrap();
    record.validate().unwrap();
    assert_eq!(record.fold, 0);

    let second = expect_ok(&run(&args));
    assert_eq!(first, second, "resume must reproduce the same line");
}

#[test]
fn wp1_campaign_emits_schema_valid_outputs() {
    let dir = scratch("cli-wp1");
    let data = synth(&dir);
    let cfg = write_config(&dir, TINY_CAMPAIGN);
    let store = dir.join("store");

    let text = expect_ok(&run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        store.to_str().unwrap(),
        "wp1",
        "--data",
        data.to_str().unwrap(),
    ]));
    assert!(text.contains("C-S WP1:"), "{text}");

    let manifest: CampaignManifest = serde_json::from_str(
        &std::fs::read_to_string(store.join("reports/wp1.campaign.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest.name, "wp1");
    assert!(!manifest.run_ids.is_empty());
    for id in &manifest.run_ids {
        let rec: RunRecord = serde_json::from_str(
            &std::fs::read_to_string(store.join(format!("runs/{id}.json"))).unwrap(),
        )
        .unwrap();
        rec.validate().unwrap();
    }
    assert!(manifest
        .verdicts
        .iter()
        .any(|v| v.test == TestKind::WP1 && v.config.to_string() == "C-S"));

    let report_path = store.join("reports/wp1.report.json");
    let report: Report =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report.rows.len(), 1);

    let before = std::fs::read(&report_path).unwrap();
    let regen = expect_ok(&run(&[
        "--out-dir",
        store.to_str().unwrap(),
        "report",
        "wp1",
    ]));
    assert!(regen.contains("C-S"), "{regen}");
    assert_eq!(before, std::fs::read(&report_path).unwrap());
}

#[test]
fn wp2_campaign_emits_schema_valid_outputs() {
    let dir = scratch("cli-wp2");
    let data = synth(&dir);
    let cfg = write_config(&dir, TINY_CAMPAIGN);
    let store = dir.join("store");

    let text = expect_ok(&run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        store.to_str().unwrap(),
        "wp2",
        "--data",
        data.to_str().unwrap(),
    ]));
    assert!(text.contains("C-S WP2:"), "{text}");

    let manifest: CampaignManifest = serde_json::from_str(
        &std::fs::read_to_string(store.join("reports/wp2.campaign.json")).unwrap(),
    )
    .unwrap();
    let verdict = manifest
        .verdicts
        .iter()
        .find(|v| v.test == TestKind::WP2)
        .unwrap();
    assert!(verdict.divergence.is_some());
    assert!(manifest
        .run_ids
        .iter()
        .any(|id| id.contains("transplant")));
}

#[test]
fn replay_judges_the_builtin_fixture() {
    let text = expect_ok(&run(&["replay"]));
    let wp1_passes = text
        .lines()
        .filter(|l| l.contains("Wp1: PASS") || l.contains("WP1: PASS"))
        .count();
    assert_eq!(wp1_passes, 9, "{text}");
    assert!(text.contains("C-S Wp2: PASS") || text.contains("C-S WP2: PASS"), "{text}");

    let json = expect_ok(&run(&["replay", "--json"]));
    let report: Report = serde_json::from_str(&json).unwrap();
    assert_eq!(report.rows.len(), 9);
    assert!(report
        .verdicts
        .iter()
        .filter(|v| v.test == TestKind::WP1)
        .all(|v| v.outcome == Outcome::Pass));
}

#[test]
fn report_exports_records() {
    let dir = scratch("cli-export");
    let data = synth(&dir);
    let cfg = write_config(&dir, TINY_CAMPAIGN);
    let store = dir.join("store");
    expect_ok(&run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        store.to_str().unwrap(),
        "wp1",
        "--data",
        data.to_str().unwrap(),
    ]));

    let json_out = dir.join("runs.json");
    let csv_out = dir.join("runs.csv");
    expect_ok(&run(&[
        "--out-dir",
        store.to_str().unwrap(),
        "report",
        "wp1",
        "--export-json",
        json_out.to_str().unwrap(),
        "--export-csv",
        csv_out.to_str().unwrap(),
    ]));
    let records: Vec<RunRecord> =
        serde_json::from_str(&std::fs::read_to_string(&json_out).unwrap()).unwrap();
    assert!(!records.is_empty());
    let csv = std::fs::read_to_string(&csv_out).unwrap();
    assert!(csv.starts_with("runId,spec,weightSource,fold,n,mean,"), "{csv}");
    assert_eq!(csv.lines().count(), records.len() + 1);
}

#[test]
fn heatmap_blends_a_mask_over_a_frame() {
    let dir = scratch("cli-heatmap");
    let frame_path = dir.join("frame.png");
    let img = image::RgbImage::from_fn(12, 10, |x, y| {
        image::Rgb([(x * 20) as u8, (y * 25) as u8, 128])
    });
    img.save(&frame_path).unwrap();

    let mask_path = dir.join("mask.tsr");
    let values: Vec<f64> = (0..6).map(|i| i as f64 / 5.0).collect();
    salvet::dataio::write_tensor(
        &mask_path,
        &[2, 3],
        salvet::dataio::Dtype::F32,
        &values,
    )
    .unwrap();

    let out_path = dir.join("overlay.png");
    let text = expect_ok(&run(&[
        "heatmap",
        "--frame",
        frame_path.to_str().unwrap(),
        "--mask",
        mask_path.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]));
    assert!(text.contains("wrote"), "{text}");
    let overlay = image::open(&out_path).unwrap();
    assert_eq!((overlay.width(), overlay.height()), (12, 10));

    let again = dir.join("overlay2.png");
    expect_ok(&run(&[
        "heatmap",
        "--frame",
        frame_path.to_str().unwrap(),
        "--mask",
        mask_path.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]));
    assert_eq!(
        std::fs::read(&out_path).unwrap(),
        std::fs::read(&again).unwrap(),
        "heatmap rendering must be byte-identical"
    );
}

#[test]
fn exit_codes_separate_validation_from_runtime_failures() {
    let dir = scratch("cli-exits");
    let data = synth(&dir);

    let bad_spec = run(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--spec",
        "QQ-S",
        "--fold",
        "0",
    ]);
    assert_eq!(bad_spec.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad_spec.stderr).contains("QQ"));

    let missing_data = run(&[
        "--out-dir",
        dir.join("store").to_str().unwrap(),
        "train",
        "--data",
        dir.join("absent").to_str().unwrap(),
        "--spec",
        "C-S",
        "--fold",
        "0",
    ]);
    assert_eq!(missing_data.status.code(), Some(2));

    let usage = run(&["--definitely-not-a-flag"]);
    assert_eq!(usage.status.code(), Some(1));

    let missing_fixture = run(&["replay", "--fixture", dir.join("nope.json").to_str().unwrap()]);
    assert_eq!(missing_fixture.status.code(), Some(2));

    let version = run(&["--version"]);
    assert_eq!(version.status.code(), Some(0));

    let bad_mode = run(&[
        "synth",
        dir.join("d2").to_str().unwrap(),
        "--mode",
        "SIDEWAYS",
    ]);
    assert_eq!(bad_mode.status.code(), Some(1));
}

#[test]
fn config_file_errors_are_validation_errors() {
    let dir = scratch("cli-config");
    let bad = write_config(&dir, "this is not toml = [");
    let out = run(&["--config", bad.to_str().unwrap(), "replay"]);
    assert_eq!(out.status.code(), Some(1));

    let unknown_key = write_config(&dir, "[train]\nepochs = 2\nwarpSpeed = 9\n");
    let out = run(&["--config", unknown_key.to_str().unwrap(), "replay"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warpSpeed"));
}
