//! End-to-end CLI checks on synthetic fixture data: determinism, error
//! reporting, and the documented output files.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn polyreuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyreuse"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Writes a tiny balanced MNIST-format fixture under `<root>/mnist/`.
fn write_mnist_fixture(root: &Path, train_n: usize, test_n: usize) {
    let dir = root.join("mnist");
    fs::create_dir_all(&dir).unwrap();
    let mut state = 0x2545f4914f6cdd1du64;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    let mut write_pair = |images: &Path, labels: &Path, n: usize| {
        let mut img = Vec::new();
        img.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        img.extend_from_slice(&(n as u32).to_be_bytes());
        img.extend_from_slice(&28u32.to_be_bytes());
        img.extend_from_slice(&28u32.to_be_bytes());
        let mut lbl = Vec::new();
        lbl.extend_from_slice(&0x0000_0801u32.to_be_bytes());
        lbl.extend_from_slice(&(n as u32).to_be_bytes());
        for i in 0..n {
            let class = (i % 10) as u8;
            lbl.push(class);
            for p in 0..784usize {
                // A blotch whose position depends on the class, plus noise.
                let row = p / 28;
                let hot = row / 3 == class as usize % 9;
                let noise = (next() % 64) as u8;
                img.push(if hot { 180 + noise / 4 } else { noise });
            }
        }
        fs::write(images, img).unwrap();
        fs::write(labels, lbl).unwrap();
    };
    write_pair(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
        train_n,
    );
    write_pair(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
        test_n,
    );
}

fn write_config(path: &Path, body: &str) {
    fs::write(path, body).unwrap();
}

#[test]
fn same_seed_runs_produce_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    write_mnist_fixture(tmp.path(), 80, 40);
    let cfg = tmp.path().join("run.json");
    write_config(
        &cfg,
        r#"{ "preset": "mnist_fc_case1", "train_examples": 80, "train": {"epochs": 2, "batch_size": 16} }"#,
    );
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for out in [&out_a, &out_b] {
        let res = polyreuse(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--data-root",
            tmp.path().to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "7",
        ]);
        assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    }
    let csv_a = fs::read(out_a.join("metrics.csv")).unwrap();
    let csv_b = fs::read(out_b.join("metrics.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    assert!(out_a.join("model.pwc").exists());
    assert!(out_a.join("model.q8").exists());
    assert!(out_a.join("summary.json").exists());
}

#[test]
fn zero_epochs_scores_chance_level_on_balanced_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    write_mnist_fixture(tmp.path(), 40, 200);
    let cfg = tmp.path().join("zero.json");
    write_config(
        &cfg,
        r#"{ "preset": "mnist_fc_case0", "train_examples": 40, "train": {"epochs": 0} }"#,
    );
    let out = tmp.path().join("out");
    let res = polyreuse(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--data-root",
        tmp.path().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let acc = summary["final_accuracy"].as_f64().unwrap();
    assert!((0.0..0.35).contains(&acc), "untrained accuracy {acc}");
}

#[test]
fn invalid_config_field_is_a_named_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    write_config(&cfg, r#"{ "preset": "mnist_fc_case0", "learning_rate": 5 }"#);
    let res = polyreuse(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(!res.status.success());
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&res.stderr).trim()).expect("stderr is JSON");
    let msg = err["error"].as_str().unwrap();
    assert!(msg.contains("learning_rate"), "error names the field: {msg}");
}

#[test]
fn missing_dataset_mentions_fetch_script() {
    let tmp = tempfile::tempdir().unwrap();
    let res = polyreuse(&[
        "train",
        "--preset",
        "mnist_fc_case0",
        "--epochs",
        "1",
        "--data-root",
        tmp.path().join("nowhere").to_str().unwrap(),
        "--out",
        tmp.path().join("out").to_str().unwrap(),
    ]);
    assert!(!res.status.success());
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&res.stderr).trim()).expect("stderr is JSON");
    let msg = err["error"].as_str().unwrap();
    assert!(msg.contains("fetch_data.sh"), "hint present: {msg}");
}

#[test]
fn unknown_preset_lists_alternatives() {
    let res = polyreuse(&["cost", "--preset", "nonexistent"]);
    assert!(!res.status.success());
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&res.stderr).trim()).unwrap();
    assert!(err["error"].as_str().unwrap().contains("mnist_fc_case0"));
}

#[test]
fn cost_outputs_tables_sweep_and_chart() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("cost");
    let res = polyreuse(&[
        "cost",
        "--preset",
        "lenet_300_100",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("531990"), "naive reference total: {stdout}");
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(sweep.lines().any(|l| l.starts_with("10,102,120,")), "sweep holds the 10x10 point");
    assert!(sweep.lines().any(|l| l.starts_with("28,") && l.contains(",584,1080")));
    let svg = fs::read_to_string(out.join("sweep.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("polyline"));
    assert!(out.join("cost.txt").exists());
    assert!(out.join("cost.csv").exists());
    assert!(out.join("cost.json").exists());
}

#[test]
fn cost_reports_uncalibrated_width_by_name() {
    let res = polyreuse(&["cost", "--preset", "mnist_cnn_case1"]);
    assert!(!res.status.success());
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&res.stderr).trim()).unwrap();
    let msg = err["error"].as_str().unwrap();
    assert!(msg.contains("width 6"), "names the missing entry: {msg}");
}

#[test]
fn report_and_posthoc_round_trip_a_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    write_mnist_fixture(tmp.path(), 60, 40);
    let cfg = tmp.path().join("run.json");
    write_config(
        &cfg,
        r#"{ "preset": "mnist_fc_case0", "train_examples": 60, "train": {"epochs": 2, "batch_size": 12} }"#,
    );
    let out = tmp.path().join("run");
    let res = polyreuse(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--data-root",
        tmp.path().to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));

    let checkpoint = out.join("model.pwc");
    let rep_out = tmp.path().join("report");
    let res = polyreuse(&[
        "report",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--out",
        rep_out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(rep_out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["total_params"].as_u64().unwrap(), 52544);

    // Post-hoc with an identity-width scheme keeps the accuracy unchanged.
    let posthoc_cfg = tmp.path().join("posthoc.json");
    write_config(
        &posthoc_cfg,
        r#"{ "arch": "mnist_fc", "scheme": [
            {"layer": "fc1", "degree": "linear", "group_size": 2},
            {"layer": "fc2", "degree": "linear", "group_size": 2},
            {"layer": "fc3", "degree": "linear", "group_size": 2}
        ] }"#,
    );
    let ph_out = tmp.path().join("ph");
    let res = polyreuse(&[
        "posthoc",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--config",
        posthoc_cfg.to_str().unwrap(),
        "--data-root",
        tmp.path().to_str().unwrap(),
        "--out",
        ph_out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    let ph: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ph_out.join("posthoc.json")).unwrap()).unwrap();
    let original = ph["original_accuracy"].as_f64().unwrap();
    let projected = ph["posthoc_accuracy"].as_f64().unwrap();
    assert!((original - projected).abs() < 1e-12);

    // A corrupt container is a named error.
    let broken = tmp.path().join("broken.pwc");
    let mut bytes = fs::read(&checkpoint).unwrap();
    bytes.truncate(bytes.len() / 2);
    fs::write(&broken, bytes).unwrap();
    fs::copy(out.join("summary.json"), tmp.path().join("summary.json")).unwrap();
    let res = polyreuse(&["report", "--checkpoint", broken.to_str().unwrap()]);
    assert!(!res.status.success());
    let err: serde_json::Value =
        serde_json::from_str(String::from_utf8_lossy(&res.stderr).trim()).unwrap();
    assert!(err["error"].as_str().unwrap().contains("corrupt"));
}
