//! Binary-level tests: subcommands, flags, and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn pairlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pairlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

const BASE_CONFIG: &str = r#"
seed = 7
out_dir = "OUT"

[cohort]
source = "generate"
n_patients = 24
p_frontal = 0.6
p_label_flip_between_studies = 0.3
n_tasks = 1
image_size = [8, 8]
noise_std = 0.1
signal_strength = 0.5
seed = 7

[cohort.studies_per_patient]
kind = "uniform"
lo = 1
hi = 3

[cohort.images_per_study]
kind = "uniform"
lo = 1
hi = 3

[pairing]
mode = "metadata"
empty_policy = "fallback-self"

[pairing.criteria]
study_rule = "same-study"
laterality_rule = "all-lateralities"

[augmentation]
horizontal_flip_prob = 0.5
rotation_range_degrees = [-10.0, 10.0]
crop_scale_range = [0.95, 1.0]
output_size = [8, 8]

[engine]
hidden = [32, 16]
proj_hidden = 16
embed_dim = 8
queue_capacity = 32
epochs = 2
batch_size = 8
learning_rate = 0.05

[eval]
[eval.split]
fraction = 0.15
"#;

fn write_config(dir: &Path) -> std::path::PathBuf {
    let out = dir.join("run");
    let text = BASE_CONFIG.replace("OUT", out.to_str().unwrap());
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn generate_pretrain_evaluate_analyze_flow() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let config = config.to_str().unwrap();

    let out = pairlab(&["generate", "--config", config]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("run/cohort.csv").exists());

    let out = pairlab(&["pretrain", "--config", config]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("run/checkpoints/checkpoint_final.json").exists());

    let out = pairlab(&["evaluate", "--config", config]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("linear-probe"), "{stdout}");
    assert!(stdout.contains("end-to-end"), "{stdout}");
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("run/eval_report_linear-probe.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["per_split_auc"].as_array().unwrap().len(), 5);

    let out = pairlab(&["analyze-pairs", "--config", config]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("run/pairs.csv").exists());

    let results = dir.path().join("run/results.csv");
    let out = pairlab(&["report", "--csv", results.to_str().unwrap()]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("mean_auc"), "{stdout}");
}

#[test]
fn seed_and_out_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let other = dir.path().join("elsewhere");
    let out = pairlab(&[
        "generate",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "99",
        "--out",
        other.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let saved = std::fs::read_to_string(other.join("config.toml")).unwrap();
    assert!(saved.contains("seed = 99"), "{saved}");
}

#[test]
fn set_overrides_reach_nested_fields() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = pairlab(&[
        "pretrain",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "engine.epochs=1",
        "--set",
        "pairing.criteria.study_rule=\"all-studies\"",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let saved = std::fs::read_to_string(dir.path().join("run/config.toml")).unwrap();
    assert!(saved.contains("epochs = 1"), "{saved}");
    assert!(saved.contains("all-studies"), "{saved}");
}

#[test]
fn config_error_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    // invalid probability
    let out = pairlab(&[
        "generate",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "cohort.p_frontal=2.0",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    // missing config file is an I/O error
    let out = pairlab(&["generate", "--config", "/no/such/file.toml"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn numeric_abort_exits_3_with_dump() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = pairlab(&[
        "pretrain",
        "--config",
        config.to_str().unwrap(),
        "--set",
        "engine.learning_rate=1e308",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("run/abort_dump.json").exists());
}

#[test]
fn benchmark_subcommand_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let run_out = dir.path().join("unused");
    let base = BASE_CONFIG.replace("OUT", run_out.to_str().unwrap());
    // benchmark config embeds the base run config under [base]
    let mut bench = String::from("seeds = [3]\n\n[base]\n");
    let mut in_table = false;
    for line in base.lines() {
        if line.starts_with('[') && line.ends_with(']') {
            in_table = true;
            bench.push_str(&format!("[base.{}\n", &line[1..]));
        } else if !in_table && line.starts_with("out_dir = ") {
            bench.push_str("out_dir = \"unused\"\n");
        } else {
            bench.push_str(line);
            bench.push('\n');
        }
    }
    bench.push_str(
        r#"
[[arms]]
name = "same-study"

[[arms]]
name = "baseline"

[arms.pairing]
mode = "instance-discrimination"
"#,
    );
    let bench_path = dir.path().join("bench.toml");
    std::fs::write(&bench_path, bench).unwrap();
    let out_dir = dir.path().join("bench_out");
    let out = pairlab(&[
        "benchmark",
        "--config",
        bench_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(out_dir.join("benchmark_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 3); // header + 2 arms
    assert!(table.contains("same-study"));
    assert!(table.contains("instance-discrimination"));
}
