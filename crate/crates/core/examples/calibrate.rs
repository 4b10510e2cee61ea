//! Calibration harness for the default synthetic benchmark: runs the study
//! rule arms across seeds and prints per-arm linear-probe AUCs.
//!
//! Usage: cargo run --release -p pairlab-core --example calibrate [out_dir]

use std::path::PathBuf;

use pairlab_core::config::{ArmSpec, BenchmarkConfig};
use pairlab_core::runner::cmd_benchmark;

fn main() {
    env_logger::init();
    let out: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "/tmp/pairlab_calibrate".to_string())
        .into();

    let bench = BenchmarkConfig {
        seeds: vec![1, 2, 3],
        base: pairlab_core::runner::default_benchmark_base(&out.join("unused")),
        arms: vec![
            ArmSpec {
                name: "baseline".into(),
                pairing: Some(pairlab_core::runner::instance_discrimination_pairing()),
                strategy: None,
            },
            ArmSpec {
                name: "same-study".into(),
                pairing: Some(pairlab_core::runner::metadata_pairing(
                    pairlab_core::pair_index::StudyRule::SameStudy,
                    pairlab_core::pair_index::LateralityRule::AllLateralities,
                )),
                strategy: None,
            },
            ArmSpec {
                name: "all-studies".into(),
                pairing: Some(pairlab_core::runner::metadata_pairing(
                    pairlab_core::pair_index::StudyRule::AllStudies,
                    pairlab_core::pair_index::LateralityRule::AllLateralities,
                )),
                strategy: None,
            },
            ArmSpec {
                name: "distinct-studies".into(),
                pairing: Some(pairlab_core::runner::metadata_pairing(
                    pairlab_core::pair_index::StudyRule::DistinctStudies,
                    pairlab_core::pair_index::LateralityRule::AllLateralities,
                )),
                strategy: None,
            },
            ArmSpec {
                name: "all-studies-oracle".into(),
                pairing: Some(pairlab_core::runner::oracle_pairing()),
                strategy: None,
            },
            ArmSpec {
                name: "t3-distinct".into(),
                pairing: Some(pairlab_core::runner::size_controlled_distinct_pairing()),
                strategy: None,
            },
            ArmSpec {
                name: "t3-all-ctrl".into(),
                pairing: Some(pairlab_core::runner::size_controlled_all_pairing()),
                strategy: None,
            },
        ],
    };

    let started = std::time::Instant::now();
    let table = cmd_benchmark(&bench, &out).expect("benchmark runs");
    let elapsed = started.elapsed();

    println!("\nper-run linear AUC:");
    for run in &table.runs {
        println!(
            "  {:<20} seed {} -> {} [{}]",
            run.arm,
            run.seed,
            run.linear
                .as_ref()
                .map(|r| format!("{:.4}", r.mean_auc))
                .unwrap_or_else(|| "-".into()),
            run.status
        );
    }
    println!("\nper-arm pooled linear AUC:");
    for arm in &table.arms {
        println!(
            "  {:<20} {} +/- {}",
            arm.arm,
            arm.linear_mean
                .map(|m| format!("{m:.4}"))
                .unwrap_or_else(|| "-".into()),
            arm.linear_std
                .map(|s| format!("{s:.4}"))
                .unwrap_or_else(|| "-".into()),
        );
    }
    println!("\ntotal wall time: {elapsed:?}");
}
