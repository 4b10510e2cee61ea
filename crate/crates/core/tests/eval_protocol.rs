//! Protocol-level checks of checkpoint selection and the two probe modes.

mod common;

use common::small_cohort_config;
use pairlab_core::cohort::{generate, ImageRecord};
use pairlab_core::engine::{
    Checkpoint, EncoderArch, EncoderState, NegativeQueue, NegativeStrategy, CHECKPOINT_VERSION,
};
use pairlab_core::eval::{
    end_to_end, knn_select, linear_probe, partition_by_patient, EvalMode, ProbeHyperparams,
    SplitSpec,
};
use pairlab_core::rng::stream;

fn arch_for(records: &[ImageRecord]) -> EncoderArch {
    let pixels = records[0].pixels.as_ref().unwrap();
    EncoderArch {
        input_dim: pixels.h() * pixels.w(),
        hidden: vec![32, 16],
        proj_hidden: 16,
        embed_dim: 8,
    }
}

fn random_checkpoint(records: &[ImageRecord], seed: u64) -> Checkpoint {
    let state = EncoderState::init(arch_for(records), 0.999, 0.2, &mut stream(seed, &[2])).unwrap();
    Checkpoint {
        version: CHECKPOINT_VERSION,
        config_hash: String::new(),
        seed,
        epoch: 0,
        step: 0,
        state,
        queue: NegativeQueue::new(8),
        strategy: NegativeStrategy::Default,
    }
}

#[test]
fn knn_select_prefers_earliest_on_ties_and_handles_singletons() {
    let records = generate(&small_cohort_config(41)).unwrap();
    let refs: Vec<&ImageRecord> = records.iter().collect();
    let single = vec![random_checkpoint(&records, 1)];
    let (best, scores) = knn_select(&single, &refs, 0, 5).unwrap();
    assert_eq!(best, 0);
    assert_eq!(scores.len(), 1);

    // identical checkpoints tie; the earliest wins
    let twin = vec![random_checkpoint(&records, 1), random_checkpoint(&records, 1)];
    let (best, scores) = knn_select(&twin, &refs, 0, 5).unwrap();
    assert_eq!(best, 0);
    assert_eq!(scores[0], scores[1]);
}

#[test]
fn zero_rate_end_to_end_matches_zero_step_probe() {
    let records = generate(&small_cohort_config(43)).unwrap();
    let checkpoint = random_checkpoint(&records, 7);
    let partition = partition_by_patient(&records, 0.25, 43).unwrap();
    let split = SplitSpec {
        fraction: 0.15,
        n_repeats: 3,
        seed: 5,
        unit: pairlab_core::eval::SplitUnit::ByImage,
    };

    let frozen = ProbeHyperparams {
        learning_rate: 1e-2,
        epochs: 0,
    };
    let zero_rate = ProbeHyperparams {
        learning_rate: 0.0,
        epochs: 50,
    };
    let probe = linear_probe(&checkpoint, &records, &partition, 0, &split, &frozen, "c0").unwrap();
    let e2e = end_to_end(&checkpoint, &records, &partition, 0, &split, &zero_rate, "c0").unwrap();
    assert_eq!(probe.per_split_auc, e2e.per_split_auc);
    assert_eq!(e2e.mode, EvalMode::EndToEnd);
    assert_eq!(probe.mode, EvalMode::LinearProbe);
}

#[test]
fn end_to_end_tracks_linear_probe_within_margin() {
    // empirical oracle across 3 seeds on random-init encoders
    let mut probe_means = Vec::new();
    let mut e2e_means = Vec::new();
    for seed in [101u64, 102, 103] {
        let records = generate(&small_cohort_config(seed)).unwrap();
        let checkpoint = random_checkpoint(&records, seed);
        let partition = partition_by_patient(&records, 0.25, seed).unwrap();
        let split = SplitSpec {
            fraction: 0.15,
            n_repeats: 3,
            seed,
            unit: pairlab_core::eval::SplitUnit::ByImage,
        };
        let hyper = ProbeHyperparams {
            learning_rate: 1e-2,
            epochs: 300,
        };
        let probe =
            linear_probe(&checkpoint, &records, &partition, 0, &split, &hyper, "c0").unwrap();
        let e2e = end_to_end(&checkpoint, &records, &partition, 0, &split, &hyper, "c0").unwrap();
        probe_means.push(probe.mean_auc);
        e2e_means.push(e2e.mean_auc);
    }
    let probe_mean = probe_means.iter().sum::<f64>() / 3.0;
    let e2e_mean = e2e_means.iter().sum::<f64>() / 3.0;
    assert!(
        e2e_mean >= probe_mean - 0.05,
        "end-to-end {e2e_mean} fell more than 0.05 below probe {probe_mean}"
    );
}
