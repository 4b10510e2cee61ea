//! Diagnostic for the synthetic benchmark: how much label signal do raw
//! pixels, a random-init encoder, and a trained encoder expose to the probe?

use pairlab_core::cohort::ImageRecord;
use pairlab_core::config::CohortSource;
use pairlab_core::engine::{pretrain, EncoderState, PretrainSetup};
use pairlab_core::eval::*;
use pairlab_core::rng::stream;
use pairlab_core::runner::{default_benchmark_base, load_cohort};
use std::collections::BTreeMap;

fn probe_auc_on(
    features_by_id: &BTreeMap<u64, Vec<f64>>,
    records: &[ImageRecord],
    partition: &TestPartition,
    fraction: f64,
    hyper: &ProbeHyperparams,
) -> f64 {
    let labels_by_id: BTreeMap<u64, u8> =
        records.iter().map(|r| (r.image_id, r.labels[0])).collect();
    let patients_by_id: BTreeMap<u64, u64> =
        records.iter().map(|r| (r.image_id, r.patient_id)).collect();
    let test_f: Vec<Vec<f64>> = partition.test.iter().map(|id| features_by_id[id].clone()).collect();
    let test_y: Vec<u8> = partition.test.iter().map(|id| labels_by_id[id]).collect();
    let mut aucs = Vec::new();
    for repeat in 0..5 {
        let spec = SplitSpec {
            fraction,
            n_repeats: 5,
            seed: 42,
            unit: SplitUnit::ByImage,
        };
        let ids =
            draw_split(&partition.train_pool, &labels_by_id, &patients_by_id, &spec, repeat)
                .unwrap();
        let f: Vec<Vec<f64>> = ids.iter().map(|id| features_by_id[id].clone()).collect();
        let y: Vec<u8> = ids.iter().map(|id| labels_by_id[id]).collect();
        let (w, b) = train_logistic(&f, &y, hyper);
        let scores: Vec<f64> = test_f
            .iter()
            .map(|x| w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b)
            .collect();
        aucs.push(auc(&scores, &test_y).unwrap());
    }
    aucs.iter().sum::<f64>() / aucs.len() as f64
}

fn norm(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return v.to_vec();
    }
    v.iter().map(|x| x / n).collect()
}

fn main() {
    let base = default_benchmark_base(std::path::Path::new("/tmp/diag"));
    let records = load_cohort(&base).unwrap();
    let partition = partition_by_patient(&records, 0.25, base.seed).unwrap();
    let pool_set: std::collections::BTreeSet<u64> =
        partition.train_pool.iter().copied().collect();
    let train: Vec<ImageRecord> = records
        .iter()
        .filter(|r| pool_set.contains(&r.image_id))
        .cloned()
        .collect();
    let hyper = base.eval.probe;

    let pos = records.iter().filter(|r| r.labels[0] == 1).count();
    println!(
        "cohort: {} records, {} positive ({:.2})",
        records.len(),
        pos,
        pos as f64 / records.len() as f64
    );

    // raw pixels
    let raw: BTreeMap<u64, Vec<f64>> = records
        .iter()
        .map(|r| (r.image_id, norm(r.pixels.as_ref().unwrap().as_slice())))
        .collect();
    for fraction in [0.03, 0.1, 0.3] {
        println!(
            "raw pixels       fraction {fraction:<4}: {:.4}",
            probe_auc_on(&raw, &records, &partition, fraction, &hyper)
        );
    }

    // random-init encoder representation
    let arch = base.engine.arch(256);
    let state = EncoderState::init(arch.clone(), 0.9, 0.2, &mut stream(1, &[2])).unwrap();
    let feats = |params: &[f64]| -> BTreeMap<u64, Vec<f64>> {
        records
            .iter()
            .map(|r| {
                let f = pairlab_core::engine::representation(
                    &arch,
                    params,
                    r.pixels.as_ref().unwrap().as_slice(),
                )
                .unwrap();
                (r.image_id, norm(&f))
            })
            .collect()
    };
    let random_feats = feats(&state.query_params);
    for fraction in [0.03, 0.1, 0.3] {
        println!(
            "random encoder   fraction {fraction:<4}: {:.4}",
            probe_auc_on(&random_feats, &records, &partition, fraction, &hyper)
        );
    }

    // trained encoder (same-study pairing)
    let setup = PretrainSetup {
        pairing: match &base.pairing.mode {
            m => m.clone(),
        },
        empty_policy: base.pairing.empty_policy,
        augmentation: base.augmentation.clone(),
        engine: base.engine.clone(),
        seed: base.seed,
        config_hash: String::new(),
    };
    let t0 = std::time::Instant::now();
    let out = pretrain(&train, &setup).unwrap();
    println!(
        "pretrain: {} steps in {:?}, loss {:.3} -> {:.3}",
        out.log.len(),
        t0.elapsed(),
        out.log.first().map(|r| r.loss).unwrap_or(f64::NAN),
        out.log.last().map(|r| r.loss).unwrap_or(f64::NAN)
    );
    let trained_feats = feats(&out.final_checkpoint.state.query_params);
    for fraction in [0.03, 0.1, 0.3] {
        println!(
            "trained encoder  fraction {fraction:<4}: {:.4}",
            probe_auc_on(&trained_feats, &records, &partition, fraction, &hyper)
        );
    }

    // ceiling: probe on the true label (sanity)
    let label_feats: BTreeMap<u64, Vec<f64>> = records
        .iter()
        .map(|r| (r.image_id, vec![r.labels[0] as f64]))
        .collect();
    println!(
        "label oracle     fraction 0.1 : {:.4}",
        probe_auc_on(&label_feats, &records, &partition, 0.1, &hyper)
    );
}
