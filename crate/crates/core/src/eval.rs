//! Representation quality measurement.
//!
//! A patient-disjoint test partition is held out; small labeled splits are
//! repeatedly drawn from the remaining pool; a logistic classifier is trained
//! on frozen representations (linear probe) or together with the backbone
//! (end-to-end), and test AUC is aggregated over the splits. Checkpoints are
//! selected beforehand by leave-one-out kNN accuracy on the pool.
//!
//! Probes and kNN both consume L2-normalized backbone representations.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cohort::ImageRecord;
use crate::engine::{normalize, normalize_backward, Checkpoint, EncoderArch, Mlp};
use crate::error::{Error, Result};
use crate::rng::{lanes, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitUnit {
    ByImage,
    ByPatient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    /// Fraction of the training pool labeled per split.
    pub fraction: f64,
    pub n_repeats: usize,
    pub seed: u64,
    pub unit: SplitUnit,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            fraction: 0.01,
            n_repeats: 5,
            seed: 0,
            unit: SplitUnit::ByImage,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::config("split.fraction", "must be in (0, 1]"));
        }
        if self.n_repeats == 0 {
            return Err(Error::config("split.n_repeats", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    LinearProbe,
    EndToEnd,
}

impl EvalMode {
    pub fn name(&self) -> &'static str {
        match self {
            EvalMode::LinearProbe => "linear-probe",
            EvalMode::EndToEnd => "end-to-end",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_split_auc: Vec<f64>,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub mode: EvalMode,
    pub task: usize,
    pub checkpoint_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeHyperparams {
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for ProbeHyperparams {
    fn default() -> Self {
        ProbeHyperparams {
            learning_rate: 1e-2,
            epochs: 500,
        }
    }
}

/// AUC by the Mann-Whitney statistic: the fraction of (positive, negative)
/// pairs ranked correctly, ties counting 0.5. Computed via average ranks.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based average rank over the tie group [i, j)
        let avg_rank = (i + j + 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Leave-one-out kNN accuracy with cosine similarity over unit-normalized
/// features. Voting ties (and exact half-majorities) predict negative.
pub fn knn_loo_accuracy(features: &[Vec<f64>], labels: &[u8], k: usize) -> Result<f64> {
    if features.is_empty() {
        return Err(Error::EmptyProbeSet);
    }
    if features.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            expected: features.len(),
            got: labels.len(),
        });
    }
    if !labels.contains(&1) || !labels.contains(&0) {
        return Err(Error::SingleClass);
    }
    let normalized: Vec<Vec<f64>> = features.iter().map(|f| normalize(f)).collect();
    let n = normalized.len();
    let k = k.min(n - 1).max(1);
    let mut correct = 0usize;
    for i in 0..n {
        let mut sims: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let dot: f64 = normalized[i]
                    .iter()
                    .zip(&normalized[j])
                    .map(|(a, b)| a * b)
                    .sum();
                (dot, j)
            })
            .collect();
        // descending similarity, index ascending on exact ties
        sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let positive_votes = sims[..k].iter().filter(|(_, j)| labels[*j] == 1).count();
        let predicted = u8::from(2 * positive_votes > k);
        correct += usize::from(predicted == labels[i]);
    }
    Ok(correct as f64 / n as f64)
}

fn record_features(
    arch: &EncoderArch,
    params: &[f64],
    records: &[&ImageRecord],
) -> Result<Vec<Vec<f64>>> {
    let mlp = Mlp::new(arch, params)?;
    records
        .iter()
        .map(|r| {
            let pixels = r.pixels.as_ref().ok_or(Error::MissingPixels(r.image_id))?;
            Ok(normalize(&mlp.forward_repr(pixels.as_slice())?))
        })
        .collect()
}

/// Scores every checkpoint by leave-one-out kNN accuracy of its probe-set
/// representations and returns (index of best, per-checkpoint accuracies).
/// Ties go to the earliest checkpoint.
pub fn knn_select(
    checkpoints: &[Checkpoint],
    probe_set: &[&ImageRecord],
    task: usize,
    k: usize,
) -> Result<(usize, Vec<f64>)> {
    if checkpoints.is_empty() {
        return Err(Error::config("checkpoints", "need at least one checkpoint"));
    }
    if probe_set.is_empty() {
        return Err(Error::EmptyProbeSet);
    }
    let labels: Vec<u8> = probe_set.iter().map(|r| r.labels[task]).collect();
    let mut scores = Vec::with_capacity(checkpoints.len());
    for checkpoint in checkpoints {
        let features = record_features(
            &checkpoint.state.arch,
            &checkpoint.state.query_params,
            probe_set,
        )?;
        scores.push(knn_loo_accuracy(&features, &labels, k)?);
    }
    let mut best = 0;
    for (i, &score) in scores.iter().enumerate() {
        if score > scores[best] {
            best = i;
        }
    }
    Ok((best, scores))
}

/// Patient-disjoint train-pool / test split.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPartition {
    pub train_pool: Vec<u64>,
    pub test: Vec<u64>,
}

/// Holds out roughly `test_fraction` of patients (at least one) as the test
/// partition; every image of a patient lands on one side.
pub fn partition_by_patient(
    records: &[ImageRecord],
    test_fraction: f64,
    seed: u64,
) -> Result<TestPartition> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::config("test_patient_fraction", "must be in (0, 1)"));
    }
    let mut patients: Vec<u64> = records
        .iter()
        .map(|r| r.patient_id)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if patients.len() < 2 {
        return Err(Error::config(
            "cohort",
            "need at least two patients for a patient-disjoint test partition",
        ));
    }
    patients.shuffle(&mut stream(seed, &[lanes::TEST_PARTITION]));
    let n_test = ((patients.len() as f64 * test_fraction).round() as usize)
        .clamp(1, patients.len() - 1);
    let test_patients: std::collections::BTreeSet<u64> =
        patients[..n_test].iter().copied().collect();
    let mut train_pool = Vec::new();
    let mut test = Vec::new();
    for record in records {
        if test_patients.contains(&record.patient_id) {
            test.push(record.image_id);
        } else {
            train_pool.push(record.image_id);
        }
    }
    Ok(TestPartition { train_pool, test })
}

const MAX_SPLIT_REDRAWS: usize = 10;

/// Draws one labeled split from the pool. Splits that miss a class are
/// redrawn (with a logged note) up to 10 times, then error out.
pub fn draw_split(
    pool: &[u64],
    labels_by_id: &BTreeMap<u64, u8>,
    patients_by_id: &BTreeMap<u64, u64>,
    spec: &SplitSpec,
    repeat: usize,
) -> Result<Vec<u64>> {
    spec.validate()?;
    let target = ((pool.len() as f64 * spec.fraction).ceil() as usize).clamp(1, pool.len());
    for attempt in 0..MAX_SPLIT_REDRAWS {
        let mut rng = stream(
            spec.seed,
            &[lanes::SPLIT, repeat as u64, attempt as u64],
        );
        let split: Vec<u64> = match spec.unit {
            SplitUnit::ByImage => {
                let mut ids = pool.to_vec();
                ids.shuffle(&mut rng);
                ids.truncate(target);
                ids
            }
            SplitUnit::ByPatient => {
                let mut patients: Vec<u64> = pool
                    .iter()
                    .map(|id| patients_by_id[id])
                    .collect::<std::collections::BTreeSet<_>>()
                    .into_iter()
                    .collect();
                patients.shuffle(&mut rng);
                let mut ids = Vec::new();
                for patient in patients {
                    if ids.len() >= target {
                        break;
                    }
                    ids.extend(pool.iter().copied().filter(|id| patients_by_id[id] == patient));
                }
                ids
            }
        };
        let has_pos = split.iter().any(|id| labels_by_id[id] == 1);
        let has_neg = split.iter().any(|id| labels_by_id[id] == 0);
        if has_pos && has_neg {
            return Ok(split);
        }
        log::info!(
            "split repeat {repeat} attempt {attempt} contained a single class; redrawing"
        );
    }
    Err(Error::SplitRedrawExhausted {
        attempts: MAX_SPLIT_REDRAWS,
    })
}

/// Logistic head trained by full-batch gradient descent; deterministic
/// (zero init, fixed iteration order).
pub fn train_logistic(
    features: &[Vec<f64>],
    labels: &[u8],
    hyper: &ProbeHyperparams,
) -> (Vec<f64>, f64) {
    let dim = features.first().map_or(0, Vec::len);
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let n = features.len() as f64;
    for _ in 0..hyper.epochs {
        let mut grad_w = vec![0.0; dim];
        let mut grad_b = 0.0;
        for (x, &y) in features.iter().zip(labels) {
            let z: f64 = w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
            let p = 1.0 / (1.0 + (-z).exp());
            let d = (p - y as f64) / n;
            for (g, xi) in grad_w.iter_mut().zip(x) {
                *g += d * xi;
            }
            grad_b += d;
        }
        for (wi, g) in w.iter_mut().zip(&grad_w) {
            *wi -= hyper.learning_rate * g;
        }
        b -= hyper.learning_rate * grad_b;
    }
    (w, b)
}

fn logistic_scores(features: &[Vec<f64>], w: &[f64], b: f64) -> Vec<f64> {
    features
        .iter()
        .map(|x| w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>() + b)
        .collect()
}

struct EvalData<'a> {
    by_id: BTreeMap<u64, &'a ImageRecord>,
    labels_by_id: BTreeMap<u64, u8>,
    patients_by_id: BTreeMap<u64, u64>,
}

fn eval_data<'a>(records: &'a [ImageRecord], task: usize) -> Result<EvalData<'a>> {
    let mut by_id = BTreeMap::new();
    let mut labels_by_id = BTreeMap::new();
    let mut patients_by_id = BTreeMap::new();
    for record in records {
        if task >= record.labels.len() {
            return Err(Error::config(
                "task",
                format!(
                    "label dimension {task} out of range (labels have {})",
                    record.labels.len()
                ),
            ));
        }
        by_id.insert(record.image_id, record);
        labels_by_id.insert(record.image_id, record.labels[task]);
        patients_by_id.insert(record.image_id, record.patient_id);
    }
    Ok(EvalData {
        by_id,
        labels_by_id,
        patients_by_id,
    })
}

fn aggregate(per_split: Vec<f64>, mode: EvalMode, task: usize, checkpoint_id: String) -> EvalReport {
    let n = per_split.len() as f64;
    let mean = per_split.iter().sum::<f64>() / n;
    let var = if per_split.len() > 1 {
        per_split.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    EvalReport {
        mean_auc: mean,
        std_auc: var.sqrt(),
        per_split_auc: per_split,
        mode,
        task,
        checkpoint_id,
    }
}

/// Linear probe: logistic regression on frozen normalized representations,
/// AUC on the fixed test partition, aggregated over repeated splits.
pub fn linear_probe(
    checkpoint: &Checkpoint,
    records: &[ImageRecord],
    partition: &TestPartition,
    task: usize,
    split: &SplitSpec,
    hyper: &ProbeHyperparams,
    checkpoint_id: &str,
) -> Result<EvalReport> {
    let data = eval_data(records, task)?;
    let arch = &checkpoint.state.arch;
    let params = &checkpoint.state.query_params;

    let pool_records: Vec<&ImageRecord> =
        partition.train_pool.iter().map(|id| data.by_id[id]).collect();
    let test_records: Vec<&ImageRecord> =
        partition.test.iter().map(|id| data.by_id[id]).collect();
    let pool_features = record_features(arch, params, &pool_records)?;
    let feature_by_id: BTreeMap<u64, &Vec<f64>> = partition
        .train_pool
        .iter()
        .copied()
        .zip(pool_features.iter())
        .collect();
    let test_features = record_features(arch, params, &test_records)?;
    let test_labels: Vec<u8> = test_records.iter().map(|r| r.labels[task]).collect();

    let mut per_split = Vec::with_capacity(split.n_repeats);
    for repeat in 0..split.n_repeats {
        let ids = draw_split(
            &partition.train_pool,
            &data.labels_by_id,
            &data.patients_by_id,
            split,
            repeat,
        )?;
        let features: Vec<Vec<f64>> = ids.iter().map(|id| feature_by_id[id].clone()).collect();
        let labels: Vec<u8> = ids.iter().map(|id| data.labels_by_id[id]).collect();
        let (w, b) = train_logistic(&features, &labels, hyper);
        let scores = logistic_scores(&test_features, &w, b);
        per_split.push(auc(&scores, &test_labels)?);
    }
    Ok(aggregate(
        per_split,
        EvalMode::LinearProbe,
        task,
        checkpoint_id.to_string(),
    ))
}

/// End-to-end fine-tuning: the logistic head and every backbone parameter
/// receive gradients. The encoder copy is re-initialized from the checkpoint
/// for each split.
pub fn end_to_end(
    checkpoint: &Checkpoint,
    records: &[ImageRecord],
    partition: &TestPartition,
    task: usize,
    split: &SplitSpec,
    hyper: &ProbeHyperparams,
    checkpoint_id: &str,
) -> Result<EvalReport> {
    let data = eval_data(records, task)?;
    let arch = checkpoint.state.arch.clone();
    let test_records: Vec<&ImageRecord> =
        partition.test.iter().map(|id| data.by_id[id]).collect();
    let test_labels: Vec<u8> = test_records.iter().map(|r| r.labels[task]).collect();

    let mut per_split = Vec::with_capacity(split.n_repeats);
    for repeat in 0..split.n_repeats {
        let ids = draw_split(
            &partition.train_pool,
            &data.labels_by_id,
            &data.patients_by_id,
            split,
            repeat,
        )?;
        let inputs: Vec<&[f64]> = ids
            .iter()
            .map(|id| {
                data.by_id[id]
                    .pixels
                    .as_ref()
                    .ok_or(Error::MissingPixels(*id))
                    .map(|p| p.as_slice())
            })
            .collect::<Result<_>>()?;
        let labels: Vec<u8> = ids.iter().map(|id| data.labels_by_id[id]).collect();

        let mut params = checkpoint.state.query_params.clone();
        let mut w = vec![0.0; arch.repr_dim()];
        let mut b = 0.0;
        let n = inputs.len() as f64;
        for _ in 0..hyper.epochs {
            let mut grad_params = vec![0.0; params.len()];
            let mut grad_w = vec![0.0; w.len()];
            let mut grad_b = 0.0;
            {
                let mlp = Mlp::new(&arch, &params)?;
                for (x, &y) in inputs.iter().zip(&labels) {
                    let cache = mlp.forward_repr_cached(x)?;
                    let phi = normalize(&cache.output);
                    let z: f64 =
                        w.iter().zip(&phi).map(|(wi, xi)| wi * xi).sum::<f64>() + b;
                    let p = 1.0 / (1.0 + (-z).exp());
                    let d = (p - y as f64) / n;
                    for (g, xi) in grad_w.iter_mut().zip(&phi) {
                        *g += d * xi;
                    }
                    grad_b += d;
                    let d_phi: Vec<f64> = w.iter().map(|wi| d * wi).collect();
                    let d_repr = normalize_backward(&cache.output, &phi, &d_phi);
                    mlp.backward_repr(&cache, &d_repr, &mut grad_params);
                }
            }
            for (p, g) in params.iter_mut().zip(&grad_params) {
                *p -= hyper.learning_rate * g;
            }
            for (wi, g) in w.iter_mut().zip(&grad_w) {
                *wi -= hyper.learning_rate * g;
            }
            b -= hyper.learning_rate * grad_b;
        }

        let test_features = record_features(&arch, &params, &test_records)?;
        let scores = logistic_scores(&test_features, &w, b);
        per_split.push(auc(&scores, &test_labels)?);
    }
    Ok(aggregate(
        per_split,
        EvalMode::EndToEnd,
        task,
        checkpoint_id.to_string(),
    ))
}
