//! Momentum-contrast training loop.
//!
//! Per step: encode query views with the query encoder (gradients flow only
//! here), encode partner views with the momentum key encoder, build weighted
//! negative terms from the queue per strategy, average InfoNCE gradients over
//! the batch, apply one SGD step, momentum-update the key encoder, then
//! enqueue the batch's key embeddings. Loss steps are skipped (forward-only
//! enqueue) until the queue reaches its warm-up fill.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::augment::{make_positive_pair, AugmentationSpec};
use crate::cohort::{ImageRecord, Laterality};
use crate::error::{Error, Result};
use crate::pair_index::{
    apply_size_control, candidates, sample_positive, CandidateSet, EmptySetPolicy, MetadataIndex,
    PairCriteria,
};
use crate::rng::{lanes, stream};

use super::loss::info_nce_with_grad;
use super::net::{encode, init_params, normalize, normalize_backward, EncoderArch, Mlp};
use super::queue::{NegativeQueue, QueueEntry};
use super::strategy::{negative_terms, NegativeSet, NegativeStrategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    /// Backbone widths; the last is the representation dimension.
    pub hidden: Vec<usize>,
    pub proj_hidden: usize,
    pub embed_dim: usize,
    pub temperature: f64,
    pub momentum: f64,
    pub queue_capacity: usize,
    /// Fraction of the queue that must be filled before loss steps start.
    pub warmup_fill: f64,
    pub strategy: NegativeStrategy,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub checkpoint_every_epochs: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            hidden: vec![256, 128],
            proj_hidden: 128,
            embed_dim: 64,
            temperature: 0.2,
            momentum: 0.999,
            queue_capacity: 1024,
            warmup_fill: 0.5,
            strategy: NegativeStrategy::Default,
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 20,
            checkpoint_every_epochs: 1,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature <= 0.0 {
            return Err(Error::NonPositiveTemperature(self.temperature));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(Error::config("engine.momentum", "must be in [0, 1]"));
        }
        if self.queue_capacity == 0 {
            return Err(Error::config("engine.queue_capacity", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.warmup_fill) {
            return Err(Error::config("engine.warmup_fill", "must be in [0, 1]"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("engine.batch_size", "must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("engine.epochs", "must be >= 1"));
        }
        if self.checkpoint_every_epochs == 0 {
            return Err(Error::config(
                "engine.checkpoint_every_epochs",
                "must be >= 1",
            ));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(Error::config("engine.learning_rate", "must be >= 0"));
        }
        self.strategy.validate()?;
        Ok(())
    }

    pub fn arch(&self, input_dim: usize) -> EncoderArch {
        EncoderArch {
            input_dim,
            hidden: self.hidden.clone(),
            proj_hidden: self.proj_hidden,
            embed_dim: self.embed_dim,
        }
    }
}

/// Query encoder, momentum key encoder, and the scalars governing them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderState {
    pub arch: EncoderArch,
    pub query_params: Vec<f64>,
    pub key_params: Vec<f64>,
    pub momentum: f64,
    pub temperature: f64,
}

impl EncoderState {
    /// Random query parameters; the key encoder starts as an exact copy.
    pub fn init(
        arch: EncoderArch,
        momentum: f64,
        temperature: f64,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<Self> {
        arch.validate()?;
        if temperature <= 0.0 {
            return Err(Error::NonPositiveTemperature(temperature));
        }
        if !(0.0..=1.0).contains(&momentum) {
            return Err(Error::config("momentum", "must be in [0, 1]"));
        }
        let query_params = init_params(&arch, rng);
        let key_params = query_params.clone();
        Ok(EncoderState {
            arch,
            query_params,
            key_params,
            momentum,
            temperature,
        })
    }
}

/// theta_k <- m * theta_k + (1 - m) * theta_q, elementwise.
pub fn momentum_update(key_params: &mut [f64], query_params: &[f64], m: f64) -> Result<()> {
    if key_params.len() != query_params.len() {
        return Err(Error::ShapeMismatch {
            expected: key_params.len(),
            got: query_params.len(),
        });
    }
    for (k, &q) in key_params.iter_mut().zip(query_params) {
        *k = m * *k + (1.0 - m) * q;
    }
    Ok(())
}

/// Plain SGD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub learning_rate: f64,
}

impl Sgd {
    pub fn step(&self, params: &mut [f64], grad: &[f64]) {
        for (p, g) in params.iter_mut().zip(grad) {
            *p -= self.learning_rate * g;
        }
    }
}

/// One positive pair ready for a training step.
#[derive(Debug, Clone)]
pub struct PairSample {
    pub query_view: crate::augment::View,
    pub key_view: crate::augment::View,
    pub query_laterality: Laterality,
    pub key_laterality: Laterality,
    pub key_image_id: u64,
    pub key_patient_id: u64,
    pub query_image_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub mean_negatives: f64,
    pub fallbacks: usize,
}

fn key_entry(state: &EncoderState, sample: &PairSample) -> Result<QueueEntry> {
    let embedding = encode(
        &state.arch,
        &state.key_params,
        sample.key_view.pixels.as_slice(),
    )?;
    Ok(QueueEntry {
        embedding,
        laterality: sample.key_laterality,
        source_image_id: sample.key_image_id,
        source_patient_id: sample.key_patient_id,
    })
}

fn numeric_abort(
    epoch: usize,
    step: usize,
    reason: String,
    batch: &[PairSample],
    losses: &[f64],
) -> Error {
    Error::NumericAbort {
        epoch,
        step,
        reason,
        batch_image_ids: batch.iter().map(|s| s.query_image_id).collect(),
        sample_losses: losses.to_vec(),
    }
}

/// One optimization step over a batch of positive pairs.
///
/// Gradients flow only through the query encoder. Reweighted strategies with
/// a degenerate same-laterality proportion fall back to `Default` with a
/// warning (counted in the stats). Returns the mean batch loss.
pub fn train_step(
    state: &mut EncoderState,
    queue: &mut NegativeQueue,
    batch: &[PairSample],
    strategy: &NegativeStrategy,
    optimizer: &Sgd,
    rng: &mut rand_chacha::ChaCha8Rng,
    epoch: usize,
    step: usize,
) -> Result<StepStats> {
    assert!(!batch.is_empty(), "train_step requires a non-empty batch");
    let mlp = Mlp::new(&state.arch, &state.query_params)?;
    let mut grad = vec![0.0; state.query_params.len()];
    let mut losses = Vec::with_capacity(batch.len());
    let mut key_entries = Vec::with_capacity(batch.len());
    let mut negatives_total = 0usize;
    let mut fallbacks = 0usize;

    for sample in batch {
        let cache = mlp.forward_cached(sample.query_view.pixels.as_slice())?;
        let q = normalize(&cache.output);
        let key = key_entry(state, sample)?;
        let negs: NegativeSet = match negative_terms(queue, sample.query_laterality, strategy, rng)
        {
            Ok(set) => set,
            Err(Error::DegenerateProportion { same, total }) => {
                log::warn!(
                    "reweighted strategy degenerate ({same}/{total} same-laterality); \
                     falling back to default weights"
                );
                fallbacks += 1;
                negative_terms(queue, sample.query_laterality, &NegativeStrategy::Default, rng)?
            }
            Err(e) => return Err(e),
        };
        fallbacks += usize::from(negs.fell_back);
        negatives_total += negs.terms.len();

        let (loss, d_q) = info_nce_with_grad(&q, &key.embedding, &negs.terms, state.temperature)?;
        if !loss.is_finite() {
            return Err(numeric_abort(
                epoch,
                step,
                format!("non-finite loss {loss}"),
                batch,
                &losses,
            ));
        }
        losses.push(loss);
        let d_y = normalize_backward(&cache.output, &q, &d_q);
        mlp.backward(&cache, &d_y, &mut grad);
        key_entries.push(key);
    }

    let scale = 1.0 / batch.len() as f64;
    for g in &mut grad {
        *g *= scale;
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(numeric_abort(
            epoch,
            step,
            "non-finite gradient".to_string(),
            batch,
            &losses,
        ));
    }

    optimizer.step(&mut state.query_params, &grad);
    let momentum = state.momentum;
    momentum_update(&mut state.key_params, &state.query_params, momentum)?;
    queue.enqueue(key_entries)?;

    Ok(StepStats {
        loss: losses.iter().sum::<f64>() * scale,
        mean_negatives: negatives_total as f64 / batch.len() as f64,
        fallbacks,
    })
}

/// How positive partners are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum PairingMode {
    /// Both views always come from the query image itself.
    InstanceDiscrimination,
    /// Partners drawn from the metadata candidate set.
    Metadata { criteria: PairCriteria },
}

/// Everything `pretrain` needs besides the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainSetup {
    pub pairing: PairingMode,
    pub empty_policy: EmptySetPolicy,
    pub augmentation: AugmentationSpec,
    pub engine: EngineConfig,
    pub seed: u64,
    /// Recorded into checkpoints; empty outside configured runs.
    #[serde(default)]
    pub config_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub queue_fill: usize,
    pub mean_negatives: f64,
    pub fallbacks: usize,
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned snapshot of the full training state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub epoch: usize,
    pub step: usize,
    pub state: EncoderState,
    pub queue: NegativeQueue,
    pub strategy: NegativeStrategy,
}

#[derive(Debug, Clone)]
pub struct PretrainOutput {
    pub final_checkpoint: Checkpoint,
    /// One checkpoint per cadence epoch (the last one equals the final).
    pub checkpoints: Vec<Checkpoint>,
    pub log: Vec<TrainLogRow>,
}

/// Fixed per-run candidate sets, with size control pre-selected once.
fn materialize_candidates(
    index: &MetadataIndex,
    pairing: &PairingMode,
    seed: u64,
) -> Result<BTreeMap<u64, CandidateSet>> {
    let mut map = BTreeMap::new();
    for query_id in index.image_ids() {
        let set = match pairing {
            PairingMode::InstanceDiscrimination => CandidateSet {
                query_id,
                members: vec![query_id],
            },
            PairingMode::Metadata { criteria } => {
                let base = candidates(index, query_id, criteria)?;
                match &criteria.size_control_reference {
                    Some(reference) => {
                        let reference_set = candidates(index, query_id, reference)?;
                        let mut rng = stream(seed, &[lanes::SIZE_CONTROL, query_id]);
                        apply_size_control(&base, &reference_set, &mut rng)
                    }
                    None => base,
                }
            }
        };
        map.insert(query_id, set);
    }
    Ok(map)
}

/// Full deterministic pretraining run over a cohort.
pub fn pretrain(records: &[ImageRecord], setup: &PretrainSetup) -> Result<PretrainOutput> {
    setup.engine.validate()?;
    setup.augmentation.validate()?;
    if let PairingMode::Metadata { criteria } = &setup.pairing {
        criteria.validate()?;
    }
    if records.is_empty() {
        return Err(Error::config("cohort", "no records to pretrain on"));
    }
    let by_id: BTreeMap<u64, &ImageRecord> =
        records.iter().map(|r| (r.image_id, r)).collect();
    for record in records {
        if record.pixels.is_none() {
            return Err(Error::MissingPixels(record.image_id));
        }
    }
    let index = MetadataIndex::build(records)?;
    let candidate_map = materialize_candidates(&index, &setup.pairing, setup.seed)?;

    let eligible: Vec<u64> = match setup.empty_policy {
        EmptySetPolicy::FallbackSelf => candidate_map.keys().copied().collect(),
        EmptySetPolicy::Skip => candidate_map
            .iter()
            .filter(|(_, set)| !set.members.is_empty())
            .map(|(&id, _)| id)
            .collect(),
    };
    if eligible.is_empty() {
        return Err(Error::config(
            "pairing",
            "no eligible queries (every candidate set is empty under the skip policy)",
        ));
    }

    let (out_h, out_w) = setup.augmentation.output_size;
    let arch = setup.engine.arch(out_h * out_w);
    let mut state = EncoderState::init(
        arch,
        setup.engine.momentum,
        setup.engine.temperature,
        &mut stream(setup.seed, &[lanes::INIT]),
    )?;
    let mut queue = NegativeQueue::new(setup.engine.queue_capacity);
    let warm_len =
        ((setup.engine.queue_capacity as f64) * setup.engine.warmup_fill).ceil() as usize;
    let optimizer = Sgd {
        learning_rate: setup.engine.learning_rate,
    };

    let mut log = Vec::new();
    let mut checkpoints = Vec::new();
    let mut step = 0usize;

    for epoch in 0..setup.engine.epochs {
        let mut order = eligible.clone();
        use rand::seq::SliceRandom;
        order.shuffle(&mut stream(setup.seed, &[lanes::ORDER, epoch as u64]));

        for chunk in order.chunks(setup.engine.batch_size) {
            let mut batch = Vec::with_capacity(chunk.len());
            for &query_id in chunk {
                let set = &candidate_map[&query_id];
                let mut pos_rng = stream(setup.seed, &[lanes::POSITIVE, epoch as u64, query_id]);
                let partner_id =
                    match sample_positive(set, query_id, setup.empty_policy, &mut pos_rng) {
                        Some(id) => id,
                        None => continue, // skip policy with an empty set
                    };
                let query = by_id[&query_id];
                let partner = by_id[&partner_id];
                let mut aug_rng = stream(setup.seed, &[lanes::AUGMENT, epoch as u64, query_id]);
                let (query_view, key_view) =
                    make_positive_pair(query, partner, &setup.augmentation, &mut aug_rng)?;
                batch.push(PairSample {
                    query_view,
                    key_view,
                    query_laterality: query.laterality,
                    key_laterality: partner.laterality,
                    key_image_id: partner.image_id,
                    key_patient_id: partner.patient_id,
                    query_image_id: query_id,
                });
            }
            if batch.is_empty() {
                continue;
            }
            if queue.len() < warm_len {
                // forward-only enqueue until the queue is warm
                let mut entries = Vec::with_capacity(batch.len());
                for sample in &batch {
                    entries.push(key_entry(&state, sample)?);
                }
                queue.enqueue(entries)?;
                continue;
            }
            let mut neg_rng = stream(setup.seed, &[lanes::NEGATIVES, epoch as u64, step as u64]);
            let stats = train_step(
                &mut state,
                &mut queue,
                &batch,
                &setup.engine.strategy,
                &optimizer,
                &mut neg_rng,
                epoch,
                step,
            )?;
            log.push(TrainLogRow {
                step,
                epoch,
                loss: stats.loss,
                queue_fill: queue.len(),
                mean_negatives: stats.mean_negatives,
                fallbacks: stats.fallbacks,
            });
            step += 1;
        }

        let last_epoch = epoch + 1 == setup.engine.epochs;
        if (epoch + 1) % setup.engine.checkpoint_every_epochs == 0 || last_epoch {
            checkpoints.push(Checkpoint {
                version: CHECKPOINT_VERSION,
                config_hash: setup.config_hash.clone(),
                seed: setup.seed,
                epoch,
                step,
                state: state.clone(),
                queue: queue.clone(),
                strategy: setup.engine.strategy,
            });
        }
    }

    let final_checkpoint = checkpoints
        .last()
        .cloned()
        .expect("at least one checkpoint is always emitted");
    Ok(PretrainOutput {
        final_checkpoint,
        checkpoints,
        log,
    })
}
