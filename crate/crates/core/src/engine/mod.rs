//! MoCo-style contrastive training core.
//!
//! A small feed-forward backbone plus a 2-layer projection head, a momentum
//! copy producing keys, a FIFO queue of tagged key embeddings, InfoNCE with
//! weighted negative terms, the laterality-based negative strategies, and a
//! deterministic single-threaded training loop.

mod loss;
mod net;
mod queue;
mod strategy;
mod trainer;

pub use loss::{info_nce, info_nce_with_grad};
pub use net::{
    encode, init_params, l2_norm, normalize, normalize_backward, representation, EncoderArch,
    ForwardCache, Mlp,
};
pub use queue::{NegativeQueue, QueueEntry};
pub use strategy::{negative_terms, synth_combine, NegativeSet, NegativeStrategy};
pub use trainer::{
    momentum_update, pretrain, train_step, Checkpoint, EncoderState, EngineConfig, PairSample,
    PairingMode, PretrainOutput, PretrainSetup, Sgd, StepStats, TrainLogRow, CHECKPOINT_VERSION,
};
