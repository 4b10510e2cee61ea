//! Shared config builders for the integration tests.

use std::path::Path;

use pairlab_core::augment::AugmentationSpec;
use pairlab_core::cohort::{CohortConfig, CountDistribution};
use pairlab_core::config::{CohortSource, EvalConfig, PairingSection, RunConfig};
use pairlab_core::engine::{EngineConfig, PairingMode};
use pairlab_core::eval::SplitSpec;
use pairlab_core::pair_index::{EmptySetPolicy, LateralityRule, PairCriteria, StudyRule};

pub fn small_cohort_config(seed: u64) -> CohortConfig {
    CohortConfig {
        n_patients: 30,
        studies_per_patient: CountDistribution::Uniform { lo: 1, hi: 3 },
        images_per_study: CountDistribution::Uniform { lo: 1, hi: 3 },
        p_frontal: 0.6,
        p_label_flip_between_studies: 0.3,
        n_tasks: 1,
        image_size: (8, 8),
        noise_std: 0.1,
        signal_strength: 0.5,
        seed,
    }
}

pub fn small_run_config(out: &Path, seed: u64) -> RunConfig {
    RunConfig {
        seed,
        out_dir: out.to_path_buf(),
        cohort: CohortSource::Generate(small_cohort_config(seed)),
        pairing: PairingSection {
            mode: PairingMode::Metadata {
                criteria: PairCriteria::new(StudyRule::SameStudy, LateralityRule::AllLateralities),
            },
            empty_policy: EmptySetPolicy::FallbackSelf,
        },
        augmentation: AugmentationSpec {
            horizontal_flip_prob: 0.5,
            rotation_range_degrees: (-10.0, 10.0),
            crop_scale_range: Some((0.95, 1.0)),
            output_size: (8, 8),
        },
        engine: EngineConfig {
            hidden: vec![32, 16],
            proj_hidden: 16,
            embed_dim: 8,
            queue_capacity: 32,
            warmup_fill: 0.5,
            epochs: 2,
            batch_size: 8,
            learning_rate: 0.05,
            ..EngineConfig::default()
        },
        eval: EvalConfig {
            split: SplitSpec {
                fraction: 0.15,
                ..SplitSpec::default()
            },
            ..EvalConfig::default()
        },
    }
}
