//! Run configuration: a single TOML file with dotted-path overrides.
//!
//! The canonical serialization (JSON) is hashed to identify a run; rerunning
//! from the saved config file reproduces every artifact bitwise.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::AugmentationSpec;
use crate::cohort::{CohortConfig, CsvSchema};
use crate::engine::{EngineConfig, PairingMode};
use crate::error::{Error, Result};
use crate::eval::{EvalMode, ProbeHyperparams, SplitSpec};
use crate::pair_index::EmptySetPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum CohortSource {
    /// Generate a synthetic cohort in-process.
    Generate(CohortConfig),
    /// Ingest an existing metadata CSV (plus optional pixel blob).
    Csv {
        csv_path: PathBuf,
        #[serde(default)]
        blob_path: Option<PathBuf>,
        #[serde(default)]
        schema: CsvSchema,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingSection {
    #[serde(flatten)]
    pub mode: PairingMode,
    #[serde(default)]
    pub empty_policy: EmptySetPolicy,
}

impl PairingSection {
    /// Compact descriptor used in result tables.
    pub fn describe(&self) -> String {
        match &self.mode {
            PairingMode::InstanceDiscrimination => "instance-discrimination".to_string(),
            PairingMode::Metadata { criteria } => criteria.to_string(),
        }
    }
}

fn default_modes() -> Vec<EvalMode> {
    vec![EvalMode::LinearProbe, EvalMode::EndToEnd]
}

fn default_knn_k() -> usize {
    20
}

fn default_test_fraction() -> f64 {
    0.25
}

fn default_conflict_bins() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub split: SplitSpec,
    pub modes: Vec<EvalMode>,
    /// Downstream label dimension.
    pub task: usize,
    pub knn_k: usize,
    pub test_patient_fraction: f64,
    pub probe: ProbeHyperparams,
    pub conflict_bins: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            split: SplitSpec::default(),
            modes: default_modes(),
            task: 0,
            knn_k: default_knn_k(),
            test_patient_fraction: default_test_fraction(),
            probe: ProbeHyperparams::default(),
            conflict_bins: default_conflict_bins(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub cohort: CohortSource,
    pub pairing: PairingSection,
    pub augmentation: AugmentationSpec,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if let CohortSource::Generate(config) = &self.cohort {
            config.validate()?;
            let (h, w) = config.image_size;
            if self.augmentation.output_size != (h, w) {
                return Err(Error::config(
                    "augmentation.output_size",
                    "must equal cohort.image_size (probes embed raw images)",
                ));
            }
        }
        self.augmentation.validate()?;
        self.engine.validate()?;
        self.eval.split.validate()?;
        if let PairingMode::Metadata { criteria } = &self.pairing.mode {
            criteria.validate()?;
        }
        if self.eval.modes.is_empty() {
            return Err(Error::config("eval.modes", "need at least one mode"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical (JSON) serialization.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            use std::fmt::Write;
            write!(hex, "{byte:02x}").expect("writing to string");
        }
        hex
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Loads a config applying `--set key.path=value` overrides and optional
    /// seed / output-directory replacements.
    pub fn load_with_overrides(
        path: &Path,
        sets: &[String],
        seed: Option<u64>,
        out_dir: Option<&Path>,
    ) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table: toml::Table =
            toml::from_str(&text).map_err(|e| Error::config("config", e.to_string()))?;
        for set in sets {
            apply_set(&mut table, set)?;
        }
        let patched =
            toml::to_string(&table).map_err(|e| Error::config("config", e.to_string()))?;
        let mut config = Self::from_toml_str(&patched)?;
        if let Some(seed) = seed {
            config.seed = seed;
        }
        if let Some(out) = out_dir {
            config.out_dir = out.to_path_buf();
        }
        config.validate()?;
        Ok(config)
    }
}

/// Applies one `key.path=value` override, creating intermediate tables.
fn apply_set(table: &mut toml::Table, set: &str) -> Result<()> {
    let (path, raw) = set.split_once('=').ok_or_else(|| {
        Error::config("--set", format!("expected key.path=value, got {set:?}"))
    })?;
    let segments: Vec<&str> = path.split('.').collect();
    if segments.is_empty() || segments.iter().any(|s| s.is_empty()) {
        return Err(Error::config("--set", format!("bad key path {path:?}")));
    }
    // parse the value as a TOML fragment; fall back to a bare string
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("fragment contains v"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut current = table;
    for segment in &segments[..segments.len() - 1] {
        current = current
            .entry(segment.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                Error::config("--set", format!("{segment} is not a table in {path:?}"))
            })?;
    }
    current.insert(segments[segments.len() - 1].to_string(), value);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSpec {
    pub name: String,
    /// Replaces the base pairing section when present.
    #[serde(default)]
    pub pairing: Option<PairingSection>,
    /// Replaces the base negative strategy when present.
    #[serde(default)]
    pub strategy: Option<crate::engine::NegativeStrategy>,
}

/// A controlled comparison: one base config, shared seeds, arms that differ
/// only in pairing criteria and/or negative strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub seeds: Vec<u64>,
    pub base: RunConfig,
    pub arms: Vec<ArmSpec>,
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        if self.arms.is_empty() {
            return Err(Error::config("arms", "need at least one arm"));
        }
        self.base.validate()?;
        let mut names = std::collections::BTreeSet::new();
        for arm in &self.arms {
            if arm.name.is_empty() || arm.name.contains(['/', ' ']) {
                return Err(Error::config(
                    "arms.name",
                    format!("{:?} must be a nonempty token without '/' or spaces", arm.name),
                ));
            }
            if !names.insert(&arm.name) {
                return Err(Error::config(
                    "arms.name",
                    format!("duplicate arm name {:?}", arm.name),
                ));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: BenchmarkConfig =
            toml::from_str(&text).map_err(|e| Error::config("config", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("config", e.to_string()))
    }
}
