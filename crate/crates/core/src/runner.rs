//! The experiment commands behind the CLI subcommands.
//!
//! Every command writes the exact `RunConfig` it ran with into the output
//! directory; rerunning from that file reproduces all artifacts bitwise.
//! Nothing here writes wall-clock times or other nondeterministic content
//! into artifacts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cohort::{generate, ingest_csv_with_pixels, write_cohort_csv, write_pixel_blob, ImageRecord};
use crate::config::{ArmSpec, BenchmarkConfig, CohortSource, RunConfig};
use crate::engine::{pretrain, Checkpoint, PairingMode, PretrainOutput, PretrainSetup};
use crate::error::{Error, Result};
use crate::eval::{
    end_to_end, knn_select, linear_probe, partition_by_patient, EvalMode, EvalReport, SplitSpec,
    TestPartition,
};
use crate::pair_index::{conflict_stats, ConflictStats, MetadataIndex};

/// File layout of one run directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunPaths { root: root.into() }
    }

    pub fn config_file(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn cohort_csv(&self) -> PathBuf {
        self.root.join("cohort.csv")
    }

    pub fn cohort_blob(&self) -> PathBuf {
        self.root.join("cohort_pixels.bin")
    }

    pub fn checkpoints_dir(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn checkpoint_epoch(&self, epoch: usize) -> PathBuf {
        self.checkpoints_dir()
            .join(format!("checkpoint_epoch{epoch:04}.json"))
    }

    pub fn checkpoint_final(&self) -> PathBuf {
        self.checkpoints_dir().join("checkpoint_final.json")
    }

    pub fn train_log(&self) -> PathBuf {
        self.root.join("train_log.csv")
    }

    pub fn abort_dump(&self) -> PathBuf {
        self.root.join("abort_dump.json")
    }

    pub fn eval_report(&self, mode: EvalMode) -> PathBuf {
        self.root.join(format!("eval_report_{}.json", mode.name()))
    }

    pub fn knn_selection(&self) -> PathBuf {
        self.root.join("knn_selection.json")
    }

    pub fn results_csv(&self) -> PathBuf {
        self.root.join("results.csv")
    }

    pub fn pairs_csv(&self) -> PathBuf {
        self.root.join("pairs.csv")
    }

    pub fn conflict_histogram(&self) -> PathBuf {
        self.root.join("conflict_histogram.json")
    }

    pub fn benchmark_runs_csv(&self) -> PathBuf {
        self.root.join("benchmark_runs.csv")
    }

    pub fn benchmark_table_csv(&self) -> PathBuf {
        self.root.join("benchmark_table.csv")
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    write_text(path, &json)
}

fn write_run_config(paths: &RunPaths, config: &RunConfig) -> Result<()> {
    ensure_dir(&paths.root)?;
    write_text(&paths.config_file(), &config.to_toml_string()?)
}

/// Resolves the cohort source into records.
pub fn load_cohort(config: &RunConfig) -> Result<Vec<ImageRecord>> {
    match &config.cohort {
        CohortSource::Generate(cohort_config) => generate(cohort_config),
        CohortSource::Csv {
            csv_path,
            blob_path,
            schema,
        } => ingest_csv_with_pixels(csv_path, blob_path.as_deref(), schema),
    }
}

/// Split-seed resolution: split streams mix the run seed so that arms sharing
/// a run seed share splits while distinct run seeds get distinct splits.
fn resolved_split(config: &RunConfig) -> SplitSpec {
    SplitSpec {
        seed: config.seed.wrapping_add(config.eval.split.seed),
        ..config.eval.split
    }
}

fn partition(config: &RunConfig, records: &[ImageRecord]) -> Result<TestPartition> {
    partition_by_patient(records, config.eval.test_patient_fraction, config.seed)
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerateSummary {
    pub n_records: usize,
    pub csv_path: PathBuf,
    pub blob_path: PathBuf,
}

/// `generate`: materialize the configured synthetic cohort to disk.
pub fn cmd_generate(config: &RunConfig) -> Result<GenerateSummary> {
    config.validate()?;
    let CohortSource::Generate(cohort_config) = &config.cohort else {
        return Err(Error::config(
            "cohort.source",
            "generate requires a generated cohort source",
        ));
    };
    let records = generate(cohort_config)?;
    let paths = RunPaths::new(&config.out_dir);
    write_run_config(&paths, config)?;
    write_cohort_csv(&records, &paths.cohort_csv())?;
    write_pixel_blob(&records, &paths.cohort_blob())?;
    Ok(GenerateSummary {
        n_records: records.len(),
        csv_path: paths.cohort_csv(),
        blob_path: paths.cohort_blob(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PretrainSummary {
    pub steps: usize,
    pub final_loss: Option<f64>,
    pub checkpoints: Vec<PathBuf>,
}

fn train_records(config: &RunConfig) -> Result<(Vec<ImageRecord>, TestPartition)> {
    let records = load_cohort(config)?;
    let partition = partition(config, &records)?;
    let train_set: std::collections::BTreeSet<u64> =
        partition.train_pool.iter().copied().collect();
    let train: Vec<ImageRecord> = records
        .iter()
        .filter(|r| train_set.contains(&r.image_id))
        .cloned()
        .collect();
    Ok((train, partition))
}

/// `pretrain`: momentum-contrast pretraining on the train pool (the test
/// partition's patients are excluded), with periodic checkpoints and a step
/// log. A numeric abort writes a diagnostic dump before returning the error.
pub fn cmd_pretrain(config: &RunConfig) -> Result<PretrainSummary> {
    config.validate()?;
    let paths = RunPaths::new(&config.out_dir);
    write_run_config(&paths, config)?;
    let (train, _) = train_records(config)?;
    let setup = PretrainSetup {
        pairing: config.pairing.mode.clone(),
        empty_policy: config.pairing.empty_policy,
        augmentation: config.augmentation.clone(),
        engine: config.engine.clone(),
        seed: config.seed,
        config_hash: config.config_hash(),
    };
    let output = match pretrain(&train, &setup) {
        Ok(output) => output,
        Err(abort @ Error::NumericAbort { .. }) => {
            #[derive(Serialize)]
            struct AbortDump {
                epoch: usize,
                step: usize,
                reason: String,
                batch_image_ids: Vec<u64>,
                sample_losses: Vec<f64>,
            }
            if let Error::NumericAbort {
                epoch,
                step,
                reason,
                batch_image_ids,
                sample_losses,
            } = &abort
            {
                let dump = AbortDump {
                    epoch: *epoch,
                    step: *step,
                    reason: reason.clone(),
                    batch_image_ids: batch_image_ids.clone(),
                    sample_losses: sample_losses.clone(),
                };
                write_json(&paths.abort_dump(), &dump)?;
            }
            return Err(abort);
        }
        Err(e) => return Err(e),
    };
    write_pretrain_artifacts(&paths, &output)
}

fn write_pretrain_artifacts(paths: &RunPaths, output: &PretrainOutput) -> Result<PretrainSummary> {
    ensure_dir(&paths.checkpoints_dir())?;
    let mut files = Vec::new();
    for checkpoint in &output.checkpoints {
        let file = paths.checkpoint_epoch(checkpoint.epoch);
        write_json(&file, checkpoint)?;
        files.push(file);
    }
    write_json(&paths.checkpoint_final(), &output.final_checkpoint)?;
    files.push(paths.checkpoint_final());

    let log_path = paths.train_log();
    let file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(&log_path, e);
    writeln!(out, "step,epoch,loss,queue_fill,mean_negatives,fallbacks").map_err(io_err)?;
    for row in &output.log {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.step, row.epoch, row.loss, row.queue_fill, row.mean_negatives, row.fallbacks
        )
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;

    Ok(PretrainSummary {
        steps: output.log.len(),
        final_loss: output.log.last().map(|r| r.loss),
        checkpoints: files,
    })
}

/// Loads the epoch checkpoints of a run directory, ascending by epoch.
pub fn load_checkpoints(run_dir: &Path) -> Result<Vec<(String, Checkpoint)>> {
    let dir = RunPaths::new(run_dir).checkpoints_dir();
    let mut names: Vec<String> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|entry| entry.ok())
        .map(|entry| entry.file_name().to_string_lossy().into_owned())
        .filter(|name| name.starts_with("checkpoint_epoch") && name.ends_with(".json"))
        .collect();
    names.sort();
    let mut checkpoints = Vec::with_capacity(names.len());
    for name in names {
        let path = dir.join(&name);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let checkpoint: Checkpoint = serde_json::from_str(&text)?;
        let id = name.trim_end_matches(".json").to_string();
        checkpoints.push((id, checkpoint));
    }
    if checkpoints.is_empty() {
        return Err(Error::config(
            "checkpoints",
            format!("no epoch checkpoints under {}", dir.display()),
        ));
    }
    Ok(checkpoints)
}

#[derive(Debug, Clone, Serialize)]
pub struct KnnSelection {
    pub checkpoint_ids: Vec<String>,
    pub accuracies: Vec<f64>,
    pub selected: String,
}

/// `evaluate`: kNN checkpoint selection on the train pool, then the
/// configured probe modes on the selected checkpoint. Appends one row per
/// mode to the run's results CSV.
pub fn cmd_evaluate(config: &RunConfig, run_dir: Option<&Path>) -> Result<Vec<EvalReport>> {
    config.validate()?;
    let paths = RunPaths::new(&config.out_dir);
    write_run_config(&paths, config)?;
    let records = load_cohort(config)?;
    let partition = partition(config, &records)?;
    let split = resolved_split(config);

    let run_dir = run_dir.unwrap_or(&config.out_dir);
    let checkpoints = load_checkpoints(run_dir)?;

    let by_id: std::collections::BTreeMap<u64, &ImageRecord> =
        records.iter().map(|r| (r.image_id, r)).collect();
    let probe_set: Vec<&ImageRecord> = partition
        .train_pool
        .iter()
        .map(|id| by_id[id])
        .collect();
    let checkpoint_refs: Vec<Checkpoint> =
        checkpoints.iter().map(|(_, c)| c.clone()).collect();
    let (best, accuracies) = knn_select(
        &checkpoint_refs,
        &probe_set,
        config.eval.task,
        config.eval.knn_k,
    )?;
    let selection = KnnSelection {
        checkpoint_ids: checkpoints.iter().map(|(id, _)| id.clone()).collect(),
        accuracies,
        selected: checkpoints[best].0.clone(),
    };
    write_json(&paths.knn_selection(), &selection)?;

    let (checkpoint_id, checkpoint) = &checkpoints[best];
    let mut reports = Vec::new();
    for mode in &config.eval.modes {
        let report = match mode {
            EvalMode::LinearProbe => linear_probe(
                checkpoint,
                &records,
                &partition,
                config.eval.task,
                &split,
                &config.eval.probe,
                checkpoint_id,
            )?,
            EvalMode::EndToEnd => end_to_end(
                checkpoint,
                &records,
                &partition,
                config.eval.task,
                &split,
                &config.eval.probe,
                checkpoint_id,
            )?,
        };
        write_json(&paths.eval_report(*mode), &report)?;
        reports.push(report);
    }
    write_results_csv(&paths, config, &reports)?;
    Ok(reports)
}

fn write_results_csv(paths: &RunPaths, config: &RunConfig, reports: &[EvalReport]) -> Result<()> {
    let path = paths.results_csv();
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(&path, e);
    writeln!(out, "strategy,criteria,mode,task,mean_auc,std_auc,seed").map_err(io_err)?;
    for report in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            config.engine.strategy.name(),
            config.pairing.describe(),
            report.mode.name(),
            report.task,
            report.mean_auc,
            report.std_auc,
            config.seed
        )
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConflictSummary {
    pub criteria: String,
    pub task: usize,
    pub n_queries: usize,
    pub n_empty_sets: usize,
    pub mass_at_one: f64,
    pub histogram: Vec<crate::pair_index::HistogramBin>,
}

/// `analyze-pairs`: conflict statistics of the configured criteria over the
/// full cohort; CSV of per-query rows plus a JSON histogram summary.
pub fn cmd_analyze_pairs(config: &RunConfig) -> Result<ConflictStats> {
    config.validate()?;
    let PairingMode::Metadata { criteria } = &config.pairing.mode else {
        return Err(Error::config(
            "pairing.mode",
            "analyze-pairs requires metadata pairing criteria",
        ));
    };
    let records = load_cohort(config)?;
    let index = MetadataIndex::build(&records)?;
    let stats = conflict_stats(&index, criteria, config.eval.task, config.eval.conflict_bins)?;

    let paths = RunPaths::new(&config.out_dir);
    write_run_config(&paths, config)?;
    let csv_path = paths.pairs_csv();
    let file = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(&csv_path, e);
    writeln!(out, "query_id,criteria,set_size,conflict_proportion").map_err(io_err)?;
    let criteria_text = criteria.to_string();
    for entry in &stats.entries {
        writeln!(
            out,
            "{},{},{},{}",
            entry.query_id, criteria_text, entry.set_size, entry.conflict_proportion
        )
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;

    let summary = ConflictSummary {
        criteria: criteria_text,
        task: stats.task,
        n_queries: stats.n_queries,
        n_empty_sets: stats.n_empty_sets,
        mass_at_one: stats.mass_at_one,
        histogram: stats.histogram.clone(),
    };
    write_json(&paths.conflict_histogram(), &summary)?;
    Ok(stats)
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkRun {
    pub arm: String,
    pub seed: u64,
    pub criteria: String,
    pub strategy: String,
    pub linear: Option<EvalReport>,
    pub end_to_end: Option<EvalReport>,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkArmSummary {
    pub arm: String,
    pub criteria: String,
    pub strategy: String,
    pub n_seeds: usize,
    pub linear_mean: Option<f64>,
    pub linear_std: Option<f64>,
    pub end_to_end_mean: Option<f64>,
    pub end_to_end_std: Option<f64>,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkTable {
    pub runs: Vec<BenchmarkRun>,
    pub arms: Vec<BenchmarkArmSummary>,
}

/// Builds the per-arm config: base, with seed, cohort source, output
/// directory, and the arm's pairing/strategy replacements applied.
pub fn arm_config(
    base: &RunConfig,
    arm: &ArmSpec,
    seed: u64,
    cohort: CohortSource,
    out_dir: PathBuf,
) -> RunConfig {
    let mut config = base.clone();
    config.seed = seed;
    config.cohort = cohort;
    config.out_dir = out_dir;
    if let Some(pairing) = &arm.pairing {
        config.pairing = pairing.clone();
    }
    if let Some(strategy) = &arm.strategy {
        config.engine.strategy = *strategy;
    }
    config
}

fn pooled_stats(reports: &[&EvalReport]) -> (Option<f64>, Option<f64>) {
    let values: Vec<f64> = reports
        .iter()
        .flat_map(|r| r.per_split_auc.iter().copied())
        .collect();
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(std))
}

/// `benchmark`: pretrain + evaluate every (arm, seed) pair with shared
/// cohorts and splits per seed; emits per-run and per-arm tables. A failed
/// arm is marked in the table without aborting the others.
pub fn cmd_benchmark(bench: &BenchmarkConfig, out_dir: &Path) -> Result<BenchmarkTable> {
    bench.validate()?;
    let root = RunPaths::new(out_dir);
    ensure_dir(&root.root)?;
    write_text(&root.root.join("benchmark.toml"), &bench.to_toml_string()?)?;

    let mut runs = Vec::new();
    for &seed in &bench.seeds {
        // one shared cohort per seed
        let seed_dir = root.root.join(format!("seed{seed}"));
        let cohort_dir = seed_dir.join("cohort");
        let mut gen_config = bench.base.clone();
        gen_config.seed = seed;
        if let CohortSource::Generate(cohort_config) = &mut gen_config.cohort {
            cohort_config.seed = seed;
        }
        gen_config.out_dir = cohort_dir.clone();
        cmd_generate(&gen_config)?;
        let shared_cohort = CohortSource::Csv {
            csv_path: RunPaths::new(&cohort_dir).cohort_csv(),
            blob_path: Some(RunPaths::new(&cohort_dir).cohort_blob()),
            schema: Default::default(),
        };

        for arm in &bench.arms {
            let arm_out = seed_dir.join(&arm.name);
            let config = arm_config(&bench.base, arm, seed, shared_cohort.clone(), arm_out);
            let outcome = cmd_pretrain(&config).and_then(|_| cmd_evaluate(&config, None));
            let mut run = BenchmarkRun {
                arm: arm.name.clone(),
                seed,
                criteria: config.pairing.describe(),
                strategy: config.engine.strategy.name().to_string(),
                linear: None,
                end_to_end: None,
                status: "ok".to_string(),
            };
            match outcome {
                Ok(reports) => {
                    for report in reports {
                        match report.mode {
                            EvalMode::LinearProbe => run.linear = Some(report),
                            EvalMode::EndToEnd => run.end_to_end = Some(report),
                        }
                    }
                }
                Err(e) => {
                    log::warn!("arm {} seed {seed} failed: {e}", arm.name);
                    run.status = format!("failed: {e}");
                }
            }
            runs.push(run);
        }
    }

    let mut arms = Vec::new();
    for arm in &bench.arms {
        let arm_runs: Vec<&BenchmarkRun> = runs.iter().filter(|r| r.arm == arm.name).collect();
        let ok_runs: Vec<&BenchmarkRun> =
            arm_runs.iter().copied().filter(|r| r.status == "ok").collect();
        let linear: Vec<&EvalReport> = ok_runs.iter().filter_map(|r| r.linear.as_ref()).collect();
        let e2e: Vec<&EvalReport> =
            ok_runs.iter().filter_map(|r| r.end_to_end.as_ref()).collect();
        let (linear_mean, linear_std) = pooled_stats(&linear);
        let (e2e_mean, e2e_std) = pooled_stats(&e2e);
        let status = if ok_runs.len() == arm_runs.len() {
            "ok".to_string()
        } else {
            format!("{}/{} runs failed", arm_runs.len() - ok_runs.len(), arm_runs.len())
        };
        arms.push(BenchmarkArmSummary {
            arm: arm.name.clone(),
            criteria: arm_runs
                .first()
                .map(|r| r.criteria.clone())
                .unwrap_or_default(),
            strategy: arm_runs
                .first()
                .map(|r| r.strategy.clone())
                .unwrap_or_default(),
            n_seeds: bench.seeds.len(),
            linear_mean,
            linear_std,
            end_to_end_mean: e2e_mean,
            end_to_end_std: e2e_std,
            status,
        });
    }

    let table = BenchmarkTable { runs, arms };
    write_benchmark_csvs(&root, &table)?;
    Ok(table)
}

fn format_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn write_benchmark_csvs(root: &RunPaths, table: &BenchmarkTable) -> Result<()> {
    let runs_path = root.benchmark_runs_csv();
    let file = fs::File::create(&runs_path).map_err(|e| Error::io(&runs_path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(&runs_path, e);
    writeln!(
        out,
        "arm,seed,criteria,strategy,linear_mean,linear_std,end_to_end_mean,end_to_end_std,status"
    )
    .map_err(io_err)?;
    for run in &table.runs {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            run.arm,
            run.seed,
            run.criteria,
            run.strategy,
            format_opt(run.linear.as_ref().map(|r| r.mean_auc)),
            format_opt(run.linear.as_ref().map(|r| r.std_auc)),
            format_opt(run.end_to_end.as_ref().map(|r| r.mean_auc)),
            format_opt(run.end_to_end.as_ref().map(|r| r.std_auc)),
            run.status
        )
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;

    let table_path = root.benchmark_table_csv();
    let file = fs::File::create(&table_path).map_err(|e| Error::io(&table_path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(&table_path, e);
    writeln!(
        out,
        "arm,criteria,strategy,n_seeds,linear_mean,linear_std,end_to_end_mean,end_to_end_std,status"
    )
    .map_err(io_err)?;
    for arm in &table.arms {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            arm.arm,
            arm.criteria,
            arm.strategy,
            arm.n_seeds,
            format_opt(arm.linear_mean),
            format_opt(arm.linear_std),
            format_opt(arm.end_to_end_mean),
            format_opt(arm.end_to_end_std),
            arm.status
        )
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Base run config of the default synthetic benchmark: roughly 200 patients
/// with 1-3 studies of 1-3 images each, label flips between studies, and a
/// desk-scale encoder. Preset files and the acceptance suite both build on
/// this.
pub fn default_benchmark_base(out_dir: &Path) -> RunConfig {
    use crate::augment::AugmentationSpec;
    use crate::cohort::{CohortConfig, CountDistribution};
    use crate::config::{EvalConfig, PairingSection};
    use crate::engine::EngineConfig;
    use crate::eval::{ProbeHyperparams, SplitUnit};

    RunConfig {
        seed: 1,
        out_dir: out_dir.to_path_buf(),
        cohort: CohortSource::Generate(CohortConfig {
            n_patients: 200,
            studies_per_patient: CountDistribution::Uniform { lo: 1, hi: 3 },
            images_per_study: CountDistribution::Uniform { lo: 1, hi: 3 },
            p_frontal: 0.6,
            p_label_flip_between_studies: 0.3,
            n_tasks: 1,
            image_size: (16, 16),
            noise_std: 0.1,
            signal_strength: 0.5,
            seed: 1,
        }),
        pairing: metadata_pairing(
            crate::pair_index::StudyRule::SameStudy,
            crate::pair_index::LateralityRule::AllLateralities,
        ),
        augmentation: AugmentationSpec {
            horizontal_flip_prob: 0.5,
            rotation_range_degrees: (-10.0, 10.0),
            crop_scale_range: Some((0.95, 1.0)),
            output_size: (16, 16),
        },
        engine: EngineConfig {
            hidden: vec![128, 64],
            proj_hidden: 64,
            embed_dim: 32,
            temperature: 0.2,
            momentum: 0.9,
            queue_capacity: 256,
            warmup_fill: 0.5,
            strategy: crate::engine::NegativeStrategy::Default,
            learning_rate: 0.2,
            batch_size: 16,
            epochs: 20,
            checkpoint_every_epochs: 4,
        },
        eval: EvalConfig {
            split: SplitSpec {
                fraction: 0.1,
                n_repeats: 5,
                seed: 0,
                unit: SplitUnit::ByImage,
            },
            modes: vec![EvalMode::LinearProbe],
            task: 0,
            knn_k: 20,
            test_patient_fraction: 0.25,
            probe: ProbeHyperparams {
                learning_rate: 0.05,
                epochs: 1000,
            },
            conflict_bins: 10,
        },
    }
}

/// Pairing section for the instance-discrimination baseline.
pub fn instance_discrimination_pairing() -> crate::config::PairingSection {
    crate::config::PairingSection {
        mode: PairingMode::InstanceDiscrimination,
        empty_policy: crate::pair_index::EmptySetPolicy::FallbackSelf,
    }
}

/// Pairing section for a plain metadata criteria rule.
pub fn metadata_pairing(
    study: crate::pair_index::StudyRule,
    laterality: crate::pair_index::LateralityRule,
) -> crate::config::PairingSection {
    crate::config::PairingSection {
        mode: PairingMode::Metadata {
            criteria: crate::pair_index::PairCriteria::new(study, laterality),
        },
        empty_policy: crate::pair_index::EmptySetPolicy::FallbackSelf,
    }
}

/// All-studies with the same-label oracle filter.
pub fn oracle_pairing() -> crate::config::PairingSection {
    let mut criteria = crate::pair_index::PairCriteria::new(
        crate::pair_index::StudyRule::AllStudies,
        crate::pair_index::LateralityRule::AllLateralities,
    );
    criteria.same_label_oracle = true;
    crate::config::PairingSection {
        mode: PairingMode::Metadata { criteria },
        empty_policy: crate::pair_index::EmptySetPolicy::FallbackSelf,
    }
}

/// Distinct-studies arm of the size-controlled comparison: distinct images
/// only, queries with empty sets skipped.
pub fn size_controlled_distinct_pairing() -> crate::config::PairingSection {
    let mut criteria = crate::pair_index::PairCriteria::new(
        crate::pair_index::StudyRule::DistinctStudies,
        crate::pair_index::LateralityRule::AllLateralities,
    );
    criteria.distinct_image_only = true;
    crate::config::PairingSection {
        mode: PairingMode::Metadata { criteria },
        empty_policy: crate::pair_index::EmptySetPolicy::Skip,
    }
}

/// All-studies arm of the size-controlled comparison: distinct images only,
/// set size matched to the distinct-studies reference per query.
pub fn size_controlled_all_pairing() -> crate::config::PairingSection {
    let mut criteria = crate::pair_index::PairCriteria::new(
        crate::pair_index::StudyRule::AllStudies,
        crate::pair_index::LateralityRule::AllLateralities,
    );
    criteria.distinct_image_only = true;
    let mut reference = crate::pair_index::PairCriteria::new(
        crate::pair_index::StudyRule::DistinctStudies,
        crate::pair_index::LateralityRule::AllLateralities,
    );
    reference.distinct_image_only = true;
    criteria.size_control_reference = Some(Box::new(reference));
    crate::config::PairingSection {
        mode: PairingMode::Metadata { criteria },
        empty_policy: crate::pair_index::EmptySetPolicy::Skip,
    }
}

/// `report`: renders a CSV artifact as an aligned text table.
pub fn cmd_report(csv_path: &Path) -> Result<String> {
    let text = fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let rows: Vec<Vec<String>> = text
        .lines()
        .map(|line| line.split(',').map(|cell| cell.to_string()).collect())
        .collect();
    if rows.is_empty() {
        return Ok(String::new());
    }
    let n_cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut widths = vec![0usize; n_cols];
    for row in &rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    for (r, row) in rows.iter().enumerate() {
        for (i, cell) in row.iter().enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            out.push_str(cell);
            out.extend(std::iter::repeat(' ').take(widths[i] - cell.len()));
        }
        // trim per-line trailing padding
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
        if r == 0 {
            let total: usize = widths.iter().sum::<usize>() + 2 * (n_cols - 1);
            out.extend(std::iter::repeat('-').take(total));
            out.push('\n');
        }
    }
    Ok(out)
}
