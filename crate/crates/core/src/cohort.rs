//! Synthetic cohort generation and CSV/blob ingestion.
//!
//! Generated cohorts emulate the metadata structure of a chest X-ray archive:
//! patients with one or more studies, one or more images per study, frontal or
//! lateral views, and study-level binary disease labels that may flip between
//! consecutive studies of the same patient. Pixels are a deterministic
//! function of (study labels, patient nuisance pattern, view transform) plus
//! additive per-image noise:
//!
//! - each disease label adds a localized intensity block at a fixed position
//!   inside the central 80% of the frame, so a crop-scale floor of 0.95 can
//!   never remove it; the block's amplitude is patient-specific (pathology
//!   appearance varies across patients while presence stays readable);
//! - a per-patient nuisance pattern is added to every image of that patient,
//!   so "same patient" is informative without being equivalent to "same
//!   label";
//! - lateral views are a deterministic global remap (180-degree rotation) of
//!   the underlying content.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pixels::Pixels;
use crate::rng::{lanes, stream};

/// Amplitude of the per-patient nuisance pattern added to every image.
const NUISANCE_AMPLITUDE: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Laterality {
    Frontal,
    Lateral,
}

impl Laterality {
    pub fn as_str(&self) -> &'static str {
        match self {
            Laterality::Frontal => "Frontal",
            Laterality::Lateral => "Lateral",
        }
    }

    pub fn parse(token: &str) -> Option<Laterality> {
        match token {
            "Frontal" => Some(Laterality::Frontal),
            "Lateral" => Some(Laterality::Lateral),
            _ => None,
        }
    }
}

/// One image with its metadata, label vector, and (optional) pixel grid.
///
/// Pixels are absent in metadata-only mode, which is enough for pair
/// analysis; training and evaluation require them.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: u64,
    pub patient_id: u64,
    pub study_id: u64,
    pub laterality: Laterality,
    pub labels: Vec<u8>,
    pub pixels: Option<Pixels>,
}

/// Integer distribution spec for per-patient study and per-study image counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CountDistribution {
    Const { value: usize },
    Uniform { lo: usize, hi: usize },
}

impl CountDistribution {
    pub fn min_support(&self) -> usize {
        match self {
            CountDistribution::Const { value } => *value,
            CountDistribution::Uniform { lo, .. } => *lo,
        }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        match self {
            CountDistribution::Const { value } => {
                if *value < 1 {
                    return Err(Error::config(field, "support must be >= 1"));
                }
            }
            CountDistribution::Uniform { lo, hi } => {
                if *lo < 1 {
                    return Err(Error::config(field, "support must be >= 1"));
                }
                if lo > hi {
                    return Err(Error::config(field, "lo must be <= hi"));
                }
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        match self {
            CountDistribution::Const { value } => *value,
            CountDistribution::Uniform { lo, hi } => rng.random_range(*lo..=*hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortConfig {
    pub n_patients: usize,
    pub studies_per_patient: CountDistribution,
    pub images_per_study: CountDistribution,
    pub p_frontal: f64,
    pub p_label_flip_between_studies: f64,
    #[serde(default = "default_n_tasks")]
    pub n_tasks: usize,
    pub image_size: (usize, usize),
    pub noise_std: f64,
    pub signal_strength: f64,
    pub seed: u64,
}

fn default_n_tasks() -> usize {
    1
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 {
            return Err(Error::config("n_patients", "must be >= 1"));
        }
        self.studies_per_patient.validate("studies_per_patient")?;
        self.images_per_study.validate("images_per_study")?;
        if !(0.0..=1.0).contains(&self.p_frontal) {
            return Err(Error::config("p_frontal", "must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.p_label_flip_between_studies) {
            return Err(Error::config(
                "p_label_flip_between_studies",
                "must be in [0, 1]",
            ));
        }
        if self.n_tasks == 0 {
            return Err(Error::config("n_tasks", "must be >= 1"));
        }
        let (h, w) = self.image_size;
        if h < 4 || w < 4 {
            return Err(Error::config("image_size", "H and W must be >= 4"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::config("noise_std", "must be >= 0"));
        }
        if !(self.signal_strength > 0.0) {
            return Err(Error::config("signal_strength", "must be > 0"));
        }
        Ok(())
    }
}

/// Fixed rectangular region carrying the additive signal of one label
/// dimension. All regions lie inside the central 80% of the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignalRegion {
    pub row: usize,
    pub col: usize,
    pub side: usize,
}

fn region_cells(region: &SignalRegion) -> impl Iterator<Item = (usize, usize)> + '_ {
    (region.row..region.row + region.side)
        .flat_map(move |r| (region.col..region.col + region.side).map(move |c| (r, c)))
}

/// Signal block positions for each label dimension, laid out on a grid of
/// slots inside the central 80% of an `h` x `w` frame.
pub fn signal_regions(h: usize, w: usize, n_tasks: usize) -> Result<Vec<SignalRegion>> {
    let r0 = (h as f64 * 0.1).ceil() as usize;
    let c0 = (w as f64 * 0.1).ceil() as usize;
    let r1 = (h as f64 * 0.9).floor() as usize;
    let c1 = (w as f64 * 0.9).floor() as usize;
    let side = (h.min(w) / 4).max(2);
    if r0 + side > r1 || c0 + side > c1 {
        return Err(Error::config(
            "image_size",
            "too small to place a signal block in the central region",
        ));
    }
    let slots_per_row = ((c1 - c0) / side).max(1);
    let slot_rows = ((r1 - r0) / side).max(1);
    if n_tasks > slots_per_row * slot_rows {
        return Err(Error::config(
            "n_tasks",
            "too many label dimensions for the image size",
        ));
    }
    let mut regions = Vec::with_capacity(n_tasks);
    for k in 0..n_tasks {
        let row = r0 + (k / slots_per_row) * side;
        let col = c0 + (k % slots_per_row) * side;
        regions.push(SignalRegion { row, col, side });
    }
    Ok(regions)
}

/// Generates a synthetic cohort. Pure function of the config (the seed is a
/// config field); two calls with the same config are bitwise identical.
pub fn generate(config: &CohortConfig) -> Result<Vec<ImageRecord>> {
    config.validate()?;
    let (h, w) = config.image_size;
    let regions = signal_regions(h, w, config.n_tasks)?;
    let mut rng = stream(config.seed, &[lanes::COHORT]);
    let mut records = Vec::new();
    let mut image_id: u64 = 0;

    for patient in 0..config.n_patients {
        let mut nuisance = Pixels::zeros(h, w);
        for v in nuisance.as_mut_slice() {
            let z: f64 = rng.sample(StandardNormal);
            *v = NUISANCE_AMPLITUDE * z;
        }
        // per-patient pathology appearance: a global scale plus a textured
        // pattern inside each signal block, so presence is linearly readable
        // while the appearance itself identifies the patient
        let signal_scale: f64 = rng.random_range(0.7..=1.3);
        let textures: Vec<Vec<f64>> = regions
            .iter()
            .map(|region| {
                (0..region.side * region.side)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        1.0 + 0.5 * z
                    })
                    .collect()
            })
            .collect();
        let n_studies = config.studies_per_patient.sample(&mut rng);
        let mut labels: Vec<u8> = (0..config.n_tasks)
            .map(|_| u8::from(rng.random::<f64>() < 0.5))
            .collect();
        for study in 1..=n_studies {
            if study > 1 {
                for label in &mut labels {
                    if rng.random::<f64>() < config.p_label_flip_between_studies {
                        *label = 1 - *label;
                    }
                }
            }
            let n_images = config.images_per_study.sample(&mut rng);
            for _ in 0..n_images {
                let laterality = if rng.random::<f64>() < config.p_frontal {
                    Laterality::Frontal
                } else {
                    Laterality::Lateral
                };
                let mut content = Pixels::zeros(h, w);
                for r in 0..h {
                    for c in 0..w {
                        content.set(r, c, 0.5 + nuisance.get(r, c));
                    }
                }
                for (k, region) in regions.iter().enumerate() {
                    if labels[k] == 1 {
                        for (i, (r, c)) in region_cells(region).enumerate() {
                            let v = content.get(r, c);
                            let amplitude = config.signal_strength * signal_scale * textures[k][i];
                            content.set(r, c, v + amplitude);
                        }
                    }
                }
                let mut pixels = match laterality {
                    Laterality::Frontal => content,
                    Laterality::Lateral => content.rot180(),
                };
                for v in pixels.as_mut_slice() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v += config.noise_std * z;
                }
                pixels.clamp01();
                records.push(ImageRecord {
                    image_id,
                    patient_id: patient as u64,
                    study_id: study as u64,
                    laterality,
                    labels: labels.clone(),
                    pixels: Some(pixels),
                });
                image_id += 1;
            }
        }
    }
    Ok(records)
}

/// Policy for mapping uncertain (`-1`) label values during ingestion.
/// Missing (blank) values always map to negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UncertainPolicy {
    #[default]
    ToNegative,
    ToPositive,
}

/// Column selection and label policy for CSV ingestion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Label columns to read. `None` reads every column other than `Path`
    /// and `Frontal/Lateral`, in header order.
    #[serde(default)]
    pub label_columns: Option<Vec<String>>,
    #[serde(default)]
    pub uncertain: UncertainPolicy,
}

const PATH_COLUMN: &str = "Path";
const LATERALITY_COLUMN: &str = "Frontal/Lateral";

fn parse_path_ids(path: &str, row: usize) -> Result<(u64, u64)> {
    let mut patient = None;
    let mut study = None;
    for segment in path.split('/') {
        if let Some(rest) = segment.strip_prefix("patient") {
            if let Ok(id) = rest.parse::<u64>() {
                patient = Some(id);
            }
        } else if let Some(rest) = segment.strip_prefix("study") {
            if let Ok(id) = rest.parse::<u64>() {
                study = Some(id);
            }
        }
    }
    match (patient, study) {
        (Some(p), Some(s)) => Ok((p, s)),
        _ => Err(Error::CsvRow {
            row,
            reason: format!("path {path:?} lacks patientNNNNN/studyM segments"),
        }),
    }
}

fn parse_label(token: &str, policy: UncertainPolicy, row: usize, column: &str) -> Result<u8> {
    let t = token.trim();
    if t.is_empty() {
        return Ok(0);
    }
    let value: f64 = t.parse().map_err(|_| Error::CsvRow {
        row,
        reason: format!("column {column}: unparseable label {t:?}"),
    })?;
    if value == 1.0 {
        Ok(1)
    } else if value == 0.0 {
        Ok(0)
    } else if value == -1.0 {
        Ok(match policy {
            UncertainPolicy::ToNegative => 0,
            UncertainPolicy::ToPositive => 1,
        })
    } else {
        Err(Error::CsvRow {
            row,
            reason: format!("column {column}: label {t:?} not in {{1, 0, -1, blank}}"),
        })
    }
}

/// Reads a metadata CSV (`Path,Frontal/Lateral,<label columns...>`) into
/// records without pixels. Image ids are assigned by row order.
pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<Vec<ImageRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| Error::CsvRow {
            row: 0,
            reason: e.to_string(),
        })?
        .clone();
    let find = |name: &str| headers.iter().position(|head| head == name);
    let path_idx = find(PATH_COLUMN).ok_or_else(|| Error::CsvRow {
        row: 0,
        reason: format!("missing {PATH_COLUMN} column"),
    })?;
    let lat_idx = find(LATERALITY_COLUMN).ok_or_else(|| Error::CsvRow {
        row: 0,
        reason: format!("missing {LATERALITY_COLUMN} column"),
    })?;
    let label_cols: Vec<(usize, String)> = match &schema.label_columns {
        Some(names) => {
            let mut cols = Vec::with_capacity(names.len());
            for name in names {
                let idx = find(name).ok_or_else(|| Error::CsvRow {
                    row: 0,
                    reason: format!("missing label column {name:?}"),
                })?;
                cols.push((idx, name.clone()));
            }
            cols
        }
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != path_idx && *i != lat_idx)
            .map(|(i, name)| (i, name.to_string()))
            .collect(),
    };

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_number = i + 1;
        let row = row.map_err(|e| Error::CsvRow {
            row: row_number,
            reason: e.to_string(),
        })?;
        let get = |idx: usize| -> Result<&str> {
            row.get(idx).ok_or_else(|| Error::CsvRow {
                row: row_number,
                reason: format!("missing column {idx}"),
            })
        };
        let (patient_id, study_id) = parse_path_ids(get(path_idx)?, row_number)?;
        let lat_token = get(lat_idx)?;
        let laterality = Laterality::parse(lat_token).ok_or_else(|| Error::CsvRow {
            row: row_number,
            reason: format!("unknown laterality token {lat_token:?}"),
        })?;
        let mut labels = Vec::with_capacity(label_cols.len());
        for (idx, name) in &label_cols {
            labels.push(parse_label(get(*idx)?, schema.uncertain, row_number, name)?);
        }
        records.push(ImageRecord {
            image_id: i as u64,
            patient_id,
            study_id,
            laterality,
            labels,
            pixels: None,
        });
    }
    Ok(records)
}

/// Reads a metadata CSV plus an optional pixel blob keyed by image id.
pub fn ingest_csv_with_pixels(
    csv_path: &Path,
    blob_path: Option<&Path>,
    schema: &CsvSchema,
) -> Result<Vec<ImageRecord>> {
    let mut records = ingest_csv(csv_path, schema)?;
    if let Some(blob_path) = blob_path {
        let mut blobs = read_pixel_blob(blob_path)?;
        for record in &mut records {
            record.pixels = blobs.remove(&record.image_id);
        }
    }
    Ok(records)
}

/// Writes cohort metadata using the same CSV schema `ingest_csv` reads.
/// Rows are written in record order, so round-tripping preserves image ids.
pub fn write_cohort_csv(records: &[ImageRecord], path: &Path) -> Result<()> {
    let n_tasks = records.first().map_or(0, |r| r.labels.len());
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec![PATH_COLUMN.to_string(), LATERALITY_COLUMN.to_string()];
    for k in 0..n_tasks {
        header.push(format!("Task{k}"));
    }
    writer
        .write_record(&header)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    for record in records {
        let mut row = vec![
            format!(
                "patient{:05}/study{}/img{:06}.png",
                record.patient_id, record.study_id, record.image_id
            ),
            record.laterality.as_str().to_string(),
        ];
        for &label in &record.labels {
            row.push(if label == 1 { "1.0" } else { "0.0" }.to_string());
        }
        writer
            .write_record(&row)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(path, e))?;
    Ok(())
}

const BLOB_MAGIC: &[u8; 4] = b"CXB1";

/// Writes pixel grids to a binary blob keyed by image id
/// (`magic, u64 count, then per image: u64 id, u32 h, u32 w, h*w f64 LE`).
pub fn write_pixel_blob(records: &[ImageRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    let with_pixels: Vec<&ImageRecord> = records.iter().filter(|r| r.pixels.is_some()).collect();
    out.write_all(BLOB_MAGIC).map_err(io_err)?;
    out.write_all(&(with_pixels.len() as u64).to_le_bytes())
        .map_err(io_err)?;
    for record in with_pixels {
        let pixels = record.pixels.as_ref().unwrap();
        out.write_all(&record.image_id.to_le_bytes()).map_err(io_err)?;
        out.write_all(&(pixels.h() as u32).to_le_bytes())
            .map_err(io_err)?;
        out.write_all(&(pixels.w() as u32).to_le_bytes())
            .map_err(io_err)?;
        for &v in pixels.as_slice() {
            out.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

/// Reads a pixel blob back into an id-keyed map.
pub fn read_pixel_blob(path: &Path) -> Result<BTreeMap<u64, Pixels>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic).map_err(io_err)?;
    if &magic != BLOB_MAGIC {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidData, "bad pixel blob magic"),
        ));
    }
    let mut u64_buf = [0u8; 8];
    let mut u32_buf = [0u8; 4];
    reader.read_exact(&mut u64_buf).map_err(io_err)?;
    let count = u64::from_le_bytes(u64_buf);
    let mut map = BTreeMap::new();
    for _ in 0..count {
        reader.read_exact(&mut u64_buf).map_err(io_err)?;
        let image_id = u64::from_le_bytes(u64_buf);
        reader.read_exact(&mut u32_buf).map_err(io_err)?;
        let h = u32::from_le_bytes(u32_buf) as usize;
        reader.read_exact(&mut u32_buf).map_err(io_err)?;
        let w = u32::from_le_bytes(u32_buf) as usize;
        let mut data = Vec::with_capacity(h * w);
        for _ in 0..h * w {
            reader.read_exact(&mut u64_buf).map_err(io_err)?;
            data.push(f64::from_le_bytes(u64_buf));
        }
        map.insert(image_id, Pixels::from_data(h, w, data)?);
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn small_config() -> CohortConfig {
        CohortConfig {
            n_patients: 10,
            studies_per_patient: CountDistribution::Const { value: 2 },
            images_per_study: CountDistribution::Const { value: 2 },
            p_frontal: 0.6,
            p_label_flip_between_studies: 0.3,
            n_tasks: 1,
            image_size: (8, 8),
            noise_std: 0.05,
            signal_strength: 0.5,
            seed: 7,
        }
    }

    #[test]
    fn counts_follow_config() {
        let records = generate(&small_config()).unwrap();
        assert_eq!(records.len(), 40);
        let studies: BTreeSet<(u64, u64)> = records
            .iter()
            .map(|r| (r.patient_id, r.study_id))
            .collect();
        assert_eq!(studies.len(), 20);
    }

    #[test]
    fn zero_flip_probability_keeps_labels_constant() {
        let mut config = small_config();
        config.p_label_flip_between_studies = 0.0;
        config.studies_per_patient = CountDistribution::Uniform { lo: 1, hi: 4 };
        let records = generate(&config).unwrap();
        for patient in 0..config.n_patients as u64 {
            let labels: BTreeSet<Vec<u8>> = records
                .iter()
                .filter(|r| r.patient_id == patient)
                .map(|r| r.labels.clone())
                .collect();
            assert_eq!(labels.len(), 1, "patient {patient} has varying labels");
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let config = small_config();
        let a = generate(&config).unwrap();
        let b = generate(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn same_study_shares_labels() {
        let mut config = small_config();
        config.n_patients = 40;
        config.studies_per_patient = CountDistribution::Uniform { lo: 1, hi: 3 };
        config.images_per_study = CountDistribution::Uniform { lo: 1, hi: 4 };
        for seed in 0..5 {
            config.seed = seed;
            let records = generate(&config).unwrap();
            let mut by_study: BTreeMap<(u64, u64), Vec<&ImageRecord>> = BTreeMap::new();
            for r in &records {
                by_study.entry((r.patient_id, r.study_id)).or_default().push(r);
            }
            for (study, group) in by_study {
                for r in &group {
                    assert_eq!(r.labels, group[0].labels, "study {study:?}");
                }
            }
        }
    }

    #[test]
    fn frontal_fraction_matches_p_frontal() {
        let mut config = small_config();
        config.n_patients = 500;
        config.noise_std = 0.0;
        config.p_frontal = 0.7;
        let records = generate(&config).unwrap();
        let n = records.len() as f64;
        let frontal = records
            .iter()
            .filter(|r| r.laterality == Laterality::Frontal)
            .count() as f64;
        let sigma = (n * 0.7 * 0.3).sqrt();
        assert!(
            (frontal - 0.7 * n).abs() <= 3.0 * sigma,
            "frontal count {frontal} outside 3 sigma of {}",
            0.7 * n
        );
    }

    #[test]
    fn pixels_in_unit_interval_and_deterministic_signal_region() {
        let config = small_config();
        let records = generate(&config).unwrap();
        for record in &records {
            let pixels = record.pixels.as_ref().unwrap();
            assert!(pixels.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let regions = signal_regions(8, 8, 1).unwrap();
        let region = regions[0];
        assert!(region.row >= 1 && region.row + region.side <= 7);
        assert!(region.col >= 1 && region.col + region.side <= 7);
    }

    #[test]
    fn invalid_config_names_offending_field() {
        let mut config = small_config();
        config.p_frontal = 1.5;
        match generate(&config) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "p_frontal"),
            other => panic!("expected config error, got {other:?}"),
        }
        let mut config = small_config();
        config.image_size = (3, 8);
        match generate(&config) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "image_size"),
            other => panic!("expected config error, got {other:?}"),
        }
        let mut config = small_config();
        config.studies_per_patient = CountDistribution::Uniform { lo: 0, hi: 2 };
        assert!(generate(&config).is_err());
    }

    #[test]
    fn csv_round_trip_preserves_metadata_and_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("cohort.csv");
        let blob_path = dir.path().join("pixels.bin");
        let records = generate(&small_config()).unwrap();
        write_cohort_csv(&records, &csv_path).unwrap();
        write_pixel_blob(&records, &blob_path).unwrap();
        let round =
            ingest_csv_with_pixels(&csv_path, Some(&blob_path), &CsvSchema::default()).unwrap();
        assert_eq!(records, round);
    }

    #[test]
    fn ingest_parses_laterality_and_shared_path_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.csv");
        std::fs::write(
            &path,
            "Path,Frontal/Lateral,Pleural Effusion\n\
             train/patient00001/study1/view1_frontal.jpg,Frontal,1.0\n\
             train/patient00001/study1/view2_lateral.jpg,Lateral,-1.0\n\
             train/patient00002/study3/view1_frontal.jpg,Frontal,\n",
        )
        .unwrap();
        let records = ingest_csv(&path, &CsvSchema::default()).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].laterality, Laterality::Frontal);
        assert_eq!(records[1].laterality, Laterality::Lateral);
        assert_eq!(
            (records[0].patient_id, records[0].study_id),
            (records[1].patient_id, records[1].study_id)
        );
        assert_eq!((records[2].patient_id, records[2].study_id), (2, 3));
        // uncertain -> negative by default, blank -> negative
        assert_eq!(records[1].labels, vec![0]);
        assert_eq!(records[2].labels, vec![0]);

        let positive = CsvSchema {
            label_columns: None,
            uncertain: UncertainPolicy::ToPositive,
        };
        let records = ingest_csv(&path, &positive).unwrap();
        assert_eq!(records[1].labels, vec![1]);
    }

    #[test]
    fn ingest_empty_file_is_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "Path,Frontal/Lateral,Task0\n").unwrap();
        let records = ingest_csv(&path, &CsvSchema::default()).unwrap();
        assert!(records.is_empty());
    }

    #[test]
    fn ingest_errors_carry_row_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "Path,Frontal/Lateral,Task0\n\
             patient00001/study1/a.png,Frontal,1.0\n\
             patient00001/study1/b.png,Sideways,1.0\n",
        )
        .unwrap();
        match ingest_csv(&path, &CsvSchema::default()) {
            Err(Error::CsvRow { row, reason }) => {
                assert_eq!(row, 2);
                assert!(reason.contains("Sideways"));
            }
            other => panic!("expected row error, got {other:?}"),
        }

        std::fs::write(
            &path,
            "Path,Frontal/Lateral,Task0\nno-ids-here.png,Frontal,1.0\n",
        )
        .unwrap();
        match ingest_csv(&path, &CsvSchema::default()) {
            Err(Error::CsvRow { row, .. }) => assert_eq!(row, 1),
            other => panic!("expected row error, got {other:?}"),
        }
    }
}
