//! Candidate sets `S_c(x)` over patient metadata.
//!
//! Materializes, for a query image, the set of same-patient images passing a
//! declarative criteria rule (study number, laterality, optional same-label
//! oracle, optional distinct-image restriction), samples positive partners
//! from it, enforces size control between two criteria, and computes
//! label-conflict statistics over the sets.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::{ImageRecord, Laterality};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyRule {
    AllStudies,
    SameStudy,
    DistinctStudies,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LateralityRule {
    AllLateralities,
    SameLaterality,
    DistinctLateralities,
}

/// Declarative spec of the candidate-set rule.
///
/// The query image itself is a member whenever it passes the rules and
/// `distinct_image_only` is false. `size_control_reference` requests a
/// one-time random pre-selection down to the reference criteria's set size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairCriteria {
    pub study_rule: StudyRule,
    pub laterality_rule: LateralityRule,
    #[serde(default)]
    pub same_label_oracle: bool,
    /// Label dimension the oracle compares (the designated downstream task).
    #[serde(default)]
    pub oracle_task: usize,
    #[serde(default)]
    pub distinct_image_only: bool,
    #[serde(default)]
    pub size_control_reference: Option<Box<PairCriteria>>,
}

impl PairCriteria {
    pub fn new(study_rule: StudyRule, laterality_rule: LateralityRule) -> Self {
        PairCriteria {
            study_rule,
            laterality_rule,
            same_label_oracle: false,
            oracle_task: 0,
            distinct_image_only: false,
            size_control_reference: None,
        }
    }

    fn without_reference(&self) -> PairCriteria {
        PairCriteria {
            size_control_reference: None,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(reference) = &self.size_control_reference {
            if reference.size_control_reference.is_some() {
                return Err(Error::config(
                    "size_control_reference",
                    "reference criteria may not be size-controlled themselves",
                ));
            }
            if **reference == self.without_reference() {
                return Err(Error::config(
                    "size_control_reference",
                    "reference must differ from the outer criteria",
                ));
            }
        }
        Ok(())
    }
}

impl fmt::Display for PairCriteria {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let study = match self.study_rule {
            StudyRule::AllStudies => "all-studies",
            StudyRule::SameStudy => "same-study",
            StudyRule::DistinctStudies => "distinct-studies",
        };
        let lat = match self.laterality_rule {
            LateralityRule::AllLateralities => "all-lateralities",
            LateralityRule::SameLaterality => "same-laterality",
            LateralityRule::DistinctLateralities => "distinct-lateralities",
        };
        write!(f, "{study}/{lat}")?;
        if self.same_label_oracle {
            write!(f, "+oracle(task{})", self.oracle_task)?;
        }
        if self.distinct_image_only {
            write!(f, "+distinct-image")?;
        }
        if self.size_control_reference.is_some() {
            write!(f, "+size-controlled")?;
        }
        Ok(())
    }
}

/// Metadata of one record as stored in the index.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordMeta {
    pub patient_id: u64,
    pub study_id: u64,
    pub laterality: Laterality,
    pub labels: Vec<u8>,
}

/// Immutable lookup of patient -> study -> images and image -> metadata.
#[derive(Debug, Clone)]
pub struct MetadataIndex {
    by_patient: BTreeMap<u64, BTreeMap<u64, Vec<(u64, Laterality)>>>,
    meta: BTreeMap<u64, RecordMeta>,
}

impl MetadataIndex {
    /// Builds the index; duplicate image ids are rejected.
    pub fn build(records: &[ImageRecord]) -> Result<Self> {
        let mut by_patient: BTreeMap<u64, BTreeMap<u64, Vec<(u64, Laterality)>>> = BTreeMap::new();
        let mut meta = BTreeMap::new();
        for record in records {
            let prior = meta.insert(
                record.image_id,
                RecordMeta {
                    patient_id: record.patient_id,
                    study_id: record.study_id,
                    laterality: record.laterality,
                    labels: record.labels.clone(),
                },
            );
            if prior.is_some() {
                return Err(Error::DuplicateImageId(record.image_id));
            }
            by_patient
                .entry(record.patient_id)
                .or_default()
                .entry(record.study_id)
                .or_default()
                .push((record.image_id, record.laterality));
        }
        Ok(MetadataIndex { by_patient, meta })
    }

    pub fn meta(&self, image_id: u64) -> Result<&RecordMeta> {
        self.meta
            .get(&image_id)
            .ok_or(Error::UnknownImageId(image_id))
    }

    pub fn patient_studies(&self, patient_id: u64) -> Option<&BTreeMap<u64, Vec<(u64, Laterality)>>> {
        self.by_patient.get(&patient_id)
    }

    /// Image ids in ascending order.
    pub fn image_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.meta.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }
}

/// The materialized candidate set of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub query_id: u64,
    /// Member image ids, ascending.
    pub members: Vec<u64>,
}

/// Materializes `S_c(query)` from the index.
pub fn candidates(
    index: &MetadataIndex,
    query_id: u64,
    criteria: &PairCriteria,
) -> Result<CandidateSet> {
    criteria.validate()?;
    let query = index.meta(query_id)?;
    if criteria.same_label_oracle && criteria.oracle_task >= query.labels.len() {
        return Err(Error::config(
            "oracle_task",
            format!(
                "label dimension {} out of range (labels have {})",
                criteria.oracle_task,
                query.labels.len()
            ),
        ));
    }
    let mut members = Vec::new();
    let studies = index
        .patient_studies(query.patient_id)
        .expect("indexed record has a patient entry");
    for (&study_id, images) in studies {
        let study_ok = match criteria.study_rule {
            StudyRule::AllStudies => true,
            StudyRule::SameStudy => study_id == query.study_id,
            StudyRule::DistinctStudies => study_id != query.study_id,
        };
        if !study_ok {
            continue;
        }
        for &(image_id, laterality) in images {
            let lat_ok = match criteria.laterality_rule {
                LateralityRule::AllLateralities => true,
                LateralityRule::SameLaterality => laterality == query.laterality,
                LateralityRule::DistinctLateralities => laterality != query.laterality,
            };
            if !lat_ok {
                continue;
            }
            if criteria.distinct_image_only && image_id == query_id {
                continue;
            }
            if criteria.same_label_oracle {
                let candidate = index.meta(image_id)?;
                if candidate.labels[criteria.oracle_task] != query.labels[criteria.oracle_task] {
                    continue;
                }
            }
            members.push(image_id);
        }
    }
    members.sort_unstable();
    Ok(CandidateSet { query_id, members })
}

/// What to do when `S_c(x)` is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmptySetPolicy {
    /// Pair the query with itself (the fallback branch of the enhanced
    /// augmentation set).
    #[default]
    FallbackSelf,
    /// Exclude the query from the batch entirely.
    Skip,
}

/// Uniform draw of a positive partner. Returns `None` when the set is empty
/// and the policy is `Skip`.
pub fn sample_positive(
    cands: &CandidateSet,
    fallback_query: u64,
    policy: EmptySetPolicy,
    rng: &mut ChaCha8Rng,
) -> Option<u64> {
    if cands.members.is_empty() {
        return match policy {
            EmptySetPolicy::FallbackSelf => Some(fallback_query),
            EmptySetPolicy::Skip => None,
        };
    }
    Some(cands.members[rng.random_range(0..cands.members.len())])
}

/// Uniform pre-selection of `min(|cands|, |reference|)` members.
///
/// Callers apply this once per query per pretraining run; the restricted set
/// is fixed for the rest of the run.
pub fn apply_size_control(
    cands: &CandidateSet,
    reference: &CandidateSet,
    rng: &mut ChaCha8Rng,
) -> CandidateSet {
    let target = cands.members.len().min(reference.members.len());
    if target == cands.members.len() {
        return cands.clone();
    }
    let picked = rand::seq::index::sample(rng, cands.members.len(), target);
    let mut members: Vec<u64> = picked.iter().map(|i| cands.members[i]).collect();
    members.sort_unstable();
    CandidateSet {
        query_id: cands.query_id,
        members,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictEntry {
    pub query_id: u64,
    pub set_size: usize,
    pub conflict_proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Per-query label-conflict proportions plus their histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictStats {
    pub task: usize,
    pub entries: Vec<ConflictEntry>,
    pub histogram: Vec<HistogramBin>,
    /// Fraction of queries whose entire candidate set has a different label.
    pub mass_at_one: f64,
    pub n_queries: usize,
    pub n_empty_sets: usize,
}

/// For every query with a nonempty candidate set, the proportion of members
/// whose label on `task` differs from the query's. Queries with empty sets
/// are excluded (and counted in `n_empty_sets`).
pub fn conflict_stats(
    index: &MetadataIndex,
    criteria: &PairCriteria,
    task: usize,
    bins: usize,
) -> Result<ConflictStats> {
    if bins == 0 {
        return Err(Error::config("bins", "must be >= 1"));
    }
    let mut entries = Vec::new();
    let mut n_empty = 0usize;
    for query_id in index.image_ids() {
        let query = index.meta(query_id)?;
        if task >= query.labels.len() {
            return Err(Error::config(
                "task",
                format!(
                    "label dimension {task} out of range (labels have {})",
                    query.labels.len()
                ),
            ));
        }
        let set = candidates(index, query_id, criteria)?;
        if set.members.is_empty() {
            n_empty += 1;
            continue;
        }
        let query_label = query.labels[task];
        let mut differing = 0usize;
        for &member in &set.members {
            if index.meta(member)?.labels[task] != query_label {
                differing += 1;
            }
        }
        entries.push(ConflictEntry {
            query_id,
            set_size: set.members.len(),
            conflict_proportion: differing as f64 / set.members.len() as f64,
        });
    }
    let mut histogram: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            lo: b as f64 / bins as f64,
            hi: (b + 1) as f64 / bins as f64,
            count: 0,
        })
        .collect();
    let mut at_one = 0usize;
    for entry in &entries {
        let p = entry.conflict_proportion;
        let mut bin = (p * bins as f64).floor() as usize;
        if bin >= bins {
            bin = bins - 1; // p == 1.0 lands in the last bin
        }
        histogram[bin].count += 1;
        if p == 1.0 {
            at_one += 1;
        }
    }
    let n_queries = entries.len();
    Ok(ConflictStats {
        task,
        entries,
        histogram,
        mass_at_one: if n_queries == 0 {
            0.0
        } else {
            at_one as f64 / n_queries as f64
        },
        n_queries,
        n_empty_sets: n_empty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{generate, CohortConfig, CountDistribution};
    use crate::rng::stream;

    /// Mini-cohort M: patient P1 = study 1 {A Frontal, B Lateral},
    /// study 2 {C Frontal}; patient P2 = study 1 {D Frontal}.
    /// P1 study-1 label 1, study-2 label 0; D label 0.
    const A: u64 = 0;
    const B: u64 = 1;
    const C: u64 = 2;
    const D: u64 = 3;

    fn mini_cohort() -> Vec<ImageRecord> {
        let mk = |image_id, patient_id, study_id, laterality, label: u8| ImageRecord {
            image_id,
            patient_id,
            study_id,
            laterality,
            labels: vec![label],
            pixels: None,
        };
        vec![
            mk(A, 1, 1, Laterality::Frontal, 1),
            mk(B, 1, 1, Laterality::Lateral, 1),
            mk(C, 1, 2, Laterality::Frontal, 0),
            mk(D, 2, 1, Laterality::Frontal, 0),
        ]
    }

    fn criteria(study: StudyRule, lat: LateralityRule) -> PairCriteria {
        PairCriteria::new(study, lat)
    }

    #[test]
    fn build_index_lookups() {
        let index = MetadataIndex::build(&mini_cohort()).unwrap();
        let studies = index.patient_studies(1).unwrap();
        assert_eq!(studies.len(), 2);
        assert_eq!(studies[&1], vec![(A, Laterality::Frontal), (B, Laterality::Lateral)]);
        assert_eq!(studies[&2], vec![(C, Laterality::Frontal)]);
        assert_eq!(index.meta(A).unwrap().laterality, Laterality::Frontal);
    }

    #[test]
    fn duplicate_image_id_is_error() {
        let mut records = mini_cohort();
        records[1].image_id = A;
        match MetadataIndex::build(&records) {
            Err(Error::DuplicateImageId(id)) => assert_eq!(id, A),
            other => panic!("expected duplicate id error, got {other:?}"),
        }
    }

    #[test]
    fn candidates_match_study_and_laterality_rules() {
        let index = MetadataIndex::build(&mini_cohort()).unwrap();

        let c = candidates(
            &index,
            A,
            &criteria(StudyRule::SameStudy, LateralityRule::AllLateralities),
        )
        .unwrap();
        assert_eq!(c.members, vec![A, B]);

        let c = candidates(
            &index,
            A,
            &criteria(StudyRule::DistinctStudies, LateralityRule::AllLateralities),
        )
        .unwrap();
        assert_eq!(c.members, vec![C]);

        let c = candidates(
            &index,
            D,
            &criteria(StudyRule::SameStudy, LateralityRule::DistinctLateralities),
        )
        .unwrap();
        assert!(c.members.is_empty());

        let mut same_lat = criteria(StudyRule::AllStudies, LateralityRule::SameLaterality);
        same_lat.distinct_image_only = true;
        let c = candidates(&index, A, &same_lat).unwrap();
        assert_eq!(c.members, vec![C]);

        assert!(matches!(
            candidates(&index, 99, &same_lat),
            Err(Error::UnknownImageId(99))
        ));
    }

    #[test]
    fn oracle_filters_on_designated_task() {
        let index = MetadataIndex::build(&mini_cohort()).unwrap();
        let mut c = criteria(StudyRule::AllStudies, LateralityRule::AllLateralities);
        c.same_label_oracle = true;
        let set = candidates(&index, A, &c).unwrap();
        assert_eq!(set.members, vec![A, B]); // C has a different label
    }

    #[test]
    fn sample_positive_policies() {
        let mut rng = stream(0, &[99]);
        let singleton = CandidateSet {
            query_id: A,
            members: vec![B],
        };
        assert_eq!(
            sample_positive(&singleton, A, EmptySetPolicy::FallbackSelf, &mut rng),
            Some(B)
        );
        let empty = CandidateSet {
            query_id: A,
            members: vec![],
        };
        assert_eq!(
            sample_positive(&empty, A, EmptySetPolicy::FallbackSelf, &mut rng),
            Some(A)
        );
        assert_eq!(
            sample_positive(&empty, A, EmptySetPolicy::Skip, &mut rng),
            None
        );
    }

    #[test]
    fn sample_positive_is_uniform() {
        let set = CandidateSet {
            query_id: A,
            members: vec![A, B],
        };
        let mut rng = stream(11, &[1]);
        let n = 10_000;
        let mut count_a = 0;
        for _ in 0..n {
            if sample_positive(&set, A, EmptySetPolicy::Skip, &mut rng) == Some(A) {
                count_a += 1;
            }
        }
        // binomial oracle: mean n/2, sigma = sqrt(n * 1/4)
        let sigma = (n as f64 * 0.25).sqrt();
        assert!(
            (count_a as f64 - n as f64 / 2.0).abs() <= 3.0 * sigma,
            "count {count_a} outside 3 sigma"
        );
    }

    #[test]
    fn size_control_cardinality_and_determinism() {
        let cands = CandidateSet {
            query_id: A,
            members: vec![10, 11, 12],
        };
        let reference = CandidateSet {
            query_id: A,
            members: vec![20],
        };
        let mut rng = stream(5, &[2]);
        let controlled = apply_size_control(&cands, &reference, &mut rng);
        assert_eq!(controlled.members.len(), 1);
        assert!(cands.members.contains(&controlled.members[0]));

        let small = CandidateSet {
            query_id: A,
            members: vec![10],
        };
        let large_ref = CandidateSet {
            query_id: A,
            members: vec![20, 21, 22, 23, 24],
        };
        let unchanged = apply_size_control(&small, &large_ref, &mut stream(5, &[2]));
        assert_eq!(unchanged.members, small.members);

        let first = apply_size_control(&cands, &reference, &mut stream(5, &[3]));
        let second = apply_size_control(&cands, &reference, &mut stream(5, &[3]));
        assert_eq!(first, second);
    }

    #[test]
    fn conflict_proportions_on_mini_cohort() {
        let index = MetadataIndex::build(&mini_cohort()).unwrap();

        let stats = conflict_stats(
            &index,
            &criteria(StudyRule::DistinctStudies, LateralityRule::AllLateralities),
            0,
            10,
        )
        .unwrap();
        let entry_a = stats.entries.iter().find(|e| e.query_id == A).unwrap();
        assert_eq!(entry_a.conflict_proportion, 1.0);
        assert_eq!(entry_a.set_size, 1);

        let stats = conflict_stats(
            &index,
            &criteria(StudyRule::AllStudies, LateralityRule::AllLateralities),
            0,
            10,
        )
        .unwrap();
        let entry_a = stats.entries.iter().find(|e| e.query_id == A).unwrap();
        assert!((entry_a.conflict_proportion - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(entry_a.set_size, 3);
    }

    fn random_cohort(seed: u64) -> Vec<ImageRecord> {
        let config = CohortConfig {
            n_patients: 12,
            studies_per_patient: CountDistribution::Uniform { lo: 1, hi: 3 },
            images_per_study: CountDistribution::Uniform { lo: 1, hi: 3 },
            p_frontal: 0.55,
            p_label_flip_between_studies: 0.4,
            n_tasks: 2,
            image_size: (8, 8),
            noise_std: 0.0,
            signal_strength: 0.5,
            seed,
        };
        generate(&config).unwrap()
    }

    #[test]
    fn all_studies_with_self_inclusion_never_fully_conflicts() {
        for seed in 0..20 {
            let index = MetadataIndex::build(&random_cohort(seed)).unwrap();
            let stats = conflict_stats(
                &index,
                &criteria(StudyRule::AllStudies, LateralityRule::AllLateralities),
                0,
                10,
            )
            .unwrap();
            assert_eq!(stats.mass_at_one, 0.0, "seed {seed}");
        }
    }

    #[test]
    fn oracle_criteria_have_zero_conflict() {
        for seed in 0..10 {
            let index = MetadataIndex::build(&random_cohort(seed)).unwrap();
            let mut c = criteria(StudyRule::AllStudies, LateralityRule::AllLateralities);
            c.same_label_oracle = true;
            c.distinct_image_only = true;
            let stats = conflict_stats(&index, &c, 0, 10).unwrap();
            for entry in &stats.entries {
                assert_eq!(entry.conflict_proportion, 0.0);
            }
        }
    }

    fn satisfies(
        index: &MetadataIndex,
        query: &RecordMeta,
        query_id: u64,
        member_id: u64,
        criteria: &PairCriteria,
    ) -> bool {
        let m = index.meta(member_id).unwrap();
        if m.patient_id != query.patient_id {
            return false;
        }
        let study_ok = match criteria.study_rule {
            StudyRule::AllStudies => true,
            StudyRule::SameStudy => m.study_id == query.study_id,
            StudyRule::DistinctStudies => m.study_id != query.study_id,
        };
        let lat_ok = match criteria.laterality_rule {
            LateralityRule::AllLateralities => true,
            LateralityRule::SameLaterality => m.laterality == query.laterality,
            LateralityRule::DistinctLateralities => m.laterality != query.laterality,
        };
        let label_ok = !criteria.same_label_oracle
            || m.labels[criteria.oracle_task] == query.labels[criteria.oracle_task];
        let distinct_ok = !criteria.distinct_image_only || member_id != query_id;
        study_ok && lat_ok && label_ok && distinct_ok
    }

    #[test]
    fn criteria_soundness_and_study_partition() {
        let study_rules = [
            StudyRule::AllStudies,
            StudyRule::SameStudy,
            StudyRule::DistinctStudies,
        ];
        let lat_rules = [
            LateralityRule::AllLateralities,
            LateralityRule::SameLaterality,
            LateralityRule::DistinctLateralities,
        ];
        for seed in 0..10 {
            let records = random_cohort(seed);
            let index = MetadataIndex::build(&records).unwrap();
            for query_id in index.image_ids() {
                let query = index.meta(query_id).unwrap().clone();
                for &lat in &lat_rules {
                    let mut sets = Vec::new();
                    for &study in &study_rules {
                        for distinct in [false, true] {
                            let mut c = criteria(study, lat);
                            c.distinct_image_only = distinct;
                            let set = candidates(&index, query_id, &c).unwrap();
                            // soundness: every member satisfies the predicate
                            for &m in &set.members {
                                assert!(satisfies(&index, &query, query_id, m, &c));
                            }
                            // completeness: nothing satisfying is missing
                            let expected = index
                                .image_ids()
                                .filter(|&m| satisfies(&index, &query, query_id, m, &c))
                                .count();
                            assert_eq!(set.members.len(), expected);
                            if !distinct {
                                sets.push((study, set));
                            }
                        }
                    }
                    // partition: same ⊎ distinct = all
                    let all = &sets[0].1.members;
                    let same = &sets[1].1.members;
                    let distinct = &sets[2].1.members;
                    let mut union = same.clone();
                    union.extend_from_slice(distinct);
                    union.sort_unstable();
                    assert_eq!(&union, all);
                    assert!(same.iter().all(|m| !distinct.contains(m)));
                }
            }
        }
    }
}
