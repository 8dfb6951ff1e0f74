//! Benchmark assembly: the training corpus, the three generalization test
//! sets and counterfactual attribute-inversion pairs.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::archetype::{Attribute, ConsensusRecord, DemographicProfile, IncomeBracket};
use crate::hashing::{hash64_parts, unit_interval};
use crate::ingest::{Codebook, QuestionSpec, ScaleKind};
use crate::jsonl::{self, JsonlError};

#[derive(Debug, thiserror::Error)]
pub enum BenchmarkError {
    #[error("split spec: {0}")]
    InvalidSpec(String),
    #[error("record references question {0:?} missing from the codebook")]
    UnknownQuestion(String),
    #[error("counterfactual inversion is not defined for attribute {0}")]
    UnsupportedAttribute(String),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("bundle io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bundle meta: {0}")]
    Meta(#[from] serde_json::Error),
}

/// Canonical 64-bit hex key of a profile; equal keys for equal profiles.
pub fn profile_fingerprint(p: &DemographicProfile) -> String {
    p.fingerprint()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    CrossDemo,
    CrossCountry,
    CrossValue,
}

impl Split {
    pub const ALL: [Split; 4] = [
        Split::Train,
        Split::CrossDemo,
        Split::CrossCountry,
        Split::CrossValue,
    ];
    pub const TESTS: [Split; 3] = [Split::CrossDemo, Split::CrossCountry, Split::CrossValue];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::CrossDemo => "cross_demo",
            Split::CrossCountry => "cross_country",
            Split::CrossValue => "cross_value",
        }
    }

    pub fn from_name(name: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_countries: Vec<String>,
    pub test_countries: Vec<String>,
    pub train_questions: Vec<String>,
    pub cross_value_questions: Vec<String>,
    pub demo_holdout_ratio: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_countries: strings(&[
                "BRA", "CAN", "CHN", "EGY", "DEU", "IND", "JPN", "RUS", "GBR", "USA",
            ]),
            test_countries: strings(&["AUS", "IDN", "IRN", "MEX", "NGA", "PAK", "TUR", "VNM"]),
            train_questions: strings(&[
                "Q1", "Q2", "Q3", "Q4", "Q5", "Q6", "Q27", "Q29", "Q36", "Q46", "Q49", "Q50",
                "Q60", "Q69", "Q112", "Q131",
            ]),
            cross_value_questions: strings(&["Q8", "Q9", "Q37", "Q61", "Q70", "Q113", "Q132"]),
            demo_holdout_ratio: 0.1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), BenchmarkError> {
        let overlap = |a: &[String], b: &[String]| -> Vec<String> {
            let a: BTreeSet<_> = a.iter().collect();
            b.iter().filter(|x| a.contains(x)).cloned().collect()
        };
        let c = overlap(&self.train_countries, &self.test_countries);
        if !c.is_empty() {
            return Err(BenchmarkError::InvalidSpec(format!(
                "countries in both train and test lists: {c:?}"
            )));
        }
        let q = overlap(&self.train_questions, &self.cross_value_questions);
        if !q.is_empty() {
            return Err(BenchmarkError::InvalidSpec(format!(
                "questions in both train and cross-value lists: {q:?}"
            )));
        }
        if !(0.0..=1.0).contains(&self.demo_holdout_ratio) {
            return Err(BenchmarkError::InvalidSpec(format!(
                "demo_holdout_ratio {} outside [0, 1]",
                self.demo_holdout_ratio
            )));
        }
        Ok(())
    }

    /// Whether a profile is held out for the cross-demographic test.
    pub fn holds_out(&self, fingerprint: &str) -> bool {
        unit_interval(hash64_parts(&[fingerprint, &self.seed.to_string()]))
            < self.demo_holdout_ratio
    }
}

/// Question fields copied into each sample so bundles are self-contained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSnapshot {
    pub id: String,
    pub text: String,
    pub scale_kind: ScaleKind,
    pub options: Vec<String>,
    pub concept: String,
}

impl From<&QuestionSpec> for QuestionSnapshot {
    fn from(q: &QuestionSpec) -> Self {
        QuestionSnapshot {
            id: q.id.clone(),
            text: q.text.clone(),
            scale_kind: q.scale_kind,
            options: q.option_labels.clone(),
            concept: q.concept.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSample {
    pub sample_id: String,
    pub profile: DemographicProfile,
    pub question: QuestionSnapshot,
    pub truth_label: String,
    pub truth_index: usize,
    pub k: usize,
    pub split: Split,
}

impl CorpusSample {
    pub fn from_record(record: &ConsensusRecord, q: &QuestionSpec, split: Split) -> Self {
        CorpusSample {
            sample_id: format!("{}-{}", record.profile.fingerprint(), q.id),
            profile: record.profile.clone(),
            question: q.into(),
            truth_label: record.answer_label.clone(),
            truth_index: record.answer_index,
            k: q.k(),
            split,
        }
    }
}

/// Lookup from sample id to sample.
#[derive(Debug, Clone, Default)]
pub struct CorpusIndex(HashMap<String, CorpusSample>);

impl CorpusIndex {
    pub fn new<'a>(samples: impl IntoIterator<Item = &'a CorpusSample>) -> Self {
        CorpusIndex(
            samples
                .into_iter()
                .map(|s| (s.sample_id.clone(), s.clone()))
                .collect(),
        )
    }

    pub fn get(&self, sample_id: &str) -> Option<&CorpusSample> {
        self.0.get(sample_id)
    }

    pub fn insert(&mut self, sample: CorpusSample) {
        self.0.insert(sample.sample_id.clone(), sample);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unassigned {
    /// Test-country records on cross-value questions.
    pub quarantined: usize,
    pub outside_countries: usize,
    pub outside_questions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub counts: BTreeMap<Split, usize>,
    pub train_profiles: usize,
    pub cross_demo_profiles: usize,
    pub unassigned: Unassigned,
    pub warnings: Vec<String>,
    pub spec: SplitSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusBundle {
    pub train: Vec<CorpusSample>,
    pub cross_demo: Vec<CorpusSample>,
    pub cross_country: Vec<CorpusSample>,
    pub cross_value: Vec<CorpusSample>,
    pub meta: BundleMeta,
}

impl CorpusBundle {
    pub fn split(&self, split: Split) -> &[CorpusSample] {
        match split {
            Split::Train => &self.train,
            Split::CrossDemo => &self.cross_demo,
            Split::CrossCountry => &self.cross_country,
            Split::CrossValue => &self.cross_value,
        }
    }

    fn split_mut(&mut self, split: Split) -> &mut Vec<CorpusSample> {
        match split {
            Split::Train => &mut self.train,
            Split::CrossDemo => &mut self.cross_demo,
            Split::CrossCountry => &mut self.cross_country,
            Split::CrossValue => &mut self.cross_value,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<(), BenchmarkError> {
        std::fs::create_dir_all(dir)?;
        for split in Split::ALL {
            jsonl::write(&dir.join(format!("{split}.jsonl")), self.split(split))?;
        }
        let meta = serde_json::to_string_pretty(&self.meta)?;
        std::fs::write(dir.join("bundle_meta.json"), meta + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self, BenchmarkError> {
        let meta: BundleMeta =
            serde_json::from_str(&std::fs::read_to_string(dir.join("bundle_meta.json"))?)?;
        Ok(CorpusBundle {
            train: jsonl::read(&dir.join("train.jsonl"))?,
            cross_demo: jsonl::read(&dir.join("cross_demo.jsonl"))?,
            cross_country: jsonl::read(&dir.join("cross_country.jsonl"))?,
            cross_value: jsonl::read(&dir.join("cross_value.jsonl"))?,
            meta,
        })
    }
}

/// Partitions consensus records into the four splits.
///
/// Test-country records go to `cross_country` (training questions only),
/// training-country records on cross-value questions go to `cross_value`,
/// and the remaining training records are divided by hashing the profile
/// key so that whole profiles land in either `train` or `cross_demo`.
pub fn build_splits(
    records: &[ConsensusRecord],
    codebook: &Codebook,
    spec: &SplitSpec,
) -> Result<CorpusBundle, BenchmarkError> {
    spec.validate()?;
    let train_c: BTreeSet<&str> = spec.train_countries.iter().map(String::as_str).collect();
    let test_c: BTreeSet<&str> = spec.test_countries.iter().map(String::as_str).collect();
    let train_q: BTreeSet<&str> = spec.train_questions.iter().map(String::as_str).collect();
    let value_q: BTreeSet<&str> = spec
        .cross_value_questions
        .iter()
        .map(String::as_str)
        .collect();

    let mut bundle = CorpusBundle {
        train: vec![],
        cross_demo: vec![],
        cross_country: vec![],
        cross_value: vec![],
        meta: BundleMeta {
            counts: BTreeMap::new(),
            train_profiles: 0,
            cross_demo_profiles: 0,
            unassigned: Unassigned::default(),
            warnings: vec![],
            spec: spec.clone(),
        },
    };
    let mut holdout_cache: HashMap<String, bool> = HashMap::new();
    let mut train_profiles = BTreeSet::new();
    let mut demo_profiles = BTreeSet::new();

    for r in records {
        let q = codebook
            .question(&r.question_id)
            .ok_or_else(|| BenchmarkError::UnknownQuestion(r.question_id.clone()))?;
        let country = r.profile.country.as_str();
        let qid = r.question_id.as_str();
        let split = if test_c.contains(country) {
            if train_q.contains(qid) {
                Split::CrossCountry
            } else {
                if value_q.contains(qid) {
                    bundle.meta.unassigned.quarantined += 1;
                } else {
                    bundle.meta.unassigned.outside_questions += 1;
                }
                continue;
            }
        } else if train_c.contains(country) {
            if value_q.contains(qid) {
                Split::CrossValue
            } else if train_q.contains(qid) {
                let fp = r.profile.fingerprint();
                let held = *holdout_cache
                    .entry(fp.clone())
                    .or_insert_with(|| spec.holds_out(&fp));
                if held {
                    demo_profiles.insert(fp);
                    Split::CrossDemo
                } else {
                    train_profiles.insert(fp);
                    Split::Train
                }
            } else {
                bundle.meta.unassigned.outside_questions += 1;
                continue;
            }
        } else {
            bundle.meta.unassigned.outside_countries += 1;
            continue;
        };
        bundle
            .split_mut(split)
            .push(CorpusSample::from_record(r, q, split));
    }

    for split in Split::ALL {
        let samples = bundle.split_mut(split);
        samples.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        let n = samples.len();
        bundle.meta.counts.insert(split, n);
        if n == 0 {
            let msg = format!("split {split} is empty");
            tracing::warn!(split = split.name(), "empty split");
            bundle.meta.warnings.push(msg);
        }
    }
    bundle.meta.train_profiles = train_profiles.len();
    bundle.meta.cross_demo_profiles = demo_profiles.len();
    Ok(bundle)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterfactualPair {
    pub original: CorpusSample,
    /// A probe: its truth fields are copied from `original` and not asserted.
    pub perturbed: CorpusSample,
    pub flipped_attribute: Attribute,
}

/// Inverts one attribute (currently only the income bracket, Low <-> High)
/// and pairs each eligible sample with its perturbed copy. Middle-income
/// samples have no inversion and are skipped.
pub fn make_counterfactual_pairs(
    samples: &[CorpusSample],
    attribute: Attribute,
) -> Result<Vec<CounterfactualPair>, BenchmarkError> {
    if attribute != Attribute::IncomeBracket {
        return Err(BenchmarkError::UnsupportedAttribute(
            attribute.name().into(),
        ));
    }
    let mut pairs = Vec::new();
    for s in samples {
        let inverted = match IncomeBracket::from_label(&s.profile.income_bracket) {
            Some(IncomeBracket::Low) => IncomeBracket::High,
            Some(IncomeBracket::High) => IncomeBracket::Low,
            _ => continue,
        };
        let mut perturbed = s.clone();
        perturbed.profile.set(attribute, inverted.label());
        perturbed.sample_id = format!("{}~cf-{}", s.sample_id, attribute.name());
        pairs.push(CounterfactualPair {
            original: s.clone(),
            perturbed,
            flipped_attribute: attribute,
        });
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn profile(country: &str, income: &str, religion: &str) -> DemographicProfile {
        DemographicProfile::from_pairs(Attribute::ALL.map(|a| {
            let v = match a {
                Attribute::Country => country,
                Attribute::IncomeBracket => income,
                Attribute::Religion => religion,
                _ => "x",
            };
            (a, v)
        }))
        .unwrap()
    }

    fn record(country: &str, qid: &str) -> ConsensusRecord {
        let cb = Codebook::default_wvs7();
        let q = cb.question(qid).unwrap();
        ConsensusRecord {
            profile: profile(country, "Low", "Muslim"),
            question_id: qid.into(),
            answer_label: q.option_labels[0].clone(),
            answer_index: 0,
            support: 1,
        }
    }

    #[test]
    fn fingerprint_properties() {
        let a = profile("CHN", "Low", "Buddhist");
        assert_eq!(profile_fingerprint(&a), profile_fingerprint(&a.clone()));
        let b = profile("CHN", "Low", "Muslim");
        assert_ne!(profile_fingerprint(&a), profile_fingerprint(&b));
        let mut pairs: Vec<_> = Attribute::ALL
            .iter()
            .map(|x| (*x, a.get(*x).to_string()))
            .collect();
        pairs.reverse();
        let shuffled = DemographicProfile::from_pairs(pairs).unwrap();
        assert_eq!(profile_fingerprint(&a), profile_fingerprint(&shuffled));
        assert_eq!(profile_fingerprint(&a).len(), 16);
    }

    #[test]
    fn routing_examples() {
        let cb = Codebook::default_wvs7();
        let bundle = build_splits(
            &[
                record("VNM", "Q46"),
                record("CHN", "Q61"),
                record("VNM", "Q61"),
                record("FRA", "Q46"),
            ],
            &cb,
            &SplitSpec::default(),
        )
        .unwrap();
        assert_eq!(bundle.cross_country.len(), 1);
        assert_eq!(bundle.cross_country[0].profile.country, "VNM");
        assert_eq!(bundle.cross_value.len(), 1);
        assert_eq!(bundle.cross_value[0].question.id, "Q61");
        assert_eq!(bundle.meta.unassigned.quarantined, 1);
        assert_eq!(bundle.meta.unassigned.outside_countries, 1);
        assert!(bundle.meta.warnings.iter().any(|w| w.contains("train")));
    }

    #[test]
    fn overlapping_spec_rejected() {
        let spec = SplitSpec {
            test_countries: vec!["CHN".into()],
            ..Default::default()
        };
        assert!(matches!(
            spec.validate(),
            Err(BenchmarkError::InvalidSpec(_))
        ));
        let spec = SplitSpec {
            demo_holdout_ratio: 1.2,
            ..Default::default()
        };
        assert!(spec.validate().is_err());
    }

    fn sample(income: &str) -> CorpusSample {
        let cb = Codebook::default_wvs7();
        let mut r = record("CHN", "Q46");
        r.profile.income_bracket = income.into();
        CorpusSample::from_record(&r, cb.question("Q46").unwrap(), Split::CrossDemo)
    }

    #[test]
    fn counterfactual_inverts_income_only() {
        let pairs = make_counterfactual_pairs(&[sample("Low")], Attribute::IncomeBracket).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].perturbed.profile.income_bracket, "High");
        assert_eq!(
            pairs[0].original.profile.diff(&pairs[0].perturbed.profile),
            vec![Attribute::IncomeBracket]
        );
        assert!(
            make_counterfactual_pairs(&[sample("Middle")], Attribute::IncomeBracket)
                .unwrap()
                .is_empty()
        );
    }

    #[test]
    fn counterfactual_counts() {
        let mut samples = vec![];
        samples.extend((0..4).map(|_| sample("Low")));
        samples.extend((0..3).map(|_| sample("High")));
        samples.extend((0..2).map(|_| sample("Middle")));
        let pairs = make_counterfactual_pairs(&samples, Attribute::IncomeBracket).unwrap();
        assert_eq!(pairs.len(), 7);
    }

    #[test]
    fn counterfactual_rejects_other_attributes() {
        assert!(matches!(
            make_counterfactual_pairs(&[sample("Low")], Attribute::Religion),
            Err(BenchmarkError::UnsupportedAttribute(_))
        ));
    }
}
