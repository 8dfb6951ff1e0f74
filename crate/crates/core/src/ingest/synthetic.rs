use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::codebook::{Codebook, Discretization, Transform};
use crate::archetype::{Attribute, DemographicProfile, IncomeBracket, LifeStage};
use crate::hashing::hash64_parts;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SyntheticError {
    #[error("synthetic spec lists no countries")]
    NoCountries,
    #[error("noise rate {0} outside [0, 1]")]
    Noise(f64),
    #[error("missing-demographic rate {0} outside [0, 1]")]
    MissingRate(f64),
    #[error("respondents_per_profile {0:?} must satisfy 1 <= min <= max")]
    RespondentRange([usize; 2]),
    #[error("question {0:?} is not in the codebook")]
    UnknownQuestion(String),
    #[error("country {0:?} is not an alpha-3 code")]
    InvalidCountry(String),
}

/// Which profile attributes determine the planted answer.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Planting {
    /// Every distinct profile gets its own answer per question.
    #[default]
    FullProfile,
    /// The answer depends only on these attributes.
    Attributes { attributes: Vec<Attribute> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub countries: Vec<String>,
    pub profiles_per_country: usize,
    /// Inclusive [min, max] respondents drawn per profile.
    pub respondents_per_profile: [usize; 2],
    /// Question ids to emit; `None` means every codebook question.
    pub questions: Option<Vec<String>>,
    /// Probability that an answer is replaced by a uniform raw code.
    pub noise: f64,
    pub planting: Planting,
    /// Caps on how many distinct values an attribute may take.
    pub attribute_cardinality: BTreeMap<Attribute, usize>,
    /// Probability that a demographic cell is emitted as missing (-1).
    pub demographic_missing_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            countries: [
                "BRA", "CAN", "CHN", "EGY", "DEU", "IND", "JPN", "RUS", "GBR", "USA", "AUS", "IDN",
                "IRN", "MEX", "NGA", "PAK", "TUR", "VNM",
            ]
            .map(String::from)
            .to_vec(),
            profiles_per_country: 20,
            respondents_per_profile: [1, 4],
            questions: None,
            noise: 0.0,
            planting: Planting::FullProfile,
            attribute_cardinality: BTreeMap::new(),
            demographic_missing_rate: 0.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self, codebook: &Codebook) -> Result<(), SyntheticError> {
        if self.countries.is_empty() {
            return Err(SyntheticError::NoCountries);
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(SyntheticError::Noise(self.noise));
        }
        if !(0.0..=1.0).contains(&self.demographic_missing_rate) {
            return Err(SyntheticError::MissingRate(self.demographic_missing_rate));
        }
        let [lo, hi] = self.respondents_per_profile;
        if lo == 0 || lo > hi {
            return Err(SyntheticError::RespondentRange(
                self.respondents_per_profile,
            ));
        }
        for c in &self.countries {
            if c.len() != 3 || !c.bytes().all(|b| b.is_ascii_uppercase()) {
                return Err(SyntheticError::InvalidCountry(c.clone()));
            }
        }
        if let Some(qs) = &self.questions {
            for q in qs {
                if codebook.question(q).is_none() {
                    return Err(SyntheticError::UnknownQuestion(q.clone()));
                }
            }
        }
        Ok(())
    }
}

/// Domain of one non-country attribute: (label, raw code sampler).
enum Domain {
    Codes(Vec<(String, i64)>),
    Stages(Vec<LifeStage>),
    Brackets(Vec<IncomeBracket>),
    Parenthood,
}

impl Domain {
    fn len(&self) -> usize {
        match self {
            Domain::Codes(c) => c.len(),
            Domain::Stages(s) => s.len(),
            Domain::Brackets(b) => b.len(),
            Domain::Parenthood => 2,
        }
    }

    fn label(&self, i: usize) -> String {
        match self {
            Domain::Codes(c) => c[i].0.clone(),
            Domain::Stages(s) => s[i].label().to_string(),
            Domain::Brackets(b) => b[i].label().to_string(),
            Domain::Parenthood => ["Has no children", "Has children"][i].to_string(),
        }
    }

    fn raw_code(&self, i: usize, rng: &mut ChaCha8Rng) -> i64 {
        match self {
            Domain::Codes(c) => c[i].1,
            Domain::Stages(s) => match s[i].bounds() {
                (0, Some(hi)) => rng.gen_range(15..hi),
                (lo, Some(hi)) => rng.gen_range(lo..hi),
                (lo, None) => rng.gen_range(lo..=lo + 25),
            },
            Domain::Brackets(b) => {
                let (lo, hi) = b[i].steps();
                rng.gen_range(lo..=hi)
            }
            Domain::Parenthood => {
                if i == 0 {
                    0
                } else {
                    rng.gen_range(1..=4)
                }
            }
        }
    }
}

fn domain_for(codebook: &Codebook, attr: Attribute, cap: Option<usize>) -> Domain {
    let var = codebook.demographic(attr);
    let mut domain = match var.transform {
        Transform::Age => Domain::Stages(LifeStage::ALL.to_vec()),
        Transform::Income => Domain::Brackets(IncomeBracket::ALL.to_vec()),
        Transform::Children => Domain::Parenthood,
        _ => Domain::Codes(
            var.labeled_codes()
                .into_iter()
                .map(|c| (var.label_for(c).unwrap().to_string(), c))
                .collect(),
        ),
    };
    if let Some(cap) = cap {
        let cap = cap.max(1);
        match &mut domain {
            Domain::Codes(c) => c.truncate(cap),
            Domain::Stages(s) => s.truncate(cap),
            Domain::Brackets(b) => b.truncate(cap),
            Domain::Parenthood => {}
        }
    }
    domain
}

/// Generates survey CSV text with planted per-profile answers.
///
/// With `noise == 0` every (profile, question) group is unanimous after
/// response discretization; raw codes on 1-10 scales still vary within the
/// planted bucket. Output is a pure function of (spec, codebook, seed).
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    codebook: &Codebook,
    seed: u64,
) -> Result<String, SyntheticError> {
    spec.validate(codebook)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seed_text = seed.to_string();

    let attrs: Vec<Attribute> = Attribute::ALL[1..].to_vec();
    let domains: Vec<Domain> = attrs
        .iter()
        .map(|a| domain_for(codebook, *a, spec.attribute_cardinality.get(a).copied()))
        .collect();
    let questions: Vec<_> = match &spec.questions {
        Some(ids) => ids
            .iter()
            .map(|id| codebook.question(id).unwrap())
            .collect(),
        None => codebook.questions.iter().collect(),
    };
    let demo_vars: Vec<_> = attrs.iter().map(|a| codebook.demographic(*a)).collect();

    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec![codebook.demographic(Attribute::Country).id.clone()];
    header.extend(demo_vars.iter().map(|v| v.id.clone()));
    header.extend(questions.iter().map(|q| q.id.clone()));
    header.push("RESPONDENT_ID".into());
    wtr.write_record(&header).expect("in-memory write");

    let profile_space: usize = domains.iter().map(Domain::len).product();
    let mut respondent_id = 0usize;
    for country in &spec.countries {
        let target = spec.profiles_per_country.min(profile_space);
        let mut seen = BTreeSet::new();
        let mut attempts = 0;
        while seen.len() < target && attempts < target * 50 {
            attempts += 1;
            let choice: Vec<usize> = domains.iter().map(|d| rng.gen_range(0..d.len())).collect();
            if !seen.insert(choice.clone()) {
                continue;
            }
            let mut profile = DemographicProfile::default();
            profile.set(Attribute::Country, country.clone());
            for ((attr, dom), &i) in attrs.iter().zip(&domains).zip(&choice) {
                profile.set(*attr, dom.label(i));
            }
            let key = match &spec.planting {
                Planting::FullProfile => profile.canonical_string(),
                Planting::Attributes { attributes } => profile.projection(attributes),
            };
            let planted: Vec<usize> = questions
                .iter()
                .map(|q| (hash64_parts(&[&seed_text, &q.id, &key]) % q.k() as u64) as usize)
                .collect();

            let [lo, hi] = spec.respondents_per_profile;
            let n = rng.gen_range(lo..=hi);
            for _ in 0..n {
                let mut row = vec![country.clone()];
                for (dom, &i) in domains.iter().zip(&choice) {
                    let code = dom.raw_code(i, &mut rng);
                    if spec.demographic_missing_rate > 0.0
                        && rng.gen_bool(spec.demographic_missing_rate)
                    {
                        row.push("-1".into());
                    } else {
                        row.push(code.to_string());
                    }
                }
                for (q, &idx) in questions.iter().zip(&planted) {
                    let code = if spec.noise > 0.0 && rng.gen_bool(spec.noise) {
                        rng.gen_range(q.lo()..=q.hi())
                    } else {
                        match q.discretization() {
                            Discretization::Identity => q.lo() + idx as i64,
                            Discretization::Tertile => {
                                let (a, b) = [(1, 3), (4, 7), (8, 10)][idx];
                                rng.gen_range(a..=b)
                            }
                        }
                    };
                    row.push(code.to_string());
                }
                row.push(respondent_id.to_string());
                respondent_id += 1;
                wtr.write_record(&row).expect("in-memory write");
            }
        }
    }
    let bytes = wtr.into_inner().expect("in-memory flush");
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
