use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::archetype::Attribute;

/// The codebook shipped with the crate: 16 training questions, 7 cross-value
/// questions and the 11 demographic variables.
pub const DEFAULT_CODEBOOK_JSON: &str = include_str!("../../resources/codebook_wvs7.json");

/// Sentinel codes used when a codebook omits `missing_codes`. Any negative
/// code is treated as missing regardless.
pub const DEFAULT_MISSING_CODES: [i64; 5] = [-1, -2, -3, -4, -5];

#[derive(Debug, thiserror::Error)]
pub enum CodebookError {
    #[error("cannot read codebook {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("codebook does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("duplicate question id {0:?}")]
    DuplicateQuestion(String),
    #[error("question {0:?} has fewer than two options")]
    TooFewOptions(String),
    #[error("malformed raw range [{lo}, {hi}] for {id:?}")]
    MalformedRange { id: String, lo: i64, hi: i64 },
    #[error("question {id:?}: raw range [{lo}, {hi}] cannot map onto {k} options")]
    UnsupportedScale {
        id: String,
        lo: i64,
        hi: i64,
        k: usize,
    },
    #[error("demographic attribute {0} is not mapped to any column")]
    MissingDemographic(Attribute),
    #[error("demographic attribute {0} is mapped more than once")]
    DuplicateDemographic(Attribute),
    #[error("column {0:?} is declared more than once")]
    DuplicateColumn(String),
    #[error("demographic {id:?}: transform {transform:?} does not fit attribute {attribute}")]
    TransformMismatch {
        id: String,
        attribute: Attribute,
        transform: Transform,
    },
    #[error(
        "demographic {0:?}: categorical variable has no labels and does not allow unlabeled codes"
    )]
    NoLabels(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleKind {
    Nominal,
    Ordinal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionRole {
    #[default]
    Train,
    CrossValue,
}

/// How raw codes collapse onto option indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discretization {
    /// Code `lo + i` is option `i`.
    Identity,
    /// 1-10 scale onto Low (1-3), Medium (4-7), High (8-10).
    Tertile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionSpec {
    pub id: String,
    pub text: String,
    pub scale_kind: ScaleKind,
    pub raw_range: [i64; 2],
    pub option_labels: Vec<String>,
    #[serde(default)]
    pub concept: String,
    #[serde(default)]
    pub role: QuestionRole,
}

impl QuestionSpec {
    /// Option count after processing.
    pub fn k(&self) -> usize {
        self.option_labels.len()
    }

    pub fn lo(&self) -> i64 {
        self.raw_range[0]
    }

    pub fn hi(&self) -> i64 {
        self.raw_range[1]
    }

    pub fn in_range(&self, code: i64) -> bool {
        (self.lo()..=self.hi()).contains(&code)
    }

    pub fn discretization(&self) -> Discretization {
        if self.lo() == 1 && self.hi() == 10 && self.k() == 3 {
            Discretization::Tertile
        } else {
            Discretization::Identity
        }
    }

    pub fn option_index(&self, label: &str) -> Option<usize> {
        self.option_labels.iter().position(|l| l == label)
    }

    fn validate(&self) -> Result<(), CodebookError> {
        if self.k() < 2 {
            return Err(CodebookError::TooFewOptions(self.id.clone()));
        }
        let (lo, hi) = (self.lo(), self.hi());
        if lo > hi || lo < 0 {
            return Err(CodebookError::MalformedRange {
                id: self.id.clone(),
                lo,
                hi,
            });
        }
        let span = (hi - lo + 1) as usize;
        let tertile = lo == 1 && hi == 10 && self.k() == 3;
        if span != self.k() && !tertile {
            return Err(CodebookError::UnsupportedScale {
                id: self.id.clone(),
                lo,
                hi,
                k: self.k(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// Numeric ISO 3166 code looked up in `labels`, or an alpha-3 string.
    Country,
    /// Code passed through its label.
    Categorical,
    /// Age in years onto life stages.
    Age,
    /// 10-step income scale onto three brackets.
    Income,
    /// Number of children onto a parenthood flag.
    Children,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemographicVar {
    pub id: String,
    pub attribute: Attribute,
    pub transform: Transform,
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
    #[serde(default)]
    pub allow_unlabeled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_range: Option<[i64; 2]>,
}

impl DemographicVar {
    pub fn label_for(&self, code: i64) -> Option<&str> {
        self.labels.get(&code.to_string()).map(String::as_str)
    }

    /// Inclusive numeric range for the numeric transforms.
    pub fn numeric_range(&self) -> [i64; 2] {
        self.raw_range.unwrap_or(match self.transform {
            Transform::Age => [0, 120],
            Transform::Income => [1, 10],
            Transform::Children => [0, 24],
            Transform::Country | Transform::Categorical => [0, i64::MAX],
        })
    }

    /// Whether a non-missing code is valid for this variable.
    pub fn accepts(&self, code: i64) -> bool {
        match self.transform {
            Transform::Country => self.label_for(code).is_some(),
            Transform::Categorical => {
                self.label_for(code).is_some() || (self.allow_unlabeled && code >= 0)
            }
            Transform::Age | Transform::Income | Transform::Children => {
                let [lo, hi] = self.numeric_range();
                (lo..=hi).contains(&code)
            }
        }
    }

    /// Sorted numeric codes that carry labels.
    pub fn labeled_codes(&self) -> Vec<i64> {
        let mut codes: Vec<i64> = self.labels.keys().filter_map(|k| k.parse().ok()).collect();
        codes.sort_unstable();
        codes
    }

    fn validate(&self) -> Result<(), CodebookError> {
        let expected = match self.attribute {
            Attribute::Country => Transform::Country,
            Attribute::LifeStage => Transform::Age,
            Attribute::IncomeBracket => Transform::Income,
            Attribute::Parenthood => Transform::Children,
            _ => Transform::Categorical,
        };
        if self.transform != expected {
            return Err(CodebookError::TransformMismatch {
                id: self.id.clone(),
                attribute: self.attribute,
                transform: self.transform,
            });
        }
        if let Some([lo, hi]) = self.raw_range {
            if lo > hi {
                return Err(CodebookError::MalformedRange {
                    id: self.id.clone(),
                    lo,
                    hi,
                });
            }
        }
        if self.transform == Transform::Categorical
            && self.labels.is_empty()
            && !self.allow_unlabeled
        {
            return Err(CodebookError::NoLabels(self.id.clone()));
        }
        for key in self.labels.keys() {
            if key.parse::<i64>().is_err() {
                return Err(CodebookError::MalformedRange {
                    id: format!("{}:{key}", self.id),
                    lo: 0,
                    hi: -1,
                });
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCodebook {
    questions: Vec<QuestionSpec>,
    demographics: Vec<DemographicVar>,
    #[serde(default)]
    missing_codes: Option<BTreeSet<i64>>,
}

/// Validated, immutable codebook.
#[derive(Debug, Clone, Serialize)]
pub struct Codebook {
    pub questions: Vec<QuestionSpec>,
    pub demographics: Vec<DemographicVar>,
    pub missing_codes: BTreeSet<i64>,
    #[serde(skip)]
    question_index: HashMap<String, usize>,
    #[serde(skip)]
    attribute_index: HashMap<Attribute, usize>,
}

impl Codebook {
    pub fn from_json_str(text: &str) -> Result<Self, CodebookError> {
        let raw: RawCodebook = serde_json::from_str(text)?;
        Self::from_parts(raw.questions, raw.demographics, raw.missing_codes)
    }

    pub fn load(path: &Path) -> Result<Self, CodebookError> {
        let text = std::fs::read_to_string(path).map_err(|source| CodebookError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// The shipped WVS wave 7 codebook.
    pub fn default_wvs7() -> Self {
        Self::from_json_str(DEFAULT_CODEBOOK_JSON).expect("shipped codebook is valid")
    }

    pub fn from_parts(
        questions: Vec<QuestionSpec>,
        demographics: Vec<DemographicVar>,
        missing_codes: Option<BTreeSet<i64>>,
    ) -> Result<Self, CodebookError> {
        let mut question_index = HashMap::new();
        let mut columns = BTreeSet::new();
        for (i, q) in questions.iter().enumerate() {
            q.validate()?;
            if question_index.insert(q.id.clone(), i).is_some() {
                return Err(CodebookError::DuplicateQuestion(q.id.clone()));
            }
            columns.insert(q.id.clone());
        }
        let mut attribute_index = HashMap::new();
        for (i, d) in demographics.iter().enumerate() {
            d.validate()?;
            if attribute_index.insert(d.attribute, i).is_some() {
                return Err(CodebookError::DuplicateDemographic(d.attribute));
            }
            if !columns.insert(d.id.clone()) {
                return Err(CodebookError::DuplicateColumn(d.id.clone()));
            }
        }
        for attr in Attribute::ALL {
            if !attribute_index.contains_key(&attr) {
                return Err(CodebookError::MissingDemographic(attr));
            }
        }
        Ok(Codebook {
            questions,
            demographics,
            missing_codes: missing_codes
                .unwrap_or_else(|| DEFAULT_MISSING_CODES.into_iter().collect()),
            question_index,
            attribute_index,
        })
    }

    pub fn question(&self, id: &str) -> Option<&QuestionSpec> {
        self.question_index.get(id).map(|&i| &self.questions[i])
    }

    pub fn demographic(&self, attr: Attribute) -> &DemographicVar {
        &self.demographics[self.attribute_index[&attr]]
    }

    pub fn is_missing(&self, code: i64) -> bool {
        code < 0 || self.missing_codes.contains(&code)
    }

    pub fn questions_with_role(&self, role: QuestionRole) -> impl Iterator<Item = &QuestionSpec> {
        self.questions.iter().filter(move |q| q.role == role)
    }

    /// Stable JSON text of the validated codebook, for hashing and echoing.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("codebook serializes")
    }
}
