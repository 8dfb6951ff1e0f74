use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The 11 profile attributes, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Country,
    Gender,
    LifeStage,
    Language,
    MaritalStatus,
    Parenthood,
    Education,
    Occupation,
    WorkNature,
    IncomeBracket,
    Religion,
}

impl Attribute {
    pub const ALL: [Attribute; 11] = [
        Attribute::Country,
        Attribute::Gender,
        Attribute::LifeStage,
        Attribute::Language,
        Attribute::MaritalStatus,
        Attribute::Parenthood,
        Attribute::Education,
        Attribute::Occupation,
        Attribute::WorkNature,
        Attribute::IncomeBracket,
        Attribute::Religion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Country => "country",
            Attribute::Gender => "gender",
            Attribute::LifeStage => "life_stage",
            Attribute::Language => "language",
            Attribute::MaritalStatus => "marital_status",
            Attribute::Parenthood => "parenthood",
            Attribute::Education => "education",
            Attribute::Occupation => "occupation",
            Attribute::WorkNature => "work_nature",
            Attribute::IncomeBracket => "income_bracket",
            Attribute::Religion => "religion",
        }
    }

    pub fn index(self) -> usize {
        Attribute::ALL.iter().position(|a| *a == self).unwrap()
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown attribute {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LifeStage {
    Adolescence,
    Young,
    Middle,
    Late,
    Older,
}

impl LifeStage {
    pub const ALL: [LifeStage; 5] = [
        LifeStage::Adolescence,
        LifeStage::Young,
        LifeStage::Middle,
        LifeStage::Late,
        LifeStage::Older,
    ];

    pub fn label(self) -> &'static str {
        match self {
            LifeStage::Adolescence => "Adolescence",
            LifeStage::Young => "Young Adulthood",
            LifeStage::Middle => "Middle Adulthood",
            LifeStage::Late => "Late Adulthood",
            LifeStage::Older => "Older Adulthood",
        }
    }

    /// Half-open year bounds `[lo, hi)`; the last stage is open-ended.
    pub fn bounds(self) -> (i64, Option<i64>) {
        match self {
            LifeStage::Adolescence => (0, Some(18)),
            LifeStage::Young => (18, Some(35)),
            LifeStage::Middle => (35, Some(51)),
            LifeStage::Late => (51, Some(65)),
            LifeStage::Older => (65, None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IncomeBracket {
    Low,
    Middle,
    High,
}

impl IncomeBracket {
    pub const ALL: [IncomeBracket; 3] = [
        IncomeBracket::Low,
        IncomeBracket::Middle,
        IncomeBracket::High,
    ];

    pub fn label(self) -> &'static str {
        match self {
            IncomeBracket::Low => "Low",
            IncomeBracket::Middle => "Middle",
            IncomeBracket::High => "High",
        }
    }

    pub fn steps(self) -> (i64, i64) {
        match self {
            IncomeBracket::Low => (1, 3),
            IncomeBracket::Middle => (4, 7),
            IncomeBracket::High => (8, 10),
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        IncomeBracket::ALL.into_iter().find(|b| b.label() == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parenthood {
    HasNoChildren,
    HasChildren,
}

impl Parenthood {
    pub fn label(self) -> &'static str {
        match self {
            Parenthood::HasNoChildren => "Has no children",
            Parenthood::HasChildren => "Has children",
        }
    }
}

/// An 11-attribute demographic archetype. Every field holds the
/// post-discretization label; country holds the ISO alpha-3 code.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemographicProfile {
    pub country: String,
    pub gender: String,
    pub life_stage: String,
    pub language: String,
    pub marital_status: String,
    pub parenthood: String,
    pub education: String,
    pub occupation: String,
    pub work_nature: String,
    pub income_bracket: String,
    pub religion: String,
}

impl DemographicProfile {
    pub fn get(&self, attr: Attribute) -> &str {
        match attr {
            Attribute::Country => &self.country,
            Attribute::Gender => &self.gender,
            Attribute::LifeStage => &self.life_stage,
            Attribute::Language => &self.language,
            Attribute::MaritalStatus => &self.marital_status,
            Attribute::Parenthood => &self.parenthood,
            Attribute::Education => &self.education,
            Attribute::Occupation => &self.occupation,
            Attribute::WorkNature => &self.work_nature,
            Attribute::IncomeBracket => &self.income_bracket,
            Attribute::Religion => &self.religion,
        }
    }

    pub fn set(&mut self, attr: Attribute, value: impl Into<String>) {
        let value = value.into();
        match attr {
            Attribute::Country => self.country = value,
            Attribute::Gender => self.gender = value,
            Attribute::LifeStage => self.life_stage = value,
            Attribute::Language => self.language = value,
            Attribute::MaritalStatus => self.marital_status = value,
            Attribute::Parenthood => self.parenthood = value,
            Attribute::Education => self.education = value,
            Attribute::Occupation => self.occupation = value,
            Attribute::WorkNature => self.work_nature = value,
            Attribute::IncomeBracket => self.income_bracket = value,
            Attribute::Religion => self.religion = value,
        }
    }

    /// Builds a profile from (attribute, label) pairs in any order.
    /// Returns `None` unless every attribute is supplied.
    pub fn from_pairs<I, S>(pairs: I) -> Option<Self>
    where
        I: IntoIterator<Item = (Attribute, S)>,
        S: Into<String>,
    {
        let mut slots: [Option<String>; 11] = Default::default();
        for (attr, value) in pairs {
            slots[attr.index()] = Some(value.into());
        }
        let mut profile = DemographicProfile::default();
        for (attr, slot) in Attribute::ALL.into_iter().zip(slots) {
            profile.set(attr, slot?);
        }
        Some(profile)
    }

    /// Attributes on which two profiles disagree.
    pub fn diff(&self, other: &DemographicProfile) -> Vec<Attribute> {
        Attribute::ALL
            .into_iter()
            .filter(|a| self.get(*a) != other.get(*a))
            .collect()
    }

    /// Canonical serialization: fixed field order, lowercase labels.
    pub fn canonical_string(&self) -> String {
        Attribute::ALL
            .iter()
            .map(|a| format!("{}={}", a.name(), self.get(*a).to_lowercase()))
            .collect::<Vec<_>>()
            .join("|")
    }

    /// 64-bit hex key of the canonical serialization.
    pub fn fingerprint(&self) -> String {
        format!(
            "{:016x}",
            crate::hashing::hash64(self.canonical_string().as_bytes())
        )
    }

    /// Values of the given attributes joined with `|`.
    pub fn projection(&self, attrs: &[Attribute]) -> String {
        attrs
            .iter()
            .map(|a| self.get(*a))
            .collect::<Vec<_>>()
            .join("|")
    }
}
