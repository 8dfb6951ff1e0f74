use serde::{Deserialize, Serialize};

use super::profile::{Attribute, DemographicProfile, IncomeBracket, LifeStage, Parenthood};
use crate::ingest::{Codebook, Discretization, QuestionSpec, Respondent, Transform};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DiscretizeError {
    #[error("negative age {0}")]
    NegativeAge(i64),
    #[error("income step {0} outside 1..=10")]
    IncomeStep(i64),
    #[error("negative number of children {0}")]
    NegativeChildren(i64),
    #[error("code {code} outside the raw range of {question}")]
    OutOfRange { question: String, code: i64 },
}

pub fn discretize_age(years: i64) -> Result<LifeStage, DiscretizeError> {
    if years < 0 {
        return Err(DiscretizeError::NegativeAge(years));
    }
    Ok(LifeStage::ALL
        .into_iter()
        .find(|s| match s.bounds() {
            (lo, Some(hi)) => (lo..hi).contains(&years),
            (lo, None) => years >= lo,
        })
        .expect("life stages cover [0, inf)"))
}

pub fn discretize_income(step: i64) -> Result<IncomeBracket, DiscretizeError> {
    IncomeBracket::ALL
        .into_iter()
        .find(|b| {
            let (lo, hi) = b.steps();
            (lo..=hi).contains(&step)
        })
        .ok_or(DiscretizeError::IncomeStep(step))
}

pub fn discretize_parenthood(children: i64) -> Result<Parenthood, DiscretizeError> {
    match children {
        c if c < 0 => Err(DiscretizeError::NegativeChildren(c)),
        0 => Ok(Parenthood::HasNoChildren),
        _ => Ok(Parenthood::HasChildren),
    }
}

/// A processed answer: 0-based option index and its label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub index: usize,
    pub label: String,
}

/// Maps a raw code onto the question's processed option order. 1-10 scales
/// bucket into thirds (1-3, 4-7, 8-10); short scales map one code per option.
pub fn discretize_response(q: &QuestionSpec, code: i64) -> Result<Answer, DiscretizeError> {
    if !q.in_range(code) {
        return Err(DiscretizeError::OutOfRange {
            question: q.id.clone(),
            code,
        });
    }
    let index = match q.discretization() {
        Discretization::Identity => (code - q.lo()) as usize,
        Discretization::Tertile => match code {
            1..=3 => 0,
            4..=7 => 1,
            _ => 2,
        },
    };
    Ok(Answer {
        index,
        label: q.option_labels[index].clone(),
    })
}

/// Why a respondent has no profile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileRejection {
    pub missing: Vec<Attribute>,
}

/// Builds the 11-attribute profile, applying the age, income and children
/// discretizers and label lookup for the categorical variables.
pub fn derive_profile(
    r: &Respondent,
    codebook: &Codebook,
) -> Result<DemographicProfile, ProfileRejection> {
    let mut missing = Vec::new();
    let mut pairs = Vec::with_capacity(11);
    for attr in Attribute::ALL {
        let var = codebook.demographic(attr);
        let label = match var.transform {
            Transform::Country => Some(r.country.clone()).filter(|c| !c.is_empty()),
            _ => r.code(&var.id).and_then(|code| match var.transform {
                Transform::Age => discretize_age(code).ok().map(|s| s.label().to_string()),
                Transform::Income => discretize_income(code).ok().map(|b| b.label().to_string()),
                Transform::Children => discretize_parenthood(code)
                    .ok()
                    .map(|p| p.label().to_string()),
                _ => match var.label_for(code) {
                    Some(l) => Some(l.to_string()),
                    None if var.allow_unlabeled && code >= 0 => Some(code.to_string()),
                    None => None,
                },
            }),
        };
        match label {
            Some(l) => pairs.push((attr, l)),
            None => missing.push(attr),
        }
    }
    if !missing.is_empty() {
        return Err(ProfileRejection { missing });
    }
    Ok(DemographicProfile::from_pairs(pairs).expect("all attributes present"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    #[test]
    fn age_bins() {
        assert_eq!(discretize_age(17).unwrap(), LifeStage::Adolescence);
        assert_eq!(discretize_age(18).unwrap(), LifeStage::Young);
        assert_eq!(discretize_age(34).unwrap(), LifeStage::Young);
        assert_eq!(discretize_age(35).unwrap(), LifeStage::Middle);
        assert_eq!(discretize_age(51).unwrap(), LifeStage::Late);
        assert_eq!(discretize_age(64).unwrap(), LifeStage::Late);
        assert_eq!(discretize_age(65).unwrap(), LifeStage::Older);
        assert_eq!(discretize_age(70).unwrap(), LifeStage::Older);
        assert_eq!(discretize_age(0).unwrap(), LifeStage::Adolescence);
        assert_eq!(discretize_age(-1), Err(DiscretizeError::NegativeAge(-1)));
    }

    #[test]
    fn income_brackets() {
        assert_eq!(discretize_income(2).unwrap(), IncomeBracket::Low);
        assert_eq!(discretize_income(3).unwrap(), IncomeBracket::Low);
        assert_eq!(discretize_income(4).unwrap(), IncomeBracket::Middle);
        assert_eq!(discretize_income(5).unwrap(), IncomeBracket::Middle);
        assert_eq!(discretize_income(8).unwrap(), IncomeBracket::High);
        assert_eq!(discretize_income(10).unwrap(), IncomeBracket::High);
        assert!(discretize_income(0).is_err());
        assert!(discretize_income(11).is_err());
    }

    #[test]
    fn parenthood() {
        assert_eq!(discretize_parenthood(0).unwrap(), Parenthood::HasNoChildren);
        assert_eq!(discretize_parenthood(1).unwrap(), Parenthood::HasChildren);
        assert_eq!(discretize_parenthood(6).unwrap(), Parenthood::HasChildren);
        assert!(discretize_parenthood(-1).is_err());
    }

    #[test]
    fn response_examples() {
        let cb = Codebook::default_wvs7();
        let q49 = cb.question("Q49").unwrap();
        assert_eq!(discretize_response(q49, 7).unwrap().label, "Medium");
        let q112 = cb.question("Q112").unwrap();
        assert_eq!(discretize_response(q112, 1).unwrap().label, "Low");
        assert_eq!(
            discretize_response(q112, 8).unwrap(),
            discretize_response(q112, 9).unwrap()
        );
        let q46 = cb.question("Q46").unwrap();
        let a = discretize_response(q46, 2).unwrap();
        assert_eq!((a.index, a.label.as_str()), (1, "Rather happy"));
        assert!(discretize_response(q46, 5).is_err());
    }

    fn respondent(codes: &[(&str, Option<i64>)]) -> Respondent {
        Respondent {
            row_index: 0,
            country: "CHN".into(),
            answers: codes
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect::<BTreeMap<_, _>>(),
        }
    }

    fn complete() -> Vec<(&'static str, Option<i64>)> {
        vec![
            ("Q260", Some(2)),
            ("Q262", Some(40)),
            ("Q272", Some(2)),
            ("Q273", Some(1)),
            ("Q274", Some(2)),
            ("Q275", Some(3)),
            ("Q279", Some(1)),
            ("Q284", Some(1)),
            ("Q288", Some(9)),
            ("Q289", Some(0)),
        ]
    }

    #[test]
    fn derive_complete_profile() {
        let cb = Codebook::default_wvs7();
        let p = derive_profile(&respondent(&complete()), &cb).unwrap();
        assert_eq!(p.life_stage, "Middle Adulthood");
        assert_eq!(p.income_bracket, "High");
        assert_eq!(p.gender, "Female");
        assert_eq!(p.country, "CHN");
        assert_eq!(p.parenthood, "Has children");
        assert_eq!(p.education, "Upper secondary education");
        assert_eq!(p.religion, "No religion");
    }

    #[test]
    fn derive_rejects_missing_religion() {
        let cb = Codebook::default_wvs7();
        let mut codes = complete();
        codes.retain(|(k, _)| *k != "Q289");
        let err = derive_profile(&respondent(&codes), &cb).unwrap_err();
        assert_eq!(err.missing, vec![Attribute::Religion]);
    }

    #[test]
    fn unlabeled_language_passes_through() {
        let cb = Codebook::default_wvs7();
        let mut codes = complete();
        codes[2] = ("Q272", Some(410010));
        let p = derive_profile(&respondent(&codes), &cb).unwrap();
        assert_eq!(p.language, "410010");
    }

    proptest! {
        #[test]
        fn tertile_is_monotone(a in 1i64..=10, b in 1i64..=10) {
            let cb = Codebook::default_wvs7();
            let q = cb.question("Q49").unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(discretize_response(q, lo).unwrap().index <= discretize_response(q, hi).unwrap().index);
        }
    }
}
