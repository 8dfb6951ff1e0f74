use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::forest::{fit_forest, Dataset, Forest, ForestConfig, ForestError};
use crate::archetype::{derive_profile, discretize_response, Attribute, ConsensusRecord};
use crate::ingest::{Codebook, Respondent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importances {
    pub values: Vec<f64>,
    /// No split anywhere in the forest; `values` stays all zero.
    pub all_zero: bool,
}

/// Per-feature impurity decrease averaged over trees, normalized to sum 1.
pub fn mdi_importance(forest: &Forest) -> Importances {
    let mut values = vec![0.0; forest.n_features];
    for t in &forest.trees {
        for (v, x) in values.iter_mut().zip(&t.importance) {
            *v += x;
        }
    }
    let n = forest.trees.len().max(1) as f64;
    values.iter_mut().for_each(|v| *v /= n);
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Importances {
            values: vec![0.0; forest.n_features],
            all_zero: true,
        };
    }
    values.iter_mut().for_each(|v| *v /= total);
    Importances { values, all_zero: false }
}

fn feature_attributes(include_country: bool) -> Vec<Attribute> {
    Attribute::ALL
        .into_iter()
        .filter(|a| include_country || *a != Attribute::Country)
        .collect()
}

fn build(
    grouped: BTreeMap<String, Vec<(Vec<String>, usize)>>,
    codebook: &Codebook,
    attrs: &[Attribute],
) -> BTreeMap<String, Dataset> {
    let names: Vec<String> = attrs.iter().map(|a| a.name().to_string()).collect();
    grouped
        .into_iter()
        .filter_map(|(qid, samples)| {
            let k = codebook.question(&qid)?.k();
            Dataset::new(names.clone(), &samples, k).ok().map(|d| (qid, d))
        })
        .collect()
}

/// One dataset per question, one sample per consensus record.
pub fn datasets_from_records(
    records: &[ConsensusRecord],
    codebook: &Codebook,
    include_country: bool,
) -> BTreeMap<String, Dataset> {
    let attrs = feature_attributes(include_country);
    let mut grouped: BTreeMap<String, Vec<(Vec<String>, usize)>> = BTreeMap::new();
    for r in records {
        let row = attrs.iter().map(|a| r.profile.get(*a).to_string()).collect();
        grouped.entry(r.question_id.clone()).or_default().push((row, r.answer_index));
    }
    build(grouped, codebook, &attrs)
}

/// One dataset per question, one sample per respondent with a complete
/// profile and a usable answer.
pub fn datasets_from_respondents(
    respondents: &[Respondent],
    codebook: &Codebook,
    include_country: bool,
) -> BTreeMap<String, Dataset> {
    let attrs = feature_attributes(include_country);
    let mut grouped: BTreeMap<String, Vec<(Vec<String>, usize)>> = BTreeMap::new();
    for r in respondents {
        let Ok(profile) = derive_profile(r, codebook) else {
            continue;
        };
        let row: Vec<String> = attrs.iter().map(|a| profile.get(*a).to_string()).collect();
        for q in &codebook.questions {
            let Some(code) = r.code(&q.id) else { continue };
            if let Ok(answer) = discretize_response(q, code) {
                grouped.entry(q.id.clone()).or_default().push((row.clone(), answer.index));
            }
        }
    }
    build(grouped, codebook, &attrs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImportanceConfig {
    pub forest: ForestConfig,
    /// Questions with fewer samples are skipped.
    pub min_samples: usize,
    pub include_country: bool,
}

impl Default for ImportanceConfig {
    fn default() -> Self {
        ImportanceConfig {
            forest: ForestConfig::default(),
            min_samples: 30,
            include_country: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub question: String,
    pub n: usize,
    /// Aligned with `ImportanceMatrix::attributes`.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedQuestion {
    pub question: String,
    pub n: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceMatrix {
    pub attributes: Vec<String>,
    pub rows: Vec<ImportanceRow>,
    pub skipped: Vec<SkippedQuestion>,
    pub config: ImportanceConfig,
}

/// Fits one forest per question. Every emitted row sums to 1; questions
/// that are too small or admit no split are listed in `skipped`.
pub fn importance_matrix(
    datasets: &BTreeMap<String, Dataset>,
    cfg: &ImportanceConfig,
) -> Result<ImportanceMatrix, ForestError> {
    cfg.forest.validate()?;
    let attributes: Vec<String> = Attribute::ALL.iter().map(|a| a.name().to_string()).collect();
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (qid, data) in datasets {
        let skip = |reason: &str| SkippedQuestion {
            question: qid.clone(),
            n: data.len(),
            reason: reason.into(),
        };
        if data.len() < cfg.min_samples.max(1) {
            skipped.push(skip("below minimum sample count"));
            continue;
        }
        let forest = fit_forest(data, &cfg.forest)?;
        let imp = mdi_importance(&forest);
        if imp.all_zero {
            skipped.push(skip("no impurity-reducing split"));
            continue;
        }
        let mut values = vec![0.0; attributes.len()];
        for (name, v) in data.feature_names.iter().zip(&imp.values) {
            if let Some(col) = attributes.iter().position(|a| a == name) {
                values[col] = *v;
            }
        }
        rows.push(ImportanceRow {
            question: qid.clone(),
            n: data.len(),
            values,
        });
    }
    for s in &skipped {
        tracing::warn!(question = %s.question, n = s.n, reason = %s.reason, "question skipped");
    }
    Ok(ImportanceMatrix {
        attributes,
        rows,
        skipped,
        config: *cfg,
    })
}

impl ImportanceMatrix {
    /// Questions as rows, attributes as columns.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["question".to_string()];
        header.extend(self.attributes.iter().cloned());
        w.write_record(&header)?;
        for row in &self.rows {
            let mut record = vec![row.question.clone()];
            record.extend(row.values.iter().map(|v| format!("{v:.6}")));
            w.write_record(&record)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn row(&self, question: &str) -> Option<&ImportanceRow> {
        self.rows.iter().find(|r| r.question == question)
    }
}
