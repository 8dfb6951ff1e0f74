//! Cosine distances from held-out questions to the training questions over
//! externally supplied embeddings, and their correlation with accuracy
//! gains.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::jsonl::{self, JsonlError};
use crate::metrics::{pearson, MetricsError};

#[derive(Debug, thiserror::Error)]
pub enum SemdistError {
    #[error("embedding table is empty")]
    EmptyTable,
    #[error("vector {id} has dimension {got}, expected {want}")]
    Dimension { id: String, got: usize, want: usize },
    #[error("vector {0} is zero or not finite")]
    BadVector(String),
    #[error("duplicate embedding id {0}")]
    Duplicate(String),
    #[error("no embedding for {0}")]
    Missing(String),
    #[error("training set is empty")]
    NoTrainQuestions,
    #[error("need at least 3 records with gains, got {0}")]
    TooFewGains(usize),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingEntry {
    pub id: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl EmbeddingTable {
    pub fn from_entries(entries: Vec<EmbeddingEntry>) -> Result<Self, SemdistError> {
        let dim = entries.first().ok_or(SemdistError::EmptyTable)?.vector.len();
        if dim == 0 {
            return Err(SemdistError::BadVector(entries[0].id.clone()));
        }
        let mut vectors = BTreeMap::new();
        for e in entries {
            if e.vector.len() != dim {
                return Err(SemdistError::Dimension {
                    id: e.id,
                    got: e.vector.len(),
                    want: dim,
                });
            }
            let n = norm(&e.vector);
            if !n.is_finite() || n == 0.0 {
                return Err(SemdistError::BadVector(e.id));
            }
            if vectors.contains_key(&e.id) {
                return Err(SemdistError::Duplicate(e.id));
            }
            vectors.insert(e.id, e.vector);
        }
        Ok(EmbeddingTable { dim, vectors })
    }

    /// One `{"id": ..., "vector": [...]}` object per line.
    pub fn from_jsonl<R: Read>(reader: R) -> Result<Self, SemdistError> {
        Self::from_entries(jsonl::from_reader(reader)?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Result<&[f64], SemdistError> {
        self.vectors
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| SemdistError::Missing(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }
}

/// `1 - cos(u, v)`, in `[0, 2]`.
pub fn cosine_distance(u: &[f64], v: &[f64]) -> Result<f64, SemdistError> {
    if u.len() != v.len() {
        return Err(SemdistError::Dimension {
            id: "<argument>".into(),
            got: v.len(),
            want: u.len(),
        });
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let (uu, vv) = (dot(u, u), dot(v, v));
    if uu == 0.0 || vv == 0.0 || !uu.is_finite() || !vv.is_finite() {
        return Err(SemdistError::BadVector("<argument>".into()));
    }
    // sqrt of the product (not product of sqrts) makes u = v and u = -v exact
    Ok((1.0 - dot(u, v) / (uu * vv).sqrt()).clamp(0.0, 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRecord {
    pub question_id: String,
    pub d_min: f64,
    pub d_avg: f64,
    pub nearest_train_id: String,
    pub gain: Option<f64>,
}

/// Minimum and mean distance from `test_id` to the training questions.
/// Equidistant neighbours resolve to the smallest id.
pub fn distance_profile(test_id: &str, train_ids: &[String], table: &EmbeddingTable) -> Result<DistanceRecord, SemdistError> {
    let train: BTreeSet<&str> = train_ids.iter().map(String::as_str).collect();
    if train.is_empty() {
        return Err(SemdistError::NoTrainQuestions);
    }
    let u = table.get(test_id)?;
    let mut nearest: Option<(f64, &str)> = None;
    let mut sum = 0.0;
    for id in &train {
        let d = cosine_distance(u, table.get(id)?)?;
        sum += d;
        // ids arrive sorted, so strict less-than keeps the smallest on ties
        if nearest.is_none_or(|(best, _)| d < best) {
            nearest = Some((d, id));
        }
    }
    let (d_min, nearest_id) = nearest.expect("non-empty training set");
    Ok(DistanceRecord {
        question_id: test_id.to_string(),
        d_min,
        // a rounded mean of equal values can land one ulp under the minimum
        d_avg: (sum / train.len() as f64).max(d_min),
        nearest_train_id: nearest_id.to_string(),
        gain: None,
    })
}

/// Distance records for every test question, with gains attached where
/// known.
pub fn analyze(
    test_ids: &[String],
    train_ids: &[String],
    table: &EmbeddingTable,
    gains: &BTreeMap<String, f64>,
) -> Result<Vec<DistanceRecord>, SemdistError> {
    test_ids
        .iter()
        .map(|id| {
            let mut r = distance_profile(id, train_ids, table)?;
            r.gain = gains.get(id).copied();
            Ok(r)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainCorrelation {
    pub n: usize,
    pub r_d_min: f64,
    pub r_d_avg: f64,
}

/// Pearson correlation of gains against `d_min` and against `d_avg`, over
/// records that carry a gain.
pub fn gain_distance_correlation(records: &[DistanceRecord]) -> Result<GainCorrelation, SemdistError> {
    let with_gain: Vec<(&DistanceRecord, f64)> = records.iter().filter_map(|r| r.gain.map(|g| (r, g))).collect();
    if with_gain.len() < 3 {
        return Err(SemdistError::TooFewGains(with_gain.len()));
    }
    let gains: Vec<f64> = with_gain.iter().map(|(_, g)| *g).collect();
    let d_min: Vec<f64> = with_gain.iter().map(|(r, _)| r.d_min).collect();
    let d_avg: Vec<f64> = with_gain.iter().map(|(r, _)| r.d_avg).collect();
    Ok(GainCorrelation {
        n: with_gain.len(),
        r_d_min: pearson(&d_min, &gains)?,
        r_d_avg: pearson(&d_avg, &gains)?,
    })
}

pub fn records_to_csv(records: &[DistanceRecord]) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["question_id", "d_min", "d_avg", "nearest_train_id", "gain"])?;
    for r in records {
        w.write_record([
            r.question_id.clone(),
            format!("{:.6}", r.d_min),
            format!("{:.6}", r.d_avg),
            r.nearest_train_id.clone(),
            r.gain.map(|g| g.to_string()).unwrap_or_default(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
