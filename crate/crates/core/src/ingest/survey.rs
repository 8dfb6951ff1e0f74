use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::codebook::{Codebook, Transform};
use crate::archetype::Attribute;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("required column {0:?} missing from header")]
    MissingColumn(String),
    #[error("row {row}, column {column:?}: cell {value:?} is not an integer code")]
    NonInteger {
        row: usize,
        column: String,
        value: String,
    },
}

/// One raw survey row. `answers` holds every coded column the codebook
/// knows (demographics other than country, and questions); `None` marks a
/// missing or coerced-to-missing code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Respondent {
    pub row_index: usize,
    pub country: String,
    pub answers: BTreeMap<String, Option<i64>>,
}

impl Respondent {
    pub fn code(&self, column: &str) -> Option<i64> {
        self.answers.get(column).copied().flatten()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub rows_read: usize,
    pub rows_kept: usize,
    /// Rows without a usable country code.
    pub rows_dropped: usize,
    /// Kept rows with at least one missing demographic field.
    pub rows_missing_demographics: usize,
    /// Cells holding a missing-value sentinel.
    pub missing_cells: usize,
    /// Cells outside their declared range, coerced to missing.
    pub out_of_range_coerced: usize,
    /// Codebook questions absent from the header.
    pub absent_question_columns: Vec<String>,
}

fn is_iso3(s: &str) -> bool {
    s.len() == 3 && s.bytes().all(|b| b.is_ascii_alphabetic())
}

fn parse_code(raw: &str, row: usize, column: &str) -> Result<Option<i64>, IngestError> {
    let cell = raw.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<i64>()
        .map(Some)
        .map_err(|_| IngestError::NonInteger {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        })
}

/// Parses CSV microdata against the codebook. Unknown columns are ignored.
///
/// Row order is preserved; `row_index` is the 0-based data row number.
pub fn parse_survey<R: Read>(
    reader: R,
    codebook: &Codebook,
) -> Result<(Vec<Respondent>, IngestStats), IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let position = |name: &str| header.iter().position(|h| h.trim() == name);

    let country_var = codebook.demographic(Attribute::Country);
    let country_col = position(&country_var.id)
        .ok_or_else(|| IngestError::MissingColumn(country_var.id.clone()))?;

    let mut demo_cols = Vec::new();
    for var in &codebook.demographics {
        if var.transform == Transform::Country {
            continue;
        }
        let col = position(&var.id).ok_or_else(|| IngestError::MissingColumn(var.id.clone()))?;
        demo_cols.push((var, col));
    }

    let mut stats = IngestStats::default();
    let mut question_cols = Vec::new();
    for q in &codebook.questions {
        match position(&q.id) {
            Some(col) => question_cols.push((q, col)),
            None => stats.absent_question_columns.push(q.id.clone()),
        }
    }

    let mut respondents = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        stats.rows_read += 1;
        let cell = |col: usize| record.get(col).unwrap_or("");

        let raw_country = cell(country_col).trim();
        let country = if is_iso3(raw_country) {
            Some(raw_country.to_ascii_uppercase())
        } else {
            match parse_code(raw_country, row, &country_var.id)? {
                Some(code) if codebook.is_missing(code) => {
                    stats.missing_cells += 1;
                    None
                }
                Some(code) => match country_var.label_for(code) {
                    Some(iso) => Some(iso.to_string()),
                    None => {
                        stats.out_of_range_coerced += 1;
                        None
                    }
                },
                None => None,
            }
        };

        let mut answers = BTreeMap::new();
        let mut any_demo_missing = false;
        for &(var, col) in &demo_cols {
            let value = match parse_code(cell(col), row, &var.id)? {
                Some(code) if codebook.is_missing(code) => {
                    stats.missing_cells += 1;
                    None
                }
                Some(code) if !var.accepts(code) => {
                    stats.out_of_range_coerced += 1;
                    None
                }
                other => other,
            };
            any_demo_missing |= value.is_none();
            answers.insert(var.id.clone(), value);
        }
        for &(q, col) in &question_cols {
            let value = match parse_code(cell(col), row, &q.id)? {
                Some(code) if codebook.is_missing(code) => {
                    stats.missing_cells += 1;
                    None
                }
                Some(code) if !q.in_range(code) => {
                    stats.out_of_range_coerced += 1;
                    None
                }
                other => other,
            };
            answers.insert(q.id.clone(), value);
        }

        let Some(country) = country else {
            stats.rows_dropped += 1;
            continue;
        };
        if any_demo_missing {
            stats.rows_missing_demographics += 1;
        }
        stats.rows_kept += 1;
        respondents.push(Respondent {
            row_index: row,
            country,
            answers,
        });
    }
    Ok((respondents, stats))
}

/// Writes respondents back out in the codebook's column layout. Missing
/// codes become empty cells.
pub fn respondents_to_csv(respondents: &[Respondent], codebook: &Codebook) -> Vec<u8> {
    let mut columns = vec![codebook.demographic(Attribute::Country).id.clone()];
    columns.extend(
        codebook
            .demographics
            .iter()
            .filter(|d| d.transform != Transform::Country)
            .map(|d| d.id.clone()),
    );
    columns.extend(codebook.questions.iter().map(|q| q.id.clone()));

    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(&columns).expect("in-memory write");
    for r in respondents {
        let mut row = vec![r.country.clone()];
        row.extend(columns[1..].iter().map(|c| match r.code(c) {
            Some(code) => code.to_string(),
            None => String::new(),
        }));
        wtr.write_record(&row).expect("in-memory write");
    }
    wtr.into_inner().expect("in-memory flush")
}
