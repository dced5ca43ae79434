//! Review-file ingestion. CSV schema: header
//! `paper_id,reviewer_id,c1,...,cd,overall`, one row per review; the JSON
//! form mirrors it as an array of objects with a `scores` array. Ids are
//! arbitrary strings mapped to dense indices in lexicographic order, so
//! parsing is deterministic and round-trip stable.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{validate_dataset, RawDataset, ReviewCell, ReviewDataset, ValidationError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("header must be paper_id,reviewer_id,c1,...,cd,overall; got {got:?}")]
    BadHeader { got: Vec<String> },
    #[error("row {row}: field {field:?} is not a number")]
    NonNumeric { row: usize, field: String },
    #[error("duplicate review for paper {paper_id:?} by reviewer {reviewer_id:?}")]
    Duplicate {
        paper_id: String,
        reviewer_id: String,
    },
    #[error("no review rows found")]
    Empty,
    #[error(transparent)]
    Invalid(#[from] ValidationError),
}

/// One parsed review row, before id-to-index mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRow {
    pub paper_id: String,
    pub reviewer_id: String,
    pub scores: Vec<f64>,
    pub overall: f64,
}

/// A validated dataset plus the id tables that map dense indices back to
/// the input's paper/reviewer names.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReviews {
    pub dataset: ReviewDataset,
    pub paper_ids: Vec<String>,
    pub reviewer_ids: Vec<String>,
}

pub fn parse_reviews(path: &Path, format: Format) -> Result<ParsedReviews, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        Format::Csv => parse_reviews_csv(&text),
        Format::Json => parse_reviews_json(&text),
    }
}

/// Guesses the format from the extension, defaulting to CSV.
pub fn parse_reviews_auto(path: &Path) -> Result<ParsedReviews, IoError> {
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => Format::Json,
        _ => Format::Csv,
    };
    parse_reviews(path, format)
}

pub fn parse_reviews_csv(text: &str) -> Result<ParsedReviews, IoError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let cols: Vec<String> = headers.iter().map(str::to_string).collect();
    let d = cols.len().checked_sub(3).filter(|&d| d > 0).ok_or_else(|| {
        IoError::BadHeader { got: cols.clone() }
    })?;
    let mut expected = vec!["paper_id".to_string(), "reviewer_id".to_string()];
    expected.extend((1..=d).map(|j| format!("c{j}")));
    expected.push("overall".to_string());
    if cols != expected {
        return Err(IoError::BadHeader { got: cols });
    }

    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?; // ragged rows error out here
        let row_no = idx + 2; // header is line 1
        let parse_field = |field: &str| -> Result<f64, IoError> {
            field.parse::<f64>().map_err(|_| IoError::NonNumeric {
                row: row_no,
                field: field.to_string(),
            })
        };
        let scores = (0..d)
            .map(|j| parse_field(&record[2 + j]))
            .collect::<Result<Vec<f64>, IoError>>()?;
        rows.push(ReviewRow {
            paper_id: record[0].to_string(),
            reviewer_id: record[1].to_string(),
            scores,
            overall: parse_field(&record[2 + d])?,
        });
    }
    rows_to_dataset(rows)
}

pub fn parse_reviews_json(text: &str) -> Result<ParsedReviews, IoError> {
    let rows: Vec<ReviewRow> = serde_json::from_str(text)?;
    rows_to_dataset(rows)
}

fn rows_to_dataset(rows: Vec<ReviewRow>) -> Result<ParsedReviews, IoError> {
    if rows.is_empty() {
        return Err(IoError::Empty);
    }
    let mut paper_ids: Vec<String> = rows.iter().map(|r| r.paper_id.clone()).collect();
    paper_ids.sort();
    paper_ids.dedup();
    let mut reviewer_ids: Vec<String> = rows.iter().map(|r| r.reviewer_id.clone()).collect();
    reviewer_ids.sort();
    reviewer_ids.dedup();
    let paper_index: BTreeMap<&str, usize> = paper_ids
        .iter()
        .enumerate()
        .map(|(k, v)| (v.as_str(), k))
        .collect();
    let reviewer_index: BTreeMap<&str, usize> = reviewer_ids
        .iter()
        .enumerate()
        .map(|(k, v)| (v.as_str(), k))
        .collect();

    let d = rows[0].scores.len();
    let mut raw = RawDataset {
        num_reviewers: reviewer_ids.len(),
        num_papers: paper_ids.len(),
        num_criteria: d,
        cells: BTreeMap::new(),
    };
    for row in &rows {
        let key = (
            reviewer_index[row.reviewer_id.as_str()],
            paper_index[row.paper_id.as_str()],
        );
        if raw
            .cells
            .insert(key, ReviewCell::new(row.scores.clone(), row.overall))
            .is_some()
        {
            return Err(IoError::Duplicate {
                paper_id: row.paper_id.clone(),
                reviewer_id: row.reviewer_id.clone(),
            });
        }
    }
    let dataset = validate_dataset(raw, false)?;
    Ok(ParsedReviews {
        dataset,
        paper_ids,
        reviewer_ids,
    })
}

/// Renders a dataset back into the CSV schema (used for fixtures and
/// round-trip checks).
pub fn to_csv(ds: &ReviewDataset, paper_ids: &[String], reviewer_ids: &[String]) -> String {
    let d = ds.num_criteria();
    let mut out = String::from("paper_id,reviewer_id");
    for j in 1..=d {
        let _ = write!(out, ",c{j}");
    }
    out.push_str(",overall\n");
    for (i, a) in ds.cell_ids() {
        let _ = write!(out, "{},{}", paper_ids[a], reviewer_ids[i]);
        for x in ds.scores(i, a) {
            let _ = write!(out, ",{x}");
        }
        let _ = writeln!(out, ",{}", ds.recommendation(i, a));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;

    const STAIRCASE_CSV: &str = "\
paper_id,reviewer_id,c1,overall
a,r1,1,1
b,r1,2,2
a,r2,3,1
b,r2,4,2
";

    #[test]
    fn staircase_fixture_parses_to_the_instance() {
        let parsed = parse_reviews_csv(STAIRCASE_CSV).unwrap();
        assert_eq!(parsed.dataset, instances::consensus_counterexample());
        assert_eq!(parsed.paper_ids, vec!["a", "b"]);
        assert_eq!(parsed.reviewer_ids, vec!["r1", "r2"]);
    }

    #[test]
    fn csv_roundtrip_is_stable() {
        let parsed = parse_reviews_csv(STAIRCASE_CSV).unwrap();
        let rendered = to_csv(&parsed.dataset, &parsed.paper_ids, &parsed.reviewer_ids);
        let reparsed = parse_reviews_csv(&rendered).unwrap();
        assert_eq!(parsed.dataset, reparsed.dataset);
    }

    #[test]
    fn duplicate_row_names_the_pair() {
        let text = "paper_id,reviewer_id,c1,overall\na,r1,1,1\na,r1,2,2\nb,r1,2,2\n";
        match parse_reviews_csv(text) {
            Err(IoError::Duplicate {
                paper_id,
                reviewer_id,
            }) => {
                assert_eq!(paper_id, "a");
                assert_eq!(reviewer_id, "r1");
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn incomplete_matrix_is_rejected() {
        let text = "paper_id,reviewer_id,c1,overall\na,r1,1,1\nb,r1,2,2\na,r2,3,1\n";
        assert!(matches!(
            parse_reviews_csv(text),
            Err(IoError::Invalid(ValidationError::MissingCell { .. }))
        ));
    }

    #[test]
    fn ragged_and_non_numeric_rows_error() {
        let ragged = "paper_id,reviewer_id,c1,overall\na,r1,1\n";
        assert!(matches!(parse_reviews_csv(ragged), Err(IoError::Csv(_))));
        let non_numeric = "paper_id,reviewer_id,c1,overall\na,r1,x,1\n";
        assert!(matches!(
            parse_reviews_csv(non_numeric),
            Err(IoError::NonNumeric { row: 2, .. })
        ));
        let out_of_range = "paper_id,reviewer_id,c1,overall\na,r1,11,1\n";
        assert!(matches!(
            parse_reviews_csv(out_of_range),
            Err(IoError::Invalid(ValidationError::OutOfRange { .. }))
        ));
    }

    #[test]
    fn json_mirrors_csv() {
        let json = r#"[
            {"paper_id": "a", "reviewer_id": "r1", "scores": [1.0], "overall": 1.0},
            {"paper_id": "b", "reviewer_id": "r1", "scores": [2.0], "overall": 2.0},
            {"paper_id": "a", "reviewer_id": "r2", "scores": [3.0], "overall": 1.0},
            {"paper_id": "b", "reviewer_id": "r2", "scores": [4.0], "overall": 2.0}
        ]"#;
        let parsed = parse_reviews_json(json).unwrap();
        assert_eq!(parsed.dataset, instances::consensus_counterexample());
    }
}
