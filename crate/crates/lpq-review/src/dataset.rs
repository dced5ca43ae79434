//! Domain types: the review matrix, solver parameters, and validation.
//!
//! A dataset is a complete reviewer × paper matrix. Every cell holds the
//! criteria score vector (d values in [0, 10]) and the overall recommendation
//! (one value in [0, 10]). Score-vector equality is exact on the parsed
//! values; there is no epsilon matching, so pooling semantics stay
//! unambiguous.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Inclusive range every score and recommendation must lie in.
pub const VALUE_RANGE: (f64, f64) = (0.0, 10.0);

/// One review: criteria scores plus the overall recommendation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewCell {
    pub scores: Vec<f64>,
    pub recommendation: f64,
}

impl ReviewCell {
    pub fn new(scores: Vec<f64>, recommendation: f64) -> Self {
        Self {
            scores,
            recommendation,
        }
    }
}

/// Identifies a cell by dense indices.
pub type CellId = (usize, usize);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error("dataset dimensions must be positive (reviewers={reviewers}, papers={papers}, criteria={criteria})")]
    InvalidDimensions {
        reviewers: usize,
        papers: usize,
        criteria: usize,
    },
    #[error("missing cell for reviewer {reviewer}, paper {paper}")]
    MissingCell { reviewer: usize, paper: usize },
    #[error("duplicate cell for reviewer {reviewer}, paper {paper}")]
    DuplicateCell { reviewer: usize, paper: usize },
    #[error("cell ({reviewer}, {paper}) is out of bounds for the declared matrix")]
    CellOutOfBounds { reviewer: usize, paper: usize },
    #[error("cell ({reviewer}, {paper}) has {got} criteria scores, expected {expected}")]
    WrongArity {
        reviewer: usize,
        paper: usize,
        expected: usize,
        got: usize,
    },
    #[error("cell ({reviewer}, {paper}) holds value {value} outside [0, 10]")]
    OutOfRange {
        reviewer: usize,
        paper: usize,
        value: f64,
    },
    #[error("reviewer {reviewer} gave identical score vectors to papers {paper_a} and {paper_b} but different recommendations")]
    InconsistentRecommendation {
        reviewer: usize,
        paper_a: usize,
        paper_b: usize,
    },
    #[error("reviewer {reviewer} is not monotone: paper {paper_low} scores at most paper {paper_high} yet gets a higher recommendation")]
    MonotonicityViolation {
        reviewer: usize,
        paper_low: usize,
        paper_high: usize,
    },
    #[error("exponent {value} is invalid; p and q must be finite and at least 1")]
    InvalidExponent { value: f64 },
    #[error("tolerance {value} is invalid; must be a positive finite number")]
    InvalidTolerance { value: f64 },
}

/// Exponents, optimizer tolerance, and the audit seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub p: f64,
    pub q: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Params {
    pub const DEFAULT_TOLERANCE: f64 = 1e-8;

    pub fn new(p: f64, q: f64) -> Result<Self, ValidationError> {
        for &e in &[p, q] {
            if !e.is_finite() || e < 1.0 {
                return Err(ValidationError::InvalidExponent { value: e });
            }
        }
        Ok(Self {
            p,
            q,
            tolerance: Self::DEFAULT_TOLERANCE,
            seed: 0,
        })
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Result<Self, ValidationError> {
        if !tolerance.is_finite() || tolerance <= 0.0 {
            return Err(ValidationError::InvalidTolerance { value: tolerance });
        }
        self.tolerance = tolerance;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Recorded (non-fatal) breach of a single reviewer's monotonicity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityWarning {
    pub reviewer: usize,
    pub paper_low: usize,
    pub paper_high: usize,
    pub rec_low: f64,
    pub rec_high: f64,
}

/// Unvalidated review data, keyed by (reviewer, paper).
#[derive(Debug, Clone, Default)]
pub struct RawDataset {
    pub num_reviewers: usize,
    pub num_papers: usize,
    pub num_criteria: usize,
    pub cells: BTreeMap<CellId, ReviewCell>,
}

/// Complete, validated reviewer × paper matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "SerDataset")]
pub struct ReviewDataset {
    num_reviewers: usize,
    num_papers: usize,
    num_criteria: usize,
    cells: Vec<ReviewCell>,
    #[serde(skip)]
    warnings: Vec<MonotonicityWarning>,
}

impl<'de> Deserialize<'de> for ReviewDataset {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let ser = SerDataset::deserialize(deserializer)?;
        ReviewDataset::try_from(ser).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct SerDataset {
    num_reviewers: usize,
    num_papers: usize,
    num_criteria: usize,
    cells: Vec<ReviewCell>,
}

impl From<ReviewDataset> for SerDataset {
    fn from(ds: ReviewDataset) -> Self {
        Self {
            num_reviewers: ds.num_reviewers,
            num_papers: ds.num_papers,
            num_criteria: ds.num_criteria,
            cells: ds.cells,
        }
    }
}

impl TryFrom<SerDataset> for ReviewDataset {
    type Error = ValidationError;

    fn try_from(ser: SerDataset) -> Result<Self, ValidationError> {
        let mut raw = RawDataset {
            num_reviewers: ser.num_reviewers,
            num_papers: ser.num_papers,
            num_criteria: ser.num_criteria,
            cells: BTreeMap::new(),
        };
        let mut it = ser.cells.into_iter();
        for i in 0..ser.num_reviewers {
            for a in 0..ser.num_papers {
                match it.next() {
                    Some(cell) => {
                        raw.cells.insert((i, a), cell);
                    }
                    None => return Err(ValidationError::MissingCell {
                        reviewer: i,
                        paper: a,
                    }),
                }
            }
        }
        validate_dataset(raw, false)
    }
}

/// Checks every dataset invariant and, in `strict` mode, also rejects
/// per-reviewer monotonicity violations instead of recording them.
pub fn validate_dataset(
    raw: RawDataset,
    strict: bool,
) -> Result<ReviewDataset, ValidationError> {
    let (n, m, d) = (raw.num_reviewers, raw.num_papers, raw.num_criteria);
    if n == 0 || m == 0 || d == 0 {
        return Err(ValidationError::InvalidDimensions {
            reviewers: n,
            papers: m,
            criteria: d,
        });
    }
    for (&(i, a), _) in &raw.cells {
        if i >= n || a >= m {
            return Err(ValidationError::CellOutOfBounds {
                reviewer: i,
                paper: a,
            });
        }
    }
    let mut cells = Vec::with_capacity(n * m);
    for i in 0..n {
        for a in 0..m {
            let cell = raw
                .cells
                .get(&(i, a))
                .ok_or(ValidationError::MissingCell {
                    reviewer: i,
                    paper: a,
                })?;
            if cell.scores.len() != d {
                return Err(ValidationError::WrongArity {
                    reviewer: i,
                    paper: a,
                    expected: d,
                    got: cell.scores.len(),
                });
            }
            let mut canon = cell.clone();
            for v in canon
                .scores
                .iter_mut()
                .chain(std::iter::once(&mut canon.recommendation))
            {
                if !(VALUE_RANGE.0..=VALUE_RANGE.1).contains(v) {
                    return Err(ValidationError::OutOfRange {
                        reviewer: i,
                        paper: a,
                        value: *v,
                    });
                }
                // fold -0.0 into +0.0 so exact-equality pooling is stable
                if *v == 0.0 {
                    *v = 0.0;
                }
            }
            cells.push(canon);
        }
    }

    let mut warnings = Vec::new();
    for i in 0..n {
        for a in 0..m {
            for b in 0..m {
                if a == b {
                    continue;
                }
                let ca = &cells[i * m + a];
                let cb = &cells[i * m + b];
                if ca.scores == cb.scores {
                    if a < b && ca.recommendation != cb.recommendation {
                        return Err(ValidationError::InconsistentRecommendation {
                            reviewer: i,
                            paper_a: a,
                            paper_b: b,
                        });
                    }
                } else if componentwise_le(&ca.scores, &cb.scores)
                    && ca.recommendation > cb.recommendation
                {
                    if strict {
                        return Err(ValidationError::MonotonicityViolation {
                            reviewer: i,
                            paper_low: a,
                            paper_high: b,
                        });
                    }
                    warnings.push(MonotonicityWarning {
                        reviewer: i,
                        paper_low: a,
                        paper_high: b,
                        rec_low: ca.recommendation,
                        rec_high: cb.recommendation,
                    });
                }
            }
        }
    }

    Ok(ReviewDataset {
        num_reviewers: n,
        num_papers: m,
        num_criteria: d,
        cells,
        warnings,
    })
}

/// `a[k] <= b[k]` for every coordinate.
pub fn componentwise_le(a: &[f64], b: &[f64]) -> bool {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).all(|(x, y)| x <= y)
}

impl ReviewDataset {
    /// Builds and validates a dataset from `(reviewer, paper, scores, rec)`
    /// tuples. Every matrix cell must appear exactly once.
    pub fn from_cells(
        num_reviewers: usize,
        num_papers: usize,
        num_criteria: usize,
        entries: impl IntoIterator<Item = (usize, usize, Vec<f64>, f64)>,
    ) -> Result<Self, ValidationError> {
        let mut raw = RawDataset {
            num_reviewers,
            num_papers,
            num_criteria,
            cells: BTreeMap::new(),
        };
        for (i, a, scores, rec) in entries {
            if raw
                .cells
                .insert((i, a), ReviewCell::new(scores, rec))
                .is_some()
            {
                return Err(ValidationError::DuplicateCell {
                    reviewer: i,
                    paper: a,
                });
            }
        }
        validate_dataset(raw, false)
    }

    /// Hidden-scores dataset: paper `a` gets the common vector
    /// `score_vectors[a]` from every reviewer; `columns[a][i]` is the
    /// recommendation of reviewer `i` for paper `a`.
    pub fn hidden_from_columns(
        score_vectors: &[Vec<f64>],
        columns: &[Vec<f64>],
    ) -> Result<Self, ValidationError> {
        assert_eq!(score_vectors.len(), columns.len());
        let m = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        let d = score_vectors.first().map_or(0, Vec::len);
        let mut entries = Vec::with_capacity(n * m);
        for (a, col) in columns.iter().enumerate() {
            assert_eq!(col.len(), n, "ragged recommendation column");
            for (i, &rec) in col.iter().enumerate() {
                entries.push((i, a, score_vectors[a].clone(), rec));
            }
        }
        Self::from_cells(n, m, d, entries)
    }

    pub fn num_reviewers(&self) -> usize {
        self.num_reviewers
    }

    pub fn num_papers(&self) -> usize {
        self.num_papers
    }

    pub fn num_criteria(&self) -> usize {
        self.num_criteria
    }

    pub fn cell(&self, reviewer: usize, paper: usize) -> &ReviewCell {
        &self.cells[reviewer * self.num_papers + paper]
    }

    pub fn scores(&self, reviewer: usize, paper: usize) -> &[f64] {
        &self.cell(reviewer, paper).scores
    }

    pub fn recommendation(&self, reviewer: usize, paper: usize) -> f64 {
        self.cell(reviewer, paper).recommendation
    }

    /// Recommendation row of one reviewer, indexed by paper.
    pub fn recommendation_row(&self, reviewer: usize) -> Vec<f64> {
        (0..self.num_papers)
            .map(|a| self.recommendation(reviewer, a))
            .collect()
    }

    /// Recommendation column of one paper, indexed by reviewer.
    pub fn recommendation_column(&self, paper: usize) -> Vec<f64> {
        (0..self.num_reviewers)
            .map(|i| self.recommendation(i, paper))
            .collect()
    }

    pub fn cell_ids(&self) -> impl Iterator<Item = CellId> + '_ {
        let m = self.num_papers;
        (0..self.num_reviewers).flat_map(move |i| (0..m).map(move |a| (i, a)))
    }

    pub fn warnings(&self) -> &[MonotonicityWarning] {
        &self.warnings
    }

    /// Returns a revalidated copy with one recommendation replaced.
    pub fn with_recommendation(
        &self,
        reviewer: usize,
        paper: usize,
        rec: f64,
    ) -> Result<Self, ValidationError> {
        let mut cell = self.cell(reviewer, paper).clone();
        cell.recommendation = rec;
        self.with_cell(reviewer, paper, cell)
    }

    /// Returns a revalidated copy with one full cell replaced.
    pub fn with_cell(
        &self,
        reviewer: usize,
        paper: usize,
        cell: ReviewCell,
    ) -> Result<Self, ValidationError> {
        let mut raw = RawDataset {
            num_reviewers: self.num_reviewers,
            num_papers: self.num_papers,
            num_criteria: self.num_criteria,
            cells: BTreeMap::new(),
        };
        for (i, a) in self.cell_ids() {
            raw.cells.insert((i, a), self.cell(i, a).clone());
        }
        raw.cells.insert((reviewer, paper), cell);
        validate_dataset(raw, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_cell(scores: Vec<f64>, rec: f64) -> Result<ReviewDataset, ValidationError> {
        ReviewDataset::from_cells(1, 1, scores.len(), vec![(0, 0, scores, rec)])
    }

    #[test]
    fn minimal_instance_is_valid() {
        let ds = one_cell(vec![5.0], 7.0).unwrap();
        assert_eq!(ds.num_reviewers(), 1);
        assert_eq!(ds.recommendation(0, 0), 7.0);
        assert!(ds.warnings().is_empty());
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        assert!(matches!(
            one_cell(vec![11.0], 5.0),
            Err(ValidationError::OutOfRange { .. })
        ));
        assert!(matches!(
            one_cell(vec![5.0], -0.5),
            Err(ValidationError::OutOfRange { .. })
        ));
        assert!(matches!(
            one_cell(vec![f64::NAN], 5.0),
            Err(ValidationError::OutOfRange { .. })
        ));
    }

    #[test]
    fn missing_cell_is_rejected() {
        let err = ReviewDataset::from_cells(
            2,
            2,
            1,
            vec![
                (0, 0, vec![1.0], 1.0),
                (0, 1, vec![2.0], 2.0),
                (1, 0, vec![3.0], 1.0),
            ],
        )
        .unwrap_err();
        assert_eq!(
            err,
            ValidationError::MissingCell {
                reviewer: 1,
                paper: 1
            }
        );
    }

    #[test]
    fn strict_mode_rejects_decreasing_reviewer() {
        let raw = |strict| {
            let mut cells = BTreeMap::new();
            cells.insert((0, 0), ReviewCell::new(vec![2.0], 5.0));
            cells.insert((0, 1), ReviewCell::new(vec![3.0], 4.0));
            validate_dataset(
                RawDataset {
                    num_reviewers: 1,
                    num_papers: 2,
                    num_criteria: 1,
                    cells,
                },
                strict,
            )
        };
        assert!(matches!(
            raw(true),
            Err(ValidationError::MonotonicityViolation { .. })
        ));
        let ds = raw(false).unwrap();
        assert_eq!(ds.warnings().len(), 1);
        assert_eq!(ds.warnings()[0].paper_low, 0);
    }

    #[test]
    fn equal_vectors_require_equal_recommendations() {
        let err = ReviewDataset::from_cells(
            1,
            2,
            1,
            vec![(0, 0, vec![4.0], 5.0), (0, 1, vec![4.0], 6.0)],
        )
        .unwrap_err();
        assert!(matches!(
            err,
            ValidationError::InconsistentRecommendation { .. }
        ));
    }

    #[test]
    fn interleaved_staircase_has_no_reviewer_violation() {
        let ds = crate::instances::consensus_counterexample();
        assert!(ds.warnings().is_empty());
    }

    #[test]
    fn dataset_roundtrips_through_serde() {
        let ds = crate::instances::consensus_counterexample();
        let json = serde_json::to_string(&ds).unwrap();
        let back: ReviewDataset = serde_json::from_str(&json).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn params_guard_exponents() {
        assert!(Params::new(0.5, 1.0).is_err());
        assert!(Params::new(1.0, f64::INFINITY).is_err());
        assert!(Params::new(1.5, 3.0).is_ok());
        assert!(Params::new(1.0, 1.0)
            .unwrap()
            .with_tolerance(0.0)
            .is_err());
    }
}
