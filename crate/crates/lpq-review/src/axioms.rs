//! Axiom checkers: domination relations between papers, and the consensus /
//! efficiency / consistency / strategy-proofness checks (each in a plain
//! variant over recommendations only and a variant that also takes score
//! vectors into account). Every "violated" verdict carries a witness that
//! embeds the dataset, so it can be replayed bit-for-bit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    componentwise_le, Params, ReviewDataset, ValidationError,
};
use crate::solver::{aggregate, SolveError};

/// Weak comparisons get this slack, absorbing solver round-off.
pub const WEAK_TOL: f64 = 1e-6;
/// Strict comparisons must clear this margin.
pub const STRICT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axiom {
    Consensus,
    Efficiency,
    Consistency,
    StrategyProofness,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxiomMode {
    Plain,
    WithScores,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Violated,
    /// The axiom's premise never fired on this instance.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domination {
    None,
    Weak,
    Strict,
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("malformed misreport: {0}")]
    InvalidMisreport(#[from] ValidationError),
    #[error("recommendation vectors have different lengths ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
}

/// One reviewer's replacement report. `None` entries keep the honest value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Misreport {
    pub reviewer: usize,
    pub recommendations: Vec<Option<f64>>,
    pub score_vectors: Vec<Option<Vec<f64>>>,
}

impl Misreport {
    pub fn recommendations_only(reviewer: usize, recommendations: Vec<Option<f64>>) -> Self {
        let papers = recommendations.len();
        Self {
            reviewer,
            recommendations,
            score_vectors: vec![None; papers],
        }
    }

    /// The manipulated dataset; fails if the misreport breaks a dataset
    /// invariant (it may freely break the reviewer's own monotonicity).
    pub fn apply(&self, ds: &ReviewDataset) -> Result<ReviewDataset, ValidationError> {
        let entries: Vec<(usize, usize, Vec<f64>, f64)> = ds
            .cell_ids()
            .map(|(i, a)| {
                let mut cell = ds.cell(i, a).clone();
                if i == self.reviewer {
                    if let Some(Some(rec)) = self.recommendations.get(a) {
                        cell.recommendation = *rec;
                    }
                    if let Some(Some(scores)) = self.score_vectors.get(a) {
                        cell.scores = scores.clone();
                    }
                }
                (i, a, cell.scores, cell.recommendation)
            })
            .collect();
        ReviewDataset::from_cells(ds.num_reviewers(), ds.num_papers(), ds.num_criteria(), entries)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WitnessKind {
    Consensus {
        paper: usize,
        unanimous_value: f64,
        score: f64,
    },
    Efficiency {
        dominant: usize,
        dominated: usize,
        dominant_score: f64,
        dominated_score: f64,
    },
    Consistency {
        dominant: usize,
        dominated: usize,
        dominant_score: f64,
        dominated_score: f64,
        strict: bool,
    },
    StrategyProofness {
        misreport: Misreport,
        honest_scores: Vec<f64>,
        manipulated_scores: Vec<f64>,
        honest_distance: f64,
        manipulated_distance: f64,
    },
}

/// Everything needed to re-run a violated check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub dataset: ReviewDataset,
    pub params: Params,
    pub mode: AxiomMode,
    pub kind: WitnessKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub axiom: Axiom,
    pub mode: AxiomMode,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
}

impl AxiomReport {
    fn conclusive(axiom: Axiom, mode: AxiomMode, witness: Option<Witness>, any_premise: bool) -> Self {
        let verdict = match (&witness, any_premise) {
            (Some(_), _) => Verdict::Violated,
            (None, true) => Verdict::Holds,
            (None, false) => Verdict::Inconclusive,
        };
        Self {
            axiom,
            mode,
            verdict,
            witness,
        }
    }
}

/// Weak domination of one recommendation multiset over another: after
/// sorting ascending, every entry of `rec_a` covers the matching entry of
/// `rec_b`. Strict when on top of that the sorted vectors differ (equal
/// sorted vectors force all-equalities under any dominating permutation).
pub fn dominates(rec_a: &[f64], rec_b: &[f64]) -> Result<Domination, AuditError> {
    if rec_a.len() != rec_b.len() {
        return Err(AuditError::LengthMismatch {
            a: rec_a.len(),
            b: rec_b.len(),
        });
    }
    let mut sa = rec_a.to_vec();
    let mut sb = rec_b.to_vec();
    sa.sort_unstable_by(f64::total_cmp);
    sb.sort_unstable_by(f64::total_cmp);
    if sa.iter().zip(&sb).any(|(x, y)| x < y) {
        return Ok(Domination::None);
    }
    if sa == sb {
        Ok(Domination::Weak)
    } else {
        Ok(Domination::Strict)
    }
}

/// Augmenting-path bipartite matching. `skip` pins one forced edge; the
/// return value says whether the remaining rows match perfectly.
fn kuhn_perfect_matching(adj: &[Vec<bool>], skip: Option<(usize, usize)>) -> bool {
    let n = adj.len();
    let mut col_match: Vec<Option<usize>> = vec![None; n];
    if let Some((r, c)) = skip {
        col_match[c] = Some(r);
    }
    fn try_assign(
        adj: &[Vec<bool>],
        row: usize,
        seen: &mut [bool],
        col_match: &mut [Option<usize>],
        skip: Option<(usize, usize)>,
    ) -> bool {
        for col in 0..adj.len() {
            if !adj[row][col] || seen[col] {
                continue;
            }
            if let Some((fr, fc)) = skip {
                if col == fc || row == fr {
                    continue;
                }
            }
            seen[col] = true;
            let free = match col_match[col] {
                None => true,
                Some(prev) => try_assign(adj, prev, seen, col_match, skip),
            };
            if free {
                col_match[col] = Some(row);
                return true;
            }
        }
        false
    }
    for row in 0..n {
        if matches!(skip, Some((fr, _)) if fr == row) {
            continue;
        }
        let mut seen = vec![false; n];
        if !try_assign(adj, row, &mut seen, &mut col_match, skip) {
            return false;
        }
    }
    true
}

/// Domination of paper `a` over paper `b` taking score vectors into account:
/// a perfect matching of reviewers where each matched pair covers both the
/// score vector and the recommendation. Strictness is decided by forcing
/// each strictly-covering edge in turn and re-matching the rest.
pub fn dominates_with_scores(
    ds: &ReviewDataset,
    paper_a: usize,
    paper_b: usize,
) -> Domination {
    let n = ds.num_reviewers();
    let mut adj = vec![vec![false; n]; n];
    let mut strict_edge = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            let xa = ds.scores(i, paper_a);
            let xb = ds.scores(j, paper_b);
            let ya = ds.recommendation(i, paper_a);
            let yb = ds.recommendation(j, paper_b);
            if componentwise_le(xb, xa) && yb <= ya {
                adj[i][j] = true;
                strict_edge[i][j] = ya > yb || xa.iter().zip(xb).any(|(p, q)| p > q);
            }
        }
    }
    if !kuhn_perfect_matching(&adj, None) {
        return Domination::None;
    }
    for i in 0..n {
        for j in 0..n {
            if adj[i][j] && strict_edge[i][j] && kuhn_perfect_matching(&adj, Some((i, j))) {
                return Domination::Strict;
            }
        }
    }
    Domination::Weak
}

fn domination_for_mode(
    ds: &ReviewDataset,
    a: usize,
    b: usize,
    mode: AxiomMode,
) -> Result<Domination, AuditError> {
    match mode {
        AxiomMode::Plain => dominates(
            &ds.recommendation_column(a),
            &ds.recommendation_column(b),
        ),
        AxiomMode::WithScores => Ok(dominates_with_scores(ds, a, b)),
    }
}

/// Papers whose premise fires for the consensus axiom in this mode:
/// unanimous recommendations (plain), or unanimous recommendations and
/// score vectors (with scores).
fn unanimous_papers(ds: &ReviewDataset, mode: AxiomMode) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for a in 0..ds.num_papers() {
        let y = ds.recommendation(0, a);
        let recs_agree = (1..ds.num_reviewers()).all(|i| ds.recommendation(i, a) == y);
        if !recs_agree {
            continue;
        }
        if mode == AxiomMode::WithScores {
            let x = ds.scores(0, a);
            if !(1..ds.num_reviewers()).all(|i| ds.scores(i, a) == x) {
                continue;
            }
        }
        out.push((a, y));
    }
    out
}

/// Evaluates the consensus axiom against already-computed scores.
pub fn consensus_for_scores(
    ds: &ReviewDataset,
    params: &Params,
    mode: AxiomMode,
    scores: &[f64],
) -> AxiomReport {
    let targets = unanimous_papers(ds, mode);
    let mut witness = None;
    for &(a, y) in &targets {
        if (scores[a] - y).abs() > WEAK_TOL {
            witness = Some(Witness {
                dataset: ds.clone(),
                params: *params,
                mode,
                kind: WitnessKind::Consensus {
                    paper: a,
                    unanimous_value: y,
                    score: scores[a],
                },
            });
            break;
        }
    }
    AxiomReport::conclusive(Axiom::Consensus, mode, witness, !targets.is_empty())
}

/// Evaluates efficiency (and, with `strict_part`, consistency) against
/// already-computed scores.
pub fn efficiency_for_scores(
    ds: &ReviewDataset,
    params: &Params,
    mode: AxiomMode,
    scores: &[f64],
    strict_part: bool,
) -> Result<AxiomReport, AuditError> {
    let axiom = if strict_part {
        Axiom::Consistency
    } else {
        Axiom::Efficiency
    };
    let m = ds.num_papers();
    let mut any_premise = false;
    for a in 0..m {
        for b in 0..m {
            if a == b {
                continue;
            }
            let dom = domination_for_mode(ds, a, b, mode)?;
            if dom == Domination::None {
                continue;
            }
            any_premise = true;
            let weak_break = scores[a] < scores[b] - WEAK_TOL;
            let strict_break =
                strict_part && dom == Domination::Strict && scores[a] <= scores[b] + STRICT_TOL;
            if weak_break || (strict_break && !weak_break) {
                let kind = if strict_part {
                    WitnessKind::Consistency {
                        dominant: a,
                        dominated: b,
                        dominant_score: scores[a],
                        dominated_score: scores[b],
                        strict: dom == Domination::Strict,
                    }
                } else {
                    WitnessKind::Efficiency {
                        dominant: a,
                        dominated: b,
                        dominant_score: scores[a],
                        dominated_score: scores[b],
                    }
                };
                return Ok(AxiomReport {
                    axiom,
                    mode,
                    verdict: Verdict::Violated,
                    witness: Some(Witness {
                        dataset: ds.clone(),
                        params: *params,
                        mode,
                        kind,
                    }),
                });
            }
        }
    }
    Ok(AxiomReport::conclusive(axiom, mode, None, any_premise))
}

/// Consensus check for the L(p,q) method: unanimous papers keep their value.
pub fn check_consensus(
    ds: &ReviewDataset,
    params: &Params,
    mode: AxiomMode,
) -> Result<AxiomReport, AuditError> {
    let (_, solution) = aggregate(ds, params)?;
    Ok(consensus_for_scores(ds, params, mode, &solution.scores))
}

/// Efficiency check: weak domination must not reverse the scores.
pub fn check_efficiency(
    ds: &ReviewDataset,
    params: &Params,
    mode: AxiomMode,
) -> Result<AxiomReport, AuditError> {
    let (_, solution) = aggregate(ds, params)?;
    efficiency_for_scores(ds, params, mode, &solution.scores, false)
}

/// Consistency check: efficiency plus a strict gap under strict domination.
pub fn check_consistency(
    ds: &ReviewDataset,
    params: &Params,
    mode: AxiomMode,
) -> Result<AxiomReport, AuditError> {
    let (_, solution) = aggregate(ds, params)?;
    efficiency_for_scores(ds, params, mode, &solution.scores, true)
}

/// Strategy-proofness check for one concrete misreport: the manipulated
/// solution must not move closer (in L2) to the reviewer's true
/// recommendation row than the honest solution was.
pub fn check_strategy_proofness(
    ds: &ReviewDataset,
    params: &Params,
    misreport: &Misreport,
) -> Result<AxiomReport, AuditError> {
    let manipulated_ds = misreport.apply(ds)?;
    let (_, honest) = aggregate(ds, params)?;
    let (_, manipulated) = aggregate(&manipulated_ds, params)?;
    let truth = ds.recommendation_row(misreport.reviewer);
    let honest_distance = l2_distance(&honest.scores, &truth);
    let manipulated_distance = l2_distance(&manipulated.scores, &truth);
    let mode = if misreport.score_vectors.iter().any(Option::is_some) {
        AxiomMode::WithScores
    } else {
        AxiomMode::Plain
    };
    let violated = manipulated_distance < honest_distance - STRICT_TOL;
    let witness = violated.then(|| Witness {
        dataset: ds.clone(),
        params: *params,
        mode,
        kind: WitnessKind::StrategyProofness {
            misreport: misreport.clone(),
            honest_scores: honest.scores.clone(),
            manipulated_scores: manipulated.scores.clone(),
            honest_distance,
            manipulated_distance,
        },
    });
    Ok(AxiomReport {
        axiom: Axiom::StrategyProofness,
        mode,
        verdict: if violated {
            Verdict::Violated
        } else {
            Verdict::Holds
        },
        witness,
    })
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Re-runs the check a witness came from; a genuine witness reproduces
/// `Verdict::Violated`.
pub fn replay(witness: &Witness) -> Result<Verdict, AuditError> {
    let report = match &witness.kind {
        WitnessKind::Consensus { .. } => {
            check_consensus(&witness.dataset, &witness.params, witness.mode)?
        }
        WitnessKind::Efficiency { .. } => {
            check_efficiency(&witness.dataset, &witness.params, witness.mode)?
        }
        WitnessKind::Consistency { .. } => {
            check_consistency(&witness.dataset, &witness.params, witness.mode)?
        }
        WitnessKind::StrategyProofness { misreport, .. } => {
            check_strategy_proofness(&witness.dataset, &witness.params, misreport)?
        }
    };
    Ok(report.verdict)
}
