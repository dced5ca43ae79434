//! Small constructed datasets that exercise edge cases of the aggregation
//! method. Each is a hand-sized instance with known solutions, used by the
//! repro CLI command and the test suites.

use crate::dataset::ReviewDataset;

/// Two reviewers, two papers, one criterion. Both papers are unanimous in
/// their recommendations (1 and 2 respectively), yet the reviewers' score
/// scales interleave: the staircase of scores 1 < 2 < 3 < 4 carries
/// recommendations 1, 2, 1, 2. The monotone fit must bend the middle values
/// together, so the unanimous paper at 2 aggregates below 2.
pub fn consensus_counterexample() -> ReviewDataset {
    ReviewDataset::from_cells(
        2,
        2,
        1,
        vec![
            (0, 0, vec![1.0], 1.0),
            (0, 1, vec![2.0], 2.0),
            (1, 0, vec![3.0], 1.0),
            (1, 1, vec![4.0], 2.0),
        ],
    )
    .expect("instance is valid")
}

/// Two reviewers, two papers, one criterion. Paper a strictly dominates
/// paper b in both scores and recommendations, but the two middle cells
/// share the score 2 and therefore one fitted value, which drags both
/// papers to the same aggregate.
pub fn strict_domination_tie() -> ReviewDataset {
    ReviewDataset::from_cells(
        2,
        2,
        1,
        vec![
            (0, 0, vec![3.0], 2.0),
            (0, 1, vec![2.0], 1.0),
            (1, 0, vec![2.0], 3.0),
            (1, 1, vec![1.0], 2.0),
        ],
    )
    .expect("instance is valid")
}

/// Three reviewers, two papers, two criteria. The papers carry identical
/// recommendation columns (1, 4, 6) and so dominate each other, but three
/// cells share one score vector and get pooled into a single fitted value,
/// which splits the aggregates apart.
pub fn shared_node_efficiency_gap() -> ReviewDataset {
    ReviewDataset::from_cells(
        3,
        2,
        2,
        vec![
            (0, 0, vec![5.0, 5.0], 1.0),
            (0, 1, vec![5.0, 5.0], 1.0),
            (1, 0, vec![5.0, 5.0], 4.0),
            (1, 1, vec![6.0, 4.0], 4.0),
            (2, 0, vec![4.0, 6.0], 6.0),
            (2, 1, vec![7.0, 3.0], 6.0),
        ],
    )
    .expect("instance is valid")
}

/// Hidden-scores dataset over pairwise incomparable per-paper score
/// vectors, so cross-paper order constraints never arise. `columns[a][i]`
/// is reviewer i's recommendation for paper a.
pub fn hidden_with_incomparable_scores(columns: &[Vec<f64>]) -> ReviewDataset {
    let m = columns.len();
    let vectors: Vec<Vec<f64>> = (0..m)
        .map(|a| vec![2.0 + a as f64, 2.0 + (m - 1 - a) as f64])
        .collect();
    ReviewDataset::hidden_from_columns(&vectors, columns).expect("instance is valid")
}
