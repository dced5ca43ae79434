//! The pooled-node DAG encoding the componentwise partial order over score
//! vectors. Cells with exactly equal score vectors share a node; an edge
//! (u, v) constrains the fitted value at u to stay below the one at v.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{componentwise_le, CellId, ReviewDataset};

/// One pooled node: a distinct score vector and every cell carrying it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderNode {
    pub score_vector: Vec<f64>,
    pub cells: Vec<CellId>,
}

/// Partial order over pooled score vectors.
///
/// `edges` holds the transitive reduction; `leq` answers full reachability,
/// which is what solvers and oracles may rely on.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneOrder {
    nodes: Vec<OrderNode>,
    edges: Vec<(usize, usize)>,
    below: Vec<Vec<bool>>,
    node_of_cell: HashMap<CellId, usize>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectivityError {
    #[error("objectivity violated: reviewers disagree on the score vector of paper {paper}")]
    Violated { paper: usize },
}

/// Hidden-scores view: one common score vector per paper.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectivityView {
    pub paper_vectors: Vec<Vec<f64>>,
}

/// Pools exactly-equal score vectors and lays out the componentwise order.
/// Nodes come out sorted lexicographically, so the structure is a pure
/// function of the dataset.
pub fn build_monotone_order(ds: &ReviewDataset) -> MonotoneOrder {
    let mut nodes: Vec<OrderNode> = Vec::new();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    for (i, a) in ds.cell_ids() {
        let scores = ds.scores(i, a);
        let key: Vec<u64> = scores.iter().map(|v| v.to_bits()).collect();
        let id = *index.entry(key).or_insert_with(|| {
            nodes.push(OrderNode {
                score_vector: scores.to_vec(),
                cells: Vec::new(),
            });
            nodes.len() - 1
        });
        nodes[id].cells.push((i, a));
    }

    let mut perm: Vec<usize> = (0..nodes.len()).collect();
    perm.sort_by(|&u, &v| {
        nodes[u]
            .score_vector
            .partial_cmp(&nodes[v].score_vector)
            .expect("score vectors are finite")
    });
    let mut sorted: Vec<OrderNode> = perm.iter().map(|&u| nodes[u].clone()).collect();
    for node in &mut sorted {
        node.cells.sort_unstable();
    }

    let k = sorted.len();
    let mut below = vec![vec![false; k]; k];
    for u in 0..k {
        for v in 0..k {
            if u != v
                && componentwise_le(&sorted[u].score_vector, &sorted[v].score_vector)
            {
                below[u][v] = true;
            }
        }
    }
    // transitive reduction: drop (u, v) whenever some w sits strictly between
    let mut edges = Vec::new();
    for u in 0..k {
        for v in 0..k {
            if below[u][v]
                && !(0..k).any(|w| w != u && w != v && below[u][w] && below[w][v])
            {
                edges.push((u, v));
            }
        }
    }
    edges.sort_unstable();

    let mut node_of_cell = HashMap::new();
    for (id, node) in sorted.iter().enumerate() {
        for &cell in &node.cells {
            node_of_cell.insert(cell, id);
        }
    }

    MonotoneOrder {
        nodes: sorted,
        edges,
        below,
        node_of_cell,
    }
}

impl MonotoneOrder {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[OrderNode] {
        &self.nodes
    }

    /// Cover edges (transitive reduction), sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Full comparability: does node u's vector lie componentwise below v's?
    pub fn leq(&self, u: usize, v: usize) -> bool {
        self.below[u][v]
    }

    pub fn node_of(&self, cell: CellId) -> usize {
        self.node_of_cell[&cell]
    }

    /// Nodes listed in an order where every edge points forward. Nodes are
    /// stored lexicographically by score vector, which already is a
    /// topological order for the componentwise relation.
    pub fn topological(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    pub fn predecessors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges
            .iter()
            .filter(move |&&(_, w)| w == v)
            .map(|&(u, _)| u)
    }
}

/// Succeeds iff all reviewers agree on every paper's score vector, returning
/// the per-paper vectors; fails naming the first offending paper.
pub fn apply_objectivity(ds: &ReviewDataset) -> Result<ObjectivityView, ObjectivityError> {
    let mut paper_vectors = Vec::with_capacity(ds.num_papers());
    for a in 0..ds.num_papers() {
        let first = ds.scores(0, a);
        for i in 1..ds.num_reviewers() {
            if ds.scores(i, a) != first {
                return Err(ObjectivityError::Violated { paper: a });
            }
        }
        paper_vectors.push(first.to_vec());
    }
    Ok(ObjectivityView { paper_vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;

    #[test]
    fn pooled_chain_from_shared_middle_score() {
        let ds = instances::strict_domination_tie();
        let order = build_monotone_order(&ds);
        assert_eq!(order.len(), 3);
        assert_eq!(order.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(order.nodes()[1].cells, vec![(0, 1), (1, 0)]);
        assert_eq!(order.nodes()[1].score_vector, vec![2.0]);
    }

    #[test]
    fn identical_vectors_pool_into_one_node() {
        let ds = ReviewDataset::from_cells(
            2,
            2,
            1,
            vec![
                (0, 0, vec![4.0], 3.0),
                (0, 1, vec![4.0], 3.0),
                (1, 0, vec![4.0], 6.0),
                (1, 1, vec![4.0], 6.0),
            ],
        )
        .unwrap();
        let order = build_monotone_order(&ds);
        assert_eq!(order.len(), 1);
        assert!(order.edges().is_empty());
        assert_eq!(order.nodes()[0].cells.len(), 4);
    }

    #[test]
    fn incomparable_vectors_share_no_edge() {
        let ds = ReviewDataset::from_cells(
            1,
            2,
            2,
            vec![(0, 0, vec![1.0, 5.0], 2.0), (0, 1, vec![5.0, 1.0], 2.0)],
        )
        .unwrap();
        let order = build_monotone_order(&ds);
        assert_eq!(order.len(), 2);
        assert!(order.edges().is_empty());
        assert!(!order.leq(0, 1));
        assert!(!order.leq(1, 0));
    }

    #[test]
    fn transitive_edge_is_reduced_but_reachable() {
        let ds = ReviewDataset::from_cells(
            1,
            3,
            1,
            vec![
                (0, 0, vec![1.0], 1.0),
                (0, 1, vec![2.0], 2.0),
                (0, 2, vec![3.0], 3.0),
            ],
        )
        .unwrap();
        let order = build_monotone_order(&ds);
        assert_eq!(order.edges(), &[(0, 1), (1, 2)]);
        assert!(order.leq(0, 2));
    }

    #[test]
    fn deterministic_construction() {
        let ds = instances::shared_node_efficiency_gap();
        let a = build_monotone_order(&ds);
        let b = build_monotone_order(&ds);
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert!(a.edges().is_empty());
    }

    #[test]
    fn objectivity_accepts_common_vectors_and_names_offender() {
        let hidden = instances::hidden_with_incomparable_scores(&[
            vec![1.0, 2.0],
            vec![3.0, 4.0],
        ]);
        let view = apply_objectivity(&hidden).unwrap();
        assert_eq!(view.paper_vectors.len(), 2);

        let ds = instances::consensus_counterexample();
        assert_eq!(
            apply_objectivity(&ds),
            Err(ObjectivityError::Violated { paper: 0 })
        );

        // disagreement only at the second paper
        let ds = ReviewDataset::from_cells(
            2,
            2,
            1,
            vec![
                (0, 0, vec![2.0], 1.0),
                (0, 1, vec![3.0], 2.0),
                (1, 0, vec![2.0], 1.0),
                (1, 1, vec![4.0], 2.0),
            ],
        )
        .unwrap();
        assert_eq!(
            apply_objectivity(&ds),
            Err(ObjectivityError::Violated { paper: 1 })
        );
    }
}
