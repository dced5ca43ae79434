//! Both optimization stages of the L(p,q) aggregation method.
//!
//! Stage one (empirical risk minimization) fits one value per pooled score
//! vector, minimizing L(p,q)^q subject to the monotone order; stage two
//! collapses the fitted values into one score per paper. Ties are broken by
//! the minimum-Euclidean-norm rule, realized as a small ε‖v‖² term plus, for
//! p = q, an exact block polish. p = q decomposes into one-dimensional
//! subproblems wherever the order constraints are slack, which is also what
//! makes the hidden-scores fast path cheap.

pub mod newton;
pub mod one_dim;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{CellId, Params, ReviewDataset};
use crate::order::{apply_objectivity, build_monotone_order, MonotoneOrder};
use newton::{ConvexProgram, LinearConstraint, Residual};
pub use one_dim::{balance_residual, left_median, pmean_1d, OneDimProblem};

/// Tie-breaking strength: among loss minimizers, prefer the point of
/// smallest Euclidean norm.
pub const TIE_BREAK_EPSILON: f64 = 1e-7;

/// The loss has a unique minimizer whenever p and q both exceed 1; only the
/// tie-prone exponents need the regularizer (which otherwise just biases).
fn tie_epsilon(p: f64, q: f64) -> f64 {
    if p == 1.0 || q == 1.0 {
        TIE_BREAK_EPSILON
    } else {
        0.0
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("empty input")]
    EmptyInput,
    #[error("exponent {value} is not a finite number >= 1")]
    BadExponent { value: f64 },
    #[error("solver failed to converge (stationarity {stationarity:.3e}, feasibility {feasibility:.3e})")]
    NonConvergence {
        stationarity: f64,
        feasibility: f64,
    },
}

/// Stage-one problem: the pooled order plus, per node, the recommendations
/// that were pooled there tagged with their reviewer.
#[derive(Debug, Clone)]
pub struct ErmProblem {
    order: MonotoneOrder,
    targets: Vec<Vec<(usize, f64)>>,
    num_reviewers: usize,
    params: Params,
}

impl ErmProblem {
    pub fn new(ds: &ReviewDataset, params: Params) -> Self {
        Self::with_order(ds, build_monotone_order(ds), params)
    }

    pub(crate) fn with_order(ds: &ReviewDataset, order: MonotoneOrder, params: Params) -> Self {
        let mut targets = vec![Vec::new(); order.len()];
        for node in 0..order.len() {
            for &(i, a) in &order.nodes()[node].cells {
                targets[node].push((i, ds.recommendation(i, a)));
            }
        }
        Self {
            order,
            targets,
            num_reviewers: ds.num_reviewers(),
            params,
        }
    }

    pub fn order(&self) -> &MonotoneOrder {
        &self.order
    }

    pub fn targets(&self) -> &[Vec<(usize, f64)>] {
        &self.targets
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn num_reviewers(&self) -> usize {
        self.num_reviewers
    }

    /// L(p,q)^q of an assignment of values to order nodes.
    pub fn objective(&self, node_values: &[f64]) -> f64 {
        let mut inner = vec![0.0; self.num_reviewers];
        for (node, list) in self.targets.iter().enumerate() {
            for &(i, y) in list {
                inner[i] += (y - node_values[node]).abs().powf(self.params.p);
            }
        }
        let s = self.params.q / self.params.p;
        inner.iter().map(|&a| a.powf(s)).sum()
    }

    /// Hull of all pooled recommendations.
    pub fn target_hull(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for list in &self.targets {
            for &(_, y) in list {
                lo = lo.min(y);
                hi = hi.max(y);
            }
        }
        (lo, hi)
    }
}

/// Stage-one output: one fitted value per cell (equal across a pooled node).
#[derive(Debug, Clone, PartialEq)]
pub struct FittedValues {
    num_reviewers: usize,
    num_papers: usize,
    values: Vec<f64>,
    node_values: Vec<f64>,
    erm_loss: f64,
}

impl FittedValues {
    fn from_nodes(prob: &ErmProblem, node_values: Vec<f64>, num_papers: usize) -> Self {
        let n = prob.num_reviewers;
        let mut values = vec![f64::NAN; n * num_papers];
        for (node, meta) in prob.order.nodes().iter().enumerate() {
            for &(i, a) in &meta.cells {
                values[i * num_papers + a] = node_values[node];
            }
        }
        debug_assert!(values.iter().all(|v| v.is_finite()));
        let erm_loss = prob.objective(&node_values);
        Self {
            num_reviewers: n,
            num_papers,
            values,
            node_values,
            erm_loss,
        }
    }

    pub fn num_reviewers(&self) -> usize {
        self.num_reviewers
    }

    pub fn num_papers(&self) -> usize {
        self.num_papers
    }

    pub fn value(&self, reviewer: usize, paper: usize) -> f64 {
        self.values[reviewer * self.num_papers + paper]
    }

    /// Fitted values of one paper across reviewers.
    pub fn column(&self, paper: usize) -> Vec<f64> {
        (0..self.num_reviewers)
            .map(|i| self.value(i, paper))
            .collect()
    }

    /// Values per order node, aligned with the problem that produced this.
    pub fn node_values(&self) -> &[f64] {
        &self.node_values
    }

    /// L(p,q)^q achieved by stage one.
    pub fn erm_loss(&self) -> f64 {
        self.erm_loss
    }

    pub fn cell_map(&self) -> BTreeMap<CellId, f64> {
        let mut map = BTreeMap::new();
        for i in 0..self.num_reviewers {
            for a in 0..self.num_papers {
                map.insert((i, a), self.value(i, a));
            }
        }
        map
    }

    pub fn hull(&self) -> (f64, f64) {
        let lo = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self
            .values
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Final aggregate: one score per paper, with the loss of each stage
/// (both reported as L(p,q)^q).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub scores: Vec<f64>,
    pub erm_loss: f64,
    pub aggregation_loss: f64,
}

/// Minimizes L(p,q)^q over the order with min-norm tie-breaking.
pub fn erm_fit(prob: &ErmProblem) -> Result<FittedValues, SolveError> {
    erm_fit_from(prob, None)
}

/// Same as [`erm_fit`] but with an explicit warm start for the iterative
/// path; used to confirm that solutions do not depend on initialization.
pub fn erm_fit_from(
    prob: &ErmProblem,
    init: Option<&[f64]>,
) -> Result<FittedValues, SolveError> {
    let num_papers = prob
        .order
        .nodes()
        .iter()
        .flat_map(|n| n.cells.iter().map(|&(_, a)| a + 1))
        .max()
        .expect("order has at least one node");
    let node_values = solve_erm_nodes(prob, init)?;
    Ok(FittedValues::from_nodes(prob, node_values, num_papers))
}

fn solve_erm_nodes(prob: &ErmProblem, init: Option<&[f64]>) -> Result<Vec<f64>, SolveError> {
    let p = prob.params.p;
    let q = prob.params.q;
    let k = prob.order.len();

    // separable fast path: when p = q the loss splits per node, so if the
    // per-node optima already respect the order they are the optimum, and
    // the per-node left-biased choice is the min-norm point of the tie face
    if p == q && init.is_none() {
        let v: Vec<f64> = prob
            .targets
            .iter()
            .map(|list| {
                let values: Vec<f64> = list.iter().map(|&(_, y)| y).collect();
                OneDimProblem::new(values, p).expect("nonempty node").solve()
            })
            .collect();
        if edge_violation(&prob.order, &v) <= 1e-9 {
            return Ok(finish_nodes(prob, v));
        }
    }

    // single node, one cell per reviewer: the loss is Σ|v − y|^q
    if k == 1 && prob.targets[0].len() == prob.num_reviewers && init.is_none() {
        let values: Vec<f64> = prob.targets[0].iter().map(|&(_, y)| y).collect();
        let v = OneDimProblem::new(values, q)?.solve();
        return Ok(finish_nodes(prob, vec![v]));
    }

    let mut groups = vec![Vec::new(); prob.num_reviewers];
    for (node, list) in prob.targets.iter().enumerate() {
        for &(i, y) in list {
            groups[i].push(Residual::of_var(node, y));
        }
    }
    let program = ConvexProgram {
        dim: k,
        p,
        q,
        groups,
        constraints: prob
            .order
            .edges()
            .iter()
            .map(|&(u, w)| LinearConstraint::le(u, w))
            .collect(),
        l2_reg: tie_epsilon(p, q),
    };
    let start: Vec<f64> = match init {
        Some(v) => v.to_vec(),
        None => prob
            .targets
            .iter()
            .map(|list| list.iter().map(|&(_, y)| y).sum::<f64>() / list.len() as f64)
            .collect(),
    };
    let mut v = program.solve(&start)?.values;

    if p == q {
        if let Some(polished) = polish_separable(prob, &v) {
            v = polished;
        }
    }
    Ok(finish_nodes(prob, v))
}

/// Exact re-solve on the block structure suggested by an approximate
/// solution; only valid for p = q where the loss is separable per node.
/// The result is kept only if it verifiably does not hurt.
fn polish_separable(prob: &ErmProblem, v: &[f64]) -> Option<Vec<f64>> {
    let p = prob.params.p;
    let k = prob.order.len();
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        if parent[x] != x {
            let r = find(parent, parent[x]);
            parent[x] = r;
        }
        parent[x]
    }
    for &(u, w) in prob.order.edges() {
        if (v[u] - v[w]).abs() <= 1e-4 {
            let (ru, rw) = (find(&mut parent, u), find(&mut parent, w));
            if ru != rw {
                parent[ru] = rw;
            }
        }
    }
    let mut pooled: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for node in 0..k {
        let root = find(&mut parent, node);
        pooled
            .entry(root)
            .or_default()
            .extend(prob.targets[node].iter().map(|&(_, y)| y));
    }
    let mut block_value: BTreeMap<usize, f64> = BTreeMap::new();
    for (&root, values) in &pooled {
        let solved = OneDimProblem::new(values.clone(), p).ok()?.solve();
        block_value.insert(root, solved);
    }
    let candidate: Vec<f64> = (0..k)
        .map(|node| block_value[&find(&mut parent, node)])
        .collect();

    if edge_violation(&prob.order, &candidate) > 1e-12 {
        return None;
    }
    let old_obj = prob.objective(v);
    let new_obj = prob.objective(&candidate);
    if new_obj > old_obj + 1e-9 * (1.0 + old_obj.abs()) {
        return None;
    }
    let old_norm: f64 = v.iter().map(|x| x * x).sum();
    let new_norm: f64 = candidate.iter().map(|x| x * x).sum();
    if new_norm > old_norm + 1e-5 {
        return None;
    }
    Some(candidate)
}

fn edge_violation(order: &MonotoneOrder, v: &[f64]) -> f64 {
    order
        .edges()
        .iter()
        .map(|&(u, w)| (v[u] - v[w]).max(0.0))
        .fold(0.0, f64::max)
}

/// Clamp into the target hull and absorb sub-tolerance edge wiggles, so the
/// output is exactly feasible and stays inside [min target, max target].
fn finish_nodes(prob: &ErmProblem, mut v: Vec<f64>) -> Vec<f64> {
    let (lo, hi) = prob.target_hull();
    for x in &mut v {
        *x = x.clamp(lo, hi);
    }
    for &(u, w) in prob.order.edges() {
        if v[w] < v[u] {
            v[w] = v[u];
        }
    }
    debug_assert!(edge_violation(&prob.order, &v) == 0.0);
    v
}

/// Stage two: collapse fitted values into one score per paper by minimizing
/// the same loss over the score vector, min-norm tie-broken. For p = q the
/// problem splits per paper into one-dimensional solves.
pub fn aggregate_step(fitted: &FittedValues, params: &Params) -> Result<Solution, SolveError> {
    let (p, q) = (params.p, params.q);
    let m = fitted.num_papers;
    let n = fitted.num_reviewers;

    let mut scores: Vec<f64> = if p == q {
        (0..m)
            .map(|a| {
                OneDimProblem::new(fitted.column(a), p)
                    .expect("column is nonempty")
                    .solve()
            })
            .collect()
    } else if m == 1 {
        vec![OneDimProblem::new(fitted.column(0), q)?.solve()]
    } else {
        let groups = (0..n)
            .map(|i| {
                (0..m)
                    .map(|a| Residual::of_var(a, fitted.value(i, a)))
                    .collect()
            })
            .collect();
        let program = ConvexProgram {
            dim: m,
            p,
            q,
            groups,
            constraints: vec![],
            l2_reg: tie_epsilon(p, q),
        };
        let init: Vec<f64> = (0..m)
            .map(|a| fitted.column(a).iter().sum::<f64>() / n as f64)
            .collect();
        program.solve(&init)?.values
    };

    let (lo, hi) = fitted.hull();
    for s in &mut scores {
        *s = s.clamp(lo, hi);
    }

    let s_exp = q / p;
    let aggregation_loss = (0..n)
        .map(|i| {
            (0..m)
                .map(|a| (fitted.value(i, a) - scores[a]).abs().powf(p))
                .sum::<f64>()
                .powf(s_exp)
        })
        .sum();
    Ok(Solution {
        scores,
        erm_loss: fitted.erm_loss,
        aggregation_loss,
    })
}

/// Full pipeline: order construction, stage one, stage two. When every paper
/// has one agreed score vector, the fitted per-node optima already determine
/// the scores, so the pipeline takes the cheap route and falls back to the
/// constrained solve only if those optima break an order constraint.
pub fn aggregate(
    ds: &ReviewDataset,
    params: &Params,
) -> Result<(FittedValues, Solution), SolveError> {
    let order = build_monotone_order(ds);
    let prob = ErmProblem::with_order(ds, order, *params);

    if apply_objectivity(ds).is_ok() {
        if let Some(v) = hidden_node_optima(&prob)? {
            if edge_violation(&prob.order, &v) <= 1e-9 {
                let v = finish_nodes(&prob, v);
                let fitted = FittedValues::from_nodes(&prob, v, ds.num_papers());
                let solution = aggregate_step(&fitted, params)?;
                return Ok((fitted, solution));
            }
        }
    }

    let fitted = erm_fit(&prob)?;
    let solution = aggregate_step(&fitted, params)?;
    Ok((fitted, solution))
}

/// Unconstrained per-node optima for a hidden-scores dataset.
fn hidden_node_optima(prob: &ErmProblem) -> Result<Option<Vec<f64>>, SolveError> {
    let (p, q) = (prob.params.p, prob.params.q);
    if p == q {
        let v = prob
            .targets
            .iter()
            .map(|list| {
                let values: Vec<f64> = list.iter().map(|&(_, y)| y).collect();
                OneDimProblem::new(values, p).expect("nonempty node").solve()
            })
            .collect();
        return Ok(Some(v));
    }
    let k = prob.order.len();
    if k == 1 && prob.targets[0].len() == prob.num_reviewers {
        let values: Vec<f64> = prob.targets[0].iter().map(|&(_, y)| y).collect();
        return Ok(Some(vec![OneDimProblem::new(values, q)?.solve()]));
    }
    let mut groups = vec![Vec::new(); prob.num_reviewers];
    for (node, list) in prob.targets.iter().enumerate() {
        for &(i, y) in list {
            groups[i].push(Residual::of_var(node, y));
        }
    }
    let program = ConvexProgram {
        dim: k,
        p,
        q,
        groups,
        constraints: vec![],
        l2_reg: tie_epsilon(p, q),
    };
    let init: Vec<f64> = prob
        .targets
        .iter()
        .map(|list| list.iter().map(|&(_, y)| y).sum::<f64>() / list.len() as f64)
        .collect();
    Ok(Some(program.solve(&init)?.values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;

    fn params(p: f64, q: f64) -> Params {
        Params::new(p, q).unwrap()
    }

    #[test]
    fn staircase_erm_breaks_tie_to_the_left() {
        let ds = instances::consensus_counterexample();
        let prob = ErmProblem::new(&ds, params(1.0, 1.0));
        let fitted = erm_fit(&prob).unwrap();
        let expected = [1.0, 1.0, 1.0, 2.0];
        for (got, want) in fitted.node_values().iter().zip(expected) {
            assert!((got - want).abs() < 1e-6, "{:?}", fitted.node_values());
        }
        assert!((fitted.erm_loss() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn staircase_solution_drops_unanimous_paper() {
        let ds = instances::consensus_counterexample();
        let (fitted, solution) = aggregate(&ds, &params(1.0, 1.0)).unwrap();
        assert!((fitted.value(0, 1) - 1.0).abs() < 1e-6);
        assert!((solution.scores[0] - 1.0).abs() < 1e-6);
        assert!((solution.scores[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn pooled_middle_flattens_everything_at_two() {
        let ds = instances::strict_domination_tie();
        let (fitted, solution) = aggregate(&ds, &params(2.0, 2.0)).unwrap();
        for i in 0..2 {
            for a in 0..2 {
                assert!(
                    (fitted.value(i, a) - 2.0).abs() < 1e-6,
                    "cell ({i},{a}) = {}",
                    fitted.value(i, a)
                );
            }
        }
        assert!((solution.scores[0] - 2.0).abs() < 1e-6);
        assert!((solution.scores[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn monotone_data_achieves_zero_loss() {
        let ds = ReviewDataset::from_cells(
            2,
            2,
            1,
            vec![
                (0, 0, vec![1.0], 2.0),
                (0, 1, vec![2.0], 3.0),
                (1, 0, vec![3.0], 5.0),
                (1, 1, vec![4.0], 7.0),
            ],
        )
        .unwrap();
        for (p, q) in [(1.0, 1.0), (2.0, 2.0), (2.0, 1.0), (1.5, 3.0)] {
            let prob = ErmProblem::new(&ds, params(p, q));
            let fitted = erm_fit(&prob).unwrap();
            for (i, a, want) in [(0, 0, 2.0), (0, 1, 3.0), (1, 0, 5.0), (1, 1, 7.0)] {
                assert!(
                    (fitted.value(i, a) - want).abs() < 1e-5,
                    "p={p} q={q}: {:?}",
                    fitted.node_values()
                );
            }
            assert!(fitted.erm_loss() < 1e-9, "p={p} q={q}");
        }
    }

    #[test]
    fn hidden_unanimous_column_keeps_its_value() {
        for (p, q) in [(1.0, 1.0), (2.0, 2.0), (3.0, 1.5), (1.5, 4.0)] {
            let ds = instances::hidden_with_incomparable_scores(&[
                vec![6.0, 6.0, 6.0],
                vec![2.0, 4.0, 9.0],
            ]);
            let (_, solution) = aggregate(&ds, &params(p, q)).unwrap();
            assert!(
                (solution.scores[0] - 6.0).abs() < 1e-6,
                "p={p} q={q}: {:?}",
                solution.scores
            );
        }
    }

    #[test]
    fn hidden_squared_means_per_paper() {
        let ds = instances::hidden_with_incomparable_scores(&[
            vec![3.0, 1.0, 4.0],
            vec![2.0, 3.0, 9.0],
        ]);
        let (_, solution) = aggregate(&ds, &params(2.0, 2.0)).unwrap();
        assert!((solution.scores[0] - 8.0 / 3.0).abs() < 1e-9);
        assert!((solution.scores[1] - 14.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn aggregate_step_reproduces_fitted_consensus() {
        let ds = instances::hidden_with_incomparable_scores(&[vec![5.0, 5.0, 5.0]]);
        let prob = ErmProblem::new(&ds, params(2.0, 1.0));
        let fitted = erm_fit(&prob).unwrap();
        let solution = aggregate_step(&fitted, &params(2.0, 1.0)).unwrap();
        assert!((solution.scores[0] - 5.0).abs() < 1e-7);
        assert!(solution.aggregation_loss < 1e-6);
    }

    #[test]
    fn solver_is_insensitive_to_initialization_for_strictly_convex_losses() {
        let ds = instances::strict_domination_tie();
        for (p, q) in [(2.0, 2.0), (1.5, 3.0), (3.0, 1.5)] {
            let prob = ErmProblem::new(&ds, params(p, q));
            let a = erm_fit_from(&prob, Some(&[0.0, 0.0, 0.0])).unwrap();
            let b = erm_fit_from(&prob, Some(&[10.0, 10.0, 10.0])).unwrap();
            for (x, y) in a.node_values().iter().zip(b.node_values()) {
                assert!((x - y).abs() < 1e-6, "p={p} q={q}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn constrained_optimum_matches_unconstrained_on_monotone_hidden_data() {
        // objectivity + per-reviewer-monotone data: constraints stay slack
        let ds = ReviewDataset::hidden_from_columns(
            &[vec![2.0], vec![5.0], vec![7.0]],
            &[
                vec![1.0, 2.0, 3.5],
                vec![4.0, 2.0, 6.0],
                vec![9.0, 2.5, 6.5],
            ],
        )
        .unwrap();
        assert!(ds.warnings().is_empty());
        for (p, q) in [(1.0, 1.0), (2.0, 2.0), (2.0, 1.0), (1.5, 2.5)] {
            let (fitted, _) = aggregate(&ds, &params(p, q)).unwrap();
            let prob = ErmProblem::new(&ds, params(p, q));
            let full = erm_fit(&prob).unwrap();
            for (x, y) in fitted.node_values().iter().zip(full.node_values()) {
                assert!((x - y).abs() < 1e-5, "p={p} q={q}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn outputs_stay_in_the_target_hull() {
        let ds = instances::shared_node_efficiency_gap();
        for (p, q) in [(1.0, 1.0), (2.0, 2.0), (2.0, 1.0), (1.0, 2.0)] {
            let (fitted, solution) = aggregate(&ds, &params(p, q)).unwrap();
            for v in fitted.node_values() {
                assert!((1.0..=6.0).contains(v), "p={p} q={q}: {v}");
            }
            for s in &solution.scores {
                assert!((1.0..=6.0).contains(s), "p={p} q={q}: {s}");
            }
        }
    }
}
