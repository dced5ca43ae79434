//! Brute-force grid reference for the solver, for differential testing on
//! small instances. Enumerates monotone grid assignments in topological
//! order with a convexity-based branch-and-bound, so it is independent of
//! the Newton path while staying fast enough for a few nodes.

use thiserror::Error;

use crate::dataset::Params;
use crate::solver::{ErmProblem, FittedValues};

/// Grid resolution and value bounds for the enumeration.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub step: f64,
    /// Global value bounds; defaults to the hull of the targets.
    pub bounds: Option<(f64, f64)>,
    /// Cap on bound evaluations before giving up.
    pub budget: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            step: 0.01,
            bounds: None,
            budget: 50_000_000,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("instance has {nodes} nodes; the exhaustive oracle handles at most {max}")]
    TooManyNodes { nodes: usize, max: usize },
    #[error("grid step {step} is not a positive finite number")]
    BadStep { step: f64 },
    #[error("enumeration exceeded the budget of {budget} bound evaluations")]
    BudgetExceeded { budget: u64 },
}

const MAX_ERM_NODES: usize = 6;
const MAX_AGG_PAPERS: usize = 4;
/// Objectives within this of the minimum count as tied; among ties the
/// smaller Euclidean norm wins.
const TIE_ETA: f64 = 1e-9;

struct Cell {
    reviewer: usize,
    node: usize,
    target: f64,
}

struct Search {
    /// Candidate values per node, ascending.
    grids: Vec<Vec<f64>>,
    /// Per-node lower bound, used for the forced deviation of unassigned
    /// cells.
    lows: Vec<f64>,
    cells: Vec<Cell>,
    /// Per node: its cells' targets, the node's unconstrained 1-D minimum
    /// of Σ|y − v|^p, and the smallest v attaining it.
    node_targets: Vec<Vec<f64>>,
    node_min: Vec<f64>,
    node_argmin: Vec<f64>,
    num_groups: usize,
    preds: Vec<Vec<usize>>,
    p: f64,
    q: f64,
    budget: u64,
    used: u64,
    best_obj: f64,
    best_norm: f64,
    best: Vec<f64>,
    values: Vec<f64>,
}

impl Search {
    fn prepare_node_minima(&mut self) {
        let k = self.values.len();
        self.node_targets = vec![Vec::new(); k];
        for cell in &self.cells {
            self.node_targets[cell.node].push(cell.target);
        }
        self.node_min = vec![0.0; k];
        self.node_argmin = vec![0.0; k];
        for u in 0..k {
            let mut best = (f64::INFINITY, self.grids[u][0]);
            for &v in &self.grids[u] {
                let obj: f64 = self.node_targets[u]
                    .iter()
                    .map(|y| (y - v).abs().powf(self.p))
                    .sum();
                if obj < best.0 {
                    best = (obj, v);
                }
            }
            self.node_min[u] = best.0;
            self.node_argmin[u] = best.1;
        }
    }

    /// Joint minimum of node u's cell losses over v ≥ floor; convex and
    /// nondecreasing in the floor.
    fn node_min_at(&self, u: usize, floor: f64) -> f64 {
        if floor <= self.node_argmin[u] {
            self.node_min[u]
        } else {
            self.node_targets[u]
                .iter()
                .map(|y| (y - floor).abs().powf(self.p))
                .sum()
        }
    }

    /// Returns `(skip, pruner)`. `skip` is a valid lower bound on the
    /// objective of any completion of the first `assigned` nodes: the max
    /// of the per-reviewer bound Σᵢ Sᵢ^{q/p} (assigned residuals plus
    /// deviations forced by assigned predecessors) and a whole-sum bound
    /// built from per-node constrained minima. `pruner` is the whole sum
    /// itself, convex in each assigned value, for sweep cutoffs.
    fn bound(&mut self, assigned: usize) -> (f64, f64) {
        self.used += 1;
        let mut sums = vec![0.0; self.num_groups];
        let mut whole = 0.0;
        for cell in &self.cells {
            if cell.node < assigned {
                let r = (cell.target - self.values[cell.node]).abs().powf(self.p);
                sums[cell.reviewer] += r;
                whole += r;
            } else {
                let mut forced = self.lows[cell.node];
                for &u in &self.preds[cell.node] {
                    if u < assigned && self.values[u] > forced {
                        forced = self.values[u];
                    }
                }
                if cell.target < forced {
                    sums[cell.reviewer] += (forced - cell.target).powf(self.p);
                }
            }
        }
        for node in assigned..self.values.len() {
            let mut floor = self.lows[node];
            for &u in &self.preds[node] {
                if u < assigned && self.values[u] > floor {
                    floor = self.values[u];
                }
            }
            whole += self.node_min_at(node, floor);
        }
        let s = self.q / self.p;
        let per_reviewer: f64 = sums.iter().map(|&x| x.powf(s)).sum();
        let whole_scaled = if s <= 1.0 {
            whole.powf(s)
        } else {
            (self.num_groups as f64).powf(1.0 - s) * whole.powf(s)
        };
        (per_reviewer.max(whole_scaled), whole)
    }

    fn dfs(&mut self, node: usize) -> Result<(), OracleError> {
        if self.used > self.budget {
            return Err(OracleError::BudgetExceeded {
                budget: self.budget,
            });
        }
        if node == self.values.len() {
            let (obj, _) = self.bound(node);
            let norm: f64 = self.values.iter().map(|x| x * x).sum();
            if obj < self.best_obj - TIE_ETA
                || (obj <= self.best_obj + TIE_ETA && norm < self.best_norm)
            {
                self.best_obj = self.best_obj.min(obj);
                self.best_norm = norm;
                self.best = self.values.clone();
            }
            return Ok(());
        }
        let mut floor = f64::NEG_INFINITY;
        for &u in &self.preds[node] {
            if self.values[u] > floor {
                floor = self.values[u];
            }
        }
        let grid = std::mem::take(&mut self.grids[node]);
        let start = grid.partition_point(|&x| x < floor - 1e-12);
        // sweep pruning: the whole-sum pruner is convex in this node's
        // value for every (p, q), and for q >= p the skip bound itself is
        // convex too; either way, once the convex quantity has stopped
        // decreasing while its induced bound exceeds the incumbent, every
        // later candidate is provably worse
        let convex_skip = self.q >= self.p;
        let s = self.q / self.p;
        let scale = if s <= 1.0 {
            1.0
        } else {
            (self.num_groups as f64).powf(1.0 - s)
        };
        let mut prev = f64::INFINITY;
        let mut result = Ok(());
        for &candidate in &grid[start..] {
            self.values[node] = candidate;
            let (b, t) = self.bound(node + 1);
            let (pruner, pruner_bound) = if convex_skip {
                (b, b)
            } else {
                (t, scale * t.powf(s))
            };
            if pruner_bound > self.best_obj + TIE_ETA && pruner >= prev {
                break;
            }
            prev = pruner;
            if b <= self.best_obj + TIE_ETA {
                if let Err(e) = self.dfs(node + 1) {
                    result = Err(e);
                    break;
                }
            }
        }
        self.grids[node] = grid;
        result
    }

    /// Installs a feasible grid point as the starting incumbent so pruning
    /// bites from the first descent. `raw` is snapped upward onto each
    /// node's grid while respecting predecessors.
    fn seed(&mut self, raw: &[f64]) {
        let k = self.values.len();
        let mut snapped = vec![0.0; k];
        for node in 0..k {
            let mut floor = f64::NEG_INFINITY;
            for &u in &self.preds[node] {
                floor = floor.max(snapped[u]);
            }
            let grid = &self.grids[node];
            let want = raw[node].max(floor);
            let idx = grid
                .partition_point(|&x| x < want - 1e-12)
                .min(grid.len() - 1);
            snapped[node] = grid[idx].max(floor);
        }
        self.values = snapped.clone();
        let (obj, _) = self.bound(k);
        let norm: f64 = snapped.iter().map(|x| x * x).sum();
        if obj < self.best_obj - TIE_ETA
            || (obj <= self.best_obj + TIE_ETA && norm < self.best_norm)
        {
            self.best_obj = self.best_obj.min(obj);
            self.best_norm = norm;
            self.best = snapped;
        }
    }

    fn run(&mut self) -> Result<(Vec<f64>, f64), OracleError> {
        self.dfs(0)?;
        Ok((self.best.clone(), self.best_obj))
    }
}

fn make_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let mut grid = Vec::new();
    let mut x = lo;
    let mut j = 0u64;
    while x < hi - 1e-12 {
        grid.push(x);
        j += 1;
        x = lo + j as f64 * step;
    }
    grid.push(hi);
    grid
}

/// Best monotone grid assignment for the ERM stage: the grid point
/// minimizing L(p,q)^q subject to the order edges, min-norm among ties.
///
/// After the full-width pass at `grid.step` the enumeration re-runs twice on
/// shrinking windows around the incumbent with a 4x finer step each time, so
/// the reported argmin stays sharp even in shallow valleys where a single
/// coarse grid would park up to several steps away from the optimum.
pub fn grid_erm(prob: &ErmProblem, grid: &GridSpec) -> Result<(Vec<f64>, f64), OracleError> {
    let k = prob.order().len();
    if k > MAX_ERM_NODES {
        return Err(OracleError::TooManyNodes {
            nodes: k,
            max: MAX_ERM_NODES,
        });
    }
    if !grid.step.is_finite() || grid.step <= 0.0 {
        return Err(OracleError::BadStep { step: grid.step });
    }
    let (lo, hi) = grid.bounds.unwrap_or_else(|| prob.target_hull());
    let cells = || -> Vec<Cell> {
        prob.targets()
            .iter()
            .enumerate()
            .flat_map(|(node, list)| {
                list.iter().map(move |&(reviewer, target)| Cell {
                    reviewer,
                    node,
                    target,
                })
            })
            .collect()
    };
    let preds: Vec<Vec<usize>> = (0..k)
        .map(|v| prob.order().predecessors(v).collect())
        .collect();

    let mut search = Search {
        grids: vec![make_grid(lo, hi, grid.step); k],
        lows: vec![lo; k],
        cells: cells(),
        node_targets: Vec::new(),
        node_min: Vec::new(),
        node_argmin: Vec::new(),
        num_groups: prob.num_reviewers(),
        preds: preds.clone(),
        p: prob.params().p,
        q: prob.params().q,
        budget: grid.budget,
        used: 0,
        best_obj: f64::INFINITY,
        best_norm: f64::INFINITY,
        best: vec![lo; k],
        values: vec![lo; k],
    };
    search.prepare_node_minima();
    for seed in [node_means(prob), node_medians(prob)] {
        search.seed(&seed);
    }
    let (mut best, mut best_obj) = search.run()?;

    // refinement pays off only for q < p, where the outer power q/p < 1
    // flattens valleys enough that the coarse argmin can sit several steps
    // off; elsewhere the coarse pass is already sharp
    let passes = if prob.params().q < prob.params().p { 2 } else { 0 };
    let mut step = grid.step;
    for _ in 0..passes {
        let window = 8.0 * step;
        step /= 4.0;
        let grids: Vec<Vec<f64>> = best
            .iter()
            .map(|&center| {
                let wlo = (center - window).max(lo);
                let whi = (center + window).min(hi);
                let mut g = make_grid(wlo, whi, step);
                // keep the incumbent itself so refinement can only improve
                match g.binary_search_by(|x| x.partial_cmp(&center).unwrap()) {
                    Ok(_) => {}
                    Err(pos) => g.insert(pos, center),
                }
                g
            })
            .collect();
        let lows: Vec<f64> = grids.iter().map(|g| g[0]).collect();
        let mut refine = Search {
            grids,
            lows,
            cells: cells(),
            node_targets: Vec::new(),
            node_min: Vec::new(),
            node_argmin: Vec::new(),
            num_groups: prob.num_reviewers(),
            preds: preds.clone(),
            p: prob.params().p,
            q: prob.params().q,
            budget: grid.budget,
            used: 0,
            best_obj: f64::INFINITY,
            best_norm: f64::INFINITY,
            best: best.clone(),
            values: best.clone(),
        };
        refine.prepare_node_minima();
        refine.seed(&best);
        (best, best_obj) = refine.run()?;
    }
    Ok((best, best_obj))
}

fn node_means(prob: &ErmProblem) -> Vec<f64> {
    prob.targets()
        .iter()
        .map(|list| list.iter().map(|&(_, y)| y).sum::<f64>() / list.len() as f64)
        .collect()
}

fn node_medians(prob: &ErmProblem) -> Vec<f64> {
    prob.targets()
        .iter()
        .map(|list| {
            let mut values: Vec<f64> = list.iter().map(|&(_, y)| y).collect();
            values.sort_unstable_by(f64::total_cmp);
            values[(values.len() - 1) / 2]
        })
        .collect()
}

/// Best grid score vector for the aggregation stage (unconstrained). For
/// p = q the search decomposes into per-paper scans.
pub fn grid_aggregate(
    fitted: &FittedValues,
    params: &Params,
    grid: &GridSpec,
) -> Result<(Vec<f64>, f64), OracleError> {
    if !grid.step.is_finite() || grid.step <= 0.0 {
        return Err(OracleError::BadStep { step: grid.step });
    }
    let m = fitted.num_papers();
    let n = fitted.num_reviewers();
    let (lo, hi) = grid.bounds.unwrap_or_else(|| fitted.hull());
    let points = make_grid(lo, hi, grid.step);

    if params.p == params.q {
        let mut scores = Vec::with_capacity(m);
        let mut total = 0.0;
        for a in 0..m {
            let column = fitted.column(a);
            let mut best = (f64::INFINITY, lo);
            for &s in &points {
                let obj: f64 = column.iter().map(|y| (y - s).abs().powf(params.p)).sum();
                if obj < best.0 - TIE_ETA {
                    best = (obj, s);
                }
            }
            total += best.0;
            scores.push(best.1);
        }
        return Ok((scores, total));
    }

    if m > MAX_AGG_PAPERS {
        return Err(OracleError::TooManyNodes {
            nodes: m,
            max: MAX_AGG_PAPERS,
        });
    }
    let cells: Vec<Cell> = (0..n)
        .flat_map(|i| (0..m).map(move |a| (i, a)))
        .map(|(i, a)| Cell {
            reviewer: i,
            node: a,
            target: fitted.value(i, a),
        })
        .collect();
    let mut search = Search {
        grids: vec![points; m],
        lows: vec![lo; m],
        cells,
        node_targets: Vec::new(),
        node_min: Vec::new(),
        node_argmin: Vec::new(),
        num_groups: n,
        preds: vec![Vec::new(); m],
        p: params.p,
        q: params.q,
        budget: grid.budget,
        used: 0,
        best_obj: f64::INFINITY,
        best_norm: f64::INFINITY,
        best: vec![lo; m],
        values: vec![lo; m],
    };
    search.prepare_node_minima();
    search.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Params, ReviewDataset};
    use crate::instances;
    use crate::solver::{erm_fit, ErmProblem};

    fn params(p: f64, q: f64) -> Params {
        Params::new(p, q).unwrap()
    }

    #[test]
    fn staircase_grid_optimum_matches_hand_solution() {
        let ds = instances::consensus_counterexample();
        let prob = ErmProblem::new(&ds, params(1.0, 1.0));
        let (values, obj) = grid_erm(&prob, &GridSpec::default()).unwrap();
        assert!((obj - 1.0).abs() < 0.02, "objective {obj}");
        for (got, want) in values.iter().zip([1.0, 1.0, 1.0, 2.0]) {
            assert!((got - want).abs() < 0.011, "{values:?}");
        }
    }

    #[test]
    fn single_node_grid_mean() {
        let ds = ReviewDataset::from_cells(
            2,
            1,
            1,
            vec![(0, 0, vec![4.0], 1.0), (1, 0, vec![4.0], 3.0)],
        )
        .unwrap();
        let prob = ErmProblem::new(&ds, params(2.0, 2.0));
        let (values, _) = grid_erm(&prob, &GridSpec::default()).unwrap();
        assert!((values[0] - 2.0).abs() < 0.011);
    }

    #[test]
    fn monotone_chain_achieves_zero() {
        let ds = ReviewDataset::from_cells(
            1,
            2,
            1,
            vec![(0, 0, vec![1.0], 2.0), (0, 1, vec![5.0], 4.0)],
        )
        .unwrap();
        let prob = ErmProblem::new(&ds, params(1.5, 2.5));
        let (values, obj) = grid_erm(&prob, &GridSpec::default()).unwrap();
        assert!(obj < 1e-9, "{obj}");
        assert!((values[0] - 2.0).abs() < 1e-9);
        assert!((values[1] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn aggregate_grid_prefers_left_median_point() {
        let ds = instances::consensus_counterexample();
        let prob = ErmProblem::new(&ds, params(1.0, 1.0));
        let fitted = erm_fit(&prob).unwrap();
        // paper b column is {1, 2}: the whole interval ties, min-norm picks 1
        let (scores, _) = grid_aggregate(&fitted, &params(1.0, 1.0), &GridSpec::default()).unwrap();
        assert!((scores[1] - 1.0).abs() < 0.011, "{scores:?}");
    }

    #[test]
    fn aggregate_grid_unanimous_column_is_fixed() {
        let ds = instances::hidden_with_incomparable_scores(&[vec![5.0, 5.0, 5.0]]);
        for (p, q) in [(1.0, 1.0), (2.0, 1.0), (1.5, 2.0)] {
            let prob = ErmProblem::new(&ds, params(p, q));
            let fitted = erm_fit(&prob).unwrap();
            let (scores, _) =
                grid_aggregate(&fitted, &params(p, q), &GridSpec::default()).unwrap();
            assert!((scores[0] - 5.0).abs() < 0.011, "p={p} q={q}: {scores:?}");
        }
    }

    #[test]
    fn pooled_instance_aggregates_equal_scores() {
        let ds = instances::strict_domination_tie();
        let prob = ErmProblem::new(&ds, params(2.0, 2.0));
        let fitted = erm_fit(&prob).unwrap();
        let (scores, _) = grid_aggregate(&fitted, &params(2.0, 2.0), &GridSpec::default()).unwrap();
        assert!((scores[0] - 2.0).abs() < 0.011);
        assert!((scores[1] - 2.0).abs() < 0.011);
    }

    #[test]
    fn too_many_nodes_is_reported() {
        let ds = ReviewDataset::from_cells(
            1,
            7,
            1,
            (0..7).map(|a| (0usize, a, vec![a as f64], a as f64)),
        )
        .unwrap();
        let prob = ErmProblem::new(&ds, params(1.0, 1.0));
        assert!(matches!(
            grid_erm(&prob, &GridSpec::default()),
            Err(OracleError::TooManyNodes { nodes: 7, .. })
        ));
    }
}
