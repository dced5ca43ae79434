//! Linear variant of the aggregation: fit one monotone linear mapping per
//! reviewer (nonnegative coefficients), aggregate the coefficient vectors,
//! aggregate the score vectors per paper, and score each paper with the
//! aggregated line. Stays continuous in the data, at the price of exactness.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Params, ReviewDataset};
use crate::solver::newton::{ConvexProgram, LinearConstraint, Residual};
use crate::solver::{OneDimProblem, SolveError, Solution, TIE_BREAK_EPSILON};

/// Monotone linear map: d slopes followed by the intercept, all nonnegative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn num_criteria(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn predict(&self, scores: &[f64]) -> f64 {
        let d = self.num_criteria();
        self.coefficients[..d]
            .iter()
            .zip(scores)
            .map(|(c, x)| c * x)
            .sum::<f64>()
            + self.coefficients[d]
    }
}

/// One aggregated score vector per paper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedScores {
    pub vectors: Vec<Vec<f64>>,
}

/// Everything the linear pipeline produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPipeline {
    pub models: Vec<LinearModel>,
    pub aggregated_model: LinearModel,
    pub aggregated_scores: AggregatedScores,
    pub solution: Solution,
}

fn tie_epsilon(p: f64, q: f64) -> f64 {
    if p == 1.0 || q == 1.0 {
        TIE_BREAK_EPSILON
    } else {
        0.0
    }
}

/// Fits one reviewer: minimize Σ_a |c·(x̄_a, 1) − y_a|^p over c ≥ 0, ties
/// broken toward the smallest coefficient norm. The regularizer is always
/// on because rank-deficient designs tie for every p.
pub fn fit_reviewer(
    ds: &ReviewDataset,
    reviewer: usize,
    p: f64,
) -> Result<LinearModel, SolveError> {
    if !p.is_finite() || p < 1.0 {
        return Err(SolveError::BadExponent { value: p });
    }
    let d = ds.num_criteria();
    let dim = d + 1;
    let group: Vec<Residual> = (0..ds.num_papers())
        .map(|a| {
            let mut coeffs: Vec<(usize, f64)> = ds
                .scores(reviewer, a)
                .iter()
                .enumerate()
                .map(|(j, &x)| (j, x))
                .collect();
            coeffs.push((d, 1.0));
            Residual {
                coeffs,
                offset: ds.recommendation(reviewer, a),
            }
        })
        .collect();
    let program = ConvexProgram {
        dim,
        p,
        q: p,
        groups: vec![group],
        constraints: (0..dim).map(LinearConstraint::nonneg).collect(),
        l2_reg: TIE_BREAK_EPSILON,
    };
    let mean_rec = (0..ds.num_papers())
        .map(|a| ds.recommendation(reviewer, a))
        .sum::<f64>()
        / ds.num_papers() as f64;
    let mut init = vec![0.0; dim];
    init[d] = mean_rec;
    let mut coefficients = program.solve(&init)?.values;
    for c in &mut coefficients {
        *c = c.max(0.0);
    }
    snap_coefficients_to_zero(ds, reviewer, p, &mut coefficients);
    Ok(LinearModel { coefficients })
}

/// Boundary coefficients can stall at ~1e-8; zero them when doing so
/// verifiably does not hurt the fit.
fn snap_coefficients_to_zero(ds: &ReviewDataset, reviewer: usize, p: f64, c: &mut [f64]) {
    let objective = |c: &[f64]| -> f64 {
        (0..ds.num_papers())
            .map(|a| {
                let model = LinearModel {
                    coefficients: c.to_vec(),
                };
                (model.predict(ds.scores(reviewer, a)) - ds.recommendation(reviewer, a))
                    .abs()
                    .powf(p)
            })
            .sum()
    };
    let mut best = objective(c);
    for j in 0..c.len() {
        if c[j] > 0.0 && c[j] <= 1e-6 {
            let saved = c[j];
            c[j] = 0.0;
            let zeroed = objective(c);
            if zeroed <= best + 1e-12 * (1.0 + best) {
                best = zeroed;
            } else {
                c[j] = saved;
            }
        }
    }
}

/// Step two: aggregate per-reviewer coefficient vectors under L(p,q),
/// minimum-norm tie-broken. For p = q this is coordinatewise.
pub fn aggregate_coefficients(
    models: &[LinearModel],
    p: f64,
    q: f64,
) -> Result<LinearModel, SolveError> {
    if models.is_empty() {
        return Err(SolveError::EmptyInput);
    }
    let dim = models[0].coefficients.len();
    debug_assert!(models.iter().all(|m| m.coefficients.len() == dim));
    if p == q {
        let coefficients = (0..dim)
            .map(|j| {
                let column: Vec<f64> = models.iter().map(|m| m.coefficients[j]).collect();
                Ok(OneDimProblem::new(column, p)?.solve())
            })
            .collect::<Result<Vec<f64>, SolveError>>()?;
        return Ok(LinearModel { coefficients });
    }
    let groups = models
        .iter()
        .map(|m| {
            m.coefficients
                .iter()
                .enumerate()
                .map(|(j, &c)| Residual::of_var(j, c))
                .collect()
        })
        .collect();
    let program = ConvexProgram {
        dim,
        p,
        q,
        groups,
        constraints: vec![],
        l2_reg: tie_epsilon(p, q),
    };
    let init: Vec<f64> = (0..dim)
        .map(|j| models.iter().map(|m| m.coefficients[j]).sum::<f64>() / models.len() as f64)
        .collect();
    let values = program.solve(&init)?.values;
    Ok(LinearModel {
        coefficients: values.iter().map(|c| c.max(0.0)).collect(),
    })
}

/// Step three: one aggregated score vector per paper, minimizing the same
/// loss over the reviewers' score vectors for that paper.
pub fn aggregate_score_vectors(
    ds: &ReviewDataset,
    p: f64,
    q: f64,
) -> Result<AggregatedScores, SolveError> {
    let d = ds.num_criteria();
    let n = ds.num_reviewers();
    let mut vectors = Vec::with_capacity(ds.num_papers());
    for a in 0..ds.num_papers() {
        let mut u = if p == q {
            (0..d)
                .map(|j| {
                    let column: Vec<f64> = (0..n).map(|i| ds.scores(i, a)[j]).collect();
                    Ok(OneDimProblem::new(column, p)?.solve())
                })
                .collect::<Result<Vec<f64>, SolveError>>()?
        } else {
            let groups = (0..n)
                .map(|i| {
                    ds.scores(i, a)
                        .iter()
                        .enumerate()
                        .map(|(j, &x)| Residual::of_var(j, x))
                        .collect()
                })
                .collect();
            let program = ConvexProgram {
                dim: d,
                p,
                q,
                groups,
                constraints: vec![],
                l2_reg: tie_epsilon(p, q),
            };
            let init: Vec<f64> = (0..d)
                .map(|j| (0..n).map(|i| ds.scores(i, a)[j]).sum::<f64>() / n as f64)
                .collect();
            program.solve(&init)?.values
        };
        for (j, x) in u.iter_mut().enumerate() {
            let lo = (0..n).map(|i| ds.scores(i, a)[j]).fold(f64::INFINITY, f64::min);
            let hi = (0..n)
                .map(|i| ds.scores(i, a)[j])
                .fold(f64::NEG_INFINITY, f64::max);
            *x = x.clamp(lo, hi);
        }
        vectors.push(u);
    }
    Ok(AggregatedScores { vectors })
}

/// Full three-step pipeline. The solution's `erm_loss` carries the total
/// step-one fit loss Σᵢ Σₐ |hᵢ(x̄ᵢₐ) − yᵢₐ|^p and `aggregation_loss` the
/// step-two coefficient loss L(p,q)^q.
pub fn linear_pipeline(ds: &ReviewDataset, params: &Params) -> Result<LinearPipeline, SolveError> {
    let (p, q) = (params.p, params.q);
    let models: Vec<LinearModel> = (0..ds.num_reviewers())
        .map(|i| fit_reviewer(ds, i, p))
        .collect::<Result<_, _>>()?;
    let aggregated_model = aggregate_coefficients(&models, p, q)?;
    let aggregated_scores = aggregate_score_vectors(ds, p, q)?;
    let scores: Vec<f64> = aggregated_scores
        .vectors
        .iter()
        .map(|u| aggregated_model.predict(u).clamp(0.0, 10.0))
        .collect();

    let fit_loss: f64 = models
        .iter()
        .enumerate()
        .map(|(i, model)| {
            (0..ds.num_papers())
                .map(|a| {
                    (model.predict(ds.scores(i, a)) - ds.recommendation(i, a))
                        .abs()
                        .powf(p)
                })
                .sum::<f64>()
        })
        .sum();
    let coeff_loss: f64 = models
        .iter()
        .map(|m| {
            m.coefficients
                .iter()
                .zip(&aggregated_model.coefficients)
                .map(|(c, chat)| (c - chat).abs().powf(p))
                .sum::<f64>()
                .powf(q / p)
        })
        .sum();

    Ok(LinearPipeline {
        models,
        aggregated_model,
        aggregated_scores,
        solution: Solution {
            scores,
            erm_loss: fit_loss,
            aggregation_loss: coeff_loss,
        },
    })
}

/// Criteria whose fitted slope is (numerically) zero for every reviewer.
pub fn detect_ignored_criteria(models: &[LinearModel]) -> Vec<usize> {
    if models.is_empty() {
        return Vec::new();
    }
    let d = models[0].num_criteria();
    (0..d)
        .filter(|&j| models.iter().all(|m| m.coefficients[j].abs() <= 1e-9))
        .collect()
}

/// Random dataset whose reviewers are exactly linear with strictly positive
/// slopes (so no criterion is ignored), with the last paper pair planted in
/// a strict score-domination relation.
pub fn random_linear_dataset(
    num_reviewers: usize,
    num_papers: usize,
    num_criteria: usize,
    rng: &mut impl Rng,
) -> ReviewDataset {
    let (n, m, d) = (num_reviewers, num_papers, num_criteria);
    let models: Vec<LinearModel> = (0..n)
        .map(|_| {
            let mut c: Vec<f64> = (0..d)
                .map(|_| rng.gen_range(0.05..=0.9 / d as f64))
                .collect();
            c.push(rng.gen_range(0.0..=1.0));
            LinearModel { coefficients: c }
        })
        .collect();
    let mut score_matrix: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| (0..d).map(|_| rng.gen_range(0.0..=10.0)).collect())
                .collect()
        })
        .collect();
    if m >= 2 {
        for row in &mut score_matrix {
            let hi: Vec<f64> = (0..d).map(|_| rng.gen_range(2.0..=10.0)).collect();
            let lo: Vec<f64> = hi
                .iter()
                .map(|&x| (x - rng.gen_range(0.5..=1.9)).max(0.0))
                .collect();
            row[m - 2] = hi;
            row[m - 1] = lo;
        }
    }
    let entries = (0..n).flat_map(|i| {
        let model = models[i].clone();
        let rows = score_matrix[i].clone();
        (0..m).map(move |a| {
            let rec = model.predict(&rows[a]).clamp(0.0, 10.0);
            (i, a, rows[a].clone(), rec)
        })
    });
    ReviewDataset::from_cells(n, m, d, entries).expect("generated data is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_reviewer(points: &[(f64, f64)]) -> ReviewDataset {
        ReviewDataset::from_cells(
            1,
            points.len(),
            1,
            points
                .iter()
                .enumerate()
                .map(|(a, &(x, y))| (0usize, a, vec![x], y)),
        )
        .unwrap()
    }

    #[test]
    fn exact_line_is_recovered() {
        // y = 2x + 1, zero residual
        let ds = one_reviewer(&[(0.0, 1.0), (2.0, 5.0), (4.5, 10.0)]);
        let model = fit_reviewer(&ds, 0, 2.0).unwrap();
        assert!((model.coefficients[0] - 2.0).abs() < 1e-5, "{model:?}");
        assert!((model.coefficients[1] - 1.0).abs() < 1e-5, "{model:?}");
    }

    #[test]
    fn decreasing_data_clamps_slope_at_zero() {
        let ds = one_reviewer(&[(0.0, 3.0), (10.0, 1.0)]);
        let model = fit_reviewer(&ds, 0, 2.0).unwrap();
        assert!(model.coefficients[0].abs() <= 1e-9, "{model:?}");
        assert!((model.coefficients[1] - 2.0).abs() < 1e-5, "{model:?}");
    }

    #[test]
    fn single_cell_takes_min_norm_interpolant() {
        // zero-residual set is {4c1 + c2 = 6, c >= 0}; its min-norm point
        // is the projection of the origin, 6/17 * (4, 1)
        let ds = one_reviewer(&[(4.0, 6.0)]);
        let model = fit_reviewer(&ds, 0, 2.0).unwrap();
        assert!(
            (model.coefficients[0] - 24.0 / 17.0).abs() < 1e-4,
            "{model:?}"
        );
        assert!(
            (model.coefficients[1] - 6.0 / 17.0).abs() < 1e-4,
            "{model:?}"
        );
        let residual = model.predict(&[4.0]) - 6.0;
        assert!(residual.abs() < 1e-6);
    }

    #[test]
    fn coefficient_aggregation_means_and_medians() {
        let models = vec![
            LinearModel {
                coefficients: vec![1.0, 0.0],
            },
            LinearModel {
                coefficients: vec![3.0, 2.0],
            },
        ];
        let mean = aggregate_coefficients(&models, 2.0, 2.0).unwrap();
        assert!((mean.coefficients[0] - 2.0).abs() < 1e-9);
        assert!((mean.coefficients[1] - 1.0).abs() < 1e-9);

        let models = vec![
            LinearModel {
                coefficients: vec![1.0, 0.0],
            },
            LinearModel {
                coefficients: vec![1.0, 0.0],
            },
            LinearModel {
                coefficients: vec![4.0, 9.0],
            },
        ];
        let med = aggregate_coefficients(&models, 1.0, 1.0).unwrap();
        assert_eq!(med.coefficients, vec![1.0, 0.0]);

        let single = aggregate_coefficients(&models[2..], 1.5, 2.5).unwrap();
        assert!((single.coefficients[0] - 4.0).abs() < 1e-6);
        assert!((single.coefficients[1] - 9.0).abs() < 1e-6);
    }

    #[test]
    fn score_vector_aggregation_decomposes() {
        let ds = ReviewDataset::from_cells(
            2,
            1,
            1,
            vec![(0, 0, vec![1.0], 5.0), (1, 0, vec![3.0], 5.0)],
        )
        .unwrap();
        let mean = aggregate_score_vectors(&ds, 2.0, 2.0).unwrap();
        assert!((mean.vectors[0][0] - 2.0).abs() < 1e-9);

        let ds = ReviewDataset::from_cells(
            3,
            1,
            1,
            vec![
                (0, 0, vec![1.0], 5.0),
                (1, 0, vec![1.0], 5.0),
                (2, 0, vec![4.0], 5.0),
            ],
        )
        .unwrap();
        let med = aggregate_score_vectors(&ds, 1.0, 1.0).unwrap();
        assert_eq!(med.vectors[0][0], 1.0);

        let unanimous = ReviewDataset::from_cells(
            2,
            1,
            2,
            vec![(0, 0, vec![2.0, 7.0], 5.0), (1, 0, vec![2.0, 7.0], 5.0)],
        )
        .unwrap();
        let u = aggregate_score_vectors(&unanimous, 1.5, 2.0).unwrap();
        assert!((u.vectors[0][0] - 2.0).abs() < 1e-6);
        assert!((u.vectors[0][1] - 7.0).abs() < 1e-6);
    }

    #[test]
    fn middle_paper_of_bent_reviewer_misses_unanimity() {
        let ds = one_reviewer(&[(0.0, 0.0), (1.0, 5.0), (10.0, 10.0)]);
        let result = linear_pipeline(&ds, &Params::new(2.0, 2.0).unwrap()).unwrap();
        let middle = result.solution.scores[1];
        assert!(
            (middle - 255.0 / 91.0).abs() < 1e-4,
            "middle paper scored {middle}"
        );
        assert!((middle - 5.0).abs() > 1.0);
    }

    #[test]
    fn identical_linear_reviewers_reproduce_recommendations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ds = {
            let model = LinearModel {
                coefficients: vec![0.4, 0.3, 1.0],
            };
            let rows: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..2).map(|_| rng.gen_range(0.0..=10.0)).collect())
                .collect();
            ReviewDataset::from_cells(
                2,
                3,
                2,
                (0..2).flat_map(|i| {
                    let model = model.clone();
                    let rows = rows.clone();
                    (0..3).map(move |a| (i, a, rows[a].clone(), model.predict(&rows[a])))
                }),
            )
            .unwrap()
        };
        let result = linear_pipeline(&ds, &Params::new(2.0, 2.0).unwrap()).unwrap();
        for a in 0..3 {
            assert!(
                (result.solution.scores[a] - ds.recommendation(0, a)).abs() < 1e-4,
                "paper {a}: {} vs {}",
                result.solution.scores[a],
                ds.recommendation(0, a)
            );
        }
    }

    #[test]
    fn ignored_criteria_require_unanimous_zero_slopes() {
        let zero_mixed = vec![
            LinearModel {
                coefficients: vec![0.0, 0.5, 1.0],
            },
            LinearModel {
                coefficients: vec![0.0, 0.0, 2.0],
            },
        ];
        assert_eq!(detect_ignored_criteria(&zero_mixed), vec![0]);
        let all_positive = vec![LinearModel {
            coefficients: vec![0.2, 0.5, 1.0],
        }];
        assert!(detect_ignored_criteria(&all_positive).is_empty());
    }

    #[test]
    fn linear_generator_has_no_ignored_criteria_and_dominating_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let ds = random_linear_dataset(3, 3, 2, &mut rng);
        let models: Vec<LinearModel> = (0..3)
            .map(|i| fit_reviewer(&ds, i, 2.0).unwrap())
            .collect();
        assert!(detect_ignored_criteria(&models).is_empty());
        assert_ne!(
            crate::axioms::dominates_with_scores(&ds, 1, 2),
            crate::axioms::Domination::None
        );
    }

    #[test]
    fn prediction_is_monotone_in_the_aggregated_vector() {
        let model = LinearModel {
            coefficients: vec![0.3, 0.2, 1.5],
        };
        let base = model.predict(&[2.0, 4.0]);
        assert!(model.predict(&[2.5, 4.0]) >= base);
        assert!(model.predict(&[2.0, 4.5]) >= base);
    }
}
