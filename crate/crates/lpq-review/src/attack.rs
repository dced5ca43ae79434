//! Constructive manipulation probes: the consensus/consistency bisection
//! attack on recommendations, the score-misreport discontinuity probe, and
//! a randomized misreport search.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::axioms::{l2_distance, Misreport};
use crate::dataset::{Params, ReviewDataset, ValidationError};
use crate::solver::{aggregate, SolveError};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("parameter {name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("the construction needs p = q > 1, got p = {p}, q = {q}")]
    NeedsStrictlyConvexDiagonal { p: f64, q: f64 },
    #[error("no sign change of s_a - s_b over t in [0, 1]; the method under test is not behaving continuously/consistently")]
    NoCrossing,
    #[error("constructed attack produced no gain (honest {honest}, manipulated {manipulated})")]
    AttackFailed { honest: f64, manipulated: f64 },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("misreport is malformed: {0}")]
    InvalidMisreport(#[from] ValidationError),
}

/// A successful (or attempted) manipulation: the honest dataset, the
/// misreport, both solutions, and the reviewer's L2 gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub dataset: ReviewDataset,
    pub params: Params,
    pub misreport: Misreport,
    pub honest_scores: Vec<f64>,
    pub manipulated_scores: Vec<f64>,
    pub honest_distance: f64,
    pub manipulated_distance: f64,
    /// honest_distance − manipulated_distance; positive means the reviewer
    /// profited.
    pub gain: f64,
}

/// Hidden-scores family over t ∈ [0, 1]: two reviewers, two papers, paper a
/// fixed at recommendations {4, 6} while paper b is unanimous at 4 + 2t.
pub fn build_bisection_instance(t: f64) -> Result<ReviewDataset, AttackError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(AttackError::OutOfRange {
            name: "t",
            value: t,
            range: "[0, 1]",
        });
    }
    let vectors = vec![vec![2.0, 3.0], vec![3.0, 2.0]];
    let columns = vec![vec![4.0, 6.0], vec![4.0 + 2.0 * t; 2]];
    Ok(ReviewDataset::hidden_from_columns(&vectors, &columns).expect("instance is valid"))
}

fn require_diagonal(params: &Params) -> Result<(), AttackError> {
    if params.p != params.q || params.p <= 1.0 {
        return Err(AttackError::NeedsStrictlyConvexDiagonal {
            p: params.p,
            q: params.q,
        });
    }
    Ok(())
}

fn bisection_scores(t: f64, params: &Params) -> Result<(f64, f64), AttackError> {
    let ds = build_bisection_instance(t)?;
    let (_, solution) = aggregate(&ds, params)?;
    Ok((solution.scores[0], solution.scores[1]))
}

/// The t where both papers of the bisection family aggregate equally.
/// Requires p = q > 1 so the solution is unique and moves continuously.
pub fn find_crossing(params: &Params) -> Result<f64, AttackError> {
    require_diagonal(params)?;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let gap = |t: f64| -> Result<f64, AttackError> {
        let (sa, sb) = bisection_scores(t, params)?;
        Ok(sa - sb)
    };
    let (glo, ghi) = (gap(lo)?, gap(hi)?);
    if glo <= 0.0 || ghi >= 0.0 {
        return Err(AttackError::NoCrossing);
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if gap(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 {
            break;
        }
    }
    let u = 0.5 * (lo + hi);
    let (sa, sb) = bisection_scores(u, params)?;
    if (sa - sb).abs() > 1e-9 {
        return Err(AttackError::NoCrossing);
    }
    Ok(u)
}

/// Builds the crossing-based recommendation attack: the honest dataset puts
/// reviewer 0 exactly at the crossing value on both papers, and the
/// misreport y'_{0a} = 4 drags the solution onto the reviewer's own
/// recommendations.
pub fn construct_recommendation_attack(params: &Params) -> Result<AttackResult, AttackError> {
    require_diagonal(params)?;
    let u = find_crossing(params)?;
    let s_u = 4.0 + 2.0 * u;
    let vectors = vec![vec![2.0, 3.0], vec![3.0, 2.0]];
    let columns = vec![vec![s_u, 6.0], vec![s_u, s_u]];
    let dataset = ReviewDataset::hidden_from_columns(&vectors, &columns).expect("valid");
    let misreport = Misreport::recommendations_only(0, vec![Some(4.0), None]);

    let (_, honest) = aggregate(&dataset, params)?;
    let manipulated_ds = misreport.apply(&dataset)?;
    let (_, manipulated) = aggregate(&manipulated_ds, params)?;
    let truth = dataset.recommendation_row(0);
    let honest_distance = l2_distance(&honest.scores, &truth);
    let manipulated_distance = l2_distance(&manipulated.scores, &truth);
    let gain = honest_distance - manipulated_distance;
    if gain <= 0.0 {
        return Err(AttackError::AttackFailed {
            honest: honest_distance,
            manipulated: manipulated_distance,
        });
    }
    Ok(AttackResult {
        dataset,
        params: *params,
        misreport,
        honest_scores: honest.scores,
        manipulated_scores: manipulated.scores,
        honest_distance,
        manipulated_distance,
        gain,
    })
}

/// Three reviewers, two papers, one criterion: the interleaving
/// x_{0a} = x_{1b} < x_{0b} < x_{1a} = x_{2a} < x_{2b} forces the fit of
/// reviewer 0's recommendation on paper b down. ε controls how close
/// x_{0b} = 3.1 − ε sits under the 3.1 pair.
pub fn build_discontinuity_instance(epsilon: f64) -> Result<ReviewDataset, AttackError> {
    if !(epsilon > 0.0 && epsilon < 2.1) {
        return Err(AttackError::OutOfRange {
            name: "epsilon",
            value: epsilon,
            range: "(0, 2.1)",
        });
    }
    Ok(ReviewDataset::from_cells(
        3,
        2,
        1,
        vec![
            (0, 0, vec![1.0], 1.0),
            (0, 1, vec![3.1 - epsilon], 2.0),
            (1, 0, vec![3.1], 1.0),
            (1, 1, vec![1.0], 1.0),
            (2, 0, vec![3.1], 1.0),
            (2, 1, vec![4.0], 2.0),
        ],
    )
    .expect("instance is valid"))
}

/// For each ε, the jump in paper b's score when reviewer 0 misreports the
/// score of paper b from 3.1 − ε to 3.1 + ε. Under L(1,1) the jump is 1
/// regardless of ε, witnessing the discontinuity.
pub fn continuity_probe(
    params: &Params,
    epsilons: &[f64],
) -> Result<Vec<(f64, f64)>, AttackError> {
    let mut out = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let ds = build_discontinuity_instance(eps)?;
        let (_, honest) = aggregate(&ds, params)?;
        let misreport = Misreport {
            reviewer: 0,
            recommendations: vec![None, None],
            score_vectors: vec![None, Some(vec![3.1 + eps])],
        };
        let manipulated_ds = misreport.apply(&ds)?;
        let (_, manipulated) = aggregate(&manipulated_ds, params)?;
        out.push((eps, (manipulated.scores[1] - honest.scores[1]).abs()));
    }
    Ok(out)
}

/// Samples random misreports for one reviewer and returns the
/// highest-gain successful attack, if any. Trials run in parallel on RNG
/// streams derived from (seed, trial); ties in gain go to the lowest trial.
pub fn random_misreport_search(
    ds: &ReviewDataset,
    params: &Params,
    reviewer: usize,
    trials: u64,
    seed: u64,
    perturb_scores: bool,
) -> Result<Option<AttackResult>, AttackError> {
    let (_, honest) = aggregate(ds, params)?;
    let truth = ds.recommendation_row(reviewer);
    let honest_distance = l2_distance(&honest.scores, &truth);

    let candidates: Result<Vec<Option<(f64, u64, Misreport, Vec<f64>, f64)>>, AttackError> =
        (0..trials)
            .into_par_iter()
            .map(|trial| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(trial);
                let m = ds.num_papers();
                let d = ds.num_criteria();
                let recommendations: Vec<Option<f64>> = (0..m)
                    .map(|_| rng.gen_bool(0.5).then(|| rng.gen_range(0.0..=10.0)))
                    .collect();
                let score_vectors: Vec<Option<Vec<f64>>> = (0..m)
                    .map(|_| {
                        (perturb_scores && rng.gen_bool(0.5)).then(|| {
                            (0..d).map(|_| rng.gen_range(0.0..=10.0)).collect()
                        })
                    })
                    .collect();
                if recommendations.iter().all(Option::is_none)
                    && score_vectors.iter().all(Option::is_none)
                {
                    return Ok(None);
                }
                let misreport = Misreport {
                    reviewer,
                    recommendations,
                    score_vectors,
                };
                let manipulated_ds = match misreport.apply(ds) {
                    Ok(d) => d,
                    Err(_) => return Ok(None),
                };
                let (_, manipulated) = aggregate(&manipulated_ds, params)?;
                let dist = l2_distance(&manipulated.scores, &truth);
                let gain = honest_distance - dist;
                if gain > 1e-9 {
                    Ok(Some((gain, trial, misreport, manipulated.scores, dist)))
                } else {
                    Ok(None)
                }
            })
            .collect();

    let best = candidates?
        .into_iter()
        .flatten()
        .min_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    Ok(best.map(
        |(gain, _, misreport, manipulated_scores, manipulated_distance)| AttackResult {
            dataset: ds.clone(),
            params: *params,
            misreport,
            honest_scores: honest.scores.clone(),
            manipulated_scores,
            honest_distance,
            manipulated_distance,
            gain,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axioms::{check_strategy_proofness, Verdict};
    use crate::instances;

    fn params(p: f64, q: f64) -> Params {
        Params::new(p, q).unwrap()
    }

    #[test]
    fn bisection_instance_matches_family() {
        let d0 = build_bisection_instance(0.0).unwrap();
        assert_eq!(d0.recommendation_column(0), vec![4.0, 6.0]);
        assert_eq!(d0.recommendation_column(1), vec![4.0, 4.0]);
        let d1 = build_bisection_instance(1.0).unwrap();
        assert_eq!(d1.recommendation_column(1), vec![6.0, 6.0]);
        let dh = build_bisection_instance(0.5).unwrap();
        assert_eq!(dh.recommendation_column(1), vec![5.0, 5.0]);
        assert!(build_bisection_instance(1.2).is_err());
    }

    #[test]
    fn crossing_sits_at_one_half() {
        for p in [2.0, 4.0, 1.5] {
            let u = find_crossing(&params(p, p)).unwrap();
            assert!((u - 0.5).abs() < 1e-9, "p={p}: u={u}");
        }
        assert!(matches!(
            find_crossing(&params(1.0, 1.0)),
            Err(AttackError::NeedsStrictlyConvexDiagonal { .. })
        ));
    }

    #[test]
    fn crossing_attack_zeroes_reviewer_distance() {
        let result = construct_recommendation_attack(&params(2.0, 2.0)).unwrap();
        assert!((result.honest_scores[0] - 5.5).abs() < 1e-9);
        assert!((result.honest_scores[1] - 5.0).abs() < 1e-9);
        assert!((result.manipulated_scores[0] - 5.0).abs() < 1e-9);
        assert!((result.honest_distance - 0.5).abs() < 1e-9);
        assert!(result.manipulated_distance.abs() < 1e-9);

        let p3 = construct_recommendation_attack(&params(3.0, 3.0)).unwrap();
        assert!(p3.gain > 0.0);
    }

    #[test]
    fn attacks_replay_as_strategy_proofness_violations() {
        let result = construct_recommendation_attack(&params(2.0, 2.0)).unwrap();
        let report =
            check_strategy_proofness(&result.dataset, &result.params, &result.misreport).unwrap();
        assert_eq!(report.verdict, Verdict::Violated);
    }

    #[test]
    fn discontinuity_instance_guards_epsilon() {
        let ds = build_discontinuity_instance(0.2).unwrap();
        assert_eq!(ds.scores(0, 1), &[2.9]);
        assert!(ds.warnings().is_empty());
        assert!(build_discontinuity_instance(3.0).is_err());
        assert!(build_discontinuity_instance(0.0).is_err());
    }

    #[test]
    fn left_median_gap_is_one_for_every_epsilon() {
        let probes =
            continuity_probe(&params(1.0, 1.0), &[0.1, 0.01, 0.001]).unwrap();
        for (eps, gap) in probes {
            assert!((gap - 1.0).abs() < 1e-6, "eps={eps}: gap={gap}");
        }
    }

    #[test]
    fn squared_loss_also_jumps() {
        let probes = continuity_probe(&params(2.0, 2.0), &[0.01]).unwrap();
        assert!(probes[0].1 > 0.1, "gap {}", probes[0].1);
    }

    #[test]
    fn random_search_finds_the_staircase_attack() {
        let ds = instances::consensus_counterexample();
        let best = random_misreport_search(&ds, &params(1.0, 1.0), 1, 500, 42, false)
            .unwrap()
            .expect("an attack exists for reviewer 1");
        assert!(best.gain >= 0.1, "gain {}", best.gain);
        let report = check_strategy_proofness(&ds, &params(1.0, 1.0), &best.misreport).unwrap();
        assert_eq!(report.verdict, Verdict::Violated);
    }

    #[test]
    fn unanimous_hidden_dataset_admits_no_attack() {
        let ds = instances::hidden_with_incomparable_scores(&[
            vec![7.0, 7.0],
            vec![3.0, 3.0],
        ]);
        let best = random_misreport_search(&ds, &params(1.0, 1.0), 0, 300, 9, false).unwrap();
        assert!(best.is_none(), "{best:?}");
    }
}
