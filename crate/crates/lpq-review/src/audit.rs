//! Randomized axiom audits: seeded dataset generators and a parallel
//! search for violations. Every finding embeds its dataset and the trial
//! index, so `(seed, trial)` replays it exactly.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::axioms::{
    check_consensus, check_consistency, check_efficiency, l2_distance, AuditError, Axiom,
    AxiomMode, AxiomReport, Misreport, Verdict, Witness, WitnessKind,
};
use crate::dataset::{Params, ReviewDataset};
use crate::solver::aggregate;

/// How the consensus premise gets planted into paper 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnanimousPlant {
    /// All reviewers give the same recommendation; score vectors stay free.
    Recommendations,
    /// All reviewers agree on both the recommendation and the score vector.
    WithScores,
}

/// Shape and style of the random datasets an audit draws.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorSettings {
    pub num_reviewers: usize,
    pub num_papers: usize,
    pub num_criteria: usize,
    /// Objectivity-constrained data: one score vector per paper, pairwise
    /// incomparable across papers so the order never binds.
    pub hidden: bool,
    /// Draw recommendations consistent with a monotone mapping per reviewer.
    pub reviewer_monotone: bool,
    /// Force paper 0 into a consensus-premise configuration.
    pub plant_unanimous: Option<UnanimousPlant>,
    /// Force the last paper pair into a domination relation so the
    /// efficiency/consistency premises fire.
    pub plant_dominated_pair: bool,
}

impl GeneratorSettings {
    pub fn hidden(num_reviewers: usize, num_papers: usize) -> Self {
        Self {
            num_reviewers,
            num_papers,
            num_criteria: 2,
            hidden: true,
            reviewer_monotone: false,
            plant_unanimous: None,
            plant_dominated_pair: false,
        }
    }

    pub fn monotone(num_reviewers: usize, num_papers: usize, num_criteria: usize) -> Self {
        Self {
            num_reviewers,
            num_papers,
            num_criteria,
            hidden: false,
            reviewer_monotone: true,
            plant_unanimous: None,
            plant_dominated_pair: false,
        }
    }

    pub fn plant_unanimous(mut self, plant: UnanimousPlant) -> Self {
        self.plant_unanimous = Some(plant);
        self
    }

    pub fn plant_dominated_pair(mut self) -> Self {
        self.plant_dominated_pair = true;
        self
    }
}

/// Which checks an audit runs per trial.
#[derive(Debug, Clone)]
pub struct AuditSettings {
    pub generator: GeneratorSettings,
    pub axioms: Vec<(Axiom, AxiomMode)>,
    /// Random recommendation misreports tried per trial when the list
    /// includes strategy-proofness.
    pub misreports_per_trial: usize,
}

/// A violation found by [`audit_random`], tagged with its trial index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditFinding {
    pub trial: u64,
    pub report: AxiomReport,
}

/// Draws one dataset according to the settings.
pub fn random_dataset(settings: &GeneratorSettings, rng: &mut impl Rng) -> ReviewDataset {
    if settings.hidden {
        random_hidden(settings, rng)
    } else {
        random_monotone(settings, rng)
    }
}

fn random_hidden(settings: &GeneratorSettings, rng: &mut impl Rng) -> ReviewDataset {
    let (n, m) = (settings.num_reviewers, settings.num_papers);
    // antichain of per-paper vectors: coordinate 0 rises, coordinate 1 falls
    let vectors: Vec<Vec<f64>> = (0..m)
        .map(|a| vec![1.0 + a as f64, 1.0 + (m - 1 - a) as f64])
        .collect();
    let mut columns: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..n).map(|_| rng.gen_range(0.0..=10.0)).collect())
        .collect();
    if settings.plant_unanimous.is_some() {
        let y = rng.gen_range(0.0..=10.0);
        columns[0] = vec![y; n];
    }
    if settings.plant_dominated_pair && m >= 2 {
        let (hi, lo) = (m - 2, m - 1);
        columns[hi] = (0..n).map(|_| rng.gen_range(3.0..=10.0)).collect();
        let mut dominated: Vec<f64> = columns[hi]
            .iter()
            .map(|&y| y - rng.gen_range(0.5..=2.9))
            .collect();
        // shuffling keeps the sorted (permutation) domination but breaks the
        // per-reviewer pairing, which is where violations live
        dominated.shuffle(rng);
        columns[lo] = dominated;
    }
    ReviewDataset::hidden_from_columns(&vectors, &columns).expect("generated data is valid")
}

fn random_grid_vector(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(0..=9) as f64).collect()
}

fn random_monotone(settings: &GeneratorSettings, rng: &mut impl Rng) -> ReviewDataset {
    let (n, m, d) = (
        settings.num_reviewers,
        settings.num_papers,
        settings.num_criteria,
    );
    let planted_unanimous = settings.plant_unanimous.map(|plant| {
        (
            plant,
            random_grid_vector(d, rng),
            rng.gen_range(0.0f64..=10.0),
        )
    });
    let dominated_pair = (settings.plant_dominated_pair && m >= 2).then_some((m - 2, m - 1));

    let mut entries = Vec::with_capacity(n * m);
    for i in 0..n {
        // cells of this reviewer drawn in paper order, each recommendation
        // confined to the interval its comparable predecessors allow
        let mut drawn: Vec<(Vec<f64>, f64)> = Vec::with_capacity(m);
        for a in 0..m {
            let planted = planted_unanimous.as_ref().filter(|_| a == 0);
            let scores = if let Some((UnanimousPlant::WithScores, x, _)) = planted {
                x.clone()
            } else if let Some((hi_paper, lo_paper)) = dominated_pair {
                if a == lo_paper {
                    // dominated componentwise by the previous paper
                    drawn[hi_paper]
                        .0
                        .iter()
                        .map(|&x| (x - rng.gen_range(0..=2) as f64).max(0.0))
                        .collect()
                } else {
                    random_grid_vector(d, rng)
                }
            } else {
                random_grid_vector(d, rng)
            };

            let mut lo = 0.0f64;
            let mut hi = 10.0f64;
            let mut pinned = None;
            for (prev_scores, prev_rec) in &drawn {
                if *prev_scores == scores {
                    pinned = Some(*prev_rec);
                } else if crate::dataset::componentwise_le(prev_scores, &scores) {
                    lo = lo.max(*prev_rec);
                } else if crate::dataset::componentwise_le(&scores, prev_scores) {
                    hi = hi.min(*prev_rec);
                }
            }
            let rec = if let Some(y) = pinned {
                y
            } else if let Some(&(_, _, y)) = planted {
                // the planted value wins; paper 0 is drawn first, so the
                // interval is still [0, 10] and the clamp never moves it
                y.clamp(lo, hi)
            } else {
                rng.gen_range(lo..=hi)
            };
            drawn.push((scores, rec));
        }
        for (a, (scores, rec)) in drawn.into_iter().enumerate() {
            entries.push((i, a, scores, rec));
        }
    }
    ReviewDataset::from_cells(n, m, d, entries).expect("generated data is valid")
}

/// A random recommendations-only misreport for one reviewer.
pub fn random_misreport(
    ds: &ReviewDataset,
    reviewer: usize,
    rng: &mut impl Rng,
) -> Misreport {
    let m = ds.num_papers();
    loop {
        let recs: Vec<Option<f64>> = (0..m)
            .map(|_| rng.gen_bool(0.5).then(|| rng.gen_range(0.0..=10.0)))
            .collect();
        if recs.iter().any(Option::is_some) {
            return Misreport::recommendations_only(reviewer, recs);
        }
    }
}

/// Runs the configured checks on `trials` random datasets and returns the
/// violations. Trials run in parallel, each on an independent RNG stream
/// derived from `(seed, trial index)`; the output order is by trial.
pub fn audit_random(
    params: &Params,
    settings: &AuditSettings,
    trials: u64,
    seed: u64,
) -> Result<Vec<AuditFinding>, AuditError> {
    let per_trial: Result<Vec<Vec<AuditFinding>>, AuditError> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial);
            let ds = random_dataset(&settings.generator, &mut rng);
            let mut found = Vec::new();
            for &(axiom, mode) in &settings.axioms {
                let reports = match axiom {
                    Axiom::Consensus => vec![check_consensus(&ds, params, mode)?],
                    Axiom::Efficiency => vec![check_efficiency(&ds, params, mode)?],
                    Axiom::Consistency => vec![check_consistency(&ds, params, mode)?],
                    Axiom::StrategyProofness => {
                        strategy_proofness_trials(&ds, params, settings.misreports_per_trial, &mut rng)?
                    }
                };
                for report in reports {
                    if report.verdict == Verdict::Violated {
                        found.push(AuditFinding { trial, report });
                    }
                }
            }
            Ok(found)
        })
        .collect();
    Ok(per_trial?.into_iter().flatten().collect())
}

/// Solves the honest instance once, then tries random misreports against it.
fn strategy_proofness_trials(
    ds: &ReviewDataset,
    params: &Params,
    misreports: usize,
    rng: &mut impl Rng,
) -> Result<Vec<AxiomReport>, AuditError> {
    let (_, honest) = aggregate(ds, params)?;
    let mut out = Vec::new();
    for _ in 0..misreports {
        let reviewer = rng.gen_range(0..ds.num_reviewers());
        let misreport = random_misreport(ds, reviewer, rng);
        let manipulated_ds = match misreport.apply(ds) {
            Ok(d) => d,
            // the draw collided with an invariant (e.g. duplicated vectors)
            Err(_) => continue,
        };
        let (_, manipulated) = aggregate(&manipulated_ds, params)?;
        let truth = ds.recommendation_row(reviewer);
        let honest_distance = l2_distance(&honest.scores, &truth);
        let manipulated_distance = l2_distance(&manipulated.scores, &truth);
        if manipulated_distance < honest_distance - crate::axioms::STRICT_TOL {
            out.push(AxiomReport {
                axiom: Axiom::StrategyProofness,
                mode: AxiomMode::Plain,
                verdict: Verdict::Violated,
                witness: Some(Witness {
                    dataset: ds.clone(),
                    params: *params,
                    mode: AxiomMode::Plain,
                    kind: WitnessKind::StrategyProofness {
                        misreport,
                        honest_scores: honest.scores.clone(),
                        manipulated_scores: manipulated.scores.clone(),
                        honest_distance,
                        manipulated_distance,
                    },
                }),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::order::apply_objectivity;

    #[test]
    fn hidden_generator_is_objective_and_deterministic() {
        let settings = GeneratorSettings::hidden(3, 3)
            .plant_unanimous(UnanimousPlant::Recommendations)
            .plant_dominated_pair();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_dataset(&settings, &mut rng);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = random_dataset(&settings, &mut rng);
        assert_eq!(a, b);
        assert!(apply_objectivity(&a).is_ok());
        assert_eq!(a.recommendation_column(0), vec![a.recommendation(0, 0); 3]);
        let hi = a.recommendation_column(1);
        let lo = a.recommendation_column(2);
        for (h, l) in hi.iter().zip(&lo) {
            assert!(h >= l);
        }
    }

    #[test]
    fn monotone_generator_never_warns() {
        for seed in 0..30 {
            let settings = GeneratorSettings::monotone(3, 3, 2)
                .plant_unanimous(UnanimousPlant::Recommendations)
                .plant_dominated_pair();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ds = random_dataset(&settings, &mut rng);
            assert!(
                ds.warnings().is_empty(),
                "seed {seed} produced a non-monotone reviewer"
            );
        }
    }

    #[test]
    fn audit_findings_replay() {
        // the staircase-like regime: non-hidden data violates plain axioms
        let params = Params::new(1.0, 1.0).unwrap();
        let settings = AuditSettings {
            generator: GeneratorSettings {
                num_reviewers: 2,
                num_papers: 2,
                num_criteria: 1,
                hidden: false,
                reviewer_monotone: true,
                plant_unanimous: Some(UnanimousPlant::Recommendations),
                plant_dominated_pair: false,
            },
            axioms: vec![(Axiom::Consensus, AxiomMode::Plain)],
            misreports_per_trial: 0,
        };
        let findings = audit_random(&params, &settings, 200, 11).unwrap();
        assert!(
            !findings.is_empty(),
            "expected at least one plain-consensus violation on non-hidden data"
        );
        for finding in findings.iter().take(5) {
            let witness = finding.report.witness.as_ref().unwrap();
            assert_eq!(
                crate::axioms::replay(witness).unwrap(),
                Verdict::Violated
            );
        }
    }

    #[test]
    fn hidden_left_median_audit_is_clean() {
        let params = Params::new(1.0, 1.0).unwrap();
        let settings = AuditSettings {
            generator: GeneratorSettings::hidden(3, 2).plant_dominated_pair(),
            axioms: vec![
                (Axiom::Efficiency, AxiomMode::Plain),
                (Axiom::StrategyProofness, AxiomMode::Plain),
            ],
            misreports_per_trial: 20,
        };
        let findings = audit_random(&params, &settings, 100, 3).unwrap();
        assert!(findings.is_empty(), "{findings:?}");
    }
}
