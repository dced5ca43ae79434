use lpq_review::audit::{audit_random, AuditSettings, GeneratorSettings};
use lpq_review::axioms::{Axiom, AxiomMode};
use lpq_review::dataset::{Params, ReviewDataset};
use lpq_review::oracle::{grid_erm, GridSpec};
use lpq_review::solver::{erm_fit, ErmProblem};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn random_erm_instance(rng: &mut ChaCha8Rng) -> ReviewDataset {
    let chain = rng.gen_bool(0.7);
    let center: f64 = rng.gen_range(1.0..=9.0);
    let half: f64 = rng.gen_range(0.1..=0.3);
    let rec = |rng: &mut ChaCha8Rng| -> f64 {
        (center + rng.gen_range(-half..=half)).clamp(0.0, 10.0)
    };
    if chain {
        // d = 1: scores from a small grid so nodes pool; <= 6 nodes
        let (n, m) = (2, 3);
        let mut entries = Vec::new();
        for i in 0..n {
            let mut scores_used: Vec<(f64, f64)> = Vec::new();
            for a in 0..m {
                let s = rng.gen_range(1..=6) as f64;
                let y = match scores_used.iter().find(|(x, _)| *x == s) {
                    Some(&(_, y)) => y,
                    None => {
                        let y = rec(rng);
                        scores_used.push((s, y));
                        y
                    }
                };
                entries.push((i, a, vec![s], y));
            }
        }
        ReviewDataset::from_cells(n, m, 1, entries).unwrap()
    } else {
        // d = 2 antichain-ish: 4 cells, distinct incomparable vectors
        let vectors = [[1.0, 5.0], [2.0, 4.0], [4.0, 2.0], [5.0, 1.0]];
        let mut entries = Vec::new();
        for i in 0..2 {
            for a in 0..2 {
                let v = vectors[2 * i + a];
                entries.push((i, a, v.to_vec(), rec(rng)));
            }
        }
        ReviewDataset::from_cells(2, 2, 2, entries).unwrap()
    }
}

fn main() {
    // criterion 5 calibration: violation density for p=2, q=1
    let params = Params::new(2.0, 1.0).unwrap();
    let settings = AuditSettings {
        generator: GeneratorSettings::hidden(3, 2).plant_dominated_pair(),
        axioms: vec![(Axiom::Efficiency, AxiomMode::Plain)],
        misreports_per_trial: 0,
    };
    let t = Instant::now();
    let findings = audit_random(&params, &settings, 5000, 2024).unwrap();
    println!(
        "criterion5: {} violations in 5000 trials ({:.1?})",
        findings.len(),
        t.elapsed()
    );

    // criterion 11 calibration: oracle runtime + agreement
    let t = Instant::now();
    let mut max_obj_gap = 0f64;
    let mut max_val_gap = 0f64;
    let mut count = 0;
    for (pi, p) in [1.0, 1.5, 2.0, 3.0].iter().enumerate() {
        for (qi, q) in [1.0, 1.5, 2.0, 3.0].iter().enumerate() {
            let params = Params::new(*p, *q).unwrap();
            for trial in 0..30u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    9000 + (pi as u64) * 1000 + (qi as u64) * 100 + trial,
                );
                let ds = random_erm_instance(&mut rng);
                let prob = ErmProblem::new(&ds, params);
                let fitted = erm_fit(&prob).unwrap();
                let (oracle_vals, oracle_obj) = grid_erm(&prob, &GridSpec::default()).unwrap();
                let engine_obj = prob.objective(fitted.node_values());
                max_obj_gap = max_obj_gap.max(engine_obj - oracle_obj);
                for (e, o) in fitted.node_values().iter().zip(&oracle_vals) {
                    max_val_gap = max_val_gap.max((e - o).abs());
                }
                count += 1;
            }
        }
    }
    println!(
        "criterion11: {count} instances, max obj gap {max_obj_gap:.4}, max val gap {max_val_gap:.4}, {:.1?}",
        t.elapsed()
    );
}
