use lpq_review::dataset::{Params, ReviewDataset};
use lpq_review::oracle::{grid_erm, GridSpec};
use lpq_review::solver::ErmProblem;
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
    for (pi, p) in [1.0, 1.5, 2.0, 3.0].iter().enumerate() {
        for (qi, q) in [1.0, 1.5, 2.0, 3.0].iter().enumerate() {
            let params = Params::new(*p, *q).unwrap();
            let t = Instant::now();
            let mut slowest = std::time::Duration::ZERO;
            let mut failures = 0;
            for trial in 0..30u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    9000 + (pi as u64) * 1000 + (qi as u64) * 100 + trial,
                );
                let ds = random_erm_instance(&mut rng);
                let prob = ErmProblem::new(&ds, params);
                let t1 = Instant::now();
                match grid_erm(&prob, &GridSpec::default()) {
                    Ok(_) => {}
                    Err(e) => {
                        failures += 1;
                        println!("  p={p} q={q} trial={trial}: {e}");
                    }
                }
                slowest = slowest.max(t1.elapsed());
            }
            println!(
                "p={p} q={q}: total {:.1?} slowest {:.1?} failures {failures}",
                t.elapsed(),
                slowest
            );
        }
    }
}
