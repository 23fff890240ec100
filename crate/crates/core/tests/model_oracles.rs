use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use sgdim_core::corpus::PairRecord;
use sgdim_core::sgmodel::{
    log_likelihood, osg_grad, osg_log_prob, predictive_dist_osg, sgns_grad, sgns_log_prob, train,
    ModelKind, SkipGramParams, TrainConfig,
};
use sgdim_core::SeededRng;

/// Plain softmax NLL written independently of the crate.
fn naive_osg_nll(p: &SkipGramParams, batch: &[PairRecord]) -> f64 {
    let mut total = 0.0;
    for r in batch {
        let scores: Vec<f64> = (0..p.s_c())
            .map(|c| {
                p.input_row(r.word())
                    .iter()
                    .zip(p.output_row(c))
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        total -= scores[r.context()] - z.ln();
    }
    total / batch.len() as f64
}

fn naive_sgns_nll(p: &SkipGramParams, r: &PairRecord) -> f64 {
    let dot = |c: usize| -> f64 {
        p.input_row(r.word())
            .iter()
            .zip(p.output_row(c))
            .map(|(a, b)| a * b)
            .sum()
    };
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let mut nll = -sig(dot(r.context())).ln();
    for &z in r.negatives() {
        nll -= sig(-dot(z as usize)).ln();
    }
    nll
}

fn random_instance(seed: u64) -> (SkipGramParams, SeededRng) {
    let mut rng = SeededRng::seed_from_u64(seed);
    let d = rng.random_range(1..=5);
    let s_w = rng.random_range(1..=6);
    let s_c = rng.random_range(2..=8);
    let p = SkipGramParams::init(s_w, s_c, d, 2.0 * d as f64, seed).unwrap();
    (p, rng)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn central_diff(
    p: &SkipGramParams,
    f: &dyn Fn(&SkipGramParams) -> f64,
    input: bool,
    row: usize,
    k: usize,
) -> f64 {
    let h = 1e-5;
    let mut plus = p.clone();
    let mut minus = p.clone();
    if input {
        plus.input_row_mut(row)[k] += h;
        minus.input_row_mut(row)[k] -= h;
    } else {
        plus.output_row_mut(row)[k] += h;
        minus.output_row_mut(row)[k] -= h;
    }
    (f(&plus) - f(&minus)) / (2.0 * h)
}

#[test]
fn osg_gradient_matches_finite_differences() {
    for seed in 0..100 {
        let (p, mut rng) = random_instance(seed);
        let batch: Vec<PairRecord> = (0..rng.random_range(1..=12))
            .map(|_| PairRecord::new(rng.random_range(0..p.s_w()), rng.random_range(0..p.s_c())))
            .collect();
        let g = osg_grad(&p, &batch).unwrap();
        assert!((g.loss - naive_osg_nll(&p, &batch)).abs() < 1e-12);
        let f = |q: &SkipGramParams| naive_osg_nll(q, &batch);
        for w in 0..p.s_w() {
            let analytic = g
                .input_rows
                .iter()
                .find(|(i, _)| *i == w)
                .map(|(_, r)| r.clone());
            for k in 0..p.dim() {
                let fd = central_diff(&p, &f, true, w, k);
                let a = analytic.as_ref().map_or(0.0, |r| r[k]);
                assert!(
                    rel_err(a, fd) < 1e-4 || (a - fd).abs() < 1e-9,
                    "seed {seed} E[{w}][{k}]: {a} vs {fd}"
                );
            }
        }
        for c in 0..p.s_c() {
            for k in 0..p.dim() {
                let fd = central_diff(&p, &f, false, c, k);
                let a = g.outputs[c * p.dim() + k];
                assert!(
                    rel_err(a, fd) < 1e-4 || (a - fd).abs() < 1e-9,
                    "seed {seed} F[{c}][{k}]: {a} vs {fd}"
                );
            }
        }
    }
}

#[test]
fn sgns_gradient_matches_finite_differences() {
    for seed in 0..100 {
        let (p, mut rng) = random_instance(1000 + seed);
        let s_z = rng.random_range(1..=5);
        let negs: Vec<u32> = (0..s_z)
            .map(|_| rng.random_range(0..p.s_c() as u32))
            .collect();
        let rec = PairRecord::with_negatives(
            rng.random_range(0..p.s_w()),
            rng.random_range(0..p.s_c()),
            negs,
        );
        let g = sgns_grad(&p, &rec);
        assert!((g.loss - naive_sgns_nll(&p, &rec)).abs() < 1e-12);
        let f = |q: &SkipGramParams| naive_sgns_nll(q, &rec);
        for k in 0..p.dim() {
            let fd = central_diff(&p, &f, true, rec.word(), k);
            assert!(
                rel_err(g.input[k], fd) < 1e-4 || (g.input[k] - fd).abs() < 1e-9,
                "seed {seed} input {k}"
            );
        }
        for c in 0..p.s_c() {
            let analytic = g
                .outputs
                .iter()
                .find(|(i, _)| *i == c)
                .map(|(_, r)| r.clone());
            for k in 0..p.dim() {
                let fd = central_diff(&p, &f, false, c, k);
                let a = analytic.as_ref().map_or(0.0, |r| r[k]);
                assert!(
                    rel_err(a, fd) < 1e-4 || (a - fd).abs() < 1e-9,
                    "seed {seed} output {c} {k}: {a} vs {fd}"
                );
            }
        }
    }
}

proptest! {
    #[test]
    fn predictive_distribution_is_normalized(seed in any::<u64>(), scale in 0.0f64..40.0) {
        let mut rng = SeededRng::seed_from_u64(seed);
        let (s_w, s_c, d) = (rng.random_range(1..5), rng.random_range(1..20), rng.random_range(1..6));
        let p = SkipGramParams::init(s_w, s_c, d, scale, seed).unwrap();
        for w in 0..s_w {
            let dist = predictive_dist_osg(&p, w);
            prop_assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(dist.iter().all(|&x| x >= 0.0));
            for (c, &x) in dist.iter().enumerate() {
                prop_assert!((x.ln() - osg_log_prob(&p, w, c)).abs() < 1e-9 || x < f64::MIN_POSITIVE);
            }
        }
    }

    #[test]
    fn log_likelihood_is_record_sum(seed in any::<u64>()) {
        let p = SkipGramParams::init(3, 4, 2, 1.0, seed).unwrap();
        let mut rng = SeededRng::seed_from_u64(seed ^ 1);
        let recs: Vec<PairRecord> = (0..20)
            .map(|_| PairRecord::with_negatives(rng.random_range(0..3), rng.random_range(0..4), vec![rng.random_range(0..4)]))
            .collect();
        let osg: f64 = recs.iter().map(|r| osg_log_prob(&p, r.word(), r.context())).sum();
        let sgns: f64 = recs.iter().map(|r| sgns_log_prob(&p, r)).sum();
        prop_assert!((log_likelihood(&p, &recs, ModelKind::Osg) - osg).abs() < 1e-9);
        prop_assert!((log_likelihood(&p, &recs, ModelKind::Sgns) - sgns).abs() < 1e-9);
        prop_assert!((sgns + recs.iter().map(|r| naive_sgns_nll(&p, r)).sum::<f64>()).abs() < 1e-9);
    }
}

#[test]
fn init_has_uniform_moments() {
    let d = 4;
    let scale = 0.5;
    let p = SkipGramParams::init(3000, 3000, d, scale, 7).unwrap();
    let xs: Vec<f64> = p.e_matrix().iter().chain(p.outputs()).copied().collect();
    let n = xs.len() as f64;
    let bound = scale / d as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let expected_var = bound * bound / 3.0;
    assert!(xs.iter().all(|x| x.abs() <= bound));
    // Standard error of the mean is sqrt(var / n).
    assert!(mean.abs() < 4.0 * (expected_var / n).sqrt());
    assert!((var - expected_var).abs() / expected_var < 0.03);
}

#[test]
fn full_rank_osg_recovers_empirical_frequencies() {
    // 3 words x 4 contexts has rank <= 3, so d = 3 can represent any conditional table.
    let counts = [[5usize, 3, 1, 1], [1, 1, 6, 2], [2, 2, 2, 4]];
    let mut recs = Vec::new();
    for (w, row) in counts.iter().enumerate() {
        for (c, &k) in row.iter().enumerate() {
            recs.extend(std::iter::repeat_n(PairRecord::new(w, c), k));
        }
    }
    let mut cfg = TrainConfig::osg(3);
    cfg.batch_size = recs.len();
    cfg.learning_rate = 0.5;
    cfg.epochs = 4000;
    cfg.seed = 3;
    let out = train(&recs, 3, 4, &cfg).unwrap();
    for (w, row) in counts.iter().enumerate() {
        let total: usize = row.iter().sum();
        let dist = predictive_dist_osg(&out.params, w);
        for c in 0..4 {
            let empirical = row[c] as f64 / total as f64;
            assert!(
                (dist[c] - empirical).abs() < 1e-3,
                "w {w} c {c}: {} vs {empirical}",
                dist[c]
            );
        }
    }
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let mut rng = SeededRng::seed_from_u64(5);
    let recs: Vec<PairRecord> = (0..2000)
        .map(|_| {
            let w = rng.random_range(0..5);
            let c = if rng.random::<f64>() < 0.7 {
                w
            } else {
                rng.random_range(0..6)
            };
            PairRecord::with_negatives(w, c, (0..3).map(|_| rng.random_range(0..6)).collect())
        })
        .collect();
    for mut cfg in [TrainConfig::osg(3), TrainConfig::sgns(3)] {
        cfg.epochs = 5;
        cfg.batch_size = cfg.batch_size.min(100);
        cfg.seed = 9;
        let a = train(&recs, 5, 6, &cfg).unwrap();
        let b = train(&recs, 5, 6, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.trace.len(), 5);
        assert!(a.trace.last().unwrap() < &a.trace[0], "{:?}", a.trace);
    }
}
