use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use valbench::metrics::{
    noise_resilience, spearman, MetricsError, NoiseConfig, RankingMetric, RunTable, ScoreTable, TaskTable,
};

/// Validators whose scores are accuracy plus Gaussian noise of increasing
/// size, so their true ranking is known.
fn graded_table(variants: usize, seed: u64) -> ScoreTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tasks = (0..3)
        .map(|t| TaskTable {
            task_id: format!("toy_t{t}"),
            runs: (0..8)
                .map(|r| {
                    let peak = rng.random_range(0.3..0.9);
                    let accuracies: Vec<f64> = (0..12)
                        .map(|i| peak * (1.0 - ((i as f64 - 6.0) / 8.0).powi(2)) + 0.01 * rng.random::<f64>())
                        .collect();
                    let scores = (0..variants)
                        .map(|v| {
                            let noise = 0.02 * v as f64;
                            accuracies
                                .iter()
                                .map(|a| a + noise * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                                .collect()
                        })
                        .collect();
                    RunTable {
                        algorithm: if r % 2 == 0 { "even".into() } else { "odd".into() },
                        run_id: r,
                        accuracies,
                        scores,
                    }
                })
                .collect(),
        })
        .collect();
    ScoreTable {
        variants: (0..variants).map(|v| format!("v{v}")).collect(),
        tasks,
    }
}

fn config(sigmas: &[f64], seeds: usize) -> NoiseConfig {
    NoiseConfig {
        sigmas: sigmas.to_vec(),
        seeds,
        master_seed: 11,
        aatn_n: 3,
    }
}

fn mean_of(curve: &valbench::metrics::NoiseCurve, sigma: f64, metric: RankingMetric) -> f64 {
    curve.points.iter().find(|p| p.sigma == sigma && p.metric == metric).unwrap().mean
}

#[test]
fn zero_noise_keeps_rankings() {
    let curve = noise_resilience(&graded_table(10, 1), &config(&[0.0], 3)).unwrap();
    assert_eq!(curve.points.len(), 2);
    for p in &curve.points {
        assert_eq!((p.mean, p.std, p.seeds_used), (1.0, 0.0, 3));
    }
}

#[test]
fn correlation_weakens_as_noise_grows() {
    let sigmas = [0.0, 1.0, 2.0, 5.0, 10.0, 40.0];
    let curve = noise_resilience(&graded_table(12, 2), &config(&sigmas, 20)).unwrap();
    for metric in [RankingMetric::Wsc, RankingMetric::Aatn(3)] {
        let means: Vec<f64> = sigmas.iter().map(|&s| mean_of(&curve, s, metric)).collect();
        for w in means.windows(2) {
            assert!(w[1] <= w[0] + 0.03, "{metric}: {means:?}");
        }
        assert!(means[5] < means[1], "{metric}: {means:?}");
    }
}

#[test]
fn overwhelming_noise_looks_like_random_rankings() {
    let v = 12;
    let seeds = 40;
    let curve = noise_resilience(&graded_table(v, 3), &config(&[1e6], seeds)).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let base: Vec<f64> = (0..v).map(|i| i as f64).collect();
    let draws: Vec<f64> = (0..4000)
        .map(|_| {
            let mut perm = base.clone();
            for i in (1..v).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            spearman(&base, &perm).unwrap() / 100.0
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt();

    for p in &curve.points {
        let z = (p.mean - mean) / (sd / (p.seeds_used as f64).sqrt());
        assert!(z.abs() < 4.0, "{}: mean {} vs random baseline {mean} ± {sd}", p.metric, p.mean);
        assert!((p.std - sd).abs() < 0.5 * sd, "{}: spread {} vs {sd}", p.metric, p.std);
    }
}

#[test]
fn same_master_seed_same_curve() {
    let table = graded_table(6, 4);
    let a = noise_resilience(&table, &config(&[0.0, 3.0], 5)).unwrap();
    let b = noise_resilience(&table, &config(&[0.0, 3.0], 5)).unwrap();
    assert_eq!(a, b);
    let c = noise_resilience(&table, &NoiseConfig { master_seed: 12, ..config(&[0.0, 3.0], 5) }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn invalid_setups_are_rejected() {
    let one = graded_table(1, 5);
    assert!(matches!(noise_resilience(&one, &config(&[1.0], 2)), Err(MetricsError::TooFewValidators(_))));
    let table = graded_table(4, 5);
    assert!(matches!(noise_resilience(&table, &config(&[-1.0], 2)), Err(MetricsError::BadSigma(_))));
}

#[test]
fn validators_with_failed_scores_are_left_out() {
    let mut table = graded_table(5, 6);
    table.tasks[1].runs[2].scores[3][4] = f64::NAN;
    let curve = noise_resilience(&table, &config(&[0.0], 2)).unwrap();
    assert_eq!(curve.excluded, vec!["v3".to_string()]);
    assert_eq!(curve.variants.len(), 4);
}
