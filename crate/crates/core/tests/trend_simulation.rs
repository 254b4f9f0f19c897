use incidence_core::series::TrendSeries;
use incidence_core::trend::{run_trend_tests_with_draws, simulate_null_draws, TrendTestConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn walk(rng: &mut ChaCha8Rng, t: usize, drift: f64, sigma: f64) -> Vec<f64> {
    let mut b = 0.0;
    (0..t)
        .map(|_| {
            b += drift + sigma * Distribution::<f64>::sample(&StandardNormal, rng);
            b
        })
        .collect()
}

#[test]
fn drift_test_size_on_driftless_walk() {
    let draws = simulate_null_draws(100, 1000, 1).unwrap();
    let cfg = TrendTestConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let reps = 1000;
    let hits = (0..reps)
        .filter(|_| {
            let s = TrendSeries::with_variances(walk(&mut rng, 100, 0.0, 0.15), vec![0.0; 100]).unwrap();
            run_trend_tests_with_draws(&s, &cfg, &draws).unwrap().p_nu.unwrap() < 0.05
        })
        .count();
    let rate = hits as f64 / reps as f64;
    assert!((0.02..=0.09).contains(&rate), "rejection rate {rate}");
}

#[test]
fn strong_drift_is_detected() {
    let draws = simulate_null_draws(100, 1000, 2).unwrap();
    let cfg = TrendTestConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let reps = 200;
    let hits = (0..reps)
        .filter(|_| {
            let s = TrendSeries::with_variances(walk(&mut rng, 8, -0.5, 0.05), vec![0.0025; 8]).unwrap();
            run_trend_tests_with_draws(&s, &cfg, &draws).unwrap().p_nu.unwrap() < 0.01
        })
        .count();
    assert!(hits as f64 >= 0.95 * reps as f64, "{hits}/{reps}");
}
