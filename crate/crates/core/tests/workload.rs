use vodsim::catalog::{build_catalog, generate_requests};
use vodsim::WorkloadConfig;

/// Smallest k with P(X <= k) >= p for X ~ Poisson(lambda).
fn poisson_quantile(lambda: f64, p: f64) -> u64 {
    let mut pmf = (-lambda).exp();
    let mut cdf = pmf;
    let mut k = 0;
    while cdf < p {
        k += 1;
        pmf *= lambda / k as f64;
        cdf += pmf;
    }
    k
}

#[test]
fn quantiles_of_the_reference_distribution() {
    assert_eq!(poisson_quantile(25.0, 0.5), 25);
    assert_eq!(poisson_quantile(1.0, 0.5), 1);
}

#[test]
fn arrival_counts_are_poisson() {
    // 1500 s at one request per 60 s
    let lambda = 25.0;
    let (lo, hi) = (
        poisson_quantile(lambda, 0.005),
        poisson_quantile(lambda, 0.995),
    );
    let seeds = 1..=400u64;
    let mut inside = 0;
    let mut sum = 0u64;
    for seed in seeds.clone() {
        let cfg = WorkloadConfig {
            seed,
            ..WorkloadConfig::default()
        };
        let catalog = build_catalog(&cfg).unwrap();
        let n = generate_requests(&cfg, &catalog).unwrap().len() as u64;
        sum += n;
        if (lo..=hi).contains(&n) {
            inside += 1;
        }
    }
    let runs = seeds.count() as f64;
    assert!(
        inside as f64 / runs >= 0.97,
        "{inside} of {runs} inside [{lo}, {hi}]"
    );
    let mean = sum as f64 / runs;
    assert!(
        (mean - lambda).abs() < 4.0 * (lambda / runs).sqrt(),
        "mean {mean}"
    );
}

#[test]
fn requests_are_ordered_and_within_the_horizon() {
    let cfg = WorkloadConfig {
        seed: 3,
        mean_interarrival: 2.0,
        ..WorkloadConfig::default()
    };
    let catalog = build_catalog(&cfg).unwrap();
    let requests = generate_requests(&cfg, &catalog).unwrap();
    assert!(requests
        .windows(2)
        .all(|w| w[0].arrival_time < w[1].arrival_time));
    for (i, r) in requests.iter().enumerate() {
        assert_eq!(r.id.0, i as u64);
        assert!((0.0..cfg.duration).contains(&r.arrival_time));
        assert_eq!(r.deadline, r.arrival_time + cfg.max_startup_delay);
        assert!((r.video_id.0 as usize) < catalog.len());
    }
    // same seed, same workload
    assert_eq!(
        generate_requests(&cfg, &build_catalog(&cfg).unwrap()).unwrap(),
        requests
    );
}
