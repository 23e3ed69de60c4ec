use std::collections::HashMap;

use itertools::Itertools;
use vcsg_core::analysis::{geometric_identity_residual, MonteCarlo};
use vcsg_core::sampler::RngState;

#[test]
fn subsets_are_uniform() {
    let mut rng = RngState::new(1);
    let draws = 100_000;
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    for _ in 0..draws {
        let s = rng.sample_subset(5, 2).unwrap();
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        *counts.entry(s).or_default() += 1;
    }
    let all: Vec<Vec<usize>> = (0..5).combinations(2).collect();
    assert_eq!(counts.len(), all.len());
    let expected = draws as f64 / 10.0;
    let mut chi2 = 0.0;
    for s in &all {
        let c = counts[s] as f64;
        assert!((c / draws as f64 - 0.1).abs() <= 0.01, "{s:?}: {c}");
        chi2 += (c - expected).powi(2) / expected;
    }
    // 99.9th percentile of chi-square with 9 degrees of freedom.
    assert!(chi2 < 27.88, "chi2 = {chi2}");
}

#[test]
fn singleton_subsets_have_central_mean() {
    let mut rng = RngState::new(2);
    let n = 11;
    let samples: Vec<f64> = (0..100_000)
        .map(|_| rng.sample_subset(n, 1).unwrap()[0] as f64)
        .collect();
    let mc = MonteCarlo::from_samples(&samples);
    // Indices are 0-based, so the centre is (n − 1)/2.
    assert!(mc.within((n - 1) as f64 / 2.0, 4.0), "{mc:?}");
}

#[test]
fn geometric_means() {
    let mut rng = RngState::new(3);
    for (batch, mini) in [(1, 1), (5, 5), (10, 1), (100, 1), (100, 10), (1000, 1)] {
        let draws = 1_000_000;
        let total: u64 = (0..draws).map(|_| rng.sample_geometric(batch, mini).unwrap()).sum();
        let mean = total as f64 / draws as f64;
        let target = batch as f64 / mini as f64;
        assert!((mean - target).abs() <= 0.02 * target, "B={batch} b={mini}: {mean}");
    }
}

#[test]
fn geometric_zero_mass() {
    let mut rng = RngState::new(4);
    let draws = 200_000;
    let zeros = (0..draws).filter(|_| rng.sample_geometric(1, 1).unwrap() == 0).count();
    assert!((zeros as f64 / draws as f64 - 0.5).abs() < 0.005);
    let zeros = (0..draws).filter(|_| rng.sample_geometric(3, 1).unwrap() == 0).count();
    assert!((zeros as f64 / draws as f64 - 0.25).abs() < 0.005);
}

#[test]
fn geometric_identity_holds_for_bounded_sequences() {
    let mut rng = RngState::new(5);
    type Seq = fn(u64) -> f64;
    let seqs: [(&str, Seq); 3] = [
        ("decay", |k| 0.9f64.powi(k as i32)),
        ("oscillating", |k| (k as f64 * 0.7).sin()),
        ("step", |k| if k < 4 { 1.0 } else { -2.0 }),
    ];
    for (name, seq) in &seqs {
        for (batch, mini) in [(10, 1), (4, 2)] {
            let mc = geometric_identity_residual(&mut rng, batch, mini, 1_000_000, seq).unwrap();
            assert!(mc.within(0.0, 3.0), "{name} B={batch} b={mini}: {mc:?}");
        }
    }
}

#[test]
fn output_frequencies_follow_weights() {
    let mut rng = RngState::new(6);
    let draws = 100_000;
    let mut counts = [0usize; 3];
    for _ in 0..draws {
        counts[rng.sample_output_index(&[1.0, 1.0, 2.0]).unwrap()] += 1;
    }
    for (c, p) in counts.iter().zip([0.25, 0.25, 0.5]) {
        let sd = (p * (1.0 - p) / draws as f64).sqrt();
        assert!((*c as f64 / draws as f64 - p).abs() <= 4.0 * sd, "{counts:?}");
    }
}
