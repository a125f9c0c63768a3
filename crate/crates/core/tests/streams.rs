//! Distributional checks on the deterministic random streams.

use plugin_surrogates::data::make_rng;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const BINS: usize = 64;

fn chi_square_p(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let expected = n as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

fn histogram(mut draw: impl FnMut() -> f64, n: usize) -> Vec<u64> {
    let mut counts = vec![0u64; BINS];
    for _ in 0..n {
        counts[((draw() * BINS as f64) as usize).min(BINS - 1)] += 1;
    }
    counts
}

#[test]
fn uniform_draws_pass_chi_square() {
    for (seed, stream) in [(0, 0), (1, 1), (7, 0x400), (u64::MAX, 5)] {
        let mut rng = make_rng(seed, stream).rng();
        let p = chi_square_p(&histogram(|| rng.random::<f64>(), 200_000));
        assert!(p > 1e-4, "seed {seed} stream {stream}: p = {p}");
    }
}

#[test]
fn interleaved_streams_are_uncorrelated() {
    // Pairs of first draws across many substreams should fill the unit square evenly.
    let root = make_rng(3, 2);
    let mut counts = vec![0u64; 16];
    for i in 0..40_000 {
        let a: f64 = root.substream(i).rng().random();
        let b: f64 = root.substream(i + 1).rng().random();
        counts[(a * 4.0) as usize * 4 + (b * 4.0) as usize] += 1;
    }
    let p = chi_square_p(&counts);
    assert!(p > 1e-4, "p = {p}");
}

#[test]
fn neighbouring_seeds_do_not_share_prefixes() {
    let first = |seed| -> Vec<u64> {
        let mut rng = make_rng(seed, 0).rng();
        (0..4).map(|_| rng.random()).collect()
    };
    let seen: std::collections::HashSet<_> = (0..1000).map(first).collect();
    assert_eq!(seen.len(), 1000);
}
