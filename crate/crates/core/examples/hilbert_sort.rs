//! Sorting two-dimensional particles along the Hilbert curve keeps
//! neighbours in sorted order close in space.

use pmcmc::hilbert::{sort_particles, DEFAULT_ORDER};
use pmcmc::rng::Stream;

fn mean_gap(states: &[f64], order: impl Iterator<Item = usize> + Clone) -> f64 {
    let idx: Vec<usize> = order.collect();
    let gaps: f64 = idx
        .windows(2)
        .map(|w| {
            ((states[2 * w[0]] - states[2 * w[1]]).powi(2)
                + (states[2 * w[0] + 1] - states[2 * w[1] + 1]).powi(2))
            .sqrt()
        })
        .sum();
    gaps / (idx.len() - 1) as f64
}

fn main() {
    let mut s = Stream::new(3);
    let n = 500;
    let states: Vec<f64> = (0..2 * n).map(|_| s.next_normal()).collect();
    let weights = vec![1.0 / n as f64; n];
    let sorted = sort_particles(&states, &weights, 2, DEFAULT_ORDER);
    println!("mean step, index order:   {:.3}", mean_gap(&states, 0..n));
    println!(
        "mean step, Hilbert order: {:.3}",
        mean_gap(&states, sorted.zeta.iter().copied())
    );
}
