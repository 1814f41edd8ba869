//! Shared fixtures for the criterion benchmarks.

use rand::prelude::*;
use rand_pcg::Pcg64Mcg;

use mogcsl::data::{Step, Trajectory};

/// A batch of synthetic sessions with two objectives.
pub fn sample_trajectories(n: usize, seed: u64) -> Vec<Trajectory> {
    let mut rng = Pcg64Mcg::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = rng.random_range(3..15usize);
            let steps = (0..len)
                .map(|_| Step {
                    action: rng.random_range(1..=50),
                    reward: vec![
                        f64::from(rng.random_range(0..2u32)),
                        f64::from(rng.random_range(0..2u32)),
                    ],
                })
                .collect();
            Trajectory::new(format!("b{i}"), steps).unwrap()
        })
        .collect()
}
