//! A small f64 neural-network toolkit: dense matrices, a define-by-run
//! reverse-mode autodiff tape, and the Adam optimizer. Gradient
//! correctness is pinned by finite-difference tests on every operation.

mod adam;
mod graph;
mod mat;

pub use adam::Adam;
pub use graph::{Graph, NodeId};
pub use mat::Mat;

use rand::prelude::*;
use rand_pcg::Pcg64Mcg;

/// Xavier/Glorot-style uniform initialization.
pub fn init_uniform(rng: &mut Pcg64Mcg, rows: usize, cols: usize) -> Mat {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}
