//! Criterion benchmarks for the distances and samplers; see `benches/`.
//!
//! Shared fixtures live here so both bench targets draw identical data.

use mdabc::{Dataset, ModelKind, ModelSpec, RngStream};

/// The well-specified mixture parameter used throughout the benches.
pub const MIXTURE_THETA: [f64; 4] = [-2.0, 0.5, 1.0, 1.0];

/// `n` draws from the mixture at [`MIXTURE_THETA`].
pub fn mixture_sample(n: usize, seed: u64) -> Dataset {
    ModelSpec::new(ModelKind::Mixture, n, n)
        .simulate_observed(&MIXTURE_THETA, &mut RngStream::from_seed(seed))
        .expect("valid fixture")
}
