//! Shared inputs for the criterion benchmarks.

use cmg_core::game::{generate_structured_instance, StructuredParams};
use cmg_core::GameSpec;

/// Structured single-device instance with `n` attributes and `n` exploits.
pub fn structured(n: usize, seed: u64) -> GameSpec {
    generate_structured_instance(&StructuredParams {
        n,
        m: 1,
        num_exploits: n,
        max_version: 3,
        cost: 0.01,
        seed,
    })
    .expect("benchmark layout is valid")
}
