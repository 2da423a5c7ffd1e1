//! Shared fixtures for the criterion benchmarks: a deterministic
//! polynomial-boundary dataset and the scan parameters used throughout.

use dg_core::dataset::{generate_poly_boundary, LabeledDataset, PolyBoundarySpec};
use dg_core::doubling::DoublingParams;

/// Deterministic 2-D dataset with `n` points.
pub fn dataset(n: usize) -> LabeledDataset {
    generate_poly_boundary(&PolyBoundarySpec {
        degree: 3,
        n_samples: n,
        x_range: (-1.0, 1.0),
        vertical_shift: 0.2,
        noise_std: 0.35,
        seed: 42,
    })
    .expect("fixture generation cannot fail")
}

/// The scan defaults (κ=2, σ=0.9, δ=1, ℓ=0.001, β=1, m₀=0).
pub fn scan_params() -> DoublingParams {
    DoublingParams {
        kappa: 2.0,
        sigma: 0.9,
        delta: 1.0,
        ell: 0.001,
        beta: 1.0,
        m0: 0.0,
    }
}
