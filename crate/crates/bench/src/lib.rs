//! Shared fixtures for the pipeline benchmarks.

use fgam_core::design::{quadrature_weights, QuadratureOperator, QuadratureRule};
use fgam_core::{sim, FunctionalDataset};

/// Convex-scenario data set of the benchmark size.
pub fn bench_dataset(n: usize, phi: f64) -> (FunctionalDataset, QuadratureOperator) {
    let (x, grid) = sim::gen_predictors(n, 30, 7);
    let y = sim::gen_response_convex(&x, &grid, phi, 8);
    let data = FunctionalDataset::new(y, x, grid).expect("valid synthetic data");
    let quad = quadrature_weights(data.n(), data.grid(), QuadratureRule::Trapezoid)
        .expect("valid grid");
    (data, quad)
}
