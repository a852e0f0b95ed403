//! Shared fixtures for the benchmark suite.

use ghl_core::poisson::{Grid3, ScalarField};
use ghl_core::sampling::SplitMix64;
use ghl_core::Vec3;

/// Deterministic particle cloud in the unit box.
pub fn particle_cloud(n: usize, seed: u64) -> (Vec<Vec3>, Vec<Vec3>, Vec<f64>) {
    let mut rng = SplitMix64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut vs = Vec::with_capacity(n);
    let mut ws = Vec::with_capacity(n);
    for _ in 0..n {
        xs.push(Vec3::new(rng.next_f64(), rng.next_f64(), rng.next_f64()));
        vs.push(Vec3::new(
            rng.next_f64() - 0.5,
            rng.next_f64() - 0.5,
            rng.next_f64() - 0.5,
        ));
        ws.push(rng.next_f64());
    }
    (xs, vs, ws)
}

/// Smooth manufactured density on a grid.
pub fn smooth_rho(grid: Grid3) -> ScalarField {
    let mut rho = ScalarField::zeros(grid);
    for idx in 0..grid.node_count() {
        let p = grid.node_position(idx);
        let tp = 2.0 * std::f64::consts::PI;
        rho.values[idx] = (tp * p.x).sin() * (2.0 * tp * p.y).cos() + 0.3 * (tp * p.z).cos();
    }
    rho
}
