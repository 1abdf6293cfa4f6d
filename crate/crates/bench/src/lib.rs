//! Fixtures shared by the benchmarks.

use std::f64::consts::PI;
use std::sync::Arc;

use ekman_core::hydrostatics::project_boundary_compatible;
use ekman_core::operator::LinearizedOp;
use ekman_core::{Field, Grid, PhysicalParams};

/// The wind-driven reference box used across the benchmarks.
pub fn params() -> PhysicalParams {
    PhysicalParams {
        nu_h: 4.0,
        nu_z: 1.0,
        f: 1.0,
        rho0: 1000.0,
        g: 9.81,
        h: 1.0,
        tau: [0.2, -0.1],
        v_g: [0.05, 0.1],
        l_x: 2.0 * PI,
        l_y: 2.0 * PI,
    }
}

pub fn grid(n: usize, nz: usize) -> Arc<Grid> {
    Grid::new(n, n, nz, 2.0 * PI, 2.0 * PI, 1.0).expect("valid grid")
}

pub fn operator(grid: &Arc<Grid>) -> LinearizedOp {
    LinearizedOp::new(&params(), grid).expect("valid operator")
}

/// A smooth, admissible perturbation.
pub fn field(grid: &Arc<Grid>, seed: u64) -> Field {
    project_boundary_compatible(&Field::random(grid, seed, 0.1, 1.5).expect("valid field"))
}
