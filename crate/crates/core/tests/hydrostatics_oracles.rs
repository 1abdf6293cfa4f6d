//! Dense Poisson oracle for the surface pressure and the structural
//! inequalities of the hydrostatic split.

use std::f64::consts::PI;

use ekman_core::field::{Field, Repr};
use ekman_core::hydrostatics::{
    baroclinic_part, pressure_consistency_residual, project_boundary_compatible, reconstruct_w, recover_pressure,
    vertical_average,
};
use ekman_core::model::PhysicalParams;
use ekman_core::{Axis, Grid};
use nalgebra::{DMatrix, DVector};

fn params(l: f64, h: f64) -> PhysicalParams {
    PhysicalParams {
        nu_h: 1.0,
        nu_z: 0.5,
        f: 1.0,
        rho0: 1000.0,
        g: 9.81,
        h,
        tau: [0.0; 2],
        v_g: [0.0; 2],
        l_x: l,
        l_y: l,
    }
}

/// Periodic spectral differentiation matrix on `n` points of a period `l`.
fn fourier_diff(n: usize, l: f64) -> DMatrix<f64> {
    let step = 2.0 * PI / n as f64;
    DMatrix::from_fn(n, n, |j, k| {
        if j == k {
            0.0
        } else {
            let d = j as f64 - k as f64;
            let sign = if (j + k) % 2 == 0 { 1.0 } else { -1.0 };
            0.5 * sign / (0.5 * d * step).tan() * 2.0 * PI / l
        }
    })
}

#[test]
fn surface_pressure_matches_dense_poisson_solve() {
    let (n, l, h) = (8usize, 2.0 * PI, 1.3);
    let p = params(l, h);
    let g = Grid::new(n, n, 16, l, l, h).unwrap();
    // divergence-free, z-independent: v = (d_y psi, -d_x psi)
    let psi_x = |x: f64, y: f64| -(x.sin()) * y.cos() + 0.5 * (x + y).cos();
    let psi_y = |x: f64, y: f64| -(x.cos()) * y.sin() + 0.5 * (x + y).cos();
    let v = Field::from_fn(&g, |x, y, _| [psi_y(x, y), -psi_x(x, y)]);
    let pressure = recover_pressure(&v, &p).unwrap();

    // dense oracle on the n x n collocation grid, index ix * n + iy
    let d1 = fourier_diff(n, l);
    let eye = DMatrix::<f64>::identity(n, n);
    let dx = d1.kronecker(&eye);
    let dy = eye.kronecker(&d1);
    let pts: Vec<(f64, f64)> = (0..n * n).map(|i| (g.x(i / n), g.y(i % n))).collect();
    let v1 = DVector::from_iterator(n * n, pts.iter().map(|&(x, y)| psi_y(x, y)));
    let v2 = DVector::from_iterator(n * n, pts.iter().map(|&(x, y)| -psi_x(x, y)));
    let a1 = v1.component_mul(&(&dx * &v1)) + v2.component_mul(&(&dy * &v1));
    let a2 = v1.component_mul(&(&dx * &v2)) + v2.component_mul(&(&dy * &v2));
    // Delta pi_s = rho0 / h * div int(v . grad v) dz = rho0 div(v . grad v)
    let rhs = (&dx * &a1 + &dy * &a2) * p.rho0;
    // minimum-norm solution: removes the constant (gauge) and the Nyquist
    // modes that the discrete Laplacian cannot see
    let lap = &dx * &dx + &dy * &dy;
    let oracle = lap.svd(true, true).solve(&rhs, 1e-9).unwrap();
    let got = pressure.surface_physical();
    let scale = oracle.amax();
    for i in 0..n * n {
        assert!((got[i] - oracle[i]).abs() <= 1e-10 * scale, "{i}: {} vs {}", got[i], oracle[i]);
    }
    assert_eq!(pressure.surface_mean(), 0.0);
}

#[test]
fn structural_inequalities_on_random_projected_fields() {
    let g = Grid::new(16, 16, 24, 2.0 * PI, 2.0 * PI, 1.0).unwrap();
    for seed in 0..20 {
        let v = project_boundary_compatible(&Field::random(&g, seed, 1.0, 1.0).unwrap());
        let w = reconstruct_w(&v);
        let grad2 = v.horizontal_gradient_norm_squared();
        assert!(w.l2_norm().powi(2) <= 2.0 * g.h * g.h * grad2 + 1e-10);
        let dz = v.diff(Axis::Z).l2_norm();
        assert!(v.l2_norm() <= g.h * dz + 1e-10);
        let bar = vertical_average(&v);
        let split = bar.l2_norm().powi(2) * g.h + baroclinic_part(&v).l2_norm().powi(2);
        assert!((split - v.l2_norm().powi(2)).abs() <= 1e-10 * split);
        let wsurf = w.transform(Repr::Physical);
        let top = (0..g.nx)
            .flat_map(|ix| (0..g.ny).map(move |iy| (ix, iy)))
            .map(|(ix, iy)| wsurf.value(ix, iy, 0).abs())
            .fold(0.0, f64::max);
        assert!(top <= 1e-10 * (1.0 + v.sobolev_norm(1).unwrap()));
    }
}

#[test]
fn pressure_consistency_is_reported() {
    let g = Grid::new(16, 16, 24, 2.0 * PI, 2.0 * PI, 1.0).unwrap();
    let p = params(2.0 * PI, 1.0);
    let v = project_boundary_compatible(&Field::random(&g, 3, 0.5, 1.0).unwrap());
    let pr = recover_pressure(&v, &p).unwrap();
    let r = pressure_consistency_residual(&v, &p, &pr);
    assert!(r.is_finite());
}
