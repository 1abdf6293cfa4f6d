//! Dense coarse-grid oracles for `A` and `F`, and the form estimate.

use std::f64::consts::PI;

use ekman_core::field::{Field, Repr};
use ekman_core::hydrostatics::project_boundary_compatible;
use ekman_core::model::{ekman_coefficients, smallness_constant, PhysicalParams};
use ekman_core::operator::{apply_A, apply_F, LinearizedOp};
use ekman_core::Grid;

mod support;
use support::Dense;

fn params(tau: [f64; 2], v_g: [f64; 2], l: f64, h: f64) -> PhysicalParams {
    PhysicalParams {
        nu_h: 0.7,
        nu_z: 1.3,
        f: 0.9,
        rho0: 1000.0,
        g: 9.81,
        h,
        tau,
        v_g,
        l_x: l,
        l_y: l,
    }
}

fn physical(v: &Field) -> [Vec<f64>; 2] {
    v.physical_values()
}

fn max_rel(a: &[Vec<f64>; 2], b: &[Vec<f64>; 2]) -> f64 {
    let scale = b.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

#[test]
fn apply_a_matches_dense_assembly() {
    let (n, nz, l, h) = (12, 16, 2.0 * PI, 1.0);
    let dense = Dense::new(n, nz, l, h);
    let g = Grid::new(n, n, nz, l, l, h).unwrap();
    let s = |z: f64| ((z + h) * PI / (2.0 * h)).sin();
    let smooth = Field::from_fn(&g, |x, y, z| {
        [(y.sin() + (x + y).sin()) * s(z), (0.5 * x.cos() - (x + y).sin()) * s(z)]
    });
    let random = project_boundary_compatible(&Field::random(&g, 5, 1.0, 1.0).unwrap());
    for p in [params([0.0; 2], [0.0; 2], l, h), params([0.3, -0.1], [0.05, 0.1], l, h)] {
        let op = LinearizedOp::new(&p, &g).unwrap();
        let sol = ekman_coefficients(&p).unwrap();
        let ve = [0, 1].map(|c| g.z.iter().map(|&z| sol.profile(z).unwrap()[c]).collect::<Vec<_>>());
        let dve = [0, 1].map(|c| g.z.iter().map(|&z| sol.derivative(z).unwrap()[c]).collect::<Vec<_>>());
        for v in [&smooth, &random] {
            let got = physical(&apply_A(&op, v));
            let want = dense.apply_a(&p, &ve, &dve, &physical(v));
            let err = max_rel(&got, &want);
            assert!(err <= 1e-6, "relative error {err:e}");
        }
    }
}

#[test]
fn apply_f_matches_closed_form_and_dense_assembly() {
    let (n, nz, l, h) = (16, 16, 2.0 * PI, 1.0);
    let g = Grid::new(n, n, nz, l, l, h).unwrap();
    let v = Field::from_fn(&g, |x, _, z| [x.sin() * (z + h).powi(2), 0.0]);
    let got = physical(&apply_F(&v, &v));
    let want = physical(&Field::from_fn(&g, |x, _, z| {
        [(2.0 * x).sin() / 6.0 * ((z + h).powi(4) - h.powi(4) / 5.0), 0.0]
    }));
    assert!(max_rel(&got, &want) <= 1e-6);

    // general low-mode pair: products stay inside the 2/3 band
    let dense = Dense::new(n, nz, l, h);
    let a = Field::from_fn(&g, |x, y, z| [(x + 2.0 * y).cos() * z * z, (2.0 * x).sin() * (z + 0.3)]);
    let b = Field::from_fn(&g, |x, y, z| [(y - x).sin() * (z * 2.0).exp(), x.cos() * y.sin() * z]);
    let got = physical(&apply_F(&a, &b));
    let want = dense.project(&dense.advection(&physical(&a), &physical(&b)));
    let err = max_rel(&got, &want);
    assert!(err <= 1e-6, "relative error {err:e}");
}

#[test]
fn energy_form_is_negative_in_stable_regime() {
    let l = 2.0 * PI;
    let p = params([0.3, -0.1], [0.05, 0.1], l, 1.0);
    assert!(smallness_constant(&p).unwrap().stable);
    let g = Grid::new(12, 12, 16, l, l, 1.0).unwrap();
    let op = LinearizedOp::new(&p, &g).unwrap();
    for seed in 0..100 {
        let v = project_boundary_compatible(&Field::random(&g, seed, 1.0, 1.0).unwrap());
        let form = apply_A(&op, &v).inner(&v);
        assert!(form < 0.0, "seed {seed}: <Av, v> = {form}");
    }
}

#[test]
fn bilinear_form_is_bilinear_below_cutoff() {
    let g = Grid::new(16, 16, 16, 2.0 * PI, 2.0 * PI, 1.0).unwrap();
    let a = Field::from_fn(&g, |x, y, z| [(x + y).cos() * z * z, (2.0 * y).sin() * z]);
    let b = Field::from_fn(&g, |x, _, z| [x.sin() * (z + 1.0), x.cos() * z * z]);
    let c = Field::from_fn(&g, |_, y, z| [y.cos() * z, (y + 0.2).sin()]);
    let lhs = apply_F(&(&a.scale(2.0) + &b), &c);
    let rhs = &apply_F(&a, &c).scale(2.0) + &apply_F(&b, &c);
    assert!((&lhs - &rhs).l2_norm() <= 1e-11 * lhs.l2_norm());
    let lhs = apply_F(&c, &(&a + &b.scale(-3.0)));
    let rhs = &apply_F(&c, &a) - &apply_F(&c, &b).scale(3.0);
    assert!((&lhs - &rhs).l2_norm() <= 1e-11 * lhs.l2_norm());
    assert_eq!(apply_F(&a, &c).repr(), Repr::Spectral);
}
