//! Vertical averaging, the barotropic/baroclinic split, vertical velocity
//! reconstruction, the hydrostatic Helmholtz projection, and diagnostic
//! pressure recovery.

use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::field::{apply_columns, Axis, Field, Repr, ScalarField};
use crate::grid::Grid;
use crate::model::PhysicalParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HydroError {
    #[error("field is not hydrostatic-solenoidal: ||div_H vbar|| = {divergence:e}")]
    NotProjected { divergence: f64 },
    #[error("fields live on different grids")]
    GridMismatch,
}

/// Depth-averaged velocity, stored as horizontal Fourier modes.
#[derive(Clone, Debug)]
pub struct BarotropicField {
    grid: Arc<Grid>,
    comp: [Vec<Complex64>; 2],
}

impl BarotropicField {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn mode(&self, c: usize, mode: usize) -> Complex64 {
        self.comp[c][mode]
    }

    pub fn modes(&self, c: usize) -> &[Complex64] {
        &self.comp[c]
    }

    /// `||vbar||_{L^2(T^2)}`.
    pub fn l2_norm(&self) -> f64 {
        let area = self.grid.lx * self.grid.ly;
        let s: f64 = self.comp.iter().flatten().map(|c| c.norm_sqr()).sum();
        (area * s).sqrt()
    }

    /// `||grad_H vbar||_{L^2(T^2)}`.
    pub fn gradient_norm(&self) -> f64 {
        let area = self.grid.lx * self.grid.ly;
        let mut s = 0.0;
        for c in 0..2 {
            for (mode, v) in self.comp[c].iter().enumerate() {
                s += self.grid.k2(mode) * v.norm_sqr();
            }
        }
        (area * s).sqrt()
    }

    /// Spectral horizontal divergence `i k . vbar_k`.
    pub fn divergence(&self) -> Vec<Complex64> {
        (0..self.grid.modes())
            .map(|m| {
                let (kx, ky) = self.grid.wavevector(m);
                Complex64::new(0.0, 1.0) * (self.comp[0][m] * kx + self.comp[1][m] * ky)
            })
            .collect()
    }

    /// `||div_H vbar||_{L^2(T^2)}`.
    pub fn divergence_norm(&self) -> f64 {
        let area = self.grid.lx * self.grid.ly;
        (area * self.divergence().iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// Broadcasts the average over the full depth.
    pub fn broadcast(&self) -> Field {
        let nzp = self.grid.nzp();
        let mut out = Field::zeros(&self.grid, Repr::Spectral);
        for c in 0..2 {
            for mode in 0..self.grid.modes() {
                out.column_mut(c, mode).fill(self.comp[c][mode]);
            }
        }
        debug_assert_eq!(out.comp(0).len(), self.grid.modes() * nzp);
        out
    }
}

/// `(1/h) int_{-h}^0 v dz`.
pub fn vertical_average(v: &Field) -> BarotropicField {
    let s = v.to_spectral();
    let h = v.grid().h;
    let [a, b] = s.depth_integral();
    BarotropicField {
        grid: v.grid().clone(),
        comp: [a.into_iter().map(|c| c / h).collect(), b.into_iter().map(|c| c / h).collect()],
    }
}

/// `v - vbar`.
pub fn baroclinic_part(v: &Field) -> Field {
    let s = v.to_spectral();
    &s - &vertical_average(&s).broadcast()
}

/// `w(v)(z) = -int_{-h}^{z} div_H v dxi`, returned in spectral form.
pub fn reconstruct_w(v: &Field) -> ScalarField {
    let s = v.to_spectral();
    let g = s.grid().clone();
    ScalarField::from_data(&g, negative_integrated_divergence(&g, &s), Repr::Spectral)
}

pub(crate) fn horizontal_divergence(g: &Grid, s: &Field) -> Vec<Complex64> {
    let nzp = g.nzp();
    let mut div = vec![Complex64::default(); g.len()];
    for mode in 0..g.modes() {
        let (kx, ky) = g.wavevector(mode);
        if kx == 0.0 && ky == 0.0 {
            continue;
        }
        let (a, b) = (s.column(0, mode), s.column(1, mode));
        let dst = &mut div[mode * nzp..(mode + 1) * nzp];
        for iz in 0..nzp {
            dst[iz] = Complex64::new(0.0, 1.0) * (a[iz] * kx + b[iz] * ky);
        }
    }
    div
}

pub(crate) fn negative_integrated_divergence(g: &Grid, s: &Field) -> Vec<Complex64> {
    let div = horizontal_divergence(g, s);
    let mut w = apply_columns(g, &g.integral, &div);
    for c in w.iter_mut() {
        *c = -*c;
    }
    w
}

/// Removes `grad_H Delta_H^{-1} div_H` of the vertical average, spreading the
/// correction over depth with `profile` (unit depth mean).
fn project_impl(v: &Field, profile: Option<&[f64]>) -> Field {
    let mut out = v.to_spectral();
    let g = out.grid().clone();
    let avg = vertical_average(&out);
    for mode in 1..g.modes() {
        let (kx, ky) = g.wavevector(mode);
        let k2 = kx * kx + ky * ky;
        if k2 == 0.0 {
            continue;
        }
        let kv = avg.comp[0][mode] * kx + avg.comp[1][mode] * ky;
        let corr = [kv * (kx / k2), kv * (ky / k2)];
        for c in 0..2 {
            let col = out.column_mut(c, mode);
            match profile {
                None => col.iter_mut().for_each(|x| *x -= corr[c]),
                Some(p) => col.iter_mut().zip(p).for_each(|(x, p)| *x -= corr[c] * *p),
            }
        }
    }
    out
}

/// Hydrostatic Helmholtz projection `P v = v - grad_H Delta_H^{-1} div_H vbar`.
/// The correction is independent of `z`; the `(0,0)` mode is untouched.
pub fn project(v: &Field) -> Field {
    project_impl(v, None)
}

/// Depth profile `(3/2)(1 - z^2/h^2)`: unit mean, zero at `z = -h`, zero
/// shear at `z = 0`.
pub fn boundary_compatible_profile(grid: &Grid) -> Vec<f64> {
    let h = grid.h;
    grid.z.iter().map(|z| 1.5 * (1.0 - z * z / (h * h))).collect()
}

/// Removes the same barotropic gradient as [`project`], but distributes the
/// correction with [`boundary_compatible_profile`] so the boundary
/// conditions `d_z v(0) = 0`, `v(-h) = 0` survive.
pub fn project_boundary_compatible(v: &Field) -> Field {
    let profile = boundary_compatible_profile(v.grid());
    project_impl(v, Some(&profile))
}

/// Surface pressure `pi_s(x, y)` and the hydrostatic part `-rho0 g z`.
#[derive(Clone, Debug)]
pub struct HydrostaticPressure {
    grid: Arc<Grid>,
    /// Horizontal Fourier modes of `pi_s`; the `(0,0)` mode is pinned to zero.
    pub surface: Vec<Complex64>,
    pub rho0: f64,
    pub g: f64,
}

impl HydrostaticPressure {
    /// `pi(x, y, z) = pi_s(x, y) - rho0 g z` in spectral form.
    pub fn to_field(&self) -> ScalarField {
        let g = &self.grid;
        let nzp = g.nzp();
        let mut data = vec![Complex64::default(); g.len()];
        for mode in 0..g.modes() {
            for iz in 0..nzp {
                data[mode * nzp + iz] = self.surface[mode];
            }
        }
        for iz in 0..nzp {
            data[iz] += Complex64::new(-self.rho0 * self.g * g.z[iz], 0.0);
        }
        ScalarField::from_data(g, data, Repr::Spectral)
    }

    /// `pi_s` sampled on the horizontal grid (`nx * ny` values, x-major).
    pub fn surface_physical(&self) -> Vec<f64> {
        let g = &self.grid;
        let mut full = vec![Complex64::default(); g.len()];
        let nzp = g.nzp();
        for mode in 0..g.modes() {
            full[mode * nzp] = self.surface[mode];
        }
        crate::field::inverse_2d(g, &mut full);
        (0..g.modes()).map(|m| full[m * nzp].re).collect()
    }

    pub fn surface_mean(&self) -> f64 {
        self.surface[0].re
    }
}

/// `v . grad_H v'` followed by the 2/3-rule truncation; spectral in, spectral out.
pub(crate) fn horizontal_advection(v: &Field, vp: &Field) -> Field {
    let g = v.grid().clone();
    let vp_x = vp.diff(Axis::X).to_physical();
    let vp_y = vp.diff(Axis::Y).to_physical();
    let vph = v.to_physical();
    let mut out = Field::zeros(&g, Repr::Physical);
    for c in 0..2 {
        let dst = out.comp_mut(c);
        for i in 0..g.len() {
            dst[i] = vph.comp(0)[i] * vp_x.comp(c)[i].re + vph.comp(1)[i] * vp_y.comp(c)[i].re;
        }
    }
    out.dealias()
}

/// Surface pressure from the elliptic equation
///
/// `Delta_H pi_s = rho0 ( -(nu_z/h) div_H(d_z v|_{z=-h}) + (1/h) div_H int (v . grad_H v - v div_H v) dz )`
///
/// solved per mode with zero-mean gauge. Input must satisfy
/// `div_H vbar = 0` to `1e-8 (1 + ||v||)`.
pub fn recover_pressure(v: &Field, params: &PhysicalParams) -> Result<HydrostaticPressure, HydroError> {
    let s = v.to_spectral();
    let g = s.grid().clone();
    let divergence = vertical_average(&s).divergence_norm();
    if divergence > 1e-8 * (1.0 + s.l2_norm()) {
        return Err(HydroError::NotProjected { divergence });
    }
    let h = g.h;
    let nzp = g.nzp();
    let shear = s.diff(Axis::Z);
    let adv = horizontal_advection(&s, &s);
    // v div_H v, dealiased
    let div = ScalarField::from_data(&g, horizontal_divergence(&g, &s), Repr::Spectral).transform(Repr::Physical);
    let vph = s.to_physical();
    let mut vdiv = Field::zeros(&g, Repr::Physical);
    for c in 0..2 {
        let dst = vdiv.comp_mut(c);
        for i in 0..g.len() {
            dst[i] = vph.comp(c)[i] * div.data()[i].re;
        }
    }
    let flux = &adv - &vdiv.dealias();
    let [fx, fy] = flux.depth_integral();

    let mut surface = vec![Complex64::default(); g.modes()];
    for mode in 1..g.modes() {
        let (kx, ky) = g.wavevector(mode);
        let k2 = kx * kx + ky * ky;
        if k2 == 0.0 {
            continue;
        }
        let i = Complex64::new(0.0, 1.0);
        let bottom = nzp - 1;
        let div_shear = i * (shear.column(0, mode)[bottom] * kx + shear.column(1, mode)[bottom] * ky);
        let div_flux = i * (fx[mode] * kx + fy[mode] * ky);
        let rhs = (div_shear * (-params.nu_z / h) + div_flux / h) * params.rho0;
        surface[mode] = -rhs / k2;
    }
    Ok(HydrostaticPressure {
        grid: g,
        surface,
        rho0: params.rho0,
        g: params.g,
    })
}

/// L^2 norms of the three residuals of the steady system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyResidual {
    pub momentum: f64,
    pub hydrostatic: f64,
    pub continuity: f64,
}

impl SteadyResidual {
    pub fn max(&self) -> f64 {
        self.momentum.max(self.hydrostatic).max(self.continuity)
    }
}

/// Momentum tendency `nu_H Delta_H v + nu_z d_z^2 v - u . grad v - (1/rho0) grad_H pi - f v^perp`.
fn momentum_tendency(v: &Field, w: &ScalarField, pressure: &ScalarField, params: &PhysicalParams) -> Field {
    let s = v.to_spectral();
    let g = s.grid().clone();
    let nzp = g.nzp();
    let mut lap = Field::zeros(&g, Repr::Spectral);
    let d2 = [
        apply_columns(&g, &g.dz2, s.comp(0)),
        apply_columns(&g, &g.dz2, s.comp(1)),
    ];
    for c in 0..2 {
        for mode in 0..g.modes() {
            let k2 = g.k2(mode);
            let src = s.column(c, mode);
            let dst = lap.column_mut(c, mode);
            for iz in 0..nzp {
                dst[iz] = src[iz] * (-params.nu_h * k2) + d2[c][mode * nzp + iz] * params.nu_z;
            }
        }
    }
    let adv = horizontal_advection(&s, &s);
    let wz = {
        let wp = w.transform(Repr::Physical);
        let dz = s.diff(Axis::Z).to_physical();
        let mut out = Field::zeros(&g, Repr::Physical);
        for c in 0..2 {
            let dst = out.comp_mut(c);
            for i in 0..g.len() {
                dst[i] = dz.comp(c)[i] * wp.data()[i].re;
            }
        }
        out.dealias()
    };
    let px = pressure.diff(Axis::X).transform(Repr::Spectral);
    let py = pressure.diff(Axis::Y).transform(Repr::Spectral);
    let grad = Field::from_parts(&g, [px.data().to_vec(), py.data().to_vec()], Repr::Spectral);
    let mut t = lap;
    t -= &adv;
    t -= &wz;
    t.axpy(-1.0 / params.rho0, &grad);
    t.axpy(-params.f, &s.perp());
    t
}

/// Residual of the steady primitive equations at `(v, w, pi)`.
pub fn steady_residual(
    v: &Field,
    w: &ScalarField,
    pressure: &ScalarField,
    params: &PhysicalParams,
) -> SteadyResidual {
    let g = v.grid().clone();
    let momentum = momentum_tendency(v, w, pressure, params).l2_norm();
    let mut hyd = pressure.diff(Axis::Z).transform(Repr::Spectral);
    let nzp = g.nzp();
    let mut hdata = hyd.data().to_vec();
    for iz in 0..nzp {
        hdata[iz] += Complex64::new(params.rho0 * params.g, 0.0);
    }
    hyd = ScalarField::from_data(&g, hdata, Repr::Spectral);
    let s = v.to_spectral();
    let div = horizontal_divergence(&g, &s);
    let wz = w.diff(Axis::Z).transform(Repr::Spectral);
    let cont: Vec<Complex64> = div.iter().zip(wz.data()).map(|(a, b)| a + b).collect();
    SteadyResidual {
        momentum,
        hydrostatic: hyd.l2_norm(),
        continuity: ScalarField::from_data(&g, cont, Repr::Spectral).l2_norm(),
    }
}

/// `||div_H (depth mean of the momentum tendency)||_{L^2(T^2)}` with the
/// recovered pressure. Zero when the pressure keeps `div_H vbar = 0` in time;
/// measures the consistency of the elliptic pressure equation.
pub fn pressure_consistency_residual(
    v: &Field,
    params: &PhysicalParams,
    pressure: &HydrostaticPressure,
) -> f64 {
    let w = reconstruct_w(v);
    let t = momentum_tendency(v, &w, &pressure.to_field(), params);
    vertical_average(&t).divergence_norm()
}

/// `(sum over modes of |d_z v(0)|, sum over modes of |v(-h)|)`; each bounds the
/// maximum pointwise boundary defect.
pub fn boundary_residuals(v: &Field) -> (f64, f64) {
    let s = v.to_spectral();
    let g = s.grid();
    let nzp = g.nzp();
    let top_row = g.dz.row(0);
    let mut top = [0.0f64; 2];
    let mut bottom = [0.0f64; 2];
    for c in 0..2 {
        for mode in 0..g.modes() {
            let col = s.column(c, mode);
            let d: Complex64 = col.iter().zip(top_row).map(|(v, a)| v * a).sum();
            top[c] += d.norm();
            bottom[c] += col[nzp - 1].norm();
        }
    }
    (top[0].hypot(top[1]), bottom[0].hypot(bottom[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::LpNorm;
    use std::f64::consts::PI;

    fn grid() -> Arc<Grid> {
        Grid::new(16, 16, 16, 2.0 * PI, 2.0 * PI, 1.0).unwrap()
    }

    #[test]
    fn averages() {
        let g = grid();
        let flat = Field::from_fn(&g, |x, y, _| [x.sin(), y.cos()]);
        let avg = vertical_average(&flat).broadcast();
        assert!((&avg - &flat).l2_norm() < 1e-13);
        assert!(baroclinic_part(&flat).l2_norm() < 1e-13);

        let odd = Field::from_fn(&g, |_, _, z| [z + 0.5, 0.0]);
        assert!(vertical_average(&odd).l2_norm() < 1e-14);
        assert!((&baroclinic_part(&odd) - &odd).l2_norm() < 1e-14);

        let sq = Field::from_fn(&g, |_, _, z| [z * z, 0.0]);
        let a = vertical_average(&sq);
        assert!((a.mode(0, 0).re - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn w_of_sine() {
        let g = grid();
        let v = Field::from_fn(&g, |x, _, _| [x.sin(), 0.0]);
        let w = reconstruct_w(&v).transform(Repr::Physical);
        for ix in 0..g.nx {
            for iz in 0..g.nzp() {
                let expect = -(g.x(ix)).cos() * (g.z[iz] + 1.0);
                assert!((w.value(ix, 3, iz) - expect).abs() < 1e-12);
            }
        }
        let solenoidal = Field::from_fn(&g, |x, y, z| [(x + y).sin() * z, -(x + y).sin() * z]);
        assert!(reconstruct_w(&solenoidal).max_abs() < 1e-13);
    }

    #[test]
    fn gradient_is_annihilated() {
        let g = grid();
        // phi = cos(2x) sin(y)
        let v = Field::from_fn(&g, |x, y, _| [-2.0 * (2.0 * x).sin() * y.sin(), (2.0 * x).cos() * y.cos()]);
        assert!(project(&v).l2_norm() < 1e-13);
    }

    #[test]
    fn projection_properties() {
        let g = grid();
        let v = Field::random(&g, 5, 1.0, 1.0).unwrap();
        let p = project(&v);
        assert!(vertical_average(&p).divergence_norm() < 1e-11);
        let pp = project(&p);
        assert!((&pp - &p).l2_norm() <= 1e-12 * p.l2_norm());
        let orth = (&v - &p).inner(&p);
        assert!(orth.abs() <= 1e-10 * v.l2_norm().powi(2));
        // v - Pv is z-independent and curl-free
        let r = &v - &p;
        assert!(baroclinic_part(&r).l2_norm() < 1e-12);
        let curl = &r.diff(Axis::X).comp(1).to_vec();
        let ry = r.diff(Axis::Y);
        let c: f64 = curl.iter().zip(ry.comp(0)).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(c < 1e-12);
        // already solenoidal input passes through
        assert!((&project(&p) - &p).l2_norm() < 1e-12);
    }

    #[test]
    fn boundary_compatible_projection_keeps_boundary_conditions() {
        let g = grid();
        let v = Field::random(&g, 8, 1.0, 1.0).unwrap();
        let p = project_boundary_compatible(&v);
        assert!(vertical_average(&p).divergence_norm() < 1e-11);
        let (top, bottom) = boundary_residuals(&p);
        assert!(top < 1e-10 && bottom < 1e-12, "top={top} bottom={bottom}");
    }

    #[test]
    fn orthogonal_split() {
        let g = grid();
        let v = Field::random(&g, 9, 1.0, 0.5).unwrap();
        let bar = vertical_average(&v);
        let tilde = baroclinic_part(&v);
        let lhs = v.l2_norm().powi(2);
        let rhs = bar.l2_norm().powi(2) * g.h + tilde.l2_norm().powi(2);
        assert!((lhs - rhs).abs() <= 1e-10 * lhs);
    }

    #[test]
    fn zero_difference_pressure_is_hydrostatic() {
        let g = grid();
        let params = PhysicalParams {
            nu_h: 1.0,
            nu_z: 1.0,
            f: 1.0,
            rho0: 1025.0,
            g: 9.81,
            h: 1.0,
            tau: [0.0; 2],
            v_g: [0.0; 2],
            l_x: 2.0 * PI,
            l_y: 2.0 * PI,
        };
        let v = Field::zeros(&g, Repr::Spectral);
        let p = recover_pressure(&v, &params).unwrap();
        assert!(p.surface.iter().all(|c| c.norm() == 0.0));
        let full = p.to_field().transform(Repr::Physical);
        for iz in 0..g.nzp() {
            assert!((full.value(1, 2, iz) + 1025.0 * 9.81 * g.z[iz]).abs() < 1e-9);
        }
        // unprojected input is rejected
        let bad = Field::from_fn(&g, |x, _, _| [x.sin(), 0.0]);
        assert!(matches!(recover_pressure(&bad, &params), Err(HydroError::NotProjected { .. })));
        // gauge: zero horizontal mean
        let u = project(&Field::random(&g, 1, 0.5, 1.0).unwrap());
        let p = recover_pressure(&u, &params).unwrap();
        assert_eq!(p.surface_mean(), 0.0);
        let s = p.surface_physical();
        assert!(s.iter().sum::<f64>().abs() < 1e-9 * s.iter().map(|x| x.abs()).sum::<f64>().max(1.0));
        let _ = LpNorm::L2;
    }
}
