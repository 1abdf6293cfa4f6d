//! The hydrostatic Ekman-Stokes operator `A`, the bilinearity `F`, bilinear
//! bound monitors, and a propagator-Arnoldi estimate of the spectral bound.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::field::{apply_columns, Axis, Field, FieldError, Repr};
use crate::grid::Grid;
use crate::hydrostatics::{boundary_residuals, negative_integrated_divergence, project};
use crate::model::{ekman_coefficients, EkmanSolution, ModelError, PhysicalParams};
use crate::solver::{Mode, StepError, Stepper};

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("grid geometry ({grid_lx}, {grid_ly}, {grid_h}) does not match parameters ({lx}, {ly}, {h})")]
    GeometryMismatch {
        grid_lx: f64,
        grid_ly: f64,
        grid_h: f64,
        lx: f64,
        ly: f64,
        h: f64,
    },
    #[error("bilinear ratio undefined for the zero field")]
    Undefined,
    #[error("bilinear ratio order {0} unsupported (0, 1 or 2)")]
    UnsupportedOrder(usize),
    #[error("invalid Arnoldi setup: {0}")]
    InvalidArnoldi(&'static str),
    #[error("Arnoldi not converged: Ritz residual {:e} > tol {tol:e}", .bound.residual)]
    NotConverged { bound: Box<SpectralBound>, tol: f64 },
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// `A` linearized around the Ekman spiral of `params`, on a fixed grid.
#[derive(Clone, Debug)]
pub struct LinearizedOp {
    params: PhysicalParams,
    ekman: EkmanSolution,
    grid: Arc<Grid>,
    profile: [Vec<f64>; 2],
    shear: [Vec<f64>; 2],
}

impl LinearizedOp {
    pub fn new(params: &PhysicalParams, grid: &Arc<Grid>) -> Result<Self, OperatorError> {
        params.validate()?;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        if !(close(grid.lx, params.l_x) && close(grid.ly, params.l_y) && close(grid.h, params.h)) {
            return Err(OperatorError::GeometryMismatch {
                grid_lx: grid.lx,
                grid_ly: grid.ly,
                grid_h: grid.h,
                lx: params.l_x,
                ly: params.l_y,
                h: params.h,
            });
        }
        let ekman = ekman_coefficients(params)?;
        let mut profile = [Vec::new(), Vec::new()];
        let mut shear = [Vec::new(), Vec::new()];
        for &z in &grid.z {
            let p = ekman.profile_unchecked(z);
            let s = ekman.derivative_unchecked(z);
            for c in 0..2 {
                profile[c].push(p[c]);
                shear[c].push(s[c]);
            }
        }
        Ok(Self {
            params: *params,
            ekman,
            grid: grid.clone(),
            profile,
            shear,
        })
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    pub fn ekman(&self) -> &EkmanSolution {
        &self.ekman
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `v_E` at the Lobatto nodes, per component.
    pub fn profile(&self) -> &[Vec<f64>; 2] {
        &self.profile
    }

    /// `d_z v_E` at the Lobatto nodes, per component.
    pub fn shear(&self) -> &[Vec<f64>; 2] {
        &self.shear
    }

    /// `v_E` as a (horizontally constant) field.
    pub fn ekman_field(&self) -> Field {
        Field::from_profile(&self.grid, |z| self.ekman.profile_unchecked(z))
    }

    /// `nu_H Delta_H v + nu_z d_z^2 v`, spectral.
    pub fn diffusion(&self, v: &Field) -> Field {
        let s = v.to_spectral();
        let g = &self.grid;
        let nzp = g.nzp();
        let mut out = Field::zeros(g, Repr::Spectral);
        for c in 0..2 {
            let d2 = apply_columns(g, &g.dz2, s.comp(c));
            let dst = out.comp_mut(c);
            for mode in 0..g.modes() {
                let k2 = g.k2(mode);
                for iz in 0..nzp {
                    let i = mode * nzp + iz;
                    dst[i] = s.comp(c)[i] * (-self.params.nu_h * k2) + d2[i] * self.params.nu_z;
                }
            }
        }
        out
    }

    /// `-(v_E . grad_H v) - w(v) d_z v_E - f v^perp`, spectral and unprojected.
    pub fn coupling(&self, v: &Field) -> Field {
        let s = v.to_spectral();
        let mut out = Field::zeros(&self.grid, Repr::Spectral);
        self.coupling_into(&s, &mut out);
        out
    }

    /// Adds the coupling terms of spectral `s` into `out`, skipping empty modes.
    pub(crate) fn coupling_into(&self, s: &Field, out: &mut Field) {
        debug_assert_eq!(s.repr(), Repr::Spectral);
        let g = &self.grid;
        let nzp = g.nzp();
        let f = self.params.f;
        let i = Complex64::new(0.0, 1.0);
        let mut div = vec![Complex64::default(); nzp];
        let mut w = vec![Complex64::default(); nzp];
        for mode in 0..g.modes() {
            let a = s.column(0, mode);
            let b = s.column(1, mode);
            let empty = |c: &[Complex64]| c.iter().all(|x| x.re == 0.0 && x.im == 0.0);
            if empty(a) && empty(b) {
                continue;
            }
            let (kx, ky) = g.wavevector(mode);
            let has_k = kx != 0.0 || ky != 0.0;
            if has_k {
                for iz in 0..nzp {
                    div[iz] = i * (a[iz] * kx + b[iz] * ky);
                }
                g.integral.apply(&div, &mut w);
            }
            let (a, b) = (a.to_vec(), b.to_vec());
            for c in 0..2 {
                let own = if c == 0 { &a } else { &b };
                let dst = out.column_mut(c, mode);
                for iz in 0..nzp {
                    let rot = if c == 0 { -b[iz] } else { a[iz] };
                    let mut t = -rot * f;
                    if has_k {
                        let adv = i * (self.profile[0][iz] * kx + self.profile[1][iz] * ky);
                        // w = -integral(div)
                        t += -adv * own[iz] + w[iz] * self.shear[c][iz];
                    }
                    dst[iz] += t;
                }
            }
        }
    }
}

/// `v . grad_H vp + w(v) d_z vp` evaluated pseudo-spectrally with the 2/3
/// rule; spectral output, not projected.
pub fn advection(v: &Field, vp: &Field) -> Field {
    let g = v.grid().clone();
    let s = v.to_spectral();
    let sp = vp.to_spectral();
    if s.is_zero() || sp.is_zero() {
        return Field::zeros(&g, Repr::Spectral);
    }
    let w = crate::field::ScalarField::from_data(&g, negative_integrated_divergence(&g, &s), Repr::Spectral)
        .transform(Repr::Physical);
    let vph = s.to_physical();
    let dx = sp.diff(Axis::X).to_physical();
    let dy = sp.diff(Axis::Y).to_physical();
    let dz = sp.diff(Axis::Z).to_physical();
    let mut out = Field::zeros(&g, Repr::Physical);
    for c in 0..2 {
        let dst = out.comp_mut(c);
        for i in 0..g.len() {
            dst[i] = Complex64::new(
                vph.comp(0)[i].re * dx.comp(c)[i].re
                    + vph.comp(1)[i].re * dy.comp(c)[i].re
                    + w.data()[i].re * dz.comp(c)[i].re,
                0.0,
            );
        }
    }
    out.dealias()
}

/// `F(v, vp) = P(v . grad_H vp + w(v) d_z vp)`.
#[allow(non_snake_case)]
pub fn apply_F(v: &Field, vp: &Field) -> Field {
    project(&advection(v, vp))
}

/// `A v = P(nu_H Delta_H v + nu_z d_z^2 v) - P(v_E . grad_H v + w(v) d_z v_E) - P(f v^perp)`.
///
/// Logs a warning when `v` violates `d_z v(0) = 0` or `v(-h) = 0` by more
/// than `1e-8 (1 + ||v||)`.
#[allow(non_snake_case)]
pub fn apply_A(op: &LinearizedOp, v: &Field) -> Field {
    let (top, bottom) = boundary_residuals(v);
    let tol = 1e-8 * (1.0 + v.l2_norm());
    if top > tol || bottom > tol {
        log::warn!("apply_A: boundary residuals d_z v(0) = {top:e}, v(-h) = {bottom:e} exceed {tol:e}");
    }
    let mut t = op.diffusion(v);
    let s = v.to_spectral();
    op.coupling_into(&s, &mut t);
    project(&t)
}

/// Monitored ratio of the bilinear bounds:
/// `k = 0`: `||F(v,v)||_{L^2} / ||v||_{H^{3/2}}^2`;
/// `k >= 1`: `||F(v,v)||_{H^k} / (||v||_{H^{k+2}}^{1/2} ||v||_{H^{k+1}} ||v||_{H^k}^{1/2})`.
pub fn bilinear_ratio(v: &Field, k: usize) -> Result<f64, OperatorError> {
    if k > 2 {
        return Err(OperatorError::UnsupportedOrder(k));
    }
    let fvv = apply_F(v, v);
    let denom = if k == 0 {
        v.fractional_h32_norm().powi(2)
    } else {
        v.sobolev_norm(k + 2)?.sqrt() * v.sobolev_norm(k + 1)? * v.sobolev_norm(k)?.sqrt()
    };
    if denom == 0.0 {
        return Err(OperatorError::Undefined);
    }
    Ok(fvv.sobolev_norm(k)? / denom)
}

/// Result of the propagator-Arnoldi estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBound {
    /// `ln|lambda| / horizon`.
    pub omega0: f64,
    /// Dominant Ritz value of the propagator.
    pub ritz: Complex64,
    /// `|h_{m+1,m}| |y_m| / |lambda|` for the dominant Ritz pair.
    pub residual: f64,
    pub horizon: f64,
    /// Time step actually used (`horizon / steps_per_horizon`).
    pub dt: f64,
    pub steps_per_horizon: usize,
    /// Krylov dimension requested and the number of Arnoldi steps taken.
    pub krylov_dim: usize,
    pub iterations: usize,
    /// Dominant Ritz value is not real.
    pub complex_pair: bool,
    /// `omega0 >= 0`: informational.
    pub unstable: bool,
}

/// Options for [`estimate_spectral_bound`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArnoldiOptions {
    pub horizon: f64,
    pub krylov_dim: usize,
    pub tol: f64,
    pub dt: f64,
    pub seed: u64,
}

impl ArnoldiOptions {
    /// Horizon `1/|f|`, 20 Krylov vectors, tolerance `1e-6`.
    pub fn defaults(params: &PhysicalParams, dt: f64) -> Self {
        Self {
            horizon: 1.0 / params.f.abs(),
            krylov_dim: 20,
            tol: 1e-6,
            dt,
            seed: 0,
        }
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn flatten(v: &Field) -> Vec<Complex64> {
    let mut out = v.comp(0).to_vec();
    out.extend_from_slice(v.comp(1));
    out
}

fn unflatten(grid: &Arc<Grid>, x: &[Complex64]) -> Field {
    let n = grid.len();
    Field::from_parts(grid, [x[..n].to_vec(), x[n..].to_vec()], Repr::Spectral)
}

/// Dominant Ritz pair of the leading `m x m` block of `hess`.
fn dominant_ritz(hess: &DMatrix<Complex64>, m: usize) -> (Complex64, DVector<Complex64>, bool) {
    let hm = hess.view((0, 0), (m, m)).into_owned();
    let eig = hm
        .clone()
        .schur()
        .eigenvalues()
        .expect("complex Schur form is triangular");
    let theta = eig
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .expect("m >= 1");
    let shifted = hm - DMatrix::identity(m, m) * theta;
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("m >= 1");
    let y: DVector<Complex64> = v_t.row(imin).transpose().map(|c| c.conj());
    let complex = theta.im.abs() > 1e-10 * theta.norm();
    (theta, y, complex)
}

/// Estimates `omega0 = s(A)` by Arnoldi iteration on the linear propagator
/// over `horizon`, started from a seeded random projected field.
pub fn estimate_spectral_bound(op: &LinearizedOp, opts: &ArnoldiOptions) -> Result<SpectralBound, OperatorError> {
    if !(opts.horizon > 0.0) || !opts.horizon.is_finite() {
        return Err(OperatorError::InvalidArnoldi("horizon must be > 0"));
    }
    if opts.krylov_dim < 2 {
        return Err(OperatorError::InvalidArnoldi("krylov_dim must be >= 2"));
    }
    if !(opts.tol > 0.0) {
        return Err(OperatorError::InvalidArnoldi("tol must be > 0"));
    }
    if !(opts.dt > 0.0) || opts.dt > opts.horizon {
        return Err(OperatorError::InvalidArnoldi("dt must be in (0, horizon]"));
    }
    let grid = op.grid().clone();
    let steps = ((opts.horizon / opts.dt) - 1e-9).ceil().max(1.0) as usize;
    let dt = opts.horizon / steps as f64;
    let stepper = Stepper::new(op, dt, Mode::Linear)?;

    let start = stepper.prepare_initial(&Field::random(&grid, opts.seed, 1.0, 1.0)?).0;
    let mut q0 = flatten(&start);
    let n0 = norm(&q0);
    if n0 == 0.0 {
        return Err(OperatorError::InvalidArnoldi("degenerate start vector"));
    }
    q0.iter_mut().for_each(|x| *x /= n0);

    let m_max = opts.krylov_dim;
    let mut basis: Vec<Vec<Complex64>> = vec![q0];
    let mut hess = DMatrix::<Complex64>::zeros(m_max + 1, m_max);
    let mut best: Option<SpectralBound> = None;

    for j in 0..m_max {
        let phi = stepper.propagate(&unflatten(&grid, &basis[j]), steps)?;
        let mut w = flatten(&phi);
        for _pass in 0..2 {
            for (i, q) in basis.iter().enumerate() {
                let c = dot(q, &w);
                hess[(i, j)] += c;
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let beta = norm(&w);
        hess[(j + 1, j)] = Complex64::new(beta, 0.0);
        let m = j + 1;
        let (theta, y, complex) = dominant_ritz(&hess, m);
        let residual = if theta.norm() > 0.0 {
            beta * y[m - 1].norm() / theta.norm()
        } else {
            f64::INFINITY
        };
        let omega0 = theta.norm().ln() / opts.horizon;
        let bound = SpectralBound {
            omega0,
            ritz: theta,
            residual,
            horizon: opts.horizon,
            dt,
            steps_per_horizon: steps,
            krylov_dim: m_max,
            iterations: m,
            complex_pair: complex,
            unstable: omega0 >= 0.0,
        };
        log::debug!("arnoldi step {m}: theta = {theta}, residual = {residual:e}");
        let done = residual <= opts.tol || beta <= 1e-14 * theta.norm();
        best = Some(bound);
        if done {
            break;
        }
        w.iter_mut().for_each(|x| *x /= beta);
        basis.push(w);
    }
    let bound = best.expect("krylov_dim >= 2");
    if bound.unstable {
        log::info!("unstable regime detected: omega0 = {}", bound.omega0);
    }
    if bound.residual > opts.tol {
        return Err(OperatorError::NotConverged {
            bound: Box::new(bound),
            tol: opts.tol,
        });
    }
    Ok(bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hydrostatics::{project_boundary_compatible, vertical_average};
    use std::f64::consts::PI;

    fn params(tau: [f64; 2], v_g: [f64; 2]) -> PhysicalParams {
        PhysicalParams {
            nu_h: 1.0,
            nu_z: 1.0,
            f: 1.0,
            rho0: 1000.0,
            g: 9.81,
            h: 1.0,
            tau,
            v_g,
            l_x: 2.0 * PI,
            l_y: 2.0 * PI,
        }
    }

    fn grid() -> Arc<Grid> {
        Grid::new(16, 16, 16, 2.0 * PI, 2.0 * PI, 1.0).unwrap()
    }

    #[test]
    fn constant_field_has_no_advection() {
        let g = grid();
        let v = Field::from_fn(&g, |_, _, _| [0.3, -0.2]);
        assert!(apply_F(&v, &v).l2_norm() < 1e-14);
    }

    #[test]
    fn diffusion_of_barotropic_mode() {
        let g = grid();
        let op = LinearizedOp::new(&params([0.0; 2], [0.0; 2]), &g).unwrap();
        let v = Field::from_fn(&g, |x, y, _| [(x + 2.0 * y).cos() * 2.0, -(x + 2.0 * y).cos()]);
        let d = op.diffusion(&v);
        let expect = v.scale(-5.0);
        assert!((&d - &expect).l2_norm() < 1e-11);
    }

    #[test]
    fn linearity() {
        let g = grid();
        let op = LinearizedOp::new(&params([0.1, 0.0], [0.05, 0.02]), &g).unwrap();
        let a = project_boundary_compatible(&Field::random(&g, 1, 1.0, 1.0).unwrap());
        let b = project_boundary_compatible(&Field::random(&g, 2, 1.0, 1.0).unwrap());
        let lhs = apply_A(&op, &(&a + &b));
        let rhs = &apply_A(&op, &a) + &apply_A(&op, &b);
        assert!((&lhs - &rhs).l2_norm() <= 1e-11 * lhs.l2_norm());
        let av = apply_A(&op, &a);
        assert!(vertical_average(&av).divergence_norm() <= 1e-10 * av.l2_norm());
    }

    #[test]
    fn rotation_is_skew_on_projected_fields() {
        let g = grid();
        let v = project_boundary_compatible(&Field::random(&g, 3, 1.0, 1.0).unwrap());
        let pr = project(&v.perp());
        assert!(pr.inner(&v).abs() <= 1e-10 * v.l2_norm().powi(2));
    }

    #[test]
    fn energy_cancellation() {
        let g = grid();
        let v = project_boundary_compatible(&Field::random(&g, 4, 1.0, 1.0).unwrap());
        let f = apply_F(&v, &v);
        assert!(f.inner(&v).abs() <= 1e-9 * v.l2_norm().powi(3));
    }

    #[test]
    fn ratio_of_zero_field_is_undefined() {
        let g = grid();
        let z = Field::zeros(&g, Repr::Spectral);
        assert!(matches!(bilinear_ratio(&z, 0), Err(OperatorError::Undefined)));
        assert!(matches!(bilinear_ratio(&z, 3), Err(OperatorError::UnsupportedOrder(3))));
    }

    #[test]
    fn geometry_must_match() {
        let g = grid();
        let mut p = params([0.0; 2], [0.0; 2]);
        p.h = 2.0;
        assert!(matches!(LinearizedOp::new(&p, &g), Err(OperatorError::GeometryMismatch { .. })));
    }

    #[test]
    fn arnoldi_rejects_short_krylov() {
        let g = grid();
        let op = LinearizedOp::new(&params([0.0; 2], [0.0; 2]), &g).unwrap();
        let mut o = ArnoldiOptions::defaults(op.params(), 0.01);
        o.krylov_dim = 1;
        assert!(matches!(estimate_spectral_bound(&op, &o), Err(OperatorError::InvalidArnoldi(_))));
    }
}
