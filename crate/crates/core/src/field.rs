//! Two-component horizontal velocity fields on the Fourier x Chebyshev grid.
//!
//! Storage is one complex array per component in `(ix, iy, iz)` order with
//! `z` fastest. In physical representation the imaginary parts are zero; in
//! spectral representation each `(ix, iy)` column holds the horizontal
//! Fourier coefficient at every Lobatto height, normalized so that a
//! constant field `c` has `(0,0)` coefficient `c`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grid::{Grid, VerticalOp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("Sobolev order {0} unsupported (max 4)")]
    UnsupportedOrder(usize),
    #[error("amplitude {0} must be finite and >= 0")]
    NegativeAmplitude(f64),
    #[error("fields live on different grids")]
    GridMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Repr {
    Physical,
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpNorm {
    L2,
    L4,
    Inf,
}

// ---------------------------------------------------------------------------
// component-level kernels

fn transform_lines(
    data: &mut [Complex64],
    fft: &dyn rustfft::Fft<f64>,
    n: usize,
    stride: usize,
    starts: impl Iterator<Item = usize>,
) {
    let starts: Vec<usize> = starts.collect();
    let mut buf = vec![Complex64::default(); starts.len() * n];
    for (line, &s) in starts.iter().enumerate() {
        for i in 0..n {
            buf[line * n + i] = data[s + i * stride];
        }
    }
    fft.process(&mut buf);
    for (line, &s) in starts.iter().enumerate() {
        for i in 0..n {
            data[s + i * stride] = buf[line * n + i];
        }
    }
}

pub(crate) fn forward_2d(grid: &Grid, data: &mut [Complex64]) {
    let (nx, ny, nzp) = (grid.nx, grid.ny, grid.nzp());
    transform_lines(
        data,
        grid.fft_y.as_ref(),
        ny,
        nzp,
        (0..nx).flat_map(|ix| (0..nzp).map(move |iz| ix * ny * nzp + iz)),
    );
    transform_lines(
        data,
        grid.fft_x.as_ref(),
        nx,
        ny * nzp,
        (0..ny).flat_map(|iy| (0..nzp).map(move |iz| iy * nzp + iz)),
    );
    let scale = 1.0 / (nx * ny) as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

pub(crate) fn inverse_2d(grid: &Grid, data: &mut [Complex64]) {
    let (nx, ny, nzp) = (grid.nx, grid.ny, grid.nzp());
    transform_lines(
        data,
        grid.ifft_x.as_ref(),
        nx,
        ny * nzp,
        (0..ny).flat_map(|iy| (0..nzp).map(move |iz| iy * nzp + iz)),
    );
    transform_lines(
        data,
        grid.ifft_y.as_ref(),
        ny,
        nzp,
        (0..nx).flat_map(|ix| (0..nzp).map(move |iz| ix * ny * nzp + iz)),
    );
    for v in data.iter_mut() {
        v.im = 0.0;
    }
}

/// Applies a vertical operator to every column.
pub(crate) fn apply_columns(grid: &Grid, op: &VerticalOp, data: &[Complex64]) -> Vec<Complex64> {
    let nzp = grid.nzp();
    let mut out = vec![Complex64::default(); data.len()];
    for (col, dst) in data.chunks_exact(nzp).zip(out.chunks_exact_mut(nzp)) {
        if col.iter().all(|c| c.re == 0.0 && c.im == 0.0) {
            continue;
        }
        op.apply(col, dst);
    }
    out
}

/// Multiplies spectral columns by `i k_axis`.
pub(crate) fn horizontal_derivative(grid: &Grid, data: &[Complex64], axis: Axis) -> Vec<Complex64> {
    let nzp = grid.nzp();
    let mut out = vec![Complex64::default(); data.len()];
    for (mode, (col, dst)) in data.chunks_exact(nzp).zip(out.chunks_exact_mut(nzp)).enumerate() {
        let (kx, ky) = grid.wavevector(mode);
        let k = match axis {
            Axis::X => kx,
            Axis::Y => ky,
            Axis::Z => unreachable!("vertical derivative is not horizontal"),
        };
        if k == 0.0 {
            continue;
        }
        let ik = Complex64::new(0.0, k);
        for (d, c) in dst.iter_mut().zip(col) {
            *d = ik * c;
        }
    }
    out
}

/// `int |.|^2` of spectral data, summed over columns with per-mode weights.
fn spectral_energy(grid: &Grid, data: &[Complex64], mode_weight: impl Fn(usize) -> f64) -> f64 {
    let nzp = grid.nzp();
    let area = grid.lx * grid.ly;
    let mut total = 0.0;
    for (mode, col) in data.chunks_exact(nzp).enumerate() {
        let mw = mode_weight(mode);
        if mw == 0.0 {
            continue;
        }
        let mut s = 0.0;
        for (c, w) in col.iter().zip(&grid.weights) {
            s += w * c.norm_sqr();
        }
        total += mw * s;
    }
    area * total
}

/// Vertical derivatives of orders `0..=max` of one column via the
/// coefficient recurrence.
fn column_derivatives(grid: &Grid, col: &[Complex64], max: usize) -> Vec<Vec<Complex64>> {
    let nzp = grid.nzp();
    let mut out = Vec::with_capacity(max + 1);
    out.push(col.to_vec());
    if max == 0 {
        return out;
    }
    let mut coef = vec![Complex64::default(); nzp];
    grid.to_coefs.apply(col, &mut coef);
    let scale = 2.0 / grid.h;
    for _ in 0..max {
        let re: Vec<f64> = coef.iter().map(|c| c.re).collect();
        let im: Vec<f64> = coef.iter().map(|c| c.im).collect();
        let dre = crate::grid::cheb::diff_coefs(&re);
        let dim = crate::grid::cheb::diff_coefs(&im);
        coef = dre
            .iter()
            .zip(&dim)
            .map(|(r, i)| Complex64::new(r * scale, i * scale))
            .collect();
        let mut vals = vec![Complex64::default(); nzp];
        grid.from_coefs.apply(&coef, &mut vals);
        out.push(vals);
    }
    out
}

// ---------------------------------------------------------------------------

/// Horizontal velocity `(v1, v2)` sampled on the grid.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<Grid>,
    comp: [Vec<Complex64>; 2],
    repr: Repr,
}

impl Field {
    pub fn zeros(grid: &Arc<Grid>, repr: Repr) -> Self {
        let n = grid.len();
        Self {
            grid: grid.clone(),
            comp: [vec![Complex64::default(); n], vec![Complex64::default(); n]],
            repr,
        }
    }

    /// Samples `f(x, y, z)` at the collocation points.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64, f64) -> [f64; 2]) -> Self {
        let mut out = Self::zeros(grid, Repr::Physical);
        for ix in 0..grid.nx {
            let x = grid.x(ix);
            for iy in 0..grid.ny {
                let y = grid.y(iy);
                for (iz, &z) in grid.z.iter().enumerate() {
                    let v = f(x, y, z);
                    let i = grid.index(ix, iy, iz);
                    out.comp[0][i] = Complex64::new(v[0], 0.0);
                    out.comp[1][i] = Complex64::new(v[1], 0.0);
                }
            }
        }
        out
    }

    /// A horizontally uniform field `v(z)`, built directly in spectral form.
    pub fn from_profile(grid: &Arc<Grid>, f: impl Fn(f64) -> [f64; 2]) -> Self {
        let mut out = Self::zeros(grid, Repr::Spectral);
        for (iz, &z) in grid.z.iter().enumerate() {
            let v = f(z);
            out.comp[0][iz] = Complex64::new(v[0], 0.0);
            out.comp[1][iz] = Complex64::new(v[1], 0.0);
        }
        out
    }

    pub(crate) fn from_parts(grid: &Arc<Grid>, comp: [Vec<Complex64>; 2], repr: Repr) -> Self {
        debug_assert_eq!(comp[0].len(), grid.len());
        debug_assert_eq!(comp[1].len(), grid.len());
        Self {
            grid: grid.clone(),
            comp,
            repr,
        }
    }

    /// Builds a physical field from real component arrays.
    pub fn from_physical(grid: &Arc<Grid>, v1: &[f64], v2: &[f64]) -> Self {
        let conv = |v: &[f64]| v.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>();
        Self::from_parts(grid, [conv(v1), conv(v2)], Repr::Physical)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn repr(&self) -> Repr {
        self.repr
    }

    pub fn comp(&self, c: usize) -> &[Complex64] {
        &self.comp[c]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [Complex64] {
        &mut self.comp[c]
    }

    /// One vertical column of component `c` at flat horizontal index `mode`.
    pub fn column(&self, c: usize, mode: usize) -> &[Complex64] {
        let nzp = self.grid.nzp();
        &self.comp[c][mode * nzp..(mode + 1) * nzp]
    }

    pub fn column_mut(&mut self, c: usize, mode: usize) -> &mut [Complex64] {
        let nzp = self.grid.nzp();
        &mut self.comp[c][mode * nzp..(mode + 1) * nzp]
    }

    /// Physical value at a grid point; panics on spectral fields.
    pub fn value(&self, ix: usize, iy: usize, iz: usize) -> [f64; 2] {
        assert_eq!(self.repr, Repr::Physical, "value() needs physical representation");
        let i = self.grid.index(ix, iy, iz);
        [self.comp[0][i].re, self.comp[1][i].re]
    }

    /// Real physical arrays of both components.
    pub fn physical_values(&self) -> [Vec<f64>; 2] {
        let p = self.to_physical();
        let re = |v: &[Complex64]| v.iter().map(|c| c.re).collect::<Vec<_>>();
        [re(&p.comp[0]), re(&p.comp[1])]
    }

    pub fn transform(&self, target: Repr) -> Field {
        let mut out = self.clone();
        out.transform_in_place(target);
        out
    }

    pub fn transform_in_place(&mut self, target: Repr) {
        if self.repr == target {
            return;
        }
        for c in 0..2 {
            match target {
                Repr::Spectral => forward_2d(&self.grid, &mut self.comp[c]),
                Repr::Physical => inverse_2d(&self.grid, &mut self.comp[c]),
            }
        }
        self.repr = target;
    }

    pub fn to_spectral(&self) -> Field {
        self.transform(Repr::Spectral)
    }

    pub fn to_physical(&self) -> Field {
        self.transform(Repr::Physical)
    }

    /// Partial derivative; the result keeps the input representation.
    pub fn diff(&self, axis: Axis) -> Field {
        match axis {
            Axis::Z => {
                let comp = [
                    apply_columns(&self.grid, &self.grid.dz, &self.comp[0]),
                    apply_columns(&self.grid, &self.grid.dz, &self.comp[1]),
                ];
                Field::from_parts(&self.grid, comp, self.repr)
            }
            _ => {
                let s = self.to_spectral();
                let comp = [
                    horizontal_derivative(&self.grid, &s.comp[0], axis),
                    horizontal_derivative(&self.grid, &s.comp[1], axis),
                ];
                Field::from_parts(&self.grid, comp, Repr::Spectral).transform(self.repr)
            }
        }
    }

    /// Antiderivative `int_{-h}^{z} v dxi`, keeping the representation.
    pub fn vertical_integral(&self) -> Field {
        let comp = [
            apply_columns(&self.grid, &self.grid.integral, &self.comp[0]),
            apply_columns(&self.grid, &self.grid.integral, &self.comp[1]),
        ];
        Field::from_parts(&self.grid, comp, self.repr)
    }

    /// `int_{-h}^{0} v dz` per column (horizontal slice, same representation).
    pub fn depth_integral(&self) -> [Vec<Complex64>; 2] {
        let nzp = self.grid.nzp();
        let w = &self.grid.weights;
        let slice = |data: &[Complex64]| {
            data.chunks_exact(nzp)
                .map(|col| col.iter().zip(w).map(|(c, w)| c * w).sum::<Complex64>())
                .collect::<Vec<_>>()
        };
        [slice(&self.comp[0]), slice(&self.comp[1])]
    }

    /// `(v1, v2) -> (-v2, v1)`.
    pub fn perp(&self) -> Field {
        let comp = [self.comp[1].iter().map(|c| -c).collect(), self.comp[0].clone()];
        Field::from_parts(&self.grid, comp, self.repr)
    }

    /// Zeroes horizontal modes outside the 2/3-rule band.
    pub fn dealias(&self) -> Field {
        let mut out = self.to_spectral();
        out.dealias_in_place();
        out
    }

    pub(crate) fn dealias_in_place(&mut self) {
        self.transform_in_place(Repr::Spectral);
        let nzp = self.grid.nzp();
        for mode in 0..self.grid.modes() {
            if !self.grid.resolved(mode) {
                for c in 0..2 {
                    self.comp[c][mode * nzp..(mode + 1) * nzp].fill(Complex64::default());
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.comp.iter().flatten().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.comp.iter().flatten().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    pub fn scale(&self, a: f64) -> Field {
        let comp = [
            self.comp[0].iter().map(|c| c * a).collect(),
            self.comp[1].iter().map(|c| c * a).collect(),
        ];
        Field::from_parts(&self.grid, comp, self.repr)
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Field) {
        let other = other.transform(self.repr);
        for c in 0..2 {
            for (s, o) in self.comp[c].iter_mut().zip(&other.comp[c]) {
                *s += o * a;
            }
        }
    }

    /// `<a, b>_{L^2(Omega)}`.
    pub fn inner(&self, other: &Field) -> f64 {
        let a = self.to_spectral();
        let b = other.to_spectral();
        let nzp = self.grid.nzp();
        let mut total = 0.0;
        for c in 0..2 {
            for (ca, cb) in a.comp[c].chunks_exact(nzp).zip(b.comp[c].chunks_exact(nzp)) {
                for ((x, y), w) in ca.iter().zip(cb).zip(&self.grid.weights) {
                    total += w * (x.re * y.re + x.im * y.im);
                }
            }
        }
        self.grid.lx * self.grid.ly * total
    }

    /// `||v||_{L^2}` computed from the spectral coefficients.
    pub fn l2_norm(&self) -> f64 {
        let s = self.to_spectral();
        (spectral_energy(&self.grid, &s.comp[0], |_| 1.0) + spectral_energy(&self.grid, &s.comp[1], |_| 1.0)).sqrt()
    }

    /// `(sum_{|alpha| <= k} ||D^alpha v||^2)^{1/2}` with each multi-index
    /// counted once.
    pub fn sobolev_norm(&self, k: usize) -> Result<f64, FieldError> {
        Ok(self.sobolev_norm_squared(k)?.sqrt())
    }

    pub fn sobolev_norm_squared(&self, k: usize) -> Result<f64, FieldError> {
        if k > 4 {
            return Err(FieldError::UnsupportedOrder(k));
        }
        let s = self.to_spectral();
        let g = &self.grid;
        let nzp = g.nzp();
        let area = g.lx * g.ly;
        let mut total = 0.0;
        for mode in 0..g.modes() {
            let (kx, ky) = g.wavevector(mode);
            let (kx2, ky2) = (kx * kx, ky * ky);
            // horizontal weight for each vertical order c: sum_{a+b <= k-c} kx^2a ky^2b
            let hweight = |order: usize| -> f64 {
                let mut acc = 0.0;
                for a in 0..=order {
                    for b in 0..=(order - a) {
                        acc += kx2.powi(a as i32) * ky2.powi(b as i32);
                    }
                }
                acc
            };
            for c in 0..2 {
                let col = &s.comp[c][mode * nzp..(mode + 1) * nzp];
                if col.iter().all(|v| v.re == 0.0 && v.im == 0.0) {
                    continue;
                }
                let derivs = column_derivatives(g, col, k);
                for (order, d) in derivs.iter().enumerate() {
                    let e: f64 = d.iter().zip(&g.weights).map(|(v, w)| w * v.norm_sqr()).sum();
                    total += hweight(k - order) * e;
                }
            }
        }
        Ok(area * total)
    }

    /// Interpolation proxy `(||v||_{H^1} ||v||_{H^2})^{1/2}` for `||v||_{H^{3/2}}`.
    pub fn fractional_h32_norm(&self) -> f64 {
        let h1 = self.sobolev_norm(1).expect("order 1 supported");
        let h2 = self.sobolev_norm(2).expect("order 2 supported");
        (h1 * h2).sqrt()
    }

    /// Quadrature-weighted norm of the pointwise speed; `Inf` is the grid max.
    pub fn lp_norm(&self, p: LpNorm) -> f64 {
        let phys = self.to_physical();
        let g = &self.grid;
        let nzp = g.nzp();
        let area = g.cell_area();
        let speed2 = |i: usize| phys.comp[0][i].re.powi(2) + phys.comp[1][i].re.powi(2);
        match p {
            LpNorm::Inf => (0..g.len()).map(speed2).fold(0.0, f64::max).sqrt(),
            LpNorm::L2 | LpNorm::L4 => {
                let mut total = 0.0;
                for col in 0..g.modes() {
                    for iz in 0..nzp {
                        let s2 = speed2(col * nzp + iz);
                        let v = if p == LpNorm::L2 { s2 } else { s2 * s2 };
                        total += area * g.weights[iz] * v;
                    }
                }
                if p == LpNorm::L2 {
                    total.sqrt()
                } else {
                    total.sqrt().sqrt()
                }
            }
        }
    }

    /// `sum_i ||d_x v_i||^2 + ||d_y v_i||^2`.
    pub fn horizontal_gradient_norm_squared(&self) -> f64 {
        let s = self.to_spectral();
        let g = &self.grid;
        spectral_energy(g, &s.comp[0], |m| g.k2(m)) + spectral_energy(g, &s.comp[1], |m| g.k2(m))
    }

    /// Maximum modulus of the horizontal Hermitian-symmetry defect,
    /// relative to the largest coefficient.
    pub fn hermitian_defect(&self) -> f64 {
        let s = self.to_spectral();
        let g = &self.grid;
        let nzp = g.nzp();
        let mut defect: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for ix in 0..g.nx {
            for iy in 0..g.ny {
                let jx = (g.nx - ix) % g.nx;
                let jy = (g.ny - iy) % g.ny;
                for c in 0..2 {
                    for iz in 0..nzp {
                        let a = s.comp[c][g.index(ix, iy, iz)];
                        let b = s.comp[c][g.index(jx, jy, iz)];
                        defect = defect.max((a - b.conj()).norm());
                        scale = scale.max(a.norm());
                    }
                }
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            defect / scale
        }
    }

    /// Seeded random field with `(1+|m|)^-slope` horizontal spectrum, limited
    /// to the dealiased band, and vertical profiles that vanish at `z = -h`
    /// and have zero shear at `z = 0`. The maximum pointwise speed equals
    /// `amplitude`.
    pub fn random(grid: &Arc<Grid>, seed: u64, amplitude: f64, slope: f64) -> Result<Field, FieldError> {
        if !(amplitude >= 0.0) || !amplitude.is_finite() {
            return Err(FieldError::NegativeAmplitude(amplitude));
        }
        if amplitude == 0.0 {
            return Ok(Field::zeros(grid, Repr::Spectral));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = grid.h;
        let nzp = grid.nzp();
        let mut field = Field::zeros(grid, Repr::Spectral);
        const DEGREE: usize = 3;
        for mode in 0..grid.modes() {
            if !grid.resolved(mode) {
                continue;
            }
            let mx = grid.mx[mode / grid.ny] as f64;
            let my = grid.my[mode % grid.ny] as f64;
            let weight = (1.0 + (mx * mx + my * my).sqrt()).powf(-slope);
            for c in 0..2 {
                // q(zeta) with zeta = z/h in [-1, 0]
                let mut q = [Complex64::default(); DEGREE + 1];
                for coef in q.iter_mut() {
                    *coef = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * weight;
                }
                let q_at = |zeta: f64| q.iter().rev().fold(Complex64::default(), |acc, c| acc * zeta + c);
                // g(z) = (z + h) q(z/h); g'(0) = q(0) + q'(0)
                let shear_top = q[0] + q[1];
                let col = field.column_mut(c, mode);
                for iz in 0..nzp {
                    let z = grid.z[iz];
                    let base = q_at(z / h) * (z + h);
                    let correction = shear_top * ((z + h) * (z + h) / (2.0 * h));
                    col[iz] = base - correction;
                }
                col[nzp - 1] = Complex64::default();
            }
        }
        let mut phys = field.to_physical();
        let peak = phys.lp_norm(LpNorm::Inf);
        if peak > 0.0 {
            phys = phys.scale(amplitude / peak);
        }
        // exact zeros on the bottom row survive the transforms
        let mut out = phys.to_spectral();
        for mode in 0..grid.modes() {
            for c in 0..2 {
                out.column_mut(c, mode)[nzp - 1] = Complex64::default();
            }
        }
        Ok(out)
    }
}

fn combine(a: &Field, b: &Field, op: impl Fn(Complex64, Complex64) -> Complex64) -> Field {
    assert!(a.grid.same_shape(&b.grid), "field grid mismatch");
    let b = b.transform(a.repr);
    let comp = [
        a.comp[0].iter().zip(&b.comp[0]).map(|(x, y)| op(*x, *y)).collect(),
        a.comp[1].iter().zip(&b.comp[1]).map(|(x, y)| op(*x, *y)).collect(),
    ];
    Field::from_parts(&a.grid, comp, a.repr)
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        combine(self, rhs, |x, y| x + y)
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        combine(self, rhs, |x, y| x - y)
    }
}

impl Add for Field {
    type Output = Field;
    fn add(self, rhs: Field) -> Field {
        &self + &rhs
    }
}

impl Sub for Field {
    type Output = Field;
    fn sub(self, rhs: Field) -> Field {
        &self - &rhs
    }
}

impl AddAssign<&Field> for Field {
    fn add_assign(&mut self, rhs: &Field) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&Field> for Field {
    fn sub_assign(&mut self, rhs: &Field) {
        self.axpy(-1.0, rhs);
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        self.scale(rhs)
    }
}

impl Neg for &Field {
    type Output = Field;
    fn neg(self) -> Field {
        self.scale(-1.0)
    }
}

/// Scalar field on the grid (vertical velocity, pressure).
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<Grid>,
    data: Vec<Complex64>,
    repr: Repr,
}

impl ScalarField {
    pub fn zeros(grid: &Arc<Grid>, repr: Repr) -> Self {
        Self {
            grid: grid.clone(),
            data: vec![Complex64::default(); grid.len()],
            repr,
        }
    }

    pub(crate) fn from_data(grid: &Arc<Grid>, data: Vec<Complex64>, repr: Repr) -> Self {
        Self {
            grid: grid.clone(),
            data,
            repr,
        }
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid, Repr::Physical);
        for ix in 0..grid.nx {
            for iy in 0..grid.ny {
                for (iz, &z) in grid.z.iter().enumerate() {
                    out.data[grid.index(ix, iy, iz)] = Complex64::new(f(grid.x(ix), grid.y(iy), z), 0.0);
                }
            }
        }
        out
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn repr(&self) -> Repr {
        self.repr
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn column(&self, mode: usize) -> &[Complex64] {
        let nzp = self.grid.nzp();
        &self.data[mode * nzp..(mode + 1) * nzp]
    }

    pub fn transform(&self, target: Repr) -> ScalarField {
        let mut out = self.clone();
        if out.repr != target {
            match target {
                Repr::Spectral => forward_2d(&self.grid, &mut out.data),
                Repr::Physical => inverse_2d(&self.grid, &mut out.data),
            }
            out.repr = target;
        }
        out
    }

    pub fn value(&self, ix: usize, iy: usize, iz: usize) -> f64 {
        assert_eq!(self.repr, Repr::Physical);
        self.data[self.grid.index(ix, iy, iz)].re
    }

    pub fn diff(&self, axis: Axis) -> ScalarField {
        match axis {
            Axis::Z => ScalarField::from_data(&self.grid, apply_columns(&self.grid, &self.grid.dz, &self.data), self.repr),
            _ => {
                let s = self.transform(Repr::Spectral);
                ScalarField::from_data(
                    &self.grid,
                    horizontal_derivative(&self.grid, &s.data, axis),
                    Repr::Spectral,
                )
                .transform(self.repr)
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        let s = self.transform(Repr::Spectral);
        spectral_energy(&self.grid, &s.data, |_| 1.0).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        let p = self.transform(Repr::Physical);
        p.data.iter().map(|c| c.re.abs()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn box_grid(n: usize, nz: usize) -> Arc<Grid> {
        Grid::new(n, n, nz, 2.0 * PI, 2.0 * PI, 1.0).unwrap()
    }

    #[test]
    fn constant_field_has_single_mode() {
        let g = box_grid(8, 16);
        let f = Field::from_fn(&g, |_, _, _| [1.5, -0.5]).to_spectral();
        for mode in 0..g.modes() {
            for iz in 0..g.nzp() {
                let (a, b) = (f.column(0, mode)[iz], f.column(1, mode)[iz]);
                if mode == 0 {
                    assert!((a - Complex64::new(1.5, 0.0)).norm() < 1e-14);
                    assert!((b - Complex64::new(-0.5, 0.0)).norm() < 1e-14);
                } else {
                    assert!(a.norm() < 1e-14 && b.norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn cosine_has_two_half_modes() {
        let g = Grid::new(8, 8, 16, 3.0, 2.0, 1.0).unwrap();
        let f = Field::from_fn(&g, |x, _, _| [(2.0 * PI * x / 3.0).cos(), 0.0]).to_spectral();
        let plus = g.index(1, 0, 0) / g.nzp();
        let minus = g.index(g.nx - 1, 0, 0) / g.nzp();
        for mode in 0..g.modes() {
            let a = f.column(0, mode)[3];
            if mode == plus || mode == minus {
                assert!((a.norm() - 0.5).abs() < 1e-14);
            } else {
                assert!(a.norm() < 1e-14);
            }
        }
    }

    #[test]
    fn x_derivative_of_cosine() {
        let g = Grid::new(16, 8, 16, 3.0, 2.0, 1.0).unwrap();
        let k = 2.0 * PI / 3.0;
        let f = Field::from_fn(&g, |x, _, _| [(k * x).cos(), 0.0]);
        let d = f.diff(Axis::X);
        assert_eq!(d.repr(), Repr::Physical);
        for ix in 0..g.nx {
            let v = d.value(ix, 2, 5)[0];
            assert!((v + k * (k * g.x(ix)).sin()).abs() <= 1e-10);
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let g = box_grid(16, 16);
        let f = Field::random(&g, 3, 1.0, 1.0).unwrap();
        let back = f.to_physical().to_spectral();
        let diff = (&back - &f).l2_norm();
        assert!(diff <= 1e-12 * f.l2_norm());
        assert!(f.hermitian_defect() < 1e-12);
    }

    #[test]
    fn sine_norms_closed_form() {
        let g = box_grid(8, 16);
        let f = Field::from_fn(&g, |x, _, _| [x.sin(), 0.0]);
        let l2 = f.l2_norm();
        assert!((l2 - PI * 2f64.sqrt()).abs() < 1e-12);
        let h1 = f.sobolev_norm(1).unwrap();
        assert!((h1 * h1 - 4.0 * PI * PI).abs() < 1e-11);
        let h2 = f.sobolev_norm(2).unwrap();
        assert!((h2 * h2 - 6.0 * PI * PI).abs() < 1e-11);
        let proxy = f.fractional_h32_norm();
        assert!((proxy - (2.0 * PI * 6f64.sqrt() * PI).sqrt()).abs() < 1e-11);
        // int sin^4 over [0,2pi) = 3 pi / 4
        let l4 = f.lp_norm(LpNorm::L4);
        assert!((l4 - (2.0 * PI * 3.0 * PI / 4.0).powf(0.25)).abs() < 1e-12);
        assert!(matches!(f.sobolev_norm(5), Err(FieldError::UnsupportedOrder(5))));
    }

    #[test]
    fn constant_field_lp_norms() {
        let g = Grid::new(8, 10, 16, 2.0, 3.0, 0.5).unwrap();
        let f = Field::from_fn(&g, |_, _, _| [0.6, -0.8]);
        let v: f64 = 3.0;
        assert!((f.lp_norm(LpNorm::L2) - v.sqrt()).abs() < 1e-13);
        assert!((f.lp_norm(LpNorm::L4) - v.powf(0.25)).abs() < 1e-13);
        assert!((f.lp_norm(LpNorm::Inf) - 1.0).abs() < 1e-15);
        let z = Field::zeros(&g, Repr::Spectral);
        for p in [LpNorm::L2, LpNorm::L4, LpNorm::Inf] {
            assert_eq!(z.lp_norm(p), 0.0);
        }
        assert_eq!(z.fractional_h32_norm(), 0.0);
    }

    #[test]
    fn parseval() {
        let g = box_grid(16, 24);
        let f = Field::random(&g, 11, 0.7, 1.5).unwrap();
        let spectral = f.l2_norm();
        let physical = f.lp_norm(LpNorm::L2);
        assert!((spectral - physical).abs() <= 1e-11 * spectral);
    }

    #[test]
    fn dealias_rules() {
        let g = box_grid(12, 16);
        let low = Field::from_fn(&g, |x, y, z| [(2.0 * x).cos() * z, (3.0 * y).sin()]);
        let d = low.dealias();
        assert!((&d - &low).l2_norm() < 1e-12);
        let nyq = Field::from_fn(&g, |x, _, _| [(6.0 * x).cos(), 0.0]);
        assert!(nyq.dealias().l2_norm() < 1e-14);
        let r = Field::from_fn(&g, |x, y, z| [(5.0 * x + y).sin() * z, (x - 4.0 * y).cos()]);
        let once = r.dealias();
        let twice = once.dealias();
        assert_eq!(once.comp(0), twice.comp(0));
        assert_eq!(once.comp(1), twice.comp(1));
    }

    #[test]
    fn random_field_properties() {
        let g = box_grid(16, 16);
        assert!(Field::random(&g, 1, 0.0, 1.0).unwrap().is_zero());
        assert!(Field::random(&g, 1, -1.0, 1.0).is_err());
        let a = Field::random(&g, 42, 0.3, 2.0).unwrap();
        let b = Field::random(&g, 42, 0.3, 2.0).unwrap();
        assert_eq!(a.comp(0), b.comp(0));
        assert_eq!(a.comp(1), b.comp(1));
        assert!((a.lp_norm(LpNorm::Inf) - 0.3).abs() < 1e-12);
        let dz = a.diff(Axis::Z);
        let nzp = g.nzp();
        for mode in 0..g.modes() {
            for c in 0..2 {
                assert_eq!(a.column(c, mode)[nzp - 1], Complex64::default());
                assert!(dz.column(c, mode)[0].norm() <= 1e-10 * 0.3);
            }
        }
    }
}
